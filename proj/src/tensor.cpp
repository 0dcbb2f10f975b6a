#include "mam/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace mam {

namespace {
std::size_t product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (const std::size_t s : shape) n *= s;
  return n;
}
}  // namespace

Tensor Tensor::scalar(double v) {
  Tensor t;
  t.data = {v};
  return t;
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
  Tensor t;
  t.shape = std::move(shape);
  t.data.assign(product(t.shape), 0.0);
  return t;
}

Tensor Tensor::full(std::vector<std::size_t> shape, double v) {
  Tensor t = zeros(std::move(shape));
  for (double& x : t.data) x = v;
  return t;
}

Tensor Tensor::from_vector(std::vector<double> values) {
  Tensor t;
  t.shape = {values.size()};
  t.data = std::move(values);
  return t;
}

Tensor Tensor::from_matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  if (values.size() != rows * cols) {
    throw ShapeError("from_matrix: " + std::to_string(values.size()) + " values for [" +
                     std::to_string(rows) + ", " + std::to_string(cols) + "]");
  }
  Tensor t;
  t.shape = {rows, cols};
  t.data = std::move(values);
  return t;
}

Tensor Tensor::randn(std::vector<std::size_t> shape, Rng& rng, double stddev) {
  Tensor t = zeros(std::move(shape));
  for (double& x : t.data) x = stddev * rng.normal();
  return t;
}

std::size_t Tensor::numel() const { return data.size(); }

std::size_t Tensor::rows() const {
  if (rank() != 2) throw ShapeError("rows(): tensor " + shape_str(*this) + " is not rank 2");
  return shape[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw ShapeError("cols(): tensor " + shape_str(*this) + " is not rank 2");
  return shape[1];
}

double& Tensor::at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
double Tensor::at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

bool Tensor::all_finite() const {
  for (const double x : data) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item(): tensor " + shape_str(*this) + " is not scalar");
  return data[0];
}

std::string shape_str(const std::vector<std::size_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

std::string shape_str(const Tensor& t) { return shape_str(t.shape); }

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
  }
}

double logsumexp_span(const double* x, std::size_t count, std::size_t stride) {
  double m = x[0];
  for (std::size_t j = 1; j < count; ++j) m = std::max(m, x[j * stride]);
  double s = 0.0;
  for (std::size_t j = 0; j < count; ++j) s += std::exp(x[j * stride] - m);
  return m + std::log(s);
}

void log_softmax_groups_inplace(Tensor& t, std::size_t k) {
  const std::size_t width = t.rank() == 2 ? t.cols() : t.numel();
  if (k == 0 || width % k != 0) {
    throw ShapeError("log_softmax_groups: width " + std::to_string(width) +
                     " not divisible by group size " + std::to_string(k));
  }
  const std::size_t groups = t.numel() / k;
  for (std::size_t g = 0; g < groups; ++g) {
    double* x = t.data.data() + g * k;
    const double lse = logsumexp_span(x, k, 1);
    for (std::size_t j = 0; j < k; ++j) x[j] -= lse;
  }
}

}  // namespace mam
