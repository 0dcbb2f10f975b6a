#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "mam/errors.hpp"
#include "mam/rng.hpp"

namespace mam {

// Dense row-major 64-bit float tensor of rank 0, 1 or 2. Rank 0 holds a
// single scalar. Values are required to stay finite; ops in Graph enforce it.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;

  static Tensor scalar(double v);
  static Tensor zeros(std::vector<std::size_t> shape);
  static Tensor full(std::vector<std::size_t> shape, double v);
  static Tensor from_vector(std::vector<double> values);
  static Tensor from_matrix(std::size_t rows, std::size_t cols, std::vector<double> values);
  // i.i.d. N(0, stddev^2) entries.
  static Tensor randn(std::vector<std::size_t> shape, Rng& rng, double stddev = 1.0);

  std::size_t numel() const;
  std::size_t rank() const { return shape.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  double& at(std::size_t i) { return data[i]; }
  double at(std::size_t i) const { return data[i]; }
  double& at(std::size_t r, std::size_t c);
  double at(std::size_t r, std::size_t c) const;

  bool same_shape(const Tensor& other) const { return shape == other.shape; }
  bool all_finite() const;
  double item() const;  // requires numel() == 1
};

std::string shape_str(const Tensor& t);
std::string shape_str(const std::vector<std::size_t>& shape);

// Throws ShapeError naming both shapes unless they match.
void check_same_shape(const Tensor& a, const Tensor& b, const char* op);

// Overflow-safe log(sum(exp(x))) over `count` strided entries: inputs are
// shifted by their max before exponentiation.
double logsumexp_span(const double* x, std::size_t count, std::size_t stride = 1);

// In-place log-softmax within each contiguous group of k entries. Shared by
// the autodiff op and the no-tape forward path so both produce identical bits.
void log_softmax_groups_inplace(Tensor& t, std::size_t k);

}  // namespace mam
