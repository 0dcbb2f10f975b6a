#include "mam/nets.hpp"

#include <Eigen/Dense>

#include <cmath>

#include "mam/errors.hpp"

namespace mam {

namespace {
using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using MapCM = Eigen::Map<const MatRM>;

MapCM as_map(const Tensor& t) {
  return MapCM(t.data.data(), static_cast<Eigen::Index>(t.rows()),
               static_cast<Eigen::Index>(t.cols()));
}
}  // namespace

void MlpConfig::validate() const {
  if (input_width < 1 || hidden_width < 1 || output_width < 1) {
    throw DomainError("MlpConfig: all widths must be >= 1");
  }
}

Mlp::Mlp(MlpConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  w_in_ = Tensor::zeros({cfg_.input_width, cfg_.hidden_width});
  b_in_ = Tensor::zeros({cfg_.hidden_width});
  w_res_.assign(cfg_.residual_layers, Tensor::zeros({cfg_.hidden_width, cfg_.hidden_width}));
  b_res_.assign(cfg_.residual_layers, Tensor::zeros({cfg_.hidden_width}));
  w_out_ = Tensor::zeros({cfg_.hidden_width, cfg_.output_width});
  b_out_ = Tensor::zeros({cfg_.output_width});
}

void Mlp::init(Rng& rng) {
  const double in_std = std::sqrt(2.0 / static_cast<double>(cfg_.input_width));
  w_in_ = Tensor::randn({cfg_.input_width, cfg_.hidden_width}, rng, in_std);
  const double h_std = std::sqrt(2.0 / static_cast<double>(cfg_.hidden_width));
  for (auto& w : w_res_) w = Tensor::randn({cfg_.hidden_width, cfg_.hidden_width}, rng, h_std);
  // b_in_, b_res_, w_out_, b_out_ stay zero.
}

Graph::NodeId Mlp::forward(Graph& g, Graph::NodeId x) const {
  const Tensor& xv = g.value(x);
  if (xv.rank() != 2 || xv.cols() != cfg_.input_width) {
    throw ShapeError("Mlp::forward: input " + shape_str(xv) + " does not match width " +
                     std::to_string(cfg_.input_width));
  }
  Graph::NodeId h = g.relu(g.add(g.matmul(x, g.param(w_in_)), g.param(b_in_)));
  for (std::size_t l = 0; l < cfg_.residual_layers; ++l) {
    h = g.add(h, g.relu(g.add(g.matmul(h, g.param(w_res_[l])), g.param(b_res_[l]))));
  }
  return g.add(g.matmul(h, g.param(w_out_)), g.param(b_out_));
}

Tensor Mlp::forward_values(const Tensor& x) const {
  if (x.rank() != 2 || x.cols() != cfg_.input_width) {
    throw ShapeError("Mlp::forward_values: input " + shape_str(x) +
                     " does not match width " + std::to_string(cfg_.input_width));
  }
  const std::size_t b = x.rows();
  const std::size_t hw = cfg_.hidden_width;

  // Mirrors forward() op-for-op so both paths produce identical bits.
  Tensor h = Tensor::zeros({b, hw});
  MapM(h.data.data(), static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(hw)) =
      as_map(x) * as_map(w_in_);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < hw; ++j) h.data[i * hw + j] += b_in_.data[j];
  }
  for (double& v : h.data) v = v > 0.0 ? v : 0.0;

  Tensor r = Tensor::zeros({b, hw});
  for (std::size_t l = 0; l < cfg_.residual_layers; ++l) {
    MapM(r.data.data(), static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(hw)) =
        as_map(h) * as_map(w_res_[l]);
    for (std::size_t i = 0; i < b; ++i) {
      for (std::size_t j = 0; j < hw; ++j) r.data[i * hw + j] += b_res_[l].data[j];
    }
    for (double& v : r.data) v = v > 0.0 ? v : 0.0;
    for (std::size_t i = 0; i < h.data.size(); ++i) h.data[i] += r.data[i];
  }

  Tensor out = Tensor::zeros({b, cfg_.output_width});
  MapM(out.data.data(), static_cast<Eigen::Index>(b),
       static_cast<Eigen::Index>(cfg_.output_width)) = as_map(h) * as_map(w_out_);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < cfg_.output_width; ++j) {
      out.data[i * cfg_.output_width + j] += b_out_.data[j];
    }
  }
  if (!out.all_finite()) throw NumericError("Mlp::forward_values: non-finite output");
  return out;
}

std::vector<Tensor*> Mlp::params() {
  std::vector<Tensor*> p = {&w_in_, &b_in_};
  for (std::size_t l = 0; l < w_res_.size(); ++l) {
    p.push_back(&w_res_[l]);
    p.push_back(&b_res_[l]);
  }
  p.push_back(&w_out_);
  p.push_back(&b_out_);
  return p;
}

std::vector<const Tensor*> Mlp::params() const {
  std::vector<const Tensor*> p = {&w_in_, &b_in_};
  for (std::size_t l = 0; l < w_res_.size(); ++l) {
    p.push_back(&w_res_[l]);
    p.push_back(&b_res_[l]);
  }
  p.push_back(&w_out_);
  p.push_back(&b_out_);
  return p;
}

std::vector<std::string> Mlp::param_names() const {
  std::vector<std::string> names = {"w_in", "b_in"};
  for (std::size_t l = 0; l < w_res_.size(); ++l) {
    names.push_back("w_res" + std::to_string(l));
    names.push_back("b_res" + std::to_string(l));
  }
  names.push_back("w_out");
  names.push_back("b_out");
  return names;
}

ConditionalNet::ConditionalNet(int d, int k, std::size_t hidden_width,
                               std::size_t residual_layers)
    : d_(d),
      k_(k),
      mlp_(MlpConfig{encoded_width(d, k), hidden_width, residual_layers,
                     static_cast<std::size_t>(d) * static_cast<std::size_t>(k)}) {}

Graph::NodeId ConditionalNet::forward(Graph& g, Graph::NodeId encoded) const {
  return g.log_softmax_groups(mlp_.forward(g, encoded), static_cast<std::size_t>(k_));
}

Graph::NodeId ConditionalNet::forward(Graph& g, std::span<const AugmentedVector> batch) const {
  return forward(g, g.constant(encode_batch(batch)));
}

Tensor ConditionalNet::cond_logprobs(std::span<const AugmentedVector> batch) const {
  Tensor out = mlp_.forward_values(encode_batch(batch));
  log_softmax_groups_inplace(out, static_cast<std::size_t>(k_));
  return out;
}

Tensor ConditionalNet::cond_logprobs_one(const AugmentedVector& v) const {
  Tensor out = cond_logprobs(std::span<const AugmentedVector>(&v, 1));
  out.shape = {static_cast<std::size_t>(d_) * static_cast<std::size_t>(k_)};
  return out;
}

MarginalNet::MarginalNet(int d, int k, std::size_t hidden_width, std::size_t residual_layers)
    : d_(d), k_(k), mlp_(MlpConfig{encoded_width(d, k), hidden_width, residual_layers, 1}) {}

Graph::NodeId MarginalNet::forward(Graph& g, Graph::NodeId encoded) const {
  // [B, 1] -> [B]
  return g.sum_axis(mlp_.forward(g, encoded), 1);
}

Graph::NodeId MarginalNet::forward(Graph& g, std::span<const AugmentedVector> batch) const {
  return forward(g, g.constant(encode_batch(batch)));
}

std::vector<double> MarginalNet::marg_logp(std::span<const AugmentedVector> batch) const {
  Tensor out = mlp_.forward_values(encode_batch(batch));
  return out.data;
}

}  // namespace mam
