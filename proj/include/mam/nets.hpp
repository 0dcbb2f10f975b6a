#pragma once

#include <span>
#include <string>
#include <vector>

#include "mam/encoding.hpp"
#include "mam/graph.hpp"
#include "mam/rng.hpp"
#include "mam/tensor.hpp"

namespace mam {

struct MlpConfig {
  std::size_t input_width = 0;
  std::size_t hidden_width = 512;
  std::size_t residual_layers = 3;
  std::size_t output_width = 0;

  void validate() const;
};

// Residual MLP backbone:
//   h = relu(x W_in + b_in)
//   h = h + relu(h W_i + b_i)    (residual_layers times)
//   y = h W_out + b_out
// Hidden matrices get He-normal init; the output layer starts at zero so a
// fresh conditional head is exactly uniform and a fresh marginal head is 0.
//
// forward() builds tape nodes; forward_values() is the tape-free inference
// path and produces bit-identical outputs (shared kernels, same op order).
class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(MlpConfig cfg);

  void init(Rng& rng);

  Graph::NodeId forward(Graph& g, Graph::NodeId x) const;
  Tensor forward_values(const Tensor& x) const;

  std::vector<Tensor*> params();
  std::vector<const Tensor*> params() const;
  std::vector<std::string> param_names() const;
  const MlpConfig& config() const { return cfg_; }

 private:
  MlpConfig cfg_;
  Tensor w_in_, b_in_;
  std::vector<Tensor> w_res_, b_res_;
  Tensor w_out_, b_out_;
};

// Read-only view of a model of any-order one-step conditionals. Row d of the
// [D, K] output block is log p(x_d = . | unmasked entries of v). Implemented
// by ConditionalNet and by test oracles backed by exact tables.
class CondModel {
 public:
  virtual ~CondModel() = default;
  virtual int dim() const = 0;
  virtual int alphabet() const = 0;
  // [B] augmented inputs -> [B, D*K] log-conditionals, each K-group normalized.
  virtual Tensor cond_logprobs(std::span<const AugmentedVector> batch) const = 0;
};

// Read-only view of a model of unnormalized log-marginals.
class MargModel {
 public:
  virtual ~MargModel() = default;
  virtual int dim() const = 0;
  virtual int alphabet() const = 0;
  // [B] augmented inputs -> [B] values of log p~(v).
  virtual std::vector<double> marg_logp(std::span<const AugmentedVector> batch) const = 0;

  double marg_logp_one(const AugmentedVector& v) const {
    return marg_logp(std::span<const AugmentedVector>(&v, 1))[0];
  }
  // log Z = log p~ at the all-mask input.
  double log_z() const { return marg_logp_one(AugmentedVector::all_mask(dim(), alphabet())); }
};

// p_phi: any-order conditionals over the augmented space.
class ConditionalNet : public CondModel {
 public:
  ConditionalNet() = default;
  ConditionalNet(int d, int k, std::size_t hidden_width, std::size_t residual_layers);

  void init(Rng& rng) { mlp_.init(rng); }

  // Tape path: [B, width] encoded input node -> [B, D*K] log-conditionals.
  Graph::NodeId forward(Graph& g, Graph::NodeId encoded) const;
  Graph::NodeId forward(Graph& g, std::span<const AugmentedVector> batch) const;

  Tensor cond_logprobs(std::span<const AugmentedVector> batch) const override;
  // Single input, reshaped view: entry [d*K + v] is log p(x_d = v | input).
  Tensor cond_logprobs_one(const AugmentedVector& v) const;

  int dim() const override { return d_; }
  int alphabet() const override { return k_; }
  Mlp& mlp() { return mlp_; }
  const Mlp& mlp() const { return mlp_; }

 private:
  int d_ = 0;
  int k_ = 0;
  Mlp mlp_;
};

// p_theta: scalar unnormalized log-marginal over the augmented space.
class MarginalNet : public MargModel {
 public:
  MarginalNet() = default;
  MarginalNet(int d, int k, std::size_t hidden_width, std::size_t residual_layers);

  void init(Rng& rng) { mlp_.init(rng); }

  // Tape path: [B, width] encoded input node -> [B] log p~ values.
  Graph::NodeId forward(Graph& g, Graph::NodeId encoded) const;
  Graph::NodeId forward(Graph& g, std::span<const AugmentedVector> batch) const;

  std::vector<double> marg_logp(std::span<const AugmentedVector> batch) const override;

  int dim() const override { return d_; }
  int alphabet() const override { return k_; }
  Mlp& mlp() { return mlp_; }
  const Mlp& mlp() const { return mlp_; }

 private:
  int d_ = 0;
  int k_ = 0;
  Mlp mlp_;
};

}  // namespace mam
