#pragma once

#include <functional>
#include <span>
#include <vector>

#include "mam/encoding.hpp"
#include "mam/graph.hpp"
#include "mam/nets.hpp"
#include "mam/rng.hpp"
#include "mam/targets.hpp"

namespace mam {

// One sampled self-consistency constraint: full assignment x, ordering sigma,
// and step d in [1..D]. The constraint ties the prefix of length d-1 to the
// prefix of length d.
struct ConsistencySample {
  std::vector<int> x;
  Ordering sigma;
  int d = 1;
};

ConsistencySample sample_consistency_constraint(const std::vector<int>& x, Rng& rng);

enum class BaselineKind { kBatchMean };

struct EBConfig {
  double lambda = 4.0;
  std::size_t batch_size = 512;
  int gibbs_block_size = 1;  // M
  std::size_t chain_count = 512;
  BaselineKind baseline = BaselineKind::kBatchMean;

  void validate(int d) const;
};

// ---------------------------------------------------------------------------
// Tape-building losses. Each returns the scalar loss node on g; callers read
// the value with g.value(node).item() and differentiate via g.backward.

// Any-order lower-bound loss (stage 1): for each x draw sigma and d, mask the
// positions sigma(>= d) and score them all in one conditional pass:
//   loss = -mean_i  D/(D-d+1) * sum_{j in sigma(>=d)} log p(x_j | prefix).
Graph::NodeId aoarm_lower_bound_loss(Graph& g, const ConditionalNet& cnet,
                                     std::span<const std::vector<int>> batch, Rng& rng);

// Mean squared consistency error over the sampled constraints:
//   [log m(prefix_{d-1}) + log c(x_{sigma(d)} | prefix_{d-1}) - log m(prefix_d)]^2.
// Gradients flow into both networks; training mode decides which parameters
// the optimizer actually updates (theta only in stage 2, both in joint EB).
Graph::NodeId consistency_loss(Graph& g, const MarginalNet& mnet, const ConditionalNet& cnet,
                               std::span<const ConsistencySample> samples);

// Marginal-only variant: enforces the sum rule directly on the marginal net,
//   [logsumexp_k m([prefix, k]) - m(prefix)]^2,
// at the cost of K forward rows per constraint.
Graph::NodeId theta_only_consistency_loss(Graph& g, const MarginalNet& mnet,
                                          std::span<const ConsistencySample> samples);

// Score-function (REINFORCE) surrogate for grad KL(p_theta || f/Z):
//   surrogate = mean_i  const(w_i - b_i) * log p_theta(x_i),
// where log p_theta = m(x) - m(all-mask), w_i = log p_theta(x_i) - log f(x_i)
// and b_i is the batch mean of the other samples' weights (leave-one-out, so
// the estimator is exactly unbiased). Differentiating the surrogate yields
// the estimator; the weights are constants.
struct ReinforceDiag {
  double mean_advantage_sq = 0.0;
  // mean of (log p_theta - log f) over the batch; the sampled divergence
  // statistic reported in the energy-based experiments (equals KL - log Z in
  // expectation under exact samples from p_theta).
  double divergence_sum = 0.0;
};
Graph::NodeId reinforce_surrogate(Graph& g, const MarginalNet& mnet,
                                  std::span<const std::vector<int>> samples,
                                  const TargetDistribution& target,
                                  ReinforceDiag* diag = nullptr);

// Deliberately pathological ARM-MC baseline (variance experiment only): one
// random (sigma, d) per sample, D * log p(x_{sigma(d)} | prefix) replaces
// log p_theta in both the score and the weight.
Graph::NodeId arm_mc_surrogate(Graph& g, const ConditionalNet& cnet,
                               std::span<const std::vector<int>> samples,
                               const TargetDistribution& target, Rng& rng,
                               ReinforceDiag* diag = nullptr);

// ---------------------------------------------------------------------------
// Direct-gradient wrappers used by tests and the variance probe.

struct GradResult {
  std::vector<Tensor> grads;  // aligned with the net's params() order
  double loss = 0.0;
  ReinforceDiag diag;

  double grad_norm() const;
};

GradResult reinforce_kl_grad(const MarginalNet& mnet,
                             std::span<const std::vector<int>> samples,
                             const TargetDistribution& target, const EBConfig& cfg);

GradResult arm_mc_grad(const ConditionalNet& cnet, std::span<const std::vector<int>> samples,
                       const TargetDistribution& target, const EBConfig& cfg, Rng& rng);

// Joint energy-based loss: reinforce surrogate + lambda * mean
// consistency error, one graph so one backward covers both nets.
struct JointEbParts {
  Graph::NodeId total;
  double consistency_value = 0.0;
  ReinforceDiag reinforce;
};
JointEbParts joint_eb_loss(Graph& g, const MarginalNet& mnet, const ConditionalNet& cnet,
                           std::span<const std::vector<int>> model_samples,
                           std::span<const ConsistencySample> consistency_samples,
                           const TargetDistribution& target, const EBConfig& cfg);

// ---------------------------------------------------------------------------
// Value-only evaluators (no tape), generic over model callables so exact
// tables can stand in for networks in oracle tests and eval sweeps.

using MargFn = std::function<double(const AugmentedVector&)>;
using CondFn = std::function<double(const AugmentedVector& prefix, int pos, int value)>;

double consistency_error_value(const MargFn& marg, const CondFn& cond,
                               const ConsistencySample& s, int k);
double theta_only_consistency_value(const MargFn& marg, const ConsistencySample& s, int k);

// Batched evaluators against real networks.
double mean_consistency_error(const MarginalNet& mnet, const ConditionalNet& cnet,
                              std::span<const ConsistencySample> samples);
double mean_theta_only_consistency(const MarginalNet& mnet,
                                   std::span<const ConsistencySample> samples);

}  // namespace mam
