#pragma once

#include <functional>
#include <span>
#include <vector>

#include "mam/encoding.hpp"
#include "mam/nets.hpp"
#include "mam/rng.hpp"
#include "mam/targets.hpp"

namespace mam {

// Fully enumerated normalized PMF over K^D states (little-endian indexing as
// in state_index). All sums happen in log-space.
struct ExactTable {
  int d = 0;
  int k = 0;
  std::vector<double> log_prob;  // normalized; -inf allowed for zero mass
  double log_z = 0.0;

  std::size_t states() const { return log_prob.size(); }
  double prob(std::size_t index) const;
  double prob(const std::vector<int>& x) const;
  // Shannon entropy in nats, with p log p = 0 at p = 0.
  double entropy() const;
};

// p*(x) = f(x)/Z with Z accumulated via log-sum-exp. Throws DomainError when
// K^D exceeds 2^24.
ExactTable enumerate_pmf(const TargetDistribution& target);

// Sum of p* over all completions of the masked entries.
double exact_marginal(const ExactTable& table, const AugmentedVector& v);
double exact_log_marginal(const ExactTable& table, const AugmentedVector& v);

// Exact conditional log p*(x_pos = value | unmasked entries of v).
double exact_log_conditional(const ExactTable& table, const AugmentedVector& v, int pos,
                             int value);

enum class KlDirection { kModelToTarget, kTargetToModel };

// KL between the table and a model that returns normalized log-probabilities
// for full states. kModelToTarget (the default) is
//   sum_x p_model(x) (log p_model(x) - log p*(x)),
// matching the order in which the energy-based objective is written. Returns
// +infinity when the absolutely-continuous condition fails.
double exact_kl(const ExactTable& table,
                const std::function<double(const std::vector<int>&)>& model_log_prob,
                KlDirection direction = KlDirection::kModelToTarget);

// The D-pass chain-rule marginal baseline: sum over the unmasked positions of
// v, visited in sigma order, of log p(v_pos | previously visited positions).
// All prefixes are scored in one batched model call. Sigma must visit the
// unmasked positions of v first.
double chainrule_log_marginal(const CondModel& model, const AugmentedVector& v,
                              const Ordering& sigma);
std::vector<double> chainrule_log_marginals(const CondModel& model,
                                            std::span<const AugmentedVector> queries,
                                            std::span<const Ordering> orderings);

// Categorical sampler over an ExactTable's states.
class ExactSampler {
 public:
  explicit ExactSampler(const ExactTable& table);
  std::vector<int> sample(Rng& rng) const;

 private:
  int d_;
  int k_;
  std::vector<double> cdf_;
};

}  // namespace mam
