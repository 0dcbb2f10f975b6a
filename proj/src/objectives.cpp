#include "mam/objectives.hpp"

#include <cmath>

#include "mam/errors.hpp"

namespace mam {

namespace {

// Picks entry (position, value) out of a [B, D*K] log-conditional node:
// first gather the value within each position's K-group, then the position
// within the row.
Graph::NodeId pick_position_value(Graph& g, Graph::NodeId logprobs, int d, int k,
                                  std::span<const std::pair<int, int>> picks) {
  const std::size_t b = picks.size();
  // every group needs an index; only the picked position's entry is used
  std::vector<std::int32_t> value_idx(b * static_cast<std::size_t>(d), 0);
  std::vector<std::int32_t> pos_idx(b, 0);
  for (std::size_t i = 0; i < b; ++i) {
    const auto& [pos, value] = picks[i];
    value_idx[i * static_cast<std::size_t>(d) + static_cast<std::size_t>(pos)] =
        static_cast<std::int32_t>(value);
    pos_idx[i] = static_cast<std::int32_t>(pos);
  }
  const Graph::NodeId per_position =
      g.gather_groups(logprobs, static_cast<std::size_t>(k), std::move(value_idx));  // [B, D]
  const Graph::NodeId picked =
      g.gather_groups(per_position, static_cast<std::size_t>(d), std::move(pos_idx));  // [B, 1]
  return g.sum_axis(picked, 1);  // [B]
}

}  // namespace

ConsistencySample sample_consistency_constraint(const std::vector<int>& x, Rng& rng) {
  ConsistencySample s;
  s.x = x;
  const int d = static_cast<int>(x.size());
  s.sigma = sample_ordering(d, rng);
  s.d = 1 + static_cast<int>(rng.uniform_below(static_cast<std::uint64_t>(d)));
  return s;
}

void EBConfig::validate(int d) const {
  if (lambda < 0.0) throw DomainError("EBConfig: lambda must be >= 0");
  if (batch_size < 2) throw DomainError("EBConfig: batch size must be >= 2 (baseline)");
  if (gibbs_block_size < 1 || gibbs_block_size > d) {
    throw DomainError("EBConfig: block size " + std::to_string(gibbs_block_size) +
                      " outside [1, " + std::to_string(d) + "]");
  }
}

Graph::NodeId aoarm_lower_bound_loss(Graph& g, const ConditionalNet& cnet,
                                     std::span<const std::vector<int>> batch, Rng& rng) {
  if (batch.empty()) throw DomainError("aoarm_lower_bound_loss: empty batch");
  const int d = cnet.dim();
  const int k = cnet.alphabet();
  const std::size_t b = batch.size();

  std::vector<AugmentedVector> prefixes;
  prefixes.reserve(b);
  Tensor weights = Tensor::zeros({b, static_cast<std::size_t>(d)});
  std::vector<std::int32_t> value_idx(b * static_cast<std::size_t>(d), 0);
  for (std::size_t i = 0; i < b; ++i) {
    const std::vector<int>& x = batch[i];
    const Ordering sigma = sample_ordering(d, rng);
    const int step = 1 + static_cast<int>(rng.uniform_below(static_cast<std::uint64_t>(d)));
    prefixes.push_back(prefix(x, sigma, step - 1, k));
    const double w = static_cast<double>(d) / static_cast<double>(d - step + 1);
    for (int j = 0; j < d; ++j) {
      value_idx[i * static_cast<std::size_t>(d) + static_cast<std::size_t>(j)] =
          static_cast<std::int32_t>(x[static_cast<std::size_t>(j)]);
    }
    for (int t = step - 1; t < d; ++t) {
      weights.at(i, static_cast<std::size_t>(sigma.at(t))) = w;
    }
  }

  const Graph::NodeId logprobs = cnet.forward(g, prefixes);                   // [B, D*K]
  const Graph::NodeId gathered =
      g.gather_groups(logprobs, static_cast<std::size_t>(k), std::move(value_idx));  // [B, D]
  const Graph::NodeId weighted = g.mul(gathered, g.constant(std::move(weights)));
  return g.scale(g.sum_all(weighted), -1.0 / static_cast<double>(b));
}

Graph::NodeId consistency_loss(Graph& g, const MarginalNet& mnet, const ConditionalNet& cnet,
                               std::span<const ConsistencySample> samples) {
  if (samples.empty()) throw DomainError("consistency_loss: empty batch");
  const int d = mnet.dim();
  const int k = mnet.alphabet();
  const std::size_t b = samples.size();

  std::vector<AugmentedVector> prev;
  std::vector<AugmentedVector> next;
  std::vector<std::pair<int, int>> picks;
  prev.reserve(b);
  next.reserve(b);
  picks.reserve(b);
  for (const ConsistencySample& s : samples) {
    if (s.d < 1 || s.d > d) {
      throw DomainError("consistency_loss: step " + std::to_string(s.d) + " outside [1, " +
                        std::to_string(d) + "]");
    }
    prev.push_back(prefix(s.x, s.sigma, s.d - 1, k));
    next.push_back(prefix(s.x, s.sigma, s.d, k));
    const int pos = s.sigma.at(s.d - 1);
    picks.emplace_back(pos, s.x[static_cast<std::size_t>(pos)]);
  }

  const Graph::NodeId m_prev = mnet.forward(g, prev);  // [B]
  const Graph::NodeId m_next = mnet.forward(g, next);  // [B]
  const Graph::NodeId cond = pick_position_value(g, cnet.forward(g, prev), d, k, picks);
  const Graph::NodeId diff = g.sub(g.add(m_prev, cond), m_next);
  return g.mean_all(g.square(diff));
}

Graph::NodeId theta_only_consistency_loss(Graph& g, const MarginalNet& mnet,
                                          std::span<const ConsistencySample> samples) {
  if (samples.empty()) throw DomainError("theta_only_consistency_loss: empty batch");
  const int k = mnet.alphabet();
  const std::size_t b = samples.size();

  std::vector<AugmentedVector> prev;
  std::vector<AugmentedVector> extensions;  // B*K rows, K per constraint
  prev.reserve(b);
  extensions.reserve(b * static_cast<std::size_t>(k));
  for (const ConsistencySample& s : samples) {
    AugmentedVector p = prefix(s.x, s.sigma, s.d - 1, k);
    const int pos = s.sigma.at(s.d - 1);
    for (int v = 0; v < k; ++v) {
      AugmentedVector ext = p;
      ext.entries[static_cast<std::size_t>(pos)] = v;
      extensions.push_back(std::move(ext));
    }
    prev.push_back(std::move(p));
  }

  const Graph::NodeId m_prev = mnet.forward(g, prev);        // [B]
  const Graph::NodeId m_ext = mnet.forward(g, extensions);   // [B*K]
  const Graph::NodeId lse =
      g.logsumexp(g.reshape(m_ext, {b, static_cast<std::size_t>(k)}), 1);  // [B]
  return g.mean_all(g.square(g.sub(lse, m_prev)));
}

Graph::NodeId reinforce_surrogate(Graph& g, const MarginalNet& mnet,
                                  std::span<const std::vector<int>> samples,
                                  const TargetDistribution& target, ReinforceDiag* diag) {
  if (samples.size() < 2) {
    throw DomainError("reinforce_surrogate: need at least 2 samples for the baseline");
  }
  const int d = mnet.dim();
  const int k = mnet.alphabet();
  const std::size_t b = samples.size();

  std::vector<AugmentedVector> rows;
  rows.reserve(b);
  for (const std::vector<int>& x : samples) rows.push_back(AugmentedVector::full(x, k));
  const AugmentedVector all_mask = AugmentedVector::all_mask(d, k);

  const Graph::NodeId raw = mnet.forward(g, rows);                                        // [B]
  const Graph::NodeId log_z = mnet.forward(g, std::span<const AugmentedVector>(&all_mask, 1));
  const Graph::NodeId logp = g.sub(raw, log_z);  // normalized log p_theta, [B]

  // Weights are constants built from the already-computed forward values.
  const Tensor& logp_vals = g.value(logp);
  std::vector<double> w(b);
  double mean_w = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    w[i] = logp_vals.data[i] - target.log_f(samples[i]);
    if (!std::isfinite(w[i])) {
      throw NumericError("reinforce_surrogate: non-finite advantage (log f = -inf sample?)");
    }
    mean_w += w[i];
  }
  mean_w /= static_cast<double>(b);
  // Leave-one-out batch mean: b_i = mean of the other samples' weights, so
  // the estimator stays exactly unbiased. Equivalent to scaling the centered
  // weights by B/(B-1); the advantages still sum to zero, which also cancels
  // the log Z_theta gradient shared by every sample.
  const double loo = static_cast<double>(b) / static_cast<double>(b - 1);
  double adv_sq = 0.0;
  for (double& wi : w) {
    wi = (wi - mean_w) * loo;
    adv_sq += wi * wi;
  }
  if (diag != nullptr) {
    diag->divergence_sum = mean_w;
    diag->mean_advantage_sq = adv_sq / static_cast<double>(b);
  }
  return g.mean_all(g.mul(logp, g.constant(Tensor::from_vector(std::move(w)))));
}

Graph::NodeId arm_mc_surrogate(Graph& g, const ConditionalNet& cnet,
                               std::span<const std::vector<int>> samples,
                               const TargetDistribution& target, Rng& rng,
                               ReinforceDiag* diag) {
  if (samples.size() < 2) {
    throw DomainError("arm_mc_surrogate: need at least 2 samples for the baseline");
  }
  const int d = cnet.dim();
  const int k = cnet.alphabet();
  const std::size_t b = samples.size();

  std::vector<AugmentedVector> prefixes;
  std::vector<std::pair<int, int>> picks;
  prefixes.reserve(b);
  picks.reserve(b);
  for (const std::vector<int>& x : samples) {
    const Ordering sigma = sample_ordering(d, rng);
    const int step = 1 + static_cast<int>(rng.uniform_below(static_cast<std::uint64_t>(d)));
    prefixes.push_back(prefix(x, sigma, step - 1, k));
    const int pos = sigma.at(step - 1);
    picks.emplace_back(pos, x[static_cast<std::size_t>(pos)]);
  }

  const Graph::NodeId one_step = pick_position_value(g, cnet.forward(g, prefixes), d, k, picks);
  const Graph::NodeId estimate = g.scale(one_step, static_cast<double>(d));  // D * log p(.|.)

  const Tensor& est_vals = g.value(estimate);
  std::vector<double> w(b);
  double mean_w = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    w[i] = est_vals.data[i] - target.log_f(samples[i]);
    if (!std::isfinite(w[i])) {
      throw NumericError("arm_mc_surrogate: non-finite advantage");
    }
    mean_w += w[i];
  }
  mean_w /= static_cast<double>(b);
  const double loo = static_cast<double>(b) / static_cast<double>(b - 1);
  double adv_sq = 0.0;
  for (double& wi : w) {
    wi = (wi - mean_w) * loo;
    adv_sq += wi * wi;
  }
  if (diag != nullptr) {
    diag->divergence_sum = mean_w;
    diag->mean_advantage_sq = adv_sq / static_cast<double>(b);
  }
  return g.mean_all(g.mul(estimate, g.constant(Tensor::from_vector(std::move(w)))));
}

double GradResult::grad_norm() const {
  double sq = 0.0;
  for (const Tensor& g : grads) {
    for (const double v : g.data) sq += v * v;
  }
  return std::sqrt(sq);
}

GradResult reinforce_kl_grad(const MarginalNet& mnet,
                             std::span<const std::vector<int>> samples,
                             const TargetDistribution& target, const EBConfig& cfg) {
  cfg.validate(mnet.dim());
  GradResult out;
  Graph g;
  const Graph::NodeId surrogate = reinforce_surrogate(g, mnet, samples, target, &out.diag);
  out.loss = g.value(surrogate).item();
  g.backward(surrogate);
  for (const Tensor* p : mnet.mlp().params()) out.grads.push_back(g.grad_for(p));
  return out;
}

GradResult arm_mc_grad(const ConditionalNet& cnet, std::span<const std::vector<int>> samples,
                       const TargetDistribution& target, const EBConfig& cfg, Rng& rng) {
  cfg.validate(cnet.dim());
  GradResult out;
  Graph g;
  const Graph::NodeId surrogate = arm_mc_surrogate(g, cnet, samples, target, rng, &out.diag);
  out.loss = g.value(surrogate).item();
  g.backward(surrogate);
  for (const Tensor* p : cnet.mlp().params()) out.grads.push_back(g.grad_for(p));
  return out;
}

JointEbParts joint_eb_loss(Graph& g, const MarginalNet& mnet, const ConditionalNet& cnet,
                           std::span<const std::vector<int>> model_samples,
                           std::span<const ConsistencySample> consistency_samples,
                           const TargetDistribution& target, const EBConfig& cfg) {
  cfg.validate(mnet.dim());
  JointEbParts parts{};
  const Graph::NodeId surrogate =
      reinforce_surrogate(g, mnet, model_samples, target, &parts.reinforce);
  const Graph::NodeId consistency = consistency_loss(g, mnet, cnet, consistency_samples);
  parts.consistency_value = g.value(consistency).item();
  parts.total = g.add(surrogate, g.scale(consistency, cfg.lambda));
  return parts;
}

double consistency_error_value(const MargFn& marg, const CondFn& cond,
                               const ConsistencySample& s, int k) {
  const AugmentedVector prev = prefix(s.x, s.sigma, s.d - 1, k);
  const AugmentedVector next = prefix(s.x, s.sigma, s.d, k);
  const int pos = s.sigma.at(s.d - 1);
  const double err =
      marg(prev) + cond(prev, pos, s.x[static_cast<std::size_t>(pos)]) - marg(next);
  return err * err;
}

double theta_only_consistency_value(const MargFn& marg, const ConsistencySample& s, int k) {
  const AugmentedVector prev = prefix(s.x, s.sigma, s.d - 1, k);
  const int pos = s.sigma.at(s.d - 1);
  std::vector<double> ext_vals(static_cast<std::size_t>(k));
  for (int v = 0; v < k; ++v) {
    AugmentedVector ext = prev;
    ext.entries[static_cast<std::size_t>(pos)] = v;
    ext_vals[static_cast<std::size_t>(v)] = marg(ext);
  }
  const double err =
      logsumexp_span(ext_vals.data(), ext_vals.size(), 1) - marg(prev);
  return err * err;
}

double mean_consistency_error(const MarginalNet& mnet, const ConditionalNet& cnet,
                              std::span<const ConsistencySample> samples) {
  if (samples.empty()) throw DomainError("mean_consistency_error: empty batch");
  const int k = mnet.alphabet();
  std::vector<AugmentedVector> prev;
  std::vector<AugmentedVector> next;
  std::vector<std::pair<int, int>> picks;
  for (const ConsistencySample& s : samples) {
    prev.push_back(prefix(s.x, s.sigma, s.d - 1, k));
    next.push_back(prefix(s.x, s.sigma, s.d, k));
    const int pos = s.sigma.at(s.d - 1);
    picks.emplace_back(pos, s.x[static_cast<std::size_t>(pos)]);
  }
  const std::vector<double> m_prev = mnet.marg_logp(prev);
  const std::vector<double> m_next = mnet.marg_logp(next);
  const Tensor cond = cnet.cond_logprobs(prev);
  const std::size_t width =
      static_cast<std::size_t>(cnet.dim()) * static_cast<std::size_t>(k);
  double total = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& [pos, value] = picks[i];
    const double c = cond.data[i * width + static_cast<std::size_t>(pos) * static_cast<std::size_t>(k) +
                               static_cast<std::size_t>(value)];
    const double err = m_prev[i] + c - m_next[i];
    total += err * err;
  }
  return total / static_cast<double>(samples.size());
}

double mean_theta_only_consistency(const MarginalNet& mnet,
                                   std::span<const ConsistencySample> samples) {
  if (samples.empty()) throw DomainError("mean_theta_only_consistency: empty batch");
  const int k = mnet.alphabet();
  std::vector<AugmentedVector> prev;
  std::vector<AugmentedVector> extensions;
  for (const ConsistencySample& s : samples) {
    AugmentedVector p = prefix(s.x, s.sigma, s.d - 1, k);
    const int pos = s.sigma.at(s.d - 1);
    for (int v = 0; v < k; ++v) {
      AugmentedVector ext = p;
      ext.entries[static_cast<std::size_t>(pos)] = v;
      extensions.push_back(std::move(ext));
    }
    prev.push_back(std::move(p));
  }
  const std::vector<double> m_prev = mnet.marg_logp(prev);
  const std::vector<double> m_ext = mnet.marg_logp(extensions);
  double total = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double lse =
        logsumexp_span(m_ext.data() + i * static_cast<std::size_t>(k),
                       static_cast<std::size_t>(k), 1);
    const double err = lse - m_prev[i];
    total += err * err;
  }
  return total / static_cast<double>(samples.size());
}

}  // namespace mam
