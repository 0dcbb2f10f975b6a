#include "mam/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mam/errors.hpp"

namespace mam {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::size_t checked_state_count(int d, int k) {
  double states = 1.0;
  for (int i = 0; i < d; ++i) states *= static_cast<double>(k);
  if (states > static_cast<double>(1 << 24)) {
    throw DomainError("state space K^D exceeds 2^24 (K=" + std::to_string(k) +
                      ", D=" + std::to_string(d) + ")");
  }
  return static_cast<std::size_t>(states);
}
}  // namespace

double ExactTable::prob(std::size_t index) const {
  const double lp = log_prob[index];
  return lp == kNegInf ? 0.0 : std::exp(lp);
}

double ExactTable::prob(const std::vector<int>& x) const { return prob(state_index(x, k)); }

double ExactTable::entropy() const {
  double h = 0.0;
  for (const double lp : log_prob) {
    if (lp != kNegInf) h -= std::exp(lp) * lp;
  }
  return h;
}

ExactTable enumerate_pmf(const TargetDistribution& target) {
  const int d = target.dim();
  const int k = target.alphabet();
  const std::size_t states = checked_state_count(d, k);

  ExactTable table;
  table.d = d;
  table.k = k;
  table.log_prob.resize(states);

  std::vector<int> x(static_cast<std::size_t>(d), 0);
  for (std::size_t idx = 0; idx < states; ++idx) {
    table.log_prob[idx] = target.log_f(x);
    // next state, little-endian increment
    for (int i = 0; i < d; ++i) {
      if (++x[static_cast<std::size_t>(i)] < k) break;
      x[static_cast<std::size_t>(i)] = 0;
    }
  }
  table.log_z = logsumexp_span(table.log_prob.data(), states, 1);
  if (!std::isfinite(table.log_z)) {
    throw NumericError("enumerate_pmf: log partition function is not finite");
  }
  for (double& lp : table.log_prob) lp -= table.log_z;
  return table;
}

double exact_log_marginal(const ExactTable& table, const AugmentedVector& v) {
  if (v.dim() != table.d || v.k != table.k) {
    throw DomainError("exact_marginal: query " + std::to_string(v.dim()) + "/" +
                      std::to_string(v.k) + " does not match table " +
                      std::to_string(table.d) + "/" + std::to_string(table.k));
  }
  std::vector<int> masked;
  std::size_t base = 0;
  std::size_t scale = 1;
  for (int i = 0; i < table.d; ++i) {
    if (v.is_masked(i)) {
      masked.push_back(i);
    } else {
      base += static_cast<std::size_t>(v.entries[static_cast<std::size_t>(i)]) * scale;
    }
    scale *= static_cast<std::size_t>(table.k);
  }
  // position weights for the masked coordinates
  std::vector<std::size_t> weight(masked.size());
  for (std::size_t j = 0; j < masked.size(); ++j) {
    std::size_t w = 1;
    for (int i = 0; i < masked[j]; ++i) w *= static_cast<std::size_t>(table.k);
    weight[j] = w;
  }
  std::size_t completions = 1;
  for (std::size_t j = 0; j < masked.size(); ++j) completions *= static_cast<std::size_t>(table.k);

  std::vector<double> terms;
  terms.reserve(completions);
  std::vector<int> digits(masked.size(), 0);
  for (std::size_t c = 0; c < completions; ++c) {
    std::size_t idx = base;
    for (std::size_t j = 0; j < masked.size(); ++j) {
      idx += static_cast<std::size_t>(digits[j]) * weight[j];
    }
    terms.push_back(table.log_prob[idx]);
    for (std::size_t j = 0; j < masked.size(); ++j) {
      if (++digits[j] < table.k) break;
      digits[j] = 0;
    }
  }
  const double lse = logsumexp_span(terms.data(), terms.size(), 1);
  return std::isnan(lse) ? kNegInf : lse;  // all-(-inf) completions
}

double exact_marginal(const ExactTable& table, const AugmentedVector& v) {
  const double lm = exact_log_marginal(table, v);
  return lm == kNegInf ? 0.0 : std::exp(lm);
}

double exact_log_conditional(const ExactTable& table, const AugmentedVector& v, int pos,
                             int value) {
  if (pos < 0 || pos >= table.d || !v.is_masked(pos)) {
    throw DomainError("exact_log_conditional: position " + std::to_string(pos) +
                      " is not a masked position of the query");
  }
  AugmentedVector extended = v;
  extended.entries[static_cast<std::size_t>(pos)] = value;
  return exact_log_marginal(table, extended) - exact_log_marginal(table, v);
}

double exact_kl(const ExactTable& table,
                const std::function<double(const std::vector<int>&)>& model_log_prob,
                KlDirection direction) {
  double kl = 0.0;
  for (std::size_t idx = 0; idx < table.states(); ++idx) {
    const std::vector<int> x = state_from_index(idx, table.d, table.k);
    const double lt = table.log_prob[idx];
    const double lm = model_log_prob(x);
    if (direction == KlDirection::kModelToTarget) {
      if (lm == kNegInf) continue;  // p_model = 0 contributes nothing
      if (lt == kNegInf) return std::numeric_limits<double>::infinity();
      kl += std::exp(lm) * (lm - lt);
    } else {
      if (lt == kNegInf) continue;
      if (lm == kNegInf) return std::numeric_limits<double>::infinity();
      kl += std::exp(lt) * (lt - lm);
    }
  }
  return kl;
}

std::vector<double> chainrule_log_marginals(const CondModel& model,
                                            std::span<const AugmentedVector> queries,
                                            std::span<const Ordering> orderings) {
  if (queries.size() != orderings.size()) {
    throw DomainError("chainrule_log_marginals: " + std::to_string(queries.size()) +
                      " queries vs " + std::to_string(orderings.size()) + " orderings");
  }
  const int d = model.dim();
  const int k = model.alphabet();

  // One row per (query, visited-depth) pair; a single batched model call
  // scores every prefix.
  std::vector<AugmentedVector> rows;
  std::vector<std::pair<int, int>> picks;  // (position, value) per row
  std::vector<std::size_t> row_count(queries.size(), 0);
  for (std::size_t q = 0; q < queries.size(); ++q) {
    const AugmentedVector& v = queries[q];
    const Ordering& sigma = orderings[q];
    if (v.dim() != d || sigma.dim() != d) {
      throw DomainError("chainrule_log_marginal: dimension mismatch with model");
    }
    const int unmasked = v.unmasked_count();
    AugmentedVector prefix_v = AugmentedVector::all_mask(d, k);
    for (int step = 0; step < unmasked; ++step) {
      const int pos = sigma.at(step);
      if (v.is_masked(pos)) {
        throw DomainError("chainrule_log_marginal: ordering visits masked position " +
                          std::to_string(pos) + " before the unmasked ones");
      }
      rows.push_back(prefix_v);
      picks.emplace_back(pos, v.entries[static_cast<std::size_t>(pos)]);
      prefix_v.entries[static_cast<std::size_t>(pos)] =
          v.entries[static_cast<std::size_t>(pos)];
    }
    row_count[q] = static_cast<std::size_t>(unmasked);
  }

  std::vector<double> out(queries.size(), 0.0);
  if (rows.empty()) return out;  // all queries fully masked: empty products
  const Tensor logprobs = model.cond_logprobs(rows);
  const std::size_t width = static_cast<std::size_t>(d) * static_cast<std::size_t>(k);
  std::size_t row = 0;
  for (std::size_t q = 0; q < queries.size(); ++q) {
    double total = 0.0;
    for (std::size_t step = 0; step < row_count[q]; ++step, ++row) {
      const auto& [pos, value] = picks[row];
      total += logprobs.data[row * width + static_cast<std::size_t>(pos) * static_cast<std::size_t>(k) +
                             static_cast<std::size_t>(value)];
    }
    out[q] = total;
  }
  return out;
}

double chainrule_log_marginal(const CondModel& model, const AugmentedVector& v,
                              const Ordering& sigma) {
  return chainrule_log_marginals(model, std::span<const AugmentedVector>(&v, 1),
                                 std::span<const Ordering>(&sigma, 1))[0];
}

ExactSampler::ExactSampler(const ExactTable& table) : d_(table.d), k_(table.k) {
  cdf_.resize(table.states());
  double acc = 0.0;
  for (std::size_t i = 0; i < table.states(); ++i) {
    acc += table.prob(i);
    cdf_[i] = acc;
  }
  cdf_.back() = 1.0;  // guard against rounding
}

std::vector<int> ExactSampler::sample(Rng& rng) const {
  const double u = rng.uniform01();
  const auto it = std::lower_bound(cdf_.begin(), cdf_.end(), u);
  const std::size_t idx = static_cast<std::size_t>(it - cdf_.begin());
  return state_from_index(idx, d_, k_);
}

}  // namespace mam
