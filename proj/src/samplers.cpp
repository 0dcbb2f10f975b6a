#include "mam/samplers.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "mam/errors.hpp"

namespace mam {

namespace {

// Draw from a categorical given log-weights (not necessarily normalized).
int draw_from_logits(const double* logits, int k, Rng& rng) {
  const double lse = logsumexp_span(logits, static_cast<std::size_t>(k), 1);
  double u = rng.uniform01();
  double acc = 0.0;
  for (int v = 0; v < k; ++v) {
    acc += std::exp(logits[v] - lse);
    if (u < acc) return v;
  }
  return k - 1;  // rounding guard
}

}  // namespace

std::vector<AncestralResult> ancestral_sample_batch(const CondModel& model,
                                                    std::span<const Ordering> orderings,
                                                    Rng& rng) {
  const int d = model.dim();
  const int k = model.alphabet();
  const std::size_t n = orderings.size();
  for (const Ordering& sigma : orderings) {
    if (sigma.dim() != d) throw DomainError("ancestral_sample: ordering dimension mismatch");
  }

  std::vector<AncestralResult> out(n);
  std::vector<AugmentedVector> current(n, AugmentedVector::all_mask(d, k));
  const std::size_t width = static_cast<std::size_t>(d) * static_cast<std::size_t>(k);
  for (int step = 0; step < d; ++step) {
    const Tensor logprobs = model.cond_logprobs(current);
    for (std::size_t i = 0; i < n; ++i) {
      const int pos = orderings[i].at(step);
      const double* row = logprobs.data.data() + i * width +
                          static_cast<std::size_t>(pos) * static_cast<std::size_t>(k);
      const int value = draw_from_logits(row, k, rng);
      out[i].log_prob += row[value];
      current[i].entries[static_cast<std::size_t>(pos)] = value;
    }
  }
  for (std::size_t i = 0; i < n; ++i) out[i].x = current[i].entries;
  return out;
}

AncestralResult ancestral_sample(const CondModel& model, const Ordering& sigma, Rng& rng) {
  return ancestral_sample_batch(model, std::span<const Ordering>(&sigma, 1), rng)[0];
}

double resample_positions(const CondModel& model, std::vector<int>& state,
                          std::span<const int> order, int k, Rng& rng) {
  AugmentedVector v = AugmentedVector::full(state, k);
  for (const int pos : order) v.entries[static_cast<std::size_t>(pos)] = kMask;
  double log_prob = 0.0;
  for (const int pos : order) {
    const Tensor logprobs = model.cond_logprobs(std::span<const AugmentedVector>(&v, 1));
    const double* row =
        logprobs.data.data() + static_cast<std::size_t>(pos) * static_cast<std::size_t>(k);
    const int value = draw_from_logits(row, k, rng);
    log_prob += row[value];
    v.entries[static_cast<std::size_t>(pos)] = value;
  }
  state = v.entries;
  return log_prob;
}

std::vector<std::vector<int>> blocks_from_ordering(const Ordering& sigma, int block_size) {
  if (block_size < 1) throw DomainError("blocks_from_ordering: block size must be >= 1");
  std::vector<std::vector<int>> blocks;
  for (int start = 0; start < sigma.dim(); start += block_size) {
    std::vector<int> block;
    for (int i = start; i < std::min(start + block_size, sigma.dim()); ++i) {
      block.push_back(sigma.at(i));
    }
    blocks.push_back(std::move(block));
  }
  return blocks;
}

namespace {

void check_block_enumerable(std::size_t block_len, int k) {
  double combos = 1.0;
  for (std::size_t i = 0; i < block_len; ++i) combos *= static_cast<double>(k);
  if (combos > 65536.0) {
    throw DomainError("marginal_block_sample: K^m = " + std::to_string(combos) +
                      " completions exceed 2^16 for block of " + std::to_string(block_len));
  }
}

}  // namespace

std::vector<int> marginal_block_sample(const MargModel& model,
                                       const std::vector<std::vector<int>>& blocks, Rng& rng) {
  const int d = model.dim();
  const int k = model.alphabet();
  std::vector<bool> seen(static_cast<std::size_t>(d), false);
  std::size_t covered = 0;
  for (const auto& block : blocks) {
    for (const int pos : block) {
      if (pos < 0 || pos >= d || seen[static_cast<std::size_t>(pos)]) {
        throw DomainError("marginal_block_sample: blocks are not a partition of positions");
      }
      seen[static_cast<std::size_t>(pos)] = true;
      ++covered;
    }
  }
  if (covered != static_cast<std::size_t>(d)) {
    throw DomainError("marginal_block_sample: blocks cover " + std::to_string(covered) +
                      " of " + std::to_string(d) + " positions");
  }

  AugmentedVector v = AugmentedVector::all_mask(d, k);
  for (const auto& block : blocks) {
    check_block_enumerable(block.size(), k);
    std::size_t combos = 1;
    for (std::size_t i = 0; i < block.size(); ++i) combos *= static_cast<std::size_t>(k);
    std::vector<AugmentedVector> candidates;
    candidates.reserve(combos);
    for (std::size_t c = 0; c < combos; ++c) {
      AugmentedVector ext = v;
      std::size_t rest = c;
      for (const int pos : block) {
        ext.entries[static_cast<std::size_t>(pos)] = static_cast<int>(rest % static_cast<std::size_t>(k));
        rest /= static_cast<std::size_t>(k);
      }
      candidates.push_back(std::move(ext));
    }
    const std::vector<double> logp = model.marg_logp(candidates);
    const int choice = draw_from_logits(logp.data(), static_cast<int>(combos), rng);
    v = candidates[static_cast<std::size_t>(choice)];
  }
  return v.entries;
}

std::vector<std::vector<int>> marginal_block_sample_batch(const MargModel& model,
                                                          int block_size, std::size_t count,
                                                          Rng& rng) {
  const int d = model.dim();
  const int k = model.alphabet();
  check_block_enumerable(static_cast<std::size_t>(std::min(block_size, d)), k);

  std::vector<std::vector<std::vector<int>>> per_sample_blocks;
  per_sample_blocks.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    per_sample_blocks.push_back(blocks_from_ordering(sample_ordering(d, rng), block_size));
  }
  const std::size_t n_steps = per_sample_blocks.empty() ? 0 : per_sample_blocks[0].size();

  std::vector<AugmentedVector> current(count, AugmentedVector::all_mask(d, k));
  for (std::size_t step = 0; step < n_steps; ++step) {
    std::vector<AugmentedVector> rows;
    std::vector<std::size_t> offsets(count + 1, 0);
    for (std::size_t i = 0; i < count; ++i) {
      const auto& block = per_sample_blocks[i][step];
      std::size_t combos = 1;
      for (std::size_t b = 0; b < block.size(); ++b) combos *= static_cast<std::size_t>(k);
      for (std::size_t c = 0; c < combos; ++c) {
        AugmentedVector ext = current[i];
        std::size_t rest = c;
        for (const int pos : block) {
          ext.entries[static_cast<std::size_t>(pos)] =
              static_cast<int>(rest % static_cast<std::size_t>(k));
          rest /= static_cast<std::size_t>(k);
        }
        rows.push_back(std::move(ext));
      }
      offsets[i + 1] = rows.size();
    }
    const std::vector<double> logp = model.marg_logp(rows);
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t begin = offsets[i];
      const int combos = static_cast<int>(offsets[i + 1] - begin);
      const int choice = draw_from_logits(logp.data() + begin, combos, rng);
      current[i] = rows[begin + static_cast<std::size_t>(choice)];
    }
  }

  std::vector<std::vector<int>> out;
  out.reserve(count);
  for (const AugmentedVector& v : current) out.push_back(v.entries);
  return out;
}

GibbsBuffer GibbsBuffer::init(std::size_t chain_count, int d, int k, int block_size,
                              std::uint64_t seed, std::size_t restart_period) {
  if (chain_count == 0) throw DomainError("GibbsBuffer: need at least one chain");
  if (block_size < 1 || block_size > d) {
    throw DomainError("GibbsBuffer: block size " + std::to_string(block_size) +
                      " outside [1, " + std::to_string(d) + "]");
  }
  GibbsBuffer buffer;
  buffer.k = k;
  buffer.block_size = block_size;
  buffer.restart_period = restart_period;
  buffer.chains.resize(chain_count);
  buffer.chain_rngs.reserve(chain_count);
  Rng init_rng = Rng::derive(seed, 0x6269626273ULL);
  for (std::size_t c = 0; c < chain_count; ++c) {
    std::vector<int> x(static_cast<std::size_t>(d));
    for (int i = 0; i < d; ++i) {
      x[static_cast<std::size_t>(i)] = static_cast<int>(init_rng.uniform_below(
          static_cast<std::uint64_t>(k)));
    }
    buffer.chains[c] = std::move(x);
    buffer.chain_rngs.push_back(Rng::derive(seed, 1000 + c));
  }
  return buffer;
}

namespace {

// Shared driver: per chain, pick the block of positions to resample, then
// redraw them position-by-position with one batched model call per depth.
template <typename RowLogits>
void gibbs_step_impl(GibbsBuffer& buffer, int d, int k, const RowLogits& row_logits) {
  buffer.step_count += 1;
  const bool full_resample =
      buffer.restart_period > 0 && buffer.step_count % buffer.restart_period == 0;
  const int m = full_resample ? d : buffer.block_size;
  const std::size_t n = buffer.chains.size();

  std::vector<std::vector<int>> orders(n);
  std::vector<AugmentedVector> current;
  current.reserve(n);
  for (std::size_t c = 0; c < n; ++c) {
    const Ordering sigma = sample_ordering(d, buffer.chain_rngs[c]);
    orders[c].assign(sigma.perm.begin(), sigma.perm.begin() + m);
    AugmentedVector v = AugmentedVector::full(buffer.chains[c], k);
    for (const int pos : orders[c]) v.entries[static_cast<std::size_t>(pos)] = kMask;
    current.push_back(std::move(v));
  }

  for (int step = 0; step < m; ++step) {
    row_logits(current, orders, step);
  }
  for (std::size_t c = 0; c < n; ++c) buffer.chains[c] = current[c].entries;
}

}  // namespace

void gibbs_step(GibbsBuffer& buffer, const CondModel& model) {
  const int d = model.dim();
  const int k = model.alphabet();
  const std::size_t width = static_cast<std::size_t>(d) * static_cast<std::size_t>(k);
  gibbs_step_impl(buffer, d, k,
                  [&](std::vector<AugmentedVector>& current,
                      const std::vector<std::vector<int>>& orders, int step) {
                    const Tensor logprobs = model.cond_logprobs(current);
                    for (std::size_t c = 0; c < current.size(); ++c) {
                      const int pos = orders[c][static_cast<std::size_t>(step)];
                      const double* row =
                          logprobs.data.data() + c * width +
                          static_cast<std::size_t>(pos) * static_cast<std::size_t>(k);
                      current[c].entries[static_cast<std::size_t>(pos)] =
                          draw_from_logits(row, k, buffer.chain_rngs[c]);
                    }
                  });
}

void gibbs_step_marginal(GibbsBuffer& buffer, const MargModel& model) {
  const int d = model.dim();
  const int k = model.alphabet();
  gibbs_step_impl(
      buffer, d, k,
      [&](std::vector<AugmentedVector>& current,
          const std::vector<std::vector<int>>& orders, int step) {
        std::vector<AugmentedVector> rows;
        rows.reserve(current.size() * static_cast<std::size_t>(k));
        for (std::size_t c = 0; c < current.size(); ++c) {
          const int pos = orders[c][static_cast<std::size_t>(step)];
          for (int v = 0; v < k; ++v) {
            AugmentedVector ext = current[c];
            ext.entries[static_cast<std::size_t>(pos)] = v;
            rows.push_back(std::move(ext));
          }
        }
        const std::vector<double> logp = model.marg_logp(rows);
        for (std::size_t c = 0; c < current.size(); ++c) {
          const int pos = orders[c][static_cast<std::size_t>(step)];
          const int value = draw_from_logits(
              logp.data() + c * static_cast<std::size_t>(k), k, buffer.chain_rngs[c]);
          current[c].entries[static_cast<std::size_t>(pos)] = value;
        }
      });
}

std::vector<std::vector<int>> ground_truth_gibbs(const TargetDistribution& target,
                                                 std::size_t steps, std::size_t n_samples,
                                                 Rng& rng) {
  if (steps < 1) throw DomainError("ground_truth_gibbs: need at least one step");
  const int d = target.dim();
  const int k = target.alphabet();

  std::vector<int> x(static_cast<std::size_t>(d));
  for (int i = 0; i < d; ++i) {
    x[static_cast<std::size_t>(i)] = static_cast<int>(rng.uniform_below(static_cast<std::uint64_t>(k)));
  }

  const std::size_t burn_in = steps / 5;
  const std::size_t keep_span = steps - burn_in;
  std::vector<std::size_t> collect_at;
  for (std::size_t s = 0; s < n_samples; ++s) {
    collect_at.push_back(burn_in + ((s + 1) * keep_span) / n_samples);
  }

  std::vector<std::vector<int>> samples;
  samples.reserve(n_samples);
  std::size_t next_collect = 0;
  for (std::size_t step = 1; step <= steps && next_collect < n_samples; ++step) {
    const int site = static_cast<int>(rng.uniform_below(static_cast<std::uint64_t>(d)));
    const std::vector<double> logits = target.site_log_f(x, site);
    x[static_cast<std::size_t>(site)] = draw_from_logits(logits.data(), k, rng);
    while (next_collect < n_samples && collect_at[next_collect] == step) {
      samples.push_back(x);
      ++next_collect;
    }
  }
  while (samples.size() < n_samples) samples.push_back(x);
  return samples;
}

void save_samples(const std::string& path, std::span<const std::vector<int>> samples) {
  std::ofstream out(path);
  if (!out) throw IoError("save_samples: cannot write " + path);
  std::string line;
  for (const std::vector<int>& x : samples) {
    line.clear();
    for (const int v : x) {
      if (v < 0 || v > 9) throw DomainError("save_samples: digit format supports K <= 10");
      line.push_back(static_cast<char>('0' + v));
    }
    out << line << '\n';
  }
  if (!out) throw IoError("save_samples: write failed for " + path);
}

std::vector<std::vector<int>> load_samples(const std::string& path, int k) {
  std::ifstream in(path);
  if (!in) throw IoError("load_samples: cannot open " + path);
  std::vector<std::vector<int>> samples;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<int> x;
    x.reserve(line.size());
    for (const char c : line) {
      const int v = c - '0';
      if (v < 0 || v >= k) {
        throw IoError("load_samples: digit '" + std::string(1, c) + "' outside alphabet " +
                      std::to_string(k));
      }
      x.push_back(v);
    }
    samples.push_back(std::move(x));
  }
  return samples;
}

}  // namespace mam
