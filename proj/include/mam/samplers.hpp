#pragma once

#include <span>
#include <string>
#include <vector>

#include "mam/encoding.hpp"
#include "mam/nets.hpp"
#include "mam/rng.hpp"
#include "mam/targets.hpp"

namespace mam {

struct AncestralResult {
  std::vector<int> x;
  double log_prob = 0.0;  // accumulated log p(x | sigma)
};

// D sequential draws, position sigma(d) from the model's conditionals on the
// current prefix. The batched variant shares one model call per depth.
AncestralResult ancestral_sample(const CondModel& model, const Ordering& sigma, Rng& rng);
std::vector<AncestralResult> ancestral_sample_batch(const CondModel& model,
                                                    std::span<const Ordering> orderings,
                                                    Rng& rng);

// Resamples the masked positions of `state` ancestrally (the unmasked entries
// stay fixed), visiting them in `order` (a list of the masked positions).
// Used by the Gibbs step and exposed for conditional generation.
double resample_positions(const CondModel& model, std::vector<int>& state,
                          std::span<const int> order, int k, Rng& rng);

// Consecutive blocks of `block_size` positions of sigma (last may be smaller).
std::vector<std::vector<int>> blocks_from_ordering(const Ordering& sigma, int block_size);

// Block sampling from the marginal network via normalized conditionals: for
// each block enumerate all K^m completions, normalize p_theta over them, draw
// the block jointly. Requires K^m <= 2^16.
std::vector<int> marginal_block_sample(const MargModel& model,
                                       const std::vector<std::vector<int>>& blocks, Rng& rng);
// Batched variant: every sample gets its own ordering chopped into blocks of
// `block_size`; one model call per block step covers all samples.
std::vector<std::vector<int>> marginal_block_sample_batch(const MargModel& model,
                                                          int block_size, std::size_t count,
                                                          Rng& rng);

// Persistent Markov chains for energy-based training. Chains are full
// assignments updated by re-drawing a random block of M coordinates per step;
// each chain owns an RNG stream so chains can run in parallel and serialize
// compactly.
struct GibbsBuffer {
  std::vector<std::vector<int>> chains;
  std::vector<Rng> chain_rngs;
  int k = 2;
  int block_size = 1;            // M
  std::size_t restart_period = 0;  // 0 = never full-resample
  std::uint64_t step_count = 0;

  static GibbsBuffer init(std::size_t chain_count, int d, int k, int block_size,
                          std::uint64_t seed, std::size_t restart_period = 0);
  int dim() const { return chains.empty() ? 0 : static_cast<int>(chains[0].size()); }
};

// One persistent block-Gibbs step: per chain draw a fresh ordering, mask its
// first M positions and resample them from the conditional model. At most M
// coordinates change per chain. When a restart period is set, every
// restart_period-th step resamples all D positions instead.
void gibbs_step(GibbsBuffer& buffer, const CondModel& model);

// Marginal-network flavor used when no conditional network exists: masked
// positions are redrawn one at a time from the normalized one-step
// conditionals of the marginal model (K rows per position).
void gibbs_step_marginal(GibbsBuffer& buffer, const MargModel& model);

// Single-site Gibbs on the exact target energy. `steps` counts single-site
// updates; the first fifth is burn-in, then `n_samples` states are collected
// at even intervals.
std::vector<std::vector<int>> ground_truth_gibbs(const TargetDistribution& target,
                                                 std::size_t steps, std::size_t n_samples,
                                                 Rng& rng);

// Sample-set text format: one state per line, digits in {0..K-1}, no
// separators.
void save_samples(const std::string& path, std::span<const std::vector<int>> samples);
std::vector<std::vector<int>> load_samples(const std::string& path, int k);

}  // namespace mam
