#pragma once

#include <cstdint>
#include <fstream>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mam/encoding.hpp"
#include "mam/nets.hpp"

namespace mam {

// -mean(log p)/(D ln 2), for normalized log-probabilities in nats.
double nll_bits_per_dim(std::span<const double> log_probs, int d);

struct Correlation {
  double pearson = 0.0;
  double spearman = 0.0;
  std::size_t kept = 0;
};

// Standard product-moment and rank correlations. Throws DomainError for
// fewer than 3 points or zero variance.
Correlation correlation(std::span<const double> a, std::span<const double> b);

// Drops entries whose reference values sit closer than min_gap to an already
// kept one (sorted greedy sweep), then correlates the survivors. This is the
// pre-screening step of the marginal-quality protocol.
Correlation correlation_prescreened(std::span<const double> reference,
                                    std::span<const double> other, double min_gap);

double mean(std::span<const double> xs);
double variance(std::span<const double> xs);  // unbiased (n-1)

struct VarianceProbe {
  double variance = 0.0;
  double mean = 0.0;
  std::size_t draws = 0;
};

// Variance of a scalar statistic (typically a gradient norm) across n >= 30
// independent estimator draws on a fixed parameter snapshot.
VarianceProbe grad_variance_probe(const std::function<double()>& draw_norm, int n);

struct TimingReport {
  double marginal_median_s = 0.0;
  double chainrule_median_s = 0.0;
  double wallclock_ratio = 0.0;  // chainrule / marginal
  double nfe_marginal = 1.0;
  double nfe_chainrule = 0.0;  // mean unmasked count of the queries
};

// Median wall-clock over `repeats` (>= 20) runs of (a) single-pass marginal
// evaluation and (b) D-pass chain-rule evaluation on identical queries.
TimingReport timing_marginal_inference(const MargModel& mnet, const CondModel& cnet,
                                       std::span<const AugmentedVector> queries,
                                       std::span<const Ordering> orderings, int repeats = 20);

// Every name a metrics stream may carry; writes outside the registry are
// rejected so stray/typo'd series cannot appear in run outputs.
bool is_registered_metric(const std::string& name);

// Append-only metrics stream. CSV header is fixed:
//   run_id,step,metric,value,unix_millis
// With deterministic_time the timestamp column is written as 0 so identical
// runs produce byte-identical files. An optional JSON-lines mirror carries
// the same fields.
class MetricsWriter {
 public:
  MetricsWriter(const std::string& csv_path, std::string run_id,
                bool deterministic_time = false, const std::string& jsonl_path = "");

  void write(std::uint64_t step, const std::string& metric, double value);

 private:
  std::ofstream csv_;
  std::ofstream jsonl_;
  std::string run_id_;
  bool deterministic_time_;
  bool jsonl_enabled_;
};

}  // namespace mam
