#include "mam/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>

#include "mam/errors.hpp"
#include "mam/oracle.hpp"

namespace mam {

double nll_bits_per_dim(std::span<const double> log_probs, int d) {
  if (log_probs.empty()) throw DomainError("nll_bits_per_dim: empty input");
  double total = 0.0;
  for (const double lp : log_probs) total += lp;
  const double mean_lp = total / static_cast<double>(log_probs.size());
  return -mean_lp / (static_cast<double>(d) * std::log(2.0));
}

double mean(std::span<const double> xs) {
  double s = 0.0;
  for (const double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

double variance(std::span<const double> xs) {
  if (xs.size() < 2) throw DomainError("variance: need at least 2 values");
  const double m = mean(xs);
  double s = 0.0;
  for (const double x : xs) s += (x - m) * (x - m);
  return s / static_cast<double>(xs.size() - 1);
}

namespace {

double pearson(std::span<const double> a, std::span<const double> b) {
  const double ma = mean(a), mb = mean(b);
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    cov += (a[i] - ma) * (b[i] - mb);
    va += (a[i] - ma) * (a[i] - ma);
    vb += (b[i] - mb) * (b[i] - mb);
  }
  if (va == 0.0 || vb == 0.0) throw DomainError("correlation: zero variance input");
  return cov / std::sqrt(va * vb);
}

// Average ranks for ties.
std::vector<double> ranks(std::span<const double> xs) {
  std::vector<std::size_t> order(xs.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t i, std::size_t j) { return xs[i] < xs[j]; });
  std::vector<double> r(xs.size(), 0.0);
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && xs[order[j + 1]] == xs[order[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t t = i; t <= j; ++t) r[order[t]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

Correlation correlation(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw DomainError("correlation: length mismatch " + std::to_string(a.size()) + " vs " +
                      std::to_string(b.size()));
  }
  if (a.size() < 3) throw DomainError("correlation: need at least 3 points");
  Correlation c;
  c.kept = a.size();
  c.pearson = pearson(a, b);
  const std::vector<double> ra = ranks(a);
  const std::vector<double> rb = ranks(b);
  c.spearman = pearson(ra, rb);
  return c;
}

Correlation correlation_prescreened(std::span<const double> reference,
                                    std::span<const double> other, double min_gap) {
  if (reference.size() != other.size()) {
    throw DomainError("correlation_prescreened: length mismatch");
  }
  std::vector<std::size_t> order(reference.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t i, std::size_t j) { return reference[i] < reference[j]; });
  std::vector<double> ka, kb;
  double last = 0.0;
  bool have_last = false;
  for (const std::size_t idx : order) {
    if (have_last && reference[idx] - last < min_gap) continue;
    ka.push_back(reference[idx]);
    kb.push_back(other[idx]);
    last = reference[idx];
    have_last = true;
  }
  return correlation(ka, kb);
}

VarianceProbe grad_variance_probe(const std::function<double()>& draw_norm, int n) {
  if (n < 30) throw DomainError("grad_variance_probe: need n >= 30 repetitions");
  std::vector<double> norms;
  norms.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) norms.push_back(draw_norm());
  VarianceProbe probe;
  probe.draws = norms.size();
  probe.mean = mean(norms);
  probe.variance = variance(norms);
  return probe;
}

TimingReport timing_marginal_inference(const MargModel& mnet, const CondModel& cnet,
                                       std::span<const AugmentedVector> queries,
                                       std::span<const Ordering> orderings, int repeats) {
  if (repeats < 20) throw DomainError("timing_marginal_inference: need >= 20 repeats");
  if (queries.empty()) throw DomainError("timing_marginal_inference: no queries");
  using Clock = std::chrono::steady_clock;

  // warm-up both paths once
  (void)mnet.marg_logp(queries);
  (void)chainrule_log_marginals(cnet, queries, orderings);

  std::vector<double> t_marg, t_chain;
  for (int r = 0; r < repeats; ++r) {
    const auto t0 = Clock::now();
    volatile double sink = mnet.marg_logp(queries)[0];
    const auto t1 = Clock::now();
    sink = chainrule_log_marginals(cnet, queries, orderings)[0];
    const auto t2 = Clock::now();
    (void)sink;
    t_marg.push_back(std::chrono::duration<double>(t1 - t0).count());
    t_chain.push_back(std::chrono::duration<double>(t2 - t1).count());
  }
  auto median = [](std::vector<double>& xs) {
    std::sort(xs.begin(), xs.end());
    return xs[xs.size() / 2];
  };

  TimingReport report;
  report.marginal_median_s = median(t_marg);
  report.chainrule_median_s = median(t_chain);
  report.wallclock_ratio = report.chainrule_median_s / report.marginal_median_s;
  double total_unmasked = 0.0;
  for (const AugmentedVector& v : queries) total_unmasked += v.unmasked_count();
  report.nfe_chainrule = total_unmasked / static_cast<double>(queries.size());
  return report;
}

bool is_registered_metric(const std::string& name) {
  static const std::set<std::string> registry = {
      "loss",
      "consistency_error",
      "divergence_sum",
      "nll_bpd_marg",
      "nll_bpd_cond",
      "marg_pearson_vs_chainrule",
      "marg_spearman_vs_chainrule",
      "marg_kept_vs_chainrule",
      "marg_pearson_vs_exact",
      "marg_spearman_vs_exact",
      "marg_kept_vs_exact",
      "marg_pearson_chainrule_vs_exact",
      "marg_spearman_chainrule_vs_exact",
      "marg_kept_chainrule_vs_exact",
      "kl_exact",
      "z_gap",
      "consistency_mse",
      "consistency_mse_theta_only",
      "marginal_median_s",
      "chainrule_median_s",
      "timing_ratio",
      "nfe_chainrule",
      "nfe_marginal",
      "grad_norm_variance",
      "dark_fraction",
  };
  return registry.count(name) != 0;
}

MetricsWriter::MetricsWriter(const std::string& csv_path, std::string run_id,
                             bool deterministic_time, const std::string& jsonl_path)
    : run_id_(std::move(run_id)),
      deterministic_time_(deterministic_time),
      jsonl_enabled_(!jsonl_path.empty()) {
  csv_.open(csv_path, std::ios::out | std::ios::trunc);
  if (!csv_) throw IoError("MetricsWriter: cannot write " + csv_path);
  csv_ << "run_id,step,metric,value,unix_millis\n";
  if (jsonl_enabled_) {
    jsonl_.open(jsonl_path, std::ios::out | std::ios::trunc);
    if (!jsonl_) throw IoError("MetricsWriter: cannot write " + jsonl_path);
  }
}

void MetricsWriter::write(std::uint64_t step, const std::string& metric, double value) {
  if (!is_registered_metric(metric)) {
    throw DomainError("MetricsWriter: metric '" + metric + "' is not in the registry");
  }
  std::uint64_t millis = 0;
  if (!deterministic_time_) {
    millis = static_cast<std::uint64_t>(std::chrono::duration_cast<std::chrono::milliseconds>(
                                            std::chrono::system_clock::now().time_since_epoch())
                                            .count());
  }
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  csv_ << run_id_ << ',' << step << ',' << metric << ',' << buf << ',' << millis << '\n';
  csv_.flush();
  if (jsonl_enabled_) {
    jsonl_ << "{\"run_id\":\"" << run_id_ << "\",\"step\":" << step << ",\"metric\":\""
           << metric << "\",\"value\":" << buf << ",\"unix_millis\":" << millis << "}\n";
    jsonl_.flush();
  }
}

}  // namespace mam
