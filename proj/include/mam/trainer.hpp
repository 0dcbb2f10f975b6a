#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mam/nets.hpp"
#include "mam/oracle.hpp"
#include "mam/run_config.hpp"
#include "mam/targets.hpp"

namespace mam {

// Concrete target plus the typed views some call sites need.
struct TargetBundle {
  std::shared_ptr<const TargetDistribution> target;  // tempered view
  std::shared_ptr<const IsingTarget> ising;
  std::shared_ptr<const CheckerboardTarget> checkerboard;
  std::shared_ptr<const TableTarget> table;
  int d = 0;
  int k = 2;

  bool enumerable() const;
};

TargetBundle build_target(const RunConfig& cfg);

// Ground-truth samples for the target: exact draws for tables, dark-cell
// draws for the checkerboard, long-run single-site Gibbs for Ising.
std::vector<std::vector<int>> build_dataset(const TargetBundle& bundle, std::size_t n, Rng& rng);

struct TrainOutcome {
  std::uint64_t final_step = 0;
  std::string cond_checkpoint;  // empty if the mode has no such net
  std::string marg_checkpoint;
  std::map<std::string, double> final_metrics;
};

// Runs one training job (all four modes), writing metrics.csv and periodic
// checkpoints under out_dir. resume_prefix points at the basename of an
// earlier checkpoint pair ("<prefix>_cond.mam" / "<prefix>_marg.mam") and
// continues the identical trajectory.
TrainOutcome train_run(const RunConfig& cfg, const std::string& out_dir,
                       const std::string& resume_prefix = "");

struct EvalOptions {
  std::size_t n_queries = 320;
  double prescreen_gap = 2.0;
  std::size_t nll_samples = 0;  // 0 = cfg.eval_samples
  int timing_repeats = 20;
  std::string samples_path;  // optional held-out sample file
};

struct EvalReport {
  std::map<std::string, double> metrics;
  std::string text;
};

// NLL (bpd), marginal correlations against the chain-rule baseline and (when
// the state space is enumerable) the exact oracle, consistency MSE, and the
// single-pass vs D-pass timing table. Either net may be absent.
EvalReport evaluate_models(const RunConfig& cfg, const ConditionalNet* cnet,
                           const MarginalNet* mnet, const EvalOptions& options,
                           const std::string& out_dir);

}  // namespace mam
