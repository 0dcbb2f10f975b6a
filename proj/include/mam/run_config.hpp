#pragma once

#include <cstdint>
#include <string>

namespace mam {

enum class RunMode { kMleStage1, kMleStage2, kEbJoint, kEbThetaOnly };

std::string to_string(RunMode mode);

// Flat key = value experiment configuration. Unknown keys are rejected with a
// suggestion; seed and mode are mandatory.
struct RunConfig {
  RunMode mode = RunMode::kMleStage1;
  std::string run_id = "run";

  // target
  std::string target;  // "ising" | "checkerboard" | "table"
  int lattice_side = 0;
  double coupling = 0.1;
  double bias = 0.2;
  double temperature = 1.0;
  std::string table_path;
  bool dark_parity_even = true;

  // network
  std::uint64_t hidden_width = 512;
  std::uint64_t residual_layers = 3;

  // optimizer
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double grad_clip = 100.0;

  // training
  bool has_seed = false;
  std::uint64_t seed = 0;
  std::uint64_t steps = 19800;
  std::uint64_t batch_size = 512;
  double lambda = 4.0;
  // q(x) mixture for consistency constraints; negative = use the mode default
  // (MLE: half data half model; EB: half model half uniform).
  double q_model = -1.0;
  double q_data = -1.0;
  double q_uniform = -1.0;
  std::uint64_t gibbs_block_size = 0;  // 0 = max(1, D/10)
  std::uint64_t chain_count = 0;       // 0 = batch_size
  std::uint64_t gibbs_restart_period = 0;
  std::string stage1_checkpoint;
  std::uint64_t data_size = 60000;
  std::uint64_t eval_samples = 2000;
  std::uint64_t metrics_every = 50;
  std::uint64_t checkpoint_every = 0;  // 0 = final only
  bool deterministic_time = false;
  bool metrics_jsonl = false;

  void resolve_q_defaults();
  bool is_eb() const { return mode == RunMode::kEbJoint || mode == RunMode::kEbThetaOnly; }
};

// Parses and validates; defaults applied, unknown keys are errors.
RunConfig load_run_config(const std::string& path);
RunConfig parse_run_config(const std::string& text, const std::string& origin = "<string>");

}  // namespace mam
