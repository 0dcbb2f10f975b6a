#include "mam/run_config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <vector>

#include "mam/errors.hpp"

namespace mam {

std::string to_string(RunMode mode) {
  switch (mode) {
    case RunMode::kMleStage1: return "mle-stage1";
    case RunMode::kMleStage2: return "mle-stage2";
    case RunMode::kEbJoint: return "eb-joint";
    case RunMode::kEbThetaOnly: return "eb-theta-only";
  }
  return "?";
}

namespace {

const std::vector<std::string>& known_keys() {
  static const std::vector<std::string> keys = {
      "mode",        "run_id",        "target",           "lattice_side",
      "coupling",    "bias",          "temperature",      "table_path",
      "dark_parity_even",             "hidden_width",     "residual_layers",
      "lr",          "beta1",         "beta2",            "adam_epsilon",
      "grad_clip",   "seed",          "steps",            "batch_size",
      "lambda",      "q_model",       "q_data",           "q_uniform",
      "gibbs_block_size",             "chain_count",      "gibbs_restart_period",
      "stage1_checkpoint",            "data_size",        "eval_samples",
      "metrics_every",                "checkpoint_every", "deterministic_time",
      "metrics_jsonl"};
  return keys;
}

std::size_t edit_distance(const std::string& a, const std::string& b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

std::string strip(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::string unquote(const std::string& s) {
  if (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') ||
                        (s.front() == '\'' && s.back() == '\''))) {
    return s.substr(1, s.size() - 2);
  }
  return s;
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("trailing chars");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': '" + value + "' is not a number");
  }
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    if (!value.empty() && value[0] == '-') throw std::invalid_argument("negative");
    const std::uint64_t v = std::stoull(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("trailing chars");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': '" + value +
                      "' is not a non-negative integer");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError("config key '" + key + "': '" + value + "' is not a boolean");
}

}  // namespace

void RunConfig::resolve_q_defaults() {
  if (q_model >= 0.0 || q_data >= 0.0 || q_uniform >= 0.0) {
    if (q_model < 0.0) q_model = 0.0;
    if (q_data < 0.0) q_data = 0.0;
    if (q_uniform < 0.0) q_uniform = 0.0;
    return;
  }
  if (is_eb()) {
    q_model = 0.5;
    q_data = 0.0;
    q_uniform = 0.5;
  } else {
    q_model = 0.5;
    q_data = 0.5;
    q_uniform = 0.0;
  }
}

RunConfig parse_run_config(const std::string& text, const std::string& origin) {
  RunConfig cfg;
  std::map<std::string, std::string> kv;

  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto comment = line.find('#');
    if (comment != std::string::npos) line = line.substr(0, comment);
    line = strip(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key = strip(line.substr(0, eq));
    const std::string value = unquote(strip(line.substr(eq + 1)));
    if (key.empty() || value.empty()) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": empty key or value");
    }
    const auto& keys = known_keys();
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
      std::string best;
      std::size_t best_dist = std::numeric_limits<std::size_t>::max();
      for (const std::string& k : keys) {
        const std::size_t dist = edit_distance(key, k);
        if (dist < best_dist) {
          best_dist = dist;
          best = k;
        }
      }
      std::string msg = origin + ":" + std::to_string(line_no) + ": unknown key '" + key + "'";
      if (best_dist <= 3) msg += " (did you mean '" + best + "'?)";
      throw ConfigError(msg);
    }
    if (kv.count(key) != 0) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": duplicate key '" + key + "'");
    }
    kv[key] = value;
  }

  auto get = [&](const char* key) -> const std::string* {
    const auto it = kv.find(key);
    return it == kv.end() ? nullptr : &it->second;
  };

  if (const auto* v = get("mode")) {
    if (*v == "mle-stage1") cfg.mode = RunMode::kMleStage1;
    else if (*v == "mle-stage2") cfg.mode = RunMode::kMleStage2;
    else if (*v == "eb-joint") cfg.mode = RunMode::kEbJoint;
    else if (*v == "eb-theta-only") cfg.mode = RunMode::kEbThetaOnly;
    else throw ConfigError("mode '" + *v +
                           "' is not one of mle-stage1|mle-stage2|eb-joint|eb-theta-only");
  } else {
    throw ConfigError("config is missing the required key 'mode'");
  }

  if (const auto* v = get("run_id")) cfg.run_id = *v;
  if (const auto* v = get("target")) cfg.target = *v;
  if (const auto* v = get("lattice_side")) cfg.lattice_side = static_cast<int>(parse_u64("lattice_side", *v));
  if (const auto* v = get("coupling")) cfg.coupling = parse_double("coupling", *v);
  if (const auto* v = get("bias")) cfg.bias = parse_double("bias", *v);
  if (const auto* v = get("temperature")) cfg.temperature = parse_double("temperature", *v);
  if (const auto* v = get("table_path")) cfg.table_path = *v;
  if (const auto* v = get("dark_parity_even")) cfg.dark_parity_even = parse_bool("dark_parity_even", *v);
  if (const auto* v = get("hidden_width")) cfg.hidden_width = parse_u64("hidden_width", *v);
  if (const auto* v = get("residual_layers")) cfg.residual_layers = parse_u64("residual_layers", *v);
  if (const auto* v = get("lr")) cfg.lr = parse_double("lr", *v);
  if (const auto* v = get("beta1")) cfg.beta1 = parse_double("beta1", *v);
  if (const auto* v = get("beta2")) cfg.beta2 = parse_double("beta2", *v);
  if (const auto* v = get("adam_epsilon")) cfg.adam_epsilon = parse_double("adam_epsilon", *v);
  if (const auto* v = get("grad_clip")) cfg.grad_clip = parse_double("grad_clip", *v);
  if (const auto* v = get("seed")) {
    cfg.seed = parse_u64("seed", *v);
    cfg.has_seed = true;
  }
  if (const auto* v = get("steps")) cfg.steps = parse_u64("steps", *v);
  if (const auto* v = get("batch_size")) cfg.batch_size = parse_u64("batch_size", *v);
  if (const auto* v = get("lambda")) cfg.lambda = parse_double("lambda", *v);
  if (const auto* v = get("q_model")) cfg.q_model = parse_double("q_model", *v);
  if (const auto* v = get("q_data")) cfg.q_data = parse_double("q_data", *v);
  if (const auto* v = get("q_uniform")) cfg.q_uniform = parse_double("q_uniform", *v);
  if (const auto* v = get("gibbs_block_size")) cfg.gibbs_block_size = parse_u64("gibbs_block_size", *v);
  if (const auto* v = get("chain_count")) cfg.chain_count = parse_u64("chain_count", *v);
  if (const auto* v = get("gibbs_restart_period")) cfg.gibbs_restart_period = parse_u64("gibbs_restart_period", *v);
  if (const auto* v = get("stage1_checkpoint")) cfg.stage1_checkpoint = *v;
  if (const auto* v = get("data_size")) cfg.data_size = parse_u64("data_size", *v);
  if (const auto* v = get("eval_samples")) cfg.eval_samples = parse_u64("eval_samples", *v);
  if (const auto* v = get("metrics_every")) cfg.metrics_every = parse_u64("metrics_every", *v);
  if (const auto* v = get("checkpoint_every")) cfg.checkpoint_every = parse_u64("checkpoint_every", *v);
  if (const auto* v = get("deterministic_time")) cfg.deterministic_time = parse_bool("deterministic_time", *v);
  if (const auto* v = get("metrics_jsonl")) cfg.metrics_jsonl = parse_bool("metrics_jsonl", *v);

  // Target can be implied by a lattice side.
  if (cfg.target.empty() && cfg.lattice_side > 0) cfg.target = "ising";

  if (!cfg.has_seed) throw ConfigError("config is missing the required key 'seed'");
  if (cfg.target.empty()) {
    throw ConfigError("config needs 'target' (ising|checkerboard|table) or 'lattice_side'");
  }
  if (cfg.target != "ising" && cfg.target != "checkerboard" && cfg.target != "table") {
    throw ConfigError("target '" + cfg.target + "' is not one of ising|checkerboard|table");
  }
  if (cfg.target == "ising" && cfg.lattice_side < 1) {
    throw ConfigError("target 'ising' needs lattice_side >= 1");
  }
  if (cfg.target == "table" && cfg.table_path.empty()) {
    throw ConfigError("target 'table' needs table_path");
  }
  if (!(cfg.lambda > 0.0)) throw ConfigError("lambda must be strictly positive");
  if (cfg.steps == 0) throw ConfigError("steps must be strictly positive");
  if (cfg.batch_size < 2) throw ConfigError("batch_size must be >= 2");
  if (!(cfg.temperature > 0.0)) throw ConfigError("temperature must be strictly positive");
  if (cfg.mode == RunMode::kMleStage2 && cfg.stage1_checkpoint.empty()) {
    throw ConfigError("mode 'mle-stage2' needs stage1_checkpoint (stage 1 runs first)");
  }
  if ((cfg.q_model >= 0.0 || cfg.q_data >= 0.0 || cfg.q_uniform >= 0.0)) {
    const double qm = std::max(cfg.q_model, 0.0);
    const double qd = std::max(cfg.q_data, 0.0);
    const double qu = std::max(cfg.q_uniform, 0.0);
    if (qm + qd + qu <= 0.0) {
      throw ConfigError("q mixture weights must have a positive sum");
    }
  }
  cfg.resolve_q_defaults();
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("load_run_config: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  RunConfig cfg = parse_run_config(buf.str(), path);
  if (cfg.run_id == "run") {
    // default run id: config file stem
    std::string stem = path;
    const auto slash = stem.find_last_of("/\\");
    if (slash != std::string::npos) stem = stem.substr(slash + 1);
    const auto dot = stem.find_last_of('.');
    if (dot != std::string::npos && dot > 0) stem = stem.substr(0, dot);
    if (!stem.empty()) cfg.run_id = stem;
  }
  return cfg;
}

}  // namespace mam
