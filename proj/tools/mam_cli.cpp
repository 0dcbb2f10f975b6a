// Experiment driver: train / eval / sample / oracle on marginalization models.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "mam/checkpoint.hpp"
#include "mam/errors.hpp"
#include "mam/metrics.hpp"
#include "mam/oracle.hpp"
#include "mam/run_config.hpp"
#include "mam/samplers.hpp"
#include "mam/threads.hpp"
#include "mam/trainer.hpp"

namespace fs = std::filesystem;
using namespace mam;

namespace {

struct TrainArgs {
  std::string config;
  std::string out = "out";
  std::string resume;
  std::optional<std::uint64_t> seed;
};

struct EvalArgs {
  std::string config;
  std::string cond;
  std::string marg;
  std::string samples;
  std::string out = "out";
  std::size_t queries = 320;
  std::size_t nll_samples = 0;
  double threshold = 2.0;
  std::optional<std::uint64_t> seed;
};

struct SampleArgs {
  std::string config;
  std::string checkpoint;
  std::string method = "ancestral";
  std::string out = "out";
  std::size_t count = 2000;
  int block_size = 1;
  std::size_t gibbs_steps = 100;
  std::optional<std::uint64_t> seed;
};

struct OracleArgs {
  std::string config;
  std::string out = "out";
  std::string queries;
};

RunConfig load_config(const std::string& path, const std::optional<std::uint64_t>& seed) {
  RunConfig cfg = load_run_config(path);
  if (seed.has_value()) {
    cfg.seed = *seed;
    cfg.has_seed = true;
  }
  return cfg;
}

void write_named_csv(const std::string& path,
                     const std::vector<std::pair<std::string, double>>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "name,value\n";
  char buf[40];
  for (const auto& [name, value] : rows) {
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    out << name << ',' << buf << '\n';
  }
}

int cmd_train(const TrainArgs& args) {
  const RunConfig cfg = load_config(args.config, args.seed);
  const TrainOutcome outcome = train_run(cfg, args.out, args.resume);
  std::cout << "trained " << to_string(cfg.mode) << " for " << outcome.final_step
            << " steps\n";
  if (!outcome.cond_checkpoint.empty()) {
    std::cout << "conditional checkpoint: " << outcome.cond_checkpoint << "\n";
  }
  if (!outcome.marg_checkpoint.empty()) {
    std::cout << "marginal checkpoint: " << outcome.marg_checkpoint << "\n";
  }
  for (const auto& [name, value] : outcome.final_metrics) {
    std::cout << name << " = " << value << "\n";
  }
  return 0;
}

int cmd_eval(const EvalArgs& args) {
  const RunConfig cfg = load_config(args.config, args.seed);
  std::optional<ConditionalNet> cnet;
  std::optional<MarginalNet> mnet;
  if (!args.cond.empty()) cnet = conditional_net_from(load_checkpoint(args.cond));
  if (!args.marg.empty()) mnet = marginal_net_from(load_checkpoint(args.marg));
  if (!cnet.has_value() && !mnet.has_value()) {
    throw ConfigError("eval needs --cond and/or --marg checkpoints");
  }
  EvalOptions options;
  options.n_queries = args.queries;
  options.prescreen_gap = args.threshold;
  options.nll_samples = args.nll_samples;
  options.samples_path = args.samples;
  const EvalReport report =
      evaluate_models(cfg, cnet.has_value() ? &*cnet : nullptr,
                      mnet.has_value() ? &*mnet : nullptr, options, args.out);
  std::cout << report.text;
  return 0;
}

int cmd_sample(const SampleArgs& args) {
  const RunConfig cfg = load_config(args.config, args.seed);
  const TargetBundle bundle = build_target(cfg);
  fs::create_directories(args.out);
  Rng rng = Rng::derive(cfg.seed, 0x73616d706cULL);

  std::vector<std::vector<int>> samples;
  if (args.count > 0 && args.method == "ancestral") {
    const ConditionalNet cnet = conditional_net_from(load_checkpoint(args.checkpoint));
    if (cnet.dim() != bundle.d) throw DomainError("checkpoint dimension does not match target");
    std::vector<Ordering> sigmas;
    for (std::size_t i = 0; i < args.count; ++i) {
      sigmas.push_back(sample_ordering(bundle.d, rng));
    }
    for (auto& r : ancestral_sample_batch(cnet, sigmas, rng)) samples.push_back(std::move(r.x));
  } else if (args.count > 0 && args.method == "marginal-block") {
    const MarginalNet mnet = marginal_net_from(load_checkpoint(args.checkpoint));
    if (mnet.dim() != bundle.d) throw DomainError("checkpoint dimension does not match target");
    samples = marginal_block_sample_batch(mnet, args.block_size, args.count, rng);
  } else if (args.count > 0 && args.method == "gibbs") {
    const ConditionalNet cnet = conditional_net_from(load_checkpoint(args.checkpoint));
    if (cnet.dim() != bundle.d) throw DomainError("checkpoint dimension does not match target");
    const std::size_t chains = std::min<std::size_t>(args.count, 512);
    GibbsBuffer buffer = GibbsBuffer::init(chains, bundle.d, bundle.k,
                                           std::max(1, bundle.d / 10), cfg.seed);
    for (std::size_t step = 0; step < args.gibbs_steps; ++step) gibbs_step(buffer, cnet);
    while (samples.size() < args.count) {
      gibbs_step(buffer, cnet);
      for (const auto& chain : buffer.chains) {
        if (samples.size() < args.count) samples.push_back(chain);
      }
    }
  } else if (args.count > 0) {
    throw ConfigError("method '" + args.method +
                      "' is not one of ancestral|marginal-block|gibbs");
  }

  const std::string sample_path = args.out + "/samples.txt";
  save_samples(sample_path, samples);
  std::cout << "wrote " << samples.size() << " samples to " << sample_path << "\n";

  if (bundle.ising != nullptr && !samples.empty()) {
    // raw negative energies; downstream tooling renders the KDE/histogram
    const std::string energy_path = args.out + "/energies.csv";
    std::ofstream out(energy_path);
    if (!out) throw IoError("cannot write " + energy_path);
    out << "neg_energy\n";
    char buf[40];
    for (const auto& x : samples) {
      std::snprintf(buf, sizeof(buf), "%.17g", bundle.target->log_f(x));
      out << buf << '\n';
    }
    std::cout << "wrote energies to " << energy_path << "\n";
  }
  if (bundle.checkerboard != nullptr && !samples.empty()) {
    std::size_t dark = 0;
    for (const auto& x : samples) dark += bundle.checkerboard->is_dark(x);
    std::cout << "dark fraction: "
              << static_cast<double>(dark) / static_cast<double>(samples.size()) << "\n";
  }
  return 0;
}

AugmentedVector parse_query_line(const std::string& line, int d, int k) {
  if (static_cast<int>(line.size()) != d) {
    throw IoError("query '" + line + "' has length " + std::to_string(line.size()) +
                  ", expected " + std::to_string(d));
  }
  std::vector<int> entries;
  for (const char c : line) {
    if (c == '?') {
      entries.push_back(kMask);
    } else if (c >= '0' && c < static_cast<char>('0' + k)) {
      entries.push_back(c - '0');
    } else {
      throw IoError("query '" + line + "' has a character outside {0..K-1, ?}");
    }
  }
  return AugmentedVector(std::move(entries), k);
}

int cmd_oracle(const OracleArgs& args) {
  const RunConfig cfg = load_run_config(args.config);
  const TargetBundle bundle = build_target(cfg);
  fs::create_directories(args.out);

  if (bundle.checkerboard != nullptr) {
    // cell-level summary; the full 2^32 table is deliberately out of reach
    const std::string cells_path = args.out + "/cells.csv";
    std::ofstream out(cells_path);
    if (!out) throw IoError("cannot write " + cells_path);
    out << "cell_x,cell_y,dark,mass_fraction\n";
    const double per_cell_states = std::pow(2.0, 28);
    const int cells[4] = {0, 1, -1, -2};
    auto probe_for = [](int c1, int c2) {
      std::vector<int> probe(32, 0);
      probe[0] = c1 < 0;
      probe[1] = (c1 == 1 || c1 == -2);
      probe[16] = c2 < 0;
      probe[17] = (c2 == 1 || c2 == -2);
      return probe;
    };
    double z = 0.0;
    for (const int c1 : cells) {
      for (const int c2 : cells) {
        z += per_cell_states *
             (bundle.checkerboard->is_dark(probe_for(c1, c2)) ? 1.0 : 1e-10);
      }
    }
    for (const int c1 : cells) {
      for (const int c2 : cells) {
        const bool dark = bundle.checkerboard->is_dark(probe_for(c1, c2));
        const double mass = per_cell_states * (dark ? 1.0 : 1e-10);
        out << c1 << ',' << c2 << ',' << dark << ',' << mass / z << '\n';
      }
    }
    const double p_dark = 1.0 / z;
    const double p_light = 1e-10 / z;
    const double entropy = -(8.0 * per_cell_states * p_dark * std::log(p_dark) +
                             8.0 * per_cell_states * p_light * std::log(p_light));
    write_named_csv(args.out + "/summary.csv",
                    {{"entropy_nats", entropy},
                     {"entropy_bits", entropy / std::log(2.0)},
                     {"log_z", std::log(z)},
                     {"dark_cells", 8.0}});
    std::cout << "wrote " << cells_path << " and summary.csv\n";
    return 0;
  }

  const ExactTable table = enumerate_pmf(*bundle.target);
  const std::string pmf_path = args.out + "/pmf.tsv";
  {
    std::ofstream out(pmf_path);
    if (!out) throw IoError("cannot write " + pmf_path);
    char buf[40];
    for (std::size_t idx = 0; idx < table.states(); ++idx) {
      const std::vector<int> x = state_from_index(idx, table.d, table.k);
      for (const int v : x) out << static_cast<char>('0' + v);
      std::snprintf(buf, sizeof(buf), "%.17g", table.prob(idx));
      out << '\t' << buf << '\n';
    }
  }
  write_named_csv(args.out + "/summary.csv",
                  {{"entropy_nats", table.entropy()},
                   {"entropy_bpd",
                    table.entropy() / (static_cast<double>(table.d) * std::log(2.0))},
                   {"log_z", table.log_z},
                   {"states", static_cast<double>(table.states())}});

  if (!args.queries.empty()) {
    std::ifstream in(args.queries);
    if (!in) throw IoError("cannot open query file " + args.queries);
    const std::string marg_path = args.out + "/marginals.csv";
    std::ofstream out(marg_path);
    if (!out) throw IoError("cannot write " + marg_path);
    out << "query,probability,log_probability\n";
    std::string line;
    char buf[40];
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const AugmentedVector v = parse_query_line(line, table.d, table.k);
      std::snprintf(buf, sizeof(buf), "%.17g", exact_marginal(table, v));
      out << line << ',' << buf << ',';
      std::snprintf(buf, sizeof(buf), "%.17g", exact_log_marginal(table, v));
      out << buf << '\n';
    }
    std::cout << "wrote " << marg_path << "\n";
  }
  std::cout << "wrote " << pmf_path << " and summary.csv (entropy " << table.entropy()
            << " nats, log Z " << table.log_z << ")\n";
  return 0;
}

int fail(const char* kind, const std::exception& e, int code) {
  nlohmann::json line = {{"error", kind}, {"message", e.what()}};
  std::cerr << line.dump() << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  configure_threads();

  CLI::App app{"marginalization-model trainer and evaluation harness"};
  app.require_subcommand(1);

  TrainArgs train_args;
  CLI::App* train = app.add_subcommand("train", "run a training job from a config file");
  train->add_option("--config", train_args.config, "run configuration file")->required();
  train->add_option("--out", train_args.out, "output directory");
  train->add_option("--seed", train_args.seed, "override the config seed");
  train->add_option("--checkpoint", train_args.resume,
                    "resume from a checkpoint prefix (e.g. out/ckpt_1000)");

  EvalArgs eval_args;
  CLI::App* eval = app.add_subcommand("eval", "evaluate trained checkpoints");
  eval->add_option("--config", eval_args.config, "run configuration file")->required();
  eval->add_option("--cond", eval_args.cond, "conditional checkpoint");
  eval->add_option("--marg", eval_args.marg, "marginal checkpoint");
  eval->add_option("--samples", eval_args.samples, "held-out sample file");
  eval->add_option("--queries", eval_args.queries, "number of marginal queries");
  eval->add_option("--nll-samples", eval_args.nll_samples, "held-out sample count");
  eval->add_option("--threshold", eval_args.threshold,
                   "pre-screening gap for correlation batches (nats)");
  eval->add_option("--out", eval_args.out, "output directory");
  eval->add_option("--seed", eval_args.seed, "override the config seed");

  SampleArgs sample_args;
  CLI::App* sample = app.add_subcommand("sample", "draw samples from a checkpoint");
  sample->add_option("--config", sample_args.config, "run configuration file")->required();
  sample->add_option("--checkpoint", sample_args.checkpoint, "model checkpoint")->required();
  sample->add_option("--method", sample_args.method, "ancestral|marginal-block|gibbs");
  sample->add_option("--block-size", sample_args.block_size, "marginal-block block size");
  sample->add_option("--count", sample_args.count, "number of samples");
  sample->add_option("--gibbs-steps", sample_args.gibbs_steps, "gibbs burn-in steps");
  sample->add_option("--out", sample_args.out, "output directory");
  sample->add_option("--seed", sample_args.seed, "override the config seed");

  OracleArgs oracle_args;
  CLI::App* oracle = app.add_subcommand("oracle", "exact brute-force reference tables");
  oracle->add_option("--config", oracle_args.config, "run configuration file")->required();
  oracle->add_option("--out", oracle_args.out, "output directory");
  oracle->add_option("--queries", oracle_args.queries, "file of marginal queries");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) return cmd_train(train_args);
    if (eval->parsed()) return cmd_eval(eval_args);
    if (sample->parsed()) return cmd_sample(sample_args);
    if (oracle->parsed()) return cmd_oracle(oracle_args);
  } catch (const ConfigError& e) {
    return fail("config", e, 2);
  } catch (const IoError& e) {
    return fail("io", e, 3);
  } catch (const CheckpointError& e) {
    return fail("checkpoint", e, 4);
  } catch (const NumericError& e) {
    return fail("numeric", e, 5);
  } catch (const Error& e) {
    return fail("domain", e, 6);
  } catch (const std::exception& e) {
    return fail("internal", e, 1);
  }
  return 0;
}
