#include "mam/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <sstream>

#include "mam/adam.hpp"
#include "mam/checkpoint.hpp"
#include "mam/errors.hpp"
#include "mam/metrics.hpp"
#include "mam/objectives.hpp"
#include "mam/samplers.hpp"

namespace mam {

namespace {

// Named RNG streams derived from the config seed.
enum Stream : std::uint64_t {
  kStreamInitCond = 1,
  kStreamInitMarg = 2,
  kStreamData = 3,
  kStreamTrain = 4,
  kStreamBuffer = 5,
  kStreamEval = 6,
};

int resolved_block_size(const RunConfig& cfg, int d) {
  if (cfg.gibbs_block_size > 0) return static_cast<int>(cfg.gibbs_block_size);
  return std::max(1, d / 10);
}

std::size_t resolved_chain_count(const RunConfig& cfg) {
  return cfg.chain_count > 0 ? cfg.chain_count : cfg.batch_size;
}

}  // namespace

bool TargetBundle::enumerable() const {
  double states = 1.0;
  for (int i = 0; i < d; ++i) {
    states *= static_cast<double>(k);
    if (states > static_cast<double>(1 << 24)) return false;
  }
  return true;
}

TargetBundle build_target(const RunConfig& cfg) {
  TargetBundle bundle;
  std::shared_ptr<const TargetDistribution> base;
  if (cfg.target == "ising") {
    bundle.ising = std::make_shared<IsingTarget>(cfg.lattice_side, cfg.coupling, cfg.bias);
    base = bundle.ising;
  } else if (cfg.target == "checkerboard") {
    bundle.checkerboard = std::make_shared<CheckerboardTarget>(cfg.dark_parity_even);
    base = bundle.checkerboard;
  } else if (cfg.target == "table") {
    bundle.table = std::make_shared<TableTarget>(TableTarget::load(cfg.table_path));
    base = bundle.table;
  } else {
    throw ConfigError("unknown target '" + cfg.target + "'");
  }
  bundle.d = base->dim();
  bundle.k = base->alphabet();
  if (cfg.temperature != 1.0) {
    bundle.target = std::make_shared<TemperedTarget>(base, Temperature(cfg.temperature));
  } else {
    bundle.target = base;
  }
  return bundle;
}

std::vector<std::vector<int>> build_dataset(const TargetBundle& bundle, std::size_t n,
                                            Rng& rng) {
  if (bundle.table != nullptr) {
    const ExactTable table = enumerate_pmf(*bundle.target);
    const ExactSampler sampler(table);
    std::vector<std::vector<int>> data;
    data.reserve(n);
    for (std::size_t i = 0; i < n; ++i) data.push_back(sampler.sample(rng));
    return data;
  }
  if (bundle.checkerboard != nullptr) return bundle.checkerboard->sample_data(rng, n);
  // Ising: long-run single-site Gibbs, >= 100 sweeps between kept samples.
  const std::size_t sweeps_per_sample = 100;
  const std::size_t steps =
      std::max<std::size_t>(1000000, n * sweeps_per_sample * static_cast<std::size_t>(bundle.d));
  return ground_truth_gibbs(*bundle.target, steps, n, rng);
}

namespace {

// Mutable training state shared by the four modes.
struct Trainer {
  RunConfig cfg;
  TargetBundle bundle;
  std::string out_dir;

  std::optional<ConditionalNet> cnet;
  std::optional<MarginalNet> mnet;
  AdamState adam;
  std::optional<GibbsBuffer> buffer;
  std::vector<std::vector<int>> dataset;
  Rng train_rng;
  std::uint64_t start_step = 0;

  bool needs_cond() const {
    return cfg.mode == RunMode::kMleStage1 || cfg.mode == RunMode::kMleStage2 ||
           cfg.mode == RunMode::kEbJoint;
  }
  bool needs_marg() const { return cfg.mode != RunMode::kMleStage1; }
  bool needs_buffer() const { return cfg.is_eb(); }
  bool needs_dataset() const {
    return cfg.mode == RunMode::kMleStage1 ||
           (cfg.mode != RunMode::kMleStage1 && cfg.q_data > 0.0);
  }

  // Parameters the optimizer updates, in a fixed order (cond first).
  std::vector<Tensor*> trainable_params() {
    std::vector<Tensor*> params;
    if (cfg.mode == RunMode::kMleStage1 || cfg.mode == RunMode::kEbJoint) {
      for (Tensor* p : cnet->mlp().params()) params.push_back(p);
    }
    if (needs_marg()) {
      for (Tensor* p : mnet->mlp().params()) params.push_back(p);
    }
    return params;
  }

  void apply_gradients(Graph& g) {
    const std::vector<Tensor*> params = trainable_params();
    std::vector<const Tensor*> grads;
    grads.reserve(params.size());
    for (Tensor* p : params) grads.push_back(&g.grad_for(p));
    adam.step(params, grads);
  }

  std::vector<std::vector<int>> q_batch(std::size_t count) {
    const double qm = cfg.q_model, qd = cfg.q_data, qu = cfg.q_uniform;
    const double total = qm + qd + qu;
    std::vector<int> source(count);
    std::size_t n_model = 0;
    for (std::size_t i = 0; i < count; ++i) {
      const double u = train_rng.uniform01() * total;
      source[i] = u < qm ? 0 : (u < qm + qd ? 1 : 2);
      n_model += source[i] == 0;
    }
    // Model draws: persistent chains in EB modes, fresh ancestral samples in
    // MLE stage 2.
    std::vector<std::vector<int>> model_draws;
    if (n_model > 0) {
      if (buffer.has_value()) {
        model_draws.reserve(n_model);
        for (std::size_t i = 0; i < n_model; ++i) {
          model_draws.push_back(
              buffer->chains[train_rng.uniform_below(buffer->chains.size())]);
        }
      } else {
        std::vector<Ordering> sigmas;
        sigmas.reserve(n_model);
        for (std::size_t i = 0; i < n_model; ++i) {
          sigmas.push_back(sample_ordering(bundle.d, train_rng));
        }
        for (AncestralResult& r : ancestral_sample_batch(*cnet, sigmas, train_rng)) {
          model_draws.push_back(std::move(r.x));
        }
      }
    }
    std::vector<std::vector<int>> out;
    out.reserve(count);
    std::size_t model_used = 0;
    for (std::size_t i = 0; i < count; ++i) {
      if (source[i] == 0) {
        out.push_back(std::move(model_draws[model_used++]));
      } else if (source[i] == 1) {
        out.push_back(dataset[train_rng.uniform_below(dataset.size())]);
      } else {
        std::vector<int> x(static_cast<std::size_t>(bundle.d));
        for (int j = 0; j < bundle.d; ++j) {
          x[static_cast<std::size_t>(j)] =
              static_cast<int>(train_rng.uniform_below(static_cast<std::uint64_t>(bundle.k)));
        }
        out.push_back(std::move(x));
      }
    }
    return out;
  }

  std::vector<ConsistencySample> consistency_batch(std::size_t count) {
    std::vector<ConsistencySample> samples;
    samples.reserve(count);
    for (std::vector<int>& x : q_batch(count)) {
      ConsistencySample s = sample_consistency_constraint(x, train_rng);
      samples.push_back(std::move(s));
    }
    return samples;
  }

  std::vector<std::vector<int>> data_batch(std::size_t count) {
    std::vector<std::vector<int>> batch;
    batch.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
      batch.push_back(dataset[train_rng.uniform_below(dataset.size())]);
    }
    return batch;
  }

  std::vector<std::vector<int>> model_sample_batch() {
    std::vector<std::vector<int>> samples;
    samples.reserve(cfg.batch_size);
    if (buffer->chains.size() == cfg.batch_size) {
      samples = buffer->chains;
    } else {
      for (std::size_t i = 0; i < cfg.batch_size; ++i) {
        samples.push_back(buffer->chains[train_rng.uniform_below(buffer->chains.size())]);
      }
    }
    return samples;
  }
};

struct StepMetrics {
  double loss = 0.0;
  double consistency = 0.0;
  double divergence_sum = 0.0;
  bool has_consistency = false;
  bool has_divergence = false;
};

StepMetrics do_step(Trainer& t) {
  StepMetrics m;
  switch (t.cfg.mode) {
    case RunMode::kMleStage1: {
      const std::vector<std::vector<int>> batch = t.data_batch(t.cfg.batch_size);
      Graph g;
      const Graph::NodeId loss = aoarm_lower_bound_loss(g, *t.cnet, batch, t.train_rng);
      m.loss = g.value(loss).item();
      g.backward(loss);
      t.apply_gradients(g);
      break;
    }
    case RunMode::kMleStage2: {
      const std::vector<ConsistencySample> samples = t.consistency_batch(t.cfg.batch_size);
      Graph g;
      const Graph::NodeId loss = consistency_loss(g, *t.mnet, *t.cnet, samples);
      m.loss = g.value(loss).item();
      m.consistency = m.loss;
      m.has_consistency = true;
      g.backward(loss);
      t.apply_gradients(g);  // theta only; phi is frozen in stage 2
      break;
    }
    case RunMode::kEbJoint: {
      gibbs_step(*t.buffer, *t.cnet);
      const std::vector<std::vector<int>> model_samples = t.model_sample_batch();
      const std::vector<ConsistencySample> samples = t.consistency_batch(t.cfg.batch_size);
      EBConfig eb;
      eb.lambda = t.cfg.lambda;
      eb.batch_size = t.cfg.batch_size;
      eb.gibbs_block_size = t.buffer->block_size;
      eb.chain_count = t.buffer->chains.size();
      Graph g;
      const JointEbParts parts =
          joint_eb_loss(g, *t.mnet, *t.cnet, model_samples, samples, *t.bundle.target, eb);
      m.loss = g.value(parts.total).item();
      m.consistency = parts.consistency_value;
      m.has_consistency = true;
      m.divergence_sum = parts.reinforce.divergence_sum;
      m.has_divergence = true;
      g.backward(parts.total);
      t.apply_gradients(g);
      break;
    }
    case RunMode::kEbThetaOnly: {
      gibbs_step_marginal(*t.buffer, *t.mnet);
      const std::vector<std::vector<int>> model_samples = t.model_sample_batch();
      const std::vector<ConsistencySample> samples = t.consistency_batch(t.cfg.batch_size);
      Graph g;
      ReinforceDiag diag;
      const Graph::NodeId surrogate =
          reinforce_surrogate(g, *t.mnet, model_samples, *t.bundle.target, &diag);
      const Graph::NodeId consistency = theta_only_consistency_loss(g, *t.mnet, samples);
      m.consistency = g.value(consistency).item();
      m.has_consistency = true;
      const Graph::NodeId total = g.add(surrogate, g.scale(consistency, t.cfg.lambda));
      m.loss = g.value(total).item();
      m.divergence_sum = diag.divergence_sum;
      m.has_divergence = true;
      g.backward(total);
      t.apply_gradients(g);
      break;
    }
  }
  return m;
}

std::string checkpoint_prefix(const std::string& out_dir, std::uint64_t step) {
  return out_dir + "/ckpt_" + std::to_string(step);
}

// Only one net's checkpoint (marginal when present) carries the shared
// trainer state: step counter, train RNG, Gibbs chains and their streams.
void attach_trainer_state(Checkpoint& c, const Trainer& t, std::uint64_t step) {
  c.extra["step"] = std::to_string(step);
  c.extra["mode"] = to_string(t.cfg.mode);
  c.rng_states["train"] = t.train_rng.state_hex();
  if (t.buffer.has_value()) {
    const GibbsBuffer& buffer = *t.buffer;
    Tensor chains = Tensor::zeros({buffer.chains.size(),
                                   static_cast<std::size_t>(t.bundle.d)});
    for (std::size_t cidx = 0; cidx < buffer.chains.size(); ++cidx) {
      for (int j = 0; j < t.bundle.d; ++j) {
        chains.at(cidx, static_cast<std::size_t>(j)) =
            static_cast<double>(buffer.chains[cidx][static_cast<std::size_t>(j)]);
      }
    }
    c.tensors.push_back({"gibbs.chains", std::move(chains)});
    c.extra["gibbs_step_count"] = std::to_string(buffer.step_count);
    for (std::size_t cidx = 0; cidx < buffer.chain_rngs.size(); ++cidx) {
      c.rng_states["chain" + std::to_string(cidx)] = buffer.chain_rngs[cidx].state_hex();
    }
  }
}

void attach_adam_slice(Checkpoint& c, const AdamState& adam,
                       const std::vector<std::string>& names, std::size_t offset) {
  if (adam.moments_m().empty()) return;
  c.optimizer_step = adam.step_count();
  for (std::size_t i = 0; i < names.size(); ++i) {
    c.tensors.push_back({"adam.m." + names[i], adam.moments_m()[offset + i]});
    c.tensors.push_back({"adam.v." + names[i], adam.moments_v()[offset + i]});
  }
}

struct SavedPaths {
  std::string cond;
  std::string marg;
};

SavedPaths save_state(const Trainer& t, std::uint64_t step) {
  SavedPaths paths;
  const std::string prefix = checkpoint_prefix(t.out_dir, step);
  const bool cond_trained =
      t.cfg.mode == RunMode::kMleStage1 || t.cfg.mode == RunMode::kEbJoint;
  std::size_t marg_offset = 0;
  if (t.cnet.has_value()) {
    Checkpoint c = checkpoint_from_net(*t.cnet);
    if (cond_trained) {
      attach_adam_slice(c, t.adam, t.cnet->mlp().param_names(), 0);
      marg_offset = t.cnet->mlp().params().size();
    }
    if (!t.mnet.has_value()) attach_trainer_state(c, t, step);
    paths.cond = prefix + "_cond.mam";
    save_checkpoint(paths.cond, c);
  }
  if (t.mnet.has_value()) {
    Checkpoint c = checkpoint_from_net(*t.mnet);
    attach_adam_slice(c, t.adam, t.mnet->mlp().param_names(), marg_offset);
    attach_trainer_state(c, t, step);
    paths.marg = prefix + "_marg.mam";
    save_checkpoint(paths.marg, c);
  }
  return paths;
}

void restore_adam_slice(const Checkpoint& c, const std::vector<std::string>& names,
                        std::vector<Tensor>& m, std::vector<Tensor>& v) {
  for (const std::string& name : names) {
    const Tensor* tm = c.find("adam.m." + name);
    const Tensor* tv = c.find("adam.v." + name);
    if (tm == nullptr || tv == nullptr) {
      throw CheckpointError("resume: optimizer moments for '" + name + "' missing");
    }
    m.push_back(*tm);
    v.push_back(*tv);
  }
}

void resume_state(Trainer& t, const std::string& prefix) {
  const std::string cond_path = prefix + "_cond.mam";
  const std::string marg_path = prefix + "_marg.mam";
  std::optional<Checkpoint> cond_ckpt;
  std::optional<Checkpoint> marg_ckpt;
  if (t.cnet.has_value()) {
    if (!std::filesystem::exists(cond_path)) {
      throw CheckpointError("resume: missing checkpoint " + cond_path);
    }
    cond_ckpt = load_checkpoint(cond_path);
    restore_net(*cond_ckpt, *t.cnet);
  }
  if (t.mnet.has_value()) {
    if (!std::filesystem::exists(marg_path)) {
      throw CheckpointError("resume: missing checkpoint " + marg_path);
    }
    marg_ckpt = load_checkpoint(marg_path);
    restore_net(*marg_ckpt, *t.mnet);
  }
  const Checkpoint& state_ckpt = marg_ckpt.has_value() ? *marg_ckpt : *cond_ckpt;
  const auto mode_it = state_ckpt.extra.find("mode");
  if (mode_it == state_ckpt.extra.end() || mode_it->second != to_string(t.cfg.mode)) {
    throw CheckpointError("resume: checkpoint was written by mode '" +
                          (mode_it == state_ckpt.extra.end() ? "?" : mode_it->second) +
                          "', config says '" + to_string(t.cfg.mode) + "'");
  }
  t.start_step = std::stoull(state_ckpt.extra.at("step"));
  t.train_rng.set_state_hex(state_ckpt.rng_states.at("train"));

  // optimizer moments, cond slice first
  std::vector<Tensor> m, v;
  std::uint64_t opt_step = 0;
  const bool cond_trained =
      t.cfg.mode == RunMode::kMleStage1 || t.cfg.mode == RunMode::kEbJoint;
  if (cond_trained && cond_ckpt.has_value()) {
    restore_adam_slice(*cond_ckpt, t.cnet->mlp().param_names(), m, v);
    opt_step = cond_ckpt->optimizer_step.value_or(0);
  }
  if (t.needs_marg() && marg_ckpt.has_value()) {
    restore_adam_slice(*marg_ckpt, t.mnet->mlp().param_names(), m, v);
    opt_step = marg_ckpt->optimizer_step.value_or(opt_step);
  }
  t.adam.restore(opt_step, std::move(m), std::move(v));

  if (t.buffer.has_value()) {
    const Tensor* chains = state_ckpt.find("gibbs.chains");
    if (chains == nullptr) throw CheckpointError("resume: gibbs.chains missing");
    if (chains->rows() != t.buffer->chains.size() ||
        chains->cols() != static_cast<std::size_t>(t.bundle.d)) {
      throw CheckpointError("resume: gibbs.chains shape " + shape_str(*chains) +
                            " does not match chain_count/D");
    }
    for (std::size_t cidx = 0; cidx < t.buffer->chains.size(); ++cidx) {
      for (int j = 0; j < t.bundle.d; ++j) {
        t.buffer->chains[cidx][static_cast<std::size_t>(j)] =
            static_cast<int>(chains->at(cidx, static_cast<std::size_t>(j)));
      }
      t.buffer->chain_rngs[cidx].set_state_hex(
          state_ckpt.rng_states.at("chain" + std::to_string(cidx)));
    }
    t.buffer->step_count = std::stoull(state_ckpt.extra.at("gibbs_step_count"));
  }
}

}  // namespace

TrainOutcome train_run(const RunConfig& cfg, const std::string& out_dir,
                       const std::string& resume_prefix) {
  if (!cfg.has_seed) throw ConfigError("train_run: config has no seed");
  std::filesystem::create_directories(out_dir);

  Trainer t;
  t.cfg = cfg;
  t.bundle = build_target(cfg);
  t.out_dir = out_dir;
  t.train_rng = Rng::derive(cfg.seed, kStreamTrain);

  const int d = t.bundle.d;
  const int k = t.bundle.k;

  if (t.needs_cond()) {
    t.cnet.emplace(d, k, cfg.hidden_width, cfg.residual_layers);
    if (cfg.mode == RunMode::kMleStage2) {
      const Checkpoint stage1 = load_checkpoint(cfg.stage1_checkpoint);
      restore_net(stage1, *t.cnet);
    } else {
      Rng init_rng = Rng::derive(cfg.seed, kStreamInitCond);
      t.cnet->init(init_rng);
    }
  }
  if (t.needs_marg()) {
    t.mnet.emplace(d, k, cfg.hidden_width, cfg.residual_layers);
    Rng init_rng = Rng::derive(cfg.seed, kStreamInitMarg);
    t.mnet->init(init_rng);
  }
  if (t.needs_buffer()) {
    t.buffer = GibbsBuffer::init(resolved_chain_count(cfg), d, k, resolved_block_size(cfg, d),
                                 cfg.seed, cfg.gibbs_restart_period);
  }
  if (t.needs_dataset()) {
    Rng data_rng = Rng::derive(cfg.seed, kStreamData);
    t.dataset = build_dataset(t.bundle, cfg.data_size, data_rng);
  }

  AdamConfig adam_cfg;
  adam_cfg.lr = cfg.lr;
  adam_cfg.beta1 = cfg.beta1;
  adam_cfg.beta2 = cfg.beta2;
  adam_cfg.epsilon = cfg.adam_epsilon;
  adam_cfg.clip_norm = cfg.grad_clip;
  t.adam = AdamState(adam_cfg);

  if (!resume_prefix.empty()) resume_state(t, resume_prefix);

  MetricsWriter metrics(out_dir + "/metrics.csv", cfg.run_id, cfg.deterministic_time,
                        cfg.metrics_jsonl ? out_dir + "/metrics.jsonl" : "");

  TrainOutcome outcome;
  StepMetrics last{};
  for (std::uint64_t step = t.start_step + 1; step <= cfg.steps; ++step) {
    try {
      last = do_step(t);
    } catch (const NumericError& e) {
      throw NumericError("training aborted at step " + std::to_string(step) + ": " + e.what());
    }
    const bool record = step % cfg.metrics_every == 0 || step == cfg.steps;
    if (record) {
      metrics.write(step, "loss", last.loss);
      if (last.has_consistency) metrics.write(step, "consistency_error", last.consistency);
      if (last.has_divergence) metrics.write(step, "divergence_sum", last.divergence_sum);
    }
    if (cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 && step != cfg.steps) {
      save_state(t, step);
    }
  }

  const SavedPaths paths = save_state(t, cfg.steps);
  outcome.final_step = cfg.steps;
  outcome.cond_checkpoint = paths.cond;
  outcome.marg_checkpoint = paths.marg;
  outcome.final_metrics["loss"] = last.loss;
  if (last.has_consistency) outcome.final_metrics["consistency_error"] = last.consistency;
  if (last.has_divergence) outcome.final_metrics["divergence_sum"] = last.divergence_sum;
  return outcome;
}

EvalReport evaluate_models(const RunConfig& cfg, const ConditionalNet* cnet,
                           const MarginalNet* mnet, const EvalOptions& options,
                           const std::string& out_dir) {
  if (cnet == nullptr && mnet == nullptr) {
    throw DomainError("evaluate_models: need at least one network");
  }
  const TargetBundle bundle = build_target(cfg);
  const int d = bundle.d;
  const int k = bundle.k;
  auto check_net = [&](int nd, int nk, const char* which) {
    if (nd != d || nk != k) {
      throw DomainError(std::string("evaluate_models: ") + which + " is " +
                        std::to_string(nd) + "/" + std::to_string(nk) +
                        ", target needs " + std::to_string(d) + "/" + std::to_string(k));
    }
  };
  if (cnet != nullptr) check_net(cnet->dim(), cnet->alphabet(), "conditional net");
  if (mnet != nullptr) check_net(mnet->dim(), mnet->alphabet(), "marginal net");

  std::filesystem::create_directories(out_dir);
  Rng rng = Rng::derive(cfg.seed, kStreamEval);
  EvalReport report;
  std::ostringstream text;

  // Held-out samples.
  std::vector<std::vector<int>> samples;
  if (!options.samples_path.empty()) {
    samples = load_samples(options.samples_path, k);
  } else {
    const std::size_t n = options.nll_samples > 0 ? options.nll_samples : cfg.eval_samples;
    samples = build_dataset(bundle, n, rng);
  }

  // NLL in bits per dimension.
  if (mnet != nullptr) {
    std::vector<AugmentedVector> rows;
    rows.reserve(samples.size());
    for (const auto& x : samples) rows.push_back(AugmentedVector::full(x, k));
    std::vector<double> logp = mnet->marg_logp(rows);
    const double log_z = mnet->log_z();
    for (double& lp : logp) lp -= log_z;
    report.metrics["nll_bpd_marg"] = nll_bits_per_dim(logp, d);
  }
  if (cnet != nullptr) {
    std::vector<AugmentedVector> rows;
    std::vector<Ordering> sigmas;
    for (const auto& x : samples) {
      rows.push_back(AugmentedVector::full(x, k));
      sigmas.push_back(sample_ordering(d, rng));
    }
    const std::vector<double> logp = chainrule_log_marginals(*cnet, rows, sigmas);
    report.metrics["nll_bpd_cond"] = nll_bits_per_dim(logp, d);
  }

  // Marginal queries: random prefixes of held-out samples.
  std::vector<AugmentedVector> queries;
  std::vector<Ordering> query_sigmas;
  const std::size_t n_queries = std::min(options.n_queries, samples.size());
  for (std::size_t i = 0; i < n_queries; ++i) {
    const std::vector<int>& x = samples[rng.uniform_below(samples.size())];
    const Ordering sigma = sample_ordering(d, rng);
    const int depth = 1 + static_cast<int>(rng.uniform_below(static_cast<std::uint64_t>(d)));
    queries.push_back(prefix(x, sigma, depth, k));
    query_sigmas.push_back(sigma);
  }

  std::vector<double> marg_vals;
  if (mnet != nullptr) {
    marg_vals = mnet->marg_logp(queries);
    const double log_z = mnet->log_z();
    for (double& v : marg_vals) v -= log_z;
  }
  std::vector<double> chain_vals;
  if (cnet != nullptr) {
    chain_vals = chainrule_log_marginals(*cnet, queries, query_sigmas);
  }
  auto try_correlation = [&](std::span<const double> ref, std::span<const double> other,
                             const std::string& name) {
    try {
      const Correlation c = correlation_prescreened(ref, other, options.prescreen_gap);
      report.metrics["marg_pearson_" + name] = c.pearson;
      report.metrics["marg_spearman_" + name] = c.spearman;
      report.metrics["marg_kept_" + name] = static_cast<double>(c.kept);
    } catch (const DomainError&) {
      text << "correlation " << name
           << " skipped: fewer than 3 usable reference values after pre-screening\n";
    }
  };
  if (mnet != nullptr && cnet != nullptr) {
    try_correlation(chain_vals, marg_vals, "vs_chainrule");
  }

  // Oracle columns only when the state space is enumerable.
  if (bundle.enumerable()) {
    const ExactTable table = enumerate_pmf(*bundle.target);
    std::vector<double> exact_vals;
    exact_vals.reserve(queries.size());
    for (const AugmentedVector& v : queries) exact_vals.push_back(exact_log_marginal(table, v));
    if (mnet != nullptr) try_correlation(exact_vals, marg_vals, "vs_exact");
    if (cnet != nullptr) try_correlation(exact_vals, chain_vals, "chainrule_vs_exact");
    if (mnet != nullptr) {
      // True KL against the enumerated normalizer, plus the Z_theta gap.
      std::vector<AugmentedVector> all_states;
      all_states.reserve(table.states());
      for (std::size_t idx = 0; idx < table.states(); ++idx) {
        all_states.push_back(
            AugmentedVector::full(state_from_index(idx, d, k), k));
      }
      std::vector<double> model_logp = mnet->marg_logp(all_states);
      const double lse = logsumexp_span(model_logp.data(), model_logp.size(), 1);
      for (double& lp : model_logp) lp -= lse;
      const double kl = exact_kl(table, [&](const std::vector<int>& x) {
        return model_logp[state_index(x, k)];
      });
      report.metrics["kl_exact"] = kl;
      report.metrics["z_gap"] = std::abs(lse - mnet->log_z());
    }
  } else {
    text << "oracle column unavailable: state space K^D exceeds 2^24\n";
  }

  // Consistency MSE on held-out constraints.
  {
    std::vector<ConsistencySample> constraints;
    for (std::size_t i = 0; i < std::max<std::size_t>(n_queries, 64); ++i) {
      constraints.push_back(sample_consistency_constraint(
          samples[rng.uniform_below(samples.size())], rng));
    }
    if (mnet != nullptr && cnet != nullptr) {
      report.metrics["consistency_mse"] = mean_consistency_error(*mnet, *cnet, constraints);
    } else if (mnet != nullptr) {
      report.metrics["consistency_mse_theta_only"] =
          mean_theta_only_consistency(*mnet, constraints);
    }
  }

  // Timing: single-pass vs D-pass on identical full-state queries.
  if (mnet != nullptr && cnet != nullptr) {
    std::vector<AugmentedVector> timing_queries;
    std::vector<Ordering> timing_sigmas;
    const std::size_t n_timing = std::min<std::size_t>(samples.size(), 32);
    for (std::size_t i = 0; i < n_timing; ++i) {
      timing_queries.push_back(AugmentedVector::full(samples[i], k));
      timing_sigmas.push_back(sample_ordering(d, rng));
    }
    const TimingReport timing = timing_marginal_inference(*mnet, *cnet, timing_queries,
                                                          timing_sigmas, options.timing_repeats);
    report.metrics["marginal_median_s"] = timing.marginal_median_s;
    report.metrics["chainrule_median_s"] = timing.chainrule_median_s;
    report.metrics["timing_ratio"] = timing.wallclock_ratio;
    report.metrics["nfe_chainrule"] = timing.nfe_chainrule;
    report.metrics["nfe_marginal"] = timing.nfe_marginal;
  }

  MetricsWriter writer(out_dir + "/eval_metrics.csv", cfg.run_id, cfg.deterministic_time);
  for (const auto& [name, value] : report.metrics) {
    writer.write(0, name, value);
    text << name << " = " << value << "\n";
  }
  report.text = text.str();
  return report;
}

}  // namespace mam
