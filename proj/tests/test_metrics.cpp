#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "mam/metrics.hpp"
#include "mam/objectives.hpp"
#include "mam/oracle.hpp"
#include "mam/targets.hpp"
#include "test_util.hpp"

using namespace mam;

TEST_CASE("uniform binary model scores exactly 1 bpd") {
  const std::vector<double> logp(100, -8.0 * std::log(2.0));
  CHECK(nll_bits_per_dim(logp, 8) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("nll is invariant to batch order and partitioning") {
  Rng rng(1);
  std::vector<double> logp;
  for (int i = 0; i < 64; ++i) logp.push_back(-5.0 + rng.normal());
  const double whole = nll_bits_per_dim(logp, 4);

  std::vector<double> shuffled = logp;
  for (std::size_t i = shuffled.size() - 1; i > 0; --i) {
    std::swap(shuffled[i], shuffled[rng.uniform_below(i + 1)]);
  }
  CHECK(nll_bits_per_dim(shuffled, 4) == doctest::Approx(whole).epsilon(1e-13));

  const std::span<const double> all(logp);
  const double first = nll_bits_per_dim(all.subspan(0, 32), 4);
  const double second = nll_bits_per_dim(all.subspan(32), 4);
  CHECK(0.5 * (first + second) == doctest::Approx(whole).epsilon(1e-13));
}

TEST_CASE("correlation basics") {
  const std::vector<double> a = {1.0, 2.5, 4.0, 8.0, -3.0};
  const Correlation self = correlation(a, a);
  CHECK(self.pearson == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(self.spearman == doctest::Approx(1.0).epsilon(1e-12));

  std::vector<double> affine;
  for (const double x : a) affine.push_back(2.0 * x + 3.0);
  const Correlation aff = correlation(a, affine);
  CHECK(aff.pearson == doctest::Approx(1.0).epsilon(1e-12));

  std::vector<double> monotone;
  for (const double x : a) monotone.push_back(std::exp(x));
  const Correlation mono = correlation(a, monotone);
  CHECK(mono.spearman == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(mono.pearson < 1.0);

  const std::vector<double> flat = {2.0, 2.0, 2.0, 2.0, 2.0};
  CHECK_THROWS_AS(correlation(a, flat), DomainError);
  const std::vector<double> two = {1.0, 2.0};
  CHECK_THROWS_AS(correlation(two, two), DomainError);
  const std::vector<double> three = {1.0, 2.0, 3.0};
  CHECK_THROWS_AS(correlation(a, three), DomainError);
}

TEST_CASE("pre-screening drops reference values that sit too close") {
  const std::vector<double> reference = {0.0, 0.1, 5.0, 5.5, 10.0, 10.3, -7.0};
  const std::vector<double> other = {0.2, 0.4, 5.1, 5.4, 9.8, 10.0, -6.5};
  const Correlation c = correlation_prescreened(reference, other, 2.0);
  CHECK(c.kept == 4);  // -7, 0, 5, 10 survive
  CHECK(c.pearson > 0.99);
}

TEST_CASE("grad variance probe: deterministic draws give zero variance") {
  const VarianceProbe probe = grad_variance_probe([] { return 3.25; }, 50);
  CHECK(probe.variance == 0.0);
  CHECK(probe.mean == doctest::Approx(3.25));
  CHECK_THROWS_AS(grad_variance_probe([] { return 0.0; }, 10), DomainError);
}

namespace {

class FnTarget : public TargetDistribution {
 public:
  FnTarget(int d, int k, std::function<double(const std::vector<int>&)> fn)
      : d_(d), k_(k), fn_(std::move(fn)) {}
  int dim() const override { return d_; }
  int alphabet() const override { return k_; }
  double log_f(const std::vector<int>& x) const override { return fn_(x); }

 private:
  int d_;
  int k_;
  std::function<double(const std::vector<int>&)> fn_;
};

}  // namespace

TEST_CASE("estimator variance shrinks like 1/B") {
  Rng rng(2);
  MarginalNet mnet(3, 2, 16, 1);
  mnet.init(rng);
  Rng jitter(3);
  for (Tensor* p : mnet.mlp().params()) {
    for (double& v : p->data) v += 0.3 * jitter.normal();
  }
  const FnTarget target(3, 2, [](const std::vector<int>& x) {
    return 1.3 * x[0] - 0.7 * x[1] + 0.4 * x[2];
  });

  Rng draw_rng(4);
  auto variance_at = [&](std::size_t batch) {
    EBConfig cfg;
    cfg.batch_size = batch;
    const VarianceProbe probe = grad_variance_probe(
        [&] {
          std::vector<std::vector<int>> samples;
          for (std::size_t i = 0; i < batch; ++i) {
            std::vector<int> x(3);
            for (auto& v : x) v = static_cast<int>(draw_rng.uniform_below(2));
            samples.push_back(std::move(x));
          }
          return reinforce_kl_grad(mnet, samples, target, cfg).grad_norm();
        },
        120);
    return probe.variance;
  };

  const double v8 = variance_at(8);
  const double v32 = variance_at(32);
  const double v128 = variance_at(128);
  CHECK(v8 / v32 > 2.0);
  CHECK(v8 / v32 < 8.0);
  CHECK(v32 / v128 > 2.0);
  CHECK(v32 / v128 < 8.0);
}

TEST_CASE("timing reports the exact NFE ratio and a positive wall-clock gap") {
  Rng rng(5);
  const int d = 30;
  ConditionalNet cnet(d, 2, 64, 2);
  MarginalNet mnet(d, 2, 64, 2);
  cnet.init(rng);
  mnet.init(rng);

  std::vector<AugmentedVector> queries;
  std::vector<Ordering> sigmas;
  for (int i = 0; i < 8; ++i) {
    std::vector<int> x(static_cast<std::size_t>(d));
    for (auto& v : x) v = static_cast<int>(rng.uniform_below(2));
    queries.push_back(AugmentedVector::full(x, 2));
    sigmas.push_back(sample_ordering(d, rng));
  }
  const TimingReport report = timing_marginal_inference(mnet, cnet, queries, sigmas, 20);
  CHECK(report.nfe_chainrule == doctest::Approx(static_cast<double>(d)));
  CHECK(report.nfe_marginal == 1.0);
  CHECK(report.marginal_median_s > 0.0);
  CHECK(report.wallclock_ratio > 2.0);
  CHECK_THROWS_AS(timing_marginal_inference(mnet, cnet, queries, sigmas, 5), DomainError);
}

TEST_CASE("metrics CSV: fixed header, deterministic mode is byte-identical") {
  namespace fs = std::filesystem;
  const std::string dir = fs::temp_directory_path() / "mam_metrics_test";
  fs::create_directories(dir);
  auto write_run = [&](const std::string& name) {
    MetricsWriter w(dir + "/" + name, "runA", /*deterministic_time=*/true,
                    dir + "/" + name + ".jsonl");
    w.write(1, "loss", 0.5);
    w.write(2, "loss", 0.25);
    w.write(2, "kl_exact", 1.0 / 3.0);
  };
  write_run("a.csv");
  write_run("b.csv");

  auto slurp = [](const std::string& path) {
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  const std::string a = slurp(dir + "/a.csv");
  CHECK(a == slurp(dir + "/b.csv"));
  CHECK(a.substr(0, a.find('\n')) == "run_id,step,metric,value,unix_millis");
  CHECK(a.find("runA,2,kl_exact,0.33333333333333331,0") != std::string::npos);

  // names outside the fixed registry are rejected
  MetricsWriter strict(dir + "/c.csv", "runA", true);
  CHECK_THROWS_AS(strict.write(1, "my_new_metric", 1.0), DomainError);

  std::ifstream jsonl(dir + "/a.csv.jsonl");
  int lines = 0;
  std::string line;
  while (std::getline(jsonl, line)) ++lines;
  CHECK(lines == 3);
  fs::remove_all(dir);
}
