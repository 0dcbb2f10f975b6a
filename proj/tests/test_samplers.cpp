#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>

#include "mam/oracle.hpp"
#include "mam/samplers.hpp"
#include "mam/targets.hpp"
#include "test_util.hpp"

using namespace mam;
using mam::testing::ExactTableCond;
using mam::testing::ExactTableMarg;

TEST_CASE("ancestral samples from a uniform net are uniform (chi-square)") {
  Rng rng(1);
  ConditionalNet net(3, 2, 16, 1);
  net.init(rng);  // uniform conditionals
  const int n = 50000;
  std::vector<Ordering> sigmas;
  Rng sig_rng(2);
  for (int i = 0; i < n; ++i) sigmas.push_back(sample_ordering(3, sig_rng));
  Rng draw_rng(3);
  const auto results = ancestral_sample_batch(net, sigmas, draw_rng);
  std::vector<int> counts(8, 0);
  for (const auto& r : results) counts[state_index(r.x, 2)] += 1;
  const double p = 1.0 / 8.0;
  const double three_sigma = 3.0 * std::sqrt(p * (1 - p) / n);
  for (const int c : counts) {
    CHECK(std::abs(static_cast<double>(c) / n - p) < three_sigma);
  }
}

TEST_CASE("accumulated ancestral log-prob equals the chain rule on the same path") {
  Rng rng(4);
  ConditionalNet net(5, 2, 24, 2);
  net.init(rng);
  Rng jitter(5);
  for (Tensor* p : net.mlp().params()) {
    for (double& v : p->data) v += 0.2 * jitter.normal();
  }
  Rng draw(6);
  for (int trial = 0; trial < 20; ++trial) {
    const Ordering sigma = sample_ordering(5, draw);
    const AncestralResult r = ancestral_sample(net, sigma, draw);
    const double via_chainrule =
        chainrule_log_marginal(net, AugmentedVector::full(r.x, 2), sigma);
    CHECK(r.log_prob == doctest::Approx(via_chainrule).epsilon(1e-12));
  }
}

TEST_CASE("ancestral sampling from exact conditionals reproduces the table") {
  Rng rng(7);
  const TableTarget target = TableTarget::random(4, 2, rng, 0.8);
  const ExactTable table = enumerate_pmf(target);
  const ExactTableCond cond(table);

  const int n = 100000;
  std::vector<Ordering> sigmas;
  for (int i = 0; i < n; ++i) sigmas.push_back(sample_ordering(4, rng));
  std::vector<std::vector<int>> samples;
  for (auto& r : ancestral_sample_batch(cond, sigmas, rng)) samples.push_back(std::move(r.x));

  std::vector<double> truth(16);
  for (std::size_t i = 0; i < 16; ++i) truth[i] = table.prob(i);
  CHECK(testing::total_variation(testing::empirical_state_probs(samples, 4, 2), truth) < 0.02);
}

TEST_CASE("sampling-path invariance: two fixed orderings agree at convergence") {
  Rng rng(8);
  const TableTarget target = TableTarget::random(4, 2, rng, 0.7);
  const ExactTable table = enumerate_pmf(target);
  const ExactTableCond cond(table);
  const int n = 100000;
  auto draw_all = [&](const Ordering& sigma, std::uint64_t seed) {
    Rng draw(seed);
    std::vector<Ordering> sigmas(static_cast<std::size_t>(n), sigma);
    std::vector<std::vector<int>> out;
    for (auto& r : ancestral_sample_batch(cond, sigmas, draw)) out.push_back(std::move(r.x));
    return testing::empirical_state_probs(out, 4, 2);
  };
  const auto p1 = draw_all(Ordering({0, 1, 2, 3}), 9);
  const auto p2 = draw_all(Ordering({3, 2, 0, 1}), 10);
  CHECK(testing::total_variation(p1, p2) < 0.03);
}

TEST_CASE("single-block marginal sampling is exact table sampling (shift-invariant)") {
  Rng rng(11);
  const TableTarget target = TableTarget::random(3, 2, rng, 0.9);
  const ExactTable table = enumerate_pmf(target);
  const ExactTableMarg marg(table, /*shift=*/5.3);  // constant offsets cancel

  const int n = 50000;
  std::vector<std::vector<int>> samples;
  const std::vector<std::vector<int>> one_block = {{0, 1, 2}};
  for (int i = 0; i < n; ++i) samples.push_back(marginal_block_sample(marg, one_block, rng));
  std::vector<double> truth(8);
  for (std::size_t i = 0; i < 8; ++i) truth[i] = table.prob(i);
  CHECK(testing::total_variation(testing::empirical_state_probs(samples, 3, 2), truth) < 0.02);
}

TEST_CASE("block-1 marginal sampling matches ancestral sampling from consistent models") {
  Rng rng(12);
  const TableTarget target = TableTarget::random(4, 2, rng, 0.8);
  const ExactTable table = enumerate_pmf(target);
  const ExactTableCond cond(table);
  const ExactTableMarg marg(table, 1.7);

  const int n = 50000;
  Rng marg_rng(13);
  const auto block_samples = marginal_block_sample_batch(marg, 1, n, marg_rng);
  Rng anc_rng(14);
  std::vector<Ordering> sigmas;
  for (int i = 0; i < n; ++i) sigmas.push_back(sample_ordering(4, anc_rng));
  std::vector<std::vector<int>> anc_samples;
  for (auto& r : ancestral_sample_batch(cond, sigmas, anc_rng)) {
    anc_samples.push_back(std::move(r.x));
  }
  CHECK(testing::total_variation(testing::empirical_state_probs(block_samples, 4, 2),
                                 testing::empirical_state_probs(anc_samples, 4, 2)) < 0.05);
}

TEST_CASE("marginal block sampling validates its inputs") {
  Rng rng(15);
  const TableTarget target = TableTarget::random(3, 2, rng);
  const ExactTableMarg marg(enumerate_pmf(target));
  CHECK_THROWS_AS(marginal_block_sample(marg, {{0, 1}}, rng), DomainError);         // not a partition
  CHECK_THROWS_AS(marginal_block_sample(marg, {{0, 0, 1, 2}}, rng), DomainError);   // duplicate
  CHECK_THROWS_AS(marginal_block_sample(marg, {{0, 1, 2, 3}}, rng), DomainError);   // out of range
  CHECK_THROWS_AS(blocks_from_ordering(Ordering::identity(3), 0), DomainError);

  // K^m cap: a 17-position block over K=2 would need 2^17 > 2^16 rows
  MarginalNet wide(17, 2, 8, 1);
  Rng init(1);
  wide.init(init);
  CHECK_THROWS_AS(marginal_block_sample_batch(wide, 17, 1, rng), DomainError);
}

TEST_CASE("gibbs step: at most M coordinates change; M=D forgets the state") {
  Rng rng(16);
  const TableTarget target = TableTarget::random(4, 2, rng, 0.8);
  const ExactTable table = enumerate_pmf(target);
  const ExactTableCond cond(table);

  GibbsBuffer buffer = GibbsBuffer::init(64, 4, 2, 2, 17);
  for (int step = 0; step < 20; ++step) {
    const auto before = buffer.chains;
    gibbs_step(buffer, cond);
    for (std::size_t c = 0; c < buffer.chains.size(); ++c) {
      int hamming = 0;
      for (int j = 0; j < 4; ++j) {
        hamming += before[c][static_cast<std::size_t>(j)] !=
                   buffer.chains[c][static_cast<std::size_t>(j)];
      }
      CHECK(hamming <= 2);
    }
  }

  // M = D: one step is a full ancestral resample regardless of the start
  GibbsBuffer full = GibbsBuffer::init(4000, 4, 2, 4, 18);
  for (auto& chain : full.chains) chain.assign(4, 0);  // pathological start
  gibbs_step(full, cond);
  std::vector<double> truth(16);
  for (std::size_t i = 0; i < 16; ++i) truth[i] = table.prob(i);
  CHECK(testing::total_variation(testing::empirical_state_probs(full.chains, 4, 2), truth) <
        0.05);
}

TEST_CASE("gibbs chains are stationary on an exact D=4 table") {
  Rng rng(19);
  const TableTarget target = TableTarget::random(4, 2, rng, 0.8);
  const ExactTable table = enumerate_pmf(target);
  const ExactTableCond cond(table);

  GibbsBuffer buffer = GibbsBuffer::init(100, 4, 2, 1, 20);
  std::vector<std::vector<int>> visits;
  const int total_steps = 2000;
  for (int step = 0; step < total_steps; ++step) {
    gibbs_step(buffer, cond);
    if (step >= 500) {
      for (const auto& chain : buffer.chains) visits.push_back(chain);
    }
  }
  std::vector<double> truth(16);
  for (std::size_t i = 0; i < 16; ++i) truth[i] = table.prob(i);
  CHECK(testing::total_variation(testing::empirical_state_probs(visits, 4, 2), truth) < 0.05);
}

TEST_CASE("marginal-flavor gibbs matches the table too") {
  Rng rng(21);
  const TableTarget target = TableTarget::random(3, 2, rng, 0.8);
  const ExactTable table = enumerate_pmf(target);
  const ExactTableMarg marg(table, -2.4);

  GibbsBuffer buffer = GibbsBuffer::init(100, 3, 2, 1, 22);
  std::vector<std::vector<int>> visits;
  for (int step = 0; step < 1500; ++step) {
    gibbs_step_marginal(buffer, marg);
    if (step >= 400) {
      for (const auto& chain : buffer.chains) visits.push_back(chain);
    }
  }
  std::vector<double> truth(8);
  for (std::size_t i = 0; i < 8; ++i) truth[i] = table.prob(i);
  CHECK(testing::total_variation(testing::empirical_state_probs(visits, 3, 2), truth) < 0.05);
}

TEST_CASE("ground-truth gibbs: independent sites are uniform") {
  IsingTarget target(2, 0.0, 0.0);
  Rng rng(23);
  const auto samples = ground_truth_gibbs(target, 400000, 20000, rng);
  CHECK(samples.size() == 20000);
  const auto probs = testing::empirical_state_probs(samples, 4, 2);
  std::vector<double> uniform(16, 1.0 / 16.0);
  CHECK(testing::total_variation(probs, uniform) < 0.03);
}

TEST_CASE("strong coupling pins the chain to the two aligned states") {
  IsingTarget target(2, 5.0, 0.0);
  // enumeration confirms the aligned states carry essentially all mass
  const ExactTable table = enumerate_pmf(target);
  const double aligned = table.prob({0, 0, 0, 0}) + table.prob({1, 1, 1, 1});
  CHECK(aligned > 0.999);

  Rng rng(24);
  const auto samples = ground_truth_gibbs(target, 200000, 5000, rng);
  int aligned_count = 0;
  for (const auto& x : samples) {
    const int mag = x[0] + x[1] + x[2] + x[3];
    aligned_count += (mag == 0 || mag == 4);
  }
  CHECK(static_cast<double>(aligned_count) / static_cast<double>(samples.size()) > 0.99);
}

TEST_CASE("4x4 ising energies match the enumeration-weighted distribution (KS)") {
  IsingTarget target(4, 0.1, 0.2);
  const ExactTable table = enumerate_pmf(target);

  // exact energy distribution
  std::map<double, double> exact_energy_mass;
  for (std::size_t idx = 0; idx < table.states(); ++idx) {
    exact_energy_mass[target.log_f(state_from_index(idx, 16, 2))] += table.prob(idx);
  }

  Rng rng(25);
  const std::size_t kept = 100000;
  const auto samples = ground_truth_gibbs(target, 6400000, kept, rng);
  std::map<double, double> empirical_mass;
  for (const auto& x : samples) {
    empirical_mass[target.log_f(x)] += 1.0 / static_cast<double>(kept);
  }

  double ks = 0.0, exact_cdf = 0.0, empirical_cdf = 0.0;
  for (const auto& [energy, mass] : exact_energy_mass) {
    exact_cdf += mass;
    const auto it = empirical_mass.find(energy);
    // walk the empirical CDF up to this energy
    empirical_cdf = 0.0;
    for (const auto& [e2, m2] : empirical_mass) {
      if (e2 <= energy) empirical_cdf += m2;
    }
    ks = std::max(ks, std::abs(exact_cdf - empirical_cdf));
    (void)it;
  }
  CHECK(ks < 0.05);
}

TEST_CASE("sample files round-trip") {
  namespace fs = std::filesystem;
  const std::string path = fs::temp_directory_path() / "mam_samples_test.txt";
  const std::vector<std::vector<int>> samples = {{0, 1, 1}, {1, 0, 0}, {1, 1, 1}};
  save_samples(path, samples);
  CHECK(load_samples(path, 2) == samples);
  std::ofstream bad(path);
  bad << "012\n";
  bad.close();
  CHECK_THROWS_AS(load_samples(path, 2), IoError);
  fs::remove(path);
}

TEST_CASE("gibbs buffer validation and determinism") {
  CHECK_THROWS_AS(GibbsBuffer::init(0, 4, 2, 1, 1), DomainError);
  CHECK_THROWS_AS(GibbsBuffer::init(4, 4, 2, 0, 1), DomainError);
  CHECK_THROWS_AS(GibbsBuffer::init(4, 4, 2, 5, 1), DomainError);

  Rng rng(26);
  const TableTarget target = TableTarget::random(3, 2, rng);
  const ExactTableCond cond(enumerate_pmf(target));
  GibbsBuffer a = GibbsBuffer::init(8, 3, 2, 1, 42);
  GibbsBuffer b = GibbsBuffer::init(8, 3, 2, 1, 42);
  for (int step = 0; step < 10; ++step) {
    gibbs_step(a, cond);
    gibbs_step(b, cond);
  }
  CHECK(a.chains == b.chains);
}
