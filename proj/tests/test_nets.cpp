#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mam/adam.hpp"
#include "mam/nets.hpp"
#include "mam/objectives.hpp"
#include "mam/oracle.hpp"
#include "mam/targets.hpp"
#include "test_util.hpp"

using namespace mam;

namespace {

std::vector<AugmentedVector> all_augmented(int d, int k) {
  std::vector<AugmentedVector> out;
  std::size_t combos = 1;
  for (int i = 0; i < d; ++i) combos *= static_cast<std::size_t>(k + 1);
  std::vector<int> entries(static_cast<std::size_t>(d));
  for (std::size_t c = 0; c < combos; ++c) {
    std::size_t rest = c;
    for (int i = 0; i < d; ++i) {
      entries[static_cast<std::size_t>(i)] =
          static_cast<int>(rest % static_cast<std::size_t>(k + 1)) - 1;
      rest /= static_cast<std::size_t>(k + 1);
    }
    out.emplace_back(entries, k);
  }
  return out;
}

}  // namespace

TEST_CASE("fresh conditional net outputs uniform rows everywhere") {
  Rng rng(1);
  ConditionalNet net(4, 3, 32, 2);
  net.init(rng);  // final layer starts at zero
  const auto inputs = all_augmented(4, 3);
  const Tensor logp = net.cond_logprobs(std::span(inputs.data(), 16));
  for (const double v : logp.data) {
    CHECK(v == doctest::Approx(-std::log(3.0)).epsilon(1e-15));
  }
}

TEST_CASE("conditional rows normalize to log-sum-exp zero") {
  Rng rng(2);
  ConditionalNet net(5, 2, 64, 3);
  net.init(rng);
  // push the output layer off zero so rows are not trivially uniform
  Rng jitter(3);
  for (Tensor* p : net.mlp().params()) {
    for (double& v : p->data) v += 0.05 * jitter.normal();
  }
  const auto inputs = all_augmented(5, 2);
  const Tensor logp = net.cond_logprobs(inputs);
  for (std::size_t row = 0; row < inputs.size(); ++row) {
    for (int pos = 0; pos < 5; ++pos) {
      const double lse =
          logsumexp_span(logp.data.data() + row * 10 + static_cast<std::size_t>(pos) * 2, 2, 1);
      CHECK(std::abs(lse) < 1e-12);
    }
  }
}

TEST_CASE("conditional rows are valid distributions (exhaustive D=6, K=2)") {
  Rng rng(4);
  ConditionalNet net(6, 2, 48, 2);
  net.init(rng);
  Rng jitter(5);
  for (Tensor* p : net.mlp().params()) {
    for (double& v : p->data) v += 0.1 * jitter.normal();
  }
  const auto inputs = all_augmented(6, 2);  // 3^6 = 729
  const Tensor logp = net.cond_logprobs(inputs);
  for (std::size_t row = 0; row < inputs.size(); ++row) {
    for (int pos = 0; pos < 6; ++pos) {
      double sum = 0.0;
      for (int v = 0; v < 2; ++v) {
        sum += std::exp(logp.data[row * 12 + static_cast<std::size_t>(pos) * 2 +
                                  static_cast<std::size_t>(v)]);
      }
      CHECK(std::abs(sum - 1.0) < 1e-10);
    }
  }
}

TEST_CASE("fresh marginal net outputs zero; identical inputs give identical outputs") {
  Rng rng(6);
  MarginalNet net(4, 2, 32, 2);
  net.init(rng);
  const AugmentedVector v({0, kMask, 1, kMask}, 2);
  CHECK(net.marg_logp_one(v) == 0.0);

  // normalization identity: the all-mask input scores 0 after subtracting Z
  CHECK(net.marg_logp_one(AugmentedVector::all_mask(4, 2)) - net.log_z() == 0.0);

  Rng jitter(7);
  for (Tensor* p : net.mlp().params()) {
    for (double& v2 : p->data) v2 += 0.1 * jitter.normal();
  }
  // marginals depend on the mask pattern, not on which ordering produced it
  const std::vector<int> x = {0, 1, 1, 0};
  const AugmentedVector via_sigma1 = prefix(x, Ordering({0, 2, 1, 3}), 2, 2);
  const AugmentedVector via_sigma2 = prefix(x, Ordering({2, 0, 3, 1}), 2, 2);
  CHECK(via_sigma1 == via_sigma2);
  CHECK(net.marg_logp_one(via_sigma1) == net.marg_logp_one(via_sigma2));
}

TEST_CASE("both networks stay finite over all 3^10 augmented binary inputs") {
  Rng rng(8);
  ConditionalNet cnet(10, 2, 32, 2);
  MarginalNet mnet(10, 2, 32, 2);
  cnet.init(rng);
  mnet.init(rng);
  Rng jitter(9);
  for (Tensor* p : cnet.mlp().params()) {
    for (double& v : p->data) v += 0.2 * jitter.normal();
  }
  for (Tensor* p : mnet.mlp().params()) {
    for (double& v : p->data) v += 0.2 * jitter.normal();
  }
  const auto inputs = all_augmented(10, 2);  // 59049
  const std::size_t chunk = 8192;
  for (std::size_t begin = 0; begin < inputs.size(); begin += chunk) {
    const std::size_t n = std::min(chunk, inputs.size() - begin);
    const std::span<const AugmentedVector> batch(inputs.data() + begin, n);
    CHECK(cnet.cond_logprobs(batch).all_finite());
    for (const double v : mnet.marg_logp(batch)) CHECK(std::isfinite(v));
  }
}

TEST_CASE("invalid MlpConfig is rejected") {
  CHECK_THROWS_AS(Mlp(MlpConfig{0, 8, 1, 4}), DomainError);
  CHECK_THROWS_AS(Mlp(MlpConfig{4, 0, 1, 4}), DomainError);
}

TEST_CASE("trained D=2 conditional learns x2 == x1") {
  // target: equal mass on (0,0) and (1,1)
  TableTarget table(2, 2, {1.0, 0.0, 0.0, 1.0});
  const ExactTable exact = enumerate_pmf(table);
  const ExactSampler sampler(exact);

  Rng rng(10);
  ConditionalNet net(2, 2, 32, 1);
  net.init(rng);
  AdamConfig opt;
  opt.lr = 3e-3;
  AdamState adam(opt);
  for (int step = 0; step < 400; ++step) {
    std::vector<std::vector<int>> batch;
    for (int i = 0; i < 64; ++i) batch.push_back(sampler.sample(rng));
    Graph g;
    const auto loss = aoarm_lower_bound_loss(g, net, batch, rng);
    g.backward(loss);
    std::vector<Tensor*> params = net.mlp().params();
    std::vector<const Tensor*> grads;
    for (Tensor* p : params) grads.push_back(&g.grad_for(p));
    adam.step(params, grads);
  }
  for (int x1 = 0; x1 < 2; ++x1) {
    const AugmentedVector v({x1, kMask}, 2);
    const Tensor logp = net.cond_logprobs_one(v);
    // row 1 = log p(x2 = . | x1)
    CHECK(logp.data[2 + static_cast<std::size_t>(x1)] > -0.05);
  }
}
