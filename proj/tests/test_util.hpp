#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <vector>

#include "mam/graph.hpp"
#include "mam/nets.hpp"
#include "mam/oracle.hpp"
#include "mam/tensor.hpp"

namespace mam::testing {

// Max relative error between reverse-mode gradients and central finite
// differences (h = 1e-5) of a scalar loss over the given parameter tensors.
// `build` must construct the loss from the current parameter values.
inline double fd_max_rel_error(std::vector<Tensor*> params,
                               const std::function<Graph::NodeId(Graph&)>& build,
                               double h = 1e-5) {
  Graph g;
  const Graph::NodeId root = build(g);
  g.backward(root);
  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (const Tensor* p : params) analytic.push_back(g.grad_for(p));

  // Coordinates whose true gradient is far below the gradient's overall scale
  // carry only finite-difference roundoff; compare those against an absolute
  // floor tied to that scale instead of to themselves.
  double grad_scale = 1e-6;
  for (const Tensor& t : analytic) {
    for (const double v : t.data) grad_scale = std::max(grad_scale, std::abs(v));
  }
  const double floor = 1e-4 * grad_scale;

  auto loss_value = [&]() {
    Graph fresh;
    return fresh.value(build(fresh)).item();
  };

  double worst = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& p = *params[pi];
    for (std::size_t i = 0; i < p.numel(); ++i) {
      const double saved = p.data[i];
      p.data[i] = saved + h;
      const double up = loss_value();
      p.data[i] = saved - h;
      const double down = loss_value();
      p.data[i] = saved;
      const double fd = (up - down) / (2.0 * h);
      const double ad = analytic[pi].data[i];
      const double denom = std::max({std::abs(fd), std::abs(ad), floor});
      worst = std::max(worst, std::abs(fd - ad) / denom);
    }
  }
  return worst;
}

// Exact any-order conditionals computed from an enumerated table. Masked
// positions get the true conditional given the unmasked entries; unmasked
// positions get the leave-one-out conditional (consumers only read masked
// rows).
class ExactTableCond : public CondModel {
 public:
  explicit ExactTableCond(ExactTable table) : table_(std::move(table)) {}

  int dim() const override { return table_.d; }
  int alphabet() const override { return table_.k; }

  Tensor cond_logprobs(std::span<const AugmentedVector> batch) const override {
    const std::size_t width =
        static_cast<std::size_t>(table_.d) * static_cast<std::size_t>(table_.k);
    Tensor out = Tensor::zeros({batch.size(), width});
    for (std::size_t i = 0; i < batch.size(); ++i) {
      for (int pos = 0; pos < table_.d; ++pos) {
        AugmentedVector v = batch[i];
        if (!v.is_masked(pos)) v.entries[static_cast<std::size_t>(pos)] = kMask;
        for (int val = 0; val < table_.k; ++val) {
          out.data[i * width + static_cast<std::size_t>(pos) * static_cast<std::size_t>(table_.k) +
                   static_cast<std::size_t>(val)] =
              exact_log_conditional(table_, v, pos, val);
        }
      }
    }
    return out;
  }

 private:
  ExactTable table_;
};

// Exact marginals (optionally shifted by a constant, mimicking the learned
// nets' unnormalized outputs).
class ExactTableMarg : public MargModel {
 public:
  explicit ExactTableMarg(ExactTable table, double shift = 0.0)
      : table_(std::move(table)), shift_(shift) {}

  int dim() const override { return table_.d; }
  int alphabet() const override { return table_.k; }

  std::vector<double> marg_logp(std::span<const AugmentedVector> batch) const override {
    std::vector<double> out;
    out.reserve(batch.size());
    for (const AugmentedVector& v : batch) {
      out.push_back(exact_log_marginal(table_, v) + shift_);
    }
    return out;
  }

 private:
  ExactTable table_;
  double shift_;
};

// Total variation distance between two empirical/state distributions given as
// per-state probabilities.
inline double total_variation(std::span<const double> p, std::span<const double> q) {
  double tv = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) tv += std::abs(p[i] - q[i]);
  return 0.5 * tv;
}

inline std::vector<double> empirical_state_probs(const std::vector<std::vector<int>>& samples,
                                                 int d, int k) {
  std::size_t states = 1;
  for (int i = 0; i < d; ++i) states *= static_cast<std::size_t>(k);
  std::vector<double> probs(states, 0.0);
  for (const std::vector<int>& x : samples) probs[state_index(x, k)] += 1.0;
  for (double& p : probs) p /= static_cast<double>(samples.size());
  return probs;
}

}  // namespace mam::testing
