#pragma once

#include <cstdint>
#include <vector>

#include "mam/tensor.hpp"

namespace mam {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // Global-norm gradient clip applied before the update; <= 0 disables.
  double clip_norm = 100.0;
};

// Adam with bias correction. Moment tensors are created on the first step and
// must shape-match the parameters on every later step.
class AdamState {
 public:
  AdamState() = default;
  explicit AdamState(AdamConfig cfg) : cfg_(cfg) {}

  // Updates params in place. Throws NumericError on non-finite gradients
  // (caller may catch and skip the step).
  void step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads);

  std::uint64_t step_count() const { return step_count_; }
  const AdamConfig& config() const { return cfg_; }

  // Serialization access; moments are ordered like the params passed to step().
  std::vector<Tensor>& moments_m() { return m_; }
  std::vector<Tensor>& moments_v() { return v_; }
  const std::vector<Tensor>& moments_m() const { return m_; }
  const std::vector<Tensor>& moments_v() const { return v_; }
  void restore(std::uint64_t step_count, std::vector<Tensor> m, std::vector<Tensor> v);

 private:
  AdamConfig cfg_;
  std::uint64_t step_count_ = 0;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
};

}  // namespace mam
