#include "mam/adam.hpp"

#include <cmath>

#include "mam/errors.hpp"

namespace mam {

void AdamState::restore(std::uint64_t step_count, std::vector<Tensor> m, std::vector<Tensor> v) {
  step_count_ = step_count;
  m_ = std::move(m);
  v_ = std::move(v);
}

void AdamState::step(const std::vector<Tensor*>& params,
                     const std::vector<const Tensor*>& grads) {
  if (params.size() != grads.size()) {
    throw ShapeError("adam_step: " + std::to_string(params.size()) + " params vs " +
                     std::to_string(grads.size()) + " grads");
  }
  if (m_.empty()) {
    for (const Tensor* p : params) {
      m_.push_back(Tensor::zeros(p->shape));
      v_.push_back(Tensor::zeros(p->shape));
    }
  }
  if (m_.size() != params.size()) {
    throw ShapeError("adam_step: moment count " + std::to_string(m_.size()) +
                     " does not match param count " + std::to_string(params.size()));
  }

  double sq_norm = 0.0;
  for (std::size_t i = 0; i < grads.size(); ++i) {
    check_same_shape(*params[i], *grads[i], "adam_step");
    check_same_shape(*params[i], m_[i], "adam_step (moments)");
    for (const double g : grads[i]->data) {
      if (!std::isfinite(g)) throw NumericError("adam_step: non-finite gradient");
      sq_norm += g * g;
    }
  }
  const double norm = std::sqrt(sq_norm);
  const double clip_scale =
      (cfg_.clip_norm > 0.0 && norm > cfg_.clip_norm) ? cfg_.clip_norm / norm : 1.0;

  step_count_ += 1;
  const double t = static_cast<double>(step_count_);
  const double bc1 = 1.0 - std::pow(cfg_.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg_.beta2, t);

  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    const Tensor& g = *grads[i];
    Tensor& m = m_[i];
    Tensor& v = v_[i];
    for (std::size_t j = 0; j < p.numel(); ++j) {
      const double gj = g.data[j] * clip_scale;
      m.data[j] = cfg_.beta1 * m.data[j] + (1.0 - cfg_.beta1) * gj;
      v.data[j] = cfg_.beta2 * v.data[j] + (1.0 - cfg_.beta2) * gj * gj;
      const double mhat = m.data[j] / bc1;
      const double vhat = v.data[j] / bc2;
      p.data[j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.epsilon);
    }
  }
}

}  // namespace mam
