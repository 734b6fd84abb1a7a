#include "encore/adam.hpp"

#include <cmath>

#include "encore/common.hpp"

namespace encore {

double lr_at(int64_t step, const AdamConfig& cfg) {
  check<DataError>(step >= 0, "lr_at: negative step ", step);
  if (step > cfg.total_steps) return 0.0;
  if (cfg.warmup_steps > 0 && step <= cfg.warmup_steps)
    return cfg.lr_peak * static_cast<double>(step) / cfg.warmup_steps;
  int64_t decay_span = cfg.total_steps - cfg.warmup_steps;
  if (decay_span <= 0) return cfg.lr_peak;
  return cfg.lr_peak * static_cast<double>(cfg.total_steps - step) / decay_span;
}

std::pair<std::vector<float>, std::vector<float>>& AdamState::slot(
    const std::string& name, int64_t size) {
  auto& s = slots[name];
  if (s.first.empty()) {
    s.first.assign(size, 0.0f);
    s.second.assign(size, 0.0f);
  }
  check<ShapeError>(static_cast<int64_t>(s.first.size()) == size,
                    "adam: slot '", name, "' size changed");
  return s;
}

void adam_step(std::vector<std::pair<std::string, Tensor>>& params,
               AdamState& state, double lr) {
  const AdamConfig& cfg = state.cfg;
  double sq_norm = 0.0;
  for (auto& [name, p] : params) {
    check<ShapeError>(p.has_grad(), "adam_step: parameter '", name,
                      "' has no gradient");
    for (float g : p.grad()) {
      check<NumericError>(std::isfinite(g), "adam_step: non-finite gradient in '",
                          name, "' at step ", state.t + 1);
      sq_norm += static_cast<double>(g) * g;
    }
  }
  double gnorm = std::sqrt(sq_norm);
  double clip_scale =
      (cfg.clip_norm > 0 && gnorm > cfg.clip_norm) ? cfg.clip_norm / gnorm : 1.0;

  state.t += 1;
  double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));

  for (auto& [name, p] : params) {
    auto& [m, v] = state.slot(name, p.numel());
    auto& w = p.data();
    const auto& grad = p.grad();
    for (int64_t i = 0; i < p.numel(); ++i) {
      if (cfg.weight_decay != 0.0)
        w[i] -= static_cast<float>(lr * cfg.weight_decay * w[i]);
      double g = static_cast<double>(grad[i]) * clip_scale;
      m[i] = static_cast<float>(cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g);
      v[i] = static_cast<float>(cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g);
      double mhat = m[i] / bc1;
      double vhat = v[i] / bc2;
      w[i] -= static_cast<float>(lr * mhat / (std::sqrt(vhat) + cfg.eps));
    }
  }
}

}  // namespace encore
