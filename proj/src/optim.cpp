#include "volnorm/optim.hpp"

#include <cmath>

#include "volnorm/errors.hpp"

namespace volnorm::tk {

void sgd_step(const std::vector<Tensor>& params, SgdState& state) {
  if (!(state.lr > 0.0f)) throw InvalidConfig("sgd: learning rate must be > 0");
  for (const auto& p : params) {
    Tensor t = p;
    t.values() -= state.lr * t.grad();
  }
  ++state.step;
}

void adam_step(const std::vector<Tensor>& params, AdamState& state) {
  if (!(state.lr > 0.0f)) {
    throw InvalidConfig("adam: learning rate must be > 0");
  }
  ++state.step;
  const float bc1 = 1.0f - std::pow(state.beta1, static_cast<float>(state.step));
  const float bc2 = 1.0f - std::pow(state.beta2, static_cast<float>(state.step));
  for (const auto& p : params) {
    Tensor t = p;
    auto& mom = state.moments[t.id()];
    if (mom.m.size() != t.numel()) {
      mom.m = Eigen::ArrayXf::Zero(t.numel());
      mom.v = Eigen::ArrayXf::Zero(t.numel());
    }
    mom.m = state.beta1 * mom.m + (1.0f - state.beta1) * t.grad();
    mom.v = state.beta2 * mom.v + (1.0f - state.beta2) * t.grad().square();
    t.values() -=
        state.lr * (mom.m / bc1) / ((mom.v / bc2).sqrt() + state.eps);
  }
}

}  // namespace volnorm::tk
