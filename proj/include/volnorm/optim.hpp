#pragma once

#include <Eigen/Core>
#include <unordered_map>
#include <vector>

#include "volnorm/tensor.hpp"

namespace volnorm::tk {

/// Plain gradient descent: p <- p - lr * grad.
struct SgdState {
  float lr = 1e-3f;
  long step = 0;
};

void sgd_step(const std::vector<Tensor>& params, SgdState& state);

/// Adam with the standard moment decays. First/second moment buffers are
/// keyed to parameter identity and shape-match their parameters.
struct AdamState {
  float lr = 1e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
  long step = 0;

  struct Moments {
    Eigen::ArrayXf m, v;
  };
  std::unordered_map<const void*, Moments> moments;
};

void adam_step(const std::vector<Tensor>& params, AdamState& state);

}  // namespace volnorm::tk
