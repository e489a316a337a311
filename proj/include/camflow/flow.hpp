#pragma once

#include <functional>
#include <vector>

#include "camflow/tensor.hpp"

namespace camflow::flow {

struct NoisedSample {
    Tensor z_t;
    double t = 0.0;
    Tensor eps;  // retained for the loss target
};

// z_t = (1 - t) z0 + t eps; t outside [0,1] is a domain error.
NoisedSample forward_noise(const Tensor& z0, const Tensor& eps, double t);

// Path derivative eps - z0.
Tensor cfm_target(const Tensor& z0, const Tensor& eps);

// Mean squared error of v_pred against cfm_target(z0, eps).
double cfm_loss(const Tensor& v_pred, const Tensor& z0, const Tensor& eps);

using ModelFn = std::function<Tensor(const Tensor& z, double t)>;

// Integrates dz = v dt from t=1 (pure noise, drawn from `seed`) to t=0 with
// uniform steps dt = -1/steps. Conditions live inside `fn`, reapplied at
// every step. Throws NumericError naming the failing step on non-finite
// state.
Tensor euler_sample(const ModelFn& fn, const std::vector<int64_t>& shape, int steps,
                    uint64_t seed);

// Same, but from a caller-supplied initial noise state.
Tensor euler_sample_from(const ModelFn& fn, Tensor z, int steps);

}  // namespace camflow::flow
