#include "camflow/flow.hpp"

#include <cmath>
#include <string>

#include "camflow/errors.hpp"
#include "camflow/rng.hpp"

namespace camflow::flow {

NoisedSample forward_noise(const Tensor& z0, const Tensor& eps, double t) {
    if (!(t >= 0.0 && t <= 1.0)) throw ConfigError("forward_noise: t must lie in [0,1]");
    if (!z0.same_shape(eps)) throw ShapeError("forward_noise: shape mismatch");
    NoisedSample s;
    s.t = t;
    s.eps = eps;
    s.z_t = Tensor(z0.shape());
    for (int64_t i = 0; i < z0.numel(); ++i) s.z_t[i] = (1.0 - t) * z0[i] + t * eps[i];
    return s;
}

Tensor cfm_target(const Tensor& z0, const Tensor& eps) {
    if (!z0.same_shape(eps)) throw ShapeError("cfm_target: shape mismatch");
    Tensor u(z0.shape());
    for (int64_t i = 0; i < z0.numel(); ++i) u[i] = eps[i] - z0[i];
    return u;
}

double cfm_loss(const Tensor& v_pred, const Tensor& z0, const Tensor& eps) {
    if (!v_pred.same_shape(z0) || !z0.same_shape(eps))
        throw ShapeError("cfm_loss: shape mismatch");
    if (!v_pred.all_finite() || !z0.all_finite() || !eps.all_finite())
        throw NumericError("cfm_loss: non-finite input");
    double acc = 0.0;
    for (int64_t i = 0; i < v_pred.numel(); ++i) {
        const double d = v_pred[i] - (eps[i] - z0[i]);
        acc += d * d;
    }
    return acc / static_cast<double>(v_pred.numel());
}

Tensor euler_sample_from(const ModelFn& fn, Tensor z, int steps) {
    if (steps < 1) throw ConfigError("euler_sample: steps must be >= 1");
    const double dt = -1.0 / static_cast<double>(steps);
    double t = 1.0;
    for (int i = 0; i < steps; ++i) {
        const Tensor v = fn(z, t);
        if (!v.same_shape(z)) throw ShapeError("euler_sample: velocity shape mismatch");
        Tensor next(z.shape());
        for (int64_t j = 0; j < z.numel(); ++j) next[j] = z[j] + v[j] * dt;
        if (!next.all_finite())
            throw NumericError("euler_sample: non-finite state at step " + std::to_string(i));
        z = next;
        t += dt;
    }
    return z;
}

Tensor euler_sample(const ModelFn& fn, const std::vector<int64_t>& shape, int steps,
                    uint64_t seed) {
    Rng rng = stream(seed, 0xe91e4);
    return euler_sample_from(fn, Tensor::randn(shape, rng), steps);
}

}  // namespace camflow::flow
