#pragma once

#include <cstdint>

#include <Eigen/Core>

#include "lorentzfm/geometry.hpp"
#include "lorentzfm/model.hpp"

namespace lfm {

// RSGD has no state beyond these knobs; in particular there is no weight
// decay on the hyperboloid (the bounded score makes it unnecessary and it
// would drag embeddings toward the origin).
struct RsgdConfig {
    double learning_rate = 0.1;
    int burn_in_epochs = 25;
    double burn_in_factor = 0.1;
};

// learning_rate * burn_in_factor during the burn-in epochs, learning_rate
// afterwards.
double effective_lr(int epoch, const RsgdConfig& cfg);

// Riemannian gradient: flip the sign of the time component (inverse
// Lorentz metric), then project orthogonally onto the tangent space at x.
template <typename DX, typename DG>
Vector riemannian_grad(const Eigen::MatrixBase<DX>& x, const Eigen::MatrixBase<DG>& g) {
    Vector h = detail::as_column(g);
    h[0] = -h[0];
    return tangent_project(x, h);
}

// One RSGD update: exp_x(-lr * riemannian_grad(x, g)), then the time
// component is recomputed from the spatial part so float drift never
// accumulates across steps.
template <typename DX, typename DG>
Vector rsgd_step(const Eigen::MatrixBase<DX>& x, const Eigen::MatrixBase<DG>& g, double lr) {
    if (!(lr > 0.0)) {
        throw ConfigError("rsgd_step: learning rate must be positive");
    }
    if (!g.allFinite()) {
        throw NumericError("rsgd_step: non-finite gradient, step rejected");
    }
    const Vector tangent = riemannian_grad(x, g) * (-lr);
    return relift(exp_map(x, tangent));
}

struct AdamConfig {
    double learning_rate = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-5;  // decoupled L2, FM parameters only
};

struct AdamState {
    std::int64_t step = 0;
    double m_bias = 0.0;
    double v_bias = 0.0;
    Eigen::VectorXd m_linear;
    Eigen::VectorXd v_linear;
    RowMatrix m_factors;
    RowMatrix v_factors;
};

AdamState make_adam_state(Eigen::Index count, Eigen::Index dim);

// Bias-corrected Adam with decoupled weight decay, applied in place.
void adam_step(FmParameters& params, const FmDenseGrad& grads, AdamState& state,
               const AdamConfig& cfg);

}  // namespace lfm
