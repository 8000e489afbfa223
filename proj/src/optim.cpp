#include "lorentzfm/optim.hpp"

#include <cmath>

#include "lorentzfm/errors.hpp"

namespace lfm {

double effective_lr(int epoch, const RsgdConfig& cfg) {
    if (!(cfg.learning_rate > 0.0)) {
        throw ConfigError("learning rate must be positive");
    }
    if (epoch < 0) {
        throw ConfigError("epoch must be nonnegative");
    }
    return epoch < cfg.burn_in_epochs ? cfg.learning_rate * cfg.burn_in_factor
                                      : cfg.learning_rate;
}

AdamState make_adam_state(Eigen::Index count, Eigen::Index dim) {
    AdamState s;
    s.m_linear = Eigen::VectorXd::Zero(count);
    s.v_linear = Eigen::VectorXd::Zero(count);
    s.m_factors = RowMatrix::Zero(count, dim);
    s.v_factors = RowMatrix::Zero(count, dim);
    return s;
}

void adam_step(FmParameters& params, const FmDenseGrad& grads, AdamState& state,
               const AdamConfig& cfg) {
    if (grads.linear.size() != params.count() || grads.factors.rows() != params.count() ||
        grads.factors.cols() != params.dim() || state.m_linear.size() != params.count() ||
        state.m_factors.cols() != params.dim()) {
        throw DimensionError("adam_step: parameter/gradient/state shape mismatch");
    }
    state.step += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    const double lr = cfg.learning_rate;

    auto update = [&](double& param, double& m, double& v, double g) {
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
        const double mhat = m / bc1;
        const double vhat = v / bc2;
        param -= lr * (mhat / (std::sqrt(vhat) + cfg.eps) + cfg.weight_decay * param);
    };

    update(params.bias, state.m_bias, state.v_bias, grads.bias);
    for (Eigen::Index i = 0; i < params.count(); ++i) {
        update(params.linear[i], state.m_linear[i], state.v_linear[i], grads.linear[i]);
    }
    for (Eigen::Index i = 0; i < params.count(); ++i) {
        for (Eigen::Index j = 0; j < params.dim(); ++j) {
            update(params.factors(i, j), state.m_factors(i, j), state.v_factors(i, j),
                   grads.factors(i, j));
        }
    }
}

}  // namespace lfm
