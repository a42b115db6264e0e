#include "mamorl/optim.hpp"

#include "mamorl/errors.hpp"

#include <cmath>

namespace mamorl::ad {

AdamState AdamState::for_param(const TensorNode& param) {
    AdamState state;
    state.m = Matrix::Zero(param.rows(), param.cols());
    state.v = Matrix::Zero(param.rows(), param.cols());
    return state;
}

void adam_step(TensorNode& param, AdamState& state, double lr) {
    if (!param.grad.allFinite()) {
        throw DivergedTrainingError(param.name, "adam_step: non-finite gradient in parameter '" +
                                                    param.name + "'");
    }
    if (state.m.rows() != param.rows() || state.m.cols() != param.cols()) {
        state.m = Matrix::Zero(param.rows(), param.cols());
        state.v = Matrix::Zero(param.rows(), param.cols());
    }
    ++state.t;
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * param.grad;
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * param.grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
    const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
    param.value.array() -=
        lr * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + state.eps);
    param.grad.setZero();
}

}  // namespace mamorl::ad
