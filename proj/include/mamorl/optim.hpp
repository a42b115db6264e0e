#pragma once

#include "mamorl/autodiff.hpp"

#include <cstdint>

namespace mamorl::ad {

struct AdamState {
    Matrix m;
    Matrix v;
    std::int64_t t = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    static AdamState for_param(const TensorNode& param);
};

/// Bias-corrected Adam update of `param` from its accumulated grad. Zeroes
/// the grad afterwards. Throws DivergedTrainingError on a non-finite grad.
void adam_step(TensorNode& param, AdamState& state, double lr);

}  // namespace mamorl::ad
