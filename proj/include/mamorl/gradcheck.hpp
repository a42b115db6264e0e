#pragma once

#include "mamorl/autodiff.hpp"

#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

namespace mamorl::ad {

/// Builds a scalar loss on the supplied tape. Must be deterministic.
using ScalarFunction = std::function<Tensor(Tape&)>;

/// Max over coordinates of |analytic - central difference| / max(1, |analytic|).
///
/// The grads of `x` are reset before and after the check; grads of any other
/// tracked leaf touched by `f` accumulate as a side effect.
double finite_difference_check(const ScalarFunction& f, const Tensor& x, double eps = 1e-6);

/// Same measure taken jointly over several leaves. When `max_coords_per_tensor`
/// is finite, that many coordinates per tensor are drawn with the given seed
/// instead of visiting every entry.
double finite_difference_check(const ScalarFunction& f, const std::vector<Tensor>& xs,
                               double eps = 1e-6,
                               std::size_t max_coords_per_tensor =
                                   std::numeric_limits<std::size_t>::max(),
                               std::uint64_t seed = 0);

}  // namespace mamorl::ad
