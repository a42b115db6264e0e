#include "mamorl/gradcheck.hpp"

#include "mamorl/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace mamorl::ad {

namespace {

double evaluate(const ScalarFunction& f) {
    Tape tape(Tape::Mode::kInference);
    const Tensor out = f(tape);
    if (out->size() != 1) {
        throw ContractError("finite_difference_check: function must return a scalar");
    }
    return out->value(0, 0);
}

}  // namespace

double finite_difference_check(const ScalarFunction& f, const Tensor& x, double eps) {
    return finite_difference_check(f, std::vector<Tensor>{x}, eps);
}

double finite_difference_check(const ScalarFunction& f, const std::vector<Tensor>& xs, double eps,
                               std::size_t max_coords_per_tensor, std::uint64_t seed) {
    if (!(eps > 0.0) || eps > 1e-3) {
        throw ContractError("finite_difference_check: eps must lie in (0, 1e-3]");
    }
    std::vector<bool> tracked;
    for (const auto& x : xs) {
        tracked.push_back(x->requires_grad);
        x->requires_grad = true;
        x->zero_grad();
    }
    {
        Tape tape;
        const Tensor loss = f(tape);
        tape.backward(loss);
    }
    std::vector<Matrix> analytic;
    for (const auto& x : xs) analytic.push_back(x->grad);

    std::mt19937_64 rng(seed);
    double worst = 0.0;
    for (std::size_t t = 0; t < xs.size(); ++t) {
        TensorNode& x = *xs[t];
        std::vector<Index> coords(static_cast<std::size_t>(x.size()));
        std::iota(coords.begin(), coords.end(), Index{0});
        if (coords.size() > max_coords_per_tensor) {
            std::shuffle(coords.begin(), coords.end(), rng);
            coords.resize(max_coords_per_tensor);
        }
        for (const Index k : coords) {
            double& slot = x.value.data()[k];
            const double saved = slot;
            slot = saved + eps;
            const double up = evaluate(f);
            slot = saved - eps;
            const double down = evaluate(f);
            slot = saved;
            const double numeric = (up - down) / (2.0 * eps);
            const double exact = analytic[t].data()[k];
            worst = std::max(worst, std::abs(exact - numeric) / std::max(1.0, std::abs(exact)));
        }
    }
    for (std::size_t t = 0; t < xs.size(); ++t) {
        xs[t]->zero_grad();
        xs[t]->requires_grad = tracked[t];
    }
    return worst;
}

}  // namespace mamorl::ad
