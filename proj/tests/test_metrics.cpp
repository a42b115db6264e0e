#include "mamorl/errors.hpp"
#include "mamorl/metrics.hpp"
#include "mamorl/preferences.hpp"
#include "mamorl/training.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace mamorl;
using namespace mamorl::metrics;

namespace {

UtilityPoint pt(std::initializer_list<double> v) {
    UtilityPoint p(static_cast<Eigen::Index>(v.size()));
    Eigen::Index k = 0;
    for (const double x : v) p(k++) = x;
    return p;
}

bool lex_less(const UtilityPoint& a, const UtilityPoint& b) {
    return std::lexicographical_compare(a.data(), a.data() + a.size(), b.data(), b.data() + b.size());
}

/// Quadratic-time reference: keep points nobody dominates, drop duplicates.
std::vector<UtilityPoint> brute_pareto(const std::vector<UtilityPoint>& pts) {
    std::vector<UtilityPoint> out;
    for (const auto& p : pts) {
        bool dominated = false;
        for (const auto& q : pts) {
            if ((q.array() >= p.array()).all() && (q.array() > p.array()).any()) dominated = true;
        }
        const bool seen = std::any_of(out.begin(), out.end(), [&](const auto& o) { return o == p; });
        if (!dominated && !seen) out.push_back(p);
    }
    std::sort(out.begin(), out.end(), lex_less);
    return out;
}

/// Counts dominated unit cells of an integer lattice above a zero reference.
double lattice_volume(const std::vector<UtilityPoint>& pts, int m, int top) {
    double count = 0.0;
    const int cells = m == 2 ? top * top : top * top * top;
    for (int c = 0; c < cells; ++c) {
        Eigen::VectorXd corner(m);
        int rest = c;
        for (int k = 0; k < m; ++k) {
            corner(k) = rest % top + 1;
            rest /= top;
        }
        const bool hit = std::any_of(pts.begin(), pts.end(), [&](const UtilityPoint& p) {
            return (p.array() >= corner.array()).all();
        });
        count += hit ? 1.0 : 0.0;
    }
    return count;
}

std::vector<UtilityPoint> random_lattice(Rng& rng, int m, int n, int top) {
    std::uniform_int_distribution<int> d(1, top);
    std::vector<UtilityPoint> pts;
    for (int k = 0; k < n; ++k) {
        UtilityPoint p(m);
        for (int j = 0; j < m; ++j) p(j) = d(rng);
        pts.push_back(p);
    }
    return pts;
}

EpisodeTrace constant_trace(int steps, int agents, const Eigen::VectorXd& r, const Eigen::VectorXd& w) {
    EpisodeTrace t;
    for (int s = 0; s < steps; ++s) {
        t.rewards.emplace_back(static_cast<std::size_t>(agents), r);
        t.prefs.emplace_back(static_cast<std::size_t>(agents), w);
    }
    return t;
}

}  // namespace

TEST_CASE("dominance") {
    CHECK(dominates(pt({2, 2}), pt({1, 2})));
    CHECK_FALSE(dominates(pt({2, 2}), pt({2, 2})));
    CHECK_FALSE(dominates(pt({3, 1}), pt({1, 3})));
}

TEST_CASE("pareto filter hand case") {
    const std::vector<UtilityPoint> pts = {pt({1, 5}), pt({2, 2}), pt({5, 1}), pt({1, 1}),
                                           pt({2, 2}), pt({3, 3})};
    const auto f = pareto_filter(pts);
    REQUIRE(f.size() == 3);
    CHECK(f[0] == pt({5, 1}));
    CHECK(f[1] == pt({3, 3}));
    CHECK(f[2] == pt({1, 5}));
    CHECK(pareto_filter({}).empty());
}

TEST_CASE("pareto filter matches brute force") {
    Rng rng(1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        const int m = 2 + trial % 3;
        std::vector<UtilityPoint> pts = random_lattice(rng, m, 40, 6);
        // A few continuous points too.
        for (int k = 0; k < 10; ++k) pts.push_back(Eigen::VectorXd::NullaryExpr(m, [&] { return u(rng); }));
        auto fast = pareto_filter(pts);
        std::sort(fast.begin(), fast.end(), lex_less);
        CHECK(fast == brute_pareto(pts));
        CHECK(pareto_filter(pareto_filter(pts)).size() == fast.size());
        for (const auto& a : fast) {
            for (const auto& b : fast) CHECK_FALSE(dominates(a, b));
        }
    }
}

TEST_CASE("hypervolume hand cases") {
    ParetoFront f;
    f.ref = pt({0, 0});
    f.points = {pt({1, 1})};
    CHECK(hypervolume_exact(f) == doctest::Approx(1.0));
    f.points = {pt({1, 2}), pt({2, 1})};
    CHECK(hypervolume_exact(f) == doctest::Approx(3.0));
    f.points = {pt({1, 2}), pt({2, 1}), pt({-1, 5})};
    CHECK(hypervolume_exact(f) == doctest::Approx(3.0));

    ParetoFront g;
    g.ref = pt({0, 0, 0});
    g.points = {pt({1, 1, 1})};
    CHECK(hypervolume_exact(g) == doctest::Approx(1.0));
    g.points = {pt({2, 1, 1}), pt({1, 2, 1}), pt({1, 1, 2})};
    CHECK(hypervolume_exact(g) == doctest::Approx(4.0));

    ParetoFront h;
    h.ref = Eigen::VectorXd::Zero(4);
    h.points = {Eigen::VectorXd::Ones(4)};
    CHECK_THROWS_AS(hypervolume_exact(h), UnsupportedDimensionError);
}

TEST_CASE("exact hypervolume matches a lattice count") {
    Rng rng(2);
    for (int trial = 0; trial < 40; ++trial) {
        const int m = 2 + trial % 2;
        const auto pts = random_lattice(rng, m, 12, 7);
        ParetoFront f;
        f.ref = Eigen::VectorXd::Zero(m);
        f.points = pareto_filter(pts);
        CHECK(hypervolume_exact(f) == doctest::Approx(lattice_volume(pts, m, 7)));
    }
}

TEST_CASE("hypervolume properties") {
    Rng rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        const int m = 2 + trial % 2;
        std::vector<UtilityPoint> pts;
        for (int k = 0; k < 15; ++k) pts.push_back(Eigen::VectorXd::NullaryExpr(m, [&] { return u(rng); }));
        const ParetoFront f = make_front(pts);
        const double hv = hypervolume_exact(f);

        // Translating everything leaves the volume unchanged.
        ParetoFront shifted = f;
        const Eigen::VectorXd delta = Eigen::VectorXd::Constant(m, 3.5);
        shifted.ref += delta;
        for (auto& p : shifted.points) p += delta;
        CHECK(hypervolume_exact(shifted) == doctest::Approx(hv).epsilon(1e-9));

        // Adding a point never shrinks it.
        ParetoFront grown = f;
        grown.points.push_back(Eigen::VectorXd::NullaryExpr(m, [&] { return u(rng); }));
        CHECK(hypervolume_exact(grown) >= hv - 1e-12);

        // Moving the reference down grows it.
        ParetoFront lower = f;
        lower.ref -= Eigen::VectorXd::Constant(m, 0.1);
        CHECK(hypervolume_exact(lower) > hv);
    }
}

TEST_CASE("monte carlo hypervolume") {
    Rng rng(4);
    ParetoFront f;
    f.ref = pt({0, 0});
    f.points = {pt({1, 2}), pt({2, 1})};
    const auto est = hypervolume_mc(f, 200000, rng);
    CHECK(std::abs(est.estimate - 3.0) < 4.0 * est.std_error);

    const auto small = hypervolume_mc(f, 10000, rng);
    const auto big = hypervolume_mc(f, 1000000, rng);
    CHECK(small.std_error / big.std_error == doctest::Approx(10.0).epsilon(0.05));

    ParetoFront flat;
    flat.ref = pt({0, 0});
    flat.points = {pt({1, 0})};
    CHECK(hypervolume_mc(flat, 100, rng).estimate == 0.0);
    CHECK(hypervolume_exact(flat) == 0.0);
    CHECK_THROWS_AS(hypervolume_mc(f, 0, rng), ContractError);

    ParetoFront four;
    four.ref = Eigen::VectorXd::Zero(4);
    four.points = {Eigen::VectorXd::Ones(4) * 2.0};
    CHECK(hypervolume_mc(four, 1000, rng).estimate == doctest::Approx(16.0));
}

TEST_CASE("reference point") {
    const auto ref = reference_point({pt({0, 5}), pt({10, 3})});
    CHECK(ref(0) == doctest::Approx(-1.0));
    CHECK(ref(1) == doctest::Approx(2.8));
    const auto flat = reference_point({pt({-20, 0.5}), pt({-20, 0.5})});
    CHECK(flat(0) == doctest::Approx(-22.0));
    CHECK(flat(1) == doctest::Approx(0.4));
    CHECK_THROWS_AS(reference_point({}), ContractError);

    const auto front = make_front({pt({0, 5}), pt({10, 3}), pt({1, 1})});
    CHECK(front.points.size() == 2);
    CHECK(front.ref(1) == doctest::Approx(0.6));
}

TEST_CASE("episode traces") {
    const auto t = constant_trace(4, 2, pt({1, -2}), pt({0.25, 0.75}));
    CHECK(t.n_agents() == 2);
    CHECK(t.scalarised_return(1) == doctest::Approx(4 * (0.25 - 1.5)));
    CHECK(t.return_vector(0) == pt({4, -8}));
}

TEST_CASE("generalised utility") {
    const RolloutFn zero = [](std::uint64_t) {
        return constant_trace(5, 3, pt({0, 0}), pt({0.5, 0.5}));
    };
    const auto z = evaluate_gu(zero, 16, 1);
    CHECK(z.gu == 0.0);
    CHECK(z.std_error == 0.0);
    CHECK(z.per_state.size() == 16);

    // Utility depends on the seed through the reward scale.
    const auto scaled = [](double c) {
        return RolloutFn([c](std::uint64_t s) {
            const double r = static_cast<double>(s % 7);
            return constant_trace(3, 2, pt({c * r, -c * r}), pt({0.8, 0.2}));
        });
    };
    const auto one = evaluate_gu(scaled(1.0), 32, 9);
    const auto three = evaluate_gu(scaled(3.0), 32, 9);
    CHECK(three.gu == doctest::Approx(3.0 * one.gu));
    CHECK(three.std_error == doctest::Approx(3.0 * one.std_error));

    const auto single = evaluate_gu(scaled(1.0), 1, 9);
    CHECK(single.gu == doctest::Approx(3 * 0.6 * static_cast<double>(derive_seed(9, 0) % 7)));
    CHECK(single.std_error == 0.0);
    CHECK_THROWS_AS(evaluate_gu(zero, 0, 1), ContractError);
}

TEST_CASE("random policy utility agrees with a larger sample") {
    env::EnvConfig e;
    e.kind = env::EnvKind::kSpread;
    const auto prefs = pref::PreferenceProvider::random(e.n_agents, 2);
    const auto roll = train::make_rollout(nullptr, e, prefs);
    const auto oracle = evaluate_gu(roll, 1280, 200);
    // Coverage of the 2 sigma band over independent 128-state estimates; nominally 95%.
    int inside = 0;
    const int runs = 20;
    for (int k = 0; k < runs; ++k) {
        const auto a = evaluate_gu(roll, 128, 1000 + static_cast<std::uint64_t>(k));
        if (std::abs(a.gu - oracle.gu) <= 2.0 * std::hypot(a.std_error, oracle.std_error)) ++inside;
    }
    CHECK(inside >= 16);
}

TEST_CASE("simplex grid") {
    const auto g2 = simplex_grid(2, 10);
    CHECK(g2.size() == 11);
    const auto g3 = simplex_grid(3, 10);
    CHECK(g3.size() == 66);
    for (const auto& w : g3) CHECK(pref::is_valid(w));
    for (std::size_t a = 0; a < g3.size(); ++a) {
        for (std::size_t b = a + 1; b < g3.size(); ++b) CHECK(g3[a] != g3[b]);
    }
    CHECK(simplex_grid(3, 0).size() == 1);
    CHECK_THROWS_AS(simplex_grid(0, 4), ConfigError);
}

TEST_CASE("fronts from preference sweeps") {
    // Linear trade-off: every grid point is its own non-dominated return.
    const auto grid = simplex_grid(2, 10);
    const auto linear = build_front_from_sweep([](const Eigen::VectorXd& w) { return w; }, grid);
    CHECK(linear.points.size() == 11);

    // A policy that ignores the preference produces a single point.
    const auto constant =
        build_front_from_sweep([](const Eigen::VectorXd&) { return pt({1, 1}); }, grid);
    CHECK(constant.points.size() == 1);

    // Two-landmark world: standing at fraction x of the way from landmark 0 to 1
    // earns (-x L, -(1 - x) L); a preference-following policy traces the whole segment.
    env::EnvConfig e;
    e.kind = env::EnvKind::kDiagnostic;
    e.n_agents = 1;
    const double span = e.world_size;
    const auto segment = build_front_from_sweep(
        [&](const Eigen::VectorXd& w) {
            const double x = w(1) > w(0) ? 1.0 : (w(1) < w(0) ? 0.0 : 0.5);
            return pt({-x * span, -(1.0 - x) * span});
        },
        grid);
    CHECK(segment.points.size() == 3);
    CHECK(hypervolume_exact(segment) > 0.0);
}
