#include "mamorl/errors.hpp"
#include "mamorl/preferences.hpp"

#include <doctest.h>

#include <cmath>

using namespace mamorl;
using namespace mamorl::pref;

TEST_CASE("uniform simplex samples") {
    Rng rng(1);
    for (int k = 0; k < 100; ++k) CHECK(sample_uniform_simplex(rng, 1) == Eigen::VectorXd::Ones(1));
    for (const int m : {2, 3, 5}) {
        for (int k = 0; k < 2000; ++k) {
            const auto w = sample_uniform_simplex(rng, m);
            CHECK(w.size() == m);
            CHECK(w.minCoeff() >= 0.0);
            CHECK(std::abs(w.sum() - 1.0) <= 1e-12);
            CHECK(is_valid(w));
        }
    }
    CHECK_THROWS_AS(sample_uniform_simplex(rng, 0), ConfigError);
}

TEST_CASE("uniform simplex marginals") {
    Rng rng(2);
    const int n = 100000;
    double mean2 = 0.0;
    Eigen::VectorXd mean3 = Eigen::VectorXd::Zero(3);
    double below = 0.0;
    for (int k = 0; k < n; ++k) {
        mean2 += sample_uniform_simplex(rng, 2)(0) / n;
        const auto w = sample_uniform_simplex(rng, 3);
        mean3 += w / n;
        // Marginal of a uniform 3-simplex point: P(w0 <= x) = 1 - (1 - x)^2.
        below += (w(0) <= 0.25) ? 1.0 / n : 0.0;
    }
    CHECK(std::abs(mean2 - 0.5) < 0.01);
    for (int j = 0; j < 3; ++j) CHECK(std::abs(mean3(j) - 1.0 / 3.0) < 0.01);
    CHECK(std::abs(below - (1.0 - 0.75 * 0.75)) < 0.01);
}

TEST_CASE("validity check") {
    CHECK(is_valid(Eigen::Vector2d(0.25, 0.75)));
    CHECK_FALSE(is_valid(Eigen::Vector2d(0.5, 0.6)));
    CHECK_FALSE(is_valid(Eigen::Vector2d(-0.1, 1.1)));
    Rng rng(3);
    const auto W = sample_global(rng, 3, 2);
    CHECK(is_valid(W, 3, 2));
    CHECK_FALSE(is_valid(W, 2, 2));
    const Eigen::MatrixXd s = stack(W);
    CHECK(s.rows() == 3);
    CHECK(s.row(1).transpose() == W[1]);
}

TEST_CASE("generator outputs") {
    PreferenceGenerator g;
    g.weights = Eigen::MatrixXd::Zero(2, 4);
    g.bias = Eigen::VectorXd::Zero(2);
    const Eigen::VectorXd o = Eigen::VectorXd::LinSpaced(4, -1.0, 2.0);
    const auto u = generate_from_observation(g, o);
    CHECK(u(0) == doctest::Approx(0.5));
    CHECK(u(1) == doctest::Approx(0.5));

    g.bias << 10.0, 0.0;
    CHECK(generate_from_observation(g, o)(0) > 0.999);

    CHECK_THROWS_AS(generate_from_observation(g, Eigen::VectorXd::Zero(3)), DimensionError);
}

TEST_CASE("generators are pure and simplex valued") {
    const auto gens = build_generators(7, 2, 3, 6);
    Rng rng(4);
    std::normal_distribution<double> n(0.0, 2.0);
    for (int k = 0; k < 1000; ++k) {
        Eigen::VectorXd o(6);
        for (int j = 0; j < 6; ++j) o(j) = n(rng);
        for (const auto& g : gens) {
            const auto a = generate_from_observation(g, o);
            const auto b = generate_from_observation(g, o);
            CHECK((a.array() == b.array()).all());
            CHECK(is_valid(a));
        }
    }
}

TEST_CASE("build_generators") {
    const auto a = build_generators(11, 3, 2, 8, 1.0);
    const auto b = build_generators(11, 3, 2, 8, 1.0);
    REQUIRE(a.size() == 3);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].weights == b[i].weights);
        CHECK(a[i].bias.isZero(0.0));
        CHECK(a[i].frozen);
        CHECK(a[i].agent_index == static_cast<int>(i));
    }
    CHECK(a[0].weights != a[1].weights);

    // Empirical variance of the entries approaches scale^2 / obs_dim.
    const auto big = build_generators(5, 1, 50, 400, 2.0);
    const double var = big[0].weights.array().square().mean();
    CHECK(var == doctest::Approx(4.0 / 400.0).epsilon(0.05));

    const auto tiny = build_generators(5, 2, 2, 8, 1e-8);
    Eigen::VectorXd o = Eigen::VectorXd::Constant(8, 3.0);
    for (const auto& g : tiny) {
        CHECK((generate_from_observation(g, o).array() - 0.5).abs().maxCoeff() < 1e-6);
    }
}

TEST_CASE("generators are Lipschitz in the observation") {
    const auto gens = build_generators(9, 1, 3, 5);
    const auto& g = gens[0];
    // The softmax Jacobian maps a logit change z to a 1-norm change of at most
    // half the spread of z, and the spread is at most sqrt(2) |z|_2.
    const double op = g.weights.jacobiSvd().singularValues()(0);
    Rng rng(10);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int k = 0; k < 200; ++k) {
        Eigen::VectorXd o(5), d(5);
        for (int j = 0; j < 5; ++j) {
            o(j) = n(rng);
            d(j) = 1e-4 * n(rng);
        }
        const double change =
            (generate_from_observation(g, o + d) - generate_from_observation(g, o)).lpNorm<1>();
        CHECK(change <= 0.5 * std::sqrt(2.0) * op * d.norm() * 1.001);
    }
}

TEST_CASE("batched generation matches single evaluations") {
    const auto gens = build_generators(12, 1, 2, 4);
    Rng rng(13);
    std::normal_distribution<double> n(0.0, 1.0);
    Eigen::MatrixXd obs(5, 4);
    for (int k = 0; k < obs.size(); ++k) obs(k) = n(rng);
    const Eigen::MatrixXd batch = generate_batch(gens[0], obs);
    for (int r = 0; r < 5; ++r) {
        CHECK((batch.row(r).transpose() - generate_from_observation(gens[0], obs.row(r).transpose()))
                  .cwiseAbs()
                  .maxCoeff() < 1e-15);
    }
}

TEST_CASE("preference providers") {
    Rng rng(14);
    const std::vector<Eigen::VectorXd> obs(2, Eigen::VectorXd::Ones(4));

    auto random = PreferenceProvider::random(2, 2);
    CHECK_THROWS_AS(random.current(obs), ContractError);
    random.begin_episode(rng);
    const auto w1 = random.current(obs);
    CHECK(is_valid(w1, 2, 2));
    CHECK(random.current(obs) == w1);
    random.begin_episode(rng);
    CHECK(random.current(obs) != w1);

    const GlobalPreference fixed_w = {Eigen::Vector2d(1.0, 0.0), Eigen::Vector2d(0.2, 0.8)};
    auto fixed = PreferenceProvider::fixed(fixed_w);
    fixed.begin_episode(rng);
    CHECK(fixed.current(obs) == fixed_w);

    auto observed = PreferenceProvider::observation(build_generators(1, 2, 2, 4));
    const auto w = observed.current(obs);
    CHECK(w[0] == generate_from_observation(observed.generators()[0], obs[0]));
    CHECK(is_valid(w, 2, 2));
}
