#include "doctest.h"
#include "hypolab/operator_lab.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <random>

using namespace hypolab;

namespace {

Eigen::VectorXd random_mean_zero(const DiscreteOperatorSet& ops, std::mt19937_64& rng) {
    std::normal_distribution<double> nd;
    Eigen::VectorXd u(ops.n());
    for (auto& c : u) c = nd(rng);
    return ops.deflate(u);
}

// A function of x alone, whitened, mean-zero.
Eigen::VectorXd x_function(const DiscreteOperatorSet& ops, double (*f)(double)) {
    Eigen::VectorXd c(ops.grid.nx());
    for (int i = 0; i < ops.grid.nx(); ++i) c[i] = f(ops.grid.x[i]) * ops.sqw1[i];
    return ops.deflate(ops.lift(c));
}

}  // namespace

TEST_CASE("tail mass and truncation radius") {
    const Potential g = Potential::quadratic(1);
    for (double r : {1.0, 2.5, 4.0})
        CHECK(outside_mass(g, r) == doctest::Approx(std::erfc(r / std::sqrt(2.0))).epsilon(1e-8));
    const double R = truncation_radius(g);
    CHECK(outside_mass(g, R) <= kGridTailMass);
    CHECK(outside_mass(g, R / 1.01) > kGridTailMass);
    // Heavier tails need a wider box.
    CHECK(truncation_radius(Potential::log_power(4.0, 1)) > truncation_radius(Potential::power(1.0, 1.0, 1)));
    CHECK(truncation_radius(Potential::power(1.0, 1.0, 1)) > R);
}

TEST_CASE("a box that cuts off too much mass is refused") {
    const Potential g = Potential::quadratic(1);
    try {
        GridMeasure::make(g, g, 16, 16, 2.0, 2.0);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        CAPTURE(msg);
        CHECK(msg.find("5.7") != std::string::npos);
    }
    const GridMeasure m = GridMeasure::make(g, g, 16, 12);
    CHECK(m.size() == 16 * 12);
    double s1 = 0, s2 = 0;
    for (double w : m.w1) s1 += w;
    for (double w : m.w2) s2 += w;
    CHECK(s1 == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(s2 == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(m.x.front() == -m.x.back());
}

TEST_CASE("discrete operator structure") {
    const LabSystem systems[] = {
        LabSystem{},
        LabSystem{Potential::power(1.0, 1.0, 1), Potential::quadratic(1), 0.7},
    };
    std::mt19937_64 rng(1);
    for (const auto& sys : systems) {
        CAPTURE(sys.describe());
        const DiscreteOperatorSet ops = build(sys, 24, 20);
        const CheckReport r = check_structure(ops);
        CAPTURE(r.diagnostic);
        CHECK(r.passed);

        CHECK(ops.apply_S(ops.e).norm() < 1e-12);
        CHECK(ops.apply_A(ops.e).norm() < 1e-12);
        for (int k = 0; k < 20; ++k) {
            const Eigen::VectorXd f = random_mean_zero(ops, rng);
            CHECK(std::abs(ops.apply_A(f).dot(f)) < 1e-12 * f.squaredNorm() * ops.l_norm_bound());
            CHECK(ops.apply_S(f).dot(f) <= 1e-12 * f.squaredNorm());
            // B vanishes on functions of x and maps into them.
            CHECK(ops.apply_B(ops.pi1(f)).norm() < 1e-12 * f.norm());
            const Eigen::VectorXd bf = ops.apply_B(f);
            CHECK((bf - ops.pi1(bf)).norm() < 1e-12 * f.norm());
            CHECK(bf.norm() <= (0.5 + 1e-10) * ops.pi2(f).norm());
        }
    }
}

TEST_CASE("N(V2) is 1 for the Gaussian") {
    const DiscreteOperatorSet ops = build(LabSystem{}, 24, 24);
    CHECK(ops.n_v2 == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("A pi_1 annihilates constants and the relations hold on linear functions") {
    const DiscreteOperatorSet ops = build(LabSystem{}, 32, 32);
    Eigen::VectorXd one = Eigen::VectorXd::Zero(ops.grid.nx());
    for (int i = 0; i < ops.grid.nx(); ++i) one[i] = ops.sqw1[i];
    CHECK((ops.Api1 * one).norm() < 1e-12);
    CHECK((ops.G * one).norm() < 1e-12);
}

TEST_CASE("Gaussian spectral gaps and the cutoff rate curve") {
    const DiscreteOperatorSet ops = build(LabSystem{}, 48, 48);
    const DiscreteWpi w2 = discrete_wpi(ops, 2);
    CHECK(w2.gap == doctest::Approx(1.0).epsilon(0.01));
    CHECK(w2.alpha(0.1) == doctest::Approx(1.0 / w2.gap));
    const DiscreteWpi w1 = discrete_wpi(ops, 1);
    CHECK(w1.gap == doctest::Approx(1.0).epsilon(0.01));
    // G ~ N(V2) Q^2 (-T), and mu1(|f'|^2) is the energy of -T: ratio near 1.
    CHECK(w1.star_m == doctest::Approx(1.0).epsilon(0.02));
    CHECK(w1.star_m_spread < 0.02);
    REQUIRE(w1.curve.size() > 2);
    for (std::size_t k = 1; k < w1.curve.size(); ++k) {
        CHECK(w1.curve[k].first > w1.curve[k - 1].first);
        CHECK(w1.curve[k].second <= w1.curve[k - 1].second + 1e-12);
    }
    // The cutoff family never beats the spectral bound.
    CHECK(w1.curve.front().second <= 1.0 / w1.gap + 1e-9);
    CHECK_THROWS_AS(discrete_wpi(ops, 3), ConfigError);
}

TEST_CASE("B and AB bounds, and the N estimate") {
    const DiscreteOperatorSet ops = build(LabSystem{}, 32, 32);
    const NEstimate n = estimate_N(ops);
    CHECK(n.k_sup == doctest::Approx(1.0).epsilon(0.05));
    CHECK(n.ba_star_power == doctest::Approx(n.ba_star).epsilon(1e-3));
    CHECK(n.n_hat >= 2 * n.ba_star);
    CHECK(n.n_hat >= 2 * n.bs_norm);
    const CheckReport r = verify_b_bounds(ops, n.n_hat, 200, 3);
    CAPTURE(r.diagnostic);
    CHECK(r.passed);

    // Adversarial vectors for the <BLf,f> bound: pi_1 part aligned with B L of the pi_2 part.
    std::mt19937_64 rng(4);
    double worst = 0;
    for (int k = 0; k < 20; ++k) {
        const Eigen::VectorXd p2 = ops.pi2(random_mean_zero(ops, rng));
        const Eigen::VectorXd c = ops.Bc * ops.apply_L(p2);
        for (double s : {0.1, 1.0, 10.0}) {
            const Eigen::VectorXd cs = s * c.normalized() * p2.norm();
            const Eigen::VectorXd u = p2 + ops.lift(cs);
            const double lhs = ops.apply_B(ops.apply_L(u)).dot(u) + cs.dot(ops.ipg.solve(ops.G * cs));
            worst = std::max(worst, lhs / (cs.norm() * p2.norm()));
        }
    }
    CHECK(worst > 0.1);
    CHECK(worst <= n.n_hat);
}

TEST_CASE("N estimate is stable under grid doubling") {
    const double a = estimate_N(build(LabSystem{}, 32, 32)).n_hat;
    const double b = estimate_N(build(LabSystem{}, 64, 64)).n_hat;
    CHECK(std::abs(a - b) / b < 0.05);
}

TEST_CASE("subordination on random and extremal functions") {
    const DiscreteOperatorSet ops = build(LabSystem{Potential::power(1.0, 1.0, 1), Potential::quadratic(1)}, 32, 32);
    const DiscreteWpi w = discrete_wpi(ops, 1);
    const CheckReport r = subordination_check(ops, 1.0 / w.gap, 300, 5);
    CAPTURE(r.diagnostic);
    CHECK(r.passed);
    // Half the gap's alpha is too small: the gap eigenvector itself violates it.
    CHECK_FALSE(subordination_check(ops, 0.25 / w.gap, 300, 5).passed);
}

TEST_CASE("Krylov exponential against the dense matrix exponential") {
    const DiscreteOperatorSet ops = build(LabSystem{}, 20, 20);
    Eigen::MatrixXd L(ops.n(), ops.n());
    for (int k = 0; k < ops.n(); ++k) L.col(k) = ops.apply_L(Eigen::VectorXd::Unit(ops.n(), k));
    std::mt19937_64 rng(9);
    const Eigen::VectorXd v = random_mean_zero(ops, rng);
    auto op = [&](const Eigen::VectorXd& u) { return ops.apply_L(u); };
    for (double t : {0.01, 1.0, 7.5}) {
        CAPTURE(t);
        const Eigen::MatrixXd e = (t * L).exp();
        const Eigen::VectorXd ref = e * v;
        const Eigen::VectorXd got = expv(op, ops.l_norm_bound(), t, v, 1e-12);
        CHECK((got - ref).norm() <= 1e-9 * v.norm());
    }
    CHECK((expv(op, ops.l_norm_bound(), 0.0, v) - v).norm() == 0.0);
}

TEST_CASE("hypocoercive constants and functional") {
    const DiscreteOperatorSet ops = build(LabSystem{}, 16, 16);
    const Eigen::VectorXd f = x_function(ops, [](double x) { return std::tanh(x); });
    const auto res = hypocoercive_decay(ops, 1.0, 0.5, 0.5, {f}, {0.0, 0.5, 1.0});
    CHECK(res.eps == doctest::Approx(0.25));
    CHECK(res.kappa == doctest::Approx(1.0 / 24));
    CHECK(res.alpha1 == 1.0);
    // B vanishes on functions of x: I_eps(f0) = |f0|^2 / 2.
    CHECK(res.trajectories[0].i_eps[0] == doctest::Approx(0.5 * f.squaredNorm()).epsilon(1e-14));
    CHECK(res.trajectories[0].norm2[2] < res.trajectories[0].norm2[0]);

    CHECK_THROWS_AS(hypocoercive_decay(ops, 1, 1, 1, {ops.e}, {0.0}), ConfigError);
    CHECK_THROWS_AS(hypocoercive_decay(ops, 1, 1, 1, {f}, {1.0, 0.5}), ConfigError);
}

TEST_CASE("decay times") {
    const auto t = decay_times(1000.0);
    CHECK(t.front() == 0.0);
    CHECK(t.back() == doctest::Approx(1000.0));
    for (std::size_t k = 1; k < t.size(); ++k) CHECK(t[k] > t[k - 1]);
}
