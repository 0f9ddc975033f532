#include "doctest.h"
#include "hypolab/sde.hpp"

#include <cmath>
#include <random>

using namespace hypolab;

namespace {

SdeSystem gaussian_system(double q = 1.0) {
    return SdeSystem(Eigen::MatrixXd::Constant(1, 1, q), Potential::quadratic(1), Potential::quadratic(1));
}

Eigen::VectorXd vec(std::initializer_list<double> v) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double c : v) out[i++] = c;
    return out;
}

std::vector<double> linspace(double a, double b, int n) {
    std::vector<double> t;
    for (int i = 0; i < n; ++i) t.push_back(a + (b - a) * i / (n - 1));
    return t;
}

}  // namespace

TEST_CASE("Euler-Maruyama step by hand") {
    const SdeSystem s = gaussian_system();
    const State out = em_step(s, State{vec({1.0}), vec({1.0})}, 0.01, vec({0.0}));
    CHECK(out.x[0] == doctest::Approx(1.01).epsilon(1e-15));
    CHECK(out.y[0] == doctest::Approx(0.98).epsilon(1e-15));

    const State o = em_step(s, State{vec({0.0}), vec({0.0})}, 0.1, vec({0.0}));
    CHECK(o.x[0] == 0.0);
    CHECK(o.y[0] == 0.0);
    CHECK_THROWS_AS(em_step(s, State{vec({0.0}), vec({0.0})}, 0.0, vec({0.0})), ConfigError);
}

TEST_CASE("the x-update does not see the noise") {
    Eigen::MatrixXd q(2, 3);
    q << 1.0, 0.5, -0.2, 0.0, 1.0, 0.3;
    const SdeSystem systems[] = {
        gaussian_system(),
        SdeSystem(Eigen::MatrixXd::Constant(1, 1, 0.7), Potential::log_power(1.0, 1), Potential::power(1.0, 1.0, 1)),
        SdeSystem(q, Potential::power(1.0, 1.5, 2), Potential::quadratic(3)),
    };
    std::mt19937_64 rng(3);
    std::normal_distribution<double> nd;
    for (const auto& s : systems) {
        for (int trial = 0; trial < 50; ++trial) {
            State z{Eigen::VectorXd(s.d1()), Eigen::VectorXd(s.d2())};
            for (auto& c : z.x) c = 3 * nd(rng);
            for (auto& c : z.y) c = 3 * nd(rng);
            Eigen::VectorXd xi(s.d2());
            for (auto& c : xi) c = nd(rng);
            const State a = em_step(s, z, 1e-2, xi), b = em_step(s, z, 1e-2, -xi);
            CHECK((a.x - b.x).norm() == 0.0);
            CHECK((a.y - b.y).norm() > 0.0);
        }
    }
}

TEST_CASE("blow-up carries the state") {
    const SdeSystem s(Eigen::MatrixXd::Ones(1, 1), Potential::power(1.0, 4.0, 1), Potential::quadratic(1));
    try {
        em_step(s, State{vec({1e120}), vec({0.0})}, 1e-3, vec({0.0}));
        FAIL("expected NumericalFailure");
    } catch (const NumericalFailure& e) {
        const std::string msg = e.what();
        CAPTURE(msg);
        CHECK(msg.find("from x=(9.99999") != std::string::npos);
        CHECK(msg.find("e+119) y=(0) to") != std::string::npos);
        CHECK(msg.find("-inf") != std::string::npos);
    }
}

TEST_CASE("system validation") {
    CHECK_THROWS_AS(SdeSystem(Eigen::MatrixXd::Zero(1, 1), Potential::quadratic(1), Potential::quadratic(1)),
                    ConfigError);
    CHECK_THROWS_AS(SdeSystem(Eigen::MatrixXd::Ones(2, 1), Potential::quadratic(1), Potential::quadratic(1)),
                    ConfigError);
    // Q Q^T singular: rank 1 in a 2 x 2 block.
    CHECK_THROWS_AS(SdeSystem(Eigen::MatrixXd::Ones(2, 2), Potential::quadratic(2), Potential::quadratic(2)),
                    ConfigError);
    const SdeSystem s = gaussian_system(2.0);
    CHECK(s.suggested_step() == doctest::Approx(5e-4));
    CHECK(s.hash() == gaussian_system(2.0).hash());
    CHECK(s.hash() != gaussian_system(1.0).hash());
}

TEST_CASE("two-copy estimator at t = 0 is the sample variance of the start batch") {
    const SdeSystem s(Eigen::MatrixXd::Ones(1, 1), Potential::log_power(2.0, 1), Potential::quadratic(1));
    const std::size_t n = 4000;
    const auto obs = {tanh_x(), smooth_step_x(), gaussian_bump_xy()};
    const DecayCurves c = decay_curves(s, obs, {0.0, 0.1}, n, 1e-3, 11);
    const Batch b = sample(ProductMeasure(s.v1(), s.v2()), n, 11);
    std::size_t o = 0;
    for (const auto& f : obs) {
        double m = 0, m2 = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const double v = f.f(b.x(i), b.y(i));
            m += v;
            m2 += v * v;
        }
        m /= n;
        m2 /= n;
        CHECK(c.curves[o][0].var == doctest::Approx(m2 - m * m).epsilon(1e-12));
        CHECK(c.curves[o][0].se > 0);
        CHECK(c.curves[o][1].var < c.curves[o][0].var);
        ++o;
    }
    CHECK_THROWS_AS(decay_curves(s, obs, {0.0, 0.0}, n, 1e-3, 1), ConfigError);
}

TEST_CASE("decay curves are bitwise reproducible across thread counts") {
    const SdeSystem s(Eigen::MatrixXd::Constant(1, 1, 0.5), Potential::log_power(1.0, 1), Potential::quadratic(1));
    const std::vector<double> t = linspace(0, 0.5, 6);
    const auto a = decay_curves(s, {tanh_x(), gaussian_bump_xy()}, t, 1500, 1e-3, 99, 1);
    const auto b = decay_curves(s, {tanh_x(), gaussian_bump_xy()}, t, 1500, 1e-3, 99, 3);
    const auto c = decay_curves(s, {tanh_x(), gaussian_bump_xy()}, t, 1500, 1e-3, 100, 1);
    for (std::size_t o = 0; o < 2; ++o)
        for (std::size_t j = 0; j < t.size(); ++j) {
            CHECK(a.curves[o][j].var == b.curves[o][j].var);
            CHECK(a.curves[o][j].se == b.curves[o][j].se);
        }
    CHECK(a.curves[0].back().var != c.curves[0].back().var);
    CHECK(a.loo == b.loo);
}

TEST_CASE("Euler-Maruyama stationary covariance has first-order bias") {
    for (double q : {0.5, 1.0, 2.0}) {
        CAPTURE(q);
        const SdeSystem s = gaussian_system(q);
        const double h = 0.02;
        const Eigen::MatrixXd c1 = em_stationary_covariance(s, h), c2 = em_stationary_covariance(s, h / 2);
        const double b1 = (c1 - Eigen::MatrixXd::Identity(2, 2)).norm();
        const double b2 = (c2 - Eigen::MatrixXd::Identity(2, 2)).norm();
        CHECK(b1 > 0);
        CHECK(b1 / b2 == doctest::Approx(2.0).epsilon(0.05));
    }
    const SdeSystem heavy(Eigen::MatrixXd::Ones(1, 1), Potential::log_power(1.0, 1), Potential::quadratic(1));
    CHECK_THROWS_AS(em_stationary_covariance(heavy, 1e-3), ConfigError);
}

TEST_CASE("stationarity check") {
    const SdeSystem s = gaussian_system();
    const auto ok = stationarity_check(s, {moment_x2(), moment_y2(), moment_of(tanh_x())}, 1.0, 10000, 1e-3, 4);
    CHECK(ok.report.passed);
    CHECK(ok.drift.size() == 3);
    CHECK(ok.drift[0][0].value == 0.0);
    // h = 0.4 biases the stationary E[Y^2] far beyond the statistical error.
    const Eigen::MatrixXd c = em_stationary_covariance(s, 0.4);
    REQUIRE(std::abs(c(1, 1) - 1.0) > 0.1);
    const auto bad = stationarity_check(s, {moment_y2()}, 20.0, 10000, 0.4, 4);
    CHECK_FALSE(bad.report.passed);
    CHECK(bad.report.diagnostic.find("step size") != std::string::npos);

    // E[X^2] is infinite under the Cauchy-tailed LogPower(1) law.
    const SdeSystem heavy(Eigen::MatrixXd::Ones(1, 1), Potential::log_power(1.0, 1), Potential::quadratic(1));
    CHECK_THROWS_AS(stationarity_check(heavy, {moment_x2()}, 1.0, 100, 1e-3, 1), AssumptionViolation);
}

TEST_CASE("decay classifier on synthetic curves") {
    const std::vector<double> t = linspace(0, 10, 41);
    auto curve = [&](auto v, double se) {
        std::vector<DecayPoint> c;
        for (double s : t) c.push_back({s, v(s), se});
        return c;
    };
    const auto e = classify_mc_decay(curve([](double s) { return std::exp(-0.8 * s); }, 1e-5));
    CHECK(e.cls == DecayClass::Exponential);
    CHECK(e.rate == doctest::Approx(0.8).epsilon(1e-9));
    CHECK(e.ratio == doctest::Approx(1.0).epsilon(1e-9));

    // Critically damped shape (1 + t)^2 e^{-t}: local rate increases.
    const auto c = classify_mc_decay(curve([](double s) { return (1 + s) * (1 + s) * std::exp(-s); }, 1e-6));
    CHECK(c.cls == DecayClass::Exponential);
    CHECK(c.ratio > 1.0);

    const auto p = classify_mc_decay(curve([](double s) { return std::pow(1 + s, -1.5); }, 1e-4));
    CHECK(p.cls == DecayClass::Polynomial);
    CHECK(p.ratio < 0.6);
    CHECK(p.log_slope > 1.0);

    const auto l = classify_mc_decay(curve([](double s) { return 1.0 / std::log(std::exp(1.0) + s); }, 1e-4));
    CHECK(l.cls == DecayClass::Polynomial);

    // Signal under 3 SE almost immediately.
    const auto n = classify_mc_decay(curve([](double s) { return std::exp(-5 * s); }, 1e-2));
    CHECK(n.cls == DecayClass::Inconclusive);
    CHECK(classify_mc_decay({}).cls == DecayClass::Inconclusive);
}

TEST_CASE("jackknife SE of the fitted rate") {
    const SdeSystem s = gaussian_system(0.5);
    const auto c = decay_curves(s, {gaussian_bump_xy()}, linspace(0, 3, 25), 4000, 2e-3, 5);
    const auto f = classify_mc_decay(c.curves[0], c.loo[0]);
    REQUIRE(f.cls != DecayClass::Inconclusive);
    CHECK(f.rate > 0);
    CHECK(f.rate_se > 0);
    CHECK(f.rate_se < f.rate);
}
