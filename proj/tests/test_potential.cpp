#include "doctest.h"
#include "hypolab/potential.hpp"

#include <cmath>
#include <numbers>
#include <random>

using namespace hypolab;

namespace {

std::vector<Potential> battery() {
    Eigen::MatrixXd s(2, 2);
    s << 1.5, 0.3, -0.2, 0.8;
    Eigen::VectorXd b(2);
    b << 0.4, -1.0;
    return {Potential::quadratic(1),
            Potential::power(1.0, 1.0, 1),
            Potential::power(2.0, 0.5, 2),
            Potential::power(0.7, 3.0, 3),
            Potential::log_power(4.0, 1),
            Potential::log_power(1.0, 2),
            Potential::log_log(2.0, 1),
            Potential::log_log(3.0, 2),
            Potential::radial(Profile::exp(0.3), 1),
            Potential::power(1.0, 1.5, 2).with_frame(s, b)};
}

}  // namespace

TEST_CASE("gradient and hessian agree with centered differences") {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> nd(0.0, 2.0);
    const double h = 1e-5;
    for (const auto& v : battery()) {
        CAPTURE(v.describe());
        const int d = v.dim();
        for (int trial = 0; trial < 100; ++trial) {
            Eigen::VectorXd x(d);
            for (int i = 0; i < d; ++i) x[i] = nd(rng);
            const Eigen::VectorXd g = v.gradient(x);
            const Eigen::MatrixXd H = v.hessian(x);
            for (int i = 0; i < d; ++i) {
                Eigen::VectorXd e = Eigen::VectorXd::Zero(d);
                e[i] = h;
                const double fd = (v.value(x + e) - v.value(x - e)) / (2 * h);
                CHECK(std::abs(fd - g[i]) <= 1e-6 * std::max(1.0, std::abs(g[i])));
                const Eigen::VectorXd fdh = (v.gradient(x + e) - v.gradient(x - e)) / (2 * h);
                for (int j = 0; j < d; ++j)
                    CHECK(std::abs(fdh[j] - H(j, i)) <= 1e-6 * std::max(1.0, std::abs(H(j, i))));
            }
        }
    }
}

TEST_CASE("one-dimensional fast paths match the general evaluators") {
    Eigen::MatrixXd s(1, 1);
    s << 1.7;
    Eigen::VectorXd b(1);
    b << 0.3;
    for (const auto& v0 : {Potential::log_power(4.0), Potential::power(1.0, 1.0)}) {
        const Potential v = v0.with_frame(s, b);
        for (double x : {-3.0, -0.1, 0.0, 0.5, 11.0}) {
            Eigen::VectorXd xv(1);
            xv << x;
            CHECK(v.value1(x) == doctest::Approx(v.value(xv)).epsilon(1e-14));
            CHECK(v.grad1(x) == doctest::Approx(v.gradient(xv)[0]).epsilon(1e-14));
            CHECK(v.hess1(x) == doctest::Approx(v.hessian(xv)(0, 0)).epsilon(1e-13));
        }
    }
}

TEST_CASE("profile derivatives are consistent") {
    const Profile ps[] = {Profile::monomial(0.5, 1), Profile::monomial(1.0, 2), Profile::shifted_power(1.0, 1.0),
                          Profile::log(2.5), Profile::log_log(0.5, 2.0), Profile::exp(0.2)};
    for (const auto& p : ps) {
        CAPTURE(p.describe());
        for (double r : {0.1, 1.0, 3.0, 40.0}) {
            const double h = 1e-5 * std::max(1.0, r);
            CHECK(p.d1(r) == doctest::Approx((p.phi(r + h) - p.phi(r - h)) / (2 * h)).epsilon(1e-7));
            CHECK(p.d2(r) == doctest::Approx((p.d1(r + h) - p.d1(r - h)) / (2 * h)).epsilon(1e-6));
            CHECK(p.d3(r) == doctest::Approx((p.d2(r + h) - p.d2(r - h)) / (2 * h)).epsilon(1e-6));
        }
    }
}

TEST_CASE("profile_H closed values") {
    for (double r : log_grid(1e-3, 1e6, 50)) {
        CHECK(profile_H(Profile::gaussian(), 1, r) == -0.5);
        CHECK(profile_H(Profile::gaussian(), 3, r) == -0.5);
        CHECK(profile_H(Profile::monomial(1.0, 1.0), 1, r) == -1.0);
    }
    const HSweep s = sweep_H(Profile::shifted_power(1.0, 1.0), 1, log_grid(1e-6, 1e6, 400));
    CHECK(std::isfinite(s.sup_abs));
    CHECK_FALSE(s.growing);
    CHECK_THROWS_AS(profile_H(Profile::monomial(0.0, 1.0), 1, 1.0), AssumptionViolation);
}

TEST_CASE("check_profile_bound examples") {
    const auto grid = log_grid(1e-4, 1e6, 200);
    const CheckReport g = check_profile_bound(Profile::gaussian(), 1, grid);
    CHECK(g.passed);
    CHECK(g.measured == doctest::Approx(0.5));
    for (double p : {0.5, 4.0})
        CHECK(check_profile_bound(Profile::log((1 + p) / 2), 1, grid).passed);
    const CheckReport sq = check_profile_bound(Profile::monomial(1.0, 2.0), 1, grid);
    CHECK_FALSE(sq.passed);
    CHECK(sq.kind == FailureKind::Assumption);
    CHECK_FALSE(check_profile_bound(Profile::exp(1.0), 1, log_grid(1e-3, 1e2, 50)).passed);
}

TEST_CASE("check_growth examples") {
    CHECK(check_growth(Potential::quadratic(1), 1.0, 1.0, 500, 10.0).passed);
    const CheckReport p = check_growth(Potential::power(2.0, 1.0, 2), 1.0, 1e300, 2000, 1e3);
    REQUIRE(p.passed);
    CHECK(p.measured < 10.0);
    CHECK(check_growth(Potential::power(2.0, 1.0, 2), 1.0, p.measured, 2000, 1e3).passed);
    CHECK(check_growth(Potential::power(1.0, 1.7, 1), 1.0, 5.0, 500, 1e3).passed);

    // e^{x^2}: the ratio grows like |x|, about 2 radius at the rim.
    const Potential e = Potential::radial(Profile::exp(1.0), 1);
    const CheckReport r5 = check_growth(e, 1.0, 1e300, 2000, 5.0);
    const CheckReport r10 = check_growth(e, 1.0, 1e300, 2000, 10.0);
    CHECK(r10.measured / r5.measured == doctest::Approx(2.0).epsilon(0.05));
    for (double m : {1.0, 5.0, 10.0, 15.0}) CHECK_FALSE(check_growth(e, 1.0, m, 2000, 10.0).passed);
    const CheckReport blown = check_growth(e, 1.0, 1e6, 2000, 40.0);
    CHECK_FALSE(blown.passed);
    CHECK(blown.diagnostic.find("non-finite") != std::string::npos);
    CHECK(blown.witness.size() == 1);
}

TEST_CASE("check_growth is monotone in the candidate constant") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> um(0.0, 3.0);
    for (const auto& v : battery()) {
        const double measured = check_growth(v.canonical(), 1.0, 1e300, 300, 20.0).measured;
        for (int i = 0; i < 20; ++i) {
            const double m = um(rng) * measured;
            const bool at_m = check_growth(v.canonical(), 1.0, m, 300, 20.0).passed;
            if (at_m) CHECK(check_growth(v.canonical(), 1.0, m * 1.5, 300, 20.0).passed);
            CHECK(at_m == (measured <= m));
        }
    }
}

TEST_CASE("moment_check and normalizer") {
    CHECK(std::abs(moment_check(Potential::quadratic(1), 2) - 1.0) < 1e-8);
    CHECK(std::abs(moment_check(Potential::quadratic(1), 4) - 3.0) < 1e-8);
    CHECK(std::abs(moment_check(Potential::quadratic(3), 2) - 3.0) < 1e-8);
    CHECK(std::abs(Potential::quadratic(1).normalizer() - std::sqrt(2 * std::numbers::pi)) < 1e-6);
    CHECK(std::abs(Potential::quadratic(2).normalizer() - 2 * std::numbers::pi) < 1e-6);
    Eigen::MatrixXd s(1, 1);
    s << 2.0;
    Eigen::VectorXd b(1);
    b << 5.0;
    CHECK(std::abs(Potential::quadratic(1).with_frame(s, b).normalizer() -
                   std::sqrt(2 * std::numbers::pi) / 2) < 1e-6);

    // LogPower d=1: density (1+x^2)^{-(1+p)/2}; p = 2 gives mu(|V'|^2) by direct closed form.
    // |V'|^2 = 9 x^2/(1+x^2)^2, density (1+x^2)^{-3/2}/2; the integral of
    // 9 x^2 (1+x^2)^{-7/2} over R is 9 * 4/15 = 2.4, so the moment is 1.2.
    CHECK(moment_check(Potential::log_power(2.0), 2) == doctest::Approx(1.2).epsilon(1e-9));
    CHECK(std::isfinite(moment_check(Potential::log_power(0.5), 4)));
    CHECK_THROWS_AS(moment_check(Potential::log_power(-0.5), 2), AssumptionViolation);
    CHECK_THROWS_AS(moment_check(Potential::log_power(0.0), 2), AssumptionViolation);
}

TEST_CASE("slowly decaying radial laws") {
    // LogLog d=1: the density tail is ~ 1/(rho (2 log rho)^p), mass converges for p > 1.
    const double z = Potential::log_log(3.0, 1).normalizer();
    // Reference from an independent 30-digit log-space quadrature.
    CHECK(z == doctest::Approx(1.8423589245926).epsilon(1e-10));
    // LogPower p = 0.3: mass decays by 10^-0.3 per decade; closed form Z = sqrt(pi) G(p/2)/G((1+p)/2).
    const double p = 0.3;
    const double exact = std::sqrt(std::numbers::pi) * std::tgamma(p / 2) / std::tgamma((1 + p) / 2);
    CHECK(Potential::log_power(p, 1).normalizer() == doctest::Approx(exact).epsilon(1e-8));
    CHECK_THROWS_AS(Potential::log_log(1.0, 1).normalizer(), AssumptionViolation);
}
