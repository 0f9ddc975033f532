#include "doctest.h"
#include "hypolab/measure.hpp"

#include <cmath>
#include <random>

using namespace hypolab;

namespace {

double radial_norm(std::span<const double> v) {
    double s = 0;
    for (double c : v) s += c * c;
    return std::sqrt(s);
}

double quad_moment(const Potential& v, double k) {
    const double z = radial_integral(v.profile(), v.dim(), [](double) { return 1.0; });
    return radial_integral(v.profile(), v.dim(), [k](double r) { return std::pow(r, k); }) / z;
}

}  // namespace

TEST_CASE("inverse-CDF tables meet the Kolmogorov budget") {
    const Potential vs[] = {Potential::quadratic(1), Potential::quadratic(3), Potential::power(1.0, 0.5, 1),
                            Potential::power(2.0, 2.0, 2), Potential::log_power(1.0, 1), Potential::log_power(4.0, 1)};
    std::mt19937_64 rng(5);
    for (const auto& v : vs) {
        CAPTURE(v.describe());
        const RadialSampler s(v);
        CHECK(s.kolmogorov_error() <= 1e-6);
        CHECK(1.0 - s.exact_cdf(s.rmax()) <= 1e-10);
        for (int i = 0; i < 200; ++i) {
            const double r = s.quantile(uniform01(rng));
            CHECK(std::abs(s.cdf(r) - s.exact_cdf(r)) <= 1e-6);
        }
        double prev = 0;
        for (double u = 1e-6; u < 1; u += 0.01) {
            const double q = s.quantile(u);
            CHECK(q >= prev);
            CHECK(s.cdf(q) == doctest::Approx(u).epsilon(1e-9));
            prev = q;
        }
    }
}

TEST_CASE("LogLog laws are refused by the sampler") {
    CHECK_THROWS_AS(RadialSampler(Potential::log_log(2.0, 1)), AssumptionViolation);
}

TEST_CASE("Gaussian product sample moments") {
    const ProductMeasure m(Potential::quadratic(1), Potential::quadratic(1));
    const Batch b = sample(m, 1000000, 42);
    std::vector<double> x2(b.size()), y2(b.size());
    for (std::size_t i = 0; i < b.size(); ++i) {
        x2[i] = b.x(i)[0] * b.x(i)[0];
        y2[i] = b.y(i)[0] * b.y(i)[0];
    }
    const Estimate ex = mean_of(x2), ey = mean_of(y2);
    CHECK(std::abs(ex.value - 1.0) <= 3 * ex.se);
    CHECK(std::abs(ey.value - 1.0) <= 3 * ey.se);
    const Estimate vx = variance({"x", [](auto x, auto) { return x[0]; }, 1e9}, b);
    CHECK(std::abs(vx.value - 1.0) <= 3 * vx.se);
    const Estimate vi = variance({"ind", [](auto x, auto) { return (x[0] > 0 ? 1.0 : 0.0) - 0.5; }, 1.0}, b);
    CHECK(std::abs(vi.value - 0.25) <= 3 * std::max(vi.se, 1e-12));
}

TEST_CASE("radial moments match quadrature") {
    const Potential vs[] = {Potential::quadratic(1), Potential::quadratic(2), Potential::quadratic(3),
                            Potential::power(1.0, 0.5, 1), Potential::power(1.0, 1.0, 2), Potential::power(2.0, 3.0, 1),
                            Potential::log_power(3.0, 1), Potential::log_power(4.0, 2), Potential::log_power(6.0, 1)};
    for (const auto& v : vs) {
        CAPTURE(v.describe());
        const ProductMeasure m(v, Potential::quadratic(1));
        const Batch b = sample(m, 1000000, 9);
        for (int k : {1, 2}) {
            std::vector<double> r(b.size());
            for (std::size_t i = 0; i < b.size(); ++i) r[i] = std::pow(radial_norm(b.x(i)), k);
            const Estimate e = mean_of(r);
            CHECK(std::abs(e.value - quad_moment(v, k)) <= 4 * e.se);
        }
    }
}

TEST_CASE("LogPower tail fraction matches quadrature") {
    const Potential v = Potential::log_power(4.0, 1);
    const ProductMeasure m(v, Potential::quadratic(1));
    const Batch b = sample(m, 1000000, 17);
    std::vector<double> ind(b.size());
    for (std::size_t i = 0; i < b.size(); ++i) ind[i] = std::abs(b.x(i)[0]) > 10 ? 1.0 : 0.0;
    const Estimate e = mean_of(ind);
    const double exact = 1.0 - m.s1.exact_cdf(10.0);
    CHECK(exact > 1e-5);
    CHECK(std::abs(e.value - exact) <= 4 * e.se);
}

TEST_CASE("framed potentials sample through the inverse frame") {
    Eigen::MatrixXd s(1, 1);
    s << 2.0;
    Eigen::VectorXd off(1);
    off << 3.0;
    const ProductMeasure m(Potential::quadratic(1).with_frame(s, off), Potential::quadratic(1));
    const Batch b = sample(m, 200000, 3);
    std::vector<double> x(b.size());
    for (std::size_t i = 0; i < b.size(); ++i) x[i] = b.x(i)[0];
    const Estimate e = mean_of(x);
    // x = (z + 3)/2 with z standard normal.
    CHECK(std::abs(e.value - 1.5) <= 4 * e.se);
    const Estimate var = variance_of(x);
    CHECK(std::abs(var.value - 0.25) <= 4 * var.se);
}

TEST_CASE("sampling is deterministic across runs and thread counts") {
    const ProductMeasure m(Potential::log_power(2.0, 2), Potential::power(1.0, 1.0, 1));
    const Batch a = sample(m, 20000, 123, 1);
    const Batch b = sample(m, 20000, 123, 1);
    const Batch c = sample(m, 20000, 123, 3);
    const Batch d = sample(m, 20000, 124, 1);
    CHECK(a.data == b.data);
    CHECK(a.data == c.data);
    CHECK(a.data != d.data);
    const Batch prefix = sample(m, 5000, 123, 2);
    CHECK(std::equal(prefix.data.begin(), prefix.data.end(), a.data.begin()));
}

TEST_CASE("variance estimator") {
    std::vector<double> c(100, 3.25);
    const Estimate z = variance_of(c);
    CHECK(z.value == 0.0);
    CHECK(z.se == 0.0);

    std::mt19937_64 rng(1);
    std::normal_distribution<double> nd;
    std::vector<double> v(40);
    for (auto& x : v) x = nd(rng) * 3 + 1;
    const Estimate e = variance_of(v);
    // Naive delete-one jackknife.
    std::vector<double> loo;
    for (std::size_t i = 0; i < v.size(); ++i) {
        std::vector<double> w;
        for (std::size_t j = 0; j < v.size(); ++j)
            if (j != i) w.push_back(v[j]);
        double m = 0;
        for (double x : w) m += x;
        m /= w.size();
        double s = 0;
        for (double x : w) s += (x - m) * (x - m);
        loo.push_back(s / (w.size() - 1));
    }
    double lm = 0;
    for (double x : loo) lm += x;
    lm /= loo.size();
    double lv = 0;
    for (double x : loo) lv += (x - lm) * (x - lm);
    const double n = static_cast<double>(v.size());
    CHECK(e.se == doctest::Approx(std::sqrt((n - 1) / n * lv)).epsilon(1e-10));
    double m = 0;
    for (double x : v) m += x;
    m /= n;
    double s = 0;
    for (double x : v) s += (x - m) * (x - m);
    CHECK(e.value == doctest::Approx(s / (n - 1)).epsilon(1e-14));
}

TEST_CASE("oscillation contract") {
    const ProductMeasure m(Potential::quadratic(1), Potential::quadratic(1));
    const Batch b = sample(m, 100000, 8);
    const OscResult ind = osc({"ind", [](auto x, auto) { return x[0] > 0 ? 1.0 : 0.0; }, 1.0}, b);
    CHECK(ind.empirical <= 1.0);
    const OscResult th = osc(tanh_x(), b);
    CHECK(th.empirical < 2.0);
    CHECK(th.declared == 2.0);
    CHECK(osc(smooth_step_x(), b).empirical <= 1.0);
    CHECK(osc(gaussian_bump_xy(), b).empirical <= 1.0);
    CHECK_THROWS_AS(osc({"bad", [](auto x, auto) { return x[0]; }, 1.0}, b), AssumptionViolation);
    CHECK_THROWS_AS(observable_by_tag("nope"), ConfigError);
}
