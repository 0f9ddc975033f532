#include "hypolab/measure.hpp"

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <thread>

namespace hypolab {

namespace {

using boost::math::quadrature::gauss;
using boost::math::quadrature::gauss_kronrod;

double hermite(double t, double h, double f0, double f1, double m0, double m1) {
    const double t2 = t * t, t3 = t2 * t;
    return (2 * t3 - 3 * t2 + 1) * f0 + (t3 - 2 * t2 + t) * h * m0 + (-2 * t3 + 3 * t2) * f1 +
           (t3 - t2) * h * m1;
}

double hermite_dt(double t, double h, double f0, double f1, double m0, double m1) {
    const double t2 = t * t;
    return (6 * t2 - 6 * t) * (f0 - f1) + (3 * t2 - 4 * t + 1) * h * m0 + (3 * t2 - 2 * t) * h * m1;
}

}  // namespace

double uniform01(std::mt19937_64& rng) { return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53; }

RadialSampler::RadialSampler(const Potential& v, double tail_mass) : v_(v) {
    // Tail mass of LogLog laws decays like 1/log(rho): 1e-10 is beyond any double radius.
    if (v.family() == Family::LogLog || v.profile().kind == Profile::Kind::LogLog)
        throw AssumptionViolation("LogLog radial law cannot be truncated at tail mass " +
                                  std::to_string(tail_mass) + " within double range");
    sigma_inv_ = v.sigma().inverse();
    const Profile& phi = v.profile();
    const int d = v.dim();
    total_ = radial_integral(phi, d, [](double) { return 1.0; });

    // Scale where Phi has risen by one unit; nodes are sinh-spaced around it.
    const double phi0 = phi.phi(0.0);
    double lo = 0.0, hi = 1.0;
    while (phi.phi(hi * hi) - phi0 < 1.0 && hi < 1e150) hi *= 2;
    for (int i = 0; i < 100; ++i) {
        const double mid = 0.5 * (lo + hi);
        (phi.phi(mid * mid) - phi0 < 1.0 ? lo : hi) = mid;
    }
    scale_ = std::max(hi / 4, 1e-300);

    double r = scale_;
    while (1.0 - exact_cdf(r) > tail_mass) {
        r *= 2;
        if (r > 1e150) throw AssumptionViolation("radial law has no finite truncation point");
    }
    rmax_ = r;
    for (int n = 1024;; n *= 2) {
        build(n);
        if (kolmogorov_ <= 1e-6) break;
        if (n >= (1 << 18)) throw NumericalFailure("inverse-CDF table did not reach 1e-6 accuracy");
    }
}

double RadialSampler::density(double rho) const {
    if (rho <= 0.0) return v_.dim() == 1 ? std::exp(-v_.profile().phi(0.0)) / total_ : 0.0;
    return std::exp((v_.dim() - 1) * std::log(rho) - v_.profile().phi(rho * rho)) / total_;
}

double RadialSampler::exact_cdf(double rho) const {
    auto f = [&](double s) { return density(s); };
    if (rho <= 0) return 0.0;
    double acc = gauss_kronrod<double, 61>::integrate(f, 0.0, std::min(rho, 1.0), 8, 1e-13);
    for (double a = 1.0; a < rho; a *= 10)
        acc += gauss_kronrod<double, 61>::integrate(f, a, std::min(10 * a, rho), 8, 1e-13);
    return std::min(acc, 1.0);
}

void RadialSampler::build(int n) {
    rho_.assign(n + 1, 0.0);
    F_.assign(n + 1, 0.0);
    dF_.assign(n + 1, 0.0);
    const double top = std::asinh(rmax_ / scale_);
    for (int i = 0; i <= n; ++i) rho_[i] = scale_ * std::sinh(top * i / n);
    rho_[n] = rmax_;
    auto f = [&](double s) { return density(s); };
    for (int i = 0; i < n; ++i) F_[i + 1] = F_[i] + gauss<double, 20>::integrate(f, rho_[i], rho_[i + 1]);
    mass_ = F_[n];
    for (int i = 0; i <= n; ++i) {
        F_[i] /= mass_;
        dF_[i] = density(rho_[i]) / mass_;
    }
    // Fritsch-Carlson limiter keeps every cell monotone.
    for (int i = 0; i < n; ++i) {
        const double h = rho_[i + 1] - rho_[i];
        const double delta = (F_[i + 1] - F_[i]) / h;
        if (delta <= 0) {
            dF_[i] = dF_[i + 1] = 0.0;
            continue;
        }
        const double a = dF_[i] / delta, b = dF_[i + 1] / delta;
        const double s = a * a + b * b;
        if (s > 9) {
            const double tau = 3 / std::sqrt(s);
            dF_[i] = tau * a * delta;
            dF_[i + 1] = tau * b * delta;
        }
    }
    double worst = 0.0;
    for (int i = 0; i < n; ++i) {
        const double mid = 0.5 * (rho_[i] + rho_[i + 1]);
        const double exact = F_[i] + gauss<double, 20>::integrate(f, rho_[i], mid) / mass_;
        worst = std::max(worst, std::abs(cdf(mid) - exact));
    }
    kolmogorov_ = worst + (1.0 - mass_);
}

double RadialSampler::cdf(double rho) const {
    if (rho <= 0) return 0.0;
    if (rho >= rmax_) return 1.0;
    const auto it = std::upper_bound(rho_.begin(), rho_.end(), rho);
    const std::size_t i = std::min<std::size_t>(it - rho_.begin() - 1, rho_.size() - 2);
    const double h = rho_[i + 1] - rho_[i];
    return hermite((rho - rho_[i]) / h, h, F_[i], F_[i + 1], dF_[i], dF_[i + 1]);
}

double RadialSampler::quantile(double u) const {
    const auto it = std::upper_bound(F_.begin(), F_.end(), u);
    std::size_t i = it == F_.begin() ? 0 : static_cast<std::size_t>(it - F_.begin() - 1);
    i = std::min(i, rho_.size() - 2);
    const double h = rho_[i + 1] - rho_[i];
    const double f0 = F_[i], f1 = F_[i + 1], m0 = dF_[i], m1 = dF_[i + 1];
    if (f1 <= f0) return rho_[i];
    double lo = 0.0, hi = 1.0, t = std::clamp((u - f0) / (f1 - f0), 0.0, 1.0);
    for (int it2 = 0; it2 < 60; ++it2) {
        const double g = hermite(t, h, f0, f1, m0, m1) - u;
        (g < 0 ? lo : hi) = t;
        const double dg = hermite_dt(t, h, f0, f1, m0, m1);
        double next = dg > 0 ? t - g / dg : 0.5 * (lo + hi);
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        if (std::abs(next - t) <= 1e-16) {
            t = next;
            break;
        }
        t = next;
    }
    return rho_[i] + t * h;
}

void RadialSampler::draw(std::mt19937_64& rng, double* out) const {
    const int d = v_.dim();
    const double rho = quantile(uniform01(rng));
    Eigen::VectorXd z(d);
    if (d == 1) {
        z[0] = (rng() >> 63) ? rho : -rho;
    } else {
        std::normal_distribution<double> nd;
        double norm = 0.0;
        do {
            for (int j = 0; j < d; ++j) z[j] = nd(rng);
            norm = z.norm();
        } while (norm == 0.0);
        z *= rho / norm;
    }
    if (v_.has_frame()) z = sigma_inv_ * (z + v_.offset());
    for (int j = 0; j < d; ++j) out[j] = z[j];
}

ProductMeasure::ProductMeasure(const Potential& a, const Potential& b)
    : v1(a), v2(b), z1(a.normalizer()), z2(b.normalizer()), s1(a), s2(b) {}

Batch sample(const ProductMeasure& m, std::size_t n, std::uint64_t seed, int threads) {
    if (n < 1) throw ConfigError("sample size must be positive");
    Batch b;
    b.d1 = m.d1();
    b.d2 = m.d2();
    const std::size_t w = b.d1 + b.d2;
    b.data.assign(n * w, 0.0);
    const std::size_t chunks = (n + kSampleChunk - 1) / kSampleChunk;
    auto work = [&](std::size_t first, std::size_t stride) {
        for (std::size_t c = first; c < chunks; c += stride) {
            std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                              static_cast<std::uint32_t>(c), static_cast<std::uint32_t>(c >> 32)};
            std::mt19937_64 rng(seq);
            const std::size_t end = std::min(n, (c + 1) * kSampleChunk);
            for (std::size_t i = c * kSampleChunk; i < end; ++i) {
                m.s1.draw(rng, b.data.data() + i * w);
                m.s2.draw(rng, b.data.data() + i * w + b.d1);
            }
        }
    };
    const int t = std::max(1, threads);
    if (t == 1) {
        work(0, 1);
    } else {
        std::vector<std::thread> pool;
        for (int k = 0; k < t; ++k) pool.emplace_back(work, k, t);
        for (auto& th : pool) th.join();
    }
    return b;
}

Observable tanh_x() {
    return {"tanh_x", [](std::span<const double> x, std::span<const double>) { return std::tanh(x[0]); }, 2.0};
}

Observable smooth_step_x() {
    return {"step_x",
            [](std::span<const double> x, std::span<const double>) { return 0.5 * std::tanh(4 * (x[0] - 0.5)); },
            1.0};
}

Observable gaussian_bump_xy() {
    return {"bump_xy",
            [](std::span<const double> x, std::span<const double> y) {
                return std::exp(-0.5 * (x[0] * x[0] + y[0] * y[0]));
            },
            1.0};
}

Observable observable_by_tag(const std::string& tag) {
    for (auto f : {tanh_x(), smooth_step_x(), gaussian_bump_xy()})
        if (f.tag == tag) return f;
    throw ConfigError("unknown observable '" + tag + "'");
}

Estimate mean_of(std::span<const double> v) {
    Estimate e;
    const double n = static_cast<double>(v.size());
    if (v.empty()) return e;
    double m = 0;
    for (double x : v) m += x;
    m /= n;
    double s = 0;
    for (double x : v) s += (x - m) * (x - m);
    e.value = m;
    e.se = v.size() > 1 ? std::sqrt(s / (n - 1) / n) : 0.0;
    return e;
}

Estimate variance_of(std::span<const double> v) {
    Estimate e;
    const std::size_t n = v.size();
    if (n < 2) return e;
    const auto [mn, mx] = std::minmax_element(v.begin(), v.end());
    if (*mn == *mx) return e;
    const double dn = static_cast<double>(n);
    double m = 0;
    for (double x : v) m += x;
    m /= dn;
    double S = 0;
    for (double x : v) S += (x - m) * (x - m);
    e.value = S / (dn - 1);
    if (n < 3) {
        e.se = e.value;
        return e;
    }
    // Delete-one values: S_(i) = S - (x_i - m)^2 n/(n-1), variance S_(i)/(n-2).
    double jm = 0;
    for (double x : v) jm += (S - (x - m) * (x - m) * dn / (dn - 1)) / (dn - 2);
    jm /= dn;
    double jv = 0;
    for (double x : v) {
        const double d = (S - (x - m) * (x - m) * dn / (dn - 1)) / (dn - 2) - jm;
        jv += d * d;
    }
    e.se = std::sqrt((dn - 1) / dn * jv);
    return e;
}

Estimate variance(const Observable& f, const Batch& batch) {
    std::vector<double> vals(batch.size());
    for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = f.f(batch.x(i), batch.y(i));
    return variance_of(vals);
}

OscResult osc(const Observable& f, const Batch& batch) {
    if (batch.size() == 0) throw ConfigError("osc needs a non-empty batch");
    double lo = INFINITY, hi = -INFINITY;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const double v = f.f(batch.x(i), batch.y(i));
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    OscResult r{hi - lo, f.declared_osc};
    if (r.empirical > r.declared)
        throw AssumptionViolation("observable " + f.tag + " oscillates by " + std::to_string(r.empirical) +
                                  " > declared " + std::to_string(r.declared));
    return r;
}

}  // namespace hypolab
