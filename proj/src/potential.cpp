#include "hypolab/potential.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace hypolab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double term(double c, double e, double r) { return c == 0.0 ? 0.0 : c * std::pow(r, e); }

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(12);
    os << v;
    return os.str();
}

std::string point_str(const Eigen::VectorXd& x) {
    std::ostringstream os;
    os.precision(17);
    os << '(';
    for (Eigen::Index i = 0; i < x.size(); ++i) os << (i ? ", " : "") << x[i];
    os << ')';
    return os.str();
}

double radical_inverse(std::uint64_t i, int base) {
    double f = 1.0, r = 0.0;
    while (i > 0) {
        f /= base;
        r += f * static_cast<double>(i % base);
        i /= base;
    }
    return r;
}

constexpr int kPrimes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53};

}  // namespace

double Profile::phi(double r) const {
    switch (kind) {
        case Kind::Monomial: return term(a, m, r);
        case Kind::ShiftedPower: return a * std::pow(1.0 + r, m / 2);
        case Kind::Log: return a * std::log1p(r);
        case Kind::LogLog: return a * std::log1p(r) + m * std::log(std::log(std::numbers::e + r));
        case Kind::Exp: return std::exp(a * r);
    }
    return 0.0;
}

double Profile::d1(double r) const {
    switch (kind) {
        case Kind::Monomial: return term(a * m, m - 1, r);
        case Kind::ShiftedPower: return a * (m / 2) * std::pow(1.0 + r, m / 2 - 1);
        case Kind::Log: return a / (1.0 + r);
        case Kind::LogLog: {
            const double u = std::numbers::e + r, L = std::log(u);
            return a / (1.0 + r) + m / (u * L);
        }
        case Kind::Exp: return a * std::exp(a * r);
    }
    return 0.0;
}

double Profile::d2(double r) const {
    switch (kind) {
        case Kind::Monomial: return term(a * m * (m - 1), m - 2, r);
        case Kind::ShiftedPower: {
            const double s = m / 2;
            return a * s * (s - 1) * std::pow(1.0 + r, s - 2);
        }
        case Kind::Log: return -a / ((1.0 + r) * (1.0 + r));
        case Kind::LogLog: {
            const double u = std::numbers::e + r, L = std::log(u);
            return -a / ((1.0 + r) * (1.0 + r)) - m * (L + 1) / (u * u * L * L);
        }
        case Kind::Exp: return a * a * std::exp(a * r);
    }
    return 0.0;
}

double Profile::d3(double r) const {
    switch (kind) {
        case Kind::Monomial: return term(a * m * (m - 1) * (m - 2), m - 3, r);
        case Kind::ShiftedPower: {
            const double s = m / 2;
            return a * s * (s - 1) * (s - 2) * std::pow(1.0 + r, s - 3);
        }
        case Kind::Log: return 2 * a / std::pow(1.0 + r, 3);
        case Kind::LogLog: {
            const double u = std::numbers::e + r, L = std::log(u);
            return 2 * a / std::pow(1.0 + r, 3) + m * (2 * L * L + 3 * L + 2) / std::pow(u * L, 3);
        }
        case Kind::Exp: return a * a * a * std::exp(a * r);
    }
    return 0.0;
}

std::string Profile::describe() const {
    switch (kind) {
        case Kind::Monomial: return fmt(a) + "*r^" + fmt(m);
        case Kind::ShiftedPower: return fmt(a) + "*(1+r)^(" + fmt(m) + "/2)";
        case Kind::Log: return fmt(a) + "*log(1+r)";
        case Kind::LogLog: return fmt(a) + "*log(1+r)+" + fmt(m) + "*loglog(e+r)";
        case Kind::Exp: return "exp(" + fmt(a) + "*r)";
    }
    return "?";
}

Potential Potential::radial(const Profile& phi, int dim) {
    if (dim < 1) throw ConfigError("potential dimension must be positive");
    Potential v;
    v.phi_ = phi;
    v.dim_ = dim;
    v.sigma_ = Eigen::MatrixXd::Identity(dim, dim);
    v.b_ = Eigen::VectorXd::Zero(dim);
    return v;
}

Potential Potential::power(double k, double delta, int dim) {
    if (!(k > 0) || !(delta > 0)) throw ConfigError("Power family needs k > 0 and delta > 0");
    Potential v = radial(Profile::shifted_power(k, delta), dim);
    v.family_ = Family::Power;
    v.p1_ = k;
    v.p2_ = delta;
    return v;
}

Potential Potential::log_power(double p, int dim) {
    // d + p > 0 keeps Phi increasing; p <= 0 is admitted so divergence can be detected.
    if (!(dim + p > 0)) throw ConfigError("LogPower family needs d + p > 0");
    Potential v = radial(Profile::log((dim + p) / 2.0), dim);
    v.family_ = Family::LogPower;
    v.p1_ = p;
    return v;
}

Potential Potential::log_log(double p, int dim) {
    if (!(p > 0)) throw ConfigError("LogLog family needs p > 0");
    Potential v = radial(Profile::log_log(dim / 2.0, p), dim);
    v.family_ = Family::LogLog;
    v.p1_ = p;
    return v;
}

Potential Potential::with_frame(const Eigen::MatrixXd& sigma, const Eigen::VectorXd& b) const {
    if (sigma.rows() != dim_ || sigma.cols() != dim_ || b.size() != dim_)
        throw ConfigError("frame dimensions do not match the potential");
    Eigen::FullPivLU<Eigen::MatrixXd> lu(sigma);
    if (!lu.isInvertible()) throw ConfigError("frame matrix sigma is singular");
    Potential v = *this;
    v.sigma_ = sigma;
    v.b_ = b;
    v.framed_ = true;
    v.s1_ = sigma(0, 0);
    v.b1_ = b[0];
    return v;
}

Potential Potential::canonical() const {
    Potential v = *this;
    v.sigma_ = Eigen::MatrixXd::Identity(dim_, dim_);
    v.b_ = Eigen::VectorXd::Zero(dim_);
    v.framed_ = false;
    v.s1_ = 1.0;
    v.b1_ = 0.0;
    return v;
}

double Potential::value(const Eigen::VectorXd& x) const {
    const Eigen::VectorXd z = sigma_ * x - b_;
    return phi_.phi(z.squaredNorm());
}

Eigen::VectorXd Potential::gradient(const Eigen::VectorXd& x) const {
    const Eigen::VectorXd z = sigma_ * x - b_;
    return 2.0 * phi_.d1(z.squaredNorm()) * (sigma_.transpose() * z);
}

Eigen::MatrixXd Potential::hessian(const Eigen::VectorXd& x) const {
    const Eigen::VectorXd z = sigma_ * x - b_;
    const double r = z.squaredNorm();
    Eigen::MatrixXd inner = 4.0 * phi_.d2(r) * (z * z.transpose());
    inner.diagonal().array() += 2.0 * phi_.d1(r);
    return sigma_.transpose() * inner * sigma_;
}

double Potential::value1(double x) const {
    const double z = s1_ * x - b1_;
    return phi_.phi(z * z);
}

double Potential::grad1(double x) const {
    const double z = s1_ * x - b1_;
    return 2.0 * phi_.d1(z * z) * z * s1_;
}

double Potential::hess1(double x) const {
    const double z = s1_ * x - b1_;
    const double r = z * z;
    return s1_ * s1_ * (2.0 * phi_.d1(r) + 4.0 * phi_.d2(r) * r);
}

double Potential::radial_log_density(double rho) const {
    return (dim_ - 1) * std::log(rho) - phi_.phi(rho * rho);
}

double sphere_area(int dim) {
    return 2.0 * std::pow(std::numbers::pi, dim / 2.0) / std::tgamma(dim / 2.0);
}

double radial_integral(const Profile& phi, int dim, const std::function<double(double)>& w) {
    using boost::math::quadrature::gauss_kronrod;
    auto f = [&](double rho) {
        if (rho <= 0.0) return dim == 1 ? w(0.0) * std::exp(-phi.phi(0.0)) : 0.0;
        const double e = std::exp((dim - 1) * std::log(rho) - phi.phi(rho * rho));
        return e == 0.0 ? 0.0 : w(rho) * e;
    };
    double total = gauss_kronrod<double, 61>::integrate(f, 0.0, 1.0, 8, 1e-13);
    double prev = total, q = 0.0;
    int flat = 0;
    constexpr int kDecades = 20;
    for (int k = 1; k <= kDecades; ++k) {
        const double lo = std::pow(10.0, k - 1), hi = std::pow(10.0, k);
        const double c = gauss_kronrod<double, 61>::integrate(f, lo, hi, 8, 1e-13);
        if (!std::isfinite(c)) throw NumericalFailure("non-finite radial quadrature");
        total += c;
        q = prev > 0 ? c / prev : 0.0;
        if (k >= 3 && c <= 1e-16 * std::abs(total)) {
            if (q < 1.0) total += c * q / (1.0 - q);
            return total;
        }
        flat = (k >= 3 && q >= 0.999) ? flat + 1 : 0;
        if (flat >= 3)
            throw AssumptionViolation("radial integral does not decay by decade (ratio " + fmt(q) +
                                      " near 10^" + std::to_string(k) + ")");
        prev = c;
    }
    // Slow tails: integrate the rest in x = log(rho), where algebraic decay in rho becomes
    // exponential and logarithmic decay becomes algebraic. Beyond x = kCut (rho^2 still finite)
    // the integrand is extrapolated as C x^-beta with beta read off at x = kCut/2 and kCut.
    constexpr double kCut = 345.0;
    const double x0 = kDecades * std::log(10.0);
    auto g = [&](double x) {
        const double rho = std::exp(x);
        return f(rho) * rho;
    };
    double err = 0.0, mid = 0.0;
    try {
        mid = gauss_kronrod<double, 61>::integrate(g, x0, kCut, 12, 1e-12, &err);
    } catch (const std::exception& ex) {
        throw AssumptionViolation(std::string("radial tail integral failed: ") + ex.what());
    }
    const double g_hi = g(kCut), g_lo = g(kCut / 2);
    double far = 0.0;
    if (g_hi > 0) {
        const double beta = std::log(g_lo / g_hi) / std::log(2.0);
        if (!(beta > 1.05))
            throw AssumptionViolation("radial integral diverges: log-scale decay exponent " + fmt(beta));
        far = g_hi * kCut / (beta - 1);
    }
    const double out = total + mid + far;
    if (!std::isfinite(out) || err > 1e-9 * out)
        throw AssumptionViolation("radial integral tail unresolved beyond 1e20 (decade ratio " + fmt(q) + ")");
    return out;
}

double Potential::normalizer() const {
    const double integral = radial_integral(phi_, dim_, [](double) { return 1.0; });
    return sphere_area(dim_) * integral / std::abs(sigma_.determinant());
}

std::string Potential::describe() const {
    std::ostringstream os;
    switch (family_) {
        case Family::Power: os << "Power(k=" << fmt(p1_) << ",delta=" << fmt(p2_) << ')'; break;
        case Family::LogPower: os << "LogPower(p=" << fmt(p1_) << ')'; break;
        case Family::LogLog: os << "LogLog(p=" << fmt(p1_) << ')'; break;
        case Family::Radial: os << "Radial(" << phi_.describe() << ')'; break;
    }
    os << "[d=" << dim_ << (framed_ ? ",framed" : "") << ']';
    return os.str();
}

double profile_H(const Profile& phi, int d2, double r) {
    const double p1 = phi.d1(r);
    if (!(p1 > 0.0)) throw AssumptionViolation("singular profile: Phi'(" + fmt(r) + ") = " + fmt(p1));
    const double p2 = phi.d2(r), p3 = phi.d3(r);
    return (2 * r * p3 + (d2 + 2) * p2) / p1 - p1 - 2 * r * p2;
}

std::vector<double> log_grid(double lo, double hi, int n) {
    std::vector<double> g(n);
    const double a = std::log(lo), b = std::log(hi);
    for (int i = 0; i < n; ++i) g[i] = std::exp(n == 1 ? a : a + (b - a) * i / (n - 1));
    return g;
}

HSweep sweep_H(const Profile& phi, int d2, const std::vector<double>& grid) {
    HSweep s;
    std::vector<double> lx, ly;
    const double top = grid.back();
    for (double r : grid) {
        const double h = std::abs(profile_H(phi, d2, r));
        if (!std::isfinite(h)) {
            s.sup_abs = kInf;
            s.growing = true;
            return s;
        }
        s.sup_abs = std::max(s.sup_abs, h);
        if (r > 0 && r >= top / 10) {
            lx.push_back(std::log(r));
            ly.push_back(std::log(std::max(h, 1e-300)));
        }
    }
    if (lx.size() >= 2) {
        double mx = 0, my = 0;
        for (std::size_t i = 0; i < lx.size(); ++i) mx += lx[i], my += ly[i];
        mx /= lx.size();
        my /= ly.size();
        double sxy = 0, sxx = 0;
        for (std::size_t i = 0; i < lx.size(); ++i) {
            sxy += (lx[i] - mx) * (ly[i] - my);
            sxx += (lx[i] - mx) * (lx[i] - mx);
        }
        s.tail_slope = sxx > 0 ? sxy / sxx : 0.0;
    }
    // A limit approached from below shows a slope of order 1e-4 per decade at most.
    s.growing = s.tail_slope > 0.01;
    return s;
}

CheckReport check_profile_bound(const Profile& phi, int d2, const std::vector<double>& grid) {
    if (grid.empty()) throw ConfigError("check_profile_bound needs a non-empty grid");
    CheckReport rep;
    rep.name = "profile_bound";
    rep.range = "r in [" + fmt(grid.front()) + ", " + fmt(grid.back()) + "], " +
                std::to_string(grid.size()) + " nodes";
    const HSweep s = sweep_H(phi, d2, grid);
    rep.measured = s.sup_abs;
    rep.threshold = 0.01;
    rep.margins = {{"sup_abs_H", s.sup_abs}, {"tail_slope", s.tail_slope}};
    rep.passed = std::isfinite(s.sup_abs) && !s.growing;
    if (!rep.passed)
        rep.fail(FailureKind::Assumption,
                 "|H| not bounded on grid: sup " + fmt(s.sup_abs) + ", tail slope " + fmt(s.tail_slope));
    return rep;
}

CheckReport check_growth(const Potential& v, double tau, double m_candidate, int sample_count,
                         double radius) {
    if (sample_count < 1 || !(radius > 0)) throw ConfigError("check_growth needs samples >= 1, radius > 0");
    const int d = v.dim();
    if (d > static_cast<int>(std::size(kPrimes))) throw ConfigError("check_growth supports d <= 16");
    CheckReport rep;
    rep.name = "growth";
    rep.threshold = m_candidate;
    rep.range = "ball radius " + fmt(radius) + ", " + std::to_string(sample_count) + " Halton points";
    double worst = 0.0;
    Eigen::VectorXd x(d), worst_x = Eigen::VectorXd::Zero(d);
    int accepted = 0;
    for (std::uint64_t i = 1; accepted < sample_count; ++i) {
        if (i > 1000ull * sample_count + 1000) throw NumericalFailure("Halton rejection stalled");
        for (int j = 0; j < d; ++j) x[j] = radius * (2.0 * radical_inverse(i, kPrimes[j]) - 1.0);
        if (x.norm() > radius) continue;
        ++accepted;
        const Eigen::VectorXd g = v.gradient(x);
        const Eigen::MatrixXd h = v.hessian(x);
        if (!g.allFinite() || !h.allFinite()) {
            rep.measured = kInf;
            rep.witness.assign(x.data(), x.data() + d);
            rep.fail(FailureKind::Numerical, "non-finite derivative at " + point_str(x));
            return rep;
        }
        const double hn = d == 1 ? std::abs(h(0, 0))
                                 : Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(h, Eigen::EigenvaluesOnly)
                                       .eigenvalues()
                                       .cwiseAbs()
                                       .maxCoeff();
        const double ratio = hn / (1.0 + std::pow(g.norm(), tau));
        if (!std::isfinite(ratio)) {
            rep.measured = kInf;
            rep.witness.assign(x.data(), x.data() + d);
            rep.fail(FailureKind::Numerical, "non-finite growth ratio at " + point_str(x));
            return rep;
        }
        if (ratio > worst) worst = ratio, worst_x = x;
    }
    rep.measured = worst;
    rep.passed = worst <= m_candidate;
    if (!rep.passed) {
        rep.witness.assign(worst_x.data(), worst_x.data() + d);
        rep.fail(FailureKind::Assumption,
                 "ratio " + fmt(worst) + " exceeds M=" + fmt(m_candidate) + " at " + point_str(worst_x));
    }
    return rep;
}

double moment_check(const Potential& v, int power) {
    if (power != 2 && power != 4) throw ConfigError("moment_check power must be 2 or 4");
    const Profile& phi = v.profile();
    const int d = v.dim();
    const double z = radial_integral(phi, d, [](double) { return 1.0; });
    const double num = radial_integral(phi, d, [&](double rho) {
        return std::pow(2.0 * phi.d1(rho * rho) * rho, power);
    });
    return num / z;
}

}  // namespace hypolab
