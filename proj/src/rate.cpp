#include "hypolab/rate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace hypolab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double pos(double x) { return x > 0 ? x : 0.0; }

// log(1 + e^u) without overflow.
double log1p_exp(double u) { return u > 0 ? u + std::log1p(std::exp(-u)) : std::log1p(std::exp(u)); }

double loglog_e(double t) { return std::log(std::log(std::numbers::e + t)); }

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(10);
    os << v;
    return os.str();
}

template <class G>
XiResult invert(G&& logg, double target, double c1) {
    XiResult res;
    // Bisection runs in u = log(1/r) so envelopes far below 1e-308 stay representable.
    double hi = 1.0;
    while (logg(hi) <= target) {
        hi *= 2.0;
        if (hi > 1e300) throw NumericalFailure("rate criterion never exceeds the target");
    }
    constexpr int kGrid = 512;
    std::vector<double> us(kGrid), gs(kGrid);
    for (int i = 0; i < kGrid; ++i) {
        us[i] = hi * std::pow(1e-9, 1.0 - static_cast<double>(i) / (kGrid - 1));
        gs[i] = logg(us[i]);
    }
    for (int i = 1; i < kGrid && res.monotone; ++i)
        if (gs[i] < gs[i - 1] - 1e-12 * std::max(1.0, std::abs(gs[i - 1]))) res.monotone = false;

    double lo = 0.0;
    if (!res.monotone) {
        // Infimum over r is the largest admissible u; refine between grid neighbours.
        int last = -1;
        for (int i = 0; i < kGrid; ++i)
            if (gs[i] <= target) last = i;
        lo = last >= 0 ? us[last] : 0.0;
        hi = last + 1 < kGrid ? us[last + 1] : hi;
    }
    while (hi - lo > 1e-13 * std::max(1.0, hi)) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        (logg(mid) <= target ? lo : hi) = mid;
    }
    res.clamped = lo == 0.0;
    res.log_xi = std::log(c1) - lo;
    return res;
}

}  // namespace

double Extended::to_double() const { return infinite ? kInf : value; }

Extended theta(double p, int d) {
    if (!(p > 0)) throw ConfigError("theta needs p > 0");
    const Extended first = Extended::finite((d + p + 2) / p);
    const double den = pos(p * p - 4 - 2.0 * d - 2 * p);
    const Extended second = den > 0 ? Extended::finite((4 * p + 4 + 2.0 * d) / den) : Extended::infinity();
    return min(first, second);
}

RateFunction RateFunction::constant(double c) { return {Kind::Constant, c, 1.0, 0.0}; }
RateFunction RateFunction::log_power(double e, double c) {
    if (e == 0.0) return constant(c);
    return {Kind::LogPower, c, 1.0, e};
}
RateFunction RateFunction::poly_inverse(double th, double c) { return {Kind::PolyInverse, c, 1.0, th}; }
RateFunction RateFunction::exp_inverse(double s, double c1, double c2) {
    return {Kind::ExpInverse, c1, c2, s};
}

double RateFunction::log_at(double u) const {
    double v = 0.0;
    switch (kind) {
        case Kind::Constant: v = std::log(c); break;
        case Kind::LogPower: v = std::log(c) + exponent * std::log(log1p_exp(u)); break;
        case Kind::PolyInverse: v = std::log(c) + exponent * u; break;
        case Kind::ExpInverse: {
            const double x = exponent * u;
            if (x > 700) return kInf;
            v = std::log(c) + c2 * std::exp(x);
            break;
        }
    }
    return std::max(0.0, v);
}

double RateFunction::operator()(double r) const { return std::exp(log_at(-std::log(r))); }

std::string RateFunction::describe() const {
    std::string conv = convention == RateConvention::WpiDirect ? "" : ",scaled";
    switch (kind) {
        case Kind::Constant: return "Constant(" + fmt(c) + conv + ")";
        case Kind::LogPower: return "LogPower(" + fmt(c) + "," + fmt(exponent) + conv + ")";
        case Kind::PolyInverse: return "PolyInverse(" + fmt(c) + "," + fmt(exponent) + conv + ")";
        case Kind::ExpInverse:
            return "ExpInverse(" + fmt(c) + "," + fmt(c2) + "," + fmt(exponent) + conv + ")";
    }
    return "?";
}

RateFunction alpha_for(const Potential& v, double c) {
    const int d = v.dim();
    switch (v.family()) {
        case Family::Power: {
            const double delta = v.param2();
            return RateFunction::log_power(4 * pos(1 - delta) / delta, c);
        }
        case Family::LogPower: {
            if (!(v.param1() > 0)) throw ConfigError("LogPower rate needs p > 0");
            return RateFunction::poly_inverse(theta(v.param1(), d).to_double(), c);
        }
        case Family::LogLog: {
            const double p = v.param1();
            if (!(p > 1)) throw ConfigError("LogLog rate needs p > 1, got " + fmt(p));
            return RateFunction::exp_inverse(1.0 / (p - 1), c, 1.0);
        }
        case Family::Radial: {
            // Profiles with Phi' bounded below give a Poincare inequality.
            const Profile& ph = v.profile();
            const bool convex = (ph.kind == Profile::Kind::Monomial && ph.m >= 1) ||
                                (ph.kind == Profile::Kind::ShiftedPower && ph.m >= 2) ||
                                ph.kind == Profile::Kind::Exp;
            if (convex) return RateFunction::constant(c);
            throw ConfigError("no rate family for profile " + ph.describe());
        }
    }
    return RateFunction::constant(c);
}

double XiResult::value() const { return std::exp(log_xi); }

XiResult xi_implicit(const RateFunction& a1, const RateFunction& a2, double c1, double c2, double t) {
    if (!(t > 0) || !(c1 > 0) || !(c2 > 0)) throw ConfigError("xi_implicit needs t, c1, c2 > 0");
    auto logg = [&](double u) {
        const double l1 = a1.log_at(u);
        if (!std::isfinite(l1)) return kInf;
        return 2 * l1 + a2.log_at(u + 2 * l1) + std::log(u);
    };
    return invert(logg, std::log(c2 * t), c1);
}

XiResult xi_hw(const RateFunction& a1, double c2, double t) {
    if (!(t > 0) || !(c2 > 0)) throw ConfigError("xi_hw needs t, c2 > 0");
    auto logg = [&](double u) { return a1.log_at(u) + std::log(u); };
    return invert(logg, std::log(c2 * t), 1.0);
}

std::string to_string(RateCase c) {
    static const char* names[] = {"A1", "A2", "A3", "B1", "B2", "B3", "C1", "C2"};
    return names[static_cast<int>(c)];
}

RateCase rate_case_from_string(const std::string& s) {
    for (int i = 0; i < 8; ++i)
        if (to_string(static_cast<RateCase>(i)) == s) return static_cast<RateCase>(i);
    throw ConfigError("unknown rate case '" + s + "'");
}

void validate(RateCase c, const CaseParams& m) {
    auto need = [](bool ok, const std::string& what) {
        if (!ok) throw ConfigError("case parameter constraint violated: " + what);
    };
    need(m.d1 >= 1 && m.d2 >= 1, "d1, d2 >= 1");
    need(m.c > 0 && m.c1 > 0 && m.c2 > 0, "c, c1, c2 > 0");
    const char fam = to_string(c)[0];
    if (fam == 'A') need(m.delta > 0, "delta > 0");
    if (fam == 'B') need(m.q > 0, "q > 0");
    if (fam == 'C') need(m.q > 1, "q > 1");
    switch (c) {
        case RateCase::A1:
        case RateCase::B1: need(m.eps > 0, "eps > 0"); break;
        case RateCase::A2:
        case RateCase::B2: need(m.p > 0, "p > 0"); break;
        case RateCase::A3:
        case RateCase::B3:
        case RateCase::C2: need(m.p > 1, "p > 1"); break;
        case RateCase::C1: need(m.v2_log_power ? m.p > 0 : m.eps > 0, "V2 parameter > 0"); break;
    }
}

double log_xi_closed_form(RateCase c, const CaseParams& m, double t) {
    validate(c, m);
    if (!(t >= 0)) throw ConfigError("closed form needs t >= 0");
    const double lc = std::log(m.c);
    switch (c) {
        case RateCase::A1: {
            const double g = closed_form_exponent(c, m);
            return std::log(m.c1) - m.c2 * std::pow(t, g);
        }
        case RateCase::A2: {
            const double th = theta(m.p, m.d2).to_double();
            const double k = (8 * (th + 1) * pos(1 - m.delta) + m.delta) / (th * m.delta);
            return lc - std::log1p(t) / th + k * loglog_e(t);
        }
        case RateCase::A3:
            return std::log(m.c1) + (1 - m.p) * loglog_e(t) +
                   8 * pos(1 - m.delta) / m.delta * std::log(std::log(std::log(std::exp(2.0) + t)));
        case RateCase::B1: {
            const double th = theta(m.q, m.d1).to_double();
            const double k = (4 * pos(1 - m.eps) + m.eps) / (2 * m.eps * th);
            return lc - std::log1p(t) / (2 * th) + k * loglog_e(t);
        }
        case RateCase::B2: {
            const double D = 1.0 / closed_form_exponent(c, m);
            return lc - std::log1p(t) / D + loglog_e(t) / D;
        }
        case RateCase::B3: return lc - closed_form_exponent(c, m) * loglog_e(t);
        case RateCase::C1: return lc - (m.q - 1) * loglog_e(t);
        case RateCase::C2: return lc - (m.q - 1) * std::log(std::log(std::log(std::exp(2.0) + t)));
    }
    return 0.0;
}

std::pair<RateFunction, RateFunction> case_alphas(RateCase c, const CaseParams& m) {
    validate(c, m);
    Potential v1 = Potential::quadratic(m.d1), v2 = Potential::quadratic(m.d2);
    switch (to_string(c)[0]) {
        case 'A': v1 = Potential::power(1.0, m.delta, m.d1); break;
        case 'B': v1 = Potential::log_power(m.q, m.d1); break;
        default: v1 = Potential::log_log(m.q, m.d1); break;
    }
    switch (c) {
        case RateCase::A1:
        case RateCase::B1: v2 = Potential::power(1.0, m.eps, m.d2); break;
        case RateCase::A2:
        case RateCase::B2: v2 = Potential::log_power(m.p, m.d2); break;
        case RateCase::C1:
            v2 = m.v2_log_power ? Potential::log_power(m.p, m.d2) : Potential::power(1.0, m.eps, m.d2);
            break;
        default: v2 = Potential::log_log(m.p, m.d2); break;
    }
    return {alpha_for(v1), alpha_for(v2)};
}

std::string to_string(DecayClass c) {
    switch (c) {
        case DecayClass::Exponential: return "exponential";
        case DecayClass::Stretched: return "stretched-exponential";
        case DecayClass::Polynomial: return "polynomial";
        case DecayClass::Logarithmic: return "logarithmic";
        case DecayClass::IteratedLog: return "iterated-logarithmic";
        case DecayClass::Inconclusive: return "inconclusive";
    }
    return "?";
}

double closed_form_exponent(RateCase c, const CaseParams& m) {
    switch (c) {
        case RateCase::A1: {
            const double ed = m.eps * m.delta;
            return ed / (ed + 8 * m.eps * pos(1 - m.delta) + 4 * m.delta * pos(1 - m.eps));
        }
        case RateCase::A2: return 1.0 / theta(m.p, m.d2).to_double();
        case RateCase::A3: return m.p - 1;
        case RateCase::B1: return 1.0 / (2 * theta(m.q, m.d1).to_double());
        case RateCase::B2: {
            const double tq = theta(m.q, m.d1).to_double(), tp = theta(m.p, m.d2).to_double();
            return 1.0 / (2 * tq + tp + 2 * tp * tq);
        }
        case RateCase::B3: return (m.p - 1) / (1 + 2 * theta(m.q, m.d1).to_double());
        case RateCase::C1:
        case RateCase::C2: return m.q - 1;
    }
    return 0.0;
}

DecayClass closed_form_class(RateCase c, const CaseParams& m) {
    switch (c) {
        case RateCase::A1:
            return closed_form_exponent(c, m) == 1.0 ? DecayClass::Exponential : DecayClass::Stretched;
        case RateCase::A2:
        case RateCase::B1:
        case RateCase::B2: return DecayClass::Polynomial;
        case RateCase::A3:
        case RateCase::B3:
        case RateCase::C1: return DecayClass::Logarithmic;
        case RateCase::C2: return DecayClass::IteratedLog;
    }
    return DecayClass::Inconclusive;
}

namespace {

struct Line {
    double slope = 0, intercept = 0, rms = 0;
};

Line least_squares(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) mx += x[i], my += y[i];
    mx /= n;
    my /= n;
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    Line l;
    l.slope = sxx > 0 ? sxy / sxx : 0.0;
    l.intercept = my - l.slope * mx;
    double ss = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double r = y[i] - l.intercept - l.slope * x[i];
        ss += r * r;
    }
    l.rms = std::sqrt(ss / n);
    return l;
}

}  // namespace

FitResult fit_asymptotics_log(const std::vector<std::pair<double, double>>& samples) {
    FitResult out;
    if (samples.size() < 10) {
        out.note = "fewer than 10 samples";
        return out;
    }
    double tmin = kInf, tmax = 0;
    for (auto& [t, l] : samples) {
        if (!(t > 0) || !std::isfinite(l)) {
            out.note = "non-positive time or non-finite value";
            return out;
        }
        tmin = std::min(tmin, t);
        tmax = std::max(tmax, t);
    }
    if (tmax < 1e3 * tmin) {
        out.note = "samples span fewer than 3 decades";
        return out;
    }
    const std::size_t n = samples.size();
    std::vector<double> y(n), lx(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (!(samples[i].second < 0)) {
            out.note = "envelope not below 1";
            return out;
        }
        y[i] = std::log(-samples[i].second);
        lx[i] = samples[i].second;
    }
    double my = 0, sy = 0;
    for (double v : y) my += v;
    my /= n;
    for (double v : y) sy += (v - my) * (v - my);
    sy = std::sqrt(sy / n);
    if (sy < 1e-12) {
        out.note = "flat envelope";
        return out;
    }
    // Candidate scales X_k = log^{(k+1)} t; log(-log xi) is linear in X_k for the k-th class.
    const double thresholds[] = {0.0, 1.0, std::numbers::e, std::exp(std::numbers::e)};
    std::vector<std::vector<double>> xs(4, std::vector<double>(n));
    double best = kInf;
    int k_best = -1;
    for (int k = 0; k < 4; ++k) {
        if (!(tmin > thresholds[k])) continue;
        for (std::size_t i = 0; i < n; ++i) {
            double v = samples[i].first;
            for (int j = 0; j <= k; ++j) v = std::log(v);
            xs[k][i] = v;
        }
        const double r = least_squares(xs[k], y).rms / sy;
        if (r < best) best = r, k_best = k;
    }
    if (k_best < 0) {
        out.note = "no admissible scale";
        return out;
    }
    out.residual = best;
    if (k_best == 0) {
        out.exponent = least_squares(xs[0], y).slope;
        out.cls = std::abs(out.exponent - 1.0) <= 0.05 ? DecayClass::Exponential : DecayClass::Stretched;
    } else {
        // Leading exponent: minus the slope of log xi against the next-outer scale.
        out.exponent = -least_squares(xs[k_best - 1], lx).slope;
        out.cls = k_best == 1 ? DecayClass::Polynomial
                  : k_best == 2 ? DecayClass::Logarithmic
                                : DecayClass::IteratedLog;
    }
    if (!(out.exponent > 0)) {
        out.note = "non-positive exponent";
        out.cls = DecayClass::Inconclusive;
    }
    return out;
}

FitResult fit_asymptotics(const std::vector<std::pair<double, double>>& samples) {
    std::vector<std::pair<double, double>> logs;
    logs.reserve(samples.size());
    for (auto& [t, x] : samples) {
        if (!(x > 0)) {
            FitResult out;
            out.note = "non-positive envelope value";
            return out;
        }
        logs.emplace_back(t, std::log(x));
    }
    return fit_asymptotics_log(logs);
}

}  // namespace hypolab
