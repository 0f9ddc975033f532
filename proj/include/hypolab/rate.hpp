#pragma once

#include <string>
#include <utility>
#include <vector>

#include "hypolab/potential.hpp"

namespace hypolab {

// Real number or +infinity, kept explicit so no sentinel value leaks into arithmetic.
struct Extended {
    bool infinite = false;
    double value = 0.0;

    static Extended finite(double v) { return {false, v}; }
    static Extended infinity() { return {true, 0.0}; }
    double to_double() const;
    friend bool operator<(const Extended& a, const Extended& b) {
        if (a.infinite) return false;
        if (b.infinite) return true;
        return a.value < b.value;
    }
    friend Extended min(const Extended& a, const Extended& b) { return b < a ? b : a; }
};

Extended theta(double p, int d);

// Which normalization a rate function follows. WpiDirect multiplies the energy by
// alpha(r); RScaled multiplies it by r*alpha(r).
enum class RateConvention { WpiDirect, RScaled };

// Decreasing alpha: (0, inf) -> [1, inf), clamped at 1.
//   Constant(c)              c
//   LogPower(c, e)           c (log(1 + 1/r))^e
//   PolyInverse(c, theta)    c r^-theta
//   ExpInverse(c1, c2, s)    c1 exp(c2 r^-s)
struct RateFunction {
    enum class Kind { Constant, LogPower, PolyInverse, ExpInverse };
    Kind kind = Kind::Constant;
    double c = 1.0;
    double c2 = 1.0;
    double exponent = 0.0;
    RateConvention convention = RateConvention::WpiDirect;

    static RateFunction constant(double c = 1.0);
    static RateFunction log_power(double e, double c = 1.0);
    static RateFunction poly_inverse(double theta, double c = 1.0);
    static RateFunction exp_inverse(double s, double c1 = 1.0, double c2 = 1.0);

    // log alpha at r = e^{-u}; may be +inf when alpha overflows.
    double log_at(double u) const;
    double operator()(double r) const;
    std::string describe() const;
};

RateFunction alpha_for(const Potential& v, double c = 1.0);

struct XiResult {
    double log_xi = 0.0;
    bool clamped = false;   // criterion failed for every r < 1
    bool monotone = true;   // g passed the monotonicity pre-check
    double value() const;
};

XiResult xi_implicit(const RateFunction& a1, const RateFunction& a2, double c1, double c2, double t);
XiResult xi_hw(const RateFunction& a1, double c2, double t);

enum class RateCase { A1, A2, A3, B1, B2, B3, C1, C2 };
std::string to_string(RateCase c);
RateCase rate_case_from_string(const std::string& s);

// delta, eps shape the Power marginals; p belongs to V2, q to V1; d1, d2 the dimensions.
struct CaseParams {
    double delta = 1.0;
    double eps = 1.0;
    double p = 2.0;
    double q = 2.0;
    int d1 = 1;
    int d2 = 1;
    double c = 1.0;
    double c1 = 1.0;
    double c2 = 1.0;
    bool v2_log_power = false;  // C1 only: V2 from the LogPower family instead of Power
};

void validate(RateCase c, const CaseParams& prm);
double log_xi_closed_form(RateCase c, const CaseParams& prm, double t);
std::pair<RateFunction, RateFunction> case_alphas(RateCase c, const CaseParams& prm);

enum class DecayClass { Exponential, Stretched, Polynomial, Logarithmic, IteratedLog, Inconclusive };
std::string to_string(DecayClass c);

DecayClass closed_form_class(RateCase c, const CaseParams& prm);
double closed_form_exponent(RateCase c, const CaseParams& prm);

struct FitResult {
    DecayClass cls = DecayClass::Inconclusive;
    double exponent = 0.0;
    double residual = 0.0;  // RMS residual of the winning fit over the spread of log(-log xi)
    std::string note;
};

// Samples are (t, log xi). Log input keeps underflowed envelopes usable.
FitResult fit_asymptotics_log(const std::vector<std::pair<double, double>>& samples);
FitResult fit_asymptotics(const std::vector<std::pair<double, double>>& samples);

}  // namespace hypolab
