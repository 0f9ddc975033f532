#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hypolab/measure.hpp"
#include "hypolab/rate.hpp"

namespace hypolab {

inline std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

// dX = Q grad V2(Y) dt,  dY = sqrt(2) dB - (Q^T grad V1(X) + grad V2(Y)) dt.
class SdeSystem {
public:
    SdeSystem(const Eigen::MatrixXd& q, const Potential& v1, const Potential& v2);

    int d1() const { return v1_.dim(); }
    int d2() const { return v2_.dim(); }
    const Eigen::MatrixXd& q() const { return q_; }
    const Potential& v1() const { return v1_; }
    const Potential& v2() const { return v2_; }
    bool scalar() const { return d1() == 1 && d2() == 1; }

    // 1e-3 over the largest Hessian eigenvalue of the drift at the mode.
    double suggested_step() const;
    std::string describe() const;
    std::uint64_t hash() const { return fnv1a64(describe()); }

private:
    Eigen::MatrixXd q_;
    Potential v1_, v2_;
};

struct State {
    Eigen::VectorXd x, y;
};

// Explicit Euler-Maruyama; xi is the standard normal increment of B over the step.
State em_step(const SdeSystem& s, const State& z, double h, const Eigen::VectorXd& xi);

struct DecayPoint {
    double t = 0.0;
    double var = 0.0;
    double se = 0.0;
};

struct DecayCurves {
    std::vector<std::string> tags;
    std::vector<std::vector<DecayPoint>> curves;  // one per observable
    // Leave-one-group-out estimates [observable][group][time], kept for jackknifing fitted quantities.
    std::vector<std::vector<std::vector<double>>> loo;
    std::size_t n = 0;
    double h = 0.0;
    std::uint64_t seed = 0;
};

inline constexpr int kJackknifeGroups = 200;

// Two independent-noise copies from each z ~ mu:
//   Var(t) = mean f(Z1_t) f(Z2_t) - (mean over both copies of f)^2,
// with a grouped jackknife standard error over kJackknifeGroups contiguous path groups.
DecayCurves decay_curves(const SdeSystem& s, const std::vector<Observable>& fs, const std::vector<double>& times,
                         std::size_t n, double h, std::uint64_t seed, int threads = 1);

struct Moment {
    std::string tag;
    std::function<double(std::span<const double> x, std::span<const double> y)> f;
    int x_power = 0;  // polynomial growth in |x| for the integrability pre-check
    int y_power = 0;
};
Moment moment_x2();
Moment moment_y2();
Moment moment_of(const Observable& f);

struct StationarityResult {
    CheckReport report;
    std::vector<std::string> tags;
    std::vector<double> times;
    std::vector<std::vector<Estimate>> drift;  // [moment][time] paired difference to t = 0
};

// Starts from exact mu samples; each moment at T/4, T/2, T must stay within 4 SE of t = 0.
StationarityResult stationarity_check(const SdeSystem& s, const std::vector<Moment>& moments, double T,
                                      std::size_t n, double h, std::uint64_t seed, int threads = 1);

// Stationary covariance of the Euler-Maruyama chain for linear drift (quadratic potentials).
Eigen::MatrixXd em_stationary_covariance(const SdeSystem& s, double h);

struct McDecayFit {
    DecayClass cls = DecayClass::Inconclusive;
    double rate = 0.0;  // least-squares exponential rate of Var over the fit window
    double rate_se = 0.0;
    double early_rate = 0.0, late_rate = 0.0, early_se = 0.0, late_se = 0.0;
    double ratio = 0.0, ratio_se = 0.0;  // late_rate / early_rate
    double log_slope = 0.0;              // -d log Var / d log t over the late half
    double log_slope_se = 0.0;
    double t_start = 0.0, t_resolved = 0.0;
    std::string note;
};

// Local rates may fall to this fraction of the early rate before the decay counts as decelerating.
inline constexpr double kDecelerationRatio = 0.75;

// Exponential versus sub-exponential decision on a finite window.
// Window: from the first time Var drops to 0.9 Var(0) up to the last time before Var falls under 3 SE.
// Exponential iff the late-half rate keeps at least kDecelerationRatio of the early-half rate;
// otherwise Polynomial ("polynomial or slower", a window cannot separate those).
// SEs come from the leave-one-group-out curves when given.
McDecayFit classify_mc_decay(const std::vector<DecayPoint>& curve,
                             const std::vector<std::vector<double>>& loo = {});

}  // namespace hypolab
