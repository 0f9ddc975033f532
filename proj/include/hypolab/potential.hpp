#pragma once

#include <Eigen/Dense>

#include <functional>
#include <string>
#include <vector>

#include "hypolab/report.hpp"

namespace hypolab {

// Radial profile Phi on [0, inf) with closed-form derivatives up to third order.
//   Monomial     a r^m
//   ShiftedPower a (1+r)^(m/2)
//   Log          a log(1+r)
//   LogLog       a log(1+r) + m log log(e+r)
//   Exp          e^(a r)
struct Profile {
    enum class Kind { Monomial, ShiftedPower, Log, LogLog, Exp };
    Kind kind = Kind::Monomial;
    double a = 0.5;
    double m = 1.0;

    static Profile monomial(double a, double m) { return {Kind::Monomial, a, m}; }
    static Profile shifted_power(double k, double e) { return {Kind::ShiftedPower, k, e}; }
    static Profile log(double c) { return {Kind::Log, c, 0.0}; }
    static Profile log_log(double a, double p) { return {Kind::LogLog, a, p}; }
    static Profile exp(double a) { return {Kind::Exp, a, 0.0}; }
    static Profile gaussian() { return monomial(0.5, 1.0); }

    double phi(double r) const;
    double d1(double r) const;
    double d2(double r) const;
    double d3(double r) const;
    std::string describe() const;
};

enum class Family { Power, LogPower, LogLog, Radial };

// V(x) = Phi(|sigma x - b|^2). Families:
//   Power(k, delta)  Phi = k (1+r)^(delta/2)
//   LogPower(p)      Phi = (d+p)/2 log(1+r)
//   LogLog(p)        Phi = d/2 log(1+r) + p log log(e+r)
class Potential {
public:
    static Potential power(double k, double delta, int dim = 1);
    static Potential log_power(double p, int dim = 1);
    static Potential log_log(double p, int dim = 1);
    static Potential radial(const Profile& phi, int dim = 1);
    static Potential quadratic(int dim = 1) { return radial(Profile::gaussian(), dim); }

    Potential with_frame(const Eigen::MatrixXd& sigma, const Eigen::VectorXd& b) const;
    // Drops sigma and b; every assumption check runs on this representative.
    Potential canonical() const;

    int dim() const { return dim_; }
    Family family() const { return family_; }
    // Power: (k, delta); LogPower, LogLog: (p, unused); Radial: (0, 0).
    double param1() const { return p1_; }
    double param2() const { return p2_; }
    const Profile& profile() const { return phi_; }
    const Eigen::MatrixXd& sigma() const { return sigma_; }
    const Eigen::VectorXd& offset() const { return b_; }
    bool has_frame() const { return framed_; }

    double value(const Eigen::VectorXd& x) const;
    Eigen::VectorXd gradient(const Eigen::VectorXd& x) const;
    Eigen::MatrixXd hessian(const Eigen::VectorXd& x) const;

    // One-dimensional fast paths; require dim() == 1.
    double value1(double x) const;
    double grad1(double x) const;
    double hess1(double x) const;

    // Log-density of the radial law of |sigma x - b| up to a constant.
    double radial_log_density(double rho) const;
    // Z(V) = int e^{-V}; finite-ness checked by decade quadrature.
    double normalizer() const;

    std::string describe() const;

private:
    Family family_ = Family::Radial;
    double p1_ = 0.0, p2_ = 0.0;
    Profile phi_;
    int dim_ = 1;
    bool framed_ = false;
    Eigen::MatrixXd sigma_;
    Eigen::VectorXd b_;
    double s1_ = 1.0, b1_ = 0.0;
};

double profile_H(const Profile& phi, int d2, double r);

struct HSweep {
    double sup_abs = 0.0;
    double tail_slope = 0.0;  // log-log slope of |H| over the last decade
    bool growing = false;
};
HSweep sweep_H(const Profile& phi, int d2, const std::vector<double>& grid);

std::vector<double> log_grid(double lo, double hi, int n);

CheckReport check_growth(const Potential& v, double tau, double m_candidate, int sample_count,
                         double radius);
CheckReport check_profile_bound(const Profile& phi, int d2, const std::vector<double>& grid);

// mu(|grad V|^power) under mu ~ e^{-V}; throws AssumptionViolation on divergence.
double moment_check(const Potential& v, int power);

// int_0^inf rho^(dim-1) w(rho) e^{-Phi(rho^2)} d rho by decades with geometric tail
// extrapolation. Throws AssumptionViolation on a non-decaying trend.
double radial_integral(const Profile& phi, int dim, const std::function<double(double)>& w);

double sphere_area(int dim);

}  // namespace hypolab
