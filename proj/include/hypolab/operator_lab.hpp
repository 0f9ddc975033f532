#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "hypolab/potential.hpp"
#include "hypolab/rate.hpp"
#include "hypolab/report.hpp"

namespace hypolab {

inline constexpr double kGridTailMass = 1e-8;

// Mass of the normalized law e^{-V}/Z outside [-R, R]; V one-dimensional and unframed.
double outside_mass(const Potential& v, double R);
// Smallest R (to 0.5%) with outside_mass(v, R) <= tail.
double truncation_radius(const Potential& v, double tail = kGridTailMass);

// Symmetric tensor grid with node weights w1 ~ e^{-V1}, w2 ~ e^{-V2}, each summing to 1.
struct GridMeasure {
    std::vector<double> x, y, w1, w2;
    double rx = 0.0, ry = 0.0, dx = 0.0, dy = 0.0;

    int nx() const { return static_cast<int>(x.size()); }
    int ny() const { return static_cast<int>(y.size()); }
    int size() const { return nx() * ny(); }

    // R <= 0 picks truncation_radius. An explicit R with outside mass above kGridTailMass is
    // refused with a ConfigError naming the smallest admissible R.
    static GridMeasure make(const Potential& v1, const Potential& v2, int nx, int ny, double rx = 0.0,
                            double ry = 0.0);
};

struct LabSystem {
    Potential v1 = Potential::quadratic(1);
    Potential v2 = Potential::quadratic(1);
    double q = 1.0;
    std::string describe() const;
};

// All operators live in whitened coordinates u = W^{1/2} f with W = diag(w1 (x) w2), so the weighted
// inner product is the Euclidean one and weighted adjoints are transposes. Node (i, j) has index i*ny + j.
// Functions of x alone are represented by coefficients c in R^nx through U c, U = I (x) sqrt(w2);
// U has orthonormal columns, so pi_1 = U U^T.
struct DiscreteOperatorSet {
    LabSystem sys;
    GridMeasure grid;
    Eigen::SparseMatrix<double> S;   // exactly symmetric, acts in y only
    Eigen::SparseMatrix<double> Ah;  // exactly antisymmetric, before mean-zero deflation
    Eigen::SparseMatrix<double> Sy;  // ny x ny block of S
    Eigen::VectorXd e;               // sqrt(w): the unit constant function
    Eigen::VectorXd sqw1, sqw2;
    Eigen::MatrixXd Api1;            // A pi_1 U: N x nx
    Eigen::MatrixXd G;               // Api1^T Api1: nx x nx
    Eigen::LLT<Eigen::MatrixXd> ipg; // I + G
    Eigen::MatrixXd Bc;              // B = U Bc with Bc = (I + G)^{-1} Api1^T: nx x N
    double b_residual = 0.0;         // relative residual of the SPD solve
    double n_v2 = 0.0;               // N(V2) = mu2(|grad V2|^2) / d2 by quadrature

    int n() const { return grid.size(); }
    // A = P Ah P with P the projection onto mean-zero vectors, so A 1 = A^T 1 = 0.
    Eigen::VectorXd apply_A(const Eigen::VectorXd& u) const;
    Eigen::VectorXd apply_S(const Eigen::VectorXd& u) const { return S * u; }
    Eigen::VectorXd apply_L(const Eigen::VectorXd& u) const { return S * u - apply_A(u); }
    Eigen::VectorXd apply_B(const Eigen::VectorXd& u) const { return lift(Bc * u); }
    Eigen::VectorXd coeffs(const Eigen::VectorXd& u) const;  // U^T u
    Eigen::VectorXd lift(const Eigen::VectorXd& c) const;    // U c
    Eigen::VectorXd pi1(const Eigen::VectorXd& u) const { return lift(coeffs(u)); }
    Eigen::VectorXd pi2(const Eigen::VectorXd& u) const { return u - pi1(u); }
    Eigen::VectorXd deflate(const Eigen::VectorXd& u) const { return u - e.dot(u) * e; }
    Eigen::VectorXd whiten(const Eigen::VectorXd& f) const { return f.cwiseProduct(e); }
    Eigen::VectorXd unwhiten(const Eigen::VectorXd& u) const { return u.cwiseQuotient(e); }
    // Upper bound on the infinity norm of L, for Krylov step control.
    double l_norm_bound() const;
};

// Assembles S in divergence form, A from centered differences then antisymmetrized, and B by a Cholesky
// solve of (I + G) B^T-form. Requires d1 = d2 = 1 and unframed potentials.
DiscreteOperatorSet build(const LabSystem& sys, int nx, int ny, double rx = 0.0, double ry = 0.0);

// S = S^T, A = -A^T, S pi_1 = 0, pi_1 A pi_1 = 0, U^T U = I, constants in ker L; all to 1e-12.
CheckReport check_structure(const DiscreteOperatorSet& ops);

struct NEstimate {
    double n_hat = 1.0;    // max(1, 2 k_sup, 2 bs_norm, 2 ba_star)
    double k_sup = 0.0;    // sup over the y nodes of |K|, K = 2 H(y^2)
    double bs_norm = 0.0;  // || pi_1 B S pi_2 ||, exact on the grid
    double ba_star = 0.0;  // sup ||(BA)^* g|| / ||g|| over g = (I + G) f, exact
    double ba_star_power = 0.0;  // the same by power iteration
    int power_iterations = 0;
};
NEstimate estimate_N(const DiscreteOperatorSet& ops);

// |B| <= 1/2 and |AB| <= 1 on range(pi2) by exact norms and power iteration; those two plus
// |<Bf,Lf>| <= |pi2 f| |f| and the <BLf,f> bound with N on `trials` random mean-zero vectors.
CheckReport verify_b_bounds(const DiscreteOperatorSet& ops, double n_hat, int trials, std::uint64_t seed);

// Relative residual of S A pi_1 f = K A pi_1 f over interior nodes at n and 2n.
// Passes when the residual at n is <= max_residual and it shrinks by >= min_ratio.
CheckReport check_sa_relation(const LabSystem& sys, int n, double max_residual = 0.05, double min_ratio = 1.8);

// G pi_1 f against -N(V2) T_h pi_1 f at n and 2n, T_h the divergence-form discretization of
// Q^2 (d^2 - V1' d). Also regresses G on T_h; the slope should be -N(V2) within 2%.
CheckReport check_g_formula(const LabSystem& sys, int n, double max_residual = 0.05, double min_ratio = 1.8);

struct DiscreteWpi {
    double gap = 0.0;  // smallest nonzero eigenvalue of the marginal form
    RateFunction alpha = RateFunction::constant(1.0);  // Constant(1 / gap)
    std::vector<std::pair<double, double>> curve;      // (r, alpha_hat(r)) over cutoff functions
    double star_m = 0.0, star_m_spread = 0.0;          // component 1: ||A pi_1 f||^2 / mu1(|f'|^2)
};
// component 1: the form ||A pi_1 f||^2 on functions of x; component 2: <-S f, f> on functions of y.
DiscreteWpi discrete_wpi(const DiscreteOperatorSet& ops, int component);

// ||f||^2 <= (1 + alpha) <(1 + G)^{-1} G f, f> + r osc(f)^2 for random f in H_1 and r in [1e-8, 1].
CheckReport subordination_check(const DiscreteOperatorSet& ops, double alpha, int trials, std::uint64_t seed);

// exp(t M) v by Krylov projection with Expokit step control; tol bounds the local error per unit time.
Eigen::VectorXd expv(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& m, double m_norm, double t,
                     const Eigen::VectorXd& v, double tol = 1e-10, int krylov_dim = 30);

// eps = 1 / (2 N^2 (alpha1 + 1) alpha2) and kappa = 1 / (6 N^4 alpha2 (alpha1 + 1)^2), with N and both
// alphas clamped below at 1.
struct HypocoerciveConstants {
    double n_hat = 1.0, alpha1 = 1.0, alpha2 = 1.0, eps = 0.25, kappa = 1.0 / 24;
};
HypocoerciveConstants hypocoercive_constants(double n_hat, double alpha1, double alpha2);

struct DecayTrajectory {
    std::vector<double> t, norm2, i_eps;
};
struct HypocoerciveResult {
    CheckReport report;
    double eps = 0.0, kappa = 0.0, n_hat = 1.0, alpha1 = 1.0, alpha2 = 1.0;
    std::vector<DecayTrajectory> trajectories;
};
// Evolves each mean-zero f0 (whitened) along f' = L f and checks the (1 -+ eps)/2 sandwich of I_eps, the bound
// ||f_t||^2 <= 3 e^{-kappa t} ||f_0||^2 (slack 1e-8 ||f_0||^2), and that I_eps does not increase.
// alpha1, alpha2 are clamped below at 1 as the decay statement requires.
HypocoerciveResult hypocoercive_decay(const DiscreteOperatorSet& ops, double n_hat, double alpha1, double alpha2,
                                      const std::vector<Eigen::VectorXd>& f0, const std::vector<double>& times);

// 0..40 in steps of 0.25, then 100 geometric points up to t_end.
std::vector<double> decay_times(double t_end);

}  // namespace hypolab
