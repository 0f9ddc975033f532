#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "hypolab/potential.hpp"

namespace hypolab {

// Inverse-CDF sampler for the radial law of |sigma x - b| under e^{-V}:
// density of rho is proportional to rho^(d-1) e^{-Phi(rho^2)}.
class RadialSampler {
public:
    explicit RadialSampler(const Potential& v, double tail_mass = 1e-10);

    double cdf(double rho) const;       // table CDF, normalized on [0, rmax]
    double exact_cdf(double rho) const; // quadrature CDF of the untruncated law
    double quantile(double u) const;    // u in (0, 1)
    double rmax() const { return rmax_; }
    double kolmogorov_error() const { return kolmogorov_; }
    std::size_t nodes() const { return rho_.size(); }

    // One draw in original coordinates; consumes the generator.
    void draw(std::mt19937_64& rng, double* out) const;

private:
    double density(double rho) const;  // normalized by the full mass
    void build(int n);

    Potential v_;
    Eigen::MatrixXd sigma_inv_;
    double total_ = 0.0;  // int_0^inf rho^(d-1) e^{-Phi}
    double scale_ = 1.0;
    double rmax_ = 0.0;
    double kolmogorov_ = 0.0;
    double mass_ = 1.0;  // table mass on [0, rmax]
    std::vector<double> rho_, F_, dF_;
};

double uniform01(std::mt19937_64& rng);  // open interval (0, 1), 53-bit

struct ProductMeasure {
    ProductMeasure(const Potential& v1, const Potential& v2);
    Potential v1, v2;
    double z1, z2;
    RadialSampler s1, s2;
    int d1() const { return v1.dim(); }
    int d2() const { return v2.dim(); }
};

// Row-major n x (d1 + d2) points.
struct Batch {
    int d1 = 1, d2 = 1;
    std::vector<double> data;
    std::size_t size() const { return data.size() / (d1 + d2); }
    std::span<const double> x(std::size_t i) const {
        return {data.data() + i * (d1 + d2), static_cast<std::size_t>(d1)};
    }
    std::span<const double> y(std::size_t i) const {
        return {data.data() + i * (d1 + d2) + d1, static_cast<std::size_t>(d2)};
    }
};

// Chunked substreams keyed by (seed, chunk): identical output for any thread count.
inline constexpr std::size_t kSampleChunk = 4096;
Batch sample(const ProductMeasure& m, std::size_t n, std::uint64_t seed, int threads = 1);

struct Observable {
    std::string tag;
    std::function<double(std::span<const double> x, std::span<const double> y)> f;
    double declared_osc = 1.0;
};

// Bounded observables used in decay experiments (first coordinates of x and y).
Observable tanh_x();            // osc 2
Observable smooth_step_x();     // 0.5 tanh(4(x - 0.5)), osc 1
Observable gaussian_bump_xy();  // exp(-(x^2 + y^2)/2), osc 1
Observable observable_by_tag(const std::string& tag);

struct Estimate {
    double value = 0.0;
    double se = 0.0;
};

// Unbiased variance with delete-one jackknife standard error.
Estimate variance_of(std::span<const double> values);
Estimate variance(const Observable& f, const Batch& batch);
Estimate mean_of(std::span<const double> values);

struct OscResult {
    double empirical = 0.0;
    double declared = 0.0;
};
// Throws AssumptionViolation when the batch exceeds the declared oscillation.
OscResult osc(const Observable& f, const Batch& batch);

}  // namespace hypolab
