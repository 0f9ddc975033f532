#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace hypolab {

// Exit code mapping used by the CLI: config 2, assumption 3, numerical 4.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct AssumptionViolation : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericalFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class FailureKind { None, Assumption, Numerical };

// Whether a number was measured or follows from other numbers by a formula.
enum class Provenance { Measured, Theory };

struct Margin {
    std::string name;
    double value = 0.0;
    Provenance provenance = Provenance::Measured;
    double se = 0.0;                    // Monte Carlo standard error; 0 when fixed given the seed
    bool seed_dependent = false;        // extreme over random trials: moves with the seed, has no SE
    bool refinement_sensitive = false;  // discretization error: moves with the grid
};

struct CheckReport {
    std::string name;
    bool passed = false;
    double measured = 0.0;
    double threshold = 0.0;
    std::string range;       // the finite domain the certificate covers
    std::string diagnostic;  // empty when passed
    FailureKind kind = FailureKind::None;
    std::vector<Margin> margins;
    std::vector<double> witness;  // violating vector, if any

    void fail(FailureKind k, std::string why) {
        passed = false;
        kind = k;
        diagnostic = std::move(why);
    }
};

}  // namespace hypolab
