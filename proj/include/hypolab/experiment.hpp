#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "hypolab/operator_lab.hpp"
#include "hypolab/rate.hpp"
#include "hypolab/report.hpp"
#include "hypolab/sde.hpp"

namespace hypolab {

inline constexpr const char* kArtifactVersion = "1.0.0";
inline constexpr const char* kReportSchema = "hypolab.report.v1";

// Family name plus the parameters that family takes; nothing else is accepted.
//   quadratic   (none)
//   power       k, delta
//   log_power   p
//   log_log     p
struct PotentialSpec {
    std::string family = "quadratic";
    int dim = 1;
    double k = 1.0, delta = 1.0, p = 2.0;
    Potential make() const;
};

struct RateCaseSpec {
    RateCase rate_case = RateCase::A1;
    CaseParams params;
};

struct RatesConfig {
    std::vector<RateCaseSpec> cases;
    double t_min = 1e2, t_max = 1e8;
    int points = 61;
    double exponent_tolerance = 0.10;  // relative
};

struct StationarityConfig {
    double t_end = 10.0;
    std::size_t paths = 100000;
    std::vector<std::string> moments = {"x2", "y2"};  // x2, y2 or an observable tag
};

struct SimulateConfig {
    PotentialSpec v1, v2;
    Eigen::MatrixXd q = Eigen::MatrixXd::Constant(1, 1, 0.5);
    std::size_t paths = 100000;
    double step = 1e-3;
    double t_end = 10.0;
    int times = 41;
    std::vector<std::string> observables = {"tanh_x", "step_x", "bump_xy"};
    std::string expect;  // "", "exponential" or "subexponential"
    std::optional<StationarityConfig> stationarity;
    SdeSystem system() const;
};

struct LabEntry {
    PotentialSpec v1, v2;
    double q = 1.0;
    LabSystem system() const;
};

struct OperatorLabConfig {
    std::vector<LabEntry> battery;
    int resolution = 64;
    std::vector<std::string> checks = {"structure", "b_bounds", "subordination"};
    int trials = 1000;
    int decay_trials = 20;
    double decay_horizon = 20.0;  // in units of 1 / kappa
};

struct AssumptionsConfig {
    std::vector<PotentialSpec> potentials;
    double tau = 1.0;
    double m_candidate = 10.0;
    int samples = 2000;
    double radius = 1000.0;
    int d2 = 1;
    double profile_lo = 1e-3, profile_hi = 1e6;
    int profile_points = 200;
    std::vector<int> moments = {2, 4};
};

enum class ExperimentKind { Rates, Simulate, OperatorLab, CheckAssumptions };
std::string to_string(ExperimentKind k);
ExperimentKind experiment_kind_from_string(const std::string& s);

struct ExperimentConfig {
    ExperimentKind kind = ExperimentKind::Rates;
    std::uint64_t seed = 1;
    int threads = 1;
    std::string out = "out";
    RatesConfig rates;
    SimulateConfig simulate;
    OperatorLabConfig operator_lab;
    AssumptionsConfig check_assumptions;
};

// The settings each kind runs with when no config file is given.
ExperimentConfig default_config(ExperimentKind kind);
// The sixteen rate settings, two per case.
std::vector<RateCaseSpec> default_rate_cases();

// Missing fields take default_config(kind). Strict: unknown fields, wrong types and out-of-range values raise ConfigError naming the JSON path.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);
// Writes only the section of the selected kind; config_from_json(config_to_json(c)) reproduces c.
nlohmann::json config_to_json(const ExperimentConfig& c);
// FNV-1a of the canonical config without `out` and `threads`, which do not change results.
std::string config_hash(const ExperimentConfig& c);

struct ExperimentReport {
    ExperimentConfig config;
    std::vector<CheckReport> checks;
    std::vector<std::string> check_resolution;   // per check
    std::vector<std::string> check_potentials;   // per check
    std::string started, finished;                // UTC ISO 8601; excluded from comparisons
    bool passed() const;
    // 0 all checks pass, 3 an assumption failed, 4 a numerical failure.
    int exit_code() const;
    nlohmann::json to_json() const;
};

// Runs the experiment and writes report.json plus the kind's CSV files into config.out.
// Validation happens before anything is written.
ExperimentReport run(const ExperimentConfig& config);
// The same without touching the filesystem.
ExperimentReport evaluate(const ExperimentConfig& config);
void write_outputs(const ExperimentReport& report, const std::filesystem::path& dir);

// Versioned CSV: the first line is "# schema=<name>.v<k>", then a header row.
struct CsvTable {
    std::string schema;
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};
void write_csv(const std::filesystem::path& path, const CsvTable& table);
// Throws ConfigError unless the file declares exactly `expected_schema`.
CsvTable read_csv(const std::filesystem::path& path, const std::string& expected_schema);
std::string fmt17(double v);

struct DiffEntry {
    std::string check, field, category;  // category: drift, expected-drift, within-se-band, seed-dependent
    double a = 0.0, b = 0.0, band = 0.0;
};
struct DiffSummary {
    std::vector<DiffEntry> entries;
    std::vector<std::string> notes;  // config-level differences
    bool drifted() const;
    nlohmann::json to_json() const;
};
// Throws ConfigError when the reports are of different kinds or schemas.
DiffSummary compare(const nlohmann::json& report_a, const nlohmann::json& report_b);

}  // namespace hypolab
