#include "hypolab/experiment.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

namespace hypolab {

using nlohmann::json;

namespace {

// Reads one JSON object strictly: every key must be consumed, or done() names the stray one.
class Reader {
public:
    Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
    }

    bool has(const std::string& key) const { return j_.contains(key); }

    const json& raw(const std::string& key) {
        used_.insert(key);
        return j_.at(key);
    }

    double num(const std::string& key, double def, double lo = -INFINITY, double hi = INFINITY) {
        if (!has(key)) return def;
        const json& v = raw(key);
        if (!v.is_number()) throw ConfigError(at(key) + ": expected a number");
        const double x = v.get<double>();
        if (!(x >= lo && x <= hi))
            throw ConfigError(at(key) + ": " + fmt17(x) + " outside [" + fmt17(lo) + ", " + fmt17(hi) + "]");
        return x;
    }

    std::int64_t integer(const std::string& key, std::int64_t def, std::int64_t lo, std::int64_t hi) {
        if (!has(key)) return def;
        const json& v = raw(key);
        if (!v.is_number_integer()) throw ConfigError(at(key) + ": expected an integer");
        if (v.is_number_unsigned() && v.get<std::uint64_t>() > static_cast<std::uint64_t>(hi))
            throw ConfigError(at(key) + ": too large");
        const std::int64_t x = v.get<std::int64_t>();
        if (x < lo || x > hi)
            throw ConfigError(at(key) + ": " + std::to_string(x) + " outside [" + std::to_string(lo) + ", " +
                              std::to_string(hi) + "]");
        return x;
    }

    std::uint64_t u64(const std::string& key, std::uint64_t def) {
        if (!has(key)) return def;
        const json& v = raw(key);
        if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
            throw ConfigError(at(key) + ": expected a non-negative integer");
        return v.get<std::uint64_t>();
    }

    std::string str(const std::string& key, const std::string& def) {
        if (!has(key)) return def;
        const json& v = raw(key);
        if (!v.is_string()) throw ConfigError(at(key) + ": expected a string");
        return v.get<std::string>();
    }

    bool boolean(const std::string& key, bool def) {
        if (!has(key)) return def;
        const json& v = raw(key);
        if (!v.is_boolean()) throw ConfigError(at(key) + ": expected true or false");
        return v.get<bool>();
    }

    const json& array(const std::string& key) {
        const json& v = raw(key);
        if (!v.is_array()) throw ConfigError(at(key) + ": expected an array");
        return v;
    }

    std::vector<std::string> strings(const std::string& key, std::vector<std::string> def) {
        if (!has(key)) return def;
        std::vector<std::string> out;
        const json& a = array(key);
        for (std::size_t i = 0; i < a.size(); ++i) {
            if (!a[i].is_string()) throw ConfigError(at(key) + "[" + std::to_string(i) + "]: expected a string");
            out.push_back(a[i].get<std::string>());
        }
        return out;
    }

    std::string at(const std::string& key) const { return path_ + "." + key; }

    void done() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!used_.count(it.key())) throw ConfigError(at(it.key()) + ": unknown field");
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> used_;
};

PotentialSpec read_potential(const json& j, const std::string& path) {
    Reader r(j, path);
    PotentialSpec p;
    p.family = r.str("family", "");
    p.dim = static_cast<int>(r.integer("dim", 1, 1, 64));
    if (p.family == "power") {
        p.k = r.num("k", 1.0, 1e-300);
        p.delta = r.num("delta", 1.0, 1e-300);
    } else if (p.family == "log_power" || p.family == "log_log") {
        p.p = r.num("p", 2.0, 1e-300);
    } else if (p.family != "quadratic") {
        throw ConfigError(r.at("family") + ": expected quadratic, power, log_power or log_log");
    }
    r.done();
    p.make();  // surfaces family-level parameter errors now
    return p;
}

json write_potential(const PotentialSpec& p) {
    json j = {{"family", p.family}, {"dim", p.dim}};
    if (p.family == "power") {
        j["k"] = p.k;
        j["delta"] = p.delta;
    } else if (p.family == "log_power" || p.family == "log_log") {
        j["p"] = p.p;
    }
    return j;
}

RateCaseSpec read_case(const json& j, const std::string& path) {
    Reader r(j, path);
    RateCaseSpec c;
    try {
        c.rate_case = rate_case_from_string(r.str("case", ""));
    } catch (const std::exception&) {
        throw ConfigError(r.at("case") + ": expected one of A1 A2 A3 B1 B2 B3 C1 C2");
    }
    CaseParams& m = c.params;
    m.delta = r.num("delta", m.delta);
    m.eps = r.num("eps", m.eps);
    m.p = r.num("p", m.p);
    m.q = r.num("q", m.q);
    m.d1 = static_cast<int>(r.integer("d1", m.d1, 1, 64));
    m.d2 = static_cast<int>(r.integer("d2", m.d2, 1, 64));
    m.c = r.num("c", m.c);
    m.c1 = r.num("c1", m.c1);
    m.c2 = r.num("c2", m.c2);
    m.v2_log_power = r.boolean("v2_log_power", m.v2_log_power);
    r.done();
    try {
        validate(c.rate_case, m);
    } catch (const ConfigError& e) {
        throw ConfigError(path + ": " + e.what());
    }
    return c;
}

json write_case(const RateCaseSpec& c) {
    const CaseParams& m = c.params;
    return {{"case", to_string(c.rate_case)}, {"delta", m.delta}, {"eps", m.eps}, {"p", m.p},
            {"q", m.q},   {"d1", m.d1},     {"d2", m.d2},       {"c", m.c},   {"c1", m.c1},
            {"c2", m.c2}, {"v2_log_power", m.v2_log_power}};
}

Eigen::MatrixXd read_q(const json& v, const std::string& path) {
    if (v.is_number()) return Eigen::MatrixXd::Constant(1, 1, v.get<double>());
    if (!v.is_array() || v.empty() || !v[0].is_array() || v[0].empty())
        throw ConfigError(path + ": expected a number or a non-empty array of rows");
    Eigen::MatrixXd q(v.size(), v[0].size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!v[i].is_array() || v[i].size() != v[0].size()) throw ConfigError(path + ": rows differ in length");
        for (std::size_t k = 0; k < v[i].size(); ++k) {
            if (!v[i][k].is_number()) throw ConfigError(path + ": expected numbers");
            q(i, k) = v[i][k].get<double>();
        }
    }
    return q;
}

json write_q(const Eigen::MatrixXd& q) {
    if (q.size() == 1) return q(0, 0);
    json rows = json::array();
    for (Eigen::Index i = 0; i < q.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index k = 0; k < q.cols(); ++k) row.push_back(q(i, k));
        rows.push_back(row);
    }
    return rows;
}

const std::vector<std::string> kLabChecks = {"structure",   "b_bounds",       "sa_relation", "g_formula",
                                             "wpi",         "subordination", "decay"};

void read_section(ExperimentConfig& c, const json& j, const std::string& path) {
    Reader r(j, path);
    switch (c.kind) {
        case ExperimentKind::Rates: {
            RatesConfig& s = c.rates;
            if (r.has("cases")) {
                const json& a = r.array("cases");
                s.cases.clear();
                for (std::size_t i = 0; i < a.size(); ++i)
                    s.cases.push_back(read_case(a[i], path + ".cases[" + std::to_string(i) + "]"));
            }
            s.t_min = r.num("t_min", s.t_min, 1e-300);
            s.t_max = r.num("t_max", s.t_max, s.t_min * 1e3, 1e300);
            s.points = static_cast<int>(r.integer("points", s.points, 10, 100000));
            s.exponent_tolerance = r.num("exponent_tolerance", s.exponent_tolerance, 0.0, 10.0);
            if (s.cases.empty()) throw ConfigError(path + ".cases: at least one case required");
            break;
        }
        case ExperimentKind::Simulate: {
            SimulateConfig& s = c.simulate;
            if (r.has("v1")) s.v1 = read_potential(r.raw("v1"), path + ".v1");
            if (r.has("v2")) s.v2 = read_potential(r.raw("v2"), path + ".v2");
            if (r.has("q")) s.q = read_q(r.raw("q"), path + ".q");
            s.paths = static_cast<std::size_t>(r.integer("paths", static_cast<std::int64_t>(s.paths), 2 * kJackknifeGroups,
                                                         std::int64_t{1} << 40));
            s.step = r.num("step", s.step, 1e-300, 1.0);
            s.t_end = r.num("t_end", s.t_end, 1e-300, 1e6);
            s.times = static_cast<int>(r.integer("times", s.times, 2, 100000));
            s.observables = r.strings("observables", s.observables);
            for (const auto& tag : s.observables) observable_by_tag(tag);
            s.expect = r.str("expect", s.expect);
            if (!s.expect.empty() && s.expect != "exponential" && s.expect != "subexponential")
                throw ConfigError(r.at("expect") + ": expected exponential or subexponential");
            if (r.has("stationarity")) {
                Reader st(r.raw("stationarity"), path + ".stationarity");
                StationarityConfig sc;
                sc.t_end = st.num("t_end", sc.t_end, 1e-300, 1e6);
                sc.paths = static_cast<std::size_t>(
                    st.integer("paths", static_cast<std::int64_t>(sc.paths), 2 * kJackknifeGroups, std::int64_t{1} << 40));
                sc.moments = st.strings("moments", sc.moments);
                for (const auto& m : sc.moments)
                    if (m != "x2" && m != "y2") observable_by_tag(m);
                st.done();
                s.stationarity = sc;
            } else {
                s.stationarity.reset();
            }
            s.system();
            break;
        }
        case ExperimentKind::OperatorLab: {
            OperatorLabConfig& s = c.operator_lab;
            if (r.has("battery")) {
                const json& a = r.array("battery");
                s.battery.clear();
                for (std::size_t i = 0; i < a.size(); ++i) {
                    const std::string p = path + ".battery[" + std::to_string(i) + "]";
                    Reader e(a[i], p);
                    LabEntry le;
                    if (e.has("v1")) le.v1 = read_potential(e.raw("v1"), p + ".v1");
                    if (e.has("v2")) le.v2 = read_potential(e.raw("v2"), p + ".v2");
                    le.q = e.num("q", le.q);
                    if (le.q == 0.0) throw ConfigError(e.at("q") + ": Q must be non-zero");
                    if (le.v1.dim != 1 || le.v2.dim != 1) throw ConfigError(p + ": the operator lab is one-dimensional");
                    e.done();
                    s.battery.push_back(le);
                }
            }
            if (s.battery.empty()) throw ConfigError(path + ".battery: at least one system required");
            s.resolution = static_cast<int>(r.integer("resolution", s.resolution, 8, 512));
            s.checks = r.strings("checks", s.checks);
            for (const auto& k : s.checks)
                if (std::find(kLabChecks.begin(), kLabChecks.end(), k) == kLabChecks.end())
                    throw ConfigError(r.at("checks") + ": unknown check '" + k + "'");
            s.trials = static_cast<int>(r.integer("trials", s.trials, 1, 10000000));
            s.decay_trials = static_cast<int>(r.integer("decay_trials", s.decay_trials, 1, 100000));
            s.decay_horizon = r.num("decay_horizon", s.decay_horizon, 1e-300, 1e6);
            break;
        }
        case ExperimentKind::CheckAssumptions: {
            AssumptionsConfig& s = c.check_assumptions;
            if (r.has("potentials")) {
                const json& a = r.array("potentials");
                s.potentials.clear();
                for (std::size_t i = 0; i < a.size(); ++i)
                    s.potentials.push_back(read_potential(a[i], path + ".potentials[" + std::to_string(i) + "]"));
            }
            if (s.potentials.empty()) throw ConfigError(path + ".potentials: at least one potential required");
            s.tau = r.num("tau", s.tau, 1.0, std::nextafter(2.0, 0.0));
            s.m_candidate = r.num("m_candidate", s.m_candidate, 0.0);
            s.samples = static_cast<int>(r.integer("samples", s.samples, 1, 100000000));
            s.radius = r.num("radius", s.radius, 1e-300);
            s.d2 = static_cast<int>(r.integer("d2", s.d2, 1, 64));
            s.profile_lo = r.num("profile_lo", s.profile_lo, 1e-300);
            s.profile_hi = r.num("profile_hi", s.profile_hi, s.profile_lo);
            s.profile_points = static_cast<int>(r.integer("profile_points", s.profile_points, 2, 1000000));
            if (r.has("moments")) {
                const json& a = r.array("moments");
                s.moments.clear();
                for (const auto& v : a) {
                    if (!v.is_number_integer() || (v.get<int>() != 2 && v.get<int>() != 4))
                        throw ConfigError(r.at("moments") + ": powers must be 2 or 4");
                    s.moments.push_back(v.get<int>());
                }
            }
            break;
        }
    }
    r.done();
}

json write_section(const ExperimentConfig& c) {
    switch (c.kind) {
        case ExperimentKind::Rates: {
            json cases = json::array();
            for (const auto& k : c.rates.cases) cases.push_back(write_case(k));
            return {{"cases", cases},
                    {"t_min", c.rates.t_min},
                    {"t_max", c.rates.t_max},
                    {"points", c.rates.points},
                    {"exponent_tolerance", c.rates.exponent_tolerance}};
        }
        case ExperimentKind::Simulate: {
            const SimulateConfig& s = c.simulate;
            json j = {{"v1", write_potential(s.v1)}, {"v2", write_potential(s.v2)}, {"q", write_q(s.q)},
                      {"paths", s.paths},            {"step", s.step},              {"t_end", s.t_end},
                      {"times", s.times},            {"observables", s.observables}, {"expect", s.expect}};
            if (s.stationarity)
                j["stationarity"] = {{"t_end", s.stationarity->t_end},
                                     {"paths", s.stationarity->paths},
                                     {"moments", s.stationarity->moments}};
            return j;
        }
        case ExperimentKind::OperatorLab: {
            const OperatorLabConfig& s = c.operator_lab;
            json battery = json::array();
            for (const auto& e : s.battery)
                battery.push_back({{"v1", write_potential(e.v1)}, {"v2", write_potential(e.v2)}, {"q", e.q}});
            return {{"battery", battery},      {"resolution", s.resolution},     {"checks", s.checks},
                    {"trials", s.trials},      {"decay_trials", s.decay_trials}, {"decay_horizon", s.decay_horizon}};
        }
        case ExperimentKind::CheckAssumptions: {
            const AssumptionsConfig& s = c.check_assumptions;
            json pots = json::array();
            for (const auto& p : s.potentials) pots.push_back(write_potential(p));
            return {{"potentials", pots},
                    {"tau", s.tau},
                    {"m_candidate", s.m_candidate},
                    {"samples", s.samples},
                    {"radius", s.radius},
                    {"d2", s.d2},
                    {"profile_lo", s.profile_lo},
                    {"profile_hi", s.profile_hi},
                    {"profile_points", s.profile_points},
                    {"moments", s.moments}};
        }
    }
    return {};
}

std::string section_key(ExperimentKind k) {
    switch (k) {
        case ExperimentKind::Rates: return "rates";
        case ExperimentKind::Simulate: return "simulate";
        case ExperimentKind::OperatorLab: return "operator_lab";
        case ExperimentKind::CheckAssumptions: return "check_assumptions";
    }
    return "";
}

std::string hex64(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string utc_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::vector<double> linspace(double a, double b, int n) {
    std::vector<double> t(n);
    for (int i = 0; i < n; ++i) t[i] = a + (b - a) * i / (n - 1);
    return t;
}

// Runs one check, turning assumption and numerical exceptions into a failed report.
template <class F>
CheckReport guarded(const std::string& name, F&& f) {
    try {
        return f();
    } catch (const AssumptionViolation& e) {
        CheckReport r;
        r.name = name;
        r.fail(FailureKind::Assumption, e.what());
        return r;
    } catch (const NumericalFailure& e) {
        CheckReport r;
        r.name = name;
        r.fail(FailureKind::Numerical, e.what());
        return r;
    }
}

// Side tables filled during evaluation and written next to report.json.
struct Tables {
    std::vector<CsvTable> csv;
    std::vector<std::string> names;
};

struct Run {
    ExperimentReport report;
    Tables tables;

    void add(CheckReport r, std::string resolution, std::string potentials) {
        report.checks.push_back(std::move(r));
        report.check_resolution.push_back(std::move(resolution));
        report.check_potentials.push_back(std::move(potentials));
    }
};

void run_rates(const ExperimentConfig& c, Run& run) {
    const RatesConfig& s = c.rates;
    CsvTable t{"hypolab.rates.v1",
               {"t", "xi_implicit", "xi_closed_form", "xi_hw", "log_xi_implicit", "log_xi_closed_form", "log_xi_hw",
                "case", "params_hash"},
               {}};
    std::vector<double> times(s.points);
    for (int i = 0; i < s.points; ++i)
        times[i] = s.t_min * std::pow(s.t_max / s.t_min, static_cast<double>(i) / (s.points - 1));
    const std::string range = "t in [" + fmt17(s.t_min) + ", " + fmt17(s.t_max) + "], " +
                              std::to_string(s.points) + " log-spaced points";
    for (std::size_t k = 0; k < s.cases.size(); ++k) {
        const RateCaseSpec& rc = s.cases[k];
        const std::string tag = to_string(rc.rate_case);
        const std::string phash = hex64(fnv1a64(write_case(rc).dump()));
        const std::string pot = write_case(rc).dump();
        CheckReport r = guarded("rates:" + tag + "#" + std::to_string(k), [&] {
            const auto [a1, a2] = case_alphas(rc.rate_case, rc.params);
            std::vector<std::pair<double, double>> samples;
            bool monotone = true, clamped = false;
            double prev = INFINITY;
            for (double ti : times) {
                const XiResult xi = xi_implicit(a1, a2, rc.params.c1, rc.params.c2, ti);
                const XiResult hw = xi_hw(a1, rc.params.c2, ti);
                const double lc = log_xi_closed_form(rc.rate_case, rc.params, ti);
                samples.emplace_back(ti, xi.log_xi);
                monotone = monotone && xi.monotone && xi.log_xi <= prev;
                clamped = clamped || xi.clamped;
                prev = xi.log_xi;
                t.rows.push_back({fmt17(ti), fmt17(std::exp(xi.log_xi)), fmt17(std::exp(lc)), fmt17(std::exp(hw.log_xi)),
                                  fmt17(xi.log_xi), fmt17(lc), fmt17(hw.log_xi), tag, phash});
            }
            const FitResult fit = fit_asymptotics_log(samples);
            const DecayClass want = closed_form_class(rc.rate_case, rc.params);
            const double e0 = closed_form_exponent(rc.rate_case, rc.params);
            const double rel = std::abs(fit.exponent - e0) / e0;
            CheckReport out;
            out.name = "rates:" + tag + "#" + std::to_string(k);
            out.range = range;
            out.measured = rel;
            out.threshold = s.exponent_tolerance;
            out.margins = {{"fitted exponent", fit.exponent},
                           {"closed-form exponent", e0, Provenance::Theory},
                           {"relative exponent error", rel},
                           {"fit residual", fit.residual},
                           {"fitted class matches", fit.cls == want ? 1.0 : 0.0}};
            out.passed = true;
            if (fit.cls != want)
                out.fail(FailureKind::Numerical, "fitted class " + to_string(fit.cls) +
                                                     (fit.note.empty() ? "" : " (" + fit.note + ")") +
                                                     " but the closed form is " + to_string(want));
            else if (!(rel <= s.exponent_tolerance))
                out.fail(FailureKind::Numerical, "fitted exponent " + fmt17(fit.exponent) + " vs closed form " +
                                                     fmt17(e0) + ": relative error " + fmt17(rel));
            else if (!monotone)
                out.fail(FailureKind::Numerical, "xi is not non-increasing in t");
            else if (clamped)
                out.fail(FailureKind::Numerical, "xi clamped at 1 inside the window");
            return out;
        });
        run.add(std::move(r), range, pot);
    }
    run.tables.csv.push_back(std::move(t));
    run.tables.names.push_back("rates.csv");
}

void run_simulate(const ExperimentConfig& c, Run& run) {
    const SimulateConfig& s = c.simulate;
    const SdeSystem sys = s.system();
    const std::string pot = sys.describe();
    std::ostringstream res;
    res << "n=" << s.paths << ", h=" << fmt17(s.step) << ", T=" << fmt17(s.t_end) << ", " << s.times << " times";
    std::vector<Observable> obs;
    for (const auto& tag : s.observables) obs.push_back(observable_by_tag(tag));
    const std::vector<double> times = linspace(0.0, s.t_end, s.times);

    CsvTable table{"hypolab.decay.v1", {"observable", "t", "var_hat", "se", "n", "h", "seed", "system_hash"}, {}};
    const std::string sys_hash = hex64(fnv1a64(write_section(c).dump()));
    DecayCurves curves;
    try {
        curves = decay_curves(sys, obs, times, s.paths, s.step, c.seed, c.threads);
    } catch (const NumericalFailure& e) {
        CheckReport r;
        r.name = "decay_curves";
        r.fail(FailureKind::Numerical, e.what());
        run.add(std::move(r), res.str(), pot);
        return;
    }
    for (std::size_t o = 0; o < obs.size(); ++o) {
        for (const auto& p : curves.curves[o]) table.rows.push_back({obs[o].tag, fmt17(p.t), fmt17(p.var), fmt17(p.se),
                                std::to_string(s.paths), fmt17(s.step), std::to_string(c.seed), sys_hash});
        const McDecayFit f = classify_mc_decay(curves.curves[o], curves.loo[o]);
        CheckReport r;
        r.name = "decay:" + obs[o].tag;
        r.range = "t in [" + fmt17(f.t_start) + ", " + fmt17(f.t_resolved) + "] (resolved window)";
        r.measured = f.ratio;
        r.threshold = kDecelerationRatio;
        constexpr auto M = Provenance::Measured;
        r.margins = {{"rate", f.rate, M, f.rate_se},
                     {"early rate", f.early_rate, M, f.early_se},
                     {"late rate", f.late_rate, M, f.late_se},
                     {"late/early ratio", f.ratio, M, f.ratio_se},
                     {"late log-log slope", f.log_slope, M, f.log_slope_se},
                     {"window start", f.t_start, M, 0.0, true},
                     {"window end", f.t_resolved, M, 0.0, true},
                     {"deceleration threshold", kDecelerationRatio, Provenance::Theory}};
        r.passed = true;
        const std::string got = to_string(f.cls);
        if (f.cls == DecayClass::Inconclusive) {
            r.fail(FailureKind::Numerical, "inconclusive: " + f.note);
        } else if (s.expect == "exponential") {
            if (f.cls != DecayClass::Exponential)
                r.fail(FailureKind::Numerical, "expected exponential decay, classified " + got + " (late/early " +
                                                   fmt17(f.ratio) + " +- " + fmt17(f.ratio_se) + ")");
            else if (!(f.rate > 3 * f.rate_se))
                r.fail(FailureKind::Numerical, "rate " + fmt17(f.rate) + " is within 3 SE of zero");
        } else if (s.expect == "subexponential" && f.cls == DecayClass::Exponential) {
            r.fail(FailureKind::Numerical, "expected sub-exponential decay, classified exponential (late/early " +
                                               fmt17(f.ratio) + " +- " + fmt17(f.ratio_se) + ")");
        }
        if (r.passed) r.diagnostic.clear();
        run.add(std::move(r), res.str(), pot + ";class=" + got);
    }
    run.tables.csv.push_back(std::move(table));
    run.tables.names.push_back("decay.csv");

    if (s.stationarity) {
        const StationarityConfig& sc = *s.stationarity;
        std::vector<Moment> moments;
        for (const auto& m : sc.moments)
            moments.push_back(m == "x2" ? moment_x2() : m == "y2" ? moment_y2() : moment_of(observable_by_tag(m)));
        std::ostringstream sres;
        sres << "n=" << sc.paths << ", h=" << fmt17(s.step) << ", T=" << fmt17(sc.t_end);
        CsvTable st{"hypolab.stationarity.v1", {"moment", "t", "drift", "se"}, {}};
        // An independent stream: seed + 1.
        CheckReport r = guarded("stationarity", [&] {
            const StationarityResult sr =
                stationarity_check(sys, moments, sc.t_end, sc.paths, s.step, c.seed + 1, c.threads);
            for (std::size_t m = 0; m < sr.tags.size(); ++m)
                for (std::size_t j = 0; j < sr.times.size(); ++j)
                    st.rows.push_back(
                        {sr.tags[m], fmt17(sr.times[j]), fmt17(sr.drift[m][j].value), fmt17(sr.drift[m][j].se)});
            return sr.report;
        });
        run.add(std::move(r), sres.str(), pot);
        run.tables.csv.push_back(std::move(st));
        run.tables.names.push_back("stationarity.csv");
    }
}

CheckReport n_report(const NEstimate& n) {
    CheckReport r;
    r.name = "n_estimate";
    r.passed = true;
    r.measured = n.n_hat;
    r.margins = {{"N", n.n_hat, Provenance::Theory},
                 {"sup |K|", n.k_sup},
                 {"|pi1 B S pi2|", n.bs_norm},
                 {"|(BA)*| exact", n.ba_star},
                 {"|(BA)*| power", n.ba_star_power},
                 {"power iterations", static_cast<double>(n.power_iterations)}};
    if (std::abs(n.ba_star_power - n.ba_star) > 1e-3 * n.ba_star)
        r.fail(FailureKind::Numerical, "power iteration disagrees with the exact |(BA)*|");
    return r;
}

CheckReport wpi_report(const DiscreteWpi& w1, const DiscreteWpi& w2) {
    CheckReport r;
    r.name = "wpi";
    r.passed = true;
    r.measured = std::min(w1.gap, w2.gap);
    r.margins = {{"gap1", w1.gap, Provenance::Measured, 0.0, false, true},
                 {"gap2", w2.gap, Provenance::Measured, 0.0, false, true},
                 {"alpha1", 1.0 / w1.gap, Provenance::Theory, 0.0, false, true},
                 {"alpha2", 1.0 / w2.gap, Provenance::Theory, 0.0, false, true},
                 {"star_m", w1.star_m, Provenance::Measured, 0.0, false, true},
                 {"star_m spread", w1.star_m_spread, Provenance::Measured, 0.0, false, true}};
    for (const auto* w : {&w1, &w2})
        for (std::size_t k = 1; k < w->curve.size(); ++k)
            if (w->curve[k].second > w->curve[k - 1].second + 1e-12) {
                r.fail(FailureKind::Numerical, "cutoff rate curve increases in r");
                return r;
            }
    return r;
}

void run_operator_lab(const ExperimentConfig& c, Run& run) {
    const OperatorLabConfig& s = c.operator_lab;
    auto wants = [&](const std::string& k) { return std::find(s.checks.begin(), s.checks.end(), k) != s.checks.end(); };
    const std::string res = std::to_string(s.resolution) + "^2";
    CsvTable traj{"hypolab.hypocoercive.v1", {"system", "trajectory", "t", "norm2", "i_eps"}, {}};
    for (std::size_t b = 0; b < s.battery.size(); ++b) {
        const LabSystem sys = s.battery[b].system();
        const std::string pot = sys.describe();
        std::optional<DiscreteOperatorSet> ops;
        const CheckReport built = guarded("build", [&] {
            ops.emplace(build(sys, s.resolution, s.resolution));
            CheckReport r;
            r.name = "build";
            r.passed = true;
            r.range = "box [-" + fmt17(ops->grid.rx) + ", " + fmt17(ops->grid.rx) + "] x [-" + fmt17(ops->grid.ry) +
                      ", " + fmt17(ops->grid.ry) + "]";
            return r;
        });
        if (!built.passed) {
            run.add(built, res, pot);
            continue;
        }
        if (wants("structure")) run.add(check_structure(*ops), res, pot);

        std::optional<NEstimate> n;
        if (wants("b_bounds") || wants("decay")) {
            CheckReport nr = guarded("n_estimate", [&] {
                n = estimate_N(*ops);
                return n_report(*n);
            });
            run.add(std::move(nr), res, pot);
        }
        if (wants("b_bounds") && n) run.add(verify_b_bounds(*ops, n->n_hat, s.trials, c.seed), res, pot);
        const std::string refine = std::to_string(s.resolution) + "^2," + std::to_string(2 * s.resolution) + "^2";
        if (wants("sa_relation"))
            run.add(guarded("sa_relation", [&] { return check_sa_relation(sys, s.resolution); }), refine, pot);
        if (wants("g_formula"))
            run.add(guarded("g_formula", [&] { return check_g_formula(sys, s.resolution); }), refine, pot);

        std::optional<DiscreteWpi> w1, w2;
        if (wants("wpi") || wants("subordination") || wants("decay")) {
            CheckReport wr = guarded("wpi", [&] {
                w1 = discrete_wpi(*ops, 1);
                w2 = discrete_wpi(*ops, 2);
                return wpi_report(*w1, *w2);
            });
            if (wants("wpi") || !wr.passed) run.add(std::move(wr), res, pot);
        }
        if (wants("subordination") && w1)
            run.add(subordination_check(*ops, 1.0 / w1->gap, s.trials, c.seed), res, pot);
        if (wants("decay") && n && w1 && w2) {
            CheckReport dr = guarded("hypocoercive_decay", [&] {
                const HypocoerciveConstants hc = hypocoercive_constants(n->n_hat, 1.0 / w1->gap, 1.0 / w2->gap);
                std::mt19937_64 rng(c.seed);
                std::normal_distribution<double> nd;
                std::vector<Eigen::VectorXd> f0;
                for (int k = 0; k < s.decay_trials; ++k) {
                    Eigen::VectorXd u(ops->n());
                    for (auto& v : u) v = nd(rng);
                    f0.push_back(ops->deflate(u));
                }
                const HypocoerciveResult hr = hypocoercive_decay(*ops, n->n_hat, 1.0 / w1->gap, 1.0 / w2->gap, f0,
                                                                 decay_times(s.decay_horizon / hc.kappa));
                for (std::size_t k = 0; k < hr.trajectories.size(); ++k) {
                    const auto& tr = hr.trajectories[k];
                    for (std::size_t j = 0; j < tr.t.size(); ++j)
                        traj.rows.push_back({std::to_string(b), std::to_string(k), fmt17(tr.t[j]), fmt17(tr.norm2[j]),
                                             fmt17(tr.i_eps[j])});
                }
                return hr.report;
            });
            run.add(std::move(dr), res, pot);
        }
    }
    // Every quantity above is a functional of the grid.
    for (auto& ck : run.report.checks)
        for (auto& m : ck.margins) m.refinement_sensitive = true;
    if (!traj.rows.empty()) {
        run.tables.csv.push_back(std::move(traj));
        run.tables.names.push_back("hypocoercive.csv");
    }
}

void run_assumptions(const ExperimentConfig& c, Run& run) {
    const AssumptionsConfig& s = c.check_assumptions;
    const std::vector<double> grid = log_grid(s.profile_lo, s.profile_hi, s.profile_points);
    std::ostringstream res;
    res << "radius=" << fmt17(s.radius) << ", samples=" << s.samples << ", profile r in [" << fmt17(s.profile_lo)
        << ", " << fmt17(s.profile_hi) << "]";
    for (const auto& spec : s.potentials) {
        const Potential v = spec.make();
        const std::string pot = v.describe();
        run.add(guarded("growth", [&] { return check_growth(v, s.tau, s.m_candidate, s.samples, s.radius); }),
                res.str(), pot);
        run.add(guarded("profile_bound", [&] { return check_profile_bound(v.profile(), s.d2, grid); }), res.str(), pot);
        run.add(guarded("normalizer", [&] {
                    CheckReport r;
                    r.name = "normalizer";
                    r.measured = v.normalizer();
                    r.margins = {{"Z", r.measured}};
                    r.passed = std::isfinite(r.measured) && r.measured > 0;
                    if (!r.passed) r.fail(FailureKind::Assumption, "Z(V) is not finite and positive");
                    return r;
                }),
                res.str(), pot);
        for (int k : s.moments)
            run.add(guarded("moment" + std::to_string(k), [&] {
                        CheckReport r;
                        r.name = "moment" + std::to_string(k);
                        r.measured = moment_check(v, k);
                        r.margins = {{"mu(|grad V|^" + std::to_string(k) + ")", r.measured}};
                        r.passed = true;
                        return r;
                    }),
                    res.str(), pot);
    }
}

const char* provenance_name(Provenance p) { return p == Provenance::Theory ? "theory" : "measured"; }

const char* failure_name(FailureKind k) {
    switch (k) {
        case FailureKind::None: return "none";
        case FailureKind::Assumption: return "assumption";
        case FailureKind::Numerical: return "numerical";
    }
    return "?";
}

// Allowed run-to-run movement of a value: an SE band for Monte Carlo values, else relative 1e-9.
double tolerance_of(const Margin& m) { return m.se > 0 ? 4 * m.se : 1e-9 * std::max(1.0, std::abs(m.value)); }

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char ch : s) q += ch == '"' ? std::string("\"\"") : std::string(1, ch);
    return q + "\"";
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char ch = line[i];
        if (quoted) {
            if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (ch == '"') {
                quoted = false;
            } else {
                cur += ch;
            }
        } else if (ch == '"') {
            quoted = true;
        } else if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += ch;
        }
    }
    out.push_back(cur);
    return out;
}

}  // namespace

Potential PotentialSpec::make() const {
    if (family == "quadratic") return Potential::quadratic(dim);
    if (family == "power") return Potential::power(k, delta, dim);
    if (family == "log_power") return Potential::log_power(p, dim);
    if (family == "log_log") return Potential::log_log(p, dim);
    throw ConfigError("unknown potential family '" + family + "'");
}

SdeSystem SimulateConfig::system() const { return SdeSystem(q, v1.make(), v2.make()); }

LabSystem LabEntry::system() const { return LabSystem{v1.make(), v2.make(), q}; }

std::string to_string(ExperimentKind k) {
    switch (k) {
        case ExperimentKind::Rates: return "rates";
        case ExperimentKind::Simulate: return "simulate";
        case ExperimentKind::OperatorLab: return "operator-lab";
        case ExperimentKind::CheckAssumptions: return "check-assumptions";
    }
    return "?";
}

ExperimentKind experiment_kind_from_string(const std::string& s) {
    for (auto k : {ExperimentKind::Rates, ExperimentKind::Simulate, ExperimentKind::OperatorLab,
                   ExperimentKind::CheckAssumptions})
        if (to_string(k) == s) return k;
    throw ConfigError("unknown experiment kind '" + s + "'");
}

std::vector<RateCaseSpec> default_rate_cases() {
    auto P = [](RateCase rc, double delta, double eps, double p, double q) {
        RateCaseSpec s;
        s.rate_case = rc;
        s.params.delta = delta;
        s.params.eps = eps;
        s.params.p = p;
        s.params.q = q;
        return s;
    };
    using R = RateCase;
    return {P(R::A1, 1, 1, 2, 2), P(R::A1, 1, .5, 2, 2), P(R::A2, 1, 1, 1, 2), P(R::A2, 1, 1, 2, 2),
            P(R::A3, 1, 1, 2, 2), P(R::A3, 1, 1, 3, 2),  P(R::B1, 1, 1, 2, 1), P(R::B1, 1, 1, 2, 2),
            P(R::B2, 1, 1, 1, 1), P(R::B2, 1, 1, 2, 2),  P(R::B3, 1, 1, 2, 1), P(R::B3, 1, 1, 3, 2),
            P(R::C1, 1, 1, 2, 2), P(R::C1, 1, 1, 2, 3),  P(R::C2, 1, 1, 2, 2), P(R::C2, 1, 1, 2, 3)};
}

ExperimentConfig default_config(ExperimentKind kind) {
    ExperimentConfig c;
    c.kind = kind;
    c.rates.cases = default_rate_cases();
    PotentialSpec lp4{"log_power"};
    lp4.p = 4.0;
    c.operator_lab.battery = {LabEntry{}, LabEntry{PotentialSpec{"power"}, PotentialSpec{}, 1.0},
                              LabEntry{lp4, PotentialSpec{}, 1.0}};
    c.simulate.expect = "exponential";
    c.simulate.stationarity = StationarityConfig{};
    PotentialSpec lp1{"log_power"};
    lp1.p = 1.0;
    c.check_assumptions.potentials = {PotentialSpec{}, PotentialSpec{"power"}, lp1, lp4};
    return c;
}

ExperimentConfig config_from_json(const json& j) {
    Reader r(j, "$");
    // Fields a file leaves out take the built-in defaults of its kind.
    ExperimentConfig c = default_config(experiment_kind_from_string(r.str("kind", "")));
    c.seed = r.u64("seed", c.seed);
    c.threads = static_cast<int>(r.integer("threads", c.threads, 1, 4096));
    c.out = r.str("out", c.out);
    if (c.out.empty()) throw ConfigError("$.out: empty output directory");
    const std::string key = section_key(c.kind);
    if (!r.has(key)) throw ConfigError("$." + key + ": section required for kind " + to_string(c.kind));
    read_section(c, r.raw(key), "$." + key);
    r.done();
    return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
    }
    return config_from_json(j);
}

json config_to_json(const ExperimentConfig& c) {
    return {{"kind", to_string(c.kind)},
            {"seed", c.seed},
            {"threads", c.threads},
            {"out", c.out},
            {section_key(c.kind), write_section(c)}};
}

std::string config_hash(const ExperimentConfig& c) {
    json j = config_to_json(c);
    j.erase("out");
    j.erase("threads");
    return hex64(fnv1a64(j.dump()));
}

bool ExperimentReport::passed() const {
    for (const auto& c : checks)
        if (!c.passed) return false;
    return true;
}

int ExperimentReport::exit_code() const {
    bool assumption = false, numerical = false;
    for (const auto& c : checks) {
        if (c.passed) continue;
        (c.kind == FailureKind::Assumption ? assumption : numerical) = true;
    }
    return assumption ? 3 : numerical ? 4 : 0;
}

json ExperimentReport::to_json() const {
    json checks_j = json::array();
    int passed_n = 0;
    for (std::size_t i = 0; i < checks.size(); ++i) {
        const CheckReport& c = checks[i];
        passed_n += c.passed;
        json margins = json::array();
        for (const auto& m : c.margins)
            margins.push_back({{"name", m.name},
                               {"value", m.value},
                               {"tolerance", tolerance_of(m)},
                               {"provenance", provenance_name(m.provenance)},
                               {"se", m.se},
                               {"seed_dependent", m.seed_dependent},
                               {"refinement_sensitive", m.refinement_sensitive}});
        checks_j.push_back({{"check", c.name},
                            {"resolution", check_resolution[i]},
                            {"potentials", check_potentials[i]},
                            {"pass", c.passed},
                            {"failure", failure_name(c.kind)},
                            {"measured", c.measured},
                            {"threshold", c.threshold},
                            {"range", c.range},
                            {"diagnostic", c.diagnostic},
                            {"margins", margins}});
    }
    return {{"schema", kReportSchema},
            {"artifact_version", kArtifactVersion},
            {"kind", to_string(config.kind)},
            {"config_hash", config_hash(config)},
            {"seed", config.seed},
            {"config", config_to_json(config)},
            {"timestamps", {{"started", started}, {"finished", finished}}},
            {"checks", checks_j},
            {"summary",
             {{"checks", checks.size()},
              {"passed", passed_n},
              {"failed", static_cast<int>(checks.size()) - passed_n},
              {"pass", passed()}}}};
}

namespace {

Run evaluate_run(const ExperimentConfig& c) {
    // Re-validate through the serialized form so programmatic configs obey the same rules.
    config_from_json(config_to_json(c));
    Run run;
    run.report.config = c;
    run.report.started = utc_now();
    switch (c.kind) {
        case ExperimentKind::Rates: run_rates(c, run); break;
        case ExperimentKind::Simulate: run_simulate(c, run); break;
        case ExperimentKind::OperatorLab: run_operator_lab(c, run); break;
        case ExperimentKind::CheckAssumptions: run_assumptions(c, run); break;
    }
    run.report.finished = utc_now();
    return run;
}

void write_all(const Run& run, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    for (std::size_t k = 0; k < run.tables.csv.size(); ++k) write_csv(dir / run.tables.names[k], run.tables.csv[k]);
    for (std::size_t i = 0; i < run.report.checks.size(); ++i) {
        const CheckReport& c = run.report.checks[i];
        if (c.passed || c.witness.empty()) continue;
        CsvTable w{"hypolab.witness.v1", {"index", "value"}, {}};
        for (std::size_t k = 0; k < c.witness.size(); ++k) w.rows.push_back({std::to_string(k), fmt17(c.witness[k])});
        std::string name = "witness_" + std::to_string(i) + "_" + c.name + ".csv";
        for (char& ch : name)
            if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '.' && ch != '_' && ch != '-') ch = '_';
        write_csv(dir / name, w);
    }
    std::ofstream out(dir / "report.json");
    out << run.report.to_json().dump(2) << '\n';
    if (!out) throw NumericalFailure("failed writing " + (dir / "report.json").string());
}

}  // namespace

ExperimentReport evaluate(const ExperimentConfig& config) { return evaluate_run(config).report; }

ExperimentReport run(const ExperimentConfig& config) {
    const Run r = evaluate_run(config);
    write_all(r, config.out);
    return r.report;
}

void write_outputs(const ExperimentReport& report, const std::filesystem::path& dir) {
    Run r;
    r.report = report;
    write_all(r, dir);
}

std::string fmt17(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_csv(const std::filesystem::path& path, const CsvTable& table) {
    std::ofstream out(path);
    out << "# schema=" << table.schema << '\n';
    for (std::size_t k = 0; k < table.header.size(); ++k) out << (k ? "," : "") << csv_field(table.header[k]);
    out << '\n';
    for (const auto& row : table.rows) {
        for (std::size_t k = 0; k < row.size(); ++k) out << (k ? "," : "") << csv_field(row[k]);
        out << '\n';
    }
    if (!out) throw NumericalFailure("failed writing " + path.string());
}

CsvTable read_csv(const std::filesystem::path& path, const std::string& expected_schema) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read " + path.string());
    std::string line;
    CsvTable t;
    if (!std::getline(in, line) || line.rfind("# schema=", 0) != 0)
        throw ConfigError(path.string() + ": missing schema line");
    t.schema = line.substr(9);
    if (t.schema != expected_schema)
        throw ConfigError(path.string() + ": schema " + t.schema + " is not the supported " + expected_schema);
    if (!std::getline(in, line)) throw ConfigError(path.string() + ": missing header");
    t.header = split_csv_line(line);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        t.rows.push_back(split_csv_line(line));
        if (t.rows.back().size() != t.header.size())
            throw ConfigError(path.string() + ": row " + std::to_string(t.rows.size()) + " has the wrong width");
    }
    return t;
}

bool DiffSummary::drifted() const {
    for (const auto& e : entries)
        if (e.category == "drift") return true;
    return false;
}

json DiffSummary::to_json() const {
    json es = json::array();
    for (const auto& e : entries)
        es.push_back({{"check", e.check}, {"field", e.field}, {"category", e.category}, {"a", e.a}, {"b", e.b},
                      {"band", e.band}});
    return {{"notes", notes}, {"entries", es}, {"drift", drifted()}};
}

DiffSummary compare(const json& a, const json& b) {
    for (const json* r : {&a, &b})
        if (!r->is_object() || r->value("schema", "") != kReportSchema)
            throw ConfigError("not a " + std::string(kReportSchema) + " report");
    if (a.at("kind") != b.at("kind"))
        throw ConfigError("reports are of different kinds: " + a.at("kind").get<std::string>() + " vs " +
                          b.at("kind").get<std::string>());
    DiffSummary d;
    const bool seeds_differ = a.at("seed") != b.at("seed");
    if (seeds_differ) d.notes.push_back("seed differs");
    if (a.at("config_hash") != b.at("config_hash")) d.notes.push_back("config hash differs");
    if (a.at("artifact_version") != b.at("artifact_version")) d.notes.push_back("artifact version differs");

    auto key = [](const json& c) { return c.at("check").get<std::string>() + " | " + c.at("potentials").get<std::string>(); };
    std::map<std::string, const json*> bmap;
    for (const auto& c : b.at("checks")) bmap[key(c)] = &c;
    std::set<std::string> seen;
    for (const auto& ca : a.at("checks")) {
        const std::string k = key(ca);
        seen.insert(k);
        auto it = bmap.find(k);
        if (it == bmap.end()) {
            d.entries.push_back({k, "(missing in b)", "drift"});
            continue;
        }
        const json& cb = *it->second;
        const bool res_differs = ca.at("resolution") != cb.at("resolution");
        if (res_differs) d.notes.push_back(k + ": resolution " + ca.at("resolution").get<std::string>() + " vs " +
                                           cb.at("resolution").get<std::string>());
        if (ca.at("pass") != cb.at("pass"))
            d.entries.push_back({k, "pass", "drift", ca.at("pass").get<bool>() ? 1.0 : 0.0,
                                 cb.at("pass").get<bool>() ? 1.0 : 0.0});
        std::map<std::string, const json*> mb;
        for (const auto& m : cb.at("margins")) mb[m.at("name").get<std::string>()] = &m;
        for (const auto& ma : ca.at("margins")) {
            const std::string name = ma.at("name").get<std::string>();
            auto jt = mb.find(name);
            if (jt == mb.end()) {
                // Margins keyed by resolution ("residual@64") legitimately change names.
                const bool keyed = res_differs && ma.at("refinement_sensitive").get<bool>();
                d.entries.push_back({k, name + " (missing in b)", keyed ? "expected-drift" : "drift"});
                continue;
            }
            const json& mbv = *jt->second;
            if (ma.at("value") == mbv.at("value")) continue;
            const double va = ma.at("value").is_number() ? ma.at("value").get<double>() : NAN;
            const double vb = mbv.at("value").is_number() ? mbv.at("value").get<double>() : NAN;
            const double sa = ma.at("se").get<double>(), sb = mbv.at("se").get<double>();
            DiffEntry e{k, name, "", va, vb, 0.0};
            if (res_differs && (ma.at("refinement_sensitive").get<bool>() || mbv.at("refinement_sensitive").get<bool>())) {
                e.category = "expected-drift";
            } else if (sa > 0 || sb > 0) {
                e.band = 4 * std::hypot(sa, sb);
                e.category = std::abs(va - vb) <= e.band ? "within-se-band" : "drift";
            } else if (seeds_differ && (ma.at("seed_dependent").get<bool>() || mbv.at("seed_dependent").get<bool>())) {
                e.category = "seed-dependent";
            } else {
                e.band = std::max(ma.at("tolerance").get<double>(), mbv.at("tolerance").get<double>());
                if (std::abs(va - vb) <= e.band) continue;
                e.category = "drift";
            }
            d.entries.push_back(e);
        }
    }
    for (const auto& [k, c] : bmap)
        if (!seen.count(k)) d.entries.push_back({k, "(missing in a)", "drift"});
    // Margins only b has; the loop above covered those only a has.
    for (const auto& ca : a.at("checks")) {
        auto it = bmap.find(key(ca));
        if (it == bmap.end()) continue;
        std::set<std::string> names;
        for (const auto& m : ca.at("margins")) names.insert(m.at("name").get<std::string>());
        const bool res_differs = ca.at("resolution") != it->second->at("resolution");
        for (const auto& m : it->second->at("margins"))
            if (!names.count(m.at("name").get<std::string>())) {
                const bool keyed = res_differs && m.at("refinement_sensitive").get<bool>();
                d.entries.push_back({key(ca), m.at("name").get<std::string>() + " (missing in a)",
                                     keyed ? "expected-drift" : "drift"});
            }
    }
    return d;
}

}  // namespace hypolab
