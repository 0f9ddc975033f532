#include "doctest.h"
#include "hypolab/experiment.hpp"

#include <fstream>

using namespace hypolab;
using nlohmann::json;

namespace {

std::filesystem::path scratch(const std::string& name) {
    const auto p = std::filesystem::temp_directory_path() / ("hypolab_test_" + name);
    std::filesystem::remove_all(p);
    return p;
}

// Timestamps are the only fields allowed to differ between identical runs.
json strip_times(json j) {
    j.erase("timestamps");
    return j;
}

ExperimentConfig small_simulate(std::uint64_t seed) {
    ExperimentConfig c = default_config(ExperimentKind::Simulate);
    c.seed = seed;
    c.simulate.paths = 2000;
    c.simulate.step = 0.01;
    c.simulate.t_end = 3.0;
    c.simulate.times = 13;
    c.simulate.expect.clear();
    c.simulate.stationarity = StationarityConfig{1.0, 2000, {"x2", "y2"}};
    return c;
}

ExperimentConfig small_lab(int resolution) {
    ExperimentConfig c = default_config(ExperimentKind::OperatorLab);
    c.operator_lab.battery.resize(1);
    c.operator_lab.resolution = resolution;
    c.operator_lab.checks = {"structure", "b_bounds", "wpi", "subordination"};
    c.operator_lab.trials = 50;
    return c;
}

}  // namespace

TEST_CASE("config round-trips through JSON for every kind") {
    for (auto k : {ExperimentKind::Rates, ExperimentKind::Simulate, ExperimentKind::OperatorLab,
                   ExperimentKind::CheckAssumptions}) {
        CAPTURE(to_string(k));
        ExperimentConfig c = default_config(k);
        c.seed = 1234567890123ULL;
        const json j = config_to_json(c);
        const ExperimentConfig back = config_from_json(j);
        CHECK(config_to_json(back) == j);
        CHECK(config_hash(back) == config_hash(c));
        CHECK(experiment_kind_from_string(to_string(k)) == k);
    }
    // A non-scalar Q survives as nested arrays.
    ExperimentConfig c = default_config(ExperimentKind::Simulate);
    c.simulate.v1.dim = 2;
    c.simulate.v2.dim = 2;
    c.simulate.q = Eigen::MatrixXd{{1.0, 0.25}, {0.0, 2.0}};
    const ExperimentConfig back = config_from_json(config_to_json(c));
    CHECK(back.simulate.q.isApprox(c.simulate.q));
}

TEST_CASE("config hash ignores output location and threads only") {
    ExperimentConfig a = default_config(ExperimentKind::Rates), b = a;
    b.out = "elsewhere";
    b.threads = 8;
    CHECK(config_hash(a) == config_hash(b));
    b.seed = 2;
    CHECK(config_hash(a) != config_hash(b));
}

TEST_CASE("strict config reader names the offending path") {
    auto err = [](const std::string& text) {
        try {
            config_from_json(json::parse(text));
        } catch (const ConfigError& e) {
            return std::string(e.what());
        }
        return std::string("no error");
    };
    CHECK(err(R"({"kind":"rates","rates":{"cases":[{"case":"A1"}]},"extra":1})") == "$.extra: unknown field");
    CHECK(err(R"({"kind":"rates","rates":{"cases":[{"case":"A1","zeta":2}]}})") ==
          "$.rates.cases[0].zeta: unknown field");
    CHECK(err(R"({"kind":"rates","rates":{"cases":[{"case":"Z9"}]}})").find("$.rates.cases[0].case") == 0);
    CHECK(err(R"({"kind":"rates","rates":{"cases":[{"case":"A1"}],"points":"61"}})") ==
          "$.rates.points: expected an integer");
    CHECK(err(R"({"kind":"rates","rates":{"cases":[{"case":"A1"}],"points":3}})").find("$.rates.points") == 0);
    CHECK(err(R"({"kind":"rates"})").find("$.rates") == 0);
    CHECK(err(R"({"kind":"wibble","rates":{}})").find("unknown experiment kind") != std::string::npos);
    CHECK(err(R"({"kind":"simulate","simulate":{"v1":{"family":"power","p":2}}})") ==
          "$.simulate.v1.p: unknown field");
    CHECK(err(R"({"kind":"simulate","simulate":{"observables":["nope"]}})").find("nope") != std::string::npos);
    CHECK(err(R"({"kind":"simulate","simulate":{"q":[[1,2],[3]]}})").find("$.simulate.q") == 0);
    CHECK(err(R"({"kind":"operator-lab","operator_lab":{"checks":["structure","bogus"]}})").find("bogus") !=
          std::string::npos);
    CHECK(err(R"({"kind":"check-assumptions","check_assumptions":{"tau":2}})").find("$.check_assumptions.tau") == 0);
    CHECK(err(R"({"kind":"rates","seed":-1,"rates":{"cases":[{"case":"A1"}]}})").find("$.seed") == 0);
}

TEST_CASE("an invalid config writes nothing") {
    const auto dir = scratch("invalid");
    ExperimentConfig c = default_config(ExperimentKind::Rates);
    c.out = dir.string();
    c.rates.points = 2;
    CHECK_THROWS_AS(run(c), ConfigError);
    CHECK_FALSE(std::filesystem::exists(dir));

    std::ofstream(dir.string() + ".json") << "{\"kind\": \"rates\", ";
    CHECK_THROWS_AS(load_config(dir.string() + ".json"), ConfigError);
    std::filesystem::remove(dir.string() + ".json");
}

TEST_CASE("CSV tables are versioned and quoted") {
    const auto dir = scratch("csv");
    std::filesystem::create_directories(dir);
    CsvTable t{"hypolab.demo.v1", {"name", "value"}, {{"plain", fmt17(0.1)}, {"a,\"b\"", "2"}}};
    write_csv(dir / "t.csv", t);
    const CsvTable back = read_csv(dir / "t.csv", "hypolab.demo.v1");
    CHECK(back.header == t.header);
    CHECK(back.rows == t.rows);
    CHECK(std::stod(back.rows[0][1]) == 0.1);
    CHECK_THROWS_AS(read_csv(dir / "t.csv", "hypolab.demo.v2"), ConfigError);
    std::ofstream(dir / "bare.csv") << "name,value\nx,1\n";
    CHECK_THROWS_AS(read_csv(dir / "bare.csv", "hypolab.demo.v1"), ConfigError);
    std::filesystem::remove_all(dir);
}

TEST_CASE("rates experiment writes its table and report") {
    const auto dir = scratch("rates");
    ExperimentConfig c = default_config(ExperimentKind::Rates);
    c.out = dir.string();
    c.rates.cases.resize(2);  // the two A1 settings
    const ExperimentReport r = run(c);
    CHECK(r.passed());
    CHECK(r.exit_code() == 0);
    const CsvTable t = read_csv(dir / "rates.csv", "hypolab.rates.v1");
    CHECK(t.rows.size() == 2u * c.rates.points);
    std::ifstream in(dir / "report.json");
    const json j = json::parse(in);
    CHECK(j["schema"] == kReportSchema);
    CHECK(j["config_hash"] == config_hash(c));
    CHECK(j["checks"].size() == 2);
    for (const auto& ck : j["checks"])
        for (const auto& m : ck["margins"]) {
            CHECK(m.contains("tolerance"));
            CHECK(m.contains("provenance"));
        }
    std::filesystem::remove_all(dir);
}

TEST_CASE("exit codes follow the failure kind") {
    ExperimentReport r;
    CheckReport ok;
    ok.passed = true;
    r.checks = {ok};
    CHECK(r.exit_code() == 0);
    CheckReport num;
    num.fail(FailureKind::Numerical, "x");
    r.checks.push_back(num);
    CHECK(r.exit_code() == 4);
    CheckReport as;
    as.fail(FailureKind::Assumption, "y");
    r.checks.push_back(as);
    CHECK(r.exit_code() == 3);
}

TEST_CASE("identical configs give an empty diff; kind mismatch is refused") {
    ExperimentConfig c = default_config(ExperimentKind::Rates);
    const json a = evaluate(c).to_json();
    const json b = evaluate(c).to_json();
    const DiffSummary d = compare(a, b);
    CHECK(d.entries.empty());
    CHECK(d.notes.empty());
    CHECK_FALSE(d.drifted());
    const json other = evaluate(default_config(ExperimentKind::CheckAssumptions)).to_json();
    CHECK_THROWS_AS(compare(a, other), ConfigError);
    json bad = a;
    bad["schema"] = "hypolab.report.v0";
    CHECK_THROWS_AS(compare(a, bad), ConfigError);
}

TEST_CASE("simulate is bitwise reproducible and thread-count independent") {
    ExperimentConfig c = small_simulate(11);
    const json one = strip_times(evaluate(c).to_json());
    c.threads = 3;
    json three = strip_times(evaluate(c).to_json());
    three["config"]["threads"] = 1;
    CHECK(one == three);
}

TEST_CASE("different seeds differ only within SE bands") {
    const json a = evaluate(small_simulate(21)).to_json();
    const json b = evaluate(small_simulate(22)).to_json();
    const DiffSummary d = compare(a, b);
    CAPTURE(d.to_json().dump());
    CHECK_FALSE(d.drifted());
    CHECK_FALSE(d.entries.empty());
    for (const auto& e : d.entries) CHECK((e.category == "within-se-band" || e.category == "seed-dependent"));
}

TEST_CASE("a resolution change is flagged as expected drift") {
    const json a = evaluate(small_lab(20)).to_json();
    const json b = evaluate(small_lab(28)).to_json();
    const DiffSummary d = compare(a, b);
    CAPTURE(d.to_json().dump());
    CHECK_FALSE(d.drifted());
    REQUIRE_FALSE(d.entries.empty());
    for (const auto& e : d.entries) CHECK(e.category == "expected-drift");
}

TEST_CASE("operator-lab failures carry a witness file") {
    const auto dir = scratch("witness");
    ExperimentConfig c = small_lab(20);
    c.out = dir.string();
    c.operator_lab.checks = {"sa_relation"};  // too coarse to pass at 20^2
    const ExperimentReport r = run(c);
    CHECK(r.exit_code() == 4);
    bool any = false;
    for (const auto& e : std::filesystem::directory_iterator(dir))
        if (e.path().filename().string().rfind("witness_", 0) == 0) {
            any = true;
            CHECK(read_csv(e.path(), "hypolab.witness.v1").rows.size() > 0);
        }
    CHECK(any == !r.checks.front().witness.empty());
    std::filesystem::remove_all(dir);
}
