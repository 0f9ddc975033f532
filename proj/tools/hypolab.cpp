#include "CLI11.hpp"
#include "hypolab/experiment.hpp"

#include <fstream>
#include <iostream>

using namespace hypolab;

namespace {

struct Common {
    std::string config;
    std::uint64_t seed = 0;
    std::string out;
    int threads = 1;
    bool dump = false;
    CLI::Option* seed_opt = nullptr;
    CLI::Option* out_opt = nullptr;
    CLI::Option* threads_opt = nullptr;
};

void add_common(CLI::App* sub, Common& c) {
    sub->add_option("--config", c.config, "JSON config; omitted means the built-in defaults")
        ->envname("HYPOLAB_CONFIG");
    c.seed_opt = sub->add_option("--seed", c.seed, "Master seed")->envname("HYPOLAB_SEED");
    c.out_opt = sub->add_option("--out", c.out, "Output directory")->envname("HYPOLAB_OUT");
    c.threads_opt = sub->add_option("--threads", c.threads, "Worker threads")
                        ->envname("HYPOLAB_THREADS")
                        ->check(CLI::Range(1, 4096));
    sub->add_flag("--dump-config", c.dump, "Print the effective config and exit");
}

// Flags and environment override the file; the file overrides the defaults.
int run_kind(ExperimentKind kind, const Common& c) {
    ExperimentConfig cfg = default_config(kind);
    if (!c.config.empty()) {
        cfg = load_config(c.config);
        if (cfg.kind != kind)
            throw ConfigError("config kind " + to_string(cfg.kind) + " does not match subcommand " + to_string(kind));
    }
    if (*c.seed_opt) cfg.seed = c.seed;
    if (*c.out_opt) cfg.out = c.out;
    if (*c.threads_opt) cfg.threads = c.threads;
    if (c.dump) {
        std::cout << config_to_json(cfg).dump(2) << '\n';
        return 0;
    }
    const ExperimentReport rep = run(cfg);
    for (const auto& ck : rep.checks)
        std::cout << (ck.passed ? "PASS " : "FAIL ") << ck.name << "  measured=" << fmt17(ck.measured)
                  << (ck.diagnostic.empty() ? "" : "  " + ck.diagnostic) << '\n';
    std::cout << "report: " << (std::filesystem::path(cfg.out) / "report.json").string() << '\n';
    return rep.exit_code();
}

nlohmann::json read_report(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read report " + path);
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(path + " is not valid JSON: " + e.what());
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"hypolab: rate calculus, SDE decay and discrete operator experiments"};
    app.require_subcommand(1);

    const std::pair<const char*, ExperimentKind> kinds[] = {
        {"rates", ExperimentKind::Rates},
        {"simulate", ExperimentKind::Simulate},
        {"operator-lab", ExperimentKind::OperatorLab},
        {"check-assumptions", ExperimentKind::CheckAssumptions},
    };
    std::vector<Common> commons(std::size(kinds));
    std::vector<CLI::App*> subs;
    for (std::size_t k = 0; k < std::size(kinds); ++k) {
        CLI::App* sub = app.add_subcommand(kinds[k].first, "Run the " + std::string(kinds[k].first) + " experiment");
        add_common(sub, commons[k]);
        subs.push_back(sub);
    }

    std::string report_a, report_b, diff_out;
    CLI::App* cmp = app.add_subcommand("compare", "Diff two report.json files; exit 1 on drift");
    cmp->add_option("report_a", report_a)->required();
    cmp->add_option("report_b", report_b)->required();
    cmp->add_option("--out", diff_out, "Also write the diff as JSON to this file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        for (std::size_t k = 0; k < subs.size(); ++k)
            if (subs[k]->parsed()) return run_kind(kinds[k].second, commons[k]);
        const DiffSummary d = compare(read_report(report_a), read_report(report_b));
        const std::string text = d.to_json().dump(2);
        std::cout << text << '\n';
        if (!diff_out.empty()) std::ofstream(diff_out) << text << '\n';
        return d.drifted() ? 1 : 0;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const AssumptionViolation& e) {
        std::cerr << "assumption violated: " << e.what() << '\n';
        return 3;
    } catch (const NumericalFailure& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return 4;
    }
}
