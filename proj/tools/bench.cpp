#include <fstream>
#include <iomanip>
#include <iostream>

#include <unistd.h>

#include "CLI11.hpp"
#include "kmstn/bench.hpp"
#include "kmstn/config.hpp"
#include "kmstn/error.hpp"
#include "kmstn/log.hpp"
#include "kmstn/mesh.hpp"
#include "kmstn/presets.hpp"

using namespace kmstn;
namespace fs = std::filesystem;

namespace {

// Everything a spec file can say about where and how to run.
struct Plan {
    std::optional<fs::path> deployment;
    presets::ChainOptions chain;
    std::optional<std::int64_t> buffer_capacity;
    std::vector<std::string> paused_kmes;
    bool sim_time = true;
    std::vector<bench::ExperimentSpec> experiments;
};

nlohmann::json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) fail(Errc::io, "cannot read " + path.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        fail(Errc::parse, path.string() + ": " + e.what());
    }
}

Plan load_plan(const fs::path& path, std::optional<bench::Kind> kind) {
    const auto doc = read_json(path);
    Plan plan;
    if (doc.contains("deployment")) {
        plan.deployment = fs::path(doc.at("deployment").get<std::string>());
        if (plan.deployment->is_relative()) plan.deployment = path.parent_path() / *plan.deployment;
        plan.sim_time = false;
    }
    if (doc.contains("time")) plan.sim_time = doc.at("time").get<std::string>() == "sim";
    if (plan.sim_time && plan.deployment) fail(Errc::bad_request, "simulated time needs the in-process mesh");
    if (doc.contains("chain")) {
        const auto& c = doc.at("chain");
        plan.chain.nodes = c.value("nodes", plan.chain.nodes);
        plan.chain.fast_skr_bps = c.value("fast_skr_bps", plan.chain.fast_skr_bps);
        plan.chain.slow_skr_bps = c.value("slow_skr_bps", plan.chain.slow_skr_bps);
        plan.chain.seed = c.value("seed", plan.chain.seed);
        if (c.contains("slow_islands")) plan.chain.slow_islands = c.at("slow_islands").get<std::set<int>>();
        if (c.contains("buffer_capacity_keys")) plan.buffer_capacity = c.at("buffer_capacity_keys").get<std::int64_t>();
        if (c.contains("paused_kmes")) plan.paused_kmes = c.at("paused_kmes").get<std::vector<std::string>>();
    }

    std::vector<nlohmann::json> raw;
    if (doc.contains("experiments")) {
        for (const auto& e : doc.at("experiments")) raw.push_back(e);
    } else {
        raw.push_back(doc);
    }
    for (auto e : raw) {
        if (kind) e["kind"] = std::string(bench::to_string(*kind));
        std::vector<int> sweep;
        if (e.contains("concurrency_sweep")) sweep = e.at("concurrency_sweep").get<std::vector<int>>();
        if (sweep.empty()) sweep.push_back(e.value("concurrency", 1));
        for (int c : sweep) {
            e["concurrency"] = c;
            auto spec = bench::spec_from_json(e);
            plan.experiments.push_back(spec);
            if (e.value("both_directions", false)) {
                std::swap(spec.src, spec.dst);
                plan.experiments.push_back(spec);
            }
        }
    }
    return plan;
}

bench::MetricsRecord run_one(const Plan& plan, const bench::ExperimentSpec& spec, const fs::path& scratch) {
    if (plan.deployment) {
        const auto bundle = config::load_bundle(*plan.deployment);
        bench::Harness harness;
        return harness.run(spec, bench::deployment_source(bundle, spec));
    }
    // A fresh in-process mesh per experiment keeps runs independent.
    auto chain = plan.chain;
    chain.state_root = scratch / "state";
    chain.seed = spec.seed;
    auto bundle = presets::chain(chain);
    if (plan.buffer_capacity) {
        for (auto& n : bundle.qkd_nodes) n.link.buffer_capacity_keys = *plan.buffer_capacity;
    }
    mesh::MeshOptions options;
    options.clock = plan.sim_time ? std::shared_ptr<Clock>(std::make_shared<ManualClock>()) : system_clock();
    options.latency = plan.sim_time ? sim::LatencyMode::report : sim::LatencyMode::sleep;
    options.service.seal.device_secret_path = scratch / "device.secret";
    mesh::Mesh mesh(std::move(bundle), options);
    for (const auto& k : plan.paused_kmes) mesh.pair(KmeId(k)).pause_generation(true);
    bench::Harness harness(options.clock);
    auto result = harness.run(spec, bench::deployment_source(mesh.bundle(), spec, options.clock));
    mesh.stop();
    fs::remove_all(scratch / "state");
    return result;
}

void print_summary(const bench::MetricsRecord& m) {
    const auto& a = m.aggregates;
    auto show = [](const std::optional<double>& v) {
        std::ostringstream o;
        if (v) {
            o << std::fixed << std::setprecision(1) << *v;
        } else {
            o << "-";
        }
        return o.str();
    };
    std::cout << std::left << std::setw(34) << m.name << " ok " << a.successes << "/" << a.requests
              << "  keyrate " << show(a.mean_keyrate_bps) << " +- " << show(a.std_keyrate_bps) << " bps"
              << "  median " << show(a.latency_median_ms) << " ms"
              << "  jitter p95 " << show(a.jitter_p95_ms) << " ms\n";
}

void print_correlation(const bench::CorrelationMatrix& c) {
    for (const auto* name : {"pearson", "spearman"}) {
        const auto& m = std::string(name) == "pearson" ? c.pearson : c.spearman;
        std::cout << name << "\n";
        for (std::size_t i = 0; i < c.columns.size(); ++i) {
            std::cout << "  " << std::left << std::setw(18) << c.columns[i];
            for (const auto& v : m[i]) {
                if (v) {
                    std::cout << std::right << std::setw(8) << std::fixed << std::setprecision(3) << *v;
                } else {
                    std::cout << std::right << std::setw(8) << "null";
                }
            }
            std::cout << "\n";
        }
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Measurement harness for the KMSTN mesh"};
    app.require_subcommand(1);
    std::string spec_path;
    std::string input;
    std::string output = "results";
    std::string format = "both";
    bool plot = false;
    std::string plot_script = KMSTN_PLOT_SCRIPT;
    bool verbose = false;
    app.add_flag("-v,--verbose", verbose, "Log at info level");

    std::map<std::string, CLI::App*> runs;
    for (const auto* kind : {"keyrate", "delay", "concurrency"}) {
        auto* sub = app.add_subcommand(kind, std::string("Run ") + kind + " experiments");
        sub->add_option("--spec", spec_path, "Experiment spec file")->required();
        runs[kind] = sub;
    }
    auto* corr = app.add_subcommand("correlate", "Correlation matrix across experiments");
    auto* corr_source = corr->add_option_group("source");
    corr_source->add_option("--spec", spec_path, "Run the experiments of this spec first");
    corr_source->add_option("--input", input, "Existing results.json");
    corr_source->require_option(1);
    auto* exp = app.add_subcommand("export", "Re-export an existing results.json");
    exp->add_option("--input", input, "results.json")->required();

    for (auto* sub : app.get_subcommands({})) {
        sub->add_option("--output", output, "Results root; a timestamped directory is created inside")
            ->capture_default_str();
        sub->add_option("--format", format, "csv, json or both")
            ->check(CLI::IsMember({"csv", "json", "both"}))
            ->capture_default_str();
        sub->add_flag("--plot", plot, "Render static plots (needs python3 with matplotlib)");
        sub->add_option("--plot-script", plot_script)->capture_default_str();
    }
    CLI11_PARSE(app, argc, argv);
    log::set_min_level(verbose ? log::Level::info : log::Level::error);

    try {
        bench::ExportOptions export_options;
        export_options.csv = format != "json";
        export_options.json = format != "csv";
        if (plot) export_options.plot_script = plot_script;

        std::vector<bench::MetricsRecord> results;
        if (!input.empty()) {
            results = bench::read_results(input);
        } else {
            std::optional<bench::Kind> kind;
            for (const auto& [name, sub] : runs) {
                if (*sub) kind = bench::parse_kind(name);
            }
            const auto plan = load_plan(spec_path, kind);
            const auto scratch = fs::temp_directory_path() / ("kmstn-bench-" + std::to_string(::getpid()));
            for (const auto& spec : plan.experiments) {
                results.push_back(run_one(plan, spec, scratch));
                print_summary(results.back());
            }
            fs::remove_all(scratch);
        }
        if (*corr) print_correlation(bench::correlate(results));
        const auto dir = bench::export_results(results, output, export_options);
        std::cout << "results in " << dir.string() << "\n";
        return 0;
    } catch (const Error& e) {
        std::cerr << "error (" << to_string(e.code()) << "): " << e.what() << "\n";
        return e.code() == Errc::bad_request || e.code() == Errc::insufficient_data ? 2 : 1;
    }
}
