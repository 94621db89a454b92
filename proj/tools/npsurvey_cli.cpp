#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "npsurvey/io.hpp"

namespace fs = std::filesystem;
using namespace npsurvey;

namespace {

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot write: " + path.string());
    out << content;
}

int default_threads() {
    if (const char* env = std::getenv("NPSURVEY_THREADS")) {
        const int t = std::atoi(env);
        if (t >= 1) return t;
    }
    return 1;
}

int run_analyze(const std::string& a_path, const std::string& b_path,
                const std::string& cfg_path, const std::string& out_prefix) {
    AnalysisConfig cfg;
    SampleA a;
    SampleB b;
    try {
        cfg = load_analysis_config(cfg_path);
        a = load_sample_a(a_path);
        b = load_sample_b(b_path, a.schema);
    } catch (const Error& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return 1;
    }
    try {
        const Report rep = analyze(a, b, cfg);
        write_file(out_prefix + ".json", emit_report(rep, ReportFormat::Json));
        write_file(out_prefix + ".csv", emit_report(rep, ReportFormat::Csv));
        write_file(out_prefix + ".txt", emit_report(rep, ReportFormat::Text));
        std::cout << emit_report(rep, ReportFormat::Text);
        for (const auto& w : rep.warnings) std::cerr << "warning: " << w << "\n";
        return 0;
    } catch (const ParseError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return 1;
    } catch (const Error& e) {
        std::cerr << "estimation error: " << e.what() << "\n";
        return 2;
    }
}

int run_simulate(const std::string& cfg_path, const std::string& out_dir,
                 int threads, std::uint64_t seed_override, bool has_seed) {
    SimConfig cfg;
    try {
        cfg = load_sim_config(cfg_path);
    } catch (const Error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    }
    if (threads >= 1) cfg.threads = threads;
    if (has_seed) cfg.seed = seed_override;
    try {
        fs::create_directories(out_dir);
        std::string combined = "# combined metrics\n";
        for (const auto& cell : cfg.cells) {
            StudyConfig sc;
            sc.spec.N = cfg.N;
            sc.spec.alpha = cell.alpha;
            sc.spec.gamma = cell.gamma;
            sc.spec.seed = cfg.seed;
            sc.reps = cfg.reps;
            sc.n_b = cell.n_b;
            sc.estimators = cfg.estimators;
            sc.level = cfg.level;
            sc.threads = cfg.threads;
            sc.fit_calibration = cfg.calibration;
            sc.n_starts = cfg.n_starts;
            const MetricsTable table = run_study(sc);
            const std::string csv = metrics_to_csv(table, cell);
            write_file(fs::path(out_dir) / (cell.label + ".csv"), csv);
            combined += csv;
        }
        write_file(fs::path(out_dir) / "combined.csv", combined);
        return 0;
    } catch (const Error& e) {
        std::cerr << "estimation error: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Population-mean inference from nonignorable non-probability "
                 "samples with a reference probability sample"};
    app.require_subcommand(1);

    std::string a_path, b_path, cfg_path, out_path;
    auto* analyze_cmd = app.add_subcommand("analyze", "two-sample analysis");
    analyze_cmd->add_option("--sample-a", a_path, "non-probability sample CSV")
        ->required();
    analyze_cmd->add_option("--sample-b", b_path, "reference sample CSV")
        ->required();
    analyze_cmd->add_option("--config", cfg_path, "analysis config (JSON)")
        ->required();
    analyze_cmd->add_option("--out", out_path, "output report prefix")->required();

    std::string sim_cfg, sim_out;
    int threads = default_threads();
    std::uint64_t seed = 0;
    bool has_seed = false;
    auto* sim_cmd = app.add_subcommand("simulate", "replication study");
    sim_cmd->add_option("--config", sim_cfg, "study config (JSON)")->required();
    sim_cmd->add_option("--out", sim_out, "output directory")->required();
    sim_cmd->add_option("--threads", threads, "worker count");
    sim_cmd->add_option("--seed", seed, "master seed override")
        ->each([&](const std::string&) { has_seed = true; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    if (app.got_subcommand("analyze"))
        return run_analyze(a_path, b_path, cfg_path, out_path);
    return run_simulate(sim_cfg, sim_out, threads, seed, has_seed);
}
