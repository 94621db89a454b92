#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <unistd.h>
#include <fstream>
#include <string>

#include "npsurvey/io.hpp"
#include "npsurvey/simulation.hpp"
#include "helpers.hpp"

using namespace npsurvey;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("npsurvey_test_" + std::to_string(::getpid()));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    fs::path file(const std::string& name, const std::string& content) const {
        const fs::path p = path / name;
        std::ofstream out(p);
        out << content;
        return p;
    }
};

}  // namespace

TEST_CASE("CSV loading: happy path with column reordering") {
    TempDir tmp;
    const auto pa = tmp.file("a.csv",
                             "y,u1,u2,z\n"
                             "1,0.5,-0.2,1.0\n"
                             "0,0.1,0.3,2.0\n");
    const auto pb = tmp.file("b.csv",
                             "d,z,u2,u1\n"
                             "10,0.4,0.9,-1.1\n"
                             "10,2.5,-0.3,0.2\n"
                             "10,1.5,0.0,0.0\n");
    const SampleA a = load_sample_a(pa.string());
    CHECK(a.n() == 2);
    CHECK(a.schema.names == std::vector<std::string>{"u1", "u2", "z"});
    CHECK(a.y(0) == 1.0);
    CHECK(a.X(1, 2) == 2.0);

    const SampleB b = load_sample_b(pb.string(), a.schema);
    CHECK(b.n() == 3);
    CHECK(b.d(0) == 10.0);
    // reordered to u1, u2, z
    CHECK(b.X(0, 0) == -1.1);
    CHECK(b.X(0, 1) == 0.9);
    CHECK(b.X(0, 2) == 0.4);
}

TEST_CASE("CSV loading: malformed inputs") {
    TempDir tmp;
    const auto bad_header = tmp.file("h.csv", "x,u1\n1,2\n");
    CHECK_THROWS_AS(load_sample_a(bad_header.string()), SchemaError);

    const auto blank = tmp.file("blank.csv", "y,u1\n1,\n");
    CHECK_THROWS_WITH_AS(load_sample_a(blank.string()),
                         doctest::Contains("row 2"), ParseError);

    const auto nonnum = tmp.file("nn.csv", "y,u1\n1,0.5\n0,abc\n");
    CHECK_THROWS_WITH_AS(load_sample_a(nonnum.string()),
                         doctest::Contains("abc"), ParseError);

    const auto ragged = tmp.file("rag.csv", "y,u1\n1,0.5,9\n");
    CHECK_THROWS_AS(load_sample_a(ragged.string()), ParseError);

    CHECK_THROWS_AS(load_sample_a((tmp.path / "missing.csv").string()),
                    ParseError);

    const auto pa = tmp.file("a.csv", "y,u1,u2\n1,0.5,0.2\n");
    const SampleA a = load_sample_a(pa.string());
    const auto pb = tmp.file("b.csv", "d,u1,w\n10,0.1,0.2\n");
    CHECK_THROWS_WITH_AS(load_sample_b(pb.string(), a.schema),
                         doctest::Contains("u2"), SchemaError);

    const auto pb2 = tmp.file("b2.csv", "d,u1,u2\n-1,0.1,0.2\n");
    CHECK_THROWS_AS(load_sample_b(pb2.string(), a.schema), DomainError);
}

TEST_CASE("role application") {
    Schema s;
    s.names = {"u1", "u2", "z"};
    s.roles = {Role::Shared, Role::Shared, Role::Shared};
    std::map<std::string, Role> roles{{"u1", Role::Shared},
                                      {"u2", Role::Shared},
                                      {"z", Role::Instrument}};
    apply_roles(s, roles);
    CHECK(s.roles[2] == Role::Instrument);
    CHECK(s.n_instruments() == 1);

    std::map<std::string, Role> unknown{{"u1", Role::Shared},
                                        {"u2", Role::Shared},
                                        {"z", Role::Instrument},
                                        {"q", Role::Shared}};
    CHECK_THROWS_AS(apply_roles(s, unknown), SchemaError);
    std::map<std::string, Role> missing{{"u1", Role::Shared}};
    CHECK_THROWS_AS(apply_roles(s, missing), SchemaError);
}

TEST_CASE("analysis config loading and hashing") {
    TempDir tmp;
    const auto p = tmp.file("cfg.json", R"({
      "family": "bernoulli_logistic",
      "roles": {"u1": "shared", "u2": "shared", "z": "instrument"},
      "estimators": ["naive", "ipw", "reg", "aipw"],
      "level": 0.9,
      "seed": 5,
      "design": {"kind": "srswor", "n": 100, "N": 2000},
      "tolerances": {"grad_tol": 1e-6, "n_starts": 10}
    })");
    const AnalysisConfig cfg = load_analysis_config(p.string());
    CHECK(cfg.family == OutcomeFamily::BernoulliLogistic);
    CHECK(cfg.roles.at("z") == Role::Instrument);
    CHECK(cfg.estimators.size() == 4);
    CHECK(cfg.level == 0.9);
    CHECK(cfg.design.has_value());
    CHECK(cfg.design->N == 2000);
    CHECK(cfg.n_starts == 10);

    const std::string h1 = analysis_config_hash(cfg);
    CHECK(!h1.empty());
    AnalysisConfig cfg2 = cfg;
    cfg2.level = 0.95;
    CHECK(analysis_config_hash(cfg2) != h1);
    CHECK(analysis_config_hash(cfg) == h1);

    const auto bad = tmp.file("bad.json", R"({"family": "poisson"})");
    CHECK_THROWS_AS(load_analysis_config(bad.string()), ParseError);
    const auto syntax = tmp.file("syn.json", "{nope");
    CHECK_THROWS_AS(load_analysis_config(syntax.string()), ParseError);
}

TEST_CASE("simulation config loading") {
    TempDir tmp;
    const auto p = tmp.file("sim.json", R"({
      "N": 5000, "reps": 10, "seed": 2, "threads": 2,
      "estimators": ["reg", "ipw"],
      "cells": [{"alpha": 4.5, "gamma": 0.8, "n_b": 500, "label": "cell1"},
                {"alpha": 2.7, "gamma": 0.8, "n_b": 1000}]
    })");
    const SimConfig cfg = load_sim_config(p.string());
    CHECK(cfg.N == 5000);
    CHECK(cfg.reps == 10);
    CHECK(cfg.cells.size() == 2);
    CHECK(cfg.cells[0].label == "cell1");
    CHECK(!cfg.cells[1].label.empty());

    const auto nocells = tmp.file("nc.json", R"({"N": 100})");
    CHECK_THROWS_AS(load_sim_config(nocells.string()), ParseError);
}

TEST_CASE("analyze: end-to-end on simulated data with report round-trip") {
    PopulationSpec spec;
    spec.N = 4000;
    spec.alpha = 2.0;
    spec.gamma = 0.8;
    spec.seed = 61;
    const Population pop = generate_population(spec);
    std::mt19937_64 rng = substream(61, 1, 1);
    SampleA a = draw_poisson_sample(pop, rng);
    std::mt19937_64 rng2 = substream(61, 1, 2);
    SampleB b = draw_srswor(pop, 400, rng2);

    AnalysisConfig cfg;
    cfg.family = OutcomeFamily::BernoulliLogistic;
    cfg.roles = {{"u1", Role::Shared}, {"u2", Role::Shared},
                 {"z", Role::Instrument}};
    cfg.estimators = {EstimatorKind::Naive, EstimatorKind::IPW,
                      EstimatorKind::REG, EstimatorKind::AIPW,
                      EstimatorKind::REG2};
    const Report rep = analyze(a, b, cfg);
    CHECK(rep.rows.size() == 5);
    CHECK(rep.theta.size() == 4);
    CHECK(rep.theta[0].name == "alpha");
    CHECK(rep.theta[3].name == "gamma");
    CHECK(rep.xi.size() == 4);
    for (const auto& r : rep.rows) {
        CHECK(std::isfinite(r.estimate));
        if (r.kind == EstimatorKind::IPW || r.kind == EstimatorKind::REG ||
            r.kind == EstimatorKind::AIPW) {
            CHECK(r.has_se);
            CHECK(r.se > 0.0);
            CHECK(r.ci_low < r.estimate);
            CHECK(r.ci_high > r.estimate);
        }
    }

    const std::string js = emit_report(rep, ReportFormat::Json);
    const Report back = parse_report_json(js);
    CHECK(back.rows.size() == rep.rows.size());
    for (size_t i = 0; i < rep.rows.size(); ++i) {
        CHECK(back.rows[i].kind == rep.rows[i].kind);
        CHECK(back.rows[i].estimate == rep.rows[i].estimate);
        CHECK(back.rows[i].se == rep.rows[i].se);
    }
    CHECK(back.config_hash == rep.config_hash);

    const std::string csv = emit_report(rep, ReportFormat::Csv);
    CHECK(csv.find("kind,estimate,se,ci_low,ci_high") == 0);
    const std::string txt = emit_report(rep, ReportFormat::Text);
    CHECK(txt.find("estimator") != std::string::npos);
    CHECK(txt.find("gamma") != std::string::npos);

    // missing instrument declaration is refused unless overridden
    AnalysisConfig all_shared = cfg;
    all_shared.roles = {{"u1", Role::Shared}, {"u2", Role::Shared},
                        {"z", Role::Shared}};
    CHECK_THROWS_AS(analyze(a, b, all_shared), DomainError);
    all_shared.allow_no_instrument = true;
    CHECK_NOTHROW(analyze(a, b, all_shared));
}

TEST_CASE("metrics CSV rendering") {
    MetricsTable t;
    t.reps = 2;
    t.mu0 = 0.5;
    MetricsRow r;
    r.pct_rb = 1.0;
    r.rrmse = 0.2;
    r.sd = 0.1;
    r.se = 0.11;
    r.cp = 0.95;
    r.al = 0.4;
    r.used = 2;
    t.rows[EstimatorKind::REG] = r;
    t.pl_params = {{0.1, 0.2}};
    SimCell cell;
    cell.label = "c1";
    const std::string csv = metrics_to_csv(t, cell);
    CHECK(csv.find("cell,estimator,pct_rb") == 0);
    CHECK(csv.find("c1,reg,1") != std::string::npos);
    CHECK(csv.find("mu0=0.5") != std::string::npos);
    CHECK(csv.find("pl_params") != std::string::npos);
}
