#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "npsurvey/estimators.hpp"
#include "npsurvey/simulation.hpp"
#include "npsurvey/variance.hpp"

namespace npsurvey {

struct AnalysisConfig {
    OutcomeFamily family = OutcomeFamily::BernoulliLogistic;
    std::map<std::string, Role> roles;  // by column name
    std::vector<EstimatorKind> estimators{EstimatorKind::REG, EstimatorKind::IPW,
                                          EstimatorKind::AIPW};
    double level = 0.95;
    std::optional<DesignInfo> design;  // kind + N + n; defaults to Hajek
    bool allow_no_instrument = false;
    std::uint64_t seed = 0;
    double grad_tol = 1e-6;
    int n_starts = 20;
};

struct ReportRow {
    EstimatorKind kind;
    double estimate = 0.0;
    double se = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    bool has_se = false;
};

struct ParamRow {
    std::string name;
    double estimate = 0.0;
    double se = 0.0;
};

struct Report {
    std::vector<ReportRow> rows;
    std::vector<ParamRow> theta;
    std::vector<ParamRow> xi;
    std::vector<std::string> warnings;
    std::string config_hash;
    std::uint64_t seed = 0;
    std::string version;
    double level = 0.95;
};

enum class ReportFormat { Json, Csv, Text };

// Delimiter-separated loaders. Sample A expects header `y,<names...>`;
// sample B expects `d,<names...>` and is reordered to match A's schema by
// column name.
SampleA load_sample_a(const std::string& path);
SampleB load_sample_b(const std::string& path, const Schema& schema_a);

void apply_roles(Schema& schema, const std::map<std::string, Role>& roles);

AnalysisConfig load_analysis_config(const std::string& path);
std::string analysis_config_hash(const AnalysisConfig& cfg);

struct SimCell {
    double alpha = 2.7;
    double gamma = 0.8;
    int n_b = 1000;
    std::string label;
};

struct SimConfig {
    int N = 20000;
    int reps = 500;
    std::uint64_t seed = 1;
    int threads = 1;
    std::vector<SimCell> cells;
    std::vector<EstimatorKind> estimators;
    double level = 0.95;
    bool calibration = false;
    int n_starts = 20;
};

SimConfig load_sim_config(const std::string& path);

Report analyze(const SampleA& a, const SampleB& b, const AnalysisConfig& cfg);

std::string emit_report(const Report& report, ReportFormat format);
Report parse_report_json(const std::string& text);

std::string metrics_to_csv(const MetricsTable& table, const SimCell& cell);

}  // namespace npsurvey
