#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "npsurvey/estimators.hpp"
#include "npsurvey/rng.hpp"
#include "npsurvey/variance.hpp"

namespace npsurvey {

struct PopulationSpec {
    int N = 20000;
    double alpha = 2.7;
    double gamma = 0.8;
    Eigen::Vector2d beta{-0.7, 1.5};
    Eigen::Vector4d outcome_coef{-1.8, 1.2, 1.2, 1.0};  // intercept, u1, u2, z
    std::uint64_t seed = 1;
};

struct Population {
    Schema schema;      // u1, u2 shared; z instrument
    MatrixXd X;         // N x 3
    VectorXd y;
    VectorXd pi_true;   // participation probability per unit
    double mu0 = 0.0;
    Theta theta_true;
};

struct StudyConfig {
    PopulationSpec spec;
    int reps = 500;
    int n_b = 1000;
    std::vector<EstimatorKind> estimators{EstimatorKind::REG, EstimatorKind::IPW,
                                          EstimatorKind::AIPW};
    double level = 0.95;
    int threads = 1;
    bool fit_calibration = false;  // calibration roots + NMR accounting
    int n_starts = 20;
};

struct MetricsRow {
    double pct_rb = 0.0;
    double rrmse = 0.0;
    double sd = 0.0;
    double se = 0.0;  // NaN when no plug-in SE exists for the estimator
    double cp = 0.0;
    double al = 0.0;
    int used = 0;
    int excluded = 0;
};

struct ParamMetrics {
    double pct_rb = 0.0;
    double rrmse = 0.0;
};

struct MetricsTable {
    std::map<EstimatorKind, MetricsRow> rows;
    std::vector<ParamMetrics> pl_params;   // alpha, beta..., gamma
    std::vector<ParamMetrics> cal_params;  // over unique-root replications
    int nmr_cal = 0;   // replications without multiple calibration roots
    int cal_used = 0;  // replications where a calibration root was found
    int reps = 0;
    int empty_redraws = 0;
    double mu0 = 0.0;
};

Population generate_population(const PopulationSpec& spec);

SampleA draw_poisson_sample(const Population& pop, std::mt19937_64& rng,
                            int* redraws = nullptr);

SampleB draw_srswor(const Population& pop, int n_b, std::mt19937_64& rng);

MetricsTable run_study(const StudyConfig& config);

// Aggregation of one estimator column across replications.
MetricsRow compute_metrics(const std::vector<double>& estimates,
                           const std::vector<double>& ses,
                           const std::vector<IntervalEstimate>& cis,
                           double zeta0);

}  // namespace npsurvey
