#pragma once

#include <string>

#include "npsurvey/fitting.hpp"
#include "npsurvey/types.hpp"

namespace npsurvey {

enum class EstimatorKind { Naive, IPW, REG, AIPW, EL, REG2, IPW2, DR2 };

std::string to_string(EstimatorKind kind);
EstimatorKind estimator_from_string(const std::string& name);

struct MeanEstimate {
    EstimatorKind kind = EstimatorKind::Naive;
    double value = 0.0;
    double n_hat_a = 0.0;
    double n_hat_b = 0.0;
};

// Sample mean of S_A.
MeanEstimate mu_naive(const SampleA& sample_a);

// Hajek-normalized IPW over S_A with pi^A(x_i, y_i; theta).
MeanEstimate mu_ipw(const SampleA& sample_a, const Theta& theta);
MeanEstimate mu_ipw_from_probs(const VectorXd& y, const VectorXd& probs);

// Weighted mean of m(x; theta, xi) over S_B.
MeanEstimate mu_reg(const SampleB& sample_b, const Theta& theta, const Xi& xi);

// Augmented IPW combining the weighted S_A residuals with the S_B prediction.
MeanEstimate mu_aipw(const SampleA& sample_a, const SampleB& sample_b,
                     const Theta& theta, const Xi& xi);

// Empirical-likelihood weighted mean.
MeanEstimate mu_el(const ELWeights& weights, const SampleA& sample_a);

struct IgnorableBaselines {
    MeanEstimate reg2, ipw2, dr2;
    Theta theta_ignorable;
    Xi xi_hat;
};

// Chen-style estimators under an assumed ignorable mechanism: gamma frozen
// at 0 in the propensity fit and the plain S_A outcome regression.
IgnorableBaselines ignorable_baselines(const SampleA& sample_a,
                                       const SampleB& sample_b,
                                       OutcomeFamily family);

}  // namespace npsurvey
