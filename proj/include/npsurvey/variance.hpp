#pragma once

#include "npsurvey/estimators.hpp"
#include "npsurvey/types.hpp"

namespace npsurvey {

struct VarianceComponents {
    RowVectorXd V12, V12a, V12e, V13e;  // 1 x dim(theta) or 1 x dim(xi)
    MatrixXd V22, V23, V33;
    double hbar = 0.0;    // population mean of y - m
    double m_bar = 0.0;   // population mean of m
    double mu_plug = 0.0;  // point estimate plugged in for mu_0
    bool v22_pinv = false, v33_pinv = false;
};

struct IntervalEstimate {
    double estimate = 0.0;
    double se = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    double level = 0.95;
};

struct VarianceDiagnostics {
    int floored = 0;      // negative plug-in variances floored at zero
    int pinv_used = 0;    // singular component matrices handled by pseudo-inverse
};

// All population averages are estimated by the IPW plug-in rule over S_A.
VarianceComponents estimate_components(EstimatorKind kind,
                                       const SampleA& sample_a,
                                       const SampleB& sample_b,
                                       const Theta& theta, const Xi& xi,
                                       double mu_hat);

// Theorem-1 sigma^2 for IPW/REG/AIPW: the S_A term plus the design term.
double sigma2_plugin(EstimatorKind kind, const VarianceComponents& comps,
                     const SampleA& sample_a, const SampleB& sample_b,
                     const Theta& theta, const Xi& xi,
                     VarianceDiagnostics* diag = nullptr);

// Design-based variance of the scaled S_B total (one column of g per
// component). SRSWOR uses the O(n) simplification; GeneralHT the full
// double sum; HajekApprox the weighted-residual approximation with
// pi_i = 1/d_i.
MatrixXd design_variance(const MatrixXd& g_values, const SampleB& sample_b);

// O(n^2) reference evaluation of the double sum; used to validate the
// SRSWOR closed form.
MatrixXd design_variance_direct(const MatrixXd& g_values,
                                const VectorXd& pi_first,
                                const MatrixXd& pi_joint, double nhat_b);

double normal_quantile(double prob);

IntervalEstimate wald_ci(double mu_hat, double sigma2, double n_hat_b,
                         double level = 0.95);

}  // namespace npsurvey
