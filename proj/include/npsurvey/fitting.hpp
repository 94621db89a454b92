#pragma once

#include <cstdint>
#include <optional>

#include "npsurvey/types.hpp"

namespace npsurvey {

enum class Multiplicity { Unique, MultipleRoots, Unknown };

struct FitOptions {
    int max_iter = 500;
    double grad_tol = 1e-6;
    int n_starts = 20;          // calibration multistart
    double cluster_radius = 1e-3;  // root-clustering radius
    std::uint64_t seed = 0;
};

struct ThetaFit {
    Theta theta;
    double objective = 0.0;
    double gradient_norm = 0.0;
    int iterations = 0;
    bool converged = false;
    Multiplicity multiplicity = Multiplicity::Unknown;
    int n_roots = 0;
    MatrixXd info;  // observed information at the optimum
    bool ill_conditioned = false;
};

struct XiFit {
    Xi xi;
    double loglik = 0.0;
    double gradient_norm = 0.0;
    int iterations = 0;
    bool converged = false;
    MatrixXd info;
};

struct ELWeights {
    VectorXd p;        // length n_A, positive, sums to 1
    VectorXd lagrange;
    bool converged = false;
    double constraint_residual = 0.0;
};

struct IdentifiabilityReport {
    double condition_number = 0.0;
    double min_eigenvalue = 0.0;
    double gamma_profile_curvature = 0.0;
    bool flagged = false;
};

// Step 1: maximum likelihood for the outcome model on the non-probability
// sample. Newton with step-halving; detects separation for the binary family.
XiFit fit_outcome_mle(const SampleA& sample_a, OutcomeFamily family);

// Pseudo log-likelihood l(theta, xi) and its theta-gradient.
double pseudo_loglik(const Theta& theta, const Xi& xi, const SampleA& sample_a,
                     const SampleB& sample_b);
VectorXd pseudo_score(const Theta& theta, const Xi& xi, const SampleA& sample_a,
                      const SampleB& sample_b);

// Step 2: maximize the pseudo log-likelihood in theta with xi held at xi_hat.
// Default initialization fits the ignorable sub-problem (gamma frozen at 0)
// and then releases gamma.
ThetaFit fit_theta_pml(const Xi& xi_hat, const SampleA& sample_a,
                       const SampleB& sample_b,
                       std::optional<Theta> init = std::nullopt,
                       const FitOptions& opts = FitOptions{});

// Ignorable propensity fit: gamma frozen at 0 (concave Newton problem).
ThetaFit fit_theta_ignorable(const SampleA& sample_a, const SampleB& sample_b,
                             const FitOptions& opts = FitOptions{});

// Calibration estimating equations solved by multistart Levenberg-Marquardt
// on ||g(theta)||^2; roots are clustered to report multiplicity.
ThetaFit fit_theta_calibration(const SampleA& sample_a, const SampleB& sample_b,
                               const FitOptions& opts = FitOptions{},
                               std::optional<Theta> anchor = std::nullopt);

// Calibration moment vector g(theta), normalized by the estimated population
// size so residual tolerances are scale-free.
VectorXd calibration_residual(const Theta& theta, const SampleA& sample_a,
                              const SampleB& sample_b);

// Empirical likelihood weights under the bias-calibration and benchmarking
// constraints, solved through the Lagrange dual.
ELWeights el_weights(const Theta& theta_cal, const Xi& xi_hat,
                     const SampleA& sample_a, const SampleB& sample_b);

// Generic EL dual: maximize sum log p_i subject to sum p_i = 1 and
// G' p = 0, where row i of G is the centered constraint vector g_i.
ELWeights el_dual(const MatrixXd& G);

IdentifiabilityReport identifiability_diagnostic(const ThetaFit& fit);

}  // namespace npsurvey
