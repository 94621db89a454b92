#pragma once

#include "npsurvey/types.hpp"

namespace npsurvey {

// Probabilities are clamped to [kProbEps, 1 - kProbEps] so that downstream
// 1/pi^A weights stay finite.
inline constexpr double kProbEps = 1e-12;

double clamp_prob(double p);

// Overflow-safe logistic 1/(1+exp(-t)).
double logistic(double t);

// log(1 + exp(t)) without overflow.
double log1p_exp(double t);

// eta^A = alpha + x_shared'beta + gamma*y.
double linear_predictor(const VectorXd& x_shared, double y, const Theta& theta);

// pi^A(x, y; theta) = 1/(1 + exp(eta^A)), clamped.
double participation_prob(const VectorXd& x_shared, double y,
                          const Theta& theta);

// Cumulant c(x; gamma, xi) = log E(exp(gamma*y) | x, R=1) and its
// gamma-derivatives (order 0, 1, 2). `x` is the full covariate row.
double cumulant_c(const VectorXd& x, double gamma, const Xi& xi, int order);

// Gradient of c(x; gamma, xi) with respect to xi.
VectorXd cumulant_c_grad_xi(const VectorXd& x, double gamma, const Xi& xi);

// Marginal propensity pi(x; theta, xi) = 1/(1 + exp(alpha + x_shared'beta +
// c(x; gamma, xi))), clamped.
double pi_marginal(const VectorXd& x, const VectorXd& x_shared,
                   const Theta& theta, const Xi& xi);

// pr(y | x) = pi f + (1 - pi) f exp(gamma*y - c).
double conditional_density(double y, const VectorXd& x,
                           const VectorXd& x_shared, const Theta& theta,
                           const Xi& xi);

// m(x; theta, xi) = pi * grad_gamma c(x; 0, xi) + (1-pi) * grad_gamma c(x; gamma, xi).
double conditional_mean(const VectorXd& x, const VectorXd& x_shared,
                        const Theta& theta, const Xi& xi);

struct MeanGrads {
    VectorXd wrt_theta;
    VectorXd wrt_xi;
};

MeanGrads conditional_mean_grads(const VectorXd& x, const VectorXd& x_shared,
                                 const Theta& theta, const Xi& xi);

// Outcome family log f(y|x; xi), its score, and its Hessian in xi.
double outcome_loglik(double y, const VectorXd& x, const Xi& xi);
VectorXd outcome_score(double y, const VectorXd& x, const Xi& xi);
MatrixXd outcome_hessian(double y, const VectorXd& x, const Xi& xi);

// Family mean E(y | x, R=1): logistic mean or linear predictor.
double family_mean(const VectorXd& x, const Xi& xi);

// Design row with a leading intercept.
VectorXd design_row(const VectorXd& x);

// Extract the shared-column subvector of x.
VectorXd shared_part(const VectorXd& x, const Schema& schema);

}  // namespace npsurvey
