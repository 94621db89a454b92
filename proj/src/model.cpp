#include "npsurvey/model.hpp"

#include <cmath>

namespace npsurvey {

double clamp_prob(double p) {
    if (p < kProbEps) return kProbEps;
    if (p > 1.0 - kProbEps) return 1.0 - kProbEps;
    return p;
}

double logistic(double t) {
    if (t >= 0.0) {
        const double e = std::exp(-t);
        return 1.0 / (1.0 + e);
    }
    const double e = std::exp(t);
    return e / (1.0 + e);
}

double log1p_exp(double t) {
    if (t > 35.0) return t;
    if (t < -35.0) return std::exp(t);
    return std::log1p(std::exp(t));
}

VectorXd design_row(const VectorXd& x) {
    VectorXd r(x.size() + 1);
    r(0) = 1.0;
    r.tail(x.size()) = x;
    return r;
}

VectorXd shared_part(const VectorXd& x, const Schema& schema) {
    const auto idx = schema.shared_indices();
    VectorXd u(idx.size());
    for (size_t k = 0; k < idx.size(); ++k) u(k) = x(idx[k]);
    return u;
}

double linear_predictor(const VectorXd& x_shared, double y,
                        const Theta& theta) {
    if (x_shared.size() != theta.beta.size())
        throw DimensionError(
            "linear_predictor: x has " + std::to_string(x_shared.size()) +
            " shared columns but beta has " + std::to_string(theta.beta.size()));
    return theta.alpha + x_shared.dot(theta.beta) + theta.gamma * y;
}

double participation_prob(const VectorXd& x_shared, double y,
                          const Theta& theta) {
    return clamp_prob(logistic(-linear_predictor(x_shared, y, theta)));
}

double cumulant_c(const VectorXd& x, double gamma, const Xi& xi, int order) {
    const VectorXd xt = design_row(x);
    switch (xi.family) {
        case OutcomeFamily::BernoulliLogistic: {
            const double p = logistic(xt.dot(xi.coef));
            // D = 1 - p + p*exp(gamma), evaluated as exp-shifted form for
            // large gamma.
            const double eg = std::exp(gamma);
            const double D = 1.0 - p + p * eg;
            if (order == 0) return std::log(D);
            const double q = p * eg / D;
            if (order == 1) return q;
            if (order == 2) return q * (1.0 - q);
            break;
        }
        case OutcomeFamily::GaussianLinear: {
            const double m = xt.dot(xi.coef);
            if (order == 0) return gamma * m + 0.5 * gamma * gamma * xi.sigma2;
            if (order == 1) return m + gamma * xi.sigma2;
            if (order == 2) return xi.sigma2;
            break;
        }
    }
    throw DomainError("cumulant_c: order must be 0, 1 or 2");
}

VectorXd cumulant_c_grad_xi(const VectorXd& x, double gamma, const Xi& xi) {
    const VectorXd xt = design_row(x);
    VectorXd g = VectorXd::Zero(xi.dim());
    switch (xi.family) {
        case OutcomeFamily::BernoulliLogistic: {
            const double p = logistic(xt.dot(xi.coef));
            const double eg = std::exp(gamma);
            const double D = 1.0 - p + p * eg;
            g = ((eg - 1.0) * p * (1.0 - p) / D) * xt;
            return g;
        }
        case OutcomeFamily::GaussianLinear: {
            g.head(xt.size()) = gamma * xt;
            g(g.size() - 1) = 0.5 * gamma * gamma;
            return g;
        }
    }
    throw DomainError("cumulant_c_grad_xi: unknown family");
}

double pi_marginal(const VectorXd& x, const VectorXd& x_shared,
                   const Theta& theta, const Xi& xi) {
    if (x_shared.size() != theta.beta.size())
        throw DimensionError("pi_marginal: shared-column count mismatch");
    const double eta = theta.alpha + x_shared.dot(theta.beta) +
                       cumulant_c(x, theta.gamma, xi, 0);
    return clamp_prob(logistic(-eta));
}

double conditional_density(double y, const VectorXd& x,
                           const VectorXd& x_shared, const Theta& theta,
                           const Xi& xi) {
    const double pi = pi_marginal(x, x_shared, theta, xi);
    const double f = std::exp(outcome_loglik(y, x, xi));
    const double c = cumulant_c(x, theta.gamma, xi, 0);
    return pi * f + (1.0 - pi) * f * std::exp(theta.gamma * y - c);
}

double conditional_mean(const VectorXd& x, const VectorXd& x_shared,
                        const Theta& theta, const Xi& xi) {
    const double pi = pi_marginal(x, x_shared, theta, xi);
    const double dc0 = cumulant_c(x, 0.0, xi, 1);
    const double dcg = cumulant_c(x, theta.gamma, xi, 1);
    return pi * dc0 + (1.0 - pi) * dcg;
}

namespace {

// Gradient of grad_gamma c(x; gamma, xi) with respect to xi.
VectorXd cumulant_dgamma_grad_xi(const VectorXd& xt, double gamma,
                                 const Xi& xi) {
    VectorXd g = VectorXd::Zero(xi.dim());
    switch (xi.family) {
        case OutcomeFamily::BernoulliLogistic: {
            const double p = logistic(xt.dot(xi.coef));
            const double eg = std::exp(gamma);
            const double D = 1.0 - p + p * eg;
            g = (eg * p * (1.0 - p) / (D * D)) * xt;
            return g;
        }
        case OutcomeFamily::GaussianLinear: {
            g.head(xt.size()) = xt;
            g(g.size() - 1) = gamma;
            return g;
        }
    }
    throw DomainError("unknown family");
}

}  // namespace

MeanGrads conditional_mean_grads(const VectorXd& x, const VectorXd& x_shared,
                                 const Theta& theta, const Xi& xi) {
    const VectorXd xt = design_row(x);
    const double pi = pi_marginal(x, x_shared, theta, xi);
    const double dc0 = cumulant_c(x, 0.0, xi, 1);
    const double dcg = cumulant_c(x, theta.gamma, xi, 1);
    const double gap = dc0 - dcg;

    // grad_theta pi = -pi(1-pi) * (1, x_shared', grad_gamma c)'.
    VectorXd h(theta.dim());
    h(0) = 1.0;
    h.segment(1, x_shared.size()) = x_shared;
    h(h.size() - 1) = dcg;

    MeanGrads out;
    out.wrt_theta = (-pi * (1.0 - pi) * gap) * h;
    // gamma also enters m directly through grad_gamma c evaluated at gamma
    out.wrt_theta(out.wrt_theta.size() - 1) +=
        (1.0 - pi) * cumulant_c(x, theta.gamma, xi, 2);

    const VectorXd dc_xi = cumulant_c_grad_xi(x, theta.gamma, xi);
    const VectorXd d0_xi = cumulant_dgamma_grad_xi(xt, 0.0, xi);
    const VectorXd dg_xi = cumulant_dgamma_grad_xi(xt, theta.gamma, xi);
    out.wrt_xi = (-pi * (1.0 - pi) * gap) * dc_xi + pi * d0_xi +
                 (1.0 - pi) * dg_xi;
    return out;
}

double family_mean(const VectorXd& x, const Xi& xi) {
    const VectorXd xt = design_row(x);
    const double lin = xt.dot(xi.coef);
    return xi.family == OutcomeFamily::BernoulliLogistic ? logistic(lin) : lin;
}

double outcome_loglik(double y, const VectorXd& x, const Xi& xi) {
    const VectorXd xt = design_row(x);
    const double lin = xt.dot(xi.coef);
    switch (xi.family) {
        case OutcomeFamily::BernoulliLogistic:
            return y * lin - log1p_exp(lin);
        case OutcomeFamily::GaussianLinear: {
            const double r = y - lin;
            return -0.5 * std::log(2.0 * M_PI * xi.sigma2) -
                   0.5 * r * r / xi.sigma2;
        }
    }
    throw DomainError("outcome_loglik: unknown family");
}

VectorXd outcome_score(double y, const VectorXd& x, const Xi& xi) {
    const VectorXd xt = design_row(x);
    const double lin = xt.dot(xi.coef);
    VectorXd s = VectorXd::Zero(xi.dim());
    switch (xi.family) {
        case OutcomeFamily::BernoulliLogistic:
            s = (y - logistic(lin)) * xt;
            return s;
        case OutcomeFamily::GaussianLinear: {
            const double r = y - lin;
            const double s2 = xi.sigma2;
            s.head(xt.size()) = (r / s2) * xt;
            s(s.size() - 1) = -0.5 / s2 + 0.5 * r * r / (s2 * s2);
            return s;
        }
    }
    throw DomainError("outcome_score: unknown family");
}

MatrixXd outcome_hessian(double y, const VectorXd& x, const Xi& xi) {
    const VectorXd xt = design_row(x);
    const double lin = xt.dot(xi.coef);
    MatrixXd H = MatrixXd::Zero(xi.dim(), xi.dim());
    switch (xi.family) {
        case OutcomeFamily::BernoulliLogistic: {
            const double p = logistic(lin);
            H = (-p * (1.0 - p)) * (xt * xt.transpose());
            return H;
        }
        case OutcomeFamily::GaussianLinear: {
            const double r = y - lin;
            const double s2 = xi.sigma2;
            const int k = static_cast<int>(xt.size());
            H.topLeftCorner(k, k) = (-1.0 / s2) * (xt * xt.transpose());
            H.block(0, k, k, 1) = (-r / (s2 * s2)) * xt;
            H.block(k, 0, 1, k) = H.block(0, k, k, 1).transpose();
            H(k, k) = 0.5 / (s2 * s2) - r * r / (s2 * s2 * s2);
            return H;
        }
    }
    throw DomainError("outcome_hessian: unknown family");
}

}  // namespace npsurvey
