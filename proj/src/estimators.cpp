#include "npsurvey/estimators.hpp"

#include "npsurvey/model.hpp"

namespace npsurvey {

std::string to_string(EstimatorKind kind) {
    switch (kind) {
        case EstimatorKind::Naive: return "naive";
        case EstimatorKind::IPW: return "ipw";
        case EstimatorKind::REG: return "reg";
        case EstimatorKind::AIPW: return "aipw";
        case EstimatorKind::EL: return "el";
        case EstimatorKind::REG2: return "reg2";
        case EstimatorKind::IPW2: return "ipw2";
        case EstimatorKind::DR2: return "dr2";
    }
    return "?";
}

EstimatorKind estimator_from_string(const std::string& name) {
    if (name == "naive") return EstimatorKind::Naive;
    if (name == "ipw") return EstimatorKind::IPW;
    if (name == "reg") return EstimatorKind::REG;
    if (name == "aipw") return EstimatorKind::AIPW;
    if (name == "el") return EstimatorKind::EL;
    if (name == "reg2") return EstimatorKind::REG2;
    if (name == "ipw2") return EstimatorKind::IPW2;
    if (name == "dr2") return EstimatorKind::DR2;
    throw DomainError("unknown estimator: " + name);
}

MeanEstimate mu_naive(const SampleA& sample_a) {
    if (sample_a.n() < 1) throw DomainError("mu_naive: empty sample");
    MeanEstimate e;
    e.kind = EstimatorKind::Naive;
    e.value = sample_a.y.mean();
    e.n_hat_a = sample_a.n();
    return e;
}

MeanEstimate mu_ipw_from_probs(const VectorXd& y, const VectorXd& probs) {
    MeanEstimate e;
    e.kind = EstimatorKind::IPW;
    e.n_hat_a = probs.cwiseInverse().sum();
    // Hajek ratio on weights normalized by the smallest propensity: exactly
    // scale invariant, and exactly the sample mean under constant propensity
    const VectorXd u = (probs.minCoeff() / probs.array()).matrix();
    e.value = u.dot(y) / u.sum();
    return e;
}

MeanEstimate mu_ipw(const SampleA& sample_a, const Theta& theta) {
    VectorXd probs(sample_a.n());
    for (int i = 0; i < sample_a.n(); ++i) {
        const VectorXd xr = sample_a.X.row(i).transpose();
        probs(i) = participation_prob(shared_part(xr, sample_a.schema),
                                      sample_a.y(i), theta);
    }
    return mu_ipw_from_probs(sample_a.y, probs);
}

MeanEstimate mu_reg(const SampleB& sample_b, const Theta& theta, const Xi& xi) {
    double num = 0.0;
    for (int i = 0; i < sample_b.n(); ++i) {
        const VectorXd xr = sample_b.X.row(i).transpose();
        num += sample_b.d(i) *
               conditional_mean(xr, shared_part(xr, sample_b.schema), theta, xi);
    }
    MeanEstimate e;
    e.kind = EstimatorKind::REG;
    e.n_hat_b = sample_b.n_hat();
    e.value = num / e.n_hat_b;
    return e;
}

MeanEstimate mu_aipw(const SampleA& sample_a, const SampleB& sample_b,
                     const Theta& theta, const Xi& xi) {
    VectorXd probs(sample_a.n()), m(sample_a.n());
    for (int i = 0; i < sample_a.n(); ++i) {
        const VectorXd xr = sample_a.X.row(i).transpose();
        const VectorXd xs = shared_part(xr, sample_a.schema);
        probs(i) = participation_prob(xs, sample_a.y(i), theta);
        m(i) = conditional_mean(xr, xs, theta, xi);
    }
    const MeanEstimate reg = mu_reg(sample_b, theta, xi);
    MeanEstimate e;
    e.kind = EstimatorKind::AIPW;
    e.n_hat_a = probs.cwiseInverse().sum();
    e.n_hat_b = reg.n_hat_b;
    // same normalized Hajek kernel as mu_ipw_from_probs
    const VectorXd u = (probs.minCoeff() / probs.array()).matrix();
    e.value = u.dot(sample_a.y - m) / u.sum() + reg.value;
    return e;
}

MeanEstimate mu_el(const ELWeights& weights, const SampleA& sample_a) {
    if (weights.p.size() != sample_a.n())
        throw DimensionError("mu_el: weight/sample length mismatch");
    MeanEstimate e;
    e.kind = EstimatorKind::EL;
    e.value = weights.p.dot(sample_a.y);
    e.n_hat_a = sample_a.n();
    return e;
}

IgnorableBaselines ignorable_baselines(const SampleA& sample_a,
                                       const SampleB& sample_b,
                                       OutcomeFamily family) {
    IgnorableBaselines out;
    out.theta_ignorable = fit_theta_ignorable(sample_a, sample_b).theta;
    out.xi_hat = fit_outcome_mle(sample_a, family).xi;

    // Outcome predictions ignore selection: E(y|x) = family mean at xi_hat.
    double pred_b = 0.0;
    for (int i = 0; i < sample_b.n(); ++i)
        pred_b += sample_b.d(i) * family_mean(sample_b.X.row(i).transpose(), out.xi_hat);
    const double nhat_b = sample_b.n_hat();

    out.reg2.kind = EstimatorKind::REG2;
    out.reg2.n_hat_b = nhat_b;
    out.reg2.value = pred_b / nhat_b;

    double nhat_a = 0.0, ysum = 0.0, resid = 0.0;
    for (int i = 0; i < sample_a.n(); ++i) {
        const VectorXd xr = sample_a.X.row(i).transpose();
        const double pa = participation_prob(shared_part(xr, sample_a.schema),
                                             sample_a.y(i), out.theta_ignorable);
        const double m = family_mean(xr, out.xi_hat);
        nhat_a += 1.0 / pa;
        ysum += sample_a.y(i) / pa;
        resid += (sample_a.y(i) - m) / pa;
    }
    out.ipw2.kind = EstimatorKind::IPW2;
    out.ipw2.n_hat_a = nhat_a;
    out.ipw2.value = ysum / nhat_a;

    out.dr2.kind = EstimatorKind::DR2;
    out.dr2.n_hat_a = nhat_a;
    out.dr2.n_hat_b = nhat_b;
    out.dr2.value = resid / nhat_a + out.reg2.value;
    return out;
}

}  // namespace npsurvey
