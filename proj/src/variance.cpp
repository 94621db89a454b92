#include "npsurvey/variance.hpp"

#include <cmath>

#include "npsurvey/model.hpp"

namespace npsurvey {

namespace {

constexpr double kCondLimit = 1e10;

// x' M^{-1} as a row vector, falling back to the pseudo-inverse when M is
// near singular.
RowVectorXd solve_right(const RowVectorXd& x, const MatrixXd& M, bool* used_pinv) {
    Eigen::JacobiSVD<MatrixXd> svd(M, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    const double smax = sv(0);
    const double smin = sv(sv.size() - 1);
    if (smin <= 0.0 || smax / smin > kCondLimit) {
        if (used_pinv) *used_pinv = true;
        VectorXd inv_sv = sv;
        for (int i = 0; i < sv.size(); ++i)
            inv_sv(i) = sv(i) > smax * 1e-12 ? 1.0 / sv(i) : 0.0;
        const MatrixXd pinv =
            svd.matrixV() * inv_sv.asDiagonal() * svd.matrixU().transpose();
        return x * pinv;
    }
    return svd.solve(x.transpose()).transpose();
}

struct UnitCache {
    double pa, pi, m, y;
    VectorXd h, ha, dc_xi, score_xi;
};

std::vector<UnitCache> cache_units(const SampleA& a, const Theta& theta,
                                   const Xi& xi) {
    std::vector<UnitCache> u(a.n());
    for (int i = 0; i < a.n(); ++i) {
        const VectorXd xr = a.X.row(i).transpose();
        const VectorXd xs = shared_part(xr, a.schema);
        UnitCache& c = u[i];
        c.y = a.y(i);
        c.pa = participation_prob(xs, c.y, theta);
        c.pi = pi_marginal(xr, xs, theta, xi);
        c.m = conditional_mean(xr, xs, theta, xi);
        const double dcg = cumulant_c(xr, theta.gamma, xi, 1);
        c.h.resize(theta.dim());
        c.h(0) = 1.0;
        c.h.segment(1, xs.size()) = xs;
        c.h(c.h.size() - 1) = dcg;
        c.ha.resize(theta.dim());
        c.ha(0) = 1.0;
        c.ha.segment(1, xs.size()) = xs;
        c.ha(c.ha.size() - 1) = c.y;
        c.dc_xi = cumulant_c_grad_xi(xr, theta.gamma, xi);
        c.score_xi = outcome_score(c.y, xr, xi);
    }
    return u;
}

}  // namespace

VarianceComponents estimate_components(EstimatorKind kind,
                                       const SampleA& sample_a,
                                       const SampleB& sample_b,
                                       const Theta& theta, const Xi& xi,
                                       double mu_hat) {
    (void)kind;
    const int q = theta.dim();
    const int kx = xi.dim();
    const auto units = cache_units(sample_a, theta, xi);

    double nhat_a = 0.0;
    for (const auto& c : units) nhat_a += 1.0 / c.pa;

    VarianceComponents out;
    out.mu_plug = mu_hat;
    out.V12 = RowVectorXd::Zero(q);
    out.V12a = RowVectorXd::Zero(q);
    out.V12e = RowVectorXd::Zero(q);
    out.V13e = RowVectorXd::Zero(kx);
    out.V22 = MatrixXd::Zero(q, q);
    out.V23 = MatrixXd::Zero(q, kx);
    out.V33 = MatrixXd::Zero(kx, kx);

    double hbar = 0.0, mbar = 0.0;
    for (const auto& c : units) {
        const double w = 1.0 / (c.pa * nhat_a);
        hbar += w * (c.y - c.m);
        mbar += w * c.m;
    }
    out.hbar = hbar;
    out.m_bar = mbar;

    for (int i = 0; i < sample_a.n(); ++i) {
        const UnitCache& c = units[i];
        const double w = 1.0 / (c.pa * nhat_a);
        out.V12 += w * (1.0 - c.pa) * (c.y - mu_hat) * c.ha.transpose();
        out.V12a += w * (1.0 - c.pa) * (c.y - c.m - hbar) * c.ha.transpose();
        out.V22 -= w * c.pi * (1.0 - c.pi) * (c.h * c.h.transpose());
        out.V23 -= w * c.pi * (1.0 - c.pi) * (c.h * c.dc_xi.transpose());
        // pi^A cancels against the plug-in weight in V33.
        out.V33 += outcome_hessian(c.y, sample_a.X.row(i).transpose(), xi) / nhat_a;
        const MeanGrads mg = conditional_mean_grads(
            sample_a.X.row(i).transpose(),
            shared_part(sample_a.X.row(i).transpose(), sample_a.schema), theta, xi);
        out.V12e += w * mg.wrt_theta.transpose();
        out.V13e += w * mg.wrt_xi.transpose();
    }
    (void)sample_b;
    return out;
}

MatrixXd design_variance_direct(const MatrixXd& g, const VectorXd& pi_first,
                                const MatrixXd& pi_joint, double nhat_b) {
    const int n = static_cast<int>(g.rows());
    const int k = static_cast<int>(g.cols());
    MatrixXd v = MatrixXd::Zero(k, k);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            const double pij = (i == j) ? pi_first(i) : pi_joint(i, j);
            const double coef = (pij - pi_first(i) * pi_first(j)) / pij;
            v += coef * (g.row(i).transpose() / pi_first(i)) *
                 (g.row(j) / pi_first(j));
        }
    }
    return v / nhat_b;
}

MatrixXd design_variance(const MatrixXd& g, const SampleB& sample_b) {
    const int n = static_cast<int>(g.rows());
    const int k = static_cast<int>(g.cols());
    if (n != sample_b.n())
        throw DimensionError("design_variance: g rows must align with S_B");
    const double nhat_b = sample_b.n_hat();
    const DesignInfo& des = sample_b.design;

    switch (des.kind) {
        case DesignInfo::Kind::Srswor: {
            if (des.N <= 0)
                throw DomainError("SRSWOR design variance requires N");
            const double N = static_cast<double>(des.N);
            const double nn = static_cast<double>(des.n);
            if (static_cast<long long>(n) != des.n)
                throw DimensionError("design_variance: sample size differs from design n");
            const double pi = nn / N;
            // Closed form of the double sum. With pi_i = n/N and
            // pi_ij = n(n-1)/{N(N-1)} the pair coefficient
            // (pi_ij - pi_i pi_j)/pi_ij equals (1 - n/N) on the diagonal and
            // -(N-n)/{N(n-1)} off the diagonal, so
            //   sum_ij = (1/pi^2) [ (c_d - c_o) sum_i g_i g_i' + c_o T T' ],
            // T = sum_i g_i, which is O(n).
            const double c_d = 1.0 - pi;
            const double c_o = (nn > 1.0) ? -(N - nn) / (N * (nn - 1.0)) : 0.0;
            MatrixXd gg = MatrixXd::Zero(k, k);
            for (int i = 0; i < n; ++i)
                gg += g.row(i).transpose() * g.row(i);
            const VectorXd T = g.colwise().sum().transpose();
            const MatrixXd v =
                ((c_d - c_o) * gg + c_o * (T * T.transpose())) / (pi * pi);
            return v / nhat_b;
        }
        case DesignInfo::Kind::GeneralHT: {
            if (des.pi.size() != n || des.pi_joint.rows() != n)
                throw DimensionError("GeneralHT design needs aligned inclusion probabilities");
            return design_variance_direct(g, des.pi, des.pi_joint, nhat_b);
        }
        case DesignInfo::Kind::HajekApprox: {
            // Weighted-residual approximation with pi_i = 1/d_i.
            VectorXd pi = sample_b.d.cwiseInverse().cwiseMin(1.0);
            VectorXd a = VectorXd::Ones(n) - pi;
            const double asum = a.sum();
            MatrixXd gcheck(n, k);
            for (int i = 0; i < n; ++i) gcheck.row(i) = g.row(i) / pi(i);
            RowVectorXd center = RowVectorXd::Zero(k);
            if (asum > 0.0) center = (a.transpose() * gcheck) / asum;
            MatrixXd v = MatrixXd::Zero(k, k);
            for (int i = 0; i < n; ++i) {
                const RowVectorXd r = gcheck.row(i) - center;
                v += a(i) * r.transpose() * r;
            }
            if (n > 1) v *= static_cast<double>(n) / (n - 1.0);
            return v / nhat_b;
        }
    }
    throw DomainError("design_variance: unknown design kind");
}

double sigma2_plugin(EstimatorKind kind, const VarianceComponents& comps,
                     const SampleA& sample_a, const SampleB& sample_b,
                     const Theta& theta, const Xi& xi,
                     VarianceDiagnostics* diag) {
    const auto units = cache_units(sample_a, theta, xi);
    double nhat_a = 0.0;
    for (const auto& c : units) nhat_a += 1.0 / c.pa;

    bool pinv22 = false, pinv33 = false;
    RowVectorXd ch;   // coefficient on h_i inside the bracket
    RowVectorXd cs;   // coefficient on the xi-score inside the bracket
    switch (kind) {
        case EstimatorKind::IPW: {
            ch = solve_right(comps.V12, comps.V22, &pinv22);
            cs = solve_right(ch * comps.V23, comps.V33, &pinv33);
            break;
        }
        case EstimatorKind::REG: {
            ch = solve_right(comps.V12e, comps.V22, &pinv22);
            cs = solve_right(ch * comps.V23 - comps.V13e, comps.V33, &pinv33);
            break;
        }
        case EstimatorKind::AIPW: {
            ch = solve_right(comps.V12a, comps.V22, &pinv22);
            cs = solve_right(ch * comps.V23, comps.V33, &pinv33);
            break;
        }
        default:
            throw DomainError("sigma2_plugin supports IPW, REG and AIPW only");
    }
    if (diag && (pinv22 || pinv33)) diag->pinv_used += 1;

    double a_term = 0.0;
    for (const auto& c : units) {
        double bracket = ch.dot(c.h) + cs.dot(c.score_xi);
        if (kind == EstimatorKind::IPW)
            bracket += (c.y - comps.mu_plug) / c.pa;
        else if (kind == EstimatorKind::AIPW)
            bracket += (c.y - c.m - comps.hbar) / c.pa;
        a_term += (1.0 - c.pa) * bracket * bracket / nhat_a;
    }

    // Design term over S_B.
    MatrixXd g(sample_b.n(), 1);
    for (int i = 0; i < sample_b.n(); ++i) {
        const VectorXd xr = sample_b.X.row(i).transpose();
        const VectorXd xs = shared_part(xr, sample_b.schema);
        const double pi = pi_marginal(xr, xs, theta, xi);
        const double dcg = cumulant_c(xr, theta.gamma, xi, 1);
        VectorXd h(theta.dim());
        h(0) = 1.0;
        h.segment(1, xs.size()) = xs;
        h(h.size() - 1) = dcg;
        switch (kind) {
            case EstimatorKind::IPW:
                g(i, 0) = pi * ch.dot(h);
                break;
            case EstimatorKind::REG:
                g(i, 0) = conditional_mean(xr, xs, theta, xi) - comps.mu_plug -
                          pi * ch.dot(h);
                break;
            default:  // AIPW
                g(i, 0) = conditional_mean(xr, xs, theta, xi) - comps.m_bar -
                          pi * ch.dot(h);
                break;
        }
    }
    const double b_term = design_variance(g, sample_b)(0, 0);

    double s2 = a_term + b_term;
    if (s2 < 0.0) {
        if (diag) diag->floored += 1;
        s2 = 0.0;
    }
    return s2;
}

double normal_quantile(double prob) {
    if (!(prob > 0.0 && prob < 1.0))
        throw DomainError("normal_quantile: probability must be in (0,1)");
    // Acklam's rational approximation, refined by one Halley step.
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};
    const double plow = 0.02425;
    double x;
    if (prob < plow) {
        const double u = std::sqrt(-2.0 * std::log(prob));
        x = (((((c[0] * u + c[1]) * u + c[2]) * u + c[3]) * u + c[4]) * u + c[5]) /
            ((((d[0] * u + d[1]) * u + d[2]) * u + d[3]) * u + 1.0);
    } else if (prob <= 1.0 - plow) {
        const double u = prob - 0.5;
        const double r = u * u;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * u /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double u = std::sqrt(-2.0 * std::log(1.0 - prob));
        x = -(((((c[0] * u + c[1]) * u + c[2]) * u + c[3]) * u + c[4]) * u + c[5]) /
            ((((d[0] * u + d[1]) * u + d[2]) * u + d[3]) * u + 1.0);
    }
    const double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - prob;
    const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
    const double u = e * std::sqrt(2.0 * M_PI) * std::exp(0.5 * x * x);
    x -= u / (1.0 + 0.5 * x * u);
    (void)pdf;
    return x;
}

IntervalEstimate wald_ci(double mu_hat, double sigma2, double n_hat_b,
                         double level) {
    if (!(level > 0.0 && level < 1.0))
        throw DomainError("wald_ci: level must be in (0,1)");
    if (sigma2 < 0.0) throw DomainError("wald_ci: negative variance");
    IntervalEstimate ci;
    ci.estimate = mu_hat;
    ci.level = level;
    ci.se = std::sqrt(sigma2 / n_hat_b);
    const double z = normal_quantile(1.0 - (1.0 - level) / 2.0);
    ci.ci_low = mu_hat - z * ci.se;
    ci.ci_high = mu_hat + z * ci.se;
    return ci;
}

}  // namespace npsurvey
