#include "npsurvey/fitting.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "npsurvey/model.hpp"
#include "npsurvey/rng.hpp"

namespace npsurvey {

namespace {

MatrixXd shared_columns(const MatrixXd& X, const Schema& schema) {
    const auto idx = schema.shared_indices();
    MatrixXd Xs(X.rows(), idx.size());
    for (size_t k = 0; k < idx.size(); ++k) Xs.col(k) = X.col(idx[k]);
    return Xs;
}

MatrixXd with_intercept(const MatrixXd& X) {
    MatrixXd Xt(X.rows(), X.cols() + 1);
    Xt.col(0).setOnes();
    Xt.rightCols(X.cols()) = X;
    return Xt;
}

// Cached quantities for repeated pseudo-likelihood evaluations: the cumulant
// c(x; gamma, xi) depends on x only through the family linear predictor.
struct PmlWorkspace {
    MatrixXd Xs_a, Xs_b;   // shared columns
    VectorXd fam_a, fam_b;  // Bernoulli success prob or Gaussian mean
    VectorXd d;
    OutcomeFamily family;
    double sigma2 = 0.0;
    int n_a = 0, n_b = 0, q = 0;

    PmlWorkspace(const Xi& xi, const SampleA& a, const SampleB& b) {
        if (!a.schema.same_columns(b.schema))
            throw SchemaError("samples A and B carry different covariate schemas");
        Xs_a = shared_columns(a.X, a.schema);
        Xs_b = shared_columns(b.X, b.schema);
        const MatrixXd Xt_a = with_intercept(a.X);
        const MatrixXd Xt_b = with_intercept(b.X);
        family = xi.family;
        sigma2 = xi.sigma2;
        if (family == OutcomeFamily::BernoulliLogistic) {
            fam_a = (Xt_a * xi.coef).unaryExpr([](double t) { return logistic(t); });
            fam_b = (Xt_b * xi.coef).unaryExpr([](double t) { return logistic(t); });
        } else {
            fam_a = Xt_a * xi.coef;
            fam_b = Xt_b * xi.coef;
        }
        d = b.d;
        n_a = a.n();
        n_b = b.n();
        q = static_cast<int>(Xs_a.cols()) + 2;
    }

    // c and dc/dgamma for one unit given its cached family value.
    void cumulant(double fam, double gamma, double& c, double& dc) const {
        if (family == OutcomeFamily::BernoulliLogistic) {
            const double eg = std::exp(gamma);
            const double D = 1.0 - fam + fam * eg;
            c = std::log(D);
            dc = fam * eg / D;
        } else {
            c = gamma * fam + 0.5 * gamma * gamma * sigma2;
            dc = fam + gamma * sigma2;
        }
    }

    double loglik(const VectorXd& t) const {
        const double alpha = t(0);
        const double gamma = t(q - 1);
        const VectorXd beta = t.segment(1, q - 2);
        const VectorXd lin_a = Xs_a * beta;
        const VectorXd lin_b = Xs_b * beta;
        double ll = 0.0;
        double c, dc;
        for (int i = 0; i < n_a; ++i) {
            cumulant(fam_a(i), gamma, c, dc);
            ll -= alpha + lin_a(i) + c;
        }
        for (int i = 0; i < n_b; ++i) {
            cumulant(fam_b(i), gamma, c, dc);
            const double eta = alpha + lin_b(i) + c;
            ll += d(i) * (eta - log1p_exp(eta));
        }
        return ll;
    }

    VectorXd score(const VectorXd& t) const {
        const double alpha = t(0);
        const double gamma = t(q - 1);
        const VectorXd beta = t.segment(1, q - 2);
        const VectorXd lin_a = Xs_a * beta;
        const VectorXd lin_b = Xs_b * beta;
        VectorXd g = VectorXd::Zero(q);
        double c, dc;
        for (int i = 0; i < n_a; ++i) {
            cumulant(fam_a(i), gamma, c, dc);
            g(0) -= 1.0;
            g.segment(1, q - 2) -= Xs_a.row(i).transpose();
            g(q - 1) -= dc;
        }
        for (int i = 0; i < n_b; ++i) {
            cumulant(fam_b(i), gamma, c, dc);
            const double eta = alpha + lin_b(i) + c;
            const double pi = logistic(-eta);
            const double w = d(i) * pi;
            g(0) += w;
            g.segment(1, q - 2) += w * Xs_b.row(i).transpose();
            g(q - 1) += w * dc;
        }
        return g;
    }
};

MatrixXd fd_jacobian_of_score(const PmlWorkspace& ws, const VectorXd& t) {
    const int q = static_cast<int>(t.size());
    MatrixXd J(q, q);
    for (int j = 0; j < q; ++j) {
        const double h = 1e-6 * (1.0 + std::abs(t(j)));
        VectorXd tp = t, tm = t;
        tp(j) += h;
        tm(j) -= h;
        J.col(j) = (ws.score(tp) - ws.score(tm)) / (2.0 * h);
    }
    return 0.5 * (J + J.transpose());
}

double condition_number(const MatrixXd& S) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(S);
    const double lmin = es.eigenvalues().minCoeff();
    const double lmax = es.eigenvalues().maxCoeff();
    if (lmin <= 0.0) return std::numeric_limits<double>::infinity();
    return lmax / lmin;
}

}  // namespace

// ---- Outcome MLE -----------------------------------------------------------

XiFit fit_outcome_mle(const SampleA& sample_a, OutcomeFamily family) {
    sample_a.validate(family);
    const int n = sample_a.n();
    const int k = sample_a.schema.p() + 1;
    if (n <= sample_a.schema.p() + 1)
        throw DomainError("outcome MLE needs n_A > p + 1");

    const MatrixXd Xt = with_intercept(sample_a.X);
    const VectorXd& y = sample_a.y;

    Xi xi;
    xi.family = family;
    xi.coef = VectorXd::Zero(k);
    if (family == OutcomeFamily::GaussianLinear) {
        // OLS start: essentially the MLE already.
        xi.coef = (Xt.transpose() * Xt).ldlt().solve(Xt.transpose() * y);
        const VectorXd r = y - Xt * xi.coef;
        xi.sigma2 = std::max(r.squaredNorm() / n, 1e-12);
    }

    auto total_loglik = [&](const Xi& z) {
        double ll = 0.0;
        for (int i = 0; i < n; ++i)
            ll += outcome_loglik(y(i), sample_a.X.row(i).transpose(), z);
        return ll;
    };
    auto pack = [&](const Xi& z) {
        VectorXd t(z.dim());
        t.head(k) = z.coef;
        if (family == OutcomeFamily::GaussianLinear) t(k) = z.sigma2;
        return t;
    };
    auto unpack = [&](const VectorXd& t) {
        Xi z = xi;
        z.coef = t.head(k);
        if (family == OutcomeFamily::GaussianLinear) z.sigma2 = t(k);
        return z;
    };

    const double tol = 1e-9 * std::max(1, n);
    double ll = total_loglik(xi);
    int it = 0;
    double gnorm = std::numeric_limits<double>::infinity();
    for (; it < 200; ++it) {
        VectorXd g = VectorXd::Zero(xi.dim());
        MatrixXd H = MatrixXd::Zero(xi.dim(), xi.dim());
        for (int i = 0; i < n; ++i) {
            const VectorXd xr = sample_a.X.row(i).transpose();
            g += outcome_score(y(i), xr, xi);
            H += outcome_hessian(y(i), xr, xi);
        }
        gnorm = g.lpNorm<Eigen::Infinity>();
        if (gnorm <= tol) break;
        if (family == OutcomeFamily::BernoulliLogistic &&
            xi.coef.lpNorm<Eigen::Infinity>() > 30.0)
            throw SeparationError("perfect separation in the binary outcome fit");

        Eigen::LDLT<MatrixXd> ldlt(-H);
        VectorXd step = ldlt.solve(g);
        if (ldlt.info() != Eigen::Success || !step.allFinite())
            throw SingularError("singular information in the outcome fit");

        // step-halving
        VectorXd t = pack(xi);
        double scale = 1.0;
        bool moved = false;
        for (int h = 0; h < 40; ++h) {
            VectorXd tn = t + scale * step;
            if (family != OutcomeFamily::GaussianLinear || tn(k) > 0.0) {
                Xi cand = unpack(tn);
                const double lln = total_loglik(cand);
                if (lln > ll - 1e-12 * std::abs(ll)) {
                    xi = cand;
                    ll = lln;
                    moved = true;
                    break;
                }
            }
            scale *= 0.5;
        }
        if (!moved) break;
    }
    if (family == OutcomeFamily::BernoulliLogistic &&
        xi.coef.lpNorm<Eigen::Infinity>() > 30.0 && gnorm > tol)
        throw SeparationError("perfect separation in the binary outcome fit");

    XiFit fit;
    fit.xi = xi;
    fit.loglik = ll;
    fit.gradient_norm = gnorm;
    fit.iterations = it;
    fit.converged = gnorm <= tol;
    MatrixXd H = MatrixXd::Zero(xi.dim(), xi.dim());
    for (int i = 0; i < n; ++i)
        H += outcome_hessian(y(i), sample_a.X.row(i).transpose(), xi);
    fit.info = -H;
    return fit;
}

// ---- Pseudo likelihood -----------------------------------------------------

double pseudo_loglik(const Theta& theta, const Xi& xi, const SampleA& sample_a,
                     const SampleB& sample_b) {
    PmlWorkspace ws(xi, sample_a, sample_b);
    return ws.loglik(theta.pack());
}

VectorXd pseudo_score(const Theta& theta, const Xi& xi, const SampleA& sample_a,
                      const SampleB& sample_b) {
    PmlWorkspace ws(xi, sample_a, sample_b);
    return ws.score(theta.pack());
}

ThetaFit fit_theta_ignorable(const SampleA& sample_a, const SampleB& sample_b,
                             const FitOptions& opts) {
    const MatrixXd Hs_a = with_intercept(shared_columns(sample_a.X, sample_a.schema));
    const MatrixXd Hs_b = with_intercept(shared_columns(sample_b.X, sample_b.schema));
    const VectorXd& d = sample_b.d;
    const int q = static_cast<int>(Hs_a.cols());

    auto loglik = [&](const VectorXd& t) {
        const VectorXd eta = Hs_b * t;
        double ll = -(Hs_a * t).sum();
        for (int i = 0; i < Hs_b.rows(); ++i)
            ll += d(i) * (eta(i) - log1p_exp(eta(i)));
        return ll;
    };

    VectorXd t = VectorXd::Zero(q);
    double ll = loglik(t);
    double gnorm = std::numeric_limits<double>::infinity();
    int it = 0;
    for (; it < opts.max_iter; ++it) {
        const VectorXd eta = Hs_b * t;
        VectorXd g = -Hs_a.colwise().sum().transpose();
        MatrixXd H = MatrixXd::Zero(q, q);
        for (int i = 0; i < Hs_b.rows(); ++i) {
            const double pi = logistic(-eta(i));
            g += d(i) * pi * Hs_b.row(i).transpose();
            H -= d(i) * pi * (1.0 - pi) * Hs_b.row(i).transpose() * Hs_b.row(i);
        }
        gnorm = g.lpNorm<Eigen::Infinity>();
        if (gnorm <= opts.grad_tol) break;
        VectorXd step = (-H).ldlt().solve(g);
        double scale = 1.0;
        for (int h = 0; h < 40; ++h) {
            const double lln = loglik(t + scale * step);
            if (lln >= ll) {
                t += scale * step;
                ll = lln;
                break;
            }
            scale *= 0.5;
        }
    }

    ThetaFit fit;
    Theta th;
    th.alpha = t(0);
    th.beta = t.tail(q - 1);
    th.gamma = 0.0;
    fit.theta = th;
    fit.objective = ll;
    fit.gradient_norm = gnorm;
    fit.iterations = it;
    fit.converged = gnorm <= opts.grad_tol;
    return fit;
}

ThetaFit fit_theta_pml(const Xi& xi_hat, const SampleA& sample_a,
                       const SampleB& sample_b, std::optional<Theta> init,
                       const FitOptions& opts) {
    PmlWorkspace ws(xi_hat, sample_a, sample_b);
    const int q = ws.q;

    VectorXd t;
    if (init) {
        if (init->dim() != q)
            throw DimensionError("fit_theta_pml: init has wrong dimension");
        t = init->pack();
    } else {
        const ThetaFit ign = fit_theta_ignorable(sample_a, sample_b, opts);
        t = ign.theta.pack();  // gamma released from 0
    }

    // BFGS on -l with backtracking line search.
    auto fval = [&](const VectorXd& x) { return -ws.loglik(x); };
    auto grad = [&](const VectorXd& x) { return VectorXd(-ws.score(x)); };

    MatrixXd Hinv = MatrixXd::Identity(q, q);
    VectorXd g = grad(t);
    double f = fval(t);
    int it = 0;
    for (; it < opts.max_iter; ++it) {
        if (g.lpNorm<Eigen::Infinity>() <= opts.grad_tol) break;
        VectorXd p = -Hinv * g;
        if (p.dot(g) >= 0.0) {  // reset on a non-descent direction
            Hinv.setIdentity();
            p = -g;
        }
        double step = 1.0;
        const double slope = g.dot(p);
        VectorXd tn, gn;
        double fn = f;
        bool moved = false;
        for (int h = 0; h < 60; ++h) {
            tn = t + step * p;
            fn = fval(tn);
            if (std::isfinite(fn) && fn <= f + 1e-4 * step * slope) {
                moved = true;
                break;
            }
            step *= 0.5;
        }
        if (!moved) break;
        gn = grad(tn);
        const VectorXd s = tn - t;
        const VectorXd yv = gn - g;
        const double sy = s.dot(yv);
        if (sy > 1e-12 * s.norm() * yv.norm()) {
            const double rho = 1.0 / sy;
            const MatrixXd I = MatrixXd::Identity(q, q);
            Hinv = (I - rho * s * yv.transpose()) * Hinv *
                       (I - rho * yv * s.transpose()) +
                   rho * s * s.transpose();
        }
        t = tn;
        g = gn;
        f = fn;
    }

    // Newton polish with a finite-difference Hessian of the analytic score.
    VectorXd sc = ws.score(t);
    for (int h = 0; h < 50 && sc.lpNorm<Eigen::Infinity>() > opts.grad_tol; ++h) {
        const MatrixXd H = fd_jacobian_of_score(ws, t);
        Eigen::FullPivLU<MatrixXd> lu(H);
        if (!lu.isInvertible()) break;
        const VectorXd step = lu.solve(sc);
        double scale = 1.0;
        bool moved = false;
        for (int k = 0; k < 30; ++k) {
            const VectorXd tn = t - scale * step;
            const VectorXd scn = ws.score(tn);
            if (scn.norm() < sc.norm()) {
                t = tn;
                sc = scn;
                moved = true;
                break;
            }
            scale *= 0.5;
        }
        if (!moved) break;
        ++it;
    }

    const double gnorm = sc.lpNorm<Eigen::Infinity>();
    ThetaFit fit;
    fit.theta = Theta::unpack(t);
    fit.objective = ws.loglik(t);
    fit.gradient_norm = gnorm;
    fit.iterations = it;
    fit.converged = gnorm <= opts.grad_tol;
    fit.multiplicity = Multiplicity::Unknown;
    fit.info = -fd_jacobian_of_score(ws, t);
    fit.ill_conditioned = condition_number(fit.info) > 1e10;
    if (!fit.converged)
        throw ConvergenceError("pseudo-likelihood fit did not converge; best |score|_inf = " +
                               std::to_string(gnorm));
    return fit;
}

// ---- Calibration -----------------------------------------------------------

namespace {

struct CalWorkspace {
    MatrixXd Hs_a;   // (1, x_shared) rows over S_A
    VectorXd y;
    MatrixXd M_a;    // (1, x) rows over S_A: the moment functions
    VectorXd target;  // sum_B d_i (1, x_i) / N_hat_B
    double nhat_b = 0.0;
    int q = 0, kg = 0;

    CalWorkspace(const SampleA& a, const SampleB& b) {
        if (!a.schema.same_columns(b.schema))
            throw SchemaError("samples A and B carry different covariate schemas");
        Hs_a = with_intercept(shared_columns(a.X, a.schema));
        y = a.y;
        M_a = with_intercept(a.X);
        nhat_b = b.d.sum();
        const MatrixXd M_b = with_intercept(b.X);
        target = (M_b.transpose() * b.d) / nhat_b;
        q = static_cast<int>(Hs_a.cols()) + 1;
        kg = static_cast<int>(M_a.cols());
    }

    // g(theta)/N_hat_B and optionally its Jacobian.
    VectorXd residual(const VectorXd& t, MatrixXd* J = nullptr) const {
        const int n = static_cast<int>(M_a.rows());
        VectorXd r = -target;
        if (J) J->setZero(kg, q);
        for (int i = 0; i < n; ++i) {
            double eta = Hs_a.row(i).dot(t.head(q - 1)) + t(q - 1) * y(i);
            eta = std::min(eta, 200.0);  // overflow guard, far from any root
            const double w = 1.0 + std::exp(eta);
            r += (w / nhat_b) * M_a.row(i).transpose();
            if (J) {
                VectorXd ha(q);
                ha.head(q - 1) = Hs_a.row(i).transpose();
                ha(q - 1) = y(i);
                J->noalias() +=
                    (std::exp(eta) / nhat_b) * M_a.row(i).transpose() * ha.transpose();
            }
        }
        return r;
    }
};

// Levenberg-Marquardt from one start; returns true when the residual gate
// is met and writes the polished root into t.
bool lm_solve(const CalWorkspace& ws, VectorXd& t, double gate) {
    double lambda = 1e-3;
    MatrixXd J;
    VectorXd r = ws.residual(t, &J);
    double f = r.squaredNorm();
    for (int it = 0; it < 300; ++it) {
        if (r.lpNorm<Eigen::Infinity>() <= gate) return true;
        const MatrixXd JtJ = J.transpose() * J;
        const VectorXd Jtr = J.transpose() * r;
        if (Jtr.lpNorm<Eigen::Infinity>() < 1e-14) break;  // stationary, not a root
        MatrixXd A = JtJ;
        A.diagonal() += lambda * JtJ.diagonal().cwiseMax(1e-12);
        const VectorXd step = A.ldlt().solve(-Jtr);
        if (!step.allFinite()) break;
        const VectorXd tn = t + step;
        const VectorXd rn = ws.residual(tn);
        const double fn = rn.squaredNorm();
        if (fn < f) {
            t = tn;
            r = ws.residual(t, &J);
            f = fn;
            lambda = std::max(lambda * 0.3, 1e-12);
        } else {
            lambda *= 4.0;
            if (lambda > 1e12) break;
        }
    }
    return r.lpNorm<Eigen::Infinity>() <= gate;
}

}  // namespace

VectorXd calibration_residual(const Theta& theta, const SampleA& sample_a,
                              const SampleB& sample_b) {
    CalWorkspace ws(sample_a, sample_b);
    return ws.residual(theta.pack());
}

ThetaFit fit_theta_calibration(const SampleA& sample_a, const SampleB& sample_b,
                               const FitOptions& opts,
                               std::optional<Theta> anchor) {
    if (opts.n_starts < 1)
        throw DomainError("fit_theta_calibration needs n_starts >= 1");
    CalWorkspace ws(sample_a, sample_b);
    const int q = ws.q;

    VectorXd anchor_t;
    if (anchor) {
        anchor_t = anchor->pack();
    } else {
        anchor_t = fit_theta_ignorable(sample_a, sample_b).theta.pack();
    }

    std::mt19937_64 rng = substream(opts.seed, 0, 17);
    std::normal_distribution<double> noise(0.0, 1.0);

    const double root_gate = 1e-6;
    const double accept_gate = 1e-4;

    std::vector<VectorXd> roots;          // cluster representatives
    std::vector<double> root_res;
    double best_res = std::numeric_limits<double>::infinity();
    VectorXd best_t = anchor_t;

    for (int s = 0; s < opts.n_starts; ++s) {
        VectorXd t0;
        if (s == 0) {
            t0 = anchor_t;
        } else if (s == 1) {
            t0 = VectorXd::Zero(q);
        } else {
            const VectorXd center = (s % 2 == 0) ? anchor_t : VectorXd::Zero(q);
            t0 = center;
            for (int j = 0; j < q; ++j) t0(j) += noise(rng);
        }
        VectorXd t = t0;
        const bool ok = lm_solve(ws, t, root_gate);
        const double res = ws.residual(t).lpNorm<Eigen::Infinity>();
        if (res < best_res) {
            best_res = res;
            best_t = t;
        }
        if (!ok) continue;
        bool known = false;
        for (size_t r = 0; r < roots.size(); ++r) {
            if ((roots[r] - t).norm() <= opts.cluster_radius) {
                known = true;
                if (res < root_res[r]) {
                    roots[r] = t;
                    root_res[r] = res;
                }
                break;
            }
        }
        if (!known) {
            roots.push_back(t);
            root_res.push_back(res);
        }
    }

    if (roots.empty()) {
        if (best_res > accept_gate)
            throw NoRootError("no calibration root found; best |g|_inf = " +
                              std::to_string(best_res));
        roots.push_back(best_t);
        root_res.push_back(best_res);
    }

    // Return the root with the smallest residual; ties go to the one nearest
    // the anchor.
    size_t pick = 0;
    for (size_t r = 1; r < roots.size(); ++r) {
        if (root_res[r] < root_res[pick] - 1e-12 ||
            (std::abs(root_res[r] - root_res[pick]) <= 1e-12 &&
             (roots[r] - anchor_t).norm() < (roots[pick] - anchor_t).norm()))
            pick = r;
    }

    ThetaFit fit;
    fit.theta = Theta::unpack(roots[pick]);
    fit.gradient_norm = root_res[pick];
    fit.objective = -root_res[pick] * root_res[pick];
    fit.converged = root_res[pick] <= root_gate;
    fit.n_roots = static_cast<int>(roots.size());
    fit.multiplicity =
        roots.size() >= 2 ? Multiplicity::MultipleRoots : Multiplicity::Unique;
    MatrixXd J;
    ws.residual(roots[pick], &J);
    fit.info = J.transpose() * J;
    return fit;
}

// ---- Empirical likelihood --------------------------------------------------

ELWeights el_weights(const Theta& theta_cal, const Xi& xi_hat,
                     const SampleA& sample_a, const SampleB& sample_b) {
    const int n = sample_a.n();
    const int p = sample_a.schema.p();
    const double nhat_b = sample_b.d.sum();

    // Constraint targets from the reference sample.
    double t_pi = 0.0;
    VectorXd t_x = VectorXd::Zero(p);
    for (int i = 0; i < sample_b.n(); ++i) {
        const VectorXd xr = sample_b.X.row(i).transpose();
        t_pi += sample_b.d(i) *
                pi_marginal(xr, shared_part(xr, sample_b.schema), theta_cal, xi_hat);
        t_x += sample_b.d(i) * xr;
    }
    t_pi /= nhat_b;
    t_x /= nhat_b;

    // Centered constraint functions over S_A.
    MatrixXd G(n, p + 1);
    for (int i = 0; i < n; ++i) {
        const VectorXd xr = sample_a.X.row(i).transpose();
        G(i, 0) = participation_prob(shared_part(xr, sample_a.schema),
                                     sample_a.y(i), theta_cal) -
                  t_pi;
        G.row(i).tail(p) = (xr - t_x).transpose();
    }

    return el_dual(G);
}

ELWeights el_dual(const MatrixXd& G) {
    const int n = static_cast<int>(G.rows());
    const int k = static_cast<int>(G.cols());

    // Interior-of-hull necessary check per constraint.
    for (int j = 0; j < k; ++j) {
        const double lo = G.col(j).minCoeff();
        const double hi = G.col(j).maxCoeff();
        if (lo > 0.0 || hi < 0.0)
            throw HullViolationError(
                "EL constraint target outside the convex hull (constraint " +
                std::to_string(j) + ")");
    }

    // Dual: lambda solves sum_i g_i / (1 + lambda'g_i) = 0 with the
    // positivity safeguard 1 + lambda'g_i >= 1/n.
    VectorXd lambda = VectorXd::Zero(k);
    const double floor = 1.0 / n;
    auto weights_of = [&](const VectorXd& lam, VectorXd& w) {
        w = (VectorXd::Ones(n) + G * lam);
        return w.minCoeff() > floor * 0.999999;
    };

    VectorXd w;
    weights_of(lambda, w);
    bool converged = false;
    for (int it = 0; it < 200; ++it) {
        const VectorXd inv = w.cwiseInverse();
        const VectorXd S = G.transpose() * inv;  // sum g_i / w_i
        if ((S / n).lpNorm<Eigen::Infinity>() <= 1e-10) {
            converged = true;
            break;
        }
        MatrixXd Jw = MatrixXd::Zero(k, k);
        for (int i = 0; i < n; ++i)
            Jw += (G.row(i).transpose() * G.row(i)) / (w(i) * w(i));
        const VectorXd step = Jw.ldlt().solve(S);
        if (!step.allFinite()) break;
        double scale = 1.0;
        bool moved = false;
        for (int half = 0; half < 60; ++half) {
            const VectorXd ln = lambda + scale * step;
            VectorXd wn;
            if (weights_of(ln, wn)) {
                const VectorXd Sn = G.transpose() * wn.cwiseInverse();
                if (Sn.norm() < S.norm() || scale < 1e-8) {
                    lambda = ln;
                    w = wn;
                    moved = true;
                    break;
                }
            }
            scale *= 0.5;
        }
        if (!moved) break;
    }
    if (!converged)
        throw HullViolationError("EL dual did not converge; constraints infeasible");

    ELWeights out;
    out.p = w.cwiseInverse() / n;
    out.p /= out.p.sum();  // remove last-digit drift
    out.lagrange = lambda;
    out.converged = true;
    out.constraint_residual =
        (G.transpose() * out.p).lpNorm<Eigen::Infinity>();
    if (out.constraint_residual > 1e-8)
        throw HullViolationError("EL constraint residual above tolerance");
    return out;
}

IdentifiabilityReport identifiability_diagnostic(const ThetaFit& fit) {
    if (fit.info.size() == 0)
        throw DomainError("identifiability_diagnostic: fit carries no information matrix");
    const int q = static_cast<int>(fit.info.rows());
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(fit.info);
    IdentifiabilityReport rep;
    rep.min_eigenvalue = es.eigenvalues().minCoeff();
    rep.condition_number =
        rep.min_eigenvalue > 0.0
            ? es.eigenvalues().maxCoeff() / rep.min_eigenvalue
            : std::numeric_limits<double>::infinity();

    // Profile curvature of gamma: Schur complement of the leading block.
    const MatrixXd A = fit.info.topLeftCorner(q - 1, q - 1);
    const VectorXd b = fit.info.topRightCorner(q - 1, 1);
    const double c = fit.info(q - 1, q - 1);
    const VectorXd Ainv_b = A.ldlt().solve(b);
    rep.gamma_profile_curvature = c - b.dot(Ainv_b);
    rep.flagged = !(rep.gamma_profile_curvature > 1e-6) ||
                  !(rep.min_eigenvalue > 0.0);
    return rep;
}

}  // namespace npsurvey
