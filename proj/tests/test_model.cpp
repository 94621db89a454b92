#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "npsurvey/model.hpp"
#include "helpers.hpp"

using namespace npsurvey;
using test_util::fd_grad;
using test_util::fd_scalar;
using test_util::rel_err;

namespace {

Theta frozen_theta() {
    Theta t;
    t.alpha = 4.5;
    t.beta = Eigen::Vector2d(-0.7, 1.5);
    t.gamma = 0.8;
    return t;
}

Xi frozen_xi_bern() {
    Xi xi;
    xi.family = OutcomeFamily::BernoulliLogistic;
    xi.coef = Eigen::Vector4d(-1.8, 1.2, 1.2, 1.0);
    return xi;
}

Xi frozen_xi_gauss() {
    Xi xi;
    xi.family = OutcomeFamily::GaussianLinear;
    xi.coef = Eigen::Vector4d(0.5, 0.25, -0.3, 0.1);
    xi.sigma2 = 1.5;
    return xi;
}

const Eigen::Vector3d kX(1.0, 0.5, 0.2);
const Eigen::Vector2d kXs(1.0, 0.5);

Xi random_xi(std::mt19937_64& rng, OutcomeFamily fam, int p) {
    std::normal_distribution<double> n(0.0, 0.7);
    Xi xi;
    xi.family = fam;
    xi.coef.resize(p + 1);
    for (int j = 0; j <= p; ++j) xi.coef(j) = n(rng);
    if (fam == OutcomeFamily::GaussianLinear) xi.sigma2 = 0.5 + std::abs(n(rng));
    return xi;
}

Theta random_theta(std::mt19937_64& rng, int n_shared) {
    std::normal_distribution<double> n(0.0, 0.7);
    Theta t;
    t.alpha = n(rng) + 1.0;
    t.beta.resize(n_shared);
    for (int j = 0; j < n_shared; ++j) t.beta(j) = n(rng);
    t.gamma = n(rng);
    return t;
}

VectorXd random_x(std::mt19937_64& rng, int p) {
    std::normal_distribution<double> n(0.0, 1.0);
    VectorXd x(p);
    for (int j = 0; j < p; ++j) x(j) = n(rng);
    return x;
}

// Simpson quadrature of f over [lo, hi].
double simpson(const std::function<double(double)>& f, double lo, double hi,
               int n) {
    const double h = (hi - lo) / n;
    double s = f(lo) + f(hi);
    for (int i = 1; i < n; ++i) s += f(lo + i * h) * (i % 2 ? 4.0 : 2.0);
    return s * h / 3.0;
}

}  // namespace

TEST_CASE("scalar building blocks") {
    CHECK(clamp_prob(0.5) == 0.5);
    CHECK(clamp_prob(-1.0) == kProbEps);
    CHECK(clamp_prob(2.0) == 1.0 - kProbEps);
    CHECK(logistic(0.0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(logistic(700.0) == doctest::Approx(1.0));
    CHECK(logistic(-700.0) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(log1p_exp(0.0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    CHECK(log1p_exp(100.0) == doctest::Approx(100.0).epsilon(1e-12));
    CHECK(std::isfinite(log1p_exp(-800.0)));

    const VectorXd r = design_row(Eigen::Vector2d(3.0, -1.0));
    CHECK(r.size() == 3);
    CHECK(r(0) == 1.0);
    CHECK(r(2) == -1.0);

    const VectorXd xs = shared_part(kX, test_util::schema_u1u2z());
    CHECK(xs.size() == 2);
    CHECK(xs(0) == 1.0);
    CHECK(xs(1) == 0.5);
}

TEST_CASE("participation probability: frozen values and monotonicity") {
    const Theta th = frozen_theta();
    // eta = 4.5 - 0.7 + 0.75 + 0.8y
    CHECK(participation_prob(kXs, 1.0, th) ==
          doctest::Approx(0.0047257126023954801).epsilon(1e-12));
    CHECK(participation_prob(kXs, 0.0, th) ==
          doctest::Approx(0.010456706231918069).epsilon(1e-12));

    // strictly decreasing in eta, output in (0,1)
    std::mt19937_64 rng(7);
    for (int k = 0; k < 200; ++k) {
        Theta t = random_theta(rng, 2);
        const VectorXd xs = random_x(rng, 2);
        const double p0 = participation_prob(xs, 0.0, t);
        CHECK(p0 > 0.0);
        CHECK(p0 < 1.0);
        Theta t2 = t;
        t2.alpha += 0.5;  // larger eta
        CHECK(participation_prob(xs, 0.0, t2) < p0);
    }

    Theta wrong = th;
    wrong.beta = VectorXd::Zero(3);
    CHECK_THROWS_AS(participation_prob(kXs, 0.0, wrong), DimensionError);
}

TEST_CASE("cumulant: frozen values, zero at gamma=0, convexity") {
    const Xi xb = frozen_xi_bern();
    CHECK(cumulant_c(kX, 0.8, xb, 0) ==
          doctest::Approx(0.51512281813663099).epsilon(1e-12));
    CHECK(cumulant_c(kX, 0.8, xb, 1) ==
          doctest::Approx(0.73105857863000488).epsilon(1e-12));
    CHECK(cumulant_c(kX, 0.8, xb, 2) ==
          doctest::Approx(0.19661193324148185).epsilon(1e-12));

    const Xi xg = frozen_xi_gauss();
    CHECK(cumulant_c(kX, 0.8, xg, 0) == doctest::Approx(0.976).epsilon(1e-14));
    CHECK(cumulant_c(kX, 0.8, xg, 1) == doctest::Approx(1.82).epsilon(1e-14));
    CHECK(cumulant_c(kX, 0.8, xg, 2) == doctest::Approx(1.5).epsilon(1e-14));

    CHECK_THROWS_AS(cumulant_c(kX, 0.8, xb, 3), DomainError);

    std::mt19937_64 rng(11);
    for (int k = 0; k < 100; ++k) {
        for (auto fam :
             {OutcomeFamily::BernoulliLogistic, OutcomeFamily::GaussianLinear}) {
            const Xi xi = random_xi(rng, fam, 3);
            const VectorXd x = random_x(rng, 3);
            std::normal_distribution<double> n(0.0, 1.0);
            const double g = n(rng);
            CHECK(cumulant_c(x, 0.0, xi, 0) == doctest::Approx(0.0).epsilon(1e-14));
            CHECK(cumulant_c(x, g, xi, 2) >= 0.0);
        }
    }
}

TEST_CASE("cumulant gamma-derivatives match finite differences") {
    std::mt19937_64 rng(13);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int k = 0; k < 50; ++k) {
        for (auto fam :
             {OutcomeFamily::BernoulliLogistic, OutcomeFamily::GaussianLinear}) {
            const Xi xi = random_xi(rng, fam, 3);
            const VectorXd x = random_x(rng, 3);
            const double g = n(rng);
            const double d1 = fd_scalar(
                [&](double t) { return cumulant_c(x, t, xi, 0); }, g);
            const double d2 = fd_scalar(
                [&](double t) { return cumulant_c(x, t, xi, 1); }, g);
            CHECK(rel_err(cumulant_c(x, g, xi, 1), d1) < 1e-5);
            CHECK(rel_err(cumulant_c(x, g, xi, 2), d2) < 1e-5);
        }
    }
}

TEST_CASE("cumulant xi-gradient matches finite differences") {
    std::mt19937_64 rng(17);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int k = 0; k < 50; ++k) {
        for (auto fam :
             {OutcomeFamily::BernoulliLogistic, OutcomeFamily::GaussianLinear}) {
            Xi xi = random_xi(rng, fam, 3);
            const VectorXd x = random_x(rng, 3);
            const double g = n(rng);
            const VectorXd got = cumulant_c_grad_xi(x, g, xi);
            auto eval = [&](const VectorXd& t) {
                Xi z = xi;
                z.coef = t.head(xi.coef.size());
                if (fam == OutcomeFamily::GaussianLinear) z.sigma2 = t(t.size() - 1);
                return cumulant_c(x, g, z, 0);
            };
            VectorXd t(xi.dim());
            t.head(xi.coef.size()) = xi.coef;
            if (fam == OutcomeFamily::GaussianLinear) t(t.size() - 1) = xi.sigma2;
            const VectorXd want = fd_grad(eval, t);
            for (int j = 0; j < got.size(); ++j)
                CHECK(rel_err(got(j), want(j)) < 1e-5);
        }
    }
}

TEST_CASE("marginal propensity and conditional mean: frozen values") {
    const Theta th = frozen_theta();
    const Xi xb = frozen_xi_bern();
    CHECK(pi_marginal(kX, kXs, th, xb) ==
          doctest::Approx(0.0062735298437614786).epsilon(1e-12));
    CHECK(conditional_mean(kX, kXs, th, xb) ==
          doctest::Approx(0.72992166081068619).epsilon(1e-12));
}

TEST_CASE("density normalization, mixture identity, Bayes identity (binary)") {
    std::mt19937_64 rng(19);
    const Schema sch = test_util::schema_u1u2z();
    for (int k = 0; k < 100; ++k) {
        const Xi xi = random_xi(rng, OutcomeFamily::BernoulliLogistic, 3);
        const Theta th = random_theta(rng, 2);
        const VectorXd x = random_x(rng, 3);
        const VectorXd xs = shared_part(x, sch);

        const double pr0 = conditional_density(0.0, x, xs, th, xi);
        const double pr1 = conditional_density(1.0, x, xs, th, xi);
        CHECK(pr0 + pr1 == doctest::Approx(1.0).epsilon(1e-12));

        // mixture identity: pi(x) = sum_y pr(y|x) pi^A(x,y)
        const double mix = pr0 * participation_prob(xs, 0.0, th) +
                           pr1 * participation_prob(xs, 1.0, th);
        CHECK(rel_err(pi_marginal(x, xs, th, xi), mix) < 1e-12);

        // first moment
        CHECK(rel_err(conditional_mean(x, xs, th, xi), pr1) < 1e-12);

        // Bayes identity: f(y|x) = pr(y|x) pi^A / pi
        const double pi = pi_marginal(x, xs, th, xi);
        for (double y : {0.0, 1.0}) {
            const double f = std::exp(outcome_loglik(y, x, xi));
            const double rhs = conditional_density(y, x, xs, th, xi) *
                               participation_prob(xs, y, th) / pi;
            CHECK(rel_err(f, rhs) < 1e-10);
        }
    }
}

TEST_CASE("density normalization, mixture identity and mean (Gaussian)") {
    std::mt19937_64 rng(23);
    const Schema sch = test_util::schema_u1u2z();
    for (int k = 0; k < 10; ++k) {
        const Xi xi = random_xi(rng, OutcomeFamily::GaussianLinear, 3);
        Theta th = random_theta(rng, 2);
        th.gamma *= 0.5;  // keep the tilted density well inside the grid
        const VectorXd x = random_x(rng, 3);
        const VectorXd xs = shared_part(x, sch);

        const double mu_f = design_row(x).dot(xi.coef);
        const double sd = std::sqrt(xi.sigma2);
        const double lo = mu_f - 10.0 * sd - 2.0, hi = mu_f + 10.0 * sd + 2.0;

        const double mass = simpson(
            [&](double y) { return conditional_density(y, x, xs, th, xi); }, lo,
            hi, 4000);
        CHECK(mass == doctest::Approx(1.0).epsilon(1e-6));

        const double mean = simpson(
            [&](double y) { return y * conditional_density(y, x, xs, th, xi); },
            lo, hi, 4000);
        CHECK(rel_err(conditional_mean(x, xs, th, xi), mean) < 1e-6);

        const double mix = simpson(
            [&](double y) {
                return conditional_density(y, x, xs, th, xi) *
                       participation_prob(xs, y, th);
            },
            lo, hi, 4000);
        CHECK(rel_err(pi_marginal(x, xs, th, xi), mix) < 1e-6);
    }
}

TEST_CASE("conditional-mean gradients match finite differences") {
    std::mt19937_64 rng(29);
    const Schema sch = test_util::schema_u1u2z();
    const Theta th0 = frozen_theta();
    const Xi xb = frozen_xi_bern();
    const MeanGrads mg0 = conditional_mean_grads(kX, kXs, th0, xb);
    CHECK(mg0.wrt_theta(0) ==
          doctest::Approx(0.0011297853314492844).epsilon(1e-12));

    for (int k = 0; k < 30; ++k) {
        for (auto fam :
             {OutcomeFamily::BernoulliLogistic, OutcomeFamily::GaussianLinear}) {
            const Xi xi = random_xi(rng, fam, 3);
            const Theta th = random_theta(rng, 2);
            const VectorXd x = random_x(rng, 3);
            const VectorXd xs = shared_part(x, sch);
            const MeanGrads mg = conditional_mean_grads(x, xs, th, xi);

            const VectorXd fd_th = fd_grad(
                [&](const VectorXd& t) {
                    return conditional_mean(x, xs, Theta::unpack(t), xi);
                },
                th.pack());
            for (int j = 0; j < fd_th.size(); ++j)
                CHECK(rel_err(mg.wrt_theta(j), fd_th(j)) < 1e-5);

            auto eval_xi = [&](const VectorXd& t) {
                Xi z = xi;
                z.coef = t.head(xi.coef.size());
                if (fam == OutcomeFamily::GaussianLinear) z.sigma2 = t(t.size() - 1);
                return conditional_mean(x, xs, th, z);
            };
            VectorXd t(xi.dim());
            t.head(xi.coef.size()) = xi.coef;
            if (fam == OutcomeFamily::GaussianLinear) t(t.size() - 1) = xi.sigma2;
            const VectorXd fd_xi = fd_grad(eval_xi, t);
            for (int j = 0; j < fd_xi.size(); ++j)
                CHECK(rel_err(mg.wrt_xi(j), fd_xi(j)) < 1e-5);
        }
    }
}

TEST_CASE("outcome score and hessian match finite differences") {
    std::mt19937_64 rng(31);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int k = 0; k < 30; ++k) {
        for (auto fam :
             {OutcomeFamily::BernoulliLogistic, OutcomeFamily::GaussianLinear}) {
            const Xi xi = random_xi(rng, fam, 3);
            const VectorXd x = random_x(rng, 3);
            const double y =
                fam == OutcomeFamily::BernoulliLogistic ? (k % 2) : n(rng);

            auto eval = [&](const VectorXd& t) {
                Xi z = xi;
                z.coef = t.head(xi.coef.size());
                if (fam == OutcomeFamily::GaussianLinear) z.sigma2 = t(t.size() - 1);
                return outcome_loglik(y, x, z);
            };
            VectorXd t(xi.dim());
            t.head(xi.coef.size()) = xi.coef;
            if (fam == OutcomeFamily::GaussianLinear) t(t.size() - 1) = xi.sigma2;

            const VectorXd s = outcome_score(y, x, xi);
            const VectorXd fd_s = fd_grad(eval, t);
            for (int j = 0; j < s.size(); ++j)
                CHECK(rel_err(s(j), fd_s(j)) < 1e-5);

            const MatrixXd H = outcome_hessian(y, x, xi);
            for (int j = 0; j < t.size(); ++j) {
                const double h = 1e-5 * (1.0 + std::abs(t(j)));
                VectorXd tp = t, tm = t;
                tp(j) += h;
                tm(j) -= h;
                Xi zp = xi, zm = xi;
                zp.coef = tp.head(xi.coef.size());
                zm.coef = tm.head(xi.coef.size());
                if (fam == OutcomeFamily::GaussianLinear) {
                    zp.sigma2 = tp(t.size() - 1);
                    zm.sigma2 = tm(t.size() - 1);
                }
                const VectorXd col =
                    (outcome_score(y, x, zp) - outcome_score(y, x, zm)) / (2.0 * h);
                for (int i = 0; i < t.size(); ++i)
                    CHECK(rel_err(H(i, j), col(i)) < 1e-4);
            }
        }
    }
}

TEST_CASE("family mean") {
    const Xi xb = frozen_xi_bern();
    CHECK(family_mean(kX, xb) ==
          doctest::Approx(0.54983399731247791).epsilon(1e-12));
    const Xi xg = frozen_xi_gauss();
    CHECK(family_mean(kX, xg) == doctest::Approx(0.62).epsilon(1e-14));
}
