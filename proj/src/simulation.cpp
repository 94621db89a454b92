#include "npsurvey/simulation.hpp"

#include <atomic>
#include <cmath>
#include <limits>
#include <thread>

#include "npsurvey/model.hpp"
#include "npsurvey/rng.hpp"

namespace npsurvey {

Population generate_population(const PopulationSpec& spec) {
    if (spec.N < 1) throw DomainError("population size must be positive");
    std::mt19937_64 rng(mix64(spec.seed));
    std::normal_distribution<double> stdnorm(0.0, 1.0);
    std::uniform_real_distribution<double> unif01(0.0, 1.0);
    std::uniform_real_distribution<double> unifz(0.0, 3.0);

    Population pop;
    pop.schema.names = {"u1", "u2", "z"};
    pop.schema.roles = {Role::Shared, Role::Shared, Role::Instrument};
    pop.X.resize(spec.N, 3);
    pop.y.resize(spec.N);
    pop.pi_true.resize(spec.N);
    pop.theta_true.alpha = spec.alpha;
    pop.theta_true.beta = spec.beta;
    pop.theta_true.gamma = spec.gamma;

    const auto& oc = spec.outcome_coef;
    for (int i = 0; i < spec.N; ++i) {
        const double u1 = stdnorm(rng);
        const double u2 = stdnorm(rng);
        const double z = unifz(rng);
        pop.X(i, 0) = u1;
        pop.X(i, 1) = u2;
        pop.X(i, 2) = z;

        const double lin = oc(0) + oc(1) * u1 + oc(2) * u2 + oc(3) * z;
        const double c1 = logistic(lin);
        const double c0 = logistic(lin + spec.gamma);
        // pi(x) with c(x) = log{(1-c1)/(1-c0)}.
        const double cx = std::log((1.0 - c1) / (1.0 - c0));
        const double pix = logistic(-(spec.alpha + spec.beta(0) * u1 +
                                      spec.beta(1) * u2 + cx));
        const double branch = unif01(rng);
        const double py = (branch < pix) ? c1 : c0;
        pop.y(i) = (unif01(rng) < py) ? 1.0 : 0.0;
        pop.pi_true(i) = participation_prob(pop.X.row(i).head(2).transpose(),
                                            pop.y(i), pop.theta_true);
    }
    pop.mu0 = pop.y.mean();
    return pop;
}

SampleA draw_poisson_sample(const Population& pop, std::mt19937_64& rng,
                            int* redraws) {
    std::uniform_real_distribution<double> unif01(0.0, 1.0);
    std::vector<int> idx;
    for (int attempt = 0; attempt < 64; ++attempt) {
        idx.clear();
        for (int i = 0; i < pop.X.rows(); ++i)
            if (unif01(rng) < pop.pi_true(i)) idx.push_back(i);
        if (!idx.empty()) break;
        if (redraws) ++*redraws;
    }
    if (idx.empty()) throw DomainError("Poisson sampling produced no units");

    SampleA a;
    a.schema = pop.schema;
    a.X.resize(idx.size(), pop.X.cols());
    a.y.resize(idx.size());
    for (size_t k = 0; k < idx.size(); ++k) {
        a.X.row(k) = pop.X.row(idx[k]);
        a.y(k) = pop.y(idx[k]);
    }
    return a;
}

SampleB draw_srswor(const Population& pop, int n_b, std::mt19937_64& rng) {
    const int N = static_cast<int>(pop.X.rows());
    if (n_b < 1 || n_b > N) throw DomainError("draw_srswor: need 1 <= n_B <= N");
    // Partial Fisher-Yates over an index array.
    std::vector<int> idx(N);
    for (int i = 0; i < N; ++i) idx[i] = i;
    for (int i = 0; i < n_b; ++i) {
        std::uniform_int_distribution<int> pick(i, N - 1);
        std::swap(idx[i], idx[pick(rng)]);
    }
    SampleB b;
    b.schema = pop.schema;
    b.X.resize(n_b, pop.X.cols());
    b.d = VectorXd::Constant(n_b, static_cast<double>(N) / n_b);
    for (int k = 0; k < n_b; ++k) b.X.row(k) = pop.X.row(idx[k]);
    b.design = DesignInfo::srswor(n_b, N);
    return b;
}

MetricsRow compute_metrics(const std::vector<double>& estimates,
                           const std::vector<double>& ses,
                           const std::vector<IntervalEstimate>& cis,
                           double zeta0) {
    MetricsRow row;
    const int B = static_cast<int>(estimates.size());
    row.used = B;
    if (B == 0) {
        row.pct_rb = row.rrmse = row.sd = row.se = row.cp = row.al =
            std::numeric_limits<double>::quiet_NaN();
        return row;
    }
    if (zeta0 == 0.0)
        throw DomainError("compute_metrics: relative metrics need zeta0 != 0");

    double mean = 0.0, rb = 0.0, rr = 0.0;
    for (double e : estimates) {
        mean += e / B;
        rb += (e - zeta0) / zeta0 / B;
        rr += (e - zeta0) * (e - zeta0) / (zeta0 * zeta0) / B;
    }
    row.pct_rb = rb * 100.0;
    row.rrmse = std::sqrt(rr);

    double ss = 0.0;
    for (double e : estimates) ss += (e - mean) * (e - mean);
    row.sd = (B > 1) ? std::sqrt(ss / (B - 1)) : 0.0;

    if (!ses.empty()) {
        double se = 0.0;
        for (double s : ses) se += s / ses.size();
        row.se = se;
    } else {
        row.se = std::numeric_limits<double>::quiet_NaN();
    }

    if (!cis.empty()) {
        double cover = 0.0, len = 0.0;
        for (const auto& ci : cis) {
            cover += (ci.ci_low <= zeta0 && zeta0 <= ci.ci_high) ? 1.0 : 0.0;
            len += ci.ci_high - ci.ci_low;
        }
        row.cp = cover / cis.size();
        row.al = len / cis.size();
    } else {
        row.cp = row.al = std::numeric_limits<double>::quiet_NaN();
    }
    return row;
}

namespace {

struct RepOutcome {
    std::map<EstimatorKind, double> value;
    std::map<EstimatorKind, double> se;
    std::map<EstimatorKind, IntervalEstimate> ci;
    std::optional<VectorXd> theta_pl;
    std::optional<VectorXd> theta_cal;
    bool cal_unique = false;
    bool cal_found = false;
    int redraws = 0;
};

bool wants(const StudyConfig& cfg, EstimatorKind k) {
    for (auto e : cfg.estimators)
        if (e == k) return true;
    return false;
}

RepOutcome run_replication(const Population& pop, const StudyConfig& cfg,
                           int rep) {
    RepOutcome out;
    std::mt19937_64 rng_a = substream(cfg.spec.seed, rep + 1, 1);
    std::mt19937_64 rng_b = substream(cfg.spec.seed, rep + 1, 2);

    const SampleA a = draw_poisson_sample(pop, rng_a, &out.redraws);
    const SampleB b = draw_srswor(pop, cfg.n_b, rng_b);

    if (wants(cfg, EstimatorKind::Naive))
        out.value[EstimatorKind::Naive] = mu_naive(a).value;

    std::optional<Xi> xi_hat;
    std::optional<Theta> theta_pl;
    try {
        xi_hat = fit_outcome_mle(a, OutcomeFamily::BernoulliLogistic).xi;
        ThetaFit tf = fit_theta_pml(*xi_hat, a, b);
        theta_pl = tf.theta;
        out.theta_pl = tf.theta.pack();
    } catch (const Error&) {
        // proposed estimators excluded for this replication
    }

    if (theta_pl) {
        const auto run_kind = [&](EstimatorKind k, const MeanEstimate& est) {
            out.value[k] = est.value;
            try {
                const VarianceComponents comps =
                    estimate_components(k, a, b, *theta_pl, *xi_hat, est.value);
                const double s2 = sigma2_plugin(k, comps, a, b, *theta_pl, *xi_hat);
                const double n_for_se = b.design.N > 0
                                            ? static_cast<double>(b.design.N)
                                            : b.n_hat();
                const IntervalEstimate ci = wald_ci(est.value, s2, n_for_se, cfg.level);
                out.se[k] = ci.se;
                out.ci[k] = ci;
            } catch (const Error&) {
                // point estimate kept; SE/CI unavailable
            }
        };
        if (wants(cfg, EstimatorKind::IPW)) run_kind(EstimatorKind::IPW, mu_ipw(a, *theta_pl));
        if (wants(cfg, EstimatorKind::REG))
            run_kind(EstimatorKind::REG, mu_reg(b, *theta_pl, *xi_hat));
        if (wants(cfg, EstimatorKind::AIPW))
            run_kind(EstimatorKind::AIPW, mu_aipw(a, b, *theta_pl, *xi_hat));
    }

    const bool want_el = wants(cfg, EstimatorKind::EL);
    if ((cfg.fit_calibration || want_el) && xi_hat) {
        try {
            FitOptions fo;
            fo.n_starts = cfg.n_starts;
            fo.seed = mix64(cfg.spec.seed) ^ static_cast<std::uint64_t>(rep + 1);
            const ThetaFit cal = fit_theta_calibration(a, b, fo, theta_pl);
            out.cal_found = true;
            out.cal_unique = cal.multiplicity == Multiplicity::Unique;
            out.theta_cal = cal.theta.pack();
            if (want_el) {
                const ELWeights w = el_weights(cal.theta, *xi_hat, a, b);
                out.value[EstimatorKind::EL] = mu_el(w, a).value;
            }
        } catch (const Error&) {
        }
    }

    if (wants(cfg, EstimatorKind::REG2) || wants(cfg, EstimatorKind::IPW2) ||
        wants(cfg, EstimatorKind::DR2)) {
        try {
            const IgnorableBaselines ign =
                ignorable_baselines(a, b, OutcomeFamily::BernoulliLogistic);
            if (wants(cfg, EstimatorKind::REG2))
                out.value[EstimatorKind::REG2] = ign.reg2.value;
            if (wants(cfg, EstimatorKind::IPW2))
                out.value[EstimatorKind::IPW2] = ign.ipw2.value;
            if (wants(cfg, EstimatorKind::DR2))
                out.value[EstimatorKind::DR2] = ign.dr2.value;
        } catch (const Error&) {
        }
    }
    return out;
}

std::vector<ParamMetrics> param_metrics(const std::vector<VectorXd>& draws,
                                        const VectorXd& truth) {
    std::vector<ParamMetrics> out(truth.size());
    if (draws.empty()) return out;
    for (int j = 0; j < truth.size(); ++j) {
        std::vector<double> est;
        est.reserve(draws.size());
        for (const auto& t : draws) est.push_back(t(j));
        const MetricsRow row = compute_metrics(est, {}, {}, truth(j));
        out[j] = {row.pct_rb, row.rrmse};
    }
    return out;
}

}  // namespace

MetricsTable run_study(const StudyConfig& cfg) {
    if (cfg.reps < 1) throw DomainError("run_study: reps must be >= 1");
    const Population pop = generate_population(cfg.spec);

    std::vector<RepOutcome> results(cfg.reps);
    std::atomic<int> next{0};
    const int workers = std::max(1, cfg.threads);
    auto work = [&]() {
        for (;;) {
            const int r = next.fetch_add(1);
            if (r >= cfg.reps) break;
            results[r] = run_replication(pop, cfg, r);
        }
    };
    if (workers == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    }

    MetricsTable table;
    table.reps = cfg.reps;
    table.mu0 = pop.mu0;
    for (const auto& r : results) table.empty_redraws += r.redraws;

    for (EstimatorKind k : cfg.estimators) {
        std::vector<double> est, ses;
        std::vector<IntervalEstimate> cis;
        int excluded = 0;
        for (const auto& r : results) {
            auto it = r.value.find(k);
            if (it == r.value.end()) {
                ++excluded;
                continue;
            }
            est.push_back(it->second);
            auto sit = r.se.find(k);
            if (sit != r.se.end()) {
                ses.push_back(sit->second);
                cis.push_back(r.ci.at(k));
            }
        }
        MetricsRow row = compute_metrics(est, ses, cis, pop.mu0);
        row.excluded = excluded;
        table.rows[k] = row;
    }

    const VectorXd truth = pop.theta_true.pack();
    std::vector<VectorXd> pl_draws, cal_draws;
    for (const auto& r : results) {
        if (r.theta_pl) pl_draws.push_back(*r.theta_pl);
        if (r.cal_found) {
            ++table.cal_used;
            if (r.cal_unique) {
                ++table.nmr_cal;
                cal_draws.push_back(*r.theta_cal);
            }
        }
    }
    table.pl_params = param_metrics(pl_draws, truth);
    table.cal_params = param_metrics(cal_draws, truth);
    return table;
}

}  // namespace npsurvey
