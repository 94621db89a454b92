#include "npsurvey/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "npsurvey/model.hpp"

namespace npsurvey {

using nlohmann::json;

namespace {

constexpr const char* kVersion = "npsurvey 0.1.0";

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) {
        // trim whitespace
        const auto b = cell.find_first_not_of(" \t\r");
        const auto e = cell.find_last_not_of(" \t\r");
        out.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
    }
    if (!line.empty() && line.back() == ',') out.push_back("");
    return out;
}

double parse_cell(const std::string& cell, int row, int col) {
    if (cell.empty())
        throw ParseError("blank cell at row " + std::to_string(row) +
                         ", column " + std::to_string(col));
    try {
        size_t pos = 0;
        const double v = std::stod(cell, &pos);
        if (pos != cell.size()) throw std::invalid_argument(cell);
        return v;
    } catch (const std::exception&) {
        throw ParseError("non-numeric cell '" + cell + "' at row " +
                         std::to_string(row) + ", column " + std::to_string(col));
    }
}

struct CsvTable {
    std::vector<std::string> header;
    MatrixXd values;
};

CsvTable read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open file: " + path);
    std::string line;
    if (!std::getline(in, line) || line.empty())
        throw ParseError("empty file: " + path);
    CsvTable t;
    t.header = split_csv_line(line);
    std::vector<std::vector<double>> rows;
    int rowno = 1;
    while (std::getline(in, line)) {
        ++rowno;
        if (line.empty()) continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != t.header.size())
            throw ParseError("row " + std::to_string(rowno) + " has " +
                             std::to_string(cells.size()) + " cells, expected " +
                             std::to_string(t.header.size()));
        std::vector<double> row(cells.size());
        for (size_t c = 0; c < cells.size(); ++c)
            row[c] = parse_cell(cells[c], rowno, static_cast<int>(c) + 1);
        rows.push_back(std::move(row));
    }
    t.values.resize(rows.size(), t.header.size());
    for (size_t r = 0; r < rows.size(); ++r)
        for (size_t c = 0; c < rows[r].size(); ++c) t.values(r, c) = rows[r][c];
    return t;
}

std::string fmt6(double v) {
    std::ostringstream ss;
    ss.precision(6);
    ss << v;
    return ss.str();
}

std::string fmt_full(double v) {
    std::ostringstream ss;
    ss.precision(17);
    ss << v;
    return ss.str();
}

void check_finite(double v, const std::string& field) {
    if (!std::isfinite(v))
        throw InternalError("non-finite value in report field: " + field);
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

}  // namespace

SampleA load_sample_a(const std::string& path) {
    const CsvTable t = read_csv(path);
    if (t.header.empty() || t.header[0] != "y")
        throw SchemaError("sample A header must start with 'y'");
    if (t.header.size() < 2)
        throw SchemaError("sample A needs at least one covariate column");
    if (t.values.rows() < 1) throw ParseError("sample A has no data rows");
    SampleA a;
    a.schema.names.assign(t.header.begin() + 1, t.header.end());
    a.schema.roles.assign(a.schema.names.size(), Role::Shared);
    a.y = t.values.col(0);
    a.X = t.values.rightCols(t.values.cols() - 1);
    return a;
}

SampleB load_sample_b(const std::string& path, const Schema& schema_a) {
    const CsvTable t = read_csv(path);
    if (t.header.empty() || t.header[0] != "d")
        throw SchemaError("sample B header must start with 'd'");
    std::vector<std::string> names(t.header.begin() + 1, t.header.end());

    // Match columns by name against the A schema, order-insensitive.
    std::vector<int> order(schema_a.names.size(), -1);
    std::vector<std::string> only_a, only_b;
    for (size_t j = 0; j < schema_a.names.size(); ++j) {
        const auto it = std::find(names.begin(), names.end(), schema_a.names[j]);
        if (it == names.end())
            only_a.push_back(schema_a.names[j]);
        else
            order[j] = static_cast<int>(it - names.begin());
    }
    for (const auto& n : names)
        if (std::find(schema_a.names.begin(), schema_a.names.end(), n) ==
            schema_a.names.end())
            only_b.push_back(n);
    if (!only_a.empty() || !only_b.empty()) {
        std::string msg = "covariate schema mismatch;";
        if (!only_a.empty()) {
            msg += " missing in B: {";
            for (const auto& n : only_a) msg += n + " ";
            msg += "}";
        }
        if (!only_b.empty()) {
            msg += " missing in A: {";
            for (const auto& n : only_b) msg += n + " ";
            msg += "}";
        }
        throw SchemaError(msg);
    }

    SampleB b;
    b.schema = schema_a;
    b.d = t.values.col(0);
    b.X.resize(t.values.rows(), schema_a.names.size());
    for (size_t j = 0; j < order.size(); ++j)
        b.X.col(j) = t.values.col(order[j] + 1);
    b.validate();
    return b;
}

void apply_roles(Schema& schema, const std::map<std::string, Role>& roles) {
    for (const auto& [name, role] : roles) {
        const auto it = std::find(schema.names.begin(), schema.names.end(), name);
        if (it == schema.names.end())
            throw SchemaError("role given for unknown column: " + name);
        schema.roles[it - schema.names.begin()] = role;
    }
    for (size_t j = 0; j < schema.names.size(); ++j)
        if (roles.find(schema.names[j]) == roles.end())
            throw SchemaError("no role given for column: " + schema.names[j]);
}

AnalysisConfig load_analysis_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open config: " + path);
    json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw ParseError(std::string("config parse error: ") + e.what());
    }
    AnalysisConfig cfg;
    const std::string fam = j.value("family", "bernoulli_logistic");
    if (fam == "bernoulli_logistic")
        cfg.family = OutcomeFamily::BernoulliLogistic;
    else if (fam == "gaussian_linear")
        cfg.family = OutcomeFamily::GaussianLinear;
    else
        throw ParseError("unknown family: " + fam);
    if (j.contains("roles")) {
        for (auto& [name, role] : j["roles"].items()) {
            const std::string r = role.get<std::string>();
            if (r == "shared")
                cfg.roles[name] = Role::Shared;
            else if (r == "instrument")
                cfg.roles[name] = Role::Instrument;
            else
                throw ParseError("unknown role '" + r + "' for column " + name);
        }
    }
    if (j.contains("estimators")) {
        cfg.estimators.clear();
        for (const auto& e : j["estimators"])
            cfg.estimators.push_back(estimator_from_string(e.get<std::string>()));
    }
    if (cfg.estimators.empty())
        throw ParseError("config requests no estimators");
    cfg.level = j.value("level", 0.95);
    cfg.seed = j.value("seed", std::uint64_t{0});
    cfg.allow_no_instrument = j.value("allow_no_instrument", false);
    if (j.contains("tolerances")) {
        cfg.grad_tol = j["tolerances"].value("grad_tol", 1e-6);
        cfg.n_starts = j["tolerances"].value("n_starts", 20);
    }
    if (j.contains("design")) {
        const auto& dj = j["design"];
        const std::string kind = dj.value("kind", "hajek");
        if (kind == "srswor")
            cfg.design = DesignInfo::srswor(dj.at("n").get<long long>(),
                                            dj.at("N").get<long long>());
        else if (kind == "hajek")
            cfg.design = DesignInfo::hajek();
        else
            throw ParseError("unknown design kind: " + kind);
    }
    return cfg;
}

std::string analysis_config_hash(const AnalysisConfig& cfg) {
    json j;
    j["family"] = cfg.family == OutcomeFamily::BernoulliLogistic
                      ? "bernoulli_logistic"
                      : "gaussian_linear";
    json roles = json::object();
    for (const auto& [n, r] : cfg.roles)
        roles[n] = r == Role::Shared ? "shared" : "instrument";
    j["roles"] = roles;
    std::vector<std::string> est;
    for (auto k : cfg.estimators) est.push_back(to_string(k));
    j["estimators"] = est;
    j["level"] = cfg.level;
    j["seed"] = cfg.seed;
    j["allow_no_instrument"] = cfg.allow_no_instrument;
    j["grad_tol"] = cfg.grad_tol;
    j["n_starts"] = cfg.n_starts;
    if (cfg.design) {
        j["design_kind"] = static_cast<int>(cfg.design->kind);
        j["design_N"] = cfg.design->N;
        j["design_n"] = cfg.design->n;
    }
    std::ostringstream ss;
    ss << std::hex << fnv1a(j.dump());
    return ss.str();
}

SimConfig load_sim_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open config: " + path);
    json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw ParseError(std::string("config parse error: ") + e.what());
    }
    SimConfig cfg;
    cfg.N = j.value("N", 20000);
    cfg.reps = j.value("reps", 500);
    cfg.seed = j.value("seed", std::uint64_t{1});
    cfg.threads = j.value("threads", 1);
    cfg.level = j.value("level", 0.95);
    cfg.calibration = j.value("calibration", false);
    cfg.n_starts = j.value("n_starts", 20);
    if (j.contains("estimators")) {
        for (const auto& e : j["estimators"])
            cfg.estimators.push_back(estimator_from_string(e.get<std::string>()));
    } else {
        cfg.estimators = {EstimatorKind::REG, EstimatorKind::IPW,
                          EstimatorKind::AIPW};
    }
    if (!j.contains("cells") || j["cells"].empty())
        throw ParseError("simulation config needs at least one cell");
    for (const auto& cj : j["cells"]) {
        SimCell c;
        c.alpha = cj.at("alpha").get<double>();
        c.gamma = cj.at("gamma").get<double>();
        c.n_b = cj.at("n_b").get<int>();
        c.label = cj.value("label", "");
        if (c.label.empty()) {
            std::ostringstream ss;
            ss << "a" << c.alpha << "_g" << c.gamma << "_nb" << c.n_b;
            c.label = ss.str();
        }
        cfg.cells.push_back(c);
    }
    return cfg;
}

Report analyze(const SampleA& a_in, const SampleB& b_in,
               const AnalysisConfig& cfg) {
    SampleA a = a_in;
    SampleB b = b_in;
    if (!cfg.roles.empty()) {
        apply_roles(a.schema, cfg.roles);
        apply_roles(b.schema, cfg.roles);
    }
    a.validate(cfg.family);
    b.validate();
    if (a.schema.n_instruments() == 0 && !cfg.allow_no_instrument)
        throw DomainError(
            "no instrument column declared; identifiability is at risk "
            "(pass allow_no_instrument to override)");
    if (cfg.design) b.design = *cfg.design;

    Report rep;
    rep.level = cfg.level;
    rep.seed = cfg.seed;
    rep.version = kVersion;
    rep.config_hash = analysis_config_hash(cfg);

    const bool needs_fit = std::any_of(
        cfg.estimators.begin(), cfg.estimators.end(), [](EstimatorKind k) {
            return k != EstimatorKind::Naive && k != EstimatorKind::REG2 &&
                   k != EstimatorKind::IPW2 && k != EstimatorKind::DR2;
        });

    std::optional<XiFit> xi_fit;
    std::optional<ThetaFit> theta_fit;
    if (needs_fit) {
        xi_fit = fit_outcome_mle(a, cfg.family);
        FitOptions fo;
        fo.grad_tol = cfg.grad_tol;
        fo.n_starts = cfg.n_starts;
        fo.seed = cfg.seed;
        theta_fit = fit_theta_pml(xi_fit->xi, a, b, std::nullopt, fo);
        if (theta_fit->ill_conditioned)
            rep.warnings.push_back(
                "identifiability warning: observed information is ill-conditioned");
        const IdentifiabilityReport idr = identifiability_diagnostic(*theta_fit);
        if (idr.flagged)
            rep.warnings.push_back(
                "identifiability warning: gamma profile curvature is near zero");

        // Parameter tables with SEs from the observed information.
        const MatrixXd th_cov = theta_fit->info.completeOrthogonalDecomposition()
                                    .pseudoInverse();
        const MatrixXd xi_cov =
            xi_fit->info.completeOrthogonalDecomposition().pseudoInverse();
        const VectorXd th = theta_fit->theta.pack();
        std::vector<std::string> th_names{"alpha"};
        for (size_t j = 0; j < a.schema.names.size(); ++j)
            if (a.schema.roles[j] == Role::Shared)
                th_names.push_back("beta." + a.schema.names[j]);
        th_names.push_back("gamma");
        for (int j = 0; j < th.size(); ++j)
            rep.theta.push_back({th_names[j], th(j), std::sqrt(std::max(0.0, th_cov(j, j)))});
        std::vector<std::string> xi_names{"intercept"};
        for (const auto& n : a.schema.names) xi_names.push_back(n);
        if (cfg.family == OutcomeFamily::GaussianLinear) xi_names.push_back("sigma2");
        for (int j = 0; j < xi_fit->xi.dim(); ++j) {
            const double v = j < xi_fit->xi.coef.size() ? xi_fit->xi.coef(j)
                                                        : xi_fit->xi.sigma2;
            rep.xi.push_back({xi_names[j], v, std::sqrt(std::max(0.0, xi_cov(j, j)))});
        }
    }

    std::optional<IgnorableBaselines> ign;
    auto baseline = [&]() -> IgnorableBaselines& {
        if (!ign) ign = ignorable_baselines(a, b, cfg.family);
        return *ign;
    };

    std::optional<ThetaFit> cal_fit;
    for (EstimatorKind k : cfg.estimators) {
        ReportRow row;
        row.kind = k;
        MeanEstimate est;
        switch (k) {
            case EstimatorKind::Naive: est = mu_naive(a); break;
            case EstimatorKind::IPW: est = mu_ipw(a, theta_fit->theta); break;
            case EstimatorKind::REG: est = mu_reg(b, theta_fit->theta, xi_fit->xi); break;
            case EstimatorKind::AIPW:
                est = mu_aipw(a, b, theta_fit->theta, xi_fit->xi);
                break;
            case EstimatorKind::EL: {
                FitOptions fo;
                fo.n_starts = cfg.n_starts;
                fo.seed = cfg.seed;
                cal_fit = fit_theta_calibration(a, b, fo, theta_fit->theta);
                if (cal_fit->multiplicity == Multiplicity::MultipleRoots)
                    rep.warnings.push_back("calibration found multiple roots (" +
                                           std::to_string(cal_fit->n_roots) + ")");
                const ELWeights w = el_weights(cal_fit->theta, xi_fit->xi, a, b);
                est = mu_el(w, a);
                break;
            }
            case EstimatorKind::REG2: est = baseline().reg2; break;
            case EstimatorKind::IPW2: est = baseline().ipw2; break;
            case EstimatorKind::DR2: est = baseline().dr2; break;
        }
        row.estimate = est.value;
        if (k == EstimatorKind::IPW || k == EstimatorKind::REG ||
            k == EstimatorKind::AIPW) {
            VarianceDiagnostics vd;
            const VarianceComponents comps = estimate_components(
                k, a, b, theta_fit->theta, xi_fit->xi, est.value);
            const double s2 = sigma2_plugin(k, comps, a, b, theta_fit->theta,
                                            xi_fit->xi, &vd);
            const double n_for_se =
                b.design.N > 0 ? static_cast<double>(b.design.N) : b.n_hat();
            const IntervalEstimate ci = wald_ci(est.value, s2, n_for_se, cfg.level);
            row.se = ci.se;
            row.ci_low = ci.ci_low;
            row.ci_high = ci.ci_high;
            row.has_se = true;
            if (vd.floored > 0)
                rep.warnings.push_back("plug-in variance floored at zero for " +
                                       to_string(k));
            if (vd.pinv_used > 0)
                rep.warnings.push_back("singular variance component handled by "
                                       "pseudo-inverse for " + to_string(k));
        }
        rep.rows.push_back(row);
    }
    return rep;
}

std::string emit_report(const Report& rep, ReportFormat format) {
    for (const auto& r : rep.rows) {
        check_finite(r.estimate, to_string(r.kind) + ".estimate");
        if (r.has_se) {
            check_finite(r.se, to_string(r.kind) + ".se");
            check_finite(r.ci_low, to_string(r.kind) + ".ci_low");
            check_finite(r.ci_high, to_string(r.kind) + ".ci_high");
        }
    }
    for (const auto& p : rep.theta) {
        check_finite(p.estimate, "theta." + p.name);
        check_finite(p.se, "theta." + p.name + ".se");
    }
    for (const auto& p : rep.xi) {
        check_finite(p.estimate, "xi." + p.name);
        check_finite(p.se, "xi." + p.name + ".se");
    }

    if (format == ReportFormat::Json) {
        json j;
        j["version"] = rep.version;
        j["config_hash"] = rep.config_hash;
        j["seed"] = rep.seed;
        j["level"] = rep.level;
        j["estimators"] = json::array();
        for (const auto& r : rep.rows) {
            json rj;
            rj["kind"] = to_string(r.kind);
            rj["estimate"] = r.estimate;
            if (r.has_se) {
                rj["se"] = r.se;
                rj["ci_low"] = r.ci_low;
                rj["ci_high"] = r.ci_high;
            }
            j["estimators"].push_back(rj);
        }
        auto params = [](const std::vector<ParamRow>& rows) {
            json out = json::array();
            for (const auto& p : rows)
                out.push_back({{"name", p.name}, {"estimate", p.estimate}, {"se", p.se}});
            return out;
        };
        j["theta"] = params(rep.theta);
        j["xi"] = params(rep.xi);
        j["warnings"] = rep.warnings;
        return j.dump(2) + "\n";
    }

    if (format == ReportFormat::Csv) {
        std::ostringstream ss;
        ss << "kind,estimate,se,ci_low,ci_high\n";
        for (const auto& r : rep.rows) {
            ss << to_string(r.kind) << "," << fmt6(r.estimate) << ",";
            if (r.has_se)
                ss << fmt6(r.se) << "," << fmt6(r.ci_low) << "," << fmt6(r.ci_high);
            else
                ss << ",,";
            ss << "\n";
        }
        return ss.str();
    }

    // plain-text table
    std::ostringstream ss;
    ss << rep.version << "  config=" << rep.config_hash << "  seed=" << rep.seed
       << "\n\n";
    ss << "estimator   estimate      se        " << fmt6(rep.level * 100)
       << "% CI\n";
    for (const auto& r : rep.rows) {
        ss << to_string(r.kind);
        for (size_t k = to_string(r.kind).size(); k < 12; ++k) ss << ' ';
        ss << fmt6(r.estimate);
        if (r.has_se)
            ss << "  " << fmt6(r.se) << "  [" << fmt6(r.ci_low) << ", "
               << fmt6(r.ci_high) << "]";
        ss << "\n";
    }
    if (!rep.theta.empty()) {
        ss << "\nparticipation model\n";
        for (const auto& p : rep.theta)
            ss << "  " << p.name << " = " << fmt6(p.estimate) << " (se "
               << fmt6(p.se) << ")\n";
    }
    if (!rep.xi.empty()) {
        ss << "outcome model\n";
        for (const auto& p : rep.xi)
            ss << "  " << p.name << " = " << fmt6(p.estimate) << " (se "
               << fmt6(p.se) << ")\n";
    }
    for (const auto& w : rep.warnings) ss << "warning: " << w << "\n";
    return ss.str();
}

Report parse_report_json(const std::string& text) {
    json j = json::parse(text);
    Report rep;
    rep.version = j.value("version", "");
    rep.config_hash = j.value("config_hash", "");
    rep.seed = j.value("seed", std::uint64_t{0});
    rep.level = j.value("level", 0.95);
    for (const auto& rj : j["estimators"]) {
        ReportRow r;
        r.kind = estimator_from_string(rj.at("kind").get<std::string>());
        r.estimate = rj.at("estimate").get<double>();
        if (rj.contains("se")) {
            r.has_se = true;
            r.se = rj["se"].get<double>();
            r.ci_low = rj["ci_low"].get<double>();
            r.ci_high = rj["ci_high"].get<double>();
        }
        rep.rows.push_back(r);
    }
    auto params = [](const json& arr) {
        std::vector<ParamRow> out;
        for (const auto& p : arr)
            out.push_back({p.at("name").get<std::string>(),
                           p.at("estimate").get<double>(), p.at("se").get<double>()});
        return out;
    };
    if (j.contains("theta")) rep.theta = params(j["theta"]);
    if (j.contains("xi")) rep.xi = params(j["xi"]);
    if (j.contains("warnings"))
        rep.warnings = j["warnings"].get<std::vector<std::string>>();
    return rep;
}

std::string metrics_to_csv(const MetricsTable& table, const SimCell& cell) {
    std::ostringstream ss;
    ss << "cell,estimator,pct_rb,rrmse,sd,se,cp,al,used,excluded\n";
    auto cellfmt = [&]() {
        std::ostringstream cs;
        cs << cell.label;
        return cs.str();
    };
    for (const auto& [kind, row] : table.rows) {
        ss << cellfmt() << "," << to_string(kind) << "," << fmt_full(row.pct_rb)
           << "," << fmt_full(row.rrmse) << "," << fmt_full(row.sd) << ","
           << fmt_full(row.se) << "," << fmt_full(row.cp) << ","
           << fmt_full(row.al) << "," << row.used << "," << row.excluded << "\n";
    }
    ss << "# mu0=" << fmt_full(table.mu0) << " reps=" << table.reps
       << " nmr_cal=" << table.nmr_cal << " cal_used=" << table.cal_used
       << " empty_redraws=" << table.empty_redraws << "\n";
    if (!table.pl_params.empty()) {
        ss << "# pl_params(pct_rb/rrmse):";
        for (const auto& p : table.pl_params)
            ss << " " << fmt_full(p.pct_rb) << "/" << fmt_full(p.rrmse);
        ss << "\n";
    }
    if (!table.cal_params.empty()) {
        ss << "# cal_params(pct_rb/rrmse):";
        for (const auto& p : table.cal_params)
            ss << " " << fmt_full(p.pct_rb) << "/" << fmt_full(p.rrmse);
        ss << "\n";
    }
    return ss.str();
}

}  // namespace npsurvey
