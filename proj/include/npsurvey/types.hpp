#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>
#include <vector>

namespace npsurvey {

using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using Eigen::VectorXd;

// ---- Errors ----------------------------------------------------------------

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DimensionError : Error { using Error::Error; };
struct DomainError : Error { using Error::Error; };
struct ParseError : Error { using Error::Error; };
struct SchemaError : Error { using Error::Error; };
struct SeparationError : Error { using Error::Error; };
struct SingularError : Error { using Error::Error; };
struct ConvergenceError : Error { using Error::Error; };
struct NoRootError : Error { using Error::Error; };
struct HullViolationError : Error { using Error::Error; };
struct InternalError : Error { using Error::Error; };

// ---- Covariate schema ------------------------------------------------------

// `Shared` columns enter both the participation and outcome models;
// `Instrument` columns enter the outcome model only.
enum class Role { Shared, Instrument };

struct Schema {
    std::vector<std::string> names;
    std::vector<Role> roles;

    int p() const { return static_cast<int>(names.size()); }

    std::vector<int> shared_indices() const {
        std::vector<int> idx;
        for (int j = 0; j < p(); ++j)
            if (roles[j] == Role::Shared) idx.push_back(j);
        return idx;
    }

    int n_shared() const { return static_cast<int>(shared_indices().size()); }
    int n_instruments() const { return p() - n_shared(); }

    bool same_columns(const Schema& other) const {
        return names == other.names && roles == other.roles;
    }
};

// ---- Model parameters ------------------------------------------------------

enum class OutcomeFamily { BernoulliLogistic, GaussianLinear };

// Participation model parameters: eta = alpha + x_shared'beta + gamma*y.
struct Theta {
    double alpha = 0.0;
    VectorXd beta;  // over shared columns
    double gamma = 0.0;

    int dim() const { return static_cast<int>(beta.size()) + 2; }

    VectorXd pack() const {
        VectorXd t(dim());
        t(0) = alpha;
        t.segment(1, beta.size()) = beta;
        t(dim() - 1) = gamma;
        return t;
    }

    static Theta unpack(const VectorXd& t) {
        Theta th;
        th.alpha = t(0);
        th.beta = t.segment(1, t.size() - 2);
        th.gamma = t(t.size() - 1);
        return th;
    }
};

// Outcome model parameters. `coef` holds the intercept followed by one
// coefficient per covariate column; sigma2 is used by GaussianLinear only.
struct Xi {
    OutcomeFamily family = OutcomeFamily::BernoulliLogistic;
    VectorXd coef;
    double sigma2 = 0.0;

    int dim() const {
        int d = static_cast<int>(coef.size());
        return family == OutcomeFamily::GaussianLinear ? d + 1 : d;
    }
};

// ---- Sampling design -------------------------------------------------------

struct DesignInfo {
    enum class Kind { Srswor, GeneralHT, HajekApprox };
    Kind kind = Kind::HajekApprox;
    long long N = 0;  // population size, when known
    long long n = 0;  // fixed sample size (SRSWOR)
    VectorXd pi;      // first-order inclusion probabilities (GeneralHT)
    MatrixXd pi_joint;  // second-order inclusion probabilities (GeneralHT)

    static DesignInfo srswor(long long n, long long N) {
        if (n < 1 || n > N)
            throw DomainError("SRSWOR requires 1 <= n <= N, got n=" +
                              std::to_string(n) + ", N=" + std::to_string(N));
        DesignInfo d;
        d.kind = Kind::Srswor;
        d.n = n;
        d.N = N;
        return d;
    }

    static DesignInfo general_ht(VectorXd first_order, MatrixXd joint) {
        DesignInfo d;
        d.kind = Kind::GeneralHT;
        d.pi = std::move(first_order);
        d.pi_joint = std::move(joint);
        for (int i = 0; i < d.pi.size(); ++i) {
            if (!(d.pi(i) > 0.0 && d.pi(i) <= 1.0))
                throw DomainError("inclusion probabilities must lie in (0,1]");
        }
        return d;
    }

    static DesignInfo hajek() { return DesignInfo{}; }
};

// ---- Samples ---------------------------------------------------------------

// Non-probability sample: responses and covariates.
struct SampleA {
    Schema schema;
    MatrixXd X;  // n_A x p
    VectorXd y;  // length n_A

    int n() const { return static_cast<int>(X.rows()); }

    void validate(OutcomeFamily family) const {
        if (X.rows() != y.size())
            throw DimensionError("sample A: X has " + std::to_string(X.rows()) +
                                 " rows but y has " + std::to_string(y.size()));
        if (X.cols() != schema.p())
            throw DimensionError("sample A: X has " + std::to_string(X.cols()) +
                                 " columns but schema names " +
                                 std::to_string(schema.p()));
        if (!X.allFinite() || !y.allFinite())
            throw DomainError("sample A contains non-finite entries");
        if (family == OutcomeFamily::BernoulliLogistic) {
            for (int i = 0; i < y.size(); ++i)
                if (y(i) != 0.0 && y(i) != 1.0)
                    throw DomainError("binary response required: y(" +
                                      std::to_string(i) + ") = " +
                                      std::to_string(y(i)));
        }
    }
};

// Reference probability sample: covariates and survey weights, no response.
struct SampleB {
    Schema schema;
    MatrixXd X;  // n_B x p
    VectorXd d;  // survey weights, length n_B
    DesignInfo design;

    int n() const { return static_cast<int>(X.rows()); }
    double n_hat() const { return d.sum(); }

    void validate() const {
        if (X.rows() != d.size())
            throw DimensionError("sample B: X has " + std::to_string(X.rows()) +
                                 " rows but d has " + std::to_string(d.size()));
        if (X.cols() != schema.p())
            throw DimensionError("sample B: X/schema column mismatch");
        if (!X.allFinite() || !d.allFinite())
            throw DomainError("sample B contains non-finite entries");
        for (int i = 0; i < d.size(); ++i)
            if (d(i) <= 0.0)
                throw DomainError("survey weight must be positive: d(" +
                                  std::to_string(i) + ") = " +
                                  std::to_string(d(i)));
    }
};

}  // namespace npsurvey
