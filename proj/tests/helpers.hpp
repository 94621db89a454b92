#pragma once

#include <cmath>
#include <functional>
#include <random>

#include "npsurvey/types.hpp"

namespace test_util {

using namespace npsurvey;

inline double rel_err(double got, double want) {
    const double scale = std::max({1.0, std::abs(got), std::abs(want)});
    return std::abs(got - want) / scale;
}

// Central-difference gradient of a scalar function.
inline VectorXd fd_grad(const std::function<double(const VectorXd&)>& f,
                        const VectorXd& t, double h0 = 1e-6) {
    VectorXd g(t.size());
    for (int j = 0; j < t.size(); ++j) {
        const double h = h0 * (1.0 + std::abs(t(j)));
        VectorXd tp = t, tm = t;
        tp(j) += h;
        tm(j) -= h;
        g(j) = (f(tp) - f(tm)) / (2.0 * h);
    }
    return g;
}

inline double fd_scalar(const std::function<double(double)>& f, double t,
                        double h0 = 1e-6) {
    const double h = h0 * (1.0 + std::abs(t));
    return (f(t + h) - f(t - h)) / (2.0 * h);
}

inline Schema schema_u1u2z() {
    Schema s;
    s.names = {"u1", "u2", "z"};
    s.roles = {Role::Shared, Role::Shared, Role::Instrument};
    return s;
}

inline Schema schema_one_shared() {
    Schema s;
    s.names = {"u"};
    s.roles = {Role::Shared};
    return s;
}

}  // namespace test_util
