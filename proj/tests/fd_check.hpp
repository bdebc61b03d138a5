// Central finite-difference gradient checking used across the test suites.
#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "dsla/tensor.hpp"

namespace dsla_test {

// Relative error between analytic and finite-difference values; absolute
// scale floor avoids blowing up tiny near-zero entries.
inline double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

// f maps named inputs to a scalar loss computed on a fresh tape.
// Returns the worst relative error over every element of every input.
inline double fd_gradient_check(
    const std::function<double(const std::map<std::string, dsla::Tensor>&, dsla::GradMap*)>& f,
    std::map<std::string, dsla::Tensor> inputs, double h = 1e-5) {
    dsla::GradMap grads;
    f(inputs, &grads);
    double worst = 0.0;
    for (auto& [name, tensor] : inputs) {
        for (std::size_t i = 0; i < tensor.size(); ++i) {
            const double orig = (*tensor.data)[i];
            (*tensor.data)[i] = orig + h;
            const double up = f(inputs, nullptr);
            (*tensor.data)[i] = orig - h;
            const double down = f(inputs, nullptr);
            (*tensor.data)[i] = orig;
            const double fd = (up - down) / (2.0 * h);
            const double analytic = grads.count(name) ? (*grads.at(name).data)[i] : 0.0;
            worst = std::max(worst, rel_err(analytic, fd));
        }
    }
    return worst;
}

}  // namespace dsla_test
