#pragma once

#include <functional>
#include <string>
#include <vector>

#include "tcedit/tensor.hpp"

namespace tcedit {

// Central differences (f(x + h_i e_i) - f(x - h_i e_i)) / (2 h_i) with
// h_i = h * max(1, |x_i|), evaluated in double precision.
Tensor<double> finite_diff_grad(const std::function<double(const Tensor<double>&)>& f, const Tensor<double>& x,
                                double h = 1e-5);

// Worst element-wise |a - n| / max(|a|, |n|, floor).
double max_relative_error(std::span<const double> analytic, std::span<const double> numeric,
                          double floor = 1e-6);

struct NamedTensor {
    std::string name;
    Tensor<double> tensor;
};

struct TensorCheck {
    std::string name;
    std::size_t count = 0;
    double worst_relative_error = 0.0;
    bool passed = false;
};

struct GradCheckReport {
    std::vector<TensorCheck> tensors;
    double tolerance = 0.0;
    bool passed() const;
    double worst() const;
};

// Compares reverse-mode gradients of `loss` (rebuilt from the current values of
// `inputs` on every call) against central differences for every input tensor.
// `loss` must read its inputs through the handles given here.
GradCheckReport check_gradients(const std::vector<NamedTensor>& inputs,
                                const std::function<Tensor<double>()>& loss, double tolerance = 1e-4,
                                double h = 1e-5);

}  // namespace tcedit
