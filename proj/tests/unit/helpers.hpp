#pragma once

#include <cmath>
#include <vector>

#include "tcedit/ops.hpp"
#include "tcedit/rng.hpp"
#include "tcedit/tensor.hpp"

namespace test {

inline tcedit::Tensor<double> random_tensor(tcedit::Rng& rng, tcedit::Shape shape, double scale = 1.0,
                                            bool requires_grad = true) {
    std::vector<double> v(tcedit::shape_numel(shape));
    for (auto& x : v) {
        x = scale * rng.normal();
    }
    return tcedit::Tensor<double>(std::move(shape), std::move(v), requires_grad);
}

inline tcedit::Tensor<float> random_matrix(tcedit::Rng& rng, std::size_t rows, std::size_t cols) {
    std::vector<float> v(rows * cols);
    for (auto& x : v) {
        x = static_cast<float>(rng.normal());
    }
    return tcedit::Tensor<float>({rows, cols}, std::move(v));
}

inline bool all_finite(std::span<const float> v) {
    for (float x : v) {
        if (!std::isfinite(x)) {
            return false;
        }
    }
    return true;
}

inline bool all_finite(std::span<const double> v) {
    for (double x : v) {
        if (!std::isfinite(x)) {
            return false;
        }
    }
    return true;
}

}  // namespace test
