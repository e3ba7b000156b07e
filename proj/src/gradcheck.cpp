#include "tcedit/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace tcedit {

Tensor<double> finite_diff_grad(const std::function<double(const Tensor<double>&)>& f, const Tensor<double>& x,
                                double h) {
    if (!(h > 0.0)) {
        throw std::invalid_argument("finite_diff_grad: step must be positive");
    }
    Tensor<double> probe = x.clone(false);
    auto values = probe.mutable_data();
    std::vector<double> grad(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double original = values[i];
        const double step = h * std::max(1.0, std::abs(original));
        values[i] = original + step;
        const double up = f(probe);
        values[i] = original - step;
        const double down = f(probe);
        values[i] = original;
        grad[i] = (up - down) / (2.0 * step);
    }
    return Tensor<double>(x.shape(), std::move(grad));
}

double max_relative_error(std::span<const double> analytic, std::span<const double> numeric, double floor) {
    if (analytic.size() != numeric.size()) {
        throw DimensionError("max_relative_error: length mismatch");
    }
    double worst = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        const double denom = std::max({std::abs(analytic[i]), std::abs(numeric[i]), floor});
        worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
    }
    return worst;
}

bool GradCheckReport::passed() const {
    return std::all_of(tensors.begin(), tensors.end(), [](const TensorCheck& t) { return t.passed; });
}

double GradCheckReport::worst() const {
    double w = 0.0;
    for (const auto& t : tensors) {
        w = std::max(w, t.worst_relative_error);
    }
    return w;
}

GradCheckReport check_gradients(const std::vector<NamedTensor>& inputs,
                                const std::function<Tensor<double>()>& loss, double tolerance, double h) {
    Gradients<double> grads;
    {
        Tape<double> tape;
        TapeScope<double> scope(tape);
        const auto value = loss();
        grads = tape.backward(value);
    }

    GradCheckReport report;
    report.tolerance = tolerance;
    for (const auto& input : inputs) {
        if (!input.tensor.requires_grad()) {
            throw std::invalid_argument("check_gradients: " + input.name + " does not require a gradient");
        }
        // The loss closure reads `input.tensor`, so perturb that node in place.
        Tensor<double> handle = input.tensor;
        auto values = handle.mutable_data();
        std::vector<double> numeric(values.size());
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double original = values[i];
            const double step = h * std::max(1.0, std::abs(original));
            values[i] = original + step;
            const double up = loss().item();
            values[i] = original - step;
            const double down = loss().item();
            values[i] = original;
            numeric[i] = (up - down) / (2.0 * step);
        }
        const auto analytic = grads.of(input.tensor);
        TensorCheck check;
        check.name = input.name;
        check.count = values.size();
        check.worst_relative_error = max_relative_error(analytic, numeric);
        check.passed = check.worst_relative_error < tolerance;
        report.tensors.push_back(std::move(check));
    }
    return report;
}

}  // namespace tcedit
