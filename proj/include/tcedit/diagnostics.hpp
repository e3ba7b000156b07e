#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "tcedit/gradcheck.hpp"
#include "tcedit/model.hpp"

namespace tcedit {

// Small enough for exhaustive central differences in double precision.
ModelConfig tiny_model_config();

struct ModelGradCheckOptions {
    std::size_t tracks = 3;
    std::size_t groups = 2;
    std::uint64_t seed = 0;
    double tolerance = 1e-4;
    double step = 1e-5;
};

// Batch BCE gradient of every parameter tensor against finite differences.
// Parameters are jittered first so biases and gains are off their init values.
GradCheckReport gradcheck_model(const ModelConfig& config, const ModelGradCheckOptions& options = {});

// One "name  count  worst_rel_err  ok|FAIL" line per tensor plus a verdict.
std::string format_gradcheck_report(const GradCheckReport& report);

}  // namespace tcedit
