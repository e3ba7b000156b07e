#include "tcedit/diagnostics.hpp"

#include <cstdio>
#include <sstream>

#include "tcedit/ops.hpp"
#include "tcedit/rng.hpp"

namespace tcedit {

ModelConfig tiny_model_config() {
    ModelConfig c;
    c.d_in = 5;
    c.d_model = 8;
    c.n_heads = 2;
    c.n_layers_t = 1;
    c.n_layers_c = 1;
    c.window = 4;
    c.d_ff = 16;
    c.d_fuse = 8;
    c.use_track_embedding = true;
    c.max_tracks = 3;
    c.seed = 0;
    return c;
}

GradCheckReport gradcheck_model(const ModelConfig& config, const ModelGradCheckOptions& options) {
    config.validate();
    if (options.tracks < 1 || options.tracks > config.max_tracks || options.groups < 1) {
        throw std::invalid_argument("gradcheck_model: need 1 <= tracks <= max_tracks and groups >= 1");
    }
    Rng rng(options.seed);
    auto params = init_params(config).cast<double>();
    for (auto p : params.named()) {
        for (auto& v : p.tensor.mutable_data()) {
            v += 0.3 * rng.normal();
        }
    }

    std::vector<Sample> samples;
    std::vector<double> labels;
    for (std::size_t g = 0; g < options.groups; ++g) {
        std::vector<float> history(config.window * config.d_in);
        std::vector<float> context(options.tracks * config.d_in);
        for (auto& v : history) {
            v = static_cast<float>(rng.normal());
        }
        for (auto& v : context) {
            v = static_cast<float>(rng.normal());
        }
        Tensor<float> h({config.window, config.d_in}, std::move(history));
        Tensor<float> c({options.tracks, config.d_in}, std::move(context));
        const std::size_t positive = rng.index(options.tracks);
        for (std::size_t j = 0; j < options.tracks; ++j) {
            const int y = j == positive ? 1 : 0;
            samples.push_back(Sample{h, c, j, y, {0, g}});
            labels.push_back(y);
        }
    }

    std::vector<NamedTensor> inputs;
    for (const auto& p : params.named()) {
        inputs.push_back({p.name, p.tensor});
    }
    auto loss = [&]() {
        return bce_with_logits(forward_logits(params, std::span<const Sample>(samples)), std::span<const double>(labels));
    };
    return check_gradients(inputs, loss, options.tolerance, options.step);
}

std::string format_gradcheck_report(const GradCheckReport& report) {
    std::size_t width = 6;
    for (const auto& t : report.tensors) {
        width = std::max(width, t.name.size());
    }
    std::ostringstream os;
    char line[256];
    for (const auto& t : report.tensors) {
        std::snprintf(line, sizeof(line), "%-*s %6zu  %.3e  %s\n", static_cast<int>(width), t.name.c_str(), t.count,
                      t.worst_relative_error, t.passed ? "ok" : "FAIL");
        os << line;
    }
    std::snprintf(line, sizeof(line), "worst relative error %.3e (tolerance %.0e): %s\n", report.worst(),
                  report.tolerance, report.passed() ? "PASS" : "FAIL");
    os << line;
    return os.str();
}

}  // namespace tcedit
