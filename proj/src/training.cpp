#include "tcedit/training.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "tcedit/error.hpp"
#include "tcedit/ops.hpp"
#include "tcedit/rng.hpp"

namespace tcedit {

double bce_loss(double p, int y, double eps) {
    const double pc = std::clamp(p, eps, 1.0 - eps);
    return y == 1 ? -std::log(pc) : -std::log(1.0 - pc);
}

void SampleSet::append(SampleSet other) {
    const std::size_t base = samples.size();
    samples.insert(samples.end(), std::make_move_iterator(other.samples.begin()),
                   std::make_move_iterator(other.samples.end()));
    for (std::size_t g = 1; g < other.group_offsets.size(); ++g) {
        group_offsets.push_back(base + other.group_offsets[g]);
    }
    boundaries += other.boundaries;
    clipped_groups += other.clipped_groups;
}

SampleSet generate_boundary_samples(const FeaturePool& pool, const EditAnnotation& annotation,
                                    const SamplingConfig& sampling, std::size_t scene_index) {
    if (annotation.selected.empty()) {
        throw std::invalid_argument("generate_boundary_samples: empty annotation");
    }
    if (sampling.window < 1 || sampling.step < 1 || sampling.groups_per_boundary < 1) {
        throw std::invalid_argument("generate_boundary_samples: window, step and groups_per_boundary must be >= 1");
    }
    annotation.validate_against(pool);

    const std::size_t d = pool.width;
    const std::size_t n_tracks = pool.tracks;
    SampleSet set;
    const auto boundaries = shot_boundaries(annotation);
    set.boundaries = boundaries.size();
    for (const auto b : boundaries) {
        for (std::size_t k = 0; k < sampling.groups_per_boundary; ++k) {
            const std::size_t end = b + k * sampling.step;
            if (end >= pool.frames) {
                ++set.clipped_groups;
                continue;
            }
            std::vector<float> history(sampling.window * d, 0.0f);
            for (std::size_t r = 0; r < sampling.window; ++r) {
                if (end + r < sampling.window) {
                    continue;  // before frame 0
                }
                const std::size_t frame = end + r - sampling.window;
                const auto src = pool.at(frame, annotation.selected[frame]);
                std::copy(src.begin(), src.end(), history.begin() + static_cast<std::ptrdiff_t>(r * d));
            }
            const auto ctx = pool.frame(end);
            Tensor<float> hist_t({sampling.window, d}, std::move(history));
            Tensor<float> ctx_t({n_tracks, d}, std::vector<float>(ctx.begin(), ctx.end()));
            for (std::size_t j = 0; j < n_tracks; ++j) {
                Sample s;
                s.history = hist_t;
                s.context = ctx_t;
                s.track_index = j;
                s.label = annotation.selected[end] == j ? 1 : 0;
                s.meta = {scene_index, end};
                set.samples.push_back(std::move(s));
            }
            set.group_offsets.push_back(set.samples.size());
        }
    }
    return set;
}

SampleSet generate_scene_samples(std::span<const Scene> scenes, const SamplingConfig& sampling) {
    SampleSet all;
    for (std::size_t s = 0; s < scenes.size(); ++s) {
        all.append(generate_boundary_samples(scenes[s].pool, scenes[s].annotation, sampling, s));
    }
    return all;
}

std::vector<std::string> TrainConfig::problems() const {
    std::vector<std::string> out;
    if (!(learning_rate > 0.0)) {
        out.push_back("learning_rate must be > 0");
    }
    if (!(beta1 >= 0.0 && beta1 < 1.0)) {
        out.push_back("beta1 must lie in [0, 1)");
    }
    if (!(beta2 >= 0.0 && beta2 < 1.0)) {
        out.push_back("beta2 must lie in [0, 1)");
    }
    if (!(adam_eps > 0.0)) {
        out.push_back("adam_eps must be > 0");
    }
    if (batch_size < 1) {
        out.push_back("batch_size must be >= 1");
    }
    if (step < 1) {
        out.push_back("step must be >= 1");
    }
    if (groups_per_boundary < 1) {
        out.push_back("groups_per_boundary must be >= 1");
    }
    return out;
}

void TrainConfig::validate() const {
    auto p = problems();
    if (!p.empty()) {
        throw ConfigError(std::move(p));
    }
}

OptimizerState make_optimizer_state(std::span<const NamedParam<float>> params) {
    OptimizerState state;
    for (const auto& p : params) {
        state.first_moment.emplace_back(p.tensor.size(), 0.0f);
        state.second_moment.emplace_back(p.tensor.size(), 0.0f);
    }
    return state;
}

void adam_step(std::span<const NamedParam<float>> params, std::span<const std::vector<float>> grads,
               OptimizerState& state, const TrainConfig& config) {
    if (grads.size() != params.size() || state.first_moment.size() != params.size() ||
        state.second_moment.size() != params.size()) {
        throw DimensionError("adam_step: " + std::to_string(params.size()) + " params, " +
                             std::to_string(grads.size()) + " grads, " + std::to_string(state.first_moment.size()) +
                             " moment slots");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto n = params[i].tensor.size();
        if (grads[i].size() != n || state.first_moment[i].size() != n || state.second_moment[i].size() != n) {
            throw DimensionError("adam_step: gradient for '" + params[i].name + "' has " +
                                 std::to_string(grads[i].size()) + " values, parameter has " + std::to_string(n));
        }
    }
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double correction1 = 1.0 - std::pow(config.beta1, t);
    const double correction2 = 1.0 - std::pow(config.beta2, t);
    const auto b1 = static_cast<float>(config.beta1);
    const auto b2 = static_cast<float>(config.beta2);
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor<float> handle = params[i].tensor;
        auto values = handle.mutable_data();
        auto& m = state.first_moment[i];
        auto& v = state.second_moment[i];
        const auto& g = grads[i];
        for (std::size_t k = 0; k < values.size(); ++k) {
            m[k] = b1 * m[k] + (1.0f - b1) * g[k];
            v[k] = b2 * v[k] + (1.0f - b2) * g[k] * g[k];
            const double m_hat = static_cast<double>(m[k]) / correction1;
            const double v_hat = static_cast<double>(v[k]) / correction2;
            values[k] -= static_cast<float>(config.learning_rate * m_hat / (std::sqrt(v_hat) + config.adam_eps));
        }
    }
}

TrainResult train_on_samples(ModelParams<float> params, const SampleSet& samples, const TrainConfig& config,
                             const EpochCallback& on_epoch) {
    config.validate();
    params.config.validate();
    const std::size_t n_groups = samples.group_count();
    if (n_groups == 0) {
        throw std::invalid_argument("train: no training samples");
    }
    const auto named = params.named();
    OptimizerState state = make_optimizer_state(named);
    Rng rng(config.seed);
    std::vector<std::size_t> order(n_groups);
    std::iota(order.begin(), order.end(), std::size_t{0});

    TrainResult result;
    result.groups = n_groups;
    result.instances = samples.samples.size();
    result.clipped_groups = samples.clipped_groups;

    std::vector<Sample> batch;
    std::vector<float> labels;
    std::vector<std::vector<float>> grads(named.size());
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        rng.shuffle(std::span<std::size_t>(order));
        double loss_sum = 0.0;
        std::size_t instance_count = 0;
        for (std::size_t first = 0; first < n_groups; first += config.batch_size) {
            const std::size_t last = std::min(n_groups, first + config.batch_size);
            batch.clear();
            labels.clear();
            for (std::size_t g = first; g < last; ++g) {
                for (const auto& s : samples.group(order[g])) {
                    batch.push_back(s);
                    labels.push_back(static_cast<float>(s.label));
                }
            }
            Tape<float> tape;
            Gradients<float> g;
            double batch_loss = 0.0;
            {
                TapeScope<float> scope(tape);
                const auto logits = forward_logits(params, std::span<const Sample>(batch));
                const auto loss = bce_with_logits(logits, std::span<const float>(labels));
                batch_loss = static_cast<double>(loss.item());
                g = tape.backward(loss);
            }
            for (std::size_t i = 0; i < named.size(); ++i) {
                grads[i] = g.of(named[i].tensor);
            }
            adam_step(named, grads, state, config);
            result.step_losses.push_back(batch_loss);
            loss_sum += batch_loss * static_cast<double>(batch.size());
            instance_count += batch.size();
        }
        EpochLoss entry{state.step, epoch, loss_sum / static_cast<double>(instance_count)};
        result.curve.push_back(entry);
        if (on_epoch) {
            on_epoch(entry);
        }
    }
    result.params = std::move(params);
    return result;
}

TrainResult train(std::span<const Scene> scenes, const ModelConfig& model_config, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
    model_config.validate();
    config.validate();
    if (scenes.empty()) {
        throw std::invalid_argument("train: no training scenes");
    }
    for (const auto& s : scenes) {
        if (s.pool.width != model_config.d_in) {
            throw DimensionError("train: scene '" + s.id + "' has feature width " + std::to_string(s.pool.width) +
                                 ", model expects " + std::to_string(model_config.d_in));
        }
    }
    const SamplingConfig sampling{model_config.window, config.step, config.groups_per_boundary};
    const auto samples = generate_scene_samples(scenes, sampling);
    return train_on_samples(init_params(model_config), samples, config, on_epoch);
}

std::string format_loss_curve(std::span<const EpochLoss> curve) {
    std::ostringstream os;
    os << "step\tepoch\tmean_loss\n";
    os << std::setprecision(9);
    for (const auto& e : curve) {
        os << e.step << '\t' << e.epoch << '\t' << e.mean_loss << '\n';
    }
    return os.str();
}

}  // namespace tcedit
