#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "tcedit/data.hpp"
#include "tcedit/model.hpp"
#include "tcedit/sample.hpp"

namespace tcedit {

// -[y log p + (1-y) log(1-p)] with p clamped to [eps, 1-eps].
double bce_loss(double p, int y, double eps = 1e-7);

struct SamplingConfig {
    std::size_t window = 16;
    std::size_t step = 5;
    std::size_t groups_per_boundary = 6;
};

// Instances grouped by (scene, end frame); group g is
// samples[group_offsets[g], group_offsets[g + 1]).
struct SampleSet {
    std::vector<Sample> samples;
    std::vector<std::size_t> group_offsets{0};
    std::size_t boundaries = 0;
    std::size_t clipped_groups = 0;  // end frames that fell past the scene end

    std::size_t group_count() const { return group_offsets.size() - 1; }
    std::span<const Sample> group(std::size_t g) const {
        return std::span<const Sample>(samples).subspan(group_offsets[g], group_offsets[g + 1] - group_offsets[g]);
    }
    void append(SampleSet other);
};

// For every shot start b, groups end at b + k·step (k < groups_per_boundary),
// one instance per track, label 1 on the annotated track. Histories are the
// annotated frames before the end frame, zero rows before frame 0.
SampleSet generate_boundary_samples(const FeaturePool& pool, const EditAnnotation& annotation,
                                    const SamplingConfig& sampling, std::size_t scene_index = 0);

SampleSet generate_scene_samples(std::span<const Scene> scenes, const SamplingConfig& sampling);

struct TrainConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::size_t batch_size = 32;  // sample groups per optimizer step
    std::size_t epochs = 20;
    std::uint64_t seed = 0;
    std::size_t step = 5;
    std::size_t groups_per_boundary = 6;

    std::vector<std::string> problems() const;
    void validate() const;
};

struct OptimizerState {
    std::vector<std::vector<float>> first_moment;
    std::vector<std::vector<float>> second_moment;
    std::size_t step = 0;
};

OptimizerState make_optimizer_state(std::span<const NamedParam<float>> params);

// One bias-corrected Adam update in place; grads[i] matches params[i].
void adam_step(std::span<const NamedParam<float>> params, std::span<const std::vector<float>> grads,
               OptimizerState& state, const TrainConfig& config);

struct EpochLoss {
    std::size_t step = 0;  // optimizer steps completed at the end of the epoch
    std::size_t epoch = 0;
    double mean_loss = 0.0;
};

struct TrainResult {
    ModelParams<float> params;
    std::vector<EpochLoss> curve;
    std::vector<double> step_losses;
    std::size_t groups = 0;
    std::size_t instances = 0;
    std::size_t clipped_groups = 0;
};

using EpochCallback = std::function<void(const EpochLoss&)>;

// Adam over shuffled batches of whole groups; the shuffle is seeded per run.
TrainResult train_on_samples(ModelParams<float> params, const SampleSet& samples, const TrainConfig& config,
                             const EpochCallback& on_epoch = {});

TrainResult train(std::span<const Scene> scenes, const ModelConfig& model_config, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

// Plain-text "step epoch mean_loss" table.
std::string format_loss_curve(std::span<const EpochLoss> curve);

}  // namespace tcedit
