#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "tcedit/sample.hpp"
#include "tcedit/tensor.hpp"

namespace tcedit {

// Which encoder streams feed the fusion head. Ablations replace the dropped
// stream's output with zeros.
enum class StreamMode { joint, contextual_only, temporal_only };

std::string to_string(StreamMode mode);
StreamMode stream_mode_from_string(const std::string& name);

struct ModelConfig {
    std::size_t d_in = 16;
    std::size_t d_model = 64;
    std::size_t n_heads = 4;
    std::size_t n_layers_t = 2;
    std::size_t n_layers_c = 2;
    std::size_t window = 16;
    std::size_t d_ff = 128;
    std::size_t d_fuse = 64;
    bool use_track_embedding = false;
    std::size_t max_tracks = 16;
    std::uint64_t seed = 0;
    StreamMode streams = StreamMode::joint;

    std::vector<std::string> problems() const;
    // Throws ConfigError listing every problem.
    void validate() const;

    bool operator==(const ModelConfig&) const = default;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

template <typename T>
struct EncoderLayerParams {
    Tensor<T> ln1_gain, ln1_bias;
    Tensor<T> w_query, w_key, w_value, w_out;
    Tensor<T> ln2_gain, ln2_bias;
    Tensor<T> ff1_weight, ff1_bias, ff2_weight, ff2_bias;
};

template <typename T>
struct NamedParam {
    std::string name;
    Tensor<T> tensor;
};

template <typename T>
struct ModelParams {
    ModelConfig config;
    Tensor<T> input_weight, input_bias;  // shared by both encoders
    Tensor<T> track_embedding;           // defined only with use_track_embedding
    std::vector<EncoderLayerParams<T>> temporal;
    std::vector<EncoderLayerParams<T>> contextual;
    Tensor<T> fuse1_weight, fuse1_bias, fuse2_weight, fuse2_bias;
    Tensor<T> positional;  // fixed sinusoidal table, (window + 1) × d_model, not trained

    // Every trainable tensor in canonical (checkpoint) order. Handles alias.
    std::vector<NamedParam<T>> named() const;

    // Deep copy into another precision; trainable tensors get requires_grad.
    template <typename U>
    ModelParams<U> cast() const;

    ModelParams clone() const { return cast<T>(); }
};

// Glorot-uniform weights, zero biases, unit layer-norm gains; deterministic in config.seed.
ModelParams<float> init_params(const ModelConfig& config);

// Rebuilds a parameter set from named tensors (checkpoint load). Throws
// FormatError on missing, extra or mis-shaped tensors.
ModelParams<float> params_from_named(const ModelConfig& config, std::vector<NamedParam<float>> tensors);

std::vector<float> sinusoidal_table(std::size_t positions, std::size_t width);

// Pre-norm encoder layer over consecutive row segments of x [N×d_model]:
// x + MHSA(LN(x)), then + FFN(LN(·)). Attention never crosses segments.
template <typename T>
Tensor<T> encoder_layer(const EncoderLayerParams<T>& layer, const Tensor<T>& x,
                        std::span<const std::size_t> segment_lengths, std::size_t n_heads);

// Temporal stream: history [window × d_in] plus the candidate [d_in] at the
// last position; returns the candidate token's representation [d_model].
template <typename T>
Tensor<T> encode_temporal(const ModelParams<T>& params, const Tensor<T>& history, const Tensor<T>& candidate);

// Contextual stream over all concurrent frames [J × d_in]; returns token j [d_model].
template <typename T>
Tensor<T> encode_contextual(const ModelParams<T>& params, const Tensor<T>& context, std::size_t track);

// Fusion head on the two [d_model] stream outputs; returns the logit [1].
template <typename T>
Tensor<T> fuse(const ModelParams<T>& params, const Tensor<T>& temporal_repr, const Tensor<T>& contextual_repr);

// Selection probability for candidate `track` of `context`.
template <typename T>
T predict_score(const ModelParams<T>& params, const Tensor<T>& history, const Tensor<T>& context,
                std::size_t track);

// Batched logits [B×1] for samples in order, on one tape.
template <typename T>
Tensor<T> forward_logits(const ModelParams<T>& params, std::span<const Sample> samples);

struct ScoredInstance {
    double score = 0.0;
    int label = 0;
};

template <typename T>
std::vector<ScoredInstance> forward_batch(const ModelParams<T>& params, std::span<const Sample> samples);

}  // namespace tcedit
