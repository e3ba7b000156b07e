#include "tcedit/model.hpp"

#include <cmath>
#include <cstring>
#include <map>

#include "tcedit/error.hpp"
#include "tcedit/ops.hpp"
#include "tcedit/rng.hpp"

namespace tcedit {

std::string to_string(StreamMode mode) {
    switch (mode) {
        case StreamMode::joint:
            return "joint";
        case StreamMode::contextual_only:
            return "contextual_only";
        case StreamMode::temporal_only:
            return "temporal_only";
    }
    return "joint";
}

StreamMode stream_mode_from_string(const std::string& name) {
    if (name == "joint") {
        return StreamMode::joint;
    }
    if (name == "contextual_only") {
        return StreamMode::contextual_only;
    }
    if (name == "temporal_only") {
        return StreamMode::temporal_only;
    }
    throw std::invalid_argument("unknown stream mode '" + name + "'");
}

std::vector<std::string> ModelConfig::problems() const {
    std::vector<std::string> out;
    auto positive = [&out](const char* name, std::size_t value) {
        if (value < 1) {
            out.push_back(std::string(name) + " must be >= 1");
        }
    };
    positive("d_in", d_in);
    positive("d_model", d_model);
    positive("n_heads", n_heads);
    positive("window", window);
    positive("d_ff", d_ff);
    positive("d_fuse", d_fuse);
    positive("max_tracks", max_tracks);
    if (n_heads >= 1 && d_model % n_heads != 0) {
        out.push_back("d_model (" + std::to_string(d_model) + ") must be divisible by n_heads (" +
                      std::to_string(n_heads) + ")");
    }
    return out;
}

void ModelConfig::validate() const {
    auto p = problems();
    if (!p.empty()) {
        throw ConfigError(std::move(p));
    }
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
    j = nlohmann::json{{"d_in", c.d_in},
                       {"d_model", c.d_model},
                       {"n_heads", c.n_heads},
                       {"n_layers_t", c.n_layers_t},
                       {"n_layers_c", c.n_layers_c},
                       {"window", c.window},
                       {"d_ff", c.d_ff},
                       {"d_fuse", c.d_fuse},
                       {"use_track_embedding", c.use_track_embedding},
                       {"max_tracks", c.max_tracks},
                       {"seed", c.seed},
                       {"streams", to_string(c.streams)}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
    ModelConfig d;
    c.d_in = j.value("d_in", d.d_in);
    c.d_model = j.value("d_model", d.d_model);
    c.n_heads = j.value("n_heads", d.n_heads);
    c.n_layers_t = j.value("n_layers_t", d.n_layers_t);
    c.n_layers_c = j.value("n_layers_c", d.n_layers_c);
    c.window = j.value("window", d.window);
    c.d_ff = j.value("d_ff", d.d_ff);
    c.d_fuse = j.value("d_fuse", d.d_fuse);
    c.use_track_embedding = j.value("use_track_embedding", d.use_track_embedding);
    c.max_tracks = j.value("max_tracks", d.max_tracks);
    c.seed = j.value("seed", d.seed);
    c.streams = stream_mode_from_string(j.value("streams", to_string(d.streams)));
}

std::vector<float> sinusoidal_table(std::size_t positions, std::size_t width) {
    std::vector<float> table(positions * width);
    for (std::size_t pos = 0; pos < positions; ++pos) {
        for (std::size_t i = 0; i < width; ++i) {
            const double exponent = static_cast<double>(2 * (i / 2)) / static_cast<double>(width);
            const double angle = static_cast<double>(pos) / std::pow(10000.0, exponent);
            table[pos * width + i] = static_cast<float>(i % 2 == 0 ? std::sin(angle) : std::cos(angle));
        }
    }
    return table;
}

namespace {

Tensor<float> glorot(Rng& rng, std::size_t fan_in, std::size_t fan_out) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::vector<float> w(fan_in * fan_out);
    for (auto& v : w) {
        v = static_cast<float>(rng.uniform(-limit, limit));
    }
    return Tensor<float>({fan_in, fan_out}, std::move(w), true);
}

EncoderLayerParams<float> init_layer(Rng& rng, const ModelConfig& c) {
    EncoderLayerParams<float> l;
    l.ln1_gain = Tensor<float>::full({c.d_model}, 1.0f, true);
    l.ln1_bias = Tensor<float>::zeros({c.d_model}, true);
    l.w_query = glorot(rng, c.d_model, c.d_model);
    l.w_key = glorot(rng, c.d_model, c.d_model);
    l.w_value = glorot(rng, c.d_model, c.d_model);
    l.w_out = glorot(rng, c.d_model, c.d_model);
    l.ln2_gain = Tensor<float>::full({c.d_model}, 1.0f, true);
    l.ln2_bias = Tensor<float>::zeros({c.d_model}, true);
    l.ff1_weight = glorot(rng, c.d_model, c.d_ff);
    l.ff1_bias = Tensor<float>::zeros({c.d_ff}, true);
    l.ff2_weight = glorot(rng, c.d_ff, c.d_model);
    l.ff2_bias = Tensor<float>::zeros({c.d_model}, true);
    return l;
}

template <typename T>
void append_layer(std::vector<NamedParam<T>>& out, const std::string& prefix, const EncoderLayerParams<T>& l) {
    out.push_back({prefix + ".ln1.gain", l.ln1_gain});
    out.push_back({prefix + ".ln1.bias", l.ln1_bias});
    out.push_back({prefix + ".attn.query", l.w_query});
    out.push_back({prefix + ".attn.key", l.w_key});
    out.push_back({prefix + ".attn.value", l.w_value});
    out.push_back({prefix + ".attn.out", l.w_out});
    out.push_back({prefix + ".ln2.gain", l.ln2_gain});
    out.push_back({prefix + ".ln2.bias", l.ln2_bias});
    out.push_back({prefix + ".ff1.weight", l.ff1_weight});
    out.push_back({prefix + ".ff1.bias", l.ff1_bias});
    out.push_back({prefix + ".ff2.weight", l.ff2_weight});
    out.push_back({prefix + ".ff2.bias", l.ff2_bias});
}

template <typename T>
Tensor<T> positional_tensor(const ModelConfig& c) {
    const auto table = sinusoidal_table(c.window + 1, c.d_model);
    return Tensor<T>({c.window + 1, c.d_model}, std::vector<T>(table.begin(), table.end()), false);
}

template <typename T>
Tensor<T> zeros_stream(std::size_t rows, std::size_t width) {
    return Tensor<T>::zeros({rows, width});
}

// Runs the temporal stack on stacked token rows [n·(window+1) × d_in] and
// returns each segment's last-token representation [n × d_model].
template <typename T>
Tensor<T> temporal_stack(const ModelParams<T>& p, const Tensor<T>& tokens, std::size_t n) {
    const auto& c = p.config;
    const std::size_t len = c.window + 1;
    auto x = linear(tokens, p.input_weight, p.input_bias);
    std::vector<T> pe(n * len * c.d_model);
    const auto table = p.positional.data();
    for (std::size_t s = 0; s < n; ++s) {
        std::copy(table.begin(), table.end(), pe.begin() + static_cast<std::ptrdiff_t>(s * table.size()));
    }
    x = add(x, Tensor<T>({n * len, c.d_model}, std::move(pe)));
    const std::vector<std::size_t> segments(n, len);
    for (const auto& layer : p.temporal) {
        x = encoder_layer(layer, x, segments, c.n_heads);
    }
    std::vector<std::size_t> last(n);
    for (std::size_t s = 0; s < n; ++s) {
        last[s] = s * len + c.window;
    }
    return gather_rows(x, last);
}

// Runs the contextual stack on stacked context rows; `tracks[r]` is the track
// id of row r (for the optional embedding) and `picks` selects output rows.
template <typename T>
Tensor<T> contextual_stack(const ModelParams<T>& p, const Tensor<T>& tokens, std::span<const std::size_t> segments,
                           std::span<const std::size_t> tracks, std::span<const std::size_t> picks) {
    const auto& c = p.config;
    auto x = linear(tokens, p.input_weight, p.input_bias);
    if (c.use_track_embedding) {
        x = add(x, gather_rows(p.track_embedding, tracks));
    }
    for (const auto& layer : p.contextual) {
        x = encoder_layer(layer, x, segments, c.n_heads);
    }
    return gather_rows(x, picks);
}

template <typename T>
Tensor<T> fusion_head(const ModelParams<T>& p, const Tensor<T>& t_repr, const Tensor<T>& c_repr) {
    auto z = concat(t_repr, c_repr, 1);
    auto h = gelu(linear(z, p.fuse1_weight, p.fuse1_bias));
    return linear(h, p.fuse2_weight, p.fuse2_bias);
}

void check_context(const ModelConfig& c, const Shape& shape, std::size_t track) {
    if (shape.size() != 2 || shape[1] != c.d_in) {
        throw DimensionError("context must be J x " + std::to_string(c.d_in) + ", got " + shape_to_string(shape));
    }
    if (shape[0] > c.max_tracks) {
        throw DimensionError("context has " + std::to_string(shape[0]) + " tracks, max_tracks is " +
                             std::to_string(c.max_tracks));
    }
    if (track >= shape[0]) {
        throw DimensionError("track index " + std::to_string(track) + " out of range for " +
                             std::to_string(shape[0]) + " tracks");
    }
}

}  // namespace

template <typename T>
std::vector<NamedParam<T>> ModelParams<T>::named() const {
    std::vector<NamedParam<T>> out;
    out.push_back({"input.weight", input_weight});
    out.push_back({"input.bias", input_bias});
    if (config.use_track_embedding) {
        out.push_back({"contextual.track_embedding", track_embedding});
    }
    for (std::size_t i = 0; i < temporal.size(); ++i) {
        append_layer(out, "temporal.layer" + std::to_string(i), temporal[i]);
    }
    for (std::size_t i = 0; i < contextual.size(); ++i) {
        append_layer(out, "contextual.layer" + std::to_string(i), contextual[i]);
    }
    out.push_back({"fuse1.weight", fuse1_weight});
    out.push_back({"fuse1.bias", fuse1_bias});
    out.push_back({"fuse2.weight", fuse2_weight});
    out.push_back({"fuse2.bias", fuse2_bias});
    return out;
}

template <typename T>
template <typename U>
ModelParams<U> ModelParams<T>::cast() const {
    auto cp = [](const Tensor<T>& t) { return t.defined() ? tensor_cast<T, U>(t, true) : Tensor<U>(); };
    auto cp_layer = [&cp](const EncoderLayerParams<T>& l) {
        return EncoderLayerParams<U>{cp(l.ln1_gain),   cp(l.ln1_bias),   cp(l.w_query),    cp(l.w_key),
                                     cp(l.w_value),    cp(l.w_out),      cp(l.ln2_gain),   cp(l.ln2_bias),
                                     cp(l.ff1_weight), cp(l.ff1_bias),   cp(l.ff2_weight), cp(l.ff2_bias)};
    };
    ModelParams<U> out;
    out.config = config;
    out.input_weight = cp(input_weight);
    out.input_bias = cp(input_bias);
    out.track_embedding = cp(track_embedding);
    for (const auto& l : temporal) {
        out.temporal.push_back(cp_layer(l));
    }
    for (const auto& l : contextual) {
        out.contextual.push_back(cp_layer(l));
    }
    out.fuse1_weight = cp(fuse1_weight);
    out.fuse1_bias = cp(fuse1_bias);
    out.fuse2_weight = cp(fuse2_weight);
    out.fuse2_bias = cp(fuse2_bias);
    out.positional = tensor_cast<T, U>(positional, false);
    return out;
}

ModelParams<float> init_params(const ModelConfig& config) {
    config.validate();
    Rng rng(config.seed);
    ModelParams<float> p;
    p.config = config;
    p.input_weight = glorot(rng, config.d_in, config.d_model);
    p.input_bias = Tensor<float>::zeros({config.d_model}, true);
    if (config.use_track_embedding) {
        p.track_embedding = glorot(rng, config.max_tracks, config.d_model);
    }
    for (std::size_t i = 0; i < config.n_layers_t; ++i) {
        p.temporal.push_back(init_layer(rng, config));
    }
    for (std::size_t i = 0; i < config.n_layers_c; ++i) {
        p.contextual.push_back(init_layer(rng, config));
    }
    p.fuse1_weight = glorot(rng, 2 * config.d_model, config.d_fuse);
    p.fuse1_bias = Tensor<float>::zeros({config.d_fuse}, true);
    p.fuse2_weight = glorot(rng, config.d_fuse, 1);
    p.fuse2_bias = Tensor<float>::zeros({1}, true);
    p.positional = positional_tensor<float>(config);
    return p;
}

ModelParams<float> params_from_named(const ModelConfig& config, std::vector<NamedParam<float>> tensors) {
    config.validate();
    // Shapes come from a freshly initialised model of the same config.
    ModelConfig shape_config = config;
    auto reference = init_params(shape_config);
    const auto expected = reference.named();
    if (tensors.size() != expected.size()) {
        throw FormatError("checkpoint holds " + std::to_string(tensors.size()) + " tensors, config needs " +
                          std::to_string(expected.size()));
    }
    std::map<std::string, Tensor<float>> by_name;
    for (auto& t : tensors) {
        if (!by_name.emplace(t.name, t.tensor).second) {
            throw FormatError("duplicate tensor '" + t.name + "'");
        }
    }
    for (const auto& e : expected) {
        auto it = by_name.find(e.name);
        if (it == by_name.end()) {
            throw FormatError("missing tensor '" + e.name + "'");
        }
        if (it->second.shape() != e.tensor.shape()) {
            throw FormatError("tensor '" + e.name + "' has shape " + shape_to_string(it->second.shape()) +
                              ", expected " + shape_to_string(e.tensor.shape()));
        }
        // Overwrite the reference values in place; named() handles alias the members.
        auto dst = Tensor<float>(e.tensor).mutable_data();
        const auto src = it->second.data();
        std::copy(src.begin(), src.end(), dst.begin());
    }
    return reference;
}

template <typename T>
Tensor<T> encoder_layer(const EncoderLayerParams<T>& layer, const Tensor<T>& x,
                        std::span<const std::size_t> segment_lengths, std::size_t n_heads) {
    auto h = layer_norm(x, layer.ln1_gain, layer.ln1_bias);
    auto q = matmul(h, layer.w_query);
    auto k = matmul(h, layer.w_key);
    auto v = matmul(h, layer.w_value);
    auto attended = segmented_attention(q, k, v, segment_lengths, n_heads);
    auto x1 = add(x, matmul(attended, layer.w_out));
    auto h2 = layer_norm(x1, layer.ln2_gain, layer.ln2_bias);
    auto ff = linear(gelu(linear(h2, layer.ff1_weight, layer.ff1_bias)), layer.ff2_weight, layer.ff2_bias);
    return add(x1, ff);
}

template <typename T>
Tensor<T> encode_temporal(const ModelParams<T>& params, const Tensor<T>& history, const Tensor<T>& candidate) {
    const auto& c = params.config;
    if (history.rank() != 2 || history.dim(0) != c.window || history.dim(1) != c.d_in) {
        throw DimensionError("history must be " + std::to_string(c.window) + " x " + std::to_string(c.d_in) +
                             ", got " + shape_to_string(history.shape()));
    }
    if (candidate.size() != c.d_in) {
        throw DimensionError("candidate must have " + std::to_string(c.d_in) + " features, got " +
                             shape_to_string(candidate.shape()));
    }
    auto tokens = concat(history, reshape(candidate, {1, c.d_in}), 0);
    return reshape(temporal_stack(params, tokens, 1), {c.d_model});
}

template <typename T>
Tensor<T> encode_contextual(const ModelParams<T>& params, const Tensor<T>& context, std::size_t track) {
    const auto& c = params.config;
    check_context(c, context.shape(), track);
    const std::size_t j_count = context.dim(0);
    std::vector<std::size_t> tracks(j_count);
    for (std::size_t j = 0; j < j_count; ++j) {
        tracks[j] = j;
    }
    const std::size_t segment[1] = {j_count};
    const std::size_t pick[1] = {track};
    return reshape(contextual_stack(params, context, segment, tracks, pick), {c.d_model});
}

template <typename T>
Tensor<T> fuse(const ModelParams<T>& params, const Tensor<T>& temporal_repr, const Tensor<T>& contextual_repr) {
    const std::size_t d = params.config.d_model;
    return reshape(fusion_head(params, reshape(temporal_repr, {1, d}), reshape(contextual_repr, {1, d})), {1});
}

template <typename T>
T predict_score(const ModelParams<T>& params, const Tensor<T>& history, const Tensor<T>& context,
                std::size_t track) {
    const auto& c = params.config;
    check_context(c, context.shape(), track);
    Tensor<T> t_repr;
    Tensor<T> c_repr;
    if (c.streams == StreamMode::contextual_only) {
        t_repr = Tensor<T>::zeros({c.d_model});
    } else {
        t_repr = encode_temporal(params, history, reshape(slice(context, 0, track, 1), {c.d_in}));
    }
    if (c.streams == StreamMode::temporal_only) {
        c_repr = Tensor<T>::zeros({c.d_model});
    } else {
        c_repr = encode_contextual(params, context, track);
    }
    return sigmoid(fuse(params, t_repr, c_repr)).item();
}

template <typename T>
Tensor<T> forward_logits(const ModelParams<T>& params, std::span<const Sample> samples) {
    const auto& c = params.config;
    if (samples.empty()) {
        throw std::invalid_argument("forward_logits: empty batch");
    }
    for (const auto& s : samples) {
        if (s.history.rank() != 2 || s.history.dim(0) != c.window || s.history.dim(1) != c.d_in) {
            throw DimensionError("sample history must be " + std::to_string(c.window) + " x " +
                                 std::to_string(c.d_in) + ", got " + shape_to_string(s.history.shape()));
        }
        check_context(c, s.context.shape(), s.track_index);
    }
    const std::size_t n = samples.size();
    const std::size_t len = c.window + 1;

    Tensor<T> t_repr;
    if (c.streams == StreamMode::contextual_only) {
        t_repr = zeros_stream<T>(n, c.d_model);
    } else {
        std::vector<T> tokens(n * len * c.d_in);
        for (std::size_t s = 0; s < n; ++s) {
            const auto hist = samples[s].history.data();
            const auto ctx = samples[s].context.data();
            T* dst = tokens.data() + s * len * c.d_in;
            std::copy(hist.begin(), hist.end(), dst);
            const auto cand = ctx.subspan(samples[s].track_index * c.d_in, c.d_in);
            std::copy(cand.begin(), cand.end(), dst + c.window * c.d_in);
        }
        t_repr = temporal_stack(params, Tensor<T>({n * len, c.d_in}, std::move(tokens)), n);
    }

    Tensor<T> c_repr;
    if (c.streams == StreamMode::temporal_only) {
        c_repr = zeros_stream<T>(n, c.d_model);
    } else {
        // Consecutive instances of one group share a context; encode it once.
        std::vector<T> tokens;
        std::vector<std::size_t> segments;
        std::vector<std::size_t> tracks;
        std::vector<std::size_t> picks(n);
        std::size_t offset = 0;
        const Sample* previous = nullptr;
        for (std::size_t s = 0; s < n; ++s) {
            const auto& ctx = samples[s].context;
            const bool same =
                previous != nullptr &&
                (previous->context.node() == ctx.node() ||
                 (previous->context.shape() == ctx.shape() &&
                  std::memcmp(previous->context.data().data(), ctx.data().data(), ctx.size() * sizeof(float)) == 0));
            if (!same) {
                if (previous != nullptr) {
                    offset += previous->context.dim(0);
                }
                tokens.insert(tokens.end(), ctx.data().begin(), ctx.data().end());
                segments.push_back(ctx.dim(0));
                for (std::size_t j = 0; j < ctx.dim(0); ++j) {
                    tracks.push_back(j);
                }
                previous = &samples[s];
            }
            picks[s] = offset + samples[s].track_index;
        }
        const std::size_t rows = tracks.size();
        c_repr = contextual_stack(params, Tensor<T>({rows, c.d_in}, std::move(tokens)), segments, tracks, picks);
    }
    return fusion_head(params, t_repr, c_repr);
}

template <typename T>
std::vector<ScoredInstance> forward_batch(const ModelParams<T>& params, std::span<const Sample> samples) {
    const auto probs = sigmoid(forward_logits(params, samples));
    std::vector<ScoredInstance> out(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        out[i].score = static_cast<double>(probs.data()[i]);
        out[i].label = samples[i].label;
    }
    return out;
}

template struct ModelParams<float>;
template struct ModelParams<double>;
template ModelParams<double> ModelParams<float>::cast<double>() const;
template ModelParams<float> ModelParams<float>::cast<float>() const;
template ModelParams<float> ModelParams<double>::cast<float>() const;
template ModelParams<double> ModelParams<double>::cast<double>() const;

#define TCEDIT_INSTANTIATE_MODEL(T)                                                                           \
    template Tensor<T> encoder_layer(const EncoderLayerParams<T>&, const Tensor<T>&,                          \
                                     std::span<const std::size_t>, std::size_t);                              \
    template Tensor<T> encode_temporal(const ModelParams<T>&, const Tensor<T>&, const Tensor<T>&);            \
    template Tensor<T> encode_contextual(const ModelParams<T>&, const Tensor<T>&, std::size_t);               \
    template Tensor<T> fuse(const ModelParams<T>&, const Tensor<T>&, const Tensor<T>&);                       \
    template T predict_score(const ModelParams<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t);         \
    template Tensor<T> forward_logits(const ModelParams<T>&, std::span<const Sample>);                        \
    template std::vector<ScoredInstance> forward_batch(const ModelParams<T>&, std::span<const Sample>);

TCEDIT_INSTANTIATE_MODEL(float)
TCEDIT_INSTANTIATE_MODEL(double)

#undef TCEDIT_INSTANTIATE_MODEL

}  // namespace tcedit
