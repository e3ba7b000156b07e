#include "tcedit/io.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "tcedit/error.hpp"

namespace tcedit {

namespace {

constexpr std::size_t kMaxHeaderBytes = 1 << 20;

void write_magic_and_header(std::ostream& out, std::string_view magic, const nlohmann::json& header) {
    out.write(magic.data(), static_cast<std::streamsize>(magic.size()));
    out.put('\n');
    const std::string text = header.dump();
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    out.put('\n');
}

nlohmann::json read_magic_and_header(std::istream& in, std::string_view magic, const char* what) {
    std::string got(magic.size(), '\0');
    in.read(got.data(), static_cast<std::streamsize>(got.size()));
    if (!in || got != magic || in.get() != '\n') {
        throw FormatError(std::string(what) + ": bad magic, expected '" + std::string(magic) + "'");
    }
    std::string line;
    char c = 0;
    while (in.get(c) && c != '\n') {
        line.push_back(c);
        if (line.size() > kMaxHeaderBytes) {
            throw FormatError(std::string(what) + ": header line too long");
        }
    }
    if (c != '\n') {
        throw FormatError(std::string(what) + ": truncated header");
    }
    try {
        return nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string(what) + ": malformed header: " + e.what());
    }
}

template <typename T>
T header_field(const nlohmann::json& header, const char* key, const char* what) {
    if (!header.contains(key)) {
        throw FormatError(std::string(what) + ": header lacks '" + key + "'");
    }
    try {
        return header.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw FormatError(std::string(what) + ": header field '" + key + "' has the wrong type");
    }
}

std::size_t header_count(const nlohmann::json& header, const char* key, const char* what) {
    const auto& v = header.contains(key) ? header.at(key) : nlohmann::json();
    if (!v.is_number_unsigned()) {
        throw FormatError(std::string(what) + ": header field '" + key + "' must be a non-negative integer");
    }
    return v.get<std::size_t>();
}

void write_f32(std::ostream& out, std::span<const float> values) {
    std::vector<char> buf(values.size() * 4);
    for (std::size_t i = 0; i < values.size(); ++i) {
        const auto bits = std::bit_cast<std::uint32_t>(values[i]);
        for (int b = 0; b < 4; ++b) {
            buf[i * 4 + b] = static_cast<char>((bits >> (8 * b)) & 0xFFu);
        }
    }
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

void read_exact(std::istream& in, std::vector<unsigned char>& buf, std::size_t bytes, const char* what) {
    buf.resize(bytes);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(bytes));
    if (static_cast<std::size_t>(in.gcount()) != bytes) {
        throw FormatError(std::string(what) + ": truncated payload, expected " + std::to_string(bytes) +
                          " bytes, got " + std::to_string(in.gcount()));
    }
}

void read_f32(std::istream& in, std::span<float> values, const char* what) {
    std::vector<unsigned char> buf;
    read_exact(in, buf, values.size() * 4, what);
    for (std::size_t i = 0; i < values.size(); ++i) {
        std::uint32_t bits = 0;
        for (int b = 0; b < 4; ++b) {
            bits |= static_cast<std::uint32_t>(buf[i * 4 + b]) << (8 * b);
        }
        values[i] = std::bit_cast<float>(bits);
    }
}

void expect_end(std::istream& in, const char* what) {
    if (in.peek() != std::char_traits<char>::eof()) {
        throw FormatError(std::string(what) + ": trailing bytes after payload");
    }
}

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    }
    return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open '" + path.string() + "' for reading");
    }
    return in;
}

void finish(std::ostream& out, const std::filesystem::path& path) {
    out.flush();
    if (!out) {
        throw std::runtime_error("failed writing '" + path.string() + "'");
    }
}

}  // namespace

void write_pool(std::ostream& out, const FeaturePool& pool) {
    pool.validate();
    write_magic_and_header(out, kPoolMagic,
                           {{"I", pool.frames}, {"J", pool.tracks}, {"d", pool.width}, {"fps", pool.fps}});
    write_f32(out, pool.features);
}

FeaturePool read_pool(std::istream& in) {
    constexpr const char* what = "pool file";
    const auto header = read_magic_and_header(in, kPoolMagic, what);
    const auto frames = header_count(header, "I", what);
    const auto tracks = header_count(header, "J", what);
    const auto width = header_count(header, "d", what);
    const auto fps = header_field<double>(header, "fps", what);
    if (frames < 1 || tracks < 1 || width < 1) {
        throw FormatError("pool file: dimensions must be >= 1");
    }
    if (frames > (std::size_t{1} << 40) / (tracks * width)) {
        throw FormatError("pool file: implausibly large dimensions");
    }
    FeaturePool pool(frames, tracks, width, fps);
    read_f32(in, pool.features, what);
    expect_end(in, what);
    pool.validate();
    return pool;
}

void save_pool(const std::filesystem::path& path, const FeaturePool& pool) {
    auto out = open_out(path);
    write_pool(out, pool);
    finish(out, path);
}

FeaturePool load_pool(const std::filesystem::path& path) {
    auto in = open_in(path);
    return read_pool(in);
}

void write_annotation(std::ostream& out, const EditAnnotation& annotation) {
    annotation.validate();
    write_magic_and_header(out, kAnnotationMagic, {{"I", annotation.frames()}, {"J", annotation.tracks}});
    std::vector<char> buf(annotation.selected.size() * 2);
    for (std::size_t i = 0; i < annotation.selected.size(); ++i) {
        buf[2 * i] = static_cast<char>(annotation.selected[i] & 0xFFu);
        buf[2 * i + 1] = static_cast<char>((annotation.selected[i] >> 8) & 0xFFu);
    }
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

EditAnnotation read_annotation(std::istream& in) {
    constexpr const char* what = "annotation file";
    const auto header = read_magic_and_header(in, kAnnotationMagic, what);
    const auto frames = header_count(header, "I", what);
    const auto tracks = header_count(header, "J", what);
    if (frames < 1 || tracks < 1) {
        throw FormatError("annotation file: I and J must be >= 1");
    }
    if (frames > (std::size_t{1} << 40)) {
        throw FormatError("annotation file: implausibly large frame count");
    }
    std::vector<unsigned char> buf;
    read_exact(in, buf, frames * 2, what);
    expect_end(in, what);
    EditAnnotation ann;
    ann.tracks = tracks;
    ann.selected.resize(frames);
    for (std::size_t i = 0; i < frames; ++i) {
        ann.selected[i] = static_cast<TrackIndex>(buf[2 * i] | (buf[2 * i + 1] << 8));
    }
    ann.validate();
    return ann;
}

void save_annotation(const std::filesystem::path& path, const EditAnnotation& annotation) {
    auto out = open_out(path);
    write_annotation(out, annotation);
    finish(out, path);
}

EditAnnotation load_annotation(const std::filesystem::path& path) {
    auto in = open_in(path);
    return read_annotation(in);
}

void save_scene(const std::filesystem::path& prefix, const Scene& scene) {
    save_pool(prefix.string() + ".pool", scene.pool);
    save_annotation(prefix.string() + ".ann", scene.annotation);
}

Scene load_scene(const std::filesystem::path& prefix) {
    Scene scene;
    scene.id = prefix.filename().string();
    try {
        scene.pool = load_pool(prefix.string() + ".pool");
        scene.annotation = load_annotation(prefix.string() + ".ann");
        scene.annotation.validate_against(scene.pool);
    } catch (const FormatError& e) {
        throw FormatError("scene '" + prefix.string() + "': " + e.what());
    }
    return scene;
}

nlohmann::json shots_to_json(std::span<const Shot> shots) {
    auto arr = nlohmann::json::array();
    for (const auto& s : shots) {
        arr.push_back({{"start", s.start}, {"end", s.end}, {"track", s.track}});
    }
    return arr;
}

std::vector<Shot> shots_from_json(const nlohmann::json& j) {
    if (!j.is_array()) {
        throw FormatError("shot list must be a JSON array");
    }
    std::vector<Shot> shots;
    for (const auto& item : j) {
        constexpr const char* what = "shot";
        shots.push_back({header_count(item, "start", what), header_count(item, "end", what),
                         header_count(item, "track", what)});
    }
    return shots;
}

void write_checkpoint(std::ostream& out, const ModelParams<float>& params) {
    const auto tensors = params.named();
    auto directory = nlohmann::json::array();
    for (const auto& t : tensors) {
        directory.push_back({{"name", t.name}, {"shape", t.tensor.shape()}});
    }
    write_magic_and_header(out, kCheckpointMagic, {{"config", params.config}, {"tensors", directory}});
    for (const auto& t : tensors) {
        write_f32(out, t.tensor.data());
    }
}

ModelParams<float> read_checkpoint(std::istream& in) {
    constexpr const char* what = "checkpoint";
    const auto header = read_magic_and_header(in, kCheckpointMagic, what);
    ModelConfig config;
    try {
        config = header.at("config").get<ModelConfig>();
    } catch (const std::exception& e) {
        throw FormatError(std::string("checkpoint: bad config: ") + e.what());
    }
    try {
        config.validate();
    } catch (const ConfigError& e) {
        throw FormatError(std::string("checkpoint: invalid config: ") + e.what());
    }
    if (!header.contains("tensors") || !header.at("tensors").is_array()) {
        throw FormatError("checkpoint: header lacks a tensor directory");
    }
    std::vector<NamedParam<float>> tensors;
    for (const auto& entry : header.at("tensors")) {
        const auto name = header_field<std::string>(entry, "name", what);
        const auto shape = header_field<Shape>(entry, "shape", what);
        if (shape.empty() || shape_numel(shape) == 0 || shape_numel(shape) > (std::size_t{1} << 32)) {
            throw FormatError("checkpoint: tensor '" + name + "' has invalid shape");
        }
        std::vector<float> values(shape_numel(shape));
        read_f32(in, values, what);
        tensors.push_back({name, Tensor<float>(shape, std::move(values), true)});
    }
    expect_end(in, what);
    return params_from_named(config, std::move(tensors));
}

void save_checkpoint(const std::filesystem::path& path, const ModelParams<float>& params) {
    auto out = open_out(path);
    write_checkpoint(out, params);
    finish(out, path);
}

ModelParams<float> load_checkpoint(const std::filesystem::path& path) {
    auto in = open_in(path);
    return read_checkpoint(in);
}

std::string read_text_file(const std::filesystem::path& path) {
    auto in = open_in(path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    auto out = open_out(path);
    out << text;
    finish(out, path);
}

}  // namespace tcedit
