#include "tcedit/config.hpp"

#include <functional>
#include <map>

#include "tcedit/error.hpp"
#include "tcedit/io.hpp"

namespace tcedit {

namespace {

using nlohmann::json;
using Setter = std::function<void(const json&)>;
using Section = std::map<std::string, Setter>;

struct TypeMismatch {
    const char* expected;
};

Setter count_field(std::size_t& field) {
    return [&field](const json& v) {
        if (!v.is_number_unsigned()) {
            throw TypeMismatch{"a non-negative integer"};
        }
        field = v.get<std::size_t>();
    };
}

Setter seed_field(std::uint64_t& field) {
    return [&field](const json& v) {
        if (!v.is_number_unsigned()) {
            throw TypeMismatch{"a non-negative integer"};
        }
        field = v.get<std::uint64_t>();
    };
}

Setter real_field(double& field) {
    return [&field](const json& v) {
        if (!v.is_number()) {
            throw TypeMismatch{"a number"};
        }
        field = v.get<double>();
    };
}

Setter flag_field(bool& field) {
    return [&field](const json& v) {
        if (!v.is_boolean()) {
            throw TypeMismatch{"true or false"};
        }
        field = v.get<bool>();
    };
}

Setter streams_field(StreamMode& field) {
    return [&field](const json& v) {
        if (!v.is_string()) {
            throw TypeMismatch{"one of joint, contextual_only, temporal_only"};
        }
        try {
            field = stream_mode_from_string(v.get<std::string>());
        } catch (const std::invalid_argument&) {
            throw TypeMismatch{"one of joint, contextual_only, temporal_only"};
        }
    };
}

std::map<std::string, Section> sections(RunConfig& c) {
    std::map<std::string, Section> s;
    auto& m = c.model;
    s["model"] = {{"d_in", count_field(m.d_in)},
                  {"d_model", count_field(m.d_model)},
                  {"n_heads", count_field(m.n_heads)},
                  {"n_layers_t", count_field(m.n_layers_t)},
                  {"n_layers_c", count_field(m.n_layers_c)},
                  {"window", count_field(m.window)},
                  {"d_ff", count_field(m.d_ff)},
                  {"d_fuse", count_field(m.d_fuse)},
                  {"use_track_embedding", flag_field(m.use_track_embedding)},
                  {"max_tracks", count_field(m.max_tracks)},
                  {"seed", seed_field(m.seed)},
                  {"streams", streams_field(m.streams)}};
    auto& t = c.train;
    s["train"] = {{"learning_rate", real_field(t.learning_rate)},
                  {"beta1", real_field(t.beta1)},
                  {"beta2", real_field(t.beta2)},
                  {"adam_eps", real_field(t.adam_eps)},
                  {"batch_size", count_field(t.batch_size)},
                  {"epochs", count_field(t.epochs)},
                  {"seed", seed_field(t.seed)},
                  {"step", count_field(t.step)},
                  {"groups_per_boundary", count_field(t.groups_per_boundary)}};
    auto& g = c.generator.spec;
    s["generator"] = {{"tracks", count_field(g.tracks)},
                      {"width", count_field(g.width)},
                      {"duration_frames", count_field(g.duration_frames)},
                      {"fps", real_field(g.fps)},
                      {"min_shot_frames", count_field(g.min_shot_frames)},
                      {"switch_margin", real_field(g.switch_margin)},
                      {"smoothness", real_field(g.smoothness)},
                      {"noise", real_field(g.noise)},
                      {"seed", seed_field(g.seed)},
                      {"rule_seed", seed_field(g.rule_seed)},
                      {"count", count_field(c.generator.count)}};
    s["eval"] = {{"step", count_field(c.eval.step)},
                 {"groups_per_boundary", count_field(c.eval.groups_per_boundary)},
                 {"baseline_seed", seed_field(c.eval.baseline_seed)}};
    s["edit"] = {{"decision_stride", count_field(c.edit.decision_stride)},
                 {"min_shot_frames", count_field(c.edit.min_shot_frames)}};
    return s;
}

void assign(std::map<std::string, Section>& s, const std::string& section, const std::string& key, const json& value,
            std::vector<std::string>& problems) {
    const auto sec = s.find(section);
    if (sec == s.end()) {
        problems.push_back("unknown section '" + section + "'");
        return;
    }
    const auto field = sec->second.find(key);
    if (field == sec->second.end()) {
        problems.push_back("unknown key '" + section + "." + key + "'");
        return;
    }
    try {
        field->second(value);
    } catch (const TypeMismatch& e) {
        problems.push_back(section + "." + key + " must be " + e.expected + ", got " + value.dump());
    }
}

void prefixed(std::vector<std::string>& out, const std::string& prefix, const std::vector<std::string>& problems) {
    for (const auto& p : problems) {
        out.push_back(prefix + "." + p);
    }
}

}  // namespace

std::vector<std::string> RunConfig::problems() const {
    std::vector<std::string> out;
    prefixed(out, "model", model.problems());
    prefixed(out, "train", train.problems());
    prefixed(out, "generator", generator.spec.problems());
    if (generator.count < 1) {
        out.push_back("generator.count must be >= 1");
    }
    if (eval.step < 1) {
        out.push_back("eval.step must be >= 1");
    }
    if (eval.groups_per_boundary < 1) {
        out.push_back("eval.groups_per_boundary must be >= 1");
    }
    if (edit.decision_stride < 1) {
        out.push_back("edit.decision_stride must be >= 1");
    }
    if (generator.spec.width != model.d_in) {
        out.push_back("generator.width (" + std::to_string(generator.spec.width) + ") must equal model.d_in (" +
                      std::to_string(model.d_in) + ")");
    }
    if (generator.spec.tracks > model.max_tracks) {
        out.push_back("generator.tracks (" + std::to_string(generator.spec.tracks) + ") exceeds model.max_tracks (" +
                      std::to_string(model.max_tracks) + ")");
    }
    return out;
}

void RunConfig::validate() const {
    auto p = problems();
    if (!p.empty()) {
        throw ConfigError(std::move(p));
    }
}

RunConfig apply_config_json(RunConfig base, const nlohmann::json& j) {
    if (!j.is_object()) {
        throw ConfigError({"config document must be an object"});
    }
    auto s = sections(base);
    std::vector<std::string> problems;
    for (const auto& [section, body] : j.items()) {
        if (!s.contains(section)) {
            problems.push_back("unknown section '" + section + "'");
            continue;
        }
        if (!body.is_object()) {
            problems.push_back("section '" + section + "' must be an object");
            continue;
        }
        for (const auto& [key, value] : body.items()) {
            assign(s, section, key, value, problems);
        }
    }
    if (!problems.empty()) {
        throw ConfigError(std::move(problems));
    }
    return base;
}

RunConfig load_run_config(const std::filesystem::path& path, RunConfig base) {
    json j;
    try {
        j = json::parse(read_text_file(path));
    } catch (const json::parse_error& e) {
        throw ConfigError({"config '" + path.string() + "': " + e.what()});
    }
    return apply_config_json(std::move(base), j);
}

RunConfig apply_overrides(RunConfig base, const std::vector<std::string>& assignments) {
    auto s = sections(base);
    std::vector<std::string> problems;
    for (const auto& a : assignments) {
        const auto eq = a.find('=');
        const auto dot = a.find('.');
        if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
            problems.push_back("override '" + a + "' is not of the form section.key=value");
            continue;
        }
        const std::string text = a.substr(eq + 1);
        json value = json::parse(text, nullptr, false);
        if (value.is_discarded()) {
            value = text;
        }
        assign(s, a.substr(0, dot), a.substr(dot + 1, eq - dot - 1), value, problems);
    }
    if (!problems.empty()) {
        throw ConfigError(std::move(problems));
    }
    return base;
}

nlohmann::json run_config_to_json(const RunConfig& c) {
    const auto& g = c.generator.spec;
    const auto& t = c.train;
    return {{"model", c.model},
            {"train",
             {{"learning_rate", t.learning_rate},
              {"beta1", t.beta1},
              {"beta2", t.beta2},
              {"adam_eps", t.adam_eps},
              {"batch_size", t.batch_size},
              {"epochs", t.epochs},
              {"seed", t.seed},
              {"step", t.step},
              {"groups_per_boundary", t.groups_per_boundary}}},
            {"generator",
             {{"tracks", g.tracks},
              {"width", g.width},
              {"duration_frames", g.duration_frames},
              {"fps", g.fps},
              {"min_shot_frames", g.min_shot_frames},
              {"switch_margin", g.switch_margin},
              {"smoothness", g.smoothness},
              {"noise", g.noise},
              {"seed", g.seed},
              {"rule_seed", g.rule_seed},
              {"count", c.generator.count}}},
            {"eval",
             {{"step", c.eval.step},
              {"groups_per_boundary", c.eval.groups_per_boundary},
              {"baseline_seed", c.eval.baseline_seed}}},
            {"edit", {{"decision_stride", c.edit.decision_stride}, {"min_shot_frames", c.edit.min_shot_frames}}}};
}

}  // namespace tcedit
