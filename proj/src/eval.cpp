#include "tcedit/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "tcedit/error.hpp"
#include "tcedit/rng.hpp"

namespace tcedit {

namespace {

void require_equal_lengths(const char* op, std::size_t a, std::size_t b) {
    if (a != b) {
        throw std::invalid_argument(std::string(op) + ": " + std::to_string(a) + " scores vs " + std::to_string(b) +
                                    " labels");
    }
}

void validate_group(const ScoredGroup& g, std::size_t index) {
    if (g.scores.empty() || g.scores.size() != g.labels.size()) {
        throw std::invalid_argument("group " + std::to_string(index) + " is malformed: " +
                                    std::to_string(g.scores.size()) + " scores, " + std::to_string(g.labels.size()) +
                                    " labels");
    }
    const auto positives = std::count(g.labels.begin(), g.labels.end(), 1);
    if (positives != 1) {
        throw std::invalid_argument("group " + std::to_string(index) + " has " + std::to_string(positives) +
                                    " positives, expected exactly 1");
    }
}

}  // namespace

double precision_at(std::span<const double> scores, std::span<const int> labels, double tau,
                    bool* no_predicted_positive) {
    require_equal_lengths("precision_at", scores.size(), labels.size());
    std::size_t tp = 0;
    std::size_t predicted = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (scores[i] >= tau) {
            ++predicted;
            tp += labels[i] == 1 ? 1 : 0;
        }
    }
    if (no_predicted_positive != nullptr) {
        *no_predicted_positive = predicted == 0;
    }
    if (predicted == 0) {
        return 0.0;
    }
    return 100.0 * static_cast<double>(tp) / static_cast<double>(predicted);
}

double average_precision(std::span<const double> scores, std::span<const int> labels) {
    require_equal_lengths("average_precision", scores.size(), labels.size());
    const auto positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
    if (positives == 0) {
        throw std::invalid_argument("average_precision: no positive labels");
    }
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    double total = 0.0;
    std::size_t tp = 0;
    for (std::size_t rank = 0; rank < order.size(); ++rank) {
        if (labels[order[rank]] == 1) {
            ++tp;
            total += static_cast<double>(tp) / static_cast<double>(rank + 1);
        }
    }
    return 100.0 * total / static_cast<double>(positives);
}

double track_accuracy(std::span<const ScoredGroup> groups) {
    if (groups.empty()) {
        throw std::invalid_argument("track_accuracy: no groups");
    }
    std::size_t hits = 0;
    for (std::size_t g = 0; g < groups.size(); ++g) {
        validate_group(groups[g], g);
        const auto& scores = groups[g].scores;
        const auto best = static_cast<std::size_t>(std::max_element(scores.begin(), scores.end()) - scores.begin());
        hits += groups[g].labels[best] == 1 ? 1 : 0;
    }
    return 100.0 * static_cast<double>(hits) / static_cast<double>(groups.size());
}

EvalReport report_from_groups(std::span<const ScoredGroup> groups) {
    std::vector<double> scores;
    std::vector<int> labels;
    for (std::size_t g = 0; g < groups.size(); ++g) {
        validate_group(groups[g], g);
        scores.insert(scores.end(), groups[g].scores.begin(), groups[g].scores.end());
        labels.insert(labels.end(), groups[g].labels.begin(), groups[g].labels.end());
    }
    EvalReport r;
    r.precision_at_half = precision_at(scores, labels, 0.5, &r.no_predicted_positive);
    r.average_precision = average_precision(scores, labels);
    r.track_accuracy = track_accuracy(groups);
    r.instance_count = scores.size();
    r.group_count = groups.size();
    r.positives_count = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
    return r;
}

std::vector<ScoredGroup> score_groups(const ModelParams<float>& params, const SampleSet& samples,
                                      std::size_t groups_per_batch) {
    std::vector<ScoredGroup> out;
    out.reserve(samples.group_count());
    const std::size_t step = std::max<std::size_t>(1, groups_per_batch);
    for (std::size_t first = 0; first < samples.group_count(); first += step) {
        const std::size_t last = std::min(samples.group_count(), first + step);
        const std::size_t begin = samples.group_offsets[first];
        const std::size_t end = samples.group_offsets[last];
        const auto scored = forward_batch(params, std::span<const Sample>(samples.samples).subspan(begin, end - begin));
        for (std::size_t g = first; g < last; ++g) {
            ScoredGroup group;
            for (std::size_t i = samples.group_offsets[g]; i < samples.group_offsets[g + 1]; ++i) {
                group.scores.push_back(scored[i - begin].score);
                group.labels.push_back(scored[i - begin].label);
            }
            out.push_back(std::move(group));
        }
    }
    return out;
}

std::vector<ScoredGroup> label_groups(const SampleSet& samples) {
    std::vector<ScoredGroup> out;
    out.reserve(samples.group_count());
    for (std::size_t g = 0; g < samples.group_count(); ++g) {
        ScoredGroup group;
        for (const auto& s : samples.group(g)) {
            group.scores.push_back(0.0);
            group.labels.push_back(s.label);
        }
        out.push_back(std::move(group));
    }
    return out;
}

EvalReport evaluate(const ModelParams<float>& params, std::span<const Scene> scenes, const SamplingConfig& sampling) {
    if (scenes.empty()) {
        throw std::invalid_argument("evaluate: no test scenes");
    }
    for (const auto& s : scenes) {
        if (s.pool.width != params.config.d_in) {
            throw DimensionError("evaluate: scene '" + s.id + "' has feature width " + std::to_string(s.pool.width) +
                                 ", model expects " + std::to_string(params.config.d_in));
        }
    }
    const auto samples = generate_scene_samples(scenes, sampling);
    if (samples.group_count() == 0) {
        throw std::invalid_argument("evaluate: test scenes produced no boundary samples");
    }
    return report_from_groups(score_groups(params, samples));
}

EvalReport random_baseline(std::span<const ScoredGroup> groups, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<ScoredGroup> scored(groups.begin(), groups.end());
    for (auto& g : scored) {
        for (auto& s : g.scores) {
            s = rng.uniform();
        }
    }
    return report_from_groups(scored);
}

nlohmann::json report_to_json(const EvalReport& report) {
    nlohmann::json j{{"precision_at_half", report.precision_at_half},
                     {"average_precision", report.average_precision},
                     {"track_accuracy", report.track_accuracy},
                     {"instance_count", report.instance_count},
                     {"group_count", report.group_count},
                     {"positives_count", report.positives_count}};
    if (report.no_predicted_positive) {
        j["warnings"] = nlohmann::json::array({"no instance scored >= 0.5; precision reported as 0"});
    }
    return j;
}

EvalReport report_from_json(const nlohmann::json& j) {
    EvalReport r;
    r.precision_at_half = j.at("precision_at_half").get<double>();
    r.average_precision = j.at("average_precision").get<double>();
    r.track_accuracy = j.at("track_accuracy").get<double>();
    r.instance_count = j.at("instance_count").get<std::size_t>();
    r.group_count = j.at("group_count").get<std::size_t>();
    r.positives_count = j.at("positives_count").get<std::size_t>();
    r.no_predicted_positive = j.contains("warnings");
    return r;
}

std::string format_report_table(std::span<const std::pair<std::string, EvalReport>> rows) {
    std::size_t name_width = 6;
    for (const auto& [name, _] : rows) {
        name_width = std::max(name_width, name.size());
    }
    std::ostringstream os;
    char line[256];
    std::snprintf(line, sizeof(line), "%-*s | %12s | %8s | %12s\n", static_cast<int>(name_width), "Method",
                  "Precision(%)", "AP(%)", "TrackAcc(%)");
    os << line << std::string(name_width + 43, '-') << '\n';
    for (const auto& [name, r] : rows) {
        std::snprintf(line, sizeof(line), "%-*s | %12.2f | %8.2f | %12.2f\n", static_cast<int>(name_width),
                      name.c_str(), r.precision_at_half, r.average_precision, r.track_accuracy);
        os << line;
    }
    return os.str();
}

}  // namespace tcedit
