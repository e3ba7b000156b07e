#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tcedit/data.hpp"
#include "tcedit/model.hpp"
#include "tcedit/training.hpp"

namespace tcedit {

// TP / (TP + FP) × 100 over instances with score >= tau. With no predicted
// positives the result is 0 and *no_predicted_positive is set.
double precision_at(std::span<const double> scores, std::span<const int> labels, double tau = 0.5,
                    bool* no_predicted_positive = nullptr);

// Σ (R_n − R_{n−1}) · P_n × 100 down the descending-score ranking; ties keep
// their original order. Throws without positives.
double average_precision(std::span<const double> scores, std::span<const int> labels);

// The J candidates of one (scene, frame), exactly one labelled positive.
struct ScoredGroup {
    std::vector<double> scores;
    std::vector<int> labels;
};

// Share of groups whose top score (lowest index on ties) is the positive, × 100.
double track_accuracy(std::span<const ScoredGroup> groups);

struct EvalReport {
    double precision_at_half = 0.0;
    double average_precision = 0.0;
    double track_accuracy = 0.0;
    std::size_t instance_count = 0;
    std::size_t group_count = 0;
    std::size_t positives_count = 0;
    bool no_predicted_positive = false;

    bool operator==(const EvalReport&) const = default;
};

EvalReport report_from_groups(std::span<const ScoredGroup> groups);

// Model scores for every group of a sample set, in group order.
std::vector<ScoredGroup> score_groups(const ModelParams<float>& params, const SampleSet& samples,
                                      std::size_t groups_per_batch = 64);

// Label-only groups (scores zeroed) for baselines.
std::vector<ScoredGroup> label_groups(const SampleSet& samples);

// Boundary-centric test groups with teacher-forced histories, as in training.
EvalReport evaluate(const ModelParams<float>& params, std::span<const Scene> scenes, const SamplingConfig& sampling);

// Uniform [0, 1) scores from a seeded generator.
EvalReport random_baseline(std::span<const ScoredGroup> groups, std::uint64_t seed);

nlohmann::json report_to_json(const EvalReport& report);
EvalReport report_from_json(const nlohmann::json& j);

// Method | Precision(%) | AP(%) | TrackAcc(%) table.
std::string format_report_table(std::span<const std::pair<std::string, EvalReport>> rows);

}  // namespace tcedit
