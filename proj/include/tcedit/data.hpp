#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "tcedit/rng.hpp"

namespace tcedit {

using TrackIndex = std::uint16_t;

// Per-frame, per-track feature vectors, stored [frame][track][feature].
struct FeaturePool {
    std::size_t frames = 0;
    std::size_t tracks = 0;
    std::size_t width = 0;
    double fps = 24.0;
    std::vector<float> features;

    FeaturePool() = default;
    FeaturePool(std::size_t frames, std::size_t tracks, std::size_t width, double fps);

    std::span<const float> at(std::size_t frame, std::size_t track) const {
        return {features.data() + (frame * tracks + track) * width, width};
    }
    std::span<float> at(std::size_t frame, std::size_t track) {
        return {features.data() + (frame * tracks + track) * width, width};
    }
    // All tracks of one frame, tracks × width.
    std::span<const float> frame(std::size_t frame) const {
        return {features.data() + frame * tracks * width, tracks * width};
    }

    // Throws FormatError on a violated invariant.
    void validate() const;

    bool operator==(const FeaturePool&) const = default;
};

// Ground-truth selected track per frame.
struct EditAnnotation {
    std::size_t tracks = 0;
    std::vector<TrackIndex> selected;

    std::size_t frames() const { return selected.size(); }
    void validate() const;
    // Also checks frame and track counts against the pool.
    void validate_against(const FeaturePool& pool) const;

    bool operator==(const EditAnnotation&) const = default;
};

// Frames [start, end) taken from one track.
struct Shot {
    std::size_t start = 0;
    std::size_t end = 0;
    std::size_t track = 0;

    std::size_t length() const { return end - start; }
    bool operator==(const Shot&) const = default;
};

std::vector<Shot> shots_from_annotation(const EditAnnotation& annotation);

// Exact inverse of shots_from_annotation. Throws std::invalid_argument naming
// the first boundary that leaves a gap, overlaps, or fails to cover [0, frames).
EditAnnotation annotation_from_shots(std::span<const Shot> shots, std::size_t frames, std::size_t tracks);

// Shot starts, including frame 0.
std::vector<std::size_t> shot_boundaries(const EditAnnotation& annotation);

struct SyntheticSpec {
    std::size_t tracks = 6;
    std::size_t width = 16;
    std::size_t duration_frames = 60 * 24;
    double fps = 24.0;
    std::size_t min_shot_frames = 24;
    double switch_margin = 0.5;
    double smoothness = 0.99;
    double noise = 0.2;
    std::uint64_t seed = 0;       // feature walks
    std::uint64_t rule_seed = 0;  // hidden rule vector, shared by every scene of a show

    std::vector<std::string> problems() const;
    void validate() const;
};

struct SyntheticShow {
    FeaturePool pool;
    EditAnnotation annotation;
    std::vector<double> content_scores;  // frames × tracks, u · v
    std::vector<double> rule;            // hidden unit vector u, from rule_seed
};

// Autoregressive per-track feature walks plus a simulated director that holds
// the incumbent until the shot is long enough and a challenger beats it by
// the switch margin, then cuts to the best-scoring track.
SyntheticShow generate_synthetic_show(const SyntheticSpec& spec);

struct Scene {
    std::string id;
    FeaturePool pool;
    EditAnnotation annotation;
};

// Number of scenes kept for training out of `count` (4:1, at least one held out).
std::size_t train_split_count(std::size_t count);

// Seeded shuffle, then the first ceil(0.8 n) scenes train and the rest test.
template <typename Item>
std::pair<std::vector<Item>, std::vector<Item>> split_scenes(std::vector<Item> scenes, std::uint64_t seed) {
    if (scenes.size() < 2) {
        throw std::invalid_argument("split_scenes needs at least 2 scenes, got " + std::to_string(scenes.size()));
    }
    Rng rng(seed);
    rng.shuffle(std::span<Item>(scenes));
    const std::size_t n_train = train_split_count(scenes.size());
    std::vector<Item> test(std::make_move_iterator(scenes.begin() + static_cast<std::ptrdiff_t>(n_train)),
                           std::make_move_iterator(scenes.end()));
    scenes.resize(n_train);
    return {std::move(scenes), std::move(test)};
}

// Median of shot lengths in frames.
double median_shot_frames(std::span<const Shot> shots);

}  // namespace tcedit
