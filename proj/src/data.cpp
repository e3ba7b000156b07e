#include "tcedit/data.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "tcedit/error.hpp"

namespace tcedit {

FeaturePool::FeaturePool(std::size_t frames, std::size_t tracks, std::size_t width, double fps)
    : frames(frames), tracks(tracks), width(width), fps(fps), features(frames * tracks * width, 0.0f) {}

void FeaturePool::validate() const {
    if (frames < 1 || tracks < 1 || width < 1) {
        throw FormatError("feature pool dimensions must be >= 1, got I=" + std::to_string(frames) +
                          " J=" + std::to_string(tracks) + " d=" + std::to_string(width));
    }
    if (!(fps > 0.0) || !std::isfinite(fps)) {
        throw FormatError("feature pool fps must be positive");
    }
    if (features.size() != frames * tracks * width) {
        throw FormatError("feature pool holds " + std::to_string(features.size()) + " values, expected " +
                          std::to_string(frames * tracks * width));
    }
    for (std::size_t i = 0; i < features.size(); ++i) {
        if (!std::isfinite(features[i])) {
            throw FormatError("feature pool value " + std::to_string(i) + " is not finite");
        }
    }
}

void EditAnnotation::validate() const {
    if (tracks < 1) {
        throw FormatError("annotation track count must be >= 1");
    }
    for (std::size_t i = 0; i < selected.size(); ++i) {
        if (selected[i] >= tracks) {
            throw FormatError("annotation frame " + std::to_string(i) + " selects track " +
                              std::to_string(selected[i]) + " but only " + std::to_string(tracks) +
                              " tracks exist");
        }
    }
}

void EditAnnotation::validate_against(const FeaturePool& pool) const {
    if (selected.size() != pool.frames) {
        throw FormatError("annotation covers " + std::to_string(selected.size()) + " frames, pool has " +
                          std::to_string(pool.frames));
    }
    if (tracks != pool.tracks) {
        throw FormatError("annotation is for " + std::to_string(tracks) + " tracks, pool has " +
                          std::to_string(pool.tracks));
    }
    validate();
}

std::vector<Shot> shots_from_annotation(const EditAnnotation& annotation) {
    if (annotation.selected.empty()) {
        throw std::invalid_argument("shots_from_annotation: empty annotation");
    }
    std::vector<Shot> shots;
    std::size_t start = 0;
    for (std::size_t i = 1; i <= annotation.selected.size(); ++i) {
        if (i == annotation.selected.size() || annotation.selected[i] != annotation.selected[start]) {
            shots.push_back({start, i, annotation.selected[start]});
            start = i;
        }
    }
    return shots;
}

EditAnnotation annotation_from_shots(std::span<const Shot> shots, std::size_t frames, std::size_t tracks) {
    if (shots.empty()) {
        throw std::invalid_argument("annotation_from_shots: no shots");
    }
    EditAnnotation ann;
    ann.tracks = tracks;
    ann.selected.reserve(frames);
    std::size_t cursor = 0;
    for (std::size_t s = 0; s < shots.size(); ++s) {
        const auto& shot = shots[s];
        if (shot.start != cursor) {
            throw std::invalid_argument("annotation_from_shots: shot " + std::to_string(s) + " starts at " +
                                        std::to_string(shot.start) + " but previous coverage ends at " +
                                        std::to_string(cursor) + (shot.start > cursor ? " (gap)" : " (overlap)"));
        }
        if (shot.end <= shot.start) {
            throw std::invalid_argument("annotation_from_shots: shot " + std::to_string(s) + " is empty");
        }
        if (shot.track >= tracks || shot.track > std::numeric_limits<TrackIndex>::max()) {
            throw std::invalid_argument("annotation_from_shots: shot " + std::to_string(s) + " uses track " +
                                        std::to_string(shot.track) + " of " + std::to_string(tracks));
        }
        ann.selected.insert(ann.selected.end(), shot.length(), static_cast<TrackIndex>(shot.track));
        cursor = shot.end;
    }
    if (cursor != frames) {
        throw std::invalid_argument("annotation_from_shots: shots cover [0, " + std::to_string(cursor) +
                                    ") but " + std::to_string(frames) + " frames are required");
    }
    return ann;
}

std::vector<std::size_t> shot_boundaries(const EditAnnotation& annotation) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < annotation.selected.size(); ++i) {
        if (i == 0 || annotation.selected[i] != annotation.selected[i - 1]) {
            out.push_back(i);
        }
    }
    return out;
}

std::vector<std::string> SyntheticSpec::problems() const {
    std::vector<std::string> out;
    if (tracks < 1 || tracks > std::numeric_limits<TrackIndex>::max()) {
        out.push_back("tracks must be in [1, 65535]");
    }
    if (width < 1) {
        out.push_back("width must be >= 1");
    }
    if (!(fps > 0.0)) {
        out.push_back("fps must be positive");
    }
    if (min_shot_frames < 1) {
        out.push_back("min_shot_frames must be >= 1");
    }
    if (duration_frames <= min_shot_frames) {
        out.push_back("duration_frames must exceed min_shot_frames");
    }
    if (!(smoothness > 0.0 && smoothness < 1.0)) {
        out.push_back("smoothness must lie in (0, 1)");
    }
    if (!(noise >= 0.0) || !std::isfinite(noise)) {
        out.push_back("noise must be non-negative");
    }
    if (!(switch_margin >= 0.0) || !std::isfinite(switch_margin)) {
        out.push_back("switch_margin must be non-negative");
    }
    return out;
}

void SyntheticSpec::validate() const {
    auto p = problems();
    if (!p.empty()) {
        throw ConfigError(std::move(p));
    }
}

SyntheticShow generate_synthetic_show(const SyntheticSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);
    Rng rule_rng(spec.rule_seed);
    const std::size_t n_frames = spec.duration_frames;
    const std::size_t n_tracks = spec.tracks;
    const std::size_t d = spec.width;

    SyntheticShow show;
    show.rule.resize(d);
    double norm = 0.0;
    do {
        norm = 0.0;
        for (auto& u : show.rule) {
            u = rule_rng.normal();
            norm += u * u;
        }
    } while (norm == 0.0);
    norm = std::sqrt(norm);
    for (auto& u : show.rule) {
        u /= norm;
    }

    show.pool = FeaturePool(n_frames, n_tracks, d, spec.fps);
    // Start each walk in its stationary distribution.
    const double stationary = spec.noise / std::sqrt(1.0 - spec.smoothness * spec.smoothness);
    std::vector<double> state(n_tracks * d);
    for (auto& v : state) {
        v = stationary * rng.normal();
    }
    show.content_scores.assign(n_frames * n_tracks, 0.0);
    for (std::size_t i = 0; i < n_frames; ++i) {
        if (i > 0) {
            for (auto& v : state) {
                v = spec.smoothness * v + spec.noise * rng.normal();
            }
        }
        for (std::size_t j = 0; j < n_tracks; ++j) {
            auto dst = show.pool.at(i, j);
            double score = 0.0;
            for (std::size_t k = 0; k < d; ++k) {
                dst[k] = static_cast<float>(state[j * d + k]);
                score += show.rule[k] * static_cast<double>(dst[k]);
            }
            show.content_scores[i * n_tracks + j] = score;
        }
    }

    auto best_track = [&](std::size_t i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < n_tracks; ++j) {
            if (show.content_scores[i * n_tracks + j] > show.content_scores[i * n_tracks + best]) {
                best = j;
            }
        }
        return best;
    };

    show.annotation.tracks = n_tracks;
    show.annotation.selected.resize(n_frames);
    std::size_t incumbent = best_track(0);
    std::size_t shot_start = 0;
    show.annotation.selected[0] = static_cast<TrackIndex>(incumbent);
    for (std::size_t i = 1; i < n_frames; ++i) {
        if (i - shot_start >= spec.min_shot_frames) {
            const std::size_t best = best_track(i);
            if (best != incumbent && show.content_scores[i * n_tracks + best] >
                                         show.content_scores[i * n_tracks + incumbent] + spec.switch_margin) {
                incumbent = best;
                shot_start = i;
            }
        }
        show.annotation.selected[i] = static_cast<TrackIndex>(incumbent);
    }
    return show;
}

std::size_t train_split_count(std::size_t count) {
    const std::size_t ceil_four_fifths = (4 * count + 4) / 5;
    return std::min(ceil_four_fifths, count - 1);
}

double median_shot_frames(std::span<const Shot> shots) {
    if (shots.empty()) {
        throw std::invalid_argument("median_shot_frames: no shots");
    }
    std::vector<std::size_t> lengths;
    lengths.reserve(shots.size());
    for (const auto& s : shots) {
        lengths.push_back(s.length());
    }
    std::sort(lengths.begin(), lengths.end());
    const std::size_t mid = lengths.size() / 2;
    if (lengths.size() % 2 == 1) {
        return static_cast<double>(lengths[mid]);
    }
    return 0.5 * static_cast<double>(lengths[mid - 1] + lengths[mid]);
}

}  // namespace tcedit
