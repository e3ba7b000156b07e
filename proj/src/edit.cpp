#include "tcedit/edit.hpp"

#include <algorithm>

#include "tcedit/error.hpp"
#include "tcedit/io.hpp"

namespace tcedit {

void EditDecisionList::validate(std::size_t frames) const {
    if (shots.empty()) {
        throw FormatError("EDL has no shots");
    }
    std::size_t cursor = 0;
    for (std::size_t s = 0; s < shots.size(); ++s) {
        if (shots[s].start != cursor || shots[s].end <= shots[s].start) {
            throw FormatError("EDL shot " + std::to_string(s) + " does not abut the previous shot");
        }
        if (s > 0 && shots[s].track == shots[s - 1].track) {
            throw FormatError("EDL shot " + std::to_string(s) + " repeats the previous track");
        }
        cursor = shots[s].end;
    }
    if (cursor != frames) {
        throw FormatError("EDL covers " + std::to_string(cursor) + " frames, expected " + std::to_string(frames));
    }
}

EditAnnotation autoregressive_edit(const ModelParams<float>& params, const FeaturePool& pool,
                                   const EditOptions& options) {
    const auto& c = params.config;
    pool.validate();
    if (pool.width != c.d_in) {
        throw DimensionError("pool feature width " + std::to_string(pool.width) + " does not match checkpoint d_in " +
                             std::to_string(c.d_in));
    }
    if (pool.tracks > c.max_tracks) {
        throw DimensionError("pool has " + std::to_string(pool.tracks) + " tracks, checkpoint max_tracks is " +
                             std::to_string(c.max_tracks));
    }
    if (options.decision_stride < 1) {
        throw std::invalid_argument("decision_stride must be >= 1");
    }
    const std::size_t d = pool.width;
    EditAnnotation out;
    out.tracks = pool.tracks;
    out.selected.resize(pool.frames);
    std::size_t incumbent = 0;
    std::size_t shot_start = 0;
    std::vector<Sample> batch(pool.tracks);
    for (std::size_t i = 0; i < pool.frames; ++i) {
        std::size_t choice = incumbent;
        if (i % options.decision_stride == 0) {
            std::vector<float> history(c.window * d, 0.0f);
            for (std::size_t r = 0; r < c.window; ++r) {
                if (i + r < c.window) {
                    continue;
                }
                const std::size_t frame = i + r - c.window;
                const auto src = pool.at(frame, out.selected[frame]);
                std::copy(src.begin(), src.end(), history.begin() + static_cast<std::ptrdiff_t>(r * d));
            }
            Tensor<float> hist_t({c.window, d}, std::move(history));
            const auto ctx = pool.frame(i);
            Tensor<float> ctx_t({pool.tracks, d}, std::vector<float>(ctx.begin(), ctx.end()));
            for (std::size_t j = 0; j < pool.tracks; ++j) {
                batch[j] = Sample{hist_t, ctx_t, j, 0, {0, i}};
            }
            const auto scored = forward_batch(params, std::span<const Sample>(batch));
            std::size_t best = 0;
            for (std::size_t j = 1; j < scored.size(); ++j) {
                if (scored[j].score > scored[best].score) {
                    best = j;
                }
            }
            choice = best;
            if (i > 0 && best != incumbent && options.min_shot_frames > 0 && i - shot_start < options.min_shot_frames) {
                choice = incumbent;
            }
        }
        if (i == 0 || choice != incumbent) {
            incumbent = choice;
            shot_start = i;
        }
        out.selected[i] = static_cast<TrackIndex>(incumbent);
    }
    return out;
}

EditDecisionList make_edl(const EditAnnotation& selections, double fps, std::string source) {
    EditDecisionList edl;
    edl.fps = fps;
    edl.source = std::move(source);
    edl.shots = shots_from_annotation(selections);
    return edl;
}

double selection_agreement(const EditAnnotation& a, const EditAnnotation& b) {
    if (a.frames() != b.frames() || a.frames() == 0) {
        throw std::invalid_argument("selection_agreement: frame counts differ");
    }
    std::size_t same = 0;
    for (std::size_t i = 0; i < a.frames(); ++i) {
        same += a.selected[i] == b.selected[i] ? 1 : 0;
    }
    return 100.0 * static_cast<double>(same) / static_cast<double>(a.frames());
}

nlohmann::json edl_to_json(const EditDecisionList& edl) {
    return {{"fps", edl.fps}, {"source", edl.source}, {"shots", shots_to_json(edl.shots)}};
}

EditDecisionList edl_from_json(const nlohmann::json& j) {
    EditDecisionList edl;
    try {
        edl.fps = j.at("fps").get<double>();
        edl.source = j.at("source").get<std::string>();
        edl.shots = shots_from_json(j.at("shots"));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed EDL: ") + e.what());
    }
    return edl;
}

void save_edl(const std::filesystem::path& path, const EditDecisionList& edl) {
    write_text_file(path, edl_to_json(edl).dump(2) + "\n");
}

EditDecisionList load_edl(const std::filesystem::path& path) {
    try {
        return edl_from_json(nlohmann::json::parse(read_text_file(path)));
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError("EDL '" + path.string() + "': " + e.what());
    }
}

}  // namespace tcedit
