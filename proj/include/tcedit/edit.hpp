#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "tcedit/data.hpp"
#include "tcedit/model.hpp"

namespace tcedit {

struct EditOptions {
    std::size_t decision_stride = 1;  // score every k-th frame, hold in between
    std::size_t min_shot_frames = 0;  // 0 disables the minimum-shot constraint
};

struct EditDecisionList {
    double fps = 24.0;
    std::string source;
    std::vector<Shot> shots;

    // Shots abut, start at 0, cover `frames` and change track at every cut.
    void validate(std::size_t frames) const;
    bool operator==(const EditDecisionList&) const = default;
};

// Frame-by-frame sweep: each decision frame scores every track with a history
// built from the sweep's own earlier picks and takes the argmax (lowest track
// on ties). With min_shot_frames, switches wait until the current shot is long enough.
EditAnnotation autoregressive_edit(const ModelParams<float>& params, const FeaturePool& pool,
                                   const EditOptions& options);

EditDecisionList make_edl(const EditAnnotation& selections, double fps, std::string source);

// Fraction of frames (×100) where two selections agree.
double selection_agreement(const EditAnnotation& a, const EditAnnotation& b);

nlohmann::json edl_to_json(const EditDecisionList& edl);
EditDecisionList edl_from_json(const nlohmann::json& j);
void save_edl(const std::filesystem::path& path, const EditDecisionList& edl);
EditDecisionList load_edl(const std::filesystem::path& path);

}  // namespace tcedit
