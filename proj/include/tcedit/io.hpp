#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "tcedit/data.hpp"
#include "tcedit/model.hpp"

namespace tcedit {

// Pool file:       "TCMC1\n" {"I","J","d","fps"} "\n" then I·J·d float32 LE, [i][j][k].
// Annotation file: "TCMA1\n" {"I","J"} "\n" then I uint16 LE track indices.
// Checkpoint file: "TCMK1\n" {"config", "tensors":[{"name","shape"}]} "\n" then
//                  each tensor's float32 LE values in directory order.
inline constexpr std::string_view kPoolMagic = "TCMC1";
inline constexpr std::string_view kAnnotationMagic = "TCMA1";
inline constexpr std::string_view kCheckpointMagic = "TCMK1";

void write_pool(std::ostream& out, const FeaturePool& pool);
FeaturePool read_pool(std::istream& in);
void save_pool(const std::filesystem::path& path, const FeaturePool& pool);
FeaturePool load_pool(const std::filesystem::path& path);

void write_annotation(std::ostream& out, const EditAnnotation& annotation);
EditAnnotation read_annotation(std::istream& in);
void save_annotation(const std::filesystem::path& path, const EditAnnotation& annotation);
EditAnnotation load_annotation(const std::filesystem::path& path);

// A scene on disk is <prefix>.pool plus <prefix>.ann; loading cross-checks them.
void save_scene(const std::filesystem::path& prefix, const Scene& scene);
Scene load_scene(const std::filesystem::path& prefix);

nlohmann::json shots_to_json(std::span<const Shot> shots);
std::vector<Shot> shots_from_json(const nlohmann::json& j);

void write_checkpoint(std::ostream& out, const ModelParams<float>& params);
ModelParams<float> read_checkpoint(std::istream& in);
void save_checkpoint(const std::filesystem::path& path, const ModelParams<float>& params);
ModelParams<float> load_checkpoint(const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace tcedit
