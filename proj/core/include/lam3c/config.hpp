#pragma once

#include "lam3c/pipeline.hpp"
#include "lam3c/synth.hpp"
#include "lam3c/trainer.hpp"

#include <filesystem>
#include <string>

namespace lam3c {

// JSON documents mirroring the config structs. Every field is optional and
// defaults to the struct's default; unknown keys are rejected with ConfigError.
// A schedule is either a number (constant) or {"kind", "start", "end"}.
TrainConfig train_config_from_json(const std::string& text, const TrainConfig& base = {});
std::string train_config_to_json(const TrainConfig& config);

AlignConfig align_config_from_json(const std::string& text);
std::string align_config_to_json(const AlignConfig& config);

SceneSpec scene_spec_from_json(const std::string& text);
std::string scene_spec_to_json(const SceneSpec& spec);

// Small rooms and a coarse Laplacian radius, sized for desk-scale training runs.
TrainConfig toy_train_config();
SceneSpec toy_scene_spec();

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace lam3c
