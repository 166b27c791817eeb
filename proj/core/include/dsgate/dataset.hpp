#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "dsgate/tensor.hpp"

namespace dsgate {

// Four-way scene taxonomy mirrored by the synthetic generator.
enum class SceneClass : int { background = 0, small = 1, large = 2, mixed = 3 };

const char* scene_class_name(SceneClass c);

struct SceneSample {
    Tensor4 image;  // (1,1,32,32), values in [0,1]
    SceneClass label;
};

inline constexpr std::int64_t kSceneSize = 32;

// Deterministic synthetic scenes, labels cycling background, small, large,
// mixed so any prefix is balanced within one sample per class.
//   background: uniform noise in [0, 0.1]
//   small:      noise + 1-3 bright 2x2 blobs (amplitude 0.9-1.0)
//   large:      noise + one soft disk, nominal radius 8-12, amplitude 0.4-0.6
//   mixed:      noise + one small blob + one large disk
// Pixels are clamped to [0,1] after composition.
std::vector<SceneSample> gen_dataset(std::uint64_t seed, int count);

// One DST1 file per sample ("sample_00000.dst", ...) plus labels.csv with
// `index,label` rows.
void save_dataset(const std::filesystem::path& dir, const std::vector<SceneSample>& samples);
std::vector<SceneSample> load_dataset(const std::filesystem::path& dir);

}  // namespace dsgate
