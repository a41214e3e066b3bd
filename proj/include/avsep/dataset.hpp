#ifndef AVSEP_DATASET_HPP
#define AVSEP_DATASET_HPP

#include "avsep/types.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace avsep {

/// Synthetic scene generator settings. Each category has a glyph (shape and
/// saturated colour) and a timbre (harmonic stack with fixed partial
/// weights, fundamental drawn from a category band). Fundamental bands are
/// spaced half an octave apart and do not overlap.
struct SceneConfig {
  int image_size = 64;
  int categories = 7;
  int sample_rate = 11025;
  int clip_length = 16384;
  int min_distractors = 1;
  int max_distractors = 3;
  bool operator==(const SceneConfig&) const = default;
};

struct SceneSample {
  std::string id;
  Image image;
  AudioClip audio;
  BoundingBox gt_box;
  int category_id = 0;
  std::vector<BoundingBox> distractor_boxes;
  std::uint64_t seed = 0;
};

struct DuetSample {
  std::string id;
  Image image;
  AudioClip audio;                   // references[0] + references[1]
  std::array<BoundingBox, 2> gt_boxes;
  std::array<int, 2> categories{};
  std::array<AudioClip, 2> references;
  std::vector<BoundingBox> distractor_boxes;
  std::uint64_t seed = 0;
};

/// Fundamental band [low, high) in Hz for a category.
std::array<double, 2> fundamental_band(int category);
/// Relative amplitudes of the first partials for a category.
std::array<double, 4> partial_weights(int category);

SceneSample generate_solo(const SceneConfig& config, int category_id, std::uint64_t seed);
DuetSample generate_duet(const SceneConfig& config, int category_a, int category_b,
                         std::uint64_t seed);

/// `count` solos cycling through categories; sample i uses seed base_seed + i.
std::vector<SceneSample> generate_solos(const SceneConfig& config, int count,
                                        std::uint64_t base_seed);

/// Deterministic cross-category pairing of `samples` (indices into it).
std::vector<std::pair<int, int>> pair_cross_category(const std::vector<int>& categories,
                                                     int pairs, std::uint64_t seed);

/// 64-bit FNV-1a; stable across platforms.
std::uint64_t stable_hash(const std::string& text);

/// True when `clip_id` falls in the validation split: within its category,
/// clips are ranked by stable_hash and the first round(ratio * n) go to
/// validation.
std::vector<bool> validation_membership(const std::vector<std::string>& clip_ids,
                                        const std::vector<int>& categories, double ratio);

/// Write PNG + WAV + JSON ground truth under `dir/<id>.*` and return the
/// manifest line.
std::string save_solo(const std::filesystem::path& dir, const SceneSample& sample);
std::string save_duet(const std::filesystem::path& dir, const DuetSample& sample);

struct RealSample {
  std::string category;
  std::string clip_id;
  Image image;
  AudioClip audio;
};

enum class Split { Train, Val };

/// Streams `root/<category>/<clip_id>/{frame.png,audio.wav}` in sorted order.
/// Frames are centre-cropped to image_size squares and audio is resampled to
/// sample_rate then cut or zero-padded to clip_length. Unreadable clips are
/// skipped with a warning. Throws DataError if the split is empty.
class RealDataStream {
 public:
  RealDataStream(const std::filesystem::path& root, Split split, const SceneConfig& config,
                 double val_ratio = 0.1);

  std::optional<RealSample> next();
  std::size_t size() const { return entries_.size(); }

 private:
  struct Entry {
    std::string category;
    std::string clip_id;
    std::filesystem::path dir;
  };
  std::vector<Entry> entries_;
  std::size_t cursor_ = 0;
  SceneConfig config_;
};

}  // namespace avsep

#endif  // AVSEP_DATASET_HPP
