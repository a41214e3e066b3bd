#include "avsep/dataset.hpp"

#include "avsep/image.hpp"
#include "avsep/io.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <random>

namespace avsep {
namespace {

using Rng = std::mt19937_64;

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

Rng stream(std::uint64_t seed, std::uint64_t salt) { return Rng(splitmix(seed ^ splitmix(salt))); }

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}
int uniform_int(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

// Glyph shapes on [-1, 1]^2 (u right, v down).
bool sounding_shape(int category, double u, double v) {
  switch (category % 7) {
    case 0: return u * u + v * v <= 1.0;                                   // disk
    case 1: return std::abs(u) <= 0.85 && std::abs(v) <= 0.85;            // square
    case 2: return v >= -0.9 && v <= 0.9 && std::abs(u) <= (v + 0.9) / 2;  // triangle
    case 3: return std::abs(u) + std::abs(v) <= 1.0;                       // diamond
    case 4: return u * u + (v / 0.55) * (v / 0.55) <= 1.0;                 // flat ellipse
    case 5:
      return (std::abs(u) <= 0.32 && std::abs(v) <= 0.95) ||
             (std::abs(v) <= 0.32 && std::abs(u) <= 0.95);                 // plus
    default: return v >= -0.9 && v <= 0.9 && std::abs(u) <= (0.9 - v) / 2;  // inverted triangle
  }
}

bool distractor_shape(int kind, double u, double v) {
  const double r2 = u * u + v * v;
  switch (kind % 3) {
    case 0: return r2 <= 1.0 && r2 >= 0.45;  // ring
    case 1:
      return std::abs(u) <= 0.95 && std::abs(v) <= 0.95 &&
             (std::abs(u - v) <= 0.35 || std::abs(u + v) <= 0.35);  // X
    default:
      return std::abs(u) <= 0.9 && std::abs(v) <= 0.9 &&
             (std::abs(u) >= 0.55 || std::abs(v) >= 0.55);  // hollow frame
  }
}

std::array<float, 3> category_color(int category) {
  static const std::array<std::array<float, 3>, 7> palette{{{1.00f, 0.30f, 0.25f},
                                                            {0.25f, 0.95f, 0.30f},
                                                            {0.35f, 0.50f, 1.00f},
                                                            {1.00f, 0.95f, 0.25f},
                                                            {1.00f, 0.30f, 0.95f},
                                                            {0.25f, 1.00f, 1.00f},
                                                            {1.00f, 0.65f, 0.20f}}};
  if (category < 7) return palette[category];
  const double hue = std::fmod(category * 0.618034, 1.0) * 6.0;
  const int sector = static_cast<int>(hue);
  const float f = static_cast<float>(hue - sector);
  switch (sector) {
    case 0: return {0.9f, 0.1f + 0.8f * f, 0.1f};
    case 1: return {0.9f - 0.8f * f, 0.9f, 0.1f};
    case 2: return {0.1f, 0.9f, 0.1f + 0.8f * f};
    case 3: return {0.1f, 0.9f - 0.8f * f, 0.9f};
    case 4: return {0.1f + 0.8f * f, 0.1f, 0.9f};
    default: return {0.9f, 0.1f, 0.9f - 0.8f * f};
  }
}

struct Canvas {
  Image image;
  std::vector<BoundingBox> occupied;
};

Canvas background(const SceneConfig& config, Rng& rng) {
  const int s = config.image_size;
  Canvas canvas{Image(s, s), {}};
  const double base = uniform(rng, 0.04, 0.12);
  const double fx = uniform(rng, 0.5, 2.0) / s, fy = uniform(rng, 0.5, 2.0) / s;
  const double phase = uniform(rng, 0.0, 2 * std::numbers::pi);
  for (int c = 0; c < 3; ++c) {
    const double tint = base + uniform(rng, -0.03, 0.03);
    for (int y = 0; y < s; ++y)
      for (int x = 0; x < s; ++x)
        canvas.image.rgb[c](y, x) = static_cast<float>(std::max(
            0.0, tint + 0.02 * std::sin(2 * std::numbers::pi * (fx * x + fy * y) + phase + c)));
  }
  return canvas;
}

// Finds a free square spot at least `margin` pixels from everything placed.
std::optional<BoundingBox> place(Canvas& canvas, int size, Rng& rng, int margin = 3) {
  const int s = canvas.image.width();
  for (int attempt = 0; attempt < 400; ++attempt) {
    const int x = uniform_int(rng, 1, s - size - 1);
    const int y = uniform_int(rng, 1, s - size - 1);
    const BoundingBox candidate{x - margin, y - margin, x + size + margin, y + size + margin, 0.0};
    const bool free = std::none_of(canvas.occupied.begin(), canvas.occupied.end(),
                                   [&](const BoundingBox& o) { return intersection_area(o, candidate) > 0; });
    if (free) {
      canvas.occupied.push_back(BoundingBox{x, y, x + size, y + size, 0.0});
      return canvas.occupied.back();
    }
  }
  return std::nullopt;
}

template <typename Shape>
BoundingBox draw_glyph(Image& image, const BoundingBox& cell, std::array<float, 3> color,
                       Shape&& inside) {
  const int size = cell.width();
  int x0 = cell.x1, y0 = cell.y1, x1 = cell.x0, y1 = cell.y0;
  for (int y = cell.y0; y < cell.y1; ++y)
    for (int x = cell.x0; x < cell.x1; ++x) {
      const double u = (x - cell.x0 + 0.5) / size * 2.0 - 1.0;
      const double v = (y - cell.y0 + 0.5) / size * 2.0 - 1.0;
      if (!inside(u, v)) continue;
      for (int c = 0; c < 3; ++c) image.rgb[c](y, x) = color[c];
      x0 = std::min(x0, x);
      y0 = std::min(y0, y);
      x1 = std::max(x1, x + 1);
      y1 = std::max(y1, y + 1);
    }
  return BoundingBox{x0, y0, x1, y1, 0.0};
}

BoundingBox draw_sounding(Canvas& canvas, int category, Rng& rng) {
  const int s = canvas.image.width();
  const int size = uniform_int(rng, s * 7 / 32, s * 5 / 16);
  const auto cell = place(canvas, size, rng);
  if (!cell) throw InvalidInput("scene generator: no room for a sounding glyph");
  auto color = category_color(category);
  for (auto& c : color) c = std::clamp(c + static_cast<float>(uniform(rng, -0.05, 0.05)), 0.0f, 1.0f);
  return draw_glyph(canvas.image, *cell, color,
                    [category](double u, double v) { return sounding_shape(category, u, v); });
}

std::vector<BoundingBox> draw_distractors(Canvas& canvas, const SceneConfig& config, Rng& rng) {
  const int s = canvas.image.width();
  const int count = uniform_int(rng, config.min_distractors, config.max_distractors);
  std::vector<BoundingBox> boxes;
  for (int i = 0; i < count; ++i) {
    const int size = uniform_int(rng, s * 5 / 32, s / 4);
    const auto cell = place(canvas, size, rng);
    if (!cell) break;
    const int kind = uniform_int(rng, 0, 2);
    const float v = static_cast<float>(uniform(rng, 0.22, 0.32));
    const std::array<float, 3> gray{v + static_cast<float>(uniform(rng, -0.04, 0.04)),
                                    v + static_cast<float>(uniform(rng, -0.04, 0.04)),
                                    v + static_cast<float>(uniform(rng, -0.04, 0.04))};
    boxes.push_back(draw_glyph(canvas.image, *cell, gray,
                               [kind](double u, double w) { return distractor_shape(kind, u, w); }));
  }
  return boxes;
}

AudioClip synthesize(const SceneConfig& config, int category, Rng& rng) {
  const auto band = fundamental_band(category);
  const auto weights = partial_weights(category);
  const double f0 = uniform(rng, band[0], band[1]);
  const double sr = config.sample_rate;
  const double attack = uniform(rng, 0.005, 0.03);
  const double decay = uniform(rng, 0.6, 2.0);
  const double tremolo_rate = uniform(rng, 2.0, 6.0);
  const double tremolo_depth = uniform(rng, 0.0, 0.3);
  std::array<double, 4> phases{};
  for (auto& p : phases) p = uniform(rng, 0.0, 2 * std::numbers::pi);

  AudioClip clip;
  clip.sample_rate = config.sample_rate;
  clip.samples = Eigen::ArrayXd::Zero(config.clip_length);
  for (int n = 0; n < config.clip_length; ++n) {
    const double t = n / sr;
    const double env = (1.0 - std::exp(-t / attack)) * std::exp(-t / decay) *
                       (1.0 - tremolo_depth * 0.5 * (1.0 - std::cos(2 * std::numbers::pi * tremolo_rate * t)));
    double v = 0.0;
    for (int h = 0; h < 4; ++h) {
      const double f = f0 * (h + 1);
      if (f >= 0.45 * sr) break;
      v += weights[h] * std::sin(2 * std::numbers::pi * f * t + phases[h]);
    }
    clip.samples[n] = env * v;
  }
  const double peak = clip.samples.abs().maxCoeff();
  if (peak > 0.0) clip.samples *= uniform(rng, 0.3, 0.9) / peak;
  return clip;
}

void check_config(const SceneConfig& config) {
  if (config.categories < 2) throw InvalidInput("scene generator: need at least two categories");
  if (config.image_size < 32) throw InvalidInput("scene generator: image_size must be >= 32");
  if (config.clip_length < 1 || config.sample_rate < 1)
    throw InvalidInput("scene generator: bad audio settings");
  if (config.min_distractors < 0 || config.max_distractors < config.min_distractors)
    throw InvalidInput("scene generator: bad distractor range");
}

nlohmann::json box_json(const BoundingBox& b) { return {b.x0, b.y0, b.x1, b.y1}; }

}  // namespace

std::array<double, 2> fundamental_band(int category) {
  const double low = 150.0 * std::pow(2.0, category / 2.0);
  return {low, low * 1.1};
}

std::array<double, 4> partial_weights(int category) {
  static const std::array<std::array<double, 4>, 7> table{{{1.0, 0.50, 0.30, 0.15},
                                                           {1.0, 0.15, 0.45, 0.10},
                                                           {1.0, 0.60, 0.10, 0.25},
                                                           {1.0, 0.30, 0.30, 0.05},
                                                           {1.0, 0.10, 0.20, 0.40},
                                                           {1.0, 0.45, 0.05, 0.05},
                                                           {1.0, 0.25, 0.15, 0.10}}};
  if (category < 7) return table[category];
  Rng rng(splitmix(static_cast<std::uint64_t>(category)));
  return {1.0, uniform(rng, 0.05, 0.6), uniform(rng, 0.05, 0.6), uniform(rng, 0.05, 0.6)};
}

SceneSample generate_solo(const SceneConfig& config, int category_id, std::uint64_t seed) {
  check_config(config);
  if (category_id < 0 || category_id >= config.categories)
    throw InvalidInput("generate_solo: category out of range");
  Rng visual = stream(seed, 2 * static_cast<std::uint64_t>(category_id) + 1);
  Rng audio = stream(seed, 2 * static_cast<std::uint64_t>(category_id) + 2);

  SceneSample s;
  s.id = "solo_c" + std::to_string(category_id) + "_s" + std::to_string(seed);
  s.category_id = category_id;
  s.seed = seed;
  Canvas canvas = background(config, visual);
  s.gt_box = draw_sounding(canvas, category_id, visual);
  s.distractor_boxes = draw_distractors(canvas, config, visual);
  s.image = std::move(canvas.image);
  s.audio = synthesize(config, category_id, audio);
  return s;
}

DuetSample generate_duet(const SceneConfig& config, int category_a, int category_b,
                         std::uint64_t seed) {
  check_config(config);
  if (category_a == category_b) throw InvalidInput("generate_duet: categories must differ");
  for (int c : {category_a, category_b})
    if (c < 0 || c >= config.categories) throw InvalidInput("generate_duet: category out of range");
  Rng visual = stream(seed, 0xD0E7ull + 97ull * category_a + category_b);

  DuetSample d;
  d.id = "duet_c" + std::to_string(category_a) + "_c" + std::to_string(category_b) + "_s" +
         std::to_string(seed);
  d.seed = seed;
  d.categories = {category_a, category_b};
  SceneConfig sparse = config;
  sparse.min_distractors = 0;
  sparse.max_distractors = std::min(config.max_distractors, 2);
  Canvas canvas = background(config, visual);
  d.gt_boxes[0] = draw_sounding(canvas, category_a, visual);
  d.gt_boxes[1] = draw_sounding(canvas, category_b, visual);
  d.distractor_boxes = draw_distractors(canvas, sparse, visual);
  d.image = std::move(canvas.image);
  for (int k = 0; k < 2; ++k) {
    Rng audio = stream(seed, 0xA0D1ull + 13ull * k + 101ull * d.categories[k]);
    d.references[k] = synthesize(config, d.categories[k], audio);
  }
  d.audio = AudioClip{d.references[0].samples + d.references[1].samples, config.sample_rate};
  return d;
}

std::vector<SceneSample> generate_solos(const SceneConfig& config, int count,
                                        std::uint64_t base_seed) {
  std::vector<SceneSample> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i)
    out.push_back(generate_solo(config, i % config.categories, base_seed + static_cast<std::uint64_t>(i)));
  return out;
}

std::vector<std::pair<int, int>> pair_cross_category(const std::vector<int>& categories, int pairs,
                                                     std::uint64_t seed) {
  const int n = static_cast<int>(categories.size());
  const bool mixed = std::any_of(categories.begin(), categories.end(),
                                 [&](int c) { return c != categories.front(); });
  if (n < 2 || !mixed) throw InvalidInput("pair_cross_category: need two distinct categories");
  Rng rng(splitmix(seed));
  std::vector<std::pair<int, int>> out;
  while (static_cast<int>(out.size()) < pairs) {
    const int a = uniform_int(rng, 0, n - 1), b = uniform_int(rng, 0, n - 1);
    if (categories[a] != categories[b]) out.emplace_back(a, b);
  }
  return out;
}

std::uint64_t stable_hash(const std::string& text) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::vector<bool> validation_membership(const std::vector<std::string>& clip_ids,
                                        const std::vector<int>& categories, double ratio) {
  if (clip_ids.size() != categories.size())
    throw InvalidInput("validation_membership: id and category counts differ");
  std::map<int, std::vector<std::size_t>> by_category;
  for (std::size_t i = 0; i < clip_ids.size(); ++i) by_category[categories[i]].push_back(i);
  std::vector<bool> val(clip_ids.size(), false);
  for (auto& [cat, members] : by_category) {
    std::sort(members.begin(), members.end(), [&](std::size_t a, std::size_t b) {
      const auto ha = stable_hash(clip_ids[a]), hb = stable_hash(clip_ids[b]);
      return ha != hb ? ha < hb : clip_ids[a] < clip_ids[b];
    });
    const auto take = static_cast<std::size_t>(std::lround(ratio * static_cast<double>(members.size())));
    for (std::size_t k = 0; k < std::min(take, members.size()); ++k) val[members[k]] = true;
  }
  return val;
}

std::string save_solo(const std::filesystem::path& dir, const SceneSample& s) {
  std::filesystem::create_directories(dir);
  write_png(dir / (s.id + ".png"), s.image);
  write_wav(dir / (s.id + ".wav"), s.audio);
  nlohmann::json distractors = nlohmann::json::array();
  for (const auto& b : s.distractor_boxes) distractors.push_back(box_json(b));
  const nlohmann::json j{{"id", s.id},
                         {"kind", "solo"},
                         {"category_id", s.category_id},
                         {"seed", s.seed},
                         {"image", s.id + ".png"},
                         {"audio", s.id + ".wav"},
                         {"sample_rate", s.audio.sample_rate},
                         {"gt_box", box_json(s.gt_box)},
                         {"distractor_boxes", distractors}};
  std::ofstream(dir / (s.id + ".json")) << j.dump(2) << '\n';
  return j.dump();
}

std::string save_duet(const std::filesystem::path& dir, const DuetSample& d) {
  std::filesystem::create_directories(dir);
  write_png(dir / (d.id + ".png"), d.image);
  write_wav(dir / (d.id + ".wav"), d.audio);
  write_wav(dir / (d.id + "_ref0.wav"), d.references[0]);
  write_wav(dir / (d.id + "_ref1.wav"), d.references[1]);
  const nlohmann::json j{{"id", d.id},
                         {"kind", "duet"},
                         {"categories", d.categories},
                         {"seed", d.seed},
                         {"image", d.id + ".png"},
                         {"audio", d.id + ".wav"},
                         {"references", {d.id + "_ref0.wav", d.id + "_ref1.wav"}},
                         {"gt_boxes", {box_json(d.gt_boxes[0]), box_json(d.gt_boxes[1])}}};
  std::ofstream(dir / (d.id + ".json")) << j.dump(2) << '\n';
  return j.dump();
}

RealDataStream::RealDataStream(const std::filesystem::path& root, Split split,
                               const SceneConfig& config, double val_ratio)
    : config_(config) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) throw DataError("RealDataStream: no such directory " + root.string());
  std::vector<Entry> all;
  std::vector<std::string> ids;
  std::vector<int> cats;
  std::vector<fs::path> category_dirs;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory()) category_dirs.push_back(e.path());
  std::sort(category_dirs.begin(), category_dirs.end());
  for (std::size_t c = 0; c < category_dirs.size(); ++c) {
    std::vector<fs::path> clips;
    for (const auto& e : fs::directory_iterator(category_dirs[c]))
      if (e.is_directory()) clips.push_back(e.path());
    std::sort(clips.begin(), clips.end());
    for (const auto& clip : clips) {
      all.push_back({category_dirs[c].filename().string(), clip.filename().string(), clip});
      ids.push_back(all.back().category + "/" + all.back().clip_id);
      cats.push_back(static_cast<int>(c));
    }
  }
  const auto val = validation_membership(ids, cats, val_ratio);
  for (std::size_t i = 0; i < all.size(); ++i)
    if (val[i] == (split == Split::Val)) entries_.push_back(all[i]);
  if (entries_.empty()) throw DataError("RealDataStream: split is empty under " + root.string());
}

std::optional<RealSample> RealDataStream::next() {
  while (cursor_ < entries_.size()) {
    const Entry& e = entries_[cursor_++];
    try {
      RealSample s;
      s.category = e.category;
      s.clip_id = e.clip_id;
      s.image = center_square(read_png(e.dir / "frame.png"), config_.image_size);
      AudioClip audio = resample(read_wav(e.dir / "audio.wav"), config_.sample_rate);
      Eigen::ArrayXd fixed = Eigen::ArrayXd::Zero(config_.clip_length);
      const Eigen::Index keep = std::min<Eigen::Index>(audio.size(), config_.clip_length);
      fixed.head(keep) = audio.samples.head(keep);
      s.audio = AudioClip{std::move(fixed), config_.sample_rate};
      return s;
    } catch (const std::exception& ex) {
      warn("RealDataStream: skipping " + e.dir.string() + ": " + ex.what());
    }
  }
  return std::nullopt;
}

}  // namespace avsep
