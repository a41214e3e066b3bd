#include "avsep/pipeline.hpp"

#include "avsep/image.hpp"
#include "avsep/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace avsep {
namespace {

using Json = nlohmann::json;

std::mt19937_64 seeded(std::uint64_t seed, std::uint32_t salt) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), salt};
  return std::mt19937_64(seq);
}

// Tensor pixels are row-major (y * w + x); grids are column-major arrays.
void grid_into(nn::Tensor<float>& t, int sample, const Eigen::ArrayXXd& grid) {
  Eigen::Map<Eigen::Array<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      t.sample(sample).data(), t.h, t.w) = grid.cast<float>();
}

Grid<float> grid_from(const nn::Tensor<float>& t, int sample) {
  return Eigen::Map<const Eigen::Array<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      t.sample(sample).data(), t.h, t.w);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\"'");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\"'");
  return s.substr(b, e - b + 1);
}

double norm_of(const nn::ParameterList<float>& params) {
  return std::sqrt(static_cast<double>(nn::squared_grad_norm(params)));
}

}  // namespace

nn::EncoderConfig RunConfig::encoder_config() const {
  return nn::EncoderConfig{crop_size, encoder_channels, feature_dim, true};
}

nn::UNetConfig RunConfig::unet_config() const {
  return nn::UNetConfig{unet_depth, unet_base, feature_dim};
}

void RunConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("config: " + what);
  };
  require(train_proposals >= 2, "train_proposals (N) must be >= 2");
  require(inference_proposals >= 2, "inference_proposals (M) must be >= 2");
  require(feature_dim >= 1, "feature_dim (C) must be >= 1");
  require(hidden >= 1, "hidden must be >= 1");
  require(temperature > 0.0, "temperature must be > 0");
  require(overlap_epsilon >= 0.0 && overlap_epsilon < 1.0, "overlap_epsilon must be in [0, 1)");
  require(stft.sample_rate == scene.sample_rate, "stft.sample_rate must equal scene.sample_rate");
  stft.validate();
  require(grid_rows >= 2 && grid_rows <= stft.bins(), "grid_rows must be in [2, bins]");
  require(grid_frames >= 1 && grid_frames <= stft.frames(scene.clip_length),
          "grid_frames exceeds the number of STFT frames");
  require(unet_depth >= 1 && unet_base >= 1, "unet depth and base must be positive");
  const int multiple = 1 << unet_depth;
  require(grid_rows % multiple == 0 && grid_frames % multiple == 0,
          "grid_rows and grid_frames must be divisible by 2^unet_depth");
  require(crop_size >= 16, "crop_size must be >= 16");
  for (int c : encoder_channels) require(c >= 1, "encoder channels must be positive");
  require(optimizer.learning_rate > 0.0, "optimizer.learning_rate must be > 0");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(steps >= 0, "steps must be >= 0");
  require(scene.categories >= 2, "scene.categories must be >= 2");
  require(scene.image_size >= 32, "scene.image_size must be >= 32");
  require(solos >= 2 * scene.categories, "solos must cover every category twice");
  require(val_ratio > 0.0 && val_ratio < 1.0, "val_ratio must be in (0, 1)");
  require(val_pairs >= 1, "val_pairs must be >= 1");
  require(bss_filter_length >= 1 && bss_filter_length < scene.clip_length,
          "bss_filter_length must be in [1, clip_length)");
}

RunConfig desk_preset() {
  RunConfig c;
  c.scene = SceneConfig{64, 7, 11025, 16384, 1, 3};
  c.crop_size = 32;
  c.grid_rows = 64;
  c.grid_frames = 64;
  c.unet_depth = 4;
  c.unet_base = 16;
  c.batch_size = 8;
  c.steps = 300;
  c.optimizer.learning_rate = 1e-3;
  return c;
}

nlohmann::json to_json(const RunConfig& c) {
  return Json{{"train_proposals", c.train_proposals},
              {"inference_proposals", c.inference_proposals},
              {"feature_dim", c.feature_dim},
              {"hidden", c.hidden},
              {"temperature", c.temperature},
              {"head", to_string(c.head)},
              {"overlap_epsilon", c.overlap_epsilon},
              {"stft", {{"sample_rate", c.stft.sample_rate}, {"window", c.stft.window}, {"hop", c.stft.hop}}},
              {"grid_rows", c.grid_rows},
              {"grid_frames", c.grid_frames},
              {"crop_size", c.crop_size},
              {"encoder_channels", c.encoder_channels},
              {"unet_depth", c.unet_depth},
              {"unet_base", c.unet_base},
              {"optimizer",
               {{"learning_rate", c.optimizer.learning_rate},
                {"beta1", c.optimizer.beta1},
                {"beta2", c.optimizer.beta2},
                {"epsilon", c.optimizer.epsilon},
                {"weight_decay", c.optimizer.weight_decay},
                {"grad_clip", c.optimizer.grad_clip}}},
              {"batch_size", c.batch_size},
              {"steps", c.steps},
              {"seed", c.seed},
              {"scene",
               {{"image_size", c.scene.image_size},
                {"categories", c.scene.categories},
                {"sample_rate", c.scene.sample_rate},
                {"clip_length", c.scene.clip_length},
                {"min_distractors", c.scene.min_distractors},
                {"max_distractors", c.scene.max_distractors}}},
              {"solos", c.solos},
              {"val_ratio", c.val_ratio},
              {"val_pairs", c.val_pairs},
              {"data_seed", c.data_seed},
              {"split_seed", c.split_seed},
              {"bss_filter_length", c.bss_filter_length}};
}

RunConfig config_from_json(const nlohmann::json& j) {
  try {
    RunConfig c;
    j.at("train_proposals").get_to(c.train_proposals);
    j.at("inference_proposals").get_to(c.inference_proposals);
    j.at("feature_dim").get_to(c.feature_dim);
    j.at("hidden").get_to(c.hidden);
    j.at("temperature").get_to(c.temperature);
    c.head = parse_mask_head(j.at("head").get<std::string>());
    j.at("overlap_epsilon").get_to(c.overlap_epsilon);
    j.at("stft").at("sample_rate").get_to(c.stft.sample_rate);
    j.at("stft").at("window").get_to(c.stft.window);
    j.at("stft").at("hop").get_to(c.stft.hop);
    j.at("grid_rows").get_to(c.grid_rows);
    j.at("grid_frames").get_to(c.grid_frames);
    j.at("crop_size").get_to(c.crop_size);
    j.at("encoder_channels").get_to(c.encoder_channels);
    j.at("unet_depth").get_to(c.unet_depth);
    j.at("unet_base").get_to(c.unet_base);
    const auto& o = j.at("optimizer");
    o.at("learning_rate").get_to(c.optimizer.learning_rate);
    o.at("beta1").get_to(c.optimizer.beta1);
    o.at("beta2").get_to(c.optimizer.beta2);
    o.at("epsilon").get_to(c.optimizer.epsilon);
    o.at("weight_decay").get_to(c.optimizer.weight_decay);
    o.at("grad_clip").get_to(c.optimizer.grad_clip);
    j.at("batch_size").get_to(c.batch_size);
    j.at("steps").get_to(c.steps);
    j.at("seed").get_to(c.seed);
    const auto& s = j.at("scene");
    s.at("image_size").get_to(c.scene.image_size);
    s.at("categories").get_to(c.scene.categories);
    s.at("sample_rate").get_to(c.scene.sample_rate);
    s.at("clip_length").get_to(c.scene.clip_length);
    s.at("min_distractors").get_to(c.scene.min_distractors);
    s.at("max_distractors").get_to(c.scene.max_distractors);
    j.at("solos").get_to(c.solos);
    j.at("val_ratio").get_to(c.val_ratio);
    j.at("val_pairs").get_to(c.val_pairs);
    j.at("data_seed").get_to(c.data_seed);
    j.at("split_seed").get_to(c.split_seed);
    j.at("bss_filter_length").get_to(c.bss_filter_length);
    return c;
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

std::string config_hash(const RunConfig& config) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(stable_hash(to_json(config).dump())));
  return buf;
}

RunConfig parse_config(const std::string& text, RunConfig base) {
  std::istringstream in(text);
  std::string line;
  Json flat = to_json(base).flatten();
  bool first = true;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (key == "preset") {
      if (!first) throw ConfigError("config: preset must come first");
      if (value == "desk") flat = to_json(desk_preset()).flatten();
      else if (value != "default") throw ConfigError("config: unknown preset '" + value + "'");
      first = false;
      continue;
    }
    first = false;
    std::string pointer = "/" + key;
    std::replace(pointer.begin(), pointer.end(), '.', '/');
    if (!flat.contains(pointer)) throw ConfigError("config: unknown key '" + key + "'");
    Json& slot = flat[pointer];
    try {
      std::size_t used = 0;
      if (slot.is_string()) {
        slot = value;
        used = value.size();
      } else if (slot.is_number_unsigned()) {
        if (value.starts_with('-')) throw std::invalid_argument("negative");
        slot = std::stoull(value, &used);
      } else if (slot.is_number_integer()) {
        slot = std::stoll(value, &used);
      } else if (slot.is_number_float()) {
        slot = std::stod(value, &used);
      } else if (slot.is_boolean()) {
        if (value != "true" && value != "false") throw std::invalid_argument("bool");
        slot = value == "true";
        used = value.size();
      }
      if (used != value.size()) throw std::invalid_argument("trailing text");
    } catch (const std::logic_error&) {
      throw ConfigError("config: bad value '" + value + "' for '" + key + "'");
    }
  }
  RunConfig out = config_from_json(flat.unflatten());
  out.validate();
  return out;
}

RunConfig load_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  std::stringstream text;
  text << in.rdbuf();
  return parse_config(text.str(), base);
}

Model::Model(const RunConfig& c) : config(c) {
  c.validate();
  std::mt19937_64 rng = seeded(c.seed, 1);
  encoder = nn::ConvEncoder<float>(c.encoder_config(), rng);
  selector = ScoreHead<float>(c.feature_dim, c.hidden, rng);
  unet = nn::ConditionedUNet<float>(c.unet_config(), rng);
}

nn::ParameterList<float> Model::parameters() {
  nn::ParameterList<float> out;
  encoder.collect(out);
  selector.collect(out);
  unet.collect(out);
  return out;
}

nn::ParameterList<float> Model::selector_parameters() {
  nn::ParameterList<float> out;
  selector.collect(out);
  return out;
}

nn::ParameterList<float> Model::encoder_parameters() {
  nn::ParameterList<float> out;
  encoder.collect(out);
  return out;
}

nn::ParameterList<float> Model::unet_parameters() {
  nn::ParameterList<float> out;
  unet.collect(out);
  return out;
}

TrainState::TrainState(const RunConfig& config)
    : rng(seeded(config.seed, 2)), optimizer(config.optimizer) {}

const std::vector<BoundingBox>& DataCache::proposals(const std::string& image_id,
                                                     const Image& image, int count) {
  auto key = std::make_pair(image_id, count);
  auto it = proposals_.find(key);
  if (it == proposals_.end() || image_id.empty())
    it = proposals_.insert_or_assign(key, propose_boxes(image, count, config_, image_id).boxes).first;
  return it->second;
}

const Eigen::ArrayXXcd& DataCache::spectrum(const std::string& clip_id, const AudioClip& clip,
                                            const StftConfig& config) {
  if (!(config == spectra_config_)) {
    spectra_.clear();
    spectra_config_ = config;
  }
  auto it = spectra_.find(clip_id);
  if (it == spectra_.end() || clip_id.empty())
    it = spectra_.insert_or_assign(clip_id, complex_spectrum(stft(clip, config))).first;
  return it->second;
}

Eigen::ArrayXXcd complex_spectrum(const Spectrogram& spec) {
  return spec.magnitude.binaryExpr(spec.phase,
                                   [](double m, double p) { return std::polar(m, p); });
}

Spectrogram from_complex(const Eigen::ArrayXXcd& spectrum, const StftConfig& config,
                         Eigen::Index length) {
  Spectrogram s;
  s.magnitude = spectrum.abs();
  s.phase = spectrum.arg();
  s.config = config;
  s.length = length;
  return s;
}

SpectrogramGrid make_grid(const RunConfig& config) {
  return SpectrogramGrid(config.stft.bins(), config.grid_rows, config.grid_frames);
}

Eigen::ArrayXXd network_input(const SpectrogramGrid& grid, const Eigen::ArrayXXd& magnitude) {
  return grid.to_grid(magnitude).log1p();
}

std::vector<SoloPair> sample_batch(const std::vector<SceneSample>& solos, int batch_size,
                                   std::mt19937_64& rng) {
  if (solos.size() < 2) throw InvalidInput("sample_batch: need at least two solos");
  std::uniform_int_distribution<std::size_t> pick(0, solos.size() - 1);
  std::vector<SoloPair> batch;
  int attempts = 0;
  while (static_cast<int>(batch.size()) < batch_size) {
    const auto i = pick(rng), j = pick(rng);
    if (solos[i].category_id != solos[j].category_id) batch.emplace_back(&solos[i], &solos[j]);
    if (++attempts > 1000 * batch_size) throw InvalidInput("sample_batch: solos share one category");
  }
  return batch;
}

StepResult train_step(Model& model, TrainState& state, const std::vector<SoloPair>& batch,
                      DataCache& cache, bool update) {
  const RunConfig& cfg = model.config;
  const int B = static_cast<int>(batch.size());
  const int N = cfg.train_proposals, S = cfg.crop_size, C = cfg.feature_dim;
  if (B == 0) throw InvalidInput("train_step: empty batch");
  for (const auto& [a, b] : batch)
    if (a == nullptr || b == nullptr) throw InvalidInput("train_step: null sample");

  auto params = model.parameters();
  for (auto* p : params) p->zero_grad();

  // Visual stream over all 2BN crops at once.
  nn::Tensor<float> crops(2 * B * N, 3, S, S);
  for (int k = 0; k < 2 * B; ++k) {
    const SceneSample& s = k % 2 == 0 ? *batch[k / 2].first : *batch[k / 2].second;
    const auto& boxes = cache.proposals(s.id, s.image, N);
    crops.data.middleCols(Eigen::Index(k) * N * S * S, Eigen::Index(N) * S * S) =
        crops_to_tensor(s.image, boxes, S).data;
  }
  const Matrix<float> features = model.encoder.forward(crops);
  const Vector<float> scores = model.selector.forward(features);

  std::vector<Matrix<float>> probs(B);
  std::vector<GumbelSample<float>> samples(B);
  Matrix<float> cond(C, 2 * B);
  StepResult result;
  for (int b = 0; b < B; ++b) {
    const Vector<float> s1 = scores.segment(2 * b * N, N), s2 = scores.segment((2 * b + 1) * N, N);
    probs[b] = pair_probabilities(s1, s2);
    samples[b] = st_gumbel_sample(probs[b], static_cast<float>(cfg.temperature), state.rng);
    const auto [v1, v2] = gather_selected_features<float>(features.middleCols(2 * b * N, N),
                                                          features.middleCols((2 * b + 1) * N, N),
                                                          samples[b].hard);
    cond.col(2 * b) = v1;
    cond.col(2 * b + 1) = v2;
    result.selected.emplace_back(static_cast<int>(samples[b].row), static_cast<int>(samples[b].col));
  }

  // Audio stream: mix, analyse, binary targets on the network grid.
  const SpectrogramGrid grid = make_grid(cfg);
  nn::Tensor<float> spec(2 * B, 1, cfg.grid_rows, cfg.grid_frames);
  std::vector<std::pair<Grid<float>, Grid<float>>> targets(B);
  for (int b = 0; b < B; ++b) {
    const SceneSample& a = *batch[b].first;
    const SceneSample& c = *batch[b].second;
    const Eigen::ArrayXXcd& x1 = cache.spectrum(a.id, a.audio, cfg.stft);
    const Eigen::ArrayXXcd& x2 = cache.spectrum(c.id, c.audio, cfg.stft);
    if (x1.cols() != x2.cols()) throw InvalidInput("train_step: solo clips differ in length");
    const Eigen::ArrayXXd input = network_input(grid, (x1 + x2).abs());
    grid_into(spec, 2 * b, input);
    grid_into(spec, 2 * b + 1, input);
    const auto [t1, t2] = binary_target_masks(grid.to_grid(x1.abs()), grid.to_grid(x2.abs()));
    targets[b] = {t1.cast<float>(), t2.cast<float>()};
  }

  const nn::Tensor<float> logits = model.unet.forward(spec, cond);
  nn::Tensor<float> grad_logits(logits.n, logits.c, logits.h, logits.w);
  double loss = 0.0;
  for (int b = 0; b < B; ++b) {
    const MaskLoss<float> ml = mask_loss<float>(cfg.head, grid_from(logits, 2 * b),
                                                grid_from(logits, 2 * b + 1), targets[b].first,
                                                targets[b].second);
    loss += ml.loss / B;
    grid_into(grad_logits, 2 * b, (ml.grad_u1 / float(B)).cast<double>());
    grid_into(grad_logits, 2 * b + 1, (ml.grad_u2 / float(B)).cast<double>());
  }

  // Backward through separator, gather, pair sample, score head, encoder.
  const Matrix<float> grad_cond = model.unet.backward(grad_logits);
  Matrix<float> grad_features = Matrix<float>::Zero(C, 2 * B * N);
  Vector<float> grad_scores = Vector<float>::Zero(2 * B * N);
  for (int b = 0; b < B; ++b) {
    const Vector<float> s1 = scores.segment(2 * b * N, N), s2 = scores.segment((2 * b + 1) * N, N);
    const auto g = gather_selected_features_backward<float>(
        features.middleCols(2 * b * N, N), features.middleCols((2 * b + 1) * N, N),
        samples[b].hard, grad_cond.col(2 * b), grad_cond.col(2 * b + 1));
    grad_features.middleCols(2 * b * N, N) += g.f1;
    grad_features.middleCols((2 * b + 1) * N, N) += g.f2;
    const Matrix<float> grad_p = st_gumbel_backward(samples[b], probs[b], g.d);
    const auto [g1, g2] = pair_probabilities_backward(s1, s2, grad_p);
    grad_scores.segment(2 * b * N, N) = g1;
    grad_scores.segment((2 * b + 1) * N, N) = g2;
  }
  grad_features += model.selector.backward(grad_scores);
  model.encoder.backward(grad_features);

  result.loss = loss;
  result.selector_grad_norm = norm_of(model.selector_parameters());
  result.encoder_grad_norm = norm_of(model.encoder_parameters());
  result.unet_grad_norm = norm_of(model.unet_parameters());
  if (update) {
    state.optimizer.step(params);
    state.running_loss = state.step == 0 ? loss : 0.95 * state.running_loss + 0.05 * loss;
    ++state.step;
  }
  return result;
}

SyntheticData make_synthetic_data(const RunConfig& config) {
  config.validate();
  std::vector<SceneSample> all = generate_solos(config.scene, config.solos, config.data_seed);
  std::vector<std::string> ids;
  std::vector<int> cats;
  for (const auto& s : all) {
    ids.push_back(s.id);
    cats.push_back(s.category_id);
  }
  const auto val = validation_membership(ids, cats, config.val_ratio);
  SyntheticData data;
  for (std::size_t i = 0; i < all.size(); ++i) (val[i] ? data.val : data.train).push_back(std::move(all[i]));
  std::vector<int> val_cats;
  for (const auto& s : data.val) val_cats.push_back(s.category_id);
  data.val_pairs = pair_cross_category(val_cats, config.val_pairs, config.split_seed);
  return data;
}

std::pair<Vector<float>, Matrix<float>> score_boxes(Model& model, const Image& image,
                                                    const std::vector<BoundingBox>& boxes) {
  Matrix<float> features = model.encoder.forward(crops_to_tensor(image, boxes, model.config.crop_size));
  Vector<float> scores = model.selector.forward(features);
  return {std::move(scores), std::move(features)};
}

Separation separate(Model& model, const AudioClip& mixture, const Matrix<float>& features) {
  if (mixture.sample_rate != model.config.stft.sample_rate)
    throw InvalidInput("separate: mixture sample rate differs from the model's");
  return separate(model, stft(mixture, model.config.stft), features);
}

Separation separate(Model& model, const Spectrogram& mixture, const Matrix<float>& features) {
  const RunConfig& cfg = model.config;
  if (features.rows() != cfg.feature_dim || features.cols() != 2)
    throw InvalidInput("separate: expected feature_dim x 2 features");
  if (!(mixture.config == cfg.stft)) throw InvalidInput("separate: STFT settings differ from the model's");
  if (mixture.frames() < cfg.grid_frames)
    throw InvalidInput("separate: mixture shorter than the network grid");
  const SpectrogramGrid grid = make_grid(cfg);
  Separation out;
  out.mixture = mixture;
  nn::Tensor<float> spec(2, 1, cfg.grid_rows, cfg.grid_frames);
  const Eigen::ArrayXXd input = network_input(grid, out.mixture.magnitude);
  grid_into(spec, 0, input);
  grid_into(spec, 1, input);
  const nn::Tensor<float> logits = model.unet.forward(spec, features);
  const auto [m1, m2] = apply_head<float>(cfg.head, grid_from(logits, 0), grid_from(logits, 1));
  out.grid_masks = {m1.cast<double>(), m2.cast<double>()};
  for (int k = 0; k < 2; ++k)
    out.clips[k] = apply_mask_reconstruct(out.mixture,
                                          grid.to_full(out.grid_masks[k], out.mixture.frames()));
  return out;
}

InferenceResult infer(Model& model, const Image& image, const AudioClip& mixture,
                      DataCache& cache, const std::string& image_id) {
  InferenceResult r;
  r.proposals = cache.proposals(image_id, image, model.config.inference_proposals);
  const auto [scores, features] = score_boxes(model, image, r.proposals);
  const std::vector<double> s(scores.data(), scores.data() + scores.size());
  r.selection = select_pair_inference(s, r.proposals, model.config.overlap_epsilon);
  r.boxes = {r.proposals[r.selection.first], r.proposals[r.selection.second]};
  Matrix<float> pair(features.rows(), 2);
  pair.col(0) = features.col(r.selection.first);
  pair.col(1) = features.col(r.selection.second);
  r.separation = separate(model, mixture, pair);
  return r;
}

namespace {

std::pair<BoundingBox, Vector<float>> top_box_with_feature(Model& model, const SceneSample& s,
                                                           DataCache& cache) {
  const auto& boxes = cache.proposals(s.id, s.image, model.config.train_proposals);
  const auto [scores, features] = score_boxes(model, s.image, boxes);
  Eigen::Index best = 0;
  scores.maxCoeff(&best);
  return {boxes[best], features.col(best)};
}

}  // namespace

BoundingBox top_box(Model& model, const Image& image, DataCache& cache,
                    const std::string& image_id) {
  const auto& boxes = cache.proposals(image_id, image, model.config.train_proposals);
  const auto scores = score_boxes(model, image, boxes).first;
  Eigen::Index best = 0;
  scores.maxCoeff(&best);
  return boxes[best];
}

std::vector<EvaluationReport> evaluate(const std::vector<Estimator>& estimators,
                                       const std::vector<SceneSample>& solos,
                                       const std::vector<std::pair<int, int>>& pairs,
                                       const RunConfig& config, DataCache& cache) {
  std::vector<EvaluationReport> reports(estimators.size());
  for (std::size_t e = 0; e < estimators.size(); ++e) {
    reports[e].name = estimators[e].name;
    if (estimators[e].mode == EvalMode::Model && estimators[e].model == nullptr)
      throw InvalidInput("evaluate: model estimator without a model");
  }
  // Visual features per (model, solo) are reused across pairs.
  std::vector<std::map<int, Vector<float>>> feature_cache(estimators.size());
  auto feature_of = [&](std::size_t e, int idx) -> const Vector<float>& {
    auto it = feature_cache[e].find(idx);
    if (it == feature_cache[e].end())
      it = feature_cache[e]
               .emplace(idx, top_box_with_feature(*estimators[e].model, solos.at(idx), cache).second)
               .first;
    return it->second;
  };

  for (const auto& [i, j] : pairs) {
    const SceneSample& a = solos.at(i);
    const SceneSample& b = solos.at(j);
    const AudioClip mixture = mix(a.audio, b.audio);
    const Eigen::ArrayXXcd& x1 = cache.spectrum(a.id, a.audio, config.stft);
    const Eigen::ArrayXXcd& x2 = cache.spectrum(b.id, b.audio, config.stft);
    const Spectrogram spec = from_complex(x1 + x2, config.stft, mixture.size());
    const BssEvaluator evaluator({a.audio.samples, b.audio.samples}, config.bss_filter_length);
    const std::string id = a.id + "+" + b.id;
    for (std::size_t e = 0; e < estimators.size(); ++e) {
      std::vector<Eigen::ArrayXd> estimates;
      switch (estimators[e].mode) {
        case EvalMode::Identity:
          estimates = {mixture.samples, mixture.samples};
          break;
        case EvalMode::IdealBinaryMask: {
          const auto [m1, m2] = binary_target_masks(x1.abs(), x2.abs());
          estimates = {apply_mask_reconstruct(spec, m1).samples,
                       apply_mask_reconstruct(spec, m2).samples};
          break;
        }
        case EvalMode::Model: {
          Model& model = *estimators[e].model;
          Matrix<float> f(model.config.feature_dim, 2);
          f.col(0) = feature_of(e, i);
          f.col(1) = feature_of(e, j);
          const Separation sep = separate(model, spec, f);
          estimates = {sep.clips[0].samples, sep.clips[1].samples};
          break;
        }
      }
      const BssEvalResult result = evaluator.evaluate(estimates);
      for (int k = 0; k < 2; ++k) reports[e].rows.push_back(MetricRow{id, k, result.scores[k]});
    }
  }
  for (auto& r : reports) r.mean = mean_scores(r.rows);
  return reports;
}

double top1_hit_rate(Model& model, const std::vector<SceneSample>& solos, DataCache& cache,
                     double threshold) {
  if (solos.empty()) throw InvalidInput("top1_hit_rate: no samples");
  int hits = 0;
  for (const auto& s : solos)
    if (iou(top_box(model, s.image, cache, s.id), s.gt_box) >= threshold) ++hits;
  return static_cast<double>(hits) / static_cast<double>(solos.size());
}

void save_checkpoint(const std::filesystem::path& dir, Model& model, const TrainState& state) {
  std::filesystem::create_directories(dir);
  TensorArchive archive;
  for (auto* p : model.parameters()) {
    archive["param/" + p->name] = p->value;
    if (auto it = state.optimizer.moments().find(p->name); it != state.optimizer.moments().end()) {
      archive["adam_m/" + p->name] = it->second.first;
      archive["adam_v/" + p->name] = it->second.second;
    }
  }
  write_tensor_archive(dir / "model.tensors", archive);
  std::ostringstream rng;
  rng << state.rng;
  const Json manifest{{"config_hash", config_hash(model.config)},
                      {"step", state.step},
                      {"head", to_string(model.config.head)},
                      {"optimizer_steps", state.optimizer.steps()},
                      {"running_loss", state.running_loss},
                      {"rng", rng.str()},
                      {"tensors", "model.tensors"},
                      {"config", to_json(model.config)}};
  std::ofstream out(dir / "manifest.json");
  out << manifest.dump(2) << '\n';
  if (!out) throw DataError("save_checkpoint: cannot write " + (dir / "manifest.json").string());
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw DataError("load_checkpoint: no manifest in " + dir.string());
  Json manifest;
  try {
    manifest = Json::parse(in);
  } catch (const Json::exception& e) {
    throw DataError(std::string("load_checkpoint: bad manifest: ") + e.what());
  }
  RunConfig config;
  try {
    config = config_from_json(manifest.at("config"));
    if (manifest.at("config_hash").get<std::string>() != config_hash(config))
      throw DataError("load_checkpoint: config hash does not match the stored config");
    if (manifest.at("head").get<std::string>() != to_string(config.head))
      throw DataError("load_checkpoint: head type does not match the stored config");
  } catch (const ConfigError& e) {
    throw DataError(std::string("load_checkpoint: ") + e.what());
  } catch (const Json::exception& e) {
    throw DataError(std::string("load_checkpoint: ") + e.what());
  }

  Checkpoint ck;
  ck.model = std::make_unique<Model>(config);
  ck.state = std::make_unique<TrainState>(config);
  const TensorArchive archive = read_tensor_archive(dir / "model.tensors");
  for (auto* p : ck.model->parameters()) {
    auto it = archive.find("param/" + p->name);
    if (it == archive.end()) throw DataError("load_checkpoint: missing tensor " + p->name);
    if (it->second.rows() != p->value.rows() || it->second.cols() != p->value.cols())
      throw DataError("load_checkpoint: shape mismatch for " + p->name);
    p->value = it->second;
    auto m = archive.find("adam_m/" + p->name), v = archive.find("adam_v/" + p->name);
    if (m != archive.end() && v != archive.end())
      ck.state->optimizer.moments()[p->name] = {m->second, v->second};
  }
  ck.state->step = manifest.value("step", 0L);
  ck.state->optimizer.set_steps(manifest.value("optimizer_steps", 0L));
  ck.state->running_loss = manifest.value("running_loss", 0.0);
  std::istringstream rng(manifest.value("rng", std::string{}));
  rng >> ck.state->rng;
  if (!rng) throw DataError("load_checkpoint: bad RNG state");
  return ck;
}

}  // namespace avsep
