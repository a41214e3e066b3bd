#ifndef AVSEP_PIPELINE_HPP
#define AVSEP_PIPELINE_HPP

#include "avsep/audio.hpp"
#include "avsep/dataset.hpp"
#include "avsep/metrics.hpp"
#include "avsep/nn/encoder.hpp"
#include "avsep/nn/optim.hpp"
#include "avsep/nn/unet.hpp"
#include "avsep/proposals.hpp"
#include "avsep/selector.hpp"
#include "avsep/separator.hpp"

#include <json.hpp>

#include <array>
#include <filesystem>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace avsep {

/// Everything that defines a run. Defaults follow the full-size model; the
/// desk-scale preset shrinks crops, the spectrogram grid and the U-Net.
struct RunConfig {
  int train_proposals = 10;      // N
  int inference_proposals = 80;  // M
  int feature_dim = 32;          // C
  int hidden = 128;
  double temperature = 1.0;
  MaskHead head = MaskHead::Softmax;
  double overlap_epsilon = 0.0;

  StftConfig stft;
  int grid_rows = 256;
  int grid_frames = 256;

  int crop_size = 224;
  std::array<int, 4> encoder_channels{16, 32, 64, 64};
  int unet_depth = 7;
  int unet_base = 32;

  nn::AdamOptions optimizer;
  int batch_size = 8;
  int steps = 3000;

  std::uint64_t seed = 1;
  SceneConfig scene{256, 7, 11025, 65535, 1, 3};
  int solos = 2000;
  double val_ratio = 0.1;
  int val_pairs = 200;
  std::uint64_t data_seed = 1000;
  std::uint64_t split_seed = 77;
  int bss_filter_length = 512;

  nn::EncoderConfig encoder_config() const;
  nn::UNetConfig unet_config() const;
  /// Throws ConfigError on inconsistent settings.
  void validate() const;
};

/// Small-image, short-clip settings sized for a single-core training run of a
/// few minutes.
RunConfig desk_preset();

nlohmann::json to_json(const RunConfig& config);
RunConfig config_from_json(const nlohmann::json& j);
/// 16 hex digits of FNV-1a over the canonical JSON form.
std::string config_hash(const RunConfig& config);

/// `key = value` lines; `#` starts a comment; keys are dotted paths of the
/// JSON form (e.g. `stft.hop`, `optimizer.learning_rate`). The first line
/// may be `preset = desk` to start from the desk preset.
RunConfig parse_config(const std::string& text, RunConfig base = {});
RunConfig load_config(const std::filesystem::path& path, RunConfig base = {});

struct Model {
  RunConfig config;
  nn::ConvEncoder<float> encoder;
  ScoreHead<float> selector;
  nn::ConditionedUNet<float> unet;

  /// Weights are drawn from config.seed; the head choice does not affect them.
  explicit Model(const RunConfig& config);

  nn::ParameterList<float> parameters();
  nn::ParameterList<float> selector_parameters();
  nn::ParameterList<float> encoder_parameters();
  nn::ParameterList<float> unet_parameters();
};

struct TrainState {
  long step = 0;
  std::mt19937_64 rng;
  double running_loss = 0.0;
  nn::Adam<float> optimizer;

  explicit TrainState(const RunConfig& config);
};

/// Per-sample work that does not depend on the model: proposals for each
/// image and the complex spectrum of each solo clip. Mixture spectra are sums
/// of cached solo spectra (the transform is linear).
class DataCache {
 public:
  explicit DataCache(ProposalConfig config = {}) : config_(config) {}
  /// An empty id bypasses the cache.
  const std::vector<BoundingBox>& proposals(const std::string& image_id, const Image& image,
                                            int count);
  const Eigen::ArrayXXcd& spectrum(const std::string& clip_id, const AudioClip& clip,
                                   const StftConfig& config);

 private:
  ProposalConfig config_;
  std::map<std::pair<std::string, int>, std::vector<BoundingBox>> proposals_;
  std::map<std::string, Eigen::ArrayXXcd> spectra_;
  StftConfig spectra_config_;
};

Eigen::ArrayXXcd complex_spectrum(const Spectrogram& spec);
Spectrogram from_complex(const Eigen::ArrayXXcd& spectrum, const StftConfig& config,
                         Eigen::Index length);

/// Network input for a magnitude spectrogram: log1p of the grid warp.
Eigen::ArrayXXd network_input(const SpectrogramGrid& grid, const Eigen::ArrayXXd& magnitude);
SpectrogramGrid make_grid(const RunConfig& config);

using SoloPair = std::pair<const SceneSample*, const SceneSample*>;

struct StepResult {
  double loss = 0.0;
  double selector_grad_norm = 0.0;
  double encoder_grad_norm = 0.0;
  double unet_grad_norm = 0.0;
  std::vector<std::pair<int, int>> selected;  // sampled (row, col) per pair
};

/// One mix-and-separate step over `batch`. Gradients reach the encoder and
/// the score head only through the straight-through pair sample. With
/// `update` false the parameters and state are left alone (gradients stay
/// populated).
StepResult train_step(Model& model, TrainState& state, const std::vector<SoloPair>& batch,
                      DataCache& cache, bool update = true);

/// Uniformly random cross-category pairs drawn from state.rng.
std::vector<SoloPair> sample_batch(const std::vector<SceneSample>& solos, int batch_size,
                                   std::mt19937_64& rng);

struct SyntheticData {
  std::vector<SceneSample> train;
  std::vector<SceneSample> val;
  std::vector<std::pair<int, int>> val_pairs;  // indices into val
};

SyntheticData make_synthetic_data(const RunConfig& config);

/// Separation of `mixture` conditioned on two visual feature columns.
struct Separation {
  std::array<AudioClip, 2> clips;
  std::array<Eigen::ArrayXXd, 2> grid_masks;
  Spectrogram mixture;
};

Separation separate(Model& model, const AudioClip& mixture, const Matrix<float>& features);
Separation separate(Model& model, const Spectrogram& mixture, const Matrix<float>& features);

/// Scores of every proposal box and their encoder features (C x n).
std::pair<Vector<float>, Matrix<float>> score_boxes(Model& model, const Image& image,
                                                    const std::vector<BoundingBox>& boxes);

struct InferenceResult {
  std::vector<BoundingBox> proposals;
  PairSelection selection;
  std::array<BoundingBox, 2> boxes;
  Separation separation;
};

/// Duet inference: M proposals, best non-overlapping pair, two separations.
InferenceResult infer(Model& model, const Image& image, const AudioClip& mixture,
                      DataCache& cache, const std::string& image_id = {});

/// Solo selection used in validation: the highest scoring of N proposals.
BoundingBox top_box(Model& model, const Image& image, DataCache& cache,
                    const std::string& image_id);

enum class EvalMode { Model, IdealBinaryMask, Identity };

struct Estimator {
  std::string name;
  EvalMode mode = EvalMode::Model;
  Model* model = nullptr;
};

struct EvaluationReport {
  std::string name;
  std::vector<MetricRow> rows;  // two per pair
  BssScores mean;
};

/// Mix-and-separate evaluation of several estimators on the same pairs; the
/// bss_eval projection for each pair is built once and shared.
std::vector<EvaluationReport> evaluate(const std::vector<Estimator>& estimators,
                                       const std::vector<SceneSample>& solos,
                                       const std::vector<std::pair<int, int>>& pairs,
                                       const RunConfig& config, DataCache& cache);

/// Fraction of solos whose top box has IoU >= threshold with the ground truth.
double top1_hit_rate(Model& model, const std::vector<SceneSample>& solos, DataCache& cache,
                     double threshold = 0.3);

/// `dir/model.tensors` (weights and optimizer moments) plus `dir/manifest.json`
/// with the config, its hash, the step, the head type and RNG state.
void save_checkpoint(const std::filesystem::path& dir, Model& model, const TrainState& state);

struct Checkpoint {
  std::unique_ptr<Model> model;
  std::unique_ptr<TrainState> state;
};

/// Throws DataError on missing or mismatched files.
Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace avsep

#endif  // AVSEP_PIPELINE_HPP
