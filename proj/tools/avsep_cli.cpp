// avsep: synthetic data, training, inference, evaluation and plots.
//
// Exit codes: 0 success, 2 configuration error, 3 data error, 1 anything else.

#include "avsep/image.hpp"
#include "avsep/io.hpp"
#include "avsep/pipeline.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <fstream>
#include <iostream>
#include <optional>

using namespace avsep;
namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string head;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "key = value config file");
  cmd->add_option("--seed", c.seed, "run seed (weights, batches, sampling)");
  cmd->add_option("--head", c.head, "mask head")->check(CLI::IsMember({"sigmoid", "softmax"}));
}

RunConfig resolve(const Common& c, RunConfig base = desk_preset()) {
  RunConfig cfg = c.config_path.empty() ? base : load_config(c.config_path, base);
  if (c.seed) cfg.seed = *c.seed;
  if (!c.head.empty()) cfg.head = parse_mask_head(c.head);
  cfg.validate();
  return cfg;
}

// Loads a model; --seed/--head may not contradict the checkpoint.
Checkpoint open_checkpoint(const std::string& dir, const Common& c) {
  Checkpoint ck = load_checkpoint(dir);
  if (!c.head.empty() && parse_mask_head(c.head) != ck.model->config.head)
    throw ConfigError("--head " + c.head + " differs from the checkpoint's " +
                      to_string(ck.model->config.head) + " head");
  return ck;
}

AudioClip fit_clip(AudioClip clip, const RunConfig& cfg) {
  clip = resample(clip, cfg.stft.sample_rate);
  const Eigen::Index need = std::max<Eigen::Index>(clip.size(),
                                                   Eigen::Index(cfg.grid_frames - 1) * cfg.stft.hop);
  if (clip.size() < need) {
    Eigen::ArrayXd padded = Eigen::ArrayXd::Zero(need);
    padded.head(clip.size()) = clip.samples;
    clip.samples = std::move(padded);
  }
  return clip;
}

int gen_data(const Common& common, const std::string& out, int duets) {
  const RunConfig cfg = resolve(common);
  const SyntheticData data = make_synthetic_data(cfg);
  fs::create_directories(out);
  std::ofstream manifest(fs::path(out) / "manifest.jsonl");
  if (!manifest) throw DataError("cannot write " + (fs::path(out) / "manifest.jsonl").string());
  auto tagged = [](const std::string& line, const char* split) {
    auto j = nlohmann::json::parse(line);
    j["split"] = split;
    return j.dump();
  };
  for (const auto& s : data.train) manifest << tagged(save_solo(fs::path(out) / "solo", s), "train") << '\n';
  for (const auto& s : data.val) manifest << tagged(save_solo(fs::path(out) / "solo", s), "val") << '\n';
  for (int k = 0; k < duets; ++k) {
    const int a = k % cfg.scene.categories;
    const int b = (a + 1 + (k / cfg.scene.categories) % (cfg.scene.categories - 1)) % cfg.scene.categories;
    const DuetSample d = generate_duet(cfg.scene, a, b, cfg.data_seed + 100000 + k);
    manifest << tagged(save_duet(fs::path(out) / "duet", d), "test") << '\n';
  }
  std::ofstream pairs(fs::path(out) / "val_pairs.jsonl");
  for (const auto& [i, j] : data.val_pairs)
    pairs << nlohmann::json{{"first", data.val[i].id}, {"second", data.val[j].id}}.dump() << '\n';
  std::cout << "wrote " << data.train.size() << " train + " << data.val.size() << " val solos, "
            << duets << " duets to " << out << '\n';
  return 0;
}

int train(const Common& common, const std::string& out, const std::string& resume,
          std::optional<int> steps, int log_every, int save_every) {
  std::unique_ptr<Model> model;
  std::unique_ptr<TrainState> state;
  if (!resume.empty()) {
    Checkpoint ck = open_checkpoint(resume, common);
    model = std::move(ck.model);
    state = std::move(ck.state);
  } else {
    const RunConfig cfg = resolve(common);
    model = std::make_unique<Model>(cfg);
    state = std::make_unique<TrainState>(cfg);
  }
  const RunConfig& cfg = model->config;
  const int total = steps.value_or(cfg.steps);
  const std::string hash = config_hash(cfg);
  const SyntheticData data = make_synthetic_data(cfg);
  DataCache cache;
  const auto t0 = std::chrono::steady_clock::now();
  std::cout << "config " << hash << " head " << to_string(cfg.head) << " seed " << cfg.seed
            << " from step " << state->step << " to " << total << '\n';
  while (state->step < total) {
    const auto batch = sample_batch(data.train, cfg.batch_size, state->rng);
    const StepResult r = train_step(*model, *state, batch, cache);
    if (config_hash(model->config) != hash) throw ConfigError("config changed during training");
    if (log_every > 0 && state->step % log_every == 0) {
      const double secs =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      std::cout << "step " << state->step << " loss " << r.loss << " avg " << state->running_loss
                << " |g_sel| " << r.selector_grad_norm << " |g_enc| " << r.encoder_grad_norm
                << " " << secs << "s" << std::endl;
    }
    if (save_every > 0 && state->step % save_every == 0) save_checkpoint(out, *model, *state);
  }
  save_checkpoint(out, *model, *state);
  std::cout << "top-1 box hit rate on val solos "
            << top1_hit_rate(*model, data.val, cache) << '\n'
            << "saved " << out << '\n';
  return 0;
}

void write_selection(const fs::path& path, const std::string& image_id,
                     const InferenceResult& r, Model& model, const Image& image) {
  const auto scores = score_boxes(model, image, r.proposals).first;
  const nlohmann::json j{{"image_id", image_id},
                         {"box_indices", {r.selection.first, r.selection.second}},
                         {"scores", {scores[r.selection.first], scores[r.selection.second]}},
                         {"fallback", r.selection.fallback}};
  std::ofstream(path) << j.dump(2) << '\n';
}

int infer_cmd(const Common& common, const std::string& checkpoint, const std::string& image_path,
              const std::string& audio_path, const std::string& out, bool pcm16) {
  Checkpoint ck = open_checkpoint(checkpoint, common);
  Model& model = *ck.model;
  const Image image = read_png(image_path);
  const AudioClip audio = fit_clip(read_wav(audio_path), model.config);
  DataCache cache;
  const std::string id = fs::path(image_path).stem().string();
  const InferenceResult r = infer(model, image, audio, cache, id);
  fs::create_directories(out);
  {
    std::ofstream props(fs::path(out) / "proposals.jsonl");
    write_proposals_jsonl(props, ProposalSet{r.proposals, id});
  }
  write_selection(fs::path(out) / "selection.json", id, r, model, image);
  for (int k = 0; k < 2; ++k) {
    write_wav(fs::path(out) / ("source" + std::to_string(k) + ".wav"), r.separation.clips[k],
              pcm16 ? WavEncoding::Pcm16 : WavEncoding::Float32);
    write_grid_png(fs::path(out) / ("mask" + std::to_string(k) + ".png"), r.separation.grid_masks[k]);
  }
  std::cout << "boxes " << r.selection.first << " " << r.selection.second
            << (r.selection.fallback ? " (fallback)" : "") << " -> " << out << '\n';
  return 0;
}

int eval_cmd(const Common& common, const std::string& checkpoint, const std::string& mode,
             const std::string& out) {
  std::unique_ptr<Model> model;
  RunConfig cfg;
  if (mode == "model") {
    if (checkpoint.empty()) throw ConfigError("eval --mode model needs --checkpoint");
    model = std::move(open_checkpoint(checkpoint, common).model);
    cfg = model->config;
  } else {
    cfg = checkpoint.empty() ? resolve(common) : open_checkpoint(checkpoint, common).model->config;
  }
  const EvalMode m = mode == "model" ? EvalMode::Model
                     : mode == "ibm" ? EvalMode::IdealBinaryMask
                                     : EvalMode::Identity;
  const SyntheticData data = make_synthetic_data(cfg);
  DataCache cache;
  const auto reports = evaluate({{mode, m, model.get()}}, data.val, data.val_pairs, cfg, cache);
  std::ofstream csv(out);
  if (!csv) throw DataError("cannot write " + out);
  write_metrics_csv(csv, reports[0].rows);
  std::cout << mode << " mean SDR " << reports[0].mean.sdr << " SIR " << reports[0].mean.sir
            << " SAR " << reports[0].mean.sar << " over " << data.val_pairs.size() << " pairs\n";
  if (model) std::cout << "top-1 box hit rate " << top1_hit_rate(*model, data.val, cache) << '\n';
  return 0;
}

int plot_cmd(const Common& common, const std::string& checkpoint, const std::string& image_path,
             const std::string& audio_path, const std::string& out) {
  Checkpoint ck = open_checkpoint(checkpoint, common);
  Model& model = *ck.model;
  const Image image = read_png(image_path);
  const AudioClip audio = fit_clip(read_wav(audio_path), model.config);
  DataCache cache;
  const InferenceResult r = infer(model, image, audio, cache, fs::path(image_path).stem().string());
  fs::create_directories(out);

  const SpectrogramGrid grid = make_grid(model.config);
  Eigen::ArrayXXd shown = network_input(grid, r.separation.mixture.magnitude);
  if (shown.maxCoeff() > 0) shown /= shown.maxCoeff();
  write_grid_png(fs::path(out) / "mixture_spectrogram.png", shown);
  write_spectrogram_dump(fs::path(out) / "mixture_spectrogram.npy", r.separation.mixture);
  for (int k = 0; k < 2; ++k) {
    write_grid_png(fs::path(out) / ("mask" + std::to_string(k) + ".png"), r.separation.grid_masks[k]);
    write_grid_png(fs::path(out) / ("masked" + std::to_string(k) + ".png"),
                   shown * r.separation.grid_masks[k]);
  }
  Image overlay = image;
  for (const auto& b : r.proposals) draw_box(overlay, b, {0.4f, 0.4f, 0.4f});
  draw_box(overlay, r.boxes[0], {1.0f, 0.2f, 0.2f}, 2);
  draw_box(overlay, r.boxes[1], {0.2f, 0.6f, 1.0f}, 2);
  write_png(fs::path(out) / "boxes.png", overlay);
  std::cout << "plots -> " << out << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"audio-visual object selection and separation"};
  app.require_subcommand(1);

  Common common;
  std::string out, checkpoint, image, audio, resume, mode = "model";
  int duets = 20, log_every = 25, save_every = 0;
  std::optional<int> steps;
  bool pcm16 = false;

  auto* gen = app.add_subcommand("gen-data", "write synthetic solos and duets to disk");
  add_common(gen, common);
  gen->add_option("--out", out, "output directory")->required();
  gen->add_option("--duets", duets, "number of duet scenes")->check(CLI::NonNegativeNumber);

  auto* tr = app.add_subcommand("train", "train on synthetic solos");
  add_common(tr, common);
  tr->add_option("--out", out, "checkpoint directory")->required();
  tr->add_option("--resume", resume, "checkpoint to continue from");
  tr->add_option("--steps", steps, "total steps (overrides config)");
  tr->add_option("--log-every", log_every);
  tr->add_option("--save-every", save_every);

  auto* inf = app.add_subcommand("infer", "select two sounding boxes and separate a duet");
  add_common(inf, common);
  inf->add_option("--checkpoint", checkpoint)->required();
  inf->add_option("--image", image)->required();
  inf->add_option("--audio", audio)->required();
  inf->add_option("--out", out)->required();
  inf->add_flag("--pcm16", pcm16, "write 16-bit PCM instead of float WAV");

  auto* ev = app.add_subcommand("eval", "mix-and-separate evaluation on synthetic validation pairs");
  add_common(ev, common);
  ev->add_option("--checkpoint", checkpoint);
  ev->add_option("--mode", mode)->check(CLI::IsMember({"model", "ibm", "identity"}));
  ev->add_option("--out", out, "metrics CSV")->required();

  auto* pl = app.add_subcommand("plot", "spectrogram, mask and box overlay images");
  add_common(pl, common);
  pl->add_option("--checkpoint", checkpoint)->required();
  pl->add_option("--image", image)->required();
  pl->add_option("--audio", audio)->required();
  pl->add_option("--out", out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*gen) return gen_data(common, out, duets);
    if (*tr) return train(common, out, resume, steps, log_every, save_every);
    if (*inf) return infer_cmd(common, checkpoint, image, audio, out, pcm16);
    if (*ev) return eval_cmd(common, checkpoint, mode, out);
    if (*pl) return plot_cmd(common, checkpoint, image, audio, out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  } catch (const InvalidInput& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
