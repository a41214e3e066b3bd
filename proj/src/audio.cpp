#include "avsep/audio.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <string>
#include <vector>

namespace avsep {

Eigen::ArrayXd hann_window(int length) {
  Eigen::ArrayXd w(length);
  for (int n = 0; n < length; ++n)
    w[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / length);
  return w;
}

void StftConfig::validate() const {
  if (sample_rate <= 0) throw ConfigError("stft: sample_rate must be positive");
  if (window < 4) throw ConfigError("stft: window must be at least 4 samples");
  if (hop < 1) throw ConfigError("stft: hop must be positive");
  if (hop > window / 2)
    throw ConfigError("stft: hop " + std::to_string(hop) +
                      " exceeds half the window; edges are not recoverable");
  const Eigen::ArrayXd w2 = hann_window(window).square();
  Eigen::ArrayXd overlap = Eigen::ArrayXd::Zero(hop);
  for (int n = 0; n < window; ++n) overlap[n % hop] += w2[n];
  if (overlap.minCoeff() < 1e-3 * overlap.maxCoeff())
    throw ConfigError("stft: window/hop pair fails the overlap-add condition");
}

AudioClip mix(const AudioClip& r1, const AudioClip& r2) {
  if (r1.sample_rate != r2.sample_rate)
    throw InvalidInput("mix: sample rates differ");
  if (r1.size() != r2.size()) throw InvalidInput("mix: lengths differ");
  return AudioClip{r1.samples + r2.samples, r1.sample_rate};
}

Spectrogram stft(const AudioClip& clip, const StftConfig& config) {
  config.validate();
  if (clip.sample_rate != config.sample_rate)
    throw InvalidInput("stft: clip sample rate does not match configuration");
  if (clip.size() < 1) throw InvalidInput("stft: empty clip");

  const int n_fft = config.window;
  const int pad = n_fft / 2;
  const int frames = config.frames(clip.size());
  const int bins = config.bins();
  const Eigen::ArrayXd window = hann_window(n_fft);

  Eigen::ArrayXd padded = Eigen::ArrayXd::Zero(clip.size() + 2 * pad + n_fft);
  padded.segment(pad, clip.size()) = clip.samples;

  Spectrogram spec;
  spec.config = config;
  spec.length = clip.size();
  spec.magnitude.resize(bins, frames);
  spec.phase.resize(bins, frames);

  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<double> frame(n_fft);
  std::vector<std::complex<double>> out;
  for (int t = 0; t < frames; ++t) {
    const Eigen::Index start = static_cast<Eigen::Index>(t) * config.hop;
    for (int n = 0; n < n_fft; ++n) frame[n] = padded[start + n] * window[n];
    fft.fwd(out, frame);
    for (int f = 0; f < bins; ++f) {
      spec.magnitude(f, t) = std::abs(out[f]);
      spec.phase(f, t) = std::arg(out[f]);
    }
  }
  return spec;
}

AudioClip istft(const Spectrogram& spec) {
  const StftConfig& config = spec.config;
  config.validate();
  const int n_fft = config.window;
  const int pad = n_fft / 2;
  const int bins = config.bins();
  if (spec.bins() != bins || spec.phase.rows() != spec.magnitude.rows() ||
      spec.phase.cols() != spec.magnitude.cols())
    throw InvalidInput("istft: spectrogram shape does not match configuration");
  if (spec.frames() != config.frames(spec.length))
    throw InvalidInput("istft: frame count does not match clip length");

  const Eigen::ArrayXd window = hann_window(n_fft);
  const Eigen::Index total = static_cast<Eigen::Index>(spec.frames() - 1) * config.hop + n_fft;
  Eigen::ArrayXd acc = Eigen::ArrayXd::Zero(total);
  Eigen::ArrayXd norm = Eigen::ArrayXd::Zero(total);

  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<std::complex<double>> half(bins);
  std::vector<double> frame;
  for (Eigen::Index t = 0; t < spec.frames(); ++t) {
    for (int f = 0; f < bins; ++f)
      half[f] = std::polar(spec.magnitude(f, t), spec.phase(f, t));
    fft.inv(frame, half, n_fft);
    const Eigen::Index start = t * config.hop;
    for (int n = 0; n < n_fft; ++n) {
      acc[start + n] += frame[n] * window[n];
      norm[start + n] += window[n] * window[n];
    }
  }

  AudioClip clip;
  clip.sample_rate = config.sample_rate;
  clip.samples = acc.segment(pad, spec.length) /
                 norm.segment(pad, spec.length).max(1e-12);
  return clip;
}

AudioClip apply_mask_reconstruct(const Spectrogram& spec, const Eigen::ArrayXXd& mask) {
  if (mask.rows() != spec.bins() || mask.cols() != spec.frames())
    throw InvalidInput("apply_mask_reconstruct: mask shape does not match spectrogram");
  Spectrogram masked = spec;
  masked.magnitude = spec.magnitude * mask;
  return istft(masked);
}

SpectrogramGrid::SpectrogramGrid(int bins, int rows, int frames) : frames_(frames) {
  if (bins < 4 || rows < 2 || frames < 1)
    throw InvalidInput("SpectrogramGrid: need >= 4 bins, >= 2 rows, >= 1 frame");
  const double lo = 0.0, hi = std::log(static_cast<double>(bins - 1));
  const double step = (hi - lo) / (rows - 1);

  pool_ = Eigen::MatrixXd::Zero(rows, bins);
  for (int r = 0; r < rows; ++r) {
    const double centre = std::exp(lo + r * step);
    const int first = static_cast<int>(std::ceil(std::exp(lo + (r - 0.5) * step)));
    const int last = static_cast<int>(std::ceil(std::exp(lo + (r + 0.5) * step)));  // exclusive
    if (r > 0 && r < rows - 1 && last - first >= 2) {
      for (int k = first; k < std::min(last, bins); ++k) pool_(r, k) = 1.0 / (last - first);
    } else {
      const int k0 = std::min(static_cast<int>(std::floor(centre)), bins - 1);
      const int k1 = std::min(k0 + 1, bins - 1);
      const double frac = centre - k0;
      pool_(r, k0) += 1.0 - frac;
      pool_(r, k1) += frac;
    }
  }

  spread_ = Eigen::MatrixXd::Zero(bins, rows);
  for (int k = 0; k < bins; ++k) {
    const double pos =
        k == 0 ? 0.0 : std::clamp((std::log(static_cast<double>(k)) - lo) / step, 0.0, rows - 1.0);
    const int r0 = std::min(static_cast<int>(std::floor(pos)), rows - 1);
    const int r1 = std::min(r0 + 1, rows - 1);
    spread_(k, r0) += 1.0 - (pos - r0);
    spread_(k, r1) += pos - r0;
  }
}

Eigen::ArrayXXd SpectrogramGrid::to_grid(const Eigen::ArrayXXd& full) const {
  if (full.rows() != bins()) throw InvalidInput("SpectrogramGrid: bin count mismatch");
  Eigen::MatrixXd cropped = Eigen::MatrixXd::Zero(bins(), frames_);
  const Eigen::Index keep = std::min<Eigen::Index>(frames_, full.cols());
  cropped.leftCols(keep) = full.matrix().leftCols(keep);
  return (pool_ * cropped).array();
}

Eigen::ArrayXXd SpectrogramGrid::to_full(const Eigen::ArrayXXd& grid, Eigen::Index frames) const {
  if (grid.rows() != rows() || grid.cols() != frames_)
    throw InvalidInput("SpectrogramGrid: grid shape mismatch");
  const Eigen::MatrixXd spread = spread_ * grid.matrix();
  Eigen::ArrayXXd full(bins(), frames);
  for (Eigen::Index t = 0; t < frames; ++t)
    full.col(t) = spread.col(std::min<Eigen::Index>(t, frames_ - 1)).array();
  return full;
}

double relative_rms_error(const Eigen::ArrayXd& estimate, const Eigen::ArrayXd& reference) {
  if (estimate.size() != reference.size())
    throw InvalidInput("relative_rms_error: length mismatch");
  const double ref = reference.matrix().norm();
  const double err = (estimate - reference).matrix().norm();
  return ref > 0.0 ? err / ref : err;
}

}  // namespace avsep
