#ifndef AVSEP_AUDIO_HPP
#define AVSEP_AUDIO_HPP

#include "avsep/types.hpp"

#include <Eigen/Core>

#include <utility>

namespace avsep {

/// Short-time Fourier transform settings. Frames are centred (the signal is
/// zero-padded by window/2 on both sides) and windowed with a periodic Hann
/// window of length `window`; the FFT length equals the window length.
struct StftConfig {
  int sample_rate = 11025;
  int window = 1022;
  int hop = 256;

  int bins() const { return window / 2 + 1; }
  int frames(Eigen::Index length) const {
    return 1 + static_cast<int>(length / hop);
  }
  /// Throws ConfigError unless the squared windows overlap-add to a value
  /// bounded away from zero, which istft needs for exact inversion.
  void validate() const;
  bool operator==(const StftConfig&) const = default;
};

Eigen::ArrayXd hann_window(int length);

struct Spectrogram {
  Eigen::ArrayXXd magnitude;  // bins x frames, >= 0
  Eigen::ArrayXXd phase;      // radians
  StftConfig config;
  Eigen::Index length = 0;    // samples in the analysed clip

  Eigen::Index bins() const { return magnitude.rows(); }
  Eigen::Index frames() const { return magnitude.cols(); }
};

/// Samplewise sum of two clips, no normalisation.
AudioClip mix(const AudioClip& r1, const AudioClip& r2);

Spectrogram stft(const AudioClip& clip, const StftConfig& config);
AudioClip istft(const Spectrogram& spec);

/// Binary masks: first is 1 where s1 / (s1 + s2) > 0.5, second where
/// s2 / (s1 + s2) > 0.5. Cells with s1 + s2 == 0 are 0 in both.
template <typename Derived1, typename Derived2>
std::pair<Eigen::Array<typename Derived1::Scalar, Eigen::Dynamic, Eigen::Dynamic>,
          Eigen::Array<typename Derived1::Scalar, Eigen::Dynamic, Eigen::Dynamic>>
binary_target_masks(const Eigen::ArrayBase<Derived1>& s1,
                    const Eigen::ArrayBase<Derived2>& s2) {
  using Scalar = typename Derived1::Scalar;
  using Grid = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  if (s1.rows() != s2.rows() || s1.cols() != s2.cols())
    throw InvalidInput("binary_target_masks: shape mismatch");
  const Grid total = s1 + s2;
  const Scalar half(0.5);
  Grid m1 = (total > Scalar(0)).select((s1 / total > half).template cast<Scalar>(), Scalar(0));
  Grid m2 = (total > Scalar(0)).select((s2 / total > half).template cast<Scalar>(), Scalar(0));
  return {std::move(m1), std::move(m2)};
}

/// Multiply the linear magnitude by `mask` and invert with the input phase.
AudioClip apply_mask_reconstruct(const Spectrogram& spec, const Eigen::ArrayXXd& mask);

/// Maps full-resolution spectrogram grids to the fixed network grid and back.
/// Frequency is warped onto `rows` log-spaced bands (band averages where a
/// band spans whole bins, linear interpolation below that); time keeps the
/// first `frames` frames. Masks come back by interpolating between bands, so
/// a grid mask in [0, 1] stays in [0, 1] and complementary grid masks stay
/// complementary.
class SpectrogramGrid {
 public:
  SpectrogramGrid(int bins, int rows, int frames);

  Eigen::ArrayXXd to_grid(const Eigen::ArrayXXd& full) const;
  /// Columns past the grid reuse the last grid column.
  Eigen::ArrayXXd to_full(const Eigen::ArrayXXd& grid, Eigen::Index frames) const;

  int bins() const { return static_cast<int>(pool_.cols()); }
  int rows() const { return static_cast<int>(pool_.rows()); }
  int frames() const { return frames_; }

 private:
  Eigen::MatrixXd pool_;    // rows x bins
  Eigen::MatrixXd spread_;  // bins x rows
  int frames_;
};

double relative_rms_error(const Eigen::ArrayXd& estimate, const Eigen::ArrayXd& reference);

}  // namespace avsep

#endif  // AVSEP_AUDIO_HPP
