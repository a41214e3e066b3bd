#include "avsep/audio.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

#include <numbers>

using namespace avsep;
using avsep::testing::noise_clip;

TEST(Stft, ShapeFollowsCentredFraming) {
  StftConfig cfg;
  AudioClip clip{Eigen::ArrayXd::Zero(16384), 11025};
  const Spectrogram s = stft(clip, cfg);
  EXPECT_EQ(s.bins(), 512);
  EXPECT_EQ(s.frames(), 1 + 16384 / 256);
  EXPECT_EQ(s.length, 16384);
  EXPECT_TRUE((s.magnitude == 0).all());
}

TEST(Stft, RoundTripIsExact) {
  std::mt19937_64 rng(5);
  for (Eigen::Index n : {1000, 4096, 16384, 16385}) {
    const AudioClip clip = noise_clip(rng, n);
    const AudioClip back = istft(stft(clip, {}));
    ASSERT_EQ(back.size(), n);
    EXPECT_LT(relative_rms_error(back.samples, clip.samples), 1e-10) << n;
  }
}

TEST(Stft, RoundTripOtherWindows) {
  std::mt19937_64 rng(6);
  for (auto [w, h] : {std::pair{512, 128}, {256, 64}, {1024, 512}, {400, 100}}) {
    const StftConfig cfg{8000, w, h};
    const AudioClip clip = noise_clip(rng, 5000, 8000);
    EXPECT_LT(relative_rms_error(istft(stft(clip, cfg)).samples, clip.samples), 1e-10) << w;
  }
}

TEST(Stft, SineLandsInItsBin) {
  const StftConfig cfg;
  for (double f : {220.0, 441.0, 1000.0, 2500.5, 4321.0}) {
    AudioClip clip{Eigen::ArrayXd(11025), 11025};
    for (Eigen::Index n = 0; n < clip.size(); ++n)
      clip.samples[n] = std::sin(2 * std::numbers::pi * f * n / 11025.0);
    const Spectrogram s = stft(clip, cfg);
    Eigen::Index peak;
    s.magnitude.col(s.frames() / 2).maxCoeff(&peak);
    EXPECT_NEAR(double(peak), f * cfg.window / cfg.sample_rate, 1.0) << f;
  }
}

TEST(Stft, HannWindowIsPeriodic) {
  const Eigen::ArrayXd w = hann_window(8);
  EXPECT_DOUBLE_EQ(w[0], 0.0);
  EXPECT_DOUBLE_EQ(w[4], 1.0);
  EXPECT_NEAR(w[2], 0.5, 1e-15);
  EXPECT_NEAR(w[6], 0.5, 1e-15);
}

TEST(Stft, RejectsHopBeyondHalfWindow) {
  EXPECT_THROW((StftConfig{11025, 1022, 600}.validate()), ConfigError);
  EXPECT_THROW((StftConfig{11025, 2, 1}.validate()), ConfigError);
  EXPECT_NO_THROW((StftConfig{11025, 1022, 256}.validate()));
  EXPECT_NO_THROW((StftConfig{11025, 1022, 511}.validate()));
}

TEST(Stft, RejectsSampleRateMismatch) {
  AudioClip clip{Eigen::ArrayXd::Zero(100), 8000};
  EXPECT_THROW(stft(clip, {}), InvalidInput);
}

TEST(Mix, AddsSamplewise) {
  AudioClip a{Eigen::ArrayXd::LinSpaced(5, 0, 1), 11025}, b{Eigen::ArrayXd::Constant(5, 0.5), 11025};
  EXPECT_TRUE((mix(a, b).samples == a.samples + 0.5).all());
  b.sample_rate = 8000;
  EXPECT_THROW(mix(a, b), InvalidInput);
  EXPECT_THROW(mix(a, AudioClip{Eigen::ArrayXd::Zero(4), 11025}), InvalidInput);
}

TEST(BinaryMasks, TiesAndSilenceAreZero) {
  Eigen::ArrayXXd s1(2, 3), s2(2, 3);
  s1 << 1, 0, 2, 0, 3, 1e-300;
  s2 << 0, 0, 2, 1, 1, 0;
  const auto [m1, m2] = binary_target_masks(s1, s2);
  Eigen::ArrayXXd e1(2, 3), e2(2, 3);
  e1 << 1, 0, 0, 0, 1, 1;
  e2 << 0, 0, 0, 1, 0, 0;
  EXPECT_TRUE((m1 == e1).all());
  EXPECT_TRUE((m2 == e2).all());
}

TEST(BinaryMasks, ComplementaryWhereDecided) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 1);
  Eigen::ArrayXXd s1(40, 30), s2(40, 30);
  for (Eigen::Index k = 0; k < s1.size(); ++k) {
    s1(k) = u(rng) < 0.2 ? 0.0 : u(rng);
    s2(k) = u(rng) < 0.2 ? s1(k) : u(rng);
  }
  const auto [m1, m2] = binary_target_masks(s1, s2);
  for (Eigen::Index k = 0; k < s1.size(); ++k) {
    const double sum = m1(k) + m2(k);
    if (s1(k) + s2(k) > 0 && s1(k) != s2(k)) EXPECT_EQ(sum, 1.0);
    else EXPECT_EQ(sum, 0.0);
  }
}

TEST(MaskReconstruct, UnitMaskIsIdentity) {
  std::mt19937_64 rng(8);
  const AudioClip clip = noise_clip(rng, 6000);
  const Spectrogram s = stft(clip, {});
  const AudioClip back = apply_mask_reconstruct(s, Eigen::ArrayXXd::Ones(s.bins(), s.frames()));
  EXPECT_LT(relative_rms_error(back.samples, clip.samples), 1e-10);
  EXPECT_THROW(apply_mask_reconstruct(s, Eigen::ArrayXXd::Ones(3, 3)), InvalidInput);
}

TEST(MaskReconstruct, ComplementaryMasksSumToMixture) {
  std::mt19937_64 rng(9);
  const AudioClip clip = noise_clip(rng, 8000);
  const Spectrogram s = stft(clip, {});
  Eigen::ArrayXXd m = (Eigen::ArrayXXd::Random(s.bins(), s.frames()) + 1) / 2;
  const AudioClip a = apply_mask_reconstruct(s, m), b = apply_mask_reconstruct(s, 1 - m);
  EXPECT_LT(relative_rms_error(a.samples + b.samples, clip.samples), 1e-10);
}

TEST(SpectrogramGrid, MasksStayInRangeAndComplementary) {
  const SpectrogramGrid grid(512, 64, 64);
  Eigen::ArrayXXd m = (Eigen::ArrayXXd::Random(64, 64) + 1) / 2;
  const Eigen::ArrayXXd a = grid.to_full(m, 65), b = grid.to_full(1 - m, 65);
  EXPECT_EQ(a.rows(), 512);
  EXPECT_EQ(a.cols(), 65);
  EXPECT_GE(a.minCoeff(), 0.0);
  EXPECT_LE(a.maxCoeff(), 1.0 + 1e-12);
  EXPECT_LT(((a + b) - 1).abs().maxCoeff(), 1e-12);
  EXPECT_TRUE((a.col(64) == a.col(63)).all());
}

TEST(SpectrogramGrid, ConstantsArePreserved) {
  const SpectrogramGrid grid(512, 64, 32);
  const Eigen::ArrayXXd g = grid.to_grid(Eigen::ArrayXXd::Constant(512, 40, 3.0));
  EXPECT_EQ(g.rows(), 64);
  EXPECT_EQ(g.cols(), 32);
  EXPECT_LT((g - 3.0).abs().maxCoeff(), 1e-12);
  EXPECT_LT((grid.to_full(Eigen::ArrayXXd::Constant(64, 32, 0.25), 40) - 0.25).abs().maxCoeff(), 1e-12);
}

TEST(SpectrogramGrid, LowRowsResolveLowBins) {
  const SpectrogramGrid grid(512, 64, 1);
  Eigen::ArrayXXd one = Eigen::ArrayXXd::Zero(512, 1);
  one(10, 0) = 1.0;
  Eigen::ArrayXXd high = Eigen::ArrayXXd::Zero(512, 1);
  high(400, 0) = 1.0;
  Eigen::Index r_low, r_high;
  grid.to_grid(one).col(0).maxCoeff(&r_low);
  grid.to_grid(high).col(0).maxCoeff(&r_high);
  EXPECT_LT(r_low, r_high);
  EXPECT_GT(r_low, 10);  // low frequencies get more than linear share of rows
}
