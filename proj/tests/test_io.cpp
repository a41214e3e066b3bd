#include "avsep/image.hpp"
#include "avsep/io.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <json.hpp>

using namespace avsep;
using avsep::testing::TempDir;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST(Wav, FloatRoundTripIsExactToSinglePrecision) {
  TempDir tmp;
  std::mt19937_64 rng(1);
  const AudioClip c = avsep::testing::noise_clip(rng, 3000, 22050);
  write_wav(tmp.path() / "a.wav", c, WavEncoding::Float32);
  const AudioClip r = read_wav(tmp.path() / "a.wav");
  EXPECT_EQ(r.sample_rate, 22050);
  ASSERT_EQ(r.size(), 3000);
  EXPECT_LT((r.samples - c.samples).abs().maxCoeff(), 1e-7);
  EXPECT_EQ(std::filesystem::file_size(tmp.path() / "a.wav"), 44u + 4 * 3000);
}

TEST(Wav, Pcm16RoundTripWithinQuantisation) {
  TempDir tmp;
  AudioClip c{Eigen::ArrayXd::LinSpaced(1000, -1.2, 1.2), 11025};
  write_wav(tmp.path() / "a.wav", c, WavEncoding::Pcm16);
  const AudioClip r = read_wav(tmp.path() / "a.wav");
  const Eigen::ArrayXd clipped = c.samples.max(-1.0).min(1.0);
  EXPECT_LT((r.samples - clipped).abs().maxCoeff(), 1.0 / 32767);
  const std::string bytes = slurp(tmp.path() / "a.wav");
  EXPECT_EQ(bytes.substr(0, 4), "RIFF");
  EXPECT_EQ(bytes.substr(8, 4), "WAVE");
}

TEST(Wav, StereoIsAveragedToMono) {
  TempDir tmp;
  // Hand-built 16-bit stereo file: frames (1000, 3000) and (-2000, 0).
  std::ofstream out(tmp.path() / "s.wav", std::ios::binary);
  auto u32 = [&](std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
  auto u16 = [&](std::uint16_t v) { out.write(reinterpret_cast<const char*>(&v), 2); };
  out.write("RIFF", 4);
  u32(36 + 8);
  out.write("WAVEfmt ", 8);
  u32(16);
  u16(1);
  u16(2);
  u32(8000);
  u32(8000 * 4);
  u16(4);
  u16(16);
  out.write("data", 4);
  u32(8);
  for (std::int16_t v : {1000, 3000, -2000, 0}) u16(static_cast<std::uint16_t>(v));
  out.close();
  const AudioClip r = read_wav(tmp.path() / "s.wav");
  EXPECT_EQ(r.sample_rate, 8000);
  ASSERT_EQ(r.size(), 2);
  EXPECT_NEAR(r.samples(0), 2000.0 / 32768, 1e-4);
  EXPECT_NEAR(r.samples(1), -1000.0 / 32768, 1e-4);
}

TEST(Wav, CorruptOrMissingIsDataError) {
  TempDir tmp;
  std::ofstream(tmp.path() / "bad.wav") << "definitely not audio";
  EXPECT_THROW(read_wav(tmp.path() / "bad.wav"), DataError);
  EXPECT_THROW(read_wav(tmp.path() / "none.wav"), DataError);
}

TEST(Resample, PreservesToneAndLength) {
  AudioClip c;
  c.sample_rate = 22050;
  c.samples = Eigen::ArrayXd::LinSpaced(22050, 0, 22049).unaryExpr(
      [](double n) { return std::sin(2 * 3.14159265358979 * 220 * n / 22050); });
  const AudioClip r = resample(c, 11025);
  EXPECT_EQ(r.sample_rate, 11025);
  EXPECT_NEAR(double(r.size()), 11025, 1);
  for (int n = 0; n < 1000; n += 37)
    EXPECT_NEAR(r.samples(n), std::sin(2 * 3.14159265358979 * 220 * n / 11025), 1e-3);
  EXPECT_THROW(resample(c, 0), InvalidInput);
}

TEST(Npy, RoundTripAndHeader) {
  TempDir tmp;
  Eigen::ArrayXXd a(3, 4);
  a << 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12.5;
  write_npy(tmp.path() / "a.npy", a);
  EXPECT_TRUE((read_npy(tmp.path() / "a.npy") == a).all());
  const std::string bytes = slurp(tmp.path() / "a.npy");
  EXPECT_EQ(bytes.substr(0, 6), "\x93NUMPY");
  EXPECT_NE(bytes.find("'descr': '<f4'"), std::string::npos);
  EXPECT_NE(bytes.find("'fortran_order': False"), std::string::npos);
  EXPECT_NE(bytes.find("'shape': (3, 4)"), std::string::npos);
  // C order: the second stored value is a(0, 1).
  const std::size_t header = bytes.size() - 12 * 4;
  EXPECT_EQ(header % 64, 0u);
  float second;
  std::memcpy(&second, bytes.data() + header + 4, 4);
  EXPECT_EQ(second, 2.0f);
  std::ofstream(tmp.path() / "b.npy") << "junk";
  EXPECT_THROW(read_npy(tmp.path() / "b.npy"), DataError);
}

TEST(Npy, SpectrogramSidecar) {
  TempDir tmp;
  Spectrogram s;
  s.magnitude = Eigen::ArrayXXd::Ones(4, 2);
  s.config.hop = 128;
  write_spectrogram_dump(tmp.path() / "spec.npy", s);
  std::ifstream in(tmp.path() / "spec.json");
  const auto j = nlohmann::json::parse(in);
  EXPECT_EQ(j["sr"], 11025);
  EXPECT_EQ(j["window"], 1022);
  EXPECT_EQ(j["hop"], 128);
}

TEST(Archive, RoundTripAndTruncation) {
  TempDir tmp;
  TensorArchive t{{"w", Eigen::MatrixXf::Random(3, 5)}, {"b", Eigen::MatrixXf::Random(5, 1)}};
  write_tensor_archive(tmp.path() / "m.tensors", t);
  const TensorArchive r = read_tensor_archive(tmp.path() / "m.tensors");
  ASSERT_EQ(r.size(), 2u);
  EXPECT_TRUE(r.at("w") == t.at("w"));
  EXPECT_TRUE(r.at("b") == t.at("b"));
  const std::string bytes = slurp(tmp.path() / "m.tensors");
  std::ofstream(tmp.path() / "cut.tensors", std::ios::binary) << bytes.substr(0, bytes.size() - 7);
  EXPECT_THROW(read_tensor_archive(tmp.path() / "cut.tensors"), DataError);
  EXPECT_THROW(read_tensor_archive(tmp.path() / "none.tensors"), DataError);
}

TEST(Png, RoundTripWithin8Bits) {
  TempDir tmp;
  Image im(10, 13);
  for (auto& c : im.rgb) c = (Eigen::ArrayXXf::Random(10, 13) + 1) / 2;
  write_png(tmp.path() / "a.png", im);
  const Image r = read_png(tmp.path() / "a.png");
  ASSERT_EQ(r.height(), 10);
  ASSERT_EQ(r.width(), 13);
  for (int c = 0; c < 3; ++c) EXPECT_LE((r.rgb[c] - im.rgb[c]).abs().maxCoeff(), 0.5f / 255 + 1e-6f);
  std::ofstream(tmp.path() / "bad.png") << "nope";
  EXPECT_THROW(read_png(tmp.path() / "bad.png"), DataError);
}

TEST(Png, GridIsGrayscaleWithLowRowsAtBottom) {
  TempDir tmp;
  Eigen::ArrayXXd g = Eigen::ArrayXXd::Zero(4, 3);
  g.row(0).setConstant(1.0);
  write_grid_png(tmp.path() / "m.png", g);
  const Image r = read_png(tmp.path() / "m.png");
  ASSERT_EQ(r.height(), 4);
  EXPECT_TRUE((r.rgb[0] == r.rgb[1]).all() && (r.rgb[1] == r.rgb[2]).all());
  EXPECT_EQ(r.rgb[0](3, 0), 1.0f);
  EXPECT_EQ(r.rgb[0](0, 0), 0.0f);
}

TEST(ImageOps, CropAndCentreSquare) {
  Image im(20, 30);
  for (int y = 0; y < 20; ++y)
    for (int x = 0; x < 30; ++x) im.rgb[0](y, x) = x < 15 ? 0.0f : 1.0f;
  const Image sq = center_square(im, 10);
  EXPECT_EQ(sq.width(), 10);
  EXPECT_EQ(sq.height(), 10);
  EXPECT_LT(sq.rgb[0](5, 0), 0.1f);
  EXPECT_GT(sq.rgb[0](5, 9), 0.9f);

  const Image crop = crop_resize(im, BoundingBox{16, 2, 26, 12, 0}, 8);
  EXPECT_TRUE((crop.rgb[0] == 1.0f).all());
  const auto t = crops_to_tensor(im, {BoundingBox{0, 0, 10, 10, 0}, BoundingBox{16, 2, 26, 12, 0}}, 8);
  EXPECT_EQ(t.n, 2);
  EXPECT_EQ(t.c, 3);
  EXPECT_EQ(t.at(0, 0, 3, 3), 0.0f);
  EXPECT_EQ(t.at(1, 0, 3, 3), 1.0f);
  EXPECT_THROW(crop_resize(im, BoundingBox{25, 0, 35, 5, 0}, 4), InvalidInput);
}
