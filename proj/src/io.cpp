#include "avsep/io.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

namespace avsep {
namespace {

template <typename T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof value);
}

template <typename T>
T get(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof value);
  if (!in) throw DataError("unexpected end of file");
  return value;
}

}  // namespace

AudioClip read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("read_wav: cannot open " + path.string());
  try {
    char riff[4], wave[4];
    in.read(riff, 4);
    get<std::uint32_t>(in);
    in.read(wave, 4);
    if (!in || std::memcmp(riff, "RIFF", 4) != 0 || std::memcmp(wave, "WAVE", 4) != 0)
      throw DataError("not a RIFF/WAVE file");

    std::uint16_t format = 0, channels = 0, bits = 0;
    std::uint32_t rate = 0;
    std::vector<char> data;
    bool have_fmt = false, have_data = false;
    while (!have_data) {
      char id[4];
      in.read(id, 4);
      if (!in) break;
      const auto size = get<std::uint32_t>(in);
      if (std::memcmp(id, "fmt ", 4) == 0) {
        format = get<std::uint16_t>(in);
        channels = get<std::uint16_t>(in);
        rate = get<std::uint32_t>(in);
        get<std::uint32_t>(in);
        get<std::uint16_t>(in);
        bits = get<std::uint16_t>(in);
        if (format == 0xFFFE && size >= 26) {  // WAVE_FORMAT_EXTENSIBLE
          get<std::uint16_t>(in);
          get<std::uint16_t>(in);
          get<std::uint32_t>(in);
          format = get<std::uint16_t>(in);
          in.seekg(size - 26, std::ios::cur);
        } else {
          in.seekg(size - 16, std::ios::cur);
        }
        have_fmt = true;
      } else if (std::memcmp(id, "data", 4) == 0) {
        data.resize(size);
        in.read(data.data(), size);
        data.resize(static_cast<std::size_t>(in.gcount()));
        have_data = true;
      } else {
        in.seekg(size + (size & 1u), std::ios::cur);
      }
    }
    if (!have_fmt || !have_data) throw DataError("missing fmt or data chunk");
    if (channels == 0) throw DataError("zero channels");
    const bool pcm16 = format == 1 && bits == 16;
    const bool f32 = format == 3 && bits == 32;
    if (!pcm16 && !f32) throw DataError("unsupported sample format");

    const std::size_t width = bits / 8;
    const std::size_t frames = data.size() / (width * channels);
    AudioClip clip;
    clip.sample_rate = static_cast<int>(rate);
    clip.samples = Eigen::ArrayXd::Zero(static_cast<Eigen::Index>(frames));
    for (std::size_t f = 0; f < frames; ++f) {
      double acc = 0.0;
      for (std::size_t c = 0; c < channels; ++c) {
        const char* p = data.data() + (f * channels + c) * width;
        if (pcm16) {
          std::int16_t v;
          std::memcpy(&v, p, 2);
          acc += v / 32768.0;
        } else {
          float v;
          std::memcpy(&v, p, 4);
          acc += v;
        }
      }
      clip.samples[static_cast<Eigen::Index>(f)] = acc / channels;
    }
    return clip;
  } catch (const DataError& e) {
    throw DataError("read_wav: " + path.string() + ": " + e.what());
  }
}

void write_wav(const std::filesystem::path& path, const AudioClip& clip, WavEncoding encoding) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("write_wav: cannot open " + path.string());
  const bool pcm = encoding == WavEncoding::Pcm16;
  const std::uint16_t bits = pcm ? 16 : 32;
  const std::uint32_t data_size = static_cast<std::uint32_t>(clip.size()) * (bits / 8);
  out.write("RIFF", 4);
  put<std::uint32_t>(out, 36 + data_size);
  out.write("WAVEfmt ", 8);
  put<std::uint32_t>(out, 16);
  put<std::uint16_t>(out, pcm ? 1 : 3);
  put<std::uint16_t>(out, 1);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(clip.sample_rate));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(clip.sample_rate) * (bits / 8));
  put<std::uint16_t>(out, bits / 8);
  put<std::uint16_t>(out, bits);
  out.write("data", 4);
  put<std::uint32_t>(out, data_size);
  for (Eigen::Index i = 0; i < clip.size(); ++i) {
    if (pcm) {
      const double v = std::clamp(clip.samples[i], -1.0, 32767.0 / 32768.0);
      put<std::int16_t>(out, static_cast<std::int16_t>(std::lround(v * 32768.0)));
    } else {
      put<float>(out, static_cast<float>(clip.samples[i]));
    }
  }
  if (!out) throw DataError("write_wav: write failed for " + path.string());
}

AudioClip resample(const AudioClip& clip, int target_rate) {
  if (target_rate <= 0 || clip.sample_rate <= 0) throw InvalidInput("resample: bad rate");
  if (target_rate == clip.sample_rate) return clip;
  const double ratio = static_cast<double>(clip.sample_rate) / target_rate;
  const auto n = static_cast<Eigen::Index>(std::floor(clip.size() / ratio));
  AudioClip out;
  out.sample_rate = target_rate;
  out.samples.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double pos = i * ratio;
    const auto i0 = static_cast<Eigen::Index>(std::floor(pos));
    const Eigen::Index i1 = std::min(i0 + 1, clip.size() - 1);
    const double frac = pos - i0;
    out.samples[i] = (1 - frac) * clip.samples[i0] + frac * clip.samples[i1];
  }
  return out;
}

void write_npy(const std::filesystem::path& path, const Eigen::ArrayXXd& values) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("write_npy: cannot open " + path.string());
  std::ostringstream header;
  header << "{'descr': '<f4', 'fortran_order': False, 'shape': (" << values.rows() << ", "
         << values.cols() << "), }";
  std::string h = header.str();
  const std::size_t unpadded = 10 + h.size() + 1;
  h.append((64 - unpadded % 64) % 64, ' ');
  h.push_back('\n');
  out.write("\x93NUMPY\x01\x00", 8);
  put<std::uint16_t>(out, static_cast<std::uint16_t>(h.size()));
  out << h;
  for (Eigen::Index r = 0; r < values.rows(); ++r)
    for (Eigen::Index c = 0; c < values.cols(); ++c) put<float>(out, static_cast<float>(values(r, c)));
}

Eigen::ArrayXXd read_npy(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("read_npy: cannot open " + path.string());
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, "\x93NUMPY", 6) != 0) throw DataError("read_npy: bad magic");
  const auto len = get<std::uint16_t>(in);
  std::string h(len, '\0');
  in.read(h.data(), len);
  if (h.find("'<f4'") == std::string::npos || h.find("False") == std::string::npos)
    throw DataError("read_npy: only C-order float32 is supported");
  const auto open = h.find('('), comma = h.find(',', open), close = h.find(')', open);
  const long rows = std::stol(h.substr(open + 1, comma - open - 1));
  const long cols = std::stol(h.substr(comma + 1, close - comma - 1));
  Eigen::ArrayXXd values(rows, cols);
  for (long r = 0; r < rows; ++r)
    for (long c = 0; c < cols; ++c) values(r, c) = get<float>(in);
  return values;
}

void write_spectrogram_dump(const std::filesystem::path& npy_path, const Spectrogram& spec) {
  write_npy(npy_path, spec.magnitude);
  std::filesystem::path sidecar = npy_path;
  sidecar.replace_extension(".json");
  std::ofstream out(sidecar);
  out << nlohmann::json{{"sr", spec.config.sample_rate},
                        {"window", spec.config.window},
                        {"hop", spec.config.hop}}
             .dump(2)
      << '\n';
}

namespace {
constexpr std::array<char, 8> kArchiveMagic{'A', 'V', 'S', 'E', 'P', 'T', 'N', '1'};
}

void write_tensor_archive(const std::filesystem::path& path, const TensorArchive& tensors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("write_tensor_archive: cannot open " + path.string());
  out.write(kArchiveMagic.data(), kArchiveMagic.size());
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, m] : tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
    put<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
    out.write(reinterpret_cast<const char*>(m.data()),
              static_cast<std::streamsize>(m.size() * sizeof(float)));
  }
  if (!out) throw DataError("write_tensor_archive: write failed for " + path.string());
}

TensorArchive read_tensor_archive(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("read_tensor_archive: cannot open " + path.string());
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kArchiveMagic) throw DataError("read_tensor_archive: bad magic");
  TensorArchive tensors;
  const auto count = get<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name(get<std::uint32_t>(in), '\0');
    in.read(name.data(), static_cast<std::streamsize>(name.size()));
    const auto rows = static_cast<Eigen::Index>(get<std::uint64_t>(in));
    const auto cols = static_cast<Eigen::Index>(get<std::uint64_t>(in));
    Eigen::MatrixXf m(rows, cols);
    in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(float)));
    if (!in) throw DataError("read_tensor_archive: truncated tensor " + name);
    tensors.emplace(std::move(name), std::move(m));
  }
  return tensors;
}

}  // namespace avsep
