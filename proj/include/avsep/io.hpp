#ifndef AVSEP_IO_HPP
#define AVSEP_IO_HPP

#include "avsep/audio.hpp"
#include "avsep/types.hpp"

#include <Eigen/Core>

#include <filesystem>
#include <map>
#include <string>

namespace avsep {

enum class WavEncoding { Pcm16, Float32 };

/// Reads 16-bit PCM or 32-bit float RIFF/WAVE; multi-channel input is
/// averaged to mono.
AudioClip read_wav(const std::filesystem::path& path);
void write_wav(const std::filesystem::path& path, const AudioClip& clip,
               WavEncoding encoding = WavEncoding::Float32);

/// Linear-interpolation resampling.
AudioClip resample(const AudioClip& clip, int target_rate);

/// 2-D little-endian float32 .npy, C order.
void write_npy(const std::filesystem::path& path, const Eigen::ArrayXXd& values);
Eigen::ArrayXXd read_npy(const std::filesystem::path& path);

/// Magnitude as .npy plus `<stem>.json` holding {sr, window, hop}.
void write_spectrogram_dump(const std::filesystem::path& npy_path, const Spectrogram& spec);

/// Flat archive of named float32 matrices.
using TensorArchive = std::map<std::string, Eigen::MatrixXf>;
void write_tensor_archive(const std::filesystem::path& path, const TensorArchive& tensors);
TensorArchive read_tensor_archive(const std::filesystem::path& path);

}  // namespace avsep

#endif  // AVSEP_IO_HPP
