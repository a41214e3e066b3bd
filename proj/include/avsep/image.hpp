#ifndef AVSEP_IMAGE_HPP
#define AVSEP_IMAGE_HPP

#include "avsep/nn/tensor.hpp"
#include "avsep/types.hpp"

#include <array>
#include <filesystem>
#include <vector>

namespace avsep {

/// Bilinear resample of `box` to a size x size RGB patch.
Image crop_resize(const Image& image, const BoundingBox& box, int size);

/// Crops of `boxes`, resized and stacked into an n x 3 x size x size batch.
nn::Tensor<float> crops_to_tensor(const Image& image, const std::vector<BoundingBox>& boxes,
                                  int size);

/// Largest centred square, resampled to size x size.
Image center_square(const Image& image, int size);

Image read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image& image);
/// Grayscale PNG of a grid with values in [0, 1]; row 0 is drawn at the
/// bottom so low frequencies sit low, as in a spectrogram plot.
void write_grid_png(const std::filesystem::path& path, const Eigen::ArrayXXd& values);

void draw_box(Image& image, const BoundingBox& box, const std::array<float, 3>& color,
              int thickness = 1);

}  // namespace avsep

#endif  // AVSEP_IMAGE_HPP
