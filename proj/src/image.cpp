#include "avsep/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

namespace avsep {
namespace {

float sample_bilinear(const Eigen::ArrayXXf& plane, double y, double x) {
  const int h = static_cast<int>(plane.rows()), w = static_cast<int>(plane.cols());
  y = std::clamp(y, 0.0, h - 1.0);
  x = std::clamp(x, 0.0, w - 1.0);
  const int y0 = static_cast<int>(std::floor(y)), x0 = static_cast<int>(std::floor(x));
  const int y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
  const float fy = static_cast<float>(y - y0), fx = static_cast<float>(x - x0);
  return (1 - fy) * ((1 - fx) * plane(y0, x0) + fx * plane(y0, x1)) +
         fy * ((1 - fx) * plane(y1, x0) + fx * plane(y1, x1));
}

}  // namespace

Image crop_resize(const Image& image, const BoundingBox& box, int size) {
  if (size < 1) throw InvalidInput("crop_resize: size must be positive");
  if (!box.valid_in(image.width(), image.height()) || box.area() <= 0)
    throw InvalidInput("crop_resize: empty or out-of-bounds crop");
  Image out(size, size);
  const double sy = static_cast<double>(box.height()) / size;
  const double sx = static_cast<double>(box.width()) / size;
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x)
        out.rgb[c](y, x) = sample_bilinear(image.rgb[c], box.y0 + (y + 0.5) * sy - 0.5,
                                           box.x0 + (x + 0.5) * sx - 0.5);
  return out;
}

nn::Tensor<float> crops_to_tensor(const Image& image, const std::vector<BoundingBox>& boxes,
                                  int size) {
  nn::Tensor<float> t(static_cast<int>(boxes.size()), 3, size, size);
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const Image crop = crop_resize(image, boxes[i], size);
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) t.at(static_cast<int>(i), c, y, x) = crop.rgb[c](y, x);
  }
  return t;
}

Image center_square(const Image& image, int size) {
  const int side = std::min(image.height(), image.width());
  const int x0 = (image.width() - side) / 2, y0 = (image.height() - side) / 2;
  return crop_resize(image, BoundingBox{x0, y0, x0 + side, y0 + side, 0.0}, size);
}

Image read_png(const std::filesystem::path& path) {
  png_image png;
  std::memset(&png, 0, sizeof png);
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str()))
    throw DataError("read_png: cannot open " + path.string() + ": " + png.message);
  png.format = PNG_FORMAT_RGB;
  std::vector<png_byte> buffer(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, buffer.data(), 0, nullptr)) {
    png_image_free(&png);
    throw DataError("read_png: corrupt image " + path.string() + ": " + png.message);
  }
  Image out(static_cast<int>(png.height), static_cast<int>(png.width));
  for (int y = 0; y < out.height(); ++y)
    for (int x = 0; x < out.width(); ++x)
      for (int c = 0; c < 3; ++c)
        out.rgb[c](y, x) = buffer[(static_cast<std::size_t>(y) * out.width() + x) * 3 + c] / 255.0f;
  return out;
}

void write_png(const std::filesystem::path& path, const Image& image) {
  png_image png;
  std::memset(&png, 0, sizeof png);
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.width());
  png.height = static_cast<png_uint_32>(image.height());
  png.format = PNG_FORMAT_RGB;
  std::vector<png_byte> buffer(PNG_IMAGE_SIZE(png));
  for (int y = 0; y < image.height(); ++y)
    for (int x = 0; x < image.width(); ++x)
      for (int c = 0; c < 3; ++c)
        buffer[(static_cast<std::size_t>(y) * image.width() + x) * 3 + c] = static_cast<png_byte>(
            std::lround(std::clamp(image.rgb[c](y, x), 0.0f, 1.0f) * 255.0f));
  if (!png_image_write_to_file(&png, path.c_str(), 0, buffer.data(), 0, nullptr))
    throw DataError("write_png: cannot write " + path.string() + ": " + png.message);
}

void write_grid_png(const std::filesystem::path& path, const Eigen::ArrayXXd& values) {
  Image img(static_cast<int>(values.rows()), static_cast<int>(values.cols()));
  for (int r = 0; r < img.height(); ++r)
    for (int t = 0; t < img.width(); ++t) {
      const float v = static_cast<float>(std::clamp(values(r, t), 0.0, 1.0));
      for (auto& plane : img.rgb) plane(img.height() - 1 - r, t) = v;
    }
  write_png(path, img);
}

void draw_box(Image& image, const BoundingBox& box, const std::array<float, 3>& color,
              int thickness) {
  for (int y = std::max(box.y0, 0); y < std::min(box.y1, image.height()); ++y)
    for (int x = std::max(box.x0, 0); x < std::min(box.x1, image.width()); ++x) {
      const bool edge = x < box.x0 + thickness || x >= box.x1 - thickness ||
                        y < box.y0 + thickness || y >= box.y1 - thickness;
      if (edge)
        for (int c = 0; c < 3; ++c) image.rgb[c](y, x) = color[c];
    }
}

}  // namespace avsep
