#ifndef AVSEP_TYPES_HPP
#define AVSEP_TYPES_HPP

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace avsep {

/// Bad arguments to an operation (shape mismatch, empty input, out of range).
struct InvalidInput : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Inconsistent or unusable configuration. CLI exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Missing or corrupt data on disk. CLI exit code 3.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using WarningHandler = std::function<void(std::string_view)>;

/// Install a handler for recoverable-fallback warnings. Returns the previous
/// handler. The default handler writes to stderr.
WarningHandler set_warning_handler(WarningHandler handler);
void warn(std::string_view message);

/// RGB image, one H x W plane per channel, values in [0, 1].
struct Image {
  std::array<Eigen::ArrayXXf, 3> rgb;

  Image() = default;
  Image(int height, int width) {
    for (auto& c : rgb) c = Eigen::ArrayXXf::Zero(height, width);
  }

  int height() const { return static_cast<int>(rgb[0].rows()); }
  int width() const { return static_cast<int>(rgb[0].cols()); }
  bool empty() const { return rgb[0].size() == 0; }
};

/// Axis-aligned box, [x0, x1) x [y0, y1) in pixels.
struct BoundingBox {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  double objectness = 0.0;

  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
  long area() const { return static_cast<long>(width()) * height(); }
  bool valid_in(int image_width, int image_height) const {
    return 0 <= x0 && x0 < x1 && x1 <= image_width && 0 <= y0 && y0 < y1 &&
           y1 <= image_height;
  }
  bool same_rect(const BoundingBox& o) const {
    return x0 == o.x0 && y0 == o.y0 && x1 == o.x1 && y1 == o.y1;
  }
};

long intersection_area(const BoundingBox& a, const BoundingBox& b);
double iou(const BoundingBox& a, const BoundingBox& b);

struct ProposalSet {
  std::vector<BoundingBox> boxes;  // descending objectness
  std::string source_image_id;
};

struct AudioClip {
  Eigen::ArrayXd samples;
  int sample_rate = 11025;

  Eigen::Index size() const { return samples.size(); }
};

}  // namespace avsep

#endif  // AVSEP_TYPES_HPP
