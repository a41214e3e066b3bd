#include "avsep/types.hpp"

#include <algorithm>
#include <iostream>
#include <mutex>

namespace avsep {
namespace {

std::mutex& handler_mutex() {
  static std::mutex m;
  return m;
}

WarningHandler& handler() {
  static WarningHandler h = [](std::string_view msg) {
    std::cerr << "warning: " << msg << '\n';
  };
  return h;
}

}  // namespace

WarningHandler set_warning_handler(WarningHandler h) {
  std::lock_guard lock(handler_mutex());
  std::swap(handler(), h);
  return h;
}

void warn(std::string_view message) {
  std::lock_guard lock(handler_mutex());
  if (handler()) handler()(message);
}

long intersection_area(const BoundingBox& a, const BoundingBox& b) {
  const long w = std::max(0, std::min(a.x1, b.x1) - std::max(a.x0, b.x0));
  const long h = std::max(0, std::min(a.y1, b.y1) - std::max(a.y0, b.y0));
  return w * h;
}

double iou(const BoundingBox& a, const BoundingBox& b) {
  const long inter = intersection_area(a, b);
  const long uni = a.area() + b.area() - inter;
  return uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

}  // namespace avsep
