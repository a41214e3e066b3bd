#include "avsep/proposals.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <ostream>

namespace avsep {

Eigen::ArrayXXf compute_edge_map(const Image& image) {
  const int h = image.height(), w = image.width();
  if (h < 16 || w < 16)
    throw InvalidInput("compute_edge_map: image must be at least 16x16");
  const Eigen::ArrayXXf gray =
      0.299f * image.rgb[0] + 0.587f * image.rgb[1] + 0.114f * image.rgb[2];
  Eigen::ArrayXXf edges(h, w);
  for (int y = 0; y < h; ++y) {
    const int yu = std::max(y - 1, 0), yd = std::min(y + 1, h - 1);
    for (int x = 0; x < w; ++x) {
      const int xl = std::max(x - 1, 0), xr = std::min(x + 1, w - 1);
      const float gx = 0.5f * (gray(y, xr) - gray(y, xl));
      const float gy = 0.5f * (gray(yd, x) - gray(yu, x));
      edges(y, x) = std::sqrt(gx * gx + gy * gy);
    }
  }
  return edges;
}

EdgeIntegral::EdgeIntegral(const Eigen::ArrayXXf& edges)
    : table_(Eigen::ArrayXXd::Zero(edges.rows() + 1, edges.cols() + 1)) {
  for (Eigen::Index y = 0; y < edges.rows(); ++y)
    for (Eigen::Index x = 0; x < edges.cols(); ++x)
      table_(y + 1, x + 1) =
          edges(y, x) + table_(y, x + 1) + table_(y + 1, x) - table_(y, x);
}

double EdgeIntegral::sum(int x0, int y0, int x1, int y1) const {
  if (x1 <= x0 || y1 <= y0) return 0.0;
  return table_(y1, x1) - table_(y0, x1) - table_(y1, x0) + table_(y0, x0);
}

double score_box(const EdgeIntegral& edges, const BoundingBox& box,
                 const ProposalConfig& config) {
  if (!box.valid_in(edges.width(), edges.height()))
    throw InvalidInput("score_box: box outside the image");
  const int b = config.boundary_band;
  const double total = edges.sum(box.x0, box.y0, box.x1, box.y1);
  const double interior = edges.sum(box.x0 + b, box.y0 + b, box.x1 - b, box.y1 - b);
  const double band = total - interior;
  const double raw = interior - config.boundary_penalty * band;
  if (!(raw > 0.0)) return 0.0;
  const double perimeter = 2.0 * (box.width() + box.height());
  return raw / std::pow(perimeter, config.perimeter_exponent);
}

double score_box(const Eigen::ArrayXXf& edge_map, const BoundingBox& box,
                 const ProposalConfig& config) {
  return score_box(EdgeIntegral(edge_map), box, config);
}

std::vector<BoundingBox> candidate_windows(int width, int height,
                                           const ProposalConfig& config) {
  std::vector<BoundingBox> out;
  const double aspects[] = {0.5, 1.0, 2.0};  // width / height
  for (double scale = config.min_size; scale <= std::max(width, height);
       scale *= config.scale_step) {
    for (double aspect : aspects) {
      const int w = static_cast<int>(std::lround(scale * std::sqrt(aspect)));
      const int h = static_cast<int>(std::lround(scale / std::sqrt(aspect)));
      if (w < 1 || h < 1 || w > width || h > height) continue;
      const int sx = std::max(1, w / 8), sy = std::max(1, h / 8);
      for (int y = 0; y + h <= height; y += sy)
        for (int x = 0; x + w <= width; x += sx) out.push_back({x, y, x + w, y + h, 0.0});
    }
  }
  return out;
}

std::vector<BoundingBox> non_maximum_suppression(const std::vector<BoundingBox>& boxes,
                                                 double iou_threshold,
                                                 std::size_t limit) {
  std::vector<BoundingBox> kept;
  for (const auto& box : boxes) {
    if (kept.size() >= limit) break;
    const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](const BoundingBox& k) {
      return iou(k, box) > iou_threshold;
    });
    if (!suppressed) kept.push_back(box);
  }
  return kept;
}

std::vector<BoundingBox> fallback_boxes(int width, int height) {
  std::vector<BoundingBox> out;
  auto grid = [&](int cells, int span) {
    std::vector<BoundingBox> level;
    for (int r = 0; r + span <= cells; ++r)
      for (int c = 0; c + span <= cells; ++c)
        level.push_back({c * width / cells, r * height / cells, (c + span) * width / cells,
                         (r + span) * height / cells, 0.0});
    const double cx = width / 2.0, cy = height / 2.0;
    std::stable_sort(level.begin(), level.end(), [&](const BoundingBox& a, const BoundingBox& b) {
      const double da = std::hypot((a.x0 + a.x1) / 2.0 - cx, (a.y0 + a.y1) / 2.0 - cy);
      const double db = std::hypot((b.x0 + b.x1) / 2.0 - cx, (b.y0 + b.y1) / 2.0 - cy);
      return da < db;
    });
    for (auto& b : level)
      if (b.x1 > b.x0 && b.y1 > b.y0) out.push_back(b);
  };
  grid(4, 1);
  grid(4, 2);
  grid(4, 3);
  grid(4, 4);
  grid(8, 1);
  return out;
}

ProposalSet propose_boxes(const Image& image, int count, const ProposalConfig& config,
                          std::string image_id) {
  if (count < 1) throw InvalidInput("propose_boxes: count must be >= 1");
  const Eigen::ArrayXXf edges = compute_edge_map(image);
  const EdgeIntegral integral(edges);

  std::vector<BoundingBox> scored;
  for (auto box : candidate_windows(image.width(), image.height(), config)) {
    box.objectness = score_box(integral, box, config);
    if (box.objectness > 0.0) scored.push_back(box);
  }
  std::stable_sort(scored.begin(), scored.end(), [](const BoundingBox& a, const BoundingBox& b) {
    return a.objectness > b.objectness;
  });

  ProposalSet set;
  set.source_image_id = std::move(image_id);
  set.boxes = non_maximum_suppression(scored, config.nms_iou, static_cast<std::size_t>(count));

  for (const auto& fb : fallback_boxes(image.width(), image.height())) {
    if (set.boxes.size() >= static_cast<std::size_t>(count)) break;
    const bool clash = std::any_of(set.boxes.begin(), set.boxes.end(), [&](const BoundingBox& k) {
      return iou(k, fb) > config.nms_iou;
    });
    if (!clash) set.boxes.push_back(fb);
  }
  // Only reachable for counts beyond the fallback pool.
  while (set.boxes.size() < static_cast<std::size_t>(count)) {
    BoundingBox whole{0, 0, image.width(), image.height(), 0.0};
    set.boxes.push_back(set.boxes.empty() ? whole : set.boxes.back());
  }
  return set;
}

void write_proposals_jsonl(std::ostream& out, const ProposalSet& proposals) {
  for (const auto& b : proposals.boxes) {
    nlohmann::json j = {{"image_id", proposals.source_image_id},
                        {"x0", b.x0},
                        {"y0", b.y0},
                        {"x1", b.x1},
                        {"y1", b.y1},
                        {"objectness", b.objectness}};
    out << j.dump() << '\n';
  }
}

}  // namespace avsep
