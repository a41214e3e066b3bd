#ifndef AVSEP_PROPOSALS_HPP
#define AVSEP_PROPOSALS_HPP

#include "avsep/types.hpp"

#include <Eigen/Core>

#include <iosfwd>
#include <string>
#include <vector>

namespace avsep {

/// Edge-density objectness in the spirit of EdgeBoxes: a box scores the edge
/// mass it fully encloses, minus the mass crossing its border band,
/// normalised by perimeter^kappa.
struct ProposalConfig {
  double boundary_penalty = 1.0;  // lambda
  double perimeter_exponent = 1.5;  // kappa
  int boundary_band = 2;
  int min_size = 8;
  double scale_step = 1.5;
  double nms_iou = 0.7;
};

/// 3x3 central-difference gradient magnitude of the luma channel.
Eigen::ArrayXXf compute_edge_map(const Image& image);

/// Summed-area table over an edge map, answers rectangle sums in O(1).
class EdgeIntegral {
 public:
  explicit EdgeIntegral(const Eigen::ArrayXXf& edges);
  double sum(int x0, int y0, int x1, int y1) const;
  int width() const { return static_cast<int>(table_.cols()) - 1; }
  int height() const { return static_cast<int>(table_.rows()) - 1; }

 private:
  Eigen::ArrayXXd table_;
};

double score_box(const EdgeIntegral& edges, const BoundingBox& box,
                 const ProposalConfig& config = {});
double score_box(const Eigen::ArrayXXf& edge_map, const BoundingBox& box,
                 const ProposalConfig& config = {});

/// Sliding windows over a geometric scale grid with aspects 1:2, 1:1, 2:1,
/// stride 1/8 of the window side.
std::vector<BoundingBox> candidate_windows(int width, int height,
                                           const ProposalConfig& config = {});

/// Greedy suppression; `boxes` must already be sorted by objectness.
std::vector<BoundingBox> non_maximum_suppression(const std::vector<BoundingBox>& boxes,
                                                 double iou_threshold,
                                                 std::size_t limit);

/// Zero-objectness boxes used to pad short proposal lists: the 4x4 grid cells
/// ordered from the image centre outward, then coarser and finer grids.
std::vector<BoundingBox> fallback_boxes(int width, int height);

ProposalSet propose_boxes(const Image& image, int count, const ProposalConfig& config = {},
                          std::string image_id = {});

/// One JSON object per line: {image_id, x0, y0, x1, y1, objectness}.
void write_proposals_jsonl(std::ostream& out, const ProposalSet& proposals);

}  // namespace avsep

#endif  // AVSEP_PROPOSALS_HPP
