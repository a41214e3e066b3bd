#include "avsep/selector.hpp"

#include <algorithm>
#include <numeric>

namespace avsep {

PairSelection select_pair_inference(const std::vector<double>& scores,
                                    const std::vector<BoundingBox>& boxes,
                                    double overlap_epsilon) {
  const int m = static_cast<int>(scores.size());
  if (m < 2) throw InvalidInput("select_pair_inference: need at least two boxes");
  if (boxes.size() != scores.size())
    throw InvalidInput("select_pair_inference: score and box counts differ");

  PairSelection sel;
  double best = -1.0;
  for (int i = 0; i < m; ++i)
    for (int j = i + 1; j < m; ++j) {
      if (!boxes_disjoint(boxes[i], boxes[j], overlap_epsilon)) continue;
      sel.no_set.emplace_back(i, j);
      const double product = scores[i] * scores[j];
      if (product > best) {
        best = product;
        sel.first = i;
        sel.second = j;
      }
    }
  if (!sel.no_set.empty()) return sel;

  std::vector<int> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return scores[a] > scores[b]; });
  const int top = std::min(m, 10);
  double best_iou = 2.0, best_product = -1.0;
  for (int a = 0; a < top; ++a)
    for (int b = a + 1; b < top; ++b) {
      const int i = std::min(order[a], order[b]), j = std::max(order[a], order[b]);
      const double overlap = iou(boxes[i], boxes[j]);
      const double product = scores[i] * scores[j];
      const bool better =
          overlap < best_iou ||
          (overlap == best_iou && (product > best_product ||
                                   (product == best_product &&
                                    std::pair(i, j) < std::pair(sel.first, sel.second))));
      if (better) {
        best_iou = overlap;
        best_product = product;
        sel.first = i;
        sel.second = j;
      }
    }
  sel.fallback = true;
  warn("select_pair_inference: no non-overlapping pair, falling back to the least-overlapping "
       "pair among the top-scoring boxes");
  return sel;
}

}  // namespace avsep
