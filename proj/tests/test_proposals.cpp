#include "avsep/proposals.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

#include <sstream>
#include <json.hpp>

using namespace avsep;

namespace {

Image constant_image(int h, int w, float v) {
  Image im(h, w);
  for (auto& p : im.rgb) p.setConstant(v);
  return im;
}

void fill_rect(Image& im, int x0, int y0, int x1, int y1, float v) {
  for (auto& p : im.rgb) p.block(y0, x0, y1 - y0, x1 - x0).setConstant(v);
}

// Direct evaluation of the box score from per-pixel sums.
double brute_score(const Eigen::ArrayXXf& e, const BoundingBox& b, double lambda = 1.0,
                   double kappa = 1.5, int band = 2) {
  double inside = 0, ring = 0;
  for (int y = b.y0; y < b.y1; ++y)
    for (int x = b.x0; x < b.x1; ++x) {
      const bool interior = x >= b.x0 + band && x < b.x1 - band && y >= b.y0 + band && y < b.y1 - band;
      (interior ? inside : ring) += e(y, x);
    }
  const double raw = inside - lambda * ring;
  return raw > 0 ? raw / std::pow(2.0 * (b.width() + b.height()), kappa) : 0.0;
}

}  // namespace

TEST(EdgeMap, ConstantImageHasNoEdges) {
  EXPECT_TRUE((compute_edge_map(constant_image(20, 30, 0.4f)) == 0).all());
}

TEST(EdgeMap, VerticalStepConcentratesOnTwoColumns) {
  Image im = constant_image(20, 32, 0.0f);
  fill_rect(im, 12, 0, 32, 20, 1.0f);
  const Eigen::ArrayXXf e = compute_edge_map(im);
  for (int x = 0; x < 32; ++x) {
    if (x == 11 || x == 12) EXPECT_NEAR(e.col(x).minCoeff(), 0.5f, 1e-6f);
    else EXPECT_EQ(e.col(x).maxCoeff(), 0.0f) << x;
  }
}

TEST(EdgeMap, SquareEdgesMatchDirectGradient) {
  Image im = constant_image(32, 32, 0.0f);
  fill_rect(im, 12, 12, 20, 20, 1.0f);
  const Eigen::ArrayXXf e = compute_edge_map(im);
  auto at = [&](int y, int x) {
    return im.rgb[0](std::clamp(y, 0, 31), std::clamp(x, 0, 31));
  };
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) {
      const double gx = 0.5 * (at(y, x + 1) - at(y, x - 1)), gy = 0.5 * (at(y + 1, x) - at(y - 1, x));
      EXPECT_NEAR(e(y, x), std::hypot(gx, gy), 1e-6);
      const bool band = x >= 11 && x <= 20 && y >= 11 && y <= 20 &&
                        !(x >= 13 && x <= 18 && y >= 13 && y <= 18);
      if (!band) EXPECT_EQ(e(y, x), 0.0f);
    }
  EXPECT_GT(e.sum(), 0.0f);
}

TEST(EdgeMap, RejectsTinyImages) {
  EXPECT_THROW(compute_edge_map(constant_image(15, 40, 0.f)), InvalidInput);
}

TEST(ScoreBox, MatchesDirectSums) {
  std::mt19937_64 rng(2);
  Eigen::ArrayXXf e = Eigen::ArrayXXf::Random(40, 50).abs();
  const EdgeIntegral integral(e);
  std::uniform_int_distribution<int> u(0, 49);
  for (int t = 0; t < 200; ++t) {
    int x0 = u(rng) % 45, y0 = u(rng) % 35;
    BoundingBox b{x0, y0, x0 + 1 + u(rng) % (50 - x0), y0 + 1 + u(rng) % (40 - y0), 0};
    EXPECT_NEAR(score_box(integral, b), brute_score(e, b), 1e-9);
  }
}

TEST(ScoreBox, ZeroOnEmptyEdges) {
  const Eigen::ArrayXXf e = Eigen::ArrayXXf::Zero(32, 32);
  EXPECT_EQ(score_box(e, BoundingBox{0, 0, 32, 32, 0}), 0.0);
  Image im = constant_image(32, 32, 0.f);
  fill_rect(im, 2, 2, 8, 8, 1.f);
  EXPECT_EQ(score_box(compute_edge_map(im), BoundingBox{16, 16, 30, 30, 0}), 0.0);
}

TEST(ScoreBox, EnclosingBeatsBisecting) {
  Image im = constant_image(32, 32, 0.0f);
  fill_rect(im, 12, 12, 20, 20, 1.0f);
  const Eigen::ArrayXXf e = compute_edge_map(im);
  const double enclosing = score_box(e, BoundingBox{8, 8, 24, 24, 0});
  const double bisecting = score_box(e, BoundingBox{16, 8, 28, 24, 0});
  EXPECT_GT(enclosing, 0.0);
  EXPECT_GT(enclosing, bisecting);
  EXPECT_THROW(score_box(e, BoundingBox{20, 20, 40, 30, 0}), InvalidInput);
}

TEST(Candidates, FollowGeometricGrid) {
  const auto c = candidate_windows(64, 64);
  ASSERT_FALSE(c.empty());
  for (const auto& b : c) EXPECT_TRUE(b.valid_in(64, 64));
  EXPECT_TRUE(std::any_of(c.begin(), c.end(), [](const BoundingBox& b) { return b.width() == 8 && b.height() == 8; }));
  EXPECT_TRUE(std::any_of(c.begin(), c.end(), [](const BoundingBox& b) { return b.width() == 27 && b.height() == 27; }));
  EXPECT_TRUE(std::any_of(c.begin(), c.end(), [](const BoundingBox& b) { return b.width() == 2 * b.height(); }));
}

TEST(Proposals, ExactCountInBounds) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 5; ++trial) {
    Image im(48, 64);
    for (auto& p : im.rgb) p = (Eigen::ArrayXXf::Random(48, 64) + 1) / 2;
    for (int count : {1, 10, 80}) {
      const ProposalSet s = propose_boxes(im, count);
      ASSERT_EQ(int(s.boxes.size()), count);
      for (std::size_t i = 0; i < s.boxes.size(); ++i) {
        EXPECT_TRUE(s.boxes[i].valid_in(64, 48));
        EXPECT_GE(s.boxes[i].objectness, 0.0);
        if (i > 0) EXPECT_LE(s.boxes[i].objectness, s.boxes[i - 1].objectness);
      }
    }
  }
}

TEST(Proposals, ConstantImageUsesFallbackGrid) {
  const ProposalSet s = propose_boxes(constant_image(64, 64, 0.5f), 10);
  ASSERT_EQ(s.boxes.size(), 10u);
  const auto pool = fallback_boxes(64, 64);
  for (std::size_t i = 0; i < 10; ++i) {
    EXPECT_EQ(s.boxes[i].objectness, 0.0);
    EXPECT_TRUE(s.boxes[i].same_rect(pool[i]));
    EXPECT_EQ(s.boxes[i].width(), 16);  // 4x4 grid cells come first
  }
  // Centre cells come before corners.
  EXPECT_TRUE(s.boxes[0].x0 == 16 || s.boxes[0].x0 == 32);
}

TEST(Proposals, NoPairAboveNmsThreshold) {
  Image im(64, 64);
  for (auto& p : im.rgb) p = (Eigen::ArrayXXf::Random(64, 64) + 1) / 2;
  const auto boxes = propose_boxes(im, 80).boxes;
  int scored = 0;
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    scored += boxes[i].objectness > 0;
    for (std::size_t j = i + 1; j < boxes.size(); ++j)
      if (boxes[i].objectness > 0 || boxes[j].objectness > 0) EXPECT_LE(iou(boxes[i], boxes[j]), 0.7);
  }
  EXPECT_GT(scored, 10);
}

TEST(Proposals, TwoRectanglesAreTopTwo) {
  // 20 px squares: the smallest window whose interior clears the border band
  // is 27 px, which still overlaps each square at IoU > 0.5.
  Image im = constant_image(64, 64, 0.0f);
  fill_rect(im, 6, 6, 26, 26, 1.0f);
  fill_rect(im, 36, 36, 56, 56, 1.0f);
  const BoundingBox r1{6, 6, 26, 26, 0}, r2{36, 36, 56, 56, 0};
  const auto top = propose_boxes(im, 10).boxes;

  // Independent check: brute-force scan over the same window set.
  const Eigen::ArrayXXf e = compute_edge_map(im);
  std::vector<BoundingBox> all = candidate_windows(64, 64);
  for (auto& b : all) b.objectness = brute_score(e, b);
  std::stable_sort(all.begin(), all.end(), [](auto& a, auto& b) { return a.objectness > b.objectness; });
  EXPECT_NEAR(top[0].objectness, all[0].objectness, 1e-9);

  auto encloses = [](const BoundingBox& b, const BoundingBox& r) {
    return b.x0 < r.x0 && b.y0 < r.y0 && b.x1 > r.x1 && b.y1 > r.y1;
  };
  const bool first_on_r1 = encloses(top[0], r1);
  const BoundingBox& a = first_on_r1 ? top[0] : top[1];
  const BoundingBox& b = first_on_r1 ? top[1] : top[0];
  EXPECT_TRUE(encloses(a, r1));
  EXPECT_TRUE(encloses(b, r2));
  EXPECT_GE(iou(a, r1), 0.5);
  EXPECT_GE(iou(b, r2), 0.5);
}

TEST(Proposals, Deterministic) {
  Image im(64, 64);
  for (auto& p : im.rgb) p = (Eigen::ArrayXXf::Random(64, 64) + 1) / 2;
  const auto a = propose_boxes(im, 20).boxes, b = propose_boxes(im, 20).boxes;
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_TRUE(a[i].same_rect(b[i]));
    EXPECT_EQ(a[i].objectness, b[i].objectness);
  }
}

TEST(Proposals, TopBoxFollowsTranslation) {
  Image base = constant_image(64, 64, 0.1f);
  fill_rect(base, 10, 12, 24, 26, 0.9f);
  const BoundingBox top = propose_boxes(base, 1).boxes[0];
  for (auto [dx, dy] : {std::pair{8, 4}, {16, 16}, {24, 30}, {3, 5}}) {
    Image moved = constant_image(64, 64, 0.1f);
    fill_rect(moved, 10 + dx, 12 + dy, 24 + dx, 26 + dy, 0.9f);
    const BoundingBox t = propose_boxes(moved, 1).boxes[0];
    EXPECT_LE(std::abs(t.x0 - (top.x0 + dx)), 2) << dx;
    EXPECT_LE(std::abs(t.y0 - (top.y0 + dy)), 2) << dy;
    EXPECT_EQ(t.width(), top.width());
    EXPECT_EQ(t.height(), top.height());
  }
}

TEST(Proposals, JsonLines) {
  ProposalSet s{{BoundingBox{1, 2, 3, 4, 0.5}, BoundingBox{0, 0, 8, 8, 0}}, "img7"};
  std::ostringstream out;
  write_proposals_jsonl(out, s);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  const auto j = nlohmann::json::parse(line);
  EXPECT_EQ(j["image_id"], "img7");
  EXPECT_EQ(j["x0"], 1);
  EXPECT_EQ(j["y1"], 4);
  EXPECT_EQ(j["objectness"], 0.5);
  std::getline(in, line);
  EXPECT_EQ(nlohmann::json::parse(line)["x1"], 8);
}

TEST(Proposals, RejectsNonPositiveCount) {
  EXPECT_THROW(propose_boxes(constant_image(32, 32, 0.f), 0), InvalidInput);
}
