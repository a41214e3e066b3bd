#ifndef AVSEP_METRICS_HPP
#define AVSEP_METRICS_HPP

#include "avsep/types.hpp"

#include <Eigen/Dense>

#include <iosfwd>
#include <string>
#include <vector>

namespace avsep {

inline constexpr double kScoreCapDb = 60.0;

struct BssScores {
  double sdr = 0.0;
  double sir = 0.0;
  double sar = 0.0;
};

/// Orthogonal decomposition of one estimate against the reference set.
/// All three components have length n + L - 1.
struct BssDecomposition {
  Eigen::ArrayXd target;
  Eigen::ArrayXd interference;
  Eigen::ArrayXd artifacts;
};

struct BssEvalResult {
  std::vector<BssScores> scores;     // indexed by reference
  std::vector<int> estimate_for;     // estimate_for[j] scored against reference j
};

/// dB ratio clamped to [-60, 60]; zero numerator maps to -60, zero
/// denominator to +60.
double capped_ratio_db(double numerator, double denominator);

BssScores scores_from(const BssDecomposition& d);

/// Projection-based bss_eval_sources. Each estimate is decomposed against
/// time-delayed copies (0..filter_length-1 taps) of the references, and the
/// estimate/reference assignment maximising mean SDR is returned.
class BssEvaluator {
 public:
  BssEvaluator(const std::vector<Eigen::ArrayXd>& references, int filter_length);

  BssDecomposition decompose(const Eigen::ArrayXd& estimate, int target) const;
  BssEvalResult evaluate(const std::vector<Eigen::ArrayXd>& estimates) const;

  int filter_length() const { return filter_length_; }

 private:
  Eigen::VectorXd correlate_with_references(const Eigen::ArrayXd& estimate) const;
  Eigen::ArrayXd synthesize(const Eigen::VectorXd& coefficients,
                            const std::vector<int>& sources) const;

  std::vector<Eigen::ArrayXd> references_;
  int filter_length_;
  Eigen::Index length_;
  Eigen::LDLT<Eigen::MatrixXd> joint_;             // all references, (k L)^2
  std::vector<Eigen::LDLT<Eigen::MatrixXd>> single_;  // one reference, L^2
};

BssEvalResult bss_eval(const std::vector<AudioClip>& references,
                       const std::vector<AudioClip>& estimates, int filter_length = 512);

struct MetricRow {
  std::string sample_id;
  int source_idx = 0;
  BssScores scores;
};

/// `sample_id,source_idx,sdr,sir,sar` rows followed by a `mean` summary row.
void write_metrics_csv(std::ostream& out, const std::vector<MetricRow>& rows);
BssScores mean_scores(const std::vector<MetricRow>& rows);

}  // namespace avsep

#endif  // AVSEP_METRICS_HPP
