#include "avsep/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

namespace avsep {
namespace {

// sum_u x(u) y(u + lag), zero outside the signals.
double xcorr(const Eigen::ArrayXd& x, const Eigen::ArrayXd& y, Eigen::Index lag) {
  const Eigen::Index n = std::min(x.size(), y.size());
  if (std::abs(lag) >= n) return 0.0;
  if (lag >= 0) return x.head(n - lag).matrix().dot(y.segment(lag, n - lag).matrix());
  return x.segment(-lag, n + lag).matrix().dot(y.head(n + lag).matrix());
}

double energy(const Eigen::ArrayXd& x) { return x.matrix().squaredNorm(); }

}  // namespace

double capped_ratio_db(double numerator, double denominator) {
  if (!(numerator > 0.0)) return -kScoreCapDb;
  if (!(denominator > 0.0)) return kScoreCapDb;
  return std::clamp(10.0 * std::log10(numerator / denominator), -kScoreCapDb, kScoreCapDb);
}

BssScores scores_from(const BssDecomposition& d) {
  const double target = energy(d.target);
  BssScores s;
  s.sdr = capped_ratio_db(target, energy(d.interference + d.artifacts));
  s.sir = capped_ratio_db(target, energy(d.interference));
  s.sar = capped_ratio_db(energy(d.target + d.interference), energy(d.artifacts));
  return s;
}

BssEvaluator::BssEvaluator(const std::vector<Eigen::ArrayXd>& references, int filter_length)
    : references_(references), filter_length_(filter_length) {
  if (references_.empty()) throw InvalidInput("bss_eval: no references");
  if (filter_length_ < 1) throw InvalidInput("bss_eval: filter length must be >= 1");
  length_ = references_.front().size();
  for (const auto& r : references_) {
    if (r.size() != length_) throw InvalidInput("bss_eval: reference lengths differ");
    if (!(energy(r) > 0.0)) throw InvalidInput("bss_eval: zero-energy reference");
  }
  const int k = static_cast<int>(references_.size());
  const int L = filter_length_;
  Eigen::MatrixXd gram(k * L, k * L);
  for (int i = 0; i < k; ++i) {
    for (int j = i; j < k; ++j) {
      Eigen::VectorXd lags(2 * L - 1);  // lags[m + L - 1] = xcorr(r_i, r_j, m)
      for (int m = -(L - 1); m < L; ++m)
        lags[m + L - 1] = xcorr(references_[i], references_[j], m);
      for (int a = 0; a < L; ++a)
        for (int b = 0; b < L; ++b) {
          gram(i * L + a, j * L + b) = lags[a - b + L - 1];
          gram(j * L + b, i * L + a) = lags[a - b + L - 1];
        }
    }
  }
  joint_.compute(gram);
  for (int i = 0; i < k; ++i) single_.emplace_back(gram.block(i * L, i * L, L, L));
}

Eigen::VectorXd BssEvaluator::correlate_with_references(const Eigen::ArrayXd& estimate) const {
  const int L = filter_length_;
  Eigen::VectorXd d(static_cast<Eigen::Index>(references_.size()) * L);
  for (std::size_t i = 0; i < references_.size(); ++i)
    for (int a = 0; a < L; ++a) d[i * L + a] = xcorr(references_[i], estimate, a);
  return d;
}

Eigen::ArrayXd BssEvaluator::synthesize(const Eigen::VectorXd& coefficients,
                                        const std::vector<int>& sources) const {
  const int L = filter_length_;
  Eigen::ArrayXd out = Eigen::ArrayXd::Zero(length_ + L - 1);
  for (std::size_t s = 0; s < sources.size(); ++s)
    for (int a = 0; a < L; ++a)
      out.segment(a, length_) += coefficients[s * L + a] * references_[sources[s]];
  return out;
}

BssDecomposition BssEvaluator::decompose(const Eigen::ArrayXd& estimate, int target) const {
  if (estimate.size() != length_) throw InvalidInput("bss_eval: estimate length differs");
  if (target < 0 || target >= static_cast<int>(references_.size()))
    throw InvalidInput("bss_eval: target index out of range");
  const int L = filter_length_;
  const Eigen::VectorXd d = correlate_with_references(estimate);

  std::vector<int> all(references_.size());
  std::iota(all.begin(), all.end(), 0);
  const Eigen::ArrayXd projected = synthesize(joint_.solve(d), all);
  const Eigen::ArrayXd target_part =
      synthesize(single_[target].solve(d.segment(target * L, L)), {target});

  Eigen::ArrayXd padded = Eigen::ArrayXd::Zero(length_ + L - 1);
  padded.head(length_) = estimate;

  return BssDecomposition{target_part, projected - target_part, padded - projected};
}

BssEvalResult BssEvaluator::evaluate(const std::vector<Eigen::ArrayXd>& estimates) const {
  const int k = static_cast<int>(references_.size());
  if (static_cast<int>(estimates.size()) != k)
    throw InvalidInput("bss_eval: estimate and reference counts differ");

  // table[e][r]
  std::vector<std::vector<BssScores>> table(k, std::vector<BssScores>(k));
  for (int e = 0; e < k; ++e) {
    if (estimates[e].size() != length_) throw InvalidInput("bss_eval: estimate length differs");
    const bool silent = !(energy(estimates[e]) > 0.0);
    for (int r = 0; r < k; ++r)
      table[e][r] = silent ? BssScores{-kScoreCapDb, -kScoreCapDb, -kScoreCapDb}
                           : scores_from(decompose(estimates[e], r));
  }

  std::vector<int> perm(k);
  std::iota(perm.begin(), perm.end(), 0);
  BssEvalResult best;
  double best_mean = -std::numeric_limits<double>::infinity();
  do {
    double total = 0.0;
    for (int r = 0; r < k; ++r) total += table[perm[r]][r].sdr;
    if (total / k > best_mean) {
      best_mean = total / k;
      best.estimate_for = perm;
      best.scores.clear();
      for (int r = 0; r < k; ++r) best.scores.push_back(table[perm[r]][r]);
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

BssEvalResult bss_eval(const std::vector<AudioClip>& references,
                       const std::vector<AudioClip>& estimates, int filter_length) {
  std::vector<Eigen::ArrayXd> refs, ests;
  for (const auto& r : references) refs.push_back(r.samples);
  for (const auto& e : estimates) ests.push_back(e.samples);
  return BssEvaluator(refs, filter_length).evaluate(ests);
}

BssScores mean_scores(const std::vector<MetricRow>& rows) {
  BssScores m;
  if (rows.empty()) return m;
  for (const auto& r : rows) {
    m.sdr += r.scores.sdr;
    m.sir += r.scores.sir;
    m.sar += r.scores.sar;
  }
  const double n = static_cast<double>(rows.size());
  return BssScores{m.sdr / n, m.sir / n, m.sar / n};
}

void write_metrics_csv(std::ostream& out, const std::vector<MetricRow>& rows) {
  out << "sample_id,source_idx,sdr,sir,sar\n";
  for (const auto& r : rows)
    out << r.sample_id << ',' << r.source_idx << ',' << r.scores.sdr << ','
        << r.scores.sir << ',' << r.scores.sar << '\n';
  const BssScores m = mean_scores(rows);
  out << "mean,," << m.sdr << ',' << m.sir << ',' << m.sar << '\n';
}

}  // namespace avsep
