#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "coda/augment.hpp"
#include "coda/encoder.hpp"

namespace coda::diagnostics {

struct KernelSpec {
  std::vector<double> bandwidths;  // sigma_s; kernel = sum_s exp(-d^2 / (2 sigma_s^2))

  void validate() const {
    if (bandwidths.empty()) throw std::invalid_argument("need at least one bandwidth");
    for (double s : bandwidths)
      if (!(s > 0.0)) throw std::invalid_argument("bandwidths must be positive");
  }
};

// Squared maximum mean discrepancy between the row sets X and Y under a
// sum of RBF kernels. The default is the biased V-statistic
//   mean k(x,x') + mean k(y,y') - 2 mean k(x,y);
// unbiased switches the within-set means to exclude the diagonal.
template <typename DX, typename DY>
double mmd2(const Eigen::MatrixBase<DX>& X, const Eigen::MatrixBase<DY>& Y,
            const KernelSpec& spec, bool unbiased = false) {
  spec.validate();
  const Eigen::Index m = X.rows();
  const Eigen::Index n = Y.rows();
  if (m < 1 || n < 1) throw std::invalid_argument("both sets must be non-empty");
  if (X.cols() != Y.cols()) throw std::invalid_argument("dimension mismatch between sets");
  if (unbiased && (m < 2 || n < 2))
    throw std::invalid_argument("unbiased estimator needs at least two points per set");

  auto kernel = [&spec](double sq_dist) {
    double k = 0.0;
    for (double s : spec.bandwidths) k += std::exp(-sq_dist / (2.0 * s * s));
    return k;
  };

  double kxx = 0.0, kyy = 0.0;
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < m; ++j) {
      if (unbiased && i == j) continue;
      kxx += kernel((X.row(i) - X.row(j)).squaredNorm());
    }
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      if (unbiased && i == j) continue;
      kyy += kernel((Y.row(i) - Y.row(j)).squaredNorm());
    }
  // the cross sum is accumulated in both traversal orders and averaged so
  // mmd2(X, Y) == mmd2(Y, X) holds exactly, not just to rounding
  double kxy = 0.0, kyx = 0.0;
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < n; ++j) kxy += kernel((X.row(i) - Y.row(j)).squaredNorm());
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < m; ++i) kyx += kernel((Y.row(j) - X.row(i)).squaredNorm());
  const double cross = 0.5 * (kxy + kyx);

  const double mm = unbiased ? static_cast<double>(m) * (m - 1) : static_cast<double>(m) * m;
  const double nn = unbiased ? static_cast<double>(n) * (n - 1) : static_cast<double>(n) * n;
  return kxx / mm + kyy / nn - 2.0 * cross / (static_cast<double>(m) * n);
}

// Median pairwise distance over the rows of Z (lower median); falls back
// to 1 when all points coincide. At most max_samples rows are considered.
double median_heuristic(const Eigen::MatrixXd& Z, int max_samples = 2048);

// sigma * scales, the default multi-kernel ladder
std::vector<double> bandwidth_ladder(double sigma, const std::vector<double>& scales);

struct DiversityRow {
  std::string strategy;
  double mmd = 0.0;
  int sample_count = 0;
};

struct DiversityConfig {
  int sample_count = 0;              // 0 = whole dataset
  int batch_size = 64;
  std::vector<double> bandwidth_scales = {0.25, 0.5, 1.0, 2.0, 4.0};
  bool unbiased = false;
};

// For every strategy: pooled encoder representations of the originals vs.
// their augmented counterparts over the same sample, scored by mmd2 with a
// shared bandwidth ladder (median heuristic on the original representations).
// Rows come back sorted by descending mmd.
std::vector<DiversityRow> diversity_report(const corpus::LabeledDataset& dataset,
                                           const std::vector<augment::StrategySpec>& strategies,
                                           const encoder::ModelParams& params,
                                           const corpus::Vocabulary& vocab,
                                           const corpus::ParaphraseTable* table,
                                           const DiversityConfig& config, std::uint64_t seed);

}  // namespace coda::diagnostics
