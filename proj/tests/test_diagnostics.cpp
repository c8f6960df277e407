#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "coda/diagnostics.hpp"
#include "support/checks.hpp"

using namespace coda;
using diagnostics::KernelSpec;

namespace {

// independent oracle: scalar double loops, per-dimension accumulation
double mmd2_oracle(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y,
                   const std::vector<double>& bandwidths) {
  auto kernel = [&](const Eigen::MatrixXd& A, int i, const Eigen::MatrixXd& B, int j) {
    double sq = 0.0;
    for (int d = 0; d < A.cols(); ++d) {
      const double diff = A(i, d) - B(j, d);
      sq += diff * diff;
    }
    double k = 0.0;
    for (double s : bandwidths) k += std::exp(-sq / (2.0 * s * s));
    return k;
  };
  const int m = static_cast<int>(X.rows());
  const int n = static_cast<int>(Y.rows());
  double kxx = 0.0, kyy = 0.0, kxy = 0.0;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) kxx += kernel(X, i, X, j);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) kyy += kernel(Y, i, Y, j);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) kxy += kernel(X, i, Y, j);
  return kxx / (double(m) * m) + kyy / (double(n) * n) - 2.0 * kxy / (double(m) * n);
}

}  // namespace

TEST_CASE("mmd2: one-dimensional analytic case") {
  Eigen::MatrixXd X(1, 1), Y(1, 1);
  X << 0.0;
  Y << 1.0;
  KernelSpec spec{{1.0}};
  // k(x,x)=1, k(y,y)=1, k(x,y)=exp(-0.5): 2 - 2 e^{-1/2}
  CHECK(diagnostics::mmd2(X, Y, spec) ==
        doctest::Approx(2.0 - 2.0 * std::exp(-0.5)).epsilon(1e-12));
  CHECK(2.0 - 2.0 * std::exp(-0.5) == doctest::Approx(0.786939).epsilon(1e-5));
}

TEST_CASE("mmd2: identical multisets vanish") {
  std::mt19937_64 rng(1);
  Eigen::MatrixXd X = Eigen::MatrixXd::Random(20, 5);
  KernelSpec spec{{0.5, 1.0, 2.0}};
  CHECK(std::abs(diagnostics::mmd2(X, X, spec)) <= 1e-9);
}

TEST_CASE("mmd2: symmetry, kernel-sum additivity, translation invariance") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const int m = 2 + static_cast<int>(rng() % 10);
    const int n = 2 + static_cast<int>(rng() % 10);
    const int d = 1 + static_cast<int>(rng() % 4);
    Eigen::MatrixXd X = Eigen::MatrixXd::Random(m, d);
    Eigen::MatrixXd Y = Eigen::MatrixXd::Random(n, d) * 2.0;

    KernelSpec ab{{0.7, 1.9}};
    CHECK(diagnostics::mmd2(X, Y, ab) == diagnostics::mmd2(Y, X, ab));

    const double sum_split = diagnostics::mmd2(X, Y, KernelSpec{{0.7}}) +
                             diagnostics::mmd2(X, Y, KernelSpec{{1.9}});
    CHECK(diagnostics::mmd2(X, Y, ab) == doctest::Approx(sum_split).epsilon(1e-12));

    Eigen::RowVectorXd shift = Eigen::RowVectorXd::Constant(d, 3.25);
    Eigen::MatrixXd Xs = X.rowwise() + shift;
    Eigen::MatrixXd Ys = Y.rowwise() + shift;
    CHECK(diagnostics::mmd2(Xs, Ys, ab) ==
          doctest::Approx(diagnostics::mmd2(X, Y, ab)).epsilon(1e-9));
  }
}

TEST_CASE("mmd2: matches the brute-force oracle and stays non-negative") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const int m = 1 + static_cast<int>(rng() % 50);
    const int n = 1 + static_cast<int>(rng() % 50);
    const int d = 1 + static_cast<int>(rng() % 6);
    Eigen::MatrixXd X(m, d), Y(n, d);
    std::normal_distribution<double> normal(0.0, 1.5);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < d; ++j) X(i, j) = normal(rng);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j) Y(i, j) = normal(rng) + 0.5;
    const std::vector<double> bands = {0.3, 1.0, 2.7};
    const double got = diagnostics::mmd2(X, Y, KernelSpec{bands});
    const double want = mmd2_oracle(X, Y, bands);
    REQUIRE(std::abs(got - want) <= 1e-9);
    REQUIRE(got >= -1e-9);
  }
}

TEST_CASE("mmd2: unbiased variant and input validation") {
  Eigen::MatrixXd X = Eigen::MatrixXd::Random(6, 3);
  Eigen::MatrixXd Y = Eigen::MatrixXd::Random(7, 3);
  KernelSpec spec{{1.0}};
  // the unbiased statistic drops the diagonal self-similarities
  CHECK(diagnostics::mmd2(X, Y, spec, true) < diagnostics::mmd2(X, Y, spec, false) + 1e-12);

  Eigen::MatrixXd bad(0, 3);
  CHECK_THROWS(diagnostics::mmd2(bad, Y, spec));
  Eigen::MatrixXd wrong_dim = Eigen::MatrixXd::Random(4, 2);
  CHECK_THROWS(diagnostics::mmd2(X, wrong_dim, spec));
  CHECK_THROWS(diagnostics::mmd2(X, Y, KernelSpec{{}}));
  CHECK_THROWS(diagnostics::mmd2(X, Y, KernelSpec{{-1.0}}));
}

TEST_CASE("median_heuristic and ladder") {
  Eigen::MatrixXd Z(3, 1);
  Z << 0.0, 1.0, 10.0;  // pairwise distances 1, 9, 10 -> lower median 9
  CHECK(diagnostics::median_heuristic(Z) == doctest::Approx(9.0));
  CHECK(diagnostics::median_heuristic(Eigen::MatrixXd::Zero(5, 2)) == 1.0);  // degenerate

  const auto ladder = diagnostics::bandwidth_ladder(2.0, {0.5, 1.0, 4.0});
  CHECK(ladder == std::vector<double>{1.0, 2.0, 8.0});
}

TEST_CASE("diversity_report: identity row vanishes, counts recorded, sorted") {
  std::vector<std::string> texts;
  std::vector<int> classes;
  for (int i = 0; i < 24; ++i) {
    texts.push_back(i % 2 ? "a fine bright day number " + std::to_string(i)
                          : "a sad gray day number " + std::to_string(i));
    classes.push_back(i % 2);
  }
  auto vocab = corpus::build_vocab(texts, 1, 1000);
  corpus::LabeledDataset ds;
  ds.num_classes = 2;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    corpus::LabeledExample ex;
    ex.tokens = corpus::tokenize(texts[i], vocab);
    ex.label = Eigen::VectorXd::Zero(2);
    ex.label(classes[i]) = 1.0;
    ds.examples.push_back(std::move(ex));
  }
  auto params = encoder::init_params(vocab.size(), 8, 12, 6, 2, 3);

  std::vector<augment::StrategySpec> strategies = {
      augment::parse_strategy("identity"),
      augment::parse_strategy("cutoff"),
      augment::parse_strategy("replace"),
  };
  diagnostics::DiversityConfig cfg;
  cfg.sample_count = 16;
  const auto rows = diagnostics::diversity_report(ds, strategies, params, vocab, nullptr, cfg, 5);
  REQUIRE(rows.size() == 3);
  for (const auto& row : rows) CHECK(row.sample_count == 16);
  for (std::size_t i = 1; i < rows.size(); ++i) CHECK(rows[i - 1].mmd >= rows[i].mmd);
  for (const auto& row : rows)
    if (row.strategy == "single(identity)") CHECK(std::abs(row.mmd) <= 1e-9);
}
