#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <deque>

#include "coda/contrast.hpp"
#include "support/checks.hpp"

using namespace coda;
using contrast::MemoryBank;
using testsupport::random_unit;

namespace {

Eigen::MatrixXd unit_rows(int n, int dim, std::mt19937_64& rng) {
  Eigen::MatrixXd m(n, dim);
  for (int r = 0; r < n; ++r) m.row(r) = random_unit(dim, rng).transpose();
  return m;
}

}  // namespace

TEST_CASE("bank: fifo eviction and counting") {
  std::mt19937_64 rng(1);
  MemoryBank bank(2, 4);
  const Eigen::MatrixXd abc = unit_rows(3, 4, rng);
  bank.push(abc.topRows(1));
  CHECK(bank.count() == 1);
  bank.push(abc.middleRows(1, 1));
  bank.push(abc.bottomRows(1));
  CHECK(bank.count() == 2);
  const auto snap = bank.snapshot();
  CHECK(snap.row(0) == abc.row(1));  // oldest surviving entry first
  CHECK(snap.row(1) == abc.row(2));

  MemoryBank empty(3, 4);
  const Eigen::MatrixXd batch = unit_rows(2, 4, rng);
  empty.push(batch);
  CHECK(empty.count() == 2);

  Eigen::MatrixXd wrong(1, 5);
  CHECK_THROWS(empty.push(wrong));
}

TEST_CASE("bank: flagged keys are skipped") {
  std::mt19937_64 rng(2);
  MemoryBank bank(4, 3);
  const Eigen::MatrixXd keys = unit_rows(3, 3, rng);
  bank.push(keys, {0, 1, 0});
  CHECK(bank.count() == 2);
  const auto snap = bank.snapshot();
  CHECK(snap.row(0) == keys.row(0));
  CHECK(snap.row(1) == keys.row(2));
}

TEST_CASE("bank: snapshot isolation") {
  std::mt19937_64 rng(3);
  MemoryBank bank(4, 3);
  bank.push(unit_rows(2, 3, rng));
  const auto before = bank.snapshot();
  const auto again = bank.snapshot();
  CHECK(before == again);
  bank.push(unit_rows(3, 3, rng));
  CHECK(bank.snapshot().rows() == 4);
  CHECK(before.rows() == 2);  // unaffected by the push

  MemoryBank fresh(4, 3);
  CHECK(fresh.snapshot().rows() == 0);
}

// oracle: a plain list that keeps only the suffix of pushed keys
TEST_CASE("bank: randomized pushes match the list-suffix oracle") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const int capacity = 1 + static_cast<int>(rng() % 8);
    const int dim = 3;
    MemoryBank bank(capacity, dim);
    std::deque<Eigen::RowVectorXd> oracle;
    const int pushes = static_cast<int>(rng() % 12);
    for (int p = 0; p < pushes; ++p) {
      const int n = 1 + static_cast<int>(rng() % 5);
      Eigen::MatrixXd keys = unit_rows(n, dim, rng);
      std::vector<char> flags(static_cast<std::size_t>(n), 0);
      for (auto& fl : flags) fl = rng() % 4 == 0;
      bank.push(keys, flags);
      for (int r = 0; r < n; ++r) {
        if (flags[static_cast<std::size_t>(r)]) continue;
        oracle.push_back(keys.row(r));
        if (static_cast<int>(oracle.size()) > capacity) oracle.pop_front();
      }
    }
    const auto snap = bank.snapshot();
    REQUIRE(snap.rows() == static_cast<Eigen::Index>(oracle.size()));
    for (Eigen::Index r = 0; r < snap.rows(); ++r)
      REQUIRE(snap.row(r) == oracle[static_cast<std::size_t>(r)]);
  }
}

TEST_CASE("momentum_update: endpoints and exact geometric decay") {
  auto query = encoder::init_params(20, 4, 6, 3, 2, 5);
  auto shadow = encoder::init_params(20, 4, 6, 3, 2, 6);

  contrast::MomentumState frozen{shadow, 1.0};
  momentum_update(frozen, query);
  bool unchanged = true;
  encoder::for_each_tensor2(frozen.key_params, shadow,
                            [&](const auto& a, const auto& b) { unchanged &= a == b; });
  CHECK(unchanged);

  contrast::MomentumState copy{shadow, 0.0};
  momentum_update(copy, query);
  bool equal = true;
  encoder::for_each_tensor2(copy.key_params, query,
                            [&](const auto& a, const auto& b) { equal &= a == b; });
  CHECK(equal);

  // scalar view: key 0, query 1 -> gap after n steps is gamma^n exactly
  contrast::MomentumState decay{encoder::zeros_like(query), 0.99};
  encoder::ModelParams ones = query;
  encoder::for_each_tensor(ones, [](auto& t) { t.setOnes(); });
  momentum_update(decay, ones);
  CHECK(decay.key_params.enc_b1(0) == doctest::Approx(0.01).epsilon(1e-12));
  const int n = 50;
  contrast::MomentumState many{encoder::zeros_like(query), 0.99};
  for (int i = 0; i < n; ++i) momentum_update(many, ones);
  const double gap = 1.0 - many.key_params.enc_b1(0);
  CHECK(std::abs(gap - std::pow(0.99, n)) <= 1e-12);

  contrast::MomentumState bad{shadow, 1.5};
  CHECK_THROWS(momentum_update(bad, query));
}

TEST_CASE("compute_keys: parameter-equality case, unit norms, padding flag") {
  auto query = encoder::init_params(30, 6, 8, 4, 2, 7);
  contrast::MomentumState state{encoder::init_params(30, 6, 8, 4, 2, 8), 0.0};
  momentum_update(state, query);  // gamma 0 copies the query weights

  std::vector<corpus::TokenSequence> toks(3);
  toks[0].ids = {3, 4, 5};
  toks[1].ids = {6, 7};
  // toks[2] stays empty: all-padding example
  const auto keys = contrast::compute_keys(state, toks);

  const auto batch = encoder::embed(query, toks);
  const auto fwd = encoder::forward(query, batch, 0.0, encoder::Mode::kEval, nullptr);
  const auto proj = encoder::project(query, fwd.pooled);
  CHECK((keys.units - proj.units).norm() == 0.0);

  CHECK(keys.units.row(0).norm() == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(keys.units.row(1).norm() == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(keys.zero_flag[0] == 0);
  CHECK(keys.zero_flag[2] == 1);
  CHECK(keys.units.row(2).norm() == 0.0);
}
