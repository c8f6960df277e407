#include "coda/diagnostics.hpp"

#include <algorithm>

#include "coda/rng.hpp"

namespace coda::diagnostics {

double median_heuristic(const Eigen::MatrixXd& Z, int max_samples) {
  const Eigen::Index n = std::min<Eigen::Index>(Z.rows(), max_samples);
  if (n < 2) return 1.0;
  std::vector<double> dists;
  dists.reserve(static_cast<std::size_t>(n) * (n - 1) / 2);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) dists.push_back((Z.row(i) - Z.row(j)).norm());
  auto mid = dists.begin() + static_cast<long>((dists.size() - 1) / 2);
  std::nth_element(dists.begin(), mid, dists.end());
  return *mid > 0.0 ? *mid : 1.0;
}

std::vector<double> bandwidth_ladder(double sigma, const std::vector<double>& scales) {
  std::vector<double> out;
  out.reserve(scales.size());
  for (double s : scales) out.push_back(sigma * s);
  return out;
}

namespace {

// pooled encoder representation of a token batch, eval mode
Eigen::MatrixXd pooled_of_tokens(const encoder::ModelParams& params,
                                 const std::vector<corpus::TokenSequence>& tokens) {
  const auto batch = encoder::embed(params, tokens);
  return encoder::forward(params, batch, 0.0, encoder::Mode::kEval, nullptr).pooled;
}

Eigen::MatrixXd pooled_of_batch(const encoder::ModelParams& params,
                                const encoder::EmbeddingBatch& batch) {
  return encoder::forward(params, batch, 0.0, encoder::Mode::kEval, nullptr).pooled;
}

}  // namespace

std::vector<DiversityRow> diversity_report(const corpus::LabeledDataset& dataset,
                                           const std::vector<augment::StrategySpec>& strategies,
                                           const encoder::ModelParams& params,
                                           const corpus::Vocabulary& vocab,
                                           const corpus::ParaphraseTable* table,
                                           const DiversityConfig& config, std::uint64_t seed) {
  if (dataset.size() == 0) throw std::invalid_argument("empty dataset");

  // deterministic sample of the evaluation subset
  std::vector<int> idx(static_cast<std::size_t>(dataset.size()));
  for (int i = 0; i < dataset.size(); ++i) idx[static_cast<std::size_t>(i)] = i;
  if (config.sample_count > 0 && config.sample_count < dataset.size()) {
    Rng rng = make_rng(derive_seed(seed, 0xD5));
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(static_cast<std::size_t>(config.sample_count));
    std::sort(idx.begin(), idx.end());
  }
  std::vector<corpus::LabeledExample> sample;
  sample.reserve(idx.size());
  for (int i : idx) sample.push_back(dataset.examples[static_cast<std::size_t>(i)]);

  std::vector<corpus::TokenSequence> orig_tokens;
  orig_tokens.reserve(sample.size());
  for (const auto& ex : sample) orig_tokens.push_back(ex.tokens);
  const Eigen::MatrixXd orig_rep = pooled_of_tokens(params, orig_tokens);

  // one ladder for every row so scores are comparable across strategies
  KernelSpec spec;
  spec.bandwidths = bandwidth_ladder(median_heuristic(orig_rep), config.bandwidth_scales);

  const augment::ModelHooks hooks = augment::eval_hooks(params);
  const int bs = std::max(config.batch_size, 1);

  std::vector<DiversityRow> rows;
  for (const auto& strategy : strategies) {
    strategy.validate();
    Eigen::MatrixXd aug_rep(orig_rep.rows(), orig_rep.cols());
    Eigen::Index row = 0;
    for (std::size_t start = 0; start < sample.size(); start += static_cast<std::size_t>(bs)) {
      const std::size_t end = std::min(sample.size(), start + static_cast<std::size_t>(bs));
      std::vector<corpus::LabeledExample> chunk(sample.begin() + static_cast<long>(start),
                                                sample.begin() + static_cast<long>(end));
      auto plan = augment::run_pipeline(strategy, chunk, hooks,
                                        derive_seed(seed, 0xE0 + start), vocab, table,
                                        /*force_embed=*/true);
      const auto batch = augment::assemble_batch(params, plan);
      aug_rep.middleRows(row, batch.batch) = pooled_of_batch(params, batch);
      row += batch.batch;
    }
    DiversityRow r;
    r.strategy = augment::to_string(strategy);
    r.mmd = mmd2(orig_rep, aug_rep, spec, config.unbiased);
    r.sample_count = static_cast<int>(sample.size());
    rows.push_back(std::move(r));
  }
  std::stable_sort(rows.begin(), rows.end(),
                   [](const DiversityRow& a, const DiversityRow& b) { return a.mmd > b.mmd; });
  return rows;
}

}  // namespace coda::diagnostics
