#include "coda/contrast.hpp"

#include <stdexcept>

namespace coda::contrast {

MemoryBank::MemoryBank(int capacity, int dim) : capacity_(capacity) {
  if (capacity < 1) throw std::invalid_argument("bank capacity must be >= 1");
  if (dim < 1) throw std::invalid_argument("bank dim must be >= 1");
  storage_ = Eigen::MatrixXd::Zero(capacity, dim);
}

void MemoryBank::push(const Eigen::MatrixXd& keys, const std::vector<char>& skip_flags) {
  if (capacity_ == 0) throw std::logic_error("bank is not initialized");
  if (keys.cols() != storage_.cols())
    throw std::invalid_argument("key dimension does not match bank");
  if (!skip_flags.empty() && static_cast<Eigen::Index>(skip_flags.size()) != keys.rows())
    throw std::invalid_argument("flag count does not match key count");

  for (Eigen::Index r = 0; r < keys.rows(); ++r) {
    if (!skip_flags.empty() && skip_flags[static_cast<std::size_t>(r)]) continue;
    storage_.row(head_) = keys.row(r);
    head_ = (head_ + 1) % capacity_;
    if (count_ < capacity_) ++count_;
  }
}

Eigen::MatrixXd MemoryBank::snapshot() const {
  Eigen::MatrixXd out(count_, storage_.cols());
  // oldest entry sits at head_ once the ring has wrapped
  const int start = count_ < capacity_ ? 0 : head_;
  for (int i = 0; i < count_; ++i) out.row(i) = storage_.row((start + i) % capacity_);
  return out;
}

void momentum_update(MomentumState& state, const encoder::ModelParams& query_params) {
  if (!(state.gamma >= 0.0 && state.gamma <= 1.0))
    throw std::invalid_argument("gamma must lie in [0, 1]");
  const double g = state.gamma;
  encoder::for_each_tensor2(state.key_params, query_params, [g](auto& key, const auto& query) {
    if (key.rows() != query.rows() || key.cols() != query.cols())
      throw std::invalid_argument("key/query parameter shapes differ");
    key = g * key + (1.0 - g) * query;
  });
}

KeyBatch compute_keys(const MomentumState& state,
                      const std::vector<corpus::TokenSequence>& tokens) {
  const encoder::EmbeddingBatch batch = encoder::embed(state.key_params, tokens);
  auto fwd = encoder::forward(state.key_params, batch, 0.0, encoder::Mode::kEval, nullptr);
  auto proj = encoder::project(state.key_params, fwd.pooled);
  return {std::move(proj.units), std::move(proj.zero_flag)};
}

}  // namespace coda::contrast
