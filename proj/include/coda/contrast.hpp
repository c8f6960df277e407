#pragma once

#include <Eigen/Dense>
#include <vector>

#include "coda/encoder.hpp"

namespace coda::contrast {

// Bounded FIFO of unit-norm key vectors used as contrastive negatives.
// Single writer; snapshots are value copies and safe to read concurrently.
class MemoryBank {
 public:
  MemoryBank() = default;
  MemoryBank(int capacity, int dim);

  // Appends rows in batch order, skipping flagged entries. Once full,
  // every accepted key evicts the single oldest one.
  void push(const Eigen::MatrixXd& keys, const std::vector<char>& skip_flags = {});

  // Contents oldest-to-newest; unaffected by later pushes.
  Eigen::MatrixXd snapshot() const;

  int count() const { return count_; }
  int capacity() const { return capacity_; }
  int dim() const { return static_cast<int>(storage_.cols()); }

 private:
  Eigen::MatrixXd storage_;  // capacity x dim ring buffer
  int capacity_ = 0;
  int count_ = 0;
  int head_ = 0;  // next write slot
};

// Shadow parameters updated by exponential moving average, never by the
// optimizer.
struct MomentumState {
  encoder::ModelParams key_params;
  double gamma = 0.99;
};

// key <- gamma * key + (1 - gamma) * query, elementwise over every tensor.
// Applied once per training step, after the optimizer step.
void momentum_update(MomentumState& state, const encoder::ModelParams& query_params);

struct KeyBatch {
  Eigen::MatrixXd units;        // B x d_proj
  std::vector<char> zero_flag;  // all-padding examples produce flagged zeros
};

// Keys come from the key encoder in eval mode (no dropout) over the
// original token sequences.
KeyBatch compute_keys(const MomentumState& state,
                      const std::vector<corpus::TokenSequence>& tokens);

}  // namespace coda::contrast
