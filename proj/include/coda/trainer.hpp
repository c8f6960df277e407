#pragma once

#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "coda/augment.hpp"
#include "coda/contrast.hpp"
#include "coda/corpus.hpp"
#include "coda/encoder.hpp"
#include "coda/objectives.hpp"

namespace coda::trainer {

struct TrainConfig {
  // objective weights
  double alpha = 1.0;
  double beta = 1.0;
  double lambda_weight = 0.03;
  std::string adv_term = "at";         // at: labeled loss on the augmentation; vat: label-free divergence
  std::string consistency_div = "js";  // js | kl
  bool js_stop_grad = false;           // treat the original-branch prediction as constant in the consistency term

  // contrastive machinery
  double tau = 1.0;
  double gamma = 0.99;
  int bank_capacity = 65536;  // clamped to the training-set size at run time
  int contrast_warmup_steps = 0;
  bool bank_in_checkpoint = false;

  // augmentation (per-transform settings live in strategy.settings)
  augment::StrategySpec strategy{
      augment::StrategyKind::kStack,
      {augment::Transform::kBack, augment::Transform::kAdv},
      {}};

  // model
  int d_emb = 64;
  int d_hid = 64;
  int d_proj = 32;
  int vocab_min_freq = 1;
  int vocab_max_size = 50000;
  double dropout_rate = 0.1;

  // optimizer
  double lr = 1e-3;
  int batch_size = 32;
  int epochs = 5;
  double warmup_ratio = 0.06;
  double weight_decay = 0.1;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  // run control
  std::uint64_t seed = 42;
  int eval_every = 100;  // steps; 0 disables mid-training evaluation
  double subsample_fraction = 1.0;

  // Range checks; the weight windows alpha in [0,1], beta in [0,3],
  // lambda in [0,0.03] only apply when force_weights is false.
  void validate(bool force_weights = false) const;
};

struct MetricsRecord {
  long step = 0;
  int epoch = 0;
  std::string split;  // "train" | "dev"
  double accuracy = 0.0;
  objectives::LossBreakdown loss;
  double wall_time_s = 0.0;  // informational; kept out of the metrics stream
  bool empty_eval = false;
};

using MetricsSink = std::function<void(const MetricsRecord&)>;

// ---------------------------------------------------------------------------
// optimizer

struct AdamState {
  encoder::ModelParams m;
  encoder::ModelParams v;
  long step = 0;
};

AdamState init_adam(const encoder::ModelParams& params);

// Bias-corrected moments with decoupled weight decay:
//   p -= lr * (m_hat / sqrt(v_hat + eps) + weight_decay * p).
// The PAD embedding row is excluded from updates.
void adam_update(encoder::ModelParams& params, const encoder::ModelParams& grads,
                 AdamState& state, double lr, double beta1, double beta2, double eps,
                 double weight_decay);

// Linear warmup to 1 over ceil(warmup_ratio * total) steps, then linear
// decay; every step keeps a positive factor. `step` is 1-based.
double lr_scale(long step, long total_steps, double warmup_ratio);

// ---------------------------------------------------------------------------
// one optimization step

// Everything a step differentiates through is recomputed from the current
// parameters; everything else (dropout masks, adversarial offsets, keys,
// bank contents, transform draws) is frozen inside the plan. That makes
// the analytic gradient of evaluate_objective checkable against finite
// differences of its own return value.
struct StepPlan {
  std::vector<corpus::TokenSequence> orig_tokens;
  Eigen::MatrixXd orig_labels;  // B x C
  augment::AugPlan aug;         // embedding-level plan of the augmented branch
  bool aug_active = false;
  const encoder::ForwardCache* mask_source = nullptr;  // recorded dropout masks
  Eigen::MatrixXd keys;                                // B x d_proj, constants
  std::vector<char> key_flags;
  Eigen::MatrixXd bank_snapshot;  // negatives, constants
  double alpha = 0.0;
  double beta = 0.0;
  double lambda = 0.0;  // effective weight (after warmup gating)
  double tau = 1.0;
  bool adv_term_vat = false;
  bool consistency_kl = false;
  bool js_stop_grad = false;
  double dropout_rate = 0.0;
  encoder::Mode mode = encoder::Mode::kTrain;
};

// Captures the dropout masks of every train-mode forward within a step so
// tests can assert they are shared.
struct StepTrace {
  std::vector<Eigen::MatrixXd> drop1;
  std::vector<Eigen::MatrixXd> drop2;
  void record(const encoder::ForwardCache& cache) {
    drop1.push_back(cache.drop1);
    drop2.push_back(cache.drop2);
  }
};

struct ObjectiveEval {
  objectives::LossBreakdown breakdown;
  encoder::GradientSet grads;   // input_grad refers to the original embeddings
  Eigen::MatrixXd logits_orig;  // B x C
  int contrast_included = 0;    // examples that entered the contrastive terms
};

ObjectiveEval evaluate_objective(const encoder::ModelParams& params, const StepPlan& plan,
                                 StepTrace* trace = nullptr);

struct NonFiniteLossError : std::runtime_error {
  long step;
  int batch_index;
  NonFiniteLossError(long s, int b)
      : std::runtime_error("non-finite loss at step " + std::to_string(s) +
                           " (batch index " + std::to_string(b) + ")"),
        step(s),
        batch_index(b) {}
};

struct TrainerState {
  encoder::ModelParams params;
  contrast::MomentumState key_state;
  contrast::MemoryBank bank;
  AdamState adam;
  long step = 0;  // completed steps
};

TrainerState init_trainer(const encoder::ModelParams& params, const TrainConfig& config,
                          int train_size);

// One full step: token-level augmentation, embedding, original forward with
// fresh dropout masks, augmented/adversarial forwards reusing those masks,
// loss composition, Adam update, momentum update, and bank push.
objectives::LossBreakdown train_step(TrainerState& state,
                                     const std::vector<corpus::LabeledExample>& batch,
                                     const TrainConfig& config,
                                     const corpus::Vocabulary& vocab,
                                     const corpus::ParaphraseTable* table, double lr_now,
                                     StepTrace* trace = nullptr);

// Eval-mode pass over the dataset: accuracy by argmax agreement plus the
// mean cross-entropy.
MetricsRecord evaluate(const encoder::ModelParams& params, const corpus::LabeledDataset& dataset,
                       const TrainConfig& config);

struct TrainCallbacks {
  MetricsSink sink;
  std::function<void(long step, const encoder::ModelParams&)> checkpoint;
};

struct TrainResult {
  encoder::ModelParams params;
  double best_dev_accuracy = 0.0;
  long best_step = 0;
  double final_dev_accuracy = 0.0;
  objectives::LossBreakdown final_loss;
  long total_steps = 0;
};

// Training is a pure function of (datasets, config); datasets must already
// be tokenized against `vocab`.
TrainResult train(const corpus::LabeledDataset& train_set, const corpus::LabeledDataset& dev_set,
                  const TrainConfig& config, const corpus::Vocabulary& vocab,
                  const corpus::ParaphraseTable* table, const TrainCallbacks& callbacks = {},
                  const encoder::ModelParams* init = nullptr);

// ---------------------------------------------------------------------------
// low-resource sweep

struct SweepCell {
  double fraction = 1.0;
  std::uint64_t seed = 0;
  std::string method;
  double dev_accuracy = 0.0;       // final evaluation
  double best_dev_accuracy = 0.0;  // best mid-training evaluation
  bool ok = false;
  std::string error;
};

// Methods: "coda" (config as-is), "ce" (alpha=beta=lambda=0),
// "contrast" (alpha=beta=0), "consistency" (lambda=0). Each cell
// subsamples, rebuilds the vocabulary, trains, and evaluates; failures are
// recorded per cell without aborting the sweep.
std::vector<SweepCell> low_resource_sweep(
    const corpus::LabeledDataset& train_raw, const corpus::LabeledDataset& dev_raw,
    const corpus::ParaphraseTable* table, const TrainConfig& base,
    const std::vector<double>& fractions, const std::vector<std::uint64_t>& seeds,
    const std::vector<std::string>& methods,
    const std::function<void(const SweepCell&)>& on_cell = {});

// Vocabulary over the training texts plus the paraphrase targets, so
// table-provided tokens stay trainable.
corpus::Vocabulary build_run_vocab(const corpus::LabeledDataset& train_raw,
                                   const corpus::ParaphraseTable* table, int min_freq,
                                   int max_size);

TrainConfig apply_method(const TrainConfig& base, const std::string& method);

}  // namespace coda::trainer
