#pragma once

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "coda/corpus.hpp"
#include "coda/encoder.hpp"
#include "coda/rng.hpp"

namespace coda::augment {

using corpus::LabeledExample;
using corpus::ParaphraseTable;
using corpus::TokenSequence;
using corpus::Vocabulary;

enum class Transform { kIdentity, kBack, kReplace, kCutoff, kMixup, kAdv };

// Token-level transforms rewrite the token sequence; embedding-level ones
// act on looked-up embedding matrices and cannot precede token-level ones.
bool is_token_level(Transform t);
const char* transform_name(Transform t);
Transform parse_transform(const std::string& name);

enum class StrategyKind { kSingle, kRandom, kMixCombine, kStack };

struct PipelineSettings {
  double cutoff_ratio = 0.1;
  double replace_rate = 0.15;
  double epsilon = 1.0;
  double mixup_alpha = 1.0;
  int adv_steps = 1;
};

struct StrategySpec {
  StrategyKind kind = StrategyKind::kSingle;
  std::vector<Transform> operands;
  PipelineSettings settings;

  // Throws std::invalid_argument on infeasible operand orders
  // (token-level after embedding-level) or malformed operand lists.
  void validate() const;
  bool uses(Transform t) const;
};

// "stack(back,adv)", "random(back,cutoff,adv)", "mix(ori,back)",
// "single(cutoff)" or a bare transform name. Aliases: ori=identity, cut=cutoff.
StrategySpec parse_strategy(const std::string& text);
std::string to_string(const StrategySpec& spec);

struct AugmentedPair {
  int original_index = -1;
  std::string original_text;
  std::optional<TokenSequence> augmented_tokens;
  struct EmbeddingSlice {
    Eigen::MatrixXd values;  // max_len x d
    Eigen::VectorXd mask;    // max_len
  };
  std::optional<EmbeddingSlice> augmented_embeddings;
  Eigen::VectorXd label;
  std::vector<std::string> provenance;
};

// ---------------------------------------------------------------------------
// individual transforms

// Table hit swaps in the tokenized paraphrase; a miss keeps the original
// tokens and bumps the table's miss counter. The label never changes.
AugmentedPair back_translate(const LabeledExample& ex, const ParaphraseTable& table,
                             const Vocabulary& vocab);

// Each non-reserved token is independently replaced with probability
// `rate` by a unigram-distribution sample (reserved ids excluded).
AugmentedPair word_replace(const LabeledExample& ex, const Vocabulary& vocab, double rate,
                           Rng& rng);

// Window width for a sequence of true length `len`: ceil(ratio * len),
// start uniform in [0, len - w]. Returns {start, width}; width 0 means no-op.
std::pair<int, int> cutoff_window(int len, double ratio, Rng& rng);

// Zeroes one contiguous span of embedding rows per example and clears the
// attention mask there; padded positions are untouched.
encoder::EmbeddingBatch cutoff(const encoder::EmbeddingBatch& batch, double ratio, Rng& rng);

struct MixResult {
  Eigen::MatrixXd values;
  Eigen::VectorXd mask;  // elementwise OR of the inputs
  Eigen::VectorXd label;
  double coeff = 0.0;
};

// e' = a e_i + (1-a) e_j, y' = a y_i + (1-a) y_j with a ~ Beta(alpha, alpha).
MixResult mixup(const Eigen::MatrixXd& e_i, const Eigen::VectorXd& mask_i,
                const Eigen::VectorXd& y_i, const Eigen::MatrixXd& e_j,
                const Eigen::VectorXd& mask_j, const Eigen::VectorXd& y_j, double alpha,
                Rng& rng);
MixResult mixup_with_coeff(const Eigen::MatrixXd& e_i, const Eigen::VectorXd& mask_i,
                           const Eigen::VectorXd& y_i, const Eigen::MatrixXd& e_j,
                           const Eigen::VectorXd& mask_j, const Eigen::VectorXd& y_j,
                           double coeff);

// e + epsilon * g/||g||_2 with the norm taken per example over all unpadded
// positions and dimensions jointly. ||g|| < 1e-12 returns e unchanged;
// padded rows receive zero perturbation.
Eigen::MatrixXd adversarial_perturb(const Eigen::MatrixXd& e, const Eigen::VectorXd& mask,
                                    const Eigen::MatrixXd& grad, double epsilon);

// ---------------------------------------------------------------------------
// strategy pipeline

// Hooks into the model for transforms that need it: embedding lookup and,
// for the adversarial transform, the loss gradient at the inputs.
struct ModelHooks {
  std::function<encoder::EmbeddingBatch(const std::vector<TokenSequence>&, int)> embed;
  // d(sum of per-example cross-entropy) / d(batch values)
  std::function<Eigen::MatrixXd(const encoder::EmbeddingBatch&, const Eigen::MatrixXd& labels)>
      loss_input_grad;
};

// One linear contribution to an augmented embedding:
//   weight * keep[t] * embed_row(tokens[t]) for each position t.
// Everything else in the augmented example is an additive constant.
struct EmbedSource {
  TokenSequence tokens;
  double weight = 1.0;
  Eigen::VectorXd keep;  // length max_len; zero beyond the sequence / in cut spans
};

struct ExampleAug {
  TokenSequence tokens;  // after token-level transforms
  Eigen::VectorXd label;
  std::vector<std::string> provenance;
  bool used_mixup = false;
  // set when the pipeline reached the embedding level
  std::vector<EmbedSource> sources;
  Eigen::MatrixXd values;  // max_len x d, final augmented values
  Eigen::VectorXd mask;    // max_len
  Eigen::MatrixXd offset;  // max_len x d, additive part (adversarial deltas)
};

struct AugPlan {
  bool embedded = false;
  int max_len = 0;
  std::vector<ExampleAug> ex;
};

// Runs the strategy over a batch. Randomness is derived from `seed`
// (one strategy draw per batch, one substream per example), so the result
// is a pure function of its arguments. force_embed lifts pure token-level
// results to the embedding level with identity sources.
AugPlan run_pipeline(const StrategySpec& spec, const std::vector<LabeledExample>& batch,
                     const ModelHooks& hooks, std::uint64_t seed, const Vocabulary& vocab,
                     const ParaphraseTable* table, bool force_embed = false);

// Rebuilds the augmented embedding batch from the plan's sources and
// offsets using the given parameters' embedding table.
encoder::EmbeddingBatch assemble_batch(const encoder::ModelParams& params, const AugPlan& plan);

struct ModelContext {
  const encoder::ModelParams* params = nullptr;
  const Vocabulary* vocab = nullptr;
  const ParaphraseTable* table = nullptr;
  double dropout_rate = 0.0;  // adversarial gradients use eval-mode forwards here
};

// Public strategy application (batch in, augmented pairs out); used by the
// augment command and the diversity diagnostics. Model forwards run in
// eval mode.
std::vector<AugmentedPair> apply_strategy(const StrategySpec& spec,
                                          const std::vector<LabeledExample>& batch,
                                          const ModelContext& ctx, std::uint64_t seed);

// Eval-mode hooks over `params`; exposed for reuse by the trainer's tests.
ModelHooks eval_hooks(const encoder::ModelParams& params);

}  // namespace coda::augment
