#include "coda/augment.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "coda/objectives.hpp"

namespace coda::augment {

bool is_token_level(Transform t) {
  return t == Transform::kIdentity || t == Transform::kBack || t == Transform::kReplace;
}

const char* transform_name(Transform t) {
  switch (t) {
    case Transform::kIdentity: return "identity";
    case Transform::kBack: return "back";
    case Transform::kReplace: return "replace";
    case Transform::kCutoff: return "cutoff";
    case Transform::kMixup: return "mixup";
    case Transform::kAdv: return "adv";
  }
  return "?";
}

Transform parse_transform(const std::string& name) {
  if (name == "identity" || name == "ori") return Transform::kIdentity;
  if (name == "back") return Transform::kBack;
  if (name == "replace") return Transform::kReplace;
  if (name == "cutoff" || name == "cut") return Transform::kCutoff;
  if (name == "mixup") return Transform::kMixup;
  if (name == "adv") return Transform::kAdv;
  throw std::invalid_argument("unknown transform '" + name + "'");
}

void StrategySpec::validate() const {
  if (operands.empty()) throw std::invalid_argument("strategy needs at least one operand");
  switch (kind) {
    case StrategyKind::kSingle:
      if (operands.size() != 1)
        throw std::invalid_argument("single strategy takes exactly one operand");
      break;
    case StrategyKind::kRandom:
      break;
    case StrategyKind::kMixCombine:
      if (operands.size() != 2)
        throw std::invalid_argument("mix strategy takes exactly two operands");
      for (Transform t : operands)
        if (t == Transform::kMixup)
          throw std::invalid_argument("mix strategy operands cannot be mixup themselves");
      break;
    case StrategyKind::kStack: {
      bool seen_embedding = false;
      for (Transform t : operands) {
        if (is_token_level(t) && t != Transform::kIdentity && seen_embedding)
          throw std::invalid_argument(
              std::string("infeasible stack order: token-level '") + transform_name(t) +
              "' cannot follow an embedding-level transform");
        if (!is_token_level(t)) seen_embedding = true;
      }
      break;
    }
  }
  if (!(settings.cutoff_ratio >= 0.0 && settings.cutoff_ratio < 1.0))
    throw std::invalid_argument("cutoff_ratio must lie in [0, 1)");
  if (!(settings.replace_rate >= 0.0 && settings.replace_rate <= 1.0))
    throw std::invalid_argument("replace_rate must lie in [0, 1]");
  if (uses(Transform::kAdv) && !(settings.epsilon > 0.0))
    throw std::invalid_argument("epsilon must be positive");
  if (!(settings.mixup_alpha > 0.0))
    throw std::invalid_argument("mixup_alpha must be positive");
  if (settings.adv_steps < 1) throw std::invalid_argument("adv_steps must be >= 1");
}

bool StrategySpec::uses(Transform t) const {
  return std::find(operands.begin(), operands.end(), t) != operands.end();
}

StrategySpec parse_strategy(const std::string& text) {
  std::string s;
  for (char c : text)
    if (!std::isspace(static_cast<unsigned char>(c))) s.push_back(c);
  if (s.empty()) throw std::invalid_argument("empty strategy");

  StrategySpec spec;
  auto open = s.find('(');
  if (open == std::string::npos) {
    spec.kind = StrategyKind::kSingle;
    spec.operands = {parse_transform(s)};
    return spec;
  }
  if (s.back() != ')') throw std::invalid_argument("malformed strategy '" + text + "'");
  const std::string head = s.substr(0, open);
  const std::string body = s.substr(open + 1, s.size() - open - 2);
  if (head == "single") spec.kind = StrategyKind::kSingle;
  else if (head == "random") spec.kind = StrategyKind::kRandom;
  else if (head == "mix") spec.kind = StrategyKind::kMixCombine;
  else if (head == "stack") spec.kind = StrategyKind::kStack;
  else throw std::invalid_argument("unknown strategy kind '" + head + "'");

  std::stringstream ss(body);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) spec.operands.push_back(parse_transform(item));
  spec.validate();
  return spec;
}

std::string to_string(const StrategySpec& spec) {
  std::string head;
  switch (spec.kind) {
    case StrategyKind::kSingle: head = "single"; break;
    case StrategyKind::kRandom: head = "random"; break;
    case StrategyKind::kMixCombine: head = "mix"; break;
    case StrategyKind::kStack: head = "stack"; break;
  }
  std::string out = head + "(";
  for (std::size_t i = 0; i < spec.operands.size(); ++i) {
    if (i) out.push_back(',');
    out += transform_name(spec.operands[i]);
  }
  return out + ")";
}

// ---------------------------------------------------------------------------
// individual transforms

AugmentedPair back_translate(const LabeledExample& ex, const ParaphraseTable& table,
                             const Vocabulary& vocab) {
  AugmentedPair out;
  out.original_text = ex.tokens.source_text;
  out.label = ex.label;
  out.provenance = {"back"};
  if (const std::string* para = table.lookup(ex.tokens.source_text)) {
    out.augmented_tokens = corpus::tokenize(*para, vocab);
  } else {
    out.augmented_tokens = ex.tokens;  // miss falls back to the identity
  }
  return out;
}

AugmentedPair word_replace(const LabeledExample& ex, const Vocabulary& vocab, double rate,
                           Rng& rng) {
  if (!(rate >= 0.0 && rate <= 1.0)) throw std::invalid_argument("rate must lie in [0, 1]");
  AugmentedPair out;
  out.original_text = ex.tokens.source_text;
  out.label = ex.label;
  out.provenance = {"replace"};

  TokenSequence seq = ex.tokens;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const bool can_sample = !vocab.unigram_cdf.empty();
  std::string text;
  for (std::size_t i = 0; i < seq.ids.size(); ++i) {
    int& id = seq.ids[i];
    if (!vocab.is_reserved(id) && can_sample && unit(rng) < rate)
      id = vocab.sample_unigram(unit(rng));
    if (i) text.push_back(' ');
    text += vocab.id_to_token[static_cast<std::size_t>(id)];
  }
  seq.source_text = text;
  out.augmented_tokens = std::move(seq);
  return out;
}

std::pair<int, int> cutoff_window(int len, double ratio, Rng& rng) {
  if (!(ratio >= 0.0 && ratio < 1.0)) throw std::invalid_argument("ratio must lie in [0, 1)");
  if (len <= 0) return {0, 0};
  const int w = static_cast<int>(std::ceil(ratio * len));
  if (w == 0) return {0, 0};
  std::uniform_int_distribution<int> start(0, len - w);
  return {start(rng), w};
}

namespace {

void apply_cutoff_span(Eigen::Ref<Eigen::MatrixXd> values, Eigen::Ref<Eigen::VectorXd> mask,
                       int start, int width) {
  values.middleRows(start, width).setZero();
  mask.segment(start, width).setZero();
}

}  // namespace

encoder::EmbeddingBatch cutoff(const encoder::EmbeddingBatch& batch, double ratio, Rng& rng) {
  encoder::EmbeddingBatch out = batch;
  for (int b = 0; b < out.batch; ++b) {
    Eigen::VectorXd mask_row = out.mask.row(b).transpose();
    const int len = static_cast<int>(std::lround(mask_row.sum()));
    auto [start, width] = cutoff_window(len, ratio, rng);
    if (width == 0) continue;
    auto values = out.values.middleRows(static_cast<Eigen::Index>(b) * out.max_len, out.max_len);
    apply_cutoff_span(values, mask_row, start, width);
    out.mask.row(b) = mask_row.transpose();
  }
  return out;
}

namespace {

double beta_draw(double alpha, Rng& rng) {
  std::gamma_distribution<double> g(alpha, 1.0);
  const double x = g(rng);
  const double y = g(rng);
  return (x + y) > 0.0 ? x / (x + y) : 0.5;
}

}  // namespace

MixResult mixup_with_coeff(const Eigen::MatrixXd& e_i, const Eigen::VectorXd& mask_i,
                           const Eigen::VectorXd& y_i, const Eigen::MatrixXd& e_j,
                           const Eigen::VectorXd& mask_j, const Eigen::VectorXd& y_j,
                           double coeff) {
  if (e_i.rows() != e_j.rows() || e_i.cols() != e_j.cols())
    throw std::invalid_argument("mixup inputs must be padded to a common shape");
  if (y_i.size() != y_j.size()) throw std::invalid_argument("mixup label dimensions differ");
  MixResult out;
  out.coeff = coeff;
  out.values = coeff * e_i + (1.0 - coeff) * e_j;
  out.mask = mask_i.cwiseMax(mask_j);
  out.label = coeff * y_i + (1.0 - coeff) * y_j;
  return out;
}

MixResult mixup(const Eigen::MatrixXd& e_i, const Eigen::VectorXd& mask_i,
                const Eigen::VectorXd& y_i, const Eigen::MatrixXd& e_j,
                const Eigen::VectorXd& mask_j, const Eigen::VectorXd& y_j, double alpha,
                Rng& rng) {
  if (!(alpha > 0.0)) throw std::invalid_argument("alpha must be positive");
  return mixup_with_coeff(e_i, mask_i, y_i, e_j, mask_j, y_j, beta_draw(alpha, rng));
}

Eigen::MatrixXd adversarial_perturb(const Eigen::MatrixXd& e, const Eigen::VectorXd& mask,
                                    const Eigen::MatrixXd& grad, double epsilon) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be positive");
  if (grad.rows() != e.rows() || grad.cols() != e.cols())
    throw std::invalid_argument("gradient shape does not match embeddings");
  if (!grad.allFinite()) throw std::invalid_argument("non-finite gradient entries");

  Eigen::MatrixXd masked = grad.array().colwise() * mask.array();
  const double norm = masked.norm();
  if (norm < 1e-12) return e;
  return e + (epsilon / norm) * masked;
}

// ---------------------------------------------------------------------------
// pipeline

namespace {

// fixed substream layout: one draw per batch, one per (op, example)
constexpr std::uint64_t kBatchStream = 0;
std::uint64_t op_stream(int op_ordinal, int example) {
  return (static_cast<std::uint64_t>(op_ordinal) + 1) * 0x10000ULL +
         static_cast<std::uint64_t>(example) + 1;
}

struct ExState {
  TokenSequence tokens;
  Eigen::VectorXd label;
  std::vector<std::string> provenance;
  bool used_mixup = false;
  Eigen::MatrixXd values;  // L x d
  Eigen::VectorXd mask;    // L
  Eigen::MatrixXd offset;  // L x d
  std::vector<EmbedSource> sources;
};

void embed_states(std::vector<ExState>& states, const ModelHooks& hooks) {
  std::vector<TokenSequence> toks;
  toks.reserve(states.size());
  int max_len = 1;
  for (const auto& s : states) {
    toks.push_back(s.tokens);
    max_len = std::max(max_len, s.tokens.length());
  }
  encoder::EmbeddingBatch batch = hooks.embed(toks, max_len);
  for (std::size_t b = 0; b < states.size(); ++b) {
    auto& s = states[b];
    s.values = batch.example(static_cast<int>(b));
    s.mask = batch.mask.row(static_cast<Eigen::Index>(b)).transpose();
    s.offset = Eigen::MatrixXd::Zero(batch.max_len, batch.dim);
    EmbedSource src;
    src.tokens = s.tokens;
    src.weight = 1.0;
    src.keep = s.mask;  // 1 on real positions, 0 beyond
    s.sources = {std::move(src)};
  }
}

encoder::EmbeddingBatch batch_of(const std::vector<ExState>& states) {
  const int B = static_cast<int>(states.size());
  const int L = static_cast<int>(states[0].mask.size());
  const int d = static_cast<int>(states[0].values.cols());
  encoder::EmbeddingBatch batch;
  batch.batch = B;
  batch.max_len = L;
  batch.dim = d;
  batch.values.resize(static_cast<Eigen::Index>(B) * L, d);
  batch.mask.resize(B, L);
  for (int b = 0; b < B; ++b) {
    batch.values.middleRows(static_cast<Eigen::Index>(b) * L, L) = states[b].values;
    batch.mask.row(b) = states[b].mask.transpose();
  }
  return batch;
}

Eigen::MatrixXd labels_of(const std::vector<ExState>& states) {
  Eigen::MatrixXd labels(states.size(), states[0].label.size());
  for (std::size_t b = 0; b < states.size(); ++b) labels.row(static_cast<Eigen::Index>(b)) = states[b].label.transpose();
  return labels;
}

void apply_token_op(Transform op, int op_ordinal, std::vector<ExState>& states,
                    const PipelineSettings& settings, std::uint64_t seed,
                    const Vocabulary& vocab, const ParaphraseTable* table) {
  for (std::size_t i = 0; i < states.size(); ++i) {
    auto& s = states[i];
    switch (op) {
      case Transform::kIdentity:
        s.provenance.emplace_back("identity");
        break;
      case Transform::kBack: {
        if (!table) throw std::invalid_argument("back transform requires a paraphrase table");
        LabeledExample ex{s.tokens, s.label};
        AugmentedPair pair = back_translate(ex, *table, vocab);
        s.tokens = *pair.augmented_tokens;
        s.provenance.emplace_back("back");
        break;
      }
      case Transform::kReplace: {
        Rng rng = make_rng(derive_seed(seed, op_stream(op_ordinal, static_cast<int>(i))));
        LabeledExample ex{s.tokens, s.label};
        AugmentedPair pair = word_replace(ex, vocab, settings.replace_rate, rng);
        s.tokens = *pair.augmented_tokens;
        s.provenance.emplace_back("replace");
        break;
      }
      default:
        throw std::logic_error("not a token-level transform");
    }
  }
}

void apply_mixup_op(std::vector<ExState>& states, double alpha, int op_ordinal,
                    std::uint64_t seed, const char* tag) {
  const int B = static_cast<int>(states.size());
  std::vector<ExState> base = states;  // snapshot; partners come from the pre-op batch
  for (int i = 0; i < B; ++i) {
    const int j = (i + 1) % B;
    Rng rng = make_rng(derive_seed(seed, op_stream(op_ordinal, i)));
    const double a = beta_draw(alpha, rng);
    auto& s = states[static_cast<std::size_t>(i)];
    const auto& si = base[static_cast<std::size_t>(i)];
    const auto& sj = base[static_cast<std::size_t>(j)];
    s.values = a * si.values + (1.0 - a) * sj.values;
    s.mask = si.mask.cwiseMax(sj.mask);
    s.offset = a * si.offset + (1.0 - a) * sj.offset;
    s.label = a * si.label + (1.0 - a) * sj.label;
    s.sources.clear();
    for (const auto& src : si.sources) {
      EmbedSource scaled = src;
      scaled.weight *= a;
      s.sources.push_back(std::move(scaled));
    }
    for (const auto& src : sj.sources) {
      EmbedSource scaled = src;
      scaled.weight *= (1.0 - a);
      s.sources.push_back(std::move(scaled));
    }
    s.used_mixup = true;
    s.provenance.emplace_back(tag);
  }
}

void apply_adv_op(std::vector<ExState>& states, const PipelineSettings& settings,
                  const ModelHooks& hooks) {
  if (!hooks.loss_input_grad)
    throw std::invalid_argument("adv transform requires a loss-gradient hook");
  const int B = static_cast<int>(states.size());
  const int L = static_cast<int>(states[0].mask.size());
  std::vector<Eigen::MatrixXd> base(static_cast<std::size_t>(B));
  for (int b = 0; b < B; ++b) base[static_cast<std::size_t>(b)] = states[static_cast<std::size_t>(b)].values;

  for (int step = 0; step < settings.adv_steps; ++step) {
    encoder::EmbeddingBatch batch = batch_of(states);
    Eigen::MatrixXd grad = hooks.loss_input_grad(batch, labels_of(states));
    for (int b = 0; b < B; ++b) {
      auto& s = states[static_cast<std::size_t>(b)];
      const Eigen::MatrixXd g = grad.middleRows(static_cast<Eigen::Index>(b) * L, L);
      s.values = adversarial_perturb(s.values, s.mask, g, settings.epsilon);
      // keep the accumulated perturbation on the epsilon ball
      Eigen::MatrixXd delta = s.values - base[static_cast<std::size_t>(b)];
      const double n = delta.norm();
      if (n > settings.epsilon) {
        delta *= settings.epsilon / n;
        s.values = base[static_cast<std::size_t>(b)] + delta;
      }
    }
  }
  for (int b = 0; b < B; ++b) {
    auto& s = states[static_cast<std::size_t>(b)];
    s.offset += s.values - base[static_cast<std::size_t>(b)];
    s.provenance.emplace_back("adv");
  }
}

void apply_cutoff_op(std::vector<ExState>& states, double ratio, int op_ordinal,
                     std::uint64_t seed) {
  for (std::size_t i = 0; i < states.size(); ++i) {
    auto& s = states[i];
    Rng rng = make_rng(derive_seed(seed, op_stream(op_ordinal, static_cast<int>(i))));
    const int len = static_cast<int>(std::lround(s.mask.sum()));
    auto [start, width] = cutoff_window(len, ratio, rng);
    s.provenance.emplace_back("cutoff");
    if (width == 0) continue;
    apply_cutoff_span(s.values, s.mask, start, width);
    s.offset.middleRows(start, width).setZero();
    for (auto& src : s.sources) src.keep.segment(start, width).setZero();
  }
}

std::vector<ExState> run_ops(const std::vector<Transform>& ops,
                             const std::vector<LabeledExample>& batch, const ModelHooks& hooks,
                             const PipelineSettings& settings, std::uint64_t seed,
                             const Vocabulary& vocab, const ParaphraseTable* table,
                             bool force_embed) {
  std::vector<ExState> states(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    states[i].tokens = batch[i].tokens;
    states[i].label = batch[i].label;
  }

  bool embedded = false;
  for (std::size_t k = 0; k < ops.size(); ++k) {
    const Transform op = ops[k];
    const int ordinal = static_cast<int>(k);
    if (is_token_level(op)) {
      if (embedded && op != Transform::kIdentity)
        throw std::invalid_argument("token-level transform after embedding-level transform");
      apply_token_op(op, ordinal, states, settings, seed, vocab, table);
      continue;
    }
    if (!embedded) {
      embed_states(states, hooks);
      embedded = true;
    }
    switch (op) {
      case Transform::kCutoff:
        apply_cutoff_op(states, settings.cutoff_ratio, ordinal, seed);
        break;
      case Transform::kMixup:
        apply_mixup_op(states, settings.mixup_alpha, ordinal, seed, "mixup");
        break;
      case Transform::kAdv:
        apply_adv_op(states, settings, hooks);
        break;
      default:
        throw std::logic_error("unhandled transform");
    }
  }
  if (!embedded && force_embed) embed_states(states, hooks);
  return states;
}

AugPlan plan_from_states(std::vector<ExState>&& states, bool embedded) {
  AugPlan plan;
  plan.embedded = embedded;
  plan.ex.reserve(states.size());
  for (auto& s : states) {
    if (embedded) plan.max_len = std::max(plan.max_len, static_cast<int>(s.mask.size()));
    ExampleAug e;
    e.tokens = std::move(s.tokens);
    e.label = std::move(s.label);
    e.provenance = std::move(s.provenance);
    e.used_mixup = s.used_mixup;
    if (embedded) {
      e.sources = std::move(s.sources);
      e.values = std::move(s.values);
      e.mask = std::move(s.mask);
      e.offset = std::move(s.offset);
    }
    plan.ex.push_back(std::move(e));
  }
  return plan;
}

}  // namespace

AugPlan run_pipeline(const StrategySpec& spec, const std::vector<LabeledExample>& batch,
                     const ModelHooks& hooks, std::uint64_t seed, const Vocabulary& vocab,
                     const ParaphraseTable* table, bool force_embed) {
  spec.validate();
  if (batch.empty()) return {};

  if (spec.kind == StrategyKind::kMixCombine) {
    // each operand produces an embedding-level view of the same example,
    // then the two views are interpolated pairwise
    auto left = run_ops({spec.operands[0]}, batch, hooks, spec.settings,
                        derive_seed(seed, 0xA1), vocab, table, /*force_embed=*/true);
    auto right = run_ops({spec.operands[1]}, batch, hooks, spec.settings,
                         derive_seed(seed, 0xA2), vocab, table, /*force_embed=*/true);
    const int L = std::max(static_cast<int>(left[0].mask.size()),
                           static_cast<int>(right[0].mask.size()));
    auto widen = [L](ExState& s) {
      const int cur = static_cast<int>(s.mask.size());
      if (cur == L) return;
      const auto d = s.values.cols();
      Eigen::MatrixXd values = Eigen::MatrixXd::Zero(L, d);
      values.topRows(cur) = s.values;
      s.values = std::move(values);
      Eigen::MatrixXd offset = Eigen::MatrixXd::Zero(L, d);
      offset.topRows(cur) = s.offset;
      s.offset = std::move(offset);
      Eigen::VectorXd mask = Eigen::VectorXd::Zero(L);
      mask.head(cur) = s.mask;
      s.mask = std::move(mask);
      for (auto& src : s.sources) {
        Eigen::VectorXd keep = Eigen::VectorXd::Zero(L);
        keep.head(cur) = src.keep;
        src.keep = std::move(keep);
      }
    };
    const std::string tag = std::string("mix(") + transform_name(spec.operands[0]) + "," +
                            transform_name(spec.operands[1]) + ")";
    for (std::size_t i = 0; i < left.size(); ++i) {
      auto& a = left[i];
      auto& b = right[i];
      widen(a);
      widen(b);
      Rng rng = make_rng(derive_seed(seed, op_stream(0x40, static_cast<int>(i))));
      const double coeff = beta_draw(spec.settings.mixup_alpha, rng);
      a.values = coeff * a.values + (1.0 - coeff) * b.values;
      a.offset = coeff * a.offset + (1.0 - coeff) * b.offset;
      a.mask = a.mask.cwiseMax(b.mask);
      a.label = coeff * a.label + (1.0 - coeff) * b.label;
      for (auto& src : a.sources) src.weight *= coeff;
      for (auto& src : b.sources) {
        src.weight *= (1.0 - coeff);
        a.sources.push_back(std::move(src));
      }
      a.used_mixup = true;
      a.provenance = {tag};
    }
    return plan_from_states(std::move(left), /*embedded=*/true);
  }

  std::vector<Transform> ops = spec.operands;
  if (spec.kind == StrategyKind::kRandom) {
    Rng rng = make_rng(derive_seed(seed, kBatchStream));
    std::uniform_int_distribution<std::size_t> pick(0, spec.operands.size() - 1);
    ops = {spec.operands[pick(rng)]};
  }

  const bool wants_embedding =
      force_embed || std::any_of(ops.begin(), ops.end(), [](Transform t) { return !is_token_level(t); });
  auto states = run_ops(ops, batch, hooks, spec.settings, seed, vocab, table, force_embed);
  return plan_from_states(std::move(states), wants_embedding);
}

encoder::EmbeddingBatch assemble_batch(const encoder::ModelParams& params, const AugPlan& plan) {
  if (!plan.embedded) throw std::invalid_argument("plan has no embedding-level state");
  const int B = static_cast<int>(plan.ex.size());
  const int L = plan.max_len;
  const int d = params.d_emb();

  encoder::EmbeddingBatch batch;
  batch.batch = B;
  batch.max_len = L;
  batch.dim = d;
  batch.values = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(B) * L, d);
  batch.mask.resize(B, L);
  for (int b = 0; b < B; ++b) {
    const auto& e = plan.ex[static_cast<std::size_t>(b)];
    batch.mask.row(b) = e.mask.transpose();
    auto block = batch.values.middleRows(static_cast<Eigen::Index>(b) * L, L);
    if (e.offset.size() > 0) block = e.offset;
    for (const auto& src : e.sources) {
      const int len = std::min(src.tokens.length(), L);
      for (int t = 0; t < len; ++t) {
        const double k = src.keep(t);
        if (k == 0.0) continue;
        block.row(t) += src.weight * k * params.embed.row(src.tokens.ids[t]);
      }
    }
  }
  return batch;
}

ModelHooks eval_hooks(const encoder::ModelParams& params) {
  ModelHooks hooks;
  hooks.embed = [&params](const std::vector<TokenSequence>& toks, int len) {
    return encoder::embed(params, toks, len);
  };
  hooks.loss_input_grad = [&params](const encoder::EmbeddingBatch& batch,
                                    const Eigen::MatrixXd& labels) {
    auto fwd = encoder::forward(params, batch, 0.0, encoder::Mode::kEval, nullptr);
    const Eigen::MatrixXd probs = objectives::softmax_rows(fwd.logits);
    Eigen::MatrixXd d_logits(probs.rows(), probs.cols());
    for (Eigen::Index b = 0; b < probs.rows(); ++b) {
      const Eigen::VectorXd p = probs.row(b).transpose();
      const Eigen::VectorXd y = labels.row(b).transpose();
      d_logits.row(b) =
          objectives::softmax_vjp(p, objectives::cross_entropy_grad_pred(p, y)).transpose();
    }
    encoder::UpstreamGrad up;
    up.d_logits = std::move(d_logits);
    return encoder::backward(params, fwd.cache, up).input_grad;
  };
  return hooks;
}

std::vector<AugmentedPair> apply_strategy(const StrategySpec& spec,
                                          const std::vector<LabeledExample>& batch,
                                          const ModelContext& ctx, std::uint64_t seed) {
  if (!ctx.params || !ctx.vocab) throw std::invalid_argument("model context incomplete");
  AugPlan plan = run_pipeline(spec, batch, eval_hooks(*ctx.params), seed, *ctx.vocab, ctx.table);

  std::vector<AugmentedPair> out;
  out.reserve(plan.ex.size());
  for (std::size_t i = 0; i < plan.ex.size(); ++i) {
    auto& e = plan.ex[i];
    AugmentedPair pair;
    pair.original_index = static_cast<int>(i);
    pair.original_text = batch[i].tokens.source_text;
    pair.label = e.label;
    pair.provenance = e.provenance;
    if (plan.embedded) {
      AugmentedPair::EmbeddingSlice slice;
      slice.values = std::move(e.values);
      slice.mask = std::move(e.mask);
      pair.augmented_embeddings = std::move(slice);
    } else {
      pair.augmented_tokens = std::move(e.tokens);
    }
    out.push_back(std::move(pair));
  }
  return out;
}

}  // namespace coda::augment
