#include "coda/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>

#include "coda/rng.hpp"

namespace coda::trainer {

using corpus::LabeledDataset;
using corpus::LabeledExample;
using corpus::ParaphraseTable;
using corpus::TokenSequence;
using corpus::Vocabulary;
using encoder::EmbeddingBatch;
using encoder::ModelParams;
using objectives::LossBreakdown;

void TrainConfig::validate(bool force_weights) const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(what);
  };
  require(alpha >= 0.0 && beta >= 0.0 && lambda_weight >= 0.0,
          "objective weights must be non-negative");
  if (!force_weights) {
    if (alpha > 1.0)
      throw std::invalid_argument("alpha outside the validated window [0, 1]; "
                                  "pass --force-weights to override");
    if (beta > 3.0)
      throw std::invalid_argument("beta outside the validated window [0, 3]; "
                                  "pass --force-weights to override");
    if (lambda_weight > 0.03)
      throw std::invalid_argument("lambda_weight outside the validated window [0, 0.03]; "
                                  "pass --force-weights to override");
  }
  require(adv_term == "at" || adv_term == "vat", "adv_term must be 'at' or 'vat'");
  require(consistency_div == "js" || consistency_div == "kl",
          "consistency_div must be 'js' or 'kl'");
  require(tau > 0.0, "tau must be positive");
  require(gamma >= 0.0 && gamma <= 1.0, "gamma must lie in [0, 1]");
  require(bank_capacity >= 1, "bank_capacity must be >= 1");
  require(contrast_warmup_steps >= 0, "contrast_warmup_steps must be >= 0");
  require(d_emb >= 1 && d_hid >= 1 && d_proj >= 1, "model dims must be >= 1");
  require(vocab_min_freq >= 1, "vocab_min_freq must be >= 1");
  require(vocab_max_size >= 3, "vocab_max_size must be >= 3");
  require(dropout_rate >= 0.0 && dropout_rate < 1.0, "dropout_rate must lie in [0, 1)");
  require(lr > 0.0, "lr must be positive");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(epochs >= 1, "epochs must be >= 1");
  require(warmup_ratio >= 0.0 && warmup_ratio <= 1.0, "warmup_ratio must lie in [0, 1]");
  require(weight_decay >= 0.0, "weight_decay must be >= 0");
  require(eval_every >= 0, "eval_every must be >= 0");
  require(subsample_fraction > 0.0 && subsample_fraction <= 1.0,
          "subsample_fraction must lie in (0, 1]");
  strategy.validate();
}

// ---------------------------------------------------------------------------
// optimizer

AdamState init_adam(const ModelParams& params) {
  AdamState st;
  st.m = encoder::zeros_like(params);
  st.v = encoder::zeros_like(params);
  return st;
}

void adam_update(ModelParams& params, const ModelParams& grads, AdamState& state, double lr,
                 double beta1, double beta2, double eps, double weight_decay) {
  state.step += 1;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
  const Eigen::RowVectorXd pad_row = params.embed.row(corpus::Vocabulary::kPad);
  encoder::for_each_tensor4(
      params, grads, state.m, state.v, [&](auto& p, const auto& g, auto& m, auto& v) {
        m = beta1 * m + (1.0 - beta1) * g;
        v = beta2 * v + (1.0 - beta2) * g.cwiseProduct(g);
        p.array() -= lr * ((m.array() / bc1) / ((v.array() / bc2) + eps).sqrt() +
                           weight_decay * p.array());
      });
  params.embed.row(corpus::Vocabulary::kPad) = pad_row;  // PAD row never trains
}

double lr_scale(long step, long total_steps, double warmup_ratio) {
  const long warm = std::max<long>(1, std::lround(warmup_ratio * static_cast<double>(total_steps)));
  if (step <= warm) return static_cast<double>(step) / static_cast<double>(warm);
  return static_cast<double>(total_steps + 1 - step) /
         static_cast<double>(total_steps + 1 - warm);
}

// ---------------------------------------------------------------------------
// objective

ObjectiveEval evaluate_objective(const ModelParams& params, const StepPlan& plan,
                                 StepTrace* trace) {
  const int B = static_cast<int>(plan.orig_tokens.size());
  if (B == 0) throw std::invalid_argument("empty batch");
  const int C = params.num_classes();
  const bool train_mode = plan.mode == encoder::Mode::kTrain;
  if (!plan.aug_active && (plan.alpha > 0.0 || plan.beta > 0.0 || plan.lambda > 0.0))
    throw std::logic_error("nonzero weights require an augmented branch");

  EmbeddingBatch E = encoder::embed(params, plan.orig_tokens);
  auto fwd_x = encoder::forward(params, E, plan.dropout_rate, plan.mode, nullptr,
                                plan.mask_source);
  if (trace && train_mode) trace->record(fwd_x.cache);
  const Eigen::MatrixXd p_x = objectives::softmax_rows(fwd_x.logits);

  std::vector<Eigen::VectorXd> d_px(static_cast<std::size_t>(B), Eigen::VectorXd::Zero(C));
  double ce_sum = 0.0;
  for (int b = 0; b < B; ++b) {
    const Eigen::VectorXd p = p_x.row(b).transpose();
    const Eigen::VectorXd y = plan.orig_labels.row(b).transpose();
    ce_sum += objectives::cross_entropy(p, y);
    d_px[static_cast<std::size_t>(b)] +=
        objectives::cross_entropy_grad_pred(p, y) / static_cast<double>(B);
  }
  const double ce = ce_sum / B;

  double adv = 0.0, cons = 0.0, c_self = 0.0, c_aug = 0.0;
  int included = 0;
  encoder::ForwardResult fwd_xh;
  std::vector<Eigen::VectorXd> d_pxh;
  Eigen::MatrixXd d_q, d_qh;
  bool have_proj = false;

  if (plan.aug_active) {
    const EmbeddingBatch E_hat = augment::assemble_batch(params, plan.aug);
    fwd_xh = encoder::forward(params, E_hat, plan.dropout_rate, plan.mode, nullptr,
                              plan.mask_source);
    if (trace && train_mode) trace->record(fwd_xh.cache);
    const Eigen::MatrixXd p_xh = objectives::softmax_rows(fwd_xh.logits);
    d_pxh.assign(static_cast<std::size_t>(B), Eigen::VectorXd::Zero(C));

    double adv_sum = 0.0, cons_sum = 0.0;
    for (int b = 0; b < B; ++b) {
      const auto bi = static_cast<std::size_t>(b);
      const Eigen::VectorXd p = p_x.row(b).transpose();
      const Eigen::VectorXd ph = p_xh.row(b).transpose();
      const Eigen::VectorXd y = plan.orig_labels.row(b).transpose();
      const Eigen::VectorXd& yh = plan.aug.ex[bi].label;

      Eigen::VectorXd dp, dph;
      if (plan.adv_term_vat) {
        if (plan.consistency_kl) {
          adv_sum += objectives::kl_div(ph, p);
          objectives::kl_grad(ph, p, &dph, &dp);
        } else {
          adv_sum += objectives::js_div(ph, p);
          objectives::js_grad(ph, p, &dph, &dp);
        }
        d_pxh[bi] += plan.alpha / B * dph;
        d_px[bi] += plan.alpha / B * dp;
      } else {
        adv_sum += objectives::cross_entropy(ph, yh);
        d_pxh[bi] += plan.alpha / B * objectives::cross_entropy_grad_pred(ph, yh);
      }

      if (plan.consistency_kl) {
        cons_sum += objectives::kl_div(p, ph);
        objectives::kl_grad(p, ph, &dp, &dph);
      } else {
        cons_sum += objectives::js_div(p, ph);
        objectives::js_grad(p, ph, &dp, &dph);
      }
      if (!plan.js_stop_grad) d_px[bi] += plan.beta / B * dp;
      d_pxh[bi] += plan.beta / B * dph;
    }
    adv = adv_sum / B;
    cons = cons_sum / B;

    if (plan.lambda > 0.0) {
      if (plan.keys.rows() != B || static_cast<int>(plan.key_flags.size()) != B)
        throw std::invalid_argument("key batch does not match the example batch");
      const auto q = encoder::project(params, fwd_x.pooled);
      const auto qh = encoder::project(params, fwd_xh.pooled);
      d_q = Eigen::MatrixXd::Zero(B, params.d_proj());
      d_qh = Eigen::MatrixXd::Zero(B, params.d_proj());
      have_proj = true;

      std::vector<char> take(static_cast<std::size_t>(B), 0);
      for (int b = 0; b < B; ++b) {
        const auto bi = static_cast<std::size_t>(b);
        take[bi] = !plan.aug.ex[bi].used_mixup && !q.zero_flag[bi] && !qh.zero_flag[bi] &&
                   !plan.key_flags[bi];
        included += take[bi];
      }
      if (included > 0) {
        const double scale = plan.lambda / included;
        double self_sum = 0.0, aug_sum = 0.0;
        for (int b = 0; b < B; ++b) {
          if (!take[static_cast<std::size_t>(b)]) continue;
          const Eigen::VectorXd qb = q.units.row(b).transpose();
          const Eigen::VectorXd qhb = qh.units.row(b).transpose();
          const Eigen::VectorXd kb = plan.keys.row(b).transpose();
          auto [self_term, aug_term] =
              objectives::contrastive_objective(qb, qhb, kb, plan.bank_snapshot, plan.tau);
          self_sum += self_term;
          aug_sum += aug_term;
          d_q.row(b) =
              scale * objectives::info_nce_grad_q(qb, kb, plan.bank_snapshot, plan.tau).transpose();
          d_qh.row(b) =
              scale *
              objectives::info_nce_grad_q(qhb, kb, plan.bank_snapshot, plan.tau).transpose();
        }
        c_self = self_sum / included;
        c_aug = aug_sum / included;
      }
    }
  }

  ObjectiveEval ev;
  ev.breakdown = objectives::total_objective(ce, adv, cons, c_self, c_aug, plan.alpha,
                                             plan.beta, plan.lambda);
  ev.contrast_included = included;
  ev.logits_orig = fwd_x.logits;

  encoder::UpstreamGrad up_x;
  up_x.d_logits.resize(B, C);
  for (int b = 0; b < B; ++b)
    up_x.d_logits.row(b) =
        objectives::softmax_vjp(p_x.row(b).transpose(), d_px[static_cast<std::size_t>(b)])
            .transpose();
  if (have_proj) up_x.d_proj = d_q;

  encoder::GradientSet g = encoder::backward(params, fwd_x.cache, up_x);
  for (int b = 0; b < B; ++b)
    encoder::scatter_input_grad(g, plan.orig_tokens[static_cast<std::size_t>(b)], g.input_grad,
                                b, E.max_len);

  if (plan.aug_active) {
    const Eigen::MatrixXd p_xh = objectives::softmax_rows(fwd_xh.logits);
    encoder::UpstreamGrad up_h;
    up_h.d_logits.resize(B, C);
    for (int b = 0; b < B; ++b)
      up_h.d_logits.row(b) =
          objectives::softmax_vjp(p_xh.row(b).transpose(), d_pxh[static_cast<std::size_t>(b)])
              .transpose();
    if (have_proj) up_h.d_proj = d_qh;

    encoder::GradientSet gh = encoder::backward(params, fwd_xh.cache, up_h);
    for (int b = 0; b < B; ++b)
      for (const auto& src : plan.aug.ex[static_cast<std::size_t>(b)].sources)
        encoder::scatter_input_grad(g, src.tokens, gh.input_grad, b, plan.aug.max_len,
                                    src.weight, &src.keep);
    encoder::for_each_tensor2(g.tensors, gh.tensors,
                              [](auto& a, const auto& b) { a += b; });
  }
  ev.grads = std::move(g);
  return ev;
}

// ---------------------------------------------------------------------------
// training

TrainerState init_trainer(const ModelParams& params, const TrainConfig& config,
                          int train_size) {
  TrainerState st;
  st.params = params;
  st.key_state.key_params = params;  // shadow starts as a copy
  st.key_state.gamma = config.gamma;
  const int cap = std::max(1, std::min(config.bank_capacity, std::max(train_size, 1)));
  st.bank = contrast::MemoryBank(cap, params.d_proj());
  st.adam = init_adam(params);
  return st;
}

namespace {

int first_non_finite_row(const Eigen::MatrixXd& logits) {
  for (Eigen::Index b = 0; b < logits.rows(); ++b)
    if (!logits.row(b).allFinite()) return static_cast<int>(b);
  return -1;
}

}  // namespace

LossBreakdown train_step(TrainerState& state, const std::vector<LabeledExample>& batch,
                         const TrainConfig& config, const Vocabulary& vocab,
                         const ParaphraseTable* table, double lr_now, StepTrace* trace) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  const long step_idx = state.step;
  const int B = static_cast<int>(batch.size());
  const int C = state.params.num_classes();

  const double lambda_eff =
      step_idx < config.contrast_warmup_steps ? 0.0 : config.lambda_weight;
  const bool keys_wanted = config.lambda_weight > 0.0;
  const bool aug_active = config.alpha > 0.0 || config.beta > 0.0 || lambda_eff > 0.0;

  StepPlan plan;
  plan.orig_tokens.reserve(batch.size());
  plan.orig_labels.resize(B, C);
  for (int b = 0; b < B; ++b) {
    plan.orig_tokens.push_back(batch[static_cast<std::size_t>(b)].tokens);
    plan.orig_labels.row(b) = batch[static_cast<std::size_t>(b)].label.transpose();
  }
  plan.dropout_rate = config.dropout_rate;
  plan.mode = encoder::Mode::kTrain;

  // the mask-recording forward; every later forward in this step reuses it
  const EmbeddingBatch E = encoder::embed(state.params, plan.orig_tokens);
  Rng drop_rng = make_rng(derive_seed(config.seed, 0xD0000000ULL + static_cast<std::uint64_t>(step_idx)));
  const auto fwd0 = encoder::forward(state.params, E, config.dropout_rate,
                                     encoder::Mode::kTrain, &drop_rng);
  if (trace) trace->record(fwd0.cache);
  plan.mask_source = &fwd0.cache;

  if (aug_active) {
    augment::ModelHooks hooks;
    hooks.embed = [&state](const std::vector<TokenSequence>& toks, int len) {
      return encoder::embed(state.params, toks, len);
    };
    hooks.loss_input_grad = [&state, &config, &fwd0, trace](const EmbeddingBatch& bt,
                                                            const Eigen::MatrixXd& labels) {
      const auto fwd = encoder::forward(state.params, bt, config.dropout_rate,
                                        encoder::Mode::kTrain, nullptr, &fwd0.cache);
      if (trace) trace->record(fwd.cache);
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
      return encoder::backward(state.params, fwd.cache, up).input_grad;
    };
    plan.aug = augment::run_pipeline(
        config.strategy, batch, hooks,
        derive_seed(config.seed, 0xA0000000ULL + static_cast<std::uint64_t>(step_idx)), vocab,
        table, /*force_embed=*/true);
    plan.aug_active = true;
  }

  contrast::KeyBatch keys;
  if (keys_wanted) {
    keys = contrast::compute_keys(state.key_state, plan.orig_tokens);
    if (lambda_eff > 0.0) {
      plan.keys = keys.units;
      plan.key_flags = keys.zero_flag;
      plan.bank_snapshot = state.bank.snapshot();
    }
  }

  plan.alpha = aug_active ? config.alpha : 0.0;
  plan.beta = aug_active ? config.beta : 0.0;
  plan.lambda = lambda_eff;
  plan.tau = config.tau;
  plan.adv_term_vat = config.adv_term == "vat";
  plan.consistency_kl = config.consistency_div == "kl";
  plan.js_stop_grad = config.js_stop_grad;

  ObjectiveEval ev = evaluate_objective(state.params, plan, trace);
  if (!std::isfinite(ev.breakdown.total)) {
    const int bad = first_non_finite_row(ev.logits_orig);
    std::cerr << "non-finite loss at step " << (step_idx + 1) << "; batch index "
              << bad << "; text: "
              << (bad >= 0 ? batch[static_cast<std::size_t>(bad)].tokens.source_text : "?")
              << "\n";
    throw NonFiniteLossError(step_idx + 1, bad);
  }

  adam_update(state.params, ev.grads.tensors, state.adam, lr_now, config.adam_beta1,
              config.adam_beta2, config.adam_eps, config.weight_decay);
  momentum_update(state.key_state, state.params);
  if (keys_wanted) state.bank.push(keys.units, keys.zero_flag);
  state.step += 1;
  return ev.breakdown;
}

MetricsRecord evaluate(const ModelParams& params, const LabeledDataset& dataset,
                       const TrainConfig& config) {
  MetricsRecord rec;
  rec.split = "dev";
  if (dataset.size() == 0) {
    std::cerr << "warning: evaluating on an empty dataset\n";
    rec.empty_eval = true;
    rec.loss = objectives::total_objective(0, 0, 0, 0, 0, config.alpha, config.beta,
                                           config.lambda_weight);
    return rec;
  }
  const int bs = std::max(config.batch_size, 1);
  long correct = 0;
  double ce_sum = 0.0;
  for (int start = 0; start < dataset.size(); start += bs) {
    const int end = std::min(dataset.size(), start + bs);
    std::vector<TokenSequence> toks;
    toks.reserve(static_cast<std::size_t>(end - start));
    for (int i = start; i < end; ++i)
      toks.push_back(dataset.examples[static_cast<std::size_t>(i)].tokens);
    const auto batch = encoder::embed(params, toks);
    const auto fwd = encoder::forward(params, batch, 0.0, encoder::Mode::kEval, nullptr);
    const Eigen::MatrixXd probs = objectives::softmax_rows(fwd.logits);
    for (int i = start; i < end; ++i) {
      const auto& label = dataset.examples[static_cast<std::size_t>(i)].label;
      Eigen::Index pred = 0, truth = 0;
      fwd.logits.row(i - start).maxCoeff(&pred);
      label.maxCoeff(&truth);
      correct += pred == truth;
      ce_sum += objectives::cross_entropy(probs.row(i - start).transpose(), label);
    }
  }
  rec.accuracy = static_cast<double>(correct) / dataset.size();
  rec.loss = objectives::total_objective(ce_sum / dataset.size(), 0, 0, 0, 0, config.alpha,
                                         config.beta, config.lambda_weight);
  return rec;
}

TrainResult train(const LabeledDataset& train_set, const LabeledDataset& dev_set,
                  const TrainConfig& config, const Vocabulary& vocab,
                  const ParaphraseTable* table, const TrainCallbacks& callbacks,
                  const ModelParams* init) {
  if (train_set.size() == 0) throw std::invalid_argument("empty training set");
  if (config.strategy.uses(augment::Transform::kBack) && table == nullptr &&
      (config.alpha > 0.0 || config.beta > 0.0 || config.lambda_weight > 0.0))
    throw std::invalid_argument("strategy uses back-translation but no paraphrase table given");

  ModelParams params =
      init ? *init
           : encoder::init_params(vocab.size(), config.d_emb, config.d_hid, config.d_proj,
                                  train_set.num_classes, config.seed);
  TrainerState state = init_trainer(params, config, train_set.size());

  const int N = train_set.size();
  const int bs = std::max(config.batch_size, 1);
  const long steps_per_epoch = (N + bs - 1) / bs;
  const long total_steps = steps_per_epoch * config.epochs;

  TrainResult result;
  result.total_steps = total_steps;

  std::vector<int> order(static_cast<std::size_t>(N));
  std::iota(order.begin(), order.end(), 0);

  auto run_eval = [&](int epoch) {
    MetricsRecord rec = evaluate(state.params, dev_set, config);
    rec.step = state.step;
    rec.epoch = epoch;
    if (callbacks.sink) callbacks.sink(rec);
    if (rec.accuracy > result.best_dev_accuracy ||
        (result.best_step == 0 && result.best_dev_accuracy == 0.0)) {
      result.best_dev_accuracy = rec.accuracy;
      result.best_step = state.step;
    }
    if (callbacks.checkpoint) callbacks.checkpoint(state.step, state.params);
    return rec;
  };

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    Rng shuffle_rng = make_rng(derive_seed(config.seed, 0xEF000000ULL + static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (long b = 0; b < steps_per_epoch; ++b) {
      const int start = static_cast<int>(b) * bs;
      const int end = std::min(N, start + bs);
      std::vector<LabeledExample> batch;
      batch.reserve(static_cast<std::size_t>(end - start));
      for (int i = start; i < end; ++i)
        batch.push_back(train_set.examples[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])]);

      const double lr_now = config.lr * lr_scale(state.step + 1, total_steps, config.warmup_ratio);
      const LossBreakdown breakdown =
          train_step(state, batch, config, vocab, table, lr_now);
      result.final_loss = breakdown;
      if (callbacks.sink) {
        MetricsRecord rec;
        rec.step = state.step;
        rec.epoch = epoch;
        rec.split = "train";
        rec.loss = breakdown;
        callbacks.sink(rec);
      }
      if (config.eval_every > 0 && state.step % config.eval_every == 0 &&
          state.step < total_steps)
        run_eval(epoch);
    }
  }
  const MetricsRecord final_rec = run_eval(config.epochs);
  result.final_dev_accuracy = final_rec.accuracy;
  result.params = state.params;
  return result;
}

// ---------------------------------------------------------------------------
// sweep

corpus::Vocabulary build_run_vocab(const LabeledDataset& train_raw, const ParaphraseTable* table,
                                   int min_freq, int max_size) {
  std::vector<std::string> texts;
  texts.reserve(static_cast<std::size_t>(train_raw.size()));
  for (const auto& ex : train_raw.examples) texts.push_back(ex.tokens.source_text);
  if (table)
    for (auto& t : table->targets()) texts.push_back(std::move(t));
  return corpus::build_vocab(texts, min_freq, max_size);
}

TrainConfig apply_method(const TrainConfig& base, const std::string& method) {
  TrainConfig cfg = base;
  if (method == "coda") return cfg;
  if (method == "ce") {
    cfg.alpha = cfg.beta = cfg.lambda_weight = 0.0;
    return cfg;
  }
  if (method == "contrast") {
    cfg.alpha = cfg.beta = 0.0;
    return cfg;
  }
  if (method == "consistency") {
    cfg.lambda_weight = 0.0;
    return cfg;
  }
  throw std::invalid_argument("unknown sweep method '" + method + "'");
}

std::vector<SweepCell> low_resource_sweep(
    const LabeledDataset& train_raw, const LabeledDataset& dev_raw, const ParaphraseTable* table,
    const TrainConfig& base, const std::vector<double>& fractions,
    const std::vector<std::uint64_t>& seeds, const std::vector<std::string>& methods,
    const std::function<void(const SweepCell&)>& on_cell) {
  std::vector<SweepCell> cells;
  for (double fraction : fractions) {
    for (std::uint64_t seed : seeds) {
      const LabeledDataset sub = corpus::subsample(train_raw, fraction, seed);
      const Vocabulary vocab =
          build_run_vocab(sub, table, base.vocab_min_freq, base.vocab_max_size);
      const LabeledDataset train_tok = corpus::tokenize_dataset(sub, vocab);
      const LabeledDataset dev_tok = corpus::tokenize_dataset(dev_raw, vocab);
      for (const auto& method : methods) {
        SweepCell cell;
        cell.fraction = fraction;
        cell.seed = seed;
        cell.method = method;
        try {
          TrainConfig cfg = apply_method(base, method);
          cfg.seed = seed;
          cfg.subsample_fraction = fraction;
          const TrainResult r = train(train_tok, dev_tok, cfg, vocab, table);
          cell.dev_accuracy = r.final_dev_accuracy;
          cell.best_dev_accuracy = r.best_dev_accuracy;
          cell.ok = true;
        } catch (const std::exception& e) {
          cell.ok = false;
          cell.error = e.what();
        }
        if (on_cell) on_cell(cell);
        cells.push_back(std::move(cell));
      }
    }
  }
  return cells;
}

}  // namespace coda::trainer
