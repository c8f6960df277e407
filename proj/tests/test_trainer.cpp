#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "coda/trainer.hpp"
#include "support/checks.hpp"

using namespace coda;
using corpus::LabeledExample;
using trainer::TrainConfig;

namespace {

struct Fixture {
  corpus::Vocabulary vocab;
  corpus::ParaphraseTable table;
  corpus::LabeledDataset data;
  TrainConfig config;

  Fixture() {
    std::vector<std::string> texts;
    std::vector<int> classes;
    for (int i = 0; i < 40; ++i) {
      const bool pos = i % 2;
      texts.push_back(std::string(pos ? "bright warm kind" : "gray cold harsh") + " item " +
                      std::to_string(i % 7));
      classes.push_back(pos);
    }
    table = corpus::ParaphraseTable::from_entries(
        {{"bright warm kind item 0", "sunny mild gentle item 0"},
         {"gray cold harsh item 0", "dim chilly stern item 0"}});
    std::vector<std::string> vocab_texts = texts;
    for (auto& t : table.targets()) vocab_texts.push_back(t);
    vocab = corpus::build_vocab(vocab_texts, 1, 1000);
    data.num_classes = 2;
    for (std::size_t i = 0; i < texts.size(); ++i) {
      LabeledExample ex;
      ex.tokens = corpus::tokenize(texts[i], vocab);
      ex.label = Eigen::VectorXd::Zero(2);
      ex.label(classes[i]) = 1.0;
      data.examples.push_back(std::move(ex));
    }
    config.d_emb = 8;
    config.d_hid = 12;
    config.d_proj = 6;
    config.batch_size = 8;
    config.epochs = 2;
    config.eval_every = 0;
    config.bank_capacity = 64;
    config.seed = 5;
  }

  std::vector<LabeledExample> batch(int n) const {
    return {data.examples.begin(), data.examples.begin() + n};
  }
};

}  // namespace

TEST_CASE("config validation: weight windows and the force override") {
  TrainConfig cfg;
  cfg.lambda_weight = 0.5;
  CHECK_THROWS_WITH_AS(cfg.validate(false),
                       doctest::Contains("lambda_weight outside the validated window"),
                       std::invalid_argument);
  CHECK_NOTHROW(cfg.validate(true));
  cfg.lambda_weight = -0.1;
  CHECK_THROWS(cfg.validate(true));  // negativity is never allowed

  TrainConfig beta;
  beta.beta = 3.5;
  CHECK_THROWS(beta.validate(false));
  beta.beta = 3.0;
  CHECK_NOTHROW(beta.validate(false));
}

TEST_CASE("adam_update: hand-checked first step, zero gradient, decay") {
  auto params = encoder::init_params(5, 1, 1, 1, 1, 1);
  params.enc_b1(0) = 0.5;
  auto grads = encoder::zeros_like(params);
  auto st = trainer::init_adam(params);

  SUBCASE("zero gradient and zero decay leave parameters unchanged") {
    auto before = params;
    trainer::adam_update(params, grads, st, 0.001, 0.9, 0.999, 1e-8, 0.0);
    bool same = true;
    encoder::for_each_tensor2(params, before,
                              [&](const auto& a, const auto& b) { same &= a == b; });
    CHECK(same);
  }

  SUBCASE("first step with unit gradient") {
    grads.enc_b1(0) = 1.0;
    const double before = params.enc_b1(0);
    trainer::adam_update(params, grads, st, 0.001, 0.9, 0.999, 1e-8, 0.0);
    // m_hat = 1, v_hat = 1: step is lr / sqrt(1 + eps)
    const double expected = before - 0.001 / std::sqrt(1.0 + 1e-8);
    CHECK(params.enc_b1(0) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(params.enc_b1(0) == doctest::Approx(before - 0.000999999995).epsilon(1e-9));
  }

  SUBCASE("decoupled decay shrinks weights with zero gradient") {
    const double before = params.enc_b1(0);
    trainer::adam_update(params, grads, st, 0.01, 0.9, 0.999, 1e-8, 0.1);
    CHECK(params.enc_b1(0) == doctest::Approx(before * (1.0 - 0.01 * 0.1)).epsilon(1e-12));
  }

  SUBCASE("PAD embedding row never moves") {
    grads.embed.setOnes();
    trainer::adam_update(params, grads, st, 0.1, 0.9, 0.999, 1e-8, 0.0);
    CHECK(params.embed.row(corpus::Vocabulary::kPad).norm() == 0.0);
    CHECK(params.embed.row(1).norm() > 0.0);  // other rows did move
  }
}

TEST_CASE("lr_scale: warmup then decay, always positive") {
  const long total = 100;
  CHECK(trainer::lr_scale(1, total, 0.06) == doctest::Approx(1.0 / 6.0));
  CHECK(trainer::lr_scale(6, total, 0.06) == doctest::Approx(1.0));
  CHECK(trainer::lr_scale(7, total, 0.06) < 1.0);
  for (long s = 1; s <= total; ++s) {
    CHECK(trainer::lr_scale(s, total, 0.06) > 0.0);
    CHECK(trainer::lr_scale(s, total, 0.06) <= 1.0);
  }
  CHECK(trainer::lr_scale(total, total, 0.06) ==
        doctest::Approx(1.0 / (total + 1 - 6)));
}

TEST_CASE("train_step: degenerate config reduces to plain cross-entropy") {
  Fixture f;
  TrainConfig cfg = f.config;
  cfg.alpha = cfg.beta = cfg.lambda_weight = 0.0;
  cfg.dropout_rate = 0.0;  // makes the step's loss comparable to an eval pass

  auto params = encoder::init_params(f.vocab.size(), cfg.d_emb, cfg.d_hid, cfg.d_proj, 2,
                                     cfg.seed);
  auto state = trainer::init_trainer(params, cfg, f.data.size());
  const auto batch = f.batch(8);

  // independent value: mean cross-entropy at the pre-step parameters
  double want = 0.0;
  {
    std::vector<corpus::TokenSequence> toks;
    for (const auto& ex : batch) toks.push_back(ex.tokens);
    auto fwd = encoder::forward(params, encoder::embed(params, toks), 0.0,
                                encoder::Mode::kEval, nullptr);
    auto probs = objectives::softmax_rows(fwd.logits);
    for (std::size_t b = 0; b < batch.size(); ++b)
      want += objectives::cross_entropy(probs.row(static_cast<Eigen::Index>(b)).transpose(),
                                        batch[b].label);
    want /= static_cast<double>(batch.size());
  }

  const auto breakdown = trainer::train_step(state, batch, cfg, f.vocab, nullptr, 1e-3);
  CHECK(breakdown.total == doctest::Approx(breakdown.ce).epsilon(1e-12));
  CHECK(breakdown.ce == doctest::Approx(want).epsilon(1e-12));
  CHECK(breakdown.adv_ce == 0.0);
  CHECK(breakdown.consistency == 0.0);
  CHECK(breakdown.contrast_self == 0.0);
}

TEST_CASE("train_step: bank lifecycle under an active contrastive weight") {
  Fixture f;
  TrainConfig cfg = f.config;
  cfg.alpha = cfg.beta = 0.0;
  cfg.lambda_weight = 0.03;
  cfg.strategy = augment::parse_strategy("cutoff");

  auto params = encoder::init_params(f.vocab.size(), cfg.d_emb, cfg.d_hid, cfg.d_proj, 2,
                                     cfg.seed);
  auto state = trainer::init_trainer(params, cfg, f.data.size());

  const auto first = trainer::train_step(state, f.batch(8), cfg, f.vocab, nullptr, 1e-3);
  CHECK(first.contrast_self == 0.0);  // empty bank at step one
  CHECK(first.contrast_aug == 0.0);
  CHECK(state.bank.count() == 8);

  const auto second = trainer::train_step(state, f.batch(8), cfg, f.vocab, nullptr, 1e-3);
  CHECK(second.contrast_self > 0.0);
  CHECK(second.contrast_aug > 0.0);
  CHECK(state.bank.count() == 16);
}

TEST_CASE("train_step: contrast warmup gates the weight") {
  Fixture f;
  TrainConfig cfg = f.config;
  cfg.alpha = cfg.beta = 0.0;
  cfg.lambda_weight = 0.03;
  cfg.contrast_warmup_steps = 2;
  cfg.strategy = augment::parse_strategy("cutoff");

  auto params = encoder::init_params(f.vocab.size(), cfg.d_emb, cfg.d_hid, cfg.d_proj, 2,
                                     cfg.seed);
  auto state = trainer::init_trainer(params, cfg, f.data.size());
  auto b1 = trainer::train_step(state, f.batch(8), cfg, f.vocab, nullptr, 1e-3);
  auto b2 = trainer::train_step(state, f.batch(8), cfg, f.vocab, nullptr, 1e-3);
  CHECK(b1.lambda == 0.0);
  CHECK(b2.lambda == 0.0);
  CHECK(state.bank.count() == 16);  // keys still accumulate during warmup
  auto b3 = trainer::train_step(state, f.batch(8), cfg, f.vocab, nullptr, 1e-3);
  CHECK(b3.lambda == doctest::Approx(0.03));
  CHECK(b3.contrast_self > 0.0);
}

TEST_CASE("train_step: dropout masks are shared across all forwards") {
  Fixture f;
  TrainConfig cfg = f.config;
  cfg.strategy = augment::parse_strategy("stack(back,adv)");
  cfg.strategy.settings.adv_steps = 2;
  cfg.dropout_rate = 0.3;

  auto params = encoder::init_params(f.vocab.size(), cfg.d_emb, cfg.d_hid, cfg.d_proj, 2,
                                     cfg.seed);
  auto state = trainer::init_trainer(params, cfg, f.data.size());
  trainer::StepTrace trace;
  trainer::train_step(state, f.batch(8), cfg, f.vocab, &f.table, 1e-3, &trace);

  // mask-recording forward + 2 adversarial forwards + original + augmented
  REQUIRE(trace.drop1.size() == 5);
  for (std::size_t i = 1; i < trace.drop1.size(); ++i) {
    CHECK(trace.drop1[i] == trace.drop1[0]);
    CHECK(trace.drop2[i] == trace.drop2[0]);
  }
  CHECK(trace.drop1[0].size() > 0);
}

TEST_CASE("train_step: keys are optimizer constants") {
  Fixture f;
  TrainConfig cfg = f.config;
  cfg.lambda_weight = 0.03;
  cfg.strategy = augment::parse_strategy("cutoff");

  auto params = encoder::init_params(f.vocab.size(), cfg.d_emb, cfg.d_hid, cfg.d_proj, 2,
                                     cfg.seed);
  auto state = trainer::init_trainer(params, cfg, f.data.size());
  trainer::train_step(state, f.batch(8), cfg, f.vocab, nullptr, 1e-3);  // fills the bank

  const auto bank_before = state.bank.snapshot();
  const auto key_params_before = state.key_state.key_params;
  trainer::train_step(state, f.batch(8), cfg, f.vocab, nullptr, 1e-3);

  // the bank rows written earlier are bit-identical after the second step
  const auto bank_after = state.bank.snapshot();
  CHECK(bank_after.topRows(bank_before.rows()) == bank_before);

  // the shadow parameters moved only by the momentum rule
  encoder::ModelParams expected = key_params_before;
  contrast::MomentumState mirror{std::move(expected), cfg.gamma};
  momentum_update(mirror, state.params);
  bool same = true;
  encoder::for_each_tensor2(mirror.key_params, state.key_state.key_params,
                            [&](const auto& a, const auto& b) { same &= a == b; });
  CHECK(same);
}

TEST_CASE("evaluate_objective: classifier-head gradients come only from ce") {
  Fixture f;
  auto params = encoder::init_params(f.vocab.size(), 8, 12, 6, 2, 3);
  const auto batch = f.batch(6);

  trainer::StepPlan plan;
  for (const auto& ex : batch) plan.orig_tokens.push_back(ex.tokens);
  plan.orig_labels.resize(6, 2);
  for (int b = 0; b < 6; ++b) plan.orig_labels.row(b) = batch[static_cast<std::size_t>(b)].label.transpose();
  plan.mode = encoder::Mode::kEval;
  plan.dropout_rate = 0.0;

  // pure cross-entropy reference
  const auto ce_only = trainer::evaluate_objective(params, plan);

  // contrast-only variant on an identity augmentation
  trainer::StepPlan full = plan;
  full.aug = augment::run_pipeline(augment::parse_strategy("identity"), batch,
                                   augment::eval_hooks(params), 7, f.vocab, nullptr, true);
  full.aug_active = true;
  full.lambda = 0.03;
  std::mt19937_64 rng(8);
  full.keys.resize(6, 6);
  for (int b = 0; b < 6; ++b) full.keys.row(b) = testsupport::random_unit(6, rng).transpose();
  full.key_flags.assign(6, 0);
  full.bank_snapshot.resize(3, 6);
  for (int b = 0; b < 3; ++b)
    full.bank_snapshot.row(b) = testsupport::random_unit(6, rng).transpose();

  const auto with_contrast = trainer::evaluate_objective(params, full);
  CHECK(with_contrast.contrast_included == 6);
  CHECK(with_contrast.breakdown.contrast_self > 0.0);
  CHECK(with_contrast.grads.tensors.cls_w == ce_only.grads.tensors.cls_w);
  CHECK(with_contrast.grads.tensors.cls_b == ce_only.grads.tensors.cls_b);
  CHECK(with_contrast.grads.tensors.proj_w.norm() > 0.0);
  CHECK(ce_only.grads.tensors.proj_w.norm() == 0.0);
}

TEST_CASE("train: deterministic from the config seed") {
  Fixture f;
  TrainConfig cfg = f.config;
  cfg.strategy = augment::parse_strategy("stack(back,adv)");
  cfg.epochs = 2;

  auto dev = f.data;
  const auto a = trainer::train(f.data, dev, cfg, f.vocab, &f.table);
  const auto b = trainer::train(f.data, dev, cfg, f.vocab, &f.table);
  bool same = true;
  encoder::for_each_tensor2(a.params, b.params,
                            [&](const auto& x, const auto& y) { same &= x == y; });
  CHECK(same);
  CHECK(a.final_dev_accuracy == b.final_dev_accuracy);
  CHECK(a.final_loss.total == b.final_loss.total);
}

TEST_CASE("train: vat and kl switches keep the breakdown invariant") {
  Fixture f;
  TrainConfig cfg = f.config;
  cfg.adv_term = "vat";
  cfg.consistency_div = "kl";
  cfg.epochs = 1;
  const auto r = trainer::train(f.data, f.data, cfg, f.vocab, &f.table);
  const auto& b = r.final_loss;
  CHECK(std::abs(b.total - (b.ce + b.alpha * b.adv_ce + b.beta * b.consistency +
                            b.lambda * (b.contrast_self + b.contrast_aug))) <= 1e-9);
}

TEST_CASE("loss-decrease smoke: plain cross-entropy halves on a separable toy") {
  // 100 examples, two classes, fully separable token patterns
  std::vector<std::string> texts;
  std::vector<int> classes;
  for (int i = 0; i < 100; ++i) {
    const bool pos = i % 2;
    texts.push_back(pos ? "alpha beta gamma" : "delta epsilon zeta");
    classes.push_back(pos);
  }
  auto vocab = corpus::build_vocab(texts, 1, 100);
  corpus::LabeledDataset data;
  data.num_classes = 2;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    LabeledExample ex;
    ex.tokens = corpus::tokenize(texts[i], vocab);
    ex.label = Eigen::VectorXd::Zero(2);
    ex.label(classes[i]) = 1.0;
    data.examples.push_back(std::move(ex));
  }

  TrainConfig cfg;
  cfg.alpha = cfg.beta = cfg.lambda_weight = 0.0;
  cfg.d_emb = 8;
  cfg.d_hid = 12;
  cfg.d_proj = 4;
  cfg.batch_size = 16;
  cfg.seed = 9;

  auto params = encoder::init_params(vocab.size(), cfg.d_emb, cfg.d_hid, cfg.d_proj, 2,
                                     cfg.seed);
  auto state = trainer::init_trainer(params, cfg, data.size());
  const double before = trainer::evaluate(state.params, data, cfg).loss.ce;
  for (int step = 0; step < 200; ++step) {
    const int start = (step * cfg.batch_size) % data.size();
    std::vector<LabeledExample> batch;
    for (int i = 0; i < cfg.batch_size; ++i)
      batch.push_back(data.examples[static_cast<std::size_t>((start + i) % data.size())]);
    trainer::train_step(state, batch, cfg, vocab, nullptr, 1e-3);
  }
  const double after = trainer::evaluate(state.params, data, cfg).loss.ce;
  CHECK(after <= 0.5 * before);
}

TEST_CASE("evaluate: perfect predictor, constant predictor, determinism") {
  // hand-built model: token 3 maps to +1, token 4 to -1, logits (h, -h)
  auto params = encoder::init_params(5, 1, 1, 1, 1, 1);
  encoder::for_each_tensor(params, [](auto& t) { t.setZero(); });
  params.cls_w.resize(1, 2);
  params.cls_b = Eigen::VectorXd::Zero(2);
  params.embed(3, 0) = 1.0;
  params.embed(4, 0) = -1.0;
  params.enc_w1(0, 0) = 1.0;
  params.enc_w2(0, 0) = 1.0;
  params.cls_w(0, 0) = 1.0;
  params.cls_w(0, 1) = -1.0;

  corpus::LabeledDataset data;
  data.num_classes = 2;
  for (int i = 0; i < 10; ++i) {
    LabeledExample ex;
    ex.tokens.ids = {i % 2 ? 4 : 3};
    ex.label = Eigen::VectorXd::Zero(2);
    ex.label(i % 2) = 1.0;
    data.examples.push_back(std::move(ex));
  }

  TrainConfig cfg;
  cfg.batch_size = 4;
  const auto perfect = trainer::evaluate(params, data, cfg);
  CHECK(perfect.accuracy == 1.0);

  // constant predictor: bias-only logits pick class 0 every time
  encoder::for_each_tensor(params, [](auto& t) { t.setZero(); });
  params.cls_b(0) = 1.0;
  const auto constant = trainer::evaluate(params, data, cfg);
  CHECK(constant.accuracy == 0.5);

  const auto again = trainer::evaluate(params, data, cfg);
  CHECK(again.accuracy == constant.accuracy);
  CHECK(again.loss.ce == constant.loss.ce);

  corpus::LabeledDataset empty;
  empty.num_classes = 2;
  const auto none = trainer::evaluate(params, empty, cfg);
  CHECK(none.accuracy == 0.0);
  CHECK(none.empty_eval);
}

TEST_CASE("low_resource_sweep: cartesian rows, per-cell errors, reproducibility") {
  Fixture f;
  TrainConfig cfg = f.config;
  cfg.alpha = cfg.beta = cfg.lambda_weight = 0.0;
  cfg.epochs = 1;

  const auto cells = trainer::low_resource_sweep(f.data, f.data, nullptr, cfg, {0.5, 1.0},
                                                 {1, 2}, {"ce", "nope"});
  CHECK(cells.size() == 8);  // fractions x seeds x methods
  int failures = 0;
  for (const auto& cell : cells) {
    if (cell.method == "nope") {
      CHECK_FALSE(cell.ok);
      CHECK(!cell.error.empty());
      ++failures;
    } else {
      CHECK(cell.ok);
    }
  }
  CHECK(failures == 4);

  const auto again = trainer::low_resource_sweep(f.data, f.data, nullptr, cfg, {0.5}, {1},
                                                 {"ce"});
  const auto once = trainer::low_resource_sweep(f.data, f.data, nullptr, cfg, {0.5}, {1},
                                                {"ce"});
  CHECK(again[0].dev_accuracy == once[0].dev_accuracy);
}

TEST_CASE("apply_method presets") {
  TrainConfig base;
  base.alpha = 1.0;
  base.beta = 1.0;
  base.lambda_weight = 0.03;
  const auto ce = trainer::apply_method(base, "ce");
  CHECK(ce.alpha == 0.0);
  CHECK(ce.beta == 0.0);
  CHECK(ce.lambda_weight == 0.0);
  const auto contrast = trainer::apply_method(base, "contrast");
  CHECK(contrast.alpha == 0.0);
  CHECK(contrast.lambda_weight == 0.03);
  const auto consistency = trainer::apply_method(base, "consistency");
  CHECK(consistency.alpha == 1.0);
  CHECK(consistency.lambda_weight == 0.0);
  CHECK_THROWS(trainer::apply_method(base, "bogus"));
}
