#include "coda/encoder.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace coda::encoder {

namespace {

void fill_uniform(Eigen::Ref<Eigen::MatrixXd> m, double scale, Rng& rng) {
  std::uniform_real_distribution<double> dist(-scale, scale);
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = dist(rng);
}

}  // namespace

ModelParams init_params(int vocab_size, int d_emb, int d_hid, int d_proj,
                        int num_classes, std::uint64_t seed) {
  if (vocab_size < 1 || d_emb < 1 || d_hid < 1 || d_proj < 1 || num_classes < 1)
    throw std::invalid_argument("all model dimensions must be >= 1");

  Rng rng = make_rng(seed);
  ModelParams p;
  p.embed.resize(vocab_size, d_emb);
  fill_uniform(p.embed, 1.0 / std::sqrt(static_cast<double>(d_emb)), rng);
  p.embed.row(corpus::Vocabulary::kPad).setZero();

  p.enc_w1.resize(d_emb, d_hid);
  fill_uniform(p.enc_w1, 1.0 / std::sqrt(static_cast<double>(d_emb)), rng);
  p.enc_b1 = Eigen::VectorXd::Zero(d_hid);

  p.enc_w2.resize(d_hid, d_hid);
  fill_uniform(p.enc_w2, 1.0 / std::sqrt(static_cast<double>(d_hid)), rng);
  p.enc_b2 = Eigen::VectorXd::Zero(d_hid);

  p.cls_w.resize(d_hid, num_classes);
  fill_uniform(p.cls_w, 1.0 / std::sqrt(static_cast<double>(d_hid)), rng);
  p.cls_b = Eigen::VectorXd::Zero(num_classes);

  p.proj_w.resize(d_hid, d_proj);
  fill_uniform(p.proj_w, 1.0 / std::sqrt(static_cast<double>(d_hid)), rng);
  p.proj_b = Eigen::VectorXd::Zero(d_proj);
  return p;
}

ModelParams zeros_like(const ModelParams& p) {
  ModelParams z = p;
  for_each_tensor(z, [](auto& t) { t.setZero(); });
  return z;
}

EmbeddingBatch embed(const ModelParams& params, const std::vector<TokenSequence>& tokens,
                     int forced_max_len) {
  const int batch = static_cast<int>(tokens.size());
  int max_len = 1;
  for (const auto& t : tokens) max_len = std::max(max_len, t.length());
  if (forced_max_len >= 0) {
    if (forced_max_len < max_len && forced_max_len >= 1)
      throw std::invalid_argument("forced_max_len shorter than longest sequence");
    max_len = std::max(max_len, forced_max_len);
  }

  EmbeddingBatch out;
  out.batch = batch;
  out.max_len = max_len;
  out.dim = params.d_emb();
  out.values = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(batch) * max_len, out.dim);
  out.mask = Eigen::MatrixXd::Zero(batch, max_len);
  for (int b = 0; b < batch; ++b) {
    const auto& seq = tokens[b];
    for (int t = 0; t < seq.length(); ++t) {
      const int id = seq.ids[t];
      if (id < 0 || id >= params.vocab_size())
        throw std::out_of_range("token id " + std::to_string(id) + " outside vocabulary");
      out.values.row(static_cast<Eigen::Index>(b) * max_len + t) = params.embed.row(id);
      out.mask(b, t) = 1.0;
    }
  }
  return out;
}

ForwardResult forward(const ModelParams& params, const EmbeddingBatch& batch,
                      double dropout_rate, Mode mode, Rng* rng,
                      const ForwardCache* reuse_masks) {
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
    throw std::invalid_argument("dropout_rate must lie in [0, 1)");
  if (batch.dim != params.d_emb())
    throw std::invalid_argument("embedding dim does not match model");
  const int B = batch.batch;
  const int L = batch.max_len;
  const int H = params.d_hid();

  ForwardCache cache;
  cache.input = batch;
  cache.mode = mode;
  cache.dropout_rate = dropout_rate;

  cache.pooled_raw.resize(B, params.d_emb());
  cache.denom.resize(B);
  cache.valid.resize(B);
  for (int b = 0; b < B; ++b) {
    const double count = batch.mask.row(b).sum();
    cache.denom(b) = std::max(count, 1.0);
    cache.valid(b) = count > 0.0 ? 1.0 : 0.0;
    cache.pooled_raw.row(b) =
        (batch.mask.row(b) * batch.values.middleRows(static_cast<Eigen::Index>(b) * L, L)) /
        cache.denom(b);
  }

  if (mode == Mode::kTrain) {
    if (reuse_masks) {
      if (reuse_masks->drop1.rows() != B || reuse_masks->drop1.cols() != H)
        throw std::invalid_argument("reuse_masks shape does not match batch");
      cache.drop1 = reuse_masks->drop1;
      cache.drop2 = reuse_masks->drop2;
    } else {
      if (!rng) throw std::invalid_argument("train-mode forward needs an rng or reuse_masks");
      const double keep = 1.0 - dropout_rate;
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      cache.drop1.resize(B, H);
      cache.drop2.resize(B, H);
      for (Eigen::Index r = 0; r < B; ++r)
        for (Eigen::Index c = 0; c < H; ++c)
          cache.drop1(r, c) = unit(*rng) < keep ? 1.0 / keep : 0.0;
      for (Eigen::Index r = 0; r < B; ++r)
        for (Eigen::Index c = 0; c < H; ++c)
          cache.drop2(r, c) = unit(*rng) < keep ? 1.0 / keep : 0.0;
    }
  }

  Eigen::MatrixXd a1 = cache.pooled_raw * params.enc_w1;
  a1.rowwise() += params.enc_b1.transpose();
  cache.h1 = a1.array().tanh();
  cache.h1d = mode == Mode::kTrain ? cache.h1.cwiseProduct(cache.drop1) : cache.h1;

  Eigen::MatrixXd a2 = cache.h1d * params.enc_w2;
  a2.rowwise() += params.enc_b2.transpose();
  cache.h2 = a2.array().tanh();
  Eigen::MatrixXd h2d = mode == Mode::kTrain ? cache.h2.cwiseProduct(cache.drop2) : cache.h2;

  // all-padding rows collapse to the zero representation
  cache.pooled = (h2d.array().colwise() * cache.valid).matrix();

  ForwardResult out;
  out.pooled = cache.pooled;
  out.logits = cache.pooled * params.cls_w;
  out.logits.rowwise() += params.cls_b.transpose();
  out.cache = std::move(cache);
  return out;
}

namespace {
constexpr double kNormFloor = 1e-12;

// degenerate rows: all-padding examples pool to zero and must not emit a
// bias-only direction, and a vanishing pre-normalization vector has no
// well-defined direction either
bool projection_degenerate(double pooled_norm, double u_norm) {
  return pooled_norm < kNormFloor || u_norm < kNormFloor;
}

}  // namespace

Projection project(const ModelParams& params, const Eigen::MatrixXd& pooled) {
  if (pooled.cols() != params.d_hid())
    throw std::invalid_argument("pooled width does not match model");
  Eigen::MatrixXd u = pooled * params.proj_w;
  u.rowwise() += params.proj_b.transpose();

  Projection out;
  out.units.resize(u.rows(), u.cols());
  out.zero_flag.assign(static_cast<std::size_t>(u.rows()), 0);
  for (Eigen::Index b = 0; b < u.rows(); ++b) {
    if (projection_degenerate(pooled.row(b).norm(), u.row(b).norm())) {
      out.units.row(b).setZero();
      out.zero_flag[static_cast<std::size_t>(b)] = 1;
    } else {
      out.units.row(b) = u.row(b) / u.row(b).norm();
    }
  }
  return out;
}

GradientSet zero_gradients(const ModelParams& params, int input_rows) {
  GradientSet g;
  g.tensors = zeros_like(params);
  g.input_grad = Eigen::MatrixXd::Zero(input_rows, params.d_emb());
  return g;
}

GradientSet& GradientSet::operator+=(const GradientSet& other) {
  for_each_tensor2(tensors, other.tensors, [](auto& a, const auto& b) { a += b; });
  if (other.input_grad.size() > 0) {
    if (input_grad.size() == 0)
      input_grad = other.input_grad;
    else
      input_grad += other.input_grad;
  }
  return *this;
}

GradientSet backward(const ModelParams& params, const ForwardCache& cache,
                     const UpstreamGrad& upstream) {
  const int B = cache.input.batch;
  const int L = cache.input.max_len;
  const int H = params.d_hid();
  const bool train = cache.mode == Mode::kTrain;

  GradientSet g = zero_gradients(params, B * std::max(L, 1));

  Eigen::MatrixXd d_pooled = Eigen::MatrixXd::Zero(B, H);

  if (upstream.d_proj.size() > 0) {
    if (upstream.d_proj.rows() != B || upstream.d_proj.cols() != params.d_proj())
      throw std::invalid_argument("d_proj shape mismatch");
    // recompute the projection intermediates; the head is deterministic
    Eigen::MatrixXd u = cache.pooled * params.proj_w;
    u.rowwise() += params.proj_b.transpose();
    Eigen::MatrixXd d_u = Eigen::MatrixXd::Zero(B, params.d_proj());
    for (int b = 0; b < B; ++b) {
      const double n = u.row(b).norm();
      if (projection_degenerate(cache.pooled.row(b).norm(), n))
        continue;  // flagged-zero rows get no gradient
      const Eigen::RowVectorXd q = u.row(b) / n;
      const Eigen::RowVectorXd dq = upstream.d_proj.row(b);
      d_u.row(b) = (dq - (dq.dot(q)) * q) / n;
    }
    g.tensors.proj_w += cache.pooled.transpose() * d_u;
    g.tensors.proj_b += d_u.colwise().sum().transpose();
    d_pooled += d_u * params.proj_w.transpose();
  }

  if (upstream.d_logits.size() > 0) {
    if (upstream.d_logits.rows() != B || upstream.d_logits.cols() != params.num_classes())
      throw std::invalid_argument("d_logits shape mismatch");
    g.tensors.cls_w += cache.pooled.transpose() * upstream.d_logits;
    g.tensors.cls_b += upstream.d_logits.colwise().sum().transpose();
    d_pooled += upstream.d_logits * params.cls_w.transpose();
  }

  if (upstream.d_pooled.size() > 0) {
    if (upstream.d_pooled.rows() != B || upstream.d_pooled.cols() != H)
      throw std::invalid_argument("d_pooled shape mismatch");
    d_pooled += upstream.d_pooled;
  }

  // pooled = valid * dropout2(h2)
  Eigen::MatrixXd d_h2d = (d_pooled.array().colwise() * cache.valid).matrix();
  Eigen::MatrixXd d_h2 = train ? d_h2d.cwiseProduct(cache.drop2) : std::move(d_h2d);
  Eigen::MatrixXd d_a2 =
      d_h2.cwiseProduct((1.0 - cache.h2.array().square()).matrix());

  g.tensors.enc_w2 += cache.h1d.transpose() * d_a2;
  g.tensors.enc_b2 += d_a2.colwise().sum().transpose();

  Eigen::MatrixXd d_h1d = d_a2 * params.enc_w2.transpose();
  Eigen::MatrixXd d_h1 = train ? d_h1d.cwiseProduct(cache.drop1) : std::move(d_h1d);
  Eigen::MatrixXd d_a1 =
      d_h1.cwiseProduct((1.0 - cache.h1.array().square()).matrix());

  g.tensors.enc_w1 += cache.pooled_raw.transpose() * d_a1;
  g.tensors.enc_b1 += d_a1.colwise().sum().transpose();

  Eigen::MatrixXd d_pooled_raw = d_a1 * params.enc_w1.transpose();

  // unpool: each real position receives mask/denom of its example's gradient
  for (int b = 0; b < B; ++b) {
    const auto mask_row = cache.input.mask.row(b);
    for (int t = 0; t < L; ++t) {
      if (mask_row(t) == 0.0) continue;
      g.input_grad.row(static_cast<Eigen::Index>(b) * L + t) =
          (mask_row(t) / cache.denom(b)) * d_pooled_raw.row(b);
    }
  }
  return g;
}

void scatter_input_grad(GradientSet& grads, const TokenSequence& tokens,
                        const Eigen::MatrixXd& input_grad, int example_index,
                        int max_len, double weight, const Eigen::VectorXd* keep) {
  const int len = std::min(tokens.length(), max_len);
  for (int t = 0; t < len; ++t) {
    const double k = keep ? (*keep)(t) : 1.0;
    if (k == 0.0 || weight == 0.0) continue;
    grads.tensors.embed.row(tokens.ids[t]) +=
        weight * k * input_grad.row(static_cast<Eigen::Index>(example_index) * max_len + t);
  }
}

// ---------------------------------------------------------------------------
// checkpoint io

namespace {

constexpr char kMagic[8] = {'C', 'O', 'D', 'A', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kCkptVersion = 1;

void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_u64(std::ostream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
std::uint32_t read_u32(std::istream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}
std::uint64_t read_u64(std::istream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}

void write_tensor(std::ostream& out, const std::string& name, const Eigen::MatrixXd& m) {
  write_u32(out, static_cast<std::uint32_t>(name.size()));
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
  write_u64(out, static_cast<std::uint64_t>(m.rows()));
  write_u64(out, static_cast<std::uint64_t>(m.cols()));
  out.write(reinterpret_cast<const char*>(m.data()),
            static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(m.size())));
}

Eigen::MatrixXd read_tensor(std::istream& in, std::string& name) {
  const std::uint32_t name_len = read_u32(in);
  name.resize(name_len);
  in.read(name.data(), name_len);
  const auto rows = static_cast<Eigen::Index>(read_u64(in));
  const auto cols = static_cast<Eigen::Index>(read_u64(in));
  Eigen::MatrixXd m(rows, cols);
  in.read(reinterpret_cast<char*>(m.data()),
          static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(m.size())));
  return m;
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelParams& params,
                     const std::string& meta_json,
                     const std::vector<std::pair<std::string, Eigen::MatrixXd>>& extra) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  out.write(kMagic, sizeof(kMagic));
  write_u32(out, kCkptVersion);
  write_u64(out, meta_json.size());
  out.write(meta_json.data(), static_cast<std::streamsize>(meta_json.size()));

  const std::vector<std::pair<std::string, const Eigen::MatrixXd*>> named = {
      {"embed", &params.embed},   {"enc_w1", &params.enc_w1},
      {"enc_w2", &params.enc_w2}, {"cls_w", &params.cls_w},
      {"proj_w", &params.proj_w},
  };
  const std::vector<std::pair<std::string, const Eigen::VectorXd*>> named_vec = {
      {"enc_b1", &params.enc_b1},
      {"enc_b2", &params.enc_b2},
      {"cls_b", &params.cls_b},
      {"proj_b", &params.proj_b},
  };
  write_u32(out, static_cast<std::uint32_t>(named.size() + named_vec.size() + extra.size()));
  for (const auto& [name, m] : named) write_tensor(out, name, *m);
  for (const auto& [name, v] : named_vec) write_tensor(out, name, *v);
  for (const auto& [name, m] : extra) write_tensor(out, name, m);
  if (!out) throw std::runtime_error("failed writing checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("not a checkpoint file: " + path);
  const std::uint32_t version = read_u32(in);
  if (version != kCkptVersion)
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));

  Checkpoint ck;
  const std::uint64_t meta_len = read_u64(in);
  ck.meta_json.resize(meta_len);
  in.read(ck.meta_json.data(), static_cast<std::streamsize>(meta_len));

  const std::uint32_t count = read_u32(in);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name;
    Eigen::MatrixXd m = read_tensor(in, name);
    if (name == "embed") ck.params.embed = std::move(m);
    else if (name == "enc_w1") ck.params.enc_w1 = std::move(m);
    else if (name == "enc_w2") ck.params.enc_w2 = std::move(m);
    else if (name == "cls_w") ck.params.cls_w = std::move(m);
    else if (name == "proj_w") ck.params.proj_w = std::move(m);
    else if (name == "enc_b1") ck.params.enc_b1 = m.col(0);
    else if (name == "enc_b2") ck.params.enc_b2 = m.col(0);
    else if (name == "cls_b") ck.params.cls_b = m.col(0);
    else if (name == "proj_b") ck.params.proj_b = m.col(0);
    else ck.extra.emplace_back(std::move(name), std::move(m));
  }
  if (!in) throw std::runtime_error("truncated checkpoint: " + path);
  return ck;
}

}  // namespace coda::encoder
