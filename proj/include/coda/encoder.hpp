#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "coda/corpus.hpp"
#include "coda/rng.hpp"

namespace coda::encoder {

using corpus::TokenSequence;

// Query/key network weights. The architecture is
//   token embedding -> masked mean pool -> 2 x (affine + tanh + dropout)
//   -> classifier head, with a separate normalized projection head.
struct ModelParams {
  Eigen::MatrixXd embed;   // vocab x d_emb, row kPad pinned to zero
  Eigen::MatrixXd enc_w1;  // d_emb x d_hid
  Eigen::VectorXd enc_b1;  // d_hid
  Eigen::MatrixXd enc_w2;  // d_hid x d_hid
  Eigen::VectorXd enc_b2;  // d_hid
  Eigen::MatrixXd cls_w;   // d_hid x num_classes
  Eigen::VectorXd cls_b;   // num_classes
  Eigen::MatrixXd proj_w;  // d_hid x d_proj
  Eigen::VectorXd proj_b;  // d_proj

  int vocab_size() const { return static_cast<int>(embed.rows()); }
  int d_emb() const { return static_cast<int>(embed.cols()); }
  int d_hid() const { return static_cast<int>(enc_w1.cols()); }
  int d_proj() const { return static_cast<int>(proj_w.cols()); }
  int num_classes() const { return static_cast<int>(cls_w.cols()); }
};

// Applies f to every parameter tensor, in a fixed order.
template <class P, class F>
void for_each_tensor(P&& p, F&& f) {
  f(p.embed);
  f(p.enc_w1);
  f(p.enc_b1);
  f(p.enc_w2);
  f(p.enc_b2);
  f(p.cls_w);
  f(p.cls_b);
  f(p.proj_w);
  f(p.proj_b);
}

template <class A, class B, class F>
void for_each_tensor2(A&& a, B&& b, F&& f) {
  f(a.embed, b.embed);
  f(a.enc_w1, b.enc_w1);
  f(a.enc_b1, b.enc_b1);
  f(a.enc_w2, b.enc_w2);
  f(a.enc_b2, b.enc_b2);
  f(a.cls_w, b.cls_w);
  f(a.cls_b, b.cls_b);
  f(a.proj_w, b.proj_w);
  f(a.proj_b, b.proj_b);
}

template <class A, class B, class C, class D, class F>
void for_each_tensor4(A&& a, B&& b, C&& c, D&& d, F&& f) {
  f(a.embed, b.embed, c.embed, d.embed);
  f(a.enc_w1, b.enc_w1, c.enc_w1, d.enc_w1);
  f(a.enc_b1, b.enc_b1, c.enc_b1, d.enc_b1);
  f(a.enc_w2, b.enc_w2, c.enc_w2, d.enc_w2);
  f(a.enc_b2, b.enc_b2, c.enc_b2, d.enc_b2);
  f(a.cls_w, b.cls_w, c.cls_w, d.cls_w);
  f(a.cls_b, b.cls_b, c.cls_b, d.cls_b);
  f(a.proj_w, b.proj_w, c.proj_w, d.proj_w);
  f(a.proj_b, b.proj_b, c.proj_b, d.proj_b);
}

// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero, PAD row zero.
ModelParams init_params(int vocab_size, int d_emb, int d_hid, int d_proj,
                        int num_classes, std::uint64_t seed);

ModelParams zeros_like(const ModelParams& p);

// Batch of embedded sequences; values stores example b at rows
// [b*max_len, (b+1)*max_len). Masked-out rows carry zero vectors.
struct EmbeddingBatch {
  Eigen::MatrixXd values;  // (batch*max_len) x dim
  Eigen::MatrixXd mask;    // batch x max_len, entries 0/1
  int batch = 0;
  int max_len = 0;
  int dim = 0;

  auto example(int b) { return values.middleRows(b * max_len, max_len); }
  auto example(int b) const { return values.middleRows(b * max_len, max_len); }
};

// Row lookup per token id. forced_max_len pads every sequence to the
// given length (must be >= the longest sequence); -1 uses the batch max.
EmbeddingBatch embed(const ModelParams& params, const std::vector<TokenSequence>& tokens,
                     int forced_max_len = -1);

enum class Mode { kTrain, kEval };

struct ForwardCache {
  EmbeddingBatch input;
  Eigen::MatrixXd pooled_raw;  // B x d_emb, masked mean
  Eigen::VectorXd denom;       // B, max(mask sum, 1)
  Eigen::ArrayXd valid;        // B, 0 for all-padding examples
  Eigen::MatrixXd h1;          // B x d_hid, tanh of layer 1
  Eigen::MatrixXd h1d;         // after dropout site 1
  Eigen::MatrixXd h2;          // tanh of layer 2
  Eigen::MatrixXd drop1;       // dropout masks, entries 0 or 1/(1-p); empty in eval
  Eigen::MatrixXd drop2;
  Eigen::MatrixXd pooled;      // B x d_hid, final representation
  Mode mode = Mode::kEval;
  double dropout_rate = 0.0;
};

struct ForwardResult {
  Eigen::MatrixXd logits;  // B x num_classes
  Eigen::MatrixXd pooled;  // B x d_hid
  ForwardCache cache;
};

// In train mode dropout masks are drawn from rng unless reuse_masks is
// given, in which case its recorded masks are applied verbatim.
// All-padding examples produce a zero pooled row, so their logits equal
// cls_b; downstream consumers treat such rows as degenerate.
ForwardResult forward(const ModelParams& params, const EmbeddingBatch& batch,
                      double dropout_rate, Mode mode, Rng* rng,
                      const ForwardCache* reuse_masks = nullptr);

struct Projection {
  Eigen::MatrixXd units;        // B x d_proj, unit rows (or zero)
  std::vector<char> zero_flag;  // 1 where the input row was (near) zero
};

// Affine map + L2 normalization. Zero rows map to zero and are flagged.
Projection project(const ModelParams& params, const Eigen::MatrixXd& pooled);

struct UpstreamGrad {
  Eigen::MatrixXd d_logits;  // B x C, may be empty
  Eigen::MatrixXd d_pooled;  // B x d_hid, may be empty
  Eigen::MatrixXd d_proj;    // B x d_proj w.r.t. projected unit vectors, may be empty
};

struct GradientSet {
  ModelParams tensors;         // same shapes as the parameters
  Eigen::MatrixXd input_grad;  // (B*max_len) x d_emb; zero at padded rows

  GradientSet& operator+=(const GradientSet& other);
};

GradientSet zero_gradients(const ModelParams& params, int input_rows);

// Exact reverse-mode gradients for the forward pass above, including the
// projection head when d_proj upstream is provided (its intermediates are
// recomputed from the cached pooled activations; no RNG is involved).
// The embedding-table gradient is NOT filled here: input_grad holds
// d loss / d input embeddings and callers scatter it per token id.
GradientSet backward(const ModelParams& params, const ForwardCache& cache,
                     const UpstreamGrad& upstream);

// grads.tensors.embed.row(id) += weight * keep[t] * input_grad.row(b*L + t)
// for every real position t of `tokens`. keep == nullptr means all-ones.
void scatter_input_grad(GradientSet& grads, const TokenSequence& tokens,
                        const Eigen::MatrixXd& input_grad, int example_index,
                        int max_len, double weight = 1.0,
                        const Eigen::VectorXd* keep = nullptr);

// Binary checkpoint: every tensor with named shape plus a free-form JSON
// metadata string. Round-trips bit-exactly.
void save_checkpoint(const std::string& path, const ModelParams& params,
                     const std::string& meta_json,
                     const std::vector<std::pair<std::string, Eigen::MatrixXd>>& extra = {});

struct Checkpoint {
  ModelParams params;
  std::string meta_json;
  std::vector<std::pair<std::string, Eigen::MatrixXd>> extra;
};

Checkpoint load_checkpoint(const std::string& path);

}  // namespace coda::encoder
