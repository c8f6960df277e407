#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

namespace coda::objectives {

// Probability floor inside every log; perturbs loss values by < 1e-10 at
// typical scales while keeping all losses differentiable everywhere.
inline constexpr double kProbFloor = 1e-12;

template <typename D>
auto softmax(const Eigen::MatrixBase<D>& logits) {
  using Scalar = typename D::Scalar;
  using Vec = Eigen::Vector<Scalar, Eigen::Dynamic>;
  Vec z = logits.derived();
  const Scalar m = z.maxCoeff();
  Vec e = (z.array() - m).exp();
  return Vec(e / e.sum());
}

inline Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r)
    out.row(r) = softmax(logits.row(r).transpose()).transpose();
  return out;
}

// -sum_c y_c log(p_c + floor); accepts soft labels.
template <typename DP, typename DY>
typename DP::Scalar cross_entropy(const Eigen::MatrixBase<DP>& pred,
                                  const Eigen::MatrixBase<DY>& label) {
  using Scalar = typename DP::Scalar;
  return -(label.derived().array() * (pred.derived().array() + Scalar(kProbFloor)).log())
              .sum();
}

// sum_c p_c log((p_c + floor)/(q_c + floor))
template <typename DP, typename DQ>
typename DP::Scalar kl_div(const Eigen::MatrixBase<DP>& p, const Eigen::MatrixBase<DQ>& q) {
  using Scalar = typename DP::Scalar;
  const auto pf = p.derived().array() + Scalar(kProbFloor);
  const auto qf = q.derived().array() + Scalar(kProbFloor);
  return (p.derived().array() * (pf / qf).log()).sum();
}

// 0.5 * (KL(p||m) + KL(q||m)) with m the elementwise mean.
// Symmetric and bounded by log 2.
template <typename DP, typename DQ>
typename DP::Scalar js_div(const Eigen::MatrixBase<DP>& p, const Eigen::MatrixBase<DQ>& q) {
  using Scalar = typename DP::Scalar;
  using Vec = Eigen::Vector<Scalar, Eigen::Dynamic>;
  const Vec m = Scalar(0.5) * (p.derived() + q.derived());
  return Scalar(0.5) * (kl_div(p, m) + kl_div(q, m));
}

// Consistency penalty against an adversarially perturbed input; no label.
template <typename DP, typename DQ>
typename DP::Scalar virtual_adversarial_loss(const Eigen::MatrixBase<DP>& p_orig,
                                             const Eigen::MatrixBase<DQ>& p_pert) {
  return js_div(p_pert, p_orig);
}

// ---------------------------------------------------------------------------
// gradients (64-bit, exact derivatives of the floored formulas above)

// VJP through softmax: d_logits = p .* (d_p - <d_p, p>)
inline Eigen::VectorXd softmax_vjp(const Eigen::VectorXd& probs, const Eigen::VectorXd& d_probs) {
  const double inner = d_probs.dot(probs);
  return probs.cwiseProduct(d_probs.array().matrix() -
                            Eigen::VectorXd::Constant(probs.size(), inner));
}

inline Eigen::VectorXd cross_entropy_grad_pred(const Eigen::VectorXd& pred,
                                               const Eigen::VectorXd& label) {
  return (-label.array() / (pred.array() + kProbFloor)).matrix();
}

inline void kl_grad(const Eigen::VectorXd& p, const Eigen::VectorXd& q, Eigen::VectorXd* d_p,
                    Eigen::VectorXd* d_q) {
  const Eigen::ArrayXd pf = p.array() + kProbFloor;
  const Eigen::ArrayXd qf = q.array() + kProbFloor;
  if (d_p) *d_p = ((pf / qf).log() + p.array() / pf).matrix();
  if (d_q) *d_q = (-p.array() / qf).matrix();
}

inline void js_grad(const Eigen::VectorXd& p, const Eigen::VectorXd& q, Eigen::VectorXd* d_p,
                    Eigen::VectorXd* d_q) {
  const Eigen::VectorXd m = 0.5 * (p + q);
  const Eigen::ArrayXd mf = m.array() + kProbFloor;
  const Eigen::ArrayXd m_term = m.array() / mf;  // combined dKL/dm of both halves
  if (d_p) {
    const Eigen::ArrayXd pf = p.array() + kProbFloor;
    *d_p = (0.5 * ((pf / mf).log() + p.array() / pf - m_term)).matrix();
  }
  if (d_q) {
    const Eigen::ArrayXd qf = q.array() + kProbFloor;
    *d_q = (0.5 * ((qf / mf).log() + q.array() / qf - m_term)).matrix();
  }
}

// ---------------------------------------------------------------------------
// contrastive terms

namespace detail {
inline void require_unit(const Eigen::VectorXd& v, const char* what) {
  const double n = v.norm();
  if (!(std::abs(n - 1.0) < 1e-3))
    throw std::invalid_argument(std::string(what) +
                                " must be unit-norm (zero-flagged rows are excluded upstream)");
}
}  // namespace detail

// -log exp(s+/tau) / sum_{j in negatives + positive} exp(s_j/tau), with
// s the cosine similarity (a plain dot product on unit inputs).
// With no negatives the loss is exactly zero.
inline double info_nce(const Eigen::VectorXd& q, const Eigen::VectorXd& k_pos,
                       const Eigen::Ref<const Eigen::MatrixXd>& negatives, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("tau must be positive");
  detail::require_unit(q, "query");
  detail::require_unit(k_pos, "positive key");

  const double s_pos = q.dot(k_pos) / tau;
  if (negatives.rows() == 0) return 0.0;
  Eigen::VectorXd s(negatives.rows() + 1);
  s(0) = s_pos;
  s.tail(negatives.rows()) = (negatives * q) / tau;
  const double m = s.maxCoeff();
  const double lse = m + std::log((s.array() - m).exp().sum());
  return lse - s_pos;
}

inline Eigen::VectorXd info_nce_grad_q(const Eigen::VectorXd& q, const Eigen::VectorXd& k_pos,
                                       const Eigen::Ref<const Eigen::MatrixXd>& negatives,
                                       double tau) {
  if (negatives.rows() == 0) return Eigen::VectorXd::Zero(q.size());
  Eigen::VectorXd s(negatives.rows() + 1);
  s(0) = q.dot(k_pos) / tau;
  s.tail(negatives.rows()) = (negatives * q) / tau;
  const double m = s.maxCoeff();
  Eigen::VectorXd w = (s.array() - m).exp();
  w /= w.sum();
  Eigen::VectorXd grad = (w(0) - 1.0) / tau * k_pos;
  grad += negatives.transpose() * w.tail(negatives.rows()) / tau;
  return grad;
}

// Both query-side terms against the same positive key and bank snapshot.
inline std::pair<double, double> contrastive_objective(
    const Eigen::VectorXd& q, const Eigen::VectorXd& q_aug, const Eigen::VectorXd& k,
    const Eigen::Ref<const Eigen::MatrixXd>& bank, double tau) {
  return {info_nce(q, k, bank, tau), info_nce(q_aug, k, bank, tau)};
}

// ---------------------------------------------------------------------------
// composition

struct LossBreakdown {
  double ce = 0.0;
  double adv_ce = 0.0;
  double consistency = 0.0;
  double contrast_self = 0.0;
  double contrast_aug = 0.0;
  double total = 0.0;
  // weights actually applied
  double alpha = 0.0;
  double beta = 0.0;
  double lambda = 0.0;
};

inline LossBreakdown total_objective(double ce, double adv_ce, double consistency,
                                     double contrast_self, double contrast_aug, double alpha,
                                     double beta, double lambda) {
  if (alpha < 0.0 || beta < 0.0 || lambda < 0.0)
    throw std::invalid_argument("objective weights must be non-negative");
  LossBreakdown b;
  b.ce = ce;
  b.adv_ce = adv_ce;
  b.consistency = consistency;
  b.contrast_self = contrast_self;
  b.contrast_aug = contrast_aug;
  b.alpha = alpha;
  b.beta = beta;
  b.lambda = lambda;
  b.total = ce + alpha * adv_ce + beta * consistency + lambda * (contrast_self + contrast_aug);
  return b;
}

// Cross-entropy on the original, alpha-weighted cross-entropy on the
// augmentation, beta-weighted divergence between the two predictions.
inline LossBreakdown consistency_objective(const Eigen::VectorXd& p_x,
                                           const Eigen::VectorXd& p_xhat,
                                           const Eigen::VectorXd& label, double alpha,
                                           double beta) {
  return total_objective(cross_entropy(p_x, label), cross_entropy(p_xhat, label),
                         js_div(p_x, p_xhat), 0.0, 0.0, alpha, beta, 0.0);
}

}  // namespace coda::objectives
