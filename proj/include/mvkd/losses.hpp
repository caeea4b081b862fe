#pragma once

// Training objectives: multi-label supervision, feature and logit
// distillation, and the masked, confidence-weighted view-consistency term.
//
// Supervised losses use per-class sigmoids. Logit distillation and view
// consistency treat the same logits as a softmax distribution over classes.
// Teacher features, teacher logits and confidence weights never carry
// gradients.

#include <span>
#include <string>
#include <vector>

#include "mvkd/numerics/tensor.hpp"
#include "mvkd/visibility.hpp"

namespace mvkd {

enum class Divergence { kJensenShannon, kKullbackLeibler };
enum class ClassificationLoss { kBce, kTwoWayApprox };

struct LossConfig {
  double lambda_t = 1.0;  // sequence-loss weight in L_F + lambda_t * L_S
  double tau = 2.0;       // logit-distillation temperature
  bool use_conf_weight = true;
  bool use_mask = true;
  Divergence divergence = Divergence::kJensenShannon;  // VC term only
  bool use_fd = true;
  bool use_ld = true;
  bool use_vc = true;
  ClassificationLoss classification = ClassificationLoss::kBce;
  double fd_weight = 1.0;
  double ld_weight = 1.0;
  double vc_weight = 1.0;
  // Average logits over views before the KL instead of per-view KL terms.
  bool ld_aggregate_first = false;
  // Multiply each per-view, per-frame KL term by the visibility mask.
  bool ld_mask_gated = false;

  void validate() const;
};

// Per-step scalar values; disabled terms are exactly 0.
struct LossBreakdown {
  double frame = 0.0;             // L_F
  double sequence = 0.0;          // L_S
  double feature_distill = 0.0;   // L_FD
  double logit_distill = 0.0;     // L_LD
  double view_consistency = 0.0;  // L_VC
  double total = 0.0;
};

std::string to_string(Divergence d);
std::string to_string(ClassificationLoss c);
Divergence divergence_from_string(const std::string& s);
ClassificationLoss classification_from_string(const std::string& s);

// Multi-label loss over T x C logits against {0,1} labels of the same shape.
// BCE: mean binary cross-entropy. Two-way approximation: half of
// (row-softmax CE averaged over each frame's positives, mean over frames) +
// (column-softmax CE averaged over each class's positives, mean over classes).
Tensor frame_classification_loss(const Tensor& logits, const Tensor& labels, ClassificationLoss variant);

struct TwoWayTerms {
  Tensor sample_wise;
  Tensor class_wise;
};
TwoWayTerms two_way_terms(const Tensor& logits, const Tensor& labels);

// Classifies the time-averaged T x D' features with `classifier_weight`
// (D' x C) and `classifier_bias` (1 x C), scored against 1 x C labels.
Tensor sequence_classification_loss(const Tensor& frame_features, const Tensor& seq_labels,
                                    const Tensor& classifier_weight, const Tensor& classifier_bias,
                                    ClassificationLoss variant);

// L_F + lambda_t * L_S
Tensor supervision_objective(const Tensor& frame_loss, const Tensor& sequence_loss, double lambda_t);

// (1 / (N T)) sum_n sum_t (|attn_T - attn_S|^2 + |av_T - av_S|^2). One T x D
// tensor per view in each list.
Tensor feature_distillation(std::span<const Tensor> teacher_attn, std::span<const Tensor> student_attn,
                            std::span<const Tensor> teacher_av, std::span<const Tensor> student_av);

// (tau^2 / (N T)) sum_n sum_t KL(softmax(t/tau) || softmax(s/tau)).
// `masks` (optional, N x T) gates individual terms.
Tensor logit_distillation(std::span<const Tensor> teacher_logits, std::span<const Tensor> student_logits,
                          double tau, const VisibilityMask* masks = nullptr);
// Views averaged first: (tau^2 / T) sum_t KL(softmax(mean_n t / tau) || softmax(mean_n s / tau)).
Tensor logit_distillation_aggregated(std::span<const Tensor> teacher_logits,
                                     std::span<const Tensor> student_logits, double tau);

// Row-wise divergences between T x C probability matrices, returned T x 1.
Tensor js_rows(const Tensor& p, const Tensor& q);
Tensor kl_rows(const Tensor& p, const Tensor& q);

// Scalar forms for single probability vectors. Inputs must be nonnegative
// and sum to 1 within 1e-9.
double js_divergence(std::span<const double> p, std::span<const double> q);
double kl_divergence(std::span<const double> p, std::span<const double> q);

// max_c p_i * max_c p_j
double confidence_weight(std::span<const double> p_i, std::span<const double> p_j);

struct ViewConsistency {
  Tensor value;
  bool degenerate = false;  // fewer than two views; value is 0
};

// (1 / (N_pairs T)) sum_{i<j} sum_t w_t m_it m_jt D(p_it, p_jt) over one
// T x C probability matrix per view.
ViewConsistency view_consistency(std::span<const Tensor> probs, const VisibilityMask& masks,
                                 const LossConfig& config);

}  // namespace mvkd
