#include "mvkd/losses.hpp"

#include <algorithm>
#include <cmath>

#include "mvkd/errors.hpp"
#include "mvkd/numerics/ops.hpp"

namespace mvkd {
namespace {

void check_binary(const Tensor& labels) {
  const std::size_t cols = labels.cols();
  for (std::size_t i = 0; i < labels.numel(); ++i) {
    const double v = labels.at(i);
    if (v != 0.0 && v != 1.0) {
      throw DataError("label at (" + std::to_string(i / cols) + ", " + std::to_string(i % cols) +
                      ") is " + std::to_string(v) + ", expected 0 or 1");
    }
  }
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(what) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

void check_distribution(std::span<const double> p, const char* name) {
  double s = 0.0;
  for (double v : p) {
    if (!(v >= 0.0)) throw ContractError(std::string(name) + " has a negative or NaN entry");
    s += v;
  }
  if (std::abs(s - 1.0) > 1e-9) {
    throw ContractError(std::string(name) + " sums to " + std::to_string(s) + ", not 1");
  }
}

Tensor accumulate(const Tensor* acc, const Tensor& term) { return acc ? ops::add(*acc, term) : term; }

// Softmax(x / tau) row-wise, plus its clamped log, as detached constants.
std::pair<Tensor, Tensor> teacher_distribution(const Tensor& logits, double tau) {
  NoGradGuard no_grad;
  auto p = ops::softmax(ops::scale(logits.detach(), 1.0 / tau), 1);
  auto logp = ops::log(p);
  return {p, logp};
}

Tensor kl_to_student_rows(const Tensor& teacher_logits, const Tensor& student_logits, double tau) {
  check_same_shape(teacher_logits, student_logits, "logit_distillation");
  auto [p, logp] = teacher_distribution(teacher_logits, tau);
  auto log_q = ops::log_softmax(ops::scale(student_logits, 1.0 / tau), 1);
  return ops::sum(ops::mul(p, ops::sub(logp, log_q)), 1);
}

}  // namespace

void LossConfig::validate() const {
  if (!(lambda_t >= 0.0)) throw ConfigError("loss.lambda_t must be >= 0");
  if (!(tau > 0.0)) throw ConfigError("loss.tau must be > 0");
  if (!(fd_weight >= 0.0) || !(ld_weight >= 0.0) || !(vc_weight >= 0.0)) {
    throw ConfigError("loss term weights must be >= 0");
  }
}

std::string to_string(Divergence d) { return d == Divergence::kJensenShannon ? "js" : "kl"; }

std::string to_string(ClassificationLoss c) { return c == ClassificationLoss::kBce ? "bce" : "two-way-approx"; }

Divergence divergence_from_string(const std::string& s) {
  if (s == "js") return Divergence::kJensenShannon;
  if (s == "kl") return Divergence::kKullbackLeibler;
  throw ConfigError("loss.divergence must be 'js' or 'kl', got '" + s + "'");
}

ClassificationLoss classification_from_string(const std::string& s) {
  if (s == "bce") return ClassificationLoss::kBce;
  if (s == "two-way-approx") return ClassificationLoss::kTwoWayApprox;
  throw ConfigError("loss.classification must be 'bce' or 'two-way-approx', got '" + s + "'");
}

TwoWayTerms two_way_terms(const Tensor& logits, const Tensor& labels) {
  check_same_shape(logits, labels, "two_way_terms");
  check_binary(labels);
  const std::size_t rows = logits.rows(), cols = logits.cols();
  std::vector<double> per_row(rows, 0.0), per_col(cols, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      per_row[r] += labels.at(r, c);
      per_col[c] += labels.at(r, c);
    }
  std::vector<double> row_w(rows * cols, 0.0), col_w(rows * cols, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      if (labels.at(r, c) == 0.0) continue;
      row_w[r * cols + c] = 1.0 / per_row[r];
      col_w[r * cols + c] = 1.0 / per_col[c];
    }
  const Shape shape{rows, cols};
  auto sample = ops::scale(ops::sum(ops::mul(ops::log_softmax(logits, 1), Tensor(shape, row_w))),
                           -1.0 / static_cast<double>(rows));
  auto klass = ops::scale(ops::sum(ops::mul(ops::log_softmax(logits, 0), Tensor(shape, col_w))),
                          -1.0 / static_cast<double>(cols));
  return TwoWayTerms{sample, klass};
}

Tensor frame_classification_loss(const Tensor& logits, const Tensor& labels, ClassificationLoss variant) {
  check_same_shape(logits, labels, "frame_classification_loss");
  check_binary(labels);
  if (variant == ClassificationLoss::kBce) return ops::bce_with_logits(logits, labels);
  auto terms = two_way_terms(logits, labels);
  return ops::scale(ops::add(terms.sample_wise, terms.class_wise), 0.5);
}

Tensor sequence_classification_loss(const Tensor& frame_features, const Tensor& seq_labels,
                                    const Tensor& classifier_weight, const Tensor& classifier_bias,
                                    ClassificationLoss variant) {
  if (frame_features.rank() != 2 || frame_features.rows() == 0) {
    throw DimensionError("sequence loss needs T >= 1 frame features, got " + shape_str(frame_features.shape()));
  }
  auto pooled = ops::mean(frame_features, 0);
  auto logits = ops::add_row(ops::matmul(pooled, classifier_weight), classifier_bias);
  Tensor labels = seq_labels;
  if (labels.rank() == 1) labels = Tensor({1, labels.numel()}, {labels.data().begin(), labels.data().end()});
  return frame_classification_loss(logits, labels, variant);
}

Tensor supervision_objective(const Tensor& frame_loss, const Tensor& sequence_loss, double lambda_t) {
  if (!(lambda_t >= 0.0)) throw ConfigError("lambda_t must be >= 0");
  return ops::add(frame_loss, ops::scale(sequence_loss, lambda_t));
}

Tensor feature_distillation(std::span<const Tensor> teacher_attn, std::span<const Tensor> student_attn,
                            std::span<const Tensor> teacher_av, std::span<const Tensor> student_av) {
  const std::size_t n = student_attn.size();
  if (n == 0 || teacher_attn.size() != n || teacher_av.size() != n || student_av.size() != n) {
    throw DimensionError("feature_distillation: view counts differ or are zero");
  }
  const std::size_t frames = student_attn[0].rows();
  Tensor total;
  bool have = false;
  for (std::size_t v = 0; v < n; ++v) {
    check_same_shape(teacher_attn[v], student_attn[v], "feature_distillation (attn)");
    check_same_shape(teacher_av[v], student_av[v], "feature_distillation (av)");
    if (student_attn[v].rows() != frames) throw DimensionError("feature_distillation: views differ in T");
    auto d_attn = ops::sum(ops::square(ops::sub(teacher_attn[v].detach(), student_attn[v])));
    auto d_av = ops::sum(ops::square(ops::sub(teacher_av[v].detach(), student_av[v])));
    total = accumulate(have ? &total : nullptr, ops::add(d_attn, d_av));
    have = true;
  }
  return ops::scale(total, 1.0 / static_cast<double>(n * frames));
}

Tensor logit_distillation(std::span<const Tensor> teacher_logits, std::span<const Tensor> student_logits,
                          double tau, const VisibilityMask* masks) {
  if (!(tau > 0.0)) throw ConfigError("logit distillation temperature must be > 0, got " + std::to_string(tau));
  const std::size_t n = student_logits.size();
  if (n == 0 || teacher_logits.size() != n) throw DimensionError("logit_distillation: view counts differ");
  const std::size_t frames = student_logits[0].rows();
  if (masks && (masks->views() != n || masks->frames() != frames)) {
    throw DimensionError("logit_distillation: mask shape does not match N x T");
  }
  Tensor total;
  bool have = false;
  for (std::size_t v = 0; v < n; ++v) {
    if (student_logits[v].rows() != frames) throw DimensionError("logit_distillation: views differ in T");
    auto rows = kl_to_student_rows(teacher_logits[v], student_logits[v], tau);
    Tensor term;
    if (masks) {
      std::vector<double> gate(frames);
      for (std::size_t t = 0; t < frames; ++t) gate[t] = masks->at(v, t);
      term = ops::sum(ops::mul(rows, Tensor({frames, 1}, gate)));
    } else {
      term = ops::sum(rows);
    }
    total = accumulate(have ? &total : nullptr, term);
    have = true;
  }
  return ops::scale(total, tau * tau / static_cast<double>(n * frames));
}

Tensor logit_distillation_aggregated(std::span<const Tensor> teacher_logits,
                                     std::span<const Tensor> student_logits, double tau) {
  if (!(tau > 0.0)) throw ConfigError("logit distillation temperature must be > 0, got " + std::to_string(tau));
  const std::size_t n = student_logits.size();
  if (n == 0 || teacher_logits.size() != n) throw DimensionError("logit_distillation: view counts differ");
  Tensor t_sum = teacher_logits[0].detach();
  Tensor s_sum = student_logits[0];
  for (std::size_t v = 1; v < n; ++v) {
    t_sum = ops::add(t_sum, teacher_logits[v].detach());
    s_sum = ops::add(s_sum, student_logits[v]);
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  auto rows = kl_to_student_rows(ops::scale(t_sum, inv_n), ops::scale(s_sum, inv_n), tau);
  return ops::scale(ops::sum(rows), tau * tau / static_cast<double>(rows.rows()));
}

Tensor kl_rows(const Tensor& p, const Tensor& q) {
  check_same_shape(p, q, "kl_rows");
  return ops::sum(ops::mul(p, ops::sub(ops::log(p), ops::log(q))), 1);
}

Tensor js_rows(const Tensor& p, const Tensor& q) {
  check_same_shape(p, q, "js_rows");
  auto log_m = ops::log(ops::scale(ops::add(p, q), 0.5));
  auto kl_p = ops::sum(ops::mul(p, ops::sub(ops::log(p), log_m)), 1);
  auto kl_q = ops::sum(ops::mul(q, ops::sub(ops::log(q), log_m)), 1);
  return ops::scale(ops::add(kl_p, kl_q), 0.5);
}

double js_divergence(std::span<const double> p, std::span<const double> q) {
  check_distribution(p, "p");
  check_distribution(q, "q");
  if (p.size() != q.size()) throw DimensionError("js_divergence: vectors differ in length");
  NoGradGuard no_grad;
  const Shape s{1, p.size()};
  return js_rows(Tensor(s, {p.begin(), p.end()}), Tensor(s, {q.begin(), q.end()})).item();
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  check_distribution(p, "p");
  check_distribution(q, "q");
  if (p.size() != q.size()) throw DimensionError("kl_divergence: vectors differ in length");
  NoGradGuard no_grad;
  const Shape s{1, p.size()};
  return kl_rows(Tensor(s, {p.begin(), p.end()}), Tensor(s, {q.begin(), q.end()})).item();
}

double confidence_weight(std::span<const double> p_i, std::span<const double> p_j) {
  if (p_i.empty() || p_j.empty()) throw ContractError("confidence_weight of an empty distribution");
  return *std::max_element(p_i.begin(), p_i.end()) * *std::max_element(p_j.begin(), p_j.end());
}

ViewConsistency view_consistency(std::span<const Tensor> probs, const VisibilityMask& masks,
                                 const LossConfig& config) {
  const std::size_t n = probs.size();
  if (n < 2) return ViewConsistency{Tensor::scalar(0.0), true};
  const std::size_t frames = probs[0].rows();
  const std::size_t classes = probs[0].cols();
  for (const auto& p : probs) {
    if (p.rank() != 2 || p.rows() != frames || p.cols() != classes) {
      throw DimensionError("view_consistency: every view needs a " + std::to_string(frames) + "x" +
                           std::to_string(classes) + " probability matrix");
    }
  }
  if (config.use_mask && (masks.views() != n || masks.frames() != frames)) {
    throw DimensionError("view_consistency: mask is " + std::to_string(masks.views()) + "x" +
                         std::to_string(masks.frames()) + ", expected " + std::to_string(n) + "x" +
                         std::to_string(frames));
  }
  auto row_max = [&](const Tensor& p, std::size_t t) {
    const auto row = p.data().subspan(t * classes, classes);
    return *std::max_element(row.begin(), row.end());
  };

  Tensor total;
  bool have = false;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      std::vector<double> coef(frames);
      bool any = false;
      for (std::size_t t = 0; t < frames; ++t) {
        double c = config.use_conf_weight ? row_max(probs[i], t) * row_max(probs[j], t) : 1.0;
        if (config.use_mask) c *= static_cast<double>(covisible_gate(masks, i, j, t));
        coef[t] = c;
        any = any || c != 0.0;
      }
      if (!any) continue;
      auto div = config.divergence == Divergence::kJensenShannon ? js_rows(probs[i], probs[j])
                                                                 : kl_rows(probs[i], probs[j]);
      auto term = ops::sum(ops::mul(div, Tensor({frames, 1}, std::move(coef))));
      total = accumulate(have ? &total : nullptr, term);
      have = true;
    }
  }
  if (!have) return ViewConsistency{Tensor::scalar(0.0), false};
  const double pairs = static_cast<double>(n * (n - 1) / 2);
  return ViewConsistency{ops::scale(total, 1.0 / (pairs * static_cast<double>(frames))), false};
}

}  // namespace mvkd
