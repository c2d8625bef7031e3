#pragma once

#include <vector>

#include "mclforge/tensor.hpp"

namespace mclforge {

/// Temperature-smoothed class distribution derived from logits. Smoothing
/// never reorders classes: argmax(probs) equals argmax of the source logits.
struct SoftTarget {
    std::vector<double> probs;
    double temperature = 1.0;
};

/// The two terms of the generalized distillation objective and their blend:
/// total = (1 - lambda) * ce_term + lambda * distill_term.
struct LossBreakdown {
    double total = 0.0;
    double ce_term = 0.0;
    double distill_term = 0.0;
    double lambda = 0.0;
};

/// Probabilities are floored at this value before any log. Rectifier nets
/// can produce logits extreme enough to round a softmax component to zero.
inline constexpr double kProbFloor = 1e-12;

// -- plain scalar/vector forms (no gradients) -------------------------------

/// Softmax of logits / T, computed with max subtraction. T must be > 0.
SoftTarget softmax_t(const std::vector<double>& logits, double temperature);

/// -log(probs[label]) with the probability floor applied.
double cross_entropy(const std::vector<double>& probs, int label);

/// -sum_j target[j] * log(probs[j]) with the probability floor applied.
double soft_cross_entropy(const std::vector<double>& target,
                          const std::vector<double>& probs);

/// Generalized distillation loss of a student against a fixed teacher.
/// The cross-entropy term always uses T = 1. The distillation term softens
/// the student at the teacher's temperature when student_temperature_on
/// (the default), or at T = 1 otherwise, and is multiplied by T^2 when
/// t_squared_rescale is set.
LossBreakdown gd_loss(const std::vector<double>& student_logits, int label,
                      const SoftTarget& teacher_soft, double temperature,
                      double lambda, bool student_temperature_on = true,
                      bool t_squared_rescale = false);

/// KL(uniform || probs) >= 0.
double kl_to_uniform(const std::vector<double>& probs);

/// Sum over samples of the per-row minimum of an N x M loss matrix.
double ensemble_loss(const std::vector<std::vector<double>>& per_sample_losses);

// -- graph-building forms used by the training engine -----------------------

/// log softmax(logits / T) row-wise, [n x C] -> [n x C]. Numerically stable:
/// the log argument is always >= 1 after max subtraction.
Tensor log_softmax_node(ComputationRecord& rec, const Tensor& logits,
                        double temperature);

/// Per-sample cross-entropy -log_probs[i, labels[i]], [n x C] -> [n].
Tensor cross_entropy_node(ComputationRecord& rec, const Tensor& log_probs,
                          const std::vector<int>& labels);

/// Per-sample soft cross-entropy -sum_j teacher[i][j] * log_probs[i][j].
/// The teacher tensor must not require grad; no gradient reaches it.
Tensor soft_cross_entropy_node(ComputationRecord& rec, const Tensor& log_probs,
                               const Tensor& teacher);

/// Per-sample KL(uniform || softmax): -log C - (1/C) * row_sum(log_probs).
Tensor kl_to_uniform_node(ComputationRecord& rec, const Tensor& log_probs);

}  // namespace mclforge
