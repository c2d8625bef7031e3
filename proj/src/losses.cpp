#include "mclforge/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace mclforge {

SoftTarget softmax_t(const std::vector<double>& logits, double temperature) {
    if (!(temperature > 0.0)) {
        throw DomainError("softmax_t: temperature must be positive");
    }
    if (logits.size() < 2) {
        throw ContractError("softmax_t: need at least two classes");
    }
    const double max_logit = *std::max_element(logits.begin(), logits.end());
    SoftTarget out;
    out.temperature = temperature;
    out.probs.resize(logits.size());
    double denom = 0.0;
    for (std::size_t j = 0; j < logits.size(); ++j) {
        out.probs[j] = std::exp((logits[j] - max_logit) / temperature);
        denom += out.probs[j];
    }
    for (double& p : out.probs) p /= denom;
    return out;
}

double cross_entropy(const std::vector<double>& probs, int label) {
    if (label < 0 || label >= static_cast<int>(probs.size())) {
        throw ContractError("cross_entropy: label out of range");
    }
    return -std::log(std::max(probs[static_cast<std::size_t>(label)], kProbFloor));
}

double soft_cross_entropy(const std::vector<double>& target,
                          const std::vector<double>& probs) {
    if (target.size() != probs.size()) {
        throw ShapeError("soft_cross_entropy: distribution lengths differ");
    }
    double acc = 0.0;
    for (std::size_t j = 0; j < target.size(); ++j) {
        acc -= target[j] * std::log(std::max(probs[j], kProbFloor));
    }
    return acc;
}

LossBreakdown gd_loss(const std::vector<double>& student_logits, int label,
                      const SoftTarget& teacher_soft, double temperature,
                      double lambda, bool student_temperature_on,
                      bool t_squared_rescale) {
    if (lambda < 0.0 || lambda > 1.0) {
        throw ConfigError("gd_loss: lambda must be in [0, 1]");
    }
    LossBreakdown out;
    out.lambda = lambda;
    out.ce_term = cross_entropy(softmax_t(student_logits, 1.0).probs, label);
    const double student_t = student_temperature_on ? temperature : 1.0;
    out.distill_term = soft_cross_entropy(teacher_soft.probs,
                                          softmax_t(student_logits, student_t).probs);
    if (t_squared_rescale) out.distill_term *= temperature * temperature;
    out.total = (1.0 - lambda) * out.ce_term + lambda * out.distill_term;
    return out;
}

double kl_to_uniform(const std::vector<double>& probs) {
    const double c = static_cast<double>(probs.size());
    double acc = 0.0;
    for (double p : probs) {
        acc += (1.0 / c) * (std::log(1.0 / c) - std::log(std::max(p, kProbFloor)));
    }
    return acc;
}

double ensemble_loss(const std::vector<std::vector<double>>& per_sample_losses) {
    if (per_sample_losses.empty() || per_sample_losses.front().empty()) {
        throw ContractError("ensemble_loss: loss matrix must be nonempty");
    }
    double total = 0.0;
    for (const auto& row : per_sample_losses) {
        if (row.size() != per_sample_losses.front().size()) {
            throw ShapeError("ensemble_loss: ragged loss matrix");
        }
        total += *std::min_element(row.begin(), row.end());
    }
    return total;
}

// ---------------------------------------------------------------------------

Tensor log_softmax_node(ComputationRecord& rec, const Tensor& logits,
                        double temperature) {
    if (!(temperature > 0.0)) {
        throw DomainError("log_softmax_node: temperature must be positive");
    }
    Tensor shifted = rec.max_subtract(rec.scale(logits, 1.0 / temperature));
    Tensor log_norm = rec.log(rec.row_sum(rec.exp(shifted)));
    return rec.sub_col(shifted, log_norm);
}

Tensor cross_entropy_node(ComputationRecord& rec, const Tensor& log_probs,
                          const std::vector<int>& labels) {
    return rec.scale(rec.gather_cols(log_probs, labels), -1.0);
}

Tensor soft_cross_entropy_node(ComputationRecord& rec, const Tensor& log_probs,
                               const Tensor& teacher) {
    if (teacher.requires_grad()) {
        throw ContractError("soft_cross_entropy_node: teacher must be detached");
    }
    return rec.scale(rec.row_sum(rec.mul(log_probs, teacher)), -1.0);
}

Tensor kl_to_uniform_node(ComputationRecord& rec, const Tensor& log_probs) {
    const double c = static_cast<double>(log_probs.cols());
    return rec.add(rec.scale(rec.row_sum(log_probs), -1.0 / c), -std::log(c));
}

}  // namespace mclforge
