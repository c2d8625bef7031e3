#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "mclforge/dataset.hpp"
#include "mclforge/eval.hpp"
#include "mclforge/network.hpp"
#include "mclforge/rng.hpp"

namespace mclforge {

struct TrainConfig {
    Variant variant = Variant::dmcl;
    double temperature = 2.0;  // T of the soft targets
    double lambda = 0.5;       // distillation blend of the GD loss
    double beta = 0.75;        // CMCL uniform-loss weight
    double lr = 1e-3;
    double momentum = 0.9;
    int batch_size = 32;
    int steps = 0;
    std::uint64_t seed = 0;
    /// Soften the student at T in the distillation term (the algorithmic
    /// reading); when off the student keeps T = 1 (the loss-equation
    /// reading).
    bool student_temperature_on = true;
    /// Multiply the distillation term by T^2, the classical rescaling that
    /// keeps its gradient magnitude comparable to the cross-entropy term.
    bool t_squared_rescale = false;
    int eval_every = 500;  // steps between EvalReports
    int threads = 1;       // intra-step parallelism over modalities

    void validate() const;
};

/// One minibatch: per-modality input matrices plus labels.
struct Batch {
    std::vector<Tensor> inputs;  // inputs[m] is [n x dims[m]]
    std::vector<int> labels;

    int size() const { return static_cast<int>(labels.size()); }
};

Batch make_batch(const MultimodalDataset& dataset, const std::vector<int>& sample_indices);

/// Per-step training statistics. per_modality_mean_loss is the mean
/// cross-entropy at T=1 over the whole batch for each modality (comparable
/// across variants); winner_counts is the per-modality teacher-assignment
/// tally and always sums to the batch size.
struct StepOutcome {
    int step_index = 0;
    std::vector<double> per_modality_mean_loss;
    std::vector<int> winner_counts;
};

/// N x M selection-criterion matrix, computed without recording gradients.
/// For CMCL each entry adds beta * sum of the other modalities'
/// KL(uniform || prediction) to the cross-entropy; every other variant uses
/// plain cross-entropy at T=1.
std::vector<std::vector<double>> criterion_losses(const Ensemble& ensemble,
                                                  const Batch& batch, Variant variant,
                                                  double beta = 0.75);

/// Index of the row minimum; ties break to the lowest modality index.
int select_winner(const std::vector<double>& criterion_row);

/// Per-sample teacher indices. Deterministic argmin for every variant
/// except dmcl-random-teacher, which draws uniformly from the given stream.
/// Not defined for independent training.
std::vector<int> assign_teachers(const std::vector<std::vector<double>>& criterion,
                                 Variant variant, Rng& rng);

/// Everything decided before parameters move: teacher assignment, detached
/// teacher soft targets, and the diagnostic loss matrices.
struct StepPlan {
    std::vector<int> winners;                       // per sample
    std::vector<std::vector<double>> criterion;     // [n][m]
    std::vector<std::vector<double>> ce;            // [n][m], cross-entropy at T=1
    std::vector<std::vector<double>> teacher_soft;  // [n][C]; empty unless distilling
};

StepPlan plan_step(const Ensemble& ensemble, const Batch& batch,
                   const TrainConfig& config, Rng& rng);

/// Sum over networks of the step loss the plan induces (each network's mean
/// over its assigned samples), evaluated on current parameters without
/// recording gradients. Networks with an empty mask contribute nothing.
double step_objective(const Ensemble& ensemble, const Batch& batch,
                      const StepPlan& plan, const TrainConfig& config);

/// Execute the plan: per network, one backward pass and one SGD step on its
/// masked mean loss. Networks with an empty mask are left untouched
/// (parameters and velocity bit-identical).
StepOutcome apply_step(Ensemble& ensemble, const Batch& batch, const StepPlan& plan,
                       const TrainConfig& config);

StepOutcome train_step(Ensemble& ensemble, const Batch& batch,
                       const TrainConfig& config, Rng& rng);

struct TrainResult {
    std::vector<StepOutcome> outcomes;
    std::vector<EvalReport> reports;
};

/// Append-only CSV metrics log, one row per modality per step.
class MetricsWriter {
public:
    explicit MetricsWriter(std::ostream& out, Variant variant, std::uint64_t seed);
    void write_step(const StepOutcome& outcome);

private:
    std::ostream& out_;
    std::string variant_;
    std::uint64_t seed_;
};

inline constexpr const char* kMetricsHeader =
    "step,modality,mean_loss,winner_count,variant,seed";

/// Run config.steps minibatches over the train split (reshuffled each
/// epoch from the seeded stream), emitting one StepOutcome per step, CSV
/// metrics rows when a writer is given, and an EvalReport every
/// config.eval_every steps plus one at the end. Deterministic given the
/// seed. Reports carry the winner fraction of the window since the
/// previous report.
TrainResult train(Ensemble& ensemble, const MultimodalDataset& dataset,
                  const TrainConfig& config, MetricsWriter* metrics = nullptr);

}  // namespace mclforge
