#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mclforge/dataset.hpp"
#include "mclforge/network.hpp"

namespace mclforge {

/// Test-set accuracies of an ensemble. oracle_accuracy counts a sample
/// correct when at least one modality alone predicts it; sum_accuracy is
/// the accuracy of the averaged class distributions. winner_fraction is a
/// training-time statistic carried in by the training loop and absent on
/// standalone evaluations.
struct EvalReport {
    int step_index = 0;
    int num_test_samples = 0;
    std::vector<double> per_modality_accuracy;
    double sum_accuracy = 0.0;
    double oracle_accuracy = 0.0;
    std::map<std::vector<int>, double> subset_accuracies;
    std::optional<std::vector<double>> winner_fraction;
};

/// Mean of the modality class distributions (softmax at T=1) over the
/// available subset. Only the listed networks are read.
std::vector<double> predict_subset(const Ensemble& ensemble, const Sample& sample,
                                   const std::vector<int>& available);

/// Evaluate the ensemble on the dataset's test split. All singleton subsets
/// and the full subset are always evaluated, plus any extra subsets given.
/// Argmax ties resolve to the lowest class index.
EvalReport evaluate(const Ensemble& ensemble, const MultimodalDataset& dataset,
                    const std::vector<std::vector<int>>& extra_subsets = {});

/// Per-modality, per-k accuracy of a kNN classifier over penultimate-layer
/// features. Meant for freshly initialized (untrained) ensembles.
struct KnnTable {
    std::vector<int> k_values;
    std::vector<std::vector<double>> accuracy;  // [modality][k index]
};

/// Classify each test sample by majority vote among its k nearest train
/// features (Euclidean distance). Distance ties prefer the lower train
/// index; vote ties prefer the lowest class index.
KnnTable knn_probe(const Ensemble& ensemble, const MultimodalDataset& dataset,
                   const std::vector<int>& k_values);

/// Re-shape a training metrics CSV into per-modality loss and
/// winner-fraction columns keyed by step, optionally smoothing the loss
/// columns with a trailing mean (smooth_window 0 disables smoothing).
void export_curves(const std::string& metrics_log_path, const std::string& out_path,
                   int smooth_window = 0);

std::string report_to_text(const EvalReport& report);
std::string report_csv_header(int modality_count,
                              const std::vector<std::vector<int>>& subsets);
std::string report_to_csv_row(const EvalReport& report);

}  // namespace mclforge
