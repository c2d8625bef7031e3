#include "mclforge/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "mclforge/losses.hpp"

namespace mclforge {

namespace {

int argmax_lowest(const std::vector<double>& v) {
    int best = 0;
    for (int j = 1; j < static_cast<int>(v.size()); ++j) {
        if (v[static_cast<std::size_t>(j)] > v[static_cast<std::size_t>(best)]) best = j;
    }
    return best;
}

void check_subset(const std::vector<int>& subset, int modality_count) {
    if (subset.empty()) throw ContractError("modality subset must be nonempty");
    std::set<int> seen;
    for (int m : subset) {
        if (m < 0 || m >= modality_count) {
            throw ContractError("modality subset index out of range");
        }
        if (!seen.insert(m).second) {
            throw ContractError("modality subset has duplicate entries");
        }
    }
}

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

std::string subset_key(const std::vector<int>& subset, char sep = ',') {
    std::string key;
    for (std::size_t i = 0; i < subset.size(); ++i) {
        if (i) key += sep;
        key += std::to_string(subset[i]);
    }
    return key;
}

}  // namespace

std::vector<double> predict_subset(const Ensemble& ensemble, const Sample& sample,
                                   const std::vector<int>& available) {
    check_subset(available, ensemble.modality_count());
    std::vector<double> mean_probs(static_cast<std::size_t>(ensemble.num_classes), 0.0);
    for (int m : available) {
        const auto& net = ensemble.networks[static_cast<std::size_t>(m)];
        const auto& x = sample.features[static_cast<std::size_t>(m)];
        Tensor input = Tensor::from_values({1, static_cast<int>(x.size())},
                                           std::vector<double>(x.begin(), x.end()));
        Tensor logits = forward_nograd(net, input);
        const auto probs =
            softmax_t(std::vector<double>(logits.values().begin(), logits.values().end()), 1.0)
                .probs;
        for (std::size_t j = 0; j < probs.size(); ++j) mean_probs[j] += probs[j];
    }
    const double inv = 1.0 / static_cast<double>(available.size());
    for (double& p : mean_probs) p *= inv;
    return mean_probs;
}

EvalReport evaluate(const Ensemble& ensemble, const MultimodalDataset& dataset,
                    const std::vector<std::vector<int>>& extra_subsets) {
    if (dataset.test_indices.empty()) {
        throw ContractError("evaluate: test split is empty");
    }
    const int m_count = ensemble.modality_count();
    const int n = static_cast<int>(dataset.test_indices.size());

    // Requested subsets, always including every singleton and the full set.
    std::set<std::vector<int>> subsets;
    std::vector<int> full(static_cast<std::size_t>(m_count));
    std::iota(full.begin(), full.end(), 0);
    subsets.insert(full);
    for (int m = 0; m < m_count; ++m) subsets.insert({m});
    for (auto subset : extra_subsets) {
        check_subset(subset, m_count);
        std::sort(subset.begin(), subset.end());
        subsets.insert(std::move(subset));
    }

    // One batched forward per modality over the test split.
    const std::vector<int> labels = labels_of(dataset, dataset.test_indices);
    std::vector<std::vector<std::vector<double>>> probs(
        static_cast<std::size_t>(m_count));  // [m][sample][class]
    for (int m = 0; m < m_count; ++m) {
        Tensor logits = forward_nograd(ensemble.networks[static_cast<std::size_t>(m)],
                                       modality_matrix(dataset, dataset.test_indices, m));
        auto& per_sample = probs[static_cast<std::size_t>(m)];
        per_sample.resize(static_cast<std::size_t>(n));
        const auto lv = logits.values();
        const int c = logits.cols();
        for (int i = 0; i < n; ++i) {
            std::vector<double> row(lv.begin() + static_cast<std::ptrdiff_t>(i) * c,
                                    lv.begin() + static_cast<std::ptrdiff_t>(i + 1) * c);
            per_sample[static_cast<std::size_t>(i)] = softmax_t(row, 1.0).probs;
        }
    }

    EvalReport report;
    report.num_test_samples = n;
    report.per_modality_accuracy.assign(static_cast<std::size_t>(m_count), 0.0);

    for (const auto& subset : subsets) {
        int correct = 0;
        for (int i = 0; i < n; ++i) {
            std::vector<double> mean_probs(static_cast<std::size_t>(ensemble.num_classes), 0.0);
            for (int m : subset) {
                const auto& p = probs[static_cast<std::size_t>(m)][static_cast<std::size_t>(i)];
                for (std::size_t j = 0; j < p.size(); ++j) mean_probs[j] += p[j];
            }
            if (argmax_lowest(mean_probs) == labels[static_cast<std::size_t>(i)]) ++correct;
        }
        report.subset_accuracies[subset] = static_cast<double>(correct) / n;
    }
    for (int m = 0; m < m_count; ++m) {
        report.per_modality_accuracy[static_cast<std::size_t>(m)] =
            report.subset_accuracies.at({m});
    }
    report.sum_accuracy = report.subset_accuracies.at(full);

    int oracle_correct = 0;
    for (int i = 0; i < n; ++i) {
        for (int m = 0; m < m_count; ++m) {
            if (argmax_lowest(probs[static_cast<std::size_t>(m)][static_cast<std::size_t>(i)]) ==
                labels[static_cast<std::size_t>(i)]) {
                ++oracle_correct;
                break;
            }
        }
    }
    report.oracle_accuracy = static_cast<double>(oracle_correct) / n;

    // Oracle dominance holds by construction; assert it rather than assume.
    for (double acc : report.per_modality_accuracy) {
        if (report.oracle_accuracy < acc) {
            throw ContractError("evaluate: oracle accuracy fell below a singleton");
        }
    }
    return report;
}

KnnTable knn_probe(const Ensemble& ensemble, const MultimodalDataset& dataset,
                   const std::vector<int>& k_values) {
    const int train_n = static_cast<int>(dataset.train_indices.size());
    const int test_n = static_cast<int>(dataset.test_indices.size());
    if (train_n == 0 || test_n == 0) throw ContractError("knn_probe: empty split");
    for (int k : k_values) {
        if (k < 1 || k > train_n) {
            throw ConfigError("knn_probe: k must be in [1, train split size]");
        }
    }

    const std::vector<int> train_labels = labels_of(dataset, dataset.train_indices);
    const std::vector<int> test_labels = labels_of(dataset, dataset.test_indices);

    KnnTable table;
    table.k_values = k_values;
    table.accuracy.assign(static_cast<std::size_t>(ensemble.modality_count()),
                          std::vector<double>(k_values.size(), 0.0));

    for (int m = 0; m < ensemble.modality_count(); ++m) {
        const auto& net = ensemble.networks[static_cast<std::size_t>(m)];
        ComputationRecord rec(/*recording=*/false);
        Tensor train_feat =
            penultimate_features(net, rec, modality_matrix(dataset, dataset.train_indices, m));
        Tensor test_feat =
            penultimate_features(net, rec, modality_matrix(dataset, dataset.test_indices, m));
        const int width = train_feat.cols();
        const auto trv = train_feat.values();
        const auto tev = test_feat.values();

        std::vector<std::vector<int>> votes(
            k_values.size(), std::vector<int>(static_cast<std::size_t>(dataset.class_count), 0));
        std::vector<int> correct(k_values.size(), 0);
        std::vector<std::pair<double, int>> dist(static_cast<std::size_t>(train_n));

        for (int i = 0; i < test_n; ++i) {
            for (int t = 0; t < train_n; ++t) {
                double acc = 0.0;
                for (int j = 0; j < width; ++j) {
                    const double diff = tev[static_cast<std::size_t>(i) * width + j] -
                                        trv[static_cast<std::size_t>(t) * width + j];
                    acc += diff * diff;
                }
                dist[static_cast<std::size_t>(t)] = {acc, t};
            }
            // Ascending by distance, lower train index on ties.
            std::sort(dist.begin(), dist.end());
            for (std::size_t ki = 0; ki < k_values.size(); ++ki) {
                auto& vote = votes[ki];
                std::fill(vote.begin(), vote.end(), 0);
                for (int r = 0; r < k_values[ki]; ++r) {
                    ++vote[static_cast<std::size_t>(
                        train_labels[static_cast<std::size_t>(dist[static_cast<std::size_t>(r)].second)])];
                }
                int best = 0;
                for (int c = 1; c < dataset.class_count; ++c) {
                    if (vote[static_cast<std::size_t>(c)] > vote[static_cast<std::size_t>(best)]) {
                        best = c;
                    }
                }
                if (best == test_labels[static_cast<std::size_t>(i)]) {
                    ++correct[ki];
                }
            }
        }
        for (std::size_t ki = 0; ki < k_values.size(); ++ki) {
            table.accuracy[static_cast<std::size_t>(m)][ki] =
                static_cast<double>(correct[ki]) / test_n;
        }
    }
    return table;
}

void export_curves(const std::string& metrics_log_path, const std::string& out_path,
                   int smooth_window) {
    std::ifstream in(metrics_log_path);
    if (!in) throw IoError("cannot open metrics log: " + metrics_log_path);
    if (smooth_window < 0) throw ConfigError("export_curves: window must be >= 0");

    std::string line;
    std::size_t line_no = 0;
    if (!std::getline(in, line)) {
        throw ParseError("metrics log is missing its header", 1);
    }
    ++line_no;
    if (line != "step,modality,mean_loss,winner_count,variant,seed") {
        throw ParseError("unexpected metrics log header", line_no);
    }

    struct Row {
        int step;
        int modality;
        double mean_loss;
        int winner_count;
    };
    std::vector<Row> rows;
    int max_modality = -1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string field;
        std::vector<std::string> fields;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (fields.size() != 6) {
            throw ParseError("expected 6 comma-separated fields", line_no);
        }
        try {
            Row r{std::stoi(fields[0]), std::stoi(fields[1]), std::stod(fields[2]),
                  std::stoi(fields[3])};
            rows.push_back(r);
            max_modality = std::max(max_modality, r.modality);
        } catch (const std::exception&) {
            throw ParseError("unparseable numeric field", line_no);
        }
    }

    // Group rows by step, in file order.
    std::vector<int> steps;
    std::vector<std::vector<double>> loss_by_step;
    std::vector<std::vector<double>> frac_by_step;
    const int m_count = max_modality + 1;
    for (const auto& r : rows) {
        if (steps.empty() || steps.back() != r.step) {
            steps.push_back(r.step);
            loss_by_step.emplace_back(static_cast<std::size_t>(m_count), 0.0);
            frac_by_step.emplace_back(static_cast<std::size_t>(m_count), 0.0);
        }
        loss_by_step.back()[static_cast<std::size_t>(r.modality)] = r.mean_loss;
        frac_by_step.back()[static_cast<std::size_t>(r.modality)] =
            static_cast<double>(r.winner_count);
    }
    for (auto& fracs : frac_by_step) {
        const double total = std::accumulate(fracs.begin(), fracs.end(), 0.0);
        if (total > 0.0) {
            for (double& f : fracs) f /= total;
        }
    }

    // Trailing-mean smoothing of the loss columns.
    if (smooth_window > 1) {
        std::vector<std::vector<double>> smoothed = loss_by_step;
        for (int m = 0; m < m_count; ++m) {
            double acc = 0.0;
            for (std::size_t t = 0; t < loss_by_step.size(); ++t) {
                acc += loss_by_step[t][static_cast<std::size_t>(m)];
                if (t >= static_cast<std::size_t>(smooth_window)) {
                    acc -= loss_by_step[t - static_cast<std::size_t>(smooth_window)]
                                       [static_cast<std::size_t>(m)];
                }
                const double denom =
                    static_cast<double>(std::min<std::size_t>(t + 1, static_cast<std::size_t>(smooth_window)));
                smoothed[t][static_cast<std::size_t>(m)] = acc / denom;
            }
        }
        loss_by_step = std::move(smoothed);
    }

    std::ofstream out(out_path, std::ios::trunc);
    if (!out) throw IoError("cannot open curve output: " + out_path);
    out << "step";
    for (int m = 0; m < m_count; ++m) out << ",loss_m" << m;
    for (int m = 0; m < m_count; ++m) out << ",winner_frac_m" << m;
    out << "\n";
    char buf[64];
    for (std::size_t t = 0; t < steps.size(); ++t) {
        out << steps[t];
        for (int m = 0; m < m_count; ++m) {
            std::snprintf(buf, sizeof(buf), "%.9g", loss_by_step[t][static_cast<std::size_t>(m)]);
            out << ',' << buf;
        }
        for (int m = 0; m < m_count; ++m) {
            std::snprintf(buf, sizeof(buf), "%.9g", frac_by_step[t][static_cast<std::size_t>(m)]);
            out << ',' << buf;
        }
        out << "\n";
    }
    if (!out) throw IoError("write failed: " + out_path);
}

std::string report_to_text(const EvalReport& report) {
    std::string text;
    text += "step=" + std::to_string(report.step_index) + "\n";
    text += "num_test_samples=" + std::to_string(report.num_test_samples) + "\n";
    for (std::size_t m = 0; m < report.per_modality_accuracy.size(); ++m) {
        text += "per_modality_accuracy." + std::to_string(m) + "=" +
                format_double(report.per_modality_accuracy[m]) + "\n";
    }
    text += "sum_accuracy=" + format_double(report.sum_accuracy) + "\n";
    text += "oracle_accuracy=" + format_double(report.oracle_accuracy) + "\n";
    for (const auto& [subset, acc] : report.subset_accuracies) {
        text += "subset_accuracy." + subset_key(subset) + "=" + format_double(acc) + "\n";
    }
    if (report.winner_fraction) {
        for (std::size_t m = 0; m < report.winner_fraction->size(); ++m) {
            text += "winner_fraction." + std::to_string(m) + "=" +
                    format_double((*report.winner_fraction)[m]) + "\n";
        }
    }
    return text;
}

std::string report_csv_header(int modality_count,
                              const std::vector<std::vector<int>>& subsets) {
    std::string header = "step,num_test_samples";
    for (int m = 0; m < modality_count; ++m) header += ",acc_m" + std::to_string(m);
    header += ",sum_accuracy,oracle_accuracy";
    for (int m = 0; m < modality_count; ++m) header += ",winner_frac_m" + std::to_string(m);
    // '+' keeps multi-modality subset names out of the comma namespace.
    for (const auto& subset : subsets) header += ",subset_" + subset_key(subset, '+');
    return header;
}

std::string report_to_csv_row(const EvalReport& report) {
    std::string row = std::to_string(report.step_index) + "," +
                      std::to_string(report.num_test_samples);
    for (double acc : report.per_modality_accuracy) row += "," + format_double(acc);
    row += "," + format_double(report.sum_accuracy);
    row += "," + format_double(report.oracle_accuracy);
    const std::size_t m_count = report.per_modality_accuracy.size();
    for (std::size_t m = 0; m < m_count; ++m) {
        row += "," + (report.winner_fraction
                          ? format_double((*report.winner_fraction)[m])
                          : std::string("nan"));
    }
    for (const auto& [subset, acc] : report.subset_accuracies) {
        (void)subset;
        row += "," + format_double(acc);
    }
    return row;
}

}  // namespace mclforge
