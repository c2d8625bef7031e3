#include "mclforge/engine.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <numeric>
#include <ostream>
#include <thread>

#include "mclforge/losses.hpp"

namespace mclforge {

void TrainConfig::validate() const {
    if (!(temperature > 0.0)) throw ConfigError("config: T must be positive");
    if (lambda < 0.0 || lambda > 1.0) throw ConfigError("config: lambda must be in [0, 1]");
    if (beta < 0.0) throw ConfigError("config: beta must be >= 0");
    if (!(lr >= 0.0)) throw ConfigError("config: lr must be >= 0");
    if (momentum < 0.0 || momentum >= 1.0) {
        throw ConfigError("config: momentum must be in [0, 1)");
    }
    if (batch_size < 1) throw ConfigError("config: batch_size must be >= 1");
    if (steps < 1) throw ConfigError("config: steps must be >= 1");
    if (eval_every < 1) throw ConfigError("config: eval_every must be >= 1");
    if (threads < 1) throw ConfigError("config: threads must be >= 1");
}

Batch make_batch(const MultimodalDataset& dataset, const std::vector<int>& sample_indices) {
    Batch batch;
    batch.labels = labels_of(dataset, sample_indices);
    for (int m = 0; m < dataset.modality_count; ++m) {
        batch.inputs.push_back(modality_matrix(dataset, sample_indices, m));
    }
    return batch;
}

namespace {

void check_batch(const Ensemble& ensemble, const Batch& batch) {
    if (batch.size() == 0) throw ContractError("batch is empty");
    if (static_cast<int>(batch.inputs.size()) != ensemble.modality_count()) {
        throw ShapeError("batch modality count does not match ensemble");
    }
    for (int m = 0; m < ensemble.modality_count(); ++m) {
        const auto& x = batch.inputs[static_cast<std::size_t>(m)];
        if (x.rows() != batch.size() ||
            x.cols() != ensemble.networks[static_cast<std::size_t>(m)].input_dim()) {
            throw ShapeError("batch input shape does not match network");
        }
    }
    for (int y : batch.labels) {
        if (y < 0 || y >= ensemble.num_classes) {
            throw ContractError("batch label out of range");
        }
    }
}

// Run each index in [0, count) through fn, optionally on worker threads.
// Indices are disjoint units of work; the join is deterministic.
void for_each_index(int count, int threads, const std::function<void(int)>& fn) {
    if (threads <= 1 || count <= 1) {
        for (int i = 0; i < count; ++i) fn(i);
        return;
    }
    const int workers = std::min(threads, count);
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&, w]() {
            try {
                for (int i = w; i < count; i += workers) fn(i);
            } catch (...) {
                errors[static_cast<std::size_t>(w)] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

struct ForwardPass {
    std::vector<std::vector<double>> ce;   // [n][m]
    std::vector<std::vector<double>> klu;  // [n][m]
    std::vector<Tensor> logits;            // per modality, no grad
    std::vector<std::vector<std::vector<double>>> probs;  // [m][i][class]
};

ForwardPass run_forward_nograd(const Ensemble& ensemble, const Batch& batch, int threads) {
    check_batch(ensemble, batch);
    const int n = batch.size();
    const int m_count = ensemble.modality_count();
    ForwardPass fp;
    fp.ce.assign(static_cast<std::size_t>(n), std::vector<double>(static_cast<std::size_t>(m_count), 0.0));
    fp.klu = fp.ce;
    fp.logits.resize(static_cast<std::size_t>(m_count));
    fp.probs.resize(static_cast<std::size_t>(m_count));

    for_each_index(m_count, threads, [&](int m) {
        Tensor logits = forward_nograd(ensemble.networks[static_cast<std::size_t>(m)],
                                       batch.inputs[static_cast<std::size_t>(m)]);
        fp.logits[static_cast<std::size_t>(m)] = logits;
        auto& probs_m = fp.probs[static_cast<std::size_t>(m)];
        probs_m.resize(static_cast<std::size_t>(n));
        const auto lv = logits.values();
        const int c = logits.cols();
        for (int i = 0; i < n; ++i) {
            std::vector<double> row(lv.begin() + static_cast<std::ptrdiff_t>(i) * c,
                                    lv.begin() + static_cast<std::ptrdiff_t>(i + 1) * c);
            auto probs = softmax_t(row, 1.0).probs;
            fp.ce[static_cast<std::size_t>(i)][static_cast<std::size_t>(m)] =
                cross_entropy(probs, batch.labels[static_cast<std::size_t>(i)]);
            fp.klu[static_cast<std::size_t>(i)][static_cast<std::size_t>(m)] = kl_to_uniform(probs);
            probs_m[static_cast<std::size_t>(i)] = std::move(probs);
        }
    });
    return fp;
}

std::vector<std::vector<double>> criterion_from(const ForwardPass& fp, Variant variant,
                                                double beta) {
    auto criterion = fp.ce;
    if (variant == Variant::cmcl) {
        const std::size_t m_count = criterion.front().size();
        for (std::size_t i = 0; i < criterion.size(); ++i) {
            const double klu_total =
                std::accumulate(fp.klu[i].begin(), fp.klu[i].end(), 0.0);
            for (std::size_t m = 0; m < m_count; ++m) {
                criterion[i][m] += beta * (klu_total - fp.klu[i][m]);
            }
        }
    }
    return criterion;
}

bool distills(Variant v) {
    return v == Variant::dmcl || v == Variant::dmcl_random_teacher;
}

// Per-network masked loss terms for one step.
struct NetworkAssignment {
    std::vector<int> rows;           // batch rows this network forwards
    std::vector<int> labels;         // labels of those rows
    std::vector<double> ce_weight;   // per row
    std::vector<double> soft_weight; // per row (distillation term)
    std::vector<double> klu_weight;  // per row (CMCL uniform term)

    bool has(const std::vector<double>& w) const {
        return std::any_of(w.begin(), w.end(), [](double x) { return x != 0.0; });
    }
    /// A network whose mask carries no weight takes no step at all.
    bool contributes() const {
        return !rows.empty() && (has(ce_weight) || has(soft_weight) || has(klu_weight));
    }
};

// Weights realize per-role means: the teacher role averages over the samples
// the network won, the student role over the samples it lost. Normalizing
// per role (not over the whole batch) keeps each component's gradient
// magnitude independent of the network's win rate.
NetworkAssignment assignment_for(int m, const Batch& batch, const StepPlan& plan,
                                 const TrainConfig& config) {
    const int n = batch.size();
    NetworkAssignment a;
    int won_count = 0;
    for (int i = 0; i < n; ++i) {
        if (plan.winners[static_cast<std::size_t>(i)] == m) ++won_count;
    }
    const int lost_count = n - won_count;
    const double inv_won = won_count > 0 ? 1.0 / won_count : 0.0;
    const double inv_lost = lost_count > 0 ? 1.0 / lost_count : 0.0;

    switch (config.variant) {
        case Variant::independent: {
            const double inv_n = 1.0 / static_cast<double>(n);
            for (int i = 0; i < n; ++i) {
                a.rows.push_back(i);
                a.ce_weight.push_back(inv_n);
                a.soft_weight.push_back(0.0);
                a.klu_weight.push_back(0.0);
            }
            break;
        }
        case Variant::smcl: {
            // Losers are not updated at all.
            for (int i = 0; i < n; ++i) {
                if (plan.winners[static_cast<std::size_t>(i)] != m) continue;
                a.rows.push_back(i);
                a.ce_weight.push_back(inv_won);
                a.soft_weight.push_back(0.0);
                a.klu_weight.push_back(0.0);
            }
            break;
        }
        case Variant::cmcl: {
            for (int i = 0; i < n; ++i) {
                const bool won = plan.winners[static_cast<std::size_t>(i)] == m;
                a.rows.push_back(i);
                a.ce_weight.push_back(won ? inv_won : 0.0);
                a.soft_weight.push_back(0.0);
                a.klu_weight.push_back(won ? 0.0 : config.beta * inv_lost);
            }
            break;
        }
        case Variant::dmcl:
        case Variant::dmcl_random_teacher: {
            const double distill_scale =
                config.t_squared_rescale ? config.temperature * config.temperature : 1.0;
            for (int i = 0; i < n; ++i) {
                const bool won = plan.winners[static_cast<std::size_t>(i)] == m;
                a.rows.push_back(i);
                a.ce_weight.push_back(won ? inv_won : (1.0 - config.lambda) * inv_lost);
                a.soft_weight.push_back(won ? 0.0
                                            : config.lambda * distill_scale * inv_lost);
                a.klu_weight.push_back(0.0);
            }
            break;
        }
    }
    for (int i : a.rows) a.labels.push_back(batch.labels[static_cast<std::size_t>(i)]);
    return a;
}

Tensor select_rows(const Tensor& x, const std::vector<int>& rows) {
    const int c = x.cols();
    if (static_cast<int>(rows.size()) == x.rows()) {
        bool identity = true;
        for (int i = 0; i < static_cast<int>(rows.size()); ++i) {
            if (rows[static_cast<std::size_t>(i)] != i) {
                identity = false;
                break;
            }
        }
        if (identity) return x;
    }
    std::vector<double> values;
    values.reserve(rows.size() * static_cast<std::size_t>(c));
    const auto xv = x.values();
    for (int i : rows) {
        values.insert(values.end(), xv.begin() + static_cast<std::ptrdiff_t>(i) * c,
                      xv.begin() + static_cast<std::ptrdiff_t>(i + 1) * c);
    }
    return Tensor::from_values({static_cast<int>(rows.size()), c}, std::move(values));
}

// Build the network's masked mean step loss against the given record. The
// teacher distributions enter as detached constants; selection happened on
// pre-update parameters, so no gradient leaks through the assignment.
Tensor build_step_loss(ComputationRecord& rec, const ModalityNetwork& net,
                       const Batch& batch, const StepPlan& plan,
                       const TrainConfig& config, const NetworkAssignment& a) {
    Tensor x = select_rows(batch.inputs[static_cast<std::size_t>(net.modality_id)], a.rows);
    Tensor logits = forward(net, rec, x);
    Tensor log_probs_t1;

    Tensor loss;
    if (a.has(a.ce_weight)) {
        log_probs_t1 = log_softmax_node(rec, logits, 1.0);
        loss = rec.weighted_sum(cross_entropy_node(rec, log_probs_t1, a.labels), a.ce_weight);
    }
    if (a.has(a.soft_weight)) {
        const double student_t = config.student_temperature_on ? config.temperature : 1.0;
        std::vector<double> teacher_values;
        teacher_values.reserve(a.rows.size() * static_cast<std::size_t>(net.output_dim()));
        for (int i : a.rows) {
            const auto& soft = plan.teacher_soft[static_cast<std::size_t>(i)];
            teacher_values.insert(teacher_values.end(), soft.begin(), soft.end());
        }
        Tensor teacher = Tensor::from_values(
            {static_cast<int>(a.rows.size()), net.output_dim()}, std::move(teacher_values));
        Tensor log_probs = student_t == 1.0 && log_probs_t1.valid()
                               ? log_probs_t1
                               : log_softmax_node(rec, logits, student_t);
        Tensor term = rec.weighted_sum(soft_cross_entropy_node(rec, log_probs, teacher),
                                       a.soft_weight);
        loss = loss.valid() ? rec.add(loss, term) : term;
    }
    if (a.has(a.klu_weight)) {
        if (!log_probs_t1.valid()) log_probs_t1 = log_softmax_node(rec, logits, 1.0);
        Tensor term =
            rec.weighted_sum(kl_to_uniform_node(rec, log_probs_t1), a.klu_weight);
        loss = loss.valid() ? rec.add(loss, term) : term;
    }
    if (!loss.valid()) throw ContractError("step loss has no terms");
    return loss;
}

}  // namespace

std::vector<std::vector<double>> criterion_losses(const Ensemble& ensemble,
                                                  const Batch& batch, Variant variant,
                                                  double beta) {
    return criterion_from(run_forward_nograd(ensemble, batch, 1), variant, beta);
}

int select_winner(const std::vector<double>& criterion_row) {
    if (criterion_row.empty()) throw ContractError("select_winner: empty row");
    for (double v : criterion_row) {
        if (std::isnan(v)) throw ContractError("select_winner: NaN criterion entry");
    }
    int best = 0;
    for (int m = 1; m < static_cast<int>(criterion_row.size()); ++m) {
        if (criterion_row[static_cast<std::size_t>(m)] < criterion_row[static_cast<std::size_t>(best)]) {
            best = m;
        }
    }
    return best;
}

std::vector<int> assign_teachers(const std::vector<std::vector<double>>& criterion,
                                 Variant variant, Rng& rng) {
    if (variant == Variant::independent) {
        throw ContractError("assign_teachers: independent training has no teachers");
    }
    std::vector<int> winners;
    winners.reserve(criterion.size());
    for (const auto& row : criterion) {
        if (variant == Variant::dmcl_random_teacher) {
            winners.push_back(rng.uniform_int(static_cast<int>(row.size())));
        } else {
            winners.push_back(select_winner(row));
        }
    }
    return winners;
}

StepPlan plan_step(const Ensemble& ensemble, const Batch& batch,
                   const TrainConfig& config, Rng& rng) {
    config.validate();
    ForwardPass fp = run_forward_nograd(ensemble, batch, config.threads);
    StepPlan plan;
    plan.ce = fp.ce;
    plan.criterion = criterion_from(fp, config.variant, config.beta);
    if (config.variant == Variant::independent) {
        // Selection is purely diagnostic here; no update depends on it.
        plan.winners.reserve(plan.criterion.size());
        for (const auto& row : plan.criterion) plan.winners.push_back(select_winner(row));
    } else {
        plan.winners = assign_teachers(plan.criterion, config.variant, rng);
    }
    if (distills(config.variant)) {
        const int n = batch.size();
        plan.teacher_soft.resize(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            const int teacher = plan.winners[static_cast<std::size_t>(i)];
            const Tensor& logits = fp.logits[static_cast<std::size_t>(teacher)];
            const auto lv = logits.values();
            const int c = logits.cols();
            std::vector<double> row(lv.begin() + static_cast<std::ptrdiff_t>(i) * c,
                                    lv.begin() + static_cast<std::ptrdiff_t>(i + 1) * c);
            plan.teacher_soft[static_cast<std::size_t>(i)] =
                softmax_t(row, config.temperature).probs;
        }
    }
    return plan;
}

double step_objective(const Ensemble& ensemble, const Batch& batch,
                      const StepPlan& plan, const TrainConfig& config) {
    double total = 0.0;
    for (int m = 0; m < ensemble.modality_count(); ++m) {
        const NetworkAssignment a = assignment_for(m, batch, plan, config);
        if (!a.contributes()) continue;
        ComputationRecord rec(/*recording=*/false);
        total += build_step_loss(rec, ensemble.networks[static_cast<std::size_t>(m)], batch,
                                 plan, config, a)
                     .item();
    }
    return total;
}

StepOutcome apply_step(Ensemble& ensemble, const Batch& batch, const StepPlan& plan,
                       const TrainConfig& config) {
    const int n = batch.size();
    const int m_count = ensemble.modality_count();

    for_each_index(m_count, config.threads, [&](int m) {
        auto& net = ensemble.networks[static_cast<std::size_t>(m)];
        const NetworkAssignment a = assignment_for(m, batch, plan, config);
        if (!a.contributes()) return;  // no optimizer step at all
        ComputationRecord rec;
        Tensor loss = build_step_loss(rec, net, batch, plan, config, a);
        rec.backward(loss);
        sgd_momentum_step(net, config.lr, config.momentum);
        zero_grad(net);
    });

    StepOutcome outcome;
    outcome.winner_counts.assign(static_cast<std::size_t>(m_count), 0);
    for (int w : plan.winners) ++outcome.winner_counts[static_cast<std::size_t>(w)];
    outcome.per_modality_mean_loss.assign(static_cast<std::size_t>(m_count), 0.0);
    for (int i = 0; i < n; ++i) {
        for (int m = 0; m < m_count; ++m) {
            outcome.per_modality_mean_loss[static_cast<std::size_t>(m)] +=
                plan.ce[static_cast<std::size_t>(i)][static_cast<std::size_t>(m)];
        }
    }
    for (double& v : outcome.per_modality_mean_loss) v /= static_cast<double>(n);
    return outcome;
}

StepOutcome train_step(Ensemble& ensemble, const Batch& batch,
                       const TrainConfig& config, Rng& rng) {
    const StepPlan plan = plan_step(ensemble, batch, config, rng);
    return apply_step(ensemble, batch, plan, config);
}

MetricsWriter::MetricsWriter(std::ostream& out, Variant variant, std::uint64_t seed)
    : out_(out), variant_(variant_name(variant)), seed_(seed) {
    out_ << kMetricsHeader << "\n";
}

void MetricsWriter::write_step(const StepOutcome& outcome) {
    char buf[64];
    for (std::size_t m = 0; m < outcome.per_modality_mean_loss.size(); ++m) {
        std::snprintf(buf, sizeof(buf), "%.17g", outcome.per_modality_mean_loss[m]);
        out_ << outcome.step_index << ',' << m << ',' << buf << ','
             << outcome.winner_counts[m] << ',' << variant_ << ',' << seed_ << "\n";
    }
}

TrainResult train(Ensemble& ensemble, const MultimodalDataset& dataset,
                  const TrainConfig& config, MetricsWriter* metrics) {
    config.validate();
    if (dataset.train_indices.empty()) throw ContractError("train: empty train split");

    Rng root(mix_seed(config.seed ^ 0x6d636c666f726765ULL));
    Rng shuffle_rng = root.fork(1);
    Rng teacher_rng = root.fork(2);

    const int train_n = static_cast<int>(dataset.train_indices.size());
    const int batch_n = std::min(config.batch_size, train_n);
    std::vector<int> order = dataset.train_indices;
    int pos = train_n;  // trigger a shuffle on the first step

    TrainResult result;
    std::vector<long long> window_counts(static_cast<std::size_t>(ensemble.modality_count()), 0);
    long long window_total = 0;

    for (int step = 1; step <= config.steps; ++step) {
        if (pos + batch_n > train_n) {
            shuffle_rng.shuffle(order);
            pos = 0;
        }
        const std::vector<int> batch_indices(order.begin() + pos, order.begin() + pos + batch_n);
        pos += batch_n;

        Batch batch = make_batch(dataset, batch_indices);
        StepOutcome outcome = train_step(ensemble, batch, config, teacher_rng);
        outcome.step_index = step;
        for (std::size_t m = 0; m < window_counts.size(); ++m) {
            window_counts[m] += outcome.winner_counts[m];
            window_total += outcome.winner_counts[m];
        }
        if (metrics) metrics->write_step(outcome);
        result.outcomes.push_back(std::move(outcome));

        if (step % config.eval_every == 0 || step == config.steps) {
            EvalReport report = evaluate(ensemble, dataset);
            report.step_index = step;
            std::vector<double> fraction(window_counts.size(), 0.0);
            for (std::size_t m = 0; m < window_counts.size(); ++m) {
                fraction[m] = window_total > 0
                                  ? static_cast<double>(window_counts[m]) / window_total
                                  : 0.0;
            }
            report.winner_fraction = std::move(fraction);
            result.reports.push_back(std::move(report));
            std::fill(window_counts.begin(), window_counts.end(), 0);
            window_total = 0;
        }
    }
    return result;
}

}  // namespace mclforge
