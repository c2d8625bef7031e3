#include <doctest.h>

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "mclforge/eval.hpp"
#include "mclforge/losses.hpp"
#include "mclforge/rng.hpp"

using namespace mclforge;

namespace {

std::string temp_path(const char* name) {
    return std::string("/tmp/mclforge_test_") + name + "_" + std::to_string(::getpid());
}

// Single-layer network over a one-feature input that always emits the given
// logits; with x = [1] and zero weights the bias is the logit vector, so the
// softmax output is exactly the distribution exp(bias)/sum.
ModalityNetwork constant_net(int modality_id, const std::vector<double>& logits) {
    ModalityNetwork net = init_network(modality_id, {1, static_cast<int>(logits.size())}, 0);
    for (double& v : net.weights[0].values_mut()) v = 0.0;
    std::copy(logits.begin(), logits.end(), net.biases[0].values_mut().begin());
    return net;
}

std::vector<double> log_of(const std::vector<double>& probs) {
    std::vector<double> out(probs.size());
    for (std::size_t i = 0; i < probs.size(); ++i) out[i] = std::log(probs[i]);
    return out;
}

// Dataset shell whose samples all carry the constant feature [1] for every
// modality; labels are given per sample. Pairs with constant_net.
MultimodalDataset constant_dataset(int m_count, int c_count,
                                   const std::vector<int>& test_labels) {
    MultimodalDataset ds;
    ds.modality_count = m_count;
    ds.class_count = c_count;
    ds.dims.assign(static_cast<std::size_t>(m_count), 1);
    Sample train;
    train.label = 0;
    train.features.assign(static_cast<std::size_t>(m_count), {1.0});
    ds.samples.push_back(train);
    ds.train_indices.push_back(0);
    for (std::size_t i = 0; i < test_labels.size(); ++i) {
        Sample s;
        s.label = test_labels[i];
        s.features.assign(static_cast<std::size_t>(m_count), {1.0});
        ds.samples.push_back(s);
        ds.test_indices.push_back(static_cast<int>(i) + 1);
    }
    return ds;
}

MultimodalDataset small_preset(std::uint64_t seed) {
    SeparabilityProfile profile;
    profile.noise_sigma = 0.2;
    profile.d = {{0.9, 0.9, 0.9, 0.9}, {0.4, 0.4, 0.4, 0.4}};
    return generate(2, 4, {8, 8}, 25, profile, seed);
}

}  // namespace

TEST_SUITE("eval") {

TEST_CASE("predict_subset of a singleton is that network's softmax") {
    Ensemble ens;
    ens.num_classes = 3;
    ens.networks.push_back(constant_net(0, {2.0, 0.0, -1.0}));
    ens.networks.push_back(constant_net(1, {0.0, 5.0, 0.0}));

    Sample s;
    s.features = {{1.0}, {1.0}};
    const auto probs = predict_subset(ens, s, {0});
    const auto expected = softmax_t({2.0, 0.0, -1.0}, 1.0).probs;
    for (int j = 0; j < 3; ++j) {
        CHECK(probs[static_cast<std::size_t>(j)] ==
              doctest::Approx(expected[static_cast<std::size_t>(j)]).epsilon(1e-12));
    }
}

TEST_CASE("predict_subset averages two opposing near-one-hot networks") {
    Ensemble ens;
    ens.num_classes = 2;
    ens.networks.push_back(constant_net(0, {60.0, 0.0}));  // probs ~ [1, 0]
    ens.networks.push_back(constant_net(1, {0.0, 60.0}));  // probs ~ [0, 1]
    Sample s;
    s.features = {{1.0}, {1.0}};
    const auto probs = predict_subset(ens, s, {0, 1});
    CHECK(probs[0] == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(probs[1] == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("predict_subset of three hand-set distributions is their mean") {
    // Bias logits of log(p) make each network output exactly p.
    const std::vector<std::vector<double>> dists = {
        {0.5, 0.3, 0.2}, {0.1, 0.6, 0.3}, {0.25, 0.25, 0.5}};
    Ensemble ens;
    ens.num_classes = 3;
    for (int m = 0; m < 3; ++m) {
        ens.networks.push_back(constant_net(m, log_of(dists[static_cast<std::size_t>(m)])));
    }
    Sample s;
    s.features = {{1.0}, {1.0}, {1.0}};
    const auto probs = predict_subset(ens, s, {0, 1, 2});
    for (int j = 0; j < 3; ++j) {
        const double expected = (dists[0][static_cast<std::size_t>(j)] +
                                 dists[1][static_cast<std::size_t>(j)] +
                                 dists[2][static_cast<std::size_t>(j)]) /
                                3.0;
        CHECK(probs[static_cast<std::size_t>(j)] ==
              doctest::Approx(expected).epsilon(1e-9));
    }
    double total = 0.0;
    for (double p : probs) total += p;
    CHECK(std::abs(total - 1.0) < 1e-9);
}

TEST_CASE("predict_subset rejects bad subsets") {
    Ensemble ens;
    ens.num_classes = 2;
    ens.networks.push_back(constant_net(0, {1.0, 0.0}));
    Sample s;
    s.features = {{1.0}};
    CHECK_THROWS_AS(predict_subset(ens, s, {}), ContractError);
    CHECK_THROWS_AS(predict_subset(ens, s, {1}), ContractError);
    CHECK_THROWS_AS(predict_subset(ens, s, {0, 0}), ContractError);
}

TEST_CASE("a single-modality report has equal singleton, sum, and oracle accuracy") {
    const auto ds = small_preset(1);
    MultimodalDataset single = ds;
    single.modality_count = 1;
    single.dims = {ds.dims[0]};
    for (auto& s : single.samples) s.features.resize(1);
    Ensemble ens = make_ensemble(single.dims, {8}, 4, Variant::independent, 3);
    const EvalReport report = evaluate(ens, single);
    CHECK(report.per_modality_accuracy[0] == report.sum_accuracy);
    CHECK(report.per_modality_accuracy[0] == report.oracle_accuracy);
}

TEST_CASE("oracle hits 1.0 when the modalities split the samples") {
    // Modality A is right on label-0 samples only, modality B on label-1
    // samples only; each singleton scores 0.5 while the oracle scores 1.
    Ensemble ens;
    ens.num_classes = 2;
    ens.networks.push_back(constant_net(0, {3.0, 0.0}));  // always predicts 0
    ens.networks.push_back(constant_net(1, {0.0, 3.0}));  // always predicts 1
    const auto ds = constant_dataset(2, 2, {0, 1});
    const EvalReport report = evaluate(ens, ds);
    CHECK(report.per_modality_accuracy[0] == doctest::Approx(0.5));
    CHECK(report.per_modality_accuracy[1] == doctest::Approx(0.5));
    CHECK(report.oracle_accuracy == doctest::Approx(1.0));
}

TEST_CASE("the averaged prediction can beat the oracle") {
    // Neither network ranks the true class first, yet the average does.
    // This is the counterexample to oracle >= sum.
    Ensemble ens;
    ens.num_classes = 3;
    ens.networks.push_back(constant_net(0, log_of({0.4, 0.45, 0.15})));
    ens.networks.push_back(constant_net(1, log_of({0.4, 0.1, 0.5})));
    const auto ds = constant_dataset(2, 3, {0});
    const EvalReport report = evaluate(ens, ds);
    CHECK(report.oracle_accuracy == doctest::Approx(0.0));
    CHECK(report.sum_accuracy == doctest::Approx(1.0));
    CHECK(report.oracle_accuracy < report.sum_accuracy);
}

TEST_CASE("oracle dominance holds on randomly trained ensembles") {
    const auto ds = small_preset(2);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        Ensemble ens = make_ensemble(ds.dims, {8}, 4, Variant::independent, seed);
        const EvalReport report = evaluate(ens, ds);
        for (double acc : report.per_modality_accuracy) {
            CHECK(report.oracle_accuracy >= acc);
        }
        CHECK(report.subset_accuracies.count({0}) == 1);
        CHECK(report.subset_accuracies.count({1}) == 1);
        CHECK(report.subset_accuracies.count({0, 1}) == 1);
    }
}

TEST_CASE("evaluate honors extra subsets and rejects bad ones") {
    const auto ds = small_preset(3);
    Ensemble ens = make_ensemble(ds.dims, {8}, 4, Variant::independent, 4);
    const EvalReport report = evaluate(ens, ds, {{1, 0}});
    CHECK(report.subset_accuracies.size() == 3);  // {0}, {1}, {0,1} deduplicated
    CHECK_THROWS_AS(evaluate(ens, ds, {{}}), ContractError);
    CHECK_THROWS_AS(evaluate(ens, ds, {{7}}), ContractError);
}

TEST_CASE("excluded networks are never read") {
    const auto ds = small_preset(4);
    Ensemble ens = make_ensemble(ds.dims, {8}, 4, Variant::independent, 5);
    const EvalReport clean = evaluate(ens, ds);

    Ensemble corrupted = ens;
    corrupted.networks[1] = init_network(1, ens.networks[1].layer_sizes, 999);
    for (auto& w : corrupted.networks[1].weights) {
        for (double& v : w.values_mut()) v = 1e6;
    }
    const EvalReport poisoned = evaluate(corrupted, ds);
    CHECK(poisoned.subset_accuracies.at({0}) == clean.subset_accuracies.at({0}));

    // And directly through predict_subset.
    const auto& sample = ds.samples[static_cast<std::size_t>(ds.test_indices[0])];
    CHECK(predict_subset(ens, sample, {0}) == predict_subset(corrupted, sample, {0}));
}

TEST_CASE("report text and csv list every required field") {
    const auto ds = small_preset(5);
    Ensemble ens = make_ensemble(ds.dims, {8}, 4, Variant::independent, 6);
    EvalReport report = evaluate(ens, ds);
    report.winner_fraction = std::vector<double>{0.75, 0.25};
    const std::string text = report_to_text(report);
    CHECK(text.find("per_modality_accuracy.0=") != std::string::npos);
    CHECK(text.find("sum_accuracy=") != std::string::npos);
    CHECK(text.find("oracle_accuracy=") != std::string::npos);
    CHECK(text.find("subset_accuracy.0,1=") != std::string::npos);
    CHECK(text.find("winner_fraction.1=") != std::string::npos);

    const std::string header = report_csv_header(2, {{0}, {1}, {0, 1}});
    const std::string row = report_to_csv_row(report);
    CHECK(std::count(header.begin(), header.end(), ',') ==
          std::count(row.begin(), row.end(), ','));
}

TEST_CASE("knn probe: a duplicated point classifies as its own label at k=1") {
    MultimodalDataset ds;
    ds.modality_count = 1;
    ds.class_count = 2;
    ds.dims = {2};
    auto add = [&](double a, double b, int label) {
        Sample s;
        s.label = label;
        s.features = {{a, b}};
        ds.samples.push_back(s);
    };
    add(1.0, 1.0, 1);   // train
    add(-1.0, 0.0, 0);  // train
    add(1.0, 1.0, 1);   // test, identical to train point 0
    ds.train_indices = {0, 1};
    ds.test_indices = {2};
    Ensemble ens = make_ensemble(ds.dims, {4}, 2, Variant::independent, 7);
    const KnnTable table = knn_probe(ens, ds, {1});
    CHECK(table.accuracy[0][0] == doctest::Approx(1.0));
}

TEST_CASE("knn probe ranks the designated fast modality highest") {
    const auto ds = fast_modality_preset(11, 50);
    Ensemble ens = make_ensemble(ds.dims, {64}, ds.class_count, Variant::independent, 8);
    const KnnTable table = knn_probe(ens, ds, {1, 5, 10});
    for (std::size_t ki = 0; ki < 3; ++ki) {
        CHECK(table.accuracy[kFastModality][ki] > table.accuracy[1][ki]);
        CHECK(table.accuracy[kFastModality][ki] > table.accuracy[2][ki]);
    }
}

TEST_CASE("knn probe on shuffled labels collapses to chance") {
    auto ds = fast_modality_preset(12, 40);
    // Permute every label; class structure is gone.
    Rng rng(13);
    std::vector<int> labels;
    for (const auto& s : ds.samples) labels.push_back(s.label);
    rng.shuffle(labels);
    for (std::size_t i = 0; i < ds.samples.size(); ++i) ds.samples[i].label = labels[i];

    Ensemble ens = make_ensemble(ds.dims, {32}, ds.class_count, Variant::independent, 9);
    const KnnTable table = knn_probe(ens, ds, {5});
    // Chance is 1/6; a binomial 3-sigma band around it on the test count.
    const double n = static_cast<double>(ds.test_indices.size());
    const double p = 1.0 / 6.0;
    const double band = 3.0 * std::sqrt(p * (1 - p) / n);
    for (int m = 0; m < 3; ++m) {
        CHECK(std::abs(table.accuracy[static_cast<std::size_t>(m)][0] - p) < band + 1e-9);
    }
}

TEST_CASE("knn probe is invariant to train-set order") {
    auto ds = fast_modality_preset(14, 30);
    Ensemble ens = make_ensemble(ds.dims, {16}, ds.class_count, Variant::independent, 10);
    const KnnTable before = knn_probe(ens, ds, {1, 5});
    Rng rng(15);
    rng.shuffle(ds.train_indices);
    const KnnTable after = knn_probe(ens, ds, {1, 5});
    CHECK(before.accuracy == after.accuracy);
}

TEST_CASE("knn probe validates k") {
    const auto ds = small_preset(6);
    Ensemble ens = make_ensemble(ds.dims, {8}, 4, Variant::independent, 11);
    CHECK_THROWS_AS(knn_probe(ens, ds, {0}), ConfigError);
    CHECK_THROWS_AS(knn_probe(ens, ds, {static_cast<int>(ds.train_indices.size()) + 1}),
                    ConfigError);
}

TEST_CASE("export_curves passes a known log through and smooths on demand") {
    const std::string log_path = temp_path("log");
    const std::string out_path = temp_path("curves");
    {
        std::ofstream out(log_path);
        out << "step,modality,mean_loss,winner_count,variant,seed\n";
        out << "1,0,1.0,3,dmcl,7\n1,1,2.0,1,dmcl,7\n";
        out << "2,0,0.5,2,dmcl,7\n2,1,1.0,2,dmcl,7\n";
        out << "3,0,0.25,0,dmcl,7\n3,1,0.5,4,dmcl,7\n";
    }
    export_curves(log_path, out_path, 0);
    {
        std::ifstream in(out_path);
        std::string line;
        REQUIRE(std::getline(in, line));
        CHECK(line == "step,loss_m0,loss_m1,winner_frac_m0,winner_frac_m1");
        REQUIRE(std::getline(in, line));
        CHECK(line == "1,1,2,0.75,0.25");
        REQUIRE(std::getline(in, line));
        CHECK(line == "2,0.5,1,0.5,0.5");
        REQUIRE(std::getline(in, line));
        CHECK(line == "3,0.25,0.5,0,1");
    }

    // Trailing mean of window 2: [1.0, 0.5] -> [1.0, 0.75].
    export_curves(log_path, out_path, 2);
    {
        std::ifstream in(out_path);
        std::string line;
        std::getline(in, line);
        std::getline(in, line);
        CHECK(line.rfind("1,1,2,", 0) == 0);
        std::getline(in, line);
        CHECK(line.rfind("2,0.75,1.5,", 0) == 0);
        std::getline(in, line);
        CHECK(line.rfind("3,0.375,0.75,", 0) == 0);
    }
    std::remove(log_path.c_str());
    std::remove(out_path.c_str());
}

TEST_CASE("export_curves handles an empty body and flags bad lines") {
    const std::string log_path = temp_path("log2");
    const std::string out_path = temp_path("curves2");
    {
        std::ofstream out(log_path);
        out << "step,modality,mean_loss,winner_count,variant,seed\n";
    }
    export_curves(log_path, out_path, 0);
    {
        std::ifstream in(out_path);
        std::string line;
        REQUIRE(std::getline(in, line));
        CHECK(line.rfind("step", 0) == 0);
        CHECK_FALSE(std::getline(in, line));  // header only
    }

    {
        std::ofstream out(log_path);
        out << "step,modality,mean_loss,winner_count,variant,seed\n";
        out << "1,0,1.0,3,dmcl,7\n";
        out << "2,oops\n";
    }
    try {
        export_curves(log_path, out_path, 0);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.position == 3);  // 1-based line number of the bad row
    }

    {
        std::ofstream out(log_path);
        out << "not,the,right,header\n";
    }
    CHECK_THROWS_AS(export_curves(log_path, out_path, 0), ParseError);
    std::remove(log_path.c_str());
    std::remove(out_path.c_str());
}

}  // TEST_SUITE
