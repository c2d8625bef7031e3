#include <doctest.h>

#include <unistd.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "mclforge/network.hpp"
#include "mclforge/rng.hpp"

using namespace mclforge;

namespace {

std::string temp_path(const char* name) {
    return std::string("/tmp/mclforge_test_") + name + "_" + std::to_string(::getpid());
}

Tensor random_input(int rows, int cols, Rng& rng) {
    std::vector<double> values(static_cast<std::size_t>(rows) * cols);
    for (double& v : values) v = rng.uniform(-2, 2);
    return Tensor::from_values({rows, cols}, std::move(values));
}

bool tensors_equal(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a.values()[i] != b.values()[i]) return false;
    }
    return true;
}

void fill_grads(ModalityNetwork& net, double value) {
    for (auto& w : net.weights) {
        w.ensure_grad();
        for (double& g : w.grad_mut()) g = value;
    }
    for (auto& b : net.biases) {
        b.ensure_grad();
        for (double& g : b.grad_mut()) g = value;
    }
}

}  // namespace

TEST_SUITE("network") {

TEST_CASE("init is deterministic and biases start at zero") {
    const std::vector<int> sizes = {8, 16, 4};
    ModalityNetwork a = init_network(0, sizes, 99);
    ModalityNetwork b = init_network(0, sizes, 99);
    REQUIRE(a.layer_count() == b.layer_count());
    for (int l = 0; l < a.layer_count(); ++l) {
        CHECK(tensors_equal(a.weights[static_cast<std::size_t>(l)],
                            b.weights[static_cast<std::size_t>(l)]));
        for (double v : a.biases[static_cast<std::size_t>(l)].values()) CHECK(v == 0.0);
    }
    ModalityNetwork c = init_network(0, sizes, 100);
    CHECK_FALSE(tensors_equal(a.weights[0], c.weights[0]));
}

TEST_CASE("init rejects bad layer sizes") {
    CHECK_THROWS_AS(init_network(0, {8}, 1), ConfigError);
    CHECK_THROWS_AS(init_network(0, {8, 0, 4}, 1), ConfigError);
    CHECK_THROWS_AS(init_network(-1, {8, 4}, 1), ConfigError);
}

TEST_CASE("init weights stay in bound and average near zero") {
    // Statistical oracle: uniform on [-b, b] has mean 0 with standard error
    // b / sqrt(3 n); the empirical mean must land within 3 sigma.
    const int fan_in = 100, fan_out = 100;  // 10^4 draws
    ModalityNetwork net = init_network(0, {fan_in, fan_out}, 1234);
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    double total = 0.0;
    for (double w : net.weights[0].values()) {
        CHECK(std::abs(w) <= bound);
        total += w;
    }
    const double n = static_cast<double>(net.weights[0].size());
    const double sigma = bound / std::sqrt(3.0 * n);
    CHECK(std::abs(total / n) < 3.0 * sigma);
}

TEST_CASE("forward of an all-zero network is all-zero") {
    ModalityNetwork net = init_network(0, {4, 3, 2}, 7);
    for (auto& w : net.weights) {
        for (double& v : w.values_mut()) v = 0.0;
    }
    Rng rng(1);
    Tensor logits = forward_nograd(net, random_input(5, 4, rng));
    for (double v : logits.values()) CHECK(v == 0.0);
}

TEST_CASE("single affine layer is exactly x.W + b") {
    Rng rng(2);
    ModalityNetwork net = init_network(0, {3, 2}, 5);
    for (double& v : net.biases[0].values_mut()) v = rng.uniform(-1, 1);
    Tensor x = random_input(4, 3, rng);
    Tensor logits = forward_nograd(net, x);
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 2; ++j) {
            double expected = net.biases[0].values()[static_cast<std::size_t>(j)];
            for (int k = 0; k < 3; ++k) {
                expected += x.values()[static_cast<std::size_t>(i * 3 + k)] *
                            net.weights[0].values()[static_cast<std::size_t>(k * 2 + j)];
            }
            CHECK(logits.values()[static_cast<std::size_t>(i * 2 + j)] ==
                  doctest::Approx(expected).epsilon(1e-12));
        }
    }
}

TEST_CASE("two-layer forward matches a straight-line reference") {
    Rng rng(3);
    ModalityNetwork net = init_network(1, {4, 6, 3}, 11);
    for (double& v : net.biases[0].values_mut()) v = rng.uniform(-1, 1);
    for (double& v : net.biases[1].values_mut()) v = rng.uniform(-1, 1);
    Tensor x = random_input(2, 4, rng);
    Tensor logits = forward_nograd(net, x);

    for (int i = 0; i < 2; ++i) {
        std::vector<double> hidden(6);
        for (int h = 0; h < 6; ++h) {
            double acc = net.biases[0].values()[static_cast<std::size_t>(h)];
            for (int k = 0; k < 4; ++k) {
                acc += x.values()[static_cast<std::size_t>(i * 4 + k)] *
                       net.weights[0].values()[static_cast<std::size_t>(k * 6 + h)];
            }
            hidden[static_cast<std::size_t>(h)] = acc > 0 ? acc : 0;
        }
        for (int j = 0; j < 3; ++j) {
            double acc = net.biases[1].values()[static_cast<std::size_t>(j)];
            for (int h = 0; h < 6; ++h) {
                acc += hidden[static_cast<std::size_t>(h)] *
                       net.weights[1].values()[static_cast<std::size_t>(h * 3 + j)];
            }
            CHECK(logits.values()[static_cast<std::size_t>(i * 3 + j)] ==
                  doctest::Approx(acc).epsilon(1e-12));
        }
    }
}

TEST_CASE("forward rejects mismatched input width") {
    ModalityNetwork net = init_network(0, {4, 2}, 1);
    Rng rng(4);
    CHECK_THROWS_AS(forward_nograd(net, random_input(3, 5, rng)), ShapeError);
}

TEST_CASE("penultimate features: zero input, nonnegativity, truncation") {
    ModalityNetwork net = init_network(0, {4, 6, 3}, 13);
    ComputationRecord rec(false);

    Tensor zeros = Tensor::zeros({2, 4});
    Tensor feat0 = penultimate_features(net, rec, zeros);
    for (double v : feat0.values()) CHECK(v == 0.0);  // biases are zero

    Rng rng(5);
    Tensor x = random_input(3, 4, rng);
    Tensor feats = penultimate_features(net, rec, x);
    CHECK(feats.cols() == 6);
    for (double v : feats.values()) CHECK(v >= 0.0);

    // Equals the forward pass truncated before the output layer.
    Tensor h = rec.relu(rec.add_row(rec.matmul(x, net.weights[0]), net.biases[0]));
    for (std::size_t i = 0; i < feats.size(); ++i) {
        CHECK(feats.values()[i] == h.values()[i]);
    }

    ModalityNetwork shallow = init_network(0, {4, 3}, 1);
    CHECK_THROWS_AS(penultimate_features(shallow, rec, x), ContractError);
}

TEST_CASE("sgd with zero momentum is plain gradient descent") {
    ModalityNetwork net = init_network(0, {3, 2}, 17);
    const std::vector<double> before(net.weights[0].values().begin(),
                                     net.weights[0].values().end());
    fill_grads(net, 2.0);
    sgd_momentum_step(net, 0.1, 0.0);
    for (std::size_t i = 0; i < before.size(); ++i) {
        CHECK(net.weights[0].values()[i] == doctest::Approx(before[i] - 0.2).epsilon(1e-12));
    }
}

TEST_CASE("sgd with zero grad and zero velocity is a fixed point") {
    ModalityNetwork net = init_network(0, {3, 2}, 19);
    const std::uint64_t before = state_hash(net);
    fill_grads(net, 0.0);
    sgd_momentum_step(net, 0.1, 0.9);
    CHECK(state_hash(net) == before);
}

TEST_CASE("two momentum steps with constant grad displace by lr*g*(1 + 1.9)") {
    ModalityNetwork net = init_network(0, {3, 2}, 23);
    const std::vector<double> before(net.weights[0].values().begin(),
                                     net.weights[0].values().end());
    const double lr = 0.01, g = 3.0;
    fill_grads(net, g);
    sgd_momentum_step(net, lr, 0.9);
    fill_grads(net, g);
    sgd_momentum_step(net, lr, 0.9);
    // v1 = g, v2 = 0.9 g + g = 1.9 g, total displacement lr g (1 + 1.9).
    for (std::size_t i = 0; i < before.size(); ++i) {
        CHECK(net.weights[0].values()[i] ==
              doctest::Approx(before[i] - lr * g * 2.9).epsilon(1e-12));
    }
}

TEST_CASE("sgd requires populated gradients") {
    ModalityNetwork net = init_network(0, {3, 2}, 29);
    CHECK_THROWS_AS(sgd_momentum_step(net, 0.1, 0.9), ContractError);
}

TEST_CASE("updating one network leaves ensemble siblings bit-identical") {
    Ensemble ens = make_ensemble({4, 4, 4}, {8}, 3, Variant::dmcl, 31);
    const std::uint64_t h1 = state_hash(ens.networks[1]);
    const std::uint64_t h2 = state_hash(ens.networks[2]);
    fill_grads(ens.networks[0], 1.0);
    sgd_momentum_step(ens.networks[0], 0.1, 0.9);
    CHECK(state_hash(ens.networks[1]) == h1);
    CHECK(state_hash(ens.networks[2]) == h2);
}

TEST_CASE("distinct seeds give distinct parameters across the ensemble") {
    Ensemble ens = make_ensemble({4, 4}, {8}, 3, Variant::smcl, 37);
    CHECK_FALSE(tensors_equal(ens.networks[0].weights[0], ens.networks[1].weights[0]));
    CHECK(ens.networks[0].modality_id == 0);
    CHECK(ens.networks[1].modality_id == 1);
}

TEST_CASE("checkpoint round-trip is bit-exact") {
    Ensemble ens = make_ensemble({5, 7}, {6}, 4, Variant::cmcl, 41);
    Rng rng(6);
    // Perturb so values are not fresh-from-init.
    for (auto& net : ens.networks) {
        for (auto& w : net.weights) {
            for (double& v : w.values_mut()) v += rng.uniform(-0.5, 0.5);
        }
        for (auto& b : net.biases) {
            for (double& v : b.values_mut()) v += rng.uniform(-0.5, 0.5);
        }
    }
    const std::string path = temp_path("ckpt");
    save_checkpoint(ens, path);
    Ensemble back = load_checkpoint(path);
    REQUIRE(back.modality_count() == 2);
    CHECK(back.num_classes == 4);
    for (int m = 0; m < 2; ++m) {
        const auto& a = ens.networks[static_cast<std::size_t>(m)];
        const auto& b = back.networks[static_cast<std::size_t>(m)];
        CHECK(a.modality_id == b.modality_id);
        CHECK(a.layer_sizes == b.layer_sizes);
        for (int l = 0; l < a.layer_count(); ++l) {
            CHECK(tensors_equal(a.weights[static_cast<std::size_t>(l)],
                                b.weights[static_cast<std::size_t>(l)]));
            CHECK(tensors_equal(a.biases[static_cast<std::size_t>(l)],
                                b.biases[static_cast<std::size_t>(l)]));
        }
    }

    // Saving the reloaded ensemble reproduces the same bytes.
    const std::string path2 = temp_path("ckpt2");
    save_checkpoint(back, path2);
    std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
    const std::string bytes1((std::istreambuf_iterator<char>(f1)),
                             std::istreambuf_iterator<char>());
    const std::string bytes2((std::istreambuf_iterator<char>(f2)),
                             std::istreambuf_iterator<char>());
    CHECK(bytes1 == bytes2);
    std::remove(path.c_str());
    std::remove(path2.c_str());
}

TEST_CASE("checkpoint loader rejects malformed files") {
    const std::string path = temp_path("bad_ckpt");
    {
        std::ofstream out(path, std::ios::binary);
        out << "NOPE";
    }
    CHECK_THROWS_AS(load_checkpoint(path), ParseError);

    // Truncate a valid checkpoint mid-stream.
    Ensemble ens = make_ensemble({4}, {5}, 3, Variant::independent, 43);
    save_checkpoint(ens, path);
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
    }
    try {
        load_checkpoint(path);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.position > 0);
        CHECK(e.position <= bytes.size() / 2);
    }
    std::remove(path.c_str());
}

TEST_CASE("velocity buffers are per-network and survive skipped updates") {
    Ensemble ens = make_ensemble({3, 3}, {4}, 2, Variant::smcl, 47);
    fill_grads(ens.networks[0], 1.0);
    sgd_momentum_step(ens.networks[0], 0.1, 0.9);
    // Network 1 was never stepped; its velocity is still all zeros.
    for (const auto& v : ens.networks[1].weight_velocity) {
        for (double x : v) CHECK(x == 0.0);
    }
    for (double x : ens.networks[0].weight_velocity[0]) CHECK(x == 1.0);
}

}  // TEST_SUITE
