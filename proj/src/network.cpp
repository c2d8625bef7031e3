#include "mclforge/network.hpp"

#include <cmath>

#include "mclforge/binary_io.hpp"
#include "mclforge/rng.hpp"

namespace mclforge {

namespace {
constexpr std::uint32_t kCheckpointVersion = 1;
constexpr char kCheckpointMagic[5] = "MCLF";
}  // namespace

const char* variant_name(Variant v) {
    switch (v) {
        case Variant::independent: return "independent";
        case Variant::smcl: return "smcl";
        case Variant::cmcl: return "cmcl";
        case Variant::dmcl: return "dmcl";
        case Variant::dmcl_random_teacher: return "dmcl-random-teacher";
    }
    return "unknown";
}

Variant variant_from_name(const std::string& name) {
    if (name == "independent") return Variant::independent;
    if (name == "smcl") return Variant::smcl;
    if (name == "cmcl") return Variant::cmcl;
    if (name == "dmcl") return Variant::dmcl;
    if (name == "dmcl-random-teacher") return Variant::dmcl_random_teacher;
    throw ConfigError("unknown variant: " + name);
}

ModalityNetwork init_network(int modality_id, const std::vector<int>& layer_sizes,
                             std::uint64_t seed) {
    if (layer_sizes.size() < 2) {
        throw ConfigError("init_network: need at least input and output sizes");
    }
    for (int s : layer_sizes) {
        if (s < 1) throw ConfigError("init_network: layer sizes must be >= 1");
    }
    if (modality_id < 0) throw ConfigError("init_network: modality_id must be >= 0");

    ModalityNetwork net;
    net.modality_id = modality_id;
    net.layer_sizes = layer_sizes;
    Rng rng(seed);
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
        const int fan_in = layer_sizes[l];
        const int fan_out = layer_sizes[l + 1];
        const double bound = std::sqrt(6.0 / (fan_in + fan_out));
        std::vector<double> w(static_cast<std::size_t>(fan_in) * fan_out);
        for (double& x : w) x = rng.uniform(-bound, bound);
        net.weights.push_back(
            Tensor::from_values({fan_in, fan_out}, std::move(w), /*requires_grad=*/true));
        net.biases.push_back(Tensor::zeros({fan_out}, /*requires_grad=*/true));
        net.weight_velocity.emplace_back(static_cast<std::size_t>(fan_in) * fan_out, 0.0);
        net.bias_velocity.emplace_back(static_cast<std::size_t>(fan_out), 0.0);
    }
    return net;
}

Ensemble make_ensemble(const std::vector<int>& input_dims,
                       const std::vector<int>& hidden_sizes, int num_classes,
                       Variant variant, std::uint64_t seed) {
    if (input_dims.empty()) throw ConfigError("make_ensemble: need at least one modality");
    if (num_classes < 2) throw ConfigError("make_ensemble: need at least two classes");

    Ensemble ens;
    ens.num_classes = num_classes;
    ens.variant = variant;
    Rng rng(mix_seed(seed));
    for (std::size_t m = 0; m < input_dims.size(); ++m) {
        std::vector<int> sizes;
        sizes.push_back(input_dims[m]);
        sizes.insert(sizes.end(), hidden_sizes.begin(), hidden_sizes.end());
        sizes.push_back(num_classes);
        ens.networks.push_back(
            init_network(static_cast<int>(m), sizes, rng.fork(m).next_u64()));
    }
    return ens;
}

Tensor forward(const ModalityNetwork& net, ComputationRecord& rec, const Tensor& x) {
    if (x.rank() != 2 || x.cols() != net.input_dim()) {
        throw ShapeError("forward: input width does not match network input_dim");
    }
    Tensor h = x;
    for (int l = 0; l < net.layer_count(); ++l) {
        h = rec.add_row(rec.matmul(h, net.weights[static_cast<std::size_t>(l)]),
                        net.biases[static_cast<std::size_t>(l)]);
        if (l + 1 < net.layer_count()) h = rec.relu(h);
    }
    return h;
}

Tensor forward_nograd(const ModalityNetwork& net, const Tensor& x) {
    ComputationRecord rec(/*recording=*/false);
    return forward(net, rec, x);
}

Tensor penultimate_features(const ModalityNetwork& net, ComputationRecord& rec,
                            const Tensor& x) {
    if (net.layer_count() < 2) {
        throw ContractError("penultimate_features: network has no hidden layer");
    }
    Tensor h = x;
    for (int l = 0; l + 1 < net.layer_count(); ++l) {
        h = rec.relu(rec.add_row(rec.matmul(h, net.weights[static_cast<std::size_t>(l)]),
                                 net.biases[static_cast<std::size_t>(l)]));
    }
    return h;
}

namespace {

void apply_momentum(std::span<double> values, std::span<const double> grad,
                    std::vector<double>& velocity, double lr, double momentum) {
    for (std::size_t i = 0; i < values.size(); ++i) {
        velocity[i] = momentum * velocity[i] + grad[i];
        values[i] -= lr * velocity[i];
        if (!std::isfinite(values[i])) {
            throw ContractError("sgd_momentum_step: parameter became non-finite");
        }
    }
}

}  // namespace

void sgd_momentum_step(ModalityNetwork& net, double lr, double momentum) {
    for (int l = 0; l < net.layer_count(); ++l) {
        auto& w = net.weights[static_cast<std::size_t>(l)];
        auto& b = net.biases[static_cast<std::size_t>(l)];
        if (!w.has_grad() || !b.has_grad()) {
            throw ContractError("sgd_momentum_step: missing gradient on a parameter");
        }
        apply_momentum(w.values_mut(), w.grad(), net.weight_velocity[static_cast<std::size_t>(l)],
                       lr, momentum);
        apply_momentum(b.values_mut(), b.grad(), net.bias_velocity[static_cast<std::size_t>(l)],
                       lr, momentum);
    }
}

void zero_grad(ModalityNetwork& net) {
    for (auto& w : net.weights) w.zero_grad();
    for (auto& b : net.biases) b.zero_grad();
}

std::uint64_t state_hash(const ModalityNetwork& net) {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](const double* data, std::size_t n) {
        const auto* bytes = reinterpret_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n * sizeof(double); ++i) {
            h ^= bytes[i];
            h *= 1099511628211ULL;
        }
    };
    for (const auto& w : net.weights) mix(w.values().data(), w.values().size());
    for (const auto& b : net.biases) mix(b.values().data(), b.values().size());
    for (const auto& v : net.weight_velocity) mix(v.data(), v.size());
    for (const auto& v : net.bias_velocity) mix(v.data(), v.size());
    return h;
}

void save_checkpoint(const Ensemble& ensemble, const std::string& path) {
    BinaryWriter w(path);
    w.write_magic(kCheckpointMagic);
    w.write_u32(kCheckpointVersion);
    w.write_u32(static_cast<std::uint32_t>(ensemble.modality_count()));
    w.write_u32(static_cast<std::uint32_t>(ensemble.num_classes));
    for (const auto& net : ensemble.networks) {
        w.write_u32(static_cast<std::uint32_t>(net.modality_id));
        w.write_u32(static_cast<std::uint32_t>(net.layer_count()));
        for (int l = 0; l < net.layer_count(); ++l) {
            const auto& weight = net.weights[static_cast<std::size_t>(l)];
            w.write_u32(static_cast<std::uint32_t>(weight.rows()));
            w.write_u32(static_cast<std::uint32_t>(weight.cols()));
            for (double v : weight.values()) w.write_f64(v);
            for (double v : net.biases[static_cast<std::size_t>(l)].values()) w.write_f64(v);
        }
    }
    w.close();
}

Ensemble load_checkpoint(const std::string& path, Variant variant) {
    BinaryReader r(path);
    r.expect_magic(kCheckpointMagic);
    const std::uint32_t version = r.read_u32("version");
    if (version != kCheckpointVersion) {
        throw ParseError("unsupported checkpoint version " + std::to_string(version),
                         r.offset());
    }
    const std::uint32_t m_count = r.read_u32("modality count");
    const std::uint32_t num_classes = r.read_u32("class count");
    if (m_count == 0 || num_classes < 2) {
        throw ParseError("checkpoint header has invalid counts", r.offset());
    }

    Ensemble ens;
    ens.num_classes = static_cast<int>(num_classes);
    ens.variant = variant;
    for (std::uint32_t m = 0; m < m_count; ++m) {
        ModalityNetwork net;
        net.modality_id = static_cast<int>(r.read_u32("modality_id"));
        const std::uint32_t layers = r.read_u32("layer count");
        if (layers == 0) throw ParseError("network has zero layers", r.offset());
        for (std::uint32_t l = 0; l < layers; ++l) {
            const std::uint32_t rows = r.read_u32("weight rows");
            const std::uint32_t cols = r.read_u32("weight cols");
            if (rows == 0 || cols == 0) {
                throw ParseError("zero-sized weight matrix", r.offset());
            }
            std::vector<double> wv;
            r.read_f64_array(wv, static_cast<std::size_t>(rows) * cols, "weights");
            std::vector<double> bv;
            r.read_f64_array(bv, cols, "biases");
            if (l == 0) net.layer_sizes.push_back(static_cast<int>(rows));
            net.layer_sizes.push_back(static_cast<int>(cols));
            net.weights.push_back(Tensor::from_values(
                {static_cast<int>(rows), static_cast<int>(cols)}, std::move(wv),
                /*requires_grad=*/true));
            net.biases.push_back(Tensor::from_values({static_cast<int>(cols)}, std::move(bv),
                                                     /*requires_grad=*/true));
            net.weight_velocity.emplace_back(static_cast<std::size_t>(rows) * cols, 0.0);
            net.bias_velocity.emplace_back(cols, 0.0);
        }
        if (net.output_dim() != ens.num_classes) {
            throw ParseError("network output width disagrees with header class count",
                             r.offset());
        }
        ens.networks.push_back(std::move(net));
    }
    r.expect_eof();
    return ens;
}

}  // namespace mclforge
