#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mclforge/tensor.hpp"

namespace mclforge {

enum class Variant {
    independent,
    smcl,
    cmcl,
    dmcl,
    dmcl_random_teacher,
};

const char* variant_name(Variant v);
Variant variant_from_name(const std::string& name);

/// One per-modality classifier: an affine-rectifier stack ending in raw
/// class logits. Parameters and momentum buffers belong exclusively to this
/// network; nothing is shared across modalities.
struct ModalityNetwork {
    int modality_id = 0;
    std::vector<int> layer_sizes;  // input_dim, hidden..., num_classes
    std::vector<Tensor> weights;   // [sizes[l] x sizes[l+1]], row-major
    std::vector<Tensor> biases;    // [sizes[l+1]]
    std::vector<std::vector<double>> weight_velocity;
    std::vector<std::vector<double>> bias_velocity;

    int input_dim() const { return layer_sizes.front(); }
    int output_dim() const { return layer_sizes.back(); }
    int layer_count() const { return static_cast<int>(weights.size()); }
};

/// The M modality networks plus the training-variant configuration.
struct Ensemble {
    std::vector<ModalityNetwork> networks;
    int num_classes = 0;
    Variant variant = Variant::independent;

    int modality_count() const { return static_cast<int>(networks.size()); }
};

/// Build a network with weights uniform in +-sqrt(6 / (fan_in + fan_out))
/// and zero biases. Deterministic given the seed.
ModalityNetwork init_network(int modality_id, const std::vector<int>& layer_sizes,
                             std::uint64_t seed);

/// Build an M-network ensemble. input_dims[m] is modality m's feature width;
/// each network gets the same hidden stack and num_classes outputs, with a
/// per-network seed derived from the base seed.
Ensemble make_ensemble(const std::vector<int>& input_dims,
                       const std::vector<int>& hidden_sizes, int num_classes,
                       Variant variant, std::uint64_t seed);

/// Logits of the affine-rectifier-affine stack, [batch x input_dim] ->
/// [batch x C]. Gradients are recorded iff the record is recording.
Tensor forward(const ModalityNetwork& net, ComputationRecord& rec, const Tensor& x);

/// Plain forward pass with no gradient graph.
Tensor forward_nograd(const ModalityNetwork& net, const Tensor& x);

/// Post-rectifier activations of the last hidden layer. The network must
/// have at least one hidden layer.
Tensor penultimate_features(const ModalityNetwork& net, ComputationRecord& rec,
                            const Tensor& x);

/// v <- momentum * v + grad; theta <- theta - lr * v. Velocity buffers
/// persist across steps. Every parameter must have a populated gradient.
void sgd_momentum_step(ModalityNetwork& net, double lr, double momentum);

void zero_grad(ModalityNetwork& net);

/// FNV-1a hash over parameters and velocity buffers; used by tests to
/// assert that untouched networks stay bit-identical.
std::uint64_t state_hash(const ModalityNetwork& net);

/// Versioned binary checkpoint ("MCLF"). Stores parameters only; momentum
/// buffers are training state and are not persisted. Round-trips bit-exactly.
void save_checkpoint(const Ensemble& ensemble, const std::string& path);

/// Load a checkpoint. The file does not carry a training variant; the
/// returned ensemble defaults to the given one.
Ensemble load_checkpoint(const std::string& path,
                         Variant variant = Variant::independent);

}  // namespace mclforge
