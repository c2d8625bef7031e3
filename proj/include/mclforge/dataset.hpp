#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mclforge/tensor.hpp"

namespace mclforge {

/// Controls how well each modality separates each class. d[m][c] in [0, 1]
/// scales the distance of class c's centroid from the origin in modality m;
/// noise_sigma is the per-coordinate Gaussian spread of every cluster.
///
/// feature_scale multiplies every emitted feature. It does not change the
/// classification geometry (signal and noise scale together); it sets the
/// optimization pace of networks trained at a fixed learning rate.
///
/// The coupling knobs tie the modalities to a common latent, the way views
/// of one video share the underlying scene. With shared_class_directions
/// every modality places class c along the same unit direction.
/// noise_correlation rho in [0, 1] blends one shared noise draw per sample
/// with per-modality private draws (rho * shared + sqrt(1 - rho^2) *
/// private), so per-sample difficulty correlates across modalities while
/// every per-modality marginal stays an exact spherical Gaussian. Either
/// coupling requires equal widths across modalities.
struct SeparabilityProfile {
    std::vector<std::vector<double>> d;  // M x C
    double noise_sigma = 0.1;
    double feature_scale = 1.0;
    bool shared_class_directions = false;
    double noise_correlation = 0.0;
};

struct Sample {
    std::vector<std::vector<double>> features;  // one vector per modality
    int label = 0;
};

/// N samples of M modality feature vectors plus a stratified train/test
/// partition. Samples are stored class-major in generation order.
struct MultimodalDataset {
    int modality_count = 0;
    int class_count = 0;
    std::vector<int> dims;  // per-modality feature width
    std::vector<Sample> samples;
    std::vector<int> train_indices;
    std::vector<int> test_indices;

    int sample_count() const { return static_cast<int>(samples.size()); }
};

/// Gaussian spherical clusters: class c's centroid in modality m sits at
/// radius d[m][c] along a seeded direction (directions are orthonormal
/// across classes whenever the modality width allows), and samples are
/// centroid + noise_sigma * N(0, I). The noise stream is independent of the
/// profile, so raising d[m][c] moves centroids without re-rolling noise.
/// Split is stratified 80/20 per class. Pure function of (arguments, seed).
MultimodalDataset generate(int modality_count, int class_count,
                           const std::vector<int>& dims, int n_per_class,
                           const SeparabilityProfile& profile, std::uint64_t seed);

/// M=3, C=6: modality m is the sole high-separability modality (d = 1.0)
/// for classes {2m, 2m+1} and weak (d = 0.25) elsewhere, so no single
/// modality suffices but the ensemble does.
SeparabilityProfile complementary_profile();
MultimodalDataset complementary_preset(std::uint64_t seed, int n_per_class = 125);

/// M=3, C=6: modality 0 has uniformly higher separability (d = 0.9) and the
/// others are moderate (d = 0.5), inducing an early-training loss gap.
SeparabilityProfile fast_modality_profile();
MultimodalDataset fast_modality_preset(std::uint64_t seed, int n_per_class = 125);

/// Designated (fastest) modality of the fast_modality preset.
inline constexpr int kFastModality = 0;

/// Versioned binary dataset file ("MMDS"); round-trips bit-exactly.
void save(const MultimodalDataset& dataset, const std::string& path);
MultimodalDataset load(const std::string& path);

/// Stack the chosen samples' modality-m features into a [n x dims[m]] tensor.
Tensor modality_matrix(const MultimodalDataset& dataset,
                       const std::vector<int>& sample_indices, int modality);

std::vector<int> labels_of(const MultimodalDataset& dataset,
                           const std::vector<int>& sample_indices);

}  // namespace mclforge
