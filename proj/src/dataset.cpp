#include "mclforge/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <set>

#include "mclforge/binary_io.hpp"
#include "mclforge/rng.hpp"

namespace mclforge {

namespace {

constexpr std::uint32_t kDatasetVersion = 1;
constexpr char kDatasetMagic[5] = "MMDS";
constexpr double kTrainFraction = 0.8;

// One seeded unit direction per class. Directions are mutually orthogonal
// (Gram-Schmidt) while the dimension allows; beyond that they are plain
// normalized draws. Orthogonality makes inter-centroid distance monotone in
// the separability entries.
std::vector<std::vector<double>> class_directions(Rng rng, int class_count, int dim) {
    std::vector<std::vector<double>> dirs;
    dirs.reserve(static_cast<std::size_t>(class_count));
    for (int c = 0; c < class_count; ++c) {
        std::vector<double> v(static_cast<std::size_t>(dim));
        double norm = 0.0;
        do {
            for (double& x : v) x = rng.normal();
            if (c < dim) {
                for (const auto& u : dirs) {
                    double dot = 0.0;
                    for (int i = 0; i < dim; ++i) dot += v[static_cast<std::size_t>(i)] * u[static_cast<std::size_t>(i)];
                    for (int i = 0; i < dim; ++i) v[static_cast<std::size_t>(i)] -= dot * u[static_cast<std::size_t>(i)];
                }
            }
            norm = 0.0;
            for (double x : v) norm += x * x;
            norm = std::sqrt(norm);
        } while (norm < 1e-9);
        for (double& x : v) x /= norm;
        dirs.push_back(std::move(v));
    }
    return dirs;
}

void validate_profile(const SeparabilityProfile& profile, int modality_count,
                      int class_count) {
    if (static_cast<int>(profile.d.size()) != modality_count) {
        throw ConfigError("profile: separability matrix must have one row per modality");
    }
    for (const auto& row : profile.d) {
        if (static_cast<int>(row.size()) != class_count) {
            throw ConfigError("profile: separability row must have one entry per class");
        }
        for (double v : row) {
            if (!(v >= 0.0 && v <= 1.0)) {
                throw ConfigError("profile: separability entries must be in [0, 1]");
            }
        }
    }
    if (!(profile.noise_sigma > 0.0)) {
        throw ConfigError("profile: noise_sigma must be positive");
    }
    if (!(profile.feature_scale > 0.0)) {
        throw ConfigError("profile: feature_scale must be positive");
    }
}

void validate_dataset(const MultimodalDataset& ds, std::size_t fail_offset) {
    auto bad = [&](const std::string& msg) { throw ParseError(msg, fail_offset); };
    if (ds.sample_count() == 0) bad("dataset is empty");
    if (ds.train_indices.empty() || ds.test_indices.empty()) {
        bad("both splits must be nonempty");
    }
    std::set<int> seen;
    for (const auto* split : {&ds.train_indices, &ds.test_indices}) {
        for (int idx : *split) {
            if (idx < 0 || idx >= ds.sample_count()) bad("split index out of range");
            if (!seen.insert(idx).second) bad("splits overlap");
        }
    }
    if (static_cast<int>(seen.size()) != ds.sample_count()) {
        bad("splits do not cover every sample");
    }
}

}  // namespace

MultimodalDataset generate(int modality_count, int class_count,
                           const std::vector<int>& dims, int n_per_class,
                           const SeparabilityProfile& profile, std::uint64_t seed) {
    if (modality_count < 1) throw ConfigError("generate: modality_count must be >= 1");
    if (class_count < 2) throw ConfigError("generate: class_count must be >= 2");
    if (static_cast<int>(dims.size()) != modality_count) {
        throw ConfigError("generate: dims must list one width per modality");
    }
    for (int d : dims) {
        if (d < 1) throw ConfigError("generate: dims must be positive");
    }
    if (n_per_class < 2) {
        throw ConfigError("generate: n_per_class must be >= 2 for a stratified split");
    }
    validate_profile(profile, modality_count, class_count);
    if (profile.shared_class_directions || profile.shared_sample_noise) {
        for (int d : dims) {
            if (d != dims.front()) {
                throw ConfigError(
                    "generate: shared directions/noise require equal modality widths");
            }
        }
    }

    Rng root(mix_seed(seed));
    Rng dir_rng = root.fork(1);
    Rng noise_rng = root.fork(2);

    // Centroids: radius d[m][c] along the class direction.
    std::vector<std::vector<std::vector<double>>> centroids(
        static_cast<std::size_t>(modality_count));
    std::vector<std::vector<double>> shared_dirs;
    if (profile.shared_class_directions) {
        shared_dirs = class_directions(dir_rng.fork(0), class_count, dims.front());
    }
    for (int m = 0; m < modality_count; ++m) {
        const auto dirs = profile.shared_class_directions
                              ? shared_dirs
                              : class_directions(dir_rng.fork(static_cast<std::uint64_t>(m)),
                                                 class_count,
                                                 dims[static_cast<std::size_t>(m)]);
        centroids[static_cast<std::size_t>(m)].resize(static_cast<std::size_t>(class_count));
        for (int c = 0; c < class_count; ++c) {
            auto& center = centroids[static_cast<std::size_t>(m)][static_cast<std::size_t>(c)];
            center = dirs[static_cast<std::size_t>(c)];
            for (double& x : center) x *= profile.d[static_cast<std::size_t>(m)][static_cast<std::size_t>(c)];
        }
    }

    MultimodalDataset ds;
    ds.modality_count = modality_count;
    ds.class_count = class_count;
    ds.dims = dims;
    ds.samples.reserve(static_cast<std::size_t>(class_count) * n_per_class);
    std::vector<double> shared_noise;
    for (int c = 0; c < class_count; ++c) {
        for (int i = 0; i < n_per_class; ++i) {
            Sample s;
            s.label = c;
            s.features.resize(static_cast<std::size_t>(modality_count));
            if (profile.shared_sample_noise) {
                shared_noise.resize(static_cast<std::size_t>(dims.front()));
                for (double& e : shared_noise) e = noise_rng.normal();
            }
            for (int m = 0; m < modality_count; ++m) {
                auto& x = s.features[static_cast<std::size_t>(m)];
                const auto& center = centroids[static_cast<std::size_t>(m)][static_cast<std::size_t>(c)];
                x.resize(static_cast<std::size_t>(dims[static_cast<std::size_t>(m)]));
                for (std::size_t j = 0; j < x.size(); ++j) {
                    const double noise = profile.shared_sample_noise ? shared_noise[j]
                                                                     : noise_rng.normal();
                    x[j] = profile.feature_scale *
                           (center[j] + profile.noise_sigma * noise);
                }
            }
            ds.samples.push_back(std::move(s));
        }
    }

    // Stratified split: the first 80% of each class's block trains.
    const int train_per_class = std::clamp(
        static_cast<int>(std::floor(kTrainFraction * n_per_class)), 1, n_per_class - 1);
    for (int c = 0; c < class_count; ++c) {
        const int base = c * n_per_class;
        for (int i = 0; i < n_per_class; ++i) {
            (i < train_per_class ? ds.train_indices : ds.test_indices).push_back(base + i);
        }
    }
    return ds;
}

SeparabilityProfile complementary_profile() {
    SeparabilityProfile profile;
    // Coupled latent: the three modalities are views of one underlying
    // sample, differing only in how strongly each class's signal reaches
    // them. The noise level leaves even a strong modality's class pair
    // slightly overlapped, so winning teachers stay calibrated.
    profile.noise_sigma = 0.30;
    profile.feature_scale = 24.0;
    profile.shared_class_directions = true;
    profile.shared_sample_noise = true;
    profile.d.assign(3, std::vector<double>(6, 0.25));
    for (int m = 0; m < 3; ++m) {
        profile.d[static_cast<std::size_t>(m)][static_cast<std::size_t>(2 * m)] = 1.0;
        profile.d[static_cast<std::size_t>(m)][static_cast<std::size_t>(2 * m + 1)] = 1.0;
    }
    return profile;
}

MultimodalDataset complementary_preset(std::uint64_t seed, int n_per_class) {
    return generate(3, 6, {16, 16, 16}, n_per_class, complementary_profile(), seed);
}

SeparabilityProfile fast_modality_profile() {
    SeparabilityProfile profile;
    profile.noise_sigma = 0.32;
    profile.d.assign(3, std::vector<double>(6, 0.5));
    profile.d[kFastModality].assign(6, 0.9);
    return profile;
}

MultimodalDataset fast_modality_preset(std::uint64_t seed, int n_per_class) {
    return generate(3, 6, {16, 16, 16}, n_per_class, fast_modality_profile(), seed);
}

void save(const MultimodalDataset& ds, const std::string& path) {
    BinaryWriter w(path);
    w.write_magic(kDatasetMagic);
    w.write_u32(kDatasetVersion);
    w.write_u32(static_cast<std::uint32_t>(ds.modality_count));
    w.write_u32(static_cast<std::uint32_t>(ds.class_count));
    w.write_u32(static_cast<std::uint32_t>(ds.sample_count()));
    for (int d : ds.dims) w.write_u32(static_cast<std::uint32_t>(d));
    for (const auto& s : ds.samples) {
        w.write_u32(static_cast<std::uint32_t>(s.label));
        for (const auto& x : s.features) {
            for (double v : x) w.write_f64(v);
        }
    }
    w.write_u32(static_cast<std::uint32_t>(ds.train_indices.size()));
    for (int idx : ds.train_indices) w.write_u32(static_cast<std::uint32_t>(idx));
    w.write_u32(static_cast<std::uint32_t>(ds.test_indices.size()));
    for (int idx : ds.test_indices) w.write_u32(static_cast<std::uint32_t>(idx));
    w.close();
}

MultimodalDataset load(const std::string& path) {
    BinaryReader r(path);
    r.expect_magic(kDatasetMagic);
    const std::uint32_t version = r.read_u32("version");
    if (version != kDatasetVersion) {
        throw ParseError("unsupported dataset version " + std::to_string(version),
                         r.offset());
    }
    MultimodalDataset ds;
    ds.modality_count = static_cast<int>(r.read_u32("modality count"));
    ds.class_count = static_cast<int>(r.read_u32("class count"));
    const std::uint32_t n = r.read_u32("sample count");
    if (ds.modality_count < 1 || ds.class_count < 2 || n == 0) {
        throw ParseError("dataset header has invalid counts", r.offset());
    }
    for (int m = 0; m < ds.modality_count; ++m) {
        const std::uint32_t d = r.read_u32("modality width");
        if (d == 0) throw ParseError("modality width must be positive", r.offset());
        ds.dims.push_back(static_cast<int>(d));
    }
    ds.samples.resize(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        auto& s = ds.samples[i];
        s.label = static_cast<int>(r.read_u32("label"));
        if (s.label < 0 || s.label >= ds.class_count) {
            throw ParseError("label out of range", r.offset());
        }
        s.features.resize(static_cast<std::size_t>(ds.modality_count));
        for (int m = 0; m < ds.modality_count; ++m) {
            r.read_f64_array(s.features[static_cast<std::size_t>(m)],
                             static_cast<std::size_t>(ds.dims[static_cast<std::size_t>(m)]),
                             "features");
        }
    }
    const std::uint32_t train_n = r.read_u32("train split size");
    for (std::uint32_t i = 0; i < train_n; ++i) {
        ds.train_indices.push_back(static_cast<int>(r.read_u32("train index")));
    }
    const std::uint32_t test_n = r.read_u32("test split size");
    for (std::uint32_t i = 0; i < test_n; ++i) {
        ds.test_indices.push_back(static_cast<int>(r.read_u32("test index")));
    }
    r.expect_eof();
    validate_dataset(ds, r.offset());
    return ds;
}

Tensor modality_matrix(const MultimodalDataset& dataset,
                       const std::vector<int>& sample_indices, int modality) {
    if (modality < 0 || modality >= dataset.modality_count) {
        throw ContractError("modality_matrix: modality out of range");
    }
    const int dim = dataset.dims[static_cast<std::size_t>(modality)];
    const int n = static_cast<int>(sample_indices.size());
    if (n == 0) throw ContractError("modality_matrix: empty index list");
    std::vector<double> values;
    values.reserve(static_cast<std::size_t>(n) * dim);
    for (int idx : sample_indices) {
        const auto& x =
            dataset.samples[static_cast<std::size_t>(idx)].features[static_cast<std::size_t>(modality)];
        values.insert(values.end(), x.begin(), x.end());
    }
    return Tensor::from_values({n, dim}, std::move(values));
}

std::vector<int> labels_of(const MultimodalDataset& dataset,
                           const std::vector<int>& sample_indices) {
    std::vector<int> labels;
    labels.reserve(sample_indices.size());
    for (int idx : sample_indices) {
        labels.push_back(dataset.samples[static_cast<std::size_t>(idx)].label);
    }
    return labels;
}

}  // namespace mclforge
