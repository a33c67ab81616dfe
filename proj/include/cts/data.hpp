#pragma once

#include "cts/preprocessing.hpp"
#include "cts/rng.hpp"
#include "cts/tensor.hpp"

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace cts {

inline constexpr int kDatasetFormatVersion = 1;

// Synthetic stand-in for the (private) medical datasets: one or more random
// foreground shapes with blurred boundary, multiplicative speckle, additive
// Gaussian noise and a smooth bias field.
struct SyntheticConfig {
    int image_size = 64;
    int n_train = 200;
    int n_val = 50;
    int n_test = 50;
    std::string shape_family = "mixed"; // ellipse | blob | mixed
    double speckle_strength = 0.15;
    double gaussian_noise_std = 0.05;
    double bias_field_strength = 0.25;
    std::uint64_t seed = 0;

    void validate() const {
        if (image_size < 16) throw std::invalid_argument("SyntheticConfig: image_size must be >= 16");
        if (n_train < 1 || n_val < 1 || n_test < 1)
            throw std::invalid_argument("SyntheticConfig: split sizes must be >= 1");
        if (speckle_strength < 0 || gaussian_noise_std < 0 || bias_field_strength < 0)
            throw std::invalid_argument("SyntheticConfig: noise strengths must be >= 0");
        if (shape_family != "ellipse" && shape_family != "blob" && shape_family != "mixed")
            throw std::invalid_argument("SyntheticConfig: unknown shape family '" + shape_family + "'");
    }
};

struct ManifestEntry {
    std::string id;
    std::string image_path; // relative to the dataset root
    std::string mask_path;
};

struct DatasetManifest {
    int format_version = kDatasetFormatVersion;
    SyntheticConfig config;
    std::vector<ManifestEntry> train, val, test;

    const std::vector<ManifestEntry>& split(const std::string& name) const;
};

// preprocessing applied on load (image scale is [0, 255] before normalization)
struct LoadOptions {
    bool anisotropic = true;
    int aniso_iters = 5;
    double aniso_kappa = 30.0;
    double aniso_gamma = 0.1;
    double lo_percentile = 1.0;
    double hi_percentile = 99.0;
};

struct SamplePair {
    ImageGrid image; // normalized to [-1, 1]
    MaskGrid mask;   // binary {0, 1}
    std::string id;
};

class Dataset {
public:
    DatasetManifest manifest;
    std::vector<SamplePair> train, val, test;

    const std::vector<SamplePair>& split(const std::string& name) const {
        if (name == "train") return train;
        if (name == "val") return val;
        if (name == "test") return test;
        throw std::invalid_argument("Dataset: unknown split '" + name + "'");
    }
};

struct Batch {
    Tensor<float> images;        // (N, 1, H, W), normalized
    Tensor<float> masks_encoded; // (N, 1, H, W), {-1, +1}
    Tensor<float> masks_label;   // (N, 1, H, W), {0, 1}
    std::vector<std::string> ids;
};

// Writes <out_dir>/{train,val,test}/{images,masks}/<id>.png plus
// <out_dir>/manifest.json. Byte-deterministic given (cfg, cfg.seed).
DatasetManifest generate_synthetic_dataset(const SyntheticConfig& cfg, const std::string& out_dir);

// Loads and validates a generated dataset; shape or binarity violations are
// load-time errors naming the offending sample id.
Dataset load_dataset(const std::string& dir, const LoadOptions& opts = {});

// Seeded shuffle, final partial batch included.
std::vector<Batch> iterate_batches(const Dataset& ds, const std::string& split, int batch_size,
                                   std::uint64_t epoch_seed);

} // namespace cts
