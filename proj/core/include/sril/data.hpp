#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sril/tensor.hpp"

namespace sril {

// In-memory labelled dataset. Features are stored row-major, one sample per
// row of prod(sample_shape) doubles.
struct Dataset {
    std::string id;
    Shape sample_shape;  // {d} for tabular, {C,H,W} for images
    std::vector<double> features;
    std::vector<int> labels;
    int num_classes = 0;

    std::size_t size() const { return labels.size(); }
    std::size_t sample_size() const { return static_cast<std::size_t>(shape_numel(sample_shape)); }

    // Stack the given samples into a (B, ...) tensor.
    Tensor batch(const std::vector<int>& indices) const;
    std::vector<int> indices_of_class(int label) const;
};

struct BlobsConfig {
    int classes = 16;
    int dim = 8;
    int train_per_class = 200;
    int test_per_class = 50;
    double spread = 0.3;
    std::uint64_t seed = 0;
};

// Gaussian clusters with unit-norm centers; train/test share centers.
std::pair<Dataset, Dataset> make_blobs(const BlobsConfig& cfg);

struct RingsConfig {
    int classes = 4;
    int train_per_class = 200;
    int test_per_class = 50;
    double spread = 0.1;
    double radius_step = 1.0;
    std::uint64_t seed = 0;
};

// Concentric 2-D annuli, one radius per class.
std::pair<Dataset, Dataset> make_rings(const RingsConfig& cfg);

// MNIST-compatible IDX files (big-endian dims, magic 0x803/0x801).
// Pixel values are scaled to [0,1].
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

// CSV with a named label column; all other columns are numeric features.
Dataset load_csv(const std::string& path, const std::string& label_column);

}  // namespace sril
