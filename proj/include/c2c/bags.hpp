#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "c2c/idx.hpp"
#include "c2c/rng.hpp"

namespace c2c {

// One digit image inside a bag. source_label is the digit the instance was
// drawn from; it is kept for diagnostics only and the model never sees it.
struct Instance {
    int instance_id = 0;
    int source_label = 0;
    int rows = 28;
    int cols = 28;
    std::vector<double> pixels; // rows*cols, values in [0,1]

    bool operator==(const Instance&) const = default;
};

struct Bag {
    int bag_id = 0;
    int label = 0; // 1 iff the bag contains a positive-digit instance
    std::vector<Instance> instances;

    bool operator==(const Bag&) const = default;
};

struct BagDatasetConfig {
    int n_train_bags = 100;
    int n_test_bags = 40;
    double mean_bag_size = 50.0;
    double bag_size_std = 10.0;
    std::vector<int> positive_digits = {8, 9};
    std::uint64_t seed = 0;
    bool balance = true; // force ~50/50 positive/negative per split

    void validate() const; // throws ArgumentError

    bool operator==(const BagDatasetConfig&) const = default;
};

struct BagDataset {
    BagDatasetConfig config;
    std::vector<Bag> train;
    std::vector<Bag> test;

    bool operator==(const BagDataset&) const = default;
};

struct PoolItem {
    std::vector<double> pixels;
    int digit = 0;
    int rows = 28;
    int cols = 28;
};
using DigitPool = std::vector<PoolItem>;

// Pairs an IDX image file with its label file; throws LengthError on a
// count mismatch.
DigitPool make_pool(const IdxImages& images, const std::vector<int>& labels);
DigitPool load_pool(const std::string& images_path, const std::string& labels_path);

// Draws train and test bags from the pool (uniformly, with replacement).
// Bag sizes are Normal(mean, std) rounded to the nearest integer and clamped
// to >= 2. With balance=true each split gets ceil(n/2) positive bags (one
// positive-digit instance injected if none was drawn) and floor(n/2) negative
// bags (positive-digit draws rejected). Deterministic given (pool, config).
BagDataset generate_bags(const DigitPool& pool, const BagDatasetConfig& config);

// Dataset manifest container. Self-describing: version, config echo, counts
// and a payload checksum; pixels are stored inline so manifests are portable.
// Saving the same dataset twice produces byte-identical files.
void save_manifest(const BagDataset& dataset, const std::string& path);
BagDataset load_manifest(const std::string& path);

} // namespace c2c
