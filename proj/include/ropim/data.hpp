// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ropim/image.hpp"

namespace ropim {

struct ImageRecord {
    Image image;        // raw values in [0, 1]
    int32_t label = -1;  // -1 = unlabeled
};

struct ChannelStats {
    std::vector<double> mean;
    std::vector<double> stddev;  // clamped to >= 1e-6
};

struct Dataset {
    std::vector<ImageRecord> records;
    uint32_t class_count = 0;
    std::string split_tag;

    size_t size() const { return records.size(); }
    bool empty() const { return records.empty(); }
};

// Standard 3073-byte records: label byte, then 1024 red + 1024 green +
// 1024 blue, row-major. Pixels scaled to [0, 1]. One record buffer in
// memory at a time.
Dataset load_cifar10_file(const std::string& path, const std::string& split_tag = "train");

// Loads data_batch_1..5.bin (whichever exist, at least one required).
Dataset load_cifar10_train(const std::string& dir);
// Loads test_batch.bin.
Dataset load_cifar10_test(const std::string& dir);

// --data flag wins over ROPIM_DATA_DIR.
std::optional<std::string> resolve_data_dir(const std::string& flag_value);

// Class-conditioned blob images for CI runs: each class has a fixed blob
// layout, each sample jitters it. Deterministic in seed.
Dataset synthetic_dataset(size_t n, uint32_t image_size, uint32_t channels, uint32_t class_count,
                          uint64_t seed);

ChannelStats compute_stats(const Dataset& ds);
Image standardize_image(const Image& img, const ChannelStats& stats);
Image destandardize_image(const Image& img, const ChannelStats& stats);
std::pair<Dataset, ChannelStats> standardize(const Dataset& ds);

// Deterministic (seed, fraction) split of [0, n); first part has
// round(fraction * n) indices.
std::pair<std::vector<size_t>, std::vector<size_t>> split_indices(size_t n, double fraction,
                                                                  uint64_t seed);

}  // namespace ropim
