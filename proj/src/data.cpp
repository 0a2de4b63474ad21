// SPDX-License-Identifier: Apache-2.0

#include "ropim/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "ropim/rng.hpp"
#include "ropim/wire.hpp"

namespace ropim {

namespace {
constexpr size_t kCifarRecordBytes = 3073;
constexpr uint32_t kCifarSide = 32;
constexpr uint32_t kCifarChannels = 3;
constexpr size_t kCifarPlane = size_t(kCifarSide) * kCifarSide;
}  // namespace

Dataset load_cifar10_file(const std::string& path, const std::string& split_tag) {
    std::ifstream f(path, std::ios::binary | std::ios::ate);
    if (!f) throw std::runtime_error("cannot open dataset file: " + path);
    const auto file_size = static_cast<size_t>(f.tellg());
    if (file_size % kCifarRecordBytes != 0)
        throw wire::FormatError(path + ": size " + std::to_string(file_size) +
                                " is not a multiple of the " +
                                std::to_string(kCifarRecordBytes) + "-byte record");
    f.seekg(0);

    Dataset ds;
    ds.class_count = 10;
    ds.split_tag = split_tag;
    const size_t n = file_size / kCifarRecordBytes;
    ds.records.reserve(n);

    std::vector<uint8_t> rec(kCifarRecordBytes);
    for (size_t r = 0; r < n; ++r) {
        f.read(reinterpret_cast<char*>(rec.data()), static_cast<std::streamsize>(rec.size()));
        if (!f)
            throw wire::FormatError(path + ": truncated record at byte offset " +
                                    std::to_string(r * kCifarRecordBytes));
        const uint8_t label = rec[0];
        if (label > 9)
            throw wire::FormatError(path + ": label " + std::to_string(label) +
                                    " out of range at byte offset " +
                                    std::to_string(r * kCifarRecordBytes));
        ImageRecord ir;
        ir.label = label;
        ir.image = Image(kCifarSide, kCifarSide, kCifarChannels);
        // planar channels in the file -> interleaved H x W x C
        for (uint32_t i = 0; i < kCifarSide; ++i)
            for (uint32_t j = 0; j < kCifarSide; ++j)
                for (uint32_t c = 0; c < kCifarChannels; ++c)
                    ir.image.at(i, j, c) =
                        rec[1 + c * kCifarPlane + size_t(i) * kCifarSide + j] / 255.0;
        ds.records.push_back(std::move(ir));
    }
    return ds;
}

Dataset load_cifar10_train(const std::string& dir) {
    Dataset ds;
    ds.class_count = 10;
    ds.split_tag = "train";
    for (int b = 1; b <= 5; ++b) {
        const std::string path = dir + "/data_batch_" + std::to_string(b) + ".bin";
        if (!std::filesystem::exists(path)) continue;
        Dataset part = load_cifar10_file(path, "train");
        std::move(part.records.begin(), part.records.end(), std::back_inserter(ds.records));
    }
    if (ds.empty())
        throw std::runtime_error("no data_batch_*.bin files found under " + dir);
    return ds;
}

Dataset load_cifar10_test(const std::string& dir) {
    return load_cifar10_file(dir + "/test_batch.bin", "test");
}

std::optional<std::string> resolve_data_dir(const std::string& flag_value) {
    if (!flag_value.empty()) return flag_value;
    if (const char* env = std::getenv("ROPIM_DATA_DIR"); env && *env) return std::string(env);
    return std::nullopt;
}

namespace {

struct Blob {
    double row, col, radius, amp;
};

}  // namespace

Dataset synthetic_dataset(size_t n, uint32_t image_size, uint32_t channels, uint32_t class_count,
                          uint64_t seed) {
    if (n < 1) throw std::invalid_argument("synthetic_dataset: n must be >= 1");
    if (class_count < 1) throw std::invalid_argument("synthetic_dataset: need >= 1 class");

    // Fixed per-class blob layouts; samples jitter them.
    constexpr int kBlobs = 3;
    std::vector<std::vector<std::vector<Blob>>> layout(class_count);  // [class][channel][blob]
    for (uint32_t cls = 0; cls < class_count; ++cls) {
        Rng rng(hash_mix(seed, 0x636c6173u + cls));
        layout[cls].resize(channels);
        for (uint32_t c = 0; c < channels; ++c)
            for (int b = 0; b < kBlobs; ++b)
                layout[cls][c].push_back({0.15 + 0.7 * rng.uniform01(), 0.15 + 0.7 * rng.uniform01(),
                                          0.08 + 0.12 * rng.uniform01(),
                                          0.35 + 0.55 * rng.uniform01()});
    }

    Dataset ds;
    ds.class_count = class_count;
    ds.split_tag = "synthetic";
    ds.records.reserve(n);
    for (size_t i = 0; i < n; ++i) {
        const uint32_t cls = static_cast<uint32_t>(i % class_count);
        Rng rng(sub_seed(seed, 0x73796eu, i));
        ImageRecord rec;
        rec.label = static_cast<int32_t>(cls);
        rec.image = Image(image_size, image_size, channels);
        for (uint32_t c = 0; c < channels; ++c) {
            std::vector<Blob> blobs = layout[cls][c];
            for (auto& b : blobs) {
                b.row += 0.03 * rng.normal();
                b.col += 0.03 * rng.normal();
                b.amp *= 1.0 + 0.08 * rng.normal();
            }
            for (uint32_t i2 = 0; i2 < image_size; ++i2)
                for (uint32_t j2 = 0; j2 < image_size; ++j2) {
                    const double y = (i2 + 0.5) / image_size;
                    const double x = (j2 + 0.5) / image_size;
                    double v = 0.08;
                    for (const auto& b : blobs) {
                        const double dy = y - b.row, dx = x - b.col;
                        v += b.amp * std::exp(-(dy * dy + dx * dx) / (2.0 * b.radius * b.radius));
                    }
                    v += 0.02 * rng.normal();
                    rec.image.at(i2, j2, c) = std::clamp(v, 0.0, 1.0);
                }
        }
        ds.records.push_back(std::move(rec));
    }
    return ds;
}

ChannelStats compute_stats(const Dataset& ds) {
    if (ds.empty()) throw std::invalid_argument("compute_stats: empty dataset");
    const uint32_t channels = ds.records.front().image.channels;
    std::vector<double> sum(channels, 0.0), sumsq(channels, 0.0);
    size_t count = 0;
    for (const auto& rec : ds.records) {
        const Image& img = rec.image;
        for (uint32_t i = 0; i < img.height; ++i)
            for (uint32_t j = 0; j < img.width; ++j)
                for (uint32_t c = 0; c < channels; ++c) {
                    const double v = img.at(i, j, c);
                    sum[c] += v;
                    sumsq[c] += v * v;
                }
        count += size_t(img.height) * img.width;
    }
    ChannelStats stats;
    stats.mean.resize(channels);
    stats.stddev.resize(channels);
    for (uint32_t c = 0; c < channels; ++c) {
        stats.mean[c] = sum[c] / static_cast<double>(count);
        const double var = sumsq[c] / static_cast<double>(count) - stats.mean[c] * stats.mean[c];
        stats.stddev[c] = std::max(std::sqrt(std::max(var, 0.0)), 1e-6);
    }
    return stats;
}

Image standardize_image(const Image& img, const ChannelStats& stats) {
    Image out = img;
    for (uint32_t i = 0; i < img.height; ++i)
        for (uint32_t j = 0; j < img.width; ++j)
            for (uint32_t c = 0; c < img.channels; ++c)
                out.at(i, j, c) = (img.at(i, j, c) - stats.mean[c]) / stats.stddev[c];
    return out;
}

Image destandardize_image(const Image& img, const ChannelStats& stats) {
    Image out = img;
    for (uint32_t i = 0; i < img.height; ++i)
        for (uint32_t j = 0; j < img.width; ++j)
            for (uint32_t c = 0; c < img.channels; ++c)
                out.at(i, j, c) = img.at(i, j, c) * stats.stddev[c] + stats.mean[c];
    return out;
}

std::pair<Dataset, ChannelStats> standardize(const Dataset& ds) {
    ChannelStats stats = compute_stats(ds);
    Dataset out;
    out.class_count = ds.class_count;
    out.split_tag = ds.split_tag;
    out.records.reserve(ds.size());
    for (const auto& rec : ds.records)
        out.records.push_back({standardize_image(rec.image, stats), rec.label});
    return {std::move(out), std::move(stats)};
}

std::pair<std::vector<size_t>, std::vector<size_t>> split_indices(size_t n, double fraction,
                                                                  uint64_t seed) {
    if (!(fraction >= 0.0 && fraction <= 1.0))
        throw std::invalid_argument("split fraction must be in [0, 1]");
    std::vector<size_t> idx(n);
    std::iota(idx.begin(), idx.end(), size_t(0));
    Rng rng(seed);
    for (size_t i = 0; i + 1 < n; ++i) {
        const size_t j = i + rng.below(static_cast<uint32_t>(n - i));
        std::swap(idx[i], idx[j]);
    }
    const auto cut = static_cast<size_t>(std::floor(fraction * static_cast<double>(n) + 0.5));
    return {std::vector<size_t>(idx.begin(), idx.begin() + cut),
            std::vector<size_t>(idx.begin() + cut, idx.end())};
}

}  // namespace ropim
