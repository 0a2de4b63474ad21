// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ropim/data.hpp"
#include "ropim/image_io.hpp"
#include "ropim/matrix.hpp"
#include "ropim/pretrain.hpp"
#include "ropim/sketch.hpp"

namespace ropim {

// Per-token L1 distance between a token matrix and a corrupted copy.
std::vector<double> token_errors(const Mat<double>& x, const Mat<double>& x_corrupt);

struct TokenErrorRecord {
    uint32_t image;
    uint32_t token;
    double err_sketch;       // vs sketch round-trip
    double err_mask;         // vs zero-masked rows
    double err_sketch_comp;  // vs complement round-trip
    double err_unmask;       // vs kept-rows-only complement of masking
};

struct ErrorStudyParams {
    size_t n_images = 1000;
    uint32_t token_grid = 16;  // tokens per image side
    double rho = 0.25;
    double mask_ratio = 0.75;
    double threshold = 0.1;
    uint64_t seed = 0;
    uint32_t threads = 0;
    SketchMode mode = SketchMode::PaperScaled;
};

struct ErrorStudySummary {
    size_t images = 0;
    size_t tokens_per_image = 0;
    size_t mask_count_per_image = 0;
    // soft-mask side
    double frac_images_sketch_count_gt_mask = 0.0;  // images where more tokens pass the threshold
    double mean_count_sketch = 0.0;
    double mean_count_mask = 0.0;
    double mean_sketch_err_per_token = 0.0;   // over all tokens
    double mean_mask_err_per_masked = 0.0;    // over masked tokens
    // complement side
    double frac_images_comp_count_gt_unmask = 0.0;
    double mean_count_comp = 0.0;
    double mean_count_unmask = 0.0;
    double mean_comp_err_per_token = 0.0;
    double mean_unmask_err_per_kept = 0.0;  // over tokens a mask would keep
};

// Token-level corruption statistics of the sketch round-trip vs binary
// masking on raw [0, 1] pixels (no learned embedding). Writes one CSV row
// per (image, token) when csv_path is nonempty.
ErrorStudySummary error_study(const Dataset& dataset, const ErrorStudyParams& params,
                              const std::string& csv_path = "",
                              std::vector<TokenErrorRecord>* records_out = nullptr);

std::string summary_to_json(const ErrorStudySummary& s, const ErrorStudyParams& p);

struct VisualizeResult {
    std::string original_path, roundtrip_path, complement_path, sum_path;
    double max_pre_quantization_diff = 0.0;  // |roundtrip + complement - original|, raw values
    uint8_t max_post_quantization_diff = 0;  // sum.ppm vs original.ppm, bytes
};

// Emits original / round-trip / complement / their sum for one image at
// the given ratio. Signed images are rendered through a per-image min-max
// display map recorded in a .meta sidecar; the additivity check runs on
// raw values before quantization.
VisualizeResult visualize(const Image& image, double rho, uint64_t seed,
                          const std::string& out_dir, SketchMode mode = SketchMode::PaperScaled,
                          uint32_t token_grid = 16);

struct ReconstructResult {
    std::string original_path, sketched_path, predicted_path, sum_path;
    double l1_sketched_vs_original = 0.0;  // corruption left in the model input
    double l1_sum_vs_original = 0.0;       // corruption left after adding the prediction
};

// Model-space demo: sketched input, the model's predicted complement, and
// their sum, all in the standardized domain the model was trained on.
// Pass an empty out_dir to compute distances without writing files.
template <typename T>
ReconstructResult reconstruct_demo(const ViTModel<T>& model, const ChannelStats& stats,
                                   const Image& image, double rho, uint64_t seed,
                                   const std::string& out_dir,
                                   SketchMode mode = SketchMode::PaperScaled);

}  // namespace ropim
