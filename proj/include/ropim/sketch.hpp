// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ropim/matrix.hpp"

namespace ropim {

/// Pseudo-inverse normalization for the retraction.
///   PaperScaled:    constant output/input size ratio applied to the transpose.
///   ExactProjector: per-bucket occupancy counts; makes the round-trip an
///                   exact (idempotent, symmetric) orthogonal projector.
enum class SketchMode : uint8_t { PaperScaled = 0, ExactProjector = 1 };

/// A drawn count-sketch: every input row is assigned one output bucket and a
/// random sign. The dense equivalent has exactly one +/-1 per column.
/// Immutable after construction; safe to share across threads.
struct SketchSpec {
    std::vector<uint32_t> buckets;  // 1-based bucket index per input row
    std::vector<int8_t> signs;      // +1 or -1 per input row
    uint32_t input_size = 0;        // number of input rows (tokens)
    uint32_t output_size = 0;       // number of buckets
    double ratio = 0.0;             // requested output/input ratio
    SketchMode mode = SketchMode::PaperScaled;

    void validate() const;  // throws std::invalid_argument on any broken invariant
    std::vector<uint32_t> bucket_counts() const;
};

/// Output size under round-half-up; never below 1.
uint32_t output_size_for(uint32_t input_size, double ratio);
/// Same rounding rule evaluated in exact integer arithmetic, for ratios
/// carried as rationals (e.g. 1/7) so no floating-point drift can flip it.
uint32_t output_size_for(uint32_t input_size, uint32_t ratio_num, uint32_t ratio_den);

/// Draw bucket and sign assignments uniformly. Deterministic in seed.
/// Throws std::domain_error unless 0 < ratio <= 1.
SketchSpec draw_sketch(uint32_t input_size, double ratio, uint64_t seed, SketchMode mode);
/// Variant with the output size pinned by the caller.
SketchSpec draw_sketch(uint32_t input_size, uint32_t output_size, double ratio, uint64_t seed,
                       SketchMode mode);

/// Dense equivalent of the sketch map, output_size x input_size.
Mat<double> as_dense(const SketchSpec& spec);

/// Bucket-accumulate rows: output_size x D from input_size x D.
/// O(input_size * D) time; the dense map is never materialized.
template <typename T>
Mat<T> project(const SketchSpec& spec, const Mat<T>& x);

/// Map bucket rows back to token rows through the pseudo-inverse.
template <typename T>
Mat<T> retract(const SketchSpec& spec, const Mat<T>& y);

/// retract(project(x)): the lossy soft-masking operator.
template <typename T>
Mat<T> roundtrip(const SketchSpec& spec, const Mat<T>& x);

/// x - roundtrip(x). By construction roundtrip + complement_roundtrip
/// reproduces x exactly.
template <typename T>
Mat<T> complement_roundtrip(const SketchSpec& spec, const Mat<T>& x);

/// Inner product of the two projections; an unbiased estimate of <x, y>.
double estimate_inner_product(const SketchSpec& spec, std::span<const double> x,
                              std::span<const double> y);

/// Token-removal baseline: zero out a uniform sample of rows.
struct MaskSpec {
    std::vector<uint8_t> masked;  // 1 = row zeroed
    double ratio = 0.0;
    size_t count() const;
};

std::pair<Mat<double>, MaskSpec> mask_tokens(double ratio, const Mat<double>& x, uint64_t seed);

// Binary encoding used by the golden-value tests.
std::vector<uint8_t> encode_sketch(const SketchSpec& spec);
SketchSpec decode_sketch(const std::vector<uint8_t>& bytes);
void save_sketch(const std::string& path, const SketchSpec& spec);
SketchSpec load_sketch(const std::string& path);

}  // namespace ropim
