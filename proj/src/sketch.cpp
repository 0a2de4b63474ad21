// SPDX-License-Identifier: Apache-2.0

#include "ropim/sketch.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "ropim/kernels.hpp"
#include "ropim/rng.hpp"
#include "ropim/wire.hpp"

namespace ropim {

namespace {
constexpr char kMagic[4] = {'R', 'S', 'K', 'T'};
constexpr uint32_t kVersion = 1;
}  // namespace

void SketchSpec::validate() const {
    if (input_size == 0 || output_size == 0)
        throw std::invalid_argument("sketch: sizes must be positive");
    if (buckets.size() != input_size || signs.size() != input_size)
        throw std::invalid_argument("sketch: bucket/sign arrays must have one entry per input row");
    for (uint32_t b : buckets)
        if (b < 1 || b > output_size) throw std::invalid_argument("sketch: bucket index out of range");
    for (int8_t s : signs)
        if (s != 1 && s != -1) throw std::invalid_argument("sketch: signs must be +1 or -1");
    if (!(ratio > 0.0 && ratio <= 1.0)) throw std::invalid_argument("sketch: ratio must be in (0, 1]");
}

std::vector<uint32_t> SketchSpec::bucket_counts() const {
    std::vector<uint32_t> c(output_size, 0);
    for (uint32_t b : buckets) ++c[b - 1];
    return c;
}

uint32_t output_size_for(uint32_t input_size, double ratio) {
    if (!(ratio > 0.0 && ratio <= 1.0)) throw std::domain_error("ratio must be in (0, 1]");
    auto rounded = static_cast<uint32_t>(std::floor(ratio * input_size + 0.5));
    return rounded < 1 ? 1 : rounded;
}

uint32_t output_size_for(uint32_t input_size, uint32_t ratio_num, uint32_t ratio_den) {
    if (ratio_den == 0 || ratio_num == 0 || ratio_num > ratio_den)
        throw std::domain_error("ratio must be in (0, 1]");
    // floor(n*K/d + 1/2) = floor((2*n*K + d) / (2*d))
    const uint64_t num = 2ull * ratio_num * input_size + ratio_den;
    auto rounded = static_cast<uint32_t>(num / (2ull * ratio_den));
    return rounded < 1 ? 1 : rounded;
}

SketchSpec draw_sketch(uint32_t input_size, double ratio, uint64_t seed, SketchMode mode) {
    return draw_sketch(input_size, output_size_for(input_size, ratio), ratio, seed, mode);
}

SketchSpec draw_sketch(uint32_t input_size, uint32_t output_size, double ratio, uint64_t seed,
                       SketchMode mode) {
    if (input_size < 1) throw std::domain_error("input_size must be >= 1");
    if (!(ratio > 0.0 && ratio <= 1.0)) throw std::domain_error("ratio must be in (0, 1]");
    SketchSpec spec;
    spec.input_size = input_size;
    spec.output_size = output_size;
    spec.ratio = ratio;
    spec.mode = mode;
    spec.buckets.resize(input_size);
    spec.signs.resize(input_size);
    Rng rng(seed);
    for (uint32_t j = 0; j < input_size; ++j) spec.buckets[j] = 1 + rng.below(output_size);
    for (uint32_t j = 0; j < input_size; ++j) spec.signs[j] = rng.coin() ? int8_t(1) : int8_t(-1);
    return spec;
}

Mat<double> as_dense(const SketchSpec& spec) {
    Mat<double> p(spec.output_size, spec.input_size, 0.0);
    for (uint32_t j = 0; j < spec.input_size; ++j)
        p(spec.buckets[j] - 1, j) = static_cast<double>(spec.signs[j]);
    return p;
}

template <typename T>
Mat<T> project(const SketchSpec& spec, const Mat<T>& x) {
    if (x.rows() != spec.input_size)
        throw ShapeError("project: input rows must equal the sketch input size");
    const auto& k = kernels::table<T>();
    Mat<T> y(spec.output_size, x.cols(), T(0));
    for (uint32_t j = 0; j < spec.input_size; ++j)
        k.axpy(x.cols(), T(spec.signs[j]), x.row(j), y.row(spec.buckets[j] - 1));
    return y;
}

template <typename T>
Mat<T> retract(const SketchSpec& spec, const Mat<T>& y) {
    if (y.rows() != spec.output_size)
        throw ShapeError("retract: input rows must equal the sketch output size");
    const auto& k = kernels::table<T>();
    Mat<T> x(spec.input_size, y.cols());
    if (spec.mode == SketchMode::PaperScaled) {
        const T s = T(spec.output_size) / T(spec.input_size);
        for (uint32_t j = 0; j < spec.input_size; ++j)
            k.scale(y.cols(), T(spec.signs[j]) * s, y.row(spec.buckets[j] - 1), x.row(j));
    } else {
        const auto counts = spec.bucket_counts();
        for (uint32_t j = 0; j < spec.input_size; ++j) {
            const T s = T(spec.signs[j]) / T(counts[spec.buckets[j] - 1]);
            k.scale(y.cols(), s, y.row(spec.buckets[j] - 1), x.row(j));
        }
    }
    return x;
}

template <typename T>
Mat<T> roundtrip(const SketchSpec& spec, const Mat<T>& x) {
    return retract(spec, project(spec, x));
}

template <typename T>
Mat<T> complement_roundtrip(const SketchSpec& spec, const Mat<T>& x) {
    Mat<T> rt = roundtrip(spec, x);
    Mat<T> out(x.rows(), x.cols());
    kernels::table<T>().vsub(x.size(), x.data(), rt.data(), out.data());
    return out;
}

double estimate_inner_product(const SketchSpec& spec, std::span<const double> x,
                              std::span<const double> y) {
    if (x.size() != spec.input_size || y.size() != spec.input_size)
        throw ShapeError("estimate_inner_product: vector length must equal the sketch input size");
    std::vector<double> bx(spec.output_size, 0.0), by(spec.output_size, 0.0);
    for (uint32_t j = 0; j < spec.input_size; ++j) {
        const auto b = spec.buckets[j] - 1;
        const double s = spec.signs[j];
        bx[b] += s * x[j];
        by[b] += s * y[j];
    }
    double acc = 0.0;
    for (uint32_t i = 0; i < spec.output_size; ++i) acc += bx[i] * by[i];
    return acc;
}

size_t MaskSpec::count() const {
    size_t n = 0;
    for (uint8_t m : masked) n += m;
    return n;
}

std::pair<Mat<double>, MaskSpec> mask_tokens(double ratio, const Mat<double>& x, uint64_t seed) {
    if (!(ratio >= 0.0 && ratio <= 1.0)) throw std::domain_error("mask ratio must be in [0, 1]");
    const size_t n = x.rows();
    const auto count = static_cast<size_t>(std::floor(ratio * static_cast<double>(n) + 0.5));
    MaskSpec mask;
    mask.ratio = ratio;
    mask.masked.assign(n, 0);

    // Partial Fisher-Yates: the first `count` slots are a uniform sample
    // without replacement.
    std::vector<uint32_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0u);
    Rng rng(seed);
    for (size_t i = 0; i < count; ++i) {
        const size_t j = i + rng.below(static_cast<uint32_t>(n - i));
        std::swap(idx[i], idx[j]);
        mask.masked[idx[i]] = 1;
    }

    Mat<double> out = x;
    for (size_t i = 0; i < n; ++i)
        if (mask.masked[i])
            for (size_t d = 0; d < x.cols(); ++d) out(i, d) = 0.0;
    return {std::move(out), std::move(mask)};
}

std::vector<uint8_t> encode_sketch(const SketchSpec& spec) {
    spec.validate();
    std::vector<uint8_t> b;
    b.reserve(21 + spec.input_size * 5);
    wire::put_bytes(b, kMagic, 4);
    wire::put_u32(b, kVersion);
    wire::put_u32(b, spec.input_size);
    wire::put_u32(b, spec.output_size);
    wire::put_f64(b, spec.ratio);
    wire::put_u8(b, static_cast<uint8_t>(spec.mode));
    for (uint32_t h : spec.buckets) wire::put_u32(b, h);
    for (int8_t s : spec.signs) wire::put_i8(b, s);
    return b;
}

SketchSpec decode_sketch(const std::vector<uint8_t>& bytes) {
    wire::Reader r(bytes);
    if (r.str(4) != std::string(kMagic, 4)) throw wire::FormatError("sketch file: bad magic");
    if (r.u32() != kVersion) throw wire::FormatError("sketch file: unsupported version");
    SketchSpec spec;
    spec.input_size = r.u32();
    spec.output_size = r.u32();
    spec.ratio = r.f64();
    const uint8_t mode = r.u8();
    if (mode > 1) throw wire::FormatError("sketch file: unknown mode");
    spec.mode = static_cast<SketchMode>(mode);
    spec.buckets.resize(spec.input_size);
    for (auto& h : spec.buckets) h = r.u32();
    spec.signs.resize(spec.input_size);
    for (auto& s : spec.signs) s = r.i8();
    spec.validate();
    return spec;
}

void save_sketch(const std::string& path, const SketchSpec& spec) {
    wire::write_file(path, encode_sketch(spec));
}

SketchSpec load_sketch(const std::string& path) { return decode_sketch(wire::read_file(path)); }

template Mat<float> project<float>(const SketchSpec&, const Mat<float>&);
template Mat<double> project<double>(const SketchSpec&, const Mat<double>&);
template Mat<float> retract<float>(const SketchSpec&, const Mat<float>&);
template Mat<double> retract<double>(const SketchSpec&, const Mat<double>&);
template Mat<float> roundtrip<float>(const SketchSpec&, const Mat<float>&);
template Mat<double> roundtrip<double>(const SketchSpec&, const Mat<double>&);
template Mat<float> complement_roundtrip<float>(const SketchSpec&, const Mat<float>&);
template Mat<double> complement_roundtrip<double>(const SketchSpec&, const Mat<double>&);

}  // namespace ropim
