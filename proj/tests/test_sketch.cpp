// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <vector>

#include "ropim/rng.hpp"
#include "ropim/sketch.hpp"
#include "ropim/wire.hpp"

using namespace ropim;

namespace {

SketchSpec make_spec(std::vector<uint32_t> buckets, std::vector<int8_t> signs, uint32_t out_size,
                     double ratio, SketchMode mode = SketchMode::PaperScaled) {
    SketchSpec s;
    s.buckets = std::move(buckets);
    s.signs = std::move(signs);
    s.input_size = static_cast<uint32_t>(s.buckets.size());
    s.output_size = out_size;
    s.ratio = ratio;
    s.mode = mode;
    s.validate();
    return s;
}

// the two-token collapsing sketch used across the worked examples
SketchSpec two_to_one(SketchMode mode = SketchMode::PaperScaled) {
    return make_spec({1, 1}, {1, -1}, 1, 0.5, mode);
}

SketchSpec signed_permutation(uint32_t n, uint64_t seed) {
    std::vector<uint32_t> buckets(n);
    std::vector<int8_t> signs(n);
    Rng rng(seed);
    for (uint32_t i = 0; i < n; ++i) buckets[i] = i + 1;
    for (uint32_t i = 0; i + 1 < n; ++i) std::swap(buckets[i], buckets[i + rng.below(n - i)]);
    for (auto& s : signs) s = rng.coin() ? 1 : -1;
    return make_spec(std::move(buckets), std::move(signs), n, 1.0);
}

Mat<double> random_mat(Rng& rng, size_t r, size_t c, double lo = -2, double hi = 2) {
    Mat<double> m(r, c);
    for (auto& v : m.values()) v = lo + (hi - lo) * rng.uniform01();
    return m;
}

Mat<double> dense_apply(const Mat<double>& p, const Mat<double>& x) {
    Mat<double> y(p.rows(), x.cols(), 0.0);
    for (size_t i = 0; i < p.rows(); ++i)
        for (size_t k = 0; k < p.cols(); ++k)
            for (size_t j = 0; j < x.cols(); ++j) y(i, j) += p(i, k) * x(k, j);
    return y;
}

}  // namespace

TEST_SUITE("sketch") {
    TEST_CASE("output size rounding") {
        CHECK(output_size_for(4, 0.5) == 2);
        CHECK(output_size_for(7, 1.0 / 7.0) == 1);
        CHECK(output_size_for(64, 0.25) == 16);
        CHECK(output_size_for(2, 0.25) == 1);    // floor would be 0; clamped
        CHECK(output_size_for(6, 0.25) == 2);    // 1.5 rounds half-up
        CHECK(output_size_for(6, 1u, 4u) == 2);  // rational path agrees
        CHECK(output_size_for(256, 1u, 4u) == 64);
        CHECK(output_size_for(256, 1u, 7u) == 37);
        CHECK_THROWS_AS(output_size_for(4, 0.0), std::domain_error);
        CHECK_THROWS_AS(output_size_for(4, 1.5), std::domain_error);
    }

    TEST_CASE("draw: ranges forced by construction") {
        const SketchSpec s = draw_sketch(4, 0.5, 99, SketchMode::PaperScaled);
        CHECK(s.output_size == 2);
        for (uint32_t b : s.buckets) {
            CHECK(b >= 1);
            CHECK(b <= 2);
        }
        for (int8_t x : s.signs) CHECK((x == 1 || x == -1));
    }

    TEST_CASE("draw: single bucket when the ratio collapses everything") {
        const SketchSpec s = draw_sketch(7, 1.0 / 7.0, 1234, SketchMode::PaperScaled);
        CHECK(s.output_size == 1);
        for (uint32_t b : s.buckets) CHECK(b == 1);
    }

    TEST_CASE("draw: deterministic in the seed") {
        const SketchSpec a = draw_sketch(64, 0.25, 42, SketchMode::PaperScaled);
        const SketchSpec b = draw_sketch(64, 0.25, 42, SketchMode::PaperScaled);
        CHECK(a.buckets == b.buckets);
        CHECK(a.signs == b.signs);
        CHECK(draw_sketch(64, 0.25, 43, SketchMode::PaperScaled).buckets != a.buckets);
    }

    TEST_CASE("draw: golden seeded value, frozen") {
        const SketchSpec s = draw_sketch(64, 0.25, 42, SketchMode::PaperScaled);
        // head of the seed-42 draw, pinned once from the first verified run
        const std::vector<uint32_t> head(s.buckets.begin(), s.buckets.begin() + 8);
        CHECK(head == std::vector<uint32_t>{12, 3, 5, 6, 1, 14, 4, 13});
        const std::vector<int8_t> sign_head(s.signs.begin(), s.signs.begin() + 8);
        CHECK(sign_head == std::vector<int8_t>{-1, 1, -1, -1, 1, -1, -1, 1});
        // byte-exact serialized form against the committed fixture
        const std::string path = std::string(ROPIM_FIXTURE_DIR) + "/sketch_golden_k64.bin";
        REQUIRE(std::filesystem::exists(path));
        CHECK(encode_sketch(s) == wire::read_file(path));
    }

    TEST_CASE("dense form transcribes the assignments") {
        const Mat<double> p1 = as_dense(two_to_one());
        CHECK(p1.rows() == 1);
        CHECK(p1.cols() == 2);
        CHECK(p1(0, 0) == 1.0);
        CHECK(p1(0, 1) == -1.0);

        const Mat<double> ident = as_dense(make_spec({1, 2, 3}, {1, 1, 1}, 3, 1.0));
        for (size_t i = 0; i < 3; ++i)
            for (size_t j = 0; j < 3; ++j) CHECK(ident(i, j) == (i == j ? 1.0 : 0.0));

        const Mat<double> p2 = as_dense(make_spec({1, 1, 2, 2}, {1, -1, 1, -1}, 2, 0.5));
        const std::vector<double> expect = {1, -1, 0, 0, 0, 0, 1, -1};
        CHECK(p2.values() == expect);
    }

    TEST_CASE("project worked example") {
        Mat<double> x(2, 1, {3.0, 1.0});
        const Mat<double> y = project(two_to_one(), x);
        CHECK(y.rows() == 1);
        CHECK(y(0, 0) == doctest::Approx(2.0).epsilon(1e-15));
    }

    TEST_CASE("project: signed permutation permutes and flips") {
        Rng rng(5);
        const SketchSpec s = signed_permutation(8, 17);
        const Mat<double> x = random_mat(rng, 8, 3);
        const Mat<double> y = project(s, x);
        for (uint32_t j = 0; j < 8; ++j)
            for (size_t d = 0; d < 3; ++d) CHECK(y(s.buckets[j] - 1, d) == s.signs[j] * x(j, d));
    }

    TEST_CASE("project of zero is zero") {
        const Mat<double> x(4, 3, 0.0);
        const SketchSpec s = draw_sketch(4, 0.5, 7, SketchMode::PaperScaled);
        for (double v : project(s, x).values()) CHECK(v == 0.0);
    }

    TEST_CASE("retract worked example, both normalizations") {
        Mat<double> y(1, 1, {2.0});
        const Mat<double> paper = retract(two_to_one(SketchMode::PaperScaled), y);
        CHECK(paper(0, 0) == doctest::Approx(1.0).epsilon(1e-15));
        CHECK(paper(1, 0) == doctest::Approx(-1.0).epsilon(1e-15));
        // both tokens share the one bucket, so the occupancy scale equals
        // the size-ratio scale here
        const Mat<double> exact = retract(two_to_one(SketchMode::ExactProjector), y);
        CHECK(exact(0, 0) == doctest::Approx(1.0).epsilon(1e-15));
        CHECK(exact(1, 0) == doctest::Approx(-1.0).epsilon(1e-15));
    }

    TEST_CASE("retract: signed permutation is plain transpose") {
        Rng rng(6);
        const SketchSpec s = signed_permutation(6, 23);
        const Mat<double> y = random_mat(rng, 6, 2);
        const Mat<double> x = retract(s, y);
        for (uint32_t j = 0; j < 6; ++j)
            for (size_t d = 0; d < 2; ++d) CHECK(x(j, d) == s.signs[j] * y(s.buckets[j] - 1, d));
    }

    TEST_CASE("retract with an empty bucket stays finite") {
        const SketchSpec s = make_spec({1, 1}, {1, 1}, 2, 1.0, SketchMode::ExactProjector);
        Mat<double> y(2, 1, {4.0, 9.0});
        const Mat<double> x = retract(s, y);
        CHECK(x(0, 0) == doctest::Approx(2.0));
        CHECK(x(1, 0) == doctest::Approx(2.0));
    }

    TEST_CASE("roundtrip worked example") {
        Mat<double> x(2, 1, {3.0, 1.0});
        const Mat<double> rt = roundtrip(two_to_one(), x);
        CHECK(rt(0, 0) == doctest::Approx(1.0).epsilon(1e-15));
        CHECK(rt(1, 0) == doctest::Approx(-1.0).epsilon(1e-15));
    }

    TEST_CASE("roundtrip: lossless under a signed permutation") {
        Rng rng(8);
        const SketchSpec s = signed_permutation(12, 31);
        const Mat<double> x = random_mat(rng, 12, 4);
        CHECK(max_abs_diff(roundtrip(s, x), x) < 1e-15);
    }

    TEST_CASE("complement worked example and exact decomposition") {
        Mat<double> x(2, 1, {3.0, 1.0});
        const Mat<double> comp = complement_roundtrip(two_to_one(), x);
        CHECK(comp(0, 0) == doctest::Approx(2.0).epsilon(1e-15));
        CHECK(comp(1, 0) == doctest::Approx(2.0).epsilon(1e-15));

        Rng rng(9);
        for (int c = 0; c < 50; ++c) {
            const uint32_t k = 1 + rng.below(96);
            const auto mode = c % 2 ? SketchMode::PaperScaled : SketchMode::ExactProjector;
            const SketchSpec s =
                draw_sketch(k, (1.0 + rng.below(100)) / 100.0, rng.next_u64(), mode);
            const Mat<double> xs = random_mat(rng, k, 1 + rng.below(8));
            const Mat<double> rt = roundtrip(s, xs);
            const Mat<double> cp = complement_roundtrip(s, xs);
            for (size_t i = 0; i < xs.size(); ++i)
                CHECK(std::abs(rt.values()[i] + cp.values()[i] - xs.values()[i]) < 1e-12);
        }
    }

    TEST_CASE("complement of a signed permutation is the zero map") {
        Rng rng(10);
        const SketchSpec s = signed_permutation(9, 77);
        const Mat<double> x = random_mat(rng, 9, 2);
        for (double v : complement_roundtrip(s, x).values()) CHECK(std::abs(v) < 1e-15);
    }

    TEST_CASE("inner product estimate worked examples") {
        // collapsing sketch: (3-1) * (1-1) = 0
        std::vector<double> x = {3.0, 1.0}, y = {1.0, 1.0};
        CHECK(estimate_inner_product(two_to_one(), x, y) == doctest::Approx(0.0));

        const SketchSpec perm = signed_permutation(16, 3);
        Rng rng(11);
        std::vector<double> a(16), b(16);
        for (auto& v : a) v = rng.normal();
        for (auto& v : b) v = rng.normal();
        double ip = 0;
        for (int i = 0; i < 16; ++i) ip += a[i] * b[i];
        CHECK(estimate_inner_product(perm, a, b) == doctest::Approx(ip).epsilon(1e-12));

        std::vector<double> zeros(16, 0.0);
        CHECK(estimate_inner_product(perm, zeros, zeros) == 0.0);
    }

    TEST_CASE("sparse path equals the dense oracle") {
        Rng rng(12);
        for (int c = 0; c < 100; ++c) {
            const uint32_t k = 1 + rng.below(64);
            const uint32_t d = 1 + rng.below(16);
            const SketchSpec s = draw_sketch(k, (1.0 + rng.below(100)) / 100.0, rng.next_u64(),
                                             SketchMode::PaperScaled);
            const Mat<double> x = random_mat(rng, k, d);
            const Mat<double> p = as_dense(s);
            CHECK(max_abs_diff(project(s, x), dense_apply(p, x)) < 1e-12);
        }
    }

    TEST_CASE("masking: edge ratios and the worked count") {
        Rng rng(13);
        const Mat<double> x = random_mat(rng, 16, 3);
        auto [same, none] = mask_tokens(0.0, x, 5);
        CHECK(none.count() == 0);
        CHECK(max_abs_diff(same, x) == 0.0);

        auto [zeroed, all] = mask_tokens(1.0, x, 5);
        CHECK(all.count() == 16);
        for (double v : zeroed.values()) CHECK(v == 0.0);

        const Mat<double> big(256, 2, 1.0);
        auto [masked, m] = mask_tokens(0.75, big, 7);
        CHECK(m.count() == 192);
        size_t zero_rows = 0;
        for (size_t i = 0; i < 256; ++i) zero_rows += (masked(i, 0) == 0.0 && masked(i, 1) == 0.0);
        CHECK(zero_rows == 192);
    }

    TEST_CASE("masking is deterministic in the seed") {
        Rng rng(14);
        const Mat<double> x = random_mat(rng, 32, 2);
        auto [a, ma] = mask_tokens(0.5, x, 123);
        auto [b, mb] = mask_tokens(0.5, x, 123);
        CHECK(ma.masked == mb.masked);
        auto [c, mc] = mask_tokens(0.5, x, 124);
        CHECK(ma.masked != mc.masked);
    }

    TEST_CASE("serialization round-trips and rejects damage") {
        const SketchSpec s = draw_sketch(33, 0.3, 555, SketchMode::ExactProjector);
        const auto bytes = encode_sketch(s);
        const SketchSpec back = decode_sketch(bytes);
        CHECK(back.buckets == s.buckets);
        CHECK(back.signs == s.signs);
        CHECK(back.output_size == s.output_size);
        CHECK(back.mode == s.mode);
        CHECK(back.ratio == s.ratio);

        auto truncated = bytes;
        truncated.resize(truncated.size() - 3);
        CHECK_THROWS_AS(decode_sketch(truncated), wire::FormatError);

        auto bad_magic = bytes;
        bad_magic[0] = 'X';
        CHECK_THROWS_AS(decode_sketch(bad_magic), wire::FormatError);
    }

    TEST_CASE("error paths") {
        CHECK_THROWS_AS(draw_sketch(4, 1.2, 0, SketchMode::PaperScaled), std::domain_error);
        CHECK_THROWS_AS(draw_sketch(4, 0.0, 0, SketchMode::PaperScaled), std::domain_error);
        const SketchSpec s = draw_sketch(4, 0.5, 0, SketchMode::PaperScaled);
        Mat<double> wrong(3, 2, 0.0);
        CHECK_THROWS_AS(project(s, wrong), ShapeError);
        CHECK_THROWS_AS(retract(s, wrong), ShapeError);
        std::vector<double> short_vec(3, 0.0);
        CHECK_THROWS_AS(estimate_inner_product(s, short_vec, short_vec), ShapeError);

        SketchSpec broken = s;
        broken.buckets[0] = 99;
        CHECK_THROWS_AS(broken.validate(), std::invalid_argument);
    }

    TEST_CASE("projection cost scales linearly in the token count") {
        Rng rng(15);
        auto time_project = [&](uint32_t k) {
            const SketchSpec s = draw_sketch(k, 0.25, 77, SketchMode::PaperScaled);
            Mat<double> x = random_mat(rng, k, 768);
            double sink = 0.0;
            std::vector<double> samples;
            for (int rep = 0; rep < 7; ++rep) {
                const auto t0 = std::chrono::steady_clock::now();
                const Mat<double> y = project(s, x);
                const auto t1 = std::chrono::steady_clock::now();
                sink += y(0, 0);
                samples.push_back(std::chrono::duration<double>(t1 - t0).count());
            }
            std::sort(samples.begin(), samples.end());
            return samples[samples.size() / 2] + (std::isfinite(sink) ? 0.0 : 1.0);
        };
        const double t_small = time_project(2048);
        const double t_big = time_project(4096);
        CHECK(t_big / t_small < 2.5);
    }
}
