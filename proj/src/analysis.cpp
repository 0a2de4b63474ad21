// SPDX-License-Identifier: Apache-2.0

#include "ropim/analysis.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "ropim/rng.hpp"
#include "ropim/threading.hpp"
#include "ropim/vit.hpp"

namespace ropim {

std::vector<double> token_errors(const Mat<double>& x, const Mat<double>& x_corrupt) {
    if (!x.same_shape(x_corrupt)) throw ShapeError("token_errors: shape mismatch");
    std::vector<double> errs(x.rows());
    for (size_t i = 0; i < x.rows(); ++i) {
        double e = 0.0;
        for (size_t j = 0; j < x.cols(); ++j) e += std::abs(x(i, j) - x_corrupt(i, j));
        errs[i] = e;
    }
    return errs;
}

namespace {

struct PerImage {
    std::vector<double> err_sketch, err_mask, err_comp, err_unmask;
    size_t count_sketch = 0, count_mask = 0, count_comp = 0, count_unmask = 0;
    size_t masked = 0;
};

size_t count_above(const std::vector<double>& v, double thr) {
    size_t n = 0;
    for (double x : v) n += (x > thr);
    return n;
}

}  // namespace

ErrorStudySummary error_study(const Dataset& dataset, const ErrorStudyParams& params,
                              const std::string& csv_path,
                              std::vector<TokenErrorRecord>* records_out) {
    if (dataset.empty()) throw std::invalid_argument("error_study: empty dataset");
    const size_t n_images = std::min(params.n_images, dataset.size());
    const Image& first = dataset.records.front().image;
    if (first.height != first.width || first.height % params.token_grid != 0)
        throw ShapeError("error_study: images do not divide into the token grid");
    const uint32_t patch = first.height / params.token_grid;
    const size_t tokens = size_t(params.token_grid) * params.token_grid;

    std::vector<PerImage> per_image(n_images);
    parallel_for(n_images, params.threads, [&](size_t i) {
        const Mat<double> x = patchify(dataset.records[i].image, patch);
        const SketchSpec spec = draw_sketch(static_cast<uint32_t>(tokens), params.rho,
                                            sub_seed(params.seed, 0, i), params.mode);
        const Mat<double> rt = roundtrip(spec, x);
        const Mat<double> comp = complement_roundtrip(spec, x);
        auto [masked_x, mask] = mask_tokens(params.mask_ratio, x, sub_seed(params.seed, 1, i));
        Mat<double> unmasked_x(x.rows(), x.cols());  // keeps only the rows masking removes
        for (size_t r = 0; r < x.rows(); ++r)
            for (size_t c = 0; c < x.cols(); ++c)
                unmasked_x(r, c) = x(r, c) - masked_x(r, c);

        PerImage& rec = per_image[i];
        rec.err_sketch = token_errors(x, rt);
        rec.err_mask = token_errors(x, masked_x);
        rec.err_comp = token_errors(x, comp);
        rec.err_unmask = token_errors(x, unmasked_x);
        rec.count_sketch = count_above(rec.err_sketch, params.threshold);
        rec.count_mask = count_above(rec.err_mask, params.threshold);
        rec.count_comp = count_above(rec.err_comp, params.threshold);
        rec.count_unmask = count_above(rec.err_unmask, params.threshold);
        rec.masked = mask.count();
    });

    ErrorStudySummary s;
    s.images = n_images;
    s.tokens_per_image = tokens;
    s.mask_count_per_image = per_image.empty() ? 0 : per_image.front().masked;

    double sum_sketch = 0, sum_mask = 0, sum_comp = 0, sum_unmask = 0;
    size_t total_masked = 0, total_kept = 0;
    size_t sketch_wins = 0, comp_wins = 0;
    for (const auto& rec : per_image) {
        for (double e : rec.err_sketch) sum_sketch += e;
        for (double e : rec.err_mask) sum_mask += e;
        for (double e : rec.err_comp) sum_comp += e;
        for (double e : rec.err_unmask) sum_unmask += e;
        total_masked += rec.masked;
        total_kept += tokens - rec.masked;
        sketch_wins += (rec.count_sketch > rec.count_mask);
        comp_wins += (rec.count_comp > rec.count_unmask);
        s.mean_count_sketch += static_cast<double>(rec.count_sketch);
        s.mean_count_mask += static_cast<double>(rec.count_mask);
        s.mean_count_comp += static_cast<double>(rec.count_comp);
        s.mean_count_unmask += static_cast<double>(rec.count_unmask);
    }
    const auto dn = static_cast<double>(n_images);
    const auto total_tokens = static_cast<double>(n_images * tokens);
    s.frac_images_sketch_count_gt_mask = static_cast<double>(sketch_wins) / dn;
    s.frac_images_comp_count_gt_unmask = static_cast<double>(comp_wins) / dn;
    s.mean_count_sketch /= dn;
    s.mean_count_mask /= dn;
    s.mean_count_comp /= dn;
    s.mean_count_unmask /= dn;
    s.mean_sketch_err_per_token = sum_sketch / total_tokens;
    s.mean_comp_err_per_token = sum_comp / total_tokens;
    s.mean_mask_err_per_masked = total_masked ? sum_mask / static_cast<double>(total_masked) : 0.0;
    s.mean_unmask_err_per_kept = total_kept ? sum_unmask / static_cast<double>(total_kept) : 0.0;

    if (!csv_path.empty()) {
        std::ofstream f(csv_path, std::ios::trunc);
        if (!f) throw std::runtime_error("cannot open for writing: " + csv_path);
        f << "image,token,err_sketch,err_mask,err_sketch_comp,err_unmask\n";
        char line[160];
        for (size_t i = 0; i < n_images; ++i)
            for (size_t t = 0; t < tokens; ++t) {
                const auto& rec = per_image[i];
                std::snprintf(line, sizeof(line), "%zu,%zu,%.6g,%.6g,%.6g,%.6g\n", i, t,
                              rec.err_sketch[t], rec.err_mask[t], rec.err_comp[t],
                              rec.err_unmask[t]);
                f << line;
            }
        if (!f) throw std::runtime_error("write failed: " + csv_path);
    }

    if (records_out) {
        records_out->clear();
        records_out->reserve(n_images * tokens);
        for (size_t i = 0; i < n_images; ++i)
            for (size_t t = 0; t < tokens; ++t)
                records_out->push_back({static_cast<uint32_t>(i), static_cast<uint32_t>(t),
                                        per_image[i].err_sketch[t], per_image[i].err_mask[t],
                                        per_image[i].err_comp[t], per_image[i].err_unmask[t]});
    }
    return s;
}

std::string summary_to_json(const ErrorStudySummary& s, const ErrorStudyParams& p) {
    char buf[1024];
    std::snprintf(buf, sizeof(buf),
                  "{\n"
                  "  \"images\": %zu,\n"
                  "  \"tokens_per_image\": %zu,\n"
                  "  \"rho\": %.6g,\n"
                  "  \"mask_ratio\": %.6g,\n"
                  "  \"threshold\": %.6g,\n"
                  "  \"mask_count_per_image\": %zu,\n"
                  "  \"frac_images_sketch_count_gt_mask\": %.6g,\n"
                  "  \"mean_count_sketch\": %.6g,\n"
                  "  \"mean_count_mask\": %.6g,\n"
                  "  \"mean_sketch_err_per_token\": %.6g,\n"
                  "  \"mean_mask_err_per_masked\": %.6g,\n"
                  "  \"frac_images_comp_count_gt_unmask\": %.6g,\n"
                  "  \"mean_count_comp\": %.6g,\n"
                  "  \"mean_count_unmask\": %.6g,\n"
                  "  \"mean_comp_err_per_token\": %.6g,\n"
                  "  \"mean_unmask_err_per_kept\": %.6g\n"
                  "}\n",
                  s.images, s.tokens_per_image, p.rho, p.mask_ratio, p.threshold,
                  s.mask_count_per_image, s.frac_images_sketch_count_gt_mask, s.mean_count_sketch,
                  s.mean_count_mask, s.mean_sketch_err_per_token, s.mean_mask_err_per_masked,
                  s.frac_images_comp_count_gt_unmask, s.mean_count_comp, s.mean_count_unmask,
                  s.mean_comp_err_per_token, s.mean_unmask_err_per_kept);
    return buf;
}

namespace {

void write_meta(const std::string& ppm_path, double rho, uint64_t seed, const DisplayMap& map) {
    std::string meta_path = ppm_path;
    const auto dot = meta_path.rfind('.');
    meta_path = (dot == std::string::npos ? meta_path : meta_path.substr(0, dot)) + ".meta";
    std::ofstream f(meta_path, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open for writing: " + meta_path);
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "rho=%.10g\nseed=%llu\ndisplay_lo=%.17g\ndisplay_hi=%.17g\n"
                  "mapping=v_display=(v-display_lo)/(display_hi-display_lo)\n",
                  rho, static_cast<unsigned long long>(seed), map.lo, map.hi);
    f << buf;
}

uint8_t quantize01(double v) {
    return static_cast<uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

}  // namespace

VisualizeResult visualize(const Image& image, double rho, uint64_t seed,
                          const std::string& out_dir, SketchMode mode, uint32_t token_grid) {
    if (image.height != image.width || image.height % token_grid != 0)
        throw ShapeError("visualize: image does not divide into the token grid");
    const uint32_t patch = image.height / token_grid;
    const Mat<double> x = patchify(image, patch);
    const SketchSpec spec =
        draw_sketch(static_cast<uint32_t>(x.rows()), rho, seed, mode);
    const Mat<double> rt = roundtrip(spec, x);
    const Mat<double> comp = complement_roundtrip(spec, x);
    Mat<double> sum(x.rows(), x.cols());
    for (size_t i = 0; i < x.size(); ++i)
        sum.values()[i] = rt.values()[i] + comp.values()[i];

    VisualizeResult res;
    for (size_t i = 0; i < x.size(); ++i)
        res.max_pre_quantization_diff =
            std::max(res.max_pre_quantization_diff, std::abs(sum.values()[i] - x.values()[i]));

    const Image rt_img = unpatchify(rt, image.height, image.width, image.channels, patch);
    const Image comp_img = unpatchify(comp, image.height, image.width, image.channels, patch);
    const Image sum_img = unpatchify(sum, image.height, image.width, image.channels, patch);

    for (size_t i = 0; i < image.size(); ++i) {
        const int d = int(quantize01(sum_img.pixels[i])) - int(quantize01(image.pixels[i]));
        res.max_post_quantization_diff =
            std::max<uint8_t>(res.max_post_quantization_diff, static_cast<uint8_t>(std::abs(d)));
    }

    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        const DisplayMap identity{0.0, 1.0};
        const DisplayMap rt_map = minmax_display_map(rt_img);
        const DisplayMap comp_map = minmax_display_map(comp_img);

        res.original_path = out_dir + "/original.ppm";
        res.roundtrip_path = out_dir + "/roundtrip.ppm";
        res.complement_path = out_dir + "/complement.ppm";
        res.sum_path = out_dir + "/sum.ppm";
        write_ppm(res.original_path, image);
        write_meta(res.original_path, rho, seed, identity);
        write_ppm(res.roundtrip_path, apply_display_map(rt_img, rt_map));
        write_meta(res.roundtrip_path, rho, seed, rt_map);
        write_ppm(res.complement_path, apply_display_map(comp_img, comp_map));
        write_meta(res.complement_path, rho, seed, comp_map);
        write_ppm(res.sum_path, sum_img);
        write_meta(res.sum_path, rho, seed, identity);
    }
    return res;
}

template <typename T>
ReconstructResult reconstruct_demo(const ViTModel<T>& model, const ChannelStats& stats,
                                   const Image& image, double rho, uint64_t seed,
                                   const std::string& out_dir, SketchMode mode) {
    const ViTConfig& cfg = model.config;
    if (image.height != cfg.image_size || image.width != cfg.image_size ||
        image.channels != cfg.channels)
        throw ShapeError("reconstruct: image does not match the checkpoint config");

    const Image std_img = standardize_image(image, stats);
    const Mat<double> x = patchify(std_img, cfg.patch_size);
    const SketchSpec spec = draw_sketch(cfg.token_count(), rho, seed, mode);
    const Mat<double> sketched = roundtrip(spec, x);

    // clean model pass on the sketched embedding, as in training
    Tape<T> tape;
    StagedModel<T> staged = stage_model(tape, model, false);
    Var<T> tokens = tape.constant(cast_mat<T>(x));
    Var<T> phi_sketched = tape.sketch_roundtrip(embed(tape, tokens, staged), spec);
    Var<T> psi = encode(tape, phi_sketched, staged, cfg);
    const Mat<double> recon = cast_mat<double>(decode(tape, psi, staged).value());
    const Mat<double> predicted = complement_roundtrip(spec, recon);

    Mat<double> sum(x.rows(), x.cols());
    for (size_t i = 0; i < x.size(); ++i)
        sum.values()[i] = sketched.values()[i] + predicted.values()[i];

    ReconstructResult res;
    for (size_t i = 0; i < x.size(); ++i) {
        res.l1_sketched_vs_original += std::abs(sketched.values()[i] - x.values()[i]);
        res.l1_sum_vs_original += std::abs(sum.values()[i] - x.values()[i]);
    }

    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        const uint32_t hw = cfg.image_size;
        const Image orig_img = unpatchify(x, hw, hw, cfg.channels, cfg.patch_size);
        const Image sk_img = unpatchify(sketched, hw, hw, cfg.channels, cfg.patch_size);
        const Image pred_img = unpatchify(predicted, hw, hw, cfg.channels, cfg.patch_size);
        const Image sum_img = unpatchify(sum, hw, hw, cfg.channels, cfg.patch_size);
        res.original_path = out_dir + "/original.ppm";
        res.sketched_path = out_dir + "/sketched.ppm";
        res.predicted_path = out_dir + "/predicted_complement.ppm";
        res.sum_path = out_dir + "/reconstruction.ppm";
        for (const auto& [path, img] : std::initializer_list<std::pair<std::string, const Image*>>{
                 {res.original_path, &orig_img},
                 {res.sketched_path, &sk_img},
                 {res.predicted_path, &pred_img},
                 {res.sum_path, &sum_img}}) {
            const DisplayMap map = minmax_display_map(*img);
            write_ppm(path, apply_display_map(*img, map));
            write_meta(path, rho, seed, map);
        }
    }
    return res;
}

template ReconstructResult reconstruct_demo<float>(const ViTModel<float>&, const ChannelStats&,
                                                   const Image&, double, uint64_t,
                                                   const std::string&, SketchMode);
template ReconstructResult reconstruct_demo<double>(const ViTModel<double>&, const ChannelStats&,
                                                    const Image&, double, uint64_t,
                                                    const std::string&, SketchMode);

}  // namespace ropim
