// SPDX-License-Identifier: Apache-2.0
//
// Single entry point: verification, pre-training, linear probing, the
// token-error study, and the visualization/reconstruction demos.
//
// Exit codes: 0 success, 1 failed verification, 2 usage, 3 I/O,
// 4 format, 5 numeric/shape failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>

#include "ropim/analysis.hpp"
#include "ropim/data.hpp"
#include "ropim/kernels.hpp"
#include "ropim/pretrain.hpp"
#include "ropim/rng.hpp"
#include "ropim/verify.hpp"
#include "ropim/wire.hpp"

namespace {

using nlohmann::json;
using namespace ropim;

struct CommonFlags {
    std::string data_dir;
    bool synthetic = false;
    std::string out_dir;
    uint64_t seed = 0;
    std::string mode_text = "paper";
    uint32_t threads = 0;
    std::string precision_text = "f64";
};

SketchMode parse_mode(const std::string& text) {
    if (text == "paper") return SketchMode::PaperScaled;
    if (text == "exact") return SketchMode::ExactProjector;
    throw std::invalid_argument("--mode must be 'paper' or 'exact'");
}

Precision parse_precision(const std::string& text) {
    if (text == "f64") return Precision::F64;
    if (text == "f32") return Precision::F32;
    throw std::invalid_argument("--precision must be 'f32' or 'f64'");
}

void write_sidecar(const std::string& out_dir, const json& resolved) {
    std::filesystem::create_directories(out_dir);
    std::ofstream f(out_dir + "/resolved_config.json", std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write resolved config under " + out_dir);
    f << resolved.dump(2) << "\n";
}

json base_config(const std::string& subcommand, const CommonFlags& c) {
    json j;
    j["subcommand"] = subcommand;
    j["seed"] = c.seed;
    j["threads"] = c.threads;
    j["kernels"] = kernels::isa_name(kernels::active());
    j["out"] = c.out_dir;
    if (!c.data_dir.empty()) j["data"] = c.data_dir;
    j["synthetic"] = c.synthetic;
    return j;
}

// Shared synthetic-dataset shape for CI runs.
constexpr uint32_t kSynthImageSize = 16;
constexpr uint32_t kSynthChannels = 3;

Dataset load_train_dataset(const CommonFlags& c, size_t n_images, uint32_t synth_classes) {
    if (c.synthetic)
        return synthetic_dataset(n_images, kSynthImageSize, kSynthChannels, synth_classes, c.seed);
    const auto dir = resolve_data_dir(c.data_dir);
    if (!dir)
        throw std::invalid_argument(
            "no dataset: pass --synthetic, --data DIR, or set ROPIM_DATA_DIR");
    Dataset ds = load_cifar10_train(*dir);
    if (n_images > 0 && ds.size() > n_images) ds.records.resize(n_images);
    return ds;
}

int cmd_verify(const CommonFlags& c) {
    json cfg = base_config("verify", c);
    write_sidecar(c.out_dir, cfg);
    auto results = verify::run_all(c.threads);
    verify::print_table(results);
    return verify::all_passed(results) ? 0 : 1;
}

template <typename T>
int run_pretrain(const Dataset& ds, const ViTConfig& vit_cfg, const TrainConfig& tc,
                 const std::string& out_dir) {
    TrainResult result = pretrain_run<T>(ds, vit_cfg, tc, out_dir);
    std::printf("epochs=%u  first-epoch loss=%.6g  last-epoch loss=%.6g\n", tc.epochs,
                result.epoch_mean_loss.front(), result.epoch_mean_loss.back());
    std::printf("checkpoint: %s/checkpoint.bin\nloss log:   %s/loss_log.csv\n", out_dir.c_str(),
                out_dir.c_str());
    return 0;
}

int cmd_pretrain(const CommonFlags& c, const std::string& rho_text, const ViTConfig& vit_cfg,
                 TrainConfig tc, size_t n_images, uint32_t synth_classes) {
    tc.rho = Ratio::parse(rho_text);
    tc.seed = c.seed;
    tc.sketch_mode = parse_mode(c.mode_text);
    tc.precision = parse_precision(c.precision_text);
    tc.threads = c.threads;
    tc.validate();
    vit_cfg.validate();

    Dataset ds = load_train_dataset(c, n_images, synth_classes);

    json cfg = base_config("pretrain", c);
    cfg["rho"] = {{"num", tc.rho.num}, {"den", tc.rho.den}, {"value", tc.rho.to_double()}};
    cfg["epochs"] = tc.epochs;
    cfg["batch"] = tc.batch_size;
    cfg["base_lr"] = tc.base_lr;
    cfg["effective_lr"] = tc.effective_lr();
    cfg["warmup_epochs"] = tc.warmup_epochs;
    cfg["beta1"] = tc.beta1;
    cfg["beta2"] = tc.beta2;
    cfg["weight_decay"] = tc.weight_decay;
    cfg["reduction"] = tc.reduction == LossReduction::MeanAbs ? "mean" : "sum";
    cfg["precision"] = c.precision_text;
    cfg["sketch_mode"] = c.mode_text;
    cfg["flip"] = tc.flip_augment;
    cfg["crop"] = tc.crop_augment;
    cfg["images"] = ds.size();
    cfg["vit"] = {{"image_size", vit_cfg.image_size}, {"channels", vit_cfg.channels},
                  {"patch", vit_cfg.patch_size},      {"dim", vit_cfg.embed_dim},
                  {"depth", vit_cfg.depth},           {"heads", vit_cfg.heads}};
    write_sidecar(c.out_dir, cfg);

    if (tc.precision == Precision::F32) return run_pretrain<float>(ds, vit_cfg, tc, c.out_dir);
    return run_pretrain<double>(ds, vit_cfg, tc, c.out_dir);
}

// Labeled two-split data for probing. CIFAR: a fixed per-class subset;
// synthetic: one generation split into train/test blocks.
struct ProbeData {
    Dataset train, test;
};

ProbeData probe_data(const CommonFlags& c, const std::vector<uint32_t>& classes,
                     uint32_t train_per_class, uint32_t test_per_class, uint32_t synth_classes) {
    ProbeData out;
    if (c.synthetic) {
        const size_t n_train = size_t(train_per_class) * synth_classes;
        const size_t n_test = size_t(test_per_class) * synth_classes;
        Dataset all = synthetic_dataset(n_train + n_test, kSynthImageSize, kSynthChannels,
                                        synth_classes, c.seed);
        out.train.class_count = out.test.class_count = synth_classes;
        out.train.split_tag = "train";
        out.test.split_tag = "test";
        for (size_t i = 0; i < all.size(); ++i)
            (i < n_train ? out.train : out.test).records.push_back(std::move(all.records[i]));
        return out;
    }
    const auto dir = resolve_data_dir(c.data_dir);
    if (!dir)
        throw std::invalid_argument(
            "no dataset: pass --synthetic, --data DIR, or set ROPIM_DATA_DIR");
    const Dataset train_full = load_cifar10_train(*dir);
    const Dataset test_full = load_cifar10_test(*dir);
    auto take = [&](const Dataset& src, uint32_t per_class, const char* tag) {
        Dataset ds;
        ds.class_count = static_cast<uint32_t>(classes.size());
        ds.split_tag = tag;
        std::vector<uint32_t> counts(classes.size(), 0);
        for (const auto& rec : src.records) {
            for (size_t k = 0; k < classes.size(); ++k) {
                if (rec.label == static_cast<int32_t>(classes[k]) && counts[k] < per_class) {
                    ImageRecord copy = rec;
                    copy.label = static_cast<int32_t>(k);
                    ds.records.push_back(std::move(copy));
                    ++counts[k];
                }
            }
        }
        for (uint32_t n : counts)
            if (n < per_class)
                throw std::runtime_error("not enough samples of a requested class in the dataset");
        return ds;
    };
    out.train = take(train_full, train_per_class, "train");
    out.test = take(test_full, test_per_class, "test");
    return out;
}

Image pick_image(const CommonFlags& c, size_t index) {
    Dataset ds = c.synthetic
                     ? synthetic_dataset(index + 1, kSynthImageSize, kSynthChannels, 4, c.seed)
                     : load_train_dataset(c, index + 1, 4);
    if (ds.size() <= index) throw std::runtime_error("dataset has no image at the requested index");
    return ds.records[index].image;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"count-sketch soft-masking: training, statistics, and visualization"};
    app.require_subcommand(1);

    CommonFlags common;
    auto add_common = [&](CLI::App* sub, const char* default_out) {
        sub->add_option("--data", common.data_dir, "dataset directory (CIFAR-10 binary batches)");
        sub->add_flag("--synthetic", common.synthetic, "use the synthetic blob dataset");
        sub->add_option("--out", common.out_dir, "output directory")->default_val(default_out);
        sub->add_option("--seed", common.seed, "global 64-bit seed")->default_val(0);
        sub->add_option("--threads", common.threads, "worker threads (0 = all cores)")
            ->default_val(0);
        sub->add_option("--mode", common.mode_text, "sketch pseudo-inverse: paper|exact")
            ->default_val("paper");
        sub->add_option("--precision", common.precision_text, "f32|f64")->default_val("f64");
    };

    // verify
    CLI::App* sc_verify = app.add_subcommand("verify", "run the statistical property suite");
    add_common(sc_verify, "ropim_out/verify");

    // pretrain
    CLI::App* sc_pre = app.add_subcommand("pretrain", "self-supervised pre-training");
    add_common(sc_pre, "ropim_out/pretrain");
    TrainConfig tc;
    ViTConfig vit_cfg;
    size_t n_images = 64;
    uint32_t synth_classes = 4;
    std::string pre_rho = "0.143";
    sc_pre->add_option("--rho", pre_rho, "sketching ratio (decimal or a/b)")
        ->default_val("0.143");
    sc_pre->add_option("--epochs", tc.epochs)->default_val(20);
    sc_pre->add_option("--batch", tc.batch_size)->default_val(16);
    sc_pre->add_option("--lr", tc.base_lr, "base lr, scaled by batch/512")->default_val(1.5e-4);
    sc_pre->add_option("--warmup", tc.warmup_epochs, "warmup epochs")->default_val(2);
    sc_pre->add_option("--weight-decay", tc.weight_decay)->default_val(0.05);
    sc_pre->add_option("--images", n_images, "cap on training images")->default_val(64);
    sc_pre->add_option("--classes", synth_classes, "synthetic class count")->default_val(4);
    sc_pre->add_option("--patch", vit_cfg.patch_size)->default_val(2);
    sc_pre->add_option("--dim", vit_cfg.embed_dim)->default_val(32);
    sc_pre->add_option("--depth", vit_cfg.depth)->default_val(2);
    sc_pre->add_option("--heads", vit_cfg.heads)->default_val(2);
    bool no_flip = false, crop = false, sum_abs = false, shared_spec = false;
    sc_pre->add_flag("--no-flip", no_flip, "disable horizontal-flip augmentation");
    sc_pre->add_flag("--crop", crop, "enable random-resized-crop augmentation");
    sc_pre->add_flag("--sum-abs", sum_abs, "sum instead of mean loss reduction");
    sc_pre->add_flag("--shared-batch-spec", shared_spec, "one sketch per batch (ablation)");

    // probe
    CLI::App* sc_probe = app.add_subcommand("probe", "linear probe on a frozen encoder");
    add_common(sc_probe, "ropim_out/probe");
    std::string ck_path;
    bool random_init = false;
    uint32_t probe_epochs = 300, train_per_class = 500, test_per_class = 200;
    std::string classes_text = "0,1";
    sc_probe->add_option("--checkpoint", ck_path, "pre-trained checkpoint");
    sc_probe->add_flag("--random-init", random_init,
                       "probe a randomly initialized encoder with the checkpoint's config");
    sc_probe->add_option("--probe-epochs", probe_epochs)->default_val(300);
    sc_probe->add_option("--classes", classes_text, "comma-separated class ids (CIFAR)")
        ->default_val("0,1");
    sc_probe->add_option("--train-per-class", train_per_class)->default_val(500);
    sc_probe->add_option("--test-per-class", test_per_class)->default_val(200);

    // analyze-errors
    CLI::App* sc_err = app.add_subcommand("analyze-errors",
                                          "token corruption statistics: sketching vs masking");
    add_common(sc_err, "ropim_out/errors");
    ErrorStudyParams ep;
    std::string err_rho = "0.25";
    sc_err->add_option("--rho", err_rho, "sketching ratio")->default_val("0.25");
    sc_err->add_option("--mask-ratio", ep.mask_ratio)->default_val(0.75);
    sc_err->add_option("--threshold", ep.threshold)->default_val(0.1);
    sc_err->add_option("--images", ep.n_images)->default_val(1000);
    sc_err->add_option("--token-grid", ep.token_grid, "tokens per image side")->default_val(16);

    // visualize
    CLI::App* sc_vis = app.add_subcommand("visualize", "soft-mask / complement image panels");
    add_common(sc_vis, "ropim_out/visualize");
    size_t image_index = 0;
    uint32_t vis_grid = 16;
    std::string vis_rho = "0.5";
    sc_vis->add_option("--rho", vis_rho, "sketching ratio")->default_val("0.5");
    sc_vis->add_option("--image", image_index, "image index within the dataset")->default_val(0);
    sc_vis->add_option("--token-grid", vis_grid)->default_val(16);

    // reconstruct
    CLI::App* sc_rec = app.add_subcommand("reconstruct", "model-predicted complement demo");
    add_common(sc_rec, "ropim_out/reconstruct");
    std::string rec_ck;
    size_t rec_index = 0;
    sc_rec->add_option("--checkpoint", rec_ck, "pre-trained checkpoint")->required();
    std::string rec_rho;
    sc_rec->add_option("--rho", rec_rho, "override the checkpoint's ratio");
    sc_rec->add_option("--image", rec_index, "image index within the dataset")->default_val(0);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (sc_verify->parsed()) return cmd_verify(common);

        if (sc_pre->parsed()) {
            vit_cfg.image_size = common.synthetic ? kSynthImageSize : 32;
            vit_cfg.channels = 3;
            tc.flip_augment = !no_flip;
            tc.crop_augment = crop;
            tc.reduction = sum_abs ? LossReduction::SumAbs : LossReduction::MeanAbs;
            tc.shared_batch_spec = shared_spec;
            return cmd_pretrain(common, pre_rho, vit_cfg, tc, n_images, synth_classes);
        }

        if (sc_probe->parsed()) {
            std::vector<uint32_t> classes;
            for (size_t pos = 0; pos < classes_text.size();) {
                const size_t comma = classes_text.find(',', pos);
                classes.push_back(
                    static_cast<uint32_t>(std::stoul(classes_text.substr(pos, comma - pos))));
                if (comma == std::string::npos) break;
                pos = comma + 1;
            }
            const uint32_t synth_cls = static_cast<uint32_t>(std::max<size_t>(2, classes.size()));
            ProbeData data = probe_data(common, classes, train_per_class, test_per_class, synth_cls);
            json cfg = base_config("probe", common);
            cfg["checkpoint"] = ck_path;
            cfg["probe_epochs"] = probe_epochs;
            cfg["classes"] = classes;
            cfg["random_init"] = random_init;
            write_sidecar(common.out_dir, cfg);

            const Precision prec = parse_precision(common.precision_text);
            if (ck_path.empty() && !random_init)
                throw std::invalid_argument("probe: need --checkpoint (or --random-init with one)");
            const Checkpoint ck = load_checkpoint(ck_path);
            auto run = [&](auto tag) {
                using T = decltype(tag);
                ViTModel<T> model = random_init
                                        ? ViTModel<T>::init(ck.vit, hash_mix(common.seed, 0x696e6974))
                                        : model_from_checkpoint<T>(ck);
                const ChannelStats stats = compute_stats(data.train);
                const ProbeResult res = linear_probe(model, data.train, data.test, stats,
                                                     probe_epochs, 0.05, common.threads);
                std::printf("probe(%s): train accuracy %.4f, test accuracy %.4f\n",
                            random_init ? "random-init" : "pretrained", res.train_accuracy,
                            res.test_accuracy);
                json j = cfg;
                j["train_accuracy"] = res.train_accuracy;
                j["test_accuracy"] = res.test_accuracy;
                std::ofstream f(common.out_dir + "/probe_result.json", std::ios::trunc);
                f << j.dump(2) << "\n";
            };
            if (prec == Precision::F32)
                run(float{});
            else
                run(double{});
            return 0;
        }

        if (sc_err->parsed()) {
            ep.rho = Ratio::parse(err_rho).to_double();
            ep.seed = common.seed;
            ep.threads = common.threads;
            ep.mode = parse_mode(common.mode_text);
            Dataset ds = load_train_dataset(common, ep.n_images, 4);
            json cfg = base_config("analyze-errors", common);
            cfg["rho"] = ep.rho;
            cfg["mask_ratio"] = ep.mask_ratio;
            cfg["threshold"] = ep.threshold;
            cfg["images"] = ep.n_images;
            cfg["token_grid"] = ep.token_grid;
            write_sidecar(common.out_dir, cfg);
            const ErrorStudySummary s = error_study(ds, ep, common.out_dir + "/token_errors.csv");
            const std::string summary = summary_to_json(s, ep);
            std::ofstream f(common.out_dir + "/summary.json", std::ios::trunc);
            f << summary;
            std::fputs(summary.c_str(), stdout);
            return 0;
        }

        if (sc_vis->parsed()) {
            const double rho = Ratio::parse(vis_rho).to_double();
            const Image img = pick_image(common, image_index);
            json cfg = base_config("visualize", common);
            cfg["rho"] = rho;
            cfg["image"] = image_index;
            cfg["token_grid"] = vis_grid;
            write_sidecar(common.out_dir, cfg);
            const VisualizeResult res = visualize(img, rho, common.seed, common.out_dir,
                                                  parse_mode(common.mode_text), vis_grid);
            std::printf("wrote %s, %s, %s, %s\n", res.original_path.c_str(),
                        res.roundtrip_path.c_str(), res.complement_path.c_str(),
                        res.sum_path.c_str());
            std::printf("additivity: pre-quantization max diff %.3g, post-quantization %u/255\n",
                        res.max_pre_quantization_diff, res.max_post_quantization_diff);
            return 0;
        }

        if (sc_rec->parsed()) {
            const Checkpoint ck = load_checkpoint(rec_ck);
            const double rho =
                rec_rho.empty() ? ck.train.rho.to_double() : Ratio::parse(rec_rho).to_double();
            const Image img = pick_image(common, rec_index);
            json cfg = base_config("reconstruct", common);
            cfg["checkpoint"] = rec_ck;
            cfg["rho"] = rho;
            cfg["image"] = rec_index;
            write_sidecar(common.out_dir, cfg);

            // demo uses the stats of the data source it draws from
            Dataset stats_src = common.synthetic
                                    ? synthetic_dataset(64, kSynthImageSize, kSynthChannels, 4,
                                                        common.seed)
                                    : load_train_dataset(common, 1000, 4);
            const ChannelStats stats = compute_stats(stats_src);
            const Precision prec = parse_precision(common.precision_text);
            ReconstructResult res;
            if (prec == Precision::F32)
                res = reconstruct_demo(model_from_checkpoint<float>(ck), stats, img, rho,
                                       common.seed, common.out_dir, parse_mode(common.mode_text));
            else
                res = reconstruct_demo(model_from_checkpoint<double>(ck), stats, img, rho,
                                       common.seed, common.out_dir, parse_mode(common.mode_text));
            std::printf("l1 to original: sketched input %.6g, reconstruction %.6g\n",
                        res.l1_sketched_vs_original, res.l1_sum_vs_original);
            return 0;
        }
    } catch (const CLI::ParseError&) {
        return 2;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return 2;
    } catch (const std::domain_error& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return 2;
    } catch (const wire::FormatError& e) {
        std::fprintf(stderr, "format error: %s\n", e.what());
        return 4;
    } catch (const ShapeError& e) {
        std::fprintf(stderr, "numeric error: %s\n", e.what());
        return 5;
    } catch (const TrainingError& e) {
        std::fprintf(stderr, "numeric error: %s\n", e.what());
        return 5;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "i/o error: %s\n", e.what());
        return 3;
    }
    return 0;
}
