// SPDX-License-Identifier: Apache-2.0

#include "ropim/pretrain.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "ropim/rng.hpp"
#include "ropim/threading.hpp"
#include "ropim/wire.hpp"

namespace ropim {

namespace {
constexpr uint64_t kInitTag = 0x696e6974;   // model init stream
constexpr uint64_t kShuffleTag = 0x73687566;  // epoch shuffle stream
constexpr uint64_t kFlipTag = 0x666c6970;   // per-sample flip decision
constexpr uint64_t kCropTag = 0x63726f70;   // per-sample crop draw
constexpr char kCheckpointMagic[4] = {'R', 'O', 'P', 'M'};
}  // namespace

void Ratio::validate() const {
    if (den == 0 || num == 0 || num > den)
        throw std::domain_error("sketching ratio must be a rational in (0, 1]");
}

Ratio Ratio::parse(const std::string& text) {
    if (text.empty()) throw std::invalid_argument("empty ratio");
    const auto slash = text.find('/');
    if (slash != std::string::npos) {
        const unsigned long n = std::stoul(text.substr(0, slash));
        const unsigned long d = std::stoul(text.substr(slash + 1));
        Ratio r{static_cast<uint32_t>(n), static_cast<uint32_t>(d)};
        r.validate();
        return r;
    }
    // decimal: a.b -> (a*10^k + b) / 10^k, reduced
    const auto dot = text.find('.');
    uint64_t num = 0, den = 1;
    const std::string digits = dot == std::string::npos ? text : text.substr(0, dot) + text.substr(dot + 1);
    if (digits.empty() || digits.size() > 18) throw std::invalid_argument("bad ratio: " + text);
    for (char c : digits) {
        if (c < '0' || c > '9') throw std::invalid_argument("bad ratio: " + text);
        num = num * 10 + static_cast<uint64_t>(c - '0');
    }
    if (dot != std::string::npos)
        for (size_t i = 0; i < text.size() - dot - 1; ++i) den *= 10;
    const uint64_t g = std::gcd(num, den);
    Ratio r{static_cast<uint32_t>(num / g), static_cast<uint32_t>(den / g)};
    r.validate();
    return r;
}

void TrainConfig::validate() const {
    rho.validate();
    if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
    if (warmup_epochs >= epochs) throw std::invalid_argument("warmup must be shorter than the run");
    if (!(base_lr >= 0.0)) throw std::invalid_argument("learning rate must be >= 0");
}

double lr_at(uint64_t step, uint64_t total_steps, uint64_t warmup_steps, double base_lr) {
    if (step > total_steps) throw std::invalid_argument("lr_at: step beyond total");
    if (warmup_steps > 0 && step < warmup_steps)
        return base_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
    const uint64_t span = total_steps > warmup_steps ? total_steps - warmup_steps : 1;
    const double t = static_cast<double>(step - warmup_steps) / static_cast<double>(span);
    return 0.5 * base_lr * (1.0 + std::cos(3.14159265358979323846 * t));
}

template <typename T>
OptimizerState<T> OptimizerState<T>::zeros_like(
    const std::vector<std::pair<std::string, Mat<T>*>>& params) {
    OptimizerState<T> s;
    s.m.reserve(params.size());
    s.v.reserve(params.size());
    for (const auto& [name, mat] : params) {
        s.m.emplace_back(mat->rows(), mat->cols(), T(0));
        s.v.emplace_back(mat->rows(), mat->cols(), T(0));
    }
    return s;
}

template <typename T>
void adamw_step(const std::vector<std::pair<std::string, Mat<T>*>>& params,
                const std::vector<Mat<T>>& grads, OptimizerState<T>& state, T lr, T beta1, T beta2,
                T weight_decay, T eps) {
    if (params.size() != grads.size() || params.size() != state.m.size())
        throw ShapeError("adamw_step: parameter/gradient/state counts differ");
    for (size_t i = 0; i < params.size(); ++i)
        if (!all_finite(grads[i]))
            throw TrainingError("non-finite gradient for parameter '" + params[i].first + "'");
    state.step += 1;
    const T bc1 = T(1) - static_cast<T>(std::pow(static_cast<double>(beta1), double(state.step)));
    const T bc2 = T(1) - static_cast<T>(std::pow(static_cast<double>(beta2), double(state.step)));
    const auto& k = kernels::table<T>();
    for (size_t i = 0; i < params.size(); ++i) {
        Mat<T>& p = *params[i].second;
        if (!p.same_shape(grads[i])) throw ShapeError("adamw_step: gradient shape mismatch");
        k.adamw(p.size(), p.data(), grads[i].data(), state.m[i].data(), state.v[i].data(), lr,
                beta1, beta2, weight_decay, eps, bc1, bc2);
    }
}

template <typename T>
Var<T> ropim_loss(Tape<T>& tape, const Mat<T>& tokens, const StagedModel<T>& staged,
                  const ViTConfig& cfg, const SketchSpec& spec, LossReduction reduction) {
    if (tokens.rows() != cfg.token_count() || tokens.cols() != cfg.patch_dim())
        throw ShapeError("ropim_loss: token matrix does not match the model config");
    if (spec.input_size != tokens.rows())
        throw ShapeError("ropim_loss: sketch size does not match the token count");
    Var<T> x = tape.constant(tokens);
    Var<T> phi = embed(tape, x, staged);
    Var<T> phi_sketched = tape.sketch_roundtrip(phi, spec);
    Var<T> psi = encode(tape, phi_sketched, staged, cfg);
    Var<T> recon = decode(tape, psi, staged);
    Var<T> residual = tape.sub(x, recon);
    Var<T> weighted = tape.sketch_complement(residual, spec);
    Var<T> loss = tape.abs_sum(weighted);
    if (reduction == LossReduction::MeanAbs)
        loss = tape.smul(loss, T(1) / static_cast<T>(tokens.size()));
    return loss;
}

// ---- checkpoint ------------------------------------------------------

namespace {

void encode_vit_config(std::vector<uint8_t>& b, const ViTConfig& c) {
    wire::put_u32(b, c.image_size);
    wire::put_u32(b, c.channels);
    wire::put_u32(b, c.patch_size);
    wire::put_u32(b, c.embed_dim);
    wire::put_u32(b, c.depth);
    wire::put_u32(b, c.heads);
    wire::put_f64(b, c.mlp_ratio);
}

ViTConfig decode_vit_config(wire::Reader& r) {
    ViTConfig c;
    c.image_size = r.u32();
    c.channels = r.u32();
    c.patch_size = r.u32();
    c.embed_dim = r.u32();
    c.depth = r.u32();
    c.heads = r.u32();
    c.mlp_ratio = r.f64();
    return c;
}

void encode_train_config(std::vector<uint8_t>& b, const TrainConfig& c) {
    wire::put_u32(b, c.rho.num);
    wire::put_u32(b, c.rho.den);
    wire::put_u32(b, c.epochs);
    wire::put_u32(b, c.batch_size);
    wire::put_f64(b, c.base_lr);
    wire::put_u32(b, c.warmup_epochs);
    wire::put_f64(b, c.beta1);
    wire::put_f64(b, c.beta2);
    wire::put_f64(b, c.weight_decay);
    wire::put_u64(b, c.seed);
    wire::put_u8(b, static_cast<uint8_t>(c.reduction));
    wire::put_u8(b, static_cast<uint8_t>(c.precision));
    wire::put_u8(b, static_cast<uint8_t>(c.sketch_mode));
    wire::put_u8(b, c.flip_augment ? 1 : 0);
    wire::put_u8(b, c.crop_augment ? 1 : 0);
    wire::put_u8(b, c.shared_batch_spec ? 1 : 0);
}

TrainConfig decode_train_config(wire::Reader& r) {
    TrainConfig c;
    c.rho.num = r.u32();
    c.rho.den = r.u32();
    c.epochs = r.u32();
    c.batch_size = r.u32();
    c.base_lr = r.f64();
    c.warmup_epochs = r.u32();
    c.beta1 = r.f64();
    c.beta2 = r.f64();
    c.weight_decay = r.f64();
    c.seed = r.u64();
    c.reduction = static_cast<LossReduction>(r.u8());
    c.precision = static_cast<Precision>(r.u8());
    c.sketch_mode = static_cast<SketchMode>(r.u8());
    c.flip_augment = r.u8() != 0;
    c.crop_augment = r.u8() != 0;
    c.shared_batch_spec = r.u8() != 0;
    return c;
}

}  // namespace

std::vector<uint8_t> encode_checkpoint(const Checkpoint& ck) {
    std::vector<uint8_t> b;
    wire::put_bytes(b, kCheckpointMagic, 4);
    wire::put_u32(b, ck.version);
    encode_vit_config(b, ck.vit);
    encode_train_config(b, ck.train);
    wire::put_u32(b, ck.epoch);
    wire::put_u8(b, ck.has_optimizer ? 1 : 0);
    if (ck.has_optimizer) wire::put_u64(b, ck.opt_step);
    wire::put_u32(b, static_cast<uint32_t>(ck.tensors.size()));
    for (const auto& [name, mat] : ck.tensors) {
        if (name.size() > 0xFFFF) throw std::invalid_argument("tensor name too long");
        wire::put_u16(b, static_cast<uint16_t>(name.size()));
        wire::put_bytes(b, name.data(), name.size());
        wire::put_u8(b, 2);  // rank
        wire::put_u32(b, static_cast<uint32_t>(mat.rows()));
        wire::put_u32(b, static_cast<uint32_t>(mat.cols()));
        for (float v : mat.values()) wire::put_f32(b, v);
    }
    return b;
}

Checkpoint decode_checkpoint(const std::vector<uint8_t>& bytes) {
    wire::Reader r(bytes);
    if (r.str(4) != std::string(kCheckpointMagic, 4))
        throw wire::FormatError("checkpoint: bad magic");
    Checkpoint ck;
    ck.version = r.u32();
    if (ck.version != 1) throw wire::FormatError("checkpoint: unsupported version");
    ck.vit = decode_vit_config(r);
    ck.train = decode_train_config(r);
    ck.epoch = r.u32();
    ck.has_optimizer = r.u8() != 0;
    if (ck.has_optimizer) ck.opt_step = r.u64();
    const uint32_t count = r.u32();
    ck.tensors.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        const uint16_t name_len = r.u16();
        std::string name = r.str(name_len);
        const uint8_t rank = r.u8();
        if (rank != 2) throw wire::FormatError("checkpoint: unsupported tensor rank");
        const uint32_t rows = r.u32();
        const uint32_t cols = r.u32();
        Mat<float> m(rows, cols);
        for (auto& v : m.values()) v = r.f32();
        ck.tensors.emplace_back(std::move(name), std::move(m));
    }
    return ck;
}

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
    wire::write_file(path, encode_checkpoint(ck));
}

Checkpoint load_checkpoint(const std::string& path) {
    return decode_checkpoint(wire::read_file(path));
}

template <typename T>
Checkpoint make_checkpoint(const ViTModel<T>& model, const TrainConfig& cfg, uint32_t epoch,
                           const OptimizerState<T>* opt) {
    Checkpoint ck;
    ck.vit = model.config;
    ck.train = cfg;
    ck.epoch = epoch;
    const auto params = model.named_params();
    for (const auto& [name, mat] : params) ck.tensors.emplace_back(name, cast_mat<float>(*mat));
    if (opt) {
        ck.has_optimizer = true;
        ck.opt_step = opt->step;
        for (size_t i = 0; i < params.size(); ++i) {
            ck.tensors.emplace_back("opt.m:" + params[i].first, cast_mat<float>(opt->m[i]));
            ck.tensors.emplace_back("opt.v:" + params[i].first, cast_mat<float>(opt->v[i]));
        }
    }
    return ck;
}

template <typename T>
ViTModel<T> model_from_checkpoint(const Checkpoint& ck) {
    ViTModel<T> model = ViTModel<T>::init(ck.vit, 0);
    for (auto& [name, mat] : model.named_params()) {
        const auto it =
            std::find_if(ck.tensors.begin(), ck.tensors.end(),
                         [&name = name](const auto& t) { return t.first == name; });
        if (it == ck.tensors.end())
            throw wire::FormatError("checkpoint: missing tensor '" + name + "'");
        if (it->second.rows() != mat->rows() || it->second.cols() != mat->cols())
            throw wire::FormatError("checkpoint: shape mismatch for tensor '" + name + "'");
        *mat = cast_mat<T>(it->second);
    }
    return model;
}

// ---- training --------------------------------------------------------

namespace {

// Area-and-aspect jittered crop, bilinearly resized back to the source
// size. Scale range [0.67, 1], aspect range [3/4, 4/3].
Image random_resized_crop(const Image& img, Rng& rng) {
    const double H = img.height, W = img.width;
    uint32_t ch = img.height, cw = img.width, top = 0, left = 0;
    for (int attempt = 0; attempt < 10; ++attempt) {
        const double area = H * W * (0.67 + 0.33 * rng.uniform01());
        const double log_lo = std::log(3.0 / 4.0), log_hi = std::log(4.0 / 3.0);
        const double aspect = std::exp(log_lo + (log_hi - log_lo) * rng.uniform01());
        const auto w = static_cast<uint32_t>(std::lround(std::sqrt(area * aspect)));
        const auto h = static_cast<uint32_t>(std::lround(std::sqrt(area / aspect)));
        if (w >= 1 && h >= 1 && w <= img.width && h <= img.height) {
            ch = h;
            cw = w;
            top = rng.below(img.height - h + 1);
            left = rng.below(img.width - w + 1);
            break;
        }
    }
    Image out(img.height, img.width, img.channels);
    for (uint32_t i = 0; i < img.height; ++i)
        for (uint32_t j = 0; j < img.width; ++j) {
            // sample the crop at the pixel's relative position
            const double sy = top + (i + 0.5) * ch / H - 0.5;
            const double sx = left + (j + 0.5) * cw / W - 0.5;
            const double fy = std::clamp(sy, 0.0, H - 1.0);
            const double fx = std::clamp(sx, 0.0, W - 1.0);
            const auto y0 = static_cast<uint32_t>(fy);
            const auto x0 = static_cast<uint32_t>(fx);
            const uint32_t y1 = std::min(y0 + 1, img.height - 1);
            const uint32_t x1 = std::min(x0 + 1, img.width - 1);
            const double wy = fy - y0, wx = fx - x0;
            for (uint32_t c = 0; c < img.channels; ++c) {
                const double v = (1 - wy) * ((1 - wx) * img.at(y0, x0, c) + wx * img.at(y0, x1, c)) +
                                 wy * ((1 - wx) * img.at(y1, x0, c) + wx * img.at(y1, x1, c));
                out.at(i, j, c) = v;
            }
        }
    return out;
}

}  // namespace

template <typename T>
TrainResult pretrain_run(const Dataset& dataset, const ViTConfig& vit_cfg, const TrainConfig& cfg,
                         const std::string& out_dir) {
    vit_cfg.validate();
    cfg.validate();
    if (dataset.empty()) throw std::invalid_argument("pretrain: dataset is empty");
    if (dataset.records.front().image.height != vit_cfg.image_size ||
        dataset.records.front().image.channels != vit_cfg.channels)
        throw ShapeError("pretrain: dataset images do not match the model config");

    auto [std_ds, stats] = standardize(dataset);
    const size_t n = std_ds.size();
    const uint32_t tokens_n = vit_cfg.token_count();
    const uint32_t bucket_n = output_size_for(tokens_n, cfg.rho.num, cfg.rho.den);
    const double rho_d = cfg.rho.to_double();

    ViTModel<T> model = ViTModel<T>::init(vit_cfg, hash_mix(cfg.seed, kInitTag));
    auto params = model.named_params();
    OptimizerState<T> opt = OptimizerState<T>::zeros_like(params);

    const uint64_t steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
    const uint64_t total_steps = steps_per_epoch * cfg.epochs;
    const uint64_t warmup_steps = steps_per_epoch * cfg.warmup_epochs;
    const double eff_lr = cfg.effective_lr();

    TrainResult result;
    result.stats = stats;
    uint64_t global_step = 0;

    if (!out_dir.empty()) std::filesystem::create_directories(out_dir);

    for (uint32_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::vector<size_t> order(n);
        std::iota(order.begin(), order.end(), size_t(0));
        Rng shuffle_rng(hash_mix(hash_mix(cfg.seed, kShuffleTag), epoch));
        for (size_t i = 0; i + 1 < n; ++i)
            std::swap(order[i], order[i + shuffle_rng.below(static_cast<uint32_t>(n - i))]);

        double epoch_loss_sum = 0.0;
        uint64_t epoch_batches = 0;

        for (size_t start = 0; start < n; start += cfg.batch_size) {
            const size_t bsz = std::min<size_t>(cfg.batch_size, n - start);
            std::vector<std::vector<Mat<T>>> sample_grads(bsz);
            std::vector<double> sample_loss(bsz);

            // shared-spec ablation keys every sample in the batch to the
            // first sample's stream
            const size_t shared_key = order[start];

            parallel_for(bsz, cfg.threads, [&](size_t s) {
                const size_t idx = order[start + s];
                const uint64_t sample_seed = sub_seed(cfg.seed, epoch, idx);
                const uint64_t spec_seed =
                    cfg.shared_batch_spec ? sub_seed(cfg.seed, epoch, shared_key) : sample_seed;
                const SketchSpec spec =
                    draw_sketch(tokens_n, bucket_n, rho_d, spec_seed, cfg.sketch_mode);

                Image img = std_ds.records[idx].image;
                if (cfg.crop_augment) {
                    Rng crop_rng(hash_mix(sample_seed, kCropTag));
                    img = random_resized_crop(img, crop_rng);
                }
                if (cfg.flip_augment && (hash_mix(sample_seed, kFlipTag) & 1))
                    img = flip_horizontal(img);

                const Mat<T> tokens = cast_mat<T>(patchify(img, vit_cfg.patch_size));
                Tape<T> tape;
                StagedModel<T> staged = stage_model(tape, model, true);
                Var<T> loss = ropim_loss(tape, tokens, staged, vit_cfg, spec, cfg.reduction);
                tape.backward(loss);
                sample_grads[s] = collect_grads(staged);
                sample_loss[s] = static_cast<double>(loss.value()(0, 0));
            });

            // fixed-order reduction: results do not depend on thread count
            std::vector<Mat<T>> grads = std::move(sample_grads[0]);
            for (size_t s = 1; s < bsz; ++s)
                for (size_t p = 0; p < grads.size(); ++p)
                    kernels::table<T>().vadd(grads[p].size(), grads[p].data(),
                                             sample_grads[s][p].data(), grads[p].data());
            const T inv = T(1) / static_cast<T>(bsz);
            for (auto& g : grads) kernels::table<T>().scale(g.size(), inv, g.data(), g.data());

            double batch_loss = 0.0;
            for (size_t s = 0; s < bsz; ++s) batch_loss += sample_loss[s];
            batch_loss /= static_cast<double>(bsz);
            if (!std::isfinite(batch_loss))
                throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) +
                                    ", step " + std::to_string(global_step + 1));

            const double lr = lr_at(global_step, total_steps, warmup_steps, eff_lr);
            adamw_step(params, grads, opt, static_cast<T>(lr), static_cast<T>(cfg.beta1),
                       static_cast<T>(cfg.beta2), static_cast<T>(cfg.weight_decay));
            ++global_step;

            result.log.push_back({epoch, global_step, lr, batch_loss});
            epoch_loss_sum += batch_loss;
            ++epoch_batches;
        }

        result.epoch_mean_loss.push_back(epoch_loss_sum / static_cast<double>(epoch_batches));
        if (!out_dir.empty())
            save_checkpoint(out_dir + "/checkpoint.bin", make_checkpoint(model, cfg, epoch, &opt));
    }

    result.checkpoint = make_checkpoint(model, cfg, cfg.epochs, &opt);
    if (!out_dir.empty()) write_loss_log(out_dir + "/loss_log.csv", result.log);
    return result;
}

void write_loss_log(const std::string& path, const std::vector<LossLogRow>& log) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f << "epoch,step,lr,loss\n";
    char line[128];
    for (const auto& row : log) {
        std::snprintf(line, sizeof(line), "%u,%llu,%.10g,%.10g\n", row.epoch,
                      static_cast<unsigned long long>(row.step), row.lr, row.loss);
        f << line;
    }
    if (!f) throw std::runtime_error("write failed: " + path);
}

// ---- evaluation ------------------------------------------------------

template <typename T>
Mat<T> extract_features(const ViTModel<T>& model, const Dataset& standardized, uint32_t threads) {
    const ViTConfig& cfg = model.config;
    const size_t n = standardized.size();
    Mat<T> features(n, cfg.embed_dim);
    parallel_for(n, threads, [&](size_t i) {
        const Mat<T> tokens = cast_mat<T>(patchify(standardized.records[i].image, cfg.patch_size));
        Tape<T> tape;
        StagedModel<T> staged = stage_model(tape, model, false);
        Var<T> psi = encode(tape, embed(tape, tape.constant(tokens), staged), staged, cfg);
        // mean over token rows, class row excluded
        const Mat<T>& out = psi.value();
        for (size_t d = 0; d < cfg.embed_dim; ++d) {
            T acc = 0;
            for (size_t r = 1; r < out.rows(); ++r) acc += out(r, d);
            features(i, d) = acc / static_cast<T>(out.rows() - 1);
        }
    });
    return features;
}

namespace {

template <typename T>
double top1_accuracy(const Mat<T>& features, const std::vector<int32_t>& labels, const Mat<T>& w,
                     const Mat<T>& b) {
    const size_t n = features.rows(), classes = w.cols();
    Mat<T> logits(n, classes);
    kernels::table<T>().gemm_nn(n, classes, features.cols(), features.data(), w.data(),
                                logits.data(), false);
    size_t hits = 0;
    for (size_t i = 0; i < n; ++i) {
        size_t best = 0;
        for (size_t c = 1; c < classes; ++c)
            if (logits(i, c) + b(0, c) > logits(i, best) + b(0, best)) best = c;
        hits += (static_cast<int32_t>(best) == labels[i]);
    }
    return static_cast<double>(hits) / static_cast<double>(n);
}

}  // namespace

template <typename T>
ProbeResult linear_probe(const ViTModel<T>& model, const Dataset& train, const Dataset& test,
                         const ChannelStats& stats, uint32_t probe_epochs, double probe_lr,
                         uint32_t threads) {
    if (train.empty() || train.class_count < 1)
        throw std::invalid_argument("probe: empty training set");
    const uint32_t classes = train.class_count;
    for (const auto& ds : {&train, &test})
        for (const auto& rec : ds->records)
            if (rec.label < 0 || static_cast<uint32_t>(rec.label) >= classes)
                throw std::invalid_argument("probe: label outside the declared class count");

    auto standardize_ds = [&](const Dataset& ds) {
        Dataset out;
        out.class_count = ds.class_count;
        out.split_tag = ds.split_tag;
        out.records.reserve(ds.size());
        for (const auto& rec : ds.records)
            out.records.push_back({standardize_image(rec.image, stats), rec.label});
        return out;
    };
    const Mat<T> f_train = extract_features(model, standardize_ds(train), threads);
    const Mat<T> f_test = test.empty() ? Mat<T>() : extract_features(model, standardize_ds(test), threads);

    std::vector<int32_t> y_train, y_test;
    for (const auto& r : train.records) y_train.push_back(r.label);
    for (const auto& r : test.records) y_test.push_back(r.label);

    const size_t n = f_train.rows(), d = f_train.cols();
    Mat<T> w(d, classes, T(0)), b(1, classes, T(0));
    Mat<T> gw(d, classes), gb(1, classes);
    Mat<T> mw(d, classes, T(0)), vw(d, classes, T(0)), mb(1, classes, T(0)), vb(1, classes, T(0));
    Mat<T> logits(n, classes);
    const auto& k = kernels::table<T>();

    // full-batch softmax regression with Adam
    for (uint32_t step = 1; step <= probe_epochs; ++step) {
        k.gemm_nn(n, classes, d, f_train.data(), w.data(), logits.data(), false);
        for (size_t i = 0; i < n; ++i) {
            T mx = logits(i, 0) + b(0, 0);
            for (size_t c = 1; c < classes; ++c) mx = std::max(mx, logits(i, c) + b(0, c));
            T sum = 0;
            for (size_t c = 0; c < classes; ++c) {
                logits(i, c) = std::exp(logits(i, c) + b(0, c) - mx);
                sum += logits(i, c);
            }
            for (size_t c = 0; c < classes; ++c) logits(i, c) /= sum;
            logits(i, static_cast<size_t>(y_train[i])) -= T(1);  // softmax - onehot
        }
        k.gemm_tn(d, classes, n, f_train.data(), logits.data(), gw.data(), false);
        const T inv_n = T(1) / static_cast<T>(n);
        k.scale(gw.size(), inv_n, gw.data(), gw.data());
        gb.fill(T(0));
        for (size_t i = 0; i < n; ++i) k.vadd(classes, gb.data(), logits.row(i), gb.data());
        k.scale(gb.size(), inv_n, gb.data(), gb.data());

        const T bc1 = T(1) - static_cast<T>(std::pow(0.9, double(step)));
        const T bc2 = T(1) - static_cast<T>(std::pow(0.999, double(step)));
        k.adamw(w.size(), w.data(), gw.data(), mw.data(), vw.data(), static_cast<T>(probe_lr),
                T(0.9), T(0.999), T(0), T(1e-8), bc1, bc2);
        k.adamw(b.size(), b.data(), gb.data(), mb.data(), vb.data(), static_cast<T>(probe_lr),
                T(0.9), T(0.999), T(0), T(1e-8), bc1, bc2);
    }

    ProbeResult out;
    out.train_accuracy = top1_accuracy(f_train, y_train, w, b);
    out.test_accuracy = test.empty() ? 0.0 : top1_accuracy(f_test, y_test, w, b);
    return out;
}

// ---- explicit instantiations ------------------------------------------

template struct OptimizerState<float>;
template struct OptimizerState<double>;
template void adamw_step<float>(const std::vector<std::pair<std::string, Mat<float>*>>&,
                                const std::vector<Mat<float>>&, OptimizerState<float>&, float,
                                float, float, float, float);
template void adamw_step<double>(const std::vector<std::pair<std::string, Mat<double>*>>&,
                                 const std::vector<Mat<double>>&, OptimizerState<double>&, double,
                                 double, double, double, double);
template Var<float> ropim_loss<float>(Tape<float>&, const Mat<float>&, const StagedModel<float>&,
                                      const ViTConfig&, const SketchSpec&, LossReduction);
template Var<double> ropim_loss<double>(Tape<double>&, const Mat<double>&,
                                        const StagedModel<double>&, const ViTConfig&,
                                        const SketchSpec&, LossReduction);
template Checkpoint make_checkpoint<float>(const ViTModel<float>&, const TrainConfig&, uint32_t,
                                           const OptimizerState<float>*);
template Checkpoint make_checkpoint<double>(const ViTModel<double>&, const TrainConfig&, uint32_t,
                                            const OptimizerState<double>*);
template ViTModel<float> model_from_checkpoint<float>(const Checkpoint&);
template ViTModel<double> model_from_checkpoint<double>(const Checkpoint&);
template TrainResult pretrain_run<float>(const Dataset&, const ViTConfig&, const TrainConfig&,
                                         const std::string&);
template TrainResult pretrain_run<double>(const Dataset&, const ViTConfig&, const TrainConfig&,
                                          const std::string&);
template Mat<float> extract_features<float>(const ViTModel<float>&, const Dataset&, uint32_t);
template Mat<double> extract_features<double>(const ViTModel<double>&, const Dataset&, uint32_t);
template ProbeResult linear_probe<float>(const ViTModel<float>&, const Dataset&, const Dataset&,
                                         const ChannelStats&, uint32_t, double, uint32_t);
template ProbeResult linear_probe<double>(const ViTModel<double>&, const Dataset&, const Dataset&,
                                          const ChannelStats&, uint32_t, double, uint32_t);

}  // namespace ropim
