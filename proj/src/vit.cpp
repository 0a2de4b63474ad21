// SPDX-License-Identifier: Apache-2.0

#include "ropim/vit.hpp"

#include <cmath>
#include <stdexcept>

#include "ropim/rng.hpp"

namespace ropim {

void ViTConfig::validate() const {
    if (image_size == 0 || channels == 0 || patch_size == 0 || embed_dim == 0 || heads == 0)
        throw std::invalid_argument("vit config: all counts must be >= 1");
    if (image_size % patch_size != 0)
        throw std::invalid_argument("vit config: patch size must divide image size");
    if (embed_dim % heads != 0)
        throw std::invalid_argument("vit config: embed dim must be divisible by heads");
    if (mlp_ratio <= 0.0) throw std::invalid_argument("vit config: mlp ratio must be positive");
}

Mat<double> patchify(const Image& img, uint32_t patch_size) {
    if (patch_size == 0 || img.height % patch_size != 0 || img.width % patch_size != 0)
        throw ShapeError("patchify: image dimensions must be divisible by the patch size");
    const uint32_t gh = img.height / patch_size;
    const uint32_t gw = img.width / patch_size;
    const uint32_t pd = patch_size * patch_size * img.channels;
    Mat<double> tokens(size_t(gh) * gw, pd);
    for (uint32_t gi = 0; gi < gh; ++gi)
        for (uint32_t gj = 0; gj < gw; ++gj) {
            double* row = tokens.row(size_t(gi) * gw + gj);
            size_t t = 0;
            for (uint32_t pi = 0; pi < patch_size; ++pi)
                for (uint32_t pj = 0; pj < patch_size; ++pj)
                    for (uint32_t c = 0; c < img.channels; ++c)
                        row[t++] = img.at(gi * patch_size + pi, gj * patch_size + pj, c);
        }
    return tokens;
}

Image unpatchify(const Mat<double>& tokens, uint32_t height, uint32_t width, uint32_t channels,
                 uint32_t patch_size) {
    const uint32_t gh = height / patch_size;
    const uint32_t gw = width / patch_size;
    if (tokens.rows() != size_t(gh) * gw ||
        tokens.cols() != size_t(patch_size) * patch_size * channels)
        throw ShapeError("unpatchify: token shape does not match the target image");
    Image img(height, width, channels);
    for (uint32_t gi = 0; gi < gh; ++gi)
        for (uint32_t gj = 0; gj < gw; ++gj) {
            const double* row = tokens.row(size_t(gi) * gw + gj);
            size_t t = 0;
            for (uint32_t pi = 0; pi < patch_size; ++pi)
                for (uint32_t pj = 0; pj < patch_size; ++pj)
                    for (uint32_t c = 0; c < channels; ++c)
                        img.at(gi * patch_size + pi, gj * patch_size + pj, c) = row[t++];
        }
    return img;
}

namespace {

template <typename T>
void fill_truncated_normal(Mat<T>& m, Rng& rng, double sigma) {
    for (auto& x : m.values()) x = static_cast<T>(rng.truncated_normal(sigma));
}

}  // namespace

template <typename T>
ViTModel<T> ViTModel<T>::init(const ViTConfig& cfg, uint64_t seed) {
    cfg.validate();
    constexpr double kSigma = 0.02;
    const uint32_t d = cfg.embed_dim;
    const uint32_t pd = cfg.patch_dim();
    const uint32_t h = cfg.mlp_hidden();
    const uint32_t n = cfg.token_count();

    ViTModel<T> m;
    m.config = cfg;
    Rng rng(seed);
    m.w_embed = Mat<T>(pd, d);
    fill_truncated_normal(m.w_embed, rng, kSigma);
    m.pos_embed = Mat<T>(n + 1, d, T(0));
    m.cls_token = Mat<T>(1, d, T(0));
    m.blocks.resize(cfg.depth);
    for (auto& b : m.blocks) {
        b.ln1_gain = Mat<T>(1, d, T(1));
        b.ln1_offset = Mat<T>(1, d, T(0));
        b.wq = Mat<T>(d, d);
        fill_truncated_normal(b.wq, rng, kSigma);
        b.wk = Mat<T>(d, d);
        fill_truncated_normal(b.wk, rng, kSigma);
        b.wv = Mat<T>(d, d);
        fill_truncated_normal(b.wv, rng, kSigma);
        b.wo = Mat<T>(d, d);
        fill_truncated_normal(b.wo, rng, kSigma);
        b.bq = Mat<T>(1, d, T(0));
        b.bk = Mat<T>(1, d, T(0));
        b.bv = Mat<T>(1, d, T(0));
        b.bo = Mat<T>(1, d, T(0));
        b.ln2_gain = Mat<T>(1, d, T(1));
        b.ln2_offset = Mat<T>(1, d, T(0));
        b.w_mlp_in = Mat<T>(d, h);
        fill_truncated_normal(b.w_mlp_in, rng, kSigma);
        b.b_mlp_in = Mat<T>(1, h, T(0));
        b.w_mlp_out = Mat<T>(h, d);
        fill_truncated_normal(b.w_mlp_out, rng, kSigma);
        b.b_mlp_out = Mat<T>(1, d, T(0));
    }
    m.w_decode = Mat<T>(d, pd);
    fill_truncated_normal(m.w_decode, rng, kSigma);
    return m;
}

template <typename T>
std::vector<std::pair<std::string, Mat<T>*>> ViTModel<T>::named_params() {
    std::vector<std::pair<std::string, Mat<T>*>> out;
    out.emplace_back("embed.w", &w_embed);
    out.emplace_back("pos_embed", &pos_embed);
    out.emplace_back("cls_token", &cls_token);
    for (size_t i = 0; i < blocks.size(); ++i) {
        auto& b = blocks[i];
        const std::string p = "blk" + std::to_string(i) + ".";
        out.emplace_back(p + "ln1.gain", &b.ln1_gain);
        out.emplace_back(p + "ln1.offset", &b.ln1_offset);
        out.emplace_back(p + "attn.wq", &b.wq);
        out.emplace_back(p + "attn.bq", &b.bq);
        out.emplace_back(p + "attn.wk", &b.wk);
        out.emplace_back(p + "attn.bk", &b.bk);
        out.emplace_back(p + "attn.wv", &b.wv);
        out.emplace_back(p + "attn.bv", &b.bv);
        out.emplace_back(p + "attn.wo", &b.wo);
        out.emplace_back(p + "attn.bo", &b.bo);
        out.emplace_back(p + "ln2.gain", &b.ln2_gain);
        out.emplace_back(p + "ln2.offset", &b.ln2_offset);
        out.emplace_back(p + "mlp.w_in", &b.w_mlp_in);
        out.emplace_back(p + "mlp.b_in", &b.b_mlp_in);
        out.emplace_back(p + "mlp.w_out", &b.w_mlp_out);
        out.emplace_back(p + "mlp.b_out", &b.b_mlp_out);
    }
    out.emplace_back("decode.w", &w_decode);
    return out;
}

template <typename T>
std::vector<std::pair<std::string, const Mat<T>*>> ViTModel<T>::named_params() const {
    auto mutable_list = const_cast<ViTModel<T>*>(this)->named_params();
    std::vector<std::pair<std::string, const Mat<T>*>> out;
    out.reserve(mutable_list.size());
    for (auto& [name, mat] : mutable_list) out.emplace_back(name, mat);
    return out;
}

template <typename T>
size_t ViTModel<T>::param_count() const {
    size_t n = 0;
    for (const auto& [name, mat] : named_params()) n += mat->size();
    return n;
}

size_t param_count_formula(const ViTConfig& cfg) {
    const size_t d = cfg.embed_dim;
    const size_t pd = cfg.patch_dim();
    const size_t h = cfg.mlp_hidden();
    const size_t n = cfg.token_count();
    const size_t per_block = 2 * d            // first norm
                             + 4 * d * d + 4 * d  // attention projections + biases
                             + 2 * d              // second norm
                             + d * h + h + h * d + d;  // mlp
    return pd * d + (n + 1) * d + d + cfg.depth * per_block + d * pd;
}

template <typename T>
StagedModel<T> stage_model(Tape<T>& tape, const ViTModel<T>& model, bool trainable) {
    StagedModel<T> s;
    auto put = [&](const Mat<T>& m) {
        Var<T> v = tape.leaf(m, trainable);
        s.ordered.push_back(v);
        return v;
    };
    s.w_embed = put(model.w_embed);
    s.pos_embed = put(model.pos_embed);
    s.cls_token = put(model.cls_token);
    s.blocks.reserve(model.blocks.size());
    for (const auto& b : model.blocks) {
        typename StagedModel<T>::Block sb;
        sb.ln1_gain = put(b.ln1_gain);
        sb.ln1_offset = put(b.ln1_offset);
        sb.wq = put(b.wq);
        sb.bq = put(b.bq);
        sb.wk = put(b.wk);
        sb.bk = put(b.bk);
        sb.wv = put(b.wv);
        sb.bv = put(b.bv);
        sb.wo = put(b.wo);
        sb.bo = put(b.bo);
        sb.ln2_gain = put(b.ln2_gain);
        sb.ln2_offset = put(b.ln2_offset);
        sb.w_mlp_in = put(b.w_mlp_in);
        sb.b_mlp_in = put(b.b_mlp_in);
        sb.w_mlp_out = put(b.w_mlp_out);
        sb.b_mlp_out = put(b.b_mlp_out);
        s.blocks.push_back(sb);
    }
    s.w_decode = put(model.w_decode);
    return s;
}

template <typename T>
std::vector<Mat<T>> collect_grads(const StagedModel<T>& staged) {
    std::vector<Mat<T>> grads;
    grads.reserve(staged.ordered.size());
    for (const auto& v : staged.ordered) {
        if (v.has_grad())
            grads.push_back(v.node()->grad);
        else
            grads.emplace_back(v.rows(), v.cols(), T(0));
    }
    return grads;
}

template <typename T>
Var<T> embed(Tape<T>& tape, Var<T> tokens, const StagedModel<T>& m) {
    return tape.matmul(tokens, m.w_embed);
}

template <typename T>
Var<T> encode(Tape<T>& tape, Var<T> embedded, const StagedModel<T>& m, const ViTConfig& cfg) {
    if (embedded.rows() != cfg.token_count() || embedded.cols() != cfg.embed_dim)
        throw ShapeError("encode: embedded tokens have the wrong shape");
    const uint32_t head_dim = cfg.embed_dim / cfg.heads;
    const T att_scale = T(1) / static_cast<T>(std::sqrt(static_cast<double>(head_dim)));

    Var<T> x = tape.add(tape.concat_rows(m.cls_token, embedded), m.pos_embed);
    for (const auto& b : m.blocks) {
        // attention sublayer
        Var<T> h = tape.layer_norm_rows(x, b.ln1_gain, b.ln1_offset);
        Var<T> q = tape.add_rowvec(tape.matmul(h, b.wq), b.bq);
        Var<T> k = tape.add_rowvec(tape.matmul(h, b.wk), b.bk);
        Var<T> v = tape.add_rowvec(tape.matmul(h, b.wv), b.bv);
        std::vector<Var<T>> heads_out;
        heads_out.reserve(cfg.heads);
        for (uint32_t hi = 0; hi < cfg.heads; ++hi) {
            const size_t c0 = size_t(hi) * head_dim;
            Var<T> qh = tape.slice_cols(q, c0, head_dim);
            Var<T> kh = tape.slice_cols(k, c0, head_dim);
            Var<T> vh = tape.slice_cols(v, c0, head_dim);
            Var<T> scores = tape.smul(tape.matmul(qh, tape.transpose(kh)), att_scale);
            Var<T> attn = tape.softmax_rows(scores);
            heads_out.push_back(tape.matmul(attn, vh));
        }
        Var<T> merged = tape.concat_cols(heads_out);
        x = tape.add(x, tape.add_rowvec(tape.matmul(merged, b.wo), b.bo));

        // mlp sublayer
        Var<T> h2 = tape.layer_norm_rows(x, b.ln2_gain, b.ln2_offset);
        Var<T> mid = tape.gelu(tape.add_rowvec(tape.matmul(h2, b.w_mlp_in), b.b_mlp_in));
        x = tape.add(x, tape.add_rowvec(tape.matmul(mid, b.w_mlp_out), b.b_mlp_out));
    }
    return x;
}

template <typename T>
Var<T> decode(Tape<T>& tape, Var<T> encoded, const StagedModel<T>& m) {
    Var<T> tokens = tape.slice_rows(encoded, 1, encoded.rows() - 1);
    return tape.matmul(tokens, m.w_decode);
}

template struct ViTModel<float>;
template struct ViTModel<double>;
template StagedModel<float> stage_model<float>(Tape<float>&, const ViTModel<float>&, bool);
template StagedModel<double> stage_model<double>(Tape<double>&, const ViTModel<double>&, bool);
template std::vector<Mat<float>> collect_grads<float>(const StagedModel<float>&);
template std::vector<Mat<double>> collect_grads<double>(const StagedModel<double>&);
template Var<float> embed<float>(Tape<float>&, Var<float>, const StagedModel<float>&);
template Var<double> embed<double>(Tape<double>&, Var<double>, const StagedModel<double>&);
template Var<float> encode<float>(Tape<float>&, Var<float>, const StagedModel<float>&,
                                  const ViTConfig&);
template Var<double> encode<double>(Tape<double>&, Var<double>, const StagedModel<double>&,
                                    const ViTConfig&);
template Var<float> decode<float>(Tape<float>&, Var<float>, const StagedModel<float>&);
template Var<double> decode<double>(Tape<double>&, Var<double>, const StagedModel<double>&);

}  // namespace ropim
