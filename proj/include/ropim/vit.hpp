// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ropim/autodiff.hpp"
#include "ropim/image.hpp"
#include "ropim/matrix.hpp"

namespace ropim {

struct ViTConfig {
    uint32_t image_size = 16;  // square input, pixels
    uint32_t channels = 3;
    uint32_t patch_size = 2;
    uint32_t embed_dim = 32;
    uint32_t depth = 2;
    uint32_t heads = 2;
    double mlp_ratio = 4.0;

    uint32_t grid() const { return image_size / patch_size; }
    uint32_t token_count() const { return grid() * grid(); }
    uint32_t patch_dim() const { return patch_size * patch_size * channels; }
    uint32_t mlp_hidden() const { return static_cast<uint32_t>(mlp_ratio * embed_dim + 0.5); }
    void validate() const;
    bool operator==(const ViTConfig&) const = default;
};

// Tokens are patches flattened row-major (row, col, channel-fastest);
// patches are ordered row-major over the grid.
Mat<double> patchify(const Image& img, uint32_t patch_size);
Image unpatchify(const Mat<double>& tokens, uint32_t height, uint32_t width, uint32_t channels,
                 uint32_t patch_size);

template <typename T>
struct BlockParams {
    Mat<T> ln1_gain, ln1_offset;
    Mat<T> wq, wk, wv, wo;
    Mat<T> bq, bk, bv, bo;
    Mat<T> ln2_gain, ln2_offset;
    Mat<T> w_mlp_in, b_mlp_in;
    Mat<T> w_mlp_out, b_mlp_out;
};

template <typename T>
struct ViTModel {
    ViTConfig config;
    Mat<T> w_embed;    // patch_dim x D
    Mat<T> pos_embed;  // (N+1) x D, learnable, zero-initialized
    Mat<T> cls_token;  // 1 x D
    std::vector<BlockParams<T>> blocks;
    Mat<T> w_decode;  // D x patch_dim

    // Truncated-normal(0.02) weight matrices, zero biases/embeddings,
    // unit layer-norm gains. Deterministic in seed.
    static ViTModel init(const ViTConfig& cfg, uint64_t seed);

    // Stable name -> tensor enumeration; the checkpoint and optimizer
    // orders both come from here.
    std::vector<std::pair<std::string, Mat<T>*>> named_params();
    std::vector<std::pair<std::string, const Mat<T>*>> named_params() const;
    size_t param_count() const;
};

// Closed-form parameter count for a config; regression target.
size_t param_count_formula(const ViTConfig& cfg);

// Per-tape handles for every model parameter, in named_params() order.
template <typename T>
struct StagedModel {
    Var<T> w_embed, pos_embed, cls_token, w_decode;
    struct Block {
        Var<T> ln1_gain, ln1_offset, wq, wk, wv, wo, bq, bk, bv, bo, ln2_gain, ln2_offset,
            w_mlp_in, b_mlp_in, w_mlp_out, b_mlp_out;
    };
    std::vector<Block> blocks;
    std::vector<Var<T>> ordered;  // matches named_params() order
};

template <typename T>
StagedModel<T> stage_model(Tape<T>& tape, const ViTModel<T>& model, bool trainable);

// After backward: gradients in named_params() order (zeros where untouched).
template <typename T>
std::vector<Mat<T>> collect_grads(const StagedModel<T>& staged);

template <typename T>
Var<T> embed(Tape<T>& tape, Var<T> tokens, const StagedModel<T>& m);

// Prepend the class token, add positional embeddings, run the pre-norm
// blocks. Output has N+1 rows; row 0 is the class token.
template <typename T>
Var<T> encode(Tape<T>& tape, Var<T> embedded, const StagedModel<T>& m, const ViTConfig& cfg);

template <typename T>
Var<T> decode(Tape<T>& tape, Var<T> encoded, const StagedModel<T>& m);

}  // namespace ropim
