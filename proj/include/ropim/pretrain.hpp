// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ropim/data.hpp"
#include "ropim/sketch.hpp"
#include "ropim/vit.hpp"

namespace ropim {

struct TrainingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Exact rational sketching ratio; keeps bucket-count rounding free of
// floating-point drift (1/7 stays 1/7, not 0.142857...).
struct Ratio {
    uint32_t num = 1;
    uint32_t den = 7;

    double to_double() const { return static_cast<double>(num) / static_cast<double>(den); }
    void validate() const;
    // Accepts "a/b" or a plain decimal ("0.25" -> 1/4).
    static Ratio parse(const std::string& text);
    bool operator==(const Ratio&) const = default;
};

enum class LossReduction : uint8_t { MeanAbs = 0, SumAbs = 1 };
enum class Precision : uint8_t { F64 = 0, F32 = 1 };

struct TrainConfig {
    Ratio rho{1, 7};
    uint32_t epochs = 20;
    uint32_t batch_size = 16;
    double base_lr = 1.5e-4;  // scaled by batch_size / 512
    uint32_t warmup_epochs = 10;
    double beta1 = 0.9;
    double beta2 = 0.95;
    double weight_decay = 0.05;
    uint64_t seed = 0;
    LossReduction reduction = LossReduction::MeanAbs;
    Precision precision = Precision::F64;
    SketchMode sketch_mode = SketchMode::PaperScaled;
    bool flip_augment = true;
    bool crop_augment = false;       // random resized crop, off for determinism-friendly CI
    bool shared_batch_spec = false;  // ablation: one sketch per batch instead of per sample
    uint32_t threads = 0;            // 0 = all cores; never serialized

    double effective_lr() const { return base_lr * batch_size / 512.0; }
    void validate() const;
    bool operator==(const TrainConfig&) const = default;
};

// Linear ramp to base_lr over the warmup, cosine decay to 0 after.
double lr_at(uint64_t step, uint64_t total_steps, uint64_t warmup_steps, double base_lr);

template <typename T>
struct OptimizerState {
    std::vector<Mat<T>> m;  // first moments, named-param order
    std::vector<Mat<T>> v;  // second moments
    uint64_t step = 0;

    static OptimizerState zeros_like(const std::vector<std::pair<std::string, Mat<T>*>>& params);
};

// One decoupled-weight-decay Adam step with bias correction.
// Throws TrainingError on non-finite gradients.
template <typename T>
void adamw_step(const std::vector<std::pair<std::string, Mat<T>*>>& params,
                const std::vector<Mat<T>>& grads, OptimizerState<T>& state, T lr, T beta1, T beta2,
                T weight_decay, T eps = T(1e-8));

// Reconstruction objective: embed the tokens, soft-mask the embeddings with
// the sketch round-trip, encode/decode, then penalize the residual through
// the complement of the very same sketch.
template <typename T>
Var<T> ropim_loss(Tape<T>& tape, const Mat<T>& tokens, const StagedModel<T>& staged,
                  const ViTConfig& cfg, const SketchSpec& spec, LossReduction reduction);

struct LossLogRow {
    uint32_t epoch;  // 1-based
    uint64_t step;   // 1-based global step
    double lr;
    double loss;
};

// ---- checkpoint ------------------------------------------------------

struct Checkpoint {
    uint32_t version = 1;
    ViTConfig vit;
    TrainConfig train;
    uint32_t epoch = 0;
    bool has_optimizer = false;
    uint64_t opt_step = 0;
    std::vector<std::pair<std::string, Mat<float>>> tensors;  // params, then opt.m:/opt.v:
};

std::vector<uint8_t> encode_checkpoint(const Checkpoint& ck);
Checkpoint decode_checkpoint(const std::vector<uint8_t>& bytes);
void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

template <typename T>
Checkpoint make_checkpoint(const ViTModel<T>& model, const TrainConfig& cfg, uint32_t epoch,
                           const OptimizerState<T>* opt);

template <typename T>
ViTModel<T> model_from_checkpoint(const Checkpoint& ck);

// ---- training runs ---------------------------------------------------

struct TrainResult {
    Checkpoint checkpoint;
    std::vector<LossLogRow> log;
    std::vector<double> epoch_mean_loss;  // index 0 = epoch 1
    ChannelStats stats;
};

// One sketch per sample per epoch, drawn from sub_seed(seed, epoch, index).
// If out_dir is nonempty, writes checkpoint.bin (refreshed per epoch) and
// loss_log.csv there.
template <typename T>
TrainResult pretrain_run(const Dataset& dataset, const ViTConfig& vit_cfg, const TrainConfig& cfg,
                         const std::string& out_dir = "");

void write_loss_log(const std::string& path, const std::vector<LossLogRow>& log);

// ---- evaluation ------------------------------------------------------

// Mean-pooled encoder outputs (class-token row excluded), clean forward
// pass, no sketching.
template <typename T>
Mat<T> extract_features(const ViTModel<T>& model, const Dataset& standardized, uint32_t threads = 0);

struct ProbeResult {
    double train_accuracy = 0.0;
    double test_accuracy = 0.0;
};

// Freeze the encoder, fit a linear softmax classifier on train features,
// report top-1 accuracy. Deterministic (zero-init classifier, full-batch
// updates).
template <typename T>
ProbeResult linear_probe(const ViTModel<T>& model, const Dataset& train, const Dataset& test,
                         const ChannelStats& stats, uint32_t probe_epochs, double probe_lr = 0.05,
                         uint32_t threads = 0);

}  // namespace ropim
