#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dcls/mat.hpp"
#include "dcls/rng.hpp"

namespace dcls {

struct EncoderConfig {
    int vocab_size = 0;
    int max_len = 64;
    int dim = 64;
    int heads = 4;
    int layers = 2;
    int ffn = 128;
    int num_classes = 2;
    double dropout = 0.1;
    uint64_t seed = 42;

    int head_dim() const { return dim / heads; }
    void validate() const; // throws ConfigError
};

struct ParamInfo {
    std::string name;
    size_t offset = 0;
    int rows = 0;
    int cols = 0; // cols == 1 for vectors
    size_t count() const { return static_cast<size_t>(rows) * cols; }
};

// Flat parameter storage with named views. Keeping one contiguous buffer
// makes the optimizer, checkpointing, and finite-difference perturbation
// trivial.
class ParamLayout {
public:
    ParamLayout() = default;
    explicit ParamLayout(const EncoderConfig& cfg);

    const std::vector<ParamInfo>& entries() const { return entries_; }
    size_t total() const { return total_; }
    const ParamInfo& find(std::string_view name) const;
    // Name of the parameter tensor owning a flat index.
    const ParamInfo& owner_of(size_t flat_index) const;

private:
    std::vector<ParamInfo> entries_;
    size_t total_ = 0;
};

// Compact transformer encoder (pre-LN, fixed sinusoidal positions, LM head
// weight-tied to the input embeddings) with a classifier head over the CLS
// hidden state.
struct EncoderModel {
    EncoderConfig config;
    ParamLayout layout;
    std::vector<double> params;
    Mat positional; // max_len x dim, derived, not a parameter

    double* tensor(std::string_view name);
    const double* tensor(std::string_view name) const;
};

EncoderModel init_model(const EncoderConfig& config);

enum class ForwardMode { classify, lm };

struct ForwardTrace {
    Mat hidden;                      // L x d, final hidden states
    std::vector<double> pooled;      // hidden state at CLS
    std::vector<double> class_logits; // length m
    Mat lm_logits;                   // L x V (lm mode only)
    // attention probabilities, [layer][head], each L x L
    std::vector<std::vector<Mat>> attention;

    const std::vector<Mat>& last_attention() const { return attention.back(); }
};

// Runs the encoder over one sequence. Dropout is active only when
// train_mode is set and config.dropout > 0, drawing masks from rng.
// Throws ConfigError if ids is empty, overlong, or contains invalid ids.
ForwardTrace forward(const EncoderModel& model, std::span<const int32_t> ids, ForwardMode mode,
                     bool train_mode = false, RngStream* rng = nullptr);

// LM logits restricted to the given positions (one row per position), eval
// mode. Used by the reverse generation loop where only revealed positions
// need scoring.
Mat forward_lm_positions(const EncoderModel& model, std::span<const int32_t> ids,
                         std::span<const int> positions);

struct BatchItem {
    std::vector<int32_t> ids;
    int label = -1;
    // ce_lm_masked: original ids aligned with `ids`, and the positions whose
    // reconstruction is supervised.
    std::vector<int32_t> target_ids;
    std::vector<int32_t> masked_positions;
    // noise_resistant: -1 for originals, else index of the source original
    // within the batch.
    int source = -1;
};

enum class Objective { ce_classify, ce_lm_masked, noise_resistant };

struct BatchOptions {
    double tau = 1.0;
    bool use_contrastive = true; // noise_resistant only
    bool train_mode = true;
    uint64_t dropout_seed = 0;
};

struct LossGrads {
    double loss = 0.0;
    double contrastive = 0.0;    // components, noise_resistant only
    double classification = 0.0;
    int correct = 0; // argmax hits over classified items
    int total = 0;
    std::vector<double> grads;
};

// Loss averaged over batch contributions plus gradients for every parameter.
//  - ce_classify: mean cross-entropy of class logits vs labels.
//  - ce_lm_masked: per-sequence mean over masked positions, then mean over
//    sequences that have at least one masked position. Throws RuntimeError
//    ("no supervised positions") if every mask set is empty.
//  - noise_resistant: contrastive term over originals plus classification
//    term over originals and pseudo samples.
LossGrads loss_and_grads(const EncoderModel& model, const std::vector<BatchItem>& batch,
                         Objective objective, const BatchOptions& options = {});

// Adaptive-moment optimizer with decoupled weight decay.
struct OptimizerState {
    double lr = 3e-4;
    double weight_decay = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int64_t step = 0;
    std::vector<double> m;
    std::vector<double> v;

    static OptimizerState create(const EncoderModel& model, double lr, double weight_decay);
};

// Throws RuntimeError naming the parameter tensor if any gradient is
// non-finite.
void optimizer_step(EncoderModel& model, const std::vector<double>& grads, OptimizerState& state);

} // namespace dcls
