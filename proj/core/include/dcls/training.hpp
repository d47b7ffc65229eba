#pragma once

#include <cstdint>
#include <vector>

#include "dcls/corpus.hpp"
#include "dcls/encoder.hpp"
#include "dcls/generator.hpp"
#include "dcls/schedule.hpp"

namespace dcls {

struct AblationFlags {
    bool use_da = true;  // pseudo-sample augmentation
    bool use_lap = true; // label prompt in the generator
    bool use_nrt = true; // contrastive term
};

struct TrainConfig {
    int epochs = 6;
    int batch_size = 8;
    double tau = 1.0;
    int aug_per_sample = 4; // B
    double lr = 3e-4;
    double weight_decay = 0.01;
    uint64_t seed = 42;
    enum class Refresh { once, epoch, batch } refresh = Refresh::epoch;
    AblationFlags flags;
    int group_index = 4;
    int num_groups = 8;
    double gen_temperature = 1.0;

    void validate() const;
};

// Forward outputs of one batch: pooled representations and class logits for
// the k originals plus per-original pseudo-sample logits. Pseudo samples
// inherit their source's label, so no separate label list is needed.
struct BatchRepresentations {
    std::vector<std::vector<double>> reps;                    // k x d
    std::vector<int> labels;                                  // k
    std::vector<std::vector<double>> original_logits;         // k x m
    std::vector<std::vector<std::vector<double>>> pseudo_logits; // k x B x m
};

// (1/k) log sum_i sum_{j: l_j != l_i} exp(cos(h_i, h_j) / tau), or 0 when
// every negative set is empty. Throws RuntimeError on a zero-norm
// representation.
double contrastive_loss(const BatchRepresentations& reps, double tau);

// -(1/(k(B+1))) sum_i sum_{b=0..B} log softmax(logits)[true class], where
// b = 0 is the original itself.
double classification_loss(const BatchRepresentations& reps, int B);

// Flag-adjusted total: contrastive + classification. use_nrt=false drops the
// contrastive term; use_da=false restricts the classification term to
// originals.
double total_loss(const BatchRepresentations& reps, double tau, int B, const AblationFlags& flags);

struct EpochLog {
    int epoch = 0;
    double contrastive = 0.0;
    double classification = 0.0;
    double loss = 0.0;
    double train_acc = 0.0;
};

// Plain cross-entropy fine-tuning on originals; the result serves as the
// proxy supplying token weights for generator training. Throws ConfigError
// on a single-class dataset.
EncoderModel train_proxy(const std::vector<TokenizedSample>& dataset,
                         const EncoderConfig& net_config, int epochs, int batch_size, double lr,
                         double weight_decay, uint64_t seed,
                         std::vector<EpochLog>* log = nullptr);

// In-loop augmentation: token weights come from the CURRENT TC model's
// last-layer CLS attention (not the proxy), then B pseudo samples per
// original.
std::vector<std::vector<PseudoSample>> reflective_augment(
    const EncoderModel& tc_model, const GeneratorModel& gen, const Vocab& vocab,
    const std::vector<TokenizedSample>& originals, const std::vector<int>& original_ids,
    const StepGroups& groups, int group_index, int B, uint64_t seed, double temperature = 1.0);

// Noise-resistant training (total objective over originals plus refreshed
// pseudo samples, class-stratified batching). With use_da=false and
// use_nrt=false this reduces exactly to plain cross-entropy fine-tuning.
// `gen` may be null when use_da is false.
EncoderModel train_with_noise_resistance(const std::vector<TokenizedSample>& dataset,
                                         const GeneratorModel* gen, const Vocab& vocab,
                                         const EncoderConfig& net_config,
                                         const TrainConfig& train_config,
                                         std::vector<EpochLog>* log = nullptr);

// Class-stratified batch assignment: a seeded shuffle chunked into batches,
// repaired so every batch sees >= 2 classes whenever the dataset does.
std::vector<std::vector<size_t>> stratified_batches(const std::vector<int>& labels,
                                                    int batch_size, RngStream& rng);

} // namespace dcls
