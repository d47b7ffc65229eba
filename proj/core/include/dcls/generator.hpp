#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dcls/corpus.hpp"
#include "dcls/encoder.hpp"
#include "dcls/schedule.hpp"

namespace dcls {

// Diffusion LM sample generator: an encoder in LM mode, the schedule it was
// trained under, and whether the label-prompt slot is used (off for the
// no-prompting ablation, which puts PAD in the slot instead).
struct GeneratorModel {
    EncoderModel net;
    NoiseSchedule schedule;
    bool label_prompt_enabled = true;
};

// [CLS] <LBL_label> [SEP] content... [SEP], with the mask set tracked in
// prompted coordinates. The three prompt positions are never maskable.
struct PromptedSequence {
    std::vector<int32_t> ids;
    int content_offset = 3;
    int content_len = 0;
    std::vector<int32_t> masked_positions;
};

// Wraps an already-corrupted copy of the sample's ids with the label prompt.
// With use_label_prompt off the label slot holds PAD. Throws ConfigError if
// the prompted sequence would exceed max_len.
PromptedSequence label_prompt(const TokenizedSample& sample, std::span<const int32_t> corrupted_ids,
                              const Vocab& vocab, bool use_label_prompt, int max_len);

struct GeneratorTrainConfig {
    int epochs = 8;
    int batch_size = 8;
    double lr = 3e-4;
    double weight_decay = 0.01;
    uint64_t seed = 42;
    bool use_label_prompt = true;
};

// Denoising training under the label-aware schedule: weights from the proxy,
// one trajectory and one uniform step per sample, masked-position
// cross-entropy against the original tokens. Deterministic given the seed.
GeneratorModel train_generator(const std::vector<TokenizedSample>& dataset,
                               const EncoderModel& proxy, const Vocab& vocab,
                               const NoiseSchedule& schedule, const EncoderConfig& net_config,
                               const GeneratorTrainConfig& train_config,
                               std::vector<double>* epoch_losses = nullptr);

struct PseudoSample {
    std::string text;
    std::string label;
    int source_id = -1;
    int t_star = 0;
    int group = -1;
    uint64_t seed = 0;
};

// (reveal step, prompted positions revealed at that step), ordered by
// descending step. Tokens with larger mask times are generated earlier, so
// weakly label-related tokens are recovered first.
std::vector<std::pair<int, std::vector<int>>> reveal_plan(const MaskTrajectory& traj, int t_star,
                                                          int content_offset);

// Reverse pass from corruption level t_star down to 1. Each step reveals the
// positions whose mask time equals that step, sampling from the
// temperature-scaled softmax restricted to content tokens; unmasked source
// tokens are preserved verbatim. t_star = 0 reproduces the source text.
PseudoSample reverse_generate(const GeneratorModel& gen, const Vocab& vocab,
                              const MaskTrajectory& traj, int t_star, int class_id,
                              RngStream& rng, double temperature = 1.0);

// B pseudo samples for one source: fresh trajectory per output, t_star drawn
// uniformly from the chosen group's steps. RNG substreams are derived from
// (seed, source_id, replica), so results are order-independent.
std::vector<PseudoSample> generate_for_sample(const GeneratorModel& gen, const Vocab& vocab,
                                              const TokenizedSample& sample,
                                              const TokenWeights& weights,
                                              const StepGroups& groups, int group_index, int B,
                                              uint64_t seed, int source_id,
                                              double temperature = 1.0);

} // namespace dcls
