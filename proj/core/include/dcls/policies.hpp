#pragma once

#include <cstdint>
#include <vector>

#include "dcls/corpus.hpp"
#include "dcls/encoder.hpp"
#include "dcls/generator.hpp"
#include "dcls/schedule.hpp"

namespace dcls {

struct AugPolicy {
    enum class Kind { balance_distribution, n_samples_each };
    Kind kind = Kind::n_samples_each;
    int n = 4; // n_samples_each only
    int group_index = 4;
    int num_groups = 8;
    uint64_t seed = 42;
    double temperature = 1.0;
};

// Static policies use the proxy's attention for trajectories (no TC model
// exists when `augment` runs standalone).

// Generates pseudo samples for minority classes, sampling source originals
// with replacement, until every class count equals the majority count.
// Originals are kept; the return value is the pseudo samples only. Throws
// ConfigError if a vocabulary class has no originals.
std::vector<PseudoSample> augment_balance(const std::vector<TokenizedSample>& dataset,
                                          const GeneratorModel& gen, const EncoderModel& proxy,
                                          const Vocab& vocab, const AugPolicy& policy);

// Exactly n pseudo samples per original.
std::vector<PseudoSample> augment_n_each(const std::vector<TokenizedSample>& dataset,
                                         const GeneratorModel& gen, const EncoderModel& proxy,
                                         const Vocab& vocab, const AugPolicy& policy);

std::vector<PseudoSample> run_policy(const std::vector<TokenizedSample>& dataset,
                                     const GeneratorModel& gen, const EncoderModel& proxy,
                                     const Vocab& vocab, const AugPolicy& policy);

// Class-stratified subsample of round(count * fraction) per class, seeded.
// Throws ConfigError when a class would round to zero samples.
std::vector<size_t> partial_split(const std::vector<LabeledSample>& dataset, double fraction,
                                  uint64_t seed);

// Exactly `shots` samples per class, seeded. Throws ConfigError when a class
// has fewer than `shots` samples.
std::vector<size_t> few_shot_split(const std::vector<LabeledSample>& dataset, int shots,
                                   uint64_t seed);

} // namespace dcls
