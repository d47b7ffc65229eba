#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dcls/config.hpp"
#include "dcls/corpus.hpp"
#include "dcls/encoder.hpp"
#include "dcls/generator.hpp"
#include "dcls/metrics.hpp"
#include "dcls/schedule.hpp"
#include "dcls/training.hpp"

namespace dcls {

// Master seed: DCLS_SEED environment variable when set, else the config's
// `seed` key.
uint64_t master_seed(const Config& cfg);

NoiseSchedule schedule_from(const Config& cfg);
SynthSpec synth_spec_from(const Config& cfg, uint64_t seed, bool include_test);

// Train split with data.fraction / data.shots applied (seeded by the master
// seed, so every stage sees the same subset).
std::vector<LabeledSample> load_train_split(const Config& cfg, uint64_t master);

// Tokenizes and truncates content so prompted sequences fit max_len.
std::vector<TokenizedSample> tokenize_all(const Config& cfg, const Vocab& vocab,
                                          const std::vector<LabeledSample>& samples);

// Pipeline subcommands. Each writes a deterministic <stage>_metrics.json and
// a <stage>_report.json (config snapshot, wall clock, input hashes) under
// out.dir, plus its stage artifacts. They throw ConfigError/RuntimeError on
// failure; the CLI maps those to exit codes 1 and 2.
void cmd_synth_data(const Config& cfg);
void cmd_train_proxy(const Config& cfg);
void cmd_train_generator(const Config& cfg);
void cmd_augment(const Config& cfg);
void cmd_train_classifier(const Config& cfg);
void cmd_evaluate(const Config& cfg);
void cmd_sweep_groups(const Config& cfg);
void cmd_ablation(const Config& cfg);
void cmd_project(const Config& cfg);

// One end-to-end training/evaluation run (proxy -> generator -> classifier
// -> metrics) held in memory. Sweeps and the ablation grid reuse proxies and
// generators across rows via an internal cache.
class ExperimentRunner {
public:
    ExperimentRunner(const Config& cfg, uint64_t master);

    Metrics run(uint64_t seed, const AblationFlags& flags, int group_index);
    const Vocab& vocab() const { return vocab_; }
    const std::vector<TokenizedSample>& train_set() const { return train_tok_; }
    const std::vector<TokenizedSample>& test_set() const { return test_tok_; }

private:
    const EncoderModel& proxy_for(uint64_t seed);
    const GeneratorModel& generator_for(uint64_t seed, bool use_lap);

    Config cfg_;
    uint64_t master_;
    Vocab vocab_;
    std::vector<TokenizedSample> train_tok_;
    std::vector<TokenizedSample> test_tok_;
    std::vector<std::pair<uint64_t, EncoderModel>> proxies_;
    std::vector<std::tuple<uint64_t, bool, GeneratorModel>> generators_;
};

struct PartialRunRow {
    double fraction = 0.0;
    double macro_f1 = 0.0;
    double accuracy = 0.0;
};

// Table-7-analog harness: runs the full method at each fraction and writes
// partial.csv / partial_metrics.json / partial_report.json under out.dir.
std::vector<PartialRunRow> run_partial_sweep(const Config& cfg,
                                             const std::vector<double>& fractions);

} // namespace dcls
