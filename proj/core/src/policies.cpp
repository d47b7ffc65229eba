#include "dcls/policies.hpp"

#include <algorithm>
#include <map>
#include <numeric>

#include "dcls/common.hpp"

namespace dcls {

namespace {

std::vector<TokenWeights> proxy_weights(const std::vector<TokenizedSample>& dataset,
                                        const EncoderModel& proxy) {
    std::vector<TokenWeights> out;
    out.reserve(dataset.size());
    for (const auto& s : dataset)
        out.push_back(token_weights(forward(proxy, s.ids, ForwardMode::classify), s));
    return out;
}

} // namespace

std::vector<PseudoSample> augment_balance(const std::vector<TokenizedSample>& dataset,
                                          const GeneratorModel& gen, const EncoderModel& proxy,
                                          const Vocab& vocab, const AugPolicy& policy) {
    if (dataset.empty()) throw ConfigError("empty dataset");
    const int m = vocab.num_classes();
    std::vector<std::vector<size_t>> by_class(m);
    for (size_t i = 0; i < dataset.size(); ++i) by_class[dataset[i].label_id].push_back(i);
    size_t majority = 0;
    for (const auto& v : by_class) majority = std::max(majority, v.size());
    for (int c = 0; c < m; ++c)
        if (by_class[c].empty())
            throw ConfigError("class has no originals to amplify: " + vocab.classes()[c]);

    StepGroups groups = step_groups(gen.schedule.total_steps, policy.num_groups);
    std::vector<TokenWeights> weights = proxy_weights(dataset, proxy);

    std::vector<PseudoSample> out;
    for (int c = 0; c < m; ++c) {
        size_t need = majority - by_class[c].size();
        RngStream pick = substream(policy.seed, "balance-pick", static_cast<uint64_t>(c));
        for (size_t k = 0; k < need; ++k) {
            size_t src = by_class[c][pick.uniform_int(0, by_class[c].size() - 1)];
            auto gen_one = generate_for_sample(
                gen, vocab, dataset[src], weights[src], groups, policy.group_index, 1,
                mix64(policy.seed, mix64(static_cast<uint64_t>(c) + 1, k + 1)),
                static_cast<int>(src), policy.temperature);
            out.push_back(std::move(gen_one[0]));
        }
    }
    return out;
}

std::vector<PseudoSample> augment_n_each(const std::vector<TokenizedSample>& dataset,
                                         const GeneratorModel& gen, const EncoderModel& proxy,
                                         const Vocab& vocab, const AugPolicy& policy) {
    if (dataset.empty()) throw ConfigError("empty dataset");
    if (policy.n < 0) throw ConfigError("n must be >= 0");
    std::vector<PseudoSample> out;
    if (policy.n == 0) return out;

    StepGroups groups = step_groups(gen.schedule.total_steps, policy.num_groups);
    std::vector<TokenWeights> weights = proxy_weights(dataset, proxy);
    for (size_t i = 0; i < dataset.size(); ++i) {
        auto gen_b = generate_for_sample(gen, vocab, dataset[i], weights[i], groups,
                                         policy.group_index, policy.n, policy.seed,
                                         static_cast<int>(i), policy.temperature);
        for (auto& ps : gen_b) out.push_back(std::move(ps));
    }
    return out;
}

std::vector<PseudoSample> run_policy(const std::vector<TokenizedSample>& dataset,
                                     const GeneratorModel& gen, const EncoderModel& proxy,
                                     const Vocab& vocab, const AugPolicy& policy) {
    if (policy.kind == AugPolicy::Kind::balance_distribution)
        return augment_balance(dataset, gen, proxy, vocab, policy);
    return augment_n_each(dataset, gen, proxy, vocab, policy);
}

namespace {

std::map<std::string, std::vector<size_t>> indices_by_label(
    const std::vector<LabeledSample>& dataset) {
    std::map<std::string, std::vector<size_t>> by_label;
    for (size_t i = 0; i < dataset.size(); ++i) by_label[dataset[i].label].push_back(i);
    return by_label;
}

} // namespace

std::vector<size_t> partial_split(const std::vector<LabeledSample>& dataset, double fraction,
                                  uint64_t seed) {
    if (dataset.empty()) throw ConfigError("empty dataset");
    if (fraction <= 0.0 || fraction > 1.0) throw ConfigError("fraction must be in (0, 1]");
    auto by_label = indices_by_label(dataset);

    std::vector<size_t> keep;
    uint64_t class_idx = 0;
    for (auto& [label, idx] : by_label) {
        size_t take = static_cast<size_t>(
            std::llround(fraction * static_cast<double>(idx.size())));
        if (take == 0)
            throw ConfigError("fraction too small to retain class '" + label + "'");
        RngStream rng = substream(seed, "partial", class_idx++);
        rng.shuffle(idx);
        keep.insert(keep.end(), idx.begin(), idx.begin() + take);
    }
    std::sort(keep.begin(), keep.end());
    return keep;
}

std::vector<size_t> few_shot_split(const std::vector<LabeledSample>& dataset, int shots,
                                   uint64_t seed) {
    if (dataset.empty()) throw ConfigError("empty dataset");
    if (shots < 1) throw ConfigError("shots must be >= 1");
    auto by_label = indices_by_label(dataset);

    std::vector<size_t> keep;
    uint64_t class_idx = 0;
    for (auto& [label, idx] : by_label) {
        if (static_cast<int>(idx.size()) < shots)
            throw ConfigError("class '" + label + "' has fewer than " + std::to_string(shots) +
                              " samples");
        RngStream rng = substream(seed, "fewshot", class_idx++);
        rng.shuffle(idx);
        keep.insert(keep.end(), idx.begin(), idx.begin() + shots);
    }
    std::sort(keep.begin(), keep.end());
    return keep;
}

} // namespace dcls
