#include "dcls/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "dcls/common.hpp"
#include "dcls/mat.hpp"

namespace dcls {

void TrainConfig::validate() const {
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (tau <= 0.0) throw ConfigError("tau must be > 0");
    if (aug_per_sample < 0) throw ConfigError("aug_per_sample must be >= 0");
    if (flags.use_nrt && batch_size < 2)
        throw ConfigError("contrastive training needs batch_size >= 2");
}

double contrastive_loss(const BatchRepresentations& reps, double tau) {
    if (tau <= 0.0) throw ConfigError("tau must be > 0");
    const int k = static_cast<int>(reps.reps.size());
    if (k == 0) throw ConfigError("empty batch");
    if (reps.labels.size() != reps.reps.size()) throw ConfigError("labels do not match reps");

    std::vector<double> norm(k);
    for (int i = 0; i < k; ++i) {
        const auto& h = reps.reps[i];
        norm[i] = std::sqrt(dot(h.data(), h.data(), static_cast<int>(h.size())));
        if (norm[i] < 1e-12) throw RuntimeError("zero-norm representation in contrastive loss");
    }
    double z = 0.0;
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) {
            if (j == i || reps.labels[j] == reps.labels[i]) continue;
            double sim = dot(reps.reps[i].data(), reps.reps[j].data(),
                             static_cast<int>(reps.reps[i].size())) /
                         (norm[i] * norm[j]);
            z += std::exp(sim / tau);
        }
    if (z <= 0.0) return 0.0; // every negative set empty
    return std::log(z) / k;
}

namespace {

double log_softmax_at(const std::vector<double>& logits, int target) {
    double mx = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double v : logits) sum += std::exp(v - mx);
    return logits[target] - mx - std::log(sum);
}

} // namespace

double classification_loss(const BatchRepresentations& reps, int B) {
    const int k = static_cast<int>(reps.original_logits.size());
    if (k == 0) throw ConfigError("empty batch");
    if (reps.labels.size() != reps.original_logits.size())
        throw ConfigError("labels do not match logits");
    double total = 0.0;
    for (int i = 0; i < k; ++i) {
        total -= log_softmax_at(reps.original_logits[i], reps.labels[i]);
        if (B > 0) {
            if (static_cast<int>(reps.pseudo_logits.size()) != k ||
                static_cast<int>(reps.pseudo_logits[i].size()) != B)
                throw ConfigError("pseudo logit lists must have length B for every original");
            for (int b = 0; b < B; ++b)
                total -= log_softmax_at(reps.pseudo_logits[i][b], reps.labels[i]);
        }
    }
    return total / (static_cast<double>(k) * (B + 1));
}

double total_loss(const BatchRepresentations& reps, double tau, int B,
                  const AblationFlags& flags) {
    double le = classification_loss(reps, flags.use_da ? B : 0);
    if (!flags.use_nrt) return le;
    return contrastive_loss(reps, tau) + le;
}

std::vector<std::vector<size_t>> stratified_batches(const std::vector<int>& labels,
                                                    int batch_size, RngStream& rng) {
    std::vector<size_t> order(labels.size());
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);

    std::vector<std::vector<size_t>> batches;
    for (size_t start = 0; start < order.size(); start += batch_size)
        batches.emplace_back(order.begin() + start,
                             order.begin() + std::min(order.size(), start + batch_size));

    std::set<int> all_classes(labels.begin(), labels.end());
    if (all_classes.size() < 2) return batches;

    auto is_single_class = [&](const std::vector<size_t>& b) {
        for (size_t i = 1; i < b.size(); ++i)
            if (labels[b[i]] != labels[b[0]]) return false;
        return true;
    };
    // Repair pass: swap one element from a multi-class batch into any
    // single-class batch.
    for (size_t bi = 0; bi < batches.size(); ++bi) {
        if (!is_single_class(batches[bi])) continue;
        int cls = labels[batches[bi][0]];
        bool fixed = false;
        for (size_t bj = 0; bj < batches.size() && !fixed; ++bj) {
            if (bj == bi || is_single_class(batches[bj])) continue;
            for (size_t e = 0; e < batches[bj].size() && !fixed; ++e) {
                if (labels[batches[bj][e]] == cls) continue;
                // Swapping must leave the donor with >= 2 classes.
                std::vector<size_t> donor = batches[bj];
                donor[e] = batches[bi][0];
                if (is_single_class(donor)) continue;
                std::swap(batches[bj][e], batches[bi][0]);
                fixed = true;
            }
        }
    }
    return batches;
}

namespace {

// Shared mini-batch loop for proxy and noise-resistant training.
struct Trainer {
    const std::vector<TokenizedSample>& dataset;
    const GeneratorModel* gen;
    const Vocab* vocab;
    EncoderConfig net_config;
    TrainConfig cfg;

    EncoderModel run(std::vector<EpochLog>* log) {
        if (dataset.empty()) throw ConfigError("empty dataset");
        cfg.validate();
        std::vector<int> labels(dataset.size());
        std::set<int> classes;
        for (size_t i = 0; i < dataset.size(); ++i) {
            labels[i] = dataset[i].label_id;
            classes.insert(labels[i]);
        }
        if (classes.size() < 2) throw ConfigError("training needs at least 2 classes");
        if (cfg.flags.use_da && gen == nullptr)
            throw ConfigError("augmented training requires a generator");

        EncoderModel model = init_model(net_config);
        if (cfg.epochs <= 0) return model;
        OptimizerState opt = OptimizerState::create(model, cfg.lr, cfg.weight_decay);
        StepGroups groups = step_groups(gen ? gen->schedule.total_steps : 32, cfg.num_groups);

        const int B = cfg.flags.use_da ? cfg.aug_per_sample : 0;
        std::vector<std::vector<TokenizedSample>> pseudo(dataset.size());
        std::vector<int> ids_all(dataset.size());
        std::iota(ids_all.begin(), ids_all.end(), 0);

        auto refresh_pseudo = [&](uint64_t tag) {
            auto generated = reflective_augment(model, *gen, *vocab, dataset, ids_all, groups,
                                                cfg.group_index, B,
                                                mix64(cfg.seed, tag), cfg.gen_temperature);
            for (size_t i = 0; i < dataset.size(); ++i) {
                pseudo[i].clear();
                for (const auto& ps : generated[i])
                    pseudo[i].push_back(tokenize(*vocab, {ps.text, ps.label}));
            }
        };

        if (B > 0 && cfg.refresh == TrainConfig::Refresh::once) refresh_pseudo(0);

        for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
            if (B > 0 && cfg.refresh == TrainConfig::Refresh::epoch)
                refresh_pseudo(static_cast<uint64_t>(epoch) + 1);
            RngStream shuffle_rng = substream(cfg.seed, "cls-shuffle", epoch);
            auto batches = stratified_batches(labels, cfg.batch_size, shuffle_rng);

            EpochLog el;
            el.epoch = epoch;
            int correct = 0, total = 0, steps = 0;
            for (size_t bstep = 0; bstep < batches.size(); ++bstep) {
                const auto& batch_idx = batches[bstep];
                if (B > 0 && cfg.refresh == TrainConfig::Refresh::batch) {
                    std::vector<TokenizedSample> subset;
                    std::vector<int> subset_ids;
                    for (size_t idx : batch_idx) {
                        subset.push_back(dataset[idx]);
                        subset_ids.push_back(static_cast<int>(idx));
                    }
                    auto generated = reflective_augment(
                        model, *gen, *vocab, subset, subset_ids, groups, cfg.group_index, B,
                        mix64(cfg.seed, mix64(epoch + 1, bstep + 1)), cfg.gen_temperature);
                    for (size_t bi = 0; bi < batch_idx.size(); ++bi) {
                        pseudo[batch_idx[bi]].clear();
                        for (const auto& ps : generated[bi])
                            pseudo[batch_idx[bi]].push_back(tokenize(*vocab, {ps.text, ps.label}));
                    }
                }

                std::vector<BatchItem> items;
                for (size_t idx : batch_idx) {
                    BatchItem it;
                    it.ids = dataset[idx].ids;
                    it.label = dataset[idx].label_id;
                    items.push_back(std::move(it));
                }
                for (size_t bi = 0; bi < batch_idx.size(); ++bi) {
                    for (const auto& ts : pseudo[batch_idx[bi]]) {
                        BatchItem it;
                        it.ids = ts.ids;
                        it.label = ts.label_id;
                        it.source = static_cast<int>(bi);
                        items.push_back(std::move(it));
                    }
                }

                BatchOptions opts;
                opts.tau = cfg.tau;
                opts.use_contrastive = cfg.flags.use_nrt;
                opts.train_mode = true;
                opts.dropout_seed = substream(cfg.seed, "cls-drop", epoch, bstep).next_u64();
                LossGrads lg = loss_and_grads(model, items, Objective::noise_resistant, opts);
                if (!std::isfinite(lg.loss))
                    throw RuntimeError("divergence: non-finite classifier loss");
                optimizer_step(model, lg.grads, opt);
                el.loss += lg.loss;
                el.contrastive += lg.contrastive;
                el.classification += lg.classification;
                correct += lg.correct;
                total += lg.total;
                ++steps;
            }
            if (steps > 0) {
                el.loss /= steps;
                el.contrastive /= steps;
                el.classification /= steps;
            }
            el.train_acc = total > 0 ? static_cast<double>(correct) / total : 0.0;
            if (log) log->push_back(el);
        }
        return model;
    }
};

} // namespace

EncoderModel train_proxy(const std::vector<TokenizedSample>& dataset,
                         const EncoderConfig& net_config, int epochs, int batch_size, double lr,
                         double weight_decay, uint64_t seed, std::vector<EpochLog>* log) {
    TrainConfig cfg;
    cfg.epochs = epochs;
    cfg.batch_size = batch_size;
    cfg.lr = lr;
    cfg.weight_decay = weight_decay;
    cfg.seed = seed;
    cfg.aug_per_sample = 0;
    cfg.flags = AblationFlags{false, true, false};
    Trainer t{dataset, nullptr, nullptr, net_config, cfg};
    return t.run(log);
}

std::vector<std::vector<PseudoSample>> reflective_augment(
    const EncoderModel& tc_model, const GeneratorModel& gen, const Vocab& vocab,
    const std::vector<TokenizedSample>& originals, const std::vector<int>& original_ids,
    const StepGroups& groups, int group_index, int B, uint64_t seed, double temperature) {
    if (originals.size() != original_ids.size())
        throw ConfigError("original ids must align with originals");
    std::vector<std::vector<PseudoSample>> out(originals.size());
    if (B <= 0) return out;
    for (size_t i = 0; i < originals.size(); ++i) {
        TokenWeights w =
            token_weights(forward(tc_model, originals[i].ids, ForwardMode::classify), originals[i]);
        out[i] = generate_for_sample(gen, vocab, originals[i], w, groups, group_index, B, seed,
                                     original_ids[i], temperature);
    }
    return out;
}

EncoderModel train_with_noise_resistance(const std::vector<TokenizedSample>& dataset,
                                         const GeneratorModel* gen, const Vocab& vocab,
                                         const EncoderConfig& net_config,
                                         const TrainConfig& train_config,
                                         std::vector<EpochLog>* log) {
    Trainer t{dataset, gen, &vocab, net_config, train_config};
    return t.run(log);
}

} // namespace dcls
