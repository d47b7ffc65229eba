#include "dcls/generator.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "dcls/common.hpp"

namespace dcls {

PromptedSequence label_prompt(const TokenizedSample& sample, std::span<const int32_t> corrupted_ids,
                              const Vocab& vocab, bool use_label_prompt, int max_len) {
    if (corrupted_ids.size() != sample.ids.size())
        throw ConfigError("corrupted ids are not aligned with the sample");
    const int n = static_cast<int>(sample.ids.size()) - 2; // content length
    if (n + 4 > max_len)
        throw ConfigError("prompted sequence length " + std::to_string(n + 4) +
                          " exceeds max_len " + std::to_string(max_len));

    PromptedSequence out;
    out.content_offset = 3;
    out.content_len = n;
    out.ids.reserve(n + 4);
    out.ids.push_back(Vocab::kCls);
    out.ids.push_back(use_label_prompt ? vocab.label_token(sample.label_id) : Vocab::kPad);
    out.ids.push_back(Vocab::kSep);
    for (int i = 1; i <= n; ++i) out.ids.push_back(corrupted_ids[i]);
    out.ids.push_back(Vocab::kSep);
    for (int i = 1; i <= n; ++i)
        if (corrupted_ids[i] == Vocab::kMask && sample.ids[i] != Vocab::kMask)
            out.masked_positions.push_back(i + 2);
    return out;
}

GeneratorModel train_generator(const std::vector<TokenizedSample>& dataset,
                               const EncoderModel& proxy, const Vocab& vocab,
                               const NoiseSchedule& schedule, const EncoderConfig& net_config,
                               const GeneratorTrainConfig& train_config,
                               std::vector<double>* epoch_losses) {
    if (dataset.empty()) throw ConfigError("empty dataset");
    schedule.validate();

    GeneratorModel gen;
    gen.schedule = schedule;
    gen.label_prompt_enabled = train_config.use_label_prompt;
    EncoderConfig cfg = net_config;
    cfg.vocab_size = vocab.size();
    cfg.num_classes = vocab.num_classes();
    gen.net = init_model(cfg);
    if (train_config.epochs <= 0) return gen;

    // The proxy is frozen, so per-sample token weights are computed once.
    std::vector<TokenWeights> weights;
    weights.reserve(dataset.size());
    for (const auto& s : dataset)
        weights.push_back(token_weights(forward(proxy, s.ids, ForwardMode::classify), s));

    OptimizerState opt = OptimizerState::create(gen.net, train_config.lr,
                                                train_config.weight_decay);
    std::vector<size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < train_config.epochs; ++epoch) {
        RngStream shuffle_rng = substream(train_config.seed, "gen-shuffle", epoch);
        shuffle_rng.shuffle(order);
        double epoch_loss = 0.0;
        int epoch_batches = 0;
        size_t step = 0;
        for (size_t start = 0; start < order.size(); start += train_config.batch_size, ++step) {
            size_t end = std::min(order.size(), start + train_config.batch_size);
            std::vector<BatchItem> batch;
            bool any_masked = false;
            for (size_t bi = start; bi < end; ++bi) {
                size_t idx = order[bi];
                const TokenizedSample& s = dataset[idx];
                RngStream traj_rng = substream(train_config.seed, "gen-traj", epoch, idx);
                MaskTrajectory traj = sample_trajectory(s, weights[idx], schedule, traj_rng);
                int t = static_cast<int>(traj_rng.uniform_int(1, schedule.total_steps));
                std::vector<int32_t> corrupted = corrupt_at_step(traj, t);
                PromptedSequence prompted = label_prompt(s, corrupted, vocab,
                                                         train_config.use_label_prompt,
                                                         cfg.max_len);
                PromptedSequence target = label_prompt(s, s.ids, vocab,
                                                       train_config.use_label_prompt,
                                                       cfg.max_len);
                BatchItem item;
                item.ids = prompted.ids;
                item.target_ids = target.ids;
                item.masked_positions = prompted.masked_positions;
                any_masked = any_masked || !item.masked_positions.empty();
                batch.push_back(std::move(item));
            }
            if (!any_masked) continue; // nothing supervised in this batch
            BatchOptions opts;
            opts.train_mode = true;
            opts.dropout_seed = substream(train_config.seed, "gen-drop", epoch, step).next_u64();
            LossGrads lg = loss_and_grads(gen.net, batch, Objective::ce_lm_masked, opts);
            if (!std::isfinite(lg.loss)) throw RuntimeError("divergence: non-finite generator loss");
            optimizer_step(gen.net, lg.grads, opt);
            epoch_loss += lg.loss;
            ++epoch_batches;
        }
        if (epoch_losses)
            epoch_losses->push_back(epoch_batches > 0 ? epoch_loss / epoch_batches : 0.0);
    }
    return gen;
}

std::vector<std::pair<int, std::vector<int>>> reveal_plan(const MaskTrajectory& traj, int t_star,
                                                          int content_offset) {
    if (t_star < 0 || t_star > traj.schedule.total_steps)
        throw ConfigError("t_star out of range");
    std::map<int, std::vector<int>, std::greater<int>> by_step;
    const size_t L = traj.ids.size();
    for (size_t i = 1; i + 1 < L; ++i) {
        int prompted_pos = static_cast<int>(i) + content_offset - 1;
        if (traj.mask_time[i] <= t_star) {
            by_step[traj.mask_time[i]].push_back(prompted_pos);
        } else if (t_star >= 1 && traj.ids[i] == Vocab::kUnk && traj.maskable[i]) {
            // Source OOV positions are regenerated rather than copied through,
            // so pseudo texts never carry the UNK rendering.
            by_step[std::min(traj.mask_time[i], t_star)].push_back(prompted_pos);
        }
    }
    std::vector<std::pair<int, std::vector<int>>> plan;
    plan.reserve(by_step.size());
    for (auto& [step, positions] : by_step) {
        std::sort(positions.begin(), positions.end());
        plan.emplace_back(step, std::move(positions));
    }
    return plan;
}

namespace {

int32_t sample_content_token(const Vocab& vocab, const double* logits, double temperature,
                             RngStream& rng) {
    const int32_t first = vocab.first_content_id();
    const int32_t V = vocab.size();
    if (first >= V) throw RuntimeError("vocabulary has no content tokens to sample");
    if (temperature <= 0.0) throw ConfigError("temperature must be > 0");
    double mx = logits[first];
    for (int32_t v = first; v < V; ++v) mx = std::max(mx, logits[v]);
    std::vector<double> w(V - first);
    for (int32_t v = first; v < V; ++v) w[v - first] = std::exp((logits[v] - mx) / temperature);
    return first + static_cast<int32_t>(rng.categorical(w));
}

} // namespace

PseudoSample reverse_generate(const GeneratorModel& gen, const Vocab& vocab,
                              const MaskTrajectory& traj, int t_star, int class_id,
                              RngStream& rng, double temperature) {
    if (class_id < 0 || class_id >= vocab.num_classes()) throw ConfigError("invalid class id");

    TokenizedSample shaped;
    shaped.ids = traj.ids;
    shaped.label_id = class_id;
    shaped.maskable = traj.maskable;
    std::vector<int32_t> corrupted = corrupt_at_step(traj, t_star);
    PromptedSequence prompted = label_prompt(shaped, corrupted, vocab, gen.label_prompt_enabled,
                                             gen.net.config.max_len);

    auto plan = reveal_plan(traj, t_star, prompted.content_offset);
    std::vector<int32_t> ids = prompted.ids;
    for (const auto& [step, positions] : plan) {
        for (int pos : positions) ids[pos] = Vocab::kMask;
    }
    for (const auto& [step, positions] : plan) {
        Mat logits = forward_lm_positions(gen.net, ids, positions);
        for (size_t i = 0; i < positions.size(); ++i)
            ids[positions[i]] = sample_content_token(vocab, logits.row(static_cast<int>(i)),
                                                     temperature, rng);
    }

    PseudoSample out;
    out.text = detokenize(vocab, ids);
    out.label = vocab.classes()[class_id];
    out.t_star = t_star;
    return out;
}

std::vector<PseudoSample> generate_for_sample(const GeneratorModel& gen, const Vocab& vocab,
                                              const TokenizedSample& sample,
                                              const TokenWeights& weights,
                                              const StepGroups& groups, int group_index, int B,
                                              uint64_t seed, int source_id, double temperature) {
    if (B < 1) throw ConfigError("B must be >= 1");
    auto [lo, hi] = groups.range(group_index);
    std::vector<PseudoSample> out;
    out.reserve(B);
    for (int b = 0; b < B; ++b) {
        uint64_t replica_seed = mix64(mix64(seed, static_cast<uint64_t>(source_id) + 1),
                                      static_cast<uint64_t>(b) + 1);
        RngStream rng(replica_seed);
        MaskTrajectory traj = sample_trajectory(sample, weights, gen.schedule, rng);
        int t_star = static_cast<int>(rng.uniform_int(lo, hi));
        PseudoSample ps = reverse_generate(gen, vocab, traj, t_star, sample.label_id, rng,
                                           temperature);
        ps.source_id = source_id;
        ps.group = group_index;
        ps.seed = replica_seed;
        out.push_back(std::move(ps));
    }
    return out;
}

} // namespace dcls
