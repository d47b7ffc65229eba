#include "dcls/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dcls/checkpoint.hpp"
#include "dcls/common.hpp"
#include "dcls/hash.hpp"
#include "dcls/policies.hpp"
#include "dcls/projection.hpp"
#include "dcls/util.hpp"

namespace dcls {

namespace {

namespace fs = std::filesystem;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

fs::path out_dir(const Config& cfg) {
    fs::path dir = cfg.get_string("out.dir");
    fs::create_directories(dir);
    return dir;
}

uint64_t stage_seed(uint64_t master, std::string_view stage) {
    return substream(master, stage).next_u64();
}

void write_stage_metrics(const Config& cfg, const std::string& stage,
                         const nlohmann::json& metrics) {
    atomic_write_file(out_dir(cfg) / (stage + "_metrics.json"), metrics.dump() + "\n");
}

void write_stage_report(const Config& cfg, const std::string& stage, double wall_sec,
                        const std::vector<fs::path>& input_files,
                        const nlohmann::json& extra = nlohmann::json::object()) {
    nlohmann::json report;
    report["config"] = nlohmann::json::parse(cfg.snapshot_json());
    report["stage"] = stage;
    report["wall_clock_sec"] = wall_sec;
    nlohmann::json hashes;
    for (const auto& p : input_files)
        if (fs::exists(p)) hashes[p.filename().string()] = git_blob_sha1_file(p.string());
    report["input_hashes"] = hashes;
    for (auto it = extra.begin(); it != extra.end(); ++it) report[it.key()] = it.value();
    atomic_write_file(out_dir(cfg) / (stage + "_report.json"), report.dump() + "\n");
}

EncoderConfig net_config_from(const Config& cfg, const Vocab& vocab, uint64_t init_seed) {
    EncoderConfig nc;
    nc.vocab_size = vocab.size();
    nc.max_len = static_cast<int>(cfg.get_int("model.max_len"));
    nc.dim = static_cast<int>(cfg.get_int("model.dim"));
    nc.heads = static_cast<int>(cfg.get_int("model.heads"));
    nc.layers = static_cast<int>(cfg.get_int("model.layers"));
    nc.ffn = static_cast<int>(cfg.get_int("model.ffn"));
    nc.num_classes = vocab.num_classes();
    nc.dropout = cfg.get_double("model.dropout");
    nc.seed = init_seed;
    nc.validate();
    return nc;
}

TrainConfig::Refresh refresh_from(const Config& cfg) {
    const std::string& v = cfg.get_string("train.refresh");
    if (v == "once") return TrainConfig::Refresh::once;
    if (v == "epoch") return TrainConfig::Refresh::epoch;
    if (v == "batch") return TrainConfig::Refresh::batch;
    throw ConfigError("train.refresh must be once|epoch|batch, got '" + v + "'");
}

AblationFlags flags_from(const Config& cfg) {
    return AblationFlags{cfg.get_bool("train.use_da"), cfg.get_bool("train.use_lap"),
                         cfg.get_bool("train.use_nrt")};
}

TrainConfig classifier_config_from(const Config& cfg, uint64_t seed, const AblationFlags& flags,
                                   int group_index) {
    TrainConfig tc;
    tc.epochs = static_cast<int>(cfg.get_int("train.classifier_epochs"));
    tc.batch_size = static_cast<int>(cfg.get_int("train.batch_size"));
    tc.tau = cfg.get_double("train.tau");
    tc.aug_per_sample = static_cast<int>(cfg.get_int("train.aug_per_sample"));
    tc.lr = cfg.get_double("train.lr");
    tc.weight_decay = cfg.get_double("train.weight_decay");
    tc.seed = seed;
    tc.refresh = refresh_from(cfg);
    tc.flags = flags;
    tc.group_index = group_index;
    tc.num_groups = static_cast<int>(cfg.get_int("schedule.groups"));
    tc.gen_temperature = cfg.get_double("train.temperature");
    return tc;
}

fs::path vocab_path(const Config& cfg) { return out_dir(cfg) / "vocab.json"; }
fs::path proxy_path(const Config& cfg) { return out_dir(cfg) / "proxy.ckpt"; }
fs::path generator_path(const Config& cfg) { return out_dir(cfg) / "generator.ckpt"; }
fs::path classifier_path(const Config& cfg) { return out_dir(cfg) / "classifier.ckpt"; }

void require_file(const fs::path& p, const std::string& what, const std::string& stage) {
    if (!fs::exists(p))
        throw RuntimeError(what + " not found at " + p.string() + "; run " + stage + " first");
}

Vocab load_vocab_checked(const Config& cfg) {
    require_file(vocab_path(cfg), "vocabulary", "train-proxy");
    return Vocab::load(vocab_path(cfg));
}

GeneratorModel load_generator_checked(const Config& cfg, const Vocab& vocab) {
    require_file(generator_path(cfg), "generator checkpoint", "train-generator");
    LoadedCheckpoint ck = load_checkpoint(generator_path(cfg));
    GeneratorModel gen;
    gen.net = std::move(ck.model);
    gen.schedule.total_steps = std::stoi(ck.meta.at("schedule.T"));
    gen.schedule.lambda = std::stod(ck.meta.at("schedule.lambda"));
    gen.label_prompt_enabled = ck.meta.at("label_prompt") == "true";
    if (gen.net.config.vocab_size != vocab.size())
        throw ConfigError("generator checkpoint vocabulary size does not match vocab.json");
    return gen;
}

std::map<std::string, int64_t> label_histogram(const std::vector<LabeledSample>& samples) {
    std::map<std::string, int64_t> counts;
    for (const auto& s : samples) counts[s.label] += 1;
    return counts;
}

std::vector<double> collect_macro_f1(const std::vector<Metrics>& per_seed) {
    std::vector<double> out;
    for (const auto& m : per_seed) out.push_back(m.macro_f1);
    return out;
}

std::pair<double, double> mean_std(const std::vector<double>& xs) {
    if (xs.empty()) return {0.0, 0.0};
    double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / xs.size();
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    var = xs.size() > 1 ? var / (xs.size() - 1) : 0.0;
    return {mean, std::sqrt(var)};
}

} // namespace

uint64_t master_seed(const Config& cfg) {
    if (const char* env = std::getenv("DCLS_SEED")) {
        try {
            size_t pos = 0;
            uint64_t s = std::stoull(env, &pos);
            if (pos != std::string(env).size()) throw std::invalid_argument(env);
            return s;
        } catch (const std::exception&) {
            throw ConfigError(std::string("DCLS_SEED is not a valid seed: '") + env + "'");
        }
    }
    return cfg.get_seed("seed");
}

NoiseSchedule schedule_from(const Config& cfg) {
    NoiseSchedule s;
    s.total_steps = static_cast<int>(cfg.get_int("schedule.T"));
    s.lambda = cfg.get_double("schedule.lambda");
    s.validate();
    return s;
}

SynthSpec synth_spec_from(const Config& cfg, uint64_t seed, bool include_test) {
    SynthSpec spec;
    spec.seed = seed;
    int test_per_class = static_cast<int>(cfg.get_int("data.test_per_class"));
    std::stringstream ss(cfg.get_string("data.classes"));
    std::string part;
    while (std::getline(ss, part, ',')) {
        size_t colon = part.find(':');
        if (colon == std::string::npos)
            throw ConfigError("data.classes entries must be name:count, got '" + part + "'");
        SynthClassSpec c;
        c.name = part.substr(0, colon);
        try {
            c.count = std::stoi(part.substr(colon + 1));
        } catch (const std::exception&) {
            throw ConfigError("bad count in data.classes entry '" + part + "'");
        }
        if (include_test) c.count += test_per_class;
        spec.classes.push_back(std::move(c));
    }
    if (spec.classes.empty()) throw ConfigError("data.classes lists no classes");
    return spec;
}

std::vector<LabeledSample> load_train_split(const Config& cfg, uint64_t master) {
    std::vector<LabeledSample> all = load_jsonl(cfg.get_string("data.train"));
    if (all.empty()) throw ConfigError("empty corpus: " + cfg.get_string("data.train"));
    int shots = static_cast<int>(cfg.get_int("data.shots"));
    double fraction = cfg.get_double("data.fraction");
    std::vector<size_t> keep;
    if (shots > 0) {
        keep = few_shot_split(all, shots, master);
    } else if (fraction < 1.0) {
        keep = partial_split(all, fraction, master);
    } else {
        return all;
    }
    std::vector<LabeledSample> out;
    out.reserve(keep.size());
    for (size_t i : keep) out.push_back(all[i]);
    return out;
}

std::vector<TokenizedSample> tokenize_all(const Config& cfg, const Vocab& vocab,
                                          const std::vector<LabeledSample>& samples) {
    const int max_len = static_cast<int>(cfg.get_int("model.max_len"));
    const int max_content = max_len - 4; // prompted form adds CLS LBL SEP .. SEP
    if (max_content < 1) throw ConfigError("model.max_len too small for prompting");
    std::vector<TokenizedSample> out;
    out.reserve(samples.size());
    for (const auto& s : samples) {
        TokenizedSample t = tokenize(vocab, s);
        int content = static_cast<int>(t.ids.size()) - 2;
        if (content > max_content) {
            t.ids.resize(static_cast<size_t>(max_content) + 1);
            t.ids.push_back(Vocab::kSep);
            t.maskable.resize(t.ids.size());
            t.maskable.back() = 0;
        }
        out.push_back(std::move(t));
    }
    return out;
}

void cmd_synth_data(const Config& cfg) {
    auto start = Clock::now();
    uint64_t master = master_seed(cfg);
    SynthSpec spec = synth_spec_from(cfg, master, true);
    int test_per_class = static_cast<int>(cfg.get_int("data.test_per_class"));

    std::vector<LabeledSample> all = synth_corpus(spec);
    std::vector<LabeledSample> train, test;
    size_t cursor = 0;
    for (const auto& c : spec.classes) {
        int train_count = c.count - test_per_class;
        if (train_count < 1)
            throw ConfigError("class " + c.name + " has no training samples after the test split");
        for (int i = 0; i < train_count; ++i) train.push_back(all[cursor + i]);
        for (int i = 0; i < test_per_class; ++i)
            test.push_back(all[cursor + train_count + i]);
        cursor += c.count;
    }
    fs::path train_path = cfg.get_string("data.train");
    fs::path test_path = cfg.get_string("data.test");
    save_jsonl(train_path, train);
    save_jsonl(test_path, test);

    nlohmann::json metrics;
    metrics["train_counts"] = label_histogram(train);
    metrics["test_counts"] = label_histogram(test);
    metrics["train_total"] = train.size();
    metrics["test_total"] = test.size();
    write_stage_metrics(cfg, "synth", metrics);
    write_stage_report(cfg, "synth", seconds_since(start), {train_path, test_path});
}

void cmd_train_proxy(const Config& cfg) {
    auto start = Clock::now();
    uint64_t master = master_seed(cfg);
    std::vector<LabeledSample> samples = load_train_split(cfg, master);
    Vocab vocab = build_vocab(samples, static_cast<int>(cfg.get_int("data.min_count")));
    vocab.save(vocab_path(cfg));

    std::vector<TokenizedSample> dataset = tokenize_all(cfg, vocab, samples);
    uint64_t seed = stage_seed(master, "train-proxy");
    EncoderConfig nc = net_config_from(cfg, vocab, mix64(seed, 1));
    std::vector<EpochLog> log;
    EncoderModel proxy = train_proxy(dataset, nc, static_cast<int>(cfg.get_int("train.proxy_epochs")),
                                     static_cast<int>(cfg.get_int("train.batch_size")),
                                     cfg.get_double("train.lr"),
                                     cfg.get_double("train.weight_decay"), seed, &log);
    save_checkpoint(proxy, proxy_path(cfg), {{"kind", "proxy"}});

    std::string log_lines;
    for (const auto& e : log) {
        nlohmann::json j{{"epoch", e.epoch}, {"loss", e.loss}, {"train_acc", e.train_acc}};
        log_lines += j.dump() + "\n";
    }
    atomic_write_file(out_dir(cfg) / "proxy_log.jsonl", log_lines);

    nlohmann::json metrics;
    metrics["epochs"] = log.size();
    metrics["final_loss"] = log.empty() ? 0.0 : log.back().loss;
    metrics["final_train_acc"] = log.empty() ? 0.0 : log.back().train_acc;
    metrics["dataset_size"] = dataset.size();
    metrics["vocab_size"] = vocab.size();
    write_stage_metrics(cfg, "proxy", metrics);
    write_stage_report(cfg, "proxy", seconds_since(start),
                       {fs::path(cfg.get_string("data.train"))});
}

void cmd_train_generator(const Config& cfg) {
    auto start = Clock::now();
    uint64_t master = master_seed(cfg);
    Vocab vocab = load_vocab_checked(cfg);
    require_file(proxy_path(cfg), "proxy checkpoint", "train-proxy");
    EncoderModel proxy = load_checkpoint(proxy_path(cfg)).model;

    std::vector<TokenizedSample> dataset =
        tokenize_all(cfg, vocab, load_train_split(cfg, master));
    NoiseSchedule schedule = schedule_from(cfg);

    GeneratorTrainConfig gtc;
    gtc.epochs = static_cast<int>(cfg.get_int("train.generator_epochs"));
    gtc.batch_size = static_cast<int>(cfg.get_int("train.batch_size"));
    gtc.lr = cfg.get_double("train.lr");
    gtc.weight_decay = cfg.get_double("train.weight_decay");
    gtc.seed = stage_seed(master, "train-generator");
    gtc.use_label_prompt = cfg.get_bool("train.use_lap");
    EncoderConfig nc = net_config_from(cfg, vocab, mix64(gtc.seed, 1));

    std::vector<double> losses;
    GeneratorModel gen = train_generator(dataset, proxy, vocab, schedule, nc, gtc, &losses);
    save_checkpoint(gen.net, generator_path(cfg),
                    {{"kind", "generator"},
                     {"schedule.T", std::to_string(schedule.total_steps)},
                     {"schedule.lambda", format_fixed(schedule.lambda, 6)},
                     {"label_prompt", gtc.use_label_prompt ? "true" : "false"}});

    std::string log_lines;
    for (size_t e = 0; e < losses.size(); ++e) {
        nlohmann::json j{{"epoch", e}, {"loss", losses[e]}};
        log_lines += j.dump() + "\n";
    }
    atomic_write_file(out_dir(cfg) / "generator_log.jsonl", log_lines);

    nlohmann::json metrics;
    metrics["epochs"] = losses.size();
    metrics["losses"] = losses;
    metrics["final_loss"] = losses.empty() ? 0.0 : losses.back();
    write_stage_metrics(cfg, "generator", metrics);
    write_stage_report(cfg, "generator", seconds_since(start),
                       {fs::path(cfg.get_string("data.train")), proxy_path(cfg)});
}

void cmd_augment(const Config& cfg) {
    auto start = Clock::now();
    uint64_t master = master_seed(cfg);
    Vocab vocab = load_vocab_checked(cfg);
    require_file(proxy_path(cfg), "proxy checkpoint", "train-proxy");
    EncoderModel proxy = load_checkpoint(proxy_path(cfg)).model;
    GeneratorModel gen = load_generator_checked(cfg, vocab);

    std::vector<TokenizedSample> dataset =
        tokenize_all(cfg, vocab, load_train_split(cfg, master));

    AugPolicy policy;
    const std::string& kind = cfg.get_string("policy.kind");
    if (kind == "balance")
        policy.kind = AugPolicy::Kind::balance_distribution;
    else if (kind == "n_each")
        policy.kind = AugPolicy::Kind::n_samples_each;
    else
        throw ConfigError("policy.kind must be balance|n_each, got '" + kind + "'");
    policy.n = static_cast<int>(cfg.get_int("policy.n"));
    policy.group_index = static_cast<int>(cfg.get_int("schedule.group_index"));
    policy.num_groups = static_cast<int>(cfg.get_int("schedule.groups"));
    policy.seed = stage_seed(master, "augment");
    policy.temperature = cfg.get_double("train.temperature");

    std::vector<PseudoSample> pseudos = run_policy(dataset, gen, proxy, vocab, policy);

    std::string lines;
    for (const auto& p : pseudos) {
        nlohmann::json j;
        j["group"] = p.group;
        j["label"] = p.label;
        j["seed"] = p.seed;
        j["source_id"] = p.source_id;
        j["t_star"] = p.t_star;
        j["text"] = p.text;
        lines += j.dump() + "\n";
    }
    fs::path pseudo_path = out_dir(cfg) / "pseudo.jsonl";
    atomic_write_file(pseudo_path, lines);

    std::map<std::string, int64_t> counts;
    for (const auto& p : pseudos) counts[p.label] += 1;
    nlohmann::json metrics;
    metrics["pseudo_counts"] = counts;
    metrics["pseudo_total"] = pseudos.size();
    metrics["originals_total"] = dataset.size();
    metrics["policy"] = kind;
    write_stage_metrics(cfg, "augment", metrics);
    write_stage_report(cfg, "augment", seconds_since(start),
                       {fs::path(cfg.get_string("data.train")), proxy_path(cfg),
                        generator_path(cfg)});
}

void cmd_train_classifier(const Config& cfg) {
    auto start = Clock::now();
    uint64_t master = master_seed(cfg);
    AblationFlags flags = flags_from(cfg);

    Vocab vocab;
    std::vector<LabeledSample> samples = load_train_split(cfg, master);
    if (fs::exists(vocab_path(cfg))) {
        vocab = Vocab::load(vocab_path(cfg));
    } else if (!flags.use_da) {
        vocab = build_vocab(samples, static_cast<int>(cfg.get_int("data.min_count")));
        vocab.save(vocab_path(cfg));
    } else {
        require_file(vocab_path(cfg), "vocabulary", "train-proxy");
    }

    GeneratorModel gen;
    if (flags.use_da) {
        gen = load_generator_checked(cfg, vocab);
        if (gen.label_prompt_enabled != flags.use_lap)
            throw ConfigError(
                "generator checkpoint label_prompt setting does not match train.use_lap; retrain "
                "the generator with the matching flag");
    }

    std::vector<TokenizedSample> dataset = tokenize_all(cfg, vocab, samples);
    uint64_t seed = stage_seed(master, "train-classifier");
    TrainConfig tc = classifier_config_from(cfg, seed, flags,
                                            static_cast<int>(cfg.get_int("schedule.group_index")));
    EncoderConfig nc = net_config_from(cfg, vocab, mix64(seed, 1));

    std::vector<EpochLog> log;
    EncoderModel model = train_with_noise_resistance(dataset, flags.use_da ? &gen : nullptr,
                                                     vocab, nc, tc, &log);
    save_checkpoint(model, classifier_path(cfg), {{"kind", "classifier"}});

    std::string log_lines;
    for (const auto& e : log) {
        nlohmann::json j{{"L", e.loss},
                         {"L_c", e.contrastive},
                         {"L_e", e.classification},
                         {"epoch", e.epoch},
                         {"train_acc", e.train_acc}};
        log_lines += j.dump() + "\n";
    }
    atomic_write_file(out_dir(cfg) / "classifier_log.jsonl", log_lines);

    nlohmann::json metrics;
    metrics["epochs"] = log.size();
    metrics["final_loss"] = log.empty() ? 0.0 : log.back().loss;
    metrics["final_train_acc"] = log.empty() ? 0.0 : log.back().train_acc;
    metrics["use_da"] = flags.use_da;
    metrics["use_lap"] = flags.use_lap;
    metrics["use_nrt"] = flags.use_nrt;
    write_stage_metrics(cfg, "classifier", metrics);
    write_stage_report(cfg, "classifier", seconds_since(start),
                       {fs::path(cfg.get_string("data.train")), generator_path(cfg)});
}

void cmd_evaluate(const Config& cfg) {
    auto start = Clock::now();
    Vocab vocab = load_vocab_checked(cfg);
    require_file(classifier_path(cfg), "classifier checkpoint", "train-classifier");
    EncoderModel model = load_checkpoint(classifier_path(cfg)).model;

    std::vector<LabeledSample> test_samples = load_jsonl(cfg.get_string("data.test"));
    if (test_samples.empty()) throw ConfigError("empty test set");
    std::vector<TokenizedSample> test = tokenize_all(cfg, vocab, test_samples);
    Metrics m = evaluate(model, test);

    atomic_write_file(out_dir(cfg) / "eval_metrics.json", m.to_json() + "\n");
    write_stage_report(cfg, "eval", seconds_since(start),
                       {fs::path(cfg.get_string("data.test")), classifier_path(cfg)});
}

ExperimentRunner::ExperimentRunner(const Config& cfg, uint64_t master)
    : cfg_(cfg), master_(master) {
    std::vector<LabeledSample> train = load_train_split(cfg_, master_);
    vocab_ = build_vocab(train, static_cast<int>(cfg_.get_int("data.min_count")));
    train_tok_ = tokenize_all(cfg_, vocab_, train);
    std::vector<LabeledSample> test = load_jsonl(cfg_.get_string("data.test"));
    if (test.empty()) throw ConfigError("empty test set");
    test_tok_ = tokenize_all(cfg_, vocab_, test);
}

const EncoderModel& ExperimentRunner::proxy_for(uint64_t seed) {
    for (const auto& [s, m] : proxies_)
        if (s == seed) return m;
    uint64_t proxy_seed = mix64(seed, fnv1a64("proxy"));
    EncoderConfig nc = net_config_from(cfg_, vocab_, mix64(proxy_seed, 1));
    EncoderModel proxy = train_proxy(train_tok_, nc,
                                     static_cast<int>(cfg_.get_int("train.proxy_epochs")),
                                     static_cast<int>(cfg_.get_int("train.batch_size")),
                                     cfg_.get_double("train.lr"),
                                     cfg_.get_double("train.weight_decay"), proxy_seed);
    proxies_.emplace_back(seed, std::move(proxy));
    return proxies_.back().second;
}

const GeneratorModel& ExperimentRunner::generator_for(uint64_t seed, bool use_lap) {
    for (auto& entry : generators_)
        if (std::get<0>(entry) == seed && std::get<1>(entry) == use_lap)
            return std::get<2>(entry);
    const EncoderModel& proxy = proxy_for(seed);
    GeneratorTrainConfig gtc;
    gtc.epochs = static_cast<int>(cfg_.get_int("train.generator_epochs"));
    gtc.batch_size = static_cast<int>(cfg_.get_int("train.batch_size"));
    gtc.lr = cfg_.get_double("train.lr");
    gtc.weight_decay = cfg_.get_double("train.weight_decay");
    gtc.seed = mix64(seed, fnv1a64(use_lap ? "generator-lap" : "generator-nolap"));
    gtc.use_label_prompt = use_lap;
    EncoderConfig nc = net_config_from(cfg_, vocab_, mix64(gtc.seed, 1));
    GeneratorModel gen =
        train_generator(train_tok_, proxy, vocab_, schedule_from(cfg_), nc, gtc);
    generators_.emplace_back(seed, use_lap, std::move(gen));
    return std::get<2>(generators_.back());
}

Metrics ExperimentRunner::run(uint64_t seed, const AblationFlags& flags, int group_index) {
    const GeneratorModel* gen = nullptr;
    if (flags.use_da) gen = &generator_for(seed, flags.use_lap);
    uint64_t cls_seed = mix64(seed, fnv1a64("classifier"));
    TrainConfig tc = classifier_config_from(cfg_, cls_seed, flags, group_index);
    EncoderConfig nc = net_config_from(cfg_, vocab_, mix64(cls_seed, 1));
    EncoderModel model = train_with_noise_resistance(train_tok_, gen, vocab_, nc, tc);
    return evaluate(model, test_tok_);
}

void cmd_sweep_groups(const Config& cfg) {
    auto start = Clock::now();
    uint64_t master = master_seed(cfg);
    ExperimentRunner runner(cfg, master);
    std::vector<uint64_t> seeds = cfg.get_seed_list("seeds");
    const int groups = static_cast<int>(cfg.get_int("schedule.groups"));
    AblationFlags flags = flags_from(cfg);

    nlohmann::json rows = nlohmann::json::array();
    std::string csv = "group,mean_macro_f1,stddev_macro_f1\n";
    int peak_group = 1;
    double peak_mean = -1.0;
    for (int g = 1; g <= groups; ++g) {
        std::vector<Metrics> per_seed;
        for (uint64_t s : seeds) per_seed.push_back(runner.run(s, flags, g));
        auto [mean, sd] = mean_std(collect_macro_f1(per_seed));
        if (mean > peak_mean) {
            peak_mean = mean;
            peak_group = g;
        }
        csv += std::to_string(g) + "," + format_fixed(mean, 6) + "," + format_fixed(sd, 6) + "\n";
        nlohmann::json row;
        row["group"] = g;
        row["mean_macro_f1"] = mean;
        row["stddev_macro_f1"] = sd;
        nlohmann::json per = nlohmann::json::array();
        for (const auto& m : per_seed)
            per.push_back({{"macro_f1", m.macro_f1}, {"accuracy", m.accuracy}});
        row["per_seed"] = per;
        rows.push_back(row);
    }
    atomic_write_file(out_dir(cfg) / "sweep.csv", csv);

    nlohmann::json metrics;
    metrics["rows"] = rows;
    metrics["peak_group"] = peak_group; // reported, not asserted
    metrics["peak_mean_macro_f1"] = peak_mean;
    metrics["seeds"] = seeds;
    write_stage_metrics(cfg, "sweep", metrics);
    write_stage_report(cfg, "sweep", seconds_since(start),
                       {fs::path(cfg.get_string("data.train")),
                        fs::path(cfg.get_string("data.test"))});
}

void cmd_ablation(const Config& cfg) {
    auto start = Clock::now();
    uint64_t master = master_seed(cfg);
    ExperimentRunner runner(cfg, master);
    std::vector<uint64_t> seeds = cfg.get_seed_list("seeds");
    const int group_index = static_cast<int>(cfg.get_int("schedule.group_index"));

    struct Row {
        const char* name;
        AblationFlags flags;
    };
    const Row grid[] = {
        {"full", {true, true, true}},
        {"no_da", {false, true, true}},
        {"no_lap", {true, false, true}},
        {"no_nrt", {true, true, false}},
        {"raw", {false, true, false}},
    };

    nlohmann::json rows = nlohmann::json::array();
    std::string csv = "config,mean_macro_f1,stddev_macro_f1,mean_accuracy\n";
    std::map<std::string, double> means;
    for (const Row& r : grid) {
        std::vector<Metrics> per_seed;
        for (uint64_t s : seeds) per_seed.push_back(runner.run(s, r.flags, group_index));
        auto [mean, sd] = mean_std(collect_macro_f1(per_seed));
        std::vector<double> accs;
        for (const auto& m : per_seed) accs.push_back(m.accuracy);
        auto [acc_mean, acc_sd] = mean_std(accs);
        means[r.name] = mean;
        csv += std::string(r.name) + "," + format_fixed(mean, 6) + "," + format_fixed(sd, 6) +
               "," + format_fixed(acc_mean, 6) + "\n";
        nlohmann::json row;
        row["config"] = r.name;
        row["mean_macro_f1"] = mean;
        row["stddev_macro_f1"] = sd;
        row["mean_accuracy"] = acc_mean;
        row["stddev_accuracy"] = acc_sd;
        nlohmann::json per = nlohmann::json::array();
        for (const auto& m : per_seed)
            per.push_back({{"macro_f1", m.macro_f1}, {"accuracy", m.accuracy}});
        row["per_seed"] = per;
        rows.push_back(row);
    }
    atomic_write_file(out_dir(cfg) / "ablation.csv", csv);

    // Soft dominance band: the full method should sit within 0.02 macro-F1 of
    // (or above) every single-ablation row. Reported either way.
    const double band = 0.02;
    nlohmann::json dominance;
    bool pass = true;
    for (const char* name : {"no_da", "no_lap", "no_nrt"}) {
        double margin = means["full"] - (means[name] - band);
        dominance[name] = {{"margin", margin}, {"ok", margin >= 0.0}};
        pass = pass && margin >= 0.0;
    }
    nlohmann::json metrics;
    metrics["rows"] = rows;
    metrics["dominance_band"] = band;
    metrics["dominance_check"] = dominance;
    metrics["dominance_pass"] = pass;
    metrics["seeds"] = seeds;
    write_stage_metrics(cfg, "ablation", metrics);
    write_stage_report(cfg, "ablation", seconds_since(start),
                       {fs::path(cfg.get_string("data.train")),
                        fs::path(cfg.get_string("data.test"))});
}

void cmd_project(const Config& cfg) {
    auto start = Clock::now();
    uint64_t master = master_seed(cfg);
    Vocab vocab = load_vocab_checked(cfg);
    require_file(classifier_path(cfg), "classifier checkpoint", "train-classifier");
    EncoderModel model = load_checkpoint(classifier_path(cfg)).model;
    GeneratorModel gen = load_generator_checked(cfg, vocab);

    std::vector<TokenizedSample> dataset =
        tokenize_all(cfg, vocab, load_train_split(cfg, master));
    size_t cap = static_cast<size_t>(cfg.get_int("project.max_samples"));
    if (dataset.size() > cap) dataset.resize(cap);
    if (dataset.size() < 3) throw ConfigError("projection needs at least 3 originals");

    const int groups = static_cast<int>(cfg.get_int("schedule.groups"));
    StepGroups sg = step_groups(gen.schedule.total_steps, groups);

    struct Point {
        int id;
        bool is_pseudo;
        int group;
        std::string label;
    };
    std::vector<Point> points;
    std::vector<std::vector<double>> reps;

    for (size_t i = 0; i < dataset.size(); ++i) {
        ForwardTrace t = forward(model, dataset[i].ids, ForwardMode::classify);
        points.push_back({static_cast<int>(i), false, 0, vocab.classes()[dataset[i].label_id]});
        reps.push_back(t.pooled);
    }
    for (int g = 1; g <= groups; ++g) {
        for (size_t i = 0; i < dataset.size(); ++i) {
            TokenWeights w =
                token_weights(forward(model, dataset[i].ids, ForwardMode::classify), dataset[i]);
            uint64_t seed = substream(master, "project", g, i).next_u64();
            auto ps = generate_for_sample(gen, vocab, dataset[i], w, sg, g, 1, seed,
                                          static_cast<int>(i), cfg.get_double("train.temperature"));
            TokenizedSample pt = tokenize(vocab, {ps[0].text, ps[0].label});
            ForwardTrace t = forward(model, pt.ids, ForwardMode::classify);
            points.push_back({static_cast<int>(i), true, g, ps[0].label});
            reps.push_back(t.pooled);
        }
    }

    Mat X(static_cast<int>(reps.size()), static_cast<int>(reps[0].size()));
    for (size_t i = 0; i < reps.size(); ++i)
        std::copy(reps[i].begin(), reps[i].end(), X.row(static_cast<int>(i)));

    const std::string& method = cfg.get_string("project.method");
    Mat Y;
    if (method == "pca") {
        Y = pca_2d(X);
    } else if (method == "tsne") {
        Y = tsne_2d(X, cfg.get_double("project.tsne_perplexity"),
                    static_cast<int>(cfg.get_int("project.tsne_iterations")),
                    substream(master, "tsne").next_u64());
    } else {
        throw ConfigError("project.method must be pca|tsne, got '" + method + "'");
    }

    std::string csv = "id,is_pseudo,group,label,x,y\n";
    for (size_t i = 0; i < points.size(); ++i) {
        csv += std::to_string(points[i].id) + "," + (points[i].is_pseudo ? "1" : "0") + "," +
               std::to_string(points[i].group) + "," + points[i].label + "," +
               format_fixed(Y.at(static_cast<int>(i), 0), 6) + "," +
               format_fixed(Y.at(static_cast<int>(i), 1), 6) + "\n";
    }
    atomic_write_file(out_dir(cfg) / "projection.csv", csv);

    // Mean projected distance from each original to its pseudo samples, per
    // group; diagnostic for the diversity-vs-masking trend.
    const size_t n = dataset.size();
    nlohmann::json by_group = nlohmann::json::array();
    for (int g = 1; g <= groups; ++g) {
        double total = 0.0;
        for (size_t i = 0; i < n; ++i) {
            size_t row = n * static_cast<size_t>(g) + i;
            double dx = Y.at(static_cast<int>(row), 0) - Y.at(static_cast<int>(i), 0);
            double dy = Y.at(static_cast<int>(row), 1) - Y.at(static_cast<int>(i), 1);
            total += std::sqrt(dx * dx + dy * dy);
        }
        by_group.push_back(total / static_cast<double>(n));
    }
    nlohmann::json metrics;
    metrics["points"] = points.size();
    metrics["originals"] = n;
    metrics["groups"] = groups;
    metrics["method"] = method;
    metrics["mean_projected_distance_by_group"] = by_group;
    write_stage_metrics(cfg, "project", metrics);
    write_stage_report(cfg, "project", seconds_since(start),
                       {classifier_path(cfg), generator_path(cfg)});
}

std::vector<PartialRunRow> run_partial_sweep(const Config& cfg,
                                             const std::vector<double>& fractions) {
    auto start = Clock::now();
    uint64_t master = master_seed(cfg);
    std::vector<uint64_t> seeds = cfg.get_seed_list("seeds");
    AblationFlags flags = flags_from(cfg);
    const int group_index = static_cast<int>(cfg.get_int("schedule.group_index"));

    std::vector<PartialRunRow> rows;
    nlohmann::json jrows = nlohmann::json::array();
    std::string csv = "fraction,macro_f1,accuracy\n";
    for (double f : fractions) {
        Config sub = cfg;
        sub.set("data.fraction", format_fixed(f, 4));
        ExperimentRunner runner(sub, master);
        Metrics m = runner.run(seeds[0], flags, group_index);
        rows.push_back({f, m.macro_f1, m.accuracy});
        csv += format_fixed(f, 2) + "," + format_fixed(m.macro_f1, 6) + "," +
               format_fixed(m.accuracy, 6) + "\n";
        nlohmann::json row;
        row["fraction"] = f;
        row["macro_f1"] = m.macro_f1;
        row["accuracy"] = m.accuracy;
        row["train_size"] = runner.train_set().size();
        jrows.push_back(row);
    }
    atomic_write_file(out_dir(cfg) / "partial.csv", csv);
    nlohmann::json metrics;
    metrics["rows"] = jrows;
    metrics["seed"] = seeds[0];
    write_stage_metrics(cfg, "partial", metrics);
    write_stage_report(cfg, "partial", seconds_since(start),
                       {fs::path(cfg.get_string("data.train")),
                        fs::path(cfg.get_string("data.test"))});
    return rows;
}

} // namespace dcls
