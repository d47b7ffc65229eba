#include "dcls/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dcls/common.hpp"
#include "dcls/rng.hpp"
#include "dcls/util.hpp"

namespace dcls {

namespace {

const char* kSpecialNames[] = {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"};

std::string label_token_name(const std::string& cls) { return "<LBL_" + cls + ">"; }

} // namespace

Vocab::Vocab(std::vector<std::string> classes, std::vector<std::string> content_tokens)
    : classes_(std::move(classes)) {
    tokens_.reserve(kFirstLabel + classes_.size() + content_tokens.size());
    for (const char* s : kSpecialNames) tokens_.emplace_back(s);
    for (const auto& c : classes_) tokens_.push_back(label_token_name(c));
    for (auto& t : content_tokens) tokens_.push_back(std::move(t));
    build_index();
}

void Vocab::build_index() {
    index_.clear();
    index_.reserve(tokens_.size());
    for (int32_t i = 0; i < size(); ++i) index_.emplace_back(tokens_[i], i);
    std::sort(index_.begin(), index_.end());
    for (size_t i = 1; i < index_.size(); ++i)
        if (index_[i].first == index_[i - 1].first)
            throw ConfigError("duplicate token in vocabulary: " + index_[i].first);
}

int32_t Vocab::id_of(std::string_view token) const {
    auto it = std::lower_bound(index_.begin(), index_.end(), token,
                               [](const auto& p, std::string_view t) { return p.first < t; });
    if (it != index_.end() && it->first == token) return it->second;
    return kUnk;
}

const std::string& Vocab::token(int32_t id) const {
    if (id < 0 || id >= size()) throw ConfigError("invalid token id: " + std::to_string(id));
    return tokens_[id];
}

int Vocab::class_id(std::string_view label) const {
    for (size_t i = 0; i < classes_.size(); ++i)
        if (classes_[i] == label) return static_cast<int>(i);
    return -1;
}

std::string Vocab::to_json() const {
    nlohmann::json j;
    j["format"] = "dcls-vocab-v1";
    j["classes"] = classes_;
    j["tokens"] = tokens_;
    j["specials"] = {{"pad", kPad}, {"unk", kUnk}, {"cls", kCls}, {"sep", kSep}, {"mask", kMask}};
    nlohmann::json labels;
    for (size_t i = 0; i < classes_.size(); ++i)
        labels[classes_[i]] = kFirstLabel + static_cast<int32_t>(i);
    j["label_tokens"] = labels;
    return j.dump(2) + "\n";
}

Vocab Vocab::from_json(const std::string& json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad vocab json: ") + e.what());
    }
    if (!j.contains("format") || j["format"] != "dcls-vocab-v1")
        throw ConfigError("unsupported vocab format");
    std::vector<std::string> classes = j.at("classes").get<std::vector<std::string>>();
    std::vector<std::string> tokens = j.at("tokens").get<std::vector<std::string>>();
    size_t first_content = kFirstLabel + classes.size();
    if (tokens.size() < first_content) throw ConfigError("vocab token list too short");
    std::vector<std::string> content(tokens.begin() + first_content, tokens.end());
    Vocab v(std::move(classes), std::move(content));
    if (v.tokens_ != tokens) throw ConfigError("vocab token list inconsistent with layout");
    return v;
}

void Vocab::save(const std::filesystem::path& path) const { atomic_write_file(path, to_json()); }

Vocab Vocab::load(const std::filesystem::path& path) { return from_json(read_file(path)); }

Vocab build_vocab(const std::vector<LabeledSample>& samples, int min_count) {
    if (samples.empty()) throw ConfigError("empty corpus");
    if (min_count < 1) throw ConfigError("min_count must be >= 1");

    std::vector<std::string> classes;
    std::map<std::string, int64_t> counts;
    std::vector<std::string> order; // first-appearance order of tokens
    for (const auto& s : samples) {
        if (std::find(classes.begin(), classes.end(), s.label) == classes.end())
            classes.push_back(s.label);
        for (auto& w : split_words(s.text)) {
            auto [it, inserted] = counts.emplace(w, 0);
            if (inserted) order.push_back(w);
            ++it->second;
        }
    }
    std::vector<std::string> content;
    for (const auto& w : order)
        if (counts[w] >= min_count) content.push_back(w);
    return Vocab(std::move(classes), std::move(content));
}

TokenizedSample tokenize(const Vocab& vocab, const LabeledSample& sample) {
    auto words = split_words(sample.text);
    if (words.empty()) throw ConfigError("empty text");
    int cls = vocab.class_id(sample.label);
    if (cls < 0) throw ConfigError("unknown label: " + sample.label);

    TokenizedSample out;
    out.label_id = cls;
    out.ids.reserve(words.size() + 2);
    out.ids.push_back(Vocab::kCls);
    for (const auto& w : words) out.ids.push_back(vocab.id_of(w));
    out.ids.push_back(Vocab::kSep);
    out.maskable.assign(out.ids.size(), 1);
    for (size_t i = 0; i < out.ids.size(); ++i) {
        int32_t id = out.ids[i];
        if (id == Vocab::kCls || id == Vocab::kSep || id == Vocab::kPad ||
            id == Vocab::kMask || vocab.is_label_token(id))
            out.maskable[i] = 0;
    }
    return out;
}

std::string detokenize(const Vocab& vocab, std::span<const int32_t> ids) {
    std::string out;
    for (int32_t id : ids) {
        const std::string& tok = vocab.token(id); // validates range
        if (id == Vocab::kCls || id == Vocab::kSep || id == Vocab::kPad ||
            vocab.is_label_token(id))
            continue;
        std::string_view piece = tok;
        if (id == Vocab::kMask) piece = "[M]";
        if (!out.empty()) out.push_back(' ');
        out.append(piece);
    }
    return out;
}

std::span<const int32_t> content_ids(const TokenizedSample& s) {
    if (s.ids.size() < 2) return {};
    return std::span<const int32_t>(s.ids).subspan(1, s.ids.size() - 2);
}

std::vector<LabeledSample> load_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open dataset: " + path.string());
    std::vector<LabeledSample> out;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception&) {
            throw ConfigError("malformed json at line " + std::to_string(lineno) + " of " +
                              path.string());
        }
        if (!j.contains("text") || !j["text"].is_string())
            throw ConfigError("missing field 'text' at line " + std::to_string(lineno));
        if (!j.contains("label") || !j["label"].is_string())
            throw ConfigError("missing field 'label' at line " + std::to_string(lineno));
        LabeledSample s{j["text"].get<std::string>(), j["label"].get<std::string>()};
        if (split_words(s.text).empty())
            throw ConfigError("empty text at line " + std::to_string(lineno));
        out.push_back(std::move(s));
    }
    return out;
}

void save_jsonl(const std::filesystem::path& path, const std::vector<LabeledSample>& samples) {
    std::string buf;
    for (const auto& s : samples) {
        nlohmann::json j;
        j["label"] = s.label;
        j["text"] = s.text;
        buf += j.dump();
        buf.push_back('\n');
    }
    atomic_write_file(path, buf);
}

namespace {

const std::vector<std::string> kTopics = {
    "movie", "film",    "book",  "show",  "song",    "meal",  "trip",   "game",   "hotel",
    "concert", "lecture", "match", "play",  "album",   "dinner", "ride",  "museum", "park",
    "flight", "class"};

// %T = topic slot, %E = emotion slot.
const std::vector<std::string> kTemplates = {
    "the %T was %E",
    "that %T seemed %E overall",
    "honestly the %T felt %E to me",
    "we thought the %T was %E yesterday",
    "my friends called the %T %E",
    "in the end the %T turned out %E",
    "the %T looked %E from the start",
    "everyone agreed the %T was %E",
    "critics described the %T as %E",
    "the %T last night was simply %E",
    "overall the %T felt rather %E",
    "people said the %T was quite %E",
    "the %T this weekend seemed %E",
    "reviews called the %T truly %E",
    "the whole %T was %E again",
    "our %T today felt %E somehow",
};

const std::vector<std::string> kPosWords = {"wonderful", "excellent", "delightful", "superb",
                                            "fantastic", "great",     "charming",   "brilliant",
                                            "amazing",   "lovely",    "terrific",   "splendid"};
const std::vector<std::string> kNegWords = {"terrible",  "awful",      "dreadful",   "horrible",
                                            "miserable", "lousy",      "unbearable", "atrocious",
                                            "dismal",    "wretched",   "appalling",  "disastrous"};
const std::vector<std::string> kNeuWords = {"ordinary", "average",      "typical", "plain",
                                            "routine",  "standard",     "usual",   "moderate",
                                            "fair",     "unremarkable", "middling", "common"};

std::vector<std::string> emotion_words(const std::string& cls, size_t class_index) {
    if (cls == "pos") return kPosWords;
    if (cls == "neg") return kNegWords;
    if (cls == "neu") return kNeuWords;
    // Unknown class names get synthetic signal words derived from the name.
    std::vector<std::string> out;
    for (int k = 0; k < 12; ++k)
        out.push_back(cls + "w" + std::to_string(class_index) + std::to_string(k));
    return out;
}

std::string instantiate(const std::string& tpl, const std::string& topic,
                        const std::string& emo) {
    std::string out;
    for (size_t i = 0; i < tpl.size(); ++i) {
        if (tpl[i] == '%' && i + 1 < tpl.size() && (tpl[i + 1] == 'T' || tpl[i + 1] == 'E')) {
            out += (tpl[i + 1] == 'T') ? topic : emo;
            ++i;
        } else {
            out.push_back(tpl[i]);
        }
    }
    return out;
}

} // namespace

std::vector<LabeledSample> synth_corpus(const SynthSpec& spec) {
    if (spec.classes.empty()) throw ConfigError("synth spec has no classes");
    for (const auto& c : spec.classes)
        if (c.count < 1) throw ConfigError("synth class count must be >= 1: " + c.name);

    std::vector<LabeledSample> out;
    for (size_t ci = 0; ci < spec.classes.size(); ++ci) {
        const auto& cls = spec.classes[ci];
        auto words = emotion_words(cls.name, ci);
        RngStream rng = substream(spec.seed, "synth", ci);
        std::set<std::string> seen;
        int64_t attempts = 0;
        const int64_t max_attempts = 200ll * cls.count + 1000;
        while (static_cast<int>(seen.size()) < cls.count) {
            if (++attempts > max_attempts)
                throw ConfigError("synthetic diversity exhausted for class " + cls.name);
            const auto& tpl = kTemplates[rng.uniform_int(0, kTemplates.size() - 1)];
            const auto& topic = kTopics[rng.uniform_int(0, kTopics.size() - 1)];
            const auto& emo = words[rng.uniform_int(0, words.size() - 1)];
            std::string text = instantiate(tpl, topic, emo);
            if (seen.insert(text).second) out.push_back({std::move(text), cls.name});
        }
    }
    return out;
}

} // namespace dcls
