#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dcls {

struct LabeledSample {
    std::string text;
    std::string label;
};

// Token vocabulary with fixed special ids, one dedicated prompt token per
// class, and corpus tokens after that. Immutable once built; safe for
// concurrent reads.
//
// Id layout: PAD=0, UNK=1, CLS=2, SEP=3, MASK=4, label tokens
// [5, 5+num_classes), corpus tokens from first_content_id() on.
class Vocab {
public:
    static constexpr int32_t kPad = 0;
    static constexpr int32_t kUnk = 1;
    static constexpr int32_t kCls = 2;
    static constexpr int32_t kSep = 3;
    static constexpr int32_t kMask = 4;
    static constexpr int32_t kFirstLabel = 5;

    Vocab() = default;
    Vocab(std::vector<std::string> classes, std::vector<std::string> content_tokens);

    int32_t size() const { return static_cast<int32_t>(tokens_.size()); }
    int num_classes() const { return static_cast<int>(classes_.size()); }
    const std::vector<std::string>& classes() const { return classes_; }

    // UNK for tokens not in the vocabulary.
    int32_t id_of(std::string_view token) const;
    // Throws ConfigError("invalid token id") for out-of-range ids.
    const std::string& token(int32_t id) const;

    int class_id(std::string_view label) const; // -1 if unknown
    int32_t label_token(int class_id) const { return kFirstLabel + class_id; }

    bool is_special(int32_t id) const { return id >= 0 && id < kFirstLabel; }
    bool is_label_token(int32_t id) const {
        return id >= kFirstLabel && id < kFirstLabel + num_classes();
    }
    int32_t first_content_id() const { return kFirstLabel + num_classes(); }
    bool is_content(int32_t id) const { return id >= first_content_id() && id < size(); }

    std::string to_json() const;
    static Vocab from_json(const std::string& json_text);
    void save(const std::filesystem::path& path) const;
    static Vocab load(const std::filesystem::path& path);

private:
    std::vector<std::string> tokens_;  // id order
    std::vector<std::string> classes_; // class-id order
    // token -> id lookup
    std::vector<std::pair<std::string, int32_t>> index_; // sorted by token
    void build_index();
};

struct TokenizedSample {
    std::vector<int32_t> ids;      // [CLS] t1..tn [SEP]
    int label_id = -1;
    std::vector<uint8_t> maskable; // false at CLS/SEP/label-prompt positions
};

// Vocabulary over tokens occurring >= min_count times, plus specials and one
// label token per observed class (classes in first-appearance order).
Vocab build_vocab(const std::vector<LabeledSample>& samples, int min_count);

TokenizedSample tokenize(const Vocab& vocab, const LabeledSample& sample);

// Joins content tokens with single spaces; CLS/SEP/PAD/label tokens are
// dropped, MASK renders as "[M]", UNK as "[UNK]".
std::string detokenize(const Vocab& vocab, std::span<const int32_t> ids);

// One JSON object per line with string fields "text" and "label".
std::vector<LabeledSample> load_jsonl(const std::filesystem::path& path);
void save_jsonl(const std::filesystem::path& path, const std::vector<LabeledSample>& samples);

struct SynthClassSpec {
    std::string name;
    int count = 0;
};
struct SynthSpec {
    std::vector<SynthClassSpec> classes;
    uint64_t seed = 0;
};

// Template-generated sentiment corpus: shared neutral contexts with one
// class-specific strong emotion word, so label signal is carried by few
// tokens. Texts are unique within a class and the output is a pure function
// of the spec and seed.
std::vector<LabeledSample> synth_corpus(const SynthSpec& spec);

// Content ids of a tokenized sample (strips the CLS/SEP frame).
std::span<const int32_t> content_ids(const TokenizedSample& s);

} // namespace dcls
