#pragma once

#include <chrono>
#include <filesystem>
#include <string>

#include "dcls/corpus.hpp"
#include "dcls/encoder.hpp"

namespace dcls::testutil {

// Unique scratch directory per test binary run, removed on destruction.
struct TempDir {
    std::filesystem::path path;

    explicit TempDir(const std::string& tag) {
        auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
        path = std::filesystem::temp_directory_path() /
               ("dcls-" + tag + "-" + std::to_string(static_cast<long long>(stamp)));
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
};

inline std::vector<LabeledSample> tiny_corpus() {
    return {
        {"good movie tonight", "pos"},   {"great show overall", "pos"},
        {"lovely song today", "pos"},    {"bad movie tonight", "neg"},
        {"awful show overall", "neg"},   {"poor song today", "neg"},
        {"plain movie tonight", "neu"},  {"average show overall", "neu"},
    };
}

inline EncoderConfig tiny_encoder_config(int vocab_size, int num_classes, uint64_t seed = 7,
                                         double dropout = 0.0) {
    EncoderConfig cfg;
    cfg.vocab_size = vocab_size;
    cfg.max_len = 32;
    cfg.dim = 8;
    cfg.heads = 2;
    cfg.layers = 2;
    cfg.ffn = 16;
    cfg.num_classes = num_classes;
    cfg.dropout = dropout;
    cfg.seed = seed;
    return cfg;
}

} // namespace dcls::testutil
