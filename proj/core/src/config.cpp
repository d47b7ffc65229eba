#include "dcls/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dcls/common.hpp"

namespace dcls {

namespace {

const std::pair<const char*, const char*> kDefaults[] = {
    {"data.train", "out/train.jsonl"},
    {"data.test", "out/test.jsonl"},
    {"data.classes", "pos:300,neg:60,neu:30"},
    {"data.test_per_class", "100"},
    {"data.fraction", "1.0"},
    {"data.shots", "0"},
    {"data.min_count", "1"},
    {"model.dim", "64"},
    {"model.heads", "4"},
    {"model.layers", "2"},
    {"model.ffn", "128"},
    {"model.max_len", "64"},
    {"model.dropout", "0.1"},
    {"schedule.T", "32"},
    {"schedule.lambda", "0.5"},
    {"schedule.groups", "8"},
    {"schedule.group_index", "4"},
    {"train.proxy_epochs", "15"},
    {"train.generator_epochs", "8"},
    {"train.classifier_epochs", "6"},
    {"train.batch_size", "8"},
    {"train.lr", "3e-4"},
    {"train.weight_decay", "0.01"},
    {"train.tau", "1.0"},
    {"train.aug_per_sample", "4"},
    {"train.refresh", "epoch"},
    {"train.temperature", "1.0"},
    {"train.use_da", "true"},
    {"train.use_lap", "true"},
    {"train.use_nrt", "true"},
    {"policy.kind", "n_each"},
    {"policy.n", "4"},
    {"seed", "42"},
    {"seeds", "1,2,3,4,5"},
    {"out.dir", "out"},
    {"project.method", "pca"},
    {"project.max_samples", "60"},
    {"project.tsne_perplexity", "20"},
    {"project.tsne_iterations", "400"},
};

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

} // namespace

Config Config::defaults() {
    Config c;
    for (const auto& [k, v] : kDefaults) c.kv_[k] = v;
    return c;
}

Config Config::from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path.string());
    Config c = defaults();
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + " is not key=value");
        std::string key = trim(t.substr(0, eq));
        std::string value = trim(t.substr(eq + 1));
        try {
            c.set(key, value);
        } catch (const ConfigError& e) {
            throw ConfigError(std::string(e.what()) + " (line " + std::to_string(lineno) + ")");
        }
    }
    return c;
}

void Config::set(const std::string& key, const std::string& value) {
    auto it = kv_.find(key);
    if (it == kv_.end()) throw ConfigError("unknown config key: " + key);
    it->second = value;
}

const std::string& Config::get_string(const std::string& key) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) throw ConfigError("unknown config key: " + key);
    return it->second;
}

int64_t Config::get_int(const std::string& key) const {
    const std::string& v = get_string(key);
    try {
        size_t pos = 0;
        int64_t out = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError("config key " + key + " is not an integer: '" + v + "'");
    }
}

double Config::get_double(const std::string& key) const {
    const std::string& v = get_string(key);
    try {
        size_t pos = 0;
        double out = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError("config key " + key + " is not a number: '" + v + "'");
    }
}

bool Config::get_bool(const std::string& key) const {
    const std::string& v = get_string(key);
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError("config key " + key + " is not a boolean: '" + v + "'");
}

uint64_t Config::get_seed(const std::string& key) const {
    const std::string& v = get_string(key);
    try {
        size_t pos = 0;
        uint64_t out = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError("config key " + key + " is not a seed: '" + v + "'");
    }
}

std::vector<uint64_t> Config::get_seed_list(const std::string& key) const {
    const std::string& v = get_string(key);
    std::vector<uint64_t> out;
    std::stringstream ss(v);
    std::string part;
    while (std::getline(ss, part, ',')) {
        part = trim(part);
        if (part.empty()) continue;
        try {
            out.push_back(std::stoull(part));
        } catch (const std::exception&) {
            throw ConfigError("config key " + key + " has a bad seed entry: '" + part + "'");
        }
    }
    if (out.empty()) throw ConfigError("config key " + key + " lists no seeds");
    return out;
}

std::string Config::snapshot_json() const {
    nlohmann::json j;
    for (const auto& [k, v] : kv_) j[k] = v;
    return j.dump();
}

} // namespace dcls
