#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace dcls {

// Flat key-value configuration with dotted section prefixes
// (e.g. schedule.T=32). A fixed default set defines the schema; files and
// command-line overrides may only touch known keys, so typos fail loudly.
// Snapshots list every key, defaults included.
class Config {
public:
    static Config defaults();
    static Config from_file(const std::filesystem::path& path);

    bool has(const std::string& key) const { return kv_.count(key) > 0; }
    void set(const std::string& key, const std::string& value); // throws on unknown key

    const std::string& get_string(const std::string& key) const;
    int64_t get_int(const std::string& key) const;
    double get_double(const std::string& key) const;
    bool get_bool(const std::string& key) const;
    uint64_t get_seed(const std::string& key) const;
    std::vector<uint64_t> get_seed_list(const std::string& key) const;

    // Full flattened snapshot, keys sorted, deterministic.
    std::string snapshot_json() const;

    const std::map<std::string, std::string>& entries() const { return kv_; }

private:
    std::map<std::string, std::string> kv_;
};

} // namespace dcls
