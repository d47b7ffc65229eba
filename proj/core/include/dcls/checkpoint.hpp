#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "dcls/encoder.hpp"

namespace dcls {

// Checkpoint file layout ("dcls-ckpt-v1"): one JSON manifest line holding the
// config, free-form metadata, and per-tensor byte offsets, followed by a raw
// little-endian IEEE-754 float64 blob.
void save_checkpoint(const EncoderModel& model, const std::filesystem::path& path,
                     const std::map<std::string, std::string>& meta = {});

struct LoadedCheckpoint {
    EncoderModel model;
    std::map<std::string, std::string> meta;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

} // namespace dcls
