#include "dcls/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "dcls/common.hpp"
#include "dcls/util.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint blobs are little-endian; big-endian hosts are unsupported");

namespace dcls {

namespace {

nlohmann::json config_to_json(const EncoderConfig& c) {
    return nlohmann::json{{"vocab_size", c.vocab_size}, {"max_len", c.max_len},
                          {"dim", c.dim},               {"heads", c.heads},
                          {"layers", c.layers},         {"ffn", c.ffn},
                          {"num_classes", c.num_classes}, {"dropout", c.dropout},
                          {"seed", c.seed}};
}

EncoderConfig config_from_json(const nlohmann::json& j) {
    EncoderConfig c;
    c.vocab_size = j.at("vocab_size").get<int>();
    c.max_len = j.at("max_len").get<int>();
    c.dim = j.at("dim").get<int>();
    c.heads = j.at("heads").get<int>();
    c.layers = j.at("layers").get<int>();
    c.ffn = j.at("ffn").get<int>();
    c.num_classes = j.at("num_classes").get<int>();
    c.dropout = j.at("dropout").get<double>();
    c.seed = j.at("seed").get<uint64_t>();
    return c;
}

} // namespace

void save_checkpoint(const EncoderModel& model, const std::filesystem::path& path,
                     const std::map<std::string, std::string>& meta) {
    nlohmann::json manifest;
    manifest["format"] = "dcls-ckpt-v1";
    manifest["config"] = config_to_json(model.config);
    manifest["meta"] = meta;
    nlohmann::json params = nlohmann::json::array();
    for (const auto& e : model.layout.entries()) {
        params.push_back({{"name", e.name},
                          {"shape", e.cols == 1 ? nlohmann::json::array({e.rows})
                                                : nlohmann::json::array({e.rows, e.cols})},
                          {"offset", e.offset * sizeof(double)},
                          {"count", e.count()}});
    }
    manifest["params"] = params;
    manifest["blob_bytes"] = model.params.size() * sizeof(double);

    std::string content = manifest.dump();
    content.push_back('\n');
    size_t header_len = content.size();
    content.resize(header_len + model.params.size() * sizeof(double));
    std::memcpy(content.data() + header_len, model.params.data(),
                model.params.size() * sizeof(double));
    atomic_write_file(path, content);
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path))
        throw RuntimeError("checkpoint not found: " + path.string());
    std::string content = read_file(path);
    size_t nl = content.find('\n');
    if (nl == std::string::npos) throw RuntimeError("corrupt checkpoint (no manifest line)");
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(content.substr(0, nl));
    } catch (const nlohmann::json::exception& e) {
        throw RuntimeError(std::string("corrupt checkpoint manifest: ") + e.what());
    }
    if (!manifest.contains("format") || manifest["format"] != "dcls-ckpt-v1")
        throw RuntimeError("unsupported checkpoint format in " + path.string());

    LoadedCheckpoint out;
    out.model = init_model(config_from_json(manifest.at("config")));
    if (manifest.contains("meta"))
        out.meta = manifest["meta"].get<std::map<std::string, std::string>>();

    size_t blob_bytes = manifest.at("blob_bytes").get<size_t>();
    if (blob_bytes != out.model.params.size() * sizeof(double))
        throw RuntimeError("checkpoint blob size does not match the config");
    if (content.size() - nl - 1 != blob_bytes)
        throw RuntimeError("truncated checkpoint blob in " + path.string());
    std::memcpy(out.model.params.data(), content.data() + nl + 1, blob_bytes);
    for (double v : out.model.params)
        if (!std::isfinite(v)) throw RuntimeError("non-finite parameter in checkpoint");
    return out;
}

} // namespace dcls
