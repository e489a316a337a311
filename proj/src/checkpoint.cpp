#include "camflow/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

#include "camflow/errors.hpp"

namespace camflow::ckpt {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'C', 'F', 'C', 'K', '0', '0', '0', '1'};

json config_to_json(const model::ModelConfig& c) {
    return json{{"d", c.d},
                {"depth", c.depth},
                {"heads", c.heads},
                {"p", c.p},
                {"f", c.f},
                {"c", c.c},
                {"h", c.h},
                {"w", c.w},
                {"mode", model::mode_name(c.mode)},
                {"desc_vocab", c.desc_vocab},
                {"desc_len", c.desc_len},
                {"aligned_time_index", c.aligned_time_index}};
}

model::ModelConfig config_from_json(const json& j) {
    model::ModelConfig c;
    c.d = j.at("d").get<int>();
    c.depth = j.at("depth").get<int>();
    c.heads = j.at("heads").get<int>();
    c.p = j.at("p").get<int>();
    c.f = j.at("f").get<int>();
    c.c = j.at("c").get<int>();
    c.h = j.at("h").get<int>();
    c.w = j.at("w").get<int>();
    c.mode = model::mode_from_name(j.at("mode").get<std::string>());
    c.desc_vocab = j.at("desc_vocab").get<int>();
    c.desc_len = j.at("desc_len").get<int>();
    c.aligned_time_index = j.at("aligned_time_index").get<bool>();
    return c;
}

}  // namespace

void save(const std::string& path, const Checkpoint& ck) {
    json header;
    header["config"] = config_to_json(ck.config);
    header["meta"] = ck.meta;
    json table = json::array();
    int64_t offset = 0;
    auto describe = [&](const std::string& name, const Tensor& t, const std::string& kind,
                        const std::string& group) {
        table.push_back({{"name", name},
                         {"kind", kind},
                         {"group", group},
                         {"shape", t.shape()},
                         {"offset", offset}});
        offset += t.numel();
    };
    for (const auto& [name, t] : ck.params.tensors)
        describe(name, t, "param", ck.params.group_of.at(name));
    for (const auto& [name, t] : ck.opt) describe(name, t, "opt", "");
    header["tensors"] = std::move(table);
    const std::string head = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint " + path);
    out.write(kMagic, sizeof(kMagic));
    const uint64_t hlen = head.size();
    out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    out.write(head.data(), static_cast<std::streamsize>(head.size()));
    for (const auto& [name, t] : ck.params.tensors)
        out.write(reinterpret_cast<const char*>(t.ptr()),
                  static_cast<std::streamsize>(t.numel() * sizeof(double)));
    for (const auto& [name, t] : ck.opt)
        out.write(reinterpret_cast<const char*>(t.ptr()),
                  static_cast<std::streamsize>(t.numel() * sizeof(double)));
    if (!out) throw IoError("short write to checkpoint " + path);
}

Checkpoint load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read checkpoint " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw IoError("not a checkpoint file: " + path);
    uint64_t hlen = 0;
    in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
    std::string head(hlen, '\0');
    in.read(head.data(), static_cast<std::streamsize>(hlen));
    if (!in) throw IoError("truncated checkpoint header: " + path);
    json header = json::parse(head);

    Checkpoint ck;
    ck.config = config_from_json(header.at("config"));
    if (header.contains("meta"))
        ck.meta = header.at("meta").get<std::map<std::string, std::string>>();
    for (const auto& e : header.at("tensors")) {
        const std::string name = e.at("name").get<std::string>();
        const std::string kind = e.at("kind").get<std::string>();
        Tensor t(e.at("shape").get<std::vector<int64_t>>());
        in.read(reinterpret_cast<char*>(t.ptr()),
                static_cast<std::streamsize>(t.numel() * sizeof(double)));
        if (!in) throw IoError("truncated checkpoint tensor " + name + ": " + path);
        if (kind == "param")
            ck.params.add(name, std::move(t), e.at("group").get<std::string>());
        else
            ck.opt.emplace(name, std::move(t));
    }
    return ck;
}

Checkpoint from_model(const model::Model& m) {
    Checkpoint ck;
    ck.config = m.cfg;
    ck.params = m.params;  // shallow tensor copies; save() only reads
    return ck;
}

void load_into(const Checkpoint& ck, model::Model& m) {
    for (auto& [name, t] : m.params.tensors) {
        auto it = ck.params.tensors.find(name);
        if (it == ck.params.tensors.end()) {
            const std::string& g = m.params.group_of.at(name);
            if (g == "camera_encoder" || g == "attn_view") continue;  // keep zero init
            throw ConfigError("checkpoint is missing parameter " + name);
        }
        if (it->second.shape() != t.shape())
            throw ConfigError("checkpoint shape mismatch for " + name);
        t = it->second.clone();
    }
}

}  // namespace camflow::ckpt
