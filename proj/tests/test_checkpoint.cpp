#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "camflow/checkpoint.hpp"
#include "camflow/errors.hpp"
#include "camflow/model.hpp"
#include "camflow/rng.hpp"

using namespace camflow;
using namespace camflow::ckpt;
namespace fs = std::filesystem;

namespace {

model::ModelConfig tiny_config(model::CondMode mode = model::CondMode::FrameDim) {
    model::ModelConfig cfg;
    cfg.d = 16;
    cfg.depth = 1;
    cfg.heads = 2;
    cfg.p = 4;
    cfg.f = 2;
    cfg.h = 8;
    cfg.w = 8;
    cfg.mode = mode;
    return cfg;
}

void perturb(model::Parameters& params, uint64_t seed) {
    Rng rng(seed);
    for (auto& [name, t] : params.tensors)
        for (int64_t i = 0; i < t.numel(); ++i) t[i] += 0.01 * rng.normal();
}

fs::path temp_ckpt(const char* tag) {
    return fs::temp_directory_path() / (std::string("camflow_ckpt_") + tag + ".ckpt");
}

}  // namespace

TEST_CASE("checkpoints round trip params, optimizer slots, and meta bit-exactly") {
    model::Model m = model::Model::init(tiny_config(), 5);
    perturb(m.params, 99);

    Checkpoint ck = from_model(m);
    Rng rng(7);
    for (const auto& [name, t] : m.params.tensors) {
        Tensor slot(t.shape());
        for (int64_t i = 0; i < slot.numel(); ++i) slot[i] = rng.normal();
        ck.opt.emplace("adam.m." + name, std::move(slot));
    }
    ck.meta["stage"] = "recam_finetune";
    ck.meta["step"] = "1234";
    ck.meta["rng"] = "deadbeef 00ff 1 2";

    const auto path = temp_ckpt("roundtrip");
    save(path.string(), ck);
    const Checkpoint back = load(path.string());
    fs::remove(path);

    CHECK(back.config.d == 16);
    CHECK(back.config.mode == model::CondMode::FrameDim);
    CHECK(back.config.f == 2);
    CHECK(back.meta == ck.meta);

    REQUIRE(back.params.tensors.size() == ck.params.tensors.size());
    for (const auto& [name, t] : ck.params.tensors) {
        REQUIRE(back.params.has(name));
        CHECK(bitwise_equal(back.params.at(name), t));
        CHECK(back.params.group_of.at(name) == ck.params.group_of.at(name));
    }
    REQUIRE(back.opt.size() == ck.opt.size());
    for (const auto& [name, t] : ck.opt) CHECK(bitwise_equal(back.opt.at(name), t));
}

TEST_CASE("load_into restores every parameter by name") {
    model::Model src = model::Model::init(tiny_config(), 5);
    perturb(src.params, 1);
    const auto path = temp_ckpt("load_into");
    save(path.string(), from_model(src));

    model::Model dst = model::Model::init(tiny_config(), 6);
    load_into(load(path.string()), dst);
    fs::remove(path);
    for (const auto& [name, t] : src.params.tensors)
        CHECK(bitwise_equal(dst.params.at(name), t));
}

TEST_CASE("a base checkpoint loads into other conditioning modes keeping their extras") {
    model::Model base = model::Model::init(tiny_config(model::CondMode::FrameDim), 5);
    perturb(base.params, 2);
    const auto path = temp_ckpt("cross_mode");
    save(path.string(), from_model(base));
    const Checkpoint ck = load(path.string());
    fs::remove(path);

    for (model::CondMode mode : {model::CondMode::ViewDim, model::CondMode::ChannelDim}) {
        model::Model m = model::Model::init(tiny_config(mode), 31);
        // record the params the base cannot provide
        std::map<std::string, Tensor> extras;
        for (const auto& [name, t] : m.params.tensors)
            if (!ck.params.tensors.count(name)) extras.emplace(name, t.clone());
        REQUIRE(!extras.empty());
        for (const auto& [name, t] : extras) {
            const std::string& g = m.params.group_of.at(name);
            const bool exempt = g == "camera_encoder" || g == "attn_view";
            CHECK(exempt);
        }

        load_into(ck, m);
        for (const auto& [name, t] : m.params.tensors) {
            auto it = ck.params.tensors.find(name);
            if (it != ck.params.tensors.end())
                CHECK(bitwise_equal(t, it->second));
            else
                CHECK(bitwise_equal(t, extras.at(name)));
        }
    }
}

TEST_CASE("load_into rejects shape mismatches and missing core parameters") {
    model::Model src = model::Model::init(tiny_config(), 5);
    Checkpoint ck = from_model(src);

    model::ModelConfig wide = tiny_config();
    wide.d = 24;
    model::Model other = model::Model::init(wide, 5);
    CHECK_THROWS_AS(load_into(ck, other), ConfigError);

    // drop one core tensor: the load must fail loudly
    Checkpoint missing = from_model(src);
    std::string victim;
    for (const auto& [name, t] : missing.params.tensors)
        if (missing.params.group_of.at(name) == "other") {
            victim = name;
            break;
        }
    REQUIRE(!victim.empty());
    missing.params.tensors.erase(victim);
    missing.params.group_of.erase(victim);
    model::Model fresh = model::Model::init(tiny_config(), 6);
    CHECK_THROWS_WITH_AS(load_into(missing, fresh), doctest::Contains(victim.c_str()),
                         ConfigError);

    // tensors the model lacks are ignored
    Checkpoint extra = from_model(src);
    extra.params.add("leftover.weight", Tensor({3, 3}), "other");
    model::Model ok = model::Model::init(tiny_config(), 6);
    CHECK_NOTHROW(load_into(extra, ok));
}

TEST_CASE("corrupt checkpoint files raise io errors") {
    model::Model m = model::Model::init(tiny_config(), 5);
    const auto path = temp_ckpt("corrupt");
    save(path.string(), from_model(m));

    // truncate the payload
    const auto full = fs::file_size(path);
    fs::resize_file(path, full / 2);
    CHECK_THROWS_AS(load(path.string()), IoError);

    {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out << "not a checkpoint at all";
    }
    CHECK_THROWS_AS(load(path.string()), IoError);
    fs::remove(path);
    CHECK_THROWS_AS(load(path.string()), IoError);
}
