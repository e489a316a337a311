// Prints a checkpoint header: model config, parameter table grouped by
// trainability tag, optimizer slots, and run metadata.

#include <cstdio>
#include <map>
#include <string>

#include "camflow/checkpoint.hpp"
#include "camflow/model.hpp"

using namespace camflow;

int main(int argc, char** argv) {
    if (argc != 2) {
        std::fprintf(stderr, "usage: ckpt_info <checkpoint>\n");
        return 2;
    }
    ckpt::Checkpoint ck;
    try {
        ck = ckpt::load(argv[1]);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "ckpt_info: %s\n", e.what());
        return 3;
    }
    const auto& c = ck.config;
    std::printf("model: mode=%s d=%d depth=%d heads=%d p=%d f=%d c=%d h=%d w=%d\n",
                model::mode_name(c.mode).c_str(), c.d, c.depth, c.heads, c.p, c.f, c.c,
                c.h, c.w);

    std::map<std::string, std::pair<int, int64_t>> by_group;  // count, scalars
    for (const auto& [name, t] : ck.params.tensors) {
        auto& [n, s] = by_group[ck.params.group_of.at(name)];
        ++n;
        s += t.numel();
    }
    std::printf("parameters: %lld scalars in %zu tensors\n",
                static_cast<long long>(ck.params.scalar_count()),
                ck.params.tensors.size());
    for (const auto& [group, ns] : by_group)
        std::printf("  %-16s %3d tensors  %8lld scalars\n", group.c_str(), ns.first,
                    static_cast<long long>(ns.second));

    std::printf("optimizer slots: %zu\n", ck.opt.size());
    for (const auto& [key, val] : ck.meta)
        std::printf("meta %-12s %s\n", key.c_str(), val.c_str());

    std::printf("\n%-28s %-16s shape\n", "tensor", "group");
    for (const auto& [name, t] : ck.params.tensors) {
        std::string shape;
        for (size_t i = 0; i < t.shape().size(); ++i)
            shape += (i ? "x" : "") + std::to_string(t.shape()[i]);
        std::printf("%-28s %-16s %s\n", name.c_str(),
                    ck.params.group_of.at(name).c_str(), shape.c_str());
    }
    return 0;
}
