#include "camflow/model.hpp"

#include <cmath>
#include <cstdio>

#include "camflow/errors.hpp"
#include "camflow/rng.hpp"

namespace camflow::model {

using ag::Tape;
using ag::Var;

std::string mode_name(CondMode m) {
    switch (m) {
        case CondMode::FrameDim: return "frame_dim";
        case CondMode::ChannelDim: return "channel_dim";
        case CondMode::ViewDim: return "view_dim";
    }
    throw ConfigError("unknown conditioning mode");
}

CondMode mode_from_name(const std::string& name) {
    if (name == "frame_dim") return CondMode::FrameDim;
    if (name == "channel_dim") return CondMode::ChannelDim;
    if (name == "view_dim") return CondMode::ViewDim;
    throw ConfigError("unknown conditioning mode: " + name);
}

void ModelConfig::validate() const {
    if (depth < 1) throw ConfigError("model: depth must be >= 1");
    if (d < 6 || heads < 1 || d % heads != 0)
        throw ConfigError("model: width must be >= 6 and divisible by heads");
    if (p < 1 || h % p != 0 || w % p != 0)
        throw ShapeError("model: latent height/width must be divisible by the patch size");
    if (f < 1 || c < 1) throw ConfigError("model: frames and channels must be positive");
    if (desc_vocab < 2 || desc_len < 1) throw ConfigError("model: descriptor table too small");
}

void Parameters::add(const std::string& name, Tensor t, const std::string& group) {
    if (tensors.count(name)) throw ConfigError("duplicate parameter " + name);
    tensors.emplace(name, std::move(t));
    group_of.emplace(name, group);
}

Tensor& Parameters::at(const std::string& name) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw ConfigError("unknown parameter " + name);
    return it->second;
}

const Tensor& Parameters::at(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw ConfigError("unknown parameter " + name);
    return it->second;
}

int64_t Parameters::scalar_count() const {
    int64_t n = 0;
    for (const auto& [k, v] : tensors) n += v.numel();
    return n;
}

namespace {

void fill_sinusoid(double* row, int offset, int dim, double pos) {
    for (int j = 0; j < dim; j += 2) {
        const double freq = std::pow(10000.0, -static_cast<double>(j) / dim);
        row[offset + j] = std::sin(pos * freq);
        if (j + 1 < dim) row[offset + j + 1] = std::cos(pos * freq);
    }
}

std::string block_tag(int i) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "blocks.%02d.", i);
    return buf;
}

}  // namespace

Tensor time_embedding(const std::vector<double>& t, int dim) {
    Tensor out({static_cast<int64_t>(t.size()), dim});
    for (size_t i = 0; i < t.size(); ++i)
        fill_sinusoid(out.ptr() + static_cast<int64_t>(i) * dim, 0, dim, t[i] * 1000.0);
    return out;
}

Tensor positional_table(const ModelConfig& cfg, bool conditioned) {
    const int S = cfg.s();
    const int cols = cfg.w / cfg.p;
    const int rows_per = cfg.rows_per_sample(conditioned);
    const int slots = rows_per / S;
    const int c1 = cfg.d / 3, c2 = cfg.d / 3, c3 = cfg.d - 2 * (cfg.d / 3);
    Tensor pe({rows_per, cfg.d});
    for (int slot = 0; slot < slots; ++slot) {
        int frame = slot;
        if (conditioned && cfg.mode != CondMode::ChannelDim) {
            // Two halves (frames or streams): both carry per-frame indices;
            // aligned indexing repeats 0..f-1, offset indexing keeps 0..2f-1
            // in frame mode.
            if (cfg.mode == CondMode::ViewDim || cfg.aligned_time_index)
                frame = slot % cfg.f;
        }
        for (int pr = 0; pr < (cfg.h / cfg.p); ++pr) {
            for (int pc = 0; pc < cols; ++pc) {
                double* row = pe.ptr() + (static_cast<int64_t>(slot) * S + pr * cols + pc) * cfg.d;
                fill_sinusoid(row, 0, c1, frame);
                fill_sinusoid(row, c1, c2, pr);
                fill_sinusoid(row, c1 + c2, c3, pc);
            }
        }
    }
    return pe;
}

Model Model::init(const ModelConfig& cfg, uint64_t seed) {
    cfg.validate();
    Model m;
    m.cfg = cfg;
    Rng rng = stream(seed, 0x30d31);
    const int d = cfg.d;
    const int ppc = cfg.p * cfg.p * cfg.c;
    auto wnorm = [&](std::vector<int64_t> shape, int64_t fan_in) {
        return Tensor::randn(std::move(shape), rng, 1.0 / std::sqrt(static_cast<double>(fan_in)));
    };

    m.params.add("patch_proj.w", wnorm({d, ppc}, ppc), "other");
    m.params.add("patch_proj.b", Tensor::zeros({d}), "other");
    m.params.add("desc_embed", wnorm({cfg.desc_vocab, d}, d), "other");
    m.params.add("cam_enc.w", Tensor::zeros({d, 12}), "camera_encoder");
    m.params.add("cam_enc.b", Tensor::zeros({d}), "camera_encoder");
    if (cfg.mode == CondMode::FrameDim || cfg.mode == CondMode::ViewDim)
        m.params.add("role_embed", Tensor::zeros({2, d}), "camera_encoder");
    if (cfg.mode == CondMode::ChannelDim)
        m.params.add("patch_proj_src.w", Tensor::zeros({d, ppc}), "camera_encoder");

    auto add_norm = [&](const std::string& nm, const std::string& group) {
        m.params.add(nm + ".g", Tensor::full({d}, 1.0), group);
        m.params.add(nm + ".tw", Tensor::zeros({d, d}), group);
    };
    auto add_attn = [&](const std::string& nm, const std::string& group, bool zero_out) {
        add_norm(nm + ".norm", group);
        m.params.add(nm + ".wq", wnorm({d, d}, d), group);
        m.params.add(nm + ".wk", wnorm({d, d}, d), group);
        m.params.add(nm + ".wv", wnorm({d, d}, d), group);
        m.params.add(nm + ".wo", zero_out ? Tensor::zeros({d, d}) : wnorm({d, d}, d), group);
    };
    for (int i = 0; i < cfg.depth; ++i) {
        const std::string pre = block_tag(i);
        add_attn(pre + "spatial", "other", false);
        add_attn(pre + "attn3d", "attn_3d", false);
        if (cfg.mode == CondMode::ViewDim) add_attn(pre + "view", "attn_view", true);
        add_attn(pre + "cross", "other", false);
        add_norm(pre + "ffn.norm", "other");
        m.params.add(pre + "ffn.w1", wnorm({4 * d, d}, d), "other");
        m.params.add(pre + "ffn.b1", Tensor::zeros({4 * d}), "other");
        m.params.add(pre + "ffn.w2", wnorm({d, 4 * d}, 4 * d), "other");
        m.params.add(pre + "ffn.b2", Tensor::zeros({d}), "other");
    }
    add_norm("final.norm", "other");
    m.params.add("readout.w", Tensor::zeros({ppc, d}), "other");
    m.params.add("readout.b", Tensor::zeros({ppc}), "other");
    return m;
}

namespace {

struct PatchIndex {
    std::shared_ptr<std::vector<int64_t>> fwd;  // token element -> latent element
    std::shared_ptr<std::vector<int64_t>> inv;  // latent element -> token element
};

PatchIndex patch_index(const ModelConfig& cfg, int64_t B) {
    const int64_t f = cfg.f, c = cfg.c, h = cfg.h, w = cfg.w, p = cfg.p;
    const int64_t cols = w / p, S = (h / p) * cols, ppc = p * p * c;
    const int64_t n = B * f * c * h * w;
    PatchIndex pi;
    pi.fwd = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(n));
    pi.inv = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(n));
    for (int64_t b = 0; b < B; ++b)
        for (int64_t fi = 0; fi < f; ++fi)
            for (int64_t py = 0; py < h / p; ++py)
                for (int64_t px = 0; px < cols; ++px) {
                    const int64_t row = ((b * f + fi) * S + py * cols + px);
                    for (int64_t ch = 0; ch < c; ++ch)
                        for (int64_t iy = 0; iy < p; ++iy)
                            for (int64_t ix = 0; ix < p; ++ix) {
                                const int64_t tok = row * ppc + (ch * p + iy) * p + ix;
                                const int64_t lat = (((b * f + fi) * c + ch) * h + py * p + iy) *
                                                        w +
                                                    px * p + ix;
                                (*pi.fwd)[static_cast<size_t>(tok)] = lat;
                                (*pi.inv)[static_cast<size_t>(lat)] = tok;
                            }
                }
    return pi;
}

}  // namespace

Var Model::forward(ag::Tape& tape, const Tensor& noised_target, const Tensor& source,
                   const Tensor& cams, const std::vector<int>& desc,
                   const std::vector<double>& t, bool conditioned, Bindings* bind) const {
    const int64_t S = cfg.s(), fs = static_cast<int64_t>(cfg.f) * S;
    const int64_t ppc = static_cast<int64_t>(cfg.p) * cfg.p * cfg.c;
    if (noised_target.ndim() != 5 || noised_target.dim(1) != cfg.f ||
        noised_target.dim(2) != cfg.c || noised_target.dim(3) != cfg.h ||
        noised_target.dim(4) != cfg.w)
        throw ShapeError("forward: noised target must be [B, f, c, h, w]");
    const int64_t B = noised_target.dim(0);
    if (static_cast<int64_t>(t.size()) != B || static_cast<int64_t>(desc.size()) != B * cfg.desc_len)
        throw ShapeError("forward: batch size mismatch in t or descriptor");
    if (!noised_target.all_finite()) throw NumericError("forward: non-finite noised target");
    for (double ti : t)
        if (!std::isfinite(ti)) throw NumericError("forward: non-finite timestep");
    if (conditioned) {
        if (!source.same_shape(noised_target)) throw ShapeError("forward: source shape mismatch");
        if (cams.ndim() != 3 || cams.dim(0) != B || cams.dim(1) != cfg.f || cams.dim(2) != 12)
            throw ShapeError("forward: cams must be [B, f, 12]");
        if (!source.all_finite() || !cams.all_finite())
            throw NumericError("forward: non-finite conditioning input");
    }

    Bindings local;
    Bindings& bd = bind ? *bind : local;
    auto P = [&](const std::string& name) {
        auto it = bd.vars.find(name);
        if (it != bd.vars.end()) return it->second;
        const bool req = !bd.trainable || bd.trainable(name);
        Var v = tape.leaf(params.at(name), req);
        bd.vars.emplace(name, v);
        return v;
    };
    const PatchIndex pidx = patch_index(cfg, B);
    const int64_t rows_per = cfg.rows_per_sample(conditioned);
    const int64_t rows_total = B * rows_per;

    Var proj_w = P("patch_proj.w"), proj_b = P("patch_proj.b");
    Var xt_rows = ag::gather(tape.leaf(noised_target), {B * fs, ppc}, pidx.fwd);
    Var tokens_t = ag::linear(xt_rows, proj_w, proj_b);

    Var x;
    if (!conditioned) {
        x = tokens_t;
    } else if (cfg.mode == CondMode::ChannelDim) {
        Var xs_rows = ag::gather(tape.leaf(source), {B * fs, ppc}, pidx.fwd);
        x = ag::add(tokens_t, ag::linear(xs_rows, P("patch_proj_src.w")));
    } else {
        Var xs_rows = ag::gather(tape.leaf(source), {B * fs, ppc}, pidx.fwd);
        Var tokens_s = ag::linear(xs_rows, proj_w, proj_b);
        x = ag::concat_rows(tokens_s, tokens_t, fs, fs);  // source half first
    }

    // Role embedding disambiguates the two halves/streams.
    if (conditioned && cfg.mode != CondMode::ChannelDim) {
        auto role_map = std::make_shared<std::vector<int>>(static_cast<size_t>(rows_total));
        for (int64_t i = 0; i < rows_total; ++i)
            (*role_map)[static_cast<size_t>(i)] = (i % rows_per) < fs ? 0 : 1;
        x = ag::add_mapped(x, P("role_embed"), role_map);
    }

    {
        Var pe = tape.leaf(positional_table(cfg, conditioned));
        auto pe_map = std::make_shared<std::vector<int>>(static_cast<size_t>(rows_total));
        for (int64_t i = 0; i < rows_total; ++i)
            (*pe_map)[static_cast<size_t>(i)] = static_cast<int>(i % rows_per);
        x = ag::add_mapped(x, pe, pe_map);
    }

    Var temb = tape.leaf(time_embedding(t, cfg.d));
    auto norm = [&](Var v, const std::string& nm) {
        return ag::rms_scaled(v, P(nm + ".g"), ag::linear(temb, P(nm + ".tw")));
    };
    auto attn_out = [&](Var q_src, Var kv_src, const std::string& nm, int n_seg) {
        Var q = ag::linear(q_src, P(nm + ".wq"));
        Var k = ag::linear(kv_src, P(nm + ".wk"));
        Var v = ag::linear(kv_src, P(nm + ".wv"));
        return ag::linear(ag::attention(q, k, v, cfg.heads, n_seg), P(nm + ".wo"));
    };

    // Camera embedding rows, one per (sample, frame); zero rows at init make
    // the whole injection a no-op.
    Var cam_e;
    std::shared_ptr<std::vector<int>> cam_map;
    if (conditioned) {
        cam_e = ag::linear(tape.leaf(cams.reshape({B * cfg.f, 12})), P("cam_enc.w"),
                           P("cam_enc.b"));
        cam_map = std::make_shared<std::vector<int>>(static_cast<size_t>(rows_total));
        for (int64_t i = 0; i < rows_total; ++i) {
            const int64_t b = i / rows_per, r = i % rows_per, slot = r / S;
            int m = -1;
            if (cfg.mode == CondMode::ChannelDim)
                m = static_cast<int>(b * cfg.f + slot);
            else if (slot >= cfg.f)  // target half / target stream
                m = static_cast<int>(b * cfg.f + (slot - cfg.f));
            (*cam_map)[static_cast<size_t>(i)] = m;
        }
    }

    // View attention couples the two streams per frame; tokens are regrouped
    // (sample, frame, stream, patch) for its segments.
    std::shared_ptr<std::vector<int64_t>> view_perm, view_inv;
    if (conditioned && cfg.mode == CondMode::ViewDim) {
        view_perm = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(rows_total));
        view_inv = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(rows_total));
        for (int64_t b = 0; b < B; ++b)
            for (int64_t st = 0; st < 2; ++st)
                for (int64_t fi = 0; fi < cfg.f; ++fi)
                    for (int64_t sp = 0; sp < S; ++sp) {
                        const int64_t packed = b * rows_per + (st * cfg.f + fi) * S + sp;
                        const int64_t grouped = b * rows_per + (fi * 2 + st) * S + sp;
                        (*view_perm)[static_cast<size_t>(grouped)] = packed;
                        (*view_inv)[static_cast<size_t>(packed)] = grouped;
                    }
    }

    const int nseg_sp = static_cast<int>(rows_total / S);
    const int nseg_3d = static_cast<int>(
        conditioned && cfg.mode == CondMode::ViewDim ? 2 * B : B);
    Var desc_e = ag::embed(P("desc_embed"), std::make_shared<const std::vector<int>>(desc));

    for (int i = 0; i < cfg.depth; ++i) {
        const std::string pre = block_tag(i);
        {
            Var xn = norm(x, pre + "spatial.norm");
            x = ag::add(x, attn_out(xn, xn, pre + "spatial", nseg_sp));
        }
        if (conditioned) x = ag::add_mapped(x, cam_e, cam_map);
        {
            Var xn = norm(x, pre + "attn3d.norm");
            x = ag::add(x, attn_out(xn, xn, pre + "attn3d", nseg_3d));
        }
        if (conditioned && cfg.mode == CondMode::ViewDim) {
            Var xn = ag::permute_rows(norm(x, pre + "view.norm"), view_perm);
            Var o = attn_out(xn, xn, pre + "view", static_cast<int>(B * cfg.f));
            x = ag::add(x, ag::permute_rows(o, view_inv));
        }
        {
            Var q = ag::linear(norm(x, pre + "cross.norm"), P(pre + "cross.wq"));
            Var k = ag::linear(desc_e, P(pre + "cross.wk"));
            Var v = ag::linear(desc_e, P(pre + "cross.wv"));
            Var o = ag::linear(ag::attention(q, k, v, cfg.heads, static_cast<int>(B)),
                               P(pre + "cross.wo"));
            x = ag::add(x, o);
        }
        {
            Var xn = norm(x, pre + "ffn.norm");
            Var hdn = ag::gelu(ag::linear(xn, P(pre + "ffn.w1"), P(pre + "ffn.b1")));
            x = ag::add(x, ag::linear(hdn, P(pre + "ffn.w2"), P(pre + "ffn.b2")));
        }
    }

    Var y = x;
    if (conditioned && cfg.mode != CondMode::ChannelDim)
        y = ag::slice_rows(y, rows_per, fs, fs);  // target half / stream only
    y = norm(y, "final.norm");
    y = ag::linear(y, P("readout.w"), P("readout.b"));
    return ag::gather(y, {B, cfg.f, cfg.c, cfg.h, cfg.w}, pidx.inv);
}

Tensor Model::predict(const Tensor& noised_target, const Tensor& source, const Tensor& cams,
                      const std::vector<int>& desc, double t, bool conditioned) const {
    Tape tape(false);
    const Tensor nt = noised_target.ndim() == 4
                          ? noised_target.reshape({1, cfg.f, cfg.c, cfg.h, cfg.w})
                          : noised_target;
    const Tensor src = conditioned && source.ndim() == 4
                           ? source.reshape({1, cfg.f, cfg.c, cfg.h, cfg.w})
                           : source;
    const Tensor cm = conditioned && cams.ndim() == 2 ? cams.reshape({1, cfg.f, 12}) : cams;
    Var out = forward(tape, nt, src, cm, desc, {t}, conditioned);
    return out.val().reshape(noised_target.shape());
}

Tensor Model::camera_encode(const Tensor& cams) const {
    if (cams.ndim() != 2 || cams.dim(1) != 12)
        throw ShapeError("camera_encode: input must be [f, 12]");
    const Tensor& w = params.at("cam_enc.w");
    const Tensor& b = params.at("cam_enc.b");
    const int64_t n = cams.dim(0), d = cfg.d;
    Tensor out({n, d});
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < d; ++j) {
            double acc = b[j];
            for (int64_t k = 0; k < 12; ++k) acc += w[j * 12 + k] * cams[i * 12 + k];
            out[i * d + j] = acc;
        }
    return out;
}

}  // namespace camflow::model
