#include "camflow/autograd.hpp"

#include <cmath>

#include <Eigen/Dense>

#include "camflow/errors.hpp"

namespace camflow::ag {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using MapC = Eigen::Map<const MatRM>;

const Tensor& Var::val() const { return tape->value(id); }

int64_t col_count(const Tensor& t) {
    if (t.shape().empty()) throw ShapeError("op needs a non-scalar tensor");
    return t.shape().back();
}

int64_t row_count(const Tensor& t) { return t.numel() / col_count(t); }

namespace {

MapC cmap(const Tensor& t) { return MapC(t.ptr(), row_count(t), col_count(t)); }
MapM mmap(Tensor& t) { return MapM(t.ptr(), row_count(t), col_count(t)); }

void check_same_tape(Var a, Var b) {
    if (a.tape != b.tape) throw ConfigError("op mixes variables from different tapes");
}

}  // namespace

Var Tape::leaf(const Tensor& value, bool requires_grad) {
    nodes_.push_back(Node{value, Tensor(), nullptr, enabled_ && requires_grad});
    return Var{this, static_cast<int>(nodes_.size()) - 1};
}

int Tape::push(Tensor value, bool needs, std::function<void()> back) {
    const bool n = enabled_ && needs;
    nodes_.push_back(Node{std::move(value), Tensor(), n ? std::move(back) : nullptr, n});
    return static_cast<int>(nodes_.size()) - 1;
}

Tensor& Tape::grad(int id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.grad.numel() == 0) n.grad = Tensor::zeros(n.value.shape());
    return n.grad;
}

bool Tape::grad_touched(int id) const { return nodes_[static_cast<size_t>(id)].grad.numel() != 0; }

void Tape::backward(const Var& loss) {
    if (loss.tape != this) throw ConfigError("backward on a foreign tape");
    if (value(loss.id).numel() != 1) throw ShapeError("backward needs a scalar loss");
    grad(loss.id)[0] += 1.0;
    for (int id = loss.id; id >= 0; --id) {
        Node& n = nodes_[static_cast<size_t>(id)];
        if (n.needs && n.back && n.grad.numel() != 0) n.back();
    }
}

Var add(Var a, Var b) {
    check_same_tape(a, b);
    Tape* tp = a.tape;
    const Tensor& av = a.val();
    const Tensor& bv = b.val();
    if (av.shape() != bv.shape()) throw ShapeError("add: shape mismatch");
    Tensor out(av.shape());
    for (int64_t i = 0; i < av.numel(); ++i) out[i] = av[i] + bv[i];
    const int aid = a.id, bid = b.id;
    const int oid = static_cast<int>(tp->size());
    tp->push(std::move(out), tp->needs(aid) || tp->needs(bid), [tp, aid, bid, oid]() {
        const Tensor& go = tp->grad(oid);
        for (int pid : {aid, bid}) {
            if (!tp->needs(pid)) continue;
            Tensor& gp = tp->grad(pid);
            for (int64_t i = 0; i < go.numel(); ++i) gp[i] += go[i];
        }
    });
    return Var{tp, oid};
}

Var scale(Var a, double s) {
    Tape* tp = a.tape;
    const Tensor& av = a.val();
    Tensor out(av.shape());
    for (int64_t i = 0; i < av.numel(); ++i) out[i] = av[i] * s;
    const int aid = a.id;
    const int oid = static_cast<int>(tp->size());
    tp->push(std::move(out), tp->needs(aid), [tp, aid, oid, s]() {
        const Tensor& go = tp->grad(oid);
        Tensor& ga = tp->grad(aid);
        for (int64_t i = 0; i < go.numel(); ++i) ga[i] += go[i] * s;
    });
    return Var{tp, oid};
}

namespace {

Var linear_impl(Var x, Var w, const Var* b) {
    check_same_tape(x, w);
    Tape* tp = x.tape;
    const Tensor& xv = x.val();
    const Tensor& wv = w.val();
    const int64_t n = row_count(xv), in = col_count(xv);
    const int64_t out_dim = row_count(wv);
    if (col_count(wv) != in) throw ShapeError("linear: weight/input width mismatch");
    Tensor out({n, out_dim});
    mmap(out).noalias() = cmap(xv) * cmap(wv).transpose();
    if (b) {
        const Tensor& bv = b->val();
        if (bv.numel() != out_dim) throw ShapeError("linear: bias width mismatch");
        mmap(out).rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bv.ptr(), out_dim);
    }
    const int xid = x.id, wid = w.id, bid = b ? b->id : -1;
    const bool needs = tp->needs(xid) || tp->needs(wid) || (bid >= 0 && tp->needs(bid));
    const int oid = static_cast<int>(tp->size());
    tp->push(std::move(out), needs, [tp, xid, wid, bid, oid]() {
        const Tensor& go = tp->grad(oid);
        MapC g = cmap(go);
        if (tp->needs(xid)) mmap(tp->grad(xid)).noalias() += g * cmap(tp->value(wid));
        if (tp->needs(wid))
            mmap(tp->grad(wid)).noalias() += g.transpose() * cmap(tp->value(xid));
        if (bid >= 0 && tp->needs(bid)) {
            Tensor& gb = tp->grad(bid);
            Eigen::Map<Eigen::RowVectorXd>(gb.ptr(), gb.numel()) += g.colwise().sum();
        }
    });
    return Var{tp, oid};
}

}  // namespace

Var linear(Var x, Var w) { return linear_impl(x, w, nullptr); }

Var linear(Var x, Var w, Var b) {
    check_same_tape(x, b);
    return linear_impl(x, w, &b);
}

namespace {
constexpr double kGeluA = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluB = 0.044715;
}  // namespace

Var gelu(Var x) {
    Tape* tp = x.tape;
    const Tensor& xv = x.val();
    Tensor out(xv.shape());
    for (int64_t i = 0; i < xv.numel(); ++i) {
        const double v = xv[i];
        out[i] = 0.5 * v * (1.0 + std::tanh(kGeluA * (v + kGeluB * v * v * v)));
    }
    const int xid = x.id;
    const int oid = static_cast<int>(tp->size());
    tp->push(std::move(out), tp->needs(xid), [tp, xid, oid]() {
        const Tensor& go = tp->grad(oid);
        const Tensor& xv2 = tp->value(xid);
        Tensor& gx = tp->grad(xid);
        for (int64_t i = 0; i < xv2.numel(); ++i) {
            const double v = xv2[i];
            const double t = std::tanh(kGeluA * (v + kGeluB * v * v * v));
            const double d =
                0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * kGeluA * (1.0 + 3.0 * kGeluB * v * v);
            gx[i] += go[i] * d;
        }
    });
    return Var{tp, oid};
}

Var rms_scaled(Var x, Var g, Var s, double eps) {
    check_same_tape(x, g);
    check_same_tape(x, s);
    Tape* tp = x.tape;
    const Tensor& xv = x.val();
    const Tensor& gv = g.val();
    const Tensor& sv = s.val();
    const int64_t n = row_count(xv), d = col_count(xv);
    if (gv.numel() != d) throw ShapeError("rms_scaled: gain width mismatch");
    if (col_count(sv) != d || n % row_count(sv) != 0)
        throw ShapeError("rms_scaled: scale rows must divide input rows");
    const int64_t rows_per_sample = n / row_count(sv);

    Tensor out(xv.shape());
    for (int64_t i = 0; i < n; ++i) {
        double ss = 0.0;
        const double* xr = xv.ptr() + i * d;
        for (int64_t j = 0; j < d; ++j) ss += xr[j] * xr[j];
        const double inv = 1.0 / std::sqrt(ss / static_cast<double>(d) + eps);
        const double* sr = sv.ptr() + (i / rows_per_sample) * d;
        double* yr = out.ptr() + i * d;
        for (int64_t j = 0; j < d; ++j) yr[j] = xr[j] * inv * gv[j] * (1.0 + sr[j]);
    }
    const int xid = x.id, gid = g.id, sid = s.id;
    const bool needs = tp->needs(xid) || tp->needs(gid) || tp->needs(sid);
    const int oid = static_cast<int>(tp->size());
    tp->push(std::move(out), needs, [tp, xid, gid, sid, oid, eps, rows_per_sample]() {
        const Tensor& go = tp->grad(oid);
        const Tensor& xv2 = tp->value(xid);
        const Tensor& gv2 = tp->value(gid);
        const Tensor& sv2 = tp->value(sid);
        const int64_t n2 = row_count(xv2), d2 = col_count(xv2);
        const bool wx = tp->needs(xid), wg = tp->needs(gid), ws = tp->needs(sid);
        double* gx = wx ? tp->grad(xid).ptr() : nullptr;
        double* gg = wg ? tp->grad(gid).ptr() : nullptr;
        double* gs = ws ? tp->grad(sid).ptr() : nullptr;
        for (int64_t i = 0; i < n2; ++i) {
            const double* xr = xv2.ptr() + i * d2;
            const double* gor = go.ptr() + i * d2;
            const double* sr = sv2.ptr() + (i / rows_per_sample) * d2;
            double ss = 0.0;
            for (int64_t j = 0; j < d2; ++j) ss += xr[j] * xr[j];
            const double inv = 1.0 / std::sqrt(ss / static_cast<double>(d2) + eps);
            if (wx) {
                // dL/dx_k = go_k m_k inv - x_k inv^3 / d * sum_j go_j m_j x_j,
                // with m_j = g_j (1 + s_j).
                double dot = 0.0;
                for (int64_t j = 0; j < d2; ++j) dot += gor[j] * gv2[j] * (1.0 + sr[j]) * xr[j];
                const double coef = dot * inv * inv * inv / static_cast<double>(d2);
                for (int64_t j = 0; j < d2; ++j)
                    gx[i * d2 + j] += gor[j] * gv2[j] * (1.0 + sr[j]) * inv - xr[j] * coef;
            }
            if (wg)
                for (int64_t j = 0; j < d2; ++j) gg[j] += gor[j] * xr[j] * inv * (1.0 + sr[j]);
            if (ws) {
                double* gsr = gs + (i / rows_per_sample) * d2;
                for (int64_t j = 0; j < d2; ++j) gsr[j] += gor[j] * xr[j] * inv * gv2[j];
            }
        }
    });
    return Var{tp, oid};
}

Var attention(Var q, Var k, Var v, int heads, int n_seg) {
    check_same_tape(q, k);
    check_same_tape(q, v);
    Tape* tp = q.tape;
    const Tensor& qv = q.val();
    const Tensor& kv = k.val();
    const Tensor& vv = v.val();
    const int64_t d = col_count(qv);
    if (col_count(kv) != d || col_count(vv) != d)
        throw ShapeError("attention: channel mismatch");
    if (heads < 1 || d % heads != 0) throw ShapeError("attention: heads must divide channels");
    if (n_seg < 1 || row_count(qv) % n_seg != 0 || row_count(kv) % n_seg != 0 ||
        row_count(kv) != row_count(vv))
        throw ShapeError("attention: rows must split into uniform segments");
    const int64_t ql = row_count(qv) / n_seg;
    const int64_t kl = row_count(kv) / n_seg;
    const int64_t hd = d / heads;
    const double sc = 1.0 / std::sqrt(static_cast<double>(hd));

    Tensor out(qv.shape());
    const int qid = q.id, kid = k.id, vid = v.id;
    const bool needs = tp->needs(qid) || tp->needs(kid) || tp->needs(vid);
    // Probabilities are the only retained intermediate.
    Tensor probs = needs ? Tensor({static_cast<int64_t>(n_seg) * heads, ql, kl}) : Tensor({1});

    MapC qm = cmap(qv), km = cmap(kv), vm = cmap(vv);
    MapM om = mmap(out);
    MatRM scores(ql, kl);
    for (int g = 0; g < n_seg; ++g) {
        for (int h = 0; h < heads; ++h) {
            auto qb = qm.block(g * ql, h * hd, ql, hd);
            auto kb = km.block(g * kl, h * hd, kl, hd);
            auto vb = vm.block(g * kl, h * hd, kl, hd);
            scores.noalias() = sc * (qb * kb.transpose());
            for (int64_t r = 0; r < ql; ++r) {
                double mx = scores(r, 0);
                for (int64_t c2 = 1; c2 < kl; ++c2) mx = std::max(mx, scores(r, c2));
                double sum = 0.0;
                for (int64_t c2 = 0; c2 < kl; ++c2) {
                    const double e = std::exp(scores(r, c2) - mx);
                    scores(r, c2) = e;
                    sum += e;
                }
                const double invs = 1.0 / sum;
                for (int64_t c2 = 0; c2 < kl; ++c2) scores(r, c2) *= invs;
            }
            om.block(g * ql, h * hd, ql, hd).noalias() = scores * vb;
            if (needs)
                MapM(probs.ptr() + (static_cast<int64_t>(g) * heads + h) * ql * kl, ql, kl) =
                    scores;
        }
    }

    const int oid = static_cast<int>(tp->size());
    tp->push(std::move(out), needs,
             [tp, qid, kid, vid, oid, probs, heads, n_seg, ql, kl, hd, sc]() {
                 const Tensor& go = tp->grad(oid);
                 MapC gom = cmap(go);
                 MapC qm2 = cmap(tp->value(qid));
                 MapC km2 = cmap(tp->value(kid));
                 MapC vm2 = cmap(tp->value(vid));
                 const bool wq = tp->needs(qid), wk = tp->needs(kid), wv = tp->needs(vid);
                 MapM gq = wq ? mmap(tp->grad(qid)) : MapM(nullptr, 0, 0);
                 MapM gk = wk ? mmap(tp->grad(kid)) : MapM(nullptr, 0, 0);
                 MapM gv = wv ? mmap(tp->grad(vid)) : MapM(nullptr, 0, 0);
                 MatRM dp(ql, kl), ds(ql, kl);
                 for (int g = 0; g < n_seg; ++g) {
                     for (int h = 0; h < heads; ++h) {
                         MapC p(probs.ptr() + (static_cast<int64_t>(g) * heads + h) * ql * kl,
                                ql, kl);
                         auto gob = gom.block(g * ql, h * hd, ql, hd);
                         auto vb = vm2.block(g * kl, h * hd, kl, hd);
                         if (wv) gv.block(g * kl, h * hd, kl, hd).noalias() += p.transpose() * gob;
                         if (!wq && !wk) continue;
                         dp.noalias() = gob * vb.transpose();
                         for (int64_t r = 0; r < ql; ++r) {
                             const double rowdot = dp.row(r).cwiseProduct(p.row(r)).sum();
                             ds.row(r) =
                                 (p.row(r).array() * (dp.row(r).array() - rowdot)).matrix();
                         }
                         auto qb = qm2.block(g * ql, h * hd, ql, hd);
                         auto kb = km2.block(g * kl, h * hd, kl, hd);
                         if (wq) gq.block(g * ql, h * hd, ql, hd).noalias() += sc * (ds * kb);
                         if (wk)
                             gk.block(g * kl, h * hd, kl, hd).noalias() +=
                                 sc * (ds.transpose() * qb);
                     }
                 }
             });
    return Var{tp, oid};
}

Var embed(Var table, std::shared_ptr<const std::vector<int>> idx) {
    Tape* tp = table.tape;
    const Tensor& tv = table.val();
    const int64_t vocab = row_count(tv), d = col_count(tv);
    const int64_t n = static_cast<int64_t>(idx->size());
    Tensor out({n, d});
    for (int64_t i = 0; i < n; ++i) {
        const int t = (*idx)[static_cast<size_t>(i)];
        if (t < 0 || t >= vocab) throw BoundsError("embed: token out of vocabulary");
        std::copy_n(tv.ptr() + t * d, d, out.ptr() + i * d);
    }
    const int tid = table.id;
    const int oid = static_cast<int>(tp->size());
    tp->push(std::move(out), tp->needs(tid), [tp, tid, oid, idx, d]() {
        const Tensor& go = tp->grad(oid);
        Tensor& gt = tp->grad(tid);
        for (size_t i = 0; i < idx->size(); ++i) {
            double* dst = gt.ptr() + static_cast<int64_t>((*idx)[i]) * d;
            const double* src = go.ptr() + static_cast<int64_t>(i) * d;
            for (int64_t j = 0; j < d; ++j) dst[j] += src[j];
        }
    });
    return Var{tp, oid};
}

Var gather(Var x, std::vector<int64_t> out_shape,
           std::shared_ptr<const std::vector<int64_t>> idx) {
    Tape* tp = x.tape;
    const Tensor& xv = x.val();
    Tensor out(out_shape);
    if (out.numel() != static_cast<int64_t>(idx->size()))
        throw ShapeError("gather: index count must match output size");
    for (int64_t i = 0; i < out.numel(); ++i) {
        const int64_t src = (*idx)[static_cast<size_t>(i)];
        if (src < 0 || src >= xv.numel()) throw BoundsError("gather: index out of range");
        out[i] = xv[src];
    }
    const int xid = x.id;
    const int oid = static_cast<int>(tp->size());
    tp->push(std::move(out), tp->needs(xid), [tp, xid, oid, idx]() {
        const Tensor& go = tp->grad(oid);
        Tensor& gx = tp->grad(xid);
        for (int64_t i = 0; i < go.numel(); ++i) gx[(*idx)[static_cast<size_t>(i)]] += go[i];
    });
    return Var{tp, oid};
}

Var concat_rows(Var a, Var b, int64_t ga, int64_t gb) {
    check_same_tape(a, b);
    Tape* tp = a.tape;
    const Tensor& av = a.val();
    const Tensor& bv = b.val();
    const int64_t d = col_count(av);
    if (col_count(bv) != d) throw ShapeError("concat_rows: channel mismatch");
    if (ga < 1 || gb < 1 || row_count(av) % ga != 0 || row_count(bv) % gb != 0 ||
        row_count(av) / ga != row_count(bv) / gb)
        throw ShapeError("concat_rows: group counts differ");
    const int64_t groups = row_count(av) / ga;
    Tensor out({groups * (ga + gb), d});
    for (int64_t g = 0; g < groups; ++g) {
        std::copy_n(av.ptr() + g * ga * d, ga * d, out.ptr() + g * (ga + gb) * d);
        std::copy_n(bv.ptr() + g * gb * d, gb * d, out.ptr() + (g * (ga + gb) + ga) * d);
    }
    const int aid = a.id, bid = b.id;
    const int oid = static_cast<int>(tp->size());
    tp->push(std::move(out), tp->needs(aid) || tp->needs(bid),
             [tp, aid, bid, oid, ga, gb, groups, d]() {
                 const Tensor& go = tp->grad(oid);
                 if (tp->needs(aid)) {
                     Tensor& gx = tp->grad(aid);
                     for (int64_t g = 0; g < groups; ++g)
                         for (int64_t i = 0; i < ga * d; ++i)
                             gx[g * ga * d + i] += go[g * (ga + gb) * d + i];
                 }
                 if (tp->needs(bid)) {
                     Tensor& gx = tp->grad(bid);
                     for (int64_t g = 0; g < groups; ++g)
                         for (int64_t i = 0; i < gb * d; ++i)
                             gx[g * gb * d + i] += go[(g * (ga + gb) + ga) * d + i];
                 }
             });
    return Var{tp, oid};
}

Var slice_rows(Var x, int64_t group, int64_t offset, int64_t count) {
    Tape* tp = x.tape;
    const Tensor& xv = x.val();
    const int64_t d = col_count(xv);
    if (group < 1 || row_count(xv) % group != 0 || offset < 0 || count < 1 ||
        offset + count > group)
        throw ShapeError("slice_rows: bad group slice");
    const int64_t groups = row_count(xv) / group;
    Tensor out({groups * count, d});
    for (int64_t g = 0; g < groups; ++g)
        std::copy_n(xv.ptr() + (g * group + offset) * d, count * d, out.ptr() + g * count * d);
    const int xid = x.id;
    const int oid = static_cast<int>(tp->size());
    tp->push(std::move(out), tp->needs(xid), [tp, xid, oid, group, offset, count, groups, d]() {
        const Tensor& go = tp->grad(oid);
        Tensor& gx = tp->grad(xid);
        for (int64_t g = 0; g < groups; ++g)
            for (int64_t i = 0; i < count * d; ++i)
                gx[(g * group + offset) * d + i] += go[g * count * d + i];
    });
    return Var{tp, oid};
}

Var permute_rows(Var x, std::shared_ptr<const std::vector<int64_t>> perm) {
    Tape* tp = x.tape;
    const Tensor& xv = x.val();
    const int64_t d = col_count(xv);
    const int64_t n = row_count(xv);
    if (static_cast<int64_t>(perm->size()) != n) throw ShapeError("permute_rows: size mismatch");
    Tensor out(xv.shape());
    for (int64_t i = 0; i < n; ++i) {
        const int64_t src = (*perm)[static_cast<size_t>(i)];
        if (src < 0 || src >= n) throw BoundsError("permute_rows: index out of range");
        std::copy_n(xv.ptr() + src * d, d, out.ptr() + i * d);
    }
    const int xid = x.id;
    const int oid = static_cast<int>(tp->size());
    tp->push(std::move(out), tp->needs(xid), [tp, xid, oid, perm, d]() {
        const Tensor& go = tp->grad(oid);
        Tensor& gx = tp->grad(xid);
        for (size_t i = 0; i < perm->size(); ++i) {
            double* dst = gx.ptr() + (*perm)[i] * d;
            const double* src = go.ptr() + static_cast<int64_t>(i) * d;
            for (int64_t j = 0; j < d; ++j) dst[j] += src[j];
        }
    });
    return Var{tp, oid};
}

Var add_mapped(Var x, Var e, std::shared_ptr<const std::vector<int>> map) {
    check_same_tape(x, e);
    Tape* tp = x.tape;
    const Tensor& xv = x.val();
    const Tensor& ev = e.val();
    const int64_t d = col_count(xv);
    const int64_t n = row_count(xv);
    if (col_count(ev) != d) throw ShapeError("add_mapped: channel mismatch");
    if (static_cast<int64_t>(map->size()) != n) throw ShapeError("add_mapped: map size mismatch");
    const int64_t erows = row_count(ev);
    Tensor out = xv.clone();
    for (int64_t i = 0; i < n; ++i) {
        const int m = (*map)[static_cast<size_t>(i)];
        if (m < 0) continue;
        if (m >= erows) throw BoundsError("add_mapped: map index out of range");
        double* dst = out.ptr() + i * d;
        const double* src = ev.ptr() + static_cast<int64_t>(m) * d;
        for (int64_t j = 0; j < d; ++j) dst[j] += src[j];
    }
    const int xid = x.id, eid = e.id;
    const int oid = static_cast<int>(tp->size());
    tp->push(std::move(out), tp->needs(xid) || tp->needs(eid), [tp, xid, eid, oid, map, d]() {
        const Tensor& go = tp->grad(oid);
        if (tp->needs(xid)) {
            Tensor& gx = tp->grad(xid);
            for (int64_t i = 0; i < go.numel(); ++i) gx[i] += go[i];
        }
        if (tp->needs(eid)) {
            Tensor& ge = tp->grad(eid);
            for (size_t i = 0; i < map->size(); ++i) {
                const int m = (*map)[i];
                if (m < 0) continue;
                double* dst = ge.ptr() + static_cast<int64_t>(m) * d;
                const double* src = go.ptr() + static_cast<int64_t>(i) * d;
                for (int64_t j = 0; j < d; ++j) dst[j] += src[j];
            }
        }
    });
    return Var{tp, oid};
}

Var mse_to(Var x, Tensor target) {
    Tape* tp = x.tape;
    const Tensor& xv = x.val();
    if (xv.numel() != target.numel()) throw ShapeError("mse_to: size mismatch");
    double acc = 0.0;
    for (int64_t i = 0; i < xv.numel(); ++i) {
        const double diff = xv[i] - target[i];
        acc += diff * diff;
    }
    Tensor out({1});
    out[0] = acc / static_cast<double>(xv.numel());
    const int xid = x.id;
    const int oid = static_cast<int>(tp->size());
    tp->push(std::move(out), tp->needs(xid), [tp, xid, oid, target]() {
        const double g = tp->grad(oid)[0];
        const Tensor& xv2 = tp->value(xid);
        Tensor& gx = tp->grad(xid);
        const double c = 2.0 * g / static_cast<double>(xv2.numel());
        for (int64_t i = 0; i < xv2.numel(); ++i) gx[i] += c * (xv2[i] - target[i]);
    });
    return Var{tp, oid};
}

}  // namespace camflow::ag
