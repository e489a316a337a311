#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "camflow/tensor.hpp"

namespace camflow::ag {

class Tape;

// Handle to a tape slot. Copyable; valid until the tape is cleared.
struct Var {
    Tape* tape = nullptr;
    int id = -1;

    bool defined() const { return tape != nullptr && id >= 0; }
    const Tensor& val() const;
};

// Reverse-mode tape. Single-threaded; ops append nodes, backward() walks
// them once in reverse. With grad disabled, ops still produce values but
// record no closures and keep no intermediates.
class Tape {
  public:
    explicit Tape(bool grad_enabled = true) : enabled_(grad_enabled) {}

    Var leaf(const Tensor& value, bool requires_grad = false);
    int push(Tensor value, bool needs, std::function<void()> back);

    const Tensor& value(int id) const { return nodes_[static_cast<size_t>(id)].value; }
    bool needs(int id) const { return nodes_[static_cast<size_t>(id)].needs; }
    Tensor& grad(int id);                 // zeros on first access
    bool grad_touched(int id) const;

    // Seeds d(loss)/d(loss) = 1 and accumulates into every reachable node.
    void backward(const Var& loss);

    void clear() { nodes_.clear(); }
    size_t size() const { return nodes_.size(); }
    bool grad_enabled() const { return enabled_; }

  private:
    struct Node {
        Tensor value;
        Tensor grad;  // empty until touched
        std::function<void()> back;
        bool needs = false;
    };
    std::vector<Node> nodes_;
    bool enabled_;
};

// Ops treat a tensor as rows x cols with cols = trailing dimension.
int64_t row_count(const Tensor& t);
int64_t col_count(const Tensor& t);

Var add(Var a, Var b);
Var scale(Var a, double s);

// x [n, in] @ w [out, in]^T (+ b [out]) -> [n, out]
Var linear(Var x, Var w);
Var linear(Var x, Var w, Var b);

Var gelu(Var x);  // tanh form

// Row-wise RMS norm with channel gain and per-sample channel scale:
// y[i,j] = x[i,j] / rms(x[i,:]) * g[j] * (1 + s[sample(i),j]).
// sample(i) = i / (rows(x) / rows(s)).
Var rms_scaled(Var x, Var g, Var s, double eps = 1e-6);

// Fused multi-head attention over n_seg independent uniform segments.
// q: [n_seg*ql, d], k/v: [n_seg*kl, d]. Keeps only the softmax probabilities
// for backward. Heads split the channel dimension.
Var attention(Var q, Var k, Var v, int heads, int n_seg);

// Row lookup y[i,:] = table[idx[i],:].
Var embed(Var table, std::shared_ptr<const std::vector<int>> idx);

// Element gather y.flat[i] = x.flat[idx[i]]; backward scatter-adds.
Var gather(Var x, std::vector<int64_t> out_shape,
           std::shared_ptr<const std::vector<int64_t>> idx);

// Groupwise row concatenation: per group, ga rows of a then gb rows of b.
Var concat_rows(Var a, Var b, int64_t ga, int64_t gb);

// Per group of `group` rows, keep rows [offset, offset+count).
Var slice_rows(Var x, int64_t group, int64_t offset, int64_t count);

// y.row(i) = x.row(perm[i]).
Var permute_rows(Var x, std::shared_ptr<const std::vector<int64_t>> perm);

// y.row(i) = x.row(i) + (map[i] >= 0 ? e.row(map[i]) : 0).
Var add_mapped(Var x, Var e, std::shared_ptr<const std::vector<int>> map);

// Mean squared error against a constant target (scalar output).
Var mse_to(Var x, Tensor target);

}  // namespace camflow::ag
