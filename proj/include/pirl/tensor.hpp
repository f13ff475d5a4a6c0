#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "pirl/common.hpp"

namespace pirl::nn {

// Dense row-major tensor of up to 3 axes with a gradient slot managed by the
// tape. All values are doubles; the networks here are small enough that
// precision beats throughput.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> v;

    Tensor() = default;
    Tensor(std::vector<std::size_t> s, std::vector<double> data) : shape(std::move(s)), v(std::move(data)) {
        if (v.size() != count(shape)) throw DimensionError("Tensor: data does not match shape");
    }

    static std::size_t count(const std::vector<std::size_t>& s) {
        std::size_t n = 1;
        for (std::size_t d : s) n *= d;
        return n;
    }

    static Tensor zeros(std::vector<std::size_t> s) {
        Tensor t;
        t.shape = std::move(s);
        t.v.assign(count(t.shape), 0.0);
        return t;
    }

    static Tensor scalar(double x) { return Tensor({1}, {x}); }
    static Tensor vec(std::vector<double> data) {
        std::size_t n = data.size();
        return Tensor({n}, std::move(data));
    }

    std::size_t size() const { return v.size(); }
    double& operator[](std::size_t i) { return v[i]; }
    double operator[](std::size_t i) const { return v[i]; }
};

inline std::string shape_str(const std::vector<std::size_t>& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

inline void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape != b.shape)
        throw DimensionError(std::string(op) + ": shape " + shape_str(a.shape) + " vs " +
                             shape_str(b.shape));
}

class Tape;

// Lightweight handle to a tape node.
struct Var {
    Tape* tape = nullptr;
    int id = -1;

    bool valid() const { return tape != nullptr && id >= 0; }
    const Tensor& value() const;
    Tensor& grad() const;
};

// Append-only computation record. Parents always precede children, so the
// backward sweep is a single reverse pass. Parameter leaves carry a pointer
// to external gradient storage that the sweep accumulates into at the end.
class Tape {
public:
    struct Node {
        Tensor value;
        Tensor grad;
        std::function<void(Tape&)> backward;  // empty for leaves
        Tensor* external_grad = nullptr;
    };

    Var constant(Tensor t) { return push(std::move(t), nullptr, nullptr); }

    // Leaf bound to a parameter: the forward value is copied in, gradients
    // flow back into `grad_accum` after the sweep.
    Var param(const Tensor& value, Tensor& grad_accum) {
        check_same_shape("param", value, grad_accum);
        return push(value, nullptr, &grad_accum);
    }

    Var make(Tensor value, std::function<void(Tape&)> bw) {
        return push(std::move(value), std::move(bw), nullptr);
    }

    Node& node(int id) { return nodes_[static_cast<std::size_t>(id)]; }
    const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
    std::size_t size() const { return nodes_.size(); }

    // Adds g into the node's gradient seed. Call before backward(); several
    // seeds may be planted (reward-head gradient plus auxiliary losses).
    void seed(const Var& v, const Tensor& g) {
        Node& n = node(v.id);
        check_same_shape("seed", n.grad, g);
        for (std::size_t i = 0; i < g.size(); ++i) n.grad.v[i] += g.v[i];
    }

    void seed_scalar(const Var& v, double g) {
        Node& n = node(v.id);
        if (n.value.size() != 1) throw DimensionError("seed_scalar: node is not a scalar");
        n.grad.v[0] += g;
    }

    // Reverse sweep; afterwards parameter leaves have pushed their gradients
    // into the bound external accumulators.
    void backward() {
        for (std::size_t i = nodes_.size(); i-- > 0;) {
            Node& n = nodes_[i];
            if (n.backward) n.backward(*this);
        }
        for (Node& n : nodes_) {
            if (!n.external_grad) continue;
            for (std::size_t i = 0; i < n.grad.size(); ++i) n.external_grad->v[i] += n.grad.v[i];
        }
    }

private:
    Var push(Tensor value, std::function<void(Tape&)> bw, Tensor* ext) {
        Node n;
        n.grad = Tensor::zeros(value.shape);
        n.value = std::move(value);
        n.backward = std::move(bw);
        n.external_grad = ext;
        nodes_.push_back(std::move(n));
        return Var{this, static_cast<int>(nodes_.size()) - 1};
    }

    std::vector<Node> nodes_;
};

inline const Tensor& Var::value() const { return tape->node(id).value; }
inline Tensor& Var::grad() const { return tape->node(id).grad; }

// ---- primitive operations ------------------------------------------------

inline Var add(const Var& a, const Var& b) {
    check_same_shape("add", a.value(), b.value());
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out.v[i] += b.value().v[i];
    Var v = a.tape->make(std::move(out), nullptr);
    int ia = a.id, ib = b.id, io = v.id;
    a.tape->node(v.id).backward = [ia, ib, io](Tape& t) {
        const Tensor& g = t.node(io).grad;
        Tensor& ga = t.node(ia).grad;
        Tensor& gb = t.node(ib).grad;
        for (std::size_t i = 0; i < g.size(); ++i) {
            ga.v[i] += g.v[i];
            gb.v[i] += g.v[i];
        }
    };
    return v;
}

inline Var sub(const Var& a, const Var& b) {
    check_same_shape("sub", a.value(), b.value());
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out.v[i] -= b.value().v[i];
    Var v = a.tape->make(std::move(out), nullptr);
    int ia = a.id, ib = b.id, io = v.id;
    a.tape->node(v.id).backward = [ia, ib, io](Tape& t) {
        const Tensor& g = t.node(io).grad;
        for (std::size_t i = 0; i < g.size(); ++i) {
            t.node(ia).grad.v[i] += g.v[i];
            t.node(ib).grad.v[i] -= g.v[i];
        }
    };
    return v;
}

inline Var mul(const Var& a, const Var& b) {
    check_same_shape("mul", a.value(), b.value());
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out.v[i] *= b.value().v[i];
    Var v = a.tape->make(std::move(out), nullptr);
    int ia = a.id, ib = b.id, io = v.id;
    a.tape->node(v.id).backward = [ia, ib, io](Tape& t) {
        const Tensor& g = t.node(io).grad;
        const Tensor& av = t.node(ia).value;
        const Tensor& bv = t.node(ib).value;
        for (std::size_t i = 0; i < g.size(); ++i) {
            t.node(ia).grad.v[i] += g.v[i] * bv.v[i];
            t.node(ib).grad.v[i] += g.v[i] * av.v[i];
        }
    };
    return v;
}

inline Var scale(const Var& a, double c) {
    Tensor out = a.value();
    for (double& x : out.v) x *= c;
    Var v = a.tape->make(std::move(out), nullptr);
    int ia = a.id, io = v.id;
    a.tape->node(v.id).backward = [ia, io, c](Tape& t) {
        const Tensor& g = t.node(io).grad;
        for (std::size_t i = 0; i < g.size(); ++i) t.node(ia).grad.v[i] += c * g.v[i];
    };
    return v;
}

// Broadcast multiply by a [1] scalar variable (the learned attention scalar).
inline Var scalar_mul(const Var& s, const Var& a) {
    if (s.value().size() != 1) throw DimensionError("scalar_mul: scale must be [1], got " +
                                                    shape_str(s.value().shape));
    Tensor out = a.value();
    const double sv = s.value().v[0];
    for (double& x : out.v) x *= sv;
    Var v = a.tape->make(std::move(out), nullptr);
    int is = s.id, ia = a.id, io = v.id;
    a.tape->node(v.id).backward = [is, ia, io](Tape& t) {
        const Tensor& g = t.node(io).grad;
        const Tensor& av = t.node(ia).value;
        const double sv2 = t.node(is).value.v[0];
        double ds = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) {
            t.node(ia).grad.v[i] += sv2 * g.v[i];
            ds += av.v[i] * g.v[i];
        }
        t.node(is).grad.v[0] += ds;
    };
    return v;
}

// W [m,n] times x [n] -> [m].
inline Var matvec(const Var& w, const Var& x) {
    const Tensor& wv = w.value();
    const Tensor& xv = x.value();
    if (wv.shape.size() != 2 || xv.shape.size() != 1 || wv.shape[1] != xv.shape[0])
        throw DimensionError("matvec: " + shape_str(wv.shape) + " vs " + shape_str(xv.shape));
    const std::size_t m = wv.shape[0], n = wv.shape[1];
    Tensor out = Tensor::zeros({m});
    for (std::size_t i = 0; i < m; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) acc += wv.v[i * n + j] * xv.v[j];
        out.v[i] = acc;
    }
    Var v = w.tape->make(std::move(out), nullptr);
    int iw = w.id, ix = x.id, io = v.id;
    w.tape->node(v.id).backward = [iw, ix, io, m, n](Tape& t) {
        const Tensor& g = t.node(io).grad;
        const Tensor& wv2 = t.node(iw).value;
        const Tensor& xv2 = t.node(ix).value;
        for (std::size_t i = 0; i < m; ++i) {
            const double gi = g.v[i];
            for (std::size_t j = 0; j < n; ++j) {
                t.node(iw).grad.v[i * n + j] += gi * xv2.v[j];
                t.node(ix).grad.v[j] += gi * wv2.v[i * n + j];
            }
        }
    };
    return v;
}

// Fully-connected layer: W x + b.
inline Var fully_connected(const Var& x, const Var& w, const Var& b) {
    return add(matvec(w, x), b);
}

namespace detail {

template <typename Fwd, typename Grad>
Var unary(const Var& a, Fwd f, Grad df, const char* /*name*/) {
    Tensor out = a.value();
    for (double& x : out.v) x = f(x);
    Var v = a.tape->make(std::move(out), nullptr);
    int ia = a.id, io = v.id;
    a.tape->node(v.id).backward = [ia, io, df](Tape& t) {
        const Tensor& g = t.node(io).grad;
        const Tensor& x = t.node(ia).value;
        const Tensor& y = t.node(io).value;
        for (std::size_t i = 0; i < g.size(); ++i)
            t.node(ia).grad.v[i] += g.v[i] * df(x.v[i], y.v[i]);
    };
    return v;
}

}  // namespace detail

inline Var relu(const Var& a) {
    return detail::unary(
        a, [](double x) { return x > 0.0 ? x : 0.0; },
        [](double x, double) { return x > 0.0 ? 1.0 : 0.0; }, "relu");
}

inline Var tanh(const Var& a) {
    return detail::unary(
        a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; },
        "tanh");
}

inline Var sigmoid(const Var& a) {
    return detail::unary(
        a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
        [](double, double y) { return y * (1.0 - y); }, "sigmoid");
}

// Numerically safe softplus, the non-negative output transform of theta.
inline Var softplus(const Var& a) {
    return detail::unary(
        a,
        [](double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); },
        [](double x, double) { return 1.0 / (1.0 + std::exp(-x)); }, "softplus");
}

// conv1d: x [Cin, L], w [Cout, Cin, k], b [Cout]; zero padding `pad`.
inline Var conv1d(const Var& x, const Var& w, const Var& b, int stride = 1, int pad = 0) {
    const Tensor& xv = x.value();
    const Tensor& wv = w.value();
    const Tensor& bv = b.value();
    if (xv.shape.size() != 2 || wv.shape.size() != 3 || wv.shape[1] != xv.shape[0])
        throw DimensionError("conv1d: input " + shape_str(xv.shape) + " vs kernel " +
                             shape_str(wv.shape));
    const long cin = static_cast<long>(xv.shape[0]);
    const long len = static_cast<long>(xv.shape[1]);
    const long cout = static_cast<long>(wv.shape[0]);
    const long k = static_cast<long>(wv.shape[2]);
    if (bv.shape.size() != 1 || static_cast<long>(bv.shape[0]) != cout)
        throw DimensionError("conv1d: bias " + shape_str(bv.shape) + " vs kernel " +
                             shape_str(wv.shape));
    const long lout = (len + 2 * pad - k) / stride + 1;
    if (lout < 1) throw DimensionError("conv1d: kernel longer than padded input");

    Tensor out = Tensor::zeros({static_cast<std::size_t>(cout), static_cast<std::size_t>(lout)});
    for (long co = 0; co < cout; ++co) {
        for (long j = 0; j < lout; ++j) {
            double acc = bv.v[static_cast<std::size_t>(co)];
            for (long ci = 0; ci < cin; ++ci) {
                for (long tk = 0; tk < k; ++tk) {
                    const long src = j * stride + tk - pad;
                    if (src < 0 || src >= len) continue;
                    acc += wv.v[static_cast<std::size_t>((co * cin + ci) * k + tk)] *
                           xv.v[static_cast<std::size_t>(ci * len + src)];
                }
            }
            out.v[static_cast<std::size_t>(co * lout + j)] = acc;
        }
    }
    Var v = x.tape->make(std::move(out), nullptr);
    int ix = x.id, iw = w.id, ib = b.id, io = v.id;
    x.tape->node(v.id).backward = [=](Tape& t) {
        const Tensor& g = t.node(io).grad;
        const Tensor& xv2 = t.node(ix).value;
        const Tensor& wv2 = t.node(iw).value;
        for (long co = 0; co < cout; ++co) {
            for (long j = 0; j < lout; ++j) {
                const double gj = g.v[static_cast<std::size_t>(co * lout + j)];
                t.node(ib).grad.v[static_cast<std::size_t>(co)] += gj;
                for (long ci = 0; ci < cin; ++ci) {
                    for (long tk = 0; tk < k; ++tk) {
                        const long src = j * stride + tk - pad;
                        if (src < 0 || src >= len) continue;
                        t.node(iw).grad.v[static_cast<std::size_t>((co * cin + ci) * k + tk)] +=
                            gj * xv2.v[static_cast<std::size_t>(ci * len + src)];
                        t.node(ix).grad.v[static_cast<std::size_t>(ci * len + src)] +=
                            gj * wv2.v[static_cast<std::size_t>((co * cin + ci) * k + tk)];
                    }
                }
            }
        }
    };
    return v;
}

// avgpool1d over the last axis: x [C, L] -> [C, (L - k)/stride + 1].
inline Var avgpool1d(const Var& x, int k, int stride) {
    const Tensor& xv = x.value();
    if (xv.shape.size() != 2) throw DimensionError("avgpool1d: need [C,L], got " + shape_str(xv.shape));
    const long c = static_cast<long>(xv.shape[0]);
    const long len = static_cast<long>(xv.shape[1]);
    const long lout = (len - k) / stride + 1;
    if (lout < 1) throw DimensionError("avgpool1d: window longer than input");
    Tensor out = Tensor::zeros({static_cast<std::size_t>(c), static_cast<std::size_t>(lout)});
    for (long ci = 0; ci < c; ++ci)
        for (long j = 0; j < lout; ++j) {
            double acc = 0.0;
            for (long tk = 0; tk < k; ++tk) acc += xv.v[static_cast<std::size_t>(ci * len + j * stride + tk)];
            out.v[static_cast<std::size_t>(ci * lout + j)] = acc / static_cast<double>(k);
        }
    Var v = x.tape->make(std::move(out), nullptr);
    int ix = x.id, io = v.id;
    x.tape->node(v.id).backward = [=](Tape& t) {
        const Tensor& g = t.node(io).grad;
        for (long ci = 0; ci < c; ++ci)
            for (long j = 0; j < lout; ++j) {
                const double gj = g.v[static_cast<std::size_t>(ci * lout + j)] / static_cast<double>(k);
                for (long tk = 0; tk < k; ++tk)
                    t.node(ix).grad.v[static_cast<std::size_t>(ci * len + j * stride + tk)] += gj;
            }
    };
    return v;
}

// Mean over the last axis: [C, L] -> [C].
inline Var mean_time(const Var& x) {
    const Tensor& xv = x.value();
    if (xv.shape.size() != 2) throw DimensionError("mean_time: need [C,L], got " + shape_str(xv.shape));
    const std::size_t c = xv.shape[0], len = xv.shape[1];
    Tensor out = Tensor::zeros({c});
    for (std::size_t ci = 0; ci < c; ++ci) {
        double acc = 0.0;
        for (std::size_t j = 0; j < len; ++j) acc += xv.v[ci * len + j];
        out.v[ci] = acc / static_cast<double>(len);
    }
    Var v = x.tape->make(std::move(out), nullptr);
    int ix = x.id, io = v.id;
    x.tape->node(v.id).backward = [ix, io, c, len](Tape& t) {
        const Tensor& g = t.node(io).grad;
        for (std::size_t ci = 0; ci < c; ++ci) {
            const double gj = g.v[ci] / static_cast<double>(len);
            for (std::size_t j = 0; j < len; ++j) t.node(ix).grad.v[ci * len + j] += gj;
        }
    };
    return v;
}

// Concatenation of 1-D vectors.
inline Var concat(const std::vector<Var>& parts) {
    if (parts.empty()) throw DimensionError("concat: no inputs");
    std::size_t total = 0;
    for (const Var& p : parts) {
        if (p.value().shape.size() != 1) throw DimensionError("concat: inputs must be 1-D");
        total += p.value().size();
    }
    Tensor out = Tensor::zeros({total});
    std::size_t off = 0;
    std::vector<int> ids;
    std::vector<std::size_t> offsets;
    for (const Var& p : parts) {
        offsets.push_back(off);
        ids.push_back(p.id);
        for (std::size_t i = 0; i < p.value().size(); ++i) out.v[off + i] = p.value().v[i];
        off += p.value().size();
    }
    Var v = parts[0].tape->make(std::move(out), nullptr);
    int io = v.id;
    parts[0].tape->node(v.id).backward = [ids, offsets, io](Tape& t) {
        const Tensor& g = t.node(io).grad;
        for (std::size_t pi = 0; pi < ids.size(); ++pi) {
            Tensor& gp = t.node(ids[pi]).grad;
            for (std::size_t i = 0; i < gp.size(); ++i) gp.v[i] += g.v[offsets[pi] + i];
        }
    };
    return v;
}

// Contiguous 1-D slice.
inline Var slice(const Var& x, std::size_t begin, std::size_t len) {
    const Tensor& xv = x.value();
    if (xv.shape.size() != 1 || begin + len > xv.shape[0])
        throw DimensionError("slice: [" + std::to_string(begin) + "," + std::to_string(begin + len) +
                             ") out of " + shape_str(xv.shape));
    Tensor out = Tensor::zeros({len});
    for (std::size_t i = 0; i < len; ++i) out.v[i] = xv.v[begin + i];
    Var v = x.tape->make(std::move(out), nullptr);
    int ix = x.id, io = v.id;
    x.tape->node(v.id).backward = [ix, io, begin, len](Tape& t) {
        const Tensor& g = t.node(io).grad;
        for (std::size_t i = 0; i < len; ++i) t.node(ix).grad.v[begin + i] += g.v[i];
    };
    return v;
}

inline Var reshape(const Var& x, std::vector<std::size_t> shape) {
    if (Tensor::count(shape) != x.value().size())
        throw DimensionError("reshape: " + shape_str(x.value().shape) + " to " + shape_str(shape));
    Tensor out{std::move(shape), x.value().v};
    Var v = x.tape->make(std::move(out), nullptr);
    int ix = x.id, io = v.id;
    x.tape->node(v.id).backward = [ix, io](Tape& t) {
        const Tensor& g = t.node(io).grad;
        for (std::size_t i = 0; i < g.size(); ++i) t.node(ix).grad.v[i] += g.v[i];
    };
    return v;
}

// Stack 1-D vectors of equal length into [n, d].
inline Var stack_rows(const std::vector<Var>& rows) {
    if (rows.empty()) throw DimensionError("stack_rows: no inputs");
    const std::size_t d = rows[0].value().size();
    Tensor out = Tensor::zeros({rows.size(), d});
    std::vector<int> ids;
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].value().size() != d || rows[r].value().shape.size() != 1)
            throw DimensionError("stack_rows: row " + std::to_string(r) + " has shape " +
                                 shape_str(rows[r].value().shape));
        ids.push_back(rows[r].id);
        for (std::size_t i = 0; i < d; ++i) out.v[r * d + i] = rows[r].value().v[i];
    }
    Var v = rows[0].tape->make(std::move(out), nullptr);
    int io = v.id;
    rows[0].tape->node(v.id).backward = [ids, d, io](Tape& t) {
        const Tensor& g = t.node(io).grad;
        for (std::size_t r = 0; r < ids.size(); ++r)
            for (std::size_t i = 0; i < d; ++i) t.node(ids[r]).grad.v[i] += g.v[r * d + i];
    };
    return v;
}

inline Var transpose2d(const Var& x) {
    const Tensor& xv = x.value();
    if (xv.shape.size() != 2) throw DimensionError("transpose2d: need 2-D, got " + shape_str(xv.shape));
    const std::size_t m = xv.shape[0], n = xv.shape[1];
    Tensor out = Tensor::zeros({n, m});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out.v[j * m + i] = xv.v[i * n + j];
    Var v = x.tape->make(std::move(out), nullptr);
    int ix = x.id, io = v.id;
    x.tape->node(v.id).backward = [ix, io, m, n](Tape& t) {
        const Tensor& g = t.node(io).grad;
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) t.node(ix).grad.v[i * n + j] += g.v[j * m + i];
    };
    return v;
}

// Masked softmax over a 1-D vector; entries with valid[i] == false get
// probability exactly 0 and receive no gradient.
inline Var softmax(const Var& x, const std::vector<bool>& valid = {}) {
    const Tensor& xv = x.value();
    if (xv.shape.size() != 1) throw DimensionError("softmax: need 1-D, got " + shape_str(xv.shape));
    const std::size_t n = xv.shape[0];
    std::vector<bool> mask = valid.empty() ? std::vector<bool>(n, true) : valid;
    if (mask.size() != n) throw DimensionError("softmax: mask length mismatch");
    double m = -1e300;
    bool any = false;
    for (std::size_t i = 0; i < n; ++i)
        if (mask[i]) {
            m = std::max(m, xv.v[i]);
            any = true;
        }
    if (!any) throw DimensionError("softmax: empty mask");
    Tensor out = Tensor::zeros({n});
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        if (mask[i]) {
            out.v[i] = std::exp(xv.v[i] - m);
            z += out.v[i];
        }
    for (std::size_t i = 0; i < n; ++i) out.v[i] /= z;
    Var v = x.tape->make(std::move(out), nullptr);
    int ix = x.id, io = v.id;
    x.tape->node(v.id).backward = [ix, io, mask, n](Tape& t) {
        const Tensor& g = t.node(io).grad;
        const Tensor& p = t.node(io).value;
        double dot = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            if (mask[i]) dot += g.v[i] * p.v[i];
        for (std::size_t i = 0; i < n; ++i)
            if (mask[i]) t.node(ix).grad.v[i] += p.v[i] * (g.v[i] - dot);
    };
    return v;
}

// weights [n] . rows of H [n, d] -> [d]; gradients flow to both factors.
inline Var attend(const Var& weights, const Var& h) {
    const Tensor& wv = weights.value();
    const Tensor& hv = h.value();
    if (wv.shape.size() != 1 || hv.shape.size() != 2 || wv.shape[0] != hv.shape[0])
        throw DimensionError("attend: " + shape_str(wv.shape) + " vs " + shape_str(hv.shape));
    const std::size_t n = hv.shape[0], d = hv.shape[1];
    Tensor out = Tensor::zeros({d});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) out.v[j] += wv.v[i] * hv.v[i * d + j];
    Var v = weights.tape->make(std::move(out), nullptr);
    int iw = weights.id, ih = h.id, io = v.id;
    weights.tape->node(v.id).backward = [iw, ih, io, n, d](Tape& t) {
        const Tensor& g = t.node(io).grad;
        const Tensor& wv2 = t.node(iw).value;
        const Tensor& hv2 = t.node(ih).value;
        for (std::size_t i = 0; i < n; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                acc += g.v[j] * hv2.v[i * d + j];
                t.node(ih).grad.v[i * d + j] += wv2.v[i] * g.v[j];
            }
            t.node(iw).grad.v[i] += acc;
        }
    };
    return v;
}

inline Var dot(const Var& a, const Var& b) {
    check_same_shape("dot", a.value(), b.value());
    double acc = 0.0;
    for (std::size_t i = 0; i < a.value().size(); ++i) acc += a.value().v[i] * b.value().v[i];
    Var v = a.tape->make(Tensor::scalar(acc), nullptr);
    int ia = a.id, ib = b.id, io = v.id;
    a.tape->node(v.id).backward = [ia, ib, io](Tape& t) {
        const double g = t.node(io).grad.v[0];
        const Tensor& av = t.node(ia).value;
        const Tensor& bv = t.node(ib).value;
        for (std::size_t i = 0; i < av.size(); ++i) {
            t.node(ia).grad.v[i] += g * bv.v[i];
            t.node(ib).grad.v[i] += g * av.v[i];
        }
    };
    return v;
}

inline Var sum(const Var& a) {
    double acc = 0.0;
    for (double x : a.value().v) acc += x;
    Var v = a.tape->make(Tensor::scalar(acc), nullptr);
    int ia = a.id, io = v.id;
    a.tape->node(v.id).backward = [ia, io](Tape& t) {
        const double g = t.node(io).grad.v[0];
        for (double& gx : t.node(ia).grad.v) gx += g;
    };
    return v;
}

// One step of a gated recurrent cell with hidden and memory state, composed
// from primitives so backpropagation through time falls out of the tape.
struct LstmState {
    Var h;
    Var c;
};

inline LstmState recurrent_cell_step(const Var& x, const LstmState& prev, const Var& w_ih,
                                     const Var& w_hh, const Var& bias) {
    const std::size_t hidden = prev.h.value().size();
    Var z = add(add(matvec(w_ih, x), matvec(w_hh, prev.h)), bias);
    if (z.value().size() != 4 * hidden)
        throw DimensionError("recurrent_cell_step: gate vector " + shape_str(z.value().shape) +
                             " for hidden size " + std::to_string(hidden));
    Var i_gate = sigmoid(slice(z, 0, hidden));
    Var f_gate = sigmoid(slice(z, hidden, hidden));
    Var g_gate = tanh(slice(z, 2 * hidden, hidden));
    Var o_gate = sigmoid(slice(z, 3 * hidden, hidden));
    LstmState next;
    next.c = add(mul(f_gate, prev.c), mul(i_gate, g_gate));
    next.h = mul(o_gate, tanh(next.c));
    return next;
}

}  // namespace pirl::nn
