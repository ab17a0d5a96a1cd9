#pragma once

// Minimal reverse-mode tensor core: exactly the ops the architecture needs,
// recorded on a tape with explicit per-op backward closures. Templated on the
// scalar type so the same graph builders run in float for training and in
// double for finite-difference gradient checks.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <numbers>
#include <string>
#include <vector>

#include <json.hpp>

#include "pyroprop/errors.hpp"
#include "pyroprop/rng.hpp"
#include "pyroprop/version.hpp"

namespace pyroprop {

template <typename T>
struct Tensor {
    int n = 0, c = 0, h = 0, w = 0;
    std::vector<T> v;

    Tensor() = default;
    Tensor(int n_, int c_, int h_, int w_, T fill = T(0))
        : n(n_), c(c_), h(h_), w(w_),
          v(static_cast<std::size_t>(n_) * c_ * h_ * w_, fill) {
        if (n_ <= 0 || c_ <= 0 || h_ <= 0 || w_ <= 0)
            throw InvalidShape("tensor dimensions must be positive");
    }
    static Tensor scalar(T x) {
        Tensor t(1, 1, 1, 1);
        t.v[0] = x;
        return t;
    }

    std::size_t size() const { return v.size(); }
    bool same_shape(const Tensor& o) const {
        return n == o.n && c == o.c && h == o.h && w == o.w;
    }
    std::size_t index(int i, int ch, int y, int x) const {
        return ((static_cast<std::size_t>(i) * c + ch) * h + y) * w + x;
    }
    T& at(int i, int ch, int y, int x) { return v[index(i, ch, y, x)]; }
    T at(int i, int ch, int y, int x) const { return v[index(i, ch, y, x)]; }
    T* plane(int i, int ch) {
        return v.data() + (static_cast<std::size_t>(i) * c + ch) * h * w;
    }
    const T* plane(int i, int ch) const {
        return v.data() + (static_cast<std::size_t>(i) * c + ch) * h * w;
    }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> o;
        o.n = n, o.c = c, o.h = h, o.w = w;
        o.v.resize(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) o.v[i] = static_cast<U>(v[i]);
        return o;
    }
};

template <typename T>
struct Parameter {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad; // empty until first use; shaped like value afterwards
    bool trainable = true;

    Parameter() = default;
    Parameter(std::string name_, Tensor<T> v, bool trainable_ = true)
        : name(std::move(name_)), value(std::move(v)), trainable(trainable_) {}

    void ensure_grad() {
        if (!grad.same_shape(value)) {
            grad = value;
            std::fill(grad.v.begin(), grad.v.end(), T(0));
        }
    }
    void zero_grad() {
        ensure_grad();
        std::fill(grad.v.begin(), grad.v.end(), T(0));
    }
};

// Fixed-order kernels. The reductions are manually split into four lanes so
// they vectorize without fast-math while staying run-to-run identical.
template <typename T>
inline void axpy(T a, const T* x, T* y, int len) {
    for (int i = 0; i < len; ++i) y[i] += a * x[i];
}

template <typename T>
inline T dot(const T* a, const T* b, int len) {
    T s0 = 0, s1 = 0, s2 = 0, s3 = 0;
    int i = 0;
    for (; i + 4 <= len; i += 4) {
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
    }
    for (; i < len; ++i) s0 += a[i] * b[i];
    return (s0 + s1) + (s2 + s3);
}

template <typename T>
inline T vsum(const T* a, int len) {
    T s0 = 0, s1 = 0, s2 = 0, s3 = 0;
    int i = 0;
    for (; i + 4 <= len; i += 4) {
        s0 += a[i];
        s1 += a[i + 1];
        s2 += a[i + 2];
        s3 += a[i + 3];
    }
    for (; i < len; ++i) s0 += a[i];
    return (s0 + s1) + (s2 + s3);
}

template <typename T>
class Tape;

template <typename T>
struct Var {
    Tape<T>* tape = nullptr;
    int id = -1;

    const Tensor<T>& val() const;
    Tensor<T>& grad() const;
};

template <typename T>
class Tape {
  public:
    struct Node {
        Tensor<T> val;
        Tensor<T> grad;
        std::function<void(Tape&)> back; // null for leaves
    };

    Var<T> make(Tensor<T> value) {
        const int nn = value.n, cc = value.c, hh = value.h, ww = value.w;
        nodes_.push_back({std::move(value), Tensor<T>(nn, cc, hh, ww), nullptr});
        return {this, static_cast<int>(nodes_.size() - 1)};
    }

    Var<T> input(Tensor<T> value) { return make(std::move(value)); }

    Var<T> param(Parameter<T>& p) {
        p.ensure_grad();
        Var<T> v = make(p.value);
        Parameter<T>* pp = &p;
        const int id = v.id;
        nodes_[id].back = [id, pp](Tape& t) {
            const Tensor<T>& g = t.node(id).grad;
            for (std::size_t i = 0; i < g.v.size(); ++i) pp->grad.v[i] += g.v[i];
        };
        return v;
    }

    Node& node(int id) { return nodes_[id]; }
    const Node& node(int id) const { return nodes_[id]; }

    // seeds d(loss)=1 and runs every recorded backward in reverse order
    void backward(Var<T> loss) {
        if (loss.tape != this) throw InvalidInput("backward: var from another tape");
        if (node(loss.id).val.size() != 1)
            throw InvalidShape("backward expects a scalar loss");
        node(loss.id).grad.v[0] = T(1);
        for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i)
            if (nodes_[i].back) nodes_[i].back(*this);
    }

    void clear() { nodes_.clear(); }
    std::size_t size() const { return nodes_.size(); }

  private:
    std::vector<Node> nodes_;
};

template <typename T>
const Tensor<T>& Var<T>::val() const {
    return tape->node(id).val;
}
template <typename T>
Tensor<T>& Var<T>::grad() const {
    return tape->node(id).grad;
}

namespace detail {

template <typename T>
void check_same_tape(Var<T> a, Var<T> b) {
    if (a.tape != b.tape) throw InvalidInput("op arguments recorded on different tapes");
}

inline void conv_ox_range(int kx, int pad, int stride, int in_w, int out_w, int& ox0,
                          int& ox1) {
    // valid ox satisfy 0 <= ox*stride + kx - pad < in_w
    ox0 = kx >= pad ? 0 : (pad - kx + stride - 1) / stride;
    ox1 = std::min(out_w, (in_w - 1 - kx + pad) / stride + 1);
}

} // namespace detail

// ---------------------------------------------------------------------------
// conv2d: cross-correlation with zero padding

template <typename T>
Var<T> conv2d(Var<T> x, Var<T> w, Var<T> b, int stride = 1, int pad = 1) {
    detail::check_same_tape(x, w);
    detail::check_same_tape(x, b);
    const Tensor<T>& X = x.val();
    const Tensor<T>& W = w.val();
    const Tensor<T>& B = b.val();
    if (W.h != W.w) throw InvalidShape("conv2d: non-square kernel");
    const int k = W.h;
    if (W.c != X.c) throw InvalidShape("conv2d: weight/input channel mismatch");
    if (B.n != 1 || B.c != W.n || B.h != 1 || B.w != 1)
        throw InvalidShape("conv2d: bias must be shaped (1, out_channels, 1, 1)");
    if (stride < 1 || pad < 0) throw InvalidShape("conv2d: bad stride or padding");
    if (X.h + 2 * pad < k || X.w + 2 * pad < k)
        throw InvalidShape("conv2d: kernel does not fit padded input");

    const int oh = (X.h + 2 * pad - k) / stride + 1;
    const int ow = (X.w + 2 * pad - k) / stride + 1;
    Tensor<T> out(X.n, W.n, oh, ow);

    for (int i = 0; i < X.n; ++i) {
        for (int oc = 0; oc < W.n; ++oc) {
            T* op = out.plane(i, oc);
            std::fill(op, op + static_cast<std::size_t>(oh) * ow, B.v[oc]);
            for (int ic = 0; ic < X.c; ++ic) {
                const T* ip = X.plane(i, ic);
                const T* wp = W.plane(oc, ic);
                for (int ky = 0; ky < k; ++ky) {
                    for (int kx = 0; kx < k; ++kx) {
                        const T wv = wp[ky * k + kx];
                        int ox0, ox1;
                        detail::conv_ox_range(kx, pad, stride, X.w, ow, ox0, ox1);
                        for (int oy = 0; oy < oh; ++oy) {
                            const int iy = oy * stride + ky - pad;
                            if (iy < 0 || iy >= X.h) continue;
                            const T* irow =
                                ip + static_cast<std::size_t>(iy) * X.w + (kx - pad);
                            T* orow = op + static_cast<std::size_t>(oy) * ow;
                            if (stride == 1)
                                axpy(wv, irow + ox0, orow + ox0, ox1 - ox0);
                            else
                                for (int ox = ox0; ox < ox1; ++ox)
                                    orow[ox] += wv * irow[ox * stride];
                        }
                    }
                }
            }
        }
    }

    Var<T> o = x.tape->make(std::move(out));
    const int oid = o.id, xid = x.id, wid = w.id, bid = b.id;
    o.tape->node(oid).back = [oid, xid, wid, bid, stride, pad, k](Tape<T>& t) {
        const Tensor<T>& GY = t.node(oid).grad;
        const Tensor<T>& X = t.node(xid).val;
        const Tensor<T>& W = t.node(wid).val;
        Tensor<T>& GX = t.node(xid).grad;
        Tensor<T>& GW = t.node(wid).grad;
        Tensor<T>& GB = t.node(bid).grad;
        const int oh = GY.h, ow = GY.w;

        for (int i = 0; i < X.n; ++i) {
            for (int oc = 0; oc < W.n; ++oc) {
                const T* gyp = GY.plane(i, oc);
                GB.v[oc] += vsum(gyp, oh * ow);
                for (int ic = 0; ic < X.c; ++ic) {
                    const T* ip = X.plane(i, ic);
                    T* gxp = GX.plane(i, ic);
                    const T* wp = W.plane(oc, ic);
                    T* gwp = GW.plane(oc, ic);
                    for (int ky = 0; ky < k; ++ky) {
                        for (int kx = 0; kx < k; ++kx) {
                            const T wv = wp[ky * k + kx];
                            int ox0, ox1;
                            detail::conv_ox_range(kx, pad, stride, X.w, ow, ox0, ox1);
                            T acc = 0;
                            for (int oy = 0; oy < oh; ++oy) {
                                const int iy = oy * stride + ky - pad;
                                if (iy < 0 || iy >= X.h) continue;
                                const T* irow =
                                    ip + static_cast<std::size_t>(iy) * X.w + (kx - pad);
                                T* gxrow =
                                    gxp + static_cast<std::size_t>(iy) * X.w + (kx - pad);
                                const T* gyrow = gyp + static_cast<std::size_t>(oy) * ow;
                                if (stride == 1) {
                                    acc += dot(gyrow + ox0, irow + ox0, ox1 - ox0);
                                    axpy(wv, gyrow + ox0, gxrow + ox0, ox1 - ox0);
                                } else {
                                    for (int ox = ox0; ox < ox1; ++ox) {
                                        acc += gyrow[ox] * irow[ox * stride];
                                        gxrow[ox * stride] += wv * gyrow[ox];
                                    }
                                }
                            }
                            gwp[ky * k + kx] += acc;
                        }
                    }
                }
            }
        }
    };
    return o;
}

// ---------------------------------------------------------------------------
// pooling / reshapes

template <typename T>
Var<T> maxpool2(Var<T> x) {
    const Tensor<T>& X = x.val();
    if (X.h % 2 != 0 || X.w % 2 != 0)
        throw InvalidShape("maxpool2 requires even spatial dimensions");
    Tensor<T> out(X.n, X.c, X.h / 2, X.w / 2);
    std::vector<std::uint32_t> arg(out.size());
    std::size_t oi = 0;
    for (int i = 0; i < X.n; ++i)
        for (int ch = 0; ch < X.c; ++ch)
            for (int y = 0; y < out.h; ++y)
                for (int xo = 0; xo < out.w; ++xo, ++oi) {
                    std::size_t best = X.index(i, ch, 2 * y, 2 * xo);
                    T bv = X.v[best];
                    for (int dy = 0; dy < 2; ++dy)
                        for (int dx = 0; dx < 2; ++dx) {
                            const std::size_t ii = X.index(i, ch, 2 * y + dy, 2 * xo + dx);
                            if (X.v[ii] > bv) { // ties keep the first in scan order
                                bv = X.v[ii];
                                best = ii;
                            }
                        }
                    out.v[oi] = bv;
                    arg[oi] = static_cast<std::uint32_t>(best);
                }

    Var<T> o = x.tape->make(std::move(out));
    const int oid = o.id, xid = x.id;
    o.tape->node(oid).back = [oid, xid, arg = std::move(arg)](Tape<T>& t) {
        const Tensor<T>& GY = t.node(oid).grad;
        Tensor<T>& GX = t.node(xid).grad;
        for (std::size_t j = 0; j < GY.v.size(); ++j) GX.v[arg[j]] += GY.v[j];
    };
    return o;
}

// (C,H,W) -> (4C,H/2,W/2); out channel c*4 + dy*2 + dx takes in[c, 2y+dy, 2x+dx]
template <typename T>
Var<T> space_to_depth2(Var<T> x) {
    const Tensor<T>& X = x.val();
    if (X.h % 2 != 0 || X.w % 2 != 0)
        throw InvalidShape("space_to_depth2 requires even spatial dimensions");
    Tensor<T> out(X.n, X.c * 4, X.h / 2, X.w / 2);
    for (int i = 0; i < X.n; ++i)
        for (int ch = 0; ch < X.c; ++ch)
            for (int dy = 0; dy < 2; ++dy)
                for (int dx = 0; dx < 2; ++dx)
                    for (int y = 0; y < out.h; ++y)
                        for (int xo = 0; xo < out.w; ++xo)
                            out.at(i, ch * 4 + dy * 2 + dx, y, xo) =
                                X.at(i, ch, 2 * y + dy, 2 * xo + dx);

    Var<T> o = x.tape->make(std::move(out));
    const int oid = o.id, xid = x.id;
    o.tape->node(oid).back = [oid, xid](Tape<T>& t) {
        const Tensor<T>& GY = t.node(oid).grad;
        Tensor<T>& GX = t.node(xid).grad;
        for (int i = 0; i < GX.n; ++i)
            for (int ch = 0; ch < GX.c; ++ch)
                for (int dy = 0; dy < 2; ++dy)
                    for (int dx = 0; dx < 2; ++dx)
                        for (int y = 0; y < GY.h; ++y)
                            for (int xo = 0; xo < GY.w; ++xo)
                                GX.at(i, ch, 2 * y + dy, 2 * xo + dx) +=
                                    GY.at(i, ch * 4 + dy * 2 + dx, y, xo);
    };
    return o;
}

template <typename T>
Var<T> depth_to_space2(Var<T> x) {
    const Tensor<T>& X = x.val();
    if (X.c % 4 != 0) throw InvalidShape("depth_to_space2 requires channels divisible by 4");
    Tensor<T> out(X.n, X.c / 4, X.h * 2, X.w * 2);
    for (int i = 0; i < X.n; ++i)
        for (int ch = 0; ch < out.c; ++ch)
            for (int dy = 0; dy < 2; ++dy)
                for (int dx = 0; dx < 2; ++dx)
                    for (int y = 0; y < X.h; ++y)
                        for (int xo = 0; xo < X.w; ++xo)
                            out.at(i, ch, 2 * y + dy, 2 * xo + dx) =
                                X.at(i, ch * 4 + dy * 2 + dx, y, xo);

    Var<T> o = x.tape->make(std::move(out));
    const int oid = o.id, xid = x.id;
    o.tape->node(oid).back = [oid, xid](Tape<T>& t) {
        const Tensor<T>& GY = t.node(oid).grad;
        Tensor<T>& GX = t.node(xid).grad;
        for (int i = 0; i < GX.n; ++i)
            for (int ch = 0; ch < GY.c; ++ch)
                for (int dy = 0; dy < 2; ++dy)
                    for (int dx = 0; dx < 2; ++dx)
                        for (int y = 0; y < GX.h; ++y)
                            for (int xo = 0; xo < GX.w; ++xo)
                                GX.at(i, ch * 4 + dy * 2 + dx, y, xo) +=
                                    GY.at(i, ch, 2 * y + dy, 2 * xo + dx);
    };
    return o;
}

template <typename T>
Var<T> upsample_nearest2(Var<T> x) {
    const Tensor<T>& X = x.val();
    Tensor<T> out(X.n, X.c, X.h * 2, X.w * 2);
    for (int i = 0; i < X.n; ++i)
        for (int ch = 0; ch < X.c; ++ch)
            for (int y = 0; y < out.h; ++y) {
                const T* irow = X.plane(i, ch) + static_cast<std::size_t>(y / 2) * X.w;
                T* orow = out.plane(i, ch) + static_cast<std::size_t>(y) * out.w;
                for (int xo = 0; xo < out.w; ++xo) orow[xo] = irow[xo / 2];
            }

    Var<T> o = x.tape->make(std::move(out));
    const int oid = o.id, xid = x.id;
    o.tape->node(oid).back = [oid, xid](Tape<T>& t) {
        const Tensor<T>& GY = t.node(oid).grad;
        Tensor<T>& GX = t.node(xid).grad;
        for (int i = 0; i < GX.n; ++i)
            for (int ch = 0; ch < GX.c; ++ch)
                for (int y = 0; y < GX.h; ++y)
                    for (int xo = 0; xo < GX.w; ++xo) {
                        T s = 0;
                        for (int dy = 0; dy < 2; ++dy)
                            for (int dx = 0; dx < 2; ++dx)
                                s += GY.at(i, ch, 2 * y + dy, 2 * xo + dx);
                        GX.at(i, ch, y, xo) += s;
                    }
    };
    return o;
}

// ---------------------------------------------------------------------------
// activations

template <typename T>
Var<T> leaky_relu(Var<T> x, T alpha = T(0.3)) {
    const Tensor<T>& X = x.val();
    Tensor<T> out = X;
    for (auto& e : out.v)
        if (e < T(0)) e *= alpha;

    Var<T> o = x.tape->make(std::move(out));
    const int oid = o.id, xid = x.id;
    o.tape->node(oid).back = [oid, xid, alpha](Tape<T>& t) {
        const Tensor<T>& GY = t.node(oid).grad;
        const Tensor<T>& X = t.node(xid).val;
        Tensor<T>& GX = t.node(xid).grad;
        for (std::size_t i = 0; i < X.v.size(); ++i)
            GX.v[i] += X.v[i] < T(0) ? alpha * GY.v[i] : GY.v[i];
    };
    return o;
}

template <typename T>
Var<T> sigmoid(Var<T> x) {
    const Tensor<T>& X = x.val();
    Tensor<T> out = X;
    for (auto& e : out.v) e = T(1) / (T(1) + std::exp(-e));

    Var<T> o = x.tape->make(std::move(out));
    const int oid = o.id, xid = x.id;
    o.tape->node(oid).back = [oid, xid](Tape<T>& t) {
        const Tensor<T>& GY = t.node(oid).grad;
        const Tensor<T>& Y = t.node(oid).val;
        Tensor<T>& GX = t.node(xid).grad;
        for (std::size_t i = 0; i < Y.v.size(); ++i)
            GX.v[i] += GY.v[i] * Y.v[i] * (T(1) - Y.v[i]);
    };
    return o;
}

// ---------------------------------------------------------------------------
// layer C: fixed Sobel kernels, edge-replication padding, 2 outputs per input
// channel (x-edge then y-edge)

namespace detail {
inline constexpr int kSobelX[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
inline constexpr int kSobelY[3][3] = {{-1, -2, -1}, {0, 0, 0}, {1, 2, 1}};
}

template <typename T>
Var<T> sobel_edges(Var<T> x) {
    const Tensor<T>& X = x.val();
    if (X.h < 3 || X.w < 3) throw InvalidShape("sobel_edges requires at least 3x3 input");
    Tensor<T> out(X.n, X.c * 2, X.h, X.w);
    for (int i = 0; i < X.n; ++i)
        for (int ch = 0; ch < X.c; ++ch) {
            const T* ip = X.plane(i, ch);
            T* oxp = out.plane(i, 2 * ch);
            T* oyp = out.plane(i, 2 * ch + 1);
            for (int y = 0; y < X.h; ++y)
                for (int xo = 0; xo < X.w; ++xo) {
                    T gx = 0, gy = 0;
                    for (int dy = 0; dy < 3; ++dy) {
                        const int yy = std::clamp(y + dy - 1, 0, X.h - 1);
                        for (int dx = 0; dx < 3; ++dx) {
                            const int xx = std::clamp(xo + dx - 1, 0, X.w - 1);
                            const T v = ip[static_cast<std::size_t>(yy) * X.w + xx];
                            gx += T(detail::kSobelX[dy][dx]) * v;
                            gy += T(detail::kSobelY[dy][dx]) * v;
                        }
                    }
                    oxp[static_cast<std::size_t>(y) * X.w + xo] = gx;
                    oyp[static_cast<std::size_t>(y) * X.w + xo] = gy;
                }
        }

    Var<T> o = x.tape->make(std::move(out));
    const int oid = o.id, xid = x.id;
    o.tape->node(oid).back = [oid, xid](Tape<T>& t) {
        const Tensor<T>& GY = t.node(oid).grad;
        const Tensor<T>& X = t.node(xid).val;
        Tensor<T>& GX = t.node(xid).grad;
        for (int i = 0; i < X.n; ++i)
            for (int ch = 0; ch < X.c; ++ch) {
                T* gp = GX.plane(i, ch);
                const T* gxp = GY.plane(i, 2 * ch);
                const T* gyp = GY.plane(i, 2 * ch + 1);
                for (int y = 0; y < X.h; ++y)
                    for (int xo = 0; xo < X.w; ++xo) {
                        const T ggx = gxp[static_cast<std::size_t>(y) * X.w + xo];
                        const T ggy = gyp[static_cast<std::size_t>(y) * X.w + xo];
                        for (int dy = 0; dy < 3; ++dy) {
                            const int yy = std::clamp(y + dy - 1, 0, X.h - 1);
                            for (int dx = 0; dx < 3; ++dx) {
                                const int xx = std::clamp(xo + dx - 1, 0, X.w - 1);
                                gp[static_cast<std::size_t>(yy) * X.w + xx] +=
                                    T(detail::kSobelX[dy][dx]) * ggx +
                                    T(detail::kSobelY[dy][dx]) * ggy;
                            }
                        }
                    }
            }
    };
    return o;
}

// ---------------------------------------------------------------------------
// layer G: P'_j = 1 - (1 - P_j) * prod_i (1 - F_ij)
//
// Evaluated as P + (1-P)*(1-q) with q = prod (1-F_i): when every F_i is 0 the
// product q is exactly 1 and P passes through bit-exact; when some F_i is 1,
// q is exactly 0 and the result is pinned to 1. The sum never rounds above 1
// because fl(1-P) overshoots 1-P by less than half an ulp of 1.

template <typename T>
Var<T> prob_update(Var<T> P, Var<T> F) {
    detail::check_same_tape(P, F);
    const Tensor<T>& TP = P.val();
    const Tensor<T>& TF = F.val();
    if (TP.n != TF.n || TP.h != TF.h || TP.w != TF.w || TF.c % TP.c != 0)
        throw InvalidShape("prob_update: P and F are not aligned");
    const int K = TF.c / TP.c;
    const T tol = T(1e-6);
    for (T e : TP.v)
        if (e < -tol || e > T(1) + tol) throw InvalidInput("prob_update: P outside [0,1]");
    for (T e : TF.v)
        if (e < -tol || e > T(1) + tol) throw InvalidInput("prob_update: F outside [0,1]");

    auto cl = [](T e) { return std::clamp(e, T(0), T(1)); };
    Tensor<T> out(TP.n, TP.c, TP.h, TP.w);
    Tensor<T> qbuf(TP.n, TP.c, TP.h, TP.w);
    const std::size_t plane_sz = static_cast<std::size_t>(TP.h) * TP.w;
    for (int i = 0; i < TP.n; ++i)
        for (int pc = 0; pc < TP.c; ++pc) {
            const T* pp = TP.plane(i, pc);
            T* op = out.plane(i, pc);
            T* qp = qbuf.plane(i, pc);
            for (std::size_t j = 0; j < plane_sz; ++j) {
                T q = T(1);
                for (int ki = 0; ki < K; ++ki)
                    q *= T(1) - cl(TF.plane(i, pc * K + ki)[j]);
                qp[j] = q;
                const T p = cl(pp[j]);
                op[j] = q == T(0) ? T(1) : p + (T(1) - p) * (T(1) - q);
            }
        }

    Var<T> o = P.tape->make(std::move(out));
    const int oid = o.id, pid = P.id, fid = F.id;
    o.tape->node(oid).back = [oid, pid, fid, K, qbuf = std::move(qbuf), cl](Tape<T>& t) {
        const Tensor<T>& GY = t.node(oid).grad;
        const Tensor<T>& TP = t.node(pid).val;
        const Tensor<T>& TF = t.node(fid).val;
        Tensor<T>& GP = t.node(pid).grad;
        Tensor<T>& GF = t.node(fid).grad;
        const std::size_t plane_sz = static_cast<std::size_t>(TP.h) * TP.w;
        std::vector<T> pre(K), suf(K);
        for (int i = 0; i < TP.n; ++i)
            for (int pc = 0; pc < TP.c; ++pc) {
                const T* pp = TP.plane(i, pc);
                const T* qp = qbuf.plane(i, pc);
                const T* gp = GY.plane(i, pc);
                T* gpp = GP.plane(i, pc);
                for (std::size_t j = 0; j < plane_sz; ++j) {
                    const T g = gp[j];
                    gpp[j] += g * qp[j];
                    // leave-one-out products via prefix/suffix scans
                    T run = T(1);
                    for (int ki = 0; ki < K; ++ki) {
                        pre[ki] = run;
                        run *= T(1) - cl(TF.plane(i, pc * K + ki)[j]);
                    }
                    run = T(1);
                    for (int ki = K - 1; ki >= 0; --ki) {
                        suf[ki] = run;
                        run *= T(1) - cl(TF.plane(i, pc * K + ki)[j]);
                    }
                    const T gout = g * (T(1) - cl(pp[j]));
                    for (int ki = 0; ki < K; ++ki)
                        GF.plane(i, pc * K + ki)[j] += gout * pre[ki] * suf[ki];
                }
            }
    };
    return o;
}

// ---------------------------------------------------------------------------
// shape plumbing

template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& xs) {
    if (xs.empty()) throw InvalidInput("concat_channels: no inputs");
    Tape<T>* tp = xs[0].tape;
    int cs = 0;
    for (const auto& v : xs) {
        detail::check_same_tape(xs[0], v);
        const Tensor<T>& X = v.val();
        const Tensor<T>& X0 = xs[0].val();
        if (X.n != X0.n || X.h != X0.h || X.w != X0.w)
            throw InvalidShape("concat_channels: mismatched shapes");
        cs += X.c;
    }
    const Tensor<T>& X0 = xs[0].val();
    Tensor<T> out(X0.n, cs, X0.h, X0.w);
    const std::size_t plane_sz = static_cast<std::size_t>(X0.h) * X0.w;
    for (int i = 0; i < X0.n; ++i) {
        int co = 0;
        for (const auto& v : xs) {
            const Tensor<T>& X = v.val();
            for (int ch = 0; ch < X.c; ++ch, ++co)
                std::memcpy(out.plane(i, co), X.plane(i, ch), plane_sz * sizeof(T));
        }
    }

    std::vector<int> ids;
    for (const auto& v : xs) ids.push_back(v.id);
    Var<T> o = tp->make(std::move(out));
    const int oid = o.id;
    tp->node(oid).back = [oid, ids](Tape<T>& t) {
        const Tensor<T>& GY = t.node(oid).grad;
        const std::size_t plane_sz = static_cast<std::size_t>(GY.h) * GY.w;
        for (int i = 0; i < GY.n; ++i) {
            int co = 0;
            for (int id : ids) {
                Tensor<T>& GX = t.node(id).grad;
                for (int ch = 0; ch < GX.c; ++ch, ++co) {
                    const T* src = GY.plane(i, co);
                    T* dst = GX.plane(i, ch);
                    for (std::size_t j = 0; j < plane_sz; ++j) dst[j] += src[j];
                }
            }
        }
    };
    return o;
}

template <typename T>
Var<T> crop_interior(Var<T> x, int pad) {
    const Tensor<T>& X = x.val();
    if (pad < 0 || X.h <= 2 * pad || X.w <= 2 * pad)
        throw InvalidShape("crop_interior: padding too large");
    if (pad == 0) return x;
    Tensor<T> out(X.n, X.c, X.h - 2 * pad, X.w - 2 * pad);
    for (int i = 0; i < X.n; ++i)
        for (int ch = 0; ch < X.c; ++ch)
            for (int y = 0; y < out.h; ++y)
                std::memcpy(out.plane(i, ch) + static_cast<std::size_t>(y) * out.w,
                            X.plane(i, ch) + static_cast<std::size_t>(y + pad) * X.w + pad,
                            static_cast<std::size_t>(out.w) * sizeof(T));

    Var<T> o = x.tape->make(std::move(out));
    const int oid = o.id, xid = x.id;
    o.tape->node(oid).back = [oid, xid, pad](Tape<T>& t) {
        const Tensor<T>& GY = t.node(oid).grad;
        Tensor<T>& GX = t.node(xid).grad;
        for (int i = 0; i < GY.n; ++i)
            for (int ch = 0; ch < GY.c; ++ch)
                for (int y = 0; y < GY.h; ++y) {
                    const T* src = GY.plane(i, ch) + static_cast<std::size_t>(y) * GY.w;
                    T* dst =
                        GX.plane(i, ch) + static_cast<std::size_t>(y + pad) * GX.w + pad;
                    for (int xo = 0; xo < GY.w; ++xo) dst[xo] += src[xo];
                }
    };
    return o;
}

// ---------------------------------------------------------------------------
// losses (target is a constant, not a tape node)

template <typename T>
Var<T> mse_against(Var<T> a, const Tensor<T>& target) {
    const Tensor<T>& A = a.val();
    if (!A.same_shape(target)) throw InvalidShape("mse_against: shape mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < A.v.size(); ++i) {
        const double d = static_cast<double>(A.v[i]) - static_cast<double>(target.v[i]);
        acc += d * d;
    }
    const T m = static_cast<T>(acc / static_cast<double>(A.v.size()));

    Var<T> o = a.tape->make(Tensor<T>::scalar(m));
    const int oid = o.id, aid = a.id;
    o.tape->node(oid).back = [oid, aid, target](Tape<T>& t) {
        const T g = t.node(oid).grad.v[0];
        const Tensor<T>& A = t.node(aid).val;
        Tensor<T>& GA = t.node(aid).grad;
        const T scale = g * T(2) / T(A.v.size());
        for (std::size_t i = 0; i < A.v.size(); ++i)
            GA.v[i] += scale * (A.v[i] - target.v[i]);
    };
    return o;
}

// log10((m + tau) / (denom + tau)) with a constant denominator
template <typename T>
Var<T> log_ratio(Var<T> m, T denom, T tau) {
    if (m.val().size() != 1) throw InvalidShape("log_ratio expects a scalar");
    const T mv = m.val().v[0];
    const T value = std::log10((mv + tau) / (denom + tau));

    Var<T> o = m.tape->make(Tensor<T>::scalar(value));
    const int oid = o.id, mid = m.id;
    o.tape->node(oid).back = [oid, mid, tau](Tape<T>& t) {
        const T g = t.node(oid).grad.v[0];
        const T mv = t.node(mid).val.v[0];
        t.node(mid).grad.v[0] += g / ((mv + tau) * T(std::numbers::ln10));
    };
    return o;
}

// ---------------------------------------------------------------------------
// Adam (bias-corrected)

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

template <typename T>
class Adam {
  public:
    explicit Adam(std::vector<Parameter<T>*> params, AdamConfig cfg = {})
        : params_(std::move(params)), cfg_(cfg) {
        for (auto* p : params_) {
            const auto& v = p->value;
            slots_.push_back({Tensor<T>(v.n, v.c, v.h, v.w), Tensor<T>(v.n, v.c, v.h, v.w)});
        }
    }

    void step() {
        ++t_;
        const T bc1 = T(1) - static_cast<T>(std::pow(cfg_.beta1, t_));
        const T bc2 = T(1) - static_cast<T>(std::pow(cfg_.beta2, t_));
        const T b1 = static_cast<T>(cfg_.beta1), b2 = static_cast<T>(cfg_.beta2);
        const T lr = static_cast<T>(cfg_.lr), eps = static_cast<T>(cfg_.eps);
        for (std::size_t k = 0; k < params_.size(); ++k) {
            Parameter<T>& p = *params_[k];
            if (!p.trainable) continue;
            if (!p.grad.same_shape(p.value))
                throw InvalidInput("adam: missing gradient for parameter " + p.name);
            Tensor<T>& m = slots_[k].m;
            Tensor<T>& v = slots_[k].v;
            for (std::size_t i = 0; i < p.value.v.size(); ++i) {
                const T g = p.grad.v[i];
                m.v[i] = b1 * m.v[i] + (T(1) - b1) * g;
                v.v[i] = b2 * v.v[i] + (T(1) - b2) * g * g;
                p.value.v[i] -= lr * (m.v[i] / bc1) / (std::sqrt(v.v[i] / bc2) + eps);
            }
            p.zero_grad();
        }
    }

    std::int64_t step_count() const { return t_; }

  private:
    struct Slot {
        Tensor<T> m, v;
    };
    std::vector<Parameter<T>*> params_;
    std::vector<Slot> slots_;
    AdamConfig cfg_;
    std::int64_t t_ = 0;
};

// ---------------------------------------------------------------------------
// finite-difference gradient check (double precision, central differences)

inline double grad_check(
    const std::function<Var<double>(Tape<double>&, std::vector<Var<double>>&)>& build,
    std::vector<Tensor<double>> inputs, double h = 1e-4,
    std::size_t max_probes_per_input = std::numeric_limits<std::size_t>::max(),
    std::uint64_t probe_seed = 7) {
    std::vector<Tensor<double>> analytic;
    {
        Tape<double> tape;
        std::vector<Var<double>> vars;
        vars.reserve(inputs.size());
        for (const auto& in : inputs) vars.push_back(tape.input(in));
        Var<double> loss = build(tape, vars);
        if (loss.val().size() != 1) throw InvalidShape("grad_check: loss must be scalar");
        tape.backward(loss);
        for (const auto& v : vars) analytic.push_back(v.grad());
    }

    auto eval = [&]() {
        Tape<double> tape;
        std::vector<Var<double>> vars;
        vars.reserve(inputs.size());
        for (const auto& in : inputs) vars.push_back(tape.input(in));
        return build(tape, vars).val().v[0];
    };

    double max_rel = 0.0;
    for (std::size_t ii = 0; ii < inputs.size(); ++ii) {
        const std::size_t sz = inputs[ii].size();
        std::vector<std::size_t> probes;
        if (sz <= max_probes_per_input) {
            probes.resize(sz);
            for (std::size_t i = 0; i < sz; ++i) probes[i] = i;
        } else {
            Rng rng(hash_combine(probe_seed, ii));
            probes.resize(max_probes_per_input);
            for (auto& p : probes) p = rng.next_below(sz);
        }
        for (std::size_t idx : probes) {
            double& slot = inputs[ii].v[idx];
            const double save = slot;
            slot = save + h;
            const double fp = eval();
            slot = save - h;
            const double fm = eval();
            slot = save;
            const double num = (fp - fm) / (2.0 * h);
            const double ana = analytic[ii].v[idx];
            const double denom = std::max({std::abs(num), std::abs(ana), 1e-6});
            max_rel = std::max(max_rel, std::abs(num - ana) / denom);
        }
    }
    return max_rel;
}

// ---------------------------------------------------------------------------
// initializers

inline Tensor<float> glorot_conv(int oc, int ic, int k, Rng& rng) {
    const double a = std::sqrt(6.0 / (static_cast<double>(ic) * k * k + static_cast<double>(oc) * k * k));
    Tensor<float> t(oc, ic, k, k);
    for (auto& e : t.v) e = static_cast<float>(rng.uniform(-a, a));
    return t;
}

template <typename T>
Tensor<T> broadcast_plane(const std::vector<T>& channel_vals, int h, int w) {
    if (channel_vals.empty()) throw InvalidShape("broadcast_plane: no channels");
    Tensor<T> t(1, static_cast<int>(channel_vals.size()), h, w);
    for (int ch = 0; ch < t.c; ++ch) {
        T* p = t.plane(0, ch);
        std::fill(p, p + static_cast<std::size_t>(h) * w, channel_vals[ch]);
    }
    return t;
}

// ---------------------------------------------------------------------------
// PPW1 checkpoints: magic, u32 header length, JSON header, then concatenated
// little-endian f32 payloads in header order

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

inline void save_checkpoint(const std::string& path,
                            const std::vector<const Parameter<float>*>& params,
                            const nlohmann::json& config_echo) {
    nlohmann::json header;
    header["version"] = kToolVersion;
    header["config"] = config_echo;
    auto& list = header["params"] = nlohmann::json::array();
    for (const auto* p : params)
        list.push_back({{"name", p->name},
                        {"shape", {p->value.n, p->value.c, p->value.h, p->value.w}},
                        {"trainable", p->trainable}});
    const std::string hs = header.dump();

    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open checkpoint for writing: " + path);
    f.write("PPW1", 4);
    const std::uint32_t len = static_cast<std::uint32_t>(hs.size());
    f.write(reinterpret_cast<const char*>(&len), 4);
    f.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    for (const auto* p : params)
        f.write(reinterpret_cast<const char*>(p->value.v.data()),
                static_cast<std::streamsize>(p->value.v.size() * sizeof(float)));
    if (!f) throw DataError("checkpoint write failed: " + path);
}

// loads values into the given parameters (matched by name); returns the header
inline nlohmann::json load_checkpoint(const std::string& path,
                                      const std::vector<Parameter<float>*>& params) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open checkpoint: " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, "PPW1", 4) != 0)
        throw FormatError("not a PPW1 checkpoint: " + path);
    std::uint32_t len = 0;
    f.read(reinterpret_cast<char*>(&len), 4);
    std::string hs(len, '\0');
    f.read(hs.data(), len);
    if (!f) throw FormatError("truncated checkpoint header: " + path);
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(hs);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad checkpoint header: ") + e.what());
    }

    struct Entry {
        std::array<int, 4> shape;
        bool trainable;
        std::uint64_t offset; // floats from payload start
    };
    std::map<std::string, Entry> entries;
    std::uint64_t off = 0;
    for (const auto& e : header.at("params")) {
        Entry en;
        const auto& sh = e.at("shape");
        for (int i = 0; i < 4; ++i) en.shape[i] = sh.at(i).get<int>();
        en.trainable = e.at("trainable").get<bool>();
        en.offset = off;
        off += static_cast<std::uint64_t>(en.shape[0]) * en.shape[1] * en.shape[2] * en.shape[3];
        if (!entries.emplace(e.at("name").get<std::string>(), en).second)
            throw FormatError("duplicate parameter name in checkpoint");
    }
    if (entries.size() != params.size())
        throw FormatError("checkpoint parameter count mismatch");

    const std::istream::pos_type payload = f.tellg();
    for (auto* p : params) {
        auto it = entries.find(p->name);
        if (it == entries.end())
            throw FormatError("checkpoint missing parameter: " + p->name);
        const Entry& en = it->second;
        if (en.shape[0] != p->value.n || en.shape[1] != p->value.c ||
            en.shape[2] != p->value.h || en.shape[3] != p->value.w)
            throw FormatError("checkpoint shape mismatch for parameter: " + p->name);
        p->trainable = en.trainable;
        f.seekg(payload + static_cast<std::streamoff>(en.offset * sizeof(float)));
        f.read(reinterpret_cast<char*>(p->value.v.data()),
               static_cast<std::streamsize>(p->value.v.size() * sizeof(float)));
        if (!f) throw FormatError("truncated checkpoint payload: " + path);
    }
    return header;
}

} // namespace pyroprop
