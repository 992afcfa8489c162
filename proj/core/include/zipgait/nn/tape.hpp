#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <memory>
#include <vector>

#include "zipgait/errors.hpp"
#include "zipgait/nn/gemm.hpp"
#include "zipgait/nn/params.hpp"
#include "zipgait/tensor.hpp"

namespace zipgait::nn {

// Reverse-mode tape. One tape per forward pass; ops append nodes and record
// backward closures. Backward closures always *accumulate* into parent
// gradients, so shared parameters (a conv applied per sequence, say) come out
// right without special casing.
template <typename T>
class Tape {
  public:
    struct Val {
        int i = -1;
    };

    struct Node {
        Tensor<T> owned;
        const Tensor<T>* v = nullptr;  // &owned or an external tensor
        Tensor<T> grad;
        bool needs_grad = false;
        std::function<void(Tape&)> back;
        Tensor<T>* grad_sink = nullptr;  // leaves: flush grad here after backward
    };

    Val input(Tensor<T> t) {
        Node n;
        n.owned = std::move(t);
        nodes_.push_back(std::move(n));
        nodes_.back().v = &nodes_.back().owned;
        return {static_cast<int>(nodes_.size()) - 1};
    }

    // Leaf referencing an external tensor without copying or tracking
    // gradients (frozen parameters during inference). The tensor must
    // outlive the tape.
    Val frozen_value(const Tensor<T>& t) {
        Node n;
        nodes_.push_back(std::move(n));
        nodes_.back().v = &t;
        return {static_cast<int>(nodes_.size()) - 1};
    }

    // Leaf referencing a parameter; gradient accumulates into entry.grad.
    Val param(typename ParamStore<T>::Entry& e) {
        Node n;
        n.v = &e.value;
        n.needs_grad = true;
        n.grad = Tensor<T>(e.value.shape, T(0));
        n.grad_sink = &e.grad;
        nodes_.push_back(std::move(n));
        return {static_cast<int>(nodes_.size()) - 1};
    }

    Val make(Tensor<T> t, bool needs_grad, std::function<void(Tape&)> back = nullptr) {
        Node n;
        n.owned = std::move(t);
        n.needs_grad = needs_grad;
        if (needs_grad) n.grad = Tensor<T>(n.owned.shape, T(0));
        n.back = std::move(back);
        nodes_.push_back(std::move(n));
        nodes_.back().v = &nodes_.back().owned;
        return {static_cast<int>(nodes_.size()) - 1};
    }

    const Tensor<T>& val(Val x) const { return *nodes_[static_cast<size_t>(x.i)].v; }
    Tensor<T>& grad(Val x) { return nodes_[static_cast<size_t>(x.i)].grad; }
    bool needs_grad(Val x) const { return nodes_[static_cast<size_t>(x.i)].needs_grad; }

    void set_back(Val x, std::function<void(Tape&)> f) {
        nodes_[static_cast<size_t>(x.i)].back = std::move(f);
    }

    // Seed d(loss)/d(loss) = 1 and sweep the tape in reverse creation order.
    void backward(Val loss) {
        auto& ln = nodes_[static_cast<size_t>(loss.i)];
        if (!ln.needs_grad) throw InvalidParameter("backward from a non-differentiable node");
        ln.grad.fill(T(1));
        for (int i = loss.i; i >= 0; --i) {
            auto& n = nodes_[static_cast<size_t>(i)];
            if (n.needs_grad && n.back) n.back(*this);
            if (n.grad_sink) {
                for (std::int64_t k = 0; k < n.grad.numel(); ++k)
                    n.grad_sink->data[static_cast<size_t>(k)] += n.grad.data[static_cast<size_t>(k)];
            }
        }
    }

  private:
    std::deque<Node> nodes_;
};

template <typename T>
using Val = typename Tape<T>::Val;

// ---------------------------------------------------------------------------
// Elementwise ops

template <typename T, typename F, typename DF>
Val<T> unary_op(Tape<T>& tp, Val<T> x, F f, DF df) {
    const Tensor<T>& xv = tp.val(x);
    Tensor<T> out(xv.shape);
    for (std::int64_t i = 0; i < xv.numel(); ++i)
        out.data[static_cast<size_t>(i)] = f(xv.data[static_cast<size_t>(i)]);
    const bool ng = tp.needs_grad(x);
    Val<T> y = tp.make(std::move(out), ng);
    if (ng) {
        tp.set_back(y, [x, y, df](Tape<T>& t) {
            const Tensor<T>& xv2 = t.val(x);
            const Tensor<T>& yv = t.val(y);
            const Tensor<T>& g = t.grad(y);
            Tensor<T>& gx = t.grad(x);
            for (std::int64_t i = 0; i < xv2.numel(); ++i) {
                const size_t k = static_cast<size_t>(i);
                gx.data[k] += g.data[k] * df(xv2.data[k], yv.data[k]);
            }
        });
    }
    return y;
}

template <typename T>
Val<T> relu(Tape<T>& tp, Val<T> x) {
    return unary_op(
        tp, x, [](T v) { return v > T(0) ? v : T(0); },
        [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
Val<T> tanh_act(Tape<T>& tp, Val<T> x) {
    return unary_op(
        tp, x, [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Val<T> sigmoid(Tape<T>& tp, Val<T> x) {
    return unary_op(
        tp, x, [](T v) { return T(1) / (T(1) + std::exp(-v)); },
        [](T, T y) { return y * (T(1) - y); });
}

// s*x + c
template <typename T>
Val<T> scale_add(Tape<T>& tp, Val<T> x, T s, T c) {
    return unary_op(
        tp, x, [s, c](T v) { return s * v + c; }, [s](T, T) { return s; });
}

template <typename T>
Val<T> add(Tape<T>& tp, Val<T> a, Val<T> b) {
    const Tensor<T>& av = tp.val(a);
    const Tensor<T>& bv = tp.val(b);
    if (!av.same_shape(bv)) throw ShapeError("add: shape mismatch");
    Tensor<T> out(av.shape);
    for (std::int64_t i = 0; i < av.numel(); ++i)
        out.data[static_cast<size_t>(i)] =
            av.data[static_cast<size_t>(i)] + bv.data[static_cast<size_t>(i)];
    const bool ng = tp.needs_grad(a) || tp.needs_grad(b);
    Val<T> y = tp.make(std::move(out), ng);
    if (ng) {
        tp.set_back(y, [a, b, y](Tape<T>& t) {
            const Tensor<T>& g = t.grad(y);
            for (auto p : {a, b}) {
                if (!t.needs_grad(p)) continue;
                Tensor<T>& gp = t.grad(p);
                for (std::int64_t i = 0; i < g.numel(); ++i)
                    gp.data[static_cast<size_t>(i)] += g.data[static_cast<size_t>(i)];
            }
        });
    }
    return y;
}

template <typename T>
Val<T> mul(Tape<T>& tp, Val<T> a, Val<T> b) {
    const Tensor<T>& av = tp.val(a);
    const Tensor<T>& bv = tp.val(b);
    if (!av.same_shape(bv)) throw ShapeError("mul: shape mismatch");
    Tensor<T> out(av.shape);
    for (std::int64_t i = 0; i < av.numel(); ++i)
        out.data[static_cast<size_t>(i)] =
            av.data[static_cast<size_t>(i)] * bv.data[static_cast<size_t>(i)];
    const bool ng = tp.needs_grad(a) || tp.needs_grad(b);
    Val<T> y = tp.make(std::move(out), ng);
    if (ng) {
        tp.set_back(y, [a, b, y](Tape<T>& t) {
            const Tensor<T>& g = t.grad(y);
            const Tensor<T>& av2 = t.val(a);
            const Tensor<T>& bv2 = t.val(b);
            if (t.needs_grad(a)) {
                Tensor<T>& ga = t.grad(a);
                for (std::int64_t i = 0; i < g.numel(); ++i)
                    ga.data[static_cast<size_t>(i)] +=
                        g.data[static_cast<size_t>(i)] * bv2.data[static_cast<size_t>(i)];
            }
            if (t.needs_grad(b)) {
                Tensor<T>& gb = t.grad(b);
                for (std::int64_t i = 0; i < g.numel(); ++i)
                    gb.data[static_cast<size_t>(i)] +=
                        g.data[static_cast<size_t>(i)] * av2.data[static_cast<size_t>(i)];
            }
        });
    }
    return y;
}

// x: [B,C,H,W], v: [B,C] broadcast over spatial positions.
template <typename T>
Val<T> add_bias_bc(Tape<T>& tp, Val<T> x, Val<T> v) {
    const Tensor<T>& xv = tp.val(x);
    const Tensor<T>& vv = tp.val(v);
    if (xv.shape.size() != 4 || vv.shape.size() != 2 || xv.dim(0) != vv.dim(0) ||
        xv.dim(1) != vv.dim(1))
        throw ShapeError("add_bias_bc: want [B,C,H,W] + [B,C]");
    const int B = xv.dim(0), C = xv.dim(1), HW = xv.dim(2) * xv.dim(3);
    Tensor<T> out(xv.shape);
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c) {
            const T bias = vv.data[static_cast<size_t>(b) * C + c];
            const size_t off = (static_cast<size_t>(b) * C + c) * HW;
            for (int i = 0; i < HW; ++i) out.data[off + i] = xv.data[off + i] + bias;
        }
    const bool ng = tp.needs_grad(x) || tp.needs_grad(v);
    Val<T> y = tp.make(std::move(out), ng);
    if (ng) {
        tp.set_back(y, [x, v, y, B, C, HW](Tape<T>& t) {
            const Tensor<T>& g = t.grad(y);
            if (t.needs_grad(x)) {
                Tensor<T>& gx = t.grad(x);
                for (std::int64_t i = 0; i < g.numel(); ++i)
                    gx.data[static_cast<size_t>(i)] += g.data[static_cast<size_t>(i)];
            }
            if (t.needs_grad(v)) {
                Tensor<T>& gv = t.grad(v);
                for (int b = 0; b < B; ++b)
                    for (int c = 0; c < C; ++c) {
                        const size_t off = (static_cast<size_t>(b) * C + c) * HW;
                        T s = T(0);
                        for (int i = 0; i < HW; ++i) s += g.data[off + i];
                        gv.data[static_cast<size_t>(b) * C + c] += s;
                    }
            }
        });
    }
    return y;
}

// ---------------------------------------------------------------------------
// Convolution (im2col + GEMM)

template <typename T>
void im2col(const Tensor<T>& x, int kh, int kw, int stride, int pad, int Ho, int Wo,
            Tensor<T>& col) {
    const int B = x.dim(0), Ci = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int P = Ho * Wo;
    const int BP = B * P;
    for (int ci = 0; ci < Ci; ++ci)
        for (int ky = 0; ky < kh; ++ky)
            for (int kx = 0; kx < kw; ++kx) {
                const size_t row = (static_cast<size_t>(ci) * kh + ky) * kw + kx;
                T* dst = col.ptr() + row * BP;
                for (int b = 0; b < B; ++b) {
                    const T* src = x.ptr() + (static_cast<size_t>(b) * Ci + ci) * H * W;
                    for (int oy = 0; oy < Ho; ++oy) {
                        const int iy = oy * stride - pad + ky;
                        T* d = dst + static_cast<size_t>(b) * P + static_cast<size_t>(oy) * Wo;
                        if (iy < 0 || iy >= H) {
                            std::fill(d, d + Wo, T(0));
                            continue;
                        }
                        const T* s = src + static_cast<size_t>(iy) * W;
                        for (int ox = 0; ox < Wo; ++ox) {
                            const int ix = ox * stride - pad + kx;
                            d[ox] = (ix >= 0 && ix < W) ? s[ix] : T(0);
                        }
                    }
                }
            }
}

template <typename T>
void col2im_add(const Tensor<T>& col, int kh, int kw, int stride, int pad, int Ho, int Wo,
                Tensor<T>& gx) {
    const int B = gx.dim(0), Ci = gx.dim(1), H = gx.dim(2), W = gx.dim(3);
    const int P = Ho * Wo;
    const int BP = B * P;
    for (int ci = 0; ci < Ci; ++ci)
        for (int ky = 0; ky < kh; ++ky)
            for (int kx = 0; kx < kw; ++kx) {
                const size_t row = (static_cast<size_t>(ci) * kh + ky) * kw + kx;
                const T* src = col.ptr() + row * BP;
                for (int b = 0; b < B; ++b) {
                    T* dst = gx.ptr() + (static_cast<size_t>(b) * Ci + ci) * H * W;
                    for (int oy = 0; oy < Ho; ++oy) {
                        const int iy = oy * stride - pad + ky;
                        if (iy < 0 || iy >= H) continue;
                        const T* s = src + static_cast<size_t>(b) * P + static_cast<size_t>(oy) * Wo;
                        T* d = dst + static_cast<size_t>(iy) * W;
                        for (int ox = 0; ox < Wo; ++ox) {
                            const int ix = ox * stride - pad + kx;
                            if (ix >= 0 && ix < W) d[ix] += s[ox];
                        }
                    }
                }
            }
}

template <typename T>
Val<T> conv2d(Tape<T>& tp, Val<T> x, Val<T> w, Val<T> b, int stride = 1, int pad = 1) {
    const Tensor<T>& xv = tp.val(x);
    const Tensor<T>& wv = tp.val(w);
    if (xv.shape.size() != 4 || wv.shape.size() != 4) throw ShapeError("conv2d wants 4-d tensors");
    const int B = xv.dim(0), Ci = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
    const int Co = wv.dim(0), kh = wv.dim(2), kw = wv.dim(3);
    if (wv.dim(1) != Ci) throw ShapeError("conv2d: channel mismatch");
    const int Ho = (H + 2 * pad - kh) / stride + 1;
    const int Wo = (W + 2 * pad - kw) / stride + 1;
    const int K = Ci * kh * kw;
    const int P = Ho * Wo;
    const int BP = B * P;

    Tensor<T> col({K, BP});
    im2col(xv, kh, kw, stride, pad, Ho, Wo, col);
    Tensor<T> out_mat({Co, BP});
    gemm(false, false, Co, BP, K, T(1), wv.ptr(), K, col.ptr(), BP, T(0), out_mat.ptr(), BP);

    const Tensor<T>& bv = tp.val(b);
    if (bv.numel() != Co) throw ShapeError("conv2d: bias size mismatch");
    Tensor<T> y({B, Co, Ho, Wo});
    for (int bb = 0; bb < B; ++bb)
        for (int co = 0; co < Co; ++co) {
            const T* src = out_mat.ptr() + static_cast<size_t>(co) * BP + static_cast<size_t>(bb) * P;
            T* dst = y.ptr() + (static_cast<size_t>(bb) * Co + co) * P;
            const T bias = bv.data[static_cast<size_t>(co)];
            for (int i = 0; i < P; ++i) dst[i] = src[i] + bias;
        }

    const bool ng = tp.needs_grad(x) || tp.needs_grad(w) || tp.needs_grad(b);
    Val<T> out = tp.make(std::move(y), ng);
    if (ng) {
        tp.set_back(out, [x, w, b, out, stride, pad, B, Ci, H, W, Co, kh, kw, Ho, Wo](Tape<T>& t) {
            const int K2 = Ci * kh * kw;
            const int P2 = Ho * Wo;
            const int BP2 = B * P2;
            const Tensor<T>& g = t.grad(out);
            // [B,Co,P] -> [Co,B*P]
            Tensor<T> g_mat({Co, BP2});
            for (int bb = 0; bb < B; ++bb)
                for (int co = 0; co < Co; ++co) {
                    const T* src = g.ptr() + (static_cast<size_t>(bb) * Co + co) * P2;
                    T* dst = g_mat.ptr() + static_cast<size_t>(co) * BP2 + static_cast<size_t>(bb) * P2;
                    std::copy(src, src + P2, dst);
                }
            if (t.needs_grad(b)) {
                Tensor<T>& gb = t.grad(b);
                for (int co = 0; co < Co; ++co) {
                    T s = T(0);
                    const T* row = g_mat.ptr() + static_cast<size_t>(co) * BP2;
                    for (int i = 0; i < BP2; ++i) s += row[i];
                    gb.data[static_cast<size_t>(co)] += s;
                }
            }
            if (t.needs_grad(w) || t.needs_grad(x)) {
                Tensor<T> col2({K2, BP2});
                im2col(t.val(x), kh, kw, stride, pad, Ho, Wo, col2);
                if (t.needs_grad(w)) {
                    Tensor<T>& gw = t.grad(w);
                    gemm(false, true, Co, K2, BP2, T(1), g_mat.ptr(), BP2, col2.ptr(), BP2, T(1),
                         gw.ptr(), K2);
                }
                if (t.needs_grad(x)) {
                    Tensor<T> dcol({K2, BP2});
                    gemm(true, false, K2, BP2, Co, T(1), t.val(w).ptr(), K2, g_mat.ptr(), BP2, T(0),
                         dcol.ptr(), BP2);
                    col2im_add(dcol, kh, kw, stride, pad, Ho, Wo, t.grad(x));
                }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Group normalization

template <typename T>
Val<T> group_norm(Tape<T>& tp, Val<T> x, Val<T> gamma, Val<T> beta, int groups, T eps = T(1e-5)) {
    const Tensor<T>& xv = tp.val(x);
    if (xv.shape.size() != 4) throw ShapeError("group_norm wants [B,C,H,W]");
    const int B = xv.dim(0), C = xv.dim(1), HW = xv.dim(2) * xv.dim(3);
    if (C % groups != 0) throw ShapeError("group_norm: C % groups != 0");
    const int Cg = C / groups;
    const std::int64_t n = static_cast<std::int64_t>(Cg) * HW;

    Tensor<T> out(xv.shape);
    Tensor<T> invstd({B, groups});
    Tensor<T> mean({B, groups});
    const Tensor<T>& gv = tp.val(gamma);
    const Tensor<T>& bv = tp.val(beta);
    for (int b = 0; b < B; ++b)
        for (int g = 0; g < groups; ++g) {
            const size_t off = (static_cast<size_t>(b) * C + static_cast<size_t>(g) * Cg) * HW;
            double s = 0, s2 = 0;
            for (std::int64_t i = 0; i < n; ++i) {
                const double v = static_cast<double>(xv.data[off + static_cast<size_t>(i)]);
                s += v;
                s2 += v * v;
            }
            const double mu = s / n;
            const double var = std::max(s2 / n - mu * mu, 0.0);
            const T is = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
            mean.data[static_cast<size_t>(b) * groups + g] = static_cast<T>(mu);
            invstd.data[static_cast<size_t>(b) * groups + g] = is;
            for (int cc = 0; cc < Cg; ++cc) {
                const int c = g * Cg + cc;
                const size_t o = (static_cast<size_t>(b) * C + c) * HW;
                const T ga = gv.data[static_cast<size_t>(c)];
                const T be = bv.data[static_cast<size_t>(c)];
                for (int i = 0; i < HW; ++i)
                    out.data[o + i] = (xv.data[o + i] - static_cast<T>(mu)) * is * ga + be;
            }
        }

    const bool ng = tp.needs_grad(x) || tp.needs_grad(gamma) || tp.needs_grad(beta);
    Val<T> y = tp.make(std::move(out), ng);
    if (ng) {
        auto mean_c = std::make_shared<Tensor<T>>(std::move(mean));
        auto invstd_c = std::make_shared<Tensor<T>>(std::move(invstd));
        tp.set_back(y, [x, gamma, beta, y, groups, B, C, HW, Cg, n, mean_c, invstd_c](Tape<T>& t) {
            const Tensor<T>& g = t.grad(y);
            const Tensor<T>& xv2 = t.val(x);
            const Tensor<T>& gv2 = t.val(gamma);
            for (int b = 0; b < B; ++b)
                for (int gr = 0; gr < groups; ++gr) {
                    const T mu = mean_c->data[static_cast<size_t>(b) * groups + gr];
                    const T is = invstd_c->data[static_cast<size_t>(b) * groups + gr];
                    // accumulate dgamma/dbeta and the two group means
                    double sum_dxhat = 0, sum_dxhat_xhat = 0;
                    for (int cc = 0; cc < Cg; ++cc) {
                        const int c = gr * Cg + cc;
                        const size_t o = (static_cast<size_t>(b) * C + c) * HW;
                        const T ga = gv2.data[static_cast<size_t>(c)];
                        double dg = 0, db = 0;
                        for (int i = 0; i < HW; ++i) {
                            const T xhat = (xv2.data[o + i] - mu) * is;
                            const T gy = g.data[o + i];
                            dg += static_cast<double>(gy) * xhat;
                            db += static_cast<double>(gy);
                            const double dxhat = static_cast<double>(gy) * ga;
                            sum_dxhat += dxhat;
                            sum_dxhat_xhat += dxhat * xhat;
                        }
                        if (t.needs_grad(gamma))
                            t.grad(gamma).data[static_cast<size_t>(c)] += static_cast<T>(dg);
                        if (t.needs_grad(beta))
                            t.grad(beta).data[static_cast<size_t>(c)] += static_cast<T>(db);
                    }
                    if (!t.needs_grad(x)) continue;
                    const double m1 = sum_dxhat / n;
                    const double m2 = sum_dxhat_xhat / n;
                    Tensor<T>& gx = t.grad(x);
                    for (int cc = 0; cc < Cg; ++cc) {
                        const int c = gr * Cg + cc;
                        const size_t o = (static_cast<size_t>(b) * C + c) * HW;
                        const T ga = gv2.data[static_cast<size_t>(c)];
                        for (int i = 0; i < HW; ++i) {
                            const double xhat = static_cast<double>((xv2.data[o + i] - mu) * is);
                            const double dxhat = static_cast<double>(g.data[o + i] * ga);
                            gx.data[o + i] += static_cast<T>(is * (dxhat - m1 - xhat * m2));
                        }
                    }
                }
        });
    }
    return y;
}

// ---------------------------------------------------------------------------
// Resampling / reshaping

template <typename T>
Val<T> upsample2x(Tape<T>& tp, Val<T> x) {
    const Tensor<T>& xv = tp.val(x);
    if (xv.shape.size() != 4) throw ShapeError("upsample2x wants [B,C,H,W]");
    const int B = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
    Tensor<T> out({B, C, H * 2, W * 2});
    for (int bc = 0; bc < B * C; ++bc) {
        const T* src = xv.ptr() + static_cast<size_t>(bc) * H * W;
        T* dst = out.ptr() + static_cast<size_t>(bc) * H * W * 4;
        for (int yy = 0; yy < H * 2; ++yy)
            for (int xx = 0; xx < W * 2; ++xx)
                dst[static_cast<size_t>(yy) * W * 2 + xx] = src[static_cast<size_t>(yy / 2) * W + xx / 2];
    }
    const bool ng = tp.needs_grad(x);
    Val<T> y = tp.make(std::move(out), ng);
    if (ng) {
        tp.set_back(y, [x, y, B, C, H, W](Tape<T>& t) {
            const Tensor<T>& g = t.grad(y);
            Tensor<T>& gx = t.grad(x);
            for (int bc = 0; bc < B * C; ++bc) {
                const T* src = g.ptr() + static_cast<size_t>(bc) * H * W * 4;
                T* dst = gx.ptr() + static_cast<size_t>(bc) * H * W;
                for (int yy = 0; yy < H * 2; ++yy)
                    for (int xx = 0; xx < W * 2; ++xx)
                        dst[static_cast<size_t>(yy / 2) * W + xx / 2] +=
                            src[static_cast<size_t>(yy) * W * 2 + xx];
            }
        });
    }
    return y;
}

template <typename T>
Val<T> concat_channels(Tape<T>& tp, Val<T> a, Val<T> b) {
    const Tensor<T>& av = tp.val(a);
    const Tensor<T>& bv = tp.val(b);
    if (av.shape.size() != 4 || bv.shape.size() != 4 || av.dim(0) != bv.dim(0) ||
        av.dim(2) != bv.dim(2) || av.dim(3) != bv.dim(3))
        throw ShapeError("concat_channels: incompatible shapes");
    const int B = av.dim(0), Ca = av.dim(1), Cb = bv.dim(1), HW = av.dim(2) * av.dim(3);
    Tensor<T> out({B, Ca + Cb, av.dim(2), av.dim(3)});
    for (int bb = 0; bb < B; ++bb) {
        std::copy(av.ptr() + static_cast<size_t>(bb) * Ca * HW,
                  av.ptr() + static_cast<size_t>(bb + 1) * Ca * HW,
                  out.ptr() + static_cast<size_t>(bb) * (Ca + Cb) * HW);
        std::copy(bv.ptr() + static_cast<size_t>(bb) * Cb * HW,
                  bv.ptr() + static_cast<size_t>(bb + 1) * Cb * HW,
                  out.ptr() + static_cast<size_t>(bb) * (Ca + Cb) * HW + static_cast<size_t>(Ca) * HW);
    }
    const bool ng = tp.needs_grad(a) || tp.needs_grad(b);
    Val<T> y = tp.make(std::move(out), ng);
    if (ng) {
        tp.set_back(y, [a, b, y, B, Ca, Cb, HW](Tape<T>& t) {
            const Tensor<T>& g = t.grad(y);
            for (int bb = 0; bb < B; ++bb) {
                if (t.needs_grad(a)) {
                    Tensor<T>& ga = t.grad(a);
                    const T* src = g.ptr() + static_cast<size_t>(bb) * (Ca + Cb) * HW;
                    T* dst = ga.ptr() + static_cast<size_t>(bb) * Ca * HW;
                    for (int i = 0; i < Ca * HW; ++i) dst[i] += src[i];
                }
                if (t.needs_grad(b)) {
                    Tensor<T>& gb = t.grad(b);
                    const T* src =
                        g.ptr() + static_cast<size_t>(bb) * (Ca + Cb) * HW + static_cast<size_t>(Ca) * HW;
                    T* dst = gb.ptr() + static_cast<size_t>(bb) * Cb * HW;
                    for (int i = 0; i < Cb * HW; ++i) dst[i] += src[i];
                }
            }
        });
    }
    return y;
}

// Stack per-sequence features [1,C,H,W] into a batch [N,C,H,W].
template <typename T>
Val<T> stack_batch(Tape<T>& tp, const std::vector<Val<T>>& xs) {
    if (xs.empty()) throw InvalidParameter("stack_batch: empty");
    const Tensor<T>& first = tp.val(xs[0]);
    std::vector<int> shape = first.shape;
    if (shape.empty() || shape[0] != 1) throw ShapeError("stack_batch wants leading dim 1");
    const std::int64_t per = first.numel();
    shape[0] = static_cast<int>(xs.size());
    Tensor<T> out(shape);
    bool ng = false;
    for (size_t i = 0; i < xs.size(); ++i) {
        const Tensor<T>& v = tp.val(xs[i]);
        if (v.numel() != per) throw ShapeError("stack_batch: mismatched shapes");
        std::copy(v.data.begin(), v.data.end(), out.data.begin() + static_cast<std::int64_t>(i) * per);
        ng = ng || tp.needs_grad(xs[i]);
    }
    Val<T> y = tp.make(std::move(out), ng);
    if (ng) {
        tp.set_back(y, [xs, y, per](Tape<T>& t) {
            const Tensor<T>& g = t.grad(y);
            for (size_t i = 0; i < xs.size(); ++i) {
                if (!t.needs_grad(xs[i])) continue;
                Tensor<T>& gx = t.grad(xs[i]);
                const T* src = g.ptr() + static_cast<std::int64_t>(i) * per;
                for (std::int64_t k = 0; k < per; ++k) gx.data[static_cast<size_t>(k)] += src[k];
            }
        });
    }
    return y;
}

// Element-wise max over the batch dimension (temporal aggregation).
template <typename T>
Val<T> reduce_max_batch(Tape<T>& tp, Val<T> x) {
    const Tensor<T>& xv = tp.val(x);
    if (xv.shape.size() != 4) throw ShapeError("reduce_max_batch wants [B,C,H,W]");
    const int B = xv.dim(0);
    const std::int64_t per = xv.numel() / B;
    std::vector<int> shape = xv.shape;
    shape[0] = 1;
    Tensor<T> out(shape);
    auto arg = std::make_shared<std::vector<int>>(static_cast<size_t>(per));
    for (std::int64_t i = 0; i < per; ++i) {
        T best = xv.data[static_cast<size_t>(i)];
        int bi = 0;
        for (int b = 1; b < B; ++b) {
            const T v = xv.data[static_cast<size_t>(b * per + i)];
            if (v > best) {
                best = v;
                bi = b;
            }
        }
        out.data[static_cast<size_t>(i)] = best;
        (*arg)[static_cast<size_t>(i)] = bi;
    }
    const bool ng = tp.needs_grad(x);
    Val<T> y = tp.make(std::move(out), ng);
    if (ng) {
        tp.set_back(y, [x, y, per, arg](Tape<T>& t) {
            const Tensor<T>& g = t.grad(y);
            Tensor<T>& gx = t.grad(x);
            for (std::int64_t i = 0; i < per; ++i)
                gx.data[static_cast<size_t>((*arg)[static_cast<size_t>(i)] * per + i)] +=
                    g.data[static_cast<size_t>(i)];
        });
    }
    return y;
}

// [B,C,H,W] -> [B,H,C]: per horizontal strip (row), max + mean over width.
template <typename T>
Val<T> strip_pool(Tape<T>& tp, Val<T> x) {
    const Tensor<T>& xv = tp.val(x);
    if (xv.shape.size() != 4) throw ShapeError("strip_pool wants [B,C,H,W]");
    const int B = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
    Tensor<T> out({B, H, C});
    auto arg = std::make_shared<std::vector<int>>(static_cast<size_t>(B) * C * H);
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c)
            for (int h = 0; h < H; ++h) {
                const T* row = xv.ptr() + ((static_cast<size_t>(b) * C + c) * H + h) * W;
                T best = row[0];
                int bi = 0;
                T sum = T(0);
                for (int w = 0; w < W; ++w) {
                    sum += row[w];
                    if (row[w] > best) {
                        best = row[w];
                        bi = w;
                    }
                }
                out.data[(static_cast<size_t>(b) * H + h) * C + c] = best + sum / T(W);
                (*arg)[(static_cast<size_t>(b) * C + c) * H + h] = bi;
            }
    const bool ng = tp.needs_grad(x);
    Val<T> y = tp.make(std::move(out), ng);
    if (ng) {
        tp.set_back(y, [x, y, B, C, H, W, arg](Tape<T>& t) {
            const Tensor<T>& g = t.grad(y);
            Tensor<T>& gx = t.grad(x);
            for (int b = 0; b < B; ++b)
                for (int c = 0; c < C; ++c)
                    for (int h = 0; h < H; ++h) {
                        const T gy = g.data[(static_cast<size_t>(b) * H + h) * C + c];
                        T* row = gx.ptr() + ((static_cast<size_t>(b) * C + c) * H + h) * W;
                        row[(*arg)[(static_cast<size_t>(b) * C + c) * H + h]] += gy;
                        const T m = gy / T(W);
                        for (int w = 0; w < W; ++w) row[w] += m;
                    }
        });
    }
    return y;
}

// ---------------------------------------------------------------------------
// Linear layers

// x: [B,N], w: [M,N], b: [M] -> [B,M]
template <typename T>
Val<T> linear(Tape<T>& tp, Val<T> x, Val<T> w, Val<T> b) {
    const Tensor<T>& xv = tp.val(x);
    const Tensor<T>& wv = tp.val(w);
    const Tensor<T>& bv = tp.val(b);
    if (xv.shape.size() != 2 || wv.shape.size() != 2 || xv.dim(1) != wv.dim(1))
        throw ShapeError("linear: shape mismatch");
    const int B = xv.dim(0), N = xv.dim(1), M = wv.dim(0);
    Tensor<T> out({B, M});
    gemm(false, true, B, M, N, T(1), xv.ptr(), N, wv.ptr(), N, T(0), out.ptr(), M);
    for (int bb = 0; bb < B; ++bb)
        for (int m = 0; m < M; ++m) out.data[static_cast<size_t>(bb) * M + m] += bv.data[static_cast<size_t>(m)];
    const bool ng = tp.needs_grad(x) || tp.needs_grad(w) || tp.needs_grad(b);
    Val<T> y = tp.make(std::move(out), ng);
    if (ng) {
        tp.set_back(y, [x, w, b, y, B, N, M](Tape<T>& t) {
            const Tensor<T>& g = t.grad(y);
            if (t.needs_grad(w))
                gemm(true, false, M, N, B, T(1), g.ptr(), M, t.val(x).ptr(), N, T(1),
                     t.grad(w).ptr(), N);
            if (t.needs_grad(x))
                gemm(false, false, B, N, M, T(1), g.ptr(), M, t.val(w).ptr(), N, T(1),
                     t.grad(x).ptr(), N);
            if (t.needs_grad(b)) {
                Tensor<T>& gb = t.grad(b);
                for (int bb = 0; bb < B; ++bb)
                    for (int m = 0; m < M; ++m)
                        gb.data[static_cast<size_t>(m)] += g.data[static_cast<size_t>(bb) * M + m];
            }
        });
    }
    return y;
}

// Per-part projection: x [B,P,C], w [P,D,C], b [P,D] -> [B,P,D]
template <typename T>
Val<T> part_linear(Tape<T>& tp, Val<T> x, Val<T> w, Val<T> b) {
    const Tensor<T>& xv = tp.val(x);
    const Tensor<T>& wv = tp.val(w);
    const Tensor<T>& bv = tp.val(b);
    if (xv.shape.size() != 3 || wv.shape.size() != 3 || xv.dim(1) != wv.dim(0) ||
        xv.dim(2) != wv.dim(2))
        throw ShapeError("part_linear: shape mismatch");
    const int B = xv.dim(0), P = xv.dim(1), C = xv.dim(2), D = wv.dim(1);
    Tensor<T> out({B, P, D});
    for (int bb = 0; bb < B; ++bb)
        for (int p = 0; p < P; ++p) {
            const T* xi = xv.ptr() + (static_cast<size_t>(bb) * P + p) * C;
            const T* wp = wv.ptr() + static_cast<size_t>(p) * D * C;
            T* o = out.ptr() + (static_cast<size_t>(bb) * P + p) * D;
            for (int d = 0; d < D; ++d) {
                T s = bv.data[static_cast<size_t>(p) * D + d];
                const T* wr = wp + static_cast<size_t>(d) * C;
                for (int c = 0; c < C; ++c) s += wr[c] * xi[c];
                o[d] = s;
            }
        }
    const bool ng = tp.needs_grad(x) || tp.needs_grad(w) || tp.needs_grad(b);
    Val<T> y = tp.make(std::move(out), ng);
    if (ng) {
        tp.set_back(y, [x, w, b, y, B, P, C, D](Tape<T>& t) {
            const Tensor<T>& g = t.grad(y);
            const Tensor<T>& xv2 = t.val(x);
            const Tensor<T>& wv2 = t.val(w);
            for (int bb = 0; bb < B; ++bb)
                for (int p = 0; p < P; ++p) {
                    const T* gi = g.ptr() + (static_cast<size_t>(bb) * P + p) * D;
                    const T* xi = xv2.ptr() + (static_cast<size_t>(bb) * P + p) * C;
                    for (int d = 0; d < D; ++d) {
                        const T gd = gi[d];
                        if (t.needs_grad(b)) t.grad(b).data[static_cast<size_t>(p) * D + d] += gd;
                        const T* wr = wv2.ptr() + (static_cast<size_t>(p) * D + d) * C;
                        if (t.needs_grad(w)) {
                            T* gw = t.grad(w).ptr() + (static_cast<size_t>(p) * D + d) * C;
                            for (int c = 0; c < C; ++c) gw[c] += gd * xi[c];
                        }
                        if (t.needs_grad(x)) {
                            T* gx = t.grad(x).ptr() + (static_cast<size_t>(bb) * P + p) * C;
                            for (int c = 0; c < C; ++c) gx[c] += gd * wr[c];
                        }
                    }
                }
        });
    }
    return y;
}

// ---------------------------------------------------------------------------
// Losses

// Mean squared error against a constant target.
template <typename T>
Val<T> mse_loss(Tape<T>& tp, Val<T> pred, const Tensor<T>& target) {
    const Tensor<T>& pv = tp.val(pred);
    if (!pv.same_shape(target)) throw ShapeError("mse_loss: shape mismatch");
    const std::int64_t n = pv.numel();
    double s = 0;
    for (std::int64_t i = 0; i < n; ++i) {
        const double d = static_cast<double>(pv.data[static_cast<size_t>(i)]) -
                         static_cast<double>(target.data[static_cast<size_t>(i)]);
        s += d * d;
    }
    Tensor<T> out({1});
    out.data[0] = static_cast<T>(s / n);
    const bool ng = tp.needs_grad(pred);
    auto tgt = std::make_shared<Tensor<T>>(target);
    Val<T> y = tp.make(std::move(out), ng);
    if (ng) {
        tp.set_back(y, [pred, y, n, tgt](Tape<T>& t) {
            const T g = t.grad(y).data[0];
            const Tensor<T>& pv2 = t.val(pred);
            Tensor<T>& gp = t.grad(pred);
            const T c = g * T(2) / static_cast<T>(n);
            for (std::int64_t i = 0; i < n; ++i)
                gp.data[static_cast<size_t>(i)] +=
                    c * (pv2.data[static_cast<size_t>(i)] - tgt->data[static_cast<size_t>(i)]);
        });
    }
    return y;
}

// Softmax cross-entropy, mean over batch and parts. logits [B,P,K].
template <typename T>
Val<T> ce_loss_mean(Tape<T>& tp, Val<T> logits, const std::vector<int>& labels) {
    const Tensor<T>& lv = tp.val(logits);
    if (lv.shape.size() != 3) throw ShapeError("ce_loss_mean wants [B,P,K]");
    const int B = lv.dim(0), P = lv.dim(1), K = lv.dim(2);
    if (static_cast<int>(labels.size()) != B) throw ShapeError("ce_loss_mean: label count");
    if (K < 2) throw InvalidParameter("ce_loss_mean needs at least 2 classes");
    double total = 0;
    for (int b = 0; b < B; ++b) {
        if (labels[static_cast<size_t>(b)] < 0 || labels[static_cast<size_t>(b)] >= K)
            throw InvalidParameter("label out of range");
        for (int p = 0; p < P; ++p) {
            const T* row = lv.ptr() + (static_cast<size_t>(b) * P + p) * K;
            double mx = static_cast<double>(row[0]);
            for (int k = 1; k < K; ++k) mx = std::max(mx, static_cast<double>(row[k]));
            double lse = 0;
            for (int k = 0; k < K; ++k) lse += std::exp(static_cast<double>(row[k]) - mx);
            lse = mx + std::log(lse);
            total += lse - static_cast<double>(row[labels[static_cast<size_t>(b)]]);
        }
    }
    Tensor<T> out({1});
    out.data[0] = static_cast<T>(total / (static_cast<double>(B) * P));
    const bool ng = tp.needs_grad(logits);
    Val<T> y = tp.make(std::move(out), ng);
    if (ng) {
        auto lab = std::make_shared<std::vector<int>>(labels);
        tp.set_back(y, [logits, y, B, P, K, lab](Tape<T>& t) {
            const T g = t.grad(y).data[0];
            const Tensor<T>& lv2 = t.val(logits);
            Tensor<T>& gl = t.grad(logits);
            const double scale = static_cast<double>(g) / (static_cast<double>(B) * P);
            for (int b = 0; b < B; ++b)
                for (int p = 0; p < P; ++p) {
                    const T* row = lv2.ptr() + (static_cast<size_t>(b) * P + p) * K;
                    T* gr = gl.ptr() + (static_cast<size_t>(b) * P + p) * K;
                    double mx = static_cast<double>(row[0]);
                    for (int k = 1; k < K; ++k) mx = std::max(mx, static_cast<double>(row[k]));
                    double z = 0;
                    for (int k = 0; k < K; ++k) z += std::exp(static_cast<double>(row[k]) - mx);
                    for (int k = 0; k < K; ++k) {
                        double sm = std::exp(static_cast<double>(row[k]) - mx) / z;
                        if (k == (*lab)[static_cast<size_t>(b)]) sm -= 1.0;
                        gr[k] += static_cast<T>(scale * sm);
                    }
                }
        });
    }
    return y;
}

}  // namespace zipgait::nn
