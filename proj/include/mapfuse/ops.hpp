#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "mapfuse/tensor.hpp"

namespace mapfuse {

namespace detail {

template <typename T>
inline bool wants_grad(const std::shared_ptr<TensorStorage<T>>& s) {
    return s->requires_grad && !s->grad.empty();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> add(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape())
        throw DimensionError("add: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    Tensor<T> out = Tensor<T>::zeros(a.shape(), a.requires_grad() || b.requires_grad());
    const int64_t n = a.size();
    for (int64_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] + b.data()[i];
    if (out.requires_grad()) {
        auto as = a.storage(), bs = b.storage(), os = out.storage();
        tape.record([as, bs, os, n] {
            if (detail::wants_grad(as))
                for (int64_t i = 0; i < n; ++i) as->grad[i] += os->grad[i];
            if (detail::wants_grad(bs))
                for (int64_t i = 0; i < n; ++i) bs->grad[i] += os->grad[i];
        });
    }
    return out;
}

template <typename T>
Tensor<T> sub(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape())
        throw DimensionError("sub: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    Tensor<T> out = Tensor<T>::zeros(a.shape(), a.requires_grad() || b.requires_grad());
    const int64_t n = a.size();
    for (int64_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] - b.data()[i];
    if (out.requires_grad()) {
        auto as = a.storage(), bs = b.storage(), os = out.storage();
        tape.record([as, bs, os, n] {
            if (detail::wants_grad(as))
                for (int64_t i = 0; i < n; ++i) as->grad[i] += os->grad[i];
            if (detail::wants_grad(bs))
                for (int64_t i = 0; i < n; ++i) bs->grad[i] -= os->grad[i];
        });
    }
    return out;
}

template <typename T>
Tensor<T> mul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape())
        throw DimensionError("mul: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    Tensor<T> out = Tensor<T>::zeros(a.shape(), a.requires_grad() || b.requires_grad());
    const int64_t n = a.size();
    for (int64_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] * b.data()[i];
    if (out.requires_grad()) {
        auto as = a.storage(), bs = b.storage(), os = out.storage();
        tape.record([as, bs, os, n] {
            if (detail::wants_grad(as))
                for (int64_t i = 0; i < n; ++i) as->grad[i] += os->grad[i] * bs->data[i];
            if (detail::wants_grad(bs))
                for (int64_t i = 0; i < n; ++i) bs->grad[i] += os->grad[i] * as->data[i];
        });
    }
    return out;
}

template <typename T>
Tensor<T> scale(Tape<T>& tape, const Tensor<T>& x, T c) {
    Tensor<T> out = Tensor<T>::zeros(x.shape(), x.requires_grad());
    const int64_t n = x.size();
    for (int64_t i = 0; i < n; ++i) out.data()[i] = x.data()[i] * c;
    if (out.requires_grad()) {
        auto xs = x.storage(), os = out.storage();
        tape.record([xs, os, c, n] {
            if (detail::wants_grad(xs))
                for (int64_t i = 0; i < n; ++i) xs->grad[i] += os->grad[i] * c;
        });
    }
    return out;
}

template <typename T>
Tensor<T> relu(Tape<T>& tape, const Tensor<T>& x) {
    Tensor<T> out = Tensor<T>::zeros(x.shape(), x.requires_grad());
    const int64_t n = x.size();
    for (int64_t i = 0; i < n; ++i) out.data()[i] = x.data()[i] > T(0) ? x.data()[i] : T(0);
    if (out.requires_grad()) {
        auto xs = x.storage(), os = out.storage();
        tape.record([xs, os, n] {
            if (detail::wants_grad(xs))
                for (int64_t i = 0; i < n; ++i)
                    if (xs->data[i] > T(0)) xs->grad[i] += os->grad[i];
        });
    }
    return out;
}

template <typename T>
Tensor<T> sum_all(Tape<T>& tape, const Tensor<T>& x) {
    T acc = T(0);
    for (T v : x.data()) acc += v;
    Tensor<T> out = Tensor<T>::scalar(acc, x.requires_grad());
    if (out.requires_grad()) {
        auto xs = x.storage(), os = out.storage();
        tape.record([xs, os] {
            if (detail::wants_grad(xs)) {
                const T g = os->grad[0];
                for (auto& gv : xs->grad) gv += g;
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> mean_all(Tape<T>& tape, const Tensor<T>& x) {
    const int64_t n = x.size();
    T acc = T(0);
    for (T v : x.data()) acc += v;
    Tensor<T> out = Tensor<T>::scalar(acc / static_cast<T>(n), x.requires_grad());
    if (out.requires_grad()) {
        auto xs = x.storage(), os = out.storage();
        tape.record([xs, os, n] {
            if (detail::wants_grad(xs)) {
                const T g = os->grad[0] / static_cast<T>(n);
                for (auto& gv : xs->grad) gv += g;
            }
        });
    }
    return out;
}

// Sums out the leading axis: [K, ...] -> [...].
template <typename T>
Tensor<T> sum_axis0(Tape<T>& tape, const Tensor<T>& x) {
    if (x.rank() < 2) throw DimensionError("sum_axis0 needs rank >= 2");
    const int k = x.dim(0);
    Shape out_shape(x.shape().begin() + 1, x.shape().end());
    const int64_t inner = numel(out_shape);
    Tensor<T> out = Tensor<T>::zeros(std::move(out_shape), x.requires_grad());
    for (int g = 0; g < k; ++g)
        for (int64_t i = 0; i < inner; ++i) out.data()[i] += x.data()[g * inner + i];
    if (out.requires_grad()) {
        auto xs = x.storage(), os = out.storage();
        tape.record([xs, os, k, inner] {
            if (!detail::wants_grad(xs)) return;
            for (int g = 0; g < k; ++g)
                for (int64_t i = 0; i < inner; ++i) xs->grad[g * inner + i] += os->grad[i];
        });
    }
    return out;
}

template <typename T>
Tensor<T> reshape(Tape<T>& tape, const Tensor<T>& x, Shape shape) {
    if (numel(shape) != x.size())
        throw DimensionError("reshape " + shape_str(x.shape()) + " -> " + shape_str(shape));
    Tensor<T> out = Tensor<T>::from(std::move(shape), x.data(), x.requires_grad());
    if (out.requires_grad()) {
        auto xs = x.storage(), os = out.storage();
        tape.record([xs, os] {
            if (detail::wants_grad(xs)) {
                const int64_t n = static_cast<int64_t>(xs->grad.size());
                for (int64_t i = 0; i < n; ++i) xs->grad[i] += os->grad[i];
            }
        });
    }
    return out;
}

// Forward identity, backward contributes exactly zero upstream.
template <typename T>
Tensor<T> stop_gradient(const Tensor<T>& x) {
    return Tensor<T>::from(x.shape(), x.data(), false);
}

// ---------------------------------------------------------------------------
// Channel concatenation for [C,H,W] feature maps
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> concat_channels(Tape<T>& tape, const std::vector<Tensor<T>>& parts) {
    if (parts.empty()) throw ContractError("concat_channels: no inputs");
    const int h = parts[0].dim(1), w = parts[0].dim(2);
    int c_total = 0;
    bool rg = false;
    for (const auto& p : parts) {
        if (p.rank() != 3) throw DimensionError("concat_channels expects rank-3 inputs");
        if (p.dim(1) != h || p.dim(2) != w)
            throw DimensionError("concat_channels: spatial mismatch " + shape_str(p.shape()));
        c_total += p.dim(0);
        rg = rg || p.requires_grad();
    }
    Tensor<T> out = Tensor<T>::zeros({c_total, h, w}, rg);
    const int64_t plane = static_cast<int64_t>(h) * w;
    int64_t off = 0;
    for (const auto& p : parts) {
        std::copy(p.data().begin(), p.data().end(), out.data().begin() + off);
        off += p.size();
    }
    if (rg) {
        std::vector<std::shared_ptr<detail::TensorStorage<T>>> srcs;
        for (const auto& p : parts) srcs.push_back(p.storage());
        auto os = out.storage();
        tape.record([srcs, os, plane] {
            int64_t off2 = 0;
            for (const auto& s : srcs) {
                const int64_t n = static_cast<int64_t>(s->data.size());
                if (detail::wants_grad(s))
                    for (int64_t i = 0; i < n; ++i) s->grad[i] += os->grad[off2 + i];
                off2 += n;
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Pointwise (1x1) linear layer over [C,H,W]
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> pointwise_linear(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& weight,
                           const Tensor<T>& bias) {
    if (x.rank() != 3) throw DimensionError("pointwise_linear: input must be [C,H,W], got " + shape_str(x.shape()));
    if (weight.rank() != 2) throw DimensionError("pointwise_linear: weight must be [C_out,C_in]");
    const int c_in = x.dim(0), h = x.dim(1), w = x.dim(2);
    const int c_out = weight.dim(0);
    if (weight.dim(1) != c_in)
        throw DimensionError("pointwise_linear: weight axis 1 is " + std::to_string(weight.dim(1)) +
                             ", input channel axis is " + std::to_string(c_in));
    if (bias.rank() != 1 || bias.dim(0) != c_out)
        throw DimensionError("pointwise_linear: bias axis 0 must equal C_out=" + std::to_string(c_out));

    const bool rg = x.requires_grad() || weight.requires_grad() || bias.requires_grad();
    Tensor<T> out = Tensor<T>::zeros({c_out, h, w}, rg);
    const int64_t p = static_cast<int64_t>(h) * w;
    const T* xd = x.data().data();
    const T* wd = weight.data().data();
    T* od = out.data().data();
    for (int d = 0; d < c_out; ++d) {
        T* orow = od + d * p;
        const T bv = bias.data()[d];
        for (int64_t i = 0; i < p; ++i) orow[i] = bv;
        for (int c = 0; c < c_in; ++c) {
            const T wv = wd[d * c_in + c];
            const T* xrow = xd + c * p;
            for (int64_t i = 0; i < p; ++i) orow[i] += wv * xrow[i];
        }
    }
    if (rg) {
        auto xs = x.storage(), ws = weight.storage(), bs = bias.storage(), os = out.storage();
        tape.record([xs, ws, bs, os, c_in, c_out, p] {
            const T* go = os->grad.data();
            if (detail::wants_grad(bs))
                for (int d = 0; d < c_out; ++d) {
                    T acc = T(0);
                    const T* grow = go + d * p;
                    for (int64_t i = 0; i < p; ++i) acc += grow[i];
                    bs->grad[d] += acc;
                }
            if (detail::wants_grad(ws))
                for (int d = 0; d < c_out; ++d) {
                    const T* grow = go + d * p;
                    for (int c = 0; c < c_in; ++c) {
                        T acc = T(0);
                        const T* xrow = xs->data.data() + c * p;
                        for (int64_t i = 0; i < p; ++i) acc += grow[i] * xrow[i];
                        ws->grad[d * c_in + c] += acc;
                    }
                }
            if (detail::wants_grad(xs))
                for (int d = 0; d < c_out; ++d) {
                    const T* grow = go + d * p;
                    for (int c = 0; c < c_in; ++c) {
                        const T wv = ws->data[d * c_in + c];
                        T* gx = xs->grad.data() + c * p;
                        for (int64_t i = 0; i < p; ++i) gx[i] += wv * grow[i];
                    }
                }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// 2D convolution (cross-correlation), zero padding preserving ceil(H/stride)
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> conv2d(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                 int stride = 1, int dilation = 1) {
    if (x.rank() != 3) throw DimensionError("conv2d: input must be [C,H,W]");
    if (weight.rank() != 4) throw DimensionError("conv2d: weight must be [C_out,C_in,k,k]");
    const int c_in = x.dim(0), h = x.dim(1), w = x.dim(2);
    const int c_out = weight.dim(0), k = weight.dim(2);
    if (weight.dim(1) != c_in)
        throw DimensionError("conv2d: weight axis 1 is " + std::to_string(weight.dim(1)) +
                             ", input channel axis is " + std::to_string(c_in));
    if (weight.dim(3) != k) throw DimensionError("conv2d: kernel must be square");
    if (k % 2 == 0) throw ConfigError("conv2d: even kernel size " + std::to_string(k));
    if (stride < 1 || dilation < 1) throw ConfigError("conv2d: stride and dilation must be positive");
    if (bias.rank() != 1 || bias.dim(0) != c_out)
        throw DimensionError("conv2d: bias axis 0 must equal C_out=" + std::to_string(c_out));

    const int pad = (k - 1) * dilation / 2;
    const int oh = (h - 1) / stride + 1;  // == ceil(h/stride) with this padding
    const int ow = (w - 1) / stride + 1;
    const bool rg = x.requires_grad() || weight.requires_grad() || bias.requires_grad();
    Tensor<T> out = Tensor<T>::zeros({c_out, oh, ow}, rg);

    // Tap (ky,kx) touches output rows oy with 0 <= oy*stride - pad + ky*dilation < h.
    auto tap_range = [stride, pad, dilation](int kk, int in_extent, int out_extent, int& lo, int& hi) {
        const int shift = kk * dilation - pad;
        lo = shift < 0 ? (-shift + stride - 1) / stride : 0;
        hi = std::min(out_extent - 1, (in_extent - 1 - shift) / stride);
    };

    const int64_t plane = static_cast<int64_t>(h) * w;
    const int64_t oplane = static_cast<int64_t>(oh) * ow;
    const T* xd = x.data().data();
    const T* wd = weight.data().data();
    T* od = out.data().data();
    for (int co = 0; co < c_out; ++co) {
        T* omap = od + co * oplane;
        const T bv = bias.data()[co];
        for (int64_t i = 0; i < oplane; ++i) omap[i] = bv;
        for (int ci = 0; ci < c_in; ++ci) {
            const T* xmap = xd + ci * plane;
            for (int ky = 0; ky < k; ++ky) {
                int oy_lo, oy_hi;
                tap_range(ky, h, oh, oy_lo, oy_hi);
                for (int kx = 0; kx < k; ++kx) {
                    const T wv = wd[((co * c_in + ci) * k + ky) * k + kx];
                    if (wv == T(0)) continue;
                    int ox_lo, ox_hi;
                    tap_range(kx, w, ow, ox_lo, ox_hi);
                    for (int oy = oy_lo; oy <= oy_hi; ++oy) {
                        const int iy = oy * stride - pad + ky * dilation;
                        const T* xrow = xmap + static_cast<int64_t>(iy) * w - pad + kx * dilation;
                        T* orow = omap + static_cast<int64_t>(oy) * ow;
                        for (int ox = ox_lo; ox <= ox_hi; ++ox) orow[ox] += wv * xrow[ox * stride];
                    }
                }
            }
        }
    }

    if (rg) {
        auto xs = x.storage(), ws = weight.storage(), bs = bias.storage(), os = out.storage();
        tape.record([xs, ws, bs, os, c_in, c_out, h, w, oh, ow, k, stride, dilation, pad, plane,
                     oplane, tap_range] {
            const T* go = os->grad.data();
            if (detail::wants_grad(bs))
                for (int co = 0; co < c_out; ++co) {
                    T acc = T(0);
                    const T* gmap = go + co * oplane;
                    for (int64_t i = 0; i < oplane; ++i) acc += gmap[i];
                    bs->grad[co] += acc;
                }
            const bool gw = detail::wants_grad(ws);
            const bool gx = detail::wants_grad(xs);
            if (!gw && !gx) return;
            for (int co = 0; co < c_out; ++co) {
                const T* gmap = go + co * oplane;
                for (int ci = 0; ci < c_in; ++ci) {
                    const T* xmap = xs->data.data() + ci * plane;
                    T* gxmap = gx ? xs->grad.data() + ci * plane : nullptr;
                    for (int ky = 0; ky < k; ++ky) {
                        int oy_lo, oy_hi;
                        tap_range(ky, h, oh, oy_lo, oy_hi);
                        for (int kx = 0; kx < k; ++kx) {
                            int ox_lo, ox_hi;
                            tap_range(kx, w, ow, ox_lo, ox_hi);
                            const int64_t widx = ((static_cast<int64_t>(co) * c_in + ci) * k + ky) * k + kx;
                            T wacc = T(0);
                            const T wv = ws->data[widx];
                            for (int oy = oy_lo; oy <= oy_hi; ++oy) {
                                const int iy = oy * stride - pad + ky * dilation;
                                const T* grow = gmap + static_cast<int64_t>(oy) * ow;
                                const int64_t xoff = static_cast<int64_t>(iy) * w - pad + kx * dilation;
                                const T* xrow = xmap + xoff;
                                if (gw)
                                    for (int ox = ox_lo; ox <= ox_hi; ++ox)
                                        wacc += grow[ox] * xrow[ox * stride];
                                if (gx) {
                                    T* gxrow = gxmap + xoff;
                                    for (int ox = ox_lo; ox <= ox_hi; ++ox)
                                        gxrow[ox * stride] += wv * grow[ox];
                                }
                            }
                            if (gw) ws->grad[widx] += wacc;
                        }
                    }
                }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Softmax along an arbitrary axis, max-subtraction stabilized
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> softmax(Tape<T>& tape, const Tensor<T>& x, int axis) {
    if (axis < 0 || axis >= x.rank())
        throw DimensionError("softmax: axis " + std::to_string(axis) + " out of range for " +
                             shape_str(x.shape()));
    int64_t outer = 1, inner = 1;
    const int n = x.dim(axis);
    for (int i = 0; i < axis; ++i) outer *= x.dim(i);
    for (int i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);

    Tensor<T> out = Tensor<T>::zeros(x.shape(), x.requires_grad());
    const T* xd = x.data().data();
    T* od = out.data().data();
    for (int64_t o = 0; o < outer; ++o)
        for (int64_t in = 0; in < inner; ++in) {
            const int64_t base = o * n * inner + in;
            T mx = xd[base];
            for (int i = 1; i < n; ++i) mx = std::max(mx, xd[base + i * inner]);
            T z = T(0);
            for (int i = 0; i < n; ++i) {
                const T e = std::exp(xd[base + i * inner] - mx);
                od[base + i * inner] = e;
                z += e;
            }
            for (int i = 0; i < n; ++i) od[base + i * inner] /= z;
        }
    if (out.requires_grad()) {
        auto xs = x.storage(), os = out.storage();
        tape.record([xs, os, outer, inner, n] {
            if (!detail::wants_grad(xs)) return;
            for (int64_t o = 0; o < outer; ++o)
                for (int64_t in = 0; in < inner; ++in) {
                    const int64_t base = o * n * inner + in;
                    T dot = T(0);
                    for (int i = 0; i < n; ++i)
                        dot += os->grad[base + i * inner] * os->data[base + i * inner];
                    for (int i = 0; i < n; ++i) {
                        const int64_t idx = base + i * inner;
                        xs->grad[idx] += os->data[idx] * (os->grad[idx] - dot);
                    }
                }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Cosine similarity
// ---------------------------------------------------------------------------

// Per-pixel cosine similarity between channel vectors of two [C,H,W] maps.
template <typename T>
Tensor<T> cosine_similarity_map(Tape<T>& tape, const Tensor<T>& u, const Tensor<T>& v,
                                T eps = T(1e-8)) {
    if (u.shape() != v.shape() || u.rank() != 3)
        throw DimensionError("cosine_similarity_map: " + shape_str(u.shape()) + " vs " +
                             shape_str(v.shape()));
    const int c = u.dim(0);
    const int64_t p = static_cast<int64_t>(u.dim(1)) * u.dim(2);
    const bool rg = u.requires_grad() || v.requires_grad();
    Tensor<T> out = Tensor<T>::zeros({u.dim(1), u.dim(2)}, rg);

    const T* ud = u.data().data();
    const T* vd = v.data().data();
    for (int64_t i = 0; i < p; ++i) {
        T dot = T(0), uu = T(0), vv = T(0);
        for (int cc = 0; cc < c; ++cc) {
            const T uv = ud[cc * p + i], vvv = vd[cc * p + i];
            dot += uv * vvv;
            uu += uv * uv;
            vv += vvv * vvv;
        }
        const T nu = std::max(std::sqrt(uu), eps);
        const T nv = std::max(std::sqrt(vv), eps);
        out.data()[i] = dot / (nu * nv);
    }
    if (rg) {
        auto us = u.storage(), vs = v.storage(), os = out.storage();
        tape.record([us, vs, os, c, p, eps] {
            const bool gu = detail::wants_grad(us);
            const bool gv = detail::wants_grad(vs);
            for (int64_t i = 0; i < p; ++i) {
                const T g = os->grad[i];
                if (g == T(0)) continue;
                T dot = T(0), uu = T(0), vv = T(0);
                for (int cc = 0; cc < c; ++cc) {
                    const T uv = us->data[cc * p + i], vvv = vs->data[cc * p + i];
                    dot += uv * vvv;
                    uu += uv * uv;
                    vv += vvv * vvv;
                }
                const T ru = std::sqrt(uu), rv = std::sqrt(vv);
                const T nu = std::max(ru, eps), nv = std::max(rv, eps);
                const T s = dot / (nu * nv);
                for (int cc = 0; cc < c; ++cc) {
                    const T uv = us->data[cc * p + i], vvv = vs->data[cc * p + i];
                    if (gu) {
                        T d = vvv / (nu * nv);
                        if (ru > eps) d -= s * uv / (nu * ru);
                        us->grad[cc * p + i] += g * d;
                    }
                    if (gv) {
                        T d = uv / (nu * nv);
                        if (rv > eps) d -= s * vvv / (nv * rv);
                        vs->grad[cc * p + i] += g * d;
                    }
                }
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> cosine_similarity(Tape<T>& tape, const Tensor<T>& u, const Tensor<T>& v,
                            T eps = T(1e-8)) {
    if (u.rank() != 1 || v.rank() != 1 || u.dim(0) != v.dim(0))
        throw DimensionError("cosine_similarity: " + shape_str(u.shape()) + " vs " +
                             shape_str(v.shape()));
    Tensor<T> um = reshape(tape, u, {u.dim(0), 1, 1});
    Tensor<T> vm = reshape(tape, v, {v.dim(0), 1, 1});
    return reshape(tape, cosine_similarity_map(tape, um, vm, eps), {1});
}

// ---------------------------------------------------------------------------
// Cross entropy over [C,H,W] logits vs row-major u8 labels
// ---------------------------------------------------------------------------

// Weighted mean of per-pixel negative log-likelihoods. `class_weights` (one
// per class, empty = uniform) rescales each pixel by the weight of its target
// class; the mean is normalized by the total weight so a reweighting does not
// change the loss scale.
template <typename T>
Tensor<T> cross_entropy(Tape<T>& tape, const Tensor<T>& logits, const std::vector<uint8_t>& target,
                        int ignore_label = 255, const std::vector<T>& class_weights = {}) {
    if (logits.rank() != 3) throw DimensionError("cross_entropy: logits must be [C,H,W]");
    const int c = logits.dim(0);
    const int64_t p = static_cast<int64_t>(logits.dim(1)) * logits.dim(2);
    if (static_cast<int64_t>(target.size()) != p)
        throw DimensionError("cross_entropy: target has " + std::to_string(target.size()) +
                             " pixels, logits have " + std::to_string(p));
    if (!class_weights.empty() && static_cast<int>(class_weights.size()) != c)
        throw DimensionError("cross_entropy: class_weights size " +
                             std::to_string(class_weights.size()) + " != C=" + std::to_string(c));
    for (T w : class_weights)
        if (!(w > T(0))) throw ConfigError("cross_entropy: class weights must be positive");
    T wsum = T(0);
    T loss = T(0);
    const T* ld = logits.data().data();
    for (int64_t i = 0; i < p; ++i) {
        const int t = target[i];
        if (t == ignore_label) continue;
        if (t >= c) throw DataError("cross_entropy: label " + std::to_string(t) + " >= C=" + std::to_string(c));
        T mx = ld[i];
        for (int cc = 1; cc < c; ++cc) mx = std::max(mx, ld[cc * p + i]);
        T z = T(0);
        for (int cc = 0; cc < c; ++cc) z += std::exp(ld[cc * p + i] - mx);
        const T w = class_weights.empty() ? T(1) : class_weights[t];
        loss += w * (std::log(z) + mx - ld[t * p + i]);
        wsum += w;
    }
    if (wsum > T(0)) loss /= wsum;
    Tensor<T> out = Tensor<T>::scalar(loss, logits.requires_grad());
    if (out.requires_grad() && wsum > T(0)) {
        auto ls = logits.storage(), os = out.storage();
        tape.record([ls, os, target, class_weights, c, p, wsum, ignore_label] {
            if (!detail::wants_grad(ls)) return;
            const T g = os->grad[0] / wsum;
            for (int64_t i = 0; i < p; ++i) {
                const int t = target[i];
                if (t == ignore_label) continue;
                T mx = ls->data[i];
                for (int cc = 1; cc < c; ++cc) mx = std::max(mx, ls->data[cc * p + i]);
                T z = T(0);
                for (int cc = 0; cc < c; ++cc) z += std::exp(ls->data[cc * p + i] - mx);
                const T gw = g * (class_weights.empty() ? T(1) : class_weights[t]);
                for (int cc = 0; cc < c; ++cc) {
                    const T sm = std::exp(ls->data[cc * p + i] - mx) / z;
                    ls->grad[cc * p + i] += gw * (sm - (cc == t ? T(1) : T(0)));
                }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Bilinear resize, half-pixel centers with edge clamping
// ---------------------------------------------------------------------------

namespace detail {

struct ResizeTap {
    int i0, i1;
    double w1;  // weight of i1; i0 gets 1-w1
};

inline std::vector<ResizeTap> resize_taps(int in_extent, int out_extent) {
    std::vector<ResizeTap> taps(out_extent);
    const double r = static_cast<double>(in_extent) / out_extent;
    for (int o = 0; o < out_extent; ++o) {
        double src = (o + 0.5) * r - 0.5;
        if (src < 0) src = 0;
        if (src > in_extent - 1) src = in_extent - 1;
        const int i0 = static_cast<int>(src);
        taps[o].i0 = i0;
        taps[o].i1 = std::min(i0 + 1, in_extent - 1);
        taps[o].w1 = src - i0;
    }
    return taps;
}

}  // namespace detail

template <typename T>
Tensor<T> bilinear_resize(Tape<T>& tape, const Tensor<T>& x, int out_h, int out_w) {
    if (x.rank() != 3) throw DimensionError("bilinear_resize: input must be [C,H,W]");
    if (out_h < 1 || out_w < 1) throw ConfigError("bilinear_resize: output extents must be >= 1");
    const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    const auto ty = detail::resize_taps(h, out_h);
    const auto tx = detail::resize_taps(w, out_w);
    Tensor<T> out = Tensor<T>::zeros({c, out_h, out_w}, x.requires_grad());
    const int64_t plane = static_cast<int64_t>(h) * w;
    const int64_t oplane = static_cast<int64_t>(out_h) * out_w;
    for (int cc = 0; cc < c; ++cc) {
        const T* xmap = x.data().data() + cc * plane;
        T* omap = out.data().data() + cc * oplane;
        for (int oy = 0; oy < out_h; ++oy) {
            const auto& a = ty[oy];
            for (int ox = 0; ox < out_w; ++ox) {
                const auto& b = tx[ox];
                const T v00 = xmap[a.i0 * w + b.i0], v01 = xmap[a.i0 * w + b.i1];
                const T v10 = xmap[a.i1 * w + b.i0], v11 = xmap[a.i1 * w + b.i1];
                const T top = v00 + static_cast<T>(b.w1) * (v01 - v00);
                const T bot = v10 + static_cast<T>(b.w1) * (v11 - v10);
                omap[oy * out_w + ox] = top + static_cast<T>(a.w1) * (bot - top);
            }
        }
    }
    if (out.requires_grad()) {
        auto xs = x.storage(), os = out.storage();
        tape.record([xs, os, ty, tx, c, w, out_h, out_w, plane, oplane] {
            if (!detail::wants_grad(xs)) return;
            for (int cc = 0; cc < c; ++cc) {
                T* gxmap = xs->grad.data() + cc * plane;
                const T* gomap = os->grad.data() + cc * oplane;
                for (int oy = 0; oy < out_h; ++oy) {
                    const auto& a = ty[oy];
                    for (int ox = 0; ox < out_w; ++ox) {
                        const auto& b = tx[ox];
                        const T g = gomap[oy * out_w + ox];
                        const T wy1 = static_cast<T>(a.w1), wx1 = static_cast<T>(b.w1);
                        gxmap[a.i0 * w + b.i0] += g * (T(1) - wy1) * (T(1) - wx1);
                        gxmap[a.i0 * w + b.i1] += g * (T(1) - wy1) * wx1;
                        gxmap[a.i1 * w + b.i0] += g * wy1 * (T(1) - wx1);
                        gxmap[a.i1 * w + b.i1] += g * wy1 * wx1;
                    }
                }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Grouped pointwise two-layer MLPs (K parameter-disjoint groups)
// ---------------------------------------------------------------------------

template <typename T>
struct GroupMlpParams {
    Tensor<T> w1, b1;  // [D_h, C_in], [D_h]
    Tensor<T> w2, b2;  // [D_f, D_h], [D_f]
};

// Each group consumes the full C_in channels and contributes D_f output
// channels; group k occupies output channels [k*D_f, (k+1)*D_f).
template <typename T>
Tensor<T> grouped_pointwise_mlp(Tape<T>& tape, const Tensor<T>& x,
                                const std::vector<GroupMlpParams<T>>& groups) {
    if (groups.empty()) throw ConfigError("grouped_pointwise_mlp: K must be >= 1");
    std::vector<Tensor<T>> outs;
    outs.reserve(groups.size());
    for (const auto& g : groups) {
        Tensor<T> hidden = relu(tape, pointwise_linear(tape, x, g.w1, g.b1));
        outs.push_back(pointwise_linear(tape, hidden, g.w2, g.b2));
    }
    if (outs.size() == 1) return outs[0];
    return concat_channels(tape, outs);
}

// ---------------------------------------------------------------------------
// Non-differentiable helpers
// ---------------------------------------------------------------------------

// Argmax over axis 0 of a [C,H,W] tensor, ties to the smallest index.
template <typename T>
std::vector<uint8_t> argmax_channels(const Tensor<T>& x) {
    if (x.rank() != 3) throw DimensionError("argmax_channels: input must be [C,H,W]");
    const int c = x.dim(0);
    const int64_t p = static_cast<int64_t>(x.dim(1)) * x.dim(2);
    std::vector<uint8_t> out(p, 0);
    for (int64_t i = 0; i < p; ++i) {
        int best = 0;
        T bv = x.data()[i];
        for (int cc = 1; cc < c; ++cc) {
            const T v = x.data()[cc * p + i];
            if (v > bv) {
                bv = v;
                best = cc;
            }
        }
        out[i] = static_cast<uint8_t>(best);
    }
    return out;
}

}  // namespace mapfuse
