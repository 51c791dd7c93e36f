#include "ridnet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ridnet {

Padding parse_padding(const std::string& s) {
    if (s == "reflect") return Padding::reflect;
    if (s == "zero") return Padding::zero;
    if (s == "none") return Padding::none;
    throw std::invalid_argument("unknown padding '" + s + "'");
}

ConvGeometry ConvGeometry::make(std::size_t cin, std::size_t cout, std::array<std::size_t, 3> in,
                                std::array<std::size_t, 3> kernel, Padding padding,
                                std::array<std::size_t, 3> stride) {
    ConvGeometry g;
    g.cin = cin;
    g.cout = cout;
    g.in = in;
    g.kernel = kernel;
    g.stride = stride;
    g.padding = padding;
    for (std::size_t a = 0; a < 3; ++a) {
        if (kernel[a] % 2 == 0)
            throw std::invalid_argument("convolution kernel extents must be odd, got " +
                                        std::to_string(kernel[a]));
        if (stride[a] == 0) throw std::invalid_argument("convolution stride must be positive");
        g.pad[a] = padding == Padding::none ? 0 : kernel[a] / 2;
        if (padding == Padding::reflect && kernel[a] > 1 && in[a] < kernel[a])
            throw std::invalid_argument("reflect padding needs input extent " + std::to_string(in[a]) +
                                        " >= kernel extent " + std::to_string(kernel[a]));
        g.padded[a] = in[a] + 2 * g.pad[a];
        if (g.padded[a] < kernel[a])
            throw std::invalid_argument("convolution input extent " + std::to_string(in[a]) +
                                        " smaller than kernel extent " + std::to_string(kernel[a]));
        g.out[a] = (g.padded[a] - kernel[a]) / stride[a] + 1;
    }
    return g;
}

namespace kernels {
namespace {

// Maps a padded coordinate back to the source coordinate, or -1 for zero fill.
inline std::ptrdiff_t source_index(std::size_t q, std::size_t pad, std::size_t n, Padding mode) {
    auto i = static_cast<std::ptrdiff_t>(q) - static_cast<std::ptrdiff_t>(pad);
    auto len = static_cast<std::ptrdiff_t>(n);
    if (i >= 0 && i < len) return i;
    if (mode == Padding::reflect) return reflect_index(i, len);
    return -1;
}

template <typename T>
std::vector<T> pad_input(const ConvGeometry& g, const T* x) {
    std::vector<T> xp(g.cin * g.padded_volume(), T(0));
    for (std::size_t c = 0; c < g.cin; ++c) {
        const T* xc = x + c * g.in_volume();
        T* pc = xp.data() + c * g.padded_volume();
        for (std::size_t q0 = 0; q0 < g.padded[0]; ++q0) {
            auto i0 = source_index(q0, g.pad[0], g.in[0], g.padding);
            if (i0 < 0) continue;
            for (std::size_t q1 = 0; q1 < g.padded[1]; ++q1) {
                auto i1 = source_index(q1, g.pad[1], g.in[1], g.padding);
                if (i1 < 0) continue;
                T* prow = pc + (q0 * g.padded[1] + q1) * g.padded[2];
                const T* xrow = xc + (static_cast<std::size_t>(i0) * g.in[1] + i1) * g.in[2];
                for (std::size_t q2 = 0; q2 < g.padded[2]; ++q2) {
                    auto i2 = source_index(q2, g.pad[2], g.in[2], g.padding);
                    if (i2 >= 0) prow[q2] = xrow[i2];
                }
            }
        }
    }
    return xp;
}

template <typename T>
void fold_padded(const ConvGeometry& g, const T* gp, T* gx) {
    for (std::size_t c = 0; c < g.cin; ++c) {
        const T* pc = gp + c * g.padded_volume();
        T* xc = gx + c * g.in_volume();
        for (std::size_t q0 = 0; q0 < g.padded[0]; ++q0) {
            auto i0 = source_index(q0, g.pad[0], g.in[0], g.padding);
            if (i0 < 0) continue;
            for (std::size_t q1 = 0; q1 < g.padded[1]; ++q1) {
                auto i1 = source_index(q1, g.pad[1], g.in[1], g.padding);
                if (i1 < 0) continue;
                const T* prow = pc + (q0 * g.padded[1] + q1) * g.padded[2];
                T* xrow = xc + (static_cast<std::size_t>(i0) * g.in[1] + i1) * g.in[2];
                for (std::size_t q2 = 0; q2 < g.padded[2]; ++q2) {
                    auto i2 = source_index(q2, g.pad[2], g.in[2], g.padding);
                    if (i2 >= 0) xrow[i2] += prow[q2];
                }
            }
        }
    }
}

}  // namespace

template <typename T>
void conv_forward(const ConvGeometry& g, const T* x, const T* w, const T* bias, T* y) {
    const auto xp = pad_input(g, x);
    const std::size_t kv = g.kernel_volume();
    const std::size_t s2 = g.stride[2];
    for (std::size_t o = 0; o < g.cout; ++o) {
        T* yo = y + o * g.out_volume();
        std::fill(yo, yo + g.out_volume(), bias ? bias[o] : T(0));
        for (std::size_t c = 0; c < g.cin; ++c) {
            const T* xc = xp.data() + c * g.padded_volume();
            const T* wk = w + (o * g.cin + c) * kv;
            for (std::size_t k0 = 0; k0 < g.kernel[0]; ++k0)
                for (std::size_t k1 = 0; k1 < g.kernel[1]; ++k1)
                    for (std::size_t k2 = 0; k2 < g.kernel[2]; ++k2) {
                        const T wv = wk[(k0 * g.kernel[1] + k1) * g.kernel[2] + k2];
                        for (std::size_t o0 = 0; o0 < g.out[0]; ++o0) {
                            const std::size_t i0 = o0 * g.stride[0] + k0;
                            for (std::size_t o1 = 0; o1 < g.out[1]; ++o1) {
                                const std::size_t i1 = o1 * g.stride[1] + k1;
                                const T* xr = xc + (i0 * g.padded[1] + i1) * g.padded[2] + k2;
                                T* yr = yo + (o0 * g.out[1] + o1) * g.out[2];
                                if (s2 == 1) {
                                    for (std::size_t o2 = 0; o2 < g.out[2]; ++o2) yr[o2] += wv * xr[o2];
                                } else {
                                    for (std::size_t o2 = 0; o2 < g.out[2]; ++o2) yr[o2] += wv * xr[o2 * s2];
                                }
                            }
                        }
                    }
        }
    }
}

template <typename T>
void conv_backward_input(const ConvGeometry& g, const T* gy, const T* w, T* gx) {
    std::vector<T> gp(g.cin * g.padded_volume(), T(0));
    const std::size_t kv = g.kernel_volume();
    const std::size_t s2 = g.stride[2];
    for (std::size_t o = 0; o < g.cout; ++o) {
        const T* go = gy + o * g.out_volume();
        for (std::size_t c = 0; c < g.cin; ++c) {
            T* pc = gp.data() + c * g.padded_volume();
            const T* wk = w + (o * g.cin + c) * kv;
            for (std::size_t k0 = 0; k0 < g.kernel[0]; ++k0)
                for (std::size_t k1 = 0; k1 < g.kernel[1]; ++k1)
                    for (std::size_t k2 = 0; k2 < g.kernel[2]; ++k2) {
                        const T wv = wk[(k0 * g.kernel[1] + k1) * g.kernel[2] + k2];
                        for (std::size_t o0 = 0; o0 < g.out[0]; ++o0) {
                            const std::size_t i0 = o0 * g.stride[0] + k0;
                            for (std::size_t o1 = 0; o1 < g.out[1]; ++o1) {
                                const std::size_t i1 = o1 * g.stride[1] + k1;
                                T* pr = pc + (i0 * g.padded[1] + i1) * g.padded[2] + k2;
                                const T* gr = go + (o0 * g.out[1] + o1) * g.out[2];
                                for (std::size_t o2 = 0; o2 < g.out[2]; ++o2) pr[o2 * s2] += wv * gr[o2];
                            }
                        }
                    }
        }
    }
    fold_padded(g, gp.data(), gx);
}

template <typename T>
void conv_backward_kernel(const ConvGeometry& g, const T* x, const T* gy, T* gw) {
    const auto xp = pad_input(g, x);
    const std::size_t kv = g.kernel_volume();
    const std::size_t s2 = g.stride[2];
    for (std::size_t o = 0; o < g.cout; ++o) {
        const T* go = gy + o * g.out_volume();
        for (std::size_t c = 0; c < g.cin; ++c) {
            const T* xc = xp.data() + c * g.padded_volume();
            T* wk = gw + (o * g.cin + c) * kv;
            for (std::size_t k0 = 0; k0 < g.kernel[0]; ++k0)
                for (std::size_t k1 = 0; k1 < g.kernel[1]; ++k1)
                    for (std::size_t k2 = 0; k2 < g.kernel[2]; ++k2) {
                        T acc = 0;
                        for (std::size_t o0 = 0; o0 < g.out[0]; ++o0) {
                            const std::size_t i0 = o0 * g.stride[0] + k0;
                            for (std::size_t o1 = 0; o1 < g.out[1]; ++o1) {
                                const std::size_t i1 = o1 * g.stride[1] + k1;
                                const T* xr = xc + (i0 * g.padded[1] + i1) * g.padded[2] + k2;
                                const T* gr = go + (o0 * g.out[1] + o1) * g.out[2];
                                for (std::size_t o2 = 0; o2 < g.out[2]; ++o2) acc += gr[o2] * xr[o2 * s2];
                            }
                        }
                        wk[(k0 * g.kernel[1] + k1) * g.kernel[2] + k2] += acc;
                    }
        }
    }
}

}  // namespace kernels

namespace ops {
namespace {

template <typename T>
void require_same(const Var<T>& a, const Var<T>& b, const char* op) {
    require_shape(b.shape(), a.shape(), op);
}

// y = g * factor, factor a fixed per-element tensor. Linear in g, so its own
// graph rule is itself.
template <typename T>
Var<T> mask_mul(const Var<T>& g, const Tensor<T>& factor) {
    Tensor<T> out(g.shape());
    auto o = out.mutable_data();
    auto gv = g.value().data();
    auto f = factor.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = gv[i] * f[i];
    return g.tape().record(
        std::move(out), {g},
        [factor](const Tensor<T>& go, GradSink<T>& sink) {
            auto d = sink.grad(0);
            auto gv = go.data();
            auto f = factor.data();
            for (std::size_t i = 0; i < d.size(); ++i) d[i] += gv[i] * f[i];
        },
        [factor](const Var<T>& go, const std::vector<bool>&) {
            return std::vector<Var<T>>{mask_mul(go, factor)};
        });
}

// d(conv)/dx as a tape op of (grad_out, kernel), for double backward.
template <typename T>
Var<T> conv_input_grad(const Var<T>& gy, const Var<T>& w, const ConvGeometry& g, const Shape& x_shape) {
    Tensor<T> out(x_shape);
    kernels::conv_backward_input(g, gy.value().ptr(), w.value().ptr(), out.mutable_ptr());
    return gy.tape().record(
        std::move(out), {gy, w},
        [g, gy, w](const Tensor<T>& gx, GradSink<T>& sink) {
            if (sink.wants(0)) {
                Tensor<T> tmp(gy.shape());
                kernels::conv_forward(g, gx.ptr(), w.value().ptr(), static_cast<const T*>(nullptr),
                                      tmp.mutable_ptr());
                auto d = sink.grad(0);
                auto t = tmp.data();
                for (std::size_t i = 0; i < d.size(); ++i) d[i] += t[i];
            }
            if (sink.wants(1)) kernels::conv_backward_kernel(g, gx.ptr(), gy.value().ptr(), sink.grad(1).data());
        });
}

template <typename T>
Var<T> linear_input_grad(const Var<T>& gy, const Var<T>& w) {
    const std::size_t n = gy.shape()[0], in = w.shape()[0], outd = w.shape()[1];
    Tensor<T> out(Shape{n, in});
    auto o = out.mutable_data();
    auto gv = gy.value().data();
    auto wv = w.value().data();
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t i = 0; i < in; ++i) {
            T acc = 0;
            for (std::size_t k = 0; k < outd; ++k) acc += gv[r * outd + k] * wv[i * outd + k];
            o[r * in + i] = acc;
        }
    return gy.tape().record(std::move(out), {gy, w},
                            [gy, w, n, in, outd](const Tensor<T>& gx, GradSink<T>& sink) {
                                auto G = gx.data();
                                auto wv = w.value().data();
                                auto gv = gy.value().data();
                                if (sink.wants(0)) {
                                    auto d = sink.grad(0);
                                    for (std::size_t r = 0; r < n; ++r)
                                        for (std::size_t i = 0; i < in; ++i) {
                                            const T a = G[r * in + i];
                                            for (std::size_t k = 0; k < outd; ++k)
                                                d[r * outd + k] += a * wv[i * outd + k];
                                        }
                                }
                                if (sink.wants(1)) {
                                    auto d = sink.grad(1);
                                    for (std::size_t r = 0; r < n; ++r)
                                        for (std::size_t i = 0; i < in; ++i) {
                                            const T a = G[r * in + i];
                                            for (std::size_t k = 0; k < outd; ++k)
                                                d[i * outd + k] += a * gv[r * outd + k];
                                        }
                                }
                            });
}

template <typename T>
Var<T> conv_op(const Var<T>& x, const Var<T>& w, const Var<T>& b, const ConvGeometry& g,
               const Shape& out_shape) {
    Tensor<T> out(out_shape);
    kernels::conv_forward(g, x.value().ptr(), w.value().ptr(), b.valid() ? b.value().ptr() : nullptr,
                          out.mutable_ptr());
    std::vector<Var<T>> inputs{x, w};
    if (b.valid()) inputs.push_back(b);
    const Shape x_shape = x.shape();
    return x.tape().record(
        std::move(out), inputs,
        [g, x, w, has_bias = b.valid()](const Tensor<T>& gy, GradSink<T>& sink) {
            if (sink.wants(0)) kernels::conv_backward_input(g, gy.ptr(), w.value().ptr(), sink.grad(0).data());
            if (sink.wants(1)) kernels::conv_backward_kernel(g, x.value().ptr(), gy.ptr(), sink.grad(1).data());
            if (has_bias && sink.wants(2)) {
                auto d = sink.grad(2);
                auto gv = gy.data();
                const std::size_t vol = g.out_volume();
                for (std::size_t o = 0; o < g.cout; ++o) {
                    T acc = 0;
                    for (std::size_t i = 0; i < vol; ++i) acc += gv[o * vol + i];
                    d[o] += acc;
                }
            }
        },
        [g, w, x_shape](const Var<T>& gy, const std::vector<bool>& wants) {
            for (std::size_t k = 1; k < wants.size(); ++k)
                if (wants[k])
                    throw std::logic_error("double backward through convolution weights is not supported");
            return std::vector<Var<T>>{conv_input_grad(gy, w, g, x_shape)};
        });
}

}  // namespace

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
    require_same(a, b, "add");
    Tensor<T> out = a.value().clone();
    auto o = out.mutable_data();
    auto bv = b.value().data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] += bv[i];
    return a.tape().record(
        std::move(out), {a, b},
        [](const Tensor<T>& g, GradSink<T>& sink) {
            auto gv = g.data();
            for (std::size_t k = 0; k < 2; ++k) {
                if (!sink.wants(k)) continue;
                auto d = sink.grad(k);
                for (std::size_t i = 0; i < d.size(); ++i) d[i] += gv[i];
            }
        },
        [](const Var<T>& g, const std::vector<bool>&) { return std::vector<Var<T>>{g, g}; });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
    require_same(a, b, "sub");
    Tensor<T> out = a.value().clone();
    auto o = out.mutable_data();
    auto bv = b.value().data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bv[i];
    return a.tape().record(
        std::move(out), {a, b},
        [](const Tensor<T>& g, GradSink<T>& sink) {
            auto gv = g.data();
            if (sink.wants(0)) {
                auto d = sink.grad(0);
                for (std::size_t i = 0; i < d.size(); ++i) d[i] += gv[i];
            }
            if (sink.wants(1)) {
                auto d = sink.grad(1);
                for (std::size_t i = 0; i < d.size(); ++i) d[i] -= gv[i];
            }
        },
        [](const Var<T>& g, const std::vector<bool>&) {
            return std::vector<Var<T>>{g, scale(g, T(-1))};
        });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
    require_same(a, b, "mul");
    Tensor<T> out = a.value().clone();
    auto o = out.mutable_data();
    auto bv = b.value().data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bv[i];
    return a.tape().record(
        std::move(out), {a, b},
        [a, b](const Tensor<T>& g, GradSink<T>& sink) {
            auto gv = g.data();
            if (sink.wants(0)) {
                auto d = sink.grad(0);
                auto bv = b.value().data();
                for (std::size_t i = 0; i < d.size(); ++i) d[i] += gv[i] * bv[i];
            }
            if (sink.wants(1)) {
                auto d = sink.grad(1);
                auto av = a.value().data();
                for (std::size_t i = 0; i < d.size(); ++i) d[i] += gv[i] * av[i];
            }
        },
        [a, b](const Var<T>& g, const std::vector<bool>& wants) {
            std::vector<Var<T>> r(2);
            if (wants[0]) r[0] = mul(g, b);
            if (wants[1]) r[1] = mul(g, a);
            return r;
        });
}

template <typename T>
Var<T> scale(const Var<T>& a, T s) {
    Tensor<T> out = a.value().clone();
    for (auto& v : out.mutable_data()) v *= s;
    return a.tape().record(
        std::move(out), {a},
        [s](const Tensor<T>& g, GradSink<T>& sink) {
            auto d = sink.grad(0);
            auto gv = g.data();
            for (std::size_t i = 0; i < d.size(); ++i) d[i] += s * gv[i];
        },
        [s](const Var<T>& g, const std::vector<bool>&) { return std::vector<Var<T>>{scale(g, s)}; });
}

template <typename T>
Var<T> add_scalar(const Var<T>& a, T s) {
    Tensor<T> out = a.value().clone();
    for (auto& v : out.mutable_data()) v += s;
    return a.tape().record(
        std::move(out), {a},
        [](const Tensor<T>& g, GradSink<T>& sink) {
            auto d = sink.grad(0);
            auto gv = g.data();
            for (std::size_t i = 0; i < d.size(); ++i) d[i] += gv[i];
        },
        [](const Var<T>& g, const std::vector<bool>&) { return std::vector<Var<T>>{g}; });
}

template <typename T>
Var<T> square(const Var<T>& a) {
    Tensor<T> out = a.value().clone();
    for (auto& v : out.mutable_data()) v *= v;
    return a.tape().record(
        std::move(out), {a},
        [a](const Tensor<T>& g, GradSink<T>& sink) {
            auto d = sink.grad(0);
            auto gv = g.data();
            auto av = a.value().data();
            for (std::size_t i = 0; i < d.size(); ++i) d[i] += T(2) * av[i] * gv[i];
        },
        [a](const Var<T>& g, const std::vector<bool>&) {
            return std::vector<Var<T>>{scale(mul(g, a), T(2))};
        });
}

template <typename T>
Var<T> sqrt(const Var<T>& a) {
    Tensor<T> out = a.value().clone();
    for (auto& v : out.mutable_data()) {
        if (v < T(0)) throw std::domain_error("sqrt of a negative value");
        v = std::sqrt(v);
    }
    Tensor<T> root = out;
    return a.tape().record(std::move(out), {a}, [root](const Tensor<T>& g, GradSink<T>& sink) {
        auto d = sink.grad(0);
        auto gv = g.data();
        auto r = root.data();
        for (std::size_t i = 0; i < d.size(); ++i)
            if (r[i] > T(0)) d[i] += gv[i] / (T(2) * r[i]);
    });
}

template <typename T>
Var<T> sum(const Var<T>& a) {
    T acc = 0;
    for (auto v : a.value().data()) acc += v;
    const Shape shape = a.shape();
    return a.tape().record(
        Tensor<T>::scalar(acc), {a},
        [](const Tensor<T>& g, GradSink<T>& sink) {
            auto d = sink.grad(0);
            const T gv = g[0];
            for (auto& v : d) v += gv;
        },
        [shape](const Var<T>& g, const std::vector<bool>&) { return std::vector<Var<T>>{expand(g, shape)}; });
}

template <typename T>
Var<T> mean(const Var<T>& a) {
    return scale(sum(a), T(1) / static_cast<T>(a.value().size()));
}

template <typename T>
Var<T> expand(const Var<T>& s, const Shape& shape) {
    if (s.value().size() != 1) throw std::invalid_argument("expand: source must be a scalar");
    return s.tape().record(
        Tensor<T>(shape, s.value()[0]), {s},
        [](const Tensor<T>& g, GradSink<T>& sink) {
            T acc = 0;
            for (auto v : g.data()) acc += v;
            sink.grad(0)[0] += acc;
        },
        [](const Var<T>& g, const std::vector<bool>&) { return std::vector<Var<T>>{sum(g)}; });
}

template <typename T>
Var<T> reshape(const Var<T>& a, const Shape& shape) {
    const Shape from = a.shape();
    return a.tape().record(
        a.value().reshaped(shape), {a},
        [](const Tensor<T>& g, GradSink<T>& sink) {
            auto d = sink.grad(0);
            auto gv = g.data();
            for (std::size_t i = 0; i < d.size(); ++i) d[i] += gv[i];
        },
        [from](const Var<T>& g, const std::vector<bool>&) { return std::vector<Var<T>>{reshape(g, from)}; });
}

template <typename T>
Var<T> activate(const Var<T>& a, Activation act) {
    if (act.slope < 0.0 || act.slope >= 1.0)
        throw std::invalid_argument("activation slope must lie in [0,1)");
    const T slope = act.kind == Activation::Kind::relu ? T(0) : static_cast<T>(act.slope);
    auto av = a.value().data();
    std::vector<std::uint32_t> branch;
    if (auto* d = a.tape().decisions()) {
        branch = d->pin([&] {
            std::vector<std::uint32_t> m(av.size());
            for (std::size_t i = 0; i < m.size(); ++i) m[i] = av[i] > T(0) ? 1u : 0u;
            return m;
        });
    }
    Tensor<T> factor(a.shape());
    auto f = factor.mutable_data();
    for (std::size_t i = 0; i < f.size(); ++i) {
        const bool pos = branch.empty() ? av[i] > T(0) : branch[i] != 0;
        f[i] = pos ? T(1) : slope;
    }
    Tensor<T> out(a.shape());
    auto o = out.mutable_data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = av[i] * f[i];
    return a.tape().record(
        std::move(out), {a},
        [factor](const Tensor<T>& g, GradSink<T>& sink) {
            auto d = sink.grad(0);
            auto gv = g.data();
            auto fv = factor.data();
            for (std::size_t i = 0; i < d.size(); ++i) d[i] += gv[i] * fv[i];
        },
        [factor](const Var<T>& g, const std::vector<bool>&) {
            return std::vector<Var<T>>{mask_mul(g, factor)};
        });
}

template <typename T>
Var<T> clamp(const Var<T>& a, T lo, T hi) {
    auto av = a.value().data();
    std::vector<std::uint32_t> region;
    if (auto* d = a.tape().decisions()) {
        region = d->pin([&] {
            std::vector<std::uint32_t> m(av.size());
            for (std::size_t i = 0; i < m.size(); ++i) m[i] = av[i] < lo ? 0u : (av[i] > hi ? 2u : 1u);
            return m;
        });
    }
    Tensor<T> out(a.shape());
    Tensor<T> factor(a.shape());
    auto o = out.mutable_data();
    auto f = factor.mutable_data();
    for (std::size_t i = 0; i < o.size(); ++i) {
        const std::uint32_t r = region.empty() ? (av[i] < lo ? 0u : (av[i] > hi ? 2u : 1u)) : region[i];
        o[i] = r == 0 ? lo : (r == 2 ? hi : av[i]);
        f[i] = r == 1 ? T(1) : T(0);
    }
    return a.tape().record(
        std::move(out), {a},
        [factor](const Tensor<T>& g, GradSink<T>& sink) {
            auto d = sink.grad(0);
            auto gv = g.data();
            auto fv = factor.data();
            for (std::size_t i = 0; i < d.size(); ++i) d[i] += gv[i] * fv[i];
        },
        [factor](const Var<T>& g, const std::vector<bool>&) {
            return std::vector<Var<T>>{mask_mul(g, factor)};
        });
}

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& kernel, const Var<T>& bias, Padding padding, std::size_t stride) {
    const auto& xs = x.shape();
    const auto& ks = kernel.shape();
    if (xs.size() != 3) throw std::invalid_argument("conv2d: input must be [C,H,W], got " + shape_str(xs));
    if (ks.size() != 4)
        throw std::invalid_argument("conv2d: kernel must be [C_out,C_in,kh,kw], got " + shape_str(ks));
    if (ks[1] != xs[0])
        throw std::invalid_argument("conv2d: kernel expects C_in=" + std::to_string(ks[1]) +
                                    " but input has " + std::to_string(xs[0]) + " channels");
    if (bias.valid()) require_shape(bias.shape(), Shape{ks[0]}, "conv2d bias");
    auto g = ConvGeometry::make(xs[0], ks[0], {1, xs[1], xs[2]}, {1, ks[2], ks[3]}, padding, {1, stride, stride});
    return conv_op(x, kernel, bias, g, Shape{ks[0], g.out[1], g.out[2]});
}

template <typename T>
Var<T> conv3d(const Var<T>& x, const Var<T>& kernel, const Var<T>& bias, Padding padding) {
    const auto& xs = x.shape();
    const auto& ks = kernel.shape();
    if (xs.size() != 4) throw std::invalid_argument("conv3d: input must be [C,D,H,W], got " + shape_str(xs));
    if (ks.size() != 5)
        throw std::invalid_argument("conv3d: kernel must be [C_out,C_in,kd,kh,kw], got " + shape_str(ks));
    if (ks[1] != xs[0])
        throw std::invalid_argument("conv3d: kernel expects C_in=" + std::to_string(ks[1]) +
                                    " but input has " + std::to_string(xs[0]) + " channels");
    if (bias.valid()) require_shape(bias.shape(), Shape{ks[0]}, "conv3d bias");
    auto g = ConvGeometry::make(xs[0], ks[0], {xs[1], xs[2], xs[3]}, {ks[2], ks[3], ks[4]}, padding, {1, 1, 1});
    return conv_op(x, kernel, bias, g, Shape{ks[0], g.out[0], g.out[1], g.out[2]});
}

template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
    const auto& xs = x.shape();
    const auto& ws = w.shape();
    if (xs.size() != 2 || ws.size() != 2 || xs[1] != ws[0])
        throw std::invalid_argument("linear: incompatible shapes " + shape_str(xs) + " x " + shape_str(ws));
    const std::size_t n = xs[0], in = xs[1], outd = ws[1];
    if (b.valid()) require_shape(b.shape(), Shape{outd}, "linear bias");
    Tensor<T> out(Shape{n, outd});
    auto o = out.mutable_data();
    auto xv = x.value().data();
    auto wv = w.value().data();
    for (std::size_t r = 0; r < n; ++r) {
        T* orow = o.data() + r * outd;
        if (b.valid()) std::copy(b.value().data().begin(), b.value().data().end(), orow);
        for (std::size_t i = 0; i < in; ++i) {
            const T a = xv[r * in + i];
            const T* wrow = wv.data() + i * outd;
            for (std::size_t k = 0; k < outd; ++k) orow[k] += a * wrow[k];
        }
    }
    std::vector<Var<T>> inputs{x, w};
    if (b.valid()) inputs.push_back(b);
    return x.tape().record(
        std::move(out), inputs,
        [x, w, n, in, outd, has_bias = b.valid()](const Tensor<T>& g, GradSink<T>& sink) {
            auto gv = g.data();
            if (sink.wants(0)) {
                auto d = sink.grad(0);
                auto wv = w.value().data();
                for (std::size_t r = 0; r < n; ++r)
                    for (std::size_t i = 0; i < in; ++i) {
                        T acc = 0;
                        const T* wrow = wv.data() + i * outd;
                        const T* grow = gv.data() + r * outd;
                        for (std::size_t k = 0; k < outd; ++k) acc += grow[k] * wrow[k];
                        d[r * in + i] += acc;
                    }
            }
            if (sink.wants(1)) {
                auto d = sink.grad(1);
                auto xv = x.value().data();
                for (std::size_t r = 0; r < n; ++r)
                    for (std::size_t i = 0; i < in; ++i) {
                        const T a = xv[r * in + i];
                        T* drow = d.data() + i * outd;
                        const T* grow = gv.data() + r * outd;
                        for (std::size_t k = 0; k < outd; ++k) drow[k] += a * grow[k];
                    }
            }
            if (has_bias && sink.wants(2)) {
                auto d = sink.grad(2);
                for (std::size_t r = 0; r < n; ++r)
                    for (std::size_t k = 0; k < outd; ++k) d[k] += gv[r * outd + k];
            }
        },
        [w](const Var<T>& g, const std::vector<bool>& wants) {
            for (std::size_t k = 1; k < wants.size(); ++k)
                if (wants[k]) throw std::logic_error("double backward through linear weights is not supported");
            return std::vector<Var<T>>{linear_input_grad(g, w)};
        });
}

template <typename T>
Var<T> segment_softmax(const Var<T>& x, std::span<const std::size_t> offsets) {
    if (offsets.empty() || offsets.back() != x.value().size())
        throw std::invalid_argument("segment_softmax: offsets do not cover the input");
    std::vector<std::size_t> segs(offsets.begin(), offsets.end());
    Tensor<T> out(x.shape());
    auto o = out.mutable_data();
    auto xv = x.value().data();
    for (std::size_t s = 0; s + 1 < segs.size(); ++s) {
        const std::size_t lo = segs[s], hi = segs[s + 1];
        if (lo == hi) continue;
        T mx = xv[lo];
        for (std::size_t e = lo + 1; e < hi; ++e) mx = std::max(mx, xv[e]);
        T z = 0;
        for (std::size_t e = lo; e < hi; ++e) {
            o[e] = std::exp(xv[e] - mx);
            z += o[e];
        }
        for (std::size_t e = lo; e < hi; ++e) o[e] /= z;
    }
    Tensor<T> y = out;
    return x.tape().record(std::move(out), {x}, [y, segs](const Tensor<T>& g, GradSink<T>& sink) {
        auto d = sink.grad(0);
        auto gv = g.data();
        auto yv = y.data();
        for (std::size_t s = 0; s + 1 < segs.size(); ++s) {
            T dot = 0;
            for (std::size_t e = segs[s]; e < segs[s + 1]; ++e) dot += gv[e] * yv[e];
            for (std::size_t e = segs[s]; e < segs[s + 1]; ++e) d[e] += yv[e] * (gv[e] - dot);
        }
    });
}

template <typename T>
Var<T> softmax(const Var<T>& x) {
    const std::size_t offsets[2] = {0, x.value().size()};
    return segment_softmax(x, std::span<const std::size_t>(offsets, 2));
}

template <typename T>
Var<T> avg_pool2d(const Var<T>& x, std::size_t k) {
    const auto& s = x.shape();
    if (s.size() != 3 || k == 0 || s[1] < k || s[2] < k)
        throw std::invalid_argument("avg_pool2d: need [C,H,W] with H,W >= k, got " + shape_str(s));
    const std::size_t C = s[0], H = s[1], W = s[2], oh = H / k, ow = W / k;
    Tensor<T> out(Shape{C, oh, ow});
    auto o = out.mutable_data();
    auto xv = x.value().data();
    const T inv = T(1) / static_cast<T>(k * k);
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t r = 0; r < oh; ++r)
            for (std::size_t q = 0; q < ow; ++q) {
                T acc = 0;
                for (std::size_t a = 0; a < k; ++a)
                    for (std::size_t b = 0; b < k; ++b) acc += xv[(c * H + r * k + a) * W + q * k + b];
                o[(c * oh + r) * ow + q] = acc * inv;
            }
    return x.tape().record(std::move(out), {x}, [C, H, W, oh, ow, k, inv](const Tensor<T>& g, GradSink<T>& sink) {
        auto d = sink.grad(0);
        auto gv = g.data();
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t r = 0; r < oh; ++r)
                for (std::size_t q = 0; q < ow; ++q) {
                    const T v = gv[(c * oh + r) * ow + q] * inv;
                    for (std::size_t a = 0; a < k; ++a)
                        for (std::size_t b = 0; b < k; ++b) d[(c * H + r * k + a) * W + q * k + b] += v;
                }
    });
}

template <typename T>
Var<T> select_slice(const Var<T>& stack, std::size_t d) {
    const auto& s = stack.shape();
    if (s.size() != 4 || d >= s[1])
        throw std::invalid_argument("select_slice: slice " + std::to_string(d) + " out of range for " + shape_str(s));
    const std::size_t C = s[0], D = s[1], P = s[2] * s[3];
    Tensor<T> out(Shape{C, s[2], s[3]});
    auto o = out.mutable_data();
    auto xv = stack.value().data();
    for (std::size_t c = 0; c < C; ++c) std::copy_n(xv.data() + (c * D + d) * P, P, o.data() + c * P);
    return stack.tape().record(std::move(out), {stack}, [C, D, P, d](const Tensor<T>& g, GradSink<T>& sink) {
        auto dst = sink.grad(0);
        auto gv = g.data();
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t p = 0; p < P; ++p) dst[(c * D + d) * P + p] += gv[c * P + p];
    });
}

template <typename T>
Var<T> replace_slice(const Var<T>& stack, std::size_t d, const Var<T>& slice) {
    const auto& s = stack.shape();
    if (s.size() != 4 || d >= s[1])
        throw std::invalid_argument("replace_slice: slice " + std::to_string(d) + " out of range for " + shape_str(s));
    require_shape(slice.shape(), Shape{s[0], s[2], s[3]}, "replace_slice");
    const std::size_t C = s[0], D = s[1], P = s[2] * s[3];
    Tensor<T> out = stack.value().clone();
    auto o = out.mutable_data();
    auto sv = slice.value().data();
    for (std::size_t c = 0; c < C; ++c) std::copy_n(sv.data() + c * P, P, o.data() + (c * D + d) * P);
    return stack.tape().record(std::move(out), {stack, slice}, [C, D, P, d](const Tensor<T>& g, GradSink<T>& sink) {
        auto gv = g.data();
        if (sink.wants(0)) {
            auto dst = sink.grad(0);
            for (std::size_t c = 0; c < C; ++c)
                for (std::size_t j = 0; j < D; ++j) {
                    if (j == d) continue;
                    for (std::size_t p = 0; p < P; ++p) dst[(c * D + j) * P + p] += gv[(c * D + j) * P + p];
                }
        }
        if (sink.wants(1)) {
            auto dst = sink.grad(1);
            for (std::size_t c = 0; c < C; ++c)
                for (std::size_t p = 0; p < P; ++p) dst[c * P + p] += gv[(c * D + d) * P + p];
        }
    });
}

template <typename T>
Var<T> add_channel_bias(const Var<T>& x, const Var<T>& b) {
    const auto& s = x.shape();
    if (s.empty()) throw std::invalid_argument("add_channel_bias: input has no channel axis");
    require_shape(b.shape(), Shape{s[0]}, "add_channel_bias");
    const std::size_t C = s[0], inner = x.value().size() / C;
    Tensor<T> out = x.value().clone();
    auto o = out.mutable_data();
    auto bv = b.value().data();
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t i = 0; i < inner; ++i) o[c * inner + i] += bv[c];
    return x.tape().record(std::move(out), {x, b}, [C, inner](const Tensor<T>& g, GradSink<T>& sink) {
        auto gv = g.data();
        if (sink.wants(0)) {
            auto d = sink.grad(0);
            for (std::size_t i = 0; i < d.size(); ++i) d[i] += gv[i];
        }
        if (sink.wants(1)) {
            auto d = sink.grad(1);
            for (std::size_t c = 0; c < C; ++c) {
                T acc = 0;
                for (std::size_t i = 0; i < inner; ++i) acc += gv[c * inner + i];
                d[c] += acc;
            }
        }
    });
}

#define RIDNET_INSTANTIATE_OPS(T)                                                             \
    template Var<T> add(const Var<T>&, const Var<T>&);                                        \
    template Var<T> sub(const Var<T>&, const Var<T>&);                                        \
    template Var<T> mul(const Var<T>&, const Var<T>&);                                        \
    template Var<T> scale(const Var<T>&, T);                                                  \
    template Var<T> add_scalar(const Var<T>&, T);                                             \
    template Var<T> square(const Var<T>&);                                                    \
    template Var<T> sqrt(const Var<T>&);                                                      \
    template Var<T> sum(const Var<T>&);                                                       \
    template Var<T> mean(const Var<T>&);                                                      \
    template Var<T> expand(const Var<T>&, const Shape&);                                      \
    template Var<T> reshape(const Var<T>&, const Shape&);                                     \
    template Var<T> activate(const Var<T>&, Activation);                                      \
    template Var<T> clamp(const Var<T>&, T, T);                                               \
    template Var<T> conv2d(const Var<T>&, const Var<T>&, const Var<T>&, Padding, std::size_t); \
    template Var<T> conv3d(const Var<T>&, const Var<T>&, const Var<T>&, Padding);             \
    template Var<T> linear(const Var<T>&, const Var<T>&, const Var<T>&);                      \
    template Var<T> segment_softmax(const Var<T>&, std::span<const std::size_t>);             \
    template Var<T> softmax(const Var<T>&);                                                   \
    template Var<T> avg_pool2d(const Var<T>&, std::size_t);                                   \
    template Var<T> select_slice(const Var<T>&, std::size_t);                                 \
    template Var<T> replace_slice(const Var<T>&, std::size_t, const Var<T>&);                 \
    template Var<T> add_channel_bias(const Var<T>&, const Var<T>&);

RIDNET_INSTANTIATE_OPS(float)
RIDNET_INSTANTIATE_OPS(double)

}  // namespace ops

namespace kernels {
template void conv_forward(const ConvGeometry&, const float*, const float*, const float*, float*);
template void conv_forward(const ConvGeometry&, const double*, const double*, const double*, double*);
template void conv_backward_input(const ConvGeometry&, const float*, const float*, float*);
template void conv_backward_input(const ConvGeometry&, const double*, const double*, double*);
template void conv_backward_kernel(const ConvGeometry&, const float*, const float*, float*);
template void conv_backward_kernel(const ConvGeometry&, const double*, const double*, double*);
}  // namespace kernels

}  // namespace ridnet
