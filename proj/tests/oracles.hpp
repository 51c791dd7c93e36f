#pragma once

// Naive reference implementations. Each one is written straight from the
// defining formula with plain loops and shares no code with the library.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <tuple>
#include <vector>

#include "ridnet/graph_conv.hpp"
#include "ridnet/ops.hpp"
#include "ridnet/rng.hpp"
#include "ridnet/tensor.hpp"

namespace oracle {

using ridnet::Padding;
using ridnet::Shape;
using ridnet::Tensor;

inline Tensor<double> random_tensor(const Shape& s, ridnet::rng::CounterRng& g, double lo = -1, double hi = 1) {
    Tensor<double> t(s);
    for (auto& v : t.mutable_data()) v = g.uniform(lo, hi);
    return t;
}

/// Index into a padded axis; -1 means "outside, reads zero".
inline long pad_index(long i, long n, Padding p) {
    if (i >= 0 && i < n) return i;
    if (p == Padding::zero) return -1;
    // reflect without repeating the edge: -1 -> 1, n -> n-2
    if (i < 0) return -i;
    return 2 * (n - 1) - i;
}

inline Tensor<double> conv2d(const Tensor<double>& x, const Tensor<double>& k, const Tensor<double>& b, Padding p) {
    const long ci = static_cast<long>(x.dim(0)), H = static_cast<long>(x.dim(1)), W = static_cast<long>(x.dim(2));
    const long co = static_cast<long>(k.dim(0)), kh = static_cast<long>(k.dim(2)), kw = static_cast<long>(k.dim(3));
    const long ph = p == Padding::none ? 0 : kh / 2, pw = p == Padding::none ? 0 : kw / 2;
    const long Ho = H + 2 * ph - kh + 1, Wo = W + 2 * pw - kw + 1;
    Tensor<double> y(Shape{static_cast<std::size_t>(co), static_cast<std::size_t>(Ho), static_cast<std::size_t>(Wo)});
    for (long o = 0; o < co; ++o)
        for (long r = 0; r < Ho; ++r)
            for (long c = 0; c < Wo; ++c) {
                double acc = b.size() ? b[static_cast<std::size_t>(o)] : 0.0;
                for (long i = 0; i < ci; ++i)
                    for (long u = 0; u < kh; ++u)
                        for (long v = 0; v < kw; ++v) {
                            const long rr = pad_index(r + u - ph, H, p), cc = pad_index(c + v - pw, W, p);
                            if (rr < 0 || cc < 0) continue;
                            acc += k[static_cast<std::size_t>(((o * ci + i) * kh + u) * kw + v)] *
                                   x[static_cast<std::size_t>((i * H + rr) * W + cc)];
                        }
                y[static_cast<std::size_t>((o * Ho + r) * Wo + c)] = acc;
            }
    return y;
}

inline Tensor<double> conv3d(const Tensor<double>& x, const Tensor<double>& k, const Tensor<double>& b, Padding p) {
    const long ci = static_cast<long>(x.dim(0)), D = static_cast<long>(x.dim(1)), H = static_cast<long>(x.dim(2)),
               W = static_cast<long>(x.dim(3));
    const long co = static_cast<long>(k.dim(0)), kd = static_cast<long>(k.dim(2)), kh = static_cast<long>(k.dim(3)),
               kw = static_cast<long>(k.dim(4));
    const long pd = p == Padding::none ? 0 : kd / 2, ph = p == Padding::none ? 0 : kh / 2,
               pw = p == Padding::none ? 0 : kw / 2;
    const long Do = D + 2 * pd - kd + 1, Ho = H + 2 * ph - kh + 1, Wo = W + 2 * pw - kw + 1;
    Tensor<double> y(Shape{static_cast<std::size_t>(co), static_cast<std::size_t>(Do), static_cast<std::size_t>(Ho),
                           static_cast<std::size_t>(Wo)});
    for (long o = 0; o < co; ++o)
        for (long d = 0; d < Do; ++d)
            for (long r = 0; r < Ho; ++r)
                for (long c = 0; c < Wo; ++c) {
                    double acc = b[static_cast<std::size_t>(o)];
                    for (long i = 0; i < ci; ++i)
                        for (long t = 0; t < kd; ++t)
                            for (long u = 0; u < kh; ++u)
                                for (long v = 0; v < kw; ++v) {
                                    const long dd = pad_index(d + t - pd, D, p), rr = pad_index(r + u - ph, H, p),
                                               cc = pad_index(c + v - pw, W, p);
                                    if (dd < 0 || rr < 0 || cc < 0) continue;
                                    acc += k[static_cast<std::size_t>((((o * ci + i) * kd + t) * kh + u) * kw + v)] *
                                           x[static_cast<std::size_t>(((i * D + dd) * H + rr) * W + cc)];
                                }
                    y[static_cast<std::size_t>(((o * Do + d) * Ho + r) * Wo + c)] = acc;
                }
    return y;
}

/// Feature vector of pixel `p` of slice `s` in a [C,H,W] or [C,S,H,W] tensor.
inline std::vector<double> feature(const Tensor<double>& f, std::size_t s, std::size_t p) {
    const std::size_t C = f.dim(0);
    const std::size_t plane = f.rank() == 3 ? f.dim(1) * f.dim(2) : f.dim(2) * f.dim(3);
    const std::size_t S = f.rank() == 3 ? 1 : f.dim(1);
    std::vector<double> v(C);
    for (std::size_t c = 0; c < C; ++c) v[c] = f[(c * S + s) * plane + p];
    return v;
}

inline double distance(const std::vector<double>& a, const std::vector<double>& b) {
    double d = 0;
    for (std::size_t c = 0; c < a.size(); ++c) d += (a[c] - b[c]) * (a[c] - b[c]);
    return d / std::sqrt(static_cast<double>(a.size()));
}

/// Exhaustive sort of every candidate in the clipped window.
inline std::vector<std::uint32_t> knn(const Tensor<double>& map, std::size_t row, std::size_t col, std::size_t window,
                                      std::size_t k) {
    const long H = static_cast<long>(map.dim(1)), W = static_cast<long>(map.dim(2)), h = static_cast<long>(window / 2);
    const auto centre = feature(map, 0, row * map.dim(2) + col);
    std::vector<std::pair<double, std::uint32_t>> all;
    for (long r = 0; r < H; ++r)
        for (long c = 0; c < W; ++c) {
            const long dr = r - static_cast<long>(row), dc = c - static_cast<long>(col);
            if (std::abs(dr) > h || std::abs(dc) > h) continue;
            if (std::abs(dr) <= 1 && std::abs(dc) <= 1) continue;
            const auto p = static_cast<std::uint32_t>(r * W + c);
            all.emplace_back(distance(centre, feature(map, 0, p)), p);
        }
    std::sort(all.begin(), all.end());
    std::vector<std::uint32_t> out;
    for (std::size_t i = 0; i < all.size() && i + 1 < k; ++i) out.push_back(all[i].second);
    return out;
}

inline std::vector<double> softmax_neg(const std::vector<double>& e) {
    std::vector<double> a(e.size());
    double z = 0;
    for (std::size_t j = 0; j < e.size(); ++j) z += std::exp(-e[j]);
    for (std::size_t j = 0; j < e.size(); ++j) a[j] = std::exp(-e[j]) / z;
    return a;
}

/// Theta(a) as a dense C x C matrix, diagonal mode expanded.
inline std::vector<double> theta(const ridnet::EccParams<double>& p, double a) {
    const std::size_t C = p.channels, hidden = p.w1.dim(1), ts = p.theta_size();
    std::vector<double> f(ts);
    for (std::size_t j = 0; j < ts; ++j) {
        double acc = p.b2[j];
        for (std::size_t k = 0; k < hidden; ++k) {
            double z = p.w1[k] * a + p.b1[k];
            if (z < 0) z *= 0.2;
            acc += z * p.w2[k * ts + j];
        }
        f[j] = acc;
    }
    if (p.mode == ridnet::ThetaMode::full) return f;
    std::vector<double> m(C * C, 0.0);
    for (std::size_t c = 0; c < C; ++c) m[c * C + c] = f[c];
    return m;
}

/// (1/n) sum_j Theta(a_j) v_j + b with an explicit matrix-vector product per edge.
inline std::vector<double> aggregate(const std::vector<std::vector<double>>& neighbours,
                                     const std::vector<double>& weights, const ridnet::EccParams<double>& p) {
    const std::size_t C = p.channels;
    std::vector<double> s(C, 0.0);
    for (std::size_t j = 0; j < neighbours.size(); ++j) {
        const auto m = theta(p, weights[j]);
        for (std::size_t r = 0; r < C; ++r)
            for (std::size_t c = 0; c < C; ++c) s[r] += m[r * C + c] * neighbours[j][c];
    }
    for (std::size_t r = 0; r < C; ++r) s[r] = s[r] / static_cast<double>(neighbours.size()) + p.bias[r];
    return s;
}

/// Plane module in one piece: search, weigh and aggregate for every pixel.
inline Tensor<double> plane_forward(const Tensor<double>& map, std::size_t window, std::size_t k,
                                    const ridnet::EccParams<double>& p) {
    const std::size_t C = map.dim(0), H = map.dim(1), W = map.dim(2);
    Tensor<double> out(map.shape());
    for (std::size_t r = 0; r < H; ++r)
        for (std::size_t c = 0; c < W; ++c) {
            const auto nb = knn(map, r, c, window, k);
            const auto centre = feature(map, 0, r * W + c);
            std::vector<std::vector<double>> v;
            std::vector<double> e;
            for (auto j : nb) {
                v.push_back(feature(map, 0, j));
                e.push_back(distance(centre, v.back()));
            }
            const auto s = aggregate(v, softmax_neg(e), p);
            for (std::size_t ch = 0; ch < C; ++ch) out[(ch * H + r) * W + c] = s[ch];
        }
    return out;
}

/// Depth module: the centre slice aggregates the co-located pixels of the others.
inline Tensor<double> depth_forward(const Tensor<double>& stack, const ridnet::EccParams<double>& p) {
    const std::size_t C = stack.dim(0), M = stack.dim(1), H = stack.dim(2), W = stack.dim(3), mid = M / 2;
    Tensor<double> out(Shape{C, H, W});
    for (std::size_t px = 0; px < H * W; ++px) {
        const auto centre = feature(stack, mid, px);
        std::vector<std::vector<double>> v;
        std::vector<double> e;
        for (std::size_t s = 0; s < M; ++s) {
            if (s == mid) continue;
            v.push_back(feature(stack, s, px));
            e.push_back(distance(centre, v.back()));
        }
        const auto agg = aggregate(v, softmax_neg(e), p);
        for (std::size_t ch = 0; ch < C; ++ch) out[ch * H * W + px] = agg[ch];
    }
    return out;
}

inline double mse(const Tensor<float>& a, const Tensor<float>& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        s += d * d;
    }
    return s / static_cast<double>(a.size());
}

inline double psnr(const Tensor<float>& a, const Tensor<float>& b) { return 10.0 * std::log10(1.0 / mse(a, b)); }

/// Mean SSIM recomputing every window's statistics from scratch.
template <typename T>
double ssim(const Tensor<T>& a, const Tensor<T>& b, std::size_t w = 8, double k1 = 0.01, double k2 = 0.03) {
    const std::size_t H = a.dim(0), W = a.dim(1);
    const double c1 = (k1 * 1.0) * (k1 * 1.0), c2 = (k2 * 1.0) * (k2 * 1.0), n = static_cast<double>(w * w);
    double total = 0;
    std::size_t count = 0;
    for (std::size_t r = 0; r + w <= H; ++r)
        for (std::size_t c = 0; c + w <= W; ++c) {
            double ma = 0, mb = 0;
            for (std::size_t i = 0; i < w; ++i)
                for (std::size_t j = 0; j < w; ++j) {
                    ma += static_cast<double>(a[(r + i) * W + c + j]);
                    mb += static_cast<double>(b[(r + i) * W + c + j]);
                }
            ma /= n;
            mb /= n;
            double va = 0, vb = 0, cov = 0;
            for (std::size_t i = 0; i < w; ++i)
                for (std::size_t j = 0; j < w; ++j) {
                    const double da = static_cast<double>(a[(r + i) * W + c + j]) - ma;
                    const double db = static_cast<double>(b[(r + i) * W + c + j]) - mb;
                    va += da * da;
                    vb += db * db;
                    cov += da * db;
                }
            va /= n;
            vb /= n;
            cov /= n;
            total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            ++count;
        }
    return total / static_cast<double>(count);
}

/// Co-occurrence counts by enumerating every pixel pair at the offset.
template <typename T>
std::vector<double> glcm(const Tensor<T>& img, std::size_t levels, long dr, long dc, bool symmetric) {
    const long H = static_cast<long>(img.dim(0)), W = static_cast<long>(img.dim(1));
    auto level = [&](long r, long c) {
        double v = static_cast<double>(img[static_cast<std::size_t>(r * W + c)]);
        v = std::clamp(v, 0.0, 1.0);
        return std::min(levels - 1, static_cast<std::size_t>(std::floor(v * static_cast<double>(levels))));
    };
    std::vector<double> p(levels * levels, 0.0);
    double total = 0;
    for (long r = 0; r < H; ++r)
        for (long c = 0; c < W; ++c) {
            const long r2 = r + dr, c2 = c + dc;
            if (r2 < 0 || r2 >= H || c2 < 0 || c2 >= W) continue;
            const auto i = level(r, c), j = level(r2, c2);
            p[i * levels + j] += 1;
            total += 1;
            if (symmetric) {
                p[j * levels + i] += 1;
                total += 1;
            }
        }
    for (auto& x : p) x /= total;
    return p;
}

struct Texture {
    double contrast = 0, dissimilarity = 0;
    std::optional<double> correlation;
};

inline Texture texture(const std::vector<double>& p, std::size_t L) {
    Texture t;
    double mi = 0, mj = 0;
    for (std::size_t i = 0; i < L; ++i)
        for (std::size_t j = 0; j < L; ++j) {
            const double w = p[i * L + j], d = static_cast<double>(i) - static_cast<double>(j);
            t.contrast += w * d * d;
            t.dissimilarity += w * std::abs(d);
            mi += w * static_cast<double>(i);
            mj += w * static_cast<double>(j);
        }
    double si = 0, sj = 0, cov = 0;
    for (std::size_t i = 0; i < L; ++i)
        for (std::size_t j = 0; j < L; ++j) {
            const double w = p[i * L + j];
            si += w * (static_cast<double>(i) - mi) * (static_cast<double>(i) - mi);
            sj += w * (static_cast<double>(j) - mj) * (static_cast<double>(j) - mj);
            cov += w * (static_cast<double>(i) - mi) * (static_cast<double>(j) - mj);
        }
    if (si > 1e-12 && sj > 1e-12) t.correlation = cov / std::sqrt(si * sj);
    return t;
}

inline double max_abs_diff(const Tensor<double>& a, const Tensor<double>& b) {
    double m = 0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace oracle
