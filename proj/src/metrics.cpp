#include "ridnet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ridnet {

template <typename T>
double mse(const Tensor<T>& a, const Tensor<T>& b) {
    require_shape(b.shape(), a.shape(), "mse: second image");
    double acc = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        acc += d * d;
    }
    return acc / static_cast<double>(a.size());
}

template <typename T>
double psnr(const Tensor<T>& a, const Tensor<T>& b, double peak) {
    const double m = mse(a, b);
    if (m == 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / m));
}

namespace {

// Summed-area table with a zero first row/column.
std::vector<double> integral(const std::vector<double>& x, std::size_t H, std::size_t W) {
    std::vector<double> s((H + 1) * (W + 1), 0.0);
    for (std::size_t r = 0; r < H; ++r) {
        double row = 0;
        for (std::size_t c = 0; c < W; ++c) {
            row += x[r * W + c];
            s[(r + 1) * (W + 1) + c + 1] = s[r * (W + 1) + c + 1] + row;
        }
    }
    return s;
}

double box(const std::vector<double>& s, std::size_t W, std::size_t r, std::size_t c, std::size_t n) {
    const std::size_t w1 = W + 1;
    return s[(r + n) * w1 + c + n] - s[r * w1 + c + n] - s[(r + n) * w1 + c] + s[r * w1 + c];
}

}  // namespace

template <typename T>
double ssim(const Tensor<T>& a, const Tensor<T>& b, const SsimOptions& o) {
    require_shape(b.shape(), a.shape(), "ssim: second image");
    if (a.rank() != 2) throw std::invalid_argument("ssim expects [H,W] images, got " + shape_str(a.shape()));
    const std::size_t H = a.dim(0), W = a.dim(1), n = o.window;
    if (n == 0 || H < n || W < n) throw std::invalid_argument("ssim: image smaller than the window");
    // Centre the values so the E[x^2] - E[x]^2 variances do not cancel badly.
    double shift = 0;
    for (std::size_t i = 0; i < a.size(); ++i) shift += static_cast<double>(a[i]) + static_cast<double>(b[i]);
    shift /= 2.0 * static_cast<double>(a.size());
    std::vector<double> xa(a.size()), xb(a.size()), aa(a.size()), bb(a.size()), ab(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        xa[i] = static_cast<double>(a[i]) - shift;
        xb[i] = static_cast<double>(b[i]) - shift;
        aa[i] = xa[i] * xa[i];
        bb[i] = xb[i] * xb[i];
        ab[i] = xa[i] * xb[i];
    }
    const auto sa = integral(xa, H, W), sb = integral(xb, H, W), saa = integral(aa, H, W), sbb = integral(bb, H, W),
               sab = integral(ab, H, W);
    const double N = static_cast<double>(n * n);
    const double c1 = (o.k1 * o.peak) * (o.k1 * o.peak), c2 = (o.k2 * o.peak) * (o.k2 * o.peak);
    double total = 0;
    for (std::size_t r = 0; r + n <= H; ++r)
        for (std::size_t c = 0; c + n <= W; ++c) {
            const double ma = box(sa, W, r, c, n) / N, mb = box(sb, W, r, c, n) / N;
            const double va = box(saa, W, r, c, n) / N - ma * ma;
            const double vb = box(sbb, W, r, c, n) / N - mb * mb;
            const double cov = box(sab, W, r, c, n) / N - ma * mb;
            const double mua = ma + shift, mub = mb + shift;
            total += ((2 * mua * mub + c1) * (2 * cov + c2)) / ((mua * mua + mub * mub + c1) * (va + vb + c2));
        }
    return total / static_cast<double>((H - n + 1) * (W - n + 1));
}

std::size_t quantize(double v, std::size_t levels) {
    const double x = std::clamp(v, 0.0, 1.0);
    return std::min(levels - 1, static_cast<std::size_t>(std::floor(x * static_cast<double>(levels))));
}

template <typename T>
std::vector<double> glcm_matrix(const Tensor<T>& image, const GlcmOptions& o) {
    if (image.rank() != 2) throw std::invalid_argument("glcm expects an [H,W] image, got " + shape_str(image.shape()));
    if (o.levels < 2) throw std::invalid_argument("glcm needs at least 2 levels");
    const auto H = static_cast<std::ptrdiff_t>(image.dim(0)), W = static_cast<std::ptrdiff_t>(image.dim(1));
    const std::size_t L = o.levels;
    std::vector<double> p(L * L, 0.0);
    double count = 0;
    for (std::ptrdiff_t r = 0; r < H; ++r)
        for (std::ptrdiff_t c = 0; c < W; ++c) {
            const std::ptrdiff_t r2 = r + o.d_row, c2 = c + o.d_col;
            if (r2 < 0 || r2 >= H || c2 < 0 || c2 >= W) continue;
            const std::size_t i = quantize(static_cast<double>(image[static_cast<std::size_t>(r * W + c)]), L);
            const std::size_t j = quantize(static_cast<double>(image[static_cast<std::size_t>(r2 * W + c2)]), L);
            p[i * L + j] += 1;
            count += 1;
            if (o.symmetric) {
                p[j * L + i] += 1;
                count += 1;
            }
        }
    if (count == 0) throw std::invalid_argument("glcm: offset leaves no pixel pairs");
    for (auto& v : p) v /= count;
    return p;
}

GlcmFeatures glcm_features_from_matrix(const std::vector<double>& p, std::size_t L) {
    if (p.size() != L * L) throw std::invalid_argument("glcm matrix size does not match its level count");
    GlcmFeatures f;
    double mi = 0, mj = 0;
    for (std::size_t i = 0; i < L; ++i)
        for (std::size_t j = 0; j < L; ++j) {
            const double v = p[i * L + j], d = static_cast<double>(i) - static_cast<double>(j);
            f.contrast += v * d * d;
            f.dissimilarity += v * std::abs(d);
            mi += v * static_cast<double>(i);
            mj += v * static_cast<double>(j);
        }
    double vi = 0, vj = 0, cov = 0;
    for (std::size_t i = 0; i < L; ++i)
        for (std::size_t j = 0; j < L; ++j) {
            const double v = p[i * L + j], di = static_cast<double>(i) - mi, dj = static_cast<double>(j) - mj;
            vi += v * di * di;
            vj += v * dj * dj;
            cov += v * di * dj;
        }
    if (vi > 1e-12 && vj > 1e-12) f.correlation = cov / std::sqrt(vi * vj);
    return f;
}

template <typename T>
GlcmFeatures glcm_features(const Tensor<T>& image, const GlcmOptions& o) {
    return glcm_features_from_matrix(glcm_matrix(image, o), o.levels);
}

template <typename T>
RadiomicsLoss radiomics_loss(const Tensor<T>& denoised, const Tensor<T>& reference, const GlcmOptions& o) {
    require_shape(reference.shape(), denoised.shape(), "radiomics_loss: reference");
    const auto a = glcm_features(denoised, o), b = glcm_features(reference, o);
    RadiomicsLoss l;
    l.contrast = std::abs(a.contrast - b.contrast);
    l.dissimilarity = std::abs(a.dissimilarity - b.dissimilarity);
    if (a.correlation && b.correlation) l.correlation = std::abs(*a.correlation - *b.correlation);
    return l;
}

#define RIDNET_INSTANTIATE_METRICS(T)                                                       \
    template double mse(const Tensor<T>&, const Tensor<T>&);                                \
    template double psnr(const Tensor<T>&, const Tensor<T>&, double);                       \
    template double ssim(const Tensor<T>&, const Tensor<T>&, const SsimOptions&);           \
    template std::vector<double> glcm_matrix(const Tensor<T>&, const GlcmOptions&);         \
    template GlcmFeatures glcm_features(const Tensor<T>&, const GlcmOptions&);              \
    template RadiomicsLoss radiomics_loss(const Tensor<T>&, const Tensor<T>&, const GlcmOptions&);

RIDNET_INSTANTIATE_METRICS(float)
RIDNET_INSTANTIATE_METRICS(double)

}  // namespace ridnet
