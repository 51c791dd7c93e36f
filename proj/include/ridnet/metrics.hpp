#pragma once

#include <optional>
#include <vector>

#include "ridnet/tensor.hpp"

namespace ridnet {

/// PSNR reported for identical images.
inline constexpr double kPsnrCap = 99.0;

/// 10 log10(peak^2 / MSE), capped at kPsnrCap.
template <typename T>
double psnr(const Tensor<T>& a, const Tensor<T>& b, double peak = 1.0);

template <typename T>
double mse(const Tensor<T>& a, const Tensor<T>& b);

struct SsimOptions {
    std::size_t window = 8;
    double k1 = 0.01;
    double k2 = 0.03;
    double peak = 1.0;
};

/// Mean SSIM over every window position of a uniform window (population
/// statistics). Images are [H,W].
template <typename T>
double ssim(const Tensor<T>& a, const Tensor<T>& b, const SsimOptions& options = {});

struct GlcmOptions {
    std::size_t levels = 64;
    std::ptrdiff_t d_row = 0;
    std::ptrdiff_t d_col = 1;
    /// Count each pair in both directions.
    bool symmetric = true;
};

/// Gray level of a [0,1] value: min(levels-1, floor(v * levels)), v clamped.
std::size_t quantize(double v, std::size_t levels);

/// Normalised co-occurrence matrix, levels x levels row-major.
template <typename T>
std::vector<double> glcm_matrix(const Tensor<T>& image, const GlcmOptions& options = {});

struct GlcmFeatures {
    double contrast = 0.0;
    double dissimilarity = 0.0;
    /// Empty when either marginal has zero variance.
    std::optional<double> correlation;
};

GlcmFeatures glcm_features_from_matrix(const std::vector<double>& p, std::size_t levels);

template <typename T>
GlcmFeatures glcm_features(const Tensor<T>& image, const GlcmOptions& options = {});

struct RadiomicsLoss {
    double contrast = 0.0;
    double dissimilarity = 0.0;
    /// Empty when either side's correlation is degenerate.
    std::optional<double> correlation;
};

template <typename T>
RadiomicsLoss radiomics_loss(const Tensor<T>& denoised, const Tensor<T>& reference, const GlcmOptions& options = {});

}  // namespace ridnet
