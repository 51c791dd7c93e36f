#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "ridnet/data.hpp"
#include "ridnet/metrics.hpp"
#include "ridnet/training.hpp"

namespace ridnet {

struct MetricRow {
    std::string name;
    double psnr_db = 0, ssim = 0, glcm_contrast_loss = 0, glcm_dissimilarity_loss = 0;
    std::optional<double> glcm_correlation_loss;
};

/// Per-image metrics plus their mean. The aggregate correlation loss averages
/// the non-degenerate rows only; `degenerate_correlation` counts the rest.
struct MetricReport {
    std::vector<MetricRow> rows;
    MetricRow aggregate;
    std::size_t degenerate_correlation = 0;
    nlohmann::json config = nlohmann::json::object();

    void write_csv(const std::filesystem::path& path) const;
    nlohmann::json summary() const;
    void write_json(const std::filesystem::path& path) const;
};

struct EvalOptions {
    SsimOptions ssim;
    GlcmOptions glcm;
};

MetricRow image_metrics(const Tensor<float>& image, const Tensor<float>& reference, const EvalOptions& options = {});

MetricReport evaluate_images(const std::vector<Tensor<float>>& images, const std::vector<Tensor<float>>& references,
                             const std::vector<std::string>& names, const EvalOptions& options = {});

/// Patches whose target is not constant; constant patches (pure air after
/// windowing) give saturated PSNR on both sides and say nothing about denoising.
std::vector<PatchSample> informative_patches(const std::vector<PatchSample>& samples);

/// Centre slice of each sample's low-dose stack.
std::vector<Tensor<float>> noisy_centers(const std::vector<PatchSample>& samples);

struct DenoiseComparison {
    MetricReport noisy;
    MetricReport denoised;
    double psnr_gain_db() const { return denoised.aggregate.psnr_db - noisy.aggregate.psnr_db; }
    double contrast_loss_change() const {
        return denoised.aggregate.glcm_contrast_loss - noisy.aggregate.glcm_contrast_loss;
    }
};

DenoiseComparison compare_on_patches(const ParamStore<float>& generator, const GeneratorConfig& config,
                                     const std::vector<PatchSample>& samples, const EvalOptions& options = {});

enum class SweepAxis { k_neighbors, block_count };

SweepAxis parse_sweep_axis(const std::string& s);
std::string to_string(SweepAxis a);

struct SweepOptions {
    SweepAxis axis = SweepAxis::k_neighbors;
    std::vector<std::size_t> values;
    GeneratorConfig generator = GeneratorConfig::desk();
    TrainConfig train = TrainConfig::micro();
    std::filesystem::path out_dir = "sweep";
    EvalOptions eval;
};

struct SweepRow {
    std::string axis;
    std::size_t value = 0;
    /// "ok" or "error: <message>".
    std::string status = "ok";
    double psnr_db = 0, ssim = 0, glcm_contrast_loss = 0, glcm_correlation_loss = 0, glcm_dissimilarity_loss = 0;
    double wall_time_s = 0;
};

/// Trains one model per value (same seed and data) and evaluates it. A
/// failing value yields an error row; the sweep continues.
std::vector<SweepRow> run_sweep(const SweepOptions& options, const std::vector<PatchSample>& train_set,
                                const std::vector<PatchSample>& eval_set);

void write_sweep_csv(const std::vector<SweepRow>& rows, const std::filesystem::path& path);

}  // namespace ridnet
