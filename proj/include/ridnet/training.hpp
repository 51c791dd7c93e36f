#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ridnet/data.hpp"
#include "ridnet/model.hpp"
#include "ridnet/params.hpp"

namespace ridnet {

enum class LossMode { mse_only, gan_perceptual };

LossMode parse_loss_mode(const std::string& s);
std::string to_string(LossMode m);

struct TrainConfig {
    double lambda_perceptual = 0.1;
    double lambda_gp = 10.0;
    double lr_g = 1e-4;
    double lr_d = 4e-4;
    /// Learning rates are multiplied by gamma every decay_interval epochs.
    double gamma = 0.97;
    std::size_t decay_interval = 1;
    std::size_t batch = 32;
    std::size_t epochs = 40;
    std::size_t critic_steps = 1;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 1;
    std::uint64_t phi_seed = 7;
    LossMode loss = LossMode::gan_perceptual;
    /// Stop after this many steps (0: run all epochs).
    std::size_t max_steps = 0;

    void validate() const;
    double lr_at(double lr0, std::size_t epoch) const;

    static TrainConfig paper();
    static TrainConfig desk();
    /// Smallest useful run, for sweeps and smoke tests.
    static TrainConfig micro();
};

/// Image -> scalar critic on the caller's tape.
template <typename T>
using CriticFn = std::function<Var<T>(const Var<T>& image)>;

/// Strided critic: four 3x3 stride-2 zero-padded convolutions with
/// leaky-relu 0.2, then a linear map to one value. Sized for rows x cols inputs.
template <typename T>
ParamStore<T> init_critic(std::size_t rows, std::size_t cols, std::uint64_t seed);

template <typename T>
Var<T> critic_forward(const Var<T>& image, const ParamBinder<T>& params);

template <typename T>
CriticFn<T> bind_critic(const ParamBinder<T>& params);

/// Fixed convolutional feature extractor 1 -> 8 -> 16 -> 16 (relu) with 2x2
/// average pooling between layers; weights derived from a seed only.
template <typename T>
class FeatureExtractor {
public:
    explicit FeatureExtractor(std::uint64_t seed);

    /// [H,W] image -> feature map; differentiable w.r.t. the image only.
    Var<T> operator()(const Var<T>& image) const;
    Tensor<T> features(const Tensor<T>& image) const;

    std::uint64_t seed() const { return seed_; }
    const ParamStore<T>& weights() const { return weights_; }
    static constexpr std::size_t layers = 3;

private:
    std::uint64_t seed_;
    ParamStore<T> weights_;
};

template <typename T>
struct GeneratorLoss {
    Var<T> total;
    T mse = 0;
    T perceptual = 0;
    T adversarial = 0;
};

/// gan_perceptual: -mean D(G) + lambda * mean ||phi(G) - phi(y)||^2;
/// mse_only: mean over the batch of the per-image MSE. The other terms are
/// still reported (adversarial only when a critic is given).
template <typename T>
GeneratorLoss<T> generator_loss(const std::vector<Var<T>>& outputs, const std::vector<Tensor<T>>& targets,
                                const CriticFn<T>& critic, const FeatureExtractor<T>& phi, T lambda, LossMode mode);

template <typename T>
struct PenaltyTerm {
    Var<T> penalty;  // (||grad|| - 1)^2
    Var<T> norm;
};

/// Gradient penalty at x_hat, built so that it can be differentiated again.
template <typename T>
PenaltyTerm<T> gradient_penalty(const Var<T>& x_hat, const CriticFn<T>& critic);

template <typename T>
struct DiscriminatorLoss {
    Var<T> total;
    T wasserstein = 0;  // mean D(fake) - mean D(real)
    T penalty = 0;      // mean penalty, before lambda_gp
    std::vector<T> grad_norms;
};

/// mean D(fake) - mean D(real) + lambda_gp * mean (||grad D(x_hat)|| - 1)^2 with
/// x_hat = u real + (1-u) fake per sample.
template <typename T>
DiscriminatorLoss<T> discriminator_loss(Tape<T>& tape, const std::vector<Tensor<T>>& real,
                                        const std::vector<Tensor<T>>& fake, const CriticFn<T>& critic, T lambda_gp,
                                        const std::vector<T>& u);

/// Adam with per-parameter step counts. A parameter whose gradient is
/// entirely zero is skipped, leaving it and its moments untouched.
template <typename T>
class Adam {
public:
    struct Slot {
        Tensor<T> m, v;
        std::size_t steps = 0;
    };

    Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) : beta1_(beta1), beta2_(beta2), eps_(eps) {}

    /// Updates every store entry that has a gradient, then projects
    /// unit-interval entries onto [0,1].
    void step(ParamStore<T>& params, const GradMap<T>& grads, double lr);

    const std::map<std::string, Slot>& slots() const { return slots_; }
    std::map<std::string, Slot>& slots() { return slots_; }

private:
    double beta1_, beta2_, eps_;
    std::map<std::string, Slot> slots_;
};

/// Training state written to disk: generator and critic parameters plus the
/// settings needed to rebuild and resume them.
struct Checkpoint {
    static constexpr int kFormatVersion = 1;
    GeneratorConfig generator;
    TrainConfig train;
    std::size_t patch = 0;
    std::size_t epoch = 0;
    std::size_t step = 0;
    ParamStore<float> params;
};

/// `<stem>.json` manifest and `<stem>.bin` float32 little-endian blob.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& stem);
Checkpoint load_checkpoint(const std::filesystem::path& stem);

/// Raised when a loss or gradient turns non-finite.
class NumericalError : public std::runtime_error {
public:
    NumericalError(const std::string& what, std::size_t step, std::filesystem::path last_checkpoint)
        : std::runtime_error(what), step_(step), last_checkpoint_(std::move(last_checkpoint)) {}
    std::size_t step() const { return step_; }
    const std::filesystem::path& last_checkpoint() const { return last_checkpoint_; }

private:
    std::size_t step_;
    std::filesystem::path last_checkpoint_;
};

struct LogRow {
    std::size_t step = 0, epoch = 0;
    double mse = 0, perceptual = 0, adversarial_g = 0, critic_loss = 0, gp = 0, lr_g = 0, lr_d = 0;
};

struct TrainResult {
    Checkpoint final_checkpoint;
    std::vector<LogRow> log;
    std::filesystem::path final_path;
    std::optional<std::filesystem::path> best_path;
    double best_validation_mse = 0.0;
    double wall_seconds = 0.0;
};

struct TrainObserver {
    std::function<void(const LogRow&)> on_step;
    std::function<void(std::size_t epoch, double validation_mse)> on_epoch;
};

/// Runs the configured number of epochs over `train_set` (fixed shuffled
/// order per epoch), writing loss_log.csv, ckpt_epoch<k>.*, final.* and, with
/// a validation set, best.* into `out_dir`.
TrainResult train(const GeneratorConfig& generator, const TrainConfig& config, const std::vector<PatchSample>& train_set,
                  const std::vector<PatchSample>& validation_set, const std::filesystem::path& out_dir,
                  const TrainObserver& observer = {});

void write_loss_log(const std::vector<LogRow>& rows, const std::filesystem::path& path);

}  // namespace ridnet
