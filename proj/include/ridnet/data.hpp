#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ridnet/tensor.hpp"

namespace ridnet {

inline constexpr double kHuMin = -1024.0;
inline constexpr double kHuMax = 3071.0;

struct Provenance {
    std::uint64_t seed = 0;
    std::string generator = "phantom-v1";
    /// 1.0 for clean volumes.
    double dose_fraction = 1.0;
    double i0 = 0.0;
    std::uint64_t noise_seed = 0;
    /// Voxels whose photon count had to be clamped.
    std::size_t flagged = 0;
};

/// CT volume in HU, row-major (slice, row, col).
struct Volume {
    std::size_t slices = 0, rows = 0, cols = 0;
    std::vector<float> hu;
    /// mm per (slice, row, col).
    std::array<double, 3> spacing{2.5, 0.7, 0.7};
    Provenance provenance;

    std::size_t index(std::size_t s, std::size_t r, std::size_t c) const { return (s * rows + r) * cols + c; }
    float at(std::size_t s, std::size_t r, std::size_t c) const { return hu[index(s, r, c)]; }
    std::size_t voxels() const { return slices * rows * cols; }
};

/// Spherical lesion in voxel coordinates; contrast is added to the HU beneath it.
struct LesionSpec {
    double slice = 0, row = 0, col = 0;
    /// In-plane radius in pixels; the slice-axis radius is max(1.5, radius / 2) slices.
    double radius = 4;
    double contrast = 20;
};

struct PhantomOptions {
    std::size_t slices = 9, rows = 64, cols = 64;
    /// Randomly placed lesions are always added; these come on top.
    std::vector<LesionSpec> lesions;
    /// When true, no random lesions are placed.
    bool only_requested_lesions = false;
};

/// Deterministic abdominal-like phantom: air outside a soft-tissue ellipse,
/// ellipsoidal organs, low-contrast lesions and thin vessels that span
/// several slices. `lesion_mask`, when given, marks voxels of the requested
/// lesions (value = 1 + lesion index).
Volume generate_phantom(std::uint64_t seed, const PhantomOptions& options, std::vector<std::uint8_t>* lesion_mask = nullptr);

struct NoiseModel {
    /// Linear attenuation of water, per mm.
    double mu_water = 0.02;
    /// Effective path length, mm.
    double path_mm = 10.0;
    double i0 = 1e5;
};

double hu_to_attenuation(double hu, const NoiseModel& model);
double attenuation_to_hu(double mu, const NoiseModel& model);

/// Transmission-domain Poisson noise for a reduced dose.
Volume insert_poisson_noise(const Volume& clean, double dose_fraction, std::uint64_t seed,
                            const NoiseModel& model = {});

struct WindowSpec {
    double width = 400;
    double level = 40;

    void validate() const;
    double lower() const { return level - width / 2; }
    static WindowSpec abdomen() { return {400, 40}; }
    static WindowSpec chest() { return {1500, -600}; }
};

/// Abdomen: window (400, 40) at dose 0.25. Chest: (1500, -600) at dose 0.10.
struct Protocol {
    std::string name;
    WindowSpec window;
    double dose_fraction;

    static Protocol parse(const std::string& name);
};

double window_normalize(double hu, const WindowSpec& w);
double window_denormalize(double v, const WindowSpec& w);
std::vector<float> window_normalize(const Volume& v, const WindowSpec& w);

struct PatchSample {
    Tensor<float> low;     // [3,P,P]
    Tensor<float> target;  // [P,P]
    std::size_t volume = 0, slice = 0, row = 0, col = 0;
};

struct PatchOptions {
    std::size_t patch = 64;
    /// Shift the tile grid of each slice by a seeded offset.
    bool random_offset = false;
    std::uint64_t seed = 0;
    std::size_t volume_id = 0;
};

/// Non-overlapping tiles of every interior slice: low-dose (i-1, i, i+1) and
/// normal-dose slice i, windowed to [0,1].
std::vector<PatchSample> extract_patches(const Volume& low, const Volume& normal, const WindowSpec& window,
                                         const PatchOptions& options = {});

struct SyntheticSpec {
    PhantomOptions phantom;
    double dose_fraction = 0.25;
    NoiseModel noise;
    WindowSpec window = WindowSpec::abdomen();
    PatchOptions patches;
};

/// Patches from phantoms seeded seed, seed+1, ... until `count` samples
/// exist (truncated to exactly `count`).
std::vector<PatchSample> synthetic_patches(std::uint64_t seed, std::size_t count, const SyntheticSpec& spec);

/// Normalised [3,H,W] stack of slices (s-1, s, s+1), edge slices mirrored.
Tensor<float> slice_stack(const Volume& v, std::size_t s, const WindowSpec& window);

/// `<stem>.json` sidecar and `<stem>.raw` little-endian float32 HU.
void save_volume(const Volume& v, const std::filesystem::path& stem, const WindowSpec& window_hint = {});
Volume load_volume(const std::filesystem::path& stem);

/// 16-bit binary PGM of one windowed slice.
void write_pgm(const Volume& v, std::size_t slice, const WindowSpec& window, const std::filesystem::path& path);

}  // namespace ridnet
