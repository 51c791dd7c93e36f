#include "ridnet/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <stdexcept>

#include "json.hpp"

#include "ridnet/rng.hpp"

namespace ridnet {

namespace {

struct Ellipsoid {
    double cx, cy, cz;  // x, y normalised to [-1,1]; z in slices
    double ax, ay, az;
    double hu;
};

struct Vessel {
    double x0, y0, dx, dy;  // centre drift per slice
    double radius;          // normalised units
    double hu;
};

constexpr double kBodyAx = 0.9, kBodyAy = 0.75, kBodyHu = 40.0, kAirHu = -1000.0;

double norm_coord(std::size_t i, std::size_t n) { return (static_cast<double>(i) + 0.5) / static_cast<double>(n) * 2.0 - 1.0; }

bool inside_body(double x, double y) { return (x / kBodyAx) * (x / kBodyAx) + (y / kBodyAy) * (y / kBodyAy) <= 1.0; }

double lesion_slice_radius(double radius) { return std::max(1.5, radius / 2.0); }

bool inside_lesion(const LesionSpec& l, double s, double r, double c) {
    const double ds = (s - l.slice) / lesion_slice_radius(l.radius);
    const double dr = (r - l.row) / l.radius, dc = (c - l.col) / l.radius;
    return ds * ds + dr * dr + dc * dc <= 1.0;
}

}  // namespace

Volume generate_phantom(std::uint64_t seed, const PhantomOptions& o, std::vector<std::uint8_t>* lesion_mask) {
    if (o.slices < 9 || o.rows < 64 || o.cols < 64)
        throw std::invalid_argument("phantom dims must be at least (9,64,64), got (" + std::to_string(o.slices) + "," +
                                    std::to_string(o.rows) + "," + std::to_string(o.cols) + ")");
    rng::CounterRng g(seed, rng::phantom);
    const double S = static_cast<double>(o.slices);

    std::vector<Ellipsoid> organs(3 + g.below(4));
    for (auto& e : organs) {
        e.cx = g.uniform(-0.55, 0.55);
        e.cy = g.uniform(-0.45, 0.45);
        e.cz = g.uniform(0.0, S - 1.0);
        e.ax = g.uniform(0.1, 0.3);
        e.ay = g.uniform(0.1, 0.3);
        e.az = g.uniform(1.5, 4.0);
        e.hu = g.uniform(-100.0, 100.0);
    }
    std::vector<Vessel> vessels(2 + g.below(3));
    for (auto& v : vessels) {
        v.x0 = g.uniform(-0.6, 0.6);
        v.y0 = g.uniform(-0.5, 0.5);
        v.dx = g.uniform(-0.02, 0.02);
        v.dy = g.uniform(-0.02, 0.02);
        v.radius = g.uniform(1.0, 2.0) * 2.0 / static_cast<double>(o.cols);
        v.hu = g.uniform(180.0, 220.0);
    }
    std::vector<LesionSpec> random_lesions;
    const std::size_t n_lesions = 2 + g.below(3);
    for (std::size_t i = 0; i < n_lesions; ++i) {
        LesionSpec l;
        const double x = g.uniform(-0.5, 0.5), y = g.uniform(-0.45, 0.45);
        l.col = (x + 1.0) / 2.0 * static_cast<double>(o.cols) - 0.5;
        l.row = (y + 1.0) / 2.0 * static_cast<double>(o.rows) - 0.5;
        l.slice = g.uniform(1.0, S - 2.0);
        l.radius = g.uniform(2.0, 5.0);
        l.contrast = g.uniform() < 0.5 ? -20.0 : 20.0;
        if (!o.only_requested_lesions) random_lesions.push_back(l);
    }

    Volume v;
    v.slices = o.slices;
    v.rows = o.rows;
    v.cols = o.cols;
    v.hu.assign(v.voxels(), static_cast<float>(kAirHu));
    v.provenance.seed = seed;
    if (lesion_mask) lesion_mask->assign(v.voxels(), 0);

    for (std::size_t s = 0; s < o.slices; ++s) {
        const double z = static_cast<double>(s);
        for (std::size_t r = 0; r < o.rows; ++r) {
            const double y = norm_coord(r, o.rows);
            for (std::size_t c = 0; c < o.cols; ++c) {
                const double x = norm_coord(c, o.cols);
                if (!inside_body(x, y)) continue;
                double hu = kBodyHu;
                for (const auto& e : organs) {
                    const double dx = (x - e.cx) / e.ax, dy = (y - e.cy) / e.ay, dz = (z - e.cz) / e.az;
                    if (dx * dx + dy * dy + dz * dz <= 1.0) hu = e.hu;
                }
                for (const auto& l : random_lesions)
                    if (inside_lesion(l, z, static_cast<double>(r), static_cast<double>(c))) hu += l.contrast;
                for (const auto& vs : vessels) {
                    const double vx = vs.x0 + vs.dx * (z - S / 2.0), vy = vs.y0 + vs.dy * (z - S / 2.0);
                    if ((x - vx) * (x - vx) + (y - vy) * (y - vy) <= vs.radius * vs.radius) hu = vs.hu;
                }
                for (std::size_t k = 0; k < o.lesions.size(); ++k)
                    if (inside_lesion(o.lesions[k], z, static_cast<double>(r), static_cast<double>(c))) {
                        hu += o.lesions[k].contrast;
                        if (lesion_mask) (*lesion_mask)[v.index(s, r, c)] = static_cast<std::uint8_t>(1 + k);
                    }
                v.hu[v.index(s, r, c)] = static_cast<float>(std::clamp(hu, kHuMin, kHuMax));
            }
        }
    }
    return v;
}

double hu_to_attenuation(double hu, const NoiseModel& m) { return m.mu_water * (1.0 + hu / 1000.0); }
double attenuation_to_hu(double mu, const NoiseModel& m) { return 1000.0 * (mu / m.mu_water - 1.0); }

Volume insert_poisson_noise(const Volume& clean, double dose, std::uint64_t seed, const NoiseModel& m) {
    if (!(dose > 0.0 && dose <= 1.0))
        throw std::invalid_argument("dose fraction must be in (0,1], got " + std::to_string(dose));
    if (!(m.i0 > 0.0)) throw std::invalid_argument("I0 must be positive");
    if (!(m.mu_water > 0.0 && m.path_mm > 0.0)) throw std::invalid_argument("noise model constants must be positive");
    Volume out = clean;
    out.provenance.dose_fraction = dose;
    out.provenance.i0 = m.i0;
    out.provenance.noise_seed = seed;
    out.provenance.flagged = 0;
    const double blank = dose * m.i0;
    constexpr double kMaxCounts = 1e15;
    const std::size_t plane = clean.rows * clean.cols;
    for (std::size_t s = 0; s < clean.slices; ++s) {
        std::mt19937_64 engine(rng::hash(seed, rng::noise, s));
        for (std::size_t i = s * plane; i < (s + 1) * plane; ++i) {
            const double mu = std::max(0.0, hu_to_attenuation(clean.hu[i], m));
            double lambda = blank * std::exp(-mu * m.path_mm);
            bool flagged = false;
            if (!std::isfinite(lambda) || lambda > kMaxCounts) {
                lambda = kMaxCounts;
                flagged = true;
            } else if (lambda < 1.0) {
                lambda = 1.0;
                flagged = true;
            }
            auto n = static_cast<double>(std::poisson_distribution<long long>(lambda)(engine));
            if (n < 1.0) {
                n = 1.0;
                flagged = true;
            }
            if (flagged) ++out.provenance.flagged;
            const double noisy_mu = -std::log(n / blank) / m.path_mm;
            out.hu[i] = static_cast<float>(std::clamp(attenuation_to_hu(noisy_mu, m), kHuMin, kHuMax));
        }
    }
    return out;
}

void WindowSpec::validate() const {
    if (!(width > 0.0)) throw std::invalid_argument("window width must be positive");
}

Protocol Protocol::parse(const std::string& name) {
    if (name == "abdomen") return {name, WindowSpec::abdomen(), 0.25};
    if (name == "chest") return {name, WindowSpec::chest(), 0.10};
    throw std::invalid_argument("unknown protocol '" + name + "' (abdomen|chest)");
}

double window_normalize(double hu, const WindowSpec& w) { return std::clamp((hu - w.lower()) / w.width, 0.0, 1.0); }

double window_denormalize(double v, const WindowSpec& w) { return v * w.width + w.lower(); }

std::vector<float> window_normalize(const Volume& v, const WindowSpec& w) {
    w.validate();
    std::vector<float> out(v.hu.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(window_normalize(v.hu[i], w));
    return out;
}

std::vector<PatchSample> extract_patches(const Volume& low, const Volume& normal, const WindowSpec& window,
                                         const PatchOptions& o) {
    if (low.slices != normal.slices || low.rows != normal.rows || low.cols != normal.cols)
        throw std::invalid_argument("low-dose and normal-dose volumes are not aligned");
    if (low.slices < 3) throw std::invalid_argument("need at least 3 slices to form a stack");
    if (o.patch == 0 || o.patch > low.rows || o.patch > low.cols)
        throw std::invalid_argument("patch size " + std::to_string(o.patch) + " does not fit the slice");
    const auto lo = window_normalize(low, window);
    const auto no = window_normalize(normal, window);
    const std::size_t P = o.patch, tr = low.rows / P, tc = low.cols / P;
    const std::size_t plane = low.rows * low.cols;
    rng::CounterRng jitter(rng::hash(o.seed, rng::patch_jitter, o.volume_id), rng::patch_jitter);

    std::vector<PatchSample> out;
    out.reserve((low.slices - 2) * tr * tc);
    for (std::size_t s = 1; s + 1 < low.slices; ++s) {
        std::size_t r_off = 0, c_off = 0;
        if (o.random_offset) {
            r_off = jitter.below(low.rows - tr * P + 1);
            c_off = jitter.below(low.cols - tc * P + 1);
        }
        for (std::size_t ti = 0; ti < tr; ++ti)
            for (std::size_t tj = 0; tj < tc; ++tj) {
                PatchSample p;
                p.volume = o.volume_id;
                p.slice = s;
                p.row = r_off + ti * P;
                p.col = c_off + tj * P;
                p.low = Tensor<float>(Shape{3, P, P});
                p.target = Tensor<float>(Shape{P, P});
                auto l = p.low.mutable_data();
                auto t = p.target.mutable_data();
                for (std::size_t d = 0; d < 3; ++d)
                    for (std::size_t r = 0; r < P; ++r)
                        for (std::size_t c = 0; c < P; ++c)
                            l[(d * P + r) * P + c] = lo[(s + d - 1) * plane + (p.row + r) * low.cols + p.col + c];
                for (std::size_t r = 0; r < P; ++r)
                    for (std::size_t c = 0; c < P; ++c) t[r * P + c] = no[s * plane + (p.row + r) * low.cols + p.col + c];
                out.push_back(std::move(p));
            }
    }
    return out;
}

std::vector<PatchSample> synthetic_patches(std::uint64_t seed, std::size_t count, const SyntheticSpec& spec) {
    std::vector<PatchSample> out;
    for (std::size_t v = 0; out.size() < count; ++v) {
        const auto clean = generate_phantom(seed + v, spec.phantom);
        const auto noisy = insert_poisson_noise(clean, spec.dose_fraction, rng::hash(seed + v, rng::noise, 0), spec.noise);
        PatchOptions po = spec.patches;
        po.volume_id = v;
        auto part = extract_patches(noisy, clean, spec.window, po);
        if (part.empty()) throw std::invalid_argument("phantom yields no patches at this patch size");
        for (auto& p : part) {
            if (out.size() == count) break;
            out.push_back(std::move(p));
        }
    }
    return out;
}

Tensor<float> slice_stack(const Volume& v, std::size_t s, const WindowSpec& window) {
    if (s >= v.slices) throw std::out_of_range("slice index out of range");
    const std::size_t plane = v.rows * v.cols;
    Tensor<float> out(Shape{3, v.rows, v.cols});
    auto o = out.mutable_data();
    const auto n = static_cast<std::ptrdiff_t>(v.slices);
    for (std::ptrdiff_t d = -1; d <= 1; ++d) {
        std::ptrdiff_t src = static_cast<std::ptrdiff_t>(s) + d;
        if (src < 0) src = n > 1 ? -src : 0;
        if (src >= n) src = n > 1 ? 2 * (n - 1) - src : 0;
        for (std::size_t i = 0; i < plane; ++i)
            o[static_cast<std::size_t>(d + 1) * plane + i] =
                static_cast<float>(window_normalize(v.hu[static_cast<std::size_t>(src) * plane + i], window));
    }
    return out;
}

namespace {

std::filesystem::path with_ext(const std::filesystem::path& stem, const char* ext) {
    return std::filesystem::path(stem.string() + ext);
}

void write_f32le(std::ofstream& f, const std::vector<float>& v) {
    if constexpr (std::endian::native == std::endian::little) {
        f.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(float)));
    } else {
        for (float x : v) {
            auto b = std::bit_cast<std::uint32_t>(x);
            b = ((b & 0xffu) << 24) | ((b & 0xff00u) << 8) | ((b >> 8) & 0xff00u) | (b >> 24);
            f.write(reinterpret_cast<const char*>(&b), 4);
        }
    }
}

void read_f32le(std::ifstream& f, std::vector<float>& v) {
    f.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(float)));
    if constexpr (std::endian::native != std::endian::little) {
        for (float& x : v) {
            auto b = std::bit_cast<std::uint32_t>(x);
            b = ((b & 0xffu) << 24) | ((b & 0xff00u) << 8) | ((b >> 8) & 0xff00u) | (b >> 24);
            x = std::bit_cast<float>(b);
        }
    }
}

}  // namespace

void save_volume(const Volume& v, const std::filesystem::path& stem, const WindowSpec& hint) {
    if (v.hu.size() != v.voxels()) throw std::invalid_argument("volume data length does not match its dims");
    nlohmann::json j;
    j["dims"] = {v.slices, v.rows, v.cols};
    j["spacing"] = v.spacing;
    j["dtype"] = "f32le";
    j["window_hint"] = {{"width", hint.width}, {"level", hint.level}};
    j["provenance"] = {{"seed", v.provenance.seed},
                       {"generator", v.provenance.generator},
                       {"dose_fraction", v.provenance.dose_fraction},
                       {"i0", v.provenance.i0},
                       {"noise_seed", v.provenance.noise_seed},
                       {"flagged_voxels", v.provenance.flagged}};
    std::ofstream js(with_ext(stem, ".json"));
    if (!js) throw std::runtime_error("cannot write " + with_ext(stem, ".json").string());
    js << j.dump(2) << "\n";
    std::ofstream raw(with_ext(stem, ".raw"), std::ios::binary);
    if (!raw) throw std::runtime_error("cannot write " + with_ext(stem, ".raw").string());
    write_f32le(raw, v.hu);
    if (!raw) throw std::runtime_error("write failed for " + with_ext(stem, ".raw").string());
}

Volume load_volume(const std::filesystem::path& stem) {
    std::ifstream js(with_ext(stem, ".json"));
    if (!js) throw std::runtime_error("cannot open " + with_ext(stem, ".json").string());
    nlohmann::json j;
    try {
        js >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("malformed volume sidecar " + with_ext(stem, ".json").string() + ": " + e.what());
    }
    if (j.value("dtype", "") != "f32le") throw std::runtime_error("unsupported volume dtype in " + stem.string());
    Volume v;
    const auto dims = j.at("dims").get<std::vector<std::size_t>>();
    if (dims.size() != 3) throw std::runtime_error("volume dims must have 3 entries");
    v.slices = dims[0];
    v.rows = dims[1];
    v.cols = dims[2];
    v.spacing = j.at("spacing").get<std::array<double, 3>>();
    const auto& p = j.at("provenance");
    v.provenance.seed = p.at("seed").get<std::uint64_t>();
    v.provenance.generator = p.at("generator").get<std::string>();
    v.provenance.dose_fraction = p.at("dose_fraction").get<double>();
    v.provenance.i0 = p.at("i0").get<double>();
    v.provenance.noise_seed = p.at("noise_seed").get<std::uint64_t>();
    v.provenance.flagged = p.at("flagged_voxels").get<std::size_t>();
    v.hu.resize(v.voxels());
    std::ifstream raw(with_ext(stem, ".raw"), std::ios::binary | std::ios::ate);
    if (!raw) throw std::runtime_error("cannot open " + with_ext(stem, ".raw").string());
    if (static_cast<std::size_t>(raw.tellg()) != v.voxels() * sizeof(float))
        throw std::runtime_error("raw size of " + stem.string() + " does not match its dims");
    raw.seekg(0);
    read_f32le(raw, v.hu);
    return v;
}

void write_pgm(const Volume& v, std::size_t slice, const WindowSpec& window, const std::filesystem::path& path) {
    if (slice >= v.slices) throw std::out_of_range("slice index out of range");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f << "P5\n" << v.cols << " " << v.rows << "\n65535\n";
    for (std::size_t r = 0; r < v.rows; ++r)
        for (std::size_t c = 0; c < v.cols; ++c) {
            const auto q = static_cast<std::uint16_t>(std::lround(window_normalize(v.at(slice, r, c), window) * 65535.0));
            const char bytes[2] = {static_cast<char>(q >> 8), static_cast<char>(q & 0xff)};
            f.write(bytes, 2);
        }
}

}  // namespace ridnet
