#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "ridnet/data.hpp"

using namespace ridnet;
namespace fs = std::filesystem;

namespace {

Volume uniform_volume(float hu, std::size_t s = 9, std::size_t r = 64, std::size_t c = 64) {
    Volume v;
    v.slices = s;
    v.rows = r;
    v.cols = c;
    v.hu.assign(s * r * c, hu);
    return v;
}

double noise_std(const Volume& clean, const Volume& noisy) {
    double s = 0, s2 = 0;
    for (std::size_t i = 0; i < clean.voxels(); ++i) {
        const double d = static_cast<double>(noisy.hu[i]) - static_cast<double>(clean.hu[i]);
        s += d;
        s2 += d * d;
    }
    const double n = static_cast<double>(clean.voxels());
    return std::sqrt(s2 / n - (s / n) * (s / n));
}

}  // namespace

TEST_CASE("phantom is deterministic, bounded and shaped like a body") {
    const auto a = generate_phantom(5, {});
    const auto b = generate_phantom(5, {});
    const auto c = generate_phantom(6, {});
    CHECK(a.hu == b.hu);
    CHECK(a.hu != c.hu);
    CHECK(a.slices == 9);
    CHECK(a.rows == 64);
    CHECK(a.voxels() == a.hu.size());
    for (float v : a.hu) CHECK((v >= kHuMin && v <= kHuMax));
    CHECK(a.at(0, 0, 0) == -1000.0f);
    CHECK(a.at(4, 63, 63) == -1000.0f);
    // soft tissue at the centre of the body
    CHECK(std::abs(a.at(4, 32, 32)) < 400.0f);
    PhantomOptions small;
    small.rows = 32;
    CHECK_THROWS_AS(generate_phantom(1, small), std::invalid_argument);
}

TEST_CASE("requested lesions add their contrast inside the mask") {
    PhantomOptions base;
    base.only_requested_lesions = true;
    PhantomOptions with = base;
    with.lesions.push_back({4, 30, 34, 5, 25});
    std::vector<std::uint8_t> mask;
    const auto plain = generate_phantom(9, base);
    const auto les = generate_phantom(9, with, &mask);
    REQUIRE(mask.size() == les.voxels());
    std::size_t inside = 0;
    for (std::size_t i = 0; i < les.voxels(); ++i) {
        if (mask[i]) {
            ++inside;
            CHECK(mask[i] == 1);
            CHECK(les.hu[i] - plain.hu[i] == doctest::Approx(25.0f));
        } else {
            CHECK(les.hu[i] == plain.hu[i]);
        }
    }
    // radius 5 in-plane, 2.5 slices deep
    CHECK(inside > 200);
    CHECK(mask[les.index(4, 30, 34)] == 1);
    CHECK(mask[les.index(4, 30, 40)] == 0);
    CHECK(mask[les.index(1, 30, 34)] == 0);
}

TEST_CASE("attenuation conversion round trips") {
    const NoiseModel m;
    CHECK(hu_to_attenuation(0, m) == doctest::Approx(m.mu_water));
    CHECK(hu_to_attenuation(-1000, m) == doctest::Approx(0.0));
    for (double hu : {-1000.0, -350.0, 0.0, 40.0, 1200.0}) CHECK(attenuation_to_hu(hu_to_attenuation(hu, m), m) == doctest::Approx(hu));
}

TEST_CASE("Poisson noise on water matches the delta-method prediction") {
    const auto water = uniform_volume(0.0f);
    const NoiseModel m;
    for (double dose : {1.0, 0.25, 0.1}) {
        const auto noisy = insert_poisson_noise(water, dose, 77, m);
        const double mean_counts = m.i0 * dose * std::exp(-m.mu_water * m.path_mm);
        const double predicted = 1000.0 / (m.mu_water * m.path_mm) / std::sqrt(mean_counts);
        CHECK(noise_std(water, noisy) == doctest::Approx(predicted).epsilon(0.05));
        CHECK(noisy.provenance.dose_fraction == dose);
    }
}

TEST_CASE("noise grows as dose falls and is reproducible") {
    const auto clean = generate_phantom(3, {});
    const auto q = insert_poisson_noise(clean, 0.25, 1);
    const auto f = insert_poisson_noise(clean, 1.0, 1);
    CHECK(noise_std(clean, q) > 1.8 * noise_std(clean, f));
    CHECK(insert_poisson_noise(clean, 0.25, 1).hu == q.hu);
    CHECK(insert_poisson_noise(clean, 0.25, 2).hu != q.hu);
    CHECK_THROWS_AS(insert_poisson_noise(clean, 0.0, 1), std::invalid_argument);
    CHECK_THROWS_AS(insert_poisson_noise(clean, 1.5, 1), std::invalid_argument);
}

TEST_CASE("extreme attenuation is flagged rather than producing infinities") {
    NoiseModel tiny;
    tiny.i0 = 1.0;
    const auto dense = uniform_volume(3000.0f, 9, 64, 64);
    const auto noisy = insert_poisson_noise(dense, 0.1, 3, tiny);
    CHECK(noisy.provenance.flagged > 0);
    for (float v : noisy.hu) CHECK((std::isfinite(v) && v >= kHuMin && v <= kHuMax));
}

TEST_CASE("windowing") {
    const auto w = WindowSpec::abdomen();
    CHECK(window_normalize(-160, w) == 0.0);
    CHECK(window_normalize(240, w) == 1.0);
    CHECK(window_normalize(40, w) == doctest::Approx(0.5));
    CHECK(window_normalize(-1000, w) == 0.0);
    for (double hu : {-150.0, 0.0, 100.0, 239.0}) CHECK(window_denormalize(window_normalize(hu, w), w) == doctest::Approx(hu));
    const auto chest = Protocol::parse("chest");
    CHECK(chest.window.width == 1500);
    CHECK(chest.window.level == -600);
    CHECK(chest.dose_fraction == 0.10);
    CHECK(Protocol::parse("abdomen").dose_fraction == 0.25);
    CHECK_THROWS_AS(Protocol::parse("head"), std::invalid_argument);
    CHECK_THROWS_AS((WindowSpec{0, 40}.validate()), std::invalid_argument);
}

TEST_CASE("patches pair the low-dose neighbourhood with the clean centre") {
    const auto clean = generate_phantom(4, {});
    const auto noisy = insert_poisson_noise(clean, 0.25, 4);
    const auto w = WindowSpec::abdomen();
    PatchOptions o;
    o.patch = 32;
    const auto ps = extract_patches(noisy, clean, w, o);
    CHECK(ps.size() == 7 * 2 * 2);
    for (const auto& p : ps) {
        REQUIRE(p.low.shape() == Shape{3, 32, 32});
        REQUIRE(p.target.shape() == Shape{32, 32});
        CHECK((p.slice >= 1 && p.slice <= 7));
        for (std::size_t d = 0; d < 3; ++d)
            for (std::size_t r = 0; r < 32; r += 7)
                for (std::size_t c = 0; c < 32; c += 5)
                    CHECK(p.low[(d * 32 + r) * 32 + c] ==
                          static_cast<float>(window_normalize(noisy.at(p.slice + d - 1, p.row + r, p.col + c), w)));
        for (std::size_t r = 0; r < 32; r += 3)
            CHECK(p.target[r * 32 + r] == static_cast<float>(window_normalize(clean.at(p.slice, p.row + r, p.col + r), w)));
    }
    o.random_offset = true;
    o.seed = 9;
    const auto jittered = extract_patches(noisy, clean, w, o);
    for (const auto& p : jittered) CHECK((p.row + 32 <= 64 && p.col + 32 <= 64));
    CHECK_THROWS_AS(extract_patches(noisy, uniform_volume(0, 9, 32, 32), w, o), std::invalid_argument);
}

TEST_CASE("synthetic patches have the requested count") {
    SyntheticSpec spec;
    spec.patches.patch = 32;
    const auto ps = synthetic_patches(1, 50, spec);
    CHECK(ps.size() == 50);
    CHECK(ps.back().volume == 1);
    const auto again = synthetic_patches(1, 50, spec);
    for (std::size_t i = 0; i < ps.size(); ++i) {
        auto a = ps[i].low.data(), b = again[i].low.data();
        CHECK(std::equal(a.begin(), a.end(), b.begin()));
    }
}

TEST_CASE("slice stacks mirror at the volume edges") {
    const auto v = generate_phantom(2, {});
    const auto w = WindowSpec::abdomen();
    const auto first = slice_stack(v, 0, w);
    CHECK(first.shape() == Shape{3, 64, 64});
    for (std::size_t p = 0; p < 4096; p += 97) {
        CHECK(first[p] == first[2 * 4096 + p]);
        CHECK(first[2 * 4096 + p] == static_cast<float>(window_normalize(v.hu[4096 + p], w)));
    }
    CHECK_THROWS(slice_stack(v, 9, w));
}

TEST_CASE("volume files round trip with their sidecar") {
    const auto dir = fs::temp_directory_path() / "ridnet_unit_volume";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const auto v = insert_poisson_noise(generate_phantom(8, {}), 0.25, 8);
    save_volume(v, dir / "vol", WindowSpec::chest());
    const auto back = load_volume(dir / "vol");
    CHECK(back.hu == v.hu);
    CHECK(back.slices == v.slices);
    CHECK(back.spacing == v.spacing);
    CHECK(back.provenance.seed == v.provenance.seed);
    CHECK(back.provenance.dose_fraction == v.provenance.dose_fraction);
    CHECK(back.provenance.noise_seed == v.provenance.noise_seed);
    CHECK(fs::file_size(dir / "vol.raw") == v.voxels() * 4);
    CHECK_THROWS(load_volume(dir / "absent"));

    write_pgm(v, 4, WindowSpec::abdomen(), dir / "s.pgm");
    std::ifstream f(dir / "s.pgm", std::ios::binary);
    std::string magic;
    std::size_t w = 0, h = 0, maxv = 0;
    f >> magic >> w >> h >> maxv;
    CHECK(magic == "P5");
    CHECK(w == 64);
    CHECK(h == 64);
    CHECK(maxv == 65535);
    fs::remove_all(dir);
}
