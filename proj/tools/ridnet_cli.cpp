// ridnet: data generation, training, denoising, evaluation, gradient audit
// and hyperparameter sweeps from the command line.
//
// Exit codes: 0 success, 1 I/O or other runtime failure, 2 usage, 3 numerical failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "json.hpp"

#include "ridnet/config_json.hpp"
#include "ridnet/data.hpp"
#include "ridnet/evaluation.hpp"
#include "ridnet/grad_audit.hpp"
#include "ridnet/model.hpp"
#include "ridnet/rng.hpp"
#include "ridnet/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ridnet;

namespace {

enum Exit { ok = 0, io = 1, usage = 2, numerical = 3 };

/// A usage error found after flag parsing (bad values, inconsistent options).
struct UsageError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

json read_config_file(const std::string& path) {
    if (path.empty()) return json::object();
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot read config file " + path);
    try {
        return json::parse(f);
    } catch (const json::exception& e) {
        throw UsageError("config file " + path + ": " + e.what());
    }
}

void write_resolved(const json& config, const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f << config.dump(2) << "\n";
}

std::array<std::size_t, 3> parse_dims(const std::string& s) {
    std::smatch m;
    static const std::regex re(R"((\d+)x(\d+)x(\d+))");
    if (!std::regex_match(s, m, re)) throw UsageError("--dims must look like 9x64x64, got '" + s + "'");
    return {std::stoul(m[1]), std::stoul(m[2]), std::stoul(m[3])};
}

std::vector<std::size_t> parse_values(const std::string& s) {
    std::vector<std::size_t> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty() || item.find_first_not_of("0123456789") != std::string::npos)
            throw UsageError("--values must be a comma-separated list of positive integers");
        out.push_back(std::stoul(item));
    }
    if (out.empty()) throw UsageError("--values is empty");
    return out;
}

WindowSpec window_named(const std::string& name) {
    if (name == "abdomen") return WindowSpec::abdomen();
    if (name == "chest") return WindowSpec::chest();
    throw UsageError("unknown window '" + name + "' (abdomen|chest)");
}

std::string volume_stem(const char* kind, std::size_t i) { return fmt::format("{}_{:04d}", kind, i); }

/// Paired (noisy, clean) volumes of a gen-data directory, in index order.
std::vector<std::pair<Volume, Volume>> load_pairs(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw std::runtime_error("data directory " + dir.string() + " does not exist");
    std::vector<std::pair<Volume, Volume>> out;
    for (std::size_t i = 0; fs::exists(dir / (volume_stem("clean", i) + ".json")); ++i)
        out.emplace_back(load_volume(dir / volume_stem("noisy", i)), load_volume(dir / volume_stem("clean", i)));
    if (out.empty()) throw std::runtime_error("no clean_0000/noisy_0000 volumes in " + dir.string());
    return out;
}

std::vector<PatchSample> patches_of(const std::vector<std::pair<Volume, Volume>>& pairs, std::size_t begin,
                                    std::size_t end, const WindowSpec& window, std::size_t patch) {
    std::vector<PatchSample> out;
    for (std::size_t i = begin; i < end; ++i) {
        PatchOptions po;
        po.patch = patch;
        po.volume_id = i;
        auto part = extract_patches(pairs[i].first, pairs[i].second, window, po);
        out.insert(out.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
    }
    return out;
}

// ---- gen-data ----

struct GenDataArgs {
    std::uint64_t seed = 1;
    std::size_t volumes = 1;
    std::string dims = "9x64x64";
    double dose = 0.25;
    std::string window = "abdomen";
    std::string out;
};

int cmd_gen_data(const GenDataArgs& a) {
    if (!(a.dose > 0.0 && a.dose <= 1.0)) throw UsageError("--dose must be in (0,1]");
    if (a.volumes == 0) throw UsageError("--volumes must be positive");
    const auto d = parse_dims(a.dims);
    PhantomOptions po;
    po.slices = d[0];
    po.rows = d[1];
    po.cols = d[2];
    const auto window = window_named(a.window);
    const fs::path out(a.out);
    fs::create_directories(out);
    write_resolved({{"command", "gen-data"},
                    {"seed", a.seed},
                    {"volumes", a.volumes},
                    {"dims", a.dims},
                    {"dose", a.dose},
                    {"window", window},
                    {"noise", {{"i0", NoiseModel{}.i0}}}},
                   out / "config.json");
    for (std::size_t v = 0; v < a.volumes; ++v) {
        const auto clean = generate_phantom(a.seed + v, po);
        const auto noisy = insert_poisson_noise(clean, a.dose, rng::hash(a.seed + v, rng::noise, 0));
        save_volume(clean, out / volume_stem("clean", v), window);
        save_volume(noisy, out / volume_stem("noisy", v), window);
        fmt::print("volume {}: {}x{}x{}, {} flagged voxels\n", v, clean.slices, clean.rows, clean.cols,
                   noisy.provenance.flagged);
    }
    return ok;
}

// ---- train ----

struct TrainArgs {
    std::string data, out, preset = "desk", loss, window = "abdomen";
    std::optional<std::size_t> epochs, patch, samples, batch;
    std::optional<std::uint64_t> seed;
    std::size_t validation_volumes = 0;
};

int cmd_train(const TrainArgs& a, const json& file) {
    GeneratorConfig g;
    TrainConfig t;
    std::size_t patch = 32;
    if (a.preset == "paper") {
        g = GeneratorConfig::paper();
        t = TrainConfig::paper();
        patch = 64;
    } else if (a.preset == "desk") {
        g = GeneratorConfig::desk();
        t = TrainConfig::desk();
    } else {
        throw UsageError("unknown preset '" + a.preset + "' (paper|desk)");
    }
    if (file.contains("generator")) from_json(file["generator"], g);
    if (file.contains("train")) from_json(file["train"], t);
    if (file.contains("patch")) patch = file["patch"].get<std::size_t>();
    if (!a.loss.empty()) t.loss = parse_loss_mode(a.loss);
    if (a.epochs) t.epochs = *a.epochs;
    if (a.batch) t.batch = *a.batch;
    if (a.seed) t.seed = *a.seed;
    if (a.patch) patch = *a.patch;
    g.validate();
    t.validate();
    const auto window = window_named(a.window);

    const auto pairs = load_pairs(a.data);
    if (a.validation_volumes >= pairs.size()) throw UsageError("--validation-volumes must leave a training volume");
    const std::size_t split = pairs.size() - a.validation_volumes;
    auto train_set = patches_of(pairs, 0, split, window, patch);
    const auto validation = patches_of(pairs, split, pairs.size(), window, patch);
    if (a.samples && *a.samples < train_set.size()) train_set.resize(*a.samples);
    if (train_set.empty()) throw UsageError("no training patches at this patch size");

    const fs::path out(a.out);
    json resolved = {{"command", "train"}, {"preset", a.preset},       {"generator", g},
                     {"train", t},         {"patch", patch},           {"window", window},
                     {"data", a.data},     {"samples", train_set.size()}, {"validation_samples", validation.size()}};
    write_resolved(resolved, out / "config.json");

    TrainObserver obs;
    obs.on_epoch = [](std::size_t epoch, double val) { fmt::print("epoch {} done, validation mse {:.6g}\n", epoch, val); };
    const auto r = train(g, t, train_set, validation, out, obs);
    fmt::print("trained {} steps in {:.1f} s; final checkpoint {}\n", r.final_checkpoint.step, r.wall_seconds,
               r.final_path.string());
    return ok;
}

// ---- denoise ----

struct DenoiseArgs {
    std::string ckpt, in, out, window = "abdomen";
    std::size_t tile = 0, halo = 8;
};

int cmd_denoise(const DenoiseArgs& a) {
    const auto window = window_named(a.window);
    const auto ck = load_checkpoint(a.ckpt);
    const auto in = load_volume(a.in);
    Volume out = in;
    out.provenance.generator = "ridnet-denoise";
    const std::size_t plane = in.rows * in.cols;
    for (std::size_t s = 0; s < in.slices; ++s) {
        const auto est = denoise(ck.params, ck.generator, slice_stack(in, s, window), a.tile, a.halo);
        auto e = est.data();
        for (std::size_t i = 0; i < plane; ++i)
            out.hu[s * plane + i] = static_cast<float>(window_denormalize(e[i], window));
    }
    const fs::path stem(a.out);
    if (stem.has_parent_path()) fs::create_directories(stem.parent_path());
    save_volume(out, stem, window);
    write_resolved({{"command", "denoise"},
                    {"ckpt", a.ckpt},
                    {"in", a.in},
                    {"window", window},
                    {"tile", a.tile},
                    {"halo", a.halo},
                    {"generator", ck.generator}},
                   fs::path(stem.string() + ".config.json"));
    fmt::print("denoised {} slices of {}x{}\n", in.slices, in.rows, in.cols);
    return ok;
}

// ---- eval ----

struct EvalArgs {
    std::vector<std::string> pairs;
    std::string out, window = "abdomen";
};

int cmd_eval(const EvalArgs& a) {
    const auto window = window_named(a.window);
    std::vector<Tensor<float>> images, refs;
    std::vector<std::string> names;
    for (const auto& p : a.pairs) {
        const auto colon = p.find(':');
        if (colon == std::string::npos) throw UsageError("--pairs entries look like image_stem:reference_stem");
        const auto img = load_volume(p.substr(0, colon));
        const auto ref = load_volume(p.substr(colon + 1));
        if (img.slices != ref.slices || img.rows != ref.rows || img.cols != ref.cols)
            throw UsageError("pair " + p + " has mismatched dimensions");
        const auto iw = window_normalize(img, window);
        const auto rw = window_normalize(ref, window);
        const std::size_t plane = img.rows * img.cols;
        for (std::size_t s = 0; s < img.slices; ++s) {
            const auto b = static_cast<std::ptrdiff_t>(s * plane), e = static_cast<std::ptrdiff_t>((s + 1) * plane);
            images.emplace_back(Shape{img.rows, img.cols}, std::vector<float>(iw.begin() + b, iw.begin() + e));
            refs.emplace_back(Shape{img.rows, img.cols}, std::vector<float>(rw.begin() + b, rw.begin() + e));
            names.push_back(fmt::format("{}#{}", fs::path(p.substr(0, colon)).filename().string(), s));
        }
    }
    EvalOptions eo;
    auto rep = evaluate_images(images, refs, names, eo);
    rep.config = {{"window", window},
                  {"ssim_window", eo.ssim.window},
                  {"glcm_levels", eo.glcm.levels},
                  {"glcm_offset", {eo.glcm.d_row, eo.glcm.d_col}},
                  {"pairs", a.pairs}};
    const fs::path out(a.out);
    fs::create_directories(out);
    rep.write_csv(out / "metrics.csv");
    rep.write_json(out / "summary.json");
    write_resolved({{"command", "eval"}, {"config", rep.config}}, out / "config.json");
    fmt::print("{} slices: PSNR {:.3f} dB, SSIM {:.4f}, GLCM contrast loss {:.4g}\n", rep.rows.size(),
               rep.aggregate.psnr_db, rep.aggregate.ssim, rep.aggregate.glcm_contrast_loss);
    return ok;
}

// ---- gradcheck ----

int cmd_gradcheck(const std::string& scope_name, std::size_t seeds) {
    const auto scope = parse_audit_scope(scope_name);
    const auto entries = grad_audit(scope, seeds);
    bool all = true;
    fmt::print("{:<8} {:<22} {:>6} {:>8} {:>12} {:>10}  {}\n", "scope", "unit", "seeds", "coords", "max_rel_err",
               "tolerance", "result");
    for (const auto& e : entries) {
        all = all && e.passed();
        fmt::print("{:<8} {:<22} {:>6} {:>8} {:>12.3e} {:>10.0e}  {}{}\n", e.scope, e.name, e.seeds, e.coordinates,
                   e.max_rel_error, e.tolerance, e.passed() ? "pass" : "FAIL",
                   e.failure.empty() ? "" : " (" + e.failure + ")");
    }
    return all ? ok : numerical;
}

// ---- sweep ----

struct SweepArgs {
    std::string axis, values, out = "sweep";
    std::uint64_t seed = 1;
    std::size_t samples = 128, eval_samples = 32, patch = 16, epochs = 1;
};

int cmd_sweep(const SweepArgs& a, const json& file) {
    SweepOptions o;
    o.axis = parse_sweep_axis(a.axis);
    o.values = parse_values(a.values);
    if (file.contains("generator")) from_json(file["generator"], o.generator);
    if (file.contains("train")) from_json(file["train"], o.train);
    o.train.epochs = a.epochs;
    o.train.seed = a.seed;
    o.out_dir = a.out;

    SyntheticSpec spec;
    spec.patches.patch = a.patch;
    const auto train_set = synthetic_patches(a.seed, a.samples, spec);
    const auto held_out = informative_patches(synthetic_patches(a.seed + 1000, a.eval_samples * 4, spec));
    std::vector<PatchSample> eval_set(held_out.begin(),
                                      held_out.begin() + static_cast<std::ptrdiff_t>(std::min(a.eval_samples, held_out.size())));

    write_resolved({{"command", "sweep"},
                    {"axis", a.axis},
                    {"values", o.values},
                    {"generator", o.generator},
                    {"train", o.train},
                    {"samples", train_set.size()},
                    {"eval_samples", eval_set.size()},
                    {"patch", a.patch},
                    {"dose", spec.dose_fraction}},
                   fs::path(a.out) / "config.json");
    const auto rows = run_sweep(o, train_set, eval_set);
    write_sweep_csv(rows, fs::path(a.out) / "sweep.csv");
    bool all = true;
    for (const auto& r : rows) {
        all = all && r.status == "ok";
        fmt::print("{}={}: {} PSNR {:.3f} dB, SSIM {:.4f} ({:.1f} s)\n", r.axis, r.value, r.status, r.psnr_db, r.ssim,
                   r.wall_time_s);
    }
    return all ? ok : numerical;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"RIDnet low-dose CT denoising"};
    app.require_subcommand(1);
    std::string config_path;
    app.add_option("--config", config_path, "JSON config file layered over the defaults");

    GenDataArgs gd;
    auto* gen = app.add_subcommand("gen-data", "Generate paired clean/noisy phantom volumes");
    gen->add_option("--seed", gd.seed);
    gen->add_option("--volumes", gd.volumes);
    gen->add_option("--dims", gd.dims, "slices x rows x cols");
    gen->add_option("--dose", gd.dose, "dose fraction in (0,1]");
    gen->add_option("--window", gd.window, "abdomen|chest");
    gen->add_option("--out", gd.out)->required();

    TrainArgs ta;
    auto* tr = app.add_subcommand("train", "Train a generator on a gen-data directory");
    tr->add_option("--data", ta.data)->required();
    tr->add_option("--out", ta.out)->required();
    tr->add_option("--preset", ta.preset, "paper|desk");
    tr->add_option("--loss", ta.loss, "mse_only|gan_perceptual");
    tr->add_option("--window", ta.window);
    tr->add_option("--epochs", ta.epochs);
    tr->add_option("--batch", ta.batch);
    tr->add_option("--patch", ta.patch);
    tr->add_option("--samples", ta.samples, "cap on training patches");
    tr->add_option("--seed", ta.seed);
    tr->add_option("--validation-volumes", ta.validation_volumes, "trailing volumes held out for validation");

    DenoiseArgs da;
    auto* dn = app.add_subcommand("denoise", "Denoise a volume with a checkpoint");
    dn->add_option("--ckpt", da.ckpt, "checkpoint stem")->required();
    dn->add_option("--in", da.in, "input volume stem")->required();
    dn->add_option("--out", da.out, "output volume stem")->required();
    dn->add_option("--window", da.window);
    dn->add_option("--tile", da.tile, "tile size, 0 for whole-slice");
    dn->add_option("--halo", da.halo);

    EvalArgs ea;
    auto* ev = app.add_subcommand("eval", "PSNR/SSIM/GLCM of volumes against references");
    ev->add_option("--pairs", ea.pairs, "image_stem:reference_stem")->required();
    ev->add_option("--out", ea.out)->required();
    ev->add_option("--window", ea.window);

    std::string scope = "ops";
    std::size_t audit_seeds = 0;
    auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient audit");
    gc->add_option("--scope", scope, "ops|blocks|model");
    gc->add_option("--seeds", audit_seeds, "0 for the per-scope default");

    SweepArgs sa;
    auto* sw = app.add_subcommand("sweep", "Train and evaluate one model per hyperparameter value");
    sw->add_option("--axis", sa.axis, "k_neighbors|block_count")->required();
    sw->add_option("--values", sa.values, "comma-separated")->required();
    sw->add_option("--out", sa.out);
    sw->add_option("--seed", sa.seed);
    sw->add_option("--samples", sa.samples);
    sw->add_option("--eval-samples", sa.eval_samples);
    sw->add_option("--patch", sa.patch);
    sw->add_option("--epochs", sa.epochs);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? ok : usage;
    }

    try {
        const json file = read_config_file(config_path);
        if (*gen) return cmd_gen_data(gd);
        if (*tr) return cmd_train(ta, file);
        if (*dn) return cmd_denoise(da);
        if (*ev) return cmd_eval(ea);
        if (*gc) return cmd_gradcheck(scope, audit_seeds);
        if (*sw) return cmd_sweep(sa, file);
    } catch (const NumericalError& e) {
        fmt::print(stderr, "numerical failure at step {}: {}; last good checkpoint {}\n", e.step(), e.what(),
                   e.last_checkpoint().string());
        return numerical;
    } catch (const std::invalid_argument& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return usage;
    } catch (const std::exception& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return io;
    }
    return usage;
}
