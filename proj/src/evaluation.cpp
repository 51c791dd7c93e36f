#include "ridnet/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>

#include <fmt/format.h>

#include "ridnet/config_json.hpp"
#include "ridnet/parallel.hpp"

namespace ridnet {

MetricRow image_metrics(const Tensor<float>& image, const Tensor<float>& reference, const EvalOptions& o) {
    MetricRow r;
    r.psnr_db = psnr(image, reference);
    r.ssim = ssim(image, reference, o.ssim);
    const auto rl = radiomics_loss(image, reference, o.glcm);
    r.glcm_contrast_loss = rl.contrast;
    r.glcm_dissimilarity_loss = rl.dissimilarity;
    r.glcm_correlation_loss = rl.correlation;
    return r;
}

MetricReport evaluate_images(const std::vector<Tensor<float>>& images, const std::vector<Tensor<float>>& references,
                             const std::vector<std::string>& names, const EvalOptions& o) {
    if (images.size() != references.size() || images.size() != names.size())
        throw std::invalid_argument("evaluate_images: images, references and names differ in count");
    MetricReport rep;
    rep.rows.resize(images.size());
    parallel_for(images.size(), [&](std::size_t i) {
        rep.rows[i] = image_metrics(images[i], references[i], o);
        rep.rows[i].name = names[i];
    });
    rep.aggregate.name = "mean";
    if (rep.rows.empty()) return rep;
    double corr = 0;
    std::size_t n_corr = 0;
    for (const auto& r : rep.rows) {
        rep.aggregate.psnr_db += r.psnr_db;
        rep.aggregate.ssim += r.ssim;
        rep.aggregate.glcm_contrast_loss += r.glcm_contrast_loss;
        rep.aggregate.glcm_dissimilarity_loss += r.glcm_dissimilarity_loss;
        if (r.glcm_correlation_loss) {
            corr += *r.glcm_correlation_loss;
            ++n_corr;
        } else {
            ++rep.degenerate_correlation;
        }
    }
    const double n = static_cast<double>(rep.rows.size());
    rep.aggregate.psnr_db /= n;
    rep.aggregate.ssim /= n;
    rep.aggregate.glcm_contrast_loss /= n;
    rep.aggregate.glcm_dissimilarity_loss /= n;
    if (n_corr) rep.aggregate.glcm_correlation_loss = corr / static_cast<double>(n_corr);
    return rep;
}

namespace {
std::string opt_str(const std::optional<double>& v) { return v ? fmt::format("{:.9g}", *v) : "degenerate"; }

nlohmann::json row_json(const MetricRow& r) {
    nlohmann::json j = {{"psnr_db", r.psnr_db},
                        {"ssim", r.ssim},
                        {"glcm_contrast_loss", r.glcm_contrast_loss},
                        {"glcm_dissimilarity_loss", r.glcm_dissimilarity_loss}};
    j["glcm_correlation_loss"] = r.glcm_correlation_loss ? nlohmann::json(*r.glcm_correlation_loss) : nlohmann::json();
    return j;
}
}  // namespace

void MetricReport::write_csv(const std::filesystem::path& path) const {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f << "image,psnr_db,ssim,glcm_contrast_loss,glcm_correlation_loss,glcm_dissimilarity_loss\n";
    auto line = [&](const MetricRow& r) {
        f << fmt::format("{},{:.9g},{:.9g},{:.9g},{},{:.9g}\n", r.name, r.psnr_db, r.ssim, r.glcm_contrast_loss,
                         opt_str(r.glcm_correlation_loss), r.glcm_dissimilarity_loss);
    };
    for (const auto& r : rows) line(r);
    line(aggregate);
}

nlohmann::json MetricReport::summary() const {
    nlohmann::json j;
    j["images"] = rows.size();
    j["mean"] = row_json(aggregate);
    j["degenerate_correlation"] = degenerate_correlation;
    j["config"] = config;
    return j;
}

void MetricReport::write_json(const std::filesystem::path& path) const {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f << summary().dump(2) << "\n";
}

std::vector<PatchSample> informative_patches(const std::vector<PatchSample>& samples) {
    std::vector<PatchSample> out;
    for (const auto& s : samples) {
        auto t = s.target.data();
        if (std::any_of(t.begin(), t.end(), [&](float v) { return v != t[0]; })) out.push_back(s);
    }
    return out;
}

std::vector<Tensor<float>> noisy_centers(const std::vector<PatchSample>& samples) {
    std::vector<Tensor<float>> out;
    out.reserve(samples.size());
    for (const auto& s : samples) {
        const std::size_t H = s.low.dim(1), W = s.low.dim(2);
        const std::size_t c = s.low.dim(0) / 2;
        auto d = s.low.data();
        out.emplace_back(Shape{H, W}, std::vector<float>(d.begin() + static_cast<std::ptrdiff_t>(c * H * W),
                                                         d.begin() + static_cast<std::ptrdiff_t>((c + 1) * H * W)));
    }
    return out;
}

DenoiseComparison compare_on_patches(const ParamStore<float>& generator, const GeneratorConfig& config,
                                     const std::vector<PatchSample>& samples, const EvalOptions& o) {
    std::vector<Tensor<float>> targets, outputs(samples.size());
    std::vector<std::string> names;
    for (const auto& s : samples) {
        targets.push_back(s.target);
        names.push_back(fmt::format("v{}_s{}_r{}_c{}", s.volume, s.slice, s.row, s.col));
    }
    parallel_for(samples.size(), [&](std::size_t i) { outputs[i] = denoise(generator, config, samples[i].low); });
    DenoiseComparison c;
    c.noisy = evaluate_images(noisy_centers(samples), targets, names, o);
    c.denoised = evaluate_images(outputs, targets, names, o);
    return c;
}

SweepAxis parse_sweep_axis(const std::string& s) {
    if (s == "k_neighbors") return SweepAxis::k_neighbors;
    if (s == "block_count") return SweepAxis::block_count;
    throw std::invalid_argument("unknown sweep axis '" + s + "' (k_neighbors|block_count)");
}

std::string to_string(SweepAxis a) { return a == SweepAxis::k_neighbors ? "k_neighbors" : "block_count"; }

std::vector<SweepRow> run_sweep(const SweepOptions& o, const std::vector<PatchSample>& train_set,
                                const std::vector<PatchSample>& eval_set) {
    if (o.values.empty()) throw std::invalid_argument("sweep needs at least one value");
    if (eval_set.empty()) throw std::invalid_argument("sweep needs a non-empty evaluation set");
    std::vector<SweepRow> rows;
    for (std::size_t v : o.values) {
        SweepRow row;
        row.axis = to_string(o.axis);
        row.value = v;
        const auto start = std::chrono::steady_clock::now();
        try {
            GeneratorConfig g = o.generator;
            if (o.axis == SweepAxis::k_neighbors) {
                g.graph.k = v;
            } else {
                g.blocks = v;
            }
            const auto dir = o.out_dir / fmt::format("{}_{}", row.axis, v);
            auto result = train(g, o.train, train_set, {}, dir);
            const auto cmp = compare_on_patches(result.final_checkpoint.params, g, eval_set, o.eval);
            const auto& a = cmp.denoised.aggregate;
            row.psnr_db = a.psnr_db;
            row.ssim = a.ssim;
            row.glcm_contrast_loss = a.glcm_contrast_loss;
            row.glcm_dissimilarity_loss = a.glcm_dissimilarity_loss;
            row.glcm_correlation_loss = a.glcm_correlation_loss.value_or(0.0);
            for (double x : {row.psnr_db, row.ssim, row.glcm_contrast_loss, row.glcm_dissimilarity_loss,
                             row.glcm_correlation_loss})
                if (!std::isfinite(x)) throw std::runtime_error("non-finite metric");
        } catch (const std::exception& e) {
            row.status = std::string("error: ") + e.what();
        }
        row.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        rows.push_back(row);
    }
    return rows;
}

void write_sweep_csv(const std::vector<SweepRow>& rows, const std::filesystem::path& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f << "axis,value,status,psnr_db,ssim,glcm_contrast_loss,glcm_correlation_loss,glcm_dissimilarity_loss,"
         "wall_time_s\n";
    for (const auto& r : rows) {
        std::string status = r.status;
        for (char& ch : status)
            if (ch == ',' || ch == '\n') ch = ';';
        f << fmt::format("{},{},{},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{:.3f}\n", r.axis, r.value, status, r.psnr_db,
                         r.ssim, r.glcm_contrast_loss, r.glcm_correlation_loss, r.glcm_dissimilarity_loss,
                         r.wall_time_s);
    }
}

}  // namespace ridnet
