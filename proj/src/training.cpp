#include "ridnet/training.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

#include <fmt/format.h>

#include "ridnet/config_json.hpp"
#include "ridnet/metrics.hpp"
#include "ridnet/parallel.hpp"

namespace ridnet {

LossMode parse_loss_mode(const std::string& s) {
    if (s == "mse_only") return LossMode::mse_only;
    if (s == "gan_perceptual") return LossMode::gan_perceptual;
    throw std::invalid_argument("unknown loss mode '" + s + "' (mse_only|gan_perceptual)");
}

std::string to_string(LossMode m) { return m == LossMode::mse_only ? "mse_only" : "gan_perceptual"; }

void TrainConfig::validate() const {
    if (!(lambda_perceptual >= 0.0)) throw std::invalid_argument("lambda must be >= 0");
    if (!(lambda_gp >= 0.0)) throw std::invalid_argument("lambda_gp must be >= 0");
    if (!(lr_g > 0.0) || !(lr_d > 0.0)) throw std::invalid_argument("learning rates must be positive");
    if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("decay factor must be in (0,1]");
    if (decay_interval == 0) throw std::invalid_argument("decay interval must be positive");
    if (batch == 0) throw std::invalid_argument("batch size must be positive");
    if (epochs == 0) throw std::invalid_argument("epoch count must be positive");
    if (critic_steps == 0) throw std::invalid_argument("critic steps must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0))
        throw std::invalid_argument("Adam betas must be in [0,1)");
    if (!(adam_eps > 0.0)) throw std::invalid_argument("Adam epsilon must be positive");
}

double TrainConfig::lr_at(double lr0, std::size_t epoch) const {
    return lr0 * std::pow(gamma, static_cast<double>(epoch / decay_interval));
}

TrainConfig TrainConfig::paper() { return TrainConfig{}; }

TrainConfig TrainConfig::desk() {
    TrainConfig c;
    c.batch = 4;
    c.epochs = 2;
    c.lr_g = 3e-3;
    c.lr_d = 4e-3;
    c.loss = LossMode::mse_only;
    return c;
}

TrainConfig TrainConfig::micro() {
    TrainConfig c = desk();
    c.epochs = 1;
    return c;
}

// ---------------------------------------------------------------- critic

namespace {
constexpr std::size_t kCriticChannels[] = {8, 16, 32, 64};
constexpr double kCriticSlope = 0.2;

std::size_t strided(std::size_t n) { return (n - 1) / 2 + 1; }
}  // namespace

template <typename T>
ParamStore<T> init_critic(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    if (rows == 0 || cols == 0) throw std::invalid_argument("critic input must be non-empty");
    rng::CounterRng rng(seed, rng::init_critic);
    ParamStore<T> store;
    std::size_t cin = 1, h = rows, w = cols;
    for (std::size_t i = 0; i < std::size(kCriticChannels); ++i) {
        const std::size_t cout = kCriticChannels[i];
        const auto name = "D.conv" + std::to_string(i);
        store.add(name + ".w", he_uniform<T>(Shape{cout, cin, 3, 3}, cin * 9, rng));
        store.add(name + ".b", Tensor<T>(Shape{cout}));
        cin = cout;
        h = strided(h);
        w = strided(w);
    }
    const std::size_t n = cin * h * w;
    store.add("D.fc.w", uniform_tensor<T>(Shape{n, 1}, 1.0 / std::sqrt(static_cast<double>(n)), rng));
    store.add("D.fc.b", Tensor<T>(Shape{1}));
    return store;
}

template <typename T>
Var<T> critic_forward(const Var<T>& image, const ParamBinder<T>& p) {
    if (image.shape().size() != 2) throw std::invalid_argument("critic expects an [H,W] image");
    auto x = ops::reshape(image, Shape{1, image.shape()[0], image.shape()[1]});
    for (std::size_t i = 0; i < std::size(kCriticChannels); ++i) {
        const auto name = "D.conv" + std::to_string(i);
        x = ops::activate(ops::conv2d(x, p(name + ".w"), p(name + ".b"), Padding::zero, 2),
                          Activation::leaky(kCriticSlope));
    }
    const std::size_t n = x.value().size();
    if (p.store().get("D.fc.w").dim(0) != n)
        throw std::invalid_argument("critic was built for a different input size");
    auto y = ops::linear(ops::reshape(x, Shape{1, n}), p("D.fc.w"), p("D.fc.b"));
    return ops::reshape(y, Shape{});
}

template <typename T>
CriticFn<T> bind_critic(const ParamBinder<T>& params) {
    return [params](const Var<T>& image) { return critic_forward(image, params); };
}

// ---------------------------------------------------------------- features

namespace {
constexpr std::size_t kFeatureChannels[] = {8, 16, 16};
}

template <typename T>
FeatureExtractor<T>::FeatureExtractor(std::uint64_t seed) : seed_(seed) {
    rng::CounterRng rng(seed, rng::init_features);
    std::size_t cin = 1;
    for (std::size_t i = 0; i < layers; ++i) {
        const std::size_t cout = kFeatureChannels[i];
        weights_.add("phi.conv" + std::to_string(i) + ".w", he_uniform<T>(Shape{cout, cin, 3, 3}, cin * 9, rng));
        cin = cout;
    }
}

template <typename T>
Var<T> FeatureExtractor<T>::operator()(const Var<T>& image) const {
    if (image.shape().size() != 2) throw std::invalid_argument("feature extractor expects an [H,W] image");
    auto& tape = image.tape();
    auto x = ops::reshape(image, Shape{1, image.shape()[0], image.shape()[1]});
    for (std::size_t i = 0; i < layers; ++i) {
        if (i > 0) x = ops::avg_pool2d(x, 2);
        auto w = tape.constant(weights_.get("phi.conv" + std::to_string(i) + ".w"));
        x = ops::activate(ops::conv2d(x, w, Var<T>{}, Padding::zero), Activation::relu());
    }
    return x;
}

template <typename T>
Tensor<T> FeatureExtractor<T>::features(const Tensor<T>& image) const {
    Tape<T> tape;
    return (*this)(tape.constant(image)).value();
}

// ---------------------------------------------------------------- losses

namespace {
template <typename T>
Var<T> sum_all(const std::vector<Var<T>>& terms) {
    Var<T> acc = terms.at(0);
    for (std::size_t i = 1; i < terms.size(); ++i) acc = ops::add(acc, terms[i]);
    return acc;
}
}  // namespace

template <typename T>
GeneratorLoss<T> generator_loss(const std::vector<Var<T>>& outputs, const std::vector<Tensor<T>>& targets,
                                const CriticFn<T>& critic, const FeatureExtractor<T>& phi, T lambda, LossMode mode) {
    if (outputs.empty() || outputs.size() != targets.size())
        throw std::invalid_argument("generator_loss: need matching non-empty outputs and targets");
    if (mode == LossMode::gan_perceptual && !critic)
        throw std::invalid_argument("generator_loss: adversarial mode needs a critic");
    const T inv_b = T(1) / static_cast<T>(outputs.size());
    GeneratorLoss<T> out;
    std::vector<Var<T>> mse_terms, adv_terms, perc_terms;
    for (std::size_t i = 0; i < outputs.size(); ++i) {
        auto& tape = outputs[i].tape();
        require_shape(targets[i].shape(), outputs[i].shape(), "generator_loss: target");
        auto mse_i = ops::mean(ops::square(ops::sub(outputs[i], tape.constant(targets[i]))));
        out.mse += mse_i.value().item() * inv_b;
        mse_terms.push_back(mse_i);
        const auto fy = phi.features(targets[i]);
        if (mode == LossMode::gan_perceptual) {
            auto perc_i = ops::sum(ops::square(ops::sub(phi(outputs[i]), tape.constant(fy))));
            out.perceptual += perc_i.value().item() * inv_b;
            perc_terms.push_back(perc_i);
            auto adv_i = ops::scale(critic(outputs[i]), T(-1));
            out.adversarial += adv_i.value().item() * inv_b;
            adv_terms.push_back(adv_i);
        } else {
            const auto fo = phi.features(outputs[i].value());
            T acc = 0;
            for (std::size_t k = 0; k < fo.size(); ++k) acc += (fo[k] - fy[k]) * (fo[k] - fy[k]);
            out.perceptual += acc * inv_b;
        }
    }
    if (mode == LossMode::mse_only) {
        out.total = ops::scale(sum_all(mse_terms), inv_b);
    } else {
        out.total = ops::add(ops::scale(sum_all(adv_terms), inv_b), ops::scale(sum_all(perc_terms), lambda * inv_b));
    }
    return out;
}

template <typename T>
PenaltyTerm<T> gradient_penalty(const Var<T>& x_hat, const CriticFn<T>& critic) {
    auto& tape = x_hat.tape();
    auto d = critic(x_hat);
    auto g = tape.grad_graph(d, {x_hat}).at(0);
    auto norm = ops::sqrt(ops::sum(ops::square(g)));
    return {ops::square(ops::add_scalar(norm, T(-1))), norm};
}

template <typename T>
DiscriminatorLoss<T> discriminator_loss(Tape<T>& tape, const std::vector<Tensor<T>>& real,
                                        const std::vector<Tensor<T>>& fake, const CriticFn<T>& critic, T lambda_gp,
                                        const std::vector<T>& u) {
    if (real.empty() || real.size() != fake.size() || u.size() != real.size())
        throw std::invalid_argument("discriminator_loss: need matching non-empty real, fake and u");
    const T inv_b = T(1) / static_cast<T>(real.size());
    DiscriminatorLoss<T> out;
    std::vector<Var<T>> wass, pens;
    for (std::size_t i = 0; i < real.size(); ++i) {
        require_shape(fake[i].shape(), real[i].shape(), "discriminator_loss: fake batch");
        auto dr = critic(tape.constant(real[i]));
        auto df = critic(tape.constant(fake[i]));
        Tensor<T> mix(real[i].shape());
        auto m = mix.mutable_data();
        for (std::size_t k = 0; k < m.size(); ++k) m[k] = u[i] * real[i][k] + (T(1) - u[i]) * fake[i][k];
        auto x_hat = tape.leaf(std::move(mix), true);
        auto pt = gradient_penalty(x_hat, critic);
        auto w = ops::sub(df, dr);
        out.wasserstein += w.value().item() * inv_b;
        out.penalty += pt.penalty.value().item() * inv_b;
        out.grad_norms.push_back(pt.norm.value().item());
        wass.push_back(w);
        pens.push_back(pt.penalty);
    }
    out.total = ops::add(ops::scale(sum_all(wass), inv_b), ops::scale(sum_all(pens), lambda_gp * inv_b));
    return out;
}

// ---------------------------------------------------------------- Adam

template <typename T>
void Adam<T>::step(ParamStore<T>& params, const GradMap<T>& grads, double lr) {
    for (auto& e : params.entries()) {
        auto it = grads.find(e.name);
        if (it == grads.end()) continue;
        const auto& g = it->second;
        require_shape(g.shape(), e.value.shape(), "gradient of '" + e.name + "'");
        auto gv = g.data();
        if (std::all_of(gv.begin(), gv.end(), [](T x) { return x == T(0); })) continue;
        auto& slot = slots_[e.name];
        if (slot.steps == 0) {
            slot.m = Tensor<T>(e.value.shape());
            slot.v = Tensor<T>(e.value.shape());
        }
        require_shape(slot.m.shape(), e.value.shape(), "Adam state of '" + e.name + "'");
        ++slot.steps;
        const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(slot.steps));
        const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(slot.steps));
        auto m = slot.m.mutable_data();
        auto v = slot.v.mutable_data();
        auto p = e.value.mutable_data();
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double gi = static_cast<double>(gv[i]);
            const double mi = beta1_ * static_cast<double>(m[i]) + (1.0 - beta1_) * gi;
            const double vi = beta2_ * static_cast<double>(v[i]) + (1.0 - beta2_) * gi * gi;
            m[i] = static_cast<T>(mi);
            v[i] = static_cast<T>(vi);
            const double update = lr * (mi / c1) / (std::sqrt(vi / c2) + eps_);
            p[i] = static_cast<T>(static_cast<double>(p[i]) - update);
        }
    }
    for (auto& e : params.entries())
        if (e.unit_interval)
            for (auto& x : e.value.mutable_data()) x = std::clamp(x, T(0), T(1));
}

// ---------------------------------------------------------------- checkpoint

namespace {
std::filesystem::path with_ext(const std::filesystem::path& stem, const char* ext) {
    return std::filesystem::path(stem.string() + ext);
}
}  // namespace

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& stem) {
    static_assert(std::endian::native == std::endian::little, "checkpoint blobs are written in host order");
    nlohmann::json j;
    j["format_version"] = Checkpoint::kFormatVersion;
    j["generator"] = ck.generator;
    j["train"] = ck.train;
    j["patch"] = ck.patch;
    j["epoch"] = ck.epoch;
    j["step"] = ck.step;
    j["seed"] = ck.train.seed;
    j["phi_seed"] = ck.train.phi_seed;
    j["dtype"] = "f32le";
    j["blob"] = with_ext(stem, ".bin").filename().string();
    auto& list = j["params"] = nlohmann::json::array();
    for (const auto& e : ck.params.entries())
        list.push_back({{"name", e.name}, {"shape", e.value.shape()}, {"unit_interval", e.unit_interval}});
    {
        std::ofstream f(with_ext(stem, ".json"));
        if (!f) throw std::runtime_error("cannot write " + with_ext(stem, ".json").string());
        f << j.dump(2) << "\n";
    }
    std::ofstream bin(with_ext(stem, ".bin"), std::ios::binary);
    if (!bin) throw std::runtime_error("cannot write " + with_ext(stem, ".bin").string());
    for (const auto& e : ck.params.entries())
        bin.write(reinterpret_cast<const char*>(e.value.ptr()), static_cast<std::streamsize>(e.value.size() * 4));
    if (!bin) throw std::runtime_error("write failed for " + with_ext(stem, ".bin").string());
}

Checkpoint load_checkpoint(const std::filesystem::path& stem) {
    std::ifstream f(with_ext(stem, ".json"));
    if (!f) throw std::runtime_error("cannot open " + with_ext(stem, ".json").string());
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("malformed checkpoint manifest: " + std::string(e.what()));
    }
    if (j.value("format_version", 0) != Checkpoint::kFormatVersion)
        throw std::runtime_error("unsupported checkpoint format version in " + stem.string());
    Checkpoint ck;
    ck.generator = j.at("generator").get<GeneratorConfig>();
    ck.train = j.at("train").get<TrainConfig>();
    ck.patch = j.at("patch").get<std::size_t>();
    ck.epoch = j.at("epoch").get<std::size_t>();
    ck.step = j.at("step").get<std::size_t>();
    std::ifstream bin(stem.parent_path() / j.at("blob").get<std::string>(), std::ios::binary);
    if (!bin) throw std::runtime_error("cannot open checkpoint blob for " + stem.string());
    for (const auto& p : j.at("params")) {
        Tensor<float> t(p.at("shape").get<Shape>());
        bin.read(reinterpret_cast<char*>(t.mutable_ptr()), static_cast<std::streamsize>(t.size() * 4));
        if (!bin) throw std::runtime_error("checkpoint blob is shorter than its manifest");
        ck.params.add(p.at("name").get<std::string>(), std::move(t), p.value("unit_interval", false));
    }
    if (bin.peek() != std::char_traits<char>::eof())
        throw std::runtime_error("checkpoint blob is longer than its manifest");
    return ck;
}

// ---------------------------------------------------------------- loop

void write_loss_log(const std::vector<LogRow>& rows, const std::filesystem::path& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f << "step,epoch,mse,perceptual,adversarial_G,critic_loss,gp,lr_G,lr_D\n";
    for (const auto& r : rows)
        f << fmt::format("{},{},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g}\n", r.step, r.epoch, r.mse,
                         r.perceptual, r.adversarial_g, r.critic_loss, r.gp, r.lr_g, r.lr_d);
}

namespace {

using F = float;

bool all_finite(const GradMap<F>& g) {
    for (const auto& [name, t] : g)
        for (F x : t.data())
            if (!std::isfinite(x)) return false;
    return true;
}

// Sums per-sample gradient maps in sample order.
GradMap<F> reduce(std::vector<GradMap<F>>& parts) {
    GradMap<F> total = std::move(parts.at(0));
    for (std::size_t i = 1; i < parts.size(); ++i)
        for (auto& [name, t] : total) {
            auto d = t.mutable_data();
            auto s = parts[i].at(name).data();
            for (std::size_t k = 0; k < d.size(); ++k) d[k] += s[k];
        }
    return total;
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    rng::CounterRng g(rng::hash(seed, rng::shuffle, epoch), rng::shuffle);
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[g.below(i)]);
    return order;
}

Tensor<F> generate(const ParamStore<F>& g, const GeneratorConfig& cfg, const Tensor<F>& low) {
    Tape<F> tape;
    ParamBinder<F> binder(tape, g, false);
    return generator_forward(tape.constant(low), binder, cfg).value();
}

double validation_mse(const ParamStore<F>& g, const GeneratorConfig& cfg, const std::vector<PatchSample>& set) {
    std::vector<double> per(set.size());
    parallel_for(set.size(), [&](std::size_t i) { per[i] = mse(denoise(g, cfg, set[i].low), set[i].target); });
    double acc = 0;
    for (double v : per) acc += v;
    return acc / static_cast<double>(set.size());
}

}  // namespace

TrainResult train(const GeneratorConfig& gcfg, const TrainConfig& cfg, const std::vector<PatchSample>& data,
                  const std::vector<PatchSample>& validation, const std::filesystem::path& out_dir,
                  const TrainObserver& observer) {
    gcfg.validate();
    cfg.validate();
    if (data.empty()) throw std::invalid_argument("training set is empty");
    const std::size_t P = data[0].target.dim(0);
    for (const auto& s : data) {
        require_shape(s.target.shape(), Shape{P, P}, "training target");
        require_shape(s.low.shape(), Shape{gcfg.slices, P, P}, "training input");
    }
    std::filesystem::create_directories(out_dir);
    const auto start = std::chrono::steady_clock::now();
    const bool gan = cfg.loss == LossMode::gan_perceptual;

    ParamStore<F> G = init_generator<F>(gcfg, cfg.seed);
    ParamStore<F> D = init_critic<F>(P, P, cfg.seed);
    const FeatureExtractor<F> phi(cfg.phi_seed);
    Adam<F> opt_g(cfg.beta1, cfg.beta2, cfg.adam_eps), opt_d(cfg.beta1, cfg.beta2, cfg.adam_eps);

    TrainResult result;
    auto snapshot = [&](std::size_t epoch, std::size_t step) {
        Checkpoint ck{gcfg, cfg, P, epoch, step, G};
        ck.params.merge(D);
        return ck;
    };
    std::filesystem::path last_good = out_dir / "ckpt_epoch0";
    save_checkpoint(snapshot(0, 0), last_good);

    const std::size_t n = data.size(), B = std::min(cfg.batch, n);
    const std::size_t batches = (n + B - 1) / B;
    std::size_t step = 0, epochs_done = 0;
    bool done = false;
    double best = std::numeric_limits<double>::infinity();
    auto fail = [&](const std::string& what) {
        write_loss_log(result.log, out_dir / "loss_log.csv");
        throw NumericalError(fmt::format("non-finite {} at step {}", what, step), step, last_good);
    };

    for (std::size_t epoch = 0; epoch < cfg.epochs && !done; ++epoch) {
        const double lr_g = cfg.lr_at(cfg.lr_g, epoch), lr_d = cfg.lr_at(cfg.lr_d, epoch);
        const auto order = epoch_order(n, cfg.seed, epoch);
        for (std::size_t b = 0; b < batches && !done; ++b) {
            const std::size_t lo = b * B, hi = std::min(n, lo + B), bs = hi - lo;
            const F inv_b = F(1) / static_cast<F>(bs);
            LogRow row;
            row.step = step;
            row.epoch = epoch;
            row.lr_g = lr_g;
            row.lr_d = lr_d;

            if (gan) {
                std::vector<Tensor<F>> fakes(bs);
                parallel_for(bs, [&](std::size_t i) { fakes[i] = generate(G, gcfg, data[order[lo + i]].low); });
                for (std::size_t k = 0; k < cfg.critic_steps; ++k) {
                    std::vector<GradMap<F>> grads(bs);
                    std::vector<double> wass(bs), pen(bs);
                    parallel_for(bs, [&](std::size_t i) {
                        Tape<F> tape;
                        ParamBinder<F> binder(tape, D, true);
                        const std::uint64_t draw = (step * cfg.critic_steps + k) * B + i;
                        const F u = static_cast<F>(rng::to_unit(rng::hash(cfg.seed, rng::interpolation, draw)));
                        auto dl = discriminator_loss<F>(tape, {data[order[lo + i]].target}, {fakes[i]},
                                                        bind_critic(binder), static_cast<F>(cfg.lambda_gp), {u});
                        tape.backward(ops::scale(dl.total, inv_b));
                        grads[i] = tape.named_grads();
                        wass[i] = dl.wasserstein;
                        pen[i] = dl.penalty;
                    });
                    double w = 0, p = 0;
                    for (std::size_t i = 0; i < bs; ++i) {
                        w += wass[i];
                        p += pen[i];
                    }
                    row.critic_loss = (w + cfg.lambda_gp * p) / static_cast<double>(bs);
                    row.gp = p / static_cast<double>(bs);
                    auto total = reduce(grads);
                    if (!std::isfinite(row.critic_loss) || !all_finite(total)) fail("critic loss");
                    opt_d.step(D, total, lr_d);
                }
            }

            std::vector<GradMap<F>> grads(bs);
            std::vector<double> mse_v(bs), perc_v(bs), adv_v(bs);
            parallel_for(bs, [&](std::size_t i) {
                const auto& s = data[order[lo + i]];
                Tape<F> tape;
                ParamBinder<F> gb(tape, G, true);
                ParamBinder<F> db(tape, D, false);
                auto out = generator_forward(tape.constant(s.low), gb, gcfg);
                auto gl = generator_loss<F>({out}, {s.target}, gan ? bind_critic(db) : CriticFn<F>{}, phi,
                                            static_cast<F>(cfg.lambda_perceptual), cfg.loss);
                tape.backward(ops::scale(gl.total, inv_b));
                grads[i] = tape.named_grads();
                mse_v[i] = gl.mse;
                perc_v[i] = gl.perceptual;
                adv_v[i] = gl.adversarial;
            });
            for (std::size_t i = 0; i < bs; ++i) {
                row.mse += mse_v[i] / static_cast<double>(bs);
                row.perceptual += perc_v[i] / static_cast<double>(bs);
                row.adversarial_g += adv_v[i] / static_cast<double>(bs);
            }
            auto total = reduce(grads);
            const double loss = gan ? row.adversarial_g + cfg.lambda_perceptual * row.perceptual : row.mse;
            if (!std::isfinite(loss) || !all_finite(total)) fail("generator loss");
            opt_g.step(G, total, lr_g);

            result.log.push_back(row);
            if (observer.on_step) observer.on_step(row);
            ++step;
            if (cfg.max_steps != 0 && step >= cfg.max_steps) done = true;
        }
        epochs_done = epoch + 1;
        const auto stem = out_dir / ("ckpt_epoch" + std::to_string(epoch + 1));
        save_checkpoint(snapshot(epoch + 1, step), stem);
        last_good = stem;
        write_loss_log(result.log, out_dir / "loss_log.csv");
        if (!validation.empty()) {
            const double v = validation_mse(G, gcfg, validation);
            if (observer.on_epoch) observer.on_epoch(epoch + 1, v);
            if (v < best) {
                best = v;
                save_checkpoint(snapshot(epoch + 1, step), out_dir / "best");
                result.best_path = out_dir / "best";
                result.best_validation_mse = v;
            }
        } else if (observer.on_epoch) {
            observer.on_epoch(epoch + 1, std::numeric_limits<double>::quiet_NaN());
        }
    }
    result.final_checkpoint = snapshot(epochs_done, step);
    result.final_path = out_dir / "final";
    save_checkpoint(result.final_checkpoint, result.final_path);
    write_loss_log(result.log, out_dir / "loss_log.csv");
    result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

#define RIDNET_INSTANTIATE_TRAINING(T)                                                                           \
    template ParamStore<T> init_critic(std::size_t, std::size_t, std::uint64_t);                                \
    template Var<T> critic_forward(const Var<T>&, const ParamBinder<T>&);                                       \
    template CriticFn<T> bind_critic(const ParamBinder<T>&);                                                    \
    template class FeatureExtractor<T>;                                                                         \
    template GeneratorLoss<T> generator_loss(const std::vector<Var<T>>&, const std::vector<Tensor<T>>&,         \
                                             const CriticFn<T>&, const FeatureExtractor<T>&, T, LossMode);      \
    template PenaltyTerm<T> gradient_penalty(const Var<T>&, const CriticFn<T>&);                                \
    template DiscriminatorLoss<T> discriminator_loss(Tape<T>&, const std::vector<Tensor<T>>&,                   \
                                                     const std::vector<Tensor<T>>&, const CriticFn<T>&, T,      \
                                                     const std::vector<T>&);                                    \
    template class Adam<T>;

RIDNET_INSTANTIATE_TRAINING(float)
RIDNET_INSTANTIATE_TRAINING(double)

}  // namespace ridnet
