#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "oracles.hpp"
#include "ridnet/config_json.hpp"
#include "ridnet/training.hpp"

using namespace ridnet;
using oracle::random_tensor;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    auto p = fs::temp_directory_path() / ("ridnet_unit_" + name);
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

/// D(x) = <u, x> + c
CriticFn<double> linear_critic(Tape<double>& t, const Tensor<double>& u, double c) {
    auto uv = t.constant(u);
    return [uv, c](const Var<double>& x) { return ops::add_scalar(ops::sum(ops::mul(x, uv)), c); };
}

std::vector<PatchSample> tiny_set(std::size_t n, std::uint64_t seed) {
    SyntheticSpec spec;
    spec.patches.patch = 16;
    return synthetic_patches(seed, n, spec);
}

}  // namespace

TEST_CASE("unit-norm linear critic has zero penalty; a constant critic has penalty one") {
    rng::CounterRng g(1, rng::test_data);
    for (int i = 0; i < 10; ++i) {
        auto u = random_tensor({6, 6}, g);
        double n = 0;
        for (double v : u.data()) n += v * v;
        for (auto& v : u.mutable_data()) v /= std::sqrt(n);
        Tape<double> t;
        const std::vector<Tensor<double>> real{random_tensor({6, 6}, g, 0, 1), random_tensor({6, 6}, g, 0, 1)};
        const std::vector<Tensor<double>> fake{random_tensor({6, 6}, g, 0, 1), random_tensor({6, 6}, g, 0, 1)};
        const auto d = discriminator_loss<double>(t, real, fake, linear_critic(t, u, 0.3), 10.0, {0.2, 0.7});
        CHECK(std::abs(d.penalty) < 1e-10);

        Tape<double> t2;
        const auto c = discriminator_loss<double>(t2, real, fake, linear_critic(t2, Tensor<double>(Shape{6, 6}), 0.3),
                                                  10.0, {0.2, 0.7});
        CHECK(std::abs(c.penalty - 1.0) < 1e-10);
        CHECK(std::abs(c.total.value().item() - c.wasserstein - 10.0) < 1e-10);
        CHECK(std::abs(c.wasserstein) < 1e-12);
    }
}

TEST_CASE("penalty norm matches a finite-difference gradient of the critic") {
    for (std::uint64_t s = 0; s < 5; ++s) {
        rng::CounterRng g(s, rng::test_data);
        const auto store = init_critic<double>(8, 8, s + 1);
        const auto x = random_tensor({8, 8}, g, 0, 1);
        Tape<double> t;
        ParamBinder<double> b(t, store, false);
        const auto critic = bind_critic(b);
        const double analytic = gradient_penalty(t.leaf(x), critic).norm.value().item();
        auto eval = [&](const Tensor<double>& v) {
            Tape<double> tt;
            ParamBinder<double> bb(tt, store, false);
            return critic_forward(tt.constant(v), bb).value().item();
        };
        double n2 = 0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            auto xp = x.clone(), xm = x.clone();
            xp[i] += 1e-5;
            xm[i] -= 1e-5;
            const double d = (eval(xp) - eval(xm)) / 2e-5;
            n2 += d * d;
        }
        CHECK(std::abs(analytic - std::sqrt(n2)) < 1e-4);
    }
}

TEST_CASE("generator loss terms") {
    rng::CounterRng g(3, rng::test_data);
    const FeatureExtractor<double> phi(7);
    const auto critic_store = init_critic<double>(8, 8, 2);
    const std::vector<Tensor<double>> outs{random_tensor({8, 8}, g, 0, 1), random_tensor({8, 8}, g, 0, 1)};
    const std::vector<Tensor<double>> ys{random_tensor({8, 8}, g, 0, 1), random_tensor({8, 8}, g, 0, 1)};

    auto evaluate = [&](double lambda, const std::vector<Tensor<double>>& targets) {
        Tape<double> t;
        ParamBinder<double> b(t, critic_store, false);
        std::vector<Var<double>> o;
        for (const auto& x : outs) o.push_back(t.constant(x));
        const auto l = generator_loss(o, targets, bind_critic(b), phi, lambda, LossMode::gan_perceptual);
        return std::pair{l.total.value().item(), l};
    };
    // hand composition
    double adv = 0, perc = 0;
    for (std::size_t i = 0; i < 2; ++i) {
        Tape<double> t;
        ParamBinder<double> b(t, critic_store, false);
        adv -= critic_forward(t.constant(outs[i]), b).value().item() / 2;
        const auto fo = phi.features(outs[i]), fy = phi.features(ys[i]);
        for (std::size_t k = 0; k < fo.size(); ++k) perc += (fo[k] - fy[k]) * (fo[k] - fy[k]) / 2;
    }
    const auto [total, parts] = evaluate(0.1, ys);
    CHECK(std::abs(total - (adv + 0.1 * perc)) < 1e-10);
    CHECK(std::abs(parts.perceptual - perc) < 1e-10);
    CHECK(std::abs(evaluate(0.0, ys).first - adv) < 1e-15);
    CHECK(evaluate(0.1, outs).second.perceptual == 0.0);

    Tape<double> t;
    std::vector<Var<double>> o{t.constant(outs[0])};
    const auto m = generator_loss<double>(o, {ys[0]}, {}, phi, 0.1, LossMode::mse_only);
    CHECK(std::abs(m.total.value().item() - m.mse) < 1e-15);
    double hand = 0;
    for (std::size_t k = 0; k < 64; ++k) hand += (outs[0][k] - ys[0][k]) * (outs[0][k] - ys[0][k]) / 64;
    CHECK(std::abs(m.mse - hand) < 1e-15);
}

TEST_CASE("feature extractor is fixed by its seed") {
    rng::CounterRng g(4, rng::test_data);
    const auto x = random_tensor({16, 16}, g, 0, 1);
    const auto a = FeatureExtractor<double>(7).features(x), b = FeatureExtractor<double>(7).features(x);
    const auto c = FeatureExtractor<double>(8).features(x);
    CHECK(a.shape() == Shape{16, 4, 4});
    CHECK(oracle::max_abs_diff(a, b) == 0.0);
    CHECK(oracle::max_abs_diff(a, c) > 0.0);
}

TEST_CASE("Adam: one step, zero gradients and projection") {
    ParamStore<double> p;
    p.add("w", Tensor<double>(Shape{3}, std::vector<double>{0.5, -1.0, 2.0}));
    p.add("frozen", Tensor<double>(Shape{2}, 4.0));
    p.add("alpha", Tensor<double>(Shape{1}, 0.0), true);
    Adam<double> adam;
    GradMap<double> g{{"w", Tensor<double>(Shape{3}, 1.0)},
                      {"frozen", Tensor<double>(Shape{2})},
                      {"alpha", Tensor<double>(Shape{1}, 5.0)}};
    adam.step(p, g, 0.01);
    CHECK(p.get("w")[0] == doctest::Approx(0.49).epsilon(1e-9));
    CHECK(p.get("w")[1] == doctest::Approx(-1.01).epsilon(1e-9));
    CHECK(p.get("frozen")[0] == 4.0);
    CHECK(adam.slots().count("frozen") == 0);
    // alpha moved below zero and was projected back
    CHECK(p.get("alpha")[0] == 0.0);
    g["alpha"] = Tensor<double>(Shape{1}, -5.0);
    for (int i = 0; i < 300; ++i) adam.step(p, g, 0.01);
    CHECK(p.get("alpha")[0] == 1.0);
    CHECK(adam.slots().at("w").steps == 301);
    CHECK(adam.slots().at("alpha").steps == 301);
    GradMap<double> bad{{"w", Tensor<double>(Shape{2})}};
    CHECK_THROWS_AS(adam.step(p, bad, 0.01), std::invalid_argument);
}

TEST_CASE("Adam fits a linear least-squares toy") {
    rng::CounterRng g(5, rng::test_data);
    const auto X = random_tensor({64, 4}, g);
    const auto w_true = random_tensor({4, 1}, g);
    Tape<double> t0;
    const auto y = ops::linear(t0.constant(X), t0.constant(w_true), Var<double>{}).value();
    ParamStore<double> p;
    p.add("w", Tensor<double>(Shape{4, 1}));
    Adam<double> adam;
    double loss = 1;
    for (int step = 0; step < 500; ++step) {
        Tape<double> t;
        ParamBinder<double> b(t, p);
        auto l = ops::mean(ops::square(ops::sub(ops::linear(t.constant(X), b("w"), Var<double>{}), t.constant(y))));
        loss = l.value().item();
        t.backward(l);
        adam.step(p, t.named_grads(), 0.05);
    }
    CHECK(loss < 1e-3);
}

TEST_CASE("learning-rate decay") {
    auto c = TrainConfig::paper();
    CHECK(c.batch == 32);
    CHECK(c.epochs == 40);
    CHECK(c.lr_at(1e-4, 0) == 1e-4);
    CHECK(c.lr_at(1e-4, 5) == doctest::Approx(1e-4 * std::pow(0.97, 5)).epsilon(1e-12));
    c.decay_interval = 2;
    CHECK(c.lr_at(1e-4, 5) == doctest::Approx(1e-4 * std::pow(0.97, 2)).epsilon(1e-12));
}

TEST_CASE("checkpoint round trip is bit-identical") {
    const auto dir = scratch("ckpt");
    fs::create_directories(dir);
    Checkpoint ck;
    ck.generator = GeneratorConfig::desk();
    ck.train = TrainConfig::desk();
    ck.patch = 32;
    ck.epoch = 2;
    ck.step = 250;
    ck.params = init_generator<float>(ck.generator, 11);
    ck.params.merge(init_critic<float>(32, 32, 12));
    save_checkpoint(ck, dir / "c");
    const auto back = load_checkpoint(dir / "c");
    CHECK(back.step == 250);
    CHECK(back.epoch == 2);
    CHECK(back.patch == 32);
    CHECK(nlohmann::json(back.generator) == nlohmann::json(ck.generator));
    CHECK(nlohmann::json(back.train) == nlohmann::json(ck.train));
    REQUIRE(back.params.entries().size() == ck.params.entries().size());
    for (std::size_t i = 0; i < ck.params.entries().size(); ++i) {
        const auto& a = ck.params.entries()[i];
        const auto& b = back.params.entries()[i];
        CHECK(a.name == b.name);
        CHECK(a.unit_interval == b.unit_interval);
        CHECK(std::equal(a.value.data().begin(), a.value.data().end(), b.value.data().begin()));
    }
    rng::CounterRng g(13, rng::test_data);
    Tensor<float> raw(Shape{3, 16, 16});
    for (auto& v : raw.mutable_data()) v = static_cast<float>(g.uniform());
    const auto y0 = denoise(ck.params, ck.generator, raw), y1 = denoise(back.params, back.generator, raw);
    CHECK(std::equal(y0.data().begin(), y0.data().end(), y1.data().begin()));
    CHECK_THROWS(load_checkpoint(dir / "missing"));
    fs::remove_all(dir);
}

TEST_CASE("mse-only training descends and logs every step") {
    const auto dir = scratch("train");
    auto t = TrainConfig::micro();
    t.epochs = 2;
    const auto data = tiny_set(40, 21);
    const auto r = train(GeneratorConfig::desk(), t, data, {}, dir);
    REQUIRE(r.log.size() == 20);
    CHECK(r.log.back().mse < r.log.front().mse);
    for (const char* f : {"loss_log.csv", "final.json", "final.bin", "ckpt_epoch0.json", "ckpt_epoch2.json"})
        CHECK(fs::exists(dir / f));
    std::ifstream log(dir / "loss_log.csv");
    std::size_t lines = 0;
    for (std::string line; std::getline(log, line);) ++lines;
    CHECK(lines == 21);
    fs::remove_all(dir);
}

TEST_CASE("adversarial training runs and keeps alpha in the unit interval") {
    const auto dir = scratch("gan");
    auto t = TrainConfig::micro();
    t.loss = LossMode::gan_perceptual;
    t.max_steps = 4;
    const auto r = train(GeneratorConfig::desk(), t, tiny_set(16, 22), tiny_set(4, 23), dir);
    CHECK(r.log.size() == 4);
    for (const auto& row : r.log) {
        CHECK(std::isfinite(row.critic_loss));
        CHECK(std::isfinite(row.gp));
        CHECK(std::isfinite(row.adversarial_g));
        CHECK(row.perceptual > 0);
    }
    const double a = r.final_checkpoint.params.get("G.block0.alpha")[0];
    CHECK((a >= 0.0 && a <= 1.0));
    CHECK(r.best_path.has_value());
    fs::remove_all(dir);
}

TEST_CASE("training is deterministic") {
    const auto a = scratch("det_a"), b = scratch("det_b");
    auto t = TrainConfig::micro();
    t.max_steps = 5;
    const auto data = tiny_set(24, 31);
    train(GeneratorConfig::desk(), t, data, {}, a);
    train(GeneratorConfig::desk(), t, data, {}, b);
    CHECK(slurp(a / "final.bin") == slurp(b / "final.bin"));
    CHECK(slurp(a / "final.json") == slurp(b / "final.json"));
    CHECK(slurp(a / "loss_log.csv") == slurp(b / "loss_log.csv"));
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST_CASE("a non-finite loss aborts with the last good checkpoint") {
    const auto dir = scratch("nan");
    auto data = tiny_set(8, 41);
    for (auto& s : data) s.target[0] = std::numeric_limits<float>::quiet_NaN();
    bool thrown = false;
    try {
        train(GeneratorConfig::desk(), TrainConfig::micro(), data, {}, dir);
    } catch (const NumericalError& e) {
        thrown = true;
        CHECK(e.step() == 0);
        CHECK(fs::exists(fs::path(e.last_checkpoint().string() + ".json")));
    }
    CHECK(thrown);
    fs::remove_all(dir);
}

TEST_CASE("train rejects an empty dataset and bad settings") {
    CHECK_THROWS_AS(train(GeneratorConfig::desk(), TrainConfig::micro(), {}, {}, scratch("empty")),
                    std::invalid_argument);
    auto t = TrainConfig::micro();
    t.batch = 0;
    CHECK_THROWS_AS(t.validate(), std::invalid_argument);
}

TEST_CASE("config documents layer over defaults") {
    auto j = nlohmann::json::parse(R"({"k": 12, "window": 7})");
    auto g = GraphConfig{};
    from_json(j, g);
    CHECK(g.k == 12);
    CHECK(g.window == 7);
    CHECK(g.m == 3);
    TrainConfig t = TrainConfig::desk();
    from_json(nlohmann::json::parse(R"({"loss": "gan_perceptual"})"), t);
    CHECK(t.loss == LossMode::gan_perceptual);
    CHECK(t.batch == TrainConfig::desk().batch);
    CHECK_THROWS(parse_loss_mode("wasserstein"));
}
