#include "ridnet/grad_audit.hpp"

#include <cmath>
#include <functional>
#include <stdexcept>

#include "ridnet/grad_check.hpp"
#include "ridnet/graph_conv.hpp"
#include "ridnet/model.hpp"
#include "ridnet/ops.hpp"
#include "ridnet/rng.hpp"
#include "ridnet/training.hpp"

namespace ridnet {

AuditScope parse_audit_scope(const std::string& s) {
    if (s == "ops") return AuditScope::ops;
    if (s == "blocks") return AuditScope::blocks;
    if (s == "model") return AuditScope::model;
    throw std::invalid_argument("unknown audit scope '" + s + "' (ops|blocks|model)");
}

std::string to_string(AuditScope s) {
    switch (s) {
        case AuditScope::ops: return "ops";
        case AuditScope::blocks: return "blocks";
        case AuditScope::model: return "model";
    }
    return "?";
}

namespace {

using V = Var<double>;
using TD = Tensor<double>;
using Inputs = std::vector<V>;

struct Case {
    ScalarFn f;
    std::vector<TD> inputs;
};

struct Unit {
    std::string name;
    double tolerance;
    std::function<Case(rng::CounterRng&)> build;
};

TD random(const Shape& s, rng::CounterRng& g, double lo = -1.0, double hi = 1.0) {
    TD t(s);
    for (auto& v : t.mutable_data()) v = g.uniform(lo, hi);
    return t;
}

// Fixed, non-symmetric weights so every output coordinate reaches the loss
// with a different coefficient.
V weighted_sum(const V& y) {
    TD w(y.shape());
    auto d = w.mutable_data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = std::cos(0.37 * static_cast<double>(i) + 0.1);
    return ops::sum(ops::mul(y, y.tape().constant(w)));
}

using Op = std::function<V(Tape<double>&, const Inputs&)>;

Case reduced(Op op, std::vector<TD> inputs) {
    return {[op](Tape<double>& t, const Inputs& in) { return weighted_sum(op(t, in)); }, std::move(inputs)};
}

Unit op_unit(std::string name, std::function<Case(rng::CounterRng&)> build) {
    return {std::move(name), kOpTolerance, std::move(build)};
}

std::vector<Unit> op_units() {
    std::vector<Unit> u;
    u.push_back(op_unit("add", [](auto& g) {
        return reduced([](auto&, const Inputs& x) { return ops::add(x[0], x[1]); },
                       {random({3, 4}, g), random({3, 4}, g)});
    }));
    u.push_back(op_unit("sub", [](auto& g) {
        return reduced([](auto&, const Inputs& x) { return ops::sub(x[0], x[1]); },
                       {random({3, 4}, g), random({3, 4}, g)});
    }));
    u.push_back(op_unit("mul", [](auto& g) {
        return reduced([](auto&, const Inputs& x) { return ops::mul(x[0], x[1]); },
                       {random({3, 4}, g), random({3, 4}, g)});
    }));
    u.push_back(op_unit("scale", [](auto& g) {
        return reduced([](auto&, const Inputs& x) { return ops::scale(x[0], 1.7); }, {random({5}, g)});
    }));
    u.push_back(op_unit("add_scalar", [](auto& g) {
        return reduced([](auto&, const Inputs& x) { return ops::add_scalar(x[0], -0.3); }, {random({5}, g)});
    }));
    u.push_back(op_unit("square", [](auto& g) {
        return reduced([](auto&, const Inputs& x) { return ops::square(x[0]); }, {random({6}, g)});
    }));
    u.push_back(op_unit("sqrt", [](auto& g) {
        return reduced([](auto&, const Inputs& x) { return ops::sqrt(x[0]); }, {random({6}, g, 0.5, 2.0)});
    }));
    u.push_back(op_unit("sum", [](auto& g) {
        return Case{[](auto&, const Inputs& x) { return ops::sum(ops::square(x[0])); }, {random({2, 3}, g)}};
    }));
    u.push_back(op_unit("mean", [](auto& g) {
        return Case{[](auto&, const Inputs& x) { return ops::mean(ops::square(x[0])); }, {random({2, 3}, g)}};
    }));
    u.push_back(op_unit("expand", [](auto& g) {
        return reduced([](auto&, const Inputs& x) { return ops::expand(x[0], Shape{2, 3}); },
                       {random({}, g)});
    }));
    u.push_back(op_unit("reshape", [](auto& g) {
        return reduced([](auto&, const Inputs& x) { return ops::square(ops::reshape(x[0], Shape{3, 4})); },
                       {random({2, 6}, g)});
    }));
    u.push_back(op_unit("relu", [](auto& g) {
        return reduced([](auto&, const Inputs& x) { return ops::activate(x[0], Activation::relu()); },
                       {random({10}, g)});
    }));
    u.push_back(op_unit("leaky_relu", [](auto& g) {
        return reduced([](auto&, const Inputs& x) { return ops::activate(x[0], Activation::leaky(0.2)); },
                       {random({10}, g)});
    }));
    u.push_back(op_unit("clamp", [](auto& g) {
        return reduced([](auto&, const Inputs& x) { return ops::clamp(x[0], -0.5, 0.5); }, {random({10}, g)});
    }));
    for (auto [label, pad] : {std::pair{"reflect", Padding::reflect}, std::pair{"zero", Padding::zero},
                              std::pair{"none", Padding::none}}) {
        u.push_back(op_unit(std::string("conv2d_") + label, [pad](auto& g) {
            return reduced([pad](auto&, const Inputs& x) { return ops::conv2d(x[0], x[1], x[2], pad); },
                           {random({2, 8, 8}, g), random({4, 2, 3, 3}, g), random({4}, g)});
        }));
        u.push_back(op_unit(std::string("conv3d_") + label, [pad](auto& g) {
            return reduced([pad](auto&, const Inputs& x) { return ops::conv3d(x[0], x[1], x[2], pad); },
                           {random({2, 3, 5, 5}, g), random({3, 2, 3, 3, 3}, g), random({3}, g)});
        }));
    }
    u.push_back(op_unit("conv2d_stride2", [](auto& g) {
        return reduced([](auto&, const Inputs& x) { return ops::conv2d(x[0], x[1], x[2], Padding::zero, 2); },
                       {random({2, 9, 9}, g), random({3, 2, 3, 3}, g), random({3}, g)});
    }));
    u.push_back(op_unit("linear", [](auto& g) {
        return reduced([](auto&, const Inputs& x) { return ops::linear(x[0], x[1], x[2]); },
                       {random({5, 3}, g), random({3, 4}, g), random({4}, g)});
    }));
    u.push_back(op_unit("segment_softmax", [](auto& g) {
        return reduced(
            [](auto&, const Inputs& x) {
                static const std::vector<std::size_t> offsets{0, 3, 4, 8};
                return ops::segment_softmax(x[0], std::span<const std::size_t>(offsets));
            },
            {random({8}, g, -2, 2)});
    }));
    u.push_back(op_unit("softmax_dot", [](auto& g) {
        return Case{[](auto&, const Inputs& x) { return ops::sum(ops::mul(ops::softmax(x[0]), x[1])); },
                    {random({6}, g, -2, 2), random({6}, g)}};
    }));
    u.push_back(op_unit("avg_pool2d", [](auto& g) {
        return reduced([](auto&, const Inputs& x) { return ops::avg_pool2d(x[0], 2); }, {random({2, 6, 6}, g)});
    }));
    u.push_back(op_unit("select_slice", [](auto& g) {
        return reduced([](auto&, const Inputs& x) { return ops::select_slice(x[0], 1); },
                       {random({2, 3, 4, 4}, g)});
    }));
    u.push_back(op_unit("replace_slice", [](auto& g) {
        return reduced([](auto&, const Inputs& x) { return ops::replace_slice(x[0], 1, x[1]); },
                       {random({2, 3, 4, 4}, g), random({2, 4, 4}, g)});
    }));
    u.push_back(op_unit("add_channel_bias", [](auto& g) {
        return reduced([](auto&, const Inputs& x) { return ops::add_channel_bias(x[0], x[1]); },
                       {random({3, 4, 4}, g), random({3}, g)});
    }));
    u.push_back(op_unit("fuse", [](auto& g) {
        return reduced([](auto&, const Inputs& x) { return fuse(x[0], x[1], x[2], x[3]); },
                       {random({2, 4, 4}, g), random({2, 4, 4}, g), random({2, 4, 4}, g), random({1}, g, 0.1, 0.9)});
    }));
    u.push_back(op_unit("perceptual_distance", [](auto& g) {
        const auto seed = g.next();
        const TD y = random({8, 8}, g, 0, 1);
        return Case{[seed, y](Tape<double>& t, const Inputs& x) {
                        FeatureExtractor<double> phi(seed);
                        return ops::sum(ops::square(ops::sub(phi(x[0]), t.constant(phi.features(y)))));
                    },
                    {random({8, 8}, g, 0, 1)}};
    }));
    return u;
}

// Critic on an 8x8 image; the image and a subset of weights are checked, the
// remaining weights are constants.
const char* const kCriticChecked[] = {"D.conv0.w", "D.conv0.b", "D.conv3.b", "D.fc.w", "D.fc.b"};

Case critic_case(rng::CounterRng& g, bool penalty) {
    auto store = std::make_shared<ParamStore<double>>(init_critic<double>(8, 8, g.next()));
    std::vector<TD> inputs{random({8, 8}, g, 0, 1)};
    for (const char* name : kCriticChecked) {
        // Random biases so that no activation sits exactly at its kink.
        auto t = store->get(name).clone();
        if (std::string(name).find(".b") != std::string::npos) t = random(t.shape(), g, -0.1, 0.1);
        inputs.push_back(t);
    }
    return {[store, penalty](Tape<double>& t, const Inputs& x) {
                ParamBinder<double> binder(t, *store, false);
                for (std::size_t k = 0; k < std::size(kCriticChecked); ++k) binder.provide(kCriticChecked[k], x[k + 1]);
                auto critic = bind_critic(binder);
                return penalty ? gradient_penalty(x[0], critic).penalty : critic(x[0]);
            },
            std::move(inputs)};
}

GraphConfig toy_graph() {
    GraphConfig c;
    c.window = 5;
    c.k = 4;
    c.m = 3;
    return c;
}

Case ecc_case(rng::CounterRng& g, ThetaMode mode, bool depth) {
    const std::size_t C = 3;
    auto p = EccParams<double>::random(C, mode, 4, g);
    std::vector<TD> inputs{depth ? random({C, 3, 5, 5}, g) : random({C, 7, 7}, g), p.w1, p.b1, p.w2, p.b2, p.bias};
    return {[mode, depth](Tape<double>&, const Inputs& x) {
                EccVars<double> v{x[1], x[2], x[3], x[4], x[5], mode};
                return weighted_sum(depth ? depth_gcn_forward(x[0], toy_graph(), v)
                                          : plane_gcn_forward(x[0], toy_graph(), v));
            },
            std::move(inputs)};
}

GeneratorConfig toy_generator(ThetaMode mode) {
    GeneratorConfig c;
    c.channels = 4;
    c.embed_hidden = 4;
    c.tail_hidden = 2;
    c.edge_hidden = 4;
    c.blocks = 1;
    c.theta = mode;
    c.graph.k = 4;
    return c;
}

// Every parameter of `store` whose name starts with `prefix` becomes a
// checked input after the leading data input.
Case params_case(const GeneratorConfig& cfg, rng::CounterRng& g, const std::string& prefix, TD data,
                 std::function<V(const V&, const ParamBinder<double>&)> forward) {
    auto store = std::make_shared<ParamStore<double>>(init_generator<double>(cfg, g.next()));
    for (auto& e : store->entries()) {
        if (e.name.find("alpha") != std::string::npos) e.value = TD(Shape{1}, 0.3 + 0.4 * g.uniform());
        // Non-zero conv biases keep pre-activations off exact ties.
        if (e.name.find(".b") != std::string::npos && e.name.find(".b1") == std::string::npos &&
            e.name.find(".b2") == std::string::npos)
            e.value = random(e.value.shape(), g, -0.05, 0.05);
    }
    std::vector<std::string> names;
    std::vector<TD> inputs{std::move(data)};
    for (const auto& e : store->entries())
        if (e.name.rfind(prefix, 0) == 0) {
            names.push_back(e.name);
            inputs.push_back(e.value);
        }
    return {[store, names, forward](Tape<double>& t, const Inputs& x) {
                ParamBinder<double> binder(t, *store, false);
                for (std::size_t k = 0; k < names.size(); ++k) binder.provide(names[k], x[k + 1]);
                return weighted_sum(forward(x[0], binder));
            },
            std::move(inputs)};
}

std::vector<Unit> block_units() {
    std::vector<Unit> u;
    for (auto mode : {ThetaMode::full, ThetaMode::diagonal}) {
        const auto tag = to_string(mode);
        u.push_back({"plane_gcn_" + tag, kEndToEndTolerance, [mode](auto& g) { return ecc_case(g, mode, false); }});
        u.push_back({"depth_gcn_" + tag, kEndToEndTolerance, [mode](auto& g) { return ecc_case(g, mode, true); }});
    }
    u.push_back({"embed", kOpTolerance, [](auto& g) {
                     const auto cfg = toy_generator(ThetaMode::full);
                     return params_case(cfg, g, "G.block0.embed", random({1, 3, 6, 6}, g, 0, 1),
                                        [cfg](const V& x, const ParamBinder<double>& p) {
                                            return embed(x, p.scoped("G.block0"), 0, cfg);
                                        });
                 }});
    u.push_back({"local_branch", kOpTolerance, [](auto& g) {
                     const auto cfg = toy_generator(ThetaMode::full);
                     return params_case(cfg, g, "G.block0.local", random({4, 6, 6}, g),
                                        [](const V& x, const ParamBinder<double>& p) {
                                            return local_branch(x, p.scoped("G.block0"));
                                        });
                 }});
    u.push_back({"ridnet_block", kEndToEndTolerance, [](auto& g) {
                     const auto cfg = toy_generator(ThetaMode::full);
                     return params_case(cfg, g, "G.block0", random({1, 3, 8, 8}, g, 0, 1),
                                        [cfg](const V& x, const ParamBinder<double>& p) {
                                            return ridnet_forward(x, p.scoped("G.block0"), 0, cfg);
                                        });
                 }});
    u.push_back({"critic", kOpTolerance, [](auto& g) { return critic_case(g, false); }});
    u.push_back({"gradient_penalty", kEndToEndTolerance, [](auto& g) { return critic_case(g, true); }});
    return u;
}

std::vector<Unit> model_units() {
    std::vector<Unit> u;
    for (auto mode : {ThetaMode::full, ThetaMode::diagonal})
        u.push_back({"generator_" + to_string(mode), kEndToEndTolerance, [mode](auto& g) {
                         const auto cfg = toy_generator(mode);
                         return params_case(cfg, g, "G.", random({3, 8, 8}, g, 0, 1),
                                            [cfg](const V& x, const ParamBinder<double>& p) {
                                                return generator_forward(x, p, cfg);
                                            });
                     }});
    u.push_back({"generator_loss_gan", kEndToEndTolerance, [](auto& g) {
                     auto critic = std::make_shared<ParamStore<double>>(init_critic<double>(8, 8, g.next()));
                     const auto seed = g.next();
                     const TD y = random({8, 8}, g, 0, 1);
                     return Case{[critic, seed, y](Tape<double>& t, const Inputs& x) {
                                     ParamBinder<double> binder(t, *critic, false);
                                     FeatureExtractor<double> phi(seed);
                                     return generator_loss<double>({x[0]}, {y}, bind_critic(binder), phi, 0.1,
                                                                   LossMode::gan_perceptual)
                                         .total;
                                 },
                                 {random({8, 8}, g, 0, 1)}};
                 }});
    return u;
}

}  // namespace

std::vector<AuditEntry> grad_audit(AuditScope scope, std::size_t seeds, std::uint64_t base_seed) {
    if (seeds == 0) seeds = scope == AuditScope::ops ? 20 : (scope == AuditScope::blocks ? 5 : 3);
    const auto units = scope == AuditScope::ops ? op_units() : (scope == AuditScope::blocks ? block_units() : model_units());
    std::vector<AuditEntry> out;
    for (const auto& unit : units) {
        AuditEntry e;
        e.scope = to_string(scope);
        e.name = unit.name;
        e.tolerance = unit.tolerance;
        for (std::size_t s = 0; s < seeds && e.failure.empty(); ++s) {
            rng::CounterRng g(rng::hash(base_seed, rng::test_data, s), rng::test_data);
            const auto c = unit.build(g);
            const auto r = grad_check(c.f, c.inputs, 1e-4);
            ++e.seeds;
            e.coordinates += r.coordinates;
            e.max_rel_error = std::max(e.max_rel_error, r.max_rel_error);
            if (!r.finite) e.failure = r.failure;
        }
        out.push_back(e);
    }
    return out;
}

}  // namespace ridnet
