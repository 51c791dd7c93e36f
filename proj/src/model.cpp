#include "ridnet/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ridnet {

void GeneratorConfig::validate() const {
    if (channels == 0 || embed_hidden == 0 || tail_hidden == 0 || edge_hidden == 0)
        throw std::invalid_argument("generator channel counts must be positive");
    if (blocks < 1 || blocks > 5)
        throw std::invalid_argument("block count must be in [1,5], got " + std::to_string(blocks));
    if (slices != 3) throw std::invalid_argument("the input stack must have 3 slices, got " + std::to_string(slices));
    if (graph.m != slices)
        throw std::invalid_argument("depth graph M=" + std::to_string(graph.m) + " must equal the slice count " +
                                    std::to_string(slices));
    if (!(embed_slope >= 0.0 && embed_slope < 1.0)) throw std::invalid_argument("embedding slope must be in [0,1)");
    graph.validate();
}

GeneratorConfig GeneratorConfig::paper() { return GeneratorConfig{}; }

GeneratorConfig GeneratorConfig::desk() {
    GeneratorConfig c;
    c.channels = 8;
    c.embed_hidden = 16;
    c.tail_hidden = 4;
    c.blocks = 1;
    c.theta = ThetaMode::diagonal;
    c.graph.k = 4;
    return c;
}

namespace {

std::string block_name(std::size_t b) { return "G.block" + std::to_string(b); }

template <typename T>
void add_conv(ParamStore<T>& store, const std::string& name, Shape kernel, rng::CounterRng& rng) {
    std::size_t fan_in = 1;
    for (std::size_t i = 1; i < kernel.size(); ++i) fan_in *= kernel[i];
    const std::size_t cout = kernel[0];
    store.add(name + ".w", he_uniform<T>(kernel, fan_in, rng));
    store.add(name + ".b", Tensor<T>(Shape{cout}));
}

template <typename T>
void add_edge_params(ParamStore<T>& store, const std::string& name, const GeneratorConfig& c, rng::CounterRng& rng) {
    auto p = EccParams<T>::identity(c.channels, c.theta, c.edge_hidden);
    p.w1 = he_uniform<T>(Shape{1, c.edge_hidden}, 1, rng);
    p.b1 = uniform_tensor<T>(Shape{c.edge_hidden}, 0.1, rng);
    p.w2 = uniform_tensor<T>(Shape{c.edge_hidden, p.theta_size()}, 0.01, rng);
    p.add_to(store, name);
}

Shape kernel3(std::size_t cout, std::size_t cin) { return {cout, cin, 3, 3, 3}; }

}  // namespace

template <typename T>
ParamStore<T> init_generator(const GeneratorConfig& c, std::uint64_t seed) {
    c.validate();
    rng::CounterRng rng(seed, rng::init_generator);
    ParamStore<T> store;
    for (std::size_t b = 0; b < c.blocks; ++b) {
        const auto name = block_name(b);
        if (b == 0) {
            add_conv(store, name + ".embed0", kernel3(c.embed_hidden, 1), rng);
            add_conv(store, name + ".embed1", kernel3(c.channels, c.embed_hidden), rng);
        } else {
            add_conv(store, name + ".embed0", kernel3(c.channels, c.channels), rng);
        }
        add_conv(store, name + ".local", Shape{c.channels, c.channels, 3, 3}, rng);
        add_edge_params(store, name + ".plane", c, rng);
        add_edge_params(store, name + ".depth", c, rng);
        store.add(name + ".alpha", Tensor<T>(Shape{1}), true);
    }
    add_conv(store, "G.tail0", kernel3(c.tail_hidden, c.channels), rng);
    add_conv(store, "G.tail1", kernel3(1, c.tail_hidden), rng);
    return store;
}

template <typename T>
Var<T> embed(const Var<T>& stack, const ParamBinder<T>& block, std::size_t block_index, const GeneratorConfig& c) {
    const auto& s = stack.shape();
    if (s.size() != 4 || s[1] != c.slices)
        throw std::invalid_argument("embedding expects a [C," + std::to_string(c.slices) + ",H,W] stack, got " +
                                    shape_str(s));
    const auto act = Activation::leaky(c.embed_slope);
    auto h = ops::activate(ops::conv3d(stack, block("embed0.w"), block("embed0.b"), Padding::reflect), act);
    if (block_index == 0)
        h = ops::activate(ops::conv3d(h, block("embed1.w"), block("embed1.b"), Padding::reflect), act);
    return h;
}

template <typename T>
Var<T> local_branch(const Var<T>& center_map, const ParamBinder<T>& block) {
    return ops::conv2d(center_map, block("local.w"), block("local.b"), Padding::reflect);
}

template <typename T>
Var<T> effective_alpha(const Var<T>& alpha_raw) {
    return ops::clamp(alpha_raw, T(0), T(1));
}

template <typename T>
Var<T> fuse(const Var<T>& p_nl, const Var<T>& p_l, const Var<T>& p_c, const Var<T>& alpha) {
    require_shape(p_l.shape(), p_nl.shape(), "fuse: local branch");
    require_shape(p_c.shape(), p_nl.shape(), "fuse: context branch");
    if (alpha.value().size() != 1) throw std::invalid_argument("fuse: alpha must have one element");
    const T a = alpha.value()[0];
    Tensor<T> out(p_nl.shape());
    auto o = out.mutable_data();
    auto nl = p_nl.value().data(), l = p_l.value().data(), cx = p_c.value().data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = a * ((nl[i] + l[i]) / T(2)) + (T(1) - a) * cx[i];
    return p_nl.tape().record(std::move(out), {p_nl, p_l, p_c, alpha},
                              [p_nl, p_l, p_c, a](const Tensor<T>& g, GradSink<T>& sink) {
                                  auto gv = g.data();
                                  const T half = a / T(2);
                                  for (std::size_t k = 0; k < 2; ++k)
                                      if (sink.wants(k)) {
                                          auto d = sink.grad(k);
                                          for (std::size_t i = 0; i < d.size(); ++i) d[i] += half * gv[i];
                                      }
                                  if (sink.wants(2)) {
                                      auto d = sink.grad(2);
                                      for (std::size_t i = 0; i < d.size(); ++i) d[i] += (T(1) - a) * gv[i];
                                  }
                                  if (sink.wants(3)) {
                                      auto nl = p_nl.value().data(), l = p_l.value().data(),
                                           cx = p_c.value().data();
                                      T acc = 0;
                                      for (std::size_t i = 0; i < gv.size(); ++i)
                                          acc += gv[i] * ((nl[i] + l[i]) / T(2) - cx[i]);
                                      sink.grad(3)[0] += acc;
                                  }
                              });
}

template <typename T>
Var<T> ridnet_forward(const Var<T>& stack, const ParamBinder<T>& block, std::size_t block_index,
                      const GeneratorConfig& c, BlockTrace<T>* trace) {
    auto x = embed(stack, block, block_index, c);
    const std::size_t center = c.center();
    auto center_map = ops::select_slice(x, center);
    EdgeSet* plane_graph = trace ? &trace->plane_graph : nullptr;
    EdgeSet* depth_graph = trace ? &trace->depth_graph : nullptr;
    auto p_nl = plane_gcn_forward(center_map, c.graph, EccVars<T>::bind(block.scoped("plane"), c.theta), plane_graph);
    auto p_l = local_branch(center_map, block);
    auto p_c = depth_gcn_forward(x, c.graph, EccVars<T>::bind(block.scoped("depth"), c.theta), depth_graph);
    auto alpha = effective_alpha(block("alpha"));
    auto fused = fuse(p_nl, p_l, p_c, alpha);
    auto out = ops::replace_slice(x, center, fused);
    if (trace) {
        trace->embedded = x.value();
        trace->p_nl = p_nl.value();
        trace->p_l = p_l.value();
        trace->p_c = p_c.value();
        trace->fused = fused.value();
        trace->output = out.value();
        trace->alpha = static_cast<double>(alpha.value()[0]);
    }
    return out;
}

template <typename T>
Var<T> generator_forward(const Var<T>& raw_stack, const ParamBinder<T>& params, const GeneratorConfig& c,
                         std::vector<BlockTrace<T>>* traces) {
    c.validate();
    const auto& s = raw_stack.shape();
    if (s.size() != 3 || s[0] != c.slices)
        throw std::invalid_argument("generator expects a [" + std::to_string(c.slices) + ",H,W] stack, got " +
                                    shape_str(s));
    const std::size_t H = s[1], W = s[2];
    auto x = ops::reshape(raw_stack, Shape{1, c.slices, H, W});
    if (traces) traces->assign(c.blocks, BlockTrace<T>{});
    for (std::size_t b = 0; b < c.blocks; ++b)
        x = ridnet_forward(x, params.scoped(block_name(b)), b, c, traces ? &(*traces)[b] : nullptr);
    x = ops::activate(ops::conv3d(x, params("G.tail0.w"), params("G.tail0.b"), Padding::reflect),
                      Activation::relu());
    x = ops::conv3d(x, params("G.tail1.w"), params("G.tail1.b"), Padding::reflect);
    return ops::reshape(ops::select_slice(x, c.center()), Shape{H, W});
}

namespace {
template <typename T>
Tensor<T> denoise_whole(const ParamStore<T>& params, const GeneratorConfig& c, const Tensor<T>& raw) {
    Tape<T> tape;
    ParamBinder<T> binder(tape, params, false);
    auto out = generator_forward(tape.constant(raw), binder, c).value().clone();
    for (auto& v : out.mutable_data()) v = std::clamp(v, T(0), T(1));
    return out;
}
}  // namespace

template <typename T>
Tensor<T> denoise(const ParamStore<T>& params, const GeneratorConfig& c, const Tensor<T>& raw, std::size_t tile,
                  std::size_t halo) {
    if (raw.rank() != 3) throw std::invalid_argument("denoise expects [M,H,W], got " + shape_str(raw.shape()));
    const std::size_t M = raw.dim(0), H = raw.dim(1), W = raw.dim(2);
    if (tile == 0 || (tile >= H && tile >= W)) return denoise_whole(params, c, raw);
    Tensor<T> out(Shape{H, W});
    auto o = out.mutable_data();
    for (std::size_t r0 = 0; r0 < H; r0 += tile)
        for (std::size_t c0 = 0; c0 < W; c0 += tile) {
            const std::size_t r1 = std::min(H, r0 + tile), c1 = std::min(W, c0 + tile);
            const std::size_t pr0 = r0 >= halo ? r0 - halo : 0, pc0 = c0 >= halo ? c0 - halo : 0;
            const std::size_t pr1 = std::min(H, r1 + halo), pc1 = std::min(W, c1 + halo);
            const std::size_t th = pr1 - pr0, tw = pc1 - pc0;
            Tensor<T> piece(Shape{M, th, tw});
            auto p = piece.mutable_data();
            for (std::size_t m = 0; m < M; ++m)
                for (std::size_t r = 0; r < th; ++r)
                    for (std::size_t cc = 0; cc < tw; ++cc)
                        p[(m * th + r) * tw + cc] = raw[(m * H + pr0 + r) * W + pc0 + cc];
            auto den = denoise_whole(params, c, piece);
            for (std::size_t r = r0; r < r1; ++r)
                for (std::size_t cc = c0; cc < c1; ++cc) o[r * W + cc] = den[(r - pr0) * tw + (cc - pc0)];
        }
    return out;
}

#define RIDNET_INSTANTIATE_MODEL(T)                                                                               \
    template ParamStore<T> init_generator(const GeneratorConfig&, std::uint64_t);                                \
    template struct BlockTrace<T>;                                                                               \
    template Var<T> embed(const Var<T>&, const ParamBinder<T>&, std::size_t, const GeneratorConfig&);            \
    template Var<T> local_branch(const Var<T>&, const ParamBinder<T>&);                                          \
    template Var<T> fuse(const Var<T>&, const Var<T>&, const Var<T>&, const Var<T>&);                            \
    template Var<T> effective_alpha(const Var<T>&);                                                              \
    template Var<T> ridnet_forward(const Var<T>&, const ParamBinder<T>&, std::size_t, const GeneratorConfig&,    \
                                   BlockTrace<T>*);                                                              \
    template Var<T> generator_forward(const Var<T>&, const ParamBinder<T>&, const GeneratorConfig&,              \
                                      std::vector<BlockTrace<T>>*);                                              \
    template Tensor<T> denoise(const ParamStore<T>&, const GeneratorConfig&, const Tensor<T>&, std::size_t,      \
                               std::size_t);

RIDNET_INSTANTIATE_MODEL(float)
RIDNET_INSTANTIATE_MODEL(double)

}  // namespace ridnet
