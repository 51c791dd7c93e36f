#include "ridnet/graph_conv.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>

#include "ridnet/ops.hpp"

namespace ridnet {

void GraphConfig::validate() const {
    if (window < 5 || window % 2 == 0)
        throw std::invalid_argument("graph window must be odd and >= 5, got " + std::to_string(window));
    if (k < 2) throw std::invalid_argument("graph K must be >= 2, got " + std::to_string(k));
    if (k - 1 > window * window - 9)
        throw std::invalid_argument("K-1 = " + std::to_string(k - 1) + " exceeds the " +
                                    std::to_string(window * window - 9) + " candidates of a " +
                                    std::to_string(window) + "x" + std::to_string(window) + " window");
    if (m < 2) throw std::invalid_argument("depth graph needs M >= 2, got " + std::to_string(m));
}

ThetaMode parse_theta_mode(const std::string& s) {
    if (s == "full") return ThetaMode::full;
    if (s == "diagonal" || s == "diag") return ThetaMode::diagonal;
    throw std::invalid_argument("unknown theta mode '" + s + "'");
}

std::string to_string(ThetaMode m) { return m == ThetaMode::full ? "full" : "diagonal"; }

namespace {

// Feature offset of (node, channel) for [C,H,W] (slices == 1) or [C,S,H,W].
struct NodeLayout {
    std::size_t channels = 0;
    std::size_t slices = 1;
    std::size_t pixels = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t channel_stride = 0;
    std::size_t slice_stride = 0;

    static NodeLayout of(const Shape& s) {
        NodeLayout l;
        if (s.size() == 3) {
            l.channels = s[0];
            l.height = s[1];
            l.width = s[2];
            l.pixels = s[1] * s[2];
            l.channel_stride = l.pixels;
        } else if (s.size() == 4) {
            l.channels = s[0];
            l.slices = s[1];
            l.height = s[2];
            l.width = s[3];
            l.pixels = s[2] * s[3];
            l.channel_stride = s[1] * l.pixels;
            l.slice_stride = l.pixels;
        } else {
            throw std::invalid_argument("graph features must be [C,H,W] or [C,S,H,W], got " + shape_str(s));
        }
        return l;
    }

    std::size_t offset(std::size_t node, std::size_t c) const {
        return c * channel_stride + (node / pixels) * slice_stride + node % pixels;
    }
};

template <typename T>
void gather(const NodeLayout& l, const T* x, std::size_t node, T* out) {
    const std::size_t base = (node / l.pixels) * l.slice_stride + node % l.pixels;
    for (std::size_t c = 0; c < l.channels; ++c) out[c] = x[base + c * l.channel_stride];
}

using SharedIndex = std::shared_ptr<const EdgeIndex>;

// e_ij = ||v_i - v_j||^2 / sqrt(C) for each edge; centre i is node
// center_slice * pixels + i.
template <typename T>
Var<T> edge_distances(const Var<T>& features, const NodeLayout& l, std::size_t center_slice, SharedIndex idx) {
    const std::size_t C = l.channels;
    const T inv_h = T(1) / std::sqrt(static_cast<T>(C));
    Tensor<T> out(Shape{std::max<std::size_t>(idx->edges(), 1)});
    if (idx->edges() == 0) throw std::invalid_argument("graph has no edges");
    auto o = out.mutable_data();
    const T* x = features.value().ptr();
    std::vector<T> vi(C), vj(C);
    for (std::size_t i = 0; i < idx->centers(); ++i) {
        gather(l, x, center_slice * l.pixels + i, vi.data());
        for (std::size_t e = idx->offsets[i]; e < idx->offsets[i + 1]; ++e) {
            gather(l, x, idx->neighbors[e], vj.data());
            T acc = 0;
            for (std::size_t c = 0; c < C; ++c) {
                const T d = vi[c] - vj[c];
                acc += d * d;
            }
            o[e] = acc * inv_h;
        }
    }
    return features.tape().record(
        std::move(out), {features}, [features, l, center_slice, idx, inv_h](const Tensor<T>& g, GradSink<T>& sink) {
            auto gx = sink.grad(0);
            const T* x = features.value().ptr();
            const std::size_t C = l.channels;
            std::vector<T> vi(C), vj(C);
            for (std::size_t i = 0; i < idx->centers(); ++i) {
                const std::size_t ci = center_slice * l.pixels + i;
                gather(l, x, ci, vi.data());
                for (std::size_t e = idx->offsets[i]; e < idx->offsets[i + 1]; ++e) {
                    const std::size_t nj = idx->neighbors[e];
                    gather(l, x, nj, vj.data());
                    const T s = T(2) * g[e] * inv_h;
                    for (std::size_t c = 0; c < C; ++c) {
                        const T d = s * (vi[c] - vj[c]);
                        gx[l.offset(ci, c)] += d;
                        gx[l.offset(nj, c)] -= d;
                    }
                }
            }
        });
}

// s_i[o] = 1/deg_i * sum_e (Theta_e v_j)[o], output [C,H,W].
template <typename T>
Var<T> edge_aggregate(const Var<T>& theta, const Var<T>& features, const NodeLayout& l, SharedIndex idx,
                      ThetaMode mode) {
    const std::size_t C = l.channels, P = l.pixels;
    const std::size_t ts = mode == ThetaMode::full ? C * C : C;
    require_shape(theta.shape(), Shape{idx->edges(), ts}, "edge map Theta");
    Tensor<T> out(Shape{C, l.height, l.width});
    auto o = out.mutable_data();
    const T* x = features.value().ptr();
    const T* th = theta.value().ptr();
    std::vector<T> vj(C), acc(C);
    for (std::size_t i = 0; i < idx->centers(); ++i) {
        const std::size_t deg = idx->degree(i);
        if (deg == 0) continue;
        std::fill(acc.begin(), acc.end(), T(0));
        for (std::size_t e = idx->offsets[i]; e < idx->offsets[i + 1]; ++e) {
            gather(l, x, idx->neighbors[e], vj.data());
            const T* t = th + e * ts;
            if (mode == ThetaMode::full) {
                for (std::size_t r = 0; r < C; ++r) {
                    T s = 0;
                    for (std::size_t c = 0; c < C; ++c) s += t[r * C + c] * vj[c];
                    acc[r] += s;
                }
            } else {
                for (std::size_t r = 0; r < C; ++r) acc[r] += t[r] * vj[r];
            }
        }
        const T inv = T(1) / static_cast<T>(deg);
        for (std::size_t r = 0; r < C; ++r) o[r * P + i] = acc[r] * inv;
    }
    return theta.tape().record(
        std::move(out), {theta, features}, [theta, features, l, idx, mode, ts](const Tensor<T>& g, GradSink<T>& sink) {
            const std::size_t C = l.channels, P = l.pixels;
            const T* x = features.value().ptr();
            const T* th = theta.value().ptr();
            const bool want_theta = sink.wants(0), want_x = sink.wants(1);
            std::span<T> gth = want_theta ? sink.grad(0) : std::span<T>{};
            std::span<T> gx = want_x ? sink.grad(1) : std::span<T>{};
            std::vector<T> vj(C), gi(C);
            for (std::size_t i = 0; i < idx->centers(); ++i) {
                const std::size_t deg = idx->degree(i);
                if (deg == 0) continue;
                const T inv = T(1) / static_cast<T>(deg);
                for (std::size_t r = 0; r < C; ++r) gi[r] = g[r * P + i] * inv;
                for (std::size_t e = idx->offsets[i]; e < idx->offsets[i + 1]; ++e) {
                    const std::size_t nj = idx->neighbors[e];
                    gather(l, x, nj, vj.data());
                    const T* t = th + e * ts;
                    if (mode == ThetaMode::full) {
                        if (want_theta) {
                            T* gt = gth.data() + e * ts;
                            for (std::size_t r = 0; r < C; ++r)
                                for (std::size_t c = 0; c < C; ++c) gt[r * C + c] += gi[r] * vj[c];
                        }
                        if (want_x) {
                            for (std::size_t c = 0; c < C; ++c) {
                                T s = 0;
                                for (std::size_t r = 0; r < C; ++r) s += t[r * C + c] * gi[r];
                                gx[l.offset(nj, c)] += s;
                            }
                        }
                    } else {
                        for (std::size_t r = 0; r < C; ++r) {
                            if (want_theta) gth[e * ts + r] += gi[r] * vj[r];
                            if (want_x) gx[l.offset(nj, r)] += t[r] * gi[r];
                        }
                    }
                }
            }
        });
}

template <typename T>
Var<T> edge_network_var(const Var<T>& weights, const EccVars<T>& p) {
    const std::size_t E = weights.value().size();
    auto h = ops::linear(ops::reshape(weights, Shape{E, 1}), p.w1, p.b1);
    h = ops::activate(h, Activation::leaky(kEdgeNetworkSlope));
    return ops::linear(h, p.w2, p.b2);
}

template <typename T>
void check_ecc_vars(const EccVars<T>& p, std::size_t channels) {
    if (p.bias.shape() != Shape{channels})
        throw std::invalid_argument("edge parameters are for " + shape_str(p.bias.shape()) +
                                    " channels, features have " + std::to_string(channels));
    const std::size_t ts = p.mode == ThetaMode::full ? channels * channels : channels;
    if (p.w2.shape().size() != 2 || p.w2.shape()[1] != ts)
        throw std::invalid_argument("edge network output " + shape_str(p.w2.shape()) + " does not match " +
                                    std::to_string(ts) + " Theta entries");
}

template <typename T>
Var<T> aggregate(const Var<T>& features, const NodeLayout& l, std::size_t center_slice, SharedIndex idx,
                 const EccVars<T>& params, EdgeSet* inspect) {
    auto dist = edge_distances(features, l, center_slice, idx);
    auto weights = ops::segment_softmax(ops::scale(dist, T(-1)), std::span<const std::size_t>(idx->offsets));
    auto theta = edge_network_var(weights, params);
    auto s = edge_aggregate(theta, features, l, idx, params.mode);
    if (inspect) {
        static_cast<EdgeIndex&>(*inspect) = *idx;
        inspect->distances.assign(dist.value().data().begin(), dist.value().data().end());
        inspect->weights.assign(weights.value().data().begin(), weights.value().data().end());
    }
    return ops::add_channel_bias(s, params.bias);
}

std::vector<std::uint32_t> sizes_to_u32(const std::vector<std::size_t>& v, std::size_t extra) {
    std::vector<std::uint32_t> out(v.begin(), v.end());
    out.push_back(static_cast<std::uint32_t>(extra));
    return out;
}

}  // namespace

template <typename T>
T feature_distance(std::span<const T> a, std::span<const T> b) {
    if (a.size() != b.size() || a.empty())
        throw std::invalid_argument("feature_distance: vectors must have equal, non-zero length");
    T acc = 0;
    for (std::size_t c = 0; c < a.size(); ++c) {
        const T d = a[c] - b[c];
        acc += d * d;
    }
    return acc * (T(1) / std::sqrt(static_cast<T>(a.size())));
}

template <typename T>
std::vector<std::uint32_t> knn_neighbors(const Tensor<T>& map, std::size_t row, std::size_t col,
                                         const GraphConfig& config, std::size_t* deficit) {
    config.validate();
    const auto l = NodeLayout::of(map.shape());
    if (map.rank() != 3) throw std::invalid_argument("knn_neighbors: map must be [C,H,W]");
    if (row >= l.height || col >= l.width) throw std::out_of_range("knn_neighbors: centre outside the map");
    const auto half = static_cast<std::ptrdiff_t>(config.window / 2);
    const auto H = static_cast<std::ptrdiff_t>(l.height), W = static_cast<std::ptrdiff_t>(l.width);
    const auto r0 = static_cast<std::ptrdiff_t>(row), c0 = static_cast<std::ptrdiff_t>(col);
    const std::size_t C = l.channels;
    const T* x = map.ptr();
    std::vector<T> vi(C), vj(C);
    gather(l, x, static_cast<std::size_t>(r0 * W + c0), vi.data());

    std::vector<std::pair<T, std::uint32_t>> cand;
    for (auto r = std::max<std::ptrdiff_t>(0, r0 - half); r <= std::min(H - 1, r0 + half); ++r)
        for (auto c = std::max<std::ptrdiff_t>(0, c0 - half); c <= std::min(W - 1, c0 + half); ++c) {
            if (std::abs(r - r0) <= 1 && std::abs(c - c0) <= 1) continue;
            const auto q = static_cast<std::size_t>(r * W + c);
            gather(l, x, q, vj.data());
            cand.emplace_back(feature_distance<T>(vi, vj), static_cast<std::uint32_t>(q));
        }
    const std::size_t want = config.neighbours();
    const std::size_t take = std::min(want, cand.size());
    if (deficit) *deficit += want - take;
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(take), cand.end());
    std::vector<std::uint32_t> out(take);
    for (std::size_t i = 0; i < take; ++i) out[i] = cand[i].second;
    return out;
}

template <typename T>
EdgeIndex plane_edges(const Tensor<T>& map, const GraphConfig& config) {
    const auto l = NodeLayout::of(map.shape());
    EdgeIndex idx;
    idx.offsets.reserve(l.pixels + 1);
    idx.neighbors.reserve(l.pixels * config.neighbours());
    for (std::size_t r = 0; r < l.height; ++r)
        for (std::size_t c = 0; c < l.width; ++c) {
            auto nb = knn_neighbors(map, r, c, config, &idx.deficit);
            idx.neighbors.insert(idx.neighbors.end(), nb.begin(), nb.end());
            idx.offsets.push_back(idx.neighbors.size());
        }
    return idx;
}

EdgeIndex depth_edges(std::size_t slices, std::size_t height, std::size_t width, std::size_t center,
                      std::size_t radius) {
    if (slices < 2) throw std::invalid_argument("depth graph needs at least 2 slices");
    if (center >= slices) throw std::out_of_range("depth graph centre slice out of range");
    const std::size_t P = height * width;
    const auto rad = static_cast<std::ptrdiff_t>(radius);
    const auto H = static_cast<std::ptrdiff_t>(height), W = static_cast<std::ptrdiff_t>(width);
    EdgeIndex idx;
    idx.offsets.reserve(P + 1);
    for (std::ptrdiff_t r0 = 0; r0 < H; ++r0)
        for (std::ptrdiff_t c0 = 0; c0 < W; ++c0) {
            for (std::size_t s = 0; s < slices; ++s) {
                if (s == center) continue;
                for (auto r = std::max<std::ptrdiff_t>(0, r0 - rad); r <= std::min(H - 1, r0 + rad); ++r)
                    for (auto c = std::max<std::ptrdiff_t>(0, c0 - rad); c <= std::min(W - 1, c0 + rad); ++c)
                        idx.neighbors.push_back(static_cast<std::uint32_t>(s * P + static_cast<std::size_t>(r * W + c)));
            }
            idx.offsets.push_back(idx.neighbors.size());
        }
    return idx;
}

template <typename T>
std::vector<T> edge_weights(std::span<const T> distances) {
    if (distances.empty()) throw std::invalid_argument("edge_weights: empty distance list");
    T mn = distances[0];
    for (auto d : distances) {
        if (!std::isfinite(d) || d < T(0))
            throw std::invalid_argument("edge_weights: distances must be finite and non-negative");
        mn = std::min(mn, d);
    }
    std::vector<T> w(distances.size());
    T z = 0;
    for (std::size_t j = 0; j < w.size(); ++j) {
        w[j] = std::exp(mn - distances[j]);
        z += w[j];
    }
    for (auto& v : w) v /= z;
    return w;
}

template <typename T>
void EccParams<T>::validate() const {
    if (channels == 0) throw std::invalid_argument("edge parameters need a positive channel count");
    if (w1.rank() != 2 || w1.dim(0) != 1) throw std::invalid_argument("edge network w1 must be [1,hidden]");
    const std::size_t hidden = w1.dim(1);
    require_shape(b1.shape(), Shape{hidden}, "edge network b1");
    require_shape(w2.shape(), Shape{hidden, theta_size()}, "edge network w2");
    require_shape(b2.shape(), Shape{theta_size()}, "edge network b2");
    require_shape(bias.shape(), Shape{channels}, "aggregation bias");
}

template <typename T>
EccParams<T> EccParams<T>::identity(std::size_t channels, ThetaMode mode, std::size_t hidden) {
    EccParams p;
    p.mode = mode;
    p.channels = channels;
    const std::size_t ts = p.theta_size();
    p.w1 = Tensor<T>(Shape{1, hidden});
    p.b1 = Tensor<T>(Shape{hidden});
    p.w2 = Tensor<T>(Shape{hidden, ts});
    p.b2 = Tensor<T>(Shape{ts});
    auto b2 = p.b2.mutable_data();
    if (mode == ThetaMode::full) {
        for (std::size_t r = 0; r < channels; ++r) b2[r * channels + r] = T(1);
    } else {
        std::fill(b2.begin(), b2.end(), T(1));
    }
    p.bias = Tensor<T>(Shape{channels});
    return p;
}

template <typename T>
EccParams<T> EccParams<T>::random(std::size_t channels, ThetaMode mode, std::size_t hidden, rng::CounterRng& rng) {
    EccParams p;
    p.mode = mode;
    p.channels = channels;
    const std::size_t ts = p.theta_size();
    p.w1 = he_uniform<T>(Shape{1, hidden}, 1, rng);
    p.b1 = uniform_tensor<T>(Shape{hidden}, 0.5, rng);
    p.w2 = uniform_tensor<T>(Shape{hidden, ts}, 1.0 / std::sqrt(static_cast<double>(hidden)), rng);
    p.b2 = uniform_tensor<T>(Shape{ts}, 0.5, rng);
    p.bias = uniform_tensor<T>(Shape{channels}, 0.1, rng);
    return p;
}

template <typename T>
EccParams<T> EccParams<T>::from_store(const ParamStore<T>& store, const std::string& prefix, ThetaMode mode) {
    EccParams p;
    p.mode = mode;
    p.w1 = store.get(prefix + ".w1");
    p.b1 = store.get(prefix + ".b1");
    p.w2 = store.get(prefix + ".w2");
    p.b2 = store.get(prefix + ".b2");
    p.bias = store.get(prefix + ".bias");
    p.channels = p.bias.size();
    p.validate();
    return p;
}

template <typename T>
void EccParams<T>::add_to(ParamStore<T>& store, const std::string& prefix) const {
    validate();
    store.add(prefix + ".w1", w1);
    store.add(prefix + ".b1", b1);
    store.add(prefix + ".w2", w2);
    store.add(prefix + ".b2", b2);
    store.add(prefix + ".bias", bias);
}

template <typename T>
std::vector<T> edge_network(const EccParams<T>& p, T weight) {
    const std::size_t hidden = p.w1.dim(1), ts = p.theta_size();
    std::vector<T> h(hidden);
    for (std::size_t k = 0; k < hidden; ++k) {
        const T z = p.w1[k] * weight + p.b1[k];
        h[k] = z > T(0) ? z : static_cast<T>(kEdgeNetworkSlope) * z;
    }
    std::vector<T> out(p.b2.data().begin(), p.b2.data().end());
    for (std::size_t k = 0; k < hidden; ++k)
        for (std::size_t j = 0; j < ts; ++j) out[j] += h[k] * p.w2[k * ts + j];
    return out;
}

template <typename T>
std::vector<T> ecc_aggregate(const EdgeSet& edges, std::size_t center, const Tensor<T>& features,
                             const EccParams<T>& params) {
    params.validate();
    const auto l = NodeLayout::of(features.shape());
    if (l.channels != params.channels)
        throw std::invalid_argument("ecc_aggregate: Theta is " + std::to_string(params.channels) +
                                    "-channel, features have " + std::to_string(l.channels));
    if (center >= edges.centers()) throw std::out_of_range("ecc_aggregate: centre out of range");
    if (edges.weights.size() != edges.edges()) throw std::invalid_argument("ecc_aggregate: edge set has no weights");
    const std::size_t C = l.channels;
    std::vector<T> s(C, T(0)), vj(C);
    const std::size_t deg = edges.degree(center);
    for (std::size_t e = edges.offsets[center]; e < edges.offsets[center + 1]; ++e) {
        gather(l, features.ptr(), edges.neighbors[e], vj.data());
        const auto theta = edge_network(params, static_cast<T>(edges.weights[e]));
        for (std::size_t r = 0; r < C; ++r) {
            if (params.mode == ThetaMode::full) {
                T acc = 0;
                for (std::size_t c = 0; c < C; ++c) acc += theta[r * C + c] * vj[c];
                s[r] += acc;
            } else {
                s[r] += theta[r] * vj[r];
            }
        }
    }
    for (std::size_t r = 0; r < C; ++r) s[r] = (deg ? s[r] / static_cast<T>(deg) : T(0)) + params.bias[r];
    return s;
}

template <typename T>
EccVars<T> EccVars<T>::bind(const ParamBinder<T>& p, ThetaMode mode) {
    EccVars v;
    v.w1 = p("w1");
    v.b1 = p("b1");
    v.w2 = p("w2");
    v.b2 = p("b2");
    v.bias = p("bias");
    v.mode = mode;
    return v;
}

template <typename T>
Var<T> plane_gcn_forward(const Var<T>& center_map, const GraphConfig& config, const EccVars<T>& params,
                         EdgeSet* inspect) {
    config.validate();
    if (center_map.shape().size() != 3)
        throw std::invalid_argument("plane graph input must be [C,H,W], got " + shape_str(center_map.shape()));
    const auto l = NodeLayout::of(center_map.shape());
    check_ecc_vars(params, l.channels);

    auto idx = std::make_shared<EdgeIndex>();
    if (auto* d = center_map.tape().decisions()) {
        EdgeIndex fresh;
        auto offsets = d->pin([&] {
            fresh = plane_edges(center_map.value(), config);
            return sizes_to_u32(fresh.offsets, fresh.deficit);
        });
        auto neighbors = d->pin([&] { return fresh.neighbors; });
        idx->deficit = offsets.back();
        idx->offsets.assign(offsets.begin(), offsets.end() - 1);
        idx->neighbors = std::move(neighbors);
    } else {
        *idx = plane_edges(center_map.value(), config);
    }
    return aggregate<T>(center_map, l, 0, idx, params, inspect);
}

template <typename T>
Var<T> depth_gcn_forward(const Var<T>& stack, const GraphConfig& config, const EccVars<T>& params,
                         EdgeSet* inspect) {
    if (config.m < 2) throw std::invalid_argument("depth graph needs M >= 2, got " + std::to_string(config.m));
    if (stack.shape().size() != 4)
        throw std::invalid_argument("depth graph input must be [C,M,H,W], got " + shape_str(stack.shape()));
    const auto l = NodeLayout::of(stack.shape());
    if (l.slices != config.m)
        throw std::invalid_argument("depth graph expects M=" + std::to_string(config.m) + " slices, got " +
                                    std::to_string(l.slices));
    check_ecc_vars(params, l.channels);
    const std::size_t center = l.slices / 2;
    auto idx = std::make_shared<const EdgeIndex>(
        depth_edges(l.slices, l.height, l.width, center, config.depth_radius));
    return aggregate<T>(stack, l, center, idx, params, inspect);
}

namespace {
template <typename T>
EccVars<T> constant_vars(Tape<T>& tape, const EccParams<T>& p) {
    p.validate();
    EccVars<T> v;
    v.w1 = tape.constant(p.w1);
    v.b1 = tape.constant(p.b1);
    v.w2 = tape.constant(p.w2);
    v.b2 = tape.constant(p.b2);
    v.bias = tape.constant(p.bias);
    v.mode = p.mode;
    return v;
}
}  // namespace

template <typename T>
Tensor<T> plane_gcn_forward(const Tensor<T>& center_map, const GraphConfig& config, const EccParams<T>& params,
                            EdgeSet* inspect) {
    Tape<T> tape;
    return plane_gcn_forward(tape.constant(center_map), config, constant_vars(tape, params), inspect).value();
}

template <typename T>
Tensor<T> depth_gcn_forward(const Tensor<T>& stack, const GraphConfig& config, const EccParams<T>& params,
                            EdgeSet* inspect) {
    Tape<T> tape;
    return depth_gcn_forward(tape.constant(stack), config, constant_vars(tape, params), inspect).value();
}

#define RIDNET_INSTANTIATE_GRAPH(T)                                                                              \
    template T feature_distance(std::span<const T>, std::span<const T>);                                        \
    template std::vector<std::uint32_t> knn_neighbors(const Tensor<T>&, std::size_t, std::size_t,               \
                                                      const GraphConfig&, std::size_t*);                        \
    template EdgeIndex plane_edges(const Tensor<T>&, const GraphConfig&);                                       \
    template std::vector<T> edge_weights(std::span<const T>);                                                   \
    template struct EccParams<T>;                                                                               \
    template struct EccVars<T>;                                                                                 \
    template std::vector<T> edge_network(const EccParams<T>&, T);                                               \
    template std::vector<T> ecc_aggregate(const EdgeSet&, std::size_t, const Tensor<T>&, const EccParams<T>&);  \
    template Var<T> plane_gcn_forward(const Var<T>&, const GraphConfig&, const EccVars<T>&, EdgeSet*);          \
    template Var<T> depth_gcn_forward(const Var<T>&, const GraphConfig&, const EccVars<T>&, EdgeSet*);          \
    template Tensor<T> plane_gcn_forward(const Tensor<T>&, const GraphConfig&, const EccParams<T>&, EdgeSet*);  \
    template Tensor<T> depth_gcn_forward(const Tensor<T>&, const GraphConfig&, const EccParams<T>&, EdgeSet*);

RIDNET_INSTANTIATE_GRAPH(float)
RIDNET_INSTANTIATE_GRAPH(double)

}  // namespace ridnet
