#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ridnet/autodiff.hpp"
#include "ridnet/params.hpp"

namespace ridnet {

/// Plane/depth graph settings.
struct GraphConfig {
    /// Odd side of the non-local search window.
    std::size_t window = 9;
    /// Vertices per plane graph; K-1 neighbours are selected.
    std::size_t k = 8;
    /// Vertices per depth graph (slices in the stack).
    std::size_t m = 3;
    /// Spatial radius searched in the other slices by the depth graph; 0 = co-located only.
    std::size_t depth_radius = 0;

    void validate() const;
    std::size_t neighbours() const { return k - 1; }
};

/// How the edge network output becomes the per-edge map Theta.
enum class ThetaMode { full, diagonal };

ThetaMode parse_theta_mode(const std::string& s);
std::string to_string(ThetaMode m);

/// Per-centre neighbour lists in CSR form. Node ids are slice * pixels + pixel.
struct EdgeIndex {
    std::vector<std::size_t> offsets{0};
    std::vector<std::uint32_t> neighbors;
    /// Neighbours missing because the clipped window had too few candidates.
    std::size_t deficit = 0;

    std::size_t centers() const { return offsets.size() - 1; }
    std::size_t edges() const { return neighbors.size(); }
    std::size_t degree(std::size_t i) const { return offsets[i + 1] - offsets[i]; }
};

/// EdgeIndex plus the distances e_ij and softmax weights a_ij of one pass.
struct EdgeSet : EdgeIndex {
    std::vector<double> distances;
    std::vector<double> weights;
};

/// ||a - b||^2 / sqrt(C).
template <typename T>
T feature_distance(std::span<const T> a, std::span<const T> b);

/// K-1 nearest candidates of pixel (row, col) of a [C,H,W] map. Candidates
/// are the window around the pixel clipped at the border, minus the pixel
/// itself and its 8 adjacent pixels. Ties go to the smaller flat index.
/// When fewer candidates exist all are returned and `deficit` (if given) is
/// increased by the shortfall.
template <typename T>
std::vector<std::uint32_t> knn_neighbors(const Tensor<T>& feature_map, std::size_t row, std::size_t col,
                                         const GraphConfig& config, std::size_t* deficit = nullptr);

/// knn_neighbors for every pixel, in flat pixel order.
template <typename T>
EdgeIndex plane_edges(const Tensor<T>& feature_map, const GraphConfig& config);

/// For each pixel of the centre slice: the same pixel (or its clipped
/// radius window) in every other slice.
EdgeIndex depth_edges(std::size_t slices, std::size_t height, std::size_t width, std::size_t center,
                      std::size_t radius);

/// softmax_j(-e_ij) with max subtraction.
template <typename T>
std::vector<T> edge_weights(std::span<const T> distances);

/// Parameters of one edge-conditioned aggregation: the edge network
/// F (1 -> hidden -> C*C or C, leaky-relu hidden layer) and output bias.
template <typename T>
struct EccParams {
    Tensor<T> w1;    // [1, hidden]
    Tensor<T> b1;    // [hidden]
    Tensor<T> w2;    // [hidden, C*C] or [hidden, C]
    Tensor<T> b2;    // [C*C] or [C]
    Tensor<T> bias;  // [C]
    ThetaMode mode = ThetaMode::full;
    std::size_t channels = 0;

    void validate() const;
    std::size_t theta_size() const { return mode == ThetaMode::full ? channels * channels : channels; }

    /// F == identity regardless of its input; zero bias.
    static EccParams identity(std::size_t channels, ThetaMode mode, std::size_t hidden = 16);
    static EccParams random(std::size_t channels, ThetaMode mode, std::size_t hidden, rng::CounterRng& rng);
    /// Reads entries `<prefix>.w1` ... `<prefix>.bias`.
    static EccParams from_store(const ParamStore<T>& store, const std::string& prefix, ThetaMode mode);
    void add_to(ParamStore<T>& store, const std::string& prefix) const;
};

inline constexpr double kEdgeNetworkSlope = 0.2;

/// F(a) evaluated directly: Theta flattened row-major (full) or its diagonal.
template <typename T>
std::vector<T> edge_network(const EccParams<T>& params, T weight);

/// s_i = 1/|N(i)| * sum_j Theta(a_ij) v_j + b for centre `center` of a [C,H,W] map.
template <typename T>
std::vector<T> ecc_aggregate(const EdgeSet& edges, std::size_t center, const Tensor<T>& features,
                             const EccParams<T>& params);

/// Tape-bound ECC parameters.
template <typename T>
struct EccVars {
    Var<T> w1, b1, w2, b2, bias;
    ThetaMode mode = ThetaMode::full;

    static EccVars bind(const ParamBinder<T>& params, ThetaMode mode);
};

/// Non-local aggregation over the plane graph of a [C,H,W] map. The graph is
/// rebuilt from the map itself. Differentiable w.r.t. the map (including the
/// path through a_ij) and the edge parameters. `inspect`, when given,
/// receives the graph with its distances and weights.
template <typename T>
Var<T> plane_gcn_forward(const Var<T>& center_map, const GraphConfig& config, const EccVars<T>& params,
                         EdgeSet* inspect = nullptr);

/// Context aggregation over the depth graph of a channels-first stack
/// [C,M,H,W]; returns the centre slice's aggregate [C,H,W].
template <typename T>
Var<T> depth_gcn_forward(const Var<T>& stack, const GraphConfig& config, const EccVars<T>& params,
                         EdgeSet* inspect = nullptr);

/// Value-level conveniences over constant inputs.
template <typename T>
Tensor<T> plane_gcn_forward(const Tensor<T>& center_map, const GraphConfig& config, const EccParams<T>& params,
                            EdgeSet* inspect = nullptr);
template <typename T>
Tensor<T> depth_gcn_forward(const Tensor<T>& stack, const GraphConfig& config, const EccParams<T>& params,
                            EdgeSet* inspect = nullptr);

}  // namespace ridnet
