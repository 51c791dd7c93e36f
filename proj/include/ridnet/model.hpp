#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ridnet/graph_conv.hpp"
#include "ridnet/ops.hpp"
#include "ridnet/params.hpp"

namespace ridnet {

/// Generator architecture. Defaults follow the full-size network.
struct GeneratorConfig {
    /// Feature channels carried between blocks.
    std::size_t channels = 32;
    /// Hidden channels of the first block's two-layer embedding.
    std::size_t embed_hidden = 64;
    /// Hidden channels of the tail (channels -> tail_hidden -> 1).
    std::size_t tail_hidden = 16;
    std::size_t blocks = 3;
    /// Slices in the input stack; must equal graph.m.
    std::size_t slices = 3;
    std::size_t edge_hidden = 16;
    double embed_slope = 0.2;
    ThetaMode theta = ThetaMode::full;
    GraphConfig graph;

    void validate() const;
    std::size_t center() const { return slices / 2; }

    static GeneratorConfig paper();
    /// One block, 8 channels, diagonal Theta, K = 4.
    static GeneratorConfig desk();
};

/// Fresh generator parameters, deterministic in `seed`.
template <typename T>
ParamStore<T> init_generator(const GeneratorConfig& config, std::uint64_t seed);

/// Intermediate values of one block, for inspection and tests.
template <typename T>
struct BlockTrace {
    Tensor<T> embedded;  // [C,M,H,W]
    Tensor<T> p_nl, p_l, p_c, fused;  // [C,H,W]
    Tensor<T> output;  // [C,M,H,W]
    double alpha = 0.0;
    EdgeSet plane_graph, depth_graph;
};

/// 3D embedding of a [C_in,M,H,W] stack into [C,M,H,W].
template <typename T>
Var<T> embed(const Var<T>& stack, const ParamBinder<T>& block, std::size_t block_index, const GeneratorConfig& config);

/// 3x3 reflect-padded convolution of the centre map, channels preserved.
template <typename T>
Var<T> local_branch(const Var<T>& center_map, const ParamBinder<T>& block);

/// alpha * (p_nl + p_l) / 2 + (1 - alpha) * p_c for a one-element alpha.
template <typename T>
Var<T> fuse(const Var<T>& p_nl, const Var<T>& p_l, const Var<T>& p_c, const Var<T>& alpha);

/// clamp(alpha_raw, 0, 1).
template <typename T>
Var<T> effective_alpha(const Var<T>& alpha_raw);

/// One block: embed, aggregate the centre slice three ways, fuse, and put the
/// result back at the centre of the embedded stack.
template <typename T>
Var<T> ridnet_forward(const Var<T>& stack, const ParamBinder<T>& block, std::size_t block_index,
                      const GeneratorConfig& config, BlockTrace<T>* trace = nullptr);

/// [M,H,W] normalised slices -> [H,W] estimate of the centre slice. Not clamped.
template <typename T>
Var<T> generator_forward(const Var<T>& raw_stack, const ParamBinder<T>& params, const GeneratorConfig& config,
                         std::vector<BlockTrace<T>>* traces = nullptr);

/// Inference: generator output clamped to [0,1]. With tile > 0 the slice is
/// processed in tile x tile pieces, each with a `halo`-pixel border of context.
template <typename T>
Tensor<T> denoise(const ParamStore<T>& params, const GeneratorConfig& config, const Tensor<T>& raw_stack,
                  std::size_t tile = 0, std::size_t halo = 8);

}  // namespace ridnet
