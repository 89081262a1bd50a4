#pragma once

#include <array>
#include <functional>
#include <map>
#include <vector>

#include "scunetpp/swin.hpp"
#include "scunetpp/tensor.hpp"

namespace scunet {

// One fusion node of the dense skip lattice: the feature from the level below
// is upsampled with a learned patch expand, concatenated after all same-level
// predecessors (columns ascending, upsampled last), then passed through
// Conv3x3-BN-ReLU back to the level's channel width.
struct FuseNodeParams {
    ExpandParams expand;  // C_below -> upsampled to C_level
    Tensor conv;          // [C_level, n_in * C_level, 3, 3]
    BatchNormParams bn;
    double bn_momentum = 0.1;
    double bn_eps = 1e-5;
};

Tensor fuse_node(const std::vector<Tensor>& same_level, const Tensor& from_below,
                 FuseNodeParams& p, Mode mode);

// Lattice of intermediate features X(i,j): level i in 0..3, column j >= 0.
// Column 0 holds the encoder outputs; (3,0) is the bottleneck output.
struct FeatureGrid {
    std::map<std::pair<int, int>, Tensor> nodes;

    const Tensor& at(int level, int column) const;
    bool has(int level, int column) const;
    size_t size() const { return nodes.size(); }
};

struct GridParams {
    std::map<std::pair<int, int>, FuseNodeParams> fuse;
};

// Applied to a node before it feeds the level above as `from_below`; the
// model installs its decoder double Swin blocks here for the anti-diagonal.
using BackboneHook = std::function<Tensor(int level, const Tensor&)>;

enum class GridOrder { ColumnMajor, AntiDiagonal };

// Fills the grid. Dense mode computes every X(i,j) with i+j <= 3; plain
// U-skip mode computes only X(i,1) chained down the decoder. Each node is
// checked against the level's canonical shape.
FeatureGrid build_grid(const std::array<Tensor, 3>& encoder_feats, const Tensor& bottleneck,
                       GridParams& params, Mode mode, bool dense,
                       const BackboneHook& hook = nullptr,
                       GridOrder order = GridOrder::ColumnMajor);

}  // namespace scunet
