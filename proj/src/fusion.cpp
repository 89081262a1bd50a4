#include "scunetpp/fusion.hpp"

namespace scunet {

Tensor fuse_node(const std::vector<Tensor>& same_level, const Tensor& from_below,
                 FuseNodeParams& p, Mode mode) {
    if (same_level.empty()) throw UsageError("fuse_node: same_level list must be non-empty");
    const Shape& ls = same_level[0].shape();
    for (const auto& t : same_level) {
        if (t.shape() != ls) {
            throw DimensionError("fuse_node: same-level shape " + shape_str(t.shape()) +
                                 " differs from " + shape_str(ls));
        }
    }
    Tensor up = patch_expand(from_below, p.expand);
    if (up.shape() != ls) {
        throw DimensionError("fuse_node: upsampled shape " + shape_str(up.shape()) +
                             " does not match level shape " + shape_str(ls));
    }
    std::vector<Tensor> parts = same_level;
    parts.push_back(up);
    Tensor cat = concat(parts, 3);
    Tensor h = conv2d(nhwc_to_nchw(cat), p.conv, 1, 1);
    h = relu(batch_norm(h, p.bn, mode, p.bn_momentum, p.bn_eps));
    return nchw_to_nhwc(h);
}

const Tensor& FeatureGrid::at(int level, int column) const {
    auto it = nodes.find({level, column});
    if (it == nodes.end()) {
        throw InternalError("feature grid node (" + std::to_string(level) + "," +
                            std::to_string(column) + ") was not built");
    }
    return it->second;
}

bool FeatureGrid::has(int level, int column) const { return nodes.count({level, column}) > 0; }

FeatureGrid build_grid(const std::array<Tensor, 3>& encoder_feats, const Tensor& bottleneck,
                       GridParams& params, Mode mode, bool dense, const BackboneHook& hook,
                       GridOrder order) {
    const Shape& base = encoder_feats[0].shape();
    const int64_t B = base[0], H0 = base[1], W0 = base[2], C0 = base[3];
    auto canonical = [&](int level) -> Shape {
        return {B, H0 >> level, W0 >> level, C0 << level};
    };

    FeatureGrid grid;
    auto insert = [&](int i, int j, const Tensor& t) {
        if (t.shape() != canonical(i)) {
            throw InternalError("grid node (" + std::to_string(i) + "," + std::to_string(j) +
                                ") has shape " + shape_str(t.shape()) + ", expected " +
                                shape_str(canonical(i)));
        }
        grid.nodes[{i, j}] = t;
    };
    for (int i = 0; i < 3; ++i) insert(i, 0, encoder_feats[static_cast<size_t>(i)]);
    insert(3, 0, bottleneck);

    auto apply_hook = [&](int level, const Tensor& t) { return hook ? hook(level, t) : t; };

    // Cache: a hook runs once per node even if the value is consumed twice.
    std::map<std::pair<int, int>, Tensor> hooked;
    auto hooked_node = [&](int bi, int bj) -> Tensor {
        auto it = hooked.find({bi, bj});
        if (it != hooked.end()) return it->second;
        Tensor h = apply_hook(bi, grid.at(bi, bj));
        hooked[{bi, bj}] = h;
        return h;
    };

    auto compute = [&](int i, int j, int below_col) {
        auto pit = params.fuse.find({i, j});
        if (pit == params.fuse.end()) {
            throw InternalError("no fusion params for grid node (" + std::to_string(i) + "," +
                                std::to_string(j) + ")");
        }
        std::vector<Tensor> same;
        for (int jj = 0; jj < j; ++jj) same.push_back(grid.at(i, jj));
        // The decoder backbone (anti-diagonal in dense mode, the whole chain
        // in U mode) passes through the hook before feeding the level above.
        const int bi = i + 1;
        const bool on_backbone = dense ? (bi + below_col == 3) : true;
        Tensor fb = on_backbone ? hooked_node(bi, below_col) : grid.at(bi, below_col);
        insert(i, j, fuse_node(same, fb, pit->second, mode));
    };

    if (!dense) {
        // Plain U-skips: X(i,1) chained from the bottleneck upward.
        for (int i = 2; i >= 0; --i) compute(i, 1, i == 2 ? 0 : 1);
        return grid;
    }

    if (order == GridOrder::ColumnMajor) {
        for (int j = 1; j <= 3; ++j)
            for (int i = 0; i + j <= 3; ++i) compute(i, j, j - 1);
    } else {
        // Within an anti-diagonal, (i,j) depends on (i+1,j-1); deepest first.
        for (int d = 1; d <= 3; ++d)
            for (int i = d - 1; i >= 0; --i) compute(i, d - i, d - i - 1);
    }
    return grid;
}

}  // namespace scunet
