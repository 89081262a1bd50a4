#include "scunetpp/bottleneck.hpp"

namespace scunet {

Tensor cnn_bottleneck(const Tensor& x, BottleneckParams& p, Mode mode) {
    if (x.rank() != 4) {
        throw DimensionError("cnn_bottleneck: expected [B,C,H,W], got " + shape_str(x.shape()));
    }
    Tensor y = x;
    for (auto& u : p.units) {
        const int64_t C = y.shape()[1];
        if (u.conv1.shape()[1] != C) {
            throw DimensionError("cnn_bottleneck: channel extent of " + shape_str(y.shape()) +
                                 " does not match unit kernel " + shape_str(u.conv1.shape()));
        }
        Tensor h = relu(batch_norm(y, u.bn1, mode, p.bn_momentum, p.bn_eps));
        h = conv2d(h, u.conv1, 1, 0);
        h = relu(batch_norm(h, u.bn2, mode, p.bn_momentum, p.bn_eps));
        h = conv2d(h, u.conv2, 1, 1);
        h = relu(batch_norm(h, u.bn3, mode, p.bn_momentum, p.bn_eps));
        h = conv2d(h, u.conv3, 1, 0);
        y = u.residual ? add(y, h) : h;
    }
    return y;
}

}  // namespace scunet
