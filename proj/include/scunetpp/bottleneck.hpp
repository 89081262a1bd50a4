#pragma once

#include <vector>

#include "scunetpp/tensor.hpp"

namespace scunet {

// Pre-activation residual unit: BN-ReLU-1x1Conv, BN-ReLU-3x3Conv(pad 1),
// BN-ReLU-1x1Conv, with the 1x1 convolutions compressing the channel count
// by 4 (Cin -> Cin/4 -> Cin/4 -> Cin). Input and output shapes are equal.
struct BottleneckUnitParams {
    BatchNormParams bn1, bn2, bn3;
    Tensor conv1;  // [Cmid, Cin, 1, 1]
    Tensor conv2;  // [Cmid, Cmid, 3, 3]
    Tensor conv3;  // [Cin, Cmid, 1, 1]
    bool residual = true;
};

struct BottleneckParams {
    std::vector<BottleneckUnitParams> units;
    double bn_momentum = 0.1;
    double bn_eps = 1e-5;
};

// x: [B, C, Hs, Ws] in channel-first layout; train mode updates BN buffers.
Tensor cnn_bottleneck(const Tensor& x, BottleneckParams& p, Mode mode);

}  // namespace scunet
