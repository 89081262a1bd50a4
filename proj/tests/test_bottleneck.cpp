#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "scunetpp/bottleneck.hpp"
#include "scunetpp/rng.hpp"

using namespace scunet;

namespace {

Tensor rand_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
    std::vector<double> d(static_cast<size_t>(shape_numel(shape)));
    for (double& v : d) v = rng.uniform(lo, hi);
    return Tensor::from_data(std::move(shape), std::move(d));
}

BatchNormParams rand_bn(Rng& rng, int64_t c) {
    BatchNormParams bn;
    bn.gamma = rand_tensor(rng, {c}, 0.5, 1.5);
    bn.beta = rand_tensor(rng, {c}, -0.2, 0.2);
    bn.running_mean = Tensor::zeros({c});
    bn.running_var = Tensor::full({c}, 1.0);
    return bn;
}

BottleneckParams make_params(Rng& rng, int64_t c, int units, bool residual, double wscale = 0.3) {
    BottleneckParams p;
    const int64_t cmid = c / 4;
    for (int u = 0; u < units; ++u) {
        BottleneckUnitParams up;
        up.bn1 = rand_bn(rng, c);
        up.conv1 = rand_tensor(rng, {cmid, c, 1, 1}, -wscale, wscale);
        up.bn2 = rand_bn(rng, cmid);
        up.conv2 = rand_tensor(rng, {cmid, cmid, 3, 3}, -wscale, wscale);
        up.bn3 = rand_bn(rng, cmid);
        up.conv3 = rand_tensor(rng, {c, cmid, 1, 1}, -wscale, wscale);
        up.residual = residual;
        p.units.push_back(std::move(up));
    }
    return p;
}

}  // namespace

TEST_CASE("shape is preserved, including 2x2 spatial extents") {
    Rng rng(1);
    BottleneckParams p = make_params(rng, 192, 2, true);
    Tensor x = rand_tensor(rng, {1, 192, 2, 2});
    CHECK(cnn_bottleneck(x, p, Mode::Eval).shape() == x.shape());

    BottleneckParams p2 = make_params(rng, 64, 2, true);
    Tensor x2 = rand_tensor(rng, {2, 64, 7, 7});
    CHECK(cnn_bottleneck(x2, p2, Mode::Train).shape() == x2.shape());
}

TEST_CASE("zero convolutions with the residual on give the identity") {
    Rng rng(2);
    BottleneckParams p = make_params(rng, 32, 2, true, 0.0);
    for (auto& u : p.units) {
        u.conv1 = Tensor::zeros(u.conv1.shape());
        u.conv2 = Tensor::zeros(u.conv2.shape());
        u.conv3 = Tensor::zeros(u.conv3.shape());
    }
    Tensor x = rand_tensor(rng, {1, 32, 3, 3});
    CHECK(cnn_bottleneck(x, p, Mode::Eval).data() == x.data());
}

TEST_CASE("eval mode decouples the batch") {
    Rng rng(3);
    BottleneckParams p = make_params(rng, 16, 2, true);
    Tensor a = rand_tensor(rng, {1, 16, 4, 4});
    Tensor b = rand_tensor(rng, {1, 16, 4, 4});
    std::vector<double> ab = a.data();
    ab.insert(ab.end(), b.data().begin(), b.data().end());
    std::vector<double> ba = b.data();
    ba.insert(ba.end(), a.data().begin(), a.data().end());

    Tensor yab = cnn_bottleneck(Tensor::from_data({2, 16, 4, 4}, ab), p, Mode::Eval);
    Tensor yba = cnn_bottleneck(Tensor::from_data({2, 16, 4, 4}, ba), p, Mode::Eval);
    const int64_t per = 16 * 4 * 4;
    for (int64_t i = 0; i < per; ++i) {
        CHECK(yab.data()[static_cast<size_t>(i)] == yba.data()[static_cast<size_t>(per + i)]);
        CHECK(yab.data()[static_cast<size_t>(per + i)] == yba.data()[static_cast<size_t>(i)]);
    }
}

TEST_CASE("degenerate train statistics raise") {
    Rng rng(4);
    BottleneckParams p = make_params(rng, 8, 1, true);
    Tensor x = rand_tensor(rng, {1, 8, 1, 1});
    CHECK_THROWS_AS(cnn_bottleneck(x, p, Mode::Train), DegenerateStatsError);
    CHECK_NOTHROW(cnn_bottleneck(x, p, Mode::Eval));
}

TEST_CASE("channel mismatch raises a dimension error") {
    Rng rng(5);
    BottleneckParams p = make_params(rng, 16, 1, true);
    CHECK_THROWS_AS(cnn_bottleneck(rand_tensor(rng, {1, 24, 3, 3}), p, Mode::Eval), DimensionError);
}

TEST_CASE("gradient check through the full block") {
    Rng rng(6);
    BottleneckParams p = make_params(rng, 8, 2, true);
    Tensor x = rand_tensor(rng, {2, 8, 2, 2});
    Tensor xg = x.detached();
    xg.set_requires_grad(true);
    backward(sum_all(cnn_bottleneck(xg, p, Mode::Eval)));
    Tensor fd = finite_diff_grad(
        [&](const Tensor& t) {
            NoGradGuard ng;
            return sum_all(cnn_bottleneck(t, p, Mode::Eval)).item();
        },
        x, 1e-5);
    double scale = 1e-3, worst = 0.0;
    for (size_t i = 0; i < fd.data().size(); ++i) {
        scale = std::max({scale, std::abs(fd.data()[i]), std::abs(xg.grad()[i])});
        worst = std::max(worst, std::abs(fd.data()[i] - xg.grad()[i]));
    }
    CHECK(worst / scale < 1e-4);
}
