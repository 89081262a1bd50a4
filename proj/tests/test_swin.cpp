#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "scunetpp/gradcheck.hpp"
#include "scunetpp/rng.hpp"
#include "scunetpp/swin.hpp"

using namespace scunet;

namespace {

Tensor rand_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
    std::vector<double> d(static_cast<size_t>(shape_numel(shape)));
    for (double& v : d) v = rng.uniform(lo, hi);
    return Tensor::from_data(std::move(shape), std::move(d));
}

AttentionParams rand_attention(Rng& rng, int dim, int heads, int window) {
    AttentionParams p;
    p.dim = dim;
    p.heads = heads;
    p.window = window;
    p.rel_bias_enabled = false;  // oracles run without the learned bias table
    p.wq = rand_tensor(rng, {dim, dim}, -0.5, 0.5);
    p.bq = rand_tensor(rng, {dim}, -0.5, 0.5);
    p.wk = rand_tensor(rng, {dim, dim}, -0.5, 0.5);
    p.bk = rand_tensor(rng, {dim}, -0.5, 0.5);
    p.wv = rand_tensor(rng, {dim, dim}, -0.5, 0.5);
    p.bv = rand_tensor(rng, {dim}, -0.5, 0.5);
    p.wo = rand_tensor(rng, {dim, dim}, -0.5, 0.5);
    p.bo = rand_tensor(rng, {dim}, -0.5, 0.5);
    return p;
}

Tensor identity_matrix(int64_t n) {
    Tensor t = Tensor::zeros({n, n});
    for (int64_t i = 0; i < n; ++i) t.raw_data()[static_cast<size_t>(i * n + i)] = 1.0;
    return t;
}

SwinBlockParams rand_block(Rng& rng, int dim, int heads, int window, int shift, bool shifted,
                           int mlp_ratio) {
    SwinBlockParams p;
    p.window = window;
    p.shift = shift;
    p.shifted = shifted;
    p.norm1 = {rand_tensor(rng, {dim}, 0.5, 1.5), rand_tensor(rng, {dim}, -0.2, 0.2)};
    p.attn = rand_attention(rng, dim, heads, window);
    p.norm2 = {rand_tensor(rng, {dim}, 0.5, 1.5), rand_tensor(rng, {dim}, -0.2, 0.2)};
    const int hidden = mlp_ratio * dim;
    p.mlp.w1 = rand_tensor(rng, {dim, hidden}, -0.4, 0.4);
    p.mlp.b1 = rand_tensor(rng, {hidden}, -0.2, 0.2);
    p.mlp.w2 = rand_tensor(rng, {hidden, dim}, -0.4, 0.4);
    p.mlp.b2 = rand_tensor(rng, {dim}, -0.2, 0.2);
    return p;
}

}  // namespace

TEST_CASE("patch partition and linear embedding") {
    Rng rng(1);
    EmbedParams e96{rand_tensor(rng, {48, 96}), rand_tensor(rng, {96})};
    CHECK(patch_partition_embed(Tensor::zeros({1, 3, 224, 224}), e96, 4).shape() ==
          Shape{1, 56, 56, 96});

    EmbedParams e24{rand_tensor(rng, {48, 24}), rand_tensor(rng, {24})};
    CHECK(patch_partition_embed(Tensor::zeros({1, 3, 64, 64}), e24, 4).shape() ==
          Shape{1, 16, 16, 24});

    CHECK_THROWS_AS(patch_partition(Tensor::zeros({1, 3, 30, 30}), 4), DimensionError);
}

TEST_CASE("window partition and reverse") {
    Rng rng(2);
    Tensor x = rand_tensor(rng, {1, 8, 8, 4});
    Tensor w = window_partition(x, 4);
    CHECK(w.shape() == Shape{4, 16, 4});

    // Bijection: reverse(partition(x)) == x, exactly, several grids.
    for (const auto& [B, H, W, C, ws] :
         {std::tuple{1, 8, 8, 4, 4}, std::tuple{2, 8, 12, 3, 4}, std::tuple{1, 6, 6, 2, 2},
          std::tuple{3, 4, 4, 5, 4}}) {
        Tensor xr = rand_tensor(rng, {B, H, W, C});
        Tensor rt = window_reverse(window_partition(xr, ws), ws, B, H, W);
        CHECK(rt.data() == xr.data());
    }

    CHECK_THROWS_AS(window_partition(x, 3), DimensionError);
}

TEST_CASE("wmsa shape preservation and uniform-attention property") {
    Rng rng(3);
    AttentionParams p = rand_attention(rng, 8, 2, 4);
    Tensor x = rand_tensor(rng, {1, 8, 8, 8});
    CHECK(wmsa(x, p, 4).shape() == x.shape());

    // Zero query/key weights, identity value/output: each output position is
    // its window's mean.
    AttentionParams u = rand_attention(rng, 4, 2, 4);
    u.wq = Tensor::zeros({4, 4});
    u.bq = Tensor::zeros({4});
    u.wk = Tensor::zeros({4, 4});
    u.bk = Tensor::zeros({4});
    u.wv = identity_matrix(4);
    u.bv = Tensor::zeros({4});
    u.wo = identity_matrix(4);
    u.bo = Tensor::zeros({4});
    Tensor xu = rand_tensor(rng, {1, 8, 8, 4});
    Tensor yu = wmsa(xu, u, 4);
    for (int64_t wy = 0; wy < 2; ++wy)
        for (int64_t wx = 0; wx < 2; ++wx)
            for (int64_t c = 0; c < 4; ++c) {
                double mean = 0;
                for (int64_t dy = 0; dy < 4; ++dy)
                    for (int64_t dx = 0; dx < 4; ++dx) mean += xu.at({0, wy * 4 + dy, wx * 4 + dx, c});
                mean /= 16.0;
                for (int64_t dy = 0; dy < 4; ++dy)
                    for (int64_t dx = 0; dx < 4; ++dx) {
                        CHECK(yu.at({0, wy * 4 + dy, wx * 4 + dx, c}) ==
                              doctest::Approx(mean).epsilon(1e-12));
                    }
            }
}

TEST_CASE("single-window attention matches the scalar brute force") {
    Rng rng(4);
    AttentionParams p = rand_attention(rng, 1, 1, 2);
    Tensor x = rand_tensor(rng, {1, 2, 2, 1});
    Tensor y = wmsa(x, p, 2);

    std::vector<std::pair<int64_t, int64_t>> tokens = {{0, 0}, {0, 1}, {1, 0}, {1, 1}};
    std::vector<double> expect(4, 0.0);
    oracle::attention_over_tokens(x.data(), 2, 1, tokens, p, expect);
    for (size_t i = 0; i < 4; ++i) CHECK(y.data()[i] == doctest::Approx(expect[i]).epsilon(1e-12));
}

TEST_CASE("swmsa equals the shifted-group brute-force oracle") {
    Rng rng(5);
    for (int seed = 0; seed < 20; ++seed) {
        AttentionParams p = rand_attention(rng, 4, 2, 4);
        Tensor x = rand_tensor(rng, {1, 8, 8, 4});
        Tensor y = swmsa(x, p, 4, 2);
        const auto expect = oracle::shifted_attention(x.data(), 8, 8, 4, p, 4, 2);
        double worst = 0.0;
        for (size_t i = 0; i < expect.size(); ++i) {
            worst = std::max(worst, std::abs(y.data()[i] - expect[i]));
        }
        CHECK(worst < 1e-9);
    }
}

TEST_CASE("swmsa with shift 0 degenerates to wmsa") {
    Rng rng(6);
    AttentionParams p = rand_attention(rng, 4, 2, 4);
    Tensor x = rand_tensor(rng, {2, 8, 8, 4});
    CHECK(swmsa(x, p, 4, 0).data() == wmsa(x, p, 4).data());
}

TEST_CASE("attention probability rows sum to 1 and masked pairs vanish") {
    Rng rng(7);
    AttentionParams p = rand_attention(rng, 4, 2, 4);
    Tensor x = rand_tensor(rng, {1, 8, 8, 4});
    AttnProbe probe;
    swmsa(x, p, 4, 2, &probe);
    REQUIRE(probe.probs.size() == 1);
    const Tensor& attn = probe.probs[0];  // [nW, h, T, T]
    const int64_t nW = attn.shape()[0], h = attn.shape()[1], T = attn.shape()[2];

    // Row sums, masked rows included.
    for (int64_t w = 0; w < nW; ++w)
        for (int64_t hh = 0; hh < h; ++hh)
            for (int64_t t1 = 0; t1 < T; ++t1) {
                double sum = 0;
                for (int64_t t2 = 0; t2 < T; ++t2) sum += attn.at({w, hh, t1, t2});
                CHECK(std::abs(sum - 1.0) < 1e-10);
            }

    // Cross-group pairs carry negligible weight. Group identity of a token in
    // the rolled grid window = the true shifted-window cell of its original
    // position.
    const int s = 2, w4 = 4;
    auto cell_of = [&](int64_t rolled_y, int64_t rolled_x) {
        const int64_t oy = (rolled_y + s) % 8;
        const int64_t ox = (rolled_x + s) % 8;
        const auto rows = oracle::shifted_intervals(8, w4, s);
        const auto cols = oracle::shifted_intervals(8, w4, s);
        int64_t cell = 0;
        for (size_t i = 0; i < rows.size(); ++i)
            for (size_t j = 0; j < cols.size(); ++j) {
                if (oy >= rows[i].first && oy < rows[i].second && ox >= cols[j].first &&
                    ox < cols[j].second) {
                    cell = static_cast<int64_t>(i * cols.size() + j);
                }
            }
        return cell;
    };
    for (int64_t wi = 0; wi < nW; ++wi) {
        const int64_t wy = wi / 2, wx = wi % 2;
        for (int64_t t1 = 0; t1 < T; ++t1)
            for (int64_t t2 = 0; t2 < T; ++t2) {
                const int64_t y1 = wy * 4 + t1 / 4, x1 = wx * 4 + t1 % 4;
                const int64_t y2 = wy * 4 + t2 / 4, x2 = wx * 4 + t2 % 4;
                if (cell_of(y1, x1) != cell_of(y2, x2)) {
                    for (int64_t hh = 0; hh < h; ++hh) CHECK(attn.at({wi, hh, t1, t2}) < 1e-30);
                }
            }
    }
}

TEST_CASE("swin block") {
    Rng rng(8);
    SwinBlockParams p = rand_block(rng, 24, 2, 4, 2, false, 4);
    Tensor x = rand_tensor(rng, {1, 16, 16, 24});
    CHECK(swin_block(x, p).shape() == x.shape());

    // All-zero weights and zero layer-norm gamma: the block is a pure residual.
    SwinBlockParams z = p;
    z.norm1 = {Tensor::zeros({24}), Tensor::zeros({24})};
    z.norm2 = {Tensor::zeros({24}), Tensor::zeros({24})};
    for (Tensor* t : {&z.attn.wq, &z.attn.wk, &z.attn.wv, &z.attn.wo}) *t = Tensor::zeros({24, 24});
    for (Tensor* t : {&z.attn.bq, &z.attn.bk, &z.attn.bv, &z.attn.bo}) *t = Tensor::zeros({24});
    z.mlp.w1 = Tensor::zeros({24, 96});
    z.mlp.b1 = Tensor::zeros({96});
    z.mlp.w2 = Tensor::zeros({96, 24});
    z.mlp.b2 = Tensor::zeros({24});
    CHECK(swin_block(x, z).data() == x.data());

    // Gradient of sum(output) w.r.t. x.
    Tensor xs = rand_tensor(rng, {1, 8, 8, 4});
    SwinBlockParams ps = rand_block(rng, 4, 2, 4, 2, true, 2);
    Tensor xg = xs.detached();
    xg.set_requires_grad(true);
    backward(sum_all(swin_block(xg, ps)));
    Tensor fd = finite_diff_grad(
        [&](const Tensor& t) {
            NoGradGuard ng;
            return sum_all(swin_block(t, ps)).item();
        },
        xs, 1e-5);
    CHECK(grad_rel_err(xg.grad(), fd.data()) < 1e-4);
}

TEST_CASE("double swin block") {
    Rng rng(9);
    SwinBlockParams b1 = rand_block(rng, 24, 2, 4, 2, false, 4);
    SwinBlockParams b2 = rand_block(rng, 24, 2, 4, 2, true, 4);
    Tensor x = rand_tensor(rng, {1, 16, 16, 24});

    Tensor y = double_swin_block(x, b1, b2);
    CHECK(y.shape() == x.shape());
    CHECK(y.data() == swin_block(swin_block(x, b1), b2).data());

    CHECK_THROWS_AS(double_swin_block(x, b2, b1), ConfigError);
    CHECK_THROWS_AS(double_swin_block(x, b1, b1), ConfigError);

    // Receptive field: a W-MSA-only pass keeps a perturbation inside its
    // window; the shifted pair lets it reach the adjacent window.
    SwinBlockParams s1 = rand_block(rng, 4, 2, 4, 2, false, 2);
    SwinBlockParams s2 = rand_block(rng, 4, 2, 4, 2, true, 2);
    Tensor base = rand_tensor(rng, {1, 8, 8, 4});
    Tensor bumped = base.detached();
    // Perturb (1,1), inside window (0,0).
    bumped.raw_data()[static_cast<size_t>((1 * 8 + 1) * 4)] += 0.5;

    Tensor w0 = swin_block(base, s1);
    Tensor w1 = swin_block(bumped, s1);
    double far_wmsa = 0.0, far_pair = 0.0;
    Tensor p0 = double_swin_block(base, s1, s2);
    Tensor p1 = double_swin_block(bumped, s1, s2);
    for (int64_t y2 = 0; y2 < 4; ++y2)
        for (int64_t x2 = 4; x2 < 8; ++x2)  // window (0,1)
            for (int64_t c = 0; c < 4; ++c) {
                far_wmsa = std::max(far_wmsa, std::abs(w1.at({0, y2, x2, c}) - w0.at({0, y2, x2, c})));
                far_pair = std::max(far_pair, std::abs(p1.at({0, y2, x2, c}) - p0.at({0, y2, x2, c})));
            }
    CHECK(far_wmsa == 0.0);
    CHECK(far_pair > 1e-8);
}

TEST_CASE("patch merge") {
    Rng rng(10);
    MergeParams big{rand_tensor(rng, {4 * 96, 2 * 96}, -0.1, 0.1)};
    CHECK(patch_merge(Tensor::zeros({1, 56, 56, 96}), big).shape() == Shape{1, 28, 28, 192});

    // Spatially constant input stays spatially constant.
    MergeParams mp{rand_tensor(rng, {16, 8})};
    Tensor xc = Tensor::full({1, 4, 4, 4}, 0.75);
    Tensor yc = patch_merge(xc, mp);
    for (int64_t c = 0; c < 8; ++c) {
        const double v = yc.at({0, 0, 0, c});
        for (int64_t y = 0; y < 2; ++y)
            for (int64_t x = 0; x < 2; ++x) CHECK(yc.at({0, y, x, c}) == v);
    }

    CHECK_THROWS_AS(patch_merge(Tensor::zeros({1, 3, 3, 8}), mp), DimensionError);
}

TEST_CASE("patch expand and final expand") {
    Rng rng(11);
    ExpandParams big{rand_tensor(rng, {768, 1536}, -0.02, 0.02)};
    CHECK(patch_expand(Tensor::zeros({1, 7, 7, 768}), big).shape() == Shape{1, 14, 14, 384});

    // merge then expand restores the shape (values need not round-trip).
    MergeParams mp{rand_tensor(rng, {16, 8})};
    ExpandParams ep{rand_tensor(rng, {8, 16})};
    Tensor x = rand_tensor(rng, {1, 8, 8, 4});
    CHECK(patch_expand(patch_merge(x, mp), ep).shape() == x.shape());

    CHECK_THROWS_AS(patch_expand(Tensor::zeros({1, 4, 4, 3}), ExpandParams{rand_tensor(rng, {3, 6})}),
                    DimensionError);

    Expand4Params e4{rand_tensor(rng, {24, 384}, -0.05, 0.05)};
    Tensor small = rand_tensor(rng, {1, 16, 16, 24});
    Tensor up = final_expand4(small, e4);
    CHECK(up.shape() == Shape{1, 64, 64, 24});

    // Per-pixel logits through a linear head.
    Tensor head_w = rand_tensor(rng, {24, 2});
    Tensor head_b = rand_tensor(rng, {2});
    Tensor logits = nhwc_to_nchw(linear(up, head_w, head_b));
    CHECK(logits.shape() == Shape{1, 2, 64, 64});

    Expand4Params e4big{rand_tensor(rng, {96, 1536}, -0.02, 0.02)};
    CHECK(final_expand4(Tensor::zeros({1, 56, 56, 96}), e4big).shape() == Shape{1, 224, 224, 96});
}

TEST_CASE("merge/expand shape algebra across all stage boundaries") {
    Rng rng(12);
    // img 64, C=24 ledger.
    int64_t res = 16, dim = 24;
    Tensor x = rand_tensor(rng, {1, res, res, dim}, -0.2, 0.2);
    for (int level = 0; level < 3; ++level) {
        MergeParams mp{rand_tensor(rng, {4 * dim, 2 * dim}, -0.1, 0.1)};
        x = patch_merge(x, mp);
        res /= 2;
        dim *= 2;
        CHECK(x.shape() == Shape{1, res, res, dim});
    }
    for (int level = 0; level < 3; ++level) {
        ExpandParams ep{rand_tensor(rng, {dim, 2 * dim}, -0.1, 0.1)};
        x = patch_expand(x, ep);
        res *= 2;
        dim /= 2;
        CHECK(x.shape() == Shape{1, res, res, dim});
    }
}
