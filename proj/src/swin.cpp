#include "scunetpp/swin.hpp"

#include <cmath>

namespace scunet {

namespace {

constexpr double kMaskNegInf = -1e9;

void require_divisible(const Tensor& x, int w) {
    const int64_t Hf = x.shape()[1], Wf = x.shape()[2];
    if (w < 1 || Hf % w != 0 || Wf % w != 0) {
        throw DimensionError("window size " + std::to_string(w) +
                             " does not divide spatial extents of " + shape_str(x.shape()));
    }
}

// Relative-position index table for a w x w window: entry (t1, t2) is the row
// of the bias table for offset (y1-y2, x1-x2).
std::vector<int64_t> rel_position_index(int w) {
    const int T = w * w;
    std::vector<int64_t> idx(static_cast<size_t>(T) * T);
    for (int t1 = 0; t1 < T; ++t1) {
        const int y1 = t1 / w, x1 = t1 % w;
        for (int t2 = 0; t2 < T; ++t2) {
            const int y2 = t2 / w, x2 = t2 % w;
            const int dy = y1 - y2 + w - 1;
            const int dx = x1 - x2 + w - 1;
            idx[static_cast<size_t>(t1) * T + t2] = static_cast<int64_t>(dy) * (2 * w - 1) + dx;
        }
    }
    return idx;
}

// Attention mask for the shifted case, [nW_per_image, T, T] with 0 on
// same-region pairs and a large negative constant across regions. Region ids
// follow the rolled-coordinate slicing (0..Hf-w, Hf-w..Hf-s, Hf-s..Hf) per
// axis, which reproduces the true (non-cyclic) shifted window partition.
std::vector<double> shift_mask(int64_t Hf, int64_t Wf, int w, int s) {
    auto region = [&](int64_t pos, int64_t extent) -> int {
        if (pos < extent - w) return 0;
        if (pos < extent - s) return 1;
        return 2;
    };
    const int64_t nWh = Hf / w, nWw = Wf / w;
    const int64_t T = static_cast<int64_t>(w) * w;
    std::vector<int> ids(static_cast<size_t>(Hf * Wf));
    for (int64_t y = 0; y < Hf; ++y)
        for (int64_t x = 0; x < Wf; ++x)
            ids[static_cast<size_t>(y * Wf + x)] = region(y, Hf) * 3 + region(x, Wf);

    std::vector<double> mask(static_cast<size_t>(nWh * nWw * T * T), 0.0);
    for (int64_t wy = 0; wy < nWh; ++wy) {
        for (int64_t wx = 0; wx < nWw; ++wx) {
            const int64_t wi = wy * nWw + wx;
            for (int64_t t1 = 0; t1 < T; ++t1) {
                const int64_t y1 = wy * w + t1 / w, x1 = wx * w + t1 % w;
                for (int64_t t2 = 0; t2 < T; ++t2) {
                    const int64_t y2 = wy * w + t2 / w, x2 = wx * w + t2 % w;
                    if (ids[static_cast<size_t>(y1 * Wf + x1)] != ids[static_cast<size_t>(y2 * Wf + x2)]) {
                        mask[static_cast<size_t>(((wi * T) + t1) * T + t2)] = kMaskNegInf;
                    }
                }
            }
        }
    }
    return mask;
}

// Multi-head attention over already-partitioned windows [nW, T, C].
Tensor window_attention(const Tensor& xw, const AttentionParams& p, const Tensor& mask,
                        AttnProbe* probe) {
    const int64_t nW = xw.shape()[0], T = xw.shape()[1], C = xw.shape()[2];
    if (C != p.dim) {
        throw DimensionError("attention: channel extent of " + shape_str(xw.shape()) +
                             " does not match params dim " + std::to_string(p.dim));
    }
    if (p.dim % p.heads != 0) {
        throw ConfigError("attention: dim " + std::to_string(p.dim) + " not divisible by heads " +
                          std::to_string(p.heads));
    }
    const int64_t h = p.heads;
    const int64_t d = C / h;

    auto split_heads = [&](const Tensor& t) {
        return permute(reshape(t, {nW, T, h, d}), {0, 2, 1, 3});  // [nW,h,T,d]
    };
    Tensor q = split_heads(linear(xw, p.wq, p.bq));
    Tensor k = split_heads(linear(xw, p.wk, p.bk));
    Tensor v = split_heads(linear(xw, p.wv, p.bv));

    Tensor kt = permute(k, {0, 1, 3, 2});  // [nW,h,d,T]
    Tensor logits = scale(matmul(q, kt), 1.0 / std::sqrt(static_cast<double>(d)));

    if (p.rel_bias_enabled) {
        const int64_t rows = static_cast<int64_t>(2 * p.window - 1) * (2 * p.window - 1);
        if (p.rel_bias.shape()[0] != rows || p.rel_bias.shape()[1] != h) {
            throw DimensionError("attention: relative-position table " + shape_str(p.rel_bias.shape()) +
                                 " must be (" + std::to_string(rows) + "," + std::to_string(h) + ")");
        }
        const int T2 = static_cast<int>(T) * static_cast<int>(T);
        const auto rel = rel_position_index(p.window);
        std::vector<int64_t> gather(static_cast<size_t>(T2) * h);
        for (int t = 0; t < T2; ++t)
            for (int64_t hh = 0; hh < h; ++hh)
                gather[static_cast<size_t>(t) * h + static_cast<size_t>(hh)] =
                    rel[static_cast<size_t>(t)] * h + hh;
        Tensor bias = index_map(p.rel_bias, {T, T, h}, std::move(gather));
        bias = permute(bias, {2, 0, 1});  // [h,T,T], broadcasts over windows
        logits = add(logits, bias);
    }
    if (mask.defined()) logits = add(logits, mask);

    Tensor attn = softmax(logits, 3);
    if (probe) probe->probs.push_back(attn);

    Tensor out = matmul(attn, v);  // [nW,h,T,d]
    out = reshape(permute(out, {0, 2, 1, 3}), {nW, T, C});
    return linear(out, p.wo, p.bo);
}

}  // namespace

Tensor patch_partition(const Tensor& image, int patch) {
    if (image.rank() != 4) {
        throw DimensionError("patch_partition: expected [B,C,H,W], got " + shape_str(image.shape()));
    }
    const int64_t B = image.shape()[0], Cin = image.shape()[1], H = image.shape()[2],
                  W = image.shape()[3];
    if (H % patch != 0 || W % patch != 0) {
        throw DimensionError("patch_partition: extents of " + shape_str(image.shape()) +
                             " not divisible by patch size " + std::to_string(patch));
    }
    const int64_t Hp = H / patch, Wp = W / patch;
    const int64_t F = static_cast<int64_t>(patch) * patch * Cin;
    std::vector<int64_t> idx(static_cast<size_t>(B * Hp * Wp * F));
    size_t pos = 0;
    for (int64_t b = 0; b < B; ++b)
        for (int64_t py = 0; py < Hp; ++py)
            for (int64_t px = 0; px < Wp; ++px)
                for (int64_t dy = 0; dy < patch; ++dy)
                    for (int64_t dx = 0; dx < patch; ++dx)
                        for (int64_t c = 0; c < Cin; ++c)
                            idx[pos++] = ((b * Cin + c) * H + py * patch + dy) * W + px * patch + dx;
    return index_map(image, {B, Hp, Wp, F}, std::move(idx));
}

Tensor patch_partition_embed(const Tensor& image, const EmbedParams& p, int patch) {
    return linear(patch_partition(image, patch), p.weight, p.bias);
}

Tensor window_partition(const Tensor& x, int w) {
    if (x.rank() != 4) {
        throw DimensionError("window_partition: expected [B,Hf,Wf,C], got " + shape_str(x.shape()));
    }
    require_divisible(x, w);
    const int64_t B = x.shape()[0], Hf = x.shape()[1], Wf = x.shape()[2], C = x.shape()[3];
    const int64_t nWh = Hf / w, nWw = Wf / w;
    const int64_t T = static_cast<int64_t>(w) * w;
    std::vector<int64_t> idx(static_cast<size_t>(B * nWh * nWw * T * C));
    size_t pos = 0;
    for (int64_t b = 0; b < B; ++b)
        for (int64_t wy = 0; wy < nWh; ++wy)
            for (int64_t wx = 0; wx < nWw; ++wx)
                for (int64_t t = 0; t < T; ++t) {
                    const int64_t y = wy * w + t / w;
                    const int64_t xx = wx * w + t % w;
                    const int64_t base = ((b * Hf + y) * Wf + xx) * C;
                    for (int64_t c = 0; c < C; ++c) idx[pos++] = base + c;
                }
    return index_map(x, {B * nWh * nWw, T, C}, std::move(idx));
}

Tensor window_reverse(const Tensor& xw, int w, int64_t B, int64_t Hf, int64_t Wf) {
    const int64_t nWh = Hf / w, nWw = Wf / w;
    const int64_t T = static_cast<int64_t>(w) * w;
    const int64_t C = xw.shape()[2];
    if (xw.shape()[0] != B * nWh * nWw || xw.shape()[1] != T) {
        throw DimensionError("window_reverse: " + shape_str(xw.shape()) +
                             " does not correspond to grid " + std::to_string(Hf) + "x" +
                             std::to_string(Wf) + " with window " + std::to_string(w));
    }
    std::vector<int64_t> idx(static_cast<size_t>(B * Hf * Wf * C));
    size_t pos = 0;
    for (int64_t b = 0; b < B; ++b)
        for (int64_t y = 0; y < Hf; ++y)
            for (int64_t x = 0; x < Wf; ++x) {
                const int64_t wi = (b * nWh + y / w) * nWw + x / w;
                const int64_t t = (y % w) * w + (x % w);
                const int64_t base = (wi * T + t) * C;
                for (int64_t c = 0; c < C; ++c) idx[pos++] = base + c;
            }
    return index_map(xw, {B, Hf, Wf, C}, std::move(idx));
}

Tensor roll2d(const Tensor& x, int64_t shift_y, int64_t shift_x) {
    const int64_t B = x.shape()[0], Hf = x.shape()[1], Wf = x.shape()[2], C = x.shape()[3];
    auto wrap = [](int64_t v, int64_t m) { return ((v % m) + m) % m; };
    std::vector<int64_t> idx(static_cast<size_t>(x.numel()));
    size_t pos = 0;
    for (int64_t b = 0; b < B; ++b)
        for (int64_t y = 0; y < Hf; ++y) {
            const int64_t sy = wrap(y - shift_y, Hf);
            for (int64_t xx = 0; xx < Wf; ++xx) {
                const int64_t sx = wrap(xx - shift_x, Wf);
                const int64_t base = ((b * Hf + sy) * Wf + sx) * C;
                for (int64_t c = 0; c < C; ++c) idx[pos++] = base + c;
            }
        }
    return index_map(x, x.shape(), std::move(idx));
}

Tensor wmsa(const Tensor& x, const AttentionParams& p, int w, AttnProbe* probe) {
    require_divisible(x, w);
    const int64_t B = x.shape()[0], Hf = x.shape()[1], Wf = x.shape()[2];
    Tensor xw = window_partition(x, w);
    Tensor y = window_attention(xw, p, Tensor(), probe);
    return window_reverse(y, w, B, Hf, Wf);
}

Tensor swmsa(const Tensor& x, const AttentionParams& p, int w, int s, AttnProbe* probe) {
    if (s == 0) return wmsa(x, p, w, probe);
    if (s < 0 || s >= w) {
        throw ConfigError("swmsa: shift " + std::to_string(s) + " must satisfy 0 <= s < w");
    }
    require_divisible(x, w);
    const int64_t B = x.shape()[0], Hf = x.shape()[1], Wf = x.shape()[2];
    const int64_t h = p.heads;
    const int64_t T = static_cast<int64_t>(w) * w;
    const int64_t nWper = (Hf / w) * (Wf / w);

    const std::vector<double> mask_per = shift_mask(Hf, Wf, w, s);
    std::vector<double> mask_full(static_cast<size_t>(B * nWper * h * T * T));
    size_t pos = 0;
    for (int64_t b = 0; b < B; ++b)
        for (int64_t wi = 0; wi < nWper; ++wi)
            for (int64_t hh = 0; hh < h; ++hh)
                for (int64_t t = 0; t < T * T; ++t)
                    mask_full[pos++] = mask_per[static_cast<size_t>(wi * T * T + t)];
    Tensor mask = Tensor::from_data({B * nWper, h, T, T}, std::move(mask_full));

    Tensor shifted = roll2d(x, -s, -s);
    Tensor xw = window_partition(shifted, w);
    Tensor y = window_attention(xw, p, mask, probe);
    Tensor merged = window_reverse(y, w, B, Hf, Wf);
    return roll2d(merged, s, s);
}

Tensor swin_block(const Tensor& x, const SwinBlockParams& p, AttnProbe* probe) {
    Tensor h1 = layer_norm(x, p.norm1.gamma, p.norm1.beta, p.ln_eps);
    Tensor a = p.shifted ? swmsa(h1, p.attn, p.window, p.shift, probe)
                         : wmsa(h1, p.attn, p.window, probe);
    Tensor y = add(x, a);
    Tensor h2 = layer_norm(y, p.norm2.gamma, p.norm2.beta, p.ln_eps);
    Tensor m = linear(gelu(linear(h2, p.mlp.w1, p.mlp.b1)), p.mlp.w2, p.mlp.b2);
    return add(y, m);
}

Tensor double_swin_block(const Tensor& x, const SwinBlockParams& p1, const SwinBlockParams& p2) {
    if (p1.shifted || !p2.shifted) {
        throw ConfigError("double_swin_block: expected shift flags (false, true)");
    }
    return swin_block(swin_block(x, p1), p2);
}

Tensor patch_merge(const Tensor& x, const MergeParams& p) {
    const int64_t B = x.shape()[0], Hf = x.shape()[1], Wf = x.shape()[2], C = x.shape()[3];
    if (Hf % 2 != 0 || Wf % 2 != 0) {
        throw DimensionError("patch_merge: spatial extents of " + shape_str(x.shape()) +
                             " must be even");
    }
    const int64_t Ho = Hf / 2, Wo = Wf / 2;
    std::vector<int64_t> idx(static_cast<size_t>(B * Ho * Wo * 4 * C));
    size_t pos = 0;
    for (int64_t b = 0; b < B; ++b)
        for (int64_t y = 0; y < Ho; ++y)
            for (int64_t xx = 0; xx < Wo; ++xx)
                for (int64_t blk = 0; blk < 4; ++blk) {
                    const int64_t dy = blk % 2, dx = blk / 2;  // (0,0),(1,0),(0,1),(1,1)
                    const int64_t base = ((b * Hf + 2 * y + dy) * Wf + 2 * xx + dx) * C;
                    for (int64_t c = 0; c < C; ++c) idx[pos++] = base + c;
                }
    Tensor gathered = index_map(x, {B, Ho, Wo, 4 * C}, std::move(idx));
    return linear(gathered, p.weight);
}

namespace {

// [B,Hf,Wf,s*s*c] -> [B,s*Hf,s*Wf,c]; chunk k of the channel axis lands at
// spatial offset (k % s, k / s), the inverse of patch_merge's parity order.
Tensor space_rearrange_up(const Tensor& x, int s) {
    const int64_t B = x.shape()[0], Hf = x.shape()[1], Wf = x.shape()[2], Cs = x.shape()[3];
    const int64_t c = Cs / (static_cast<int64_t>(s) * s);
    const int64_t Ho = Hf * s, Wo = Wf * s;
    std::vector<int64_t> idx(static_cast<size_t>(x.numel()));
    size_t pos = 0;
    for (int64_t b = 0; b < B; ++b)
        for (int64_t y = 0; y < Ho; ++y)
            for (int64_t xx = 0; xx < Wo; ++xx) {
                const int64_t chunk = (y % s) + (xx % s) * s;
                const int64_t base = ((b * Hf + y / s) * Wf + xx / s) * Cs + chunk * c;
                for (int64_t ci = 0; ci < c; ++ci) idx[pos++] = base + ci;
            }
    return index_map(x, {B, Ho, Wo, c}, std::move(idx));
}

}  // namespace

Tensor patch_expand(const Tensor& x, const ExpandParams& p) {
    const int64_t C = x.shape()[3];
    if (C % 2 != 0) {
        throw DimensionError("patch_expand: channel extent of " + shape_str(x.shape()) +
                             " must be even");
    }
    Tensor up = linear(x, p.weight);  // [B,Hf,Wf,2C]
    return space_rearrange_up(up, 2);
}

Tensor final_expand4(const Tensor& x, const Expand4Params& p) {
    Tensor up = linear(x, p.weight);  // [B,Hf,Wf,16C]
    return space_rearrange_up(up, 4);
}

Tensor nearest_upsample(const Tensor& x, int factor) {
    const int64_t B = x.shape()[0], Hf = x.shape()[1], Wf = x.shape()[2], C = x.shape()[3];
    const int64_t Ho = Hf * factor, Wo = Wf * factor;
    std::vector<int64_t> idx(static_cast<size_t>(B * Ho * Wo * C));
    size_t pos = 0;
    for (int64_t b = 0; b < B; ++b)
        for (int64_t y = 0; y < Ho; ++y)
            for (int64_t xx = 0; xx < Wo; ++xx) {
                const int64_t base = ((b * Hf + y / factor) * Wf + xx / factor) * C;
                for (int64_t c = 0; c < C; ++c) idx[pos++] = base + c;
            }
    return index_map(x, {B, Ho, Wo, C}, std::move(idx));
}

Tensor nhwc_to_nchw(const Tensor& x) { return permute(x, {0, 3, 1, 2}); }
Tensor nchw_to_nhwc(const Tensor& x) { return permute(x, {0, 2, 3, 1}); }

}  // namespace scunet
