#pragma once

// Brute-force reference implementations used only by tests. Everything here
// is written with plain scalar loops, independent of the library's op
// implementations.

#include <algorithm>
#include <cmath>
#include <vector>

#include "scunetpp/metrics.hpp"
#include "scunetpp/rng.hpp"
#include "scunetpp/swin.hpp"
#include "scunetpp/tensor.hpp"

namespace oracle {

inline std::vector<double> naive_matmul(const std::vector<double>& a, const std::vector<double>& b,
                                        int64_t M, int64_t K, int64_t N) {
    std::vector<double> c(static_cast<size_t>(M * N), 0.0);
    for (int64_t i = 0; i < M; ++i)
        for (int64_t j = 0; j < N; ++j) {
            double acc = 0.0;
            for (int64_t k = 0; k < K; ++k)
                acc += a[static_cast<size_t>(i * K + k)] * b[static_cast<size_t>(k * N + j)];
            c[static_cast<size_t>(i * N + j)] = acc;
        }
    return c;
}

// Direct cross-correlation, NCHW.
inline std::vector<double> naive_conv2d(const std::vector<double>& x, int64_t B, int64_t Cin,
                                        int64_t H, int64_t W, const std::vector<double>& k,
                                        int64_t Cout, int64_t kh, int64_t kw, int stride,
                                        int padding, int64_t& Ho, int64_t& Wo) {
    Ho = (H + 2 * padding - kh) / stride + 1;
    Wo = (W + 2 * padding - kw) / stride + 1;
    std::vector<double> y(static_cast<size_t>(B * Cout * Ho * Wo), 0.0);
    for (int64_t b = 0; b < B; ++b)
        for (int64_t co = 0; co < Cout; ++co)
            for (int64_t oy = 0; oy < Ho; ++oy)
                for (int64_t ox = 0; ox < Wo; ++ox) {
                    double acc = 0.0;
                    for (int64_t ci = 0; ci < Cin; ++ci)
                        for (int64_t dy = 0; dy < kh; ++dy)
                            for (int64_t dx = 0; dx < kw; ++dx) {
                                const int64_t iy = oy * stride - padding + dy;
                                const int64_t ix = ox * stride - padding + dx;
                                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                                acc += x[static_cast<size_t>(((b * Cin + ci) * H + iy) * W + ix)] *
                                       k[static_cast<size_t>(((co * Cin + ci) * kh + dy) * kw + dx)];
                            }
                    y[static_cast<size_t>(((b * Cout + co) * Ho + oy) * Wo + ox)] = acc;
                }
    return y;
}

// Multi-head attention over an explicit token list, scalar math throughout.
// Projection weights follow the library convention y = x * W + b with the
// head h occupying columns [h*d, (h+1)*d).
inline void attention_over_tokens(const std::vector<double>& grid, int64_t W, int64_t C,
                                  const std::vector<std::pair<int64_t, int64_t>>& tokens,
                                  const scunet::AttentionParams& p, std::vector<double>& out) {
    const int64_t T = static_cast<int64_t>(tokens.size());
    const int64_t h = p.heads, d = C / p.heads;
    auto xval = [&](int64_t t, int64_t c) {
        const auto [y, x] = tokens[static_cast<size_t>(t)];
        return grid[static_cast<size_t>((y * W + x) * C + c)];
    };
    auto proj = [&](const scunet::Tensor& wt, const scunet::Tensor& bt, int64_t t, int64_t c) {
        double acc = bt.data()[static_cast<size_t>(c)];
        for (int64_t i = 0; i < C; ++i) acc += xval(t, i) * wt.data()[static_cast<size_t>(i * C + c)];
        return acc;
    };
    std::vector<double> merged(static_cast<size_t>(T * C));
    for (int64_t hh = 0; hh < h; ++hh) {
        std::vector<double> q(static_cast<size_t>(T * d)), k(static_cast<size_t>(T * d)),
            v(static_cast<size_t>(T * d));
        for (int64_t t = 0; t < T; ++t)
            for (int64_t dd = 0; dd < d; ++dd) {
                q[static_cast<size_t>(t * d + dd)] = proj(p.wq, p.bq, t, hh * d + dd);
                k[static_cast<size_t>(t * d + dd)] = proj(p.wk, p.bk, t, hh * d + dd);
                v[static_cast<size_t>(t * d + dd)] = proj(p.wv, p.bv, t, hh * d + dd);
            }
        const double scale = 1.0 / std::sqrt(static_cast<double>(d));
        for (int64_t t1 = 0; t1 < T; ++t1) {
            std::vector<double> logits(static_cast<size_t>(T));
            double mx = -1e300;
            for (int64_t t2 = 0; t2 < T; ++t2) {
                double acc = 0.0;
                for (int64_t dd = 0; dd < d; ++dd)
                    acc += q[static_cast<size_t>(t1 * d + dd)] * k[static_cast<size_t>(t2 * d + dd)];
                logits[static_cast<size_t>(t2)] = acc * scale;
                mx = std::max(mx, logits[static_cast<size_t>(t2)]);
            }
            double denom = 0.0;
            for (int64_t t2 = 0; t2 < T; ++t2) denom += std::exp(logits[static_cast<size_t>(t2)] - mx);
            for (int64_t dd = 0; dd < d; ++dd) {
                double acc = 0.0;
                for (int64_t t2 = 0; t2 < T; ++t2)
                    acc += std::exp(logits[static_cast<size_t>(t2)] - mx) / denom *
                           v[static_cast<size_t>(t2 * d + dd)];
                merged[static_cast<size_t>(t1 * C + hh * d + dd)] = acc;
            }
        }
    }
    // Output projection.
    for (int64_t t = 0; t < T; ++t) {
        const auto [y, x] = tokens[static_cast<size_t>(t)];
        for (int64_t c = 0; c < C; ++c) {
            double acc = p.bo.data()[static_cast<size_t>(c)];
            for (int64_t i = 0; i < C; ++i)
                acc += merged[static_cast<size_t>(t * C + i)] * p.wo.data()[static_cast<size_t>(i * C + c)];
            out[static_cast<size_t>((y * W + x) * C + c)] = acc;
        }
    }
}

// Axis intervals of the true (non-cyclic) shifted window partition: windows
// anchored at -s, -s+w, ... clipped to [0, extent).
inline std::vector<std::pair<int64_t, int64_t>> shifted_intervals(int64_t extent, int w, int s) {
    std::vector<std::pair<int64_t, int64_t>> out;
    for (int64_t start = -s; start < extent; start += w) {
        const int64_t lo = std::max<int64_t>(0, start);
        const int64_t hi = std::min<int64_t>(extent, start + w);
        if (lo < hi) out.emplace_back(lo, hi);
    }
    return out;
}

// SW-MSA by explicit enumeration of the shifted spatial groups: unmasked
// attention inside each group, assembled back onto the grid. Single batch.
inline std::vector<double> shifted_attention(const std::vector<double>& grid, int64_t H, int64_t W,
                                             int64_t C, const scunet::AttentionParams& p, int w,
                                             int s) {
    std::vector<double> out(grid.size(), 0.0);
    for (const auto& [ry0, ry1] : shifted_intervals(H, w, s)) {
        for (const auto& [rx0, rx1] : shifted_intervals(W, w, s)) {
            std::vector<std::pair<int64_t, int64_t>> tokens;
            for (int64_t y = ry0; y < ry1; ++y)
                for (int64_t x = rx0; x < rx1; ++x) tokens.emplace_back(y, x);
            attention_over_tokens(grid, W, C, tokens, p, out);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Metric oracles (all-pairs distances)

inline double dsc(const scunet::BinaryMask& x, const scunet::BinaryMask& y) {
    int64_t nx = 0, ny = 0, inter = 0;
    for (size_t i = 0; i < x.px.size(); ++i) {
        nx += x.px[i] ? 1 : 0;
        ny += y.px[i] ? 1 : 0;
        inter += (x.px[i] && y.px[i]) ? 1 : 0;
    }
    if (nx + ny == 0) return 1.0;
    return 2.0 * static_cast<double>(inter) / static_cast<double>(nx + ny);
}

inline std::vector<double> directed_nn(const scunet::BinaryMask& from, const scunet::BinaryMask& to) {
    std::vector<std::pair<int64_t, int64_t>> fg_to;
    for (int64_t y = 0; y < to.h; ++y)
        for (int64_t x = 0; x < to.w; ++x)
            if (to.at(y, x)) fg_to.emplace_back(y, x);
    std::vector<double> out;
    for (int64_t y = 0; y < from.h; ++y)
        for (int64_t x = 0; x < from.w; ++x) {
            if (!from.at(y, x)) continue;
            double best = 1e300;
            for (const auto& [ty, tx] : fg_to) {
                const double dy = static_cast<double>(y - ty), dx = static_cast<double>(x - tx);
                best = std::min(best, dy * dy + dx * dx);
            }
            out.push_back(std::sqrt(best));
        }
    return out;
}

inline double percentile_linear(std::vector<double> d, double q) {
    std::sort(d.begin(), d.end());
    const size_t n = d.size();
    if (n == 1) return d[0];
    const double pos = (static_cast<double>(n) - 1.0) * q;
    const size_t lo = static_cast<size_t>(pos);
    if (lo + 1 >= n) return d[n - 1];
    return d[lo] + (pos - static_cast<double>(lo)) * (d[lo + 1] - d[lo]);
}

inline double hd95_percentile(const scunet::BinaryMask& x, const scunet::BinaryMask& y) {
    std::vector<double> pooled = directed_nn(x, y);
    const std::vector<double> back = directed_nn(y, x);
    pooled.insert(pooled.end(), back.begin(), back.end());
    return percentile_linear(std::move(pooled), 0.95);
}

inline double hd_max(const scunet::BinaryMask& x, const scunet::BinaryMask& y) {
    const std::vector<double> dxy = directed_nn(x, y);
    const std::vector<double> dyx = directed_nn(y, x);
    const double mx = *std::max_element(dxy.begin(), dxy.end());
    const double my = *std::max_element(dyx.begin(), dyx.end());
    return std::max(mx, my);
}

inline double hd95_paper_scaled(const scunet::BinaryMask& x, const scunet::BinaryMask& y) {
    return 0.95 * hd_max(x, y);
}

inline scunet::BinaryMask random_mask(scunet::Rng& rng, int64_t h, int64_t w, double density) {
    scunet::BinaryMask m(h, w);
    for (auto& p : m.px) p = rng.uniform() < density ? 1 : 0;
    return m;
}

}  // namespace oracle
