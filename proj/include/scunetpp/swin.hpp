#pragma once

#include <vector>

#include "scunetpp/tensor.hpp"

namespace scunet {

// Feature maps on the transformer path are laid out [B, Hf, Wf, C].

struct LayerNormParams {
    Tensor gamma;  // [C]
    Tensor beta;   // [C]
};

struct MlpParams {
    Tensor w1, b1;  // C -> r*C
    Tensor w2, b2;  // r*C -> C
};

struct AttentionParams {
    int dim = 0;    // C
    int heads = 0;  // C % heads == 0
    int window = 0;
    bool rel_bias_enabled = false;
    Tensor wq, bq, wk, bk, wv, bv, wo, bo;  // all [C,C] / [C]
    Tensor rel_bias;                        // [(2w-1)^2, heads] when enabled
};

struct SwinBlockParams {
    LayerNormParams norm1, norm2;
    AttentionParams attn;
    MlpParams mlp;
    bool shifted = false;
    int window = 0;
    int shift = 0;  // floor(w/2) when shifted, 0 otherwise (or at degenerate resolution)
    double ln_eps = 1e-5;
};

struct MergeParams {
    Tensor weight;  // [4C, 2C], no bias
};

struct ExpandParams {
    Tensor weight;  // [C, 2C], no bias
};

struct Expand4Params {
    Tensor weight;  // [C, 16C], no bias
};

struct EmbedParams {
    Tensor weight;  // [patch*patch*in_ch, C]
    Tensor bias;    // [C]
};

// Captures attention probability tensors ([nW, heads, T, T]) as they are
// produced; test instrumentation.
struct AttnProbe {
    std::vector<Tensor> probs;
};

// [B,3,H,W] -> [B,H/p,W/p, p*p*3]; feature order inside a block is row-major
// over (py, px, channel).
Tensor patch_partition(const Tensor& image, int patch);
Tensor patch_partition_embed(const Tensor& image, const EmbedParams& p, int patch);

// [B,Hf,Wf,C] -> [B*(Hf/w)*(Wf/w), w*w, C]; exact bijection with window_reverse.
Tensor window_partition(const Tensor& x, int w);
Tensor window_reverse(const Tensor& xw, int w, int64_t B, int64_t Hf, int64_t Wf);

// Cyclic shift on the two spatial axes (torch.roll semantics).
Tensor roll2d(const Tensor& x, int64_t shift_y, int64_t shift_x);

Tensor wmsa(const Tensor& x, const AttentionParams& p, int w, AttnProbe* probe = nullptr);
Tensor swmsa(const Tensor& x, const AttentionParams& p, int w, int s, AttnProbe* probe = nullptr);

Tensor swin_block(const Tensor& x, const SwinBlockParams& p, AttnProbe* probe = nullptr);

// Two consecutive blocks; p1 must be non-shifted and p2 shifted.
Tensor double_swin_block(const Tensor& x, const SwinBlockParams& p1, const SwinBlockParams& p2);

// [B,Hf,Wf,C] -> [B,Hf/2,Wf/2,2C]; parity blocks concatenated in the fixed
// order (even,even),(odd,even),(even,odd),(odd,odd) then mapped 4C -> 2C.
Tensor patch_merge(const Tensor& x, const MergeParams& p);

// [B,Hf,Wf,C] -> [B,2Hf,2Wf,C/2]; linear C -> 2C then a 2x2 rearrangement
// whose chunk order matches patch_merge's parity order.
Tensor patch_expand(const Tensor& x, const ExpandParams& p);

// [B,Hf,Wf,C] -> [B,4Hf,4Wf,C]; linear C -> 16C then 4x4 rearrangement.
Tensor final_expand4(const Tensor& x, const Expand4Params& p);

// Nearest-neighbor spatial upsampling on [B,Hf,Wf,C].
Tensor nearest_upsample(const Tensor& x, int factor);

// Layout converters between [B,Hf,Wf,C] and [B,C,Hf,Wf].
Tensor nhwc_to_nchw(const Tensor& x);
Tensor nchw_to_nhwc(const Tensor& x);

}  // namespace scunet
