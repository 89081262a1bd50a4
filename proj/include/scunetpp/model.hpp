#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "scunetpp/bottleneck.hpp"
#include "scunetpp/fusion.hpp"
#include "scunetpp/swin.hpp"
#include "scunetpp/tensor.hpp"

namespace scunet {

enum class BottleneckKind {
    Cnn,       // pre-activation 1x1-3x3-1x1 convolutional units
    Swin8C,    // double Swin block at the full 8C width (ablation variant)
    SwinCmid,  // linear 8C->2C, double Swin block at 2C, linear 2C->8C
};

struct ModelConfig {
    int img_size = 224;
    int patch_size = 4;
    int in_channels = 3;
    int base_dim = 96;  // C
    int window = 7;
    std::array<int, 4> heads = {3, 6, 12, 24};
    int mlp_ratio = 4;
    int num_classes = 2;
    bool dense_skips = true;
    BottleneckKind bottleneck = BottleneckKind::Cnn;
    int bottleneck_units = 2;
    bool bottleneck_residual = true;
    bool rel_pos_bias = true;
    bool deep_supervision = false;
    uint64_t seed = 0;
    double bn_momentum = 0.1;
    double bn_eps = 1e-5;
    double ln_eps = 1e-5;

    // Stage geometry. Level k runs at img/2^(k+2) with width C*2^k; the
    // effective window is clamped to the stage resolution and the shifted
    // block degenerates to shift 0 when one window covers the whole stage.
    int stage_res(int k) const { return img_size >> (k + 2); }
    int stage_dim(int k) const { return base_dim << k; }
    int stage_window(int k) const { return std::min(window, stage_res(k)); }
    int stage_shift(int k) const {
        return stage_window(k) < stage_res(k) ? stage_window(k) / 2 : 0;
    }

    void validate() const;  // throws ConfigError naming the failing constraint

    nlohmann::json to_json() const;
    static ModelConfig from_json(const nlohmann::json& j);
};

enum class AblationVariant { Full, NoDenseSkip, NoCnnBottleneck };

AblationVariant parse_variant(const std::string& name);  // throws UsageError
std::string variant_name(AblationVariant v);
ModelConfig ablate(const ModelConfig& cfg, AblationVariant v);

struct NamedParam {
    std::string name;
    Tensor tensor;
    bool trainable = true;
};

struct DoubleSwinParams {
    SwinBlockParams first;   // non-shifted
    SwinBlockParams second;  // shifted
};

struct Model {
    ModelConfig cfg;

    EmbedParams embed;
    std::array<DoubleSwinParams, 3> enc;
    std::array<MergeParams, 3> merge;

    BottleneckParams bott_cnn;
    DoubleSwinParams bott_swin;
    Tensor bott_reduce_w, bott_restore_w;  // SwinCmid only

    GridParams grid;
    std::array<DoubleSwinParams, 3> dec;
    Expand4Params final_expand;
    Tensor head_w, head_b;
    std::array<Tensor, 3> ds_head_w, ds_head_b;  // heads on X(0,1..3)

    std::vector<NamedParam> registry;

    void zero_grad();
    NamedParam* find(const std::string& name);
};

Model build_model(const ModelConfig& cfg);

int64_t param_count(const Model& m);  // trainable scalars only

struct ForwardTrace {
    std::vector<std::pair<std::string, Shape>> stages;
};

struct ModelOutput {
    Tensor logits;            // [B, num_classes, H, W]
    std::vector<Tensor> aux;  // deep-supervision logits, same shape
};

ModelOutput forward(Model& m, const Tensor& batch, Mode mode, ForwardTrace* trace = nullptr);

// Checkpoints: magic "CKP1", u32 count, then per entry u16 name length,
// UTF-8 name, embedded TSR1 record (f64). A JSON config sidecar is written
// next to the checkpoint as <path>.json.
void save_checkpoint(const Model& m, const std::filesystem::path& path);
void load_checkpoint(Model& m, const std::filesystem::path& path);
// Builds the model from the sidecar config, then loads the weights.
Model load_model(const std::filesystem::path& ckpt_path);

// Raw name->tensor container I/O, shared with the optimizer state file.
void save_tensor_map(const std::vector<NamedParam>& entries, const std::filesystem::path& path);
std::vector<std::pair<std::string, Tensor>> load_tensor_map(const std::filesystem::path& path);

}  // namespace scunet
