#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "scunetpp/data.hpp"
#include "scunetpp/metrics.hpp"
#include "scunetpp/model.hpp"

namespace scunet {

struct TrainConfig {
    double lr = 1e-4;
    int batch_size = 4;
    int epochs = 100;
    double beta1 = 0.9, beta2 = 0.999;
    double adam_eps = 1e-8;
    double ce_w = 0.5, dice_w = 0.5;
    uint64_t seed = 0;
    int checkpoint_interval = 10;
    // When > 0, stop once the train-split DSC reaches this value.
    double early_stop_train_dsc = 0.0;
    Hd95Mode hd95_mode = Hd95Mode::Percentile;
    int threads = 1;
    int log_every = 1;

    void validate() const;

    nlohmann::json to_json() const;
    static TrainConfig from_json(const nlohmann::json& j);
};

struct AdamState {
    std::vector<Tensor> m, v;  // aligned with the model's trainable parameters
    int64_t step = 0;
};

AdamState init_adam(const Model& model);

// Bias-corrected Adam over every trainable parameter; throws StateError if a
// gradient is missing.
void adam_step(Model& model, AdamState& state, const TrainConfig& cfg);

struct LossParts {
    Tensor total;  // scalar, graph-attached
    double ce = 0.0;
    double dice = 0.0;
};

// ce_w * pixelwise cross-entropy + dice_w * (1 - soft Dice of the foreground
// probability, smoothing 1.0). With deep supervision the loss is averaged
// over the main head and every auxiliary head.
LossParts seg_loss(const ModelOutput& out, const std::vector<BinaryMask>& masks,
                   const TrainConfig& cfg);

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double val_dsc = 0.0;
    std::optional<double> val_hd95;
};

struct TrainResult {
    std::vector<EpochRecord> history;
    std::filesystem::path last_ckpt, best_ckpt;
    double final_train_dsc = 0.0;
};

// Full training loop: seeded shuffling, forward/loss/backward/step, per-epoch
// evaluation on the test split, JSONL history, periodic + best checkpoints.
// `resume_from` restarts from a latest-checkpoint written by a previous run.
TrainResult train(Model& model, const TrainConfig& cfg, const Dataset& data,
                  const std::filesystem::path& run_dir, std::ostream* log = nullptr,
                  const std::filesystem::path* resume_from = nullptr);

MetricReport evaluate(Model& model, const Dataset& data, const std::string& split,
                      Hd95Mode mode = Hd95Mode::Percentile, int threads = 1, int batch_size = 4);

// Assembles [B,3,H,W] input and flat target vector from loaded samples.
Tensor batch_input(const std::vector<Tensor>& images);
std::vector<uint8_t> batch_targets(const std::vector<BinaryMask>& masks);

}  // namespace scunet
