#include "scunetpp/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "scunetpp/rng.hpp"

namespace scunet {

namespace {

struct LoadedSample {
    std::string case_id;
    Tensor input;  // [3,H,W]
    BinaryMask mask;
};

std::vector<LoadedSample> load_split(const Dataset& data, const std::string& split) {
    std::vector<LoadedSample> out;
    for (const auto& [case_id, sample] : data.split_samples(split)) {
        auto [image, mask] = load_sample(data.root / sample.image_path, data.root / sample.mask_path);
        out.push_back({case_id, to_model_input(image), std::move(mask)});
    }
    return out;
}

Tensor foreground_tensor(const std::vector<BinaryMask>& masks) {
    const int64_t B = static_cast<int64_t>(masks.size());
    const int64_t H = masks[0].h, W = masks[0].w;
    std::vector<double> data(static_cast<size_t>(B * H * W));
    for (int64_t b = 0; b < B; ++b)
        for (int64_t i = 0; i < H * W; ++i)
            data[static_cast<size_t>(b * H * W + i)] =
                masks[static_cast<size_t>(b)].px[static_cast<size_t>(i)] ? 1.0 : 0.0;
    return Tensor::from_data({B, 1, H, W}, std::move(data));
}

struct HeadLoss {
    Tensor total;
    double ce, dice;
};

HeadLoss one_head_loss(const Tensor& logits, const std::vector<uint8_t>& targets,
                       const Tensor& target_fg, const TrainConfig& cfg) {
    Tensor ce = cross_entropy_with_logits(logits, targets);
    Tensor probs = softmax(logits, 1);
    Tensor pf = narrow(probs, 1, 1, 1);
    Tensor inter = sum_all(mul(pf, target_fg));
    Tensor num = add_const(scale(inter, 2.0), 1.0);
    Tensor den = add_const(add(sum_all(pf), sum_all(target_fg)), 1.0);
    Tensor dice_loss = add_const(scale(div(num, den), -1.0), 1.0);
    Tensor total = add(scale(ce, cfg.ce_w), scale(dice_loss, cfg.dice_w));
    return {total, ce.item(), dice_loss.item()};
}

void save_train_state(const Model& model, const AdamState& state, int epoch,
                      const std::filesystem::path& ckpt_path) {
    save_checkpoint(model, ckpt_path);
    std::vector<NamedParam> entries;
    size_t mi = 0;
    for (const auto& p : model.registry) {
        if (!p.trainable) continue;
        entries.push_back({"m." + p.name, state.m[mi], false});
        entries.push_back({"v." + p.name, state.v[mi], false});
        ++mi;
    }
    entries.push_back({"step", Tensor::scalar(static_cast<double>(state.step)), false});
    entries.push_back({"epoch", Tensor::scalar(static_cast<double>(epoch)), false});
    save_tensor_map(entries, ckpt_path.string() + ".opt");
}

int load_train_state(Model& model, AdamState& state, const std::filesystem::path& ckpt_path) {
    load_checkpoint(model, ckpt_path);
    auto entries = load_tensor_map(ckpt_path.string() + ".opt");
    int epoch = 0;
    size_t found = 0;
    for (auto& [name, tensor] : entries) {
        if (name == "step") {
            state.step = static_cast<int64_t>(tensor.item());
            continue;
        }
        if (name == "epoch") {
            epoch = static_cast<int>(tensor.item());
            continue;
        }
        const bool is_m = name.rfind("m.", 0) == 0;
        const bool is_v = name.rfind("v.", 0) == 0;
        if (!is_m && !is_v) throw FormatError("optimizer state: unknown entry '" + name + "'");
        const std::string pname = name.substr(2);
        size_t mi = 0;
        bool matched = false;
        for (const auto& p : model.registry) {
            if (!p.trainable) continue;
            if (p.name == pname) {
                (is_m ? state.m : state.v)[mi].raw_data() = tensor.data();
                matched = true;
                break;
            }
            ++mi;
        }
        if (!matched) throw FormatError("optimizer state: no parameter named '" + pname + "'");
        ++found;
    }
    size_t trainable = 0;
    for (const auto& p : model.registry) trainable += p.trainable ? 1 : 0;
    if (found != 2 * trainable) {
        throw FormatError("optimizer state: expected " + std::to_string(2 * trainable) +
                          " moment tensors, found " + std::to_string(found));
    }
    return epoch;
}

}  // namespace

void TrainConfig::validate() const {
    if (lr <= 0) throw ConfigError("train: lr must be > 0");
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
    if (std::abs(ce_w + dice_w - 1.0) > 1e-12) {
        throw ConfigError("train: loss weights ce_w + dice_w must equal 1");
    }
    if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1) {
        throw ConfigError("train: adam betas must lie in [0,1)");
    }
    if (adam_eps <= 0) throw ConfigError("train: adam_eps must be > 0");
    if (checkpoint_interval < 1) throw ConfigError("train: checkpoint_interval must be >= 1");
}

nlohmann::json TrainConfig::to_json() const {
    nlohmann::json j;
    j["lr"] = lr;
    j["batch_size"] = batch_size;
    j["epochs"] = epochs;
    j["beta1"] = beta1;
    j["beta2"] = beta2;
    j["adam_eps"] = adam_eps;
    j["ce_w"] = ce_w;
    j["dice_w"] = dice_w;
    j["seed"] = seed;
    j["checkpoint_interval"] = checkpoint_interval;
    j["early_stop_train_dsc"] = early_stop_train_dsc;
    j["hd95_mode"] = hd95_mode == Hd95Mode::Percentile ? "percentile" : "paper_scaled";
    j["threads"] = threads;
    j["log_every"] = log_every;
    return j;
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
    TrainConfig c;
    auto get = [&](const char* key, auto& field) {
        if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("lr", c.lr);
    get("batch_size", c.batch_size);
    get("epochs", c.epochs);
    get("beta1", c.beta1);
    get("beta2", c.beta2);
    get("adam_eps", c.adam_eps);
    get("ce_w", c.ce_w);
    get("dice_w", c.dice_w);
    get("seed", c.seed);
    get("checkpoint_interval", c.checkpoint_interval);
    get("early_stop_train_dsc", c.early_stop_train_dsc);
    if (j.contains("hd95_mode")) {
        const std::string mode = j.at("hd95_mode").get<std::string>();
        if (mode == "percentile") c.hd95_mode = Hd95Mode::Percentile;
        else if (mode == "paper_scaled") c.hd95_mode = Hd95Mode::PaperScaled;
        else throw ConfigError("train: unknown hd95_mode '" + mode + "'");
    }
    get("threads", c.threads);
    get("log_every", c.log_every);
    return c;
}

AdamState init_adam(const Model& model) {
    AdamState s;
    for (const auto& p : model.registry) {
        if (!p.trainable) continue;
        s.m.push_back(Tensor::zeros(p.tensor.shape()));
        s.v.push_back(Tensor::zeros(p.tensor.shape()));
    }
    return s;
}

void adam_step(Model& model, AdamState& state, const TrainConfig& cfg) {
    ++state.step;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    size_t mi = 0;
    for (auto& p : model.registry) {
        if (!p.trainable) continue;
        if (!p.tensor.grad_set()) {
            throw StateError("adam_step: missing gradient for parameter '" + p.name + "'");
        }
        const auto& g = p.tensor.grad();
        auto& mdat = state.m[mi].raw_data();
        auto& vdat = state.v[mi].raw_data();
        auto& theta = p.tensor.raw_data();
        for (size_t i = 0; i < theta.size(); ++i) {
            mdat[i] = cfg.beta1 * mdat[i] + (1.0 - cfg.beta1) * g[i];
            vdat[i] = cfg.beta2 * vdat[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            const double mhat = mdat[i] / bc1;
            const double vhat = vdat[i] / bc2;
            theta[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.adam_eps);
        }
        ++mi;
    }
}

LossParts seg_loss(const ModelOutput& out, const std::vector<BinaryMask>& masks,
                   const TrainConfig& cfg) {
    if (masks.empty()) throw UsageError("seg_loss: empty mask batch");
    const int64_t B = out.logits.shape()[0], H = out.logits.shape()[2], W = out.logits.shape()[3];
    if (static_cast<int64_t>(masks.size()) != B || masks[0].h != H || masks[0].w != W) {
        throw DimensionError("seg_loss: mask batch does not match logits " +
                             shape_str(out.logits.shape()));
    }
    const std::vector<uint8_t> targets = batch_targets(masks);
    const Tensor target_fg = foreground_tensor(masks);

    HeadLoss main = one_head_loss(out.logits, targets, target_fg, cfg);
    LossParts parts;
    parts.ce = main.ce;
    parts.dice = main.dice;
    if (out.aux.empty()) {
        parts.total = main.total;
        return parts;
    }
    Tensor acc = main.total;
    for (const auto& aux : out.aux) {
        acc = add(acc, one_head_loss(aux, targets, target_fg, cfg).total);
    }
    parts.total = scale(acc, 1.0 / static_cast<double>(1 + out.aux.size()));
    return parts;
}

Tensor batch_input(const std::vector<Tensor>& images) {
    if (images.empty()) throw UsageError("batch_input: empty image list");
    const Shape& s = images[0].shape();
    const int64_t per = shape_numel(s);
    std::vector<double> data(static_cast<size_t>(per) * images.size());
    for (size_t b = 0; b < images.size(); ++b) {
        if (images[b].shape() != s) throw DimensionError("batch_input: inconsistent image shapes");
        std::copy(images[b].data().begin(), images[b].data().end(),
                  data.begin() + static_cast<int64_t>(b) * per);
    }
    Shape out = {static_cast<int64_t>(images.size())};
    out.insert(out.end(), s.begin(), s.end());
    return Tensor::from_data(std::move(out), std::move(data));
}

std::vector<uint8_t> batch_targets(const std::vector<BinaryMask>& masks) {
    if (masks.empty()) throw UsageError("batch_targets: empty mask list");
    const int64_t per = masks[0].h * masks[0].w;
    std::vector<uint8_t> out(static_cast<size_t>(per) * masks.size());
    for (size_t b = 0; b < masks.size(); ++b) {
        for (int64_t i = 0; i < per; ++i) {
            out[b * static_cast<size_t>(per) + static_cast<size_t>(i)] =
                masks[b].px[static_cast<size_t>(i)] ? 1 : 0;
        }
    }
    return out;
}

namespace {

MetricReport evaluate_loaded(Model& model, const std::vector<LoadedSample>& samples, Hd95Mode mode,
                             int threads, int batch_size) {
    NoGradGuard ng;
    std::vector<BinaryMask> pred, gt;
    std::vector<std::string> ids;
    for (size_t start = 0; start < samples.size(); start += static_cast<size_t>(batch_size)) {
        const size_t end = std::min(samples.size(), start + static_cast<size_t>(batch_size));
        std::vector<Tensor> images;
        for (size_t i = start; i < end; ++i) images.push_back(samples[i].input);
        Tensor batch = batch_input(images);
        ModelOutput out = forward(model, batch, Mode::Eval);
        const int64_t K = out.logits.shape()[1], H = out.logits.shape()[2], W = out.logits.shape()[3];
        for (size_t i = start; i < end; ++i) {
            const int64_t b = static_cast<int64_t>(i - start);
            const double* src = out.logits.data().data() + b * K * H * W;
            Tensor one = Tensor::from_data({K, H, W},
                                           std::vector<double>(src, src + K * H * W));
            pred.push_back(mask_from_logits(one));
            gt.push_back(samples[i].mask);
            ids.push_back(samples[i].case_id);
        }
    }
    return evaluate_set(pred, gt, ids, mode, threads);
}

}  // namespace

MetricReport evaluate(Model& model, const Dataset& data, const std::string& split, Hd95Mode mode,
                      int threads, int batch_size) {
    const auto samples = load_split(data, split);
    if (samples.empty()) throw UsageError("evaluate: split '" + split + "' is empty");
    return evaluate_loaded(model, samples, mode, threads, batch_size);
}

TrainResult train(Model& model, const TrainConfig& cfg, const Dataset& data,
                  const std::filesystem::path& run_dir, std::ostream* log,
                  const std::filesystem::path* resume_from) {
    cfg.validate();
    const auto train_samples = load_split(data, "train");
    if (train_samples.empty()) throw UsageError("train: dataset has no train split");
    const auto test_samples = load_split(data, "test");

    std::filesystem::create_directories(run_dir);
    AdamState adam = init_adam(model);
    int start_epoch = 0;
    if (resume_from) start_epoch = load_train_state(model, adam, *resume_from);

    std::ofstream history_os(run_dir / "history.jsonl",
                             start_epoch > 0 ? std::ios::app : std::ios::trunc);
    if (!history_os) throw FormatError("cannot open history file under " + run_dir.string());

    TrainResult result;
    const auto latest = run_dir / "latest.ckp1";
    const auto best = run_dir / "best.ckp1";
    double best_val = -1.0;

    std::vector<size_t> indices(train_samples.size());
    for (size_t i = 0; i < indices.size(); ++i) indices[i] = i;

    for (int epoch = start_epoch + 1; epoch <= cfg.epochs; ++epoch) {
        Rng shuffle_rng(Rng::mix(cfg.seed, static_cast<uint64_t>(epoch)));
        std::vector<size_t> perm = indices;
        shuffle_rng.shuffle(perm);

        double loss_sum = 0.0;
        int batches = 0;
        for (size_t start = 0; start < perm.size(); start += static_cast<size_t>(cfg.batch_size)) {
            const size_t end = std::min(perm.size(), start + static_cast<size_t>(cfg.batch_size));
            std::vector<Tensor> images;
            std::vector<BinaryMask> masks;
            for (size_t i = start; i < end; ++i) {
                images.push_back(train_samples[perm[i]].input);
                masks.push_back(train_samples[perm[i]].mask);
            }
            model.zero_grad();
            ModelOutput out = forward(model, batch_input(images), Mode::Train);
            LossParts loss = seg_loss(out, masks, cfg);
            backward(loss.total);
            adam_step(model, adam, cfg);
            loss_sum += loss.total.item();
            ++batches;
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_sum / static_cast<double>(batches);
        if (!test_samples.empty()) {
            MetricReport val = evaluate_loaded(model, test_samples, cfg.hd95_mode, cfg.threads,
                                               cfg.batch_size);
            rec.val_dsc = val.dsc_mean;
            if (val.hd_defined_count > 0) rec.val_hd95 = val.hd95_mean;
        }

        nlohmann::json j;
        j["epoch"] = rec.epoch;
        j["train_loss"] = rec.train_loss;
        j["val_dsc"] = rec.val_dsc;
        if (rec.val_hd95) j["val_hd95"] = *rec.val_hd95;
        else j["val_hd95"] = nullptr;
        history_os << j.dump() << "\n";
        history_os.flush();
        result.history.push_back(rec);

        if (log && (epoch % cfg.log_every == 0 || epoch == cfg.epochs)) {
            (*log) << "epoch " << epoch << " loss " << rec.train_loss << " val_dsc " << rec.val_dsc
                   << "\n";
        }

        bool stop = false;
        if (cfg.early_stop_train_dsc > 0.0) {
            MetricReport tr = evaluate_loaded(model, train_samples, cfg.hd95_mode, cfg.threads,
                                              cfg.batch_size);
            result.final_train_dsc = tr.dsc_mean;
            stop = tr.dsc_mean >= cfg.early_stop_train_dsc;
        }

        if (epoch % cfg.checkpoint_interval == 0 || epoch == cfg.epochs || stop) {
            save_train_state(model, adam, epoch, latest);
            result.last_ckpt = latest;
        }
        if (rec.val_dsc > best_val) {
            best_val = rec.val_dsc;
            save_checkpoint(model, best);
            result.best_ckpt = best;
        }
        if (stop) break;
    }

    if (cfg.early_stop_train_dsc <= 0.0) {
        MetricReport tr = evaluate_loaded(model, train_samples, cfg.hd95_mode, cfg.threads,
                                          cfg.batch_size);
        result.final_train_dsc = tr.dsc_mean;
    }
    if (result.last_ckpt.empty()) {
        save_train_state(model, adam, cfg.epochs, latest);
        result.last_ckpt = latest;
    }
    return result;
}

}  // namespace scunet
