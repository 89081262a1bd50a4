#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "scunetpp/data.hpp"
#include "scunetpp/rng.hpp"
#include "scunetpp/trainer.hpp"

using namespace scunet;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

// 32x32 micro model over a tiny synthetic dataset.
ModelConfig micro_model() {
    ModelConfig cfg;
    cfg.img_size = 32;
    cfg.base_dim = 8;
    cfg.window = 4;
    cfg.heads = {2, 2, 2, 2};
    cfg.seed = 3;
    return cfg;
}

Dataset micro_dataset(const fs::path& root) {
    fs::remove_all(root);
    SynthDatasetConfig cfg;
    cfg.cases = 3;
    cfg.slices_per_case = 2;
    cfg.phantom.img_size = 32;
    cfg.phantom.vessel_w_min = 2.0;
    cfg.phantom.vessel_w_max = 4.0;
    cfg.phantom.embolus_r_min = 1.0;
    cfg.phantom.embolus_r_max = 2.5;
    cfg.phantom.seed = 13;
    cfg.split_seed = 2;
    return synth_dataset(root, cfg);
}

}  // namespace

TEST_CASE("train config validation") {
    TrainConfig c;
    CHECK_NOTHROW(c.validate());
    TrainConfig bad = c;
    bad.ce_w = 0.7;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = c;
    bad.lr = 0.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("loss values") {
    TrainConfig cfg;

    SUBCASE("saturated-correct logits give a loss near zero") {
        BinaryMask m(4, 4);
        m.set(1, 1, 1);
        m.set(2, 2, 1);
        std::vector<double> d(2 * 16);
        for (int64_t i = 0; i < 16; ++i) {
            const bool fg = m.px[static_cast<size_t>(i)];
            d[static_cast<size_t>(i)] = fg ? -20.0 : 20.0;       // class 0
            d[static_cast<size_t>(16 + i)] = fg ? 20.0 : -20.0;  // class 1
        }
        ModelOutput out;
        out.logits = Tensor::from_data({1, 2, 4, 4}, std::move(d));
        CHECK(seg_loss(out, {m}, cfg).total.item() < 0.01);
    }

    SUBCASE("uniform logits on a half-foreground mask give a ln-2 CE term") {
        BinaryMask m(2, 2);
        m.set(0, 0, 1);
        m.set(0, 1, 1);
        ModelOutput out;
        out.logits = Tensor::zeros({1, 2, 2, 2});
        LossParts parts = seg_loss(out, {m}, cfg);
        CHECK(parts.ce == doctest::Approx(std::log(2.0)).epsilon(1e-12));
        CHECK(parts.total.item() > 0.0);
    }

    SUBCASE("shape mismatch raises") {
        ModelOutput out;
        out.logits = Tensor::zeros({1, 2, 4, 4});
        CHECK_THROWS_AS(seg_loss(out, {BinaryMask(2, 2)}, cfg), DimensionError);
    }
}

TEST_CASE("adam update") {
    TrainConfig cfg;
    cfg.lr = 1e-4;

    // Single scalar parameter via a minimal hand-rolled registry.
    Model m;
    m.cfg = micro_model();
    Tensor theta = Tensor::from_data({1}, {0.5}, true);
    m.registry.push_back({"theta", theta, true});
    AdamState st = init_adam(m);

    SUBCASE("gradient 1 at step 1 moves by about -lr") {
        theta.impl()->grad = {1.0};
        theta.impl()->grad_set = true;
        adam_step(m, st, cfg);
        CHECK(st.step == 1);
        const double delta = theta.data()[0] - 0.5;
        CHECK(std::abs(delta + cfg.lr) < 1e-6 * cfg.lr);
    }

    SUBCASE("zero gradients change nothing but the step counter") {
        theta.impl()->grad = {0.0};
        theta.impl()->grad_set = true;
        adam_step(m, st, cfg);
        CHECK(theta.data()[0] == 0.5);
        CHECK(st.step == 1);
    }

    SUBCASE("missing gradient is a state error") {
        CHECK_THROWS_AS(adam_step(m, st, cfg), StateError);
    }
}

TEST_CASE("one-epoch smoke run emits history and checkpoints") {
    const fs::path root = fs::temp_directory_path() / "scunetpp_train_smoke";
    const fs::path run = fs::temp_directory_path() / "scunetpp_run_smoke";
    Dataset ds = micro_dataset(root);
    fs::remove_all(run);

    Model model = build_model(micro_model());
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.batch_size = 2;
    cfg.checkpoint_interval = 1;
    TrainResult res = train(model, cfg, ds, run);

    CHECK(res.history.size() == 1);
    CHECK(fs::exists(run / "history.jsonl"));
    CHECK(fs::exists(run / "latest.ckp1"));
    CHECK(fs::exists(run / "latest.ckp1.json"));
    CHECK(fs::exists(run / "latest.ckp1.opt"));
    CHECK(fs::exists(run / "best.ckp1"));
    CHECK(std::isfinite(res.history[0].train_loss));

    fs::remove_all(root);
    fs::remove_all(run);
}

TEST_CASE("identical seeded runs are bitwise identical") {
    const fs::path root = fs::temp_directory_path() / "scunetpp_train_det";
    const fs::path run_a = fs::temp_directory_path() / "scunetpp_run_a";
    const fs::path run_b = fs::temp_directory_path() / "scunetpp_run_b";
    Dataset ds = micro_dataset(root);
    fs::remove_all(run_a);
    fs::remove_all(run_b);

    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 2;
    cfg.checkpoint_interval = 2;
    cfg.seed = 19;

    Model ma = build_model(micro_model());
    train(ma, cfg, ds, run_a);
    Model mb = build_model(micro_model());
    train(mb, cfg, ds, run_b);

    CHECK(slurp(run_a / "history.jsonl") == slurp(run_b / "history.jsonl"));
    CHECK(slurp(run_a / "latest.ckp1") == slurp(run_b / "latest.ckp1"));
    CHECK(slurp(run_a / "best.ckp1") == slurp(run_b / "best.ckp1"));

    fs::remove_all(root);
    fs::remove_all(run_a);
    fs::remove_all(run_b);
}

TEST_CASE("resuming reproduces the uninterrupted run bitwise") {
    const fs::path root = fs::temp_directory_path() / "scunetpp_train_resume";
    const fs::path run_full = fs::temp_directory_path() / "scunetpp_run_full";
    const fs::path run_half = fs::temp_directory_path() / "scunetpp_run_half";
    const fs::path run_resumed = fs::temp_directory_path() / "scunetpp_run_resumed";
    Dataset ds = micro_dataset(root);
    for (const auto& d : {run_full, run_half, run_resumed}) fs::remove_all(d);

    TrainConfig cfg;
    cfg.batch_size = 2;
    cfg.seed = 23;
    cfg.checkpoint_interval = 2;

    // Uninterrupted 4-epoch run.
    cfg.epochs = 4;
    Model full = build_model(micro_model());
    train(full, cfg, ds, run_full);

    // 2 epochs, then resume for the remaining 2.
    cfg.epochs = 2;
    Model half = build_model(micro_model());
    train(half, cfg, ds, run_half);
    cfg.epochs = 4;
    Model resumed = build_model(micro_model());
    const fs::path resume_ckpt = run_half / "latest.ckp1";
    train(resumed, cfg, ds, run_resumed, nullptr, &resume_ckpt);

    CHECK(slurp(run_full / "latest.ckp1") == slurp(run_resumed / "latest.ckp1"));

    // The resumed history holds epochs 3..4, matching the tail of the full run.
    std::istringstream full_hist(slurp(run_full / "history.jsonl"));
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(full_hist, line)) lines.push_back(line);
    REQUIRE(lines.size() == 4);
    CHECK(slurp(run_resumed / "history.jsonl") == lines[2] + "\n" + lines[3] + "\n");

    fs::remove_all(root);
    for (const auto& d : {run_full, run_half, run_resumed}) fs::remove_all(d);
}

TEST_CASE("evaluate") {
    const fs::path root = fs::temp_directory_path() / "scunetpp_train_eval";
    Dataset ds = micro_dataset(root);
    Model model = build_model(micro_model());

    // Force an all-background prediction through the head bias.
    model.find("head.bias")->tensor.raw_data() = {25.0, -25.0};
    MetricReport r = evaluate(model, ds, "train");
    CHECK(r.samples.size() == 4);
    for (const auto& s : r.samples) {
        CHECK(s.dsc == 0.0);  // ground truth is never empty
        CHECK_FALSE(s.hd95.has_value());
    }
    CHECK(r.hd_undefined == 4);

    CHECK_THROWS_AS(evaluate(model, ds, "bogus_split"), UsageError);
    fs::remove_all(root);
}
