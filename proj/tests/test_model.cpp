#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "scunetpp/model.hpp"
#include "scunetpp/rng.hpp"

using namespace scunet;

namespace {

ModelConfig toy_config() {
    ModelConfig cfg;
    cfg.img_size = 64;
    cfg.base_dim = 24;
    cfg.window = 4;
    cfg.heads = {2, 4, 8, 8};
    cfg.seed = 7;
    return cfg;
}

Tensor rand_batch(Rng& rng, int64_t b, int64_t s) {
    std::vector<double> d(static_cast<size_t>(b * 3 * s * s));
    for (double& v : d) v = rng.uniform(0.0, 1.0);
    return Tensor::from_data({b, 3, s, s}, std::move(d));
}

}  // namespace

TEST_CASE("config validation") {
    ModelConfig cfg = toy_config();
    CHECK_NOTHROW(cfg.validate());

    ModelConfig bad = cfg;
    bad.img_size = 60;
    CHECK_THROWS_AS(bad.validate(), ConfigError);

    ModelConfig badheads = cfg;
    badheads.heads = {5, 4, 8, 8};  // 24 % 5 != 0
    CHECK_THROWS_AS(badheads.validate(), ConfigError);

    ModelConfig badwin = cfg;
    badwin.img_size = 96;  // stage 2 resolution 6 is not divisible by window 4
    CHECK_THROWS_AS(badwin.validate(), ConfigError);

    ModelConfig ds = cfg;
    ds.deep_supervision = true;
    ds.dense_skips = false;
    CHECK_THROWS_AS(ds.validate(), ConfigError);

    // Degenerate deep stages clamp the window instead of failing.
    CHECK(cfg.stage_window(3) == 2);
    CHECK(cfg.stage_shift(3) == 0);
    CHECK(cfg.stage_window(0) == 4);
    CHECK(cfg.stage_shift(0) == 2);
}

TEST_CASE("toy model forward emits per-pixel logits") {
    Model m = build_model(toy_config());
    Rng rng(3);
    NoGradGuard ng;
    ForwardTrace trace;
    ModelOutput out = forward(m, rand_batch(rng, 1, 64), Mode::Eval, &trace);
    CHECK(out.logits.shape() == Shape{1, 2, 64, 64});
    CHECK(out.aux.empty());

    // Stage ledger for the toy config.
    auto expect = [&](const std::string& name, Shape s) {
        bool found = false;
        for (const auto& [n, shape] : trace.stages) {
            if (n == name) {
                CHECK(shape == s);
                found = true;
            }
        }
        CHECK(found);
    };
    expect("embed", {1, 16, 16, 24});
    expect("enc0_blocks", {1, 16, 16, 24});
    expect("enc0_merge", {1, 8, 8, 48});
    expect("enc1_merge", {1, 4, 4, 96});
    expect("enc2_merge", {1, 2, 2, 192});
    expect("bottleneck", {1, 2, 2, 192});
    expect("dec2_blocks", {1, 4, 4, 96});
    expect("dec1_blocks", {1, 8, 8, 48});
    expect("dec0_blocks", {1, 16, 16, 24});
    expect("final_expand", {1, 64, 64, 24});

    CHECK_THROWS_AS(forward(m, Tensor::zeros({1, 3, 32, 32}), Mode::Eval), DimensionError);
}

TEST_CASE("the 224 configuration builds with doubling encoder widths") {
    ModelConfig cfg;  // defaults: 224, C=96, w=7, heads 3/6/12/24
    Model m = build_model(cfg);
    CHECK(m.enc[0].first.attn.dim == 96);
    CHECK(m.enc[1].first.attn.dim == 192);
    CHECK(m.enc[2].first.attn.dim == 384);
    CHECK(m.merge[2].weight.shape() == Shape{4 * 384, 2 * 384});
    CHECK(m.bott_cnn.units.size() == 2);
    CHECK(m.bott_cnn.units[0].conv1.shape() == Shape{192, 768, 1, 1});
}

TEST_CASE("eval-mode forward decouples the batch exactly") {
    Model m = build_model(toy_config());
    Rng rng(4);
    Tensor a = rand_batch(rng, 1, 64);
    Tensor b = rand_batch(rng, 1, 64);
    std::vector<double> ab = a.data();
    ab.insert(ab.end(), b.data().begin(), b.data().end());

    NoGradGuard ng;
    Tensor batch = Tensor::from_data({2, 3, 64, 64}, std::move(ab));
    ModelOutput joint = forward(m, batch, Mode::Eval);
    ModelOutput one = forward(m, a, Mode::Eval);
    ModelOutput two = forward(m, b, Mode::Eval);
    const int64_t per = 2 * 64 * 64;
    for (int64_t i = 0; i < per; ++i) {
        CHECK(joint.logits.data()[static_cast<size_t>(i)] == one.logits.data()[static_cast<size_t>(i)]);
        CHECK(joint.logits.data()[static_cast<size_t>(per + i)] ==
              two.logits.data()[static_cast<size_t>(i)]);
    }
}

TEST_CASE("parameter counting and ablation variants") {
    const ModelConfig cfg = toy_config();
    Model full = build_model(cfg);
    Model no_dense = build_model(ablate(cfg, AblationVariant::NoDenseSkip));
    CHECK(param_count(full) > param_count(no_dense));

    // Table-3-style ordering: the full model against the plain-skip variant
    // whose bottleneck is a double Swin block at the 2C mid width.
    ModelConfig swin_mid = ablate(cfg, AblationVariant::NoDenseSkip);
    swin_mid.bottleneck = BottleneckKind::SwinCmid;
    Model comparison = build_model(swin_mid);
    CHECK(param_count(full) > param_count(comparison));

    // Seed invariance of the count, variance of the values.
    ModelConfig cfg2 = cfg;
    cfg2.seed = 8;
    Model other_seed = build_model(cfg2);
    CHECK(param_count(full) == param_count(other_seed));
    bool any_diff = false;
    for (size_t i = 0; i < full.registry.size(); ++i) {
        if (full.registry[i].trainable &&
            full.registry[i].tensor.data() != other_seed.registry[i].tensor.data()) {
            any_diff = true;
        }
    }
    CHECK(any_diff);

    Model same_seed = build_model(cfg);
    for (size_t i = 0; i < full.registry.size(); ++i) {
        CHECK(full.registry[i].tensor.data() == same_seed.registry[i].tensor.data());
    }

    CHECK(ablate(cfg, AblationVariant::Full).to_json() == cfg.to_json());
    CHECK_FALSE(ablate(cfg, AblationVariant::NoDenseSkip).dense_skips);
    CHECK(ablate(cfg, AblationVariant::NoCnnBottleneck).bottleneck == BottleneckKind::Swin8C);
    CHECK_THROWS_AS(parse_variant("bogus"), UsageError);

    // All three variants run forward.
    Rng rng(5);
    Tensor batch = rand_batch(rng, 1, 64);
    NoGradGuard ng;
    for (const auto v : {AblationVariant::Full, AblationVariant::NoDenseSkip,
                         AblationVariant::NoCnnBottleneck}) {
        Model m = build_model(ablate(cfg, v));
        CHECK(forward(m, batch, Mode::Eval).logits.shape() == Shape{1, 2, 64, 64});
    }
}

TEST_CASE("checkpoint round trip is bitwise") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "scunetpp_ckpt_test";
    fs::create_directories(dir);

    Model m = build_model(toy_config());
    Rng rng(6);
    Tensor batch = rand_batch(rng, 1, 64);
    NoGradGuard ng;
    ModelOutput before = forward(m, batch, Mode::Eval);

    save_checkpoint(m, dir / "m.ckp1");
    Model loaded = load_model(dir / "m.ckp1");
    REQUIRE(loaded.registry.size() == m.registry.size());
    for (size_t i = 0; i < m.registry.size(); ++i) {
        CHECK(loaded.registry[i].name == m.registry[i].name);
        CHECK(loaded.registry[i].tensor.data() == m.registry[i].tensor.data());
    }
    ModelOutput after = forward(loaded, batch, Mode::Eval);
    CHECK(after.logits.data() == before.logits.data());

    // A checkpoint from a different architecture is rejected.
    Model other = build_model(ablate(toy_config(), AblationVariant::NoDenseSkip));
    CHECK_THROWS_AS(load_checkpoint(other, dir / "m.ckp1"), FormatError);
    fs::remove_all(dir);
}

TEST_CASE("deep supervision emits auxiliary logits") {
    ModelConfig cfg = toy_config();
    cfg.deep_supervision = true;
    Model m = build_model(cfg);
    Rng rng(7);
    NoGradGuard ng;
    ModelOutput out = forward(m, rand_batch(rng, 1, 64), Mode::Eval);
    REQUIRE(out.aux.size() == 3);
    for (const auto& a : out.aux) CHECK(a.shape() == Shape{1, 2, 64, 64});
}
