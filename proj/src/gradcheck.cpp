#include "scunetpp/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "scunetpp/bottleneck.hpp"
#include "scunetpp/fusion.hpp"
#include "scunetpp/model.hpp"
#include "scunetpp/rng.hpp"
#include "scunetpp/swin.hpp"
#include "scunetpp/trainer.hpp"

namespace scunet {

namespace {

constexpr double kH = 1e-5;

Tensor rand_tensor(Rng& rng, Shape shape, double lo = -2.0, double hi = 2.0) {
    const int64_t n = shape_numel(shape);
    std::vector<double> d(static_cast<size_t>(n));
    for (double& v : d) v = rng.uniform(lo, hi);
    return Tensor::from_data(std::move(shape), std::move(d));
}

// Random inputs bounded away from the ReLU kink so central differences stay
// valid.
Tensor rand_tensor_nonzero(Rng& rng, Shape shape, double min_abs = 0.05) {
    const int64_t n = shape_numel(shape);
    std::vector<double> d(static_cast<size_t>(n));
    for (double& v : d) {
        const double mag = rng.uniform(min_abs, 2.0);
        v = rng.uniform() < 0.5 ? -mag : mag;
    }
    return Tensor::from_data(std::move(shape), std::move(d));
}

// Scalarizes an op output with a fixed random projection; a plain sum can
// miss transposition mistakes.
Tensor project(const Tensor& y, Rng& rng) {
    Tensor proj = rand_tensor(rng, y.shape(), -1.0, 1.0);
    return sum_all(mul(y, proj));
}

// Compares backward() against finite differences for the gradient of
// fn(x) w.r.t. x. fn must produce a scalar.
double check_one(const std::function<Tensor(const Tensor&)>& fn, const Tensor& x) {
    Tensor xg = x.detached();
    xg.set_requires_grad(true);
    Tensor loss = fn(xg);
    backward(loss);
    const std::vector<double> analytic = xg.grad();

    Tensor fd = finite_diff_grad(
        [&](const Tensor& xx) {
            NoGradGuard ng;
            return fn(xx).item();
        },
        x, kH);
    return grad_rel_err(analytic, fd.data());
}

struct Check {
    std::string name;
    std::function<double(Rng&)> run;  // returns max rel err for one seed
};

std::vector<Check> build_checks() {
    std::vector<Check> checks;

    checks.push_back({"matmul_2d", [](Rng& rng) {
        Tensor a = rand_tensor(rng, {3, 4});
        Tensor b = rand_tensor(rng, {4, 5});
        Rng prng(rng.next_u64());
        Rng prng2 = prng;
        double e1 = check_one([&](const Tensor& x) { Rng r = prng; return project(matmul(x, b), r); }, a);
        double e2 = check_one([&](const Tensor& x) { Rng r = prng2; return project(matmul(a, x), r); }, b);
        return std::max(e1, e2);
    }});

    checks.push_back({"matmul_batched_broadcast", [](Rng& rng) {
        Tensor a = rand_tensor(rng, {2, 3, 2, 4});
        Tensor b = rand_tensor(rng, {3, 4, 3});  // broadcasts over the leading batch axis
        Rng prng(rng.next_u64());
        Rng prng2 = prng;
        double e1 = check_one([&](const Tensor& x) { Rng r = prng; return project(matmul(x, b), r); }, a);
        double e2 = check_one([&](const Tensor& x) { Rng r = prng2; return project(matmul(a, x), r); }, b);
        return std::max(e1, e2);
    }});

    checks.push_back({"linear", [](Rng& rng) {
        Tensor x = rand_tensor(rng, {2, 5, 4});
        Tensor w = rand_tensor(rng, {4, 3});
        Tensor b = rand_tensor(rng, {3});
        Rng p0(rng.next_u64());
        Rng p1 = p0, p2 = p0;
        double e1 = check_one([&](const Tensor& t) { Rng r = p0; return project(linear(t, w, b), r); }, x);
        double e2 = check_one([&](const Tensor& t) { Rng r = p1; return project(linear(x, t, b), r); }, w);
        double e3 = check_one([&](const Tensor& t) { Rng r = p2; return project(linear(x, w, t), r); }, b);
        return std::max({e1, e2, e3});
    }});

    checks.push_back({"conv2d", [](Rng& rng) {
        double worst = 0.0;
        const int strides[2] = {1, 2};
        const int pads[2] = {0, 1};
        for (int si = 0; si < 2; ++si) {
            for (int pi = 0; pi < 2; ++pi) {
                Tensor x = rand_tensor(rng, {2, 3, 5, 5});
                Tensor k = rand_tensor(rng, {4, 3, 3, 3});
                Rng p0(rng.next_u64());
                Rng p1 = p0;
                const int st = strides[si], pd = pads[pi];
                worst = std::max(worst, check_one([&](const Tensor& t) {
                    Rng r = p0;
                    return project(conv2d(t, k, st, pd), r);
                }, x));
                worst = std::max(worst, check_one([&](const Tensor& t) {
                    Rng r = p1;
                    return project(conv2d(x, t, st, pd), r);
                }, k));
            }
        }
        return worst;
    }});

    checks.push_back({"layer_norm", [](Rng& rng) {
        Tensor x = rand_tensor(rng, {3, 4, 6});
        Tensor g = rand_tensor(rng, {6}, 0.5, 1.5);
        Tensor b = rand_tensor(rng, {6});
        Rng p0(rng.next_u64());
        Rng p1 = p0, p2 = p0;
        double e1 = check_one([&](const Tensor& t) { Rng r = p0; return project(layer_norm(t, g, b, 1e-5), r); }, x);
        double e2 = check_one([&](const Tensor& t) { Rng r = p1; return project(layer_norm(x, t, b, 1e-5), r); }, g);
        double e3 = check_one([&](const Tensor& t) { Rng r = p2; return project(layer_norm(x, g, t, 1e-5), r); }, b);
        return std::max({e1, e2, e3});
    }});

    checks.push_back({"batch_norm_train", [](Rng& rng) {
        Tensor x = rand_tensor(rng, {3, 4, 2, 2});
        BatchNormParams bn;
        bn.gamma = rand_tensor(rng, {4}, 0.5, 1.5);
        bn.beta = rand_tensor(rng, {4});
        bn.running_mean = Tensor::zeros({4});
        bn.running_var = Tensor::full({4}, 1.0);
        const std::vector<double> rm0 = bn.running_mean.data();
        const std::vector<double> rv0 = bn.running_var.data();
        auto restore = [&]() {
            bn.running_mean.raw_data() = rm0;
            bn.running_var.raw_data() = rv0;
        };
        Rng p0(rng.next_u64());
        Rng p1 = p0, p2 = p0;
        auto run = [&](const std::function<Tensor(const Tensor&)>& fn, const Tensor& wrt) {
            const double e = check_one([&](const Tensor& t) {
                Tensor out = fn(t);
                restore();
                return out;
            }, wrt);
            return e;
        };
        double e1 = run([&](const Tensor& t) { Rng r = p0; return project(batch_norm(t, bn, Mode::Train, 0.1, 1e-5), r); }, x);
        double e2 = run([&](const Tensor& t) {
            BatchNormParams bn2{t, bn.beta, bn.running_mean, bn.running_var};
            Rng r = p1;
            return project(batch_norm(x, bn2, Mode::Train, 0.1, 1e-5), r);
        }, bn.gamma);
        double e3 = run([&](const Tensor& t) {
            BatchNormParams bn2{bn.gamma, t, bn.running_mean, bn.running_var};
            Rng r = p2;
            return project(batch_norm(x, bn2, Mode::Train, 0.1, 1e-5), r);
        }, bn.beta);
        return std::max({e1, e2, e3});
    }});

    checks.push_back({"batch_norm_eval", [](Rng& rng) {
        Tensor x = rand_tensor(rng, {2, 3, 3, 3});
        BatchNormParams bn;
        bn.gamma = rand_tensor(rng, {3}, 0.5, 1.5);
        bn.beta = rand_tensor(rng, {3});
        bn.running_mean = rand_tensor(rng, {3}, -0.5, 0.5);
        bn.running_var = rand_tensor(rng, {3}, 0.5, 1.5);
        Rng p0(rng.next_u64());
        return check_one([&](const Tensor& t) { Rng r = p0; return project(batch_norm(t, bn, Mode::Eval, 0.1, 1e-5), r); }, x);
    }});

    checks.push_back({"softmax", [](Rng& rng) {
        double worst = 0.0;
        for (int axis = 0; axis < 3; ++axis) {
            Tensor x = rand_tensor(rng, {3, 4, 5});
            Rng p0(rng.next_u64());
            const int ax = axis;
            worst = std::max(worst, check_one([&](const Tensor& t) {
                Rng r = p0;
                return project(softmax(t, ax), r);
            }, x));
        }
        return worst;
    }});

    checks.push_back({"gelu", [](Rng& rng) {
        Tensor x = rand_tensor(rng, {4, 7});
        Rng p0(rng.next_u64());
        return check_one([&](const Tensor& t) { Rng r = p0; return project(gelu(t), r); }, x);
    }});

    checks.push_back({"relu", [](Rng& rng) {
        Tensor x = rand_tensor_nonzero(rng, {4, 7});
        Rng p0(rng.next_u64());
        return check_one([&](const Tensor& t) { Rng r = p0; return project(relu(t), r); }, x);
    }});

    checks.push_back({"elementwise_broadcast", [](Rng& rng) {
        Tensor a = rand_tensor(rng, {2, 3, 4});
        Tensor b = rand_tensor_nonzero(rng, {3, 1}, 0.3);  // denominator away from 0
        double worst = 0.0;
        using BinFn = Tensor (*)(const Tensor&, const Tensor&);
        const BinFn fns[4] = {&add, &sub, &mul, &div};
        for (const BinFn fn : fns) {
            Rng p0(rng.next_u64());
            Rng p1 = p0;
            worst = std::max(worst, check_one([&](const Tensor& t) { Rng r = p0; return project(fn(t, b), r); }, a));
            worst = std::max(worst, check_one([&](const Tensor& t) { Rng r = p1; return project(fn(a, t), r); }, b));
        }
        return worst;
    }});

    checks.push_back({"window_roll_merge_expand", [](Rng& rng) {
        Tensor x = rand_tensor(rng, {1, 4, 4, 4});
        MergeParams mp{rand_tensor(rng, {16, 8})};
        ExpandParams ep{rand_tensor(rng, {4, 8})};
        Rng p0(rng.next_u64());
        Rng p1 = p0, p2 = p0, p3 = p0;
        double e1 = check_one([&](const Tensor& t) {
            Rng r = p0;
            Tensor w = window_partition(t, 2);
            return project(window_reverse(w, 2, 1, 4, 4), r);
        }, x);
        double e2 = check_one([&](const Tensor& t) { Rng r = p1; return project(roll2d(t, -1, -2), r); }, x);
        double e3 = check_one([&](const Tensor& t) { Rng r = p2; return project(patch_merge(t, mp), r); }, x);
        double e4 = check_one([&](const Tensor& t) { Rng r = p3; return project(patch_expand(t, ep), r); }, x);
        return std::max({e1, e2, e3, e4});
    }});

    checks.push_back({"cross_entropy", [](Rng& rng) {
        Tensor logits = rand_tensor(rng, {2, 2, 3, 3});
        std::vector<uint8_t> targets(18);
        for (auto& t : targets) t = rng.uniform() < 0.5 ? 0 : 1;
        return check_one([&](const Tensor& t) { return cross_entropy_with_logits(t, targets); },
                         logits);
    }});

    checks.push_back({"seg_loss", [](Rng& rng) {
        Tensor logits = rand_tensor(rng, {2, 2, 4, 4});
        std::vector<BinaryMask> masks(2, BinaryMask(4, 4));
        for (auto& m : masks)
            for (auto& p : m.px) p = rng.uniform() < 0.4 ? 1 : 0;
        TrainConfig cfg;
        return check_one([&](const Tensor& t) {
            ModelOutput out;
            out.logits = t;
            return seg_loss(out, masks, cfg).total;
        }, logits);
    }});

    return checks;
}

std::vector<Check> build_composite_checks() {
    std::vector<Check> checks;

    auto make_attention = [](Rng& rng, int dim, int heads, int window, bool rel) {
        AttentionParams p;
        p.dim = dim;
        p.heads = heads;
        p.window = window;
        p.rel_bias_enabled = rel;
        const double s = 0.3;
        p.wq = rand_tensor(rng, {dim, dim}, -s, s);
        p.bq = rand_tensor(rng, {dim}, -s, s);
        p.wk = rand_tensor(rng, {dim, dim}, -s, s);
        p.bk = rand_tensor(rng, {dim}, -s, s);
        p.wv = rand_tensor(rng, {dim, dim}, -s, s);
        p.bv = rand_tensor(rng, {dim}, -s, s);
        p.wo = rand_tensor(rng, {dim, dim}, -s, s);
        p.bo = rand_tensor(rng, {dim}, -s, s);
        if (rel) p.rel_bias = rand_tensor(rng, {(2 * window - 1) * (2 * window - 1), heads}, -s, s);
        return p;
    };

    auto make_block = [make_attention](Rng& rng, int dim, int heads, int window, int shift,
                                       bool shifted, int mlp_ratio) {
        SwinBlockParams p;
        p.window = window;
        p.shift = shift;
        p.shifted = shifted;
        p.norm1 = {rand_tensor(rng, {dim}, 0.5, 1.5), rand_tensor(rng, {dim}, -0.3, 0.3)};
        p.attn = make_attention(rng, dim, heads, window, true);
        p.norm2 = {rand_tensor(rng, {dim}, 0.5, 1.5), rand_tensor(rng, {dim}, -0.3, 0.3)};
        const int hidden = mlp_ratio * dim;
        p.mlp.w1 = rand_tensor(rng, {dim, hidden}, -0.3, 0.3);
        p.mlp.b1 = rand_tensor(rng, {hidden}, -0.3, 0.3);
        p.mlp.w2 = rand_tensor(rng, {hidden, dim}, -0.3, 0.3);
        p.mlp.b2 = rand_tensor(rng, {dim}, -0.3, 0.3);
        return p;
    };

    checks.push_back({"wmsa", [make_attention](Rng& rng) {
        AttentionParams p = make_attention(rng, 4, 2, 2, true);
        Tensor x = rand_tensor(rng, {1, 4, 4, 4});
        Rng p0(rng.next_u64());
        return check_one([&](const Tensor& t) { Rng r = p0; return project(wmsa(t, p, 2), r); }, x);
    }});

    checks.push_back({"swmsa", [make_attention](Rng& rng) {
        AttentionParams p = make_attention(rng, 4, 2, 4, true);
        Tensor x = rand_tensor(rng, {1, 8, 8, 4});
        Rng p0(rng.next_u64());
        return check_one([&](const Tensor& t) { Rng r = p0; return project(swmsa(t, p, 4, 2), r); }, x);
    }});

    checks.push_back({"double_swin_block", [make_block](Rng& rng) {
        SwinBlockParams b1 = make_block(rng, 4, 2, 4, 2, false, 2);
        SwinBlockParams b2 = make_block(rng, 4, 2, 4, 2, true, 2);
        Tensor x = rand_tensor(rng, {1, 8, 8, 4});
        Rng p0(rng.next_u64());
        Rng p1 = p0;
        double e1 = check_one([&](const Tensor& t) {
            Rng r = p0;
            return project(double_swin_block(t, b1, b2), r);
        }, x);
        // Also through a parameter leg.
        double e2 = check_one([&](const Tensor& t) {
            SwinBlockParams b1m = b1;
            b1m.mlp.w1 = t;
            Rng r = p1;
            return project(double_swin_block(x, b1m, b2), r);
        }, b1.mlp.w1);
        return std::max(e1, e2);
    }});

    checks.push_back({"cnn_bottleneck", [](Rng& rng) {
        const int64_t c = 8, cmid = 2;
        BottleneckParams bp;
        BottleneckUnitParams u;
        auto bn_params = [&](int64_t ch) {
            BatchNormParams bn;
            bn.gamma = rand_tensor(rng, {ch}, 0.5, 1.5);
            bn.beta = rand_tensor(rng, {ch}, -0.3, 0.3);
            bn.running_mean = Tensor::zeros({ch});
            bn.running_var = Tensor::full({ch}, 1.0);
            return bn;
        };
        u.bn1 = bn_params(c);
        u.conv1 = rand_tensor(rng, {cmid, c, 1, 1}, -0.4, 0.4);
        u.bn2 = bn_params(cmid);
        u.conv2 = rand_tensor(rng, {cmid, cmid, 3, 3}, -0.4, 0.4);
        u.bn3 = bn_params(cmid);
        u.conv3 = rand_tensor(rng, {c, cmid, 1, 1}, -0.4, 0.4);
        bp.units.push_back(u);
        Tensor x = rand_tensor(rng, {2, c, 2, 2});
        std::vector<std::vector<double>> saved;
        for (auto& uu : bp.units) {
            saved.push_back(uu.bn1.running_mean.data());
            saved.push_back(uu.bn1.running_var.data());
            saved.push_back(uu.bn2.running_mean.data());
            saved.push_back(uu.bn2.running_var.data());
            saved.push_back(uu.bn3.running_mean.data());
            saved.push_back(uu.bn3.running_var.data());
        }
        auto restore = [&]() {
            size_t i = 0;
            for (auto& uu : bp.units) {
                uu.bn1.running_mean.raw_data() = saved[i++];
                uu.bn1.running_var.raw_data() = saved[i++];
                uu.bn2.running_mean.raw_data() = saved[i++];
                uu.bn2.running_var.raw_data() = saved[i++];
                uu.bn3.running_mean.raw_data() = saved[i++];
                uu.bn3.running_var.raw_data() = saved[i++];
            }
        };
        Rng p0(rng.next_u64());
        return check_one([&](const Tensor& t) {
            Rng r = p0;
            Tensor out = project(cnn_bottleneck(t, bp, Mode::Train), r);
            restore();
            return out;
        }, x);
    }});

    checks.push_back({"fuse_node", [](Rng& rng) {
        FuseNodeParams p;
        p.expand.weight = rand_tensor(rng, {8, 16}, -0.4, 0.4);
        p.conv = rand_tensor(rng, {4, 12, 3, 3}, -0.4, 0.4);
        p.bn.gamma = rand_tensor(rng, {4}, 0.5, 1.5);
        p.bn.beta = rand_tensor(rng, {4}, -0.3, 0.3);
        p.bn.running_mean = Tensor::zeros({4});
        p.bn.running_var = Tensor::full({4}, 1.0);
        const std::vector<double> rm0 = p.bn.running_mean.data();
        const std::vector<double> rv0 = p.bn.running_var.data();
        Tensor same1 = rand_tensor(rng, {1, 4, 4, 4});
        Tensor same2 = rand_tensor(rng, {1, 4, 4, 4});
        Tensor below = rand_tensor(rng, {1, 2, 2, 8});
        Rng p0(rng.next_u64());
        return check_one([&](const Tensor& t) {
            Rng r = p0;
            Tensor out = project(fuse_node({same1, t}, below, p, Mode::Train), r);
            p.bn.running_mean.raw_data() = rm0;
            p.bn.running_var.raw_data() = rv0;
            return out;
        }, same2);
    }});

    return checks;
}

}  // namespace

double grad_rel_err(const std::vector<double>& analytic, const std::vector<double>& fd) {
    if (analytic.size() != fd.size()) {
        throw InternalError("grad_rel_err: gradient size mismatch");
    }
    double scale = 1e-3;
    for (size_t i = 0; i < analytic.size(); ++i) {
        scale = std::max({scale, std::abs(analytic[i]), std::abs(fd[i])});
    }
    double worst = 0.0;
    for (size_t i = 0; i < analytic.size(); ++i) {
        worst = std::max(worst, std::abs(analytic[i] - fd[i]));
    }
    return worst / scale;
}

std::vector<GradCheckResult> gradcheck_ops(int seeds, uint64_t seed0) {
    std::vector<GradCheckResult> results;
    auto run_group = [&](std::vector<Check> checks, double tol) {
        for (auto& c : checks) {
            GradCheckResult r;
            r.name = c.name;
            r.tol = tol;
            for (int s = 0; s < seeds; ++s) {
                Rng rng(Rng::mix(seed0, static_cast<uint64_t>(s) * 977 + std::hash<std::string>{}(c.name)));
                r.max_rel_err = std::max(r.max_rel_err, c.run(rng));
            }
            r.pass = r.max_rel_err < tol;
            results.push_back(std::move(r));
        }
    };
    run_group(build_checks(), 1e-4);
    run_group(build_composite_checks(), 1e-4);
    return results;
}

GradCheckResult gradcheck_micro_model(int seeds, uint64_t seed0) {
    GradCheckResult result;
    result.name = "micro_model_end_to_end";
    result.tol = 1e-3;

    for (int s = 0; s < seeds; ++s) {
        Rng rng(Rng::mix(seed0, static_cast<uint64_t>(s)));
        ModelConfig cfg;
        cfg.img_size = 32;
        cfg.base_dim = 8;
        cfg.window = 4;
        cfg.heads = {2, 2, 2, 2};
        cfg.seed = rng.next_u64();
        Model model = build_model(cfg);

        const int64_t B = 2;
        Tensor input = rand_tensor(rng, {B, 3, 32, 32}, 0.0, 1.0);
        input.set_requires_grad(true);
        std::vector<BinaryMask> masks(static_cast<size_t>(B), BinaryMask(32, 32));
        for (auto& m : masks)
            for (auto& p : m.px) p = rng.uniform() < 0.2 ? 1 : 0;
        TrainConfig tcfg;

        // BN buffers mutate in train mode; every evaluation starts from the
        // same snapshot.
        std::vector<std::pair<Tensor, std::vector<double>>> buffers;
        for (auto& p : model.registry) {
            if (!p.trainable) buffers.emplace_back(p.tensor, p.tensor.data());
        }
        auto restore = [&]() {
            for (auto& [t, d] : buffers) {
                Tensor tt = t;
                tt.raw_data() = d;
            }
        };
        auto loss_value = [&]() {
            ModelOutput out = forward(model, input, Mode::Train);
            const double v = seg_loss(out, masks, tcfg).total.item();
            restore();
            return v;
        };

        {
            ModelOutput out = forward(model, input, Mode::Train);
            Tensor loss = seg_loss(out, masks, tcfg).total;
            backward(loss);
            restore();
        }

        // Sampled coordinates: the input plus every trainable group. The model
        // contains ReLU units, whose kinks make a central difference invalid
        // whenever the +/-h band straddles one; such coordinates are detected
        // by comparing two step sizes (smooth coordinates agree to O(h^2), a
        // straddled kink does not) and resampled. A wrong analytic gradient
        // still fails: both step sizes would agree with each other and
        // disagree with backward().
        std::vector<std::pair<Tensor, std::string>> targets;
        targets.emplace_back(input, "input");
        for (auto& p : model.registry) {
            if (p.trainable) targets.emplace_back(p.tensor, p.name);
        }
        const int coords = 24;
        std::vector<double> analytic, fd;
        int attempts = 0;
        while (static_cast<int>(fd.size()) < coords && attempts < coords * 20) {
            ++attempts;
            auto& [t, name] = targets[static_cast<size_t>(rng.randint(0, static_cast<int64_t>(targets.size()) - 1))];
            const int64_t i = rng.randint(0, t.numel() - 1);
            const double a = t.grad()[static_cast<size_t>(i)];

            auto& dat = t.raw_data();
            const double orig = dat[static_cast<size_t>(i)];
            NoGradGuard ng;
            auto central = [&](double h) {
                dat[static_cast<size_t>(i)] = orig + h;
                const double fp = loss_value();
                dat[static_cast<size_t>(i)] = orig - h;
                const double fm = loss_value();
                dat[static_cast<size_t>(i)] = orig;
                return (fp - fm) / (2.0 * h);
            };
            const double fd_h = central(kH);
            const double fd_h2 = central(kH / 2.0);
            const double scale = std::max({1e-3, std::abs(a), std::abs(fd_h), std::abs(fd_h2)});
            if (std::abs(fd_h - fd_h2) > 1e-4 * scale) continue;  // straddles a kink
            analytic.push_back(a);
            fd.push_back(fd_h2);
        }
        if (static_cast<int>(fd.size()) < coords) {
            throw InternalError("gradcheck: too many kink-straddling coordinates");
        }
        model.zero_grad();
        input.zero_grad();
        result.max_rel_err = std::max(result.max_rel_err, grad_rel_err(analytic, fd));
    }
    result.pass = result.max_rel_err < result.tol;
    return result;
}

bool all_pass(const std::vector<GradCheckResult>& results) {
    for (const auto& r : results) {
        if (!r.pass) return false;
    }
    return true;
}

void print_results(const std::vector<GradCheckResult>& results, std::ostream& os) {
    for (const auto& r : results) {
        os << (r.pass ? "[PASS] " : "[FAIL] ") << r.name << "  max_rel_err=" << r.max_rel_err
           << " tol=" << r.tol << "\n";
    }
}

}  // namespace scunet
