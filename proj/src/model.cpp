#include "scunetpp/model.hpp"

#include <cstring>
#include <fstream>

#include "scunetpp/rng.hpp"
#include "scunetpp/tensor_io.hpp"

namespace scunet {

namespace {

constexpr double kInitStd = 0.02;

enum class Init { TruncNormal, Zero, One };

struct Builder {
    Model& m;
    Rng rng;

    Tensor add(const std::string& name, Shape shape, Init init, bool trainable = true) {
        Tensor t = Tensor::zeros(std::move(shape), trainable);
        auto& d = t.raw_data();
        switch (init) {
            case Init::TruncNormal:
                for (double& v : d) v = rng.trunc_normal(kInitStd);
                break;
            case Init::Zero:
                break;
            case Init::One:
                for (double& v : d) v = 1.0;
                break;
        }
        m.registry.push_back({name, t, trainable});
        return t;
    }

    LayerNormParams layer_norm_params(const std::string& prefix, int64_t C) {
        return {add(prefix + ".gamma", {C}, Init::One), add(prefix + ".beta", {C}, Init::Zero)};
    }

    BatchNormParams batch_norm_params(const std::string& prefix, int64_t C) {
        BatchNormParams p;
        p.gamma = add(prefix + ".gamma", {C}, Init::One);
        p.beta = add(prefix + ".beta", {C}, Init::Zero);
        p.running_mean = add(prefix + ".running_mean", {C}, Init::Zero, false);
        p.running_var = add(prefix + ".running_var", {C}, Init::One, false);
        return p;
    }

    SwinBlockParams swin_block_params(const std::string& prefix, int dim, int heads, int window,
                                      int shift, bool shifted) {
        SwinBlockParams p;
        p.window = window;
        p.shift = shifted ? shift : 0;
        p.shifted = shifted;
        p.ln_eps = m.cfg.ln_eps;
        p.norm1 = layer_norm_params(prefix + ".norm1", dim);
        p.attn.dim = dim;
        p.attn.heads = heads;
        p.attn.window = window;
        p.attn.rel_bias_enabled = m.cfg.rel_pos_bias;
        p.attn.wq = add(prefix + ".attn.wq", {dim, dim}, Init::TruncNormal);
        p.attn.bq = add(prefix + ".attn.bq", {dim}, Init::Zero);
        p.attn.wk = add(prefix + ".attn.wk", {dim, dim}, Init::TruncNormal);
        p.attn.bk = add(prefix + ".attn.bk", {dim}, Init::Zero);
        p.attn.wv = add(prefix + ".attn.wv", {dim, dim}, Init::TruncNormal);
        p.attn.bv = add(prefix + ".attn.bv", {dim}, Init::Zero);
        p.attn.wo = add(prefix + ".attn.wo", {dim, dim}, Init::TruncNormal);
        p.attn.bo = add(prefix + ".attn.bo", {dim}, Init::Zero);
        if (p.attn.rel_bias_enabled) {
            const int64_t rows = static_cast<int64_t>(2 * window - 1) * (2 * window - 1);
            p.attn.rel_bias = add(prefix + ".attn.rel_bias", {rows, heads}, Init::TruncNormal);
        }
        p.norm2 = layer_norm_params(prefix + ".norm2", dim);
        const int64_t hidden = static_cast<int64_t>(m.cfg.mlp_ratio) * dim;
        p.mlp.w1 = add(prefix + ".mlp.w1", {dim, hidden}, Init::TruncNormal);
        p.mlp.b1 = add(prefix + ".mlp.b1", {hidden}, Init::Zero);
        p.mlp.w2 = add(prefix + ".mlp.w2", {hidden, dim}, Init::TruncNormal);
        p.mlp.b2 = add(prefix + ".mlp.b2", {dim}, Init::Zero);
        return p;
    }

    DoubleSwinParams double_swin_params(const std::string& prefix, int level) {
        const int dim = m.cfg.stage_dim(level);
        const int heads = m.cfg.heads[static_cast<size_t>(level)];
        const int w = m.cfg.stage_window(level);
        const int s = m.cfg.stage_shift(level);
        return {swin_block_params(prefix + ".block0", dim, heads, w, s, false),
                swin_block_params(prefix + ".block1", dim, heads, w, s, true)};
    }

    DoubleSwinParams double_swin_params_dim(const std::string& prefix, int dim, int heads, int w,
                                            int s) {
        return {swin_block_params(prefix + ".block0", dim, heads, w, s, false),
                swin_block_params(prefix + ".block1", dim, heads, w, s, true)};
    }

    FuseNodeParams fuse_node_params(const std::string& prefix, int level, int column) {
        FuseNodeParams p;
        const int64_t ci = m.cfg.stage_dim(level);
        const int64_t cb = m.cfg.stage_dim(level + 1);
        p.expand.weight = add(prefix + ".expand.weight", {cb, 2 * cb}, Init::TruncNormal);
        const int64_t in_ch = (column + 1) * ci;
        p.conv = add(prefix + ".conv.weight", {ci, in_ch, 3, 3}, Init::TruncNormal);
        p.bn = batch_norm_params(prefix + ".bn", ci);
        p.bn_momentum = m.cfg.bn_momentum;
        p.bn_eps = m.cfg.bn_eps;
        return p;
    }
};

Tensor run_double_swin(const Tensor& x, const DoubleSwinParams& p) {
    return double_swin_block(x, p.first, p.second);
}

void put_u16_le(std::ostream& os, uint16_t v) {
    const char b[2] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff)};
    os.write(b, 2);
}

uint16_t get_u16_le(std::istream& is) {
    unsigned char b[2];
    is.read(reinterpret_cast<char*>(b), 2);
    if (!is) throw FormatError("CKP1: truncated field");
    return static_cast<uint16_t>(b[0] | (b[1] << 8));
}

void put_u32_le(std::ostream& os, uint32_t v) {
    const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                       static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
    os.write(b, 4);
}

uint32_t get_u32_le(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw FormatError("CKP1: truncated field");
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

}  // namespace

void ModelConfig::validate() const {
    if (img_size < 32 || img_size % 32 != 0) {
        throw ConfigError("model: img_size " + std::to_string(img_size) + " must be a multiple of 32");
    }
    if (patch_size != 4) throw ConfigError("model: patch_size must be 4");
    if (in_channels != 3) throw ConfigError("model: in_channels must be 3");
    if (base_dim < 1) throw ConfigError("model: base_dim must be >= 1");
    if (window < 1) throw ConfigError("model: window must be >= 1");
    if (mlp_ratio < 1) throw ConfigError("model: mlp_ratio must be >= 1");
    if (num_classes < 2) throw ConfigError("model: num_classes must be >= 2");
    if (bottleneck_units < 1) throw ConfigError("model: bottleneck_units must be >= 1");
    for (int k = 0; k < 4; ++k) {
        const int res = stage_res(k);
        const int weff = stage_window(k);
        if (res % weff != 0) {
            throw ConfigError("model: stage " + std::to_string(k) + " resolution " +
                              std::to_string(res) + " is not divisible by window " +
                              std::to_string(weff));
        }
        const int dim = stage_dim(k);
        const int h = heads[static_cast<size_t>(k)];
        if (h < 1 || dim % h != 0) {
            throw ConfigError("model: stage " + std::to_string(k) + " width " + std::to_string(dim) +
                              " is not divisible by head count " + std::to_string(h));
        }
    }
    if (bottleneck == BottleneckKind::Cnn && stage_dim(3) % 4 != 0) {
        throw ConfigError("model: bottleneck width " + std::to_string(stage_dim(3)) +
                          " must be divisible by 4");
    }
    if (bottleneck == BottleneckKind::SwinCmid) {
        const int cmid = 2 * base_dim;
        if (cmid % heads[3] != 0) {
            throw ConfigError("model: bottleneck mid width " + std::to_string(cmid) +
                              " is not divisible by head count " + std::to_string(heads[3]));
        }
    }
    if (deep_supervision && !dense_skips) {
        throw ConfigError("model: deep_supervision requires dense_skips");
    }
}

nlohmann::json ModelConfig::to_json() const {
    nlohmann::json j;
    j["img_size"] = img_size;
    j["patch_size"] = patch_size;
    j["in_channels"] = in_channels;
    j["base_dim"] = base_dim;
    j["window"] = window;
    j["heads"] = heads;
    j["mlp_ratio"] = mlp_ratio;
    j["num_classes"] = num_classes;
    j["dense_skips"] = dense_skips;
    j["cnn_bottleneck"] = bottleneck == BottleneckKind::Cnn;
    if (bottleneck == BottleneckKind::SwinCmid) j["bottleneck_kind"] = "swin_cmid";
    j["bottleneck_units"] = bottleneck_units;
    j["bottleneck_residual"] = bottleneck_residual;
    j["rel_pos_bias"] = rel_pos_bias;
    j["deep_supervision"] = deep_supervision;
    j["seed"] = seed;
    j["bn_momentum"] = bn_momentum;
    j["bn_eps"] = bn_eps;
    j["ln_eps"] = ln_eps;
    return j;
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
    ModelConfig c;
    auto get = [&](const char* key, auto& field) {
        if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("img_size", c.img_size);
    get("patch_size", c.patch_size);
    get("in_channels", c.in_channels);
    get("base_dim", c.base_dim);
    get("window", c.window);
    if (j.contains("heads")) {
        const auto& h = j.at("heads");
        if (!h.is_array() || h.size() != 4) throw ConfigError("model: heads must be a list of 4");
        for (size_t i = 0; i < 4; ++i) c.heads[i] = h[i].get<int>();
    }
    get("mlp_ratio", c.mlp_ratio);
    get("num_classes", c.num_classes);
    get("dense_skips", c.dense_skips);
    if (j.contains("cnn_bottleneck")) {
        c.bottleneck = j.at("cnn_bottleneck").get<bool>() ? BottleneckKind::Cnn : BottleneckKind::Swin8C;
    }
    if (j.contains("bottleneck_kind")) {
        const std::string k = j.at("bottleneck_kind").get<std::string>();
        if (k == "cnn") c.bottleneck = BottleneckKind::Cnn;
        else if (k == "swin") c.bottleneck = BottleneckKind::Swin8C;
        else if (k == "swin_cmid") c.bottleneck = BottleneckKind::SwinCmid;
        else throw ConfigError("model: unknown bottleneck_kind '" + k + "'");
    }
    get("bottleneck_units", c.bottleneck_units);
    get("bottleneck_residual", c.bottleneck_residual);
    get("rel_pos_bias", c.rel_pos_bias);
    get("deep_supervision", c.deep_supervision);
    get("seed", c.seed);
    get("bn_momentum", c.bn_momentum);
    get("bn_eps", c.bn_eps);
    get("ln_eps", c.ln_eps);
    return c;
}

AblationVariant parse_variant(const std::string& name) {
    if (name == "full") return AblationVariant::Full;
    if (name == "no_dense_skip") return AblationVariant::NoDenseSkip;
    if (name == "no_cnn_bottleneck") return AblationVariant::NoCnnBottleneck;
    throw UsageError("unknown ablation variant '" + name +
                     "' (expected full | no_dense_skip | no_cnn_bottleneck)");
}

std::string variant_name(AblationVariant v) {
    switch (v) {
        case AblationVariant::Full: return "full";
        case AblationVariant::NoDenseSkip: return "no_dense_skip";
        case AblationVariant::NoCnnBottleneck: return "no_cnn_bottleneck";
    }
    return "?";
}

ModelConfig ablate(const ModelConfig& cfg, AblationVariant v) {
    ModelConfig out = cfg;
    switch (v) {
        case AblationVariant::Full:
            break;
        case AblationVariant::NoDenseSkip:
            out.dense_skips = false;
            out.deep_supervision = false;
            break;
        case AblationVariant::NoCnnBottleneck:
            out.bottleneck = BottleneckKind::Swin8C;
            break;
    }
    return out;
}

void Model::zero_grad() {
    for (auto& p : registry) p.tensor.zero_grad();
}

NamedParam* Model::find(const std::string& name) {
    for (auto& p : registry) {
        if (p.name == name) return &p;
    }
    return nullptr;
}

Model build_model(const ModelConfig& cfg) {
    cfg.validate();
    Model m;
    m.cfg = cfg;
    Builder b{m, Rng(cfg.seed)};

    const int64_t C = cfg.base_dim;
    const int64_t feat_in = static_cast<int64_t>(cfg.patch_size) * cfg.patch_size * cfg.in_channels;
    m.embed.weight = b.add("embed.weight", {feat_in, C}, Init::TruncNormal);
    m.embed.bias = b.add("embed.bias", {C}, Init::Zero);

    for (int k = 0; k < 3; ++k) {
        m.enc[static_cast<size_t>(k)] = b.double_swin_params("enc" + std::to_string(k), k);
        const int64_t ck = cfg.stage_dim(k);
        m.merge[static_cast<size_t>(k)].weight =
            b.add("merge" + std::to_string(k) + ".weight", {4 * ck, 2 * ck}, Init::TruncNormal);
    }

    const int64_t c3 = cfg.stage_dim(3);
    switch (cfg.bottleneck) {
        case BottleneckKind::Cnn: {
            const int64_t cmid = c3 / 4;
            m.bott_cnn.bn_momentum = cfg.bn_momentum;
            m.bott_cnn.bn_eps = cfg.bn_eps;
            for (int u = 0; u < cfg.bottleneck_units; ++u) {
                const std::string pre = "bottleneck.unit" + std::to_string(u);
                BottleneckUnitParams up;
                up.bn1 = b.batch_norm_params(pre + ".bn1", c3);
                up.conv1 = b.add(pre + ".conv1.weight", {cmid, c3, 1, 1}, Init::TruncNormal);
                up.bn2 = b.batch_norm_params(pre + ".bn2", cmid);
                up.conv2 = b.add(pre + ".conv2.weight", {cmid, cmid, 3, 3}, Init::TruncNormal);
                up.bn3 = b.batch_norm_params(pre + ".bn3", cmid);
                up.conv3 = b.add(pre + ".conv3.weight", {c3, cmid, 1, 1}, Init::TruncNormal);
                up.residual = cfg.bottleneck_residual;
                m.bott_cnn.units.push_back(std::move(up));
            }
            break;
        }
        case BottleneckKind::Swin8C:
            m.bott_swin = b.double_swin_params("bottleneck.swin", 3);
            break;
        case BottleneckKind::SwinCmid: {
            const int64_t cmid = 2 * C;
            m.bott_reduce_w = b.add("bottleneck.reduce.weight", {c3, cmid}, Init::TruncNormal);
            m.bott_swin = b.double_swin_params_dim("bottleneck.swin", static_cast<int>(cmid),
                                                   cfg.heads[3], cfg.stage_window(3),
                                                   cfg.stage_shift(3));
            m.bott_restore_w = b.add("bottleneck.restore.weight", {cmid, c3}, Init::TruncNormal);
            break;
        }
    }

    if (cfg.dense_skips) {
        for (int j = 1; j <= 3; ++j)
            for (int i = 0; i + j <= 3; ++i)
                m.grid.fuse[{i, j}] = b.fuse_node_params(
                    "grid.n" + std::to_string(i) + "_" + std::to_string(j), i, j);
    } else {
        for (int i = 2; i >= 0; --i)
            m.grid.fuse[{i, 1}] =
                b.fuse_node_params("grid.n" + std::to_string(i) + "_1", i, 1);
    }

    for (int k = 2; k >= 0; --k) {
        m.dec[static_cast<size_t>(k)] = b.double_swin_params("dec" + std::to_string(k), k);
    }

    m.final_expand.weight = b.add("final_expand.weight", {C, 16 * C}, Init::TruncNormal);
    m.head_w = b.add("head.weight", {C, cfg.num_classes}, Init::TruncNormal);
    m.head_b = b.add("head.bias", {cfg.num_classes}, Init::Zero);

    if (cfg.deep_supervision) {
        for (int j = 1; j <= 3; ++j) {
            m.ds_head_w[static_cast<size_t>(j - 1)] =
                b.add("ds.head" + std::to_string(j) + ".weight", {C, cfg.num_classes}, Init::TruncNormal);
            m.ds_head_b[static_cast<size_t>(j - 1)] =
                b.add("ds.head" + std::to_string(j) + ".bias", {cfg.num_classes}, Init::Zero);
        }
    }
    return m;
}

int64_t param_count(const Model& m) {
    int64_t n = 0;
    for (const auto& p : m.registry) {
        if (p.trainable) n += p.tensor.numel();
    }
    return n;
}

ModelOutput forward(Model& m, const Tensor& batch, Mode mode, ForwardTrace* trace) {
    const ModelConfig& cfg = m.cfg;
    if (batch.rank() != 4 || batch.shape()[1] != cfg.in_channels ||
        batch.shape()[2] != cfg.img_size || batch.shape()[3] != cfg.img_size) {
        throw DimensionError("forward: batch " + shape_str(batch.shape()) +
                             " does not match configured input (" + std::to_string(cfg.in_channels) +
                             "," + std::to_string(cfg.img_size) + "," + std::to_string(cfg.img_size) +
                             ")");
    }
    auto record = [&](const std::string& name, const Tensor& t) {
        if (trace) trace->stages.emplace_back(name, t.shape());
    };

    Tensor x = patch_partition_embed(batch, m.embed, cfg.patch_size);
    record("embed", x);

    std::array<Tensor, 3> feats;
    for (int k = 0; k < 3; ++k) {
        x = run_double_swin(x, m.enc[static_cast<size_t>(k)]);
        record("enc" + std::to_string(k) + "_blocks", x);
        feats[static_cast<size_t>(k)] = x;
        x = patch_merge(x, m.merge[static_cast<size_t>(k)]);
        record("enc" + std::to_string(k) + "_merge", x);
    }

    Tensor bott;
    switch (cfg.bottleneck) {
        case BottleneckKind::Cnn:
            bott = nchw_to_nhwc(cnn_bottleneck(nhwc_to_nchw(x), m.bott_cnn, mode));
            break;
        case BottleneckKind::Swin8C:
            bott = run_double_swin(x, m.bott_swin);
            break;
        case BottleneckKind::SwinCmid:
            bott = linear(x, m.bott_reduce_w);
            bott = run_double_swin(bott, m.bott_swin);
            bott = linear(bott, m.bott_restore_w);
            break;
    }
    record("bottleneck", bott);

    BackboneHook hook = [&](int level, const Tensor& t) -> Tensor {
        if (level >= 1 && level <= 2) {
            Tensor y = run_double_swin(t, m.dec[static_cast<size_t>(level)]);
            record("dec" + std::to_string(level) + "_blocks", y);
            return y;
        }
        return t;
    };
    FeatureGrid grid = build_grid(feats, bott, m.grid, mode, cfg.dense_skips, hook);

    const Tensor& terminal = grid.at(0, cfg.dense_skips ? 3 : 1);
    Tensor a0 = run_double_swin(terminal, m.dec[0]);
    record("dec0_blocks", a0);
    Tensor y = final_expand4(a0, m.final_expand);
    record("final_expand", y);
    Tensor logits = nhwc_to_nchw(linear(y, m.head_w, m.head_b));
    record("logits", logits);

    ModelOutput out;
    out.logits = logits;
    if (cfg.deep_supervision) {
        for (int j = 1; j <= 3; ++j) {
            Tensor aux = linear(grid.at(0, j), m.ds_head_w[static_cast<size_t>(j - 1)],
                                m.ds_head_b[static_cast<size_t>(j - 1)]);
            aux = nhwc_to_nchw(nearest_upsample(aux, cfg.patch_size));
            out.aux.push_back(aux);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Checkpoints

void save_tensor_map(const std::vector<NamedParam>& entries, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot open for writing: " + path.string());
    os.write("CKP1", 4);
    put_u32_le(os, static_cast<uint32_t>(entries.size()));
    for (const auto& e : entries) {
        put_u16_le(os, static_cast<uint16_t>(e.name.size()));
        os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
        write_tsr1(os, e.tensor, Tsr1Dtype::F64);
    }
    if (!os) throw FormatError("CKP1: write failed: " + path.string());
}

std::vector<std::pair<std::string, Tensor>> load_tensor_map(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open: " + path.string());
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "CKP1", 4) != 0) {
        throw FormatError("CKP1: bad magic bytes in " + path.string());
    }
    const uint32_t count = get_u32_le(is);
    std::vector<std::pair<std::string, Tensor>> out;
    out.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        const uint16_t len = get_u16_le(is);
        std::string name(len, '\0');
        is.read(name.data(), len);
        if (!is) throw FormatError("CKP1: truncated name in " + path.string());
        out.emplace_back(std::move(name), read_tsr1(is));
    }
    return out;
}

void save_checkpoint(const Model& m, const std::filesystem::path& path) {
    save_tensor_map(m.registry, path);
    std::ofstream os(path.string() + ".json");
    if (!os) throw FormatError("cannot write config sidecar for " + path.string());
    os << m.cfg.to_json().dump(2) << "\n";
}

void load_checkpoint(Model& m, const std::filesystem::path& path) {
    auto entries = load_tensor_map(path);
    if (entries.size() != m.registry.size()) {
        throw FormatError("checkpoint " + path.string() + " holds " + std::to_string(entries.size()) +
                          " tensors, model expects " + std::to_string(m.registry.size()));
    }
    for (size_t i = 0; i < entries.size(); ++i) {
        auto& [name, tensor] = entries[i];
        NamedParam* p = m.find(name);
        if (!p) throw FormatError("checkpoint has unknown parameter '" + name + "'");
        if (p->tensor.shape() != tensor.shape()) {
            throw FormatError("checkpoint parameter '" + name + "' has shape " +
                              shape_str(tensor.shape()) + ", model expects " +
                              shape_str(p->tensor.shape()));
        }
        p->tensor.raw_data() = tensor.data();
    }
}

Model load_model(const std::filesystem::path& ckpt_path) {
    std::ifstream is(ckpt_path.string() + ".json");
    if (!is) throw FormatError("missing config sidecar " + ckpt_path.string() + ".json");
    nlohmann::json j;
    is >> j;
    Model m = build_model(ModelConfig::from_json(j));
    load_checkpoint(m, ckpt_path);
    return m;
}

}  // namespace scunet
