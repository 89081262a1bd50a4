#include "scunetpp/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "json.hpp"
#include "scunetpp/parallel.hpp"
#include "scunetpp/rng.hpp"
#include "scunetpp/tensor_io.hpp"

namespace scunet {

namespace {

struct Vessel {
    double x0, y0, x1, y1;
    double radius;
};

double point_segment_dist(double px, double py, const Vessel& v) {
    const double dx = v.x1 - v.x0, dy = v.y1 - v.y0;
    const double len2 = dx * dx + dy * dy;
    double t = len2 > 0 ? ((px - v.x0) * dx + (py - v.y0) * dy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const double cx = v.x0 + t * dx, cy = v.y0 + t * dy;
    return std::hypot(px - cx, py - cy);
}

SynthSlice synth_slice(const PhantomParams& p, uint64_t slice_seed) {
    Rng rng(slice_seed);
    const int64_t S = p.img_size;
    std::vector<double> hu(static_cast<size_t>(S * S), p.background_hu);
    BinaryMask vessel_region(S, S);
    BinaryMask mask(S, S);

    const int nv = static_cast<int>(rng.randint(p.vessels_min, p.vessels_max));
    std::vector<Vessel> vessels;
    for (int i = 0; i < nv; ++i) {
        Vessel v{};
        const double min_len = static_cast<double>(S) * 0.5;
        do {
            v.x0 = rng.uniform(0.0, static_cast<double>(S - 1));
            v.y0 = rng.uniform(0.0, static_cast<double>(S - 1));
            v.x1 = rng.uniform(0.0, static_cast<double>(S - 1));
            v.y1 = rng.uniform(0.0, static_cast<double>(S - 1));
        } while (std::hypot(v.x1 - v.x0, v.y1 - v.y0) < min_len);
        v.radius = rng.uniform(p.vessel_w_min, p.vessel_w_max);
        const double vhu = rng.uniform(p.vessel_hu_min, p.vessel_hu_max);
        for (int64_t y = 0; y < S; ++y) {
            for (int64_t x = 0; x < S; ++x) {
                if (point_segment_dist(static_cast<double>(x), static_cast<double>(y), v) <= v.radius) {
                    hu[static_cast<size_t>(y * S + x)] = vhu;
                    vessel_region.set(y, x, 1);
                }
            }
        }
        vessels.push_back(v);
    }

    const int ne = static_cast<int>(rng.randint(p.emboli_min, p.emboli_max));
    for (int e = 0; e < ne; ++e) {
        bool placed = false;
        for (int attempt = 0; attempt < 50 && !placed; ++attempt) {
            const Vessel& v = vessels[static_cast<size_t>(rng.randint(0, nv - 1))];
            const double t = rng.uniform(0.15, 0.85);
            const double cx = v.x0 + t * (v.x1 - v.x0);
            const double cy = v.y0 + t * (v.y1 - v.y0);
            const double r = rng.uniform(p.embolus_r_min, std::min(p.embolus_r_max, v.radius));
            const double ecc = rng.uniform(0.5, 1.0);
            const double ang = rng.uniform(0.0, 3.14159265358979323846);
            const double ca = std::cos(ang), sa = std::sin(ang);
            const double ehu = rng.uniform(p.embolus_hu_min, p.embolus_hu_max);

            std::vector<int64_t> px_list;
            const int64_t lo_y = std::max<int64_t>(0, static_cast<int64_t>(cy - r - 1));
            const int64_t hi_y = std::min<int64_t>(S - 1, static_cast<int64_t>(cy + r + 1));
            const int64_t lo_x = std::max<int64_t>(0, static_cast<int64_t>(cx - r - 1));
            const int64_t hi_x = std::min<int64_t>(S - 1, static_cast<int64_t>(cx + r + 1));
            for (int64_t y = lo_y; y <= hi_y; ++y) {
                for (int64_t x = lo_x; x <= hi_x; ++x) {
                    const double rx = (static_cast<double>(x) - cx) * ca + (static_cast<double>(y) - cy) * sa;
                    const double ry = -(static_cast<double>(x) - cx) * sa + (static_cast<double>(y) - cy) * ca;
                    const bool in_ellipse =
                        (rx * rx) / (r * r) + (ry * ry) / (r * ecc * r * ecc) <= 1.0;
                    if (in_ellipse && vessel_region.at(y, x)) px_list.push_back(y * S + x);
                }
            }
            if (px_list.empty()) continue;
            for (int64_t q : px_list) {
                hu[static_cast<size_t>(q)] = ehu;
                mask.px[static_cast<size_t>(q)] = 1;
            }
            placed = true;
        }
        if (!placed) {
            throw GenerationError("phantom: could not place an embolus inside any vessel");
        }
    }

    SynthSlice out;
    out.hu_clean = Tensor::from_data({S, S}, hu);
    for (double& v : hu) v += rng.normal() * p.noise_std;
    out.hu = Tensor::from_data({S, S}, std::move(hu));
    out.mask = std::move(mask);
    out.vessel_region = std::move(vessel_region);
    return out;
}

}  // namespace

void PhantomParams::validate() const {
    if (img_size < 16) throw ConfigError("phantom: img_size must be >= 16");
    if (vessels_min < 1 || vessels_max < vessels_min) {
        throw ConfigError("phantom: vessel count range invalid");
    }
    if (emboli_min < 1 || emboli_max < emboli_min) {
        throw ConfigError("phantom: embolus count range invalid");
    }
    if (embolus_hu_min < -50.0 || embolus_hu_max > 100.0 || embolus_hu_min > embolus_hu_max) {
        throw ConfigError("phantom: embolus HU range must lie within [-50, 100]");
    }
    if (vessel_w_min <= 0 || vessel_w_max < vessel_w_min) {
        throw ConfigError("phantom: vessel width range invalid");
    }
    if (embolus_r_min <= 0 || embolus_r_max < embolus_r_min) {
        throw ConfigError("phantom: embolus radius range invalid");
    }
    if (embolus_r_min > vessel_w_max) {
        throw GenerationError("phantom: embolus radius exceeds every possible vessel width");
    }
    if (noise_std < 0) throw ConfigError("phantom: noise_std must be >= 0");
}

std::vector<SynthSlice> synth_case(const PhantomParams& p, int slices) {
    p.validate();
    if (slices < 1) throw UsageError("synth_case: slices must be >= 1");
    std::vector<SynthSlice> out;
    out.reserve(static_cast<size_t>(slices));
    for (int k = 0; k < slices; ++k) {
        out.push_back(synth_slice(p, Rng::mix(p.seed, static_cast<uint64_t>(k))));
    }
    return out;
}

Tensor hu_window(const Tensor& hu, double center, double width) {
    if (width <= 0) throw UsageError("hu_window: width must be > 0");
    const double lo = center - width / 2.0;
    std::vector<double> out(hu.data());
    for (double& v : out) v = std::clamp((v - lo) / width, 0.0, 1.0);
    return Tensor::from_data(hu.shape(), std::move(out));
}

void split_cases(std::vector<CaseManifest>& cases, uint64_t seed) {
    const size_t n = cases.size();
    if (n < 2) throw UsageError("split_cases: need at least 2 cases");
    std::vector<size_t> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(seed);
    rng.shuffle(order);
    const size_t n_test = std::max<size_t>(1, n / 10);
    for (auto& c : cases) c.split = "train";
    for (size_t i = 0; i < n_test; ++i) cases[order[i]].split = "test";
}

void write_pgm(const BinaryMask& mask, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot open for writing: " + path.string());
    os << "P5\n" << mask.w << " " << mask.h << "\n255\n";
    std::vector<unsigned char> row(static_cast<size_t>(mask.w));
    for (int64_t y = 0; y < mask.h; ++y) {
        for (int64_t x = 0; x < mask.w; ++x) row[static_cast<size_t>(x)] = mask.at(y, x) ? 255 : 0;
        os.write(reinterpret_cast<const char*>(row.data()), mask.w);
    }
    if (!os) throw FormatError("PGM write failed: " + path.string());
}

BinaryMask read_pgm(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open: " + path.string());
    std::string magic;
    is >> magic;
    if (magic != "P5") throw FormatError("PGM: bad magic in " + path.string());
    auto next_token = [&]() -> int64_t {
        // Skips whitespace and '#' comment lines.
        while (true) {
            const int c = is.peek();
            if (c == EOF) throw FormatError("PGM: truncated header in " + path.string());
            if (c == '#') {
                std::string line;
                std::getline(is, line);
            } else if (std::isspace(c)) {
                is.get();
            } else {
                break;
            }
        }
        int64_t v = 0;
        is >> v;
        if (!is) throw FormatError("PGM: truncated header in " + path.string());
        return v;
    };
    const int64_t w = next_token();
    const int64_t h = next_token();
    const int64_t maxval = next_token();
    if (maxval != 255) throw FormatError("PGM: maxval must be 255 in " + path.string());
    is.get();  // single whitespace before payload
    BinaryMask mask(h, w);
    std::vector<unsigned char> raw(static_cast<size_t>(w * h));
    is.read(reinterpret_cast<char*>(raw.data()), w * h);
    if (!is) throw FormatError("PGM: truncated payload in " + path.string());
    for (int64_t i = 0; i < w * h; ++i) {
        const unsigned char v = raw[static_cast<size_t>(i)];
        if (v != 0 && v != 255) {
            throw FormatError("PGM: illegal mask value " + std::to_string(v) + " in " + path.string());
        }
        mask.px[static_cast<size_t>(i)] = v == 255 ? 1 : 0;
    }
    return mask;
}

void save_sample(const Tensor& image01, const BinaryMask& mask,
                 const std::filesystem::path& image_path, const std::filesystem::path& mask_path) {
    if (image01.rank() != 2) {
        throw DimensionError("save_sample: image must be [H,W], got " + shape_str(image01.shape()));
    }
    if (image01.shape()[0] != mask.h || image01.shape()[1] != mask.w) {
        throw DimensionError("save_sample: image " + shape_str(image01.shape()) +
                             " does not match mask (" + std::to_string(mask.h) + "," +
                             std::to_string(mask.w) + ")");
    }
    save_tsr1(image_path, image01, Tsr1Dtype::F32);
    write_pgm(mask, mask_path);
}

std::pair<Tensor, BinaryMask> load_sample(const std::filesystem::path& image_path,
                                          const std::filesystem::path& mask_path) {
    Tensor image = load_tsr1(image_path);
    if (image.rank() != 2) {
        throw FormatError("sample image must be rank 2, got " + shape_str(image.shape()) + " in " +
                          image_path.string());
    }
    BinaryMask mask = read_pgm(mask_path);
    if (image.shape()[0] != mask.h || image.shape()[1] != mask.w) {
        throw FormatError("sample pair shape mismatch between " + image_path.string() + " and " +
                          mask_path.string());
    }
    return {std::move(image), std::move(mask)};
}

Tensor to_model_input(const Tensor& image) {
    if (image.rank() != 2) {
        throw DimensionError("to_model_input: expected [H,W], got " + shape_str(image.shape()));
    }
    const int64_t H = image.shape()[0], W = image.shape()[1];
    std::vector<double> out(static_cast<size_t>(3 * H * W));
    for (int c = 0; c < 3; ++c) {
        std::copy(image.data().begin(), image.data().end(), out.begin() + c * H * W);
    }
    return Tensor::from_data({3, H, W}, std::move(out));
}

std::vector<std::pair<std::string, SegSample>> Dataset::split_samples(const std::string& split) const {
    std::vector<std::pair<std::string, SegSample>> out;
    for (const auto& c : cases) {
        if (c.split != split) continue;
        for (const auto& s : c.samples) out.emplace_back(c.case_id, s);
    }
    return out;
}

void write_manifest(const Dataset& ds) {
    std::ofstream os(ds.root / "manifest.jsonl");
    if (!os) throw FormatError("cannot open manifest for writing under " + ds.root.string());
    for (const auto& c : ds.cases) {
        nlohmann::json j;
        j["case_id"] = c.case_id;
        j["split"] = c.split;
        auto& samples = j["samples"] = nlohmann::json::array();
        for (const auto& s : c.samples) {
            samples.push_back({{"image", s.image_path}, {"mask", s.mask_path}});
        }
        os << j.dump() << "\n";
    }
}

Dataset load_dataset(const std::filesystem::path& root) {
    std::ifstream is(root / "manifest.jsonl");
    if (!is) throw FormatError("no manifest.jsonl under " + root.string());
    Dataset ds;
    ds.root = root;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded()) throw FormatError("manifest: invalid JSON line in " + root.string());
        CaseManifest c;
        c.case_id = j.at("case_id").get<std::string>();
        c.split = j.at("split").get<std::string>();
        for (const auto& s : j.at("samples")) {
            c.samples.push_back({s.at("image").get<std::string>(), s.at("mask").get<std::string>()});
        }
        ds.cases.push_back(std::move(c));
    }
    if (ds.cases.empty()) throw FormatError("manifest: no cases listed in " + root.string());
    return ds;
}

Dataset synth_dataset(const std::filesystem::path& root, const SynthDatasetConfig& cfg) {
    cfg.phantom.validate();
    if (cfg.cases < 2) throw UsageError("synth_dataset: need at least 2 cases for a split");
    std::filesystem::create_directories(root / "cases");

    Dataset ds;
    ds.root = root;
    ds.cases.resize(static_cast<size_t>(cfg.cases));
    parallel_for(cfg.cases, cfg.threads, [&](int64_t ci) {
        char namebuf[32];
        std::snprintf(namebuf, sizeof(namebuf), "case_%04d", static_cast<int>(ci));
        CaseManifest c;
        c.case_id = namebuf;
        PhantomParams pp = cfg.phantom;
        pp.seed = Rng::mix(cfg.phantom.seed, static_cast<uint64_t>(ci));
        const auto slices = synth_case(pp, cfg.slices_per_case);
        const auto dir = root / "cases" / c.case_id;
        std::filesystem::create_directories(dir);
        for (size_t k = 0; k < slices.size(); ++k) {
            const std::string img_rel = "cases/" + c.case_id + "/" + std::to_string(k) + ".img.tsr";
            const std::string msk_rel = "cases/" + c.case_id + "/" + std::to_string(k) + ".mask.pgm";
            const Tensor img01 = hu_window(slices[k].hu, cfg.window_center, cfg.window_width);
            save_sample(img01, slices[k].mask, root / img_rel, root / msk_rel);
            c.samples.push_back({img_rel, msk_rel});
        }
        ds.cases[static_cast<size_t>(ci)] = std::move(c);
    });
    split_cases(ds.cases, cfg.split_seed);
    write_manifest(ds);
    return ds;
}

}  // namespace scunet
