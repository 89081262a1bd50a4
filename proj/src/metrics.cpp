#include "scunetpp/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "json.hpp"
#include "scunetpp/parallel.hpp"

namespace scunet {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Felzenszwalb & Huttenlocher 1-D squared distance transform. Infinite
// sample values never enter the lower envelope, so mixed finite/infinite
// columns stay exact.
void dt1d(const std::vector<double>& f, std::vector<double>& d, std::vector<int>& v,
          std::vector<double>& z) {
    const int n = static_cast<int>(f.size());
    int k = -1;
    for (int q = 0; q < n; ++q) {
        if (f[static_cast<size_t>(q)] == kInf) continue;
        double s = 0.0;
        while (k >= 0) {
            const int p = v[static_cast<size_t>(k)];
            s = ((f[static_cast<size_t>(q)] + q * q) - (f[static_cast<size_t>(p)] + p * p)) /
                (2.0 * q - 2.0 * p);
            if (s > z[static_cast<size_t>(k)]) break;
            --k;
        }
        ++k;
        v[static_cast<size_t>(k)] = q;
        z[static_cast<size_t>(k)] = (k == 0) ? -kInf : s;
        z[static_cast<size_t>(k + 1)] = kInf;
    }
    if (k < 0) {
        std::fill(d.begin(), d.end(), kInf);
        return;
    }
    int j = 0;
    for (int q = 0; q < n; ++q) {
        while (z[static_cast<size_t>(j + 1)] < q) ++j;
        const int p = v[static_cast<size_t>(j)];
        d[static_cast<size_t>(q)] = (q - p) * static_cast<double>(q - p) + f[static_cast<size_t>(p)];
    }
}

// Exact squared Euclidean distance to the nearest foreground pixel, per pixel.
std::vector<double> squared_edt(const BinaryMask& m) {
    const int64_t H = m.h, W = m.w;
    std::vector<double> g(static_cast<size_t>(H * W));
    // Columns first.
    {
        std::vector<double> f(static_cast<size_t>(H)), d(static_cast<size_t>(H));
        std::vector<int> v(static_cast<size_t>(H));
        std::vector<double> z(static_cast<size_t>(H) + 1);
        for (int64_t x = 0; x < W; ++x) {
            for (int64_t y = 0; y < H; ++y) f[static_cast<size_t>(y)] = m.at(y, x) ? 0.0 : kInf;
            dt1d(f, d, v, z);
            for (int64_t y = 0; y < H; ++y) g[static_cast<size_t>(y * W + x)] = d[static_cast<size_t>(y)];
        }
    }
    // Then rows.
    std::vector<double> out(static_cast<size_t>(H * W));
    {
        std::vector<double> f(static_cast<size_t>(W)), d(static_cast<size_t>(W));
        std::vector<int> v(static_cast<size_t>(W));
        std::vector<double> z(static_cast<size_t>(W) + 1);
        for (int64_t y = 0; y < H; ++y) {
            for (int64_t x = 0; x < W; ++x) f[static_cast<size_t>(x)] = g[static_cast<size_t>(y * W + x)];
            dt1d(f, d, v, z);
            for (int64_t x = 0; x < W; ++x) out[static_cast<size_t>(y * W + x)] = d[static_cast<size_t>(x)];
        }
    }
    return out;
}

void require_same_shape(const BinaryMask& x, const BinaryMask& y, const char* op) {
    if (x.h != y.h || x.w != y.w) {
        throw DimensionError(std::string(op) + ": mask shapes (" + std::to_string(x.h) + "," +
                             std::to_string(x.w) + ") and (" + std::to_string(y.h) + "," +
                             std::to_string(y.w) + ") differ");
    }
}

// Directed nearest-neighbor distances from each foreground pixel of `from`
// into `to`.
std::vector<double> directed_distances(const BinaryMask& from, const std::vector<double>& edt_to) {
    std::vector<double> out;
    for (int64_t i = 0; i < from.h * from.w; ++i) {
        if (from.px[static_cast<size_t>(i)]) out.push_back(std::sqrt(edt_to[static_cast<size_t>(i)]));
    }
    return out;
}

// Linear-interpolation percentile on sorted data (numpy convention).
double percentile_sorted(const std::vector<double>& d, double q) {
    const size_t n = d.size();
    if (n == 1) return d[0];
    const double hpos = (static_cast<double>(n) - 1.0) * q;
    const size_t lo = static_cast<size_t>(hpos);
    const double frac = hpos - static_cast<double>(lo);
    if (lo + 1 >= n) return d[n - 1];
    return d[lo] + frac * (d[lo + 1] - d[lo]);
}

}  // namespace

int64_t BinaryMask::count() const {
    int64_t n = 0;
    for (uint8_t v : px) n += v ? 1 : 0;
    return n;
}

BinaryMask mask_from_logits(const Tensor& logits) {
    if (logits.rank() != 3) {
        throw DimensionError("mask_from_logits: expected [K,H,W], got " + shape_str(logits.shape()));
    }
    const int64_t K = logits.shape()[0], H = logits.shape()[1], W = logits.shape()[2];
    BinaryMask m(H, W);
    const auto& d = logits.data();
    for (int64_t p = 0; p < H * W; ++p) {
        int64_t best = 0;
        double bestv = d[static_cast<size_t>(p)];
        for (int64_t k = 1; k < K; ++k) {
            const double v = d[static_cast<size_t>(k * H * W + p)];
            if (v > bestv) {
                bestv = v;
                best = k;
            }
        }
        m.px[static_cast<size_t>(p)] = best == 1 ? 1 : 0;
    }
    return m;
}

double dsc(const BinaryMask& x, const BinaryMask& y) {
    require_same_shape(x, y, "dsc");
    int64_t nx = 0, ny = 0, inter = 0;
    for (size_t i = 0; i < x.px.size(); ++i) {
        nx += x.px[i] ? 1 : 0;
        ny += y.px[i] ? 1 : 0;
        inter += (x.px[i] && y.px[i]) ? 1 : 0;
    }
    if (nx + ny == 0) return 1.0;
    return 2.0 * static_cast<double>(inter) / static_cast<double>(nx + ny);
}

double hd95(const BinaryMask& x, const BinaryMask& y, Hd95Mode mode) {
    require_same_shape(x, y, "hd95");
    if (x.empty_fg() || y.empty_fg()) {
        throw HdUndefinedError("hd95 undefined: a mask has no foreground pixels");
    }
    const auto edt_x = squared_edt(x);
    const auto edt_y = squared_edt(y);
    std::vector<double> dxy = directed_distances(x, edt_y);
    std::vector<double> dyx = directed_distances(y, edt_x);
    if (mode == Hd95Mode::PaperScaled) {
        const double mx = *std::max_element(dxy.begin(), dxy.end());
        const double my = *std::max_element(dyx.begin(), dyx.end());
        return 0.95 * std::max(mx, my);
    }
    std::vector<double> pooled;
    pooled.reserve(dxy.size() + dyx.size());
    pooled.insert(pooled.end(), dxy.begin(), dxy.end());
    pooled.insert(pooled.end(), dyx.begin(), dyx.end());
    std::sort(pooled.begin(), pooled.end());
    return percentile_sorted(pooled, 0.95);
}

void MetricReport::recompute() {
    double dsum = 0.0;
    for (const auto& s : samples) dsum += s.dsc;
    const double n = static_cast<double>(samples.size());
    dsc_mean = samples.empty() ? 0.0 : dsum / n;
    double dvar = 0.0;
    for (const auto& s : samples) dvar += (s.dsc - dsc_mean) * (s.dsc - dsc_mean);
    dsc_std = samples.empty() ? 0.0 : std::sqrt(dvar / n);

    hd_defined_count = 0;
    double hsum = 0.0;
    for (const auto& s : samples) {
        if (s.hd95) {
            ++hd_defined_count;
            hsum += *s.hd95;
        }
    }
    hd95_mean = hd_defined_count ? hsum / static_cast<double>(hd_defined_count) : 0.0;
    double hvar = 0.0;
    for (const auto& s : samples) {
        if (s.hd95) hvar += (*s.hd95 - hd95_mean) * (*s.hd95 - hd95_mean);
    }
    hd95_std = hd_defined_count ? std::sqrt(hvar / static_cast<double>(hd_defined_count)) : 0.0;
}

MetricReport evaluate_set(const std::vector<BinaryMask>& pred, const std::vector<BinaryMask>& gt,
                          const std::vector<std::string>& case_ids, Hd95Mode mode, int threads) {
    if (pred.size() != gt.size() || pred.size() != case_ids.size()) {
        throw UsageError("evaluate_set: prediction, ground-truth and id lists must align");
    }
    MetricReport report;
    report.samples.resize(pred.size());
    parallel_for(static_cast<int64_t>(pred.size()), threads, [&](int64_t i) {
        auto& s = report.samples[static_cast<size_t>(i)];
        s.case_id = case_ids[static_cast<size_t>(i)];
        s.dsc = dsc(pred[static_cast<size_t>(i)], gt[static_cast<size_t>(i)]);
        try {
            s.hd95 = hd95(pred[static_cast<size_t>(i)], gt[static_cast<size_t>(i)], mode);
        } catch (const HdUndefinedError&) {
            s.hd95.reset();
        }
    });
    for (const auto& s : report.samples) {
        if (!s.hd95) ++report.hd_undefined;
    }
    report.recompute();
    return report;
}

void write_report_csv(const MetricReport& r, const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw FormatError("cannot open for writing: " + path.string());
    os << "case_id,dsc,hd95,hd_defined\n";
    char buf[64];
    for (const auto& s : r.samples) {
        os << s.case_id << ",";
        std::snprintf(buf, sizeof(buf), "%.17g", s.dsc);
        os << buf << ",";
        if (s.hd95) {
            std::snprintf(buf, sizeof(buf), "%.17g", *s.hd95);
            os << buf << ",1\n";
        } else {
            os << "nan,0\n";
        }
    }
}

void write_report_json(const MetricReport& r, const std::filesystem::path& path) {
    nlohmann::json j;
    j["n"] = r.samples.size();
    j["dsc_mean"] = r.dsc_mean;
    j["dsc_std"] = r.dsc_std;
    if (r.hd_defined_count > 0) {
        j["hd95_mean"] = r.hd95_mean;
        j["hd95_std"] = r.hd95_std;
    } else {
        j["hd95_mean"] = nullptr;
        j["hd95_std"] = nullptr;
    }
    j["hd_defined_count"] = r.hd_defined_count;
    j["hd_undefined_count"] = r.hd_undefined;
    std::ofstream os(path);
    if (!os) throw FormatError("cannot open for writing: " + path.string());
    os << j.dump(2) << "\n";
}

}  // namespace scunet
