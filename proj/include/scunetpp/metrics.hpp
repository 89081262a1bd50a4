#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "scunetpp/tensor.hpp"

namespace scunet {

struct BinaryMask {
    int64_t h = 0, w = 0;
    std::vector<uint8_t> px;  // 0 or 1

    BinaryMask() = default;
    BinaryMask(int64_t h_, int64_t w_) : h(h_), w(w_), px(static_cast<size_t>(h_ * w_), 0) {}

    uint8_t at(int64_t y, int64_t x) const { return px[static_cast<size_t>(y * w + x)]; }
    void set(int64_t y, int64_t x, uint8_t v) { px[static_cast<size_t>(y * w + x)] = v; }
    int64_t count() const;
    bool empty_fg() const { return count() == 0; }
    bool operator==(const BinaryMask& o) const = default;
};

// Argmax over the class axis of [K,H,W] logits (ties resolve to the lower
// class index); class 1 is foreground.
BinaryMask mask_from_logits(const Tensor& logits);

// 2|X∩Y| / (|X|+|Y|); both masks empty gives 1.0, exactly one empty gives 0.
double dsc(const BinaryMask& x, const BinaryMask& y);

enum class Hd95Mode {
    Percentile,   // 95th percentile (linear interpolation) of pooled directed
                  // nearest-neighbor distances
    PaperScaled,  // 0.95 * max{d_XY, d_YX}
};

// Euclidean distances between pixel centers, in pixel units. Throws
// HdUndefinedError when either mask has no foreground.
double hd95(const BinaryMask& x, const BinaryMask& y, Hd95Mode mode = Hd95Mode::Percentile);

struct SampleMetrics {
    std::string case_id;
    double dsc = 0.0;
    std::optional<double> hd95;  // absent when undefined
};

struct MetricReport {
    std::vector<SampleMetrics> samples;
    int hd_undefined = 0;
    double dsc_mean = 0.0, dsc_std = 0.0;   // population std
    double hd95_mean = 0.0, hd95_std = 0.0; // over defined samples only
    size_t hd_defined_count = 0;

    void recompute();
};

MetricReport evaluate_set(const std::vector<BinaryMask>& pred, const std::vector<BinaryMask>& gt,
                          const std::vector<std::string>& case_ids,
                          Hd95Mode mode = Hd95Mode::Percentile, int threads = 1);

// Per-sample rows with fixed columns: case_id, dsc, hd95, hd_defined.
void write_report_csv(const MetricReport& r, const std::filesystem::path& path);
// Aggregates as a JSON object.
void write_report_json(const MetricReport& r, const std::filesystem::path& path);

}  // namespace scunet
