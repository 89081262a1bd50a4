#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "scunetpp/metrics.hpp"
#include "scunetpp/tensor.hpp"

namespace scunet {

// Synthetic CTPA-like phantom: dark lung background, bright tubular vessels,
// elliptical low-attenuation emboli drawn strictly inside vessels. The mask
// marks exactly the embolus pixels.
struct PhantomParams {
    int img_size = 64;
    int vessels_min = 2, vessels_max = 4;
    double vessel_hu_min = 200.0, vessel_hu_max = 400.0;
    double vessel_w_min = 3.0, vessel_w_max = 6.0;
    double background_hu = -800.0;
    int emboli_min = 1, emboli_max = 2;
    double embolus_hu_min = -50.0, embolus_hu_max = 100.0;
    double embolus_r_min = 1.5, embolus_r_max = 4.0;
    double noise_std = 15.0;
    uint64_t seed = 7;

    void validate() const;
};

struct SynthSlice {
    Tensor hu;                 // [H,W], noise applied
    Tensor hu_clean;           // [H,W], pre-noise
    BinaryMask mask;           // embolus pixels
    BinaryMask vessel_region;  // generator bookkeeping: all vessel pixels (pre-embolus)
};

// Deterministic given params.seed; one case = `slices` independent slices.
std::vector<SynthSlice> synth_case(const PhantomParams& p, int slices);

// clamp to [center-width/2, center+width/2], mapped linearly onto [0,1].
Tensor hu_window(const Tensor& hu, double center, double width);

struct SegSample {
    std::string image_path;  // relative to dataset root
    std::string mask_path;
};

struct CaseManifest {
    std::string case_id;
    std::string split;  // "train" | "test"
    std::vector<SegSample> samples;
};

// Deterministic case-level split: floor(N/10) cases (at least 1) go to test.
void split_cases(std::vector<CaseManifest>& cases, uint64_t seed);

// Image as TSR1 (f32, [H,W], windowed to [0,1]); mask as binary P5 PGM with
// values 0/255 only.
void save_sample(const Tensor& image01, const BinaryMask& mask,
                 const std::filesystem::path& image_path, const std::filesystem::path& mask_path);
std::pair<Tensor, BinaryMask> load_sample(const std::filesystem::path& image_path,
                                          const std::filesystem::path& mask_path);

void write_pgm(const BinaryMask& mask, const std::filesystem::path& path);
BinaryMask read_pgm(const std::filesystem::path& path);

// Grayscale [H,W] replicated to the model's [3,H,W] input.
Tensor to_model_input(const Tensor& image);

struct Dataset {
    std::filesystem::path root;
    std::vector<CaseManifest> cases;

    // Samples of one split, flattened in manifest order.
    std::vector<std::pair<std::string, SegSample>> split_samples(const std::string& split) const;
};

void write_manifest(const Dataset& ds);
Dataset load_dataset(const std::filesystem::path& root);

struct SynthDatasetConfig {
    PhantomParams phantom;
    int cases = 10;
    int slices_per_case = 4;
    double window_center = 50.0;
    double window_width = 700.0;
    uint64_t split_seed = 0;
    int threads = 1;
};

// Generates cases/<id>/<k>.img.tsr + <k>.mask.pgm plus manifest.jsonl.
Dataset synth_dataset(const std::filesystem::path& root, const SynthDatasetConfig& cfg);

}  // namespace scunet
