#pragma once

#include "cts/data.hpp"
#include "cts/metrics.hpp"
#include "cts/networks.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace cts {

struct SamplerConfig {
    double threshold = 0.5; // binarization threshold in probability space
    std::uint64_t seed = 0;
};

struct SegmentationResult {
    ImageGrid probability; // [0, 1]
    MaskGrid mask;         // {0, 1}
};

// Single-step consistency segmentation: x_T = T * z, one evaluation of the
// consistency function at t = T, decode + binarize.
SegmentationResult segment_single_step(CtsModel<float>& model, const ImageGrid& x_d, const ScheduleConfig& scfg,
                                       const SamplerConfig& cfg);

// Multistep sampler (demonstrates the single-step speed advantage):
// y = f(x, t_i); x = y + sqrt(t_{i+1}^2 - eps^2) * z'. sigma_levels must start
// at sigma_max and be strictly decreasing; [sigma_max] degenerates to the
// single-step sampler.
SegmentationResult segment_multistep(CtsModel<float>& model, const ImageGrid& x_d,
                                     const std::vector<double>& sigma_levels, const ScheduleConfig& scfg,
                                     const SamplerConfig& cfg);

struct SampleMetrics {
    std::string id;
    double dice;
    double iou;
};

struct EvalReport {
    double mean_dice = 0;
    double mean_iou = 0;
    std::vector<SampleMetrics> per_sample;
};

// Runs segment_single_step per sample with per-sample derived seeds and
// aggregates Dice/IoU. oracle = true scores the ground truth against itself
// (metrics-path sanity mode).
EvalReport evaluate(CtsModel<float>& model, const Dataset& ds, const std::string& split,
                    const ScheduleConfig& scfg, const SamplerConfig& cfg, bool oracle = false);

// Writes <id>_mask.png, <id>_overlay.png and metrics.json under out_dir.
EvalReport predict_batch(CtsModel<float>& model, const Dataset& ds, const std::string& split,
                         const ScheduleConfig& scfg, const SamplerConfig& cfg, const std::string& out_dir,
                         int multistep_levels = 1, bool oracle = false);

// grayscale base image in [-1,1] with the mask contour burned in red
void write_overlay_png(const std::string& path, const ImageGrid& image, const MaskGrid& mask);

} // namespace cts
