#include "cts/sampling.hpp"

#include "cts/png_io.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace cts {

namespace {

Tensor<float> grid_to_tensor(const ImageGrid& g) {
    Tensor<float> t(1, 1, g.rows(), g.cols());
    t.plane(0, 0) = Eigen::Map<const Eigen::Array<float, Eigen::Dynamic, 1>>(g.data(), g.size());
    return t;
}

ImageGrid tensor_to_grid(const Tensor<float>& t) {
    ImageGrid g(t.h, t.w);
    Eigen::Map<Eigen::Array<float, Eigen::Dynamic, 1>>(g.data(), g.size()) = t.plane(0, 0);
    return g;
}

SegmentationResult finish(const Tensor<float>& y, const SamplerConfig& cfg) {
    SegmentationResult res;
    res.probability = decode_mask(tensor_to_grid(y));
    res.mask = binarize(res.probability, cfg.threshold);
    return res;
}

} // namespace

SegmentationResult segment_single_step(CtsModel<float>& model, const ImageGrid& x_d, const ScheduleConfig& scfg,
                                       const SamplerConfig& cfg) {
    Rng rng(cfg.seed);
    Tensor<float> z(1, 1, x_d.rows(), x_d.cols());
    fill_normal(z, rng);
    Tensor<float> x_t(1, 1, z.h, z.w);
    x_t.v = static_cast<float>(scfg.sigma_max) * z.v;
    ConsistencyOutput<float> out =
        model.consistency_forward(x_t, grid_to_tensor(x_d), scfg.sigma_max, scfg, /*cache=*/false);
    return finish(out.y, cfg);
}

SegmentationResult segment_multistep(CtsModel<float>& model, const ImageGrid& x_d,
                                     const std::vector<double>& sigma_levels, const ScheduleConfig& scfg,
                                     const SamplerConfig& cfg) {
    if (sigma_levels.empty()) throw std::invalid_argument("segment_multistep: empty sigma_levels");
    if (std::abs(sigma_levels.front() - scfg.sigma_max) > 1e-9 * scfg.sigma_max)
        throw std::invalid_argument("segment_multistep: sigma_levels must start at sigma_max");
    for (std::size_t i = 0; i + 1 < sigma_levels.size(); ++i)
        if (!(sigma_levels[i] > sigma_levels[i + 1]))
            throw std::invalid_argument("segment_multistep: sigma_levels must be strictly decreasing");
    if (sigma_levels.back() < scfg.sigma_min - 1e-12)
        throw std::invalid_argument("segment_multistep: sigma_levels must stay >= sigma_min");

    Rng rng(cfg.seed);
    Tensor<float> z(1, 1, x_d.rows(), x_d.cols());
    fill_normal(z, rng);
    Tensor<float> x(1, 1, z.h, z.w);
    x.v = static_cast<float>(scfg.sigma_max) * z.v;
    Tensor<float> x_d_t = grid_to_tensor(x_d);

    Tensor<float> y;
    for (std::size_t i = 0; i < sigma_levels.size(); ++i) {
        ConsistencyOutput<float> out = model.consistency_forward(x, x_d_t, sigma_levels[i], scfg, /*cache=*/false);
        y = std::move(out.y);
        if (i + 1 < sigma_levels.size()) {
            const double t_next = sigma_levels[i + 1];
            const double step_sigma = std::sqrt(std::max(0.0, t_next * t_next - scfg.sigma_min * scfg.sigma_min));
            Tensor<float> z2(1, 1, z.h, z.w);
            fill_normal(z2, rng);
            x.v = y.v + static_cast<float>(step_sigma) * z2.v;
        }
    }
    return finish(y, cfg);
}

EvalReport evaluate(CtsModel<float>& model, const Dataset& ds, const std::string& split,
                    const ScheduleConfig& scfg, const SamplerConfig& cfg, bool oracle) {
    const auto& samples = ds.split(split);
    if (samples.empty()) throw std::invalid_argument("evaluate: split '" + split + "' is empty");
    EvalReport rep;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const SamplePair& s = samples[i];
        MaskGrid pred;
        if (oracle) {
            pred = s.mask;
        } else {
            SamplerConfig per = cfg;
            per.seed = Rng::derive(cfg.seed, i);
            pred = segment_single_step(model, s.image, scfg, per).mask;
        }
        rep.per_sample.push_back({s.id, dice(pred, s.mask), iou(pred, s.mask)});
    }
    for (const auto& m : rep.per_sample) {
        rep.mean_dice += m.dice;
        rep.mean_iou += m.iou;
    }
    rep.mean_dice /= static_cast<double>(rep.per_sample.size());
    rep.mean_iou /= static_cast<double>(rep.per_sample.size());
    return rep;
}

void write_overlay_png(const std::string& path, const ImageGrid& image, const MaskGrid& pred) {
    const Eigen::Index rows = image.rows(), cols = image.cols();
    ImageGrid base = ((image + 1.0f) * 127.5f).min(255.0f).max(0.0f);
    ImageGrid r = base, g = base, b = base;
    for (Eigen::Index y = 0; y < rows; ++y)
        for (Eigen::Index x = 0; x < cols; ++x) {
            if (pred(y, x) != 1.0f) continue;
            const bool boundary = (y == 0 || pred(y - 1, x) == 0.0f) || (y == rows - 1 || pred(y + 1, x) == 0.0f) ||
                                  (x == 0 || pred(y, x - 1) == 0.0f) || (x == cols - 1 || pred(y, x + 1) == 0.0f);
            if (boundary) {
                r(y, x) = 255.0f;
                g(y, x) = 0.0f;
                b(y, x) = 0.0f;
            }
        }
    write_png_rgb8(path, r, g, b);
}

EvalReport predict_batch(CtsModel<float>& model, const Dataset& ds, const std::string& split,
                         const ScheduleConfig& scfg, const SamplerConfig& cfg, const std::string& out_dir,
                         int multistep_levels, bool oracle) {
    const auto& samples = ds.split(split);
    if (samples.empty()) throw std::invalid_argument("predict_batch: split '" + split + "' is empty");
    fs::create_directories(out_dir);

    std::vector<double> levels;
    if (multistep_levels > 1) {
        levels = karras_sigmas(multistep_levels, scfg);
        std::reverse(levels.begin(), levels.end());
    }

    EvalReport rep;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const SamplePair& s = samples[i];
        MaskGrid pred;
        if (oracle) {
            pred = s.mask;
        } else {
            SamplerConfig per = cfg;
            per.seed = Rng::derive(cfg.seed, i);
            pred = multistep_levels > 1 ? segment_multistep(model, s.image, levels, scfg, per).mask
                                        : segment_single_step(model, s.image, scfg, per).mask;
        }
        write_png_gray8((fs::path(out_dir) / (s.id + "_mask.png")).string(), (pred * 255.0f).eval());
        write_overlay_png((fs::path(out_dir) / (s.id + "_overlay.png")).string(), s.image, pred);
        rep.per_sample.push_back({s.id, dice(pred, s.mask), iou(pred, s.mask)});
    }
    for (const auto& m : rep.per_sample) {
        rep.mean_dice += m.dice;
        rep.mean_iou += m.iou;
    }
    rep.mean_dice /= static_cast<double>(rep.per_sample.size());
    rep.mean_iou /= static_cast<double>(rep.per_sample.size());

    json per = json::array();
    for (const auto& m : rep.per_sample) per.push_back({{"id", m.id}, {"dice", m.dice}, {"iou", m.iou}});
    json j{{"mean_dice", rep.mean_dice}, {"mean_iou", rep.mean_iou}, {"per_sample", per}};
    std::ofstream out(fs::path(out_dir) / "metrics.json", std::ios::binary | std::ios::trunc);
    out << j.dump(2) << '\n';
    if (!out) throw std::runtime_error("predict_batch: cannot write metrics.json in " + out_dir);
    return rep;
}

} // namespace cts
