#include "cts/data.hpp"

#include "cts/png_io.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace cts {

const std::vector<ManifestEntry>& DatasetManifest::split(const std::string& name) const {
    if (name == "train") return train;
    if (name == "val") return val;
    if (name == "test") return test;
    throw std::invalid_argument("DatasetManifest: unknown split '" + name + "'");
}

namespace {

MaskGrid ellipse_mask(int size, Rng& rng) {
    const double s = size;
    const double cx = s * (0.3 + 0.4 * rng.uniform());
    const double cy = s * (0.3 + 0.4 * rng.uniform());
    const double a = s * (0.08 + 0.25 * rng.uniform());
    const double b = s * (0.08 + 0.25 * rng.uniform());
    const double th = std::numbers::pi * rng.uniform();
    const double ct = std::cos(th), st = std::sin(th);
    MaskGrid m(size, size);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const double dx = x - cx, dy = y - cy;
            const double u = ct * dx + st * dy, v = -st * dx + ct * dy;
            m(y, x) = (u * u / (a * a) + v * v / (b * b) <= 1.0) ? 1.0f : 0.0f;
        }
    return m;
}

// star-convex blob: radius modulated by a few random harmonics
MaskGrid blob_mask(int size, Rng& rng) {
    const double s = size;
    const double cx = s * (0.32 + 0.36 * rng.uniform());
    const double cy = s * (0.32 + 0.36 * rng.uniform());
    const double r0 = s * (0.10 + 0.18 * rng.uniform());
    double amp[4], phase[4];
    for (int k = 0; k < 4; ++k) {
        amp[k] = (0.35 / (k + 2)) * (2.0 * rng.uniform() - 1.0);
        phase[k] = 2.0 * std::numbers::pi * rng.uniform();
    }
    MaskGrid m(size, size);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const double dx = x - cx, dy = y - cy;
            const double phi = std::atan2(dy, dx);
            double r = 1.0;
            for (int k = 0; k < 4; ++k) r += amp[k] * std::cos((k + 2) * phi + phase[k]);
            m(y, x) = (std::sqrt(dx * dx + dy * dy) <= r0 * r) ? 1.0f : 0.0f;
        }
    return m;
}

MaskGrid sample_shape(const SyntheticConfig& cfg, Rng& rng) {
    // rejection-sample until the foreground fraction sits inside [0.03, 0.45]
    for (int attempt = 0; attempt < 200; ++attempt) {
        bool use_ellipse = cfg.shape_family == "ellipse";
        if (cfg.shape_family == "mixed") use_ellipse = rng.uniform() < 0.5;
        MaskGrid m = use_ellipse ? ellipse_mask(cfg.image_size, rng) : blob_mask(cfg.image_size, rng);
        const double frac = static_cast<double>((m == 1.0f).count()) / static_cast<double>(m.size());
        if (frac >= 0.03 && frac <= 0.45) return m;
    }
    throw std::runtime_error("generate_synthetic_dataset: shape rejection sampling did not converge");
}

ImageGrid gaussian_blur(const ImageGrid& img, double sigma) {
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<float> kern(static_cast<std::size_t>(2 * radius + 1));
    double sum = 0;
    for (int i = -radius; i <= radius; ++i) {
        kern[static_cast<std::size_t>(i + radius)] = static_cast<float>(std::exp(-0.5 * i * i / (sigma * sigma)));
        sum += kern[static_cast<std::size_t>(i + radius)];
    }
    for (auto& k : kern) k = static_cast<float>(k / sum);

    const Eigen::Index rows = img.rows(), cols = img.cols();
    ImageGrid tmp(rows, cols), out(rows, cols);
    for (Eigen::Index y = 0; y < rows; ++y)
        for (Eigen::Index x = 0; x < cols; ++x) {
            float acc = 0;
            for (int i = -radius; i <= radius; ++i) {
                Eigen::Index xx = std::clamp<Eigen::Index>(x + i, 0, cols - 1);
                acc += kern[static_cast<std::size_t>(i + radius)] * img(y, xx);
            }
            tmp(y, x) = acc;
        }
    for (Eigen::Index y = 0; y < rows; ++y)
        for (Eigen::Index x = 0; x < cols; ++x) {
            float acc = 0;
            for (int i = -radius; i <= radius; ++i) {
                Eigen::Index yy = std::clamp<Eigen::Index>(y + i, 0, rows - 1);
                acc += kern[static_cast<std::size_t>(i + radius)] * tmp(yy, x);
            }
            out(y, x) = acc;
        }
    return out;
}

ImageGrid render_image(const MaskGrid& mask, const SyntheticConfig& cfg, Rng& rng) {
    const int size = cfg.image_size;
    const float bg = static_cast<float>(40.0 + 50.0 * rng.uniform());
    const float fg = static_cast<float>(150.0 + 65.0 * rng.uniform());
    ImageGrid soft = gaussian_blur(mask, 1.2);
    ImageGrid img = (bg + (fg - bg) * soft).eval();

    const double ax = 2.0 * rng.uniform() - 1.0;
    const double ay = 2.0 * rng.uniform() - 1.0;
    const double axy = 2.0 * rng.uniform() - 1.0;
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const double u = 2.0 * x / (size - 1) - 1.0, v = 2.0 * y / (size - 1) - 1.0;
            const double field = 1.0 + cfg.bias_field_strength * 0.5 * (ax * u + ay * v + axy * u * v);
            img(y, x) *= static_cast<float>(std::max(0.2, field));
        }
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            float v = img(y, x);
            v *= static_cast<float>(1.0 + cfg.speckle_strength * rng.normal());
            v += static_cast<float>(255.0 * cfg.gaussian_noise_std * rng.normal());
            img(y, x) = std::clamp(v, 0.0f, 255.0f);
        }
    return img;
}

void generate_split(const SyntheticConfig& cfg, const fs::path& root, const std::string& split, int count,
                    std::uint64_t split_tag, std::vector<ManifestEntry>& out) {
    fs::create_directories(root / split / "images");
    fs::create_directories(root / split / "masks");
    char buf[32];
    for (int i = 0; i < count; ++i) {
        Rng rng(Rng::derive(cfg.seed, split_tag * 1000003ULL + static_cast<std::uint64_t>(i)));
        MaskGrid mask = sample_shape(cfg, rng);
        ImageGrid img = render_image(mask, cfg, rng);
        std::snprintf(buf, sizeof buf, "%s_%04d", split.c_str(), i);
        ManifestEntry e;
        e.id = buf;
        e.image_path = split + "/images/" + e.id + ".png";
        e.mask_path = split + "/masks/" + e.id + ".png";
        write_png_gray8((root / e.image_path).string(), img);
        write_png_gray8((root / e.mask_path).string(), (mask * 255.0f).eval());
        out.push_back(std::move(e));
    }
}

json config_to_json(const SyntheticConfig& c) {
    return json{{"image_size", c.image_size},
                {"n_train", c.n_train},
                {"n_val", c.n_val},
                {"n_test", c.n_test},
                {"shape_family", c.shape_family},
                {"speckle_strength", c.speckle_strength},
                {"gaussian_noise_std", c.gaussian_noise_std},
                {"bias_field_strength", c.bias_field_strength},
                {"seed", c.seed}};
}

SyntheticConfig config_from_json(const json& j) {
    SyntheticConfig c;
    c.image_size = j.at("image_size").get<int>();
    c.n_train = j.at("n_train").get<int>();
    c.n_val = j.at("n_val").get<int>();
    c.n_test = j.at("n_test").get<int>();
    c.shape_family = j.at("shape_family").get<std::string>();
    c.speckle_strength = j.at("speckle_strength").get<double>();
    c.gaussian_noise_std = j.at("gaussian_noise_std").get<double>();
    c.bias_field_strength = j.at("bias_field_strength").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

json entries_to_json(const std::vector<ManifestEntry>& v) {
    json arr = json::array();
    for (const auto& e : v) arr.push_back({{"id", e.id}, {"image", e.image_path}, {"mask", e.mask_path}});
    return arr;
}

std::vector<ManifestEntry> entries_from_json(const json& arr) {
    std::vector<ManifestEntry> v;
    for (const auto& e : arr)
        v.push_back({e.at("id").get<std::string>(), e.at("image").get<std::string>(), e.at("mask").get<std::string>()});
    return v;
}

} // namespace

DatasetManifest generate_synthetic_dataset(const SyntheticConfig& cfg, const std::string& out_dir) {
    cfg.validate();
    const fs::path root(out_dir);
    std::error_code ec;
    fs::create_directories(root, ec);
    if (ec) throw std::runtime_error("generate_synthetic_dataset: cannot create " + out_dir + ": " + ec.message());

    DatasetManifest man;
    man.config = cfg;
    generate_split(cfg, root, "train", cfg.n_train, 1, man.train);
    generate_split(cfg, root, "val", cfg.n_val, 2, man.val);
    generate_split(cfg, root, "test", cfg.n_test, 3, man.test);

    json j{{"format_version", man.format_version},
           {"generator", config_to_json(cfg)},
           {"splits", {{"train", entries_to_json(man.train)},
                       {"val", entries_to_json(man.val)},
                       {"test", entries_to_json(man.test)}}}};
    std::ofstream out(root / "manifest.json", std::ios::binary);
    if (!out) throw std::runtime_error("generate_synthetic_dataset: cannot write manifest.json");
    out << j.dump(2) << '\n';
    return man;
}

namespace {

SamplePair load_pair(const fs::path& root, const ManifestEntry& e, const LoadOptions& opts) {
    const fs::path img_path = root / e.image_path, mask_path = root / e.mask_path;
    if (!fs::exists(img_path)) throw std::runtime_error("load_dataset: sample '" + e.id + "': missing " + img_path.string());
    if (!fs::exists(mask_path))
        throw std::runtime_error("load_dataset: sample '" + e.id + "': missing " + mask_path.string());

    SamplePair p;
    p.id = e.id;
    ImageGrid raw = read_png_gray(img_path.string());
    ImageGrid mask_raw = read_png_gray(mask_path.string());
    if (raw.rows() != mask_raw.rows() || raw.cols() != mask_raw.cols())
        throw std::runtime_error("load_dataset: sample '" + e.id + "': image/mask shape mismatch");
    if (!((mask_raw == 0.0f) || (mask_raw == 255.0f)).all())
        throw std::runtime_error("load_dataset: sample '" + e.id + "': mask is not binary {0,255}");

    if (opts.anisotropic && opts.aniso_iters > 0)
        raw = anisotropic_diffusion(raw, opts.aniso_iters, opts.aniso_kappa, opts.aniso_gamma);
    p.image = normalize_image(raw, opts.lo_percentile, opts.hi_percentile);
    p.mask = (mask_raw / 255.0f).eval();
    return p;
}

} // namespace

Dataset load_dataset(const std::string& dir, const LoadOptions& opts) {
    const fs::path root(dir);
    const fs::path man_path = root / "manifest.json";
    std::ifstream in(man_path, std::ios::binary);
    if (!in) throw std::runtime_error("load_dataset: missing manifest " + man_path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& ex) {
        throw std::runtime_error("load_dataset: corrupt manifest: " + std::string(ex.what()));
    }
    const int version = j.at("format_version").get<int>();
    if (version != kDatasetFormatVersion)
        throw std::runtime_error("load_dataset: unsupported format_version " + std::to_string(version));

    Dataset ds;
    ds.manifest.format_version = version;
    ds.manifest.config = config_from_json(j.at("generator"));
    ds.manifest.train = entries_from_json(j.at("splits").at("train"));
    ds.manifest.val = entries_from_json(j.at("splits").at("val"));
    ds.manifest.test = entries_from_json(j.at("splits").at("test"));

    auto check_unique = [](const std::vector<ManifestEntry>& v) {
        std::vector<std::string> ids;
        for (const auto& e : v) ids.push_back(e.id);
        std::sort(ids.begin(), ids.end());
        if (std::adjacent_find(ids.begin(), ids.end()) != ids.end())
            throw std::runtime_error("load_dataset: duplicate sample ids in manifest");
    };
    check_unique(ds.manifest.train);
    check_unique(ds.manifest.val);
    check_unique(ds.manifest.test);

    for (const auto& e : ds.manifest.train) ds.train.push_back(load_pair(root, e, opts));
    for (const auto& e : ds.manifest.val) ds.val.push_back(load_pair(root, e, opts));
    for (const auto& e : ds.manifest.test) ds.test.push_back(load_pair(root, e, opts));
    return ds;
}

std::vector<Batch> iterate_batches(const Dataset& ds, const std::string& split, int batch_size,
                                   std::uint64_t epoch_seed) {
    if (batch_size < 1) throw std::invalid_argument("iterate_batches: batch_size must be >= 1");
    const auto& samples = ds.split(split);
    if (samples.empty()) throw std::invalid_argument("iterate_batches: split '" + split + "' is empty");

    std::vector<std::size_t> order(samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(epoch_seed);
    for (std::size_t i = order.size() - 1; i > 0; --i) // Fisher-Yates, engine-stable
        std::swap(order[i], order[rng.uniform_int(0, static_cast<std::int64_t>(i))]);

    const auto h = samples[0].image.rows(), w = samples[0].image.cols();
    std::vector<Batch> batches;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch_size)) {
        const auto count = std::min<std::size_t>(static_cast<std::size_t>(batch_size), order.size() - start);
        Batch b;
        b.images.resize(static_cast<Eigen::Index>(count), 1, h, w);
        b.masks_encoded.resize(static_cast<Eigen::Index>(count), 1, h, w);
        b.masks_label.resize(static_cast<Eigen::Index>(count), 1, h, w);
        for (std::size_t i = 0; i < count; ++i) {
            const SamplePair& s = samples[order[start + i]];
            b.ids.push_back(s.id);
            Eigen::Map<const Eigen::Array<float, Eigen::Dynamic, 1>> img(s.image.data(), h * w);
            Eigen::Map<const Eigen::Array<float, Eigen::Dynamic, 1>> msk(s.mask.data(), h * w);
            b.images.plane(static_cast<Eigen::Index>(i), 0) = img;
            b.masks_label.plane(static_cast<Eigen::Index>(i), 0) = msk;
            b.masks_encoded.plane(static_cast<Eigen::Index>(i), 0) = msk * 2.0f - 1.0f;
        }
        batches.push_back(std::move(b));
    }
    return batches;
}

} // namespace cts
