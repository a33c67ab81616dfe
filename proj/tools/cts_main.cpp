// cts: consistency-training segmentation toolkit.
// Subcommands: gen-data, train, eval, predict, schedule.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "cts/data.hpp"
#include "cts/png_io.hpp"
#include "cts/sampling.hpp"
#include "cts/schedules.hpp"
#include "cts/training.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

// Flat dotted-key configuration. Defaults < config file < CLI flags.
json default_flat_config() {
    return json{
        {"seed", 0},
        {"schedule.sigma_min", 0.002},
        {"schedule.sigma_max", 80.0},
        {"schedule.rho", 7.0},
        {"schedule.sigma_data", 0.5},
        {"schedule.s0", 2},
        {"schedule.s1", 150},
        {"schedule.mu0", 0.9},
        {"arch.depth", 4},
        {"arch.base_width", 16},
        {"arch.channel_mult", json::array({1, 2, 4, 8})},
        {"arch.time_dim", 64},
        {"arch.attn_reduction", 4},
        {"train.lr", 1e-4},
        {"train.weight_decay", 1e-4},
        {"train.adam_beta1", 0.9},
        {"train.adam_beta2", 0.999},
        {"train.adam_eps", 1e-8},
        {"train.grad_clip", 1.0},
        {"train.batch_size", 4},
        {"train.steps", 5000},
        {"train.alpha", 1.0},
        {"train.eval_interval", 100},
        {"train.checkpoint_interval", 1000},
        {"train.seed", nullptr},   // null -> master seed
        {"train.use_multiscale", true},
        {"train.use_fftp", false},
        {"data.image_size", 64},
        {"data.n_train", 200},
        {"data.n_val", 50},
        {"data.n_test", 50},
        {"data.shape_family", "mixed"},
        {"data.speckle_strength", 0.15},
        {"data.gaussian_noise_std", 0.05},
        {"data.bias_field_strength", 0.25},
        {"data.seed", nullptr},    // null -> master seed
        {"preproc.anisotropic", true},
        {"preproc.aniso_iters", 5},
        {"preproc.aniso_kappa", 30.0},
        {"preproc.aniso_gamma", 0.1},
        {"preproc.lo_percentile", 1.0},
        {"preproc.hi_percentile", 99.0},
        {"sampler.threshold", 0.5},
        {"sampler.use_target", true},
        {"sampler.seed", nullptr}, // null -> master seed
    };
}

json parse_override(const std::string& key, const std::string& text, const json& defaults) {
    json parsed;
    try {
        parsed = json::parse(text);
    } catch (const json::exception&) {
        return json(text); // bare string value
    }
    // keep strings typed as strings even when they parse as something else
    if (defaults.contains(key) && defaults.at(key).is_string() && !parsed.is_string()) return json(text);
    return parsed;
}

struct ResolvedConfig {
    json flat;

    cts::ScheduleConfig schedule(std::int64_t total_steps) const {
        cts::ScheduleConfig c;
        c.sigma_min = flat.at("schedule.sigma_min").get<double>();
        c.sigma_max = flat.at("schedule.sigma_max").get<double>();
        c.rho = flat.at("schedule.rho").get<double>();
        c.sigma_data = flat.at("schedule.sigma_data").get<double>();
        c.s0 = flat.at("schedule.s0").get<int>();
        c.s1 = flat.at("schedule.s1").get<int>();
        c.mu0 = flat.at("schedule.mu0").get<double>();
        c.total_train_steps = total_steps;
        return c;
    }

    cts::ArchitectureConfig arch() const {
        cts::ArchitectureConfig a;
        a.depth = flat.at("arch.depth").get<int>();
        a.base_width = flat.at("arch.base_width").get<int>();
        a.channel_mult = flat.at("arch.channel_mult").get<std::vector<int>>();
        a.time_dim = flat.at("arch.time_dim").get<int>();
        a.attn_reduction = flat.at("arch.attn_reduction").get<int>();
        return a;
    }

    std::uint64_t master_seed() const { return flat.at("seed").get<std::uint64_t>(); }

    std::uint64_t seed_or_master(const char* key) const {
        const auto& v = flat.at(key);
        return v.is_null() ? master_seed() : v.get<std::uint64_t>();
    }

    cts::TrainerConfig trainer() const {
        cts::TrainerConfig t;
        t.lr = flat.at("train.lr").get<double>();
        t.weight_decay = flat.at("train.weight_decay").get<double>();
        t.adam_beta1 = flat.at("train.adam_beta1").get<double>();
        t.adam_beta2 = flat.at("train.adam_beta2").get<double>();
        t.adam_eps = flat.at("train.adam_eps").get<double>();
        t.grad_clip = flat.at("train.grad_clip").get<double>();
        t.batch_size = flat.at("train.batch_size").get<int>();
        t.total_train_steps = flat.at("train.steps").get<std::int64_t>();
        t.alpha = flat.at("train.alpha").get<double>();
        t.eval_interval = flat.at("train.eval_interval").get<std::int64_t>();
        t.checkpoint_interval = flat.at("train.checkpoint_interval").get<std::int64_t>();
        t.seed = seed_or_master("train.seed");
        t.use_multiscale = flat.at("train.use_multiscale").get<bool>();
        t.use_fftp = flat.at("train.use_fftp").get<bool>();
        return t;
    }

    cts::SyntheticConfig synth() const {
        cts::SyntheticConfig s;
        s.image_size = flat.at("data.image_size").get<int>();
        s.n_train = flat.at("data.n_train").get<int>();
        s.n_val = flat.at("data.n_val").get<int>();
        s.n_test = flat.at("data.n_test").get<int>();
        s.shape_family = flat.at("data.shape_family").get<std::string>();
        s.speckle_strength = flat.at("data.speckle_strength").get<double>();
        s.gaussian_noise_std = flat.at("data.gaussian_noise_std").get<double>();
        s.bias_field_strength = flat.at("data.bias_field_strength").get<double>();
        s.seed = seed_or_master("data.seed");
        return s;
    }

    cts::LoadOptions load_options() const {
        cts::LoadOptions o;
        o.anisotropic = flat.at("preproc.anisotropic").get<bool>();
        o.aniso_iters = flat.at("preproc.aniso_iters").get<int>();
        o.aniso_kappa = flat.at("preproc.aniso_kappa").get<double>();
        o.aniso_gamma = flat.at("preproc.aniso_gamma").get<double>();
        o.lo_percentile = flat.at("preproc.lo_percentile").get<double>();
        o.hi_percentile = flat.at("preproc.hi_percentile").get<double>();
        return o;
    }

    cts::SamplerConfig sampler() const {
        cts::SamplerConfig s;
        s.threshold = flat.at("sampler.threshold").get<double>();
        s.seed = seed_or_master("sampler.seed");
        return s;
    }
};

std::string fnv1a_hex(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// Hash over the run-defining keys (sampler.* only affects reporting).
std::string config_hash(const json& flat) {
    json subset = json::object();
    for (const auto& [k, v] : flat.items())
        if (k.rfind("sampler.", 0) != 0) subset[k] = v;
    return fnv1a_hex(subset.dump());
}

struct CommonOpts {
    std::string config_path;
    std::map<std::string, std::string> overrides;
};

void add_config_options(CLI::App* sub, CommonOpts& opts) {
    sub->add_option("--config", opts.config_path, "JSON config file with flat dotted keys");
    const json defaults = default_flat_config();
    for (const auto& [key, value] : defaults.items()) {
        (void)value;
        sub->add_option_function<std::string>(
            "--" + key, [&opts, key = key](const std::string& text) { opts.overrides[key] = text; },
            "override config key " + key);
    }
}

ResolvedConfig resolve(const CommonOpts& opts) {
    json flat = default_flat_config();
    if (const char* env = std::getenv("CTS_SEED"); env && *env) flat["seed"] = std::strtoull(env, nullptr, 10);
    if (!opts.config_path.empty()) {
        std::ifstream in(opts.config_path, std::ios::binary);
        if (!in) throw std::runtime_error("cannot open config file " + opts.config_path);
        json file;
        try {
            in >> file;
        } catch (const json::exception& ex) {
            throw std::runtime_error("config parse error in " + opts.config_path + ": " + ex.what());
        }
        for (const auto& [k, v] : file.items()) {
            if (k == "config_hash") continue; // config.resolved.json is valid input
            if (!flat.contains(k)) throw std::runtime_error("unknown config key '" + k + "' in " + opts.config_path);
            flat[k] = v;
        }
    }
    for (const auto& [k, text] : opts.overrides) flat[k] = parse_override(k, text, default_flat_config());
    return ResolvedConfig{std::move(flat)};
}

void write_csv(const fs::path& path, const std::string& header, const std::vector<std::vector<double>>& rows) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << header << '\n';
    out.precision(17);
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
        out << '\n';
    }
}

int run_gen_data(const CommonOpts& common, const std::string& out_dir) {
    ResolvedConfig cfg = resolve(common);
    cts::DatasetManifest man = cts::generate_synthetic_dataset(cfg.synth(), out_dir);
    std::cout << (fs::path(out_dir) / "manifest.json").string() << '\n';
    std::cout << "train=" << man.train.size() << " val=" << man.val.size() << " test=" << man.test.size() << '\n';
    return 0;
}

int run_train(const CommonOpts& common, const std::string& data_dir, const std::string& run_dir) {
    ResolvedConfig cfg = resolve(common);
    const cts::TrainerConfig tcfg = cfg.trainer();
    const cts::ScheduleConfig scfg = cfg.schedule(tcfg.total_train_steps);
    const cts::ArchitectureConfig arch = cfg.arch();

    fs::create_directories(run_dir);
    const std::string hash = config_hash(cfg.flat);
    {
        json resolved = cfg.flat;
        resolved["config_hash"] = hash;
        std::ofstream out(fs::path(run_dir) / "config.resolved.json", std::ios::binary | std::ios::trunc);
        out << resolved.dump(2) << '\n';
        if (!out) throw std::runtime_error("cannot write config.resolved.json in " + run_dir);
    }

    cts::Dataset ds = cts::load_dataset(data_dir, cfg.load_options());
    cts::TrainerState st = cts::make_trainer(tcfg, scfg, arch);
    cts::TrainRunResult res = cts::train_loop(st, tcfg, scfg, ds, run_dir, hash);
    std::cout << "final checkpoint: " << res.final_checkpoint_dir << '\n';
    if (!res.evals.empty())
        std::cout << "last val dice=" << res.evals.back().dice << " iou=" << res.evals.back().iou << '\n';
    return 0;
}

int run_eval(const CommonOpts& common, const std::string& ckpt_dir, const std::string& data_dir,
             const std::string& split, const std::string& out_file, bool oracle) {
    ResolvedConfig cfg = resolve(common);
    const cts::TrainerConfig tcfg = cfg.trainer();
    const cts::ScheduleConfig scfg = cfg.schedule(tcfg.total_train_steps);
    cts::TrainerState st = cts::load_checkpoint(ckpt_dir, cfg.arch(), config_hash(cfg.flat));
    cts::Dataset ds = cts::load_dataset(data_dir, cfg.load_options());
    cts::CtsModel<float>& model = cfg.flat.at("sampler.use_target").get<bool>() ? *st.target : *st.online;
    cts::EvalReport rep = cts::evaluate(model, ds, split, scfg, cfg.sampler(), oracle);

    json per = json::array();
    for (const auto& m : rep.per_sample) per.push_back({{"id", m.id}, {"dice", m.dice}, {"iou", m.iou}});
    json j{{"split", split}, {"mean_dice", rep.mean_dice}, {"mean_iou", rep.mean_iou}, {"per_sample", per}};
    std::cout << j.dump(2) << '\n';
    if (!out_file.empty()) {
        std::ofstream out(out_file, std::ios::binary | std::ios::trunc);
        out << j.dump(2) << '\n';
        if (!out) throw std::runtime_error("cannot write " + out_file);
    }
    return 0;
}

int run_predict(const CommonOpts& common, const std::string& ckpt_dir, const std::string& data_dir,
                const std::string& split, const std::vector<std::string>& images, const std::string& out_dir,
                int steps) {
    ResolvedConfig cfg = resolve(common);
    const cts::TrainerConfig tcfg = cfg.trainer();
    const cts::ScheduleConfig scfg = cfg.schedule(tcfg.total_train_steps);
    cts::TrainerState st = cts::load_checkpoint(ckpt_dir, cfg.arch(), config_hash(cfg.flat));
    cts::CtsModel<float>& model = cfg.flat.at("sampler.use_target").get<bool>() ? *st.target : *st.online;
    const cts::SamplerConfig sampler = cfg.sampler();

    if (!images.empty()) {
        fs::create_directories(out_dir);
        const cts::LoadOptions lo = cfg.load_options();
        std::vector<double> levels;
        if (steps > 1) {
            levels = cts::karras_sigmas(steps, scfg);
            std::reverse(levels.begin(), levels.end());
        }
        for (std::size_t i = 0; i < images.size(); ++i) {
            cts::ImageGrid raw = cts::read_png_gray(images[i]);
            if (lo.anisotropic && lo.aniso_iters > 0)
                raw = cts::anisotropic_diffusion(raw, lo.aniso_iters, lo.aniso_kappa, lo.aniso_gamma);
            cts::ImageGrid norm = cts::normalize_image(raw, lo.lo_percentile, lo.hi_percentile);
            cts::SamplerConfig per = sampler;
            per.seed = cts::Rng::derive(sampler.seed, i);
            cts::SegmentationResult res = steps > 1 ? cts::segment_multistep(model, norm, levels, scfg, per)
                                                    : cts::segment_single_step(model, norm, scfg, per);
            const std::string stem = fs::path(images[i]).stem().string();
            cts::write_png_gray8((fs::path(out_dir) / (stem + "_mask.png")).string(), (res.mask * 255.0f).eval());
            cts::write_overlay_png((fs::path(out_dir) / (stem + "_overlay.png")).string(), norm, res.mask);
            std::cout << stem << "_mask.png " << stem << "_overlay.png\n";
        }
        return 0;
    }

    cts::Dataset ds = cts::load_dataset(data_dir, cfg.load_options());
    cts::EvalReport rep = cts::predict_batch(model, ds, split, scfg, sampler, out_dir, steps);
    std::cout << "mean_dice=" << rep.mean_dice << " mean_iou=" << rep.mean_iou << '\n';
    std::cout << "outputs in " << out_dir << '\n';
    return 0;
}

int run_schedule(const CommonOpts& common, const std::string& out_dir, int n_steps) {
    ResolvedConfig cfg = resolve(common);
    const cts::TrainerConfig tcfg = cfg.trainer();
    const cts::ScheduleConfig scfg = cfg.schedule(tcfg.total_train_steps);
    fs::create_directories(out_dir);

    const std::vector<double> sigmas = cts::karras_sigmas(n_steps, scfg);
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < sigmas.size(); ++i)
        rows.push_back({static_cast<double>(i + 1), sigmas[i]});
    write_csv(fs::path(out_dir) / "sigmas.csv", "i,t_i", rows);

    rows.clear();
    const std::int64_t k_stride = std::max<std::int64_t>(1, scfg.total_train_steps / 500);
    for (std::int64_t k = 0; k <= scfg.total_train_steps; k += k_stride)
        rows.push_back({static_cast<double>(k), static_cast<double>(cts::step_schedule(k, scfg))});
    write_csv(fs::path(out_dir) / "step_schedule.csv", "k,N_k", rows);

    rows.clear();
    for (std::int64_t k = 0; k <= scfg.total_train_steps; k += k_stride)
        rows.push_back({static_cast<double>(k), cts::ema_decay(k, scfg)});
    write_csv(fs::path(out_dir) / "ema_decay.csv", "k,mu_k", rows);

    rows.clear();
    for (const double t : sigmas) {
        const cts::BoundaryCoeffs bc = cts::boundary_coeffs(t, scfg);
        rows.push_back({t, bc.c_skip, bc.c_out, bc.c_in});
    }
    write_csv(fs::path(out_dir) / "coeffs.csv", "t,c_skip,c_out,c_in", rows);

    std::cout << "wrote sigmas.csv step_schedule.csv ema_decay.csv coeffs.csv to " << out_dir << '\n';
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"consistency-training segmentation toolkit"};
    app.require_subcommand(1);

    CommonOpts gen_common, train_common, eval_common, predict_common, sched_common;
    std::string gen_out, train_data, train_out, eval_ckpt, eval_data, eval_split = "test", eval_out;
    std::string predict_ckpt, predict_data, predict_split = "test", predict_out = "predictions";
    std::vector<std::string> predict_images;
    bool eval_oracle = false;
    int predict_steps = 1, sched_nsteps = 151;
    std::string sched_out = "schedule_tables";

    CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic segmentation dataset");
    gen->add_option("--out", gen_out, "output dataset directory")->required();
    add_config_options(gen, gen_common);

    CLI::App* train = app.add_subcommand("train", "train the consistency segmentation model");
    train->add_option("--data", train_data, "dataset directory")->required();
    train->add_option("--out", train_out, "run directory (checkpoints + JSONL log)")->required();
    add_config_options(train, train_common);
    train->add_option_function<std::string>(
        "--steps", [&train_common](const std::string& v) { train_common.overrides["train.steps"] = v; },
        "shorthand for --train.steps");
    train->add_flag_callback(
        "--no-multiscale", [&train_common] { train_common.overrides["train.use_multiscale"] = "false"; },
        "disable the multi-scale supervision signal (CTS-nM)");

    CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset split");
    eval->add_option("--checkpoint", eval_ckpt, "checkpoint directory")->required();
    eval->add_option("--data", eval_data, "dataset directory")->required();
    eval->add_option("--split", eval_split, "train|val|test");
    eval->add_option("--out", eval_out, "also write the metrics JSON here");
    eval->add_flag("--oracle", eval_oracle, "score ground truth against itself (metrics sanity mode)");
    add_config_options(eval, eval_common);

    CLI::App* predict = app.add_subcommand("predict", "segment a dataset split or standalone PNG images");
    predict->add_option("--checkpoint", predict_ckpt, "checkpoint directory")->required();
    predict->add_option("--data", predict_data, "dataset directory");
    predict->add_option("--split", predict_split, "train|val|test");
    predict->add_option("--image", predict_images, "standalone grayscale PNG input(s)");
    predict->add_option("--out", predict_out, "output directory");
    predict->add_option("--steps", predict_steps, "sampling steps (1 = single-step)");
    add_config_options(predict, predict_common);

    CLI::App* sched = app.add_subcommand("schedule", "dump schedule tables as CSV");
    sched->add_option("--out", sched_out, "output directory");
    sched->add_option("--n-steps", sched_nsteps, "row count for the sigma table");
    add_config_options(sched, sched_common);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2; // usage errors -> 2
    }

    try {
        if (gen->parsed()) return run_gen_data(gen_common, gen_out);
        if (train->parsed()) return run_train(train_common, train_data, train_out);
        if (eval->parsed()) return run_eval(eval_common, eval_ckpt, eval_data, eval_split, eval_out, eval_oracle);
        if (predict->parsed())
            return run_predict(predict_common, predict_ckpt, predict_data, predict_split, predict_images,
                               predict_out, predict_steps);
        if (sched->parsed()) return run_schedule(sched_common, sched_out, sched_nsteps);
    } catch (const cts::NumericalAbort& e) {
        std::cerr << "numerical abort: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
