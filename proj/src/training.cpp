#include "cts/training.hpp"

#include "cts/sampling.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace cts {

TrainerState make_trainer(const TrainerConfig& tcfg, const ScheduleConfig& scfg, const ArchitectureConfig& arch) {
    tcfg.validate();
    scfg.validate();
    arch.validate();
    TrainerState st;
    st.online = std::make_unique<CtsModel<float>>(arch);
    st.target = std::make_unique<CtsModel<float>>(arch);
    st.online->init(tcfg.seed);
    st.target->copy_params_from(*st.online); // target starts as an exact copy
    st.opt.attach(st.online->params());
    st.rng = Rng(Rng::derive(tcfg.seed, 0x7261696eULL)); // training noise stream
    st.step = 0;
    return st;
}

LossBreakdown train_step(TrainerState& st, const Batch& batch, const TrainerConfig& tcfg,
                         const ScheduleConfig& scfg) {
    const auto t0 = std::chrono::steady_clock::now();
    if (st.step >= tcfg.total_train_steps)
        throw std::invalid_argument("train_step: step index k must be < total_train_steps");

    const int n_levels = step_schedule(st.step, scfg);
    const std::vector<double> sigmas = karras_sigmas(n_levels, scfg);
    const int n = static_cast<int>(st.rng.uniform_int(1, n_levels - 1));
    const double t_lo = sigmas[static_cast<std::size_t>(n - 1)];
    const double t_hi = sigmas[static_cast<std::size_t>(n)];

    // one shared noise draw perturbs the encoded mask at both levels
    Tensor<float> z(batch.images.n, 1, batch.images.h, batch.images.w);
    fill_normal(z, st.rng);
    Tensor<float> x_hi(z.n, 1, z.h, z.w), x_lo(z.n, 1, z.h, z.w);
    x_hi.v = batch.masks_encoded.v + static_cast<float>(t_hi) * z.v;
    x_lo.v = batch.masks_encoded.v + static_cast<float>(t_lo) * z.v;

    st.online->zero_grads();
    ConsistencyOutput<float> out_on =
        st.online->consistency_forward(x_hi, batch.images, t_hi, scfg, /*cache=*/true, tcfg.use_multiscale);
    // target branch: no caching, no backward -> stopgrad
    ConsistencyOutput<float> out_tg =
        st.target->consistency_forward(x_lo, batch.images, t_lo, scfg, /*cache=*/false, tcfg.use_multiscale);

    LossBreakdown lb;
    lb.step = st.step;
    lb.n = n;
    lb.N_k = n_levels;
    lb.mu_k = ema_decay(st.step, scfg);
    lb.l_ct = ct_loss(out_on.y, out_tg.y, 1.0);
    lb.l_s = seg_loss(out_on.aux_logits, batch.masks_label);
    if (!std::isfinite(lb.l_ct) || !std::isfinite(lb.l_s))
        throw NumericalAbort(st.step, "non-finite loss at step " + std::to_string(st.step) +
                                          " (l_ct=" + std::to_string(lb.l_ct) +
                                          ", l_s=" + std::to_string(lb.l_s) + ")");
    lb.l_total = total_loss(lb.l_ct, lb.l_s, tcfg.alpha);

    Tensor<float> d_y = ct_loss_grad(out_on.y, out_tg.y, 1.0);
    Tensor<float> d_aux = seg_loss_grad(out_on.aux_logits, batch.masks_label);
    d_aux.v *= static_cast<float>(tcfg.alpha);
    st.online->consistency_backward(d_y, d_aux);

    st.opt.step(st.online->params(), tcfg);
    ema_update(st.target->params(), st.online->params(), lb.mu_k);
    ++st.step;

    lb.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return lb;
}

namespace {

json loss_to_json(const LossBreakdown& lb) {
    return json{{"step", lb.step}, {"l_ct", lb.l_ct},   {"l_s", lb.l_s},        {"l_total", lb.l_total},
                {"n", lb.n},       {"N_k", lb.N_k},     {"mu_k", lb.mu_k},      {"wall_ms", lb.wall_ms}};
}

} // namespace

TrainRunResult train_loop(TrainerState& st, const TrainerConfig& tcfg, const ScheduleConfig& scfg,
                          const Dataset& ds, const std::string& run_dir, const std::string& config_hash) {
    tcfg.validate();
    fs::create_directories(run_dir);
    const bool fresh = st.step == 0;
    std::ofstream log(fs::path(run_dir) / "train_log.jsonl",
                      std::ios::binary | (fresh ? std::ios::trunc : std::ios::app));
    if (!log) throw std::runtime_error("train_loop: cannot open log in " + run_dir);

    TrainRunResult result;
    double last_dice = 0, last_iou = 0;

    std::vector<Batch> batches;
    std::int64_t batches_epoch = -1;
    while (st.step < tcfg.total_train_steps) {
        // batch order is a pure function of (seed, epoch); resume needs only k
        const auto probe = st.step;
        if (batches.empty()) {
            batches = iterate_batches(ds, "train", tcfg.batch_size, Rng::derive(tcfg.seed, 0xe70c + 0));
            batches_epoch = 0;
        }
        const std::int64_t steps_per_epoch = static_cast<std::int64_t>(batches.size());
        const std::int64_t epoch = probe / steps_per_epoch;
        const std::int64_t pos = probe % steps_per_epoch;
        if (epoch != batches_epoch) {
            batches = iterate_batches(ds, "train", tcfg.batch_size,
                                      Rng::derive(tcfg.seed, 0xe70c + static_cast<std::uint64_t>(epoch)));
            batches_epoch = epoch;
        }

        LossBreakdown lb = train_step(st, batches[static_cast<std::size_t>(pos)], tcfg, scfg);
        log << loss_to_json(lb).dump() << '\n';
        result.losses.push_back(lb);

        if (tcfg.eval_interval > 0 && st.step % tcfg.eval_interval == 0 && !ds.val.empty()) {
            SamplerConfig sc;
            sc.seed = Rng::derive(tcfg.seed, 0xea1ULL + static_cast<std::uint64_t>(st.step));
            EvalReport rep = evaluate(*st.target, ds, "val", scfg, sc);
            last_dice = rep.mean_dice;
            last_iou = rep.mean_iou;
            EvalRecord er{st.step, "val", rep.mean_dice, rep.mean_iou};
            result.evals.push_back(er);
            log << json{{"step", er.step}, {"split", er.split}, {"dice", er.dice}, {"iou", er.iou}}.dump() << '\n';
            log.flush();
        }
        if (tcfg.checkpoint_interval > 0 && st.step % tcfg.checkpoint_interval == 0 &&
            st.step < tcfg.total_train_steps) {
            char name[32];
            std::snprintf(name, sizeof name, "step_%06lld", static_cast<long long>(st.step));
            save_checkpoint(st, (fs::path(run_dir) / "checkpoints" / name).string(), config_hash, last_dice,
                            last_iou);
        }
    }

    const std::string final_dir = (fs::path(run_dir) / "checkpoints" / "final").string();
    save_checkpoint(st, final_dir, config_hash, last_dice, last_iou);
    result.final_checkpoint_dir = final_dir;
    return result;
}

} // namespace cts
