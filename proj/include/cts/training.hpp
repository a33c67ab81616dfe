#pragma once

#include "cts/data.hpp"
#include "cts/networks.hpp"
#include "cts/schedules.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace cts {

struct TrainerConfig {
    double lr = 1e-4;            // initial (and only) learning rate
    double weight_decay = 1e-4;  // decoupled
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double grad_clip = 1.0;      // global norm
    int batch_size = 4;          // desk default; the reference setting is 8
    std::int64_t total_train_steps = 5000;
    double alpha = 1.0;          // segmentation-loss weight
    std::int64_t eval_interval = 100;
    std::int64_t checkpoint_interval = 1000;
    std::uint64_t seed = 0;
    bool use_multiscale = true;  // CTS-M; false gives the CTS-nM ablation
    bool use_fftp = false;       // reserved, not implemented

    void validate() const {
        if (!(lr > 0)) throw std::invalid_argument("TrainerConfig: lr must be > 0");
        if (alpha < 0) throw std::invalid_argument("TrainerConfig: alpha must be >= 0");
        if (total_train_steps < 1) throw std::invalid_argument("TrainerConfig: total_train_steps must be >= 1");
        if (batch_size < 1) throw std::invalid_argument("TrainerConfig: batch_size must be >= 1");
        if (use_fftp) throw std::invalid_argument("TrainerConfig: use_fftp is reserved and not implemented");
    }
};

// Per-step record of the joint loss and the schedule values it was computed
// under. l_total = l_ct + alpha * l_s by construction.
struct LossBreakdown {
    std::int64_t step = 0;
    double l_ct = 0, l_s = 0, l_total = 0;
    int n = 0;     // sampled level index
    int N_k = 0;   // discretization steps at this k
    double mu_k = 0;
    double wall_ms = 0;
};

// raised when a non-finite loss aborts training (CLI exit code 3)
struct NumericalAbort : std::runtime_error {
    std::int64_t step;
    explicit NumericalAbort(std::int64_t step_, const std::string& what) : std::runtime_error(what), step(step_) {}
};

// --------------------------- losses ---------------------------------------

// lambda * mean((y_online - y_target)^2)
template <typename S>
double ct_loss(const Tensor<S>& y_online, const Tensor<S>& y_target, double lambda_weight = 1.0) {
    check_same_shape(y_online, y_target, "ct_loss");
    const double mse = (y_online.v - y_target.v).template cast<double>().square().mean();
    return lambda_weight * mse;
}

// mean((sigmoid(y_hat) - mask)^2) with mask in {0,1} label space
template <typename S>
double seg_loss(const Tensor<S>& y_hat_logits, const Tensor<S>& mask) {
    check_same_shape(y_hat_logits, mask, "seg_loss");
    if (!((mask.v == S(0)) || (mask.v == S(1))).all())
        throw std::invalid_argument("seg_loss: mask must be binary {0,1}");
    double acc = 0;
    for (Eigen::Index i = 0; i < mask.numel(); ++i) {
        const double p = 1.0 / (1.0 + std::exp(-static_cast<double>(y_hat_logits.v[i])));
        const double d = p - static_cast<double>(mask.v[i]);
        acc += d * d;
    }
    return acc / static_cast<double>(mask.numel());
}

inline double total_loss(double l_ct, double l_s, double alpha) {
    if (!std::isfinite(l_ct) || !std::isfinite(l_s))
        throw std::invalid_argument("total_loss: inputs must be finite");
    return l_ct + alpha * l_s;
}

// gradient companions used by train_step and the finite-difference tests
template <typename S>
Tensor<S> ct_loss_grad(const Tensor<S>& y_online, const Tensor<S>& y_target, double lambda_weight = 1.0) {
    check_same_shape(y_online, y_target, "ct_loss");
    Tensor<S> g(y_online.n, y_online.c, y_online.h, y_online.w);
    const S scale = static_cast<S>(2.0 * lambda_weight / static_cast<double>(y_online.numel()));
    g.v = scale * (y_online.v - y_target.v);
    return g;
}

template <typename S>
Tensor<S> seg_loss_grad(const Tensor<S>& y_hat_logits, const Tensor<S>& mask) {
    Tensor<S> g(mask.n, mask.c, mask.h, mask.w);
    const S scale = static_cast<S>(2.0 / static_cast<double>(mask.numel()));
    for (Eigen::Index i = 0; i < mask.numel(); ++i) {
        const S p = nn::sigmoid(y_hat_logits.v[i]);
        g.v[i] = scale * (p - mask.v[i]) * p * (S(1) - p);
    }
    return g;
}

// --------------------------- EMA / optimizer -------------------------------

// target <- mu * target + (1 - mu) * online, elementwise, no gradient
// linkage (the target list owns independent storage). The combination is
// accumulated in double so the stored value carries a single rounding.
template <typename S>
void ema_update(nn::ParamList<S>& target, const nn::ParamList<S>& online, double mu) {
    if (!(mu >= 0.0 && mu <= 1.0)) throw std::invalid_argument("ema_update: mu must be in [0,1]");
    if (target.size() != online.size()) throw std::invalid_argument("ema_update: parameter count mismatch");
    for (std::size_t i = 0; i < target.size(); ++i) {
        if (!target[i].value->same_shape(*online[i].value))
            throw std::invalid_argument("ema_update: shape mismatch at " + target[i].name);
        auto& t = target[i].value->v;
        const auto& o = online[i].value->v;
        t = (mu * t.template cast<double>() + (1.0 - mu) * o.template cast<double>()).template cast<S>();
    }
}

// AdamW with decoupled weight decay and global-norm gradient clipping.
template <typename S>
class AdamW {
public:
    void attach(const nn::ParamList<S>& params) {
        m_.clear();
        v_.clear();
        for (const auto& p : params) {
            m_.push_back(Tensor<S>::zeros(p.value->n, p.value->c, p.value->h, p.value->w));
            v_.push_back(Tensor<S>::zeros(p.value->n, p.value->c, p.value->h, p.value->w));
        }
        t_ = 0;
    }

    void step(nn::ParamList<S>& params, const TrainerConfig& cfg) {
        double sq_norm = 0;
        for (const auto& p : params) sq_norm += p.grad->v.template cast<double>().square().sum();
        const double norm = std::sqrt(sq_norm);
        const S clip = static_cast<S>(cfg.grad_clip > 0 && norm > cfg.grad_clip ? cfg.grad_clip / norm : 1.0);

        ++t_;
        const double bc1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(t_));
        const S b1 = static_cast<S>(cfg.adam_beta1), b2 = static_cast<S>(cfg.adam_beta2);
        for (std::size_t i = 0; i < params.size(); ++i) {
            auto& g = params[i].grad->v;
            auto& m = m_[i].v;
            auto& v = v_[i].v;
            auto& w = params[i].value->v;
            m = b1 * m + (S(1) - b1) * (clip * g);
            v = b2 * v + (S(1) - b2) * (clip * g).square();
            const S lr_hat = static_cast<S>(cfg.lr / bc1);
            const S denom_scale = static_cast<S>(1.0 / std::sqrt(bc2));
            w -= lr_hat * m / ((v.sqrt() * denom_scale) + static_cast<S>(cfg.adam_eps)) +
                 static_cast<S>(cfg.lr * cfg.weight_decay) * w;
        }
    }

    std::vector<Tensor<S>>& moments1() { return m_; }
    std::vector<Tensor<S>>& moments2() { return v_; }
    std::int64_t steps_taken() const { return t_; }
    void set_steps_taken(std::int64_t t) { t_ = t; }

private:
    std::vector<Tensor<S>> m_, v_;
    std::int64_t t_ = 0;
};

// --------------------------- trainer state ---------------------------------

struct TrainerState {
    std::int64_t step = 0;
    std::unique_ptr<CtsModel<float>> online; // gradient-trained parameters
    std::unique_ptr<CtsModel<float>> target; // EMA copy, receives no gradients
    AdamW<float> opt;
    Rng rng;
};

TrainerState make_trainer(const TrainerConfig& tcfg, const ScheduleConfig& scfg, const ArchitectureConfig& arch);

// One consistency-training step: shared noise draw, online/target passes at
// adjacent noise levels, joint loss, AdamW step on the online parameters
// only, EMA update of the target.
LossBreakdown train_step(TrainerState& st, const Batch& batch, const TrainerConfig& tcfg,
                         const ScheduleConfig& scfg);

struct EvalRecord {
    std::int64_t step;
    std::string split;
    double dice;
    double iou;
};

struct TrainRunResult {
    std::vector<LossBreakdown> losses;
    std::vector<EvalRecord> evals;
    std::string final_checkpoint_dir;
};

// Runs the configured number of steps with periodic single-step evaluation
// of the EMA target on the val split, JSONL logging and checkpointing under
// run_dir.
TrainRunResult train_loop(TrainerState& st, const TrainerConfig& tcfg, const ScheduleConfig& scfg,
                          const Dataset& ds, const std::string& run_dir, const std::string& config_hash);

// --------------------------- checkpointing ---------------------------------

inline constexpr int kCheckpointFormatVersion = 1;

void save_checkpoint(const TrainerState& st, const std::string& dir, const std::string& config_hash,
                     double last_val_dice, double last_val_iou);

// arch must match the checkpoint's parameter inventory; a config-hash or
// version mismatch is a load error.
TrainerState load_checkpoint(const std::string& dir, const ArchitectureConfig& arch,
                             const std::string& expected_config_hash = "");

std::string checkpoint_config_hash(const std::string& dir);

} // namespace cts
