#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "cts/nn.hpp"
#include "cts/schedules.hpp"

namespace cts {

struct ArchitectureConfig {
    int depth = 4;                              // number of resolution levels
    int base_width = 16;                        // channels at full resolution
    std::vector<int> channel_mult = {1, 2, 4, 8};
    int time_dim = 64;                          // sinusoidal embedding size
    int attn_reduction = 4;                     // channel-attention reduction ratio

    void validate() const {
        if (depth < 2) throw std::invalid_argument("ArchitectureConfig: depth must be >= 2");
        if (base_width < 1) throw std::invalid_argument("ArchitectureConfig: base_width must be >= 1");
        if (static_cast<int>(channel_mult.size()) < depth)
            throw std::invalid_argument("ArchitectureConfig: channel_mult shorter than depth");
        for (int m : channel_mult)
            if (m < 1) throw std::invalid_argument("ArchitectureConfig: channel multipliers must be >= 1");
        if (time_dim < 4 || time_dim % 2 != 0)
            throw std::invalid_argument("ArchitectureConfig: time_dim must be even and >= 4");
        if (attn_reduction < 1) throw std::invalid_argument("ArchitectureConfig: attn_reduction must be >= 1");
    }

    Eigen::Index channels(int level) const { // level 1..depth
        return static_cast<Eigen::Index>(base_width) * channel_mult[static_cast<std::size_t>(level - 1)];
    }
};

// Multi-scale supervision signals (level i at half the resolution of level
// i-1) plus the auxiliary full-resolution segmentation logits.
template <typename S>
struct ConditionFeaturePyramid {
    std::vector<Tensor<S>> levels; // levels[i] is pyramid level i+1
    Tensor<S> aux_logits;          // (N, 1, H, W)
};

// Sinusoidal embedding of log(t): geometric frequencies from 1 to 32 over
// u = log(t)/4. The base frequency keeps the embedding injective across the
// noise range; the cap keeps it smooth between adjacent discretization
// levels so consistency targets transfer along the schedule.
template <typename S>
Tensor<S> time_features(double t, int dim) {
    if (dim < 4 || dim % 2 != 0) throw std::invalid_argument("time_features: dim must be even and >= 4");
    if (!(t > 0.0)) throw std::invalid_argument("time_features: t must be > 0");
    const int half = dim / 2;
    Tensor<S> out(1, dim, 1, 1);
    const double u = std::log(t) / 4.0;
    for (int j = 0; j < half; ++j) {
        const double freq = std::exp(static_cast<double>(j) * std::log(32.0) / static_cast<double>(half - 1));
        out.v[j] = static_cast<S>(std::sin(freq * u));
        out.v[half + j] = static_cast<S>(std::cos(freq * u));
    }
    return out;
}

namespace detail {
template <typename S>
void require_spatial(const Tensor<S>& x, int depth, const char* what) {
    const Eigen::Index div = Eigen::Index(1) << (depth - 1);
    if (x.h % div != 0 || x.w % div != 0)
        throw std::invalid_argument(std::string(what) + ": spatial size must be divisible by 2^(depth-1)");
}
} // namespace detail

// ---------------------------------------------------------------------------
// Condition encoder h: a UNet over the image x^d whose decoder feature maps
// are the multi-scale supervision signals and whose 1x1 head emits the
// auxiliary prediction y_hat.
// ---------------------------------------------------------------------------
template <typename S>
class ConditionEncoder {
public:
    explicit ConditionEncoder(const ArchitectureConfig& arch) : arch_(arch) {
        arch_.validate();
        const int L = arch_.depth;
        stem_ = nn::Conv2d<S>(1, arch_.channels(1), 3);
        down_.reserve(static_cast<std::size_t>(L));
        down_.emplace_back(arch_.channels(1), arch_.channels(1), 0);
        for (int i = 2; i <= L; ++i) down_.emplace_back(arch_.channels(i - 1), arch_.channels(i), 0);
        mid_ = nn::ResBlock<S>(arch_.channels(L), arch_.channels(L), 0);
        for (int i = L - 1; i >= 1; --i) {
            upconv_.emplace_back(arch_.channels(i + 1), arch_.channels(i), 3);
            up_.emplace_back(2 * arch_.channels(i), arch_.channels(i), 0);
        }
        head_ = nn::Conv2d<S>(arch_.channels(1), 1, 1);
        pools_.resize(static_cast<std::size_t>(L - 1));
        upsamples_.resize(static_cast<std::size_t>(L - 1));
    }

    void init(Rng& rng) {
        stem_.init(rng);
        for (auto& b : down_) b.init(rng);
        mid_.init(rng);
        for (std::size_t i = 0; i < up_.size(); ++i) {
            upconv_[i].init(rng);
            up_[i].init(rng);
        }
        head_.init(rng);
    }

    void register_params(const std::string& prefix, nn::ParamList<S>& out) {
        stem_.register_params(prefix + ".stem", out);
        for (std::size_t i = 0; i < down_.size(); ++i)
            down_[i].register_params(prefix + ".down" + std::to_string(i + 1), out);
        mid_.register_params(prefix + ".mid", out);
        for (std::size_t i = 0; i < up_.size(); ++i) {
            const int level = arch_.depth - 1 - static_cast<int>(i);
            upconv_[i].register_params(prefix + ".upconv" + std::to_string(level), out);
            up_[i].register_params(prefix + ".up" + std::to_string(level), out);
        }
        head_.register_params(prefix + ".aux_head", out);
    }

    ConditionFeaturePyramid<S> forward(const Tensor<S>& x_d, bool cache) {
        detail::require_spatial(x_d, arch_.depth, "encoder_forward");
        const int L = arch_.depth;
        skips_.assign(static_cast<std::size_t>(L), Tensor<S>());
        Tensor<S> cur = down_[0].forward(stem_.forward(x_d, cache), nullptr, cache);
        skips_[0] = cur;
        for (int i = 2; i <= L; ++i) {
            cur = down_[static_cast<std::size_t>(i - 1)].forward(
                pools_[static_cast<std::size_t>(i - 2)].forward(cur), nullptr, cache);
            skips_[static_cast<std::size_t>(i - 1)] = cur;
        }
        ConditionFeaturePyramid<S> pyr;
        pyr.levels.assign(static_cast<std::size_t>(L), Tensor<S>());
        cur = mid_.forward(cur, nullptr, cache);
        pyr.levels[static_cast<std::size_t>(L - 1)] = cur;
        for (std::size_t j = 0; j < up_.size(); ++j) { // level = L-1-j
            const int level = L - 1 - static_cast<int>(j);
            Tensor<S> uu = upconv_[j].forward(upsamples_[j].forward(cur), cache);
            Tensor<S> cat = nn::concat_channels(uu, skips_[static_cast<std::size_t>(level - 1)]);
            cur = up_[j].forward(cat, nullptr, cache);
            pyr.levels[static_cast<std::size_t>(level - 1)] = cur;
        }
        pyr.aux_logits = head_.forward(cur, cache);
        return pyr;
    }

    void backward(const std::vector<Tensor<S>>& d_levels, const Tensor<S>& d_aux) {
        const int L = arch_.depth;
        std::vector<Tensor<S>> d_skip(static_cast<std::size_t>(L));
        Tensor<S> d_cur = head_.backward(d_aux);
        d_cur.v += d_levels[0].v;
        // decoder, shallow to deep
        for (int level = 1; level <= L - 1; ++level) {
            const std::size_t j = static_cast<std::size_t>(L - 1 - level);
            Tensor<S> d_cat = up_[j].backward(d_cur, nullptr);
            auto [d_uu, d_sk] = nn::split_channels(d_cat, arch_.channels(level));
            d_skip[static_cast<std::size_t>(level - 1)] = std::move(d_sk);
            d_cur = upsamples_[j].backward(upconv_[j].backward(d_uu));
            if (level + 1 <= L - 1) d_cur.v += d_levels[static_cast<std::size_t>(level)].v;
        }
        d_cur.v += d_levels[static_cast<std::size_t>(L - 1)].v;
        d_cur = mid_.backward(d_cur, nullptr);
        // down path, deep to shallow
        for (int i = L; i >= 2; --i) {
            Tensor<S> d_pool = down_[static_cast<std::size_t>(i - 1)].backward(d_cur, nullptr);
            d_cur = pools_[static_cast<std::size_t>(i - 2)].backward(d_pool);
            d_cur.v += d_skip[static_cast<std::size_t>(i - 2)].v;
        }
        d_cur = down_[0].backward(d_cur, nullptr);
        stem_.backward(d_cur, false);
    }

    const ArchitectureConfig& arch() const { return arch_; }

private:
    ArchitectureConfig arch_;
    nn::Conv2d<S> stem_, head_;
    std::vector<nn::ResBlock<S>> down_, up_;
    std::vector<nn::Conv2d<S>> upconv_;
    nn::ResBlock<S> mid_;
    std::vector<nn::AvgPool2<S>> pools_;
    std::vector<nn::Upsample2<S>> upsamples_;
    std::vector<Tensor<S>> skips_;
};

// ---------------------------------------------------------------------------
// Denoiser g: time-conditioned UNet over the preconditioned noisy mask; at
// each decoder level the matching supervision signal is fused in through a
// channel-attention gate before the block.
// ---------------------------------------------------------------------------
template <typename S>
class Denoiser {
public:
    explicit Denoiser(const ArchitectureConfig& arch) : arch_(arch) {
        arch_.validate();
        const int L = arch_.depth;
        const int td = arch_.time_dim;
        tfc1_ = nn::Linear<S>(td, td);
        tfc2_ = nn::Linear<S>(td, td);
        stem_ = nn::Conv2d<S>(1, arch_.channels(1), 3);
        down_.emplace_back(arch_.channels(1), arch_.channels(1), td);
        for (int i = 2; i <= L; ++i) down_.emplace_back(arch_.channels(i - 1), arch_.channels(i), td);
        gates_.reserve(static_cast<std::size_t>(L));
        for (int i = 1; i <= L; ++i) gates_.emplace_back(arch_.channels(i), arch_.attn_reduction);
        mid_ = nn::ResBlock<S>(arch_.channels(L), arch_.channels(L), td);
        for (int i = L - 1; i >= 1; --i) {
            upconv_.emplace_back(arch_.channels(i + 1), arch_.channels(i), 3);
            up_.emplace_back(2 * arch_.channels(i), arch_.channels(i), td);
        }
        head_gn_ = nn::GroupNorm<S>(arch_.channels(1));
        head_ = nn::Conv2d<S>(arch_.channels(1), 1, 3);
        pools_.resize(static_cast<std::size_t>(L - 1));
        upsamples_.resize(static_cast<std::size_t>(L - 1));
    }

    void init(Rng& rng) {
        tfc1_.init(rng);
        tfc2_.init(rng);
        stem_.init(rng);
        for (auto& b : down_) b.init(rng);
        for (auto& g : gates_) g.init(rng);
        mid_.init(rng);
        for (std::size_t i = 0; i < up_.size(); ++i) {
            upconv_[i].init(rng);
            up_[i].init(rng);
        }
        head_gn_.init(rng);
        head_.init(rng);
        // zero-initialized output layer: the untrained consistency function is
        // dominated by the c_skip path
        head_.weight().set_zero();
        head_.bias().set_zero();
    }

    void register_params(const std::string& prefix, nn::ParamList<S>& out) {
        tfc1_.register_params(prefix + ".time1", out);
        tfc2_.register_params(prefix + ".time2", out);
        stem_.register_params(prefix + ".stem", out);
        for (std::size_t i = 0; i < down_.size(); ++i)
            down_[i].register_params(prefix + ".down" + std::to_string(i + 1), out);
        for (std::size_t i = 0; i < gates_.size(); ++i)
            gates_[i].register_params(prefix + ".gate" + std::to_string(i + 1), out);
        mid_.register_params(prefix + ".mid", out);
        for (std::size_t i = 0; i < up_.size(); ++i) {
            const int level = arch_.depth - 1 - static_cast<int>(i);
            upconv_[i].register_params(prefix + ".upconv" + std::to_string(level), out);
            up_[i].register_params(prefix + ".up" + std::to_string(level), out);
        }
        head_gn_.register_params(prefix + ".head_gn", out);
        head_.register_params(prefix + ".head", out);
    }

    void check_pyramid(const Tensor<S>& x_in, const ConditionFeaturePyramid<S>& pyr) const {
        const int L = arch_.depth;
        if (static_cast<int>(pyr.levels.size()) != L)
            throw std::invalid_argument("denoiser_forward: pyramid depth mismatch");
        for (int i = 1; i <= L; ++i) {
            const auto& f = pyr.levels[static_cast<std::size_t>(i - 1)];
            const Eigen::Index div = Eigen::Index(1) << (i - 1);
            if (f.n != x_in.n || f.c != arch_.channels(i) || f.h != x_in.h / div || f.w != x_in.w / div)
                throw std::invalid_argument("denoiser_forward: pyramid level " + std::to_string(i) +
                                            " incompatible with input");
        }
    }

    Tensor<S> forward(const Tensor<S>& x_in, const ConditionFeaturePyramid<S>& pyr, double t, bool cache) {
        detail::require_spatial(x_in, arch_.depth, "denoiser_forward");
        check_pyramid(x_in, pyr);
        ++eval_count_;
        const int L = arch_.depth;

        Tensor<S> feat = time_features<S>(t, arch_.time_dim);
        temb_act_ = tact2_.forward(tfc2_.forward(tact1_.forward(tfc1_.forward(feat, cache), cache), cache), cache);

        skips_.assign(static_cast<std::size_t>(L), Tensor<S>());
        Tensor<S> cur = down_[0].forward(stem_.forward(x_in, cache), &temb_act_, cache);
        skips_[0] = cur;
        for (int i = 2; i <= L; ++i) {
            cur = down_[static_cast<std::size_t>(i - 1)].forward(
                pools_[static_cast<std::size_t>(i - 2)].forward(cur), &temb_act_, cache);
            skips_[static_cast<std::size_t>(i - 1)] = cur;
        }
        cur = gates_[static_cast<std::size_t>(L - 1)].forward(cur, pyr.levels[static_cast<std::size_t>(L - 1)], cache);
        cur = mid_.forward(cur, &temb_act_, cache);
        for (std::size_t j = 0; j < up_.size(); ++j) {
            const int level = L - 1 - static_cast<int>(j);
            Tensor<S> uu = upconv_[j].forward(upsamples_[j].forward(cur), cache);
            Tensor<S> fu =
                gates_[static_cast<std::size_t>(level - 1)].forward(uu, pyr.levels[static_cast<std::size_t>(level - 1)], cache);
            Tensor<S> cat = nn::concat_channels(fu, skips_[static_cast<std::size_t>(level - 1)]);
            cur = up_[j].forward(cat, &temb_act_, cache);
        }
        return head_.forward(head_act_.forward(head_gn_.forward(cur, cache), cache), cache);
    }

    // Returns the gradient w.r.t. each pyramid level.
    std::vector<Tensor<S>> backward(const Tensor<S>& d_out) {
        const int L = arch_.depth;
        std::vector<Tensor<S>> d_levels(static_cast<std::size_t>(L));
        std::vector<Tensor<S>> d_skip(static_cast<std::size_t>(L));
        Tensor<S> d_temb = Tensor<S>::zeros(1, arch_.time_dim, 1, 1);

        Tensor<S> d_cur = head_gn_.backward(head_act_.backward(head_.backward(d_out)));
        for (int level = 1; level <= L - 1; ++level) {
            const std::size_t j = static_cast<std::size_t>(L - 1 - level);
            Tensor<S> d_cat = up_[j].backward(d_cur, &d_temb);
            auto [d_fu, d_sk] = nn::split_channels(d_cat, arch_.channels(level));
            d_skip[static_cast<std::size_t>(level - 1)] = std::move(d_sk);
            auto [d_uu, d_lvl] = gates_[static_cast<std::size_t>(level - 1)].backward(d_fu);
            d_levels[static_cast<std::size_t>(level - 1)] = std::move(d_lvl);
            d_cur = upsamples_[j].backward(upconv_[j].backward(d_uu));
        }
        d_cur = mid_.backward(d_cur, &d_temb);
        {
            auto [d_bottom, d_lvl] = gates_[static_cast<std::size_t>(L - 1)].backward(d_cur);
            d_levels[static_cast<std::size_t>(L - 1)] = std::move(d_lvl);
            d_cur = std::move(d_bottom);
        }
        for (int i = L; i >= 2; --i) {
            Tensor<S> d_pool = down_[static_cast<std::size_t>(i - 1)].backward(d_cur, &d_temb);
            d_cur = pools_[static_cast<std::size_t>(i - 2)].backward(d_pool);
            d_cur.v += d_skip[static_cast<std::size_t>(i - 2)].v;
        }
        d_cur = down_[0].backward(d_cur, &d_temb);
        stem_.backward(d_cur, false);
        tfc1_.backward(tact1_.backward(tfc2_.backward(tact2_.backward(d_temb))));
        return d_levels;
    }

    std::uint64_t eval_count() const { return eval_count_; }
    void reset_eval_count() { eval_count_ = 0; }
    nn::Conv2d<S>& head() { return head_; }
    nn::ChannelGate<S>& gate(int level) { return gates_[static_cast<std::size_t>(level - 1)]; }

private:
    ArchitectureConfig arch_;
    nn::Linear<S> tfc1_, tfc2_;
    nn::Silu<S> tact1_, tact2_, head_act_;
    nn::Conv2d<S> stem_, head_;
    nn::GroupNorm<S> head_gn_;
    std::vector<nn::ResBlock<S>> down_, up_;
    std::vector<nn::Conv2d<S>> upconv_;
    std::vector<nn::ChannelGate<S>> gates_;
    nn::ResBlock<S> mid_;
    std::vector<nn::AvgPool2<S>> pools_;
    std::vector<nn::Upsample2<S>> upsamples_;
    std::vector<Tensor<S>> skips_;
    Tensor<S> temb_act_;
    std::uint64_t eval_count_ = 0;
};

template <typename S>
struct ConsistencyOutput {
    Tensor<S> y;       // c_skip * x_n + c_out * g(...)
    Tensor<S> aux_logits;
};

// ---------------------------------------------------------------------------
// One complete parameter set: condition encoder h plus denoiser g, exposed as
// a flat, ordered, named parameter inventory. The trainer holds two congruent
// instances (online and EMA target).
// ---------------------------------------------------------------------------
template <typename S>
class CtsModel {
public:
    explicit CtsModel(const ArchitectureConfig& arch) : arch_(arch), enc_(arch), den_(arch) {
        enc_.register_params("enc", params_);
        den_.register_params("den", params_);
    }

    CtsModel(const CtsModel&) = delete;
    CtsModel& operator=(const CtsModel&) = delete;

    void init(std::uint64_t seed) {
        Rng rng(seed);
        enc_.init(rng);
        den_.init(rng);
        zero_grads();
    }

    const ArchitectureConfig& arch() const { return arch_; }
    ConditionEncoder<S>& encoder() { return enc_; }
    Denoiser<S>& denoiser() { return den_; }
    nn::ParamList<S>& params() { return params_; }
    const nn::ParamList<S>& params() const { return params_; }

    void zero_grads() {
        for (auto& p : params_) p.grad->set_zero();
    }

    void copy_params_from(const CtsModel& other) {
        for (std::size_t i = 0; i < params_.size(); ++i) params_[i].value->v = other.params_[i].value->v;
    }

    ConditionFeaturePyramid<S> encoder_forward(const Tensor<S>& x_d, bool cache) {
        return enc_.forward(x_d, cache);
    }

    Tensor<S> denoiser_forward(const Tensor<S>& x_in, const ConditionFeaturePyramid<S>& pyr, double t, bool cache) {
        return den_.forward(x_in, pyr, t, cache);
    }

    static ConditionFeaturePyramid<S> zero_pyramid_like(const ConditionFeaturePyramid<S>& pyr) {
        ConditionFeaturePyramid<S> z;
        z.levels.reserve(pyr.levels.size());
        for (const auto& f : pyr.levels) z.levels.push_back(Tensor<S>::zeros(f.n, f.c, f.h, f.w));
        z.aux_logits = pyr.aux_logits;
        return z;
    }

    // f(x_n, x_d, t) = c_skip(t) * x_n + c_out(t) * g(c_in(t) * x_n, h(x_d), t).
    // With use_pyramid = false the supervision signals are replaced by zero
    // feature maps (CTS-nM ablation); the auxiliary prediction is unaffected.
    ConsistencyOutput<S> consistency_forward(const Tensor<S>& x_n, const Tensor<S>& x_d, double t,
                                             const ScheduleConfig& cfg, bool cache, bool use_pyramid = true) {
        const BoundaryCoeffs bc = boundary_coeffs(t, cfg);
        last_c_out_ = bc.c_out;
        last_use_pyramid_ = use_pyramid;
        ConditionFeaturePyramid<S> pyr = enc_.forward(x_d, cache);
        Tensor<S> x_in(x_n.n, x_n.c, x_n.h, x_n.w);
        x_in.v = x_n.v * static_cast<S>(bc.c_in);
        const ConditionFeaturePyramid<S>* used = &pyr;
        ConditionFeaturePyramid<S> zeroed;
        if (!use_pyramid) {
            zeroed = zero_pyramid_like(pyr);
            used = &zeroed;
        }
        Tensor<S> g = den_.forward(x_in, *used, t, cache);
        ConsistencyOutput<S> out;
        out.y.resize(x_n.n, x_n.c, x_n.h, x_n.w);
        out.y.v = static_cast<S>(bc.c_skip) * x_n.v + static_cast<S>(bc.c_out) * g.v;
        out.aux_logits = std::move(pyr.aux_logits);
        return out;
    }

    // Backward for the most recent cached consistency_forward. d_y is the
    // gradient w.r.t. the consistency output, d_aux w.r.t. the auxiliary
    // logits. Gradients w.r.t. the inputs x_n/x_d are not propagated (they
    // are leaves in training).
    void consistency_backward(const Tensor<S>& d_y, const Tensor<S>& d_aux) {
        Tensor<S> d_g(d_y.n, d_y.c, d_y.h, d_y.w);
        d_g.v = d_y.v * static_cast<S>(last_c_out_);
        std::vector<Tensor<S>> d_levels = den_.backward(d_g);
        if (!last_use_pyramid_)
            for (auto& d : d_levels) d.set_zero();
        enc_.backward(d_levels, d_aux);
    }

private:
    ArchitectureConfig arch_;
    ConditionEncoder<S> enc_;
    Denoiser<S> den_;
    nn::ParamList<S> params_;
    double last_c_out_ = 0.0;
    bool last_use_pyramid_ = true;
};

} // namespace cts
