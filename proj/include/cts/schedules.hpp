#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace cts {

// Noise-schedule, discretization-curriculum and EMA-decay constants. All
// schedule math is evaluated in double precision regardless of the network
// scalar type.
struct ScheduleConfig {
    double sigma_min = 0.002;        // smallest noise level
    double sigma_max = 80.0;         // largest noise level
    double rho = 7.0;                // schedule curvature exponent
    double sigma_data = 0.5;         // assumed data standard deviation
    int s0 = 2;                      // initial discretization step count
    int s1 = 150;                    // final discretization step count
    double mu0 = 0.9;                // base EMA decay rate
    std::int64_t total_train_steps = 100000;

    void validate() const {
        if (!(sigma_min > 0.0 && sigma_min < sigma_max))
            throw std::invalid_argument("ScheduleConfig: need 0 < sigma_min < sigma_max");
        if (!(rho >= 1.0)) throw std::invalid_argument("ScheduleConfig: need rho >= 1");
        if (!(sigma_data > 0.0)) throw std::invalid_argument("ScheduleConfig: need sigma_data > 0");
        if (!(s0 >= 2 && s0 <= s1)) throw std::invalid_argument("ScheduleConfig: need 2 <= s0 <= s1");
        if (!(mu0 > 0.0 && mu0 < 1.0)) throw std::invalid_argument("ScheduleConfig: need 0 < mu0 < 1");
        if (!(total_train_steps >= 1))
            throw std::invalid_argument("ScheduleConfig: need total_train_steps >= 1");
    }
};

struct BoundaryCoeffs {
    double c_skip;
    double c_out;
    double c_in;
};

// t_i = (eps^(1/rho) + (i-1)/(n-1) * (T^(1/rho) - eps^(1/rho)))^rho, i = 1..n.
// Strictly increasing with t_1 = sigma_min and t_n = sigma_max.
inline std::vector<double> karras_sigmas(int n_steps, const ScheduleConfig& cfg) {
    cfg.validate();
    if (n_steps < 2) throw std::invalid_argument("karras_sigmas: n_steps must be >= 2");
    const double inv_rho = 1.0 / cfg.rho;
    const double lo = std::pow(cfg.sigma_min, inv_rho);
    const double hi = std::pow(cfg.sigma_max, inv_rho);
    std::vector<double> sigmas(static_cast<std::size_t>(n_steps));
    for (int i = 0; i < n_steps; ++i) {
        const double frac = static_cast<double>(i) / static_cast<double>(n_steps - 1);
        sigmas[static_cast<std::size_t>(i)] = std::pow(lo + frac * (hi - lo), cfg.rho);
    }
    sigmas.front() = cfg.sigma_min; // endpoints exact by contract
    sigmas.back() = cfg.sigma_max;
    return sigmas;
}

// N(k) = ceil(sqrt(k/K * ((s1+1)^2 - s0^2) + s0^2) - 1) + 1; N(0) = s0, N(K) = s1+1.
inline int step_schedule(std::int64_t k, const ScheduleConfig& cfg) {
    cfg.validate();
    if (k < 0 || k > cfg.total_train_steps)
        throw std::invalid_argument("step_schedule: k out of [0, total_train_steps]");
    const double s0 = cfg.s0, s1 = cfg.s1;
    const double frac = static_cast<double>(k) / static_cast<double>(cfg.total_train_steps);
    const double radicand = frac * ((s1 + 1.0) * (s1 + 1.0) - s0 * s0) + s0 * s0;
    return static_cast<int>(std::ceil(std::sqrt(radicand) - 1.0)) + 1;
}

// mu(k) = exp(s0 * ln(mu0) / N(k)); equals mu0 when N(k) = s0, tends to 1 as N grows.
inline double ema_decay(std::int64_t k, const ScheduleConfig& cfg) {
    const int n = step_schedule(k, cfg);
    return std::exp(cfg.s0 * std::log(cfg.mu0) / static_cast<double>(n));
}

// Preconditioning coefficients enforcing f(x, sigma_min) = x structurally:
//   c_skip(t) = sigma_data^2 / ((t - eps)^2 + sigma_data^2)
//   c_out(t)  = sigma_data * (t - eps) / sqrt(sigma_data^2 + t^2)
//   c_in(t)   = 1 / sqrt(sigma_data^2 + t^2)
inline BoundaryCoeffs boundary_coeffs(double t, const ScheduleConfig& cfg) {
    cfg.validate();
    if (!(t >= cfg.sigma_min)) throw std::invalid_argument("boundary_coeffs: t must be >= sigma_min");
    const double sd2 = cfg.sigma_data * cfg.sigma_data;
    const double dt = t - cfg.sigma_min;
    BoundaryCoeffs c;
    c.c_skip = sd2 / (dt * dt + sd2);
    c.c_out = cfg.sigma_data * dt / std::sqrt(sd2 + t * t);
    c.c_in = 1.0 / std::sqrt(sd2 + t * t);
    return c;
}

} // namespace cts
