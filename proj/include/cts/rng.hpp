#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>

namespace cts {

// Deterministic random stream. All distributions are implemented here rather
// than via std:: distributions so that draws are reproducible across standard
// library implementations and the full state round-trips through serialize().
class Rng {
public:
    Rng() : Rng(0) {}
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    // splitmix64 mix step; used to derive independent stream seeds.
    static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream) {
        std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint64_t next_u64() { return eng_(); }

    // uniform on [0, 1)
    double uniform() {
        ++uniform_draws_;
        return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
    }

    // uniform integer on [lo, hi] inclusive
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        if (lo > hi) throw std::invalid_argument("Rng::uniform_int: lo > hi");
        const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
        return lo + static_cast<std::int64_t>(eng_() % span);
    }

    // standard normal via Box-Muller; draws two uniforms per value and keeps
    // no spare, so the stream state is exactly the engine state
    double normal() {
        ++normal_draws_;
        const double u1 = 1.0 - static_cast<double>(eng_() >> 11) * 0x1.0p-53;
        const double u2 = static_cast<double>(eng_() >> 11) * 0x1.0p-53;
        constexpr double two_pi = 6.283185307179586476925286766559;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
    }

    // draw-count instrumentation (used by tests to verify shared-noise contracts)
    std::uint64_t normal_draws() const { return normal_draws_; }
    std::uint64_t uniform_draws() const { return uniform_draws_; }

    std::string serialize() const {
        std::ostringstream os;
        os << eng_ << ' ' << normal_draws_ << ' ' << uniform_draws_;
        return os.str();
    }

    void restore(const std::string& s) {
        std::istringstream is(s);
        is >> eng_ >> normal_draws_ >> uniform_draws_;
        if (is.fail()) throw std::runtime_error("Rng::restore: malformed state string");
    }

private:
    std::mt19937_64 eng_;
    std::uint64_t normal_draws_ = 0;
    std::uint64_t uniform_draws_ = 0;
};

} // namespace cts
