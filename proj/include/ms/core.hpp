#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <string_view>

namespace ms {

using complexd = std::complex<double>;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

inline constexpr std::string_view kToolkitVersion = "0.1.0";

struct Medium {
    double density = 0.0;      // kg/m^3
    double sound_speed = 0.0;  // m/s
};

// Air at room conditions.
inline constexpr Medium kAir{1.22, 343.0};

// Monochromatic context. Time convention e^{+j omega t}; a forward-running
// wave is e^{-j k0 z}. All modules share this convention.
struct WaveContext {
    double frequency = 0.0;   // Hz
    double wavenumber = 0.0;  // rad/m
    double wavelength = 0.0;  // m
};

inline WaveContext make_wave_context(double frequency, const Medium& medium = kAir) {
    if (!(frequency > 0.0) || !std::isfinite(frequency))
        throw std::domain_error("make_wave_context: frequency must be positive");
    if (!(medium.density > 0.0) || !(medium.sound_speed > 0.0))
        throw std::domain_error("make_wave_context: medium constants must be positive");
    return WaveContext{frequency, kTwoPi * frequency / medium.sound_speed,
                       medium.sound_speed / frequency};
}

// Wrap into (-pi, pi].
inline double wrap_phase(double x) {
    if (!std::isfinite(x)) throw std::domain_error("wrap_phase: non-finite input");
    double y = std::remainder(x, kTwoPi);  // [-pi, pi]
    if (y <= -kPi) y += kTwoPi;
    return y;
}

// Circular distance, in [0, pi].
inline double phase_distance(double a, double b) {
    return std::abs(wrap_phase(a - b));
}

// FNV-1a 64-bit, used for config and table content keys.
inline std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::string fnv1a64_hex(std::string_view bytes) {
    static const char* digits = "0123456789abcdef";
    std::uint64_t h = fnv1a64(bytes);
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<size_t>(i)] = digits[h & 0xf];
        h >>= 4;
    }
    return out;
}

}  // namespace ms
