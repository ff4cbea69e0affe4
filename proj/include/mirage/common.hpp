#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mirage {

enum class Label : std::uint8_t { Real = 0, Fake = 1 };

inline std::string_view label_name(Label l) { return l == Label::Real ? "Real" : "Fake"; }

inline Label label_from_int(int v) {
    if (v != 0 && v != 1) throw std::invalid_argument("unknown label id " + std::to_string(v));
    return static_cast<Label>(v);
}

enum class GeneratorId : std::uint8_t { Natural = 0, Checker = 1, Spectral = 2, Seam = 3 };

std::string_view generator_name(GeneratorId g);
GeneratorId parse_generator(std::string_view name);
GeneratorId generator_from_int(int v);

/// H x W x C pixel grid (row-major, channels interleaved), values in [0,1].
struct ImageSample {
    std::size_t side = 0;
    std::size_t channels = 3;
    std::vector<float> pixels;
    Label label = Label::Real;
    GeneratorId generator = GeneratorId::Natural;
    std::uint64_t seed = 0;

    float at(std::size_t y, std::size_t x, std::size_t c) const { return pixels[(y * side + x) * channels + c]; }
    float& at(std::size_t y, std::size_t x, std::size_t c) { return pixels[(y * side + x) * channels + c]; }
};

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) { return splitmix64(a ^ splitmix64(b)); }

/// Seeded pseudorandom source whose output is fixed across standard libraries.
/// std::mt19937_64 is bit-specified; the distributions are written out here
/// because the std:: ones are implementation-defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t bits() { return engine_(); }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n).
    std::size_t index(std::size_t n) { return static_cast<std::size_t>(uniform() * static_cast<double>(n)); }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        spare_ = r * std::sin(2.0 * M_PI * u2);
        has_spare_ = true;
        return r * std::cos(2.0 * M_PI * u2);
    }
    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    bool bernoulli(double p) { return uniform() < p; }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace mirage
