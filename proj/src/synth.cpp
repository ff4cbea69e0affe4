#include "mirage/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace mirage {

std::string_view generator_name(GeneratorId g) {
    switch (g) {
        case GeneratorId::Natural: return "NATURAL";
        case GeneratorId::Checker: return "F_CHECKER";
        case GeneratorId::Spectral: return "F_SPECTRAL";
        case GeneratorId::Seam: return "F_SEAM";
    }
    throw std::invalid_argument("unknown generator id " + std::to_string(static_cast<int>(g)));
}

GeneratorId parse_generator(std::string_view name) {
    for (int v = 0; v < 4; ++v) {
        const auto g = static_cast<GeneratorId>(v);
        if (generator_name(g) == name) return g;
    }
    throw std::invalid_argument("unknown generator family '" + std::string(name) + "'");
}

GeneratorId generator_from_int(int v) {
    if (v < 0 || v > 3) throw std::invalid_argument("unknown generator id " + std::to_string(v));
    return static_cast<GeneratorId>(v);
}

}  // namespace mirage

namespace mirage::synth {
namespace {

constexpr std::uint64_t kArtifactStream = 0xA271FAC7ULL;

float clamp01(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

std::size_t reflect(std::ptrdiff_t i, std::size_t n) {
    const auto len = static_cast<std::ptrdiff_t>(n);
    if (len == 1) return 0;
    const std::ptrdiff_t period = 2 * (len - 1);
    i %= period;
    if (i < 0) i += period;
    return static_cast<std::size_t>(i < len ? i : period - i);
}

// Separable convolution of one side x side plane in double precision.
std::vector<double> blur_plane(const std::vector<double>& plane, std::size_t side, const std::vector<double>& kernel) {
    const auto radius = static_cast<std::ptrdiff_t>(kernel.size() / 2);
    std::vector<double> tmp(plane.size()), out(plane.size());
    for (std::size_t y = 0; y < side; ++y)
        for (std::size_t x = 0; x < side; ++x) {
            double acc = 0;
            for (std::ptrdiff_t k = -radius; k <= radius; ++k)
                acc += kernel[static_cast<std::size_t>(k + radius)] *
                       plane[y * side + reflect(static_cast<std::ptrdiff_t>(x) + k, side)];
            tmp[y * side + x] = acc;
        }
    for (std::size_t y = 0; y < side; ++y)
        for (std::size_t x = 0; x < side; ++x) {
            double acc = 0;
            for (std::ptrdiff_t k = -radius; k <= radius; ++k)
                acc += kernel[static_cast<std::size_t>(k + radius)] *
                       tmp[reflect(static_cast<std::ptrdiff_t>(y) + k, side) * side + x];
            out[y * side + x] = acc;
        }
    return out;
}

std::vector<double> smooth_field(Rng& rng, std::size_t side, double sigma) {
    std::vector<double> plane(side * side);
    for (auto& v : plane) v = rng.normal();
    plane = blur_plane(plane, side, gaussian_kernel(sigma));
    double mean = 0, sq = 0;
    for (double v : plane) mean += v;
    mean /= static_cast<double>(plane.size());
    for (double v : plane) sq += (v - mean) * (v - mean);
    const double sd = std::sqrt(sq / static_cast<double>(plane.size()));
    for (auto& v : plane) v = (v - mean) / (sd > 0 ? sd : 1.0);
    return plane;
}

ImageSample natural(const GeneratorSpec& spec, std::uint64_t seed, std::size_t side, std::size_t channels) {
    Rng rng(seed);
    const double corr = rng.uniform(spec.correlation_min, spec.correlation_max);
    const double contrast = spec.contrast * rng.uniform(0.7, 1.3);
    const double brightness = 0.5 + rng.uniform(-0.1, 0.1);
    const auto luma = smooth_field(rng, side, corr);
    std::vector<std::vector<double>> chroma;
    for (std::size_t c = 0; c < channels; ++c) chroma.push_back(smooth_field(rng, side, corr));

    ImageSample s;
    s.side = side;
    s.channels = channels;
    s.seed = seed;
    s.pixels.resize(side * side * channels);
    for (std::size_t y = 0; y < side; ++y)
        for (std::size_t x = 0; x < side; ++x)
            for (std::size_t c = 0; c < channels; ++c) {
                const std::size_t p = y * side + x;
                const double v = brightness + contrast * (0.8 * luma[p] + 0.6 * chroma[c][p]) +
                                 spec.sensor_noise * rng.normal();
                s.at(y, x, c) = clamp01(v);
            }
    return s;
}

// Every artifact is additive with amplitude proportional to strength, so
// strength 0 leaves the natural draw untouched.
void add_checker(ImageSample& s, double strength) {
    const double amp = 0.12 * strength;
    for (std::size_t y = 0; y < s.side; ++y)
        for (std::size_t x = 0; x < s.side; ++x) {
            const double sign = (x + y) % 2 == 0 ? 1.0 : -1.0;
            for (std::size_t c = 0; c < s.channels; ++c) s.at(y, x, c) = clamp01(s.at(y, x, c) + amp * sign);
        }
}

void add_spectral(ImageSample& s, double strength) {
    if (strength == 0.0) return;
    s = gaussian_blur(s, 0.5 * strength);
    const double amp = 0.24 * strength;
    // Integer frequencies near radius side/4 in the discrete spectrum, fixed phases.
    const auto r = static_cast<int>(s.side / 4);
    const auto diag = static_cast<int>(std::lround(r / std::sqrt(2.0)));
    const int freqs[4][2] = {{r, 0}, {0, r}, {diag, diag}, {diag, -diag}};
    const double phases[4] = {M_PI, 1.5 * M_PI, 4.0 * M_PI / 3.0, 6.0 * M_PI / 5.0};
    const double side = static_cast<double>(s.side);
    for (std::size_t y = 0; y < s.side; ++y)
        for (std::size_t x = 0; x < s.side; ++x) {
            double ring = 0;
            for (int k = 0; k < 4; ++k)
                ring += std::cos(2.0 * M_PI * (freqs[k][0] * static_cast<double>(x) + freqs[k][1] * static_cast<double>(y)) / side +
                                 phases[k]);
            ring *= amp / 2.0;
            for (std::size_t c = 0; c < s.channels; ++c) s.at(y, x, c) = clamp01(s.at(y, x, c) + ring);
        }
}

void add_seams(ImageSample& s, double strength, Rng& rng) {
    constexpr std::size_t block = 8;
    const double offset_amp = 0.45 * strength;
    const double border = 0.24 * strength;
    const std::size_t blocks = (s.side + block - 1) / block;
    std::vector<double> offsets(blocks * blocks);
    for (auto& o : offsets) o = offset_amp * rng.uniform(-1.0, 1.0);
    for (std::size_t y = 0; y < s.side; ++y)
        for (std::size_t x = 0; x < s.side; ++x) {
            double d = offsets[(y / block) * blocks + x / block];
            const bool edge = y % block == 0 || y % block == block - 1 || x % block == 0 || x % block == block - 1;
            if (edge) d -= border;
            for (std::size_t c = 0; c < s.channels; ++c) s.at(y, x, c) = clamp01(s.at(y, x, c) + d);
        }
}

std::string fmt_number(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

}  // namespace

void GeneratorSpec::validate() const {
    if (!(strength >= 0.0 && strength <= 1.0))
        throw std::invalid_argument("generator strength must be in [0,1], got " + std::to_string(strength));
    if (family == GeneratorId::Natural && strength != 0.0)
        throw std::invalid_argument("NATURAL generator must have strength 0");
    if (!(correlation_min > 0.0 && correlation_max >= correlation_min))
        throw std::invalid_argument("generator correlation range must satisfy 0 < min <= max");
    if (!(contrast >= 0.0) || !(sensor_noise >= 0.0))
        throw std::invalid_argument("generator contrast and sensor noise must be non-negative");
    generator_name(family);
}

ImageSample generate_sample(const GeneratorSpec& spec, std::uint64_t seed, std::size_t index, std::size_t side,
                            std::size_t channels) {
    spec.validate();
    if (side == 0 || channels == 0) throw std::invalid_argument("image side and channels must be positive");
    const std::uint64_t sample_seed = mix_seed(seed, index);
    ImageSample s = natural(spec, sample_seed, side, channels);
    Rng artifact(mix_seed(sample_seed, kArtifactStream));
    switch (spec.family) {
        case GeneratorId::Natural: break;
        case GeneratorId::Checker: add_checker(s, spec.strength); break;
        case GeneratorId::Spectral: add_spectral(s, spec.strength); break;
        case GeneratorId::Seam: add_seams(s, spec.strength, artifact); break;
    }
    s.generator = spec.family;
    s.label = spec.family == GeneratorId::Natural ? Label::Real : Label::Fake;
    s.seed = sample_seed;
    return s;
}

std::vector<ImageSample> generate_dataset(const GeneratorSpec& spec, std::size_t count, std::uint64_t seed,
                                          std::size_t side, std::size_t channels) {
    if (count == 0) throw std::invalid_argument("generate_dataset: count must be >= 1");
    spec.validate();
    std::vector<ImageSample> out(count);
    const auto n = static_cast<std::ptrdiff_t>(count);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i)
        out[static_cast<std::size_t>(i)] = generate_sample(spec, seed, static_cast<std::size_t>(i), side, channels);
    return out;
}

void DegradationSpec::validate() const {
    switch (kind) {
        case DegradationKind::LowRes:
            if (!(parameter >= 1.0) || parameter != std::floor(parameter))
                throw std::invalid_argument("LOW_RES target side must be a positive integer");
            return;
        case DegradationKind::JpegLike:
            if (!(parameter >= 1.0 && parameter <= 100.0) || parameter != std::floor(parameter))
                throw std::invalid_argument("JPEG quality factor must be an integer in [1,100], got " +
                                            fmt_number(parameter));
            return;
        case DegradationKind::GaussBlur:
            if (!(parameter >= 0.0) || !std::isfinite(parameter))
                throw std::invalid_argument("blur sigma must be >= 0, got " + fmt_number(parameter));
            return;
    }
    throw std::invalid_argument("unknown degradation kind");
}

std::string DegradationSpec::label() const {
    switch (kind) {
        case DegradationKind::LowRes: return "LR(" + fmt_number(parameter) + ")";
        case DegradationKind::JpegLike: return "JPEG(QF=" + fmt_number(parameter) + ")";
        case DegradationKind::GaussBlur: return "Blur(s=" + fmt_number(parameter) + ")";
    }
    return "?";
}

DegradationSpec parse_degradation(const std::string& text) {
    auto number_between = [&](std::size_t open) {
        const auto close = text.find(')', open);
        if (close == std::string::npos || close != text.size() - 1)
            throw std::invalid_argument("malformed degradation '" + text + "'");
        const std::string body = text.substr(open, close - open);
        std::size_t used = 0;
        double v = 0;
        try {
            v = std::stod(body, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != body.size() || body.empty()) throw std::invalid_argument("malformed degradation '" + text + "'");
        return v;
    };
    DegradationSpec spec;
    if (text.rfind("LR(", 0) == 0) {
        spec = {DegradationKind::LowRes, number_between(3)};
    } else if (text.rfind("JPEG(QF=", 0) == 0) {
        spec = {DegradationKind::JpegLike, number_between(8)};
    } else if (text.rfind("Blur(s=", 0) == 0) {
        spec = {DegradationKind::GaussBlur, number_between(7)};
    } else {
        throw std::invalid_argument("unknown degradation '" + text + "'");
    }
    spec.validate();
    return spec;
}

ImageSample degrade(const ImageSample& sample, const DegradationSpec& spec) {
    spec.validate();
    switch (spec.kind) {
        case DegradationKind::LowRes: {
            const auto target = static_cast<std::size_t>(spec.parameter);
            if (target == sample.side) return sample;
            return resize_bilinear(resize_bilinear(sample, target), sample.side);
        }
        case DegradationKind::JpegLike: return jpeg_like(sample, static_cast<int>(spec.parameter));
        case DegradationKind::GaussBlur: return gaussian_blur(sample, spec.parameter);
    }
    throw std::invalid_argument("unknown degradation kind");
}

ImageSample resize_bilinear(const ImageSample& sample, std::size_t new_side) {
    if (new_side == 0) throw std::invalid_argument("resize: target side must be positive");
    if (new_side == sample.side) return sample;
    ImageSample out = sample;
    out.side = new_side;
    out.pixels.assign(new_side * new_side * sample.channels, 0.0f);
    const double ratio = static_cast<double>(sample.side) / static_cast<double>(new_side);
    const double last = static_cast<double>(sample.side - 1);
    for (std::size_t y = 0; y < new_side; ++y) {
        const double sy = std::clamp((static_cast<double>(y) + 0.5) * ratio - 0.5, 0.0, last);
        const auto y0 = static_cast<std::size_t>(sy);
        const std::size_t y1 = std::min(y0 + 1, sample.side - 1);
        const double fy = sy - static_cast<double>(y0);
        for (std::size_t x = 0; x < new_side; ++x) {
            const double sx = std::clamp((static_cast<double>(x) + 0.5) * ratio - 0.5, 0.0, last);
            const auto x0 = static_cast<std::size_t>(sx);
            const std::size_t x1 = std::min(x0 + 1, sample.side - 1);
            const double fx = sx - static_cast<double>(x0);
            for (std::size_t c = 0; c < sample.channels; ++c) {
                const double top = (1 - fx) * sample.at(y0, x0, c) + fx * sample.at(y0, x1, c);
                const double bottom = (1 - fx) * sample.at(y1, x0, c) + fx * sample.at(y1, x1, c);
                out.at(y, x, c) = clamp01((1 - fy) * top + fy * bottom);
            }
        }
    }
    return out;
}

std::vector<double> gaussian_kernel(double sigma) {
    if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw std::invalid_argument("gaussian sigma must be >= 0");
    if (sigma == 0.0) return {1.0};
    const auto radius = static_cast<std::ptrdiff_t>(std::ceil(3.0 * sigma));
    std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
    double total = 0;
    for (std::ptrdiff_t i = -radius; i <= radius; ++i) {
        const double v = std::exp(-0.5 * static_cast<double>(i * i) / (sigma * sigma));
        k[static_cast<std::size_t>(i + radius)] = v;
        total += v;
    }
    for (auto& v : k) v /= total;
    return k;
}

ImageSample gaussian_blur(const ImageSample& sample, double sigma) {
    const auto kernel = gaussian_kernel(sigma);
    if (kernel.size() == 1) return sample;
    ImageSample out = sample;
    const std::size_t side = sample.side;
    std::vector<double> plane(side * side);
    for (std::size_t c = 0; c < sample.channels; ++c) {
        for (std::size_t p = 0; p < side * side; ++p) plane[p] = sample.pixels[p * sample.channels + c];
        const auto blurred = blur_plane(plane, side, kernel);
        for (std::size_t p = 0; p < side * side; ++p) out.pixels[p * sample.channels + c] = clamp01(blurred[p]);
    }
    return out;
}

std::array<int, 64> quantization_table(int quality) {
    if (quality < 1 || quality > 100) throw std::invalid_argument("JPEG quality must be in [1,100]");
    static constexpr std::array<int, 64> luminance = {
        16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,  14, 13, 16, 24,  40,  57,
        69, 56, 14, 17, 22,  29,  51,  87,  80, 62, 18, 22, 37,  56,  68,  109, 103, 77, 24, 35, 55, 64,
        81, 104, 113, 92, 49, 64, 78,  87,  103, 121, 120, 101, 72, 92, 95, 98,  112, 100, 103, 99};
    const int scale = quality < 50 ? 5000 / quality : 200 - 2 * quality;
    std::array<int, 64> table{};
    for (std::size_t i = 0; i < 64; ++i) table[i] = std::clamp((luminance[i] * scale + 50) / 100, 1, 255);
    return table;
}

ImageSample jpeg_like(const ImageSample& sample, int quality) {
    const auto table = quantization_table(quality);
    double basis[8][8];
    for (int u = 0; u < 8; ++u) {
        const double a = u == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0);
        for (int x = 0; x < 8; ++x) basis[u][x] = a * std::cos((2 * x + 1) * u * M_PI / 16.0);
    }
    ImageSample out = sample;
    const std::size_t side = sample.side;
    for (std::size_t c = 0; c < sample.channels; ++c)
        for (std::size_t by = 0; by < side; by += 8)
            for (std::size_t bx = 0; bx < side; bx += 8) {
                double block[8][8], coef[8][8], tmp[8][8];
                // Partial edge blocks replicate the last row / column.
                for (int y = 0; y < 8; ++y)
                    for (int x = 0; x < 8; ++x) {
                        const std::size_t sy = std::min(by + static_cast<std::size_t>(y), side - 1);
                        const std::size_t sx = std::min(bx + static_cast<std::size_t>(x), side - 1);
                        block[y][x] = 255.0 * sample.at(sy, sx, c) - 128.0;
                    }
                for (int u = 0; u < 8; ++u)
                    for (int x = 0; x < 8; ++x) {
                        double acc = 0;
                        for (int y = 0; y < 8; ++y) acc += basis[u][y] * block[y][x];
                        tmp[u][x] = acc;
                    }
                for (int u = 0; u < 8; ++u)
                    for (int v = 0; v < 8; ++v) {
                        double acc = 0;
                        for (int x = 0; x < 8; ++x) acc += tmp[u][x] * basis[v][x];
                        const double q = table[static_cast<std::size_t>(u * 8 + v)];
                        coef[u][v] = std::round(acc / q) * q;
                    }
                for (int y = 0; y < 8; ++y)
                    for (int v = 0; v < 8; ++v) {
                        double acc = 0;
                        for (int u = 0; u < 8; ++u) acc += basis[u][y] * coef[u][v];
                        tmp[y][v] = acc;
                    }
                for (int y = 0; y < 8; ++y)
                    for (int x = 0; x < 8; ++x) {
                        const std::size_t oy = by + static_cast<std::size_t>(y);
                        const std::size_t ox = bx + static_cast<std::size_t>(x);
                        if (oy >= side || ox >= side) continue;
                        double acc = 0;
                        for (int v = 0; v < 8; ++v) acc += tmp[y][v] * basis[v][x];
                        out.at(oy, ox, c) = clamp01((acc + 128.0) / 255.0);
                    }
            }
    return out;
}

AugmentationPipeline AugmentationPipeline::standard() {
    return {{
        {AugmentKind::CropResize, 0.2, 0.8, 1.0},   // kept side fraction
        {AugmentKind::GaussNoise, 0.2, 0.0, 0.03},  // noise sigma
        {AugmentKind::GaussBlur, 0.2, 0.0, 1.0},    // blur sigma
        {AugmentKind::Rotation, 0.2, -10.0, 10.0},  // degrees
        {AugmentKind::JpegQuality, 0.2, 60.0, 95.0},
        {AugmentKind::ColorJitter, 0.2, 0.0, 0.1},  // brightness / contrast amplitude
        {AugmentKind::Grayscale, 0.2, 0.0, 0.0},
    }};
}

void AugmentationPipeline::validate() const {
    for (const auto& s : stages) {
        const std::string name = augment_kind_name(s.kind);
        if (!(s.probability >= 0.0 && s.probability <= 1.0))
            throw std::invalid_argument("augmentation " + name + ": probability must be in [0,1]");
        if (!(s.low <= s.high) || !std::isfinite(s.low) || !std::isfinite(s.high))
            throw std::invalid_argument("augmentation " + name + ": range must satisfy low <= high");
        switch (s.kind) {
            case AugmentKind::CropResize:
                if (!(s.low > 0.0 && s.high <= 1.0)) throw std::invalid_argument("crop fraction must lie in (0,1]");
                break;
            case AugmentKind::GaussNoise:
            case AugmentKind::GaussBlur:
            case AugmentKind::ColorJitter:
                if (s.low < 0.0) throw std::invalid_argument("augmentation " + name + ": range must be >= 0");
                break;
            case AugmentKind::JpegQuality:
                if (s.low < 1.0 || s.high > 100.0) throw std::invalid_argument("jpeg quality range must lie in [1,100]");
                break;
            case AugmentKind::Rotation:
            case AugmentKind::Grayscale: break;
        }
    }
}

std::string augment_kind_name(AugmentKind kind) {
    switch (kind) {
        case AugmentKind::CropResize: return "crop_resize";
        case AugmentKind::GaussNoise: return "gauss_noise";
        case AugmentKind::GaussBlur: return "gauss_blur";
        case AugmentKind::Rotation: return "rotation";
        case AugmentKind::JpegQuality: return "jpeg_quality";
        case AugmentKind::ColorJitter: return "color_jitter";
        case AugmentKind::Grayscale: return "grayscale";
    }
    throw std::invalid_argument("unknown augmentation kind");
}

AugmentKind parse_augment_kind(const std::string& name) {
    for (int v = 0; v <= static_cast<int>(AugmentKind::Grayscale); ++v)
        if (augment_kind_name(static_cast<AugmentKind>(v)) == name) return static_cast<AugmentKind>(v);
    throw std::invalid_argument("unknown augmentation '" + name + "'");
}

namespace {

ImageSample crop_resize(const ImageSample& s, double fraction, Rng& rng) {
    const auto crop = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(fraction * static_cast<double>(s.side))));
    const std::size_t oy = rng.index(s.side - crop + 1);
    const std::size_t ox = rng.index(s.side - crop + 1);
    ImageSample c = s;
    c.side = crop;
    c.pixels.resize(crop * crop * s.channels);
    for (std::size_t y = 0; y < crop; ++y)
        for (std::size_t x = 0; x < crop; ++x)
            for (std::size_t ch = 0; ch < s.channels; ++ch) c.at(y, x, ch) = s.at(oy + y, ox + x, ch);
    return resize_bilinear(c, s.side);
}

ImageSample rotate(const ImageSample& s, double degrees) {
    const double th = degrees * M_PI / 180.0;
    const double cs = std::cos(th), sn = std::sin(th);
    const double centre = (static_cast<double>(s.side) - 1.0) / 2.0;
    ImageSample out = s;
    auto sample_at = [&](double fy, double fx, std::size_t c) {
        const double fl_y = std::floor(fy), fl_x = std::floor(fx);
        const auto iy = static_cast<std::ptrdiff_t>(fl_y), ix = static_cast<std::ptrdiff_t>(fl_x);
        const double ty = fy - fl_y, tx = fx - fl_x;
        auto px = [&](std::ptrdiff_t y, std::ptrdiff_t x) {
            return static_cast<double>(s.at(reflect(y, s.side), reflect(x, s.side), c));
        };
        return (1 - ty) * ((1 - tx) * px(iy, ix) + tx * px(iy, ix + 1)) +
               ty * ((1 - tx) * px(iy + 1, ix) + tx * px(iy + 1, ix + 1));
    };
    for (std::size_t y = 0; y < s.side; ++y)
        for (std::size_t x = 0; x < s.side; ++x) {
            const double dy = static_cast<double>(y) - centre, dx = static_cast<double>(x) - centre;
            const double sy = centre + cs * dy - sn * dx;
            const double sx = centre + sn * dy + cs * dx;
            for (std::size_t c = 0; c < s.channels; ++c) out.at(y, x, c) = clamp01(sample_at(sy, sx, c));
        }
    return out;
}

}  // namespace

ImageSample augment(const ImageSample& sample, const AugmentationPipeline& pipeline, std::uint64_t draw_seed) {
    pipeline.validate();
    Rng rng(mix_seed(draw_seed, sample.seed));
    ImageSample out = sample;
    for (const auto& stage : pipeline.stages) {
        // Draw the gate and parameter unconditionally so each stage consumes a
        // fixed amount of the stream.
        const bool fire = rng.bernoulli(stage.probability);
        const double param = rng.uniform(stage.low, stage.high);
        const std::uint64_t sub_seed = rng.bits();
        if (!fire) continue;
        Rng sub(sub_seed);
        switch (stage.kind) {
            case AugmentKind::CropResize: out = crop_resize(out, param, sub); break;
            case AugmentKind::GaussNoise:
                for (auto& p : out.pixels) p = clamp01(p + param * sub.normal());
                break;
            case AugmentKind::GaussBlur: out = gaussian_blur(out, param); break;
            case AugmentKind::Rotation: out = rotate(out, param); break;
            case AugmentKind::JpegQuality: out = jpeg_like(out, static_cast<int>(std::lround(param))); break;
            case AugmentKind::ColorJitter: {
                const double brightness = sub.uniform(-param, param);
                const double contrast = 1.0 + sub.uniform(-param, param);
                double mean = 0;
                for (float p : out.pixels) mean += p;
                mean /= static_cast<double>(out.pixels.size());
                for (auto& p : out.pixels) p = clamp01((p - mean) * contrast + mean + brightness);
                break;
            }
            case AugmentKind::Grayscale: {
                if (out.channels != 3) break;
                for (std::size_t i = 0; i < out.side * out.side; ++i) {
                    float* px = &out.pixels[i * 3];
                    const float g = clamp01(0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2]);
                    px[0] = px[1] = px[2] = g;
                }
                break;
            }
        }
    }
    return out;
}

}  // namespace mirage::synth
