#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "mirage/common.hpp"

namespace mirage::synth {

/// A procedural image source. NATURAL draws smooth correlated colour fields
/// with mild sensor noise; every fake family is the same draw plus an artifact
/// whose amplitude scales with `strength`, so strength 0 reproduces NATURAL.
struct GeneratorSpec {
    GeneratorId family = GeneratorId::Natural;
    double strength = 0.0;
    double correlation_min = 1.5;  // smoothing sigma range in pixels
    double correlation_max = 4.0;
    double contrast = 0.18;
    double sensor_noise = 0.02;

    void validate() const;
    bool operator==(const GeneratorSpec&) const = default;
};

ImageSample generate_sample(const GeneratorSpec& spec, std::uint64_t seed, std::size_t index, std::size_t side = 32,
                            std::size_t channels = 3);

/// Deterministic per (spec, seed, index); samples are produced in parallel.
std::vector<ImageSample> generate_dataset(const GeneratorSpec& spec, std::size_t count, std::uint64_t seed,
                                          std::size_t side = 32, std::size_t channels = 3);

enum class DegradationKind : std::uint8_t { LowRes, JpegLike, GaussBlur };

struct DegradationSpec {
    DegradationKind kind = DegradationKind::GaussBlur;
    double parameter = 0.0;  // target side | quality factor | sigma

    void validate() const;
    /// Column label, e.g. "LR(16)", "JPEG(QF=65)", "Blur(s=2)".
    std::string label() const;
    bool operator==(const DegradationSpec&) const = default;
};

DegradationSpec parse_degradation(const std::string& text);

ImageSample degrade(const ImageSample& sample, const DegradationSpec& spec);

// Building blocks shared by degradations and augmentations.
ImageSample resize_bilinear(const ImageSample& sample, std::size_t new_side);
std::vector<double> gaussian_kernel(double sigma);
ImageSample gaussian_blur(const ImageSample& sample, double sigma);
ImageSample jpeg_like(const ImageSample& sample, int quality);
/// Standard luminance table scaled by the usual quality rule, entries in [1, 255].
std::array<int, 64> quantization_table(int quality);

enum class AugmentKind : std::uint8_t { CropResize, GaussNoise, GaussBlur, Rotation, JpegQuality, ColorJitter, Grayscale };

struct AugmentStage {
    AugmentKind kind;
    double probability;
    double low;   // parameter range, meaning depends on kind
    double high;
    bool operator==(const AugmentStage&) const = default;
};

/// Ordered stages, each applied independently with its probability.
struct AugmentationPipeline {
    std::vector<AugmentStage> stages;

    /// Every stage with p = 0.2 and mild ranges.
    static AugmentationPipeline standard();
    static AugmentationPipeline none() { return {}; }
    void validate() const;
    bool operator==(const AugmentationPipeline&) const = default;
};

std::string augment_kind_name(AugmentKind kind);
AugmentKind parse_augment_kind(const std::string& name);

ImageSample augment(const ImageSample& sample, const AugmentationPipeline& pipeline, std::uint64_t draw_seed);

}  // namespace mirage::synth
