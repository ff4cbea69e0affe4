#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "mirage/encoder.hpp"
#include "mirage/objective.hpp"
#include "mirage/synth.hpp"

namespace mirage::config {

/// Raised for any schema or value problem; the CLI maps it to exit code 2.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Arm : std::uint8_t { Full, NoBank, CeOnly, SingleModal };

std::string arm_name(Arm arm);
Arm parse_arm(const std::string& name);

struct OptimConfig {
    double lr = 0.002;
    double min_lr = 0.0;
    double momentum = 0.9;
    std::size_t epochs = 10;
    std::size_t batch_size = 32;

    void validate() const;
    bool operator==(const OptimConfig&) const = default;
};

struct DataSpec {
    GeneratorId train_family = GeneratorId::Checker;
    std::size_t train_real = 500;
    std::size_t train_fake = 500;
    std::size_t holdout = 100;  // per class, drawn from the training distributions for per-epoch diagnostics
    double strength = 0.5;
    double correlation_min = 1.5;
    double correlation_max = 4.0;
    double contrast = 0.18;
    double sensor_noise = 0.02;
    bool augment = false;
    synth::AugmentationPipeline augmentation = synth::AugmentationPipeline::standard();

    synth::GeneratorSpec generator(GeneratorId family) const;
    void validate() const;
    bool operator==(const DataSpec&) const = default;
};

struct ProtocolSpec {
    std::vector<GeneratorId> test_families = {GeneratorId::Checker, GeneratorId::Spectral, GeneratorId::Seam};
    std::size_t test_count = 300;  // per class in every subset
    std::vector<synth::DegradationSpec> degradations;
    std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
    std::vector<Arm> arms = {Arm::Full, Arm::CeOnly};

    void validate() const;
    bool operator==(const ProtocolSpec&) const = default;
};

struct RunConfig {
    model::EncoderConfig encoder;
    objective::LossConfig loss;
    OptimConfig optim;
    DataSpec data;
    ProtocolSpec protocol;
    std::uint64_t seed = 0;
    std::uint64_t backbone_seed = 20240601;  // the frozen "pretrained" towers are shared across run seeds
    std::string out_dir = "out";

    void validate() const;
    bool operator==(const RunConfig&) const = default;
};

/// Encoder and loss settings after applying an ablation arm.
void apply_arm(Arm arm, model::EncoderConfig& encoder, objective::LossConfig& loss);

/// Parses a JSON document; unknown keys anywhere are errors. Missing keys keep defaults.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);
/// Every field, keys sorted, two-space indentation.
std::string serialize_config(const RunConfig& config);

}  // namespace mirage::config
