#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "mirage/config.hpp"
#include "mirage/encoder.hpp"
#include "mirage/objective.hpp"

namespace mirage::eval {

using Model = model::DualEncoder<float>;

/// A loss or gradient became non-finite; the CLI maps it to exit code 3.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Geometry of held-out training-distribution embeddings.
struct Diagnostics {
    double v_clip = 0;
    double separation = 0;
    double holdout_ce = 0;        // mean per-sample cross-entropy
    double holdout_accuracy = 0;
};

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    double lr = 0;          // at the start of the epoch
    double total = 0;       // step means over the epoch
    double ce = 0;
    double dis = 0;
    Diagnostics diagnostics;
};

struct TrainLog {
    Diagnostics initial;
    std::vector<EpochRecord> epochs;
};

struct TrainOptions {
    objective::LossConfig loss;
    config::OptimConfig optim;
    std::uint64_t seed = 0;  // shuffling and augmentation draws
    bool augment = false;
    synth::AugmentationPipeline augmentation;
};

Diagnostics measure(const Model& model, std::span<const ImageSample> holdout, double tau);

/// Trains the prompt and mapping stacks in place. Batches are reshuffled every
/// epoch; the memory bank persists across epochs.
TrainLog train_model(Model& model, std::span<const ImageSample> train, std::span<const ImageSample> holdout,
                     const TrainOptions& options, const std::function<void(const EpochRecord&)>& on_epoch = {});

}  // namespace mirage::eval
