#include "mirage/train.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "mirage/diagnostics.hpp"
#include "mirage/metrics.hpp"
#include "mirage/optim.hpp"

namespace mirage::eval {
namespace {

constexpr std::uint64_t kShuffleStream = 0x5C0FFEE;
constexpr std::uint64_t kAugmentStream = 0xA6A6A6;

void require_finite(double v, const char* what, std::size_t epoch, std::size_t step) {
    if (!std::isfinite(v))
        throw NumericError(std::string(what) + " became non-finite at epoch " + std::to_string(epoch) + ", step " +
                           std::to_string(step));
}

}  // namespace

Diagnostics measure(const Model& model, std::span<const ImageSample> holdout, double tau) {
    const auto [emb, anchors] = model.embed_all(holdout);
    const std::size_t d = emb.dim(1);
    std::vector<double> fake_rows, real_rows;
    std::vector<Label> labels;
    std::vector<ScoredPrediction> preds;
    for (std::size_t i = 0; i < holdout.size(); ++i) {
        auto& dst = holdout[i].label == Label::Fake ? fake_rows : real_rows;
        for (std::size_t j = 0; j < d; ++j) dst.push_back(emb.at(i, j));
        labels.push_back(holdout[i].label);
        double sr = 0, sf = 0;
        for (std::size_t j = 0; j < d; ++j) {
            sr += static_cast<double>(emb.at(i, j)) * anchors.at(0, j);
            sf += static_cast<double>(emb.at(i, j)) * anchors.at(1, j);
        }
        preds.push_back({model::predict_from_similarities(sr, sf, tau).score, holdout[i].label, "holdout"});
    }
    std::vector<double> anchor_rows(anchors.data().begin(), anchors.data().end());
    const diagnostics::EmpiricalDistribution fake(std::move(fake_rows), d, "holdout-fake", Label::Fake);
    const diagnostics::EmpiricalDistribution real(std::move(real_rows), d, "holdout-real", Label::Real);

    Diagnostics out;
    out.v_clip = diagnostics::v_clip(fake, real, anchor_rows);
    out.separation = diagnostics::inter_class_separation({fake}, {real});
    const auto ce = objective::per_sample_cross_entropy(emb, labels, anchors, tau);
    out.holdout_ce = std::accumulate(ce.begin(), ce.end(), 0.0) / static_cast<double>(ce.size());
    out.holdout_accuracy = accuracy(preds);
    return out;
}

TrainLog train_model(Model& model, std::span<const ImageSample> train, std::span<const ImageSample> holdout,
                     const TrainOptions& options, const std::function<void(const EpochRecord&)>& on_epoch) {
    using ad::Tape;
    using ad::Tensor;
    if (train.empty()) throw std::invalid_argument("train_model: empty training set");
    options.loss.validate();
    options.optim.validate();
    const double tau = options.loss.temperature;
    const bool use_dis = options.loss.alpha > 0.0;
    const bool use_bank = use_dis && options.loss.bank_enabled;

    TrainLog log;
    log.initial = measure(model, holdout, tau);

    const std::size_t batch = options.optim.batch_size;
    const std::size_t steps_per_epoch = (train.size() + batch - 1) / batch;
    ad::OptimizerState<float> state;
    state.base_lr = options.optim.lr;
    state.min_lr = options.optim.min_lr;
    state.momentum = options.optim.momentum;
    state.total_steps = std::max<std::size_t>(1, steps_per_epoch * options.optim.epochs);

    objective::MemoryBank<float> bank(options.loss.bank_capacity, model.config().out_dim);
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);

    for (std::size_t epoch = 1; epoch <= options.optim.epochs; ++epoch) {
        Rng shuffle(mix_seed(options.seed ^ kShuffleStream, epoch));
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.index(i)]);

        EpochRecord rec;
        rec.epoch = epoch;
        rec.lr = ad::current_lr(state);
        for (std::size_t step = 0; step < steps_per_epoch; ++step) {
            const std::size_t begin = step * batch;
            const std::size_t end = std::min(begin + batch, train.size());
            std::vector<ImageSample> images;
            std::vector<Label> labels;
            for (std::size_t k = begin; k < end; ++k) {
                const ImageSample& src = train[order[k]];
                if (options.augment) {
                    const std::uint64_t draw = mix_seed(options.seed ^ kAugmentStream, (epoch - 1) * train.size() + k);
                    images.push_back(synth::augment(src, options.augmentation, draw));
                } else {
                    images.push_back(src);
                }
                labels.push_back(src.label);
            }

            Tape<float> tape;
            const auto params = model.trainable();
            const auto anchors = model.anchors(tape);
            const auto h = model.encode_images(tape, images);
            const auto ce = objective::cross_entropy_loss(tape, h, labels, anchors, tau);
            Tensor<float> total = ce;
            double dis_value = 0;
            if (use_dis) {
                const auto set = objective::EmbeddingSet<float>::build(tape, anchors, h, labels);
                const auto dis = use_bank
                                     ? objective::discriminative_loss_with_bank(tape, set, bank, tau, options.loss.normalize_dis)
                                     : objective::discriminative_loss(tape, set, tau, options.loss.normalize_dis);
                dis_value = dis.item();
                require_finite(dis_value, "discriminative loss", epoch, step);
                total = objective::total_loss(tape, ce, dis, options.loss.alpha);
            }
            require_finite(ce.item(), "cross-entropy loss", epoch, step);
            require_finite(total.item(), "total loss", epoch, step);

            const auto grads = tape.backward(total);
            for (const auto& p : params)
                for (float g : grads.at(p)) require_finite(g, "gradient", epoch, step);
            model.set_trainable(ad::sgd_step<float>(params, grads, state));
            if (use_bank) bank.push(h.detach(), labels);

            rec.total += total.item();
            rec.ce += ce.item();
            rec.dis += dis_value;
        }
        const auto n = static_cast<double>(steps_per_epoch);
        rec.total /= n;
        rec.ce /= n;
        rec.dis /= n;
        rec.diagnostics = measure(model, holdout, tau);
        log.epochs.push_back(rec);
        if (on_epoch) on_epoch(rec);
    }
    return log;
}

}  // namespace mirage::eval
