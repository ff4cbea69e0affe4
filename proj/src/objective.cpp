#include "mirage/objective.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace mirage::objective {
namespace {

void check_tau(double tau) {
    if (!(tau > 0.0)) throw std::invalid_argument("temperature must be positive, got " + std::to_string(tau));
}

template <typename T>
void check_unit_rows(const Tensor<T>& m, const char* what) {
    if (m.rank() != 2) throw ad::ShapeError(std::string(what) + ": expected rank-2 embeddings");
    for (std::size_t r = 0; r < m.dim(0); ++r) {
        double sq = 0;
        for (std::size_t c = 0; c < m.dim(1); ++c) sq += static_cast<double>(m.at(r, c)) * m.at(r, c);
        if (std::abs(std::sqrt(sq) - 1.0) > 1e-4)
            throw std::invalid_argument(std::string(what) + ": row " + std::to_string(r) + " has norm " +
                                        std::to_string(std::sqrt(sq)));
    }
}

template <typename T>
Tensor<T> contrastive(Tape<T>& tape, const EmbeddingSet<T>& set, const Tensor<T>* bank_rows,
                      std::span<const Label> bank_labels, double tau, bool normalize) {
    check_tau(tau);
    const auto& pool = set.embeddings();
    const std::size_t n = set.size();
    const std::size_t k = bank_rows ? bank_rows->dim(0) : 0;
    const std::size_t width = n + k;
    const Tensor<T> candidates = k ? tape.concat({pool, *bank_rows}, 0) : pool;
    const auto logits = tape.scale(tape.matmul(pool, candidates, false, true), 1.0 / tau);

    std::vector<std::uint8_t> mask(n * width, 1);
    std::vector<T> weight(n * width, T(0));
    std::size_t anchors_counted = 0;
    auto label_of = [&](std::size_t j) { return j < n ? set.labels()[j] : bank_labels[j - n]; };
    for (std::size_t i = 0; i < n; ++i) {
        mask[i * width + i] = 0;
        std::size_t positives = 0;
        for (std::size_t j = 0; j < width; ++j)
            if (j != i && label_of(j) == set.labels()[i]) ++positives;
        if (positives == 0) continue;
        ++anchors_counted;
        for (std::size_t j = 0; j < width; ++j)
            if (j != i && label_of(j) == set.labels()[i]) weight[i * width + j] = T(1) / static_cast<T>(positives);
    }
    const auto logp = tape.log_softmax(logits, 1, std::move(mask));
    const auto weighted = tape.sum(tape.mul(logp, Tensor<T>({n, width}, std::move(weight))));
    const double norm = normalize && anchors_counted ? 1.0 / static_cast<double>(anchors_counted) : 1.0;
    return tape.scale(weighted, -norm);
}

}  // namespace

void LossConfig::validate() const {
    check_tau(temperature);
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw std::invalid_argument("loss alpha must be finite and >= 0");
    if (bank_enabled && bank_capacity == 0) throw std::invalid_argument("bank_capacity must be positive when the bank is enabled");
}

template <typename T>
EmbeddingSet<T> EmbeddingSet<T>::build(Tape<T>& tape, const Tensor<T>& anchors, const Tensor<T>& images,
                                       std::span<const Label> labels) {
    if (images.rank() != 2 || images.dim(0) == 0) throw std::invalid_argument("embedding set: empty batch");
    if (anchors.rank() != 2 || anchors.dim(0) != 2 || anchors.dim(1) != images.dim(1))
        throw ad::ShapeError("embedding set: anchors must be [2, " + std::to_string(images.dim(1)) + "], got " +
                             ad::shape_str(anchors.shape()));
    if (labels.size() != images.dim(0))
        throw std::invalid_argument("embedding set: " + std::to_string(labels.size()) + " labels for " +
                                    std::to_string(images.dim(0)) + " embeddings");
    check_unit_rows(anchors, "embedding set anchors");
    check_unit_rows(images, "embedding set batch");
    EmbeddingSet s;
    s.pool_ = tape.concat({anchors, images}, 0);
    s.labels_ = {Label::Real, Label::Fake};
    s.labels_.insert(s.labels_.end(), labels.begin(), labels.end());
    return s;
}

template <typename T>
std::vector<int> EmbeddingSet<T>::others(int index) const {
    const int first = -1;
    const int last = static_cast<int>(size()) - 2;
    if (index < first || index > last) throw std::out_of_range("embedding set index " + std::to_string(index));
    std::vector<int> out;
    for (int j = first; j <= last; ++j)
        if (j != index) out.push_back(j);
    return out;
}

template <typename T>
std::vector<int> EmbeddingSet<T>::positives(int index) const {
    std::vector<int> out;
    const Label y = labels_.at(static_cast<std::size_t>(index + 1));
    for (int j : others(index))
        if (labels_[static_cast<std::size_t>(j + 1)] == y) out.push_back(j);
    return out;
}

template <typename T>
void MemoryBank<T>::push(const Tensor<T>& batch, std::span<const Label> labels) {
    if (batch.rank() != 2 || batch.dim(1) != dim_)
        throw ad::ShapeError("memory bank: batch shape " + ad::shape_str(batch.shape()) + " does not match dim " +
                             std::to_string(dim_));
    if (labels.size() != batch.dim(0)) throw std::invalid_argument("memory bank: label count mismatch");
    if (capacity_ == 0) return;
    const std::size_t rows = batch.dim(0);
    const std::size_t keep_from = rows > capacity_ ? rows - capacity_ : 0;
    const std::size_t incoming = rows - keep_from;
    while (!entries_.empty() && entries_.size() + incoming > capacity_) entries_.pop_front();
    for (std::size_t r = keep_from; r < rows; ++r) {
        const auto row = batch.data().subspan(r * dim_, dim_);
        entries_.push_back(Entry{std::vector<T>(row.begin(), row.end()), labels[r]});
    }
}

template <typename T>
Tensor<T> MemoryBank<T>::embeddings() const {
    std::vector<T> out;
    out.reserve(entries_.size() * dim_);
    for (const auto& e : entries_) out.insert(out.end(), e.embedding.begin(), e.embedding.end());
    return Tensor<T>({entries_.size(), dim_}, std::move(out));
}

template <typename T>
std::vector<Label> MemoryBank<T>::labels() const {
    std::vector<Label> out;
    for (const auto& e : entries_) out.push_back(e.label);
    return out;
}

template <typename T>
Tensor<T> discriminative_loss(Tape<T>& tape, const EmbeddingSet<T>& set, double tau, bool normalize) {
    return contrastive<T>(tape, set, nullptr, {}, tau, normalize);
}

template <typename T>
Tensor<T> discriminative_loss_with_bank(Tape<T>& tape, const EmbeddingSet<T>& set, const MemoryBank<T>& bank, double tau,
                                        bool normalize) {
    if (bank.empty()) return contrastive<T>(tape, set, nullptr, {}, tau, normalize);
    if (bank.dim() != set.dim()) throw ad::ShapeError("memory bank dim does not match embedding set");
    const Tensor<T> rows = bank.embeddings();
    const auto labels = bank.labels();
    return contrastive<T>(tape, set, &rows, labels, tau, normalize);
}

template <typename T>
Tensor<T> cross_entropy_loss(Tape<T>& tape, const Tensor<T>& images, std::span<const Label> labels,
                             const Tensor<T>& anchors, double tau) {
    check_tau(tau);
    if (images.rank() != 2 || images.dim(0) == 0) throw std::invalid_argument("cross entropy: empty batch");
    if (labels.size() != images.dim(0)) throw std::invalid_argument("cross entropy: label count mismatch");
    const std::size_t n = images.dim(0);
    const auto logp = tape.log_softmax(tape.scale(tape.matmul(images, anchors, false, true), 1.0 / tau), 1);
    std::vector<T> pick(n * 2, T(0));
    for (std::size_t i = 0; i < n; ++i) pick[i * 2 + static_cast<std::size_t>(labels[i])] = T(1);
    return tape.scale(tape.sum(tape.mul(logp, Tensor<T>({n, 2}, std::move(pick)))), -1.0 / static_cast<double>(n));
}

template <typename T>
std::vector<double> per_sample_cross_entropy(const Tensor<T>& images, std::span<const Label> labels,
                                             const Tensor<T>& anchors, double tau) {
    check_tau(tau);
    std::vector<double> out;
    out.reserve(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        double s[2] = {0, 0};
        for (std::size_t a = 0; a < 2; ++a)
            for (std::size_t j = 0; j < images.dim(1); ++j)
                s[a] += static_cast<double>(images.at(i, j)) * static_cast<double>(anchors.at(a, j));
        const double mx = std::max(s[0], s[1]) / tau;
        const double lse = mx + std::log(std::exp(s[0] / tau - mx) + std::exp(s[1] / tau - mx));
        out.push_back(lse - s[static_cast<std::size_t>(labels[i])] / tau);
    }
    return out;
}

double total_loss(double ce, double dis, double alpha) {
    if (!std::isfinite(ce) || !std::isfinite(dis)) throw std::domain_error("total_loss: non-finite component");
    if (!(alpha >= 0.0)) throw std::invalid_argument("total_loss: alpha must be >= 0");
    return ce + alpha * dis;
}

template <typename T>
Tensor<T> total_loss(Tape<T>& tape, const Tensor<T>& ce, const Tensor<T>& dis, double alpha) {
    total_loss(static_cast<double>(ce.item()), static_cast<double>(dis.item()), alpha);
    if (alpha == 0.0) return ce;
    return tape.add(ce, tape.scale(dis, alpha));
}

#define MIRAGE_INSTANTIATE_OBJECTIVE(T)                                                                              \
    template class EmbeddingSet<T>;                                                                                  \
    template class MemoryBank<T>;                                                                                    \
    template Tensor<T> discriminative_loss(Tape<T>&, const EmbeddingSet<T>&, double, bool);                          \
    template Tensor<T> discriminative_loss_with_bank(Tape<T>&, const EmbeddingSet<T>&, const MemoryBank<T>&, double, \
                                                     bool);                                                          \
    template Tensor<T> cross_entropy_loss(Tape<T>&, const Tensor<T>&, std::span<const Label>, const Tensor<T>&,      \
                                          double);                                                                   \
    template std::vector<double> per_sample_cross_entropy(const Tensor<T>&, std::span<const Label>,                  \
                                                          const Tensor<T>&, double);                                 \
    template Tensor<T> total_loss(Tape<T>&, const Tensor<T>&, const Tensor<T>&, double);

MIRAGE_INSTANTIATE_OBJECTIVE(float)
MIRAGE_INSTANTIATE_OBJECTIVE(double)

}  // namespace mirage::objective
