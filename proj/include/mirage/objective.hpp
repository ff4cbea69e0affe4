#pragma once

#include <cstddef>
#include <deque>
#include <span>
#include <vector>

#include "mirage/common.hpp"
#include "mirage/tape.hpp"

namespace mirage::objective {

using ad::Tape;
using ad::Tensor;

struct LossConfig {
    double temperature = 0.07;
    double alpha = 0.1;
    std::size_t bank_capacity = 64;
    bool bank_enabled = true;
    bool normalize_dis = false;  // divide the discriminative sum by the number of contributing anchors

    void validate() const;
    bool operator==(const LossConfig&) const = default;
};

/// Pool {e_Real, e_Fake, h_1..h_I} with labels.
///
/// Rows are stored in that order, so storage position k holds the member with
/// index k - 1 in the {-1, 0, 1, ..., I} numbering. The index-set accessors
/// use that numbering.
template <typename T>
class EmbeddingSet {
public:
    /// anchors: [2, d] (Real, Fake); images: [I, d]; all rows unit-norm within 1e-4.
    static EmbeddingSet build(Tape<T>& tape, const Tensor<T>& anchors, const Tensor<T>& images, std::span<const Label> labels);

    const Tensor<T>& embeddings() const { return pool_; }
    const std::vector<Label>& labels() const { return labels_; }
    std::size_t batch_size() const { return labels_.size() - 2; }
    std::size_t size() const { return labels_.size(); }
    std::size_t dim() const { return pool_.dim(1); }

    /// A(i) = all indices except i.
    std::vector<int> others(int index) const;
    /// P(i) = members of A(i) sharing i's label.
    std::vector<int> positives(int index) const;

private:
    Tensor<T> pool_;
    std::vector<Label> labels_;
};

template <typename T>
EmbeddingSet<T> build_embedding_set(Tape<T>& tape, const Tensor<T>& anchors, const Tensor<T>& images,
                                    std::span<const Label> labels) {
    return EmbeddingSet<T>::build(tape, anchors, images, labels);
}

/// Fixed-capacity FIFO of detached (embedding, label) pairs.
template <typename T>
class MemoryBank {
public:
    struct Entry {
        std::vector<T> embedding;
        Label label;
    };

    MemoryBank(std::size_t capacity, std::size_t dim) : capacity_(capacity), dim_(dim) {}

    /// Evicts the oldest max(0, size + I - capacity) entries, then appends the
    /// batch rows in order as detached copies. With I > capacity only the last
    /// `capacity` rows survive.
    void push(const Tensor<T>& batch, std::span<const Label> labels);

    std::size_t size() const { return entries_.size(); }
    std::size_t capacity() const { return capacity_; }
    std::size_t dim() const { return dim_; }
    bool empty() const { return entries_.empty(); }
    const std::deque<Entry>& entries() const { return entries_; }

    /// Untracked [size, dim] snapshot, oldest first.
    Tensor<T> embeddings() const;
    std::vector<Label> labels() const;

private:
    std::size_t capacity_;
    std::size_t dim_;
    std::deque<Entry> entries_;
};

template <typename T>
void bank_update(MemoryBank<T>& bank, const Tensor<T>& batch, std::span<const Label> labels) {
    bank.push(batch, labels);
}

/// Supervised contrastive loss over the pool; indices with empty P(i)
/// contribute nothing. Uses masked log-sum-exp.
template <typename T>
Tensor<T> discriminative_loss(Tape<T>& tape, const EmbeddingSet<T>& set, double tau, bool normalize = false);

/// Bank entries join every candidate set A(i) and, when labels match, P(i);
/// they are never outer-sum anchors and never receive gradient.
template <typename T>
Tensor<T> discriminative_loss_with_bank(Tape<T>& tape, const EmbeddingSet<T>& set, const MemoryBank<T>& bank, double tau,
                                        bool normalize = false);

/// Batch-mean of -log softmax(<h, e_y> / tau) at the true label.
template <typename T>
Tensor<T> cross_entropy_loss(Tape<T>& tape, const Tensor<T>& images, std::span<const Label> labels,
                             const Tensor<T>& anchors, double tau);

/// Per-sample cross-entropy values (no tape, no gradient).
template <typename T>
std::vector<double> per_sample_cross_entropy(const Tensor<T>& images, std::span<const Label> labels,
                                             const Tensor<T>& anchors, double tau);

/// ce + alpha * dis.
template <typename T>
Tensor<T> total_loss(Tape<T>& tape, const Tensor<T>& ce, const Tensor<T>& dis, double alpha);

double total_loss(double ce, double dis, double alpha);

}  // namespace mirage::objective
