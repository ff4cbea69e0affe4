#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mirage/common.hpp"
#include "mirage/tape.hpp"

namespace mirage::model {

using ad::Tape;
using ad::Tensor;
using TokenIds = std::vector<std::size_t>;

enum class MappingKind { Linear, Mlp2 };

struct EncoderConfig {
    std::size_t embed_dim = 64;
    std::size_t out_dim = 64;
    std::size_t text_depth = 4;
    std::size_t image_depth = 4;
    std::size_t prompt_depth = 2;   // layers that receive prompts, <= min(text_depth, image_depth)
    std::size_t prompt_length = 2;  // prompt tokens per layer
    std::size_t patch_size = 8;
    std::size_t image_side = 32;
    std::size_t channels = 3;
    std::size_t vocab_size = 32;
    std::size_t context_length = 16;
    std::size_t head_count = 4;
    std::size_t mlp_ratio = 4;
    MappingKind mapping = MappingKind::Linear;
    bool vision_prompts = true;  // false: text-only (single-modal) prompt learning
    double prompt_init_std = 0.02;
    std::string prompt_template = "a photo of a {}";
    std::string real_word = "real";
    std::string fake_word = "fake";

    /// Throws std::invalid_argument describing the first violated constraint.
    void validate() const;

    std::size_t patch_count() const { return (image_side / patch_size) * (image_side / patch_size); }
    std::size_t patch_dim() const { return patch_size * patch_size * channels; }
    std::size_t vision_prompt_depth() const { return vision_prompts ? prompt_depth : 0; }

    bool operator==(const EncoderConfig&) const = default;
};

/// Word-level vocabulary for the fixed prompt template and the two class words.
class Vocabulary {
public:
    static Vocabulary for_template(std::string_view prompt_template, std::string_view real_word,
                                   std::string_view fake_word);

    std::size_t id(std::string_view token) const;
    const std::string& token(std::size_t id) const { return tokens_.at(id); }
    std::size_t size() const { return tokens_.size(); }
    static constexpr std::size_t pad_id() { return 0; }

    /// Words of the rendered prompt for a label.
    std::vector<std::string> words(Label label) const;
    std::size_t prompt_length() const { return words(Label::Real).size(); }

private:
    std::vector<std::string> tokens_;
    std::map<std::string, std::size_t, std::less<>> ids_;
    std::string template_;
    std::string real_word_;
    std::string fake_word_;
};

/// Token ids of Prompt(label); both labels yield the same length.
TokenIds render_prompt(Label label, const Vocabulary& vocab);

template <typename T>
struct TransformerLayer {
    Tensor<T> ln1_gain, ln1_bias, w_qkv, b_qkv, w_out, b_out;
    Tensor<T> ln2_gain, ln2_bias, w_fc1, b_fc1, w_fc2, b_fc2;
};

/// Backbone weights of both towers. Never grad-tracked.
template <typename T>
struct FrozenBackbone {
    Tensor<T> token_embedding;  // [vocab, d]
    Tensor<T> text_position;    // [context, d]
    Tensor<T> text_ln_gain, text_ln_bias;
    Tensor<T> text_proj;        // [d, d_out]
    std::vector<TransformerLayer<T>> text_layers;

    Tensor<T> patch_proj;       // [patch_dim, d]
    Tensor<T> class_embedding;  // [1, d]
    Tensor<T> image_position;   // [M + 1, d]
    Tensor<T> image_ln_gain, image_ln_bias;
    Tensor<T> image_proj;       // [d, d_out]
    std::vector<TransformerLayer<T>> image_layers;

    static FrozenBackbone random(const EncoderConfig& config, std::uint64_t seed);

    /// Calls fn(name, tensor&) for every tensor, in a fixed order.
    template <typename Fn>
    void visit(Fn&& fn);
};

/// theta_i for i in 1..L, each [B, d] (one row per prompt token).
template <typename T>
struct PromptStack {
    std::vector<Tensor<T>> layers;

    static PromptStack random(const EncoderConfig& config, std::uint64_t seed);
    std::size_t depth() const { return layers.size(); }
};

/// Coupling maps F_i: [B, d] -> [B, d]. Linear uses (w1, b1); Mlp2 adds a GELU and (w2, b2).
template <typename T>
struct MappingLayer {
    Tensor<T> w1, b1, w2, b2;
};

template <typename T>
struct MappingStack {
    MappingKind kind = MappingKind::Linear;
    std::vector<MappingLayer<T>> layers;

    static MappingStack random(const EncoderConfig& config, std::uint64_t seed);
    std::size_t depth() const { return layers.size(); }
};

/// Per-layer vision prompts theta~_i = F_i(theta_i).
template <typename T>
std::vector<Tensor<T>> map_prompts(Tape<T>& tape, const PromptStack<T>& prompts, const MappingStack<T>& mapping);

/// Text embeddings [S, d_out] (unit rows) for S equal-length token sequences.
template <typename T>
Tensor<T> encode_text(Tape<T>& tape, const EncoderConfig& config, std::span<const TokenIds> sequences,
                      const PromptStack<T>& prompts, const FrozenBackbone<T>& backbone);

/// Image embeddings [S, d_out] (unit rows). `vision_prompts` must hold
/// config.vision_prompt_depth() entries.
template <typename T>
Tensor<T> encode_image(Tape<T>& tape, const EncoderConfig& config, std::span<const ImageSample> images,
                       std::span<const Tensor<T>> vision_prompts, const FrozenBackbone<T>& backbone);

/// Patches of each image, pixel-normalized, as rows [S * M, patch_dim].
template <typename T>
Tensor<T> patchify(const EncoderConfig& config, std::span<const ImageSample> images);

struct Prediction {
    Label label = Label::Real;
    double score = 0.5;  // p(Fake | x)
    double sim_real = 0.0;
    double sim_fake = 0.0;
};

/// Two-anchor decision: label by the larger cosine (Real on ties), score is
/// the Fake component of softmax(cos / tau).
Prediction predict_from_similarities(double sim_real, double sim_fake, double tau);

/// Full model: frozen backbone plus the trainable prompt and mapping stacks.
template <typename T>
class DualEncoder {
public:
    DualEncoder(EncoderConfig config, FrozenBackbone<T> backbone, PromptStack<T> prompts, MappingStack<T> mapping);

    static DualEncoder create(const EncoderConfig& config, std::uint64_t backbone_seed, std::uint64_t prompt_seed);

    const EncoderConfig& config() const { return config_; }
    const Vocabulary& vocabulary() const { return vocab_; }
    const FrozenBackbone<T>& backbone() const { return backbone_; }
    const PromptStack<T>& prompts() const { return prompts_; }
    const MappingStack<T>& mapping() const { return mapping_; }

    /// [2, d_out]: row 0 = e_Real, row 1 = e_Fake.
    Tensor<T> anchors(Tape<T>& tape) const;
    std::vector<Tensor<T>> vision_prompts(Tape<T>& tape) const;
    Tensor<T> encode_images(Tape<T>& tape, std::span<const ImageSample> images) const;
    Tensor<T> encode_images(Tape<T>& tape, std::span<const ImageSample> images,
                            std::span<const Tensor<T>> vision_prompts) const;

    Prediction predict(const ImageSample& image, double tau) const;
    /// Batched inference in chunks of `chunk` images.
    std::vector<Prediction> predict_all(std::span<const ImageSample> images, double tau, std::size_t chunk = 64) const;
    /// Untracked embeddings [S, d_out] plus anchors, in chunks.
    std::pair<Tensor<T>, Tensor<T>> embed_all(std::span<const ImageSample> images, std::size_t chunk = 64) const;

    /// Prompt stack then mapping stack (mapping omitted for text-only prompting).
    std::vector<Tensor<T>> trainable() const;
    void set_trainable(std::span<const Tensor<T>> params);

    /// Every tensor with a stable name, backbone first.
    std::vector<std::pair<std::string, Tensor<T>>> named_tensors() const;
    /// Replaces tensors by name; every name of named_tensors() must be present with matching shape.
    void load_named(const std::map<std::string, Tensor<T>>& tensors);

private:
    EncoderConfig config_;
    Vocabulary vocab_;
    FrozenBackbone<T> backbone_;
    PromptStack<T> prompts_;
    MappingStack<T> mapping_;
};

template <typename T>
template <typename Fn>
void FrozenBackbone<T>::visit(Fn&& fn) {
    auto layers = [&](const std::string& prefix, std::vector<TransformerLayer<T>>& ls) {
        for (std::size_t i = 0; i < ls.size(); ++i) {
            const std::string p = prefix + ".layers." + std::to_string(i) + ".";
            auto& l = ls[i];
            fn(p + "ln1_gain", l.ln1_gain);
            fn(p + "ln1_bias", l.ln1_bias);
            fn(p + "w_qkv", l.w_qkv);
            fn(p + "b_qkv", l.b_qkv);
            fn(p + "w_out", l.w_out);
            fn(p + "b_out", l.b_out);
            fn(p + "ln2_gain", l.ln2_gain);
            fn(p + "ln2_bias", l.ln2_bias);
            fn(p + "w_fc1", l.w_fc1);
            fn(p + "b_fc1", l.b_fc1);
            fn(p + "w_fc2", l.w_fc2);
            fn(p + "b_fc2", l.b_fc2);
        }
    };
    fn(std::string("backbone.text.token_embedding"), token_embedding);
    fn(std::string("backbone.text.position"), text_position);
    layers("backbone.text", text_layers);
    fn(std::string("backbone.text.ln_gain"), text_ln_gain);
    fn(std::string("backbone.text.ln_bias"), text_ln_bias);
    fn(std::string("backbone.text.proj"), text_proj);
    fn(std::string("backbone.image.patch_proj"), patch_proj);
    fn(std::string("backbone.image.class_embedding"), class_embedding);
    fn(std::string("backbone.image.position"), image_position);
    layers("backbone.image", image_layers);
    fn(std::string("backbone.image.ln_gain"), image_ln_gain);
    fn(std::string("backbone.image.ln_bias"), image_ln_bias);
    fn(std::string("backbone.image.proj"), image_proj);
}

}  // namespace mirage::model
