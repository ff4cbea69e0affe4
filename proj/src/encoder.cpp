#include "mirage/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace mirage::model {
namespace {

std::vector<std::string> split_words(std::string_view text) {
    std::istringstream is{std::string(text)};
    std::vector<std::string> out;
    for (std::string w; is >> w;) {
        std::transform(w.begin(), w.end(), w.begin(), [](unsigned char c) { return std::tolower(c); });
        out.push_back(w);
    }
    return out;
}

std::string render_words(std::string_view tmpl, std::string_view word) {
    const auto at = tmpl.find("{}");
    if (at == std::string_view::npos) throw std::invalid_argument("prompt template lacks a '{}' placeholder");
    std::string s(tmpl);
    s.replace(at, 2, word);
    return s;
}

template <typename T>
Tensor<T> normal_tensor(Rng& rng, ad::Shape shape, double stddev) {
    std::vector<T> v(ad::numel_of(shape));
    for (auto& x : v) x = static_cast<T>(rng.normal(0.0, stddev));
    return Tensor<T>(std::move(shape), std::move(v));
}

template <typename T>
Tensor<T> constant_tensor(ad::Shape shape, T value) {
    return Tensor<T>(shape, std::vector<T>(ad::numel_of(shape), value));
}

template <typename T>
TransformerLayer<T> random_layer(Rng& rng, std::size_t d, std::size_t hidden, std::size_t depth) {
    const double in_std = 1.0 / std::sqrt(static_cast<double>(d));
    const double residual = 1.0 / std::sqrt(2.0 * static_cast<double>(depth));
    TransformerLayer<T> l;
    l.ln1_gain = constant_tensor<T>({1, d}, T(1));
    l.ln1_bias = constant_tensor<T>({1, d}, T(0));
    l.w_qkv = normal_tensor<T>(rng, {d, 3 * d}, in_std);
    l.b_qkv = constant_tensor<T>({1, 3 * d}, T(0));
    l.w_out = normal_tensor<T>(rng, {d, d}, in_std * residual);
    l.b_out = constant_tensor<T>({1, d}, T(0));
    l.ln2_gain = constant_tensor<T>({1, d}, T(1));
    l.ln2_bias = constant_tensor<T>({1, d}, T(0));
    l.w_fc1 = normal_tensor<T>(rng, {d, hidden}, in_std);
    l.b_fc1 = constant_tensor<T>({1, hidden}, T(0));
    l.w_fc2 = normal_tensor<T>(rng, {hidden, d}, residual / std::sqrt(static_cast<double>(hidden)));
    l.b_fc2 = constant_tensor<T>({1, d}, T(0));
    return l;
}

// Pre-norm transformer block over packed sequences [S * seq_len, d].
template <typename T>
Tensor<T> block(Tape<T>& tape, const TransformerLayer<T>& l, const Tensor<T>& x, std::size_t seq_len,
                std::size_t heads, bool causal) {
    auto h = tape.add(tape.mul(tape.layer_norm(x), l.ln1_gain), l.ln1_bias);
    auto qkv = tape.add(tape.matmul(h, l.w_qkv), l.b_qkv);
    auto attn = tape.attention(qkv, seq_len, heads, causal);
    auto x1 = tape.add(x, tape.add(tape.matmul(attn, l.w_out), l.b_out));
    auto h2 = tape.add(tape.mul(tape.layer_norm(x1), l.ln2_gain), l.ln2_bias);
    auto f = tape.gelu(tape.add(tape.matmul(h2, l.w_fc1), l.b_fc1));
    return tape.add(x1, tape.add(tape.matmul(f, l.w_fc2), l.b_fc2));
}

// Interleaves per-sequence real tokens [S * n_real, d] with one shared prompt
// block [B, d]; prompts go before or after each sequence's real tokens.
template <typename T>
Tensor<T> insert_prompts(Tape<T>& tape, const Tensor<T>& real, std::size_t sequences, std::size_t n_real,
                         const Tensor<T>& prompt, bool prompts_first) {
    const std::size_t b = prompt.dim(0);
    const std::size_t prompt_base = sequences * n_real;
    std::vector<std::size_t> order;
    order.reserve(sequences * (n_real + b));
    for (std::size_t s = 0; s < sequences; ++s) {
        if (prompts_first)
            for (std::size_t j = 0; j < b; ++j) order.push_back(prompt_base + j);
        for (std::size_t j = 0; j < n_real; ++j) order.push_back(s * n_real + j);
        if (!prompts_first)
            for (std::size_t j = 0; j < b; ++j) order.push_back(prompt_base + j);
    }
    return tape.gather_rows(tape.concat({real, prompt}, 0), std::move(order));
}

// Rows [offset, offset + count) of every sequence of length seq_len.
template <typename T>
Tensor<T> keep_rows(Tape<T>& tape, const Tensor<T>& x, std::size_t sequences, std::size_t seq_len, std::size_t offset,
                    std::size_t count) {
    std::vector<std::size_t> idx;
    idx.reserve(sequences * count);
    for (std::size_t s = 0; s < sequences; ++s)
        for (std::size_t j = 0; j < count; ++j) idx.push_back(s * seq_len + offset + j);
    return tape.gather_rows(x, std::move(idx));
}

// Positional table rows [0, n) tiled over S sequences.
template <typename T>
Tensor<T> tiled_positions(const Tensor<T>& table, std::size_t sequences, std::size_t n) {
    const std::size_t d = table.dim(1);
    std::vector<T> out;
    out.reserve(sequences * n * d);
    for (std::size_t s = 0; s < sequences; ++s)
        out.insert(out.end(), table.data().begin(), table.data().begin() + n * d);
    return Tensor<T>({sequences * n, d}, std::move(out));
}

// Shared layer loop for both towers, following the prompt-injection rule:
// layers [0, prompted) see fresh prompts, later layers carry the previous
// output (including the last prompt slots) forward unchanged in structure.
template <typename T>
Tensor<T> run_tower(Tape<T>& tape, const std::vector<TransformerLayer<T>>& layers, Tensor<T> real, std::size_t sequences,
                    std::size_t n_real, std::span<const Tensor<T>> prompts, bool prompts_first, std::size_t heads,
                    bool causal, std::size_t& seq_len_out) {
    const std::size_t prompted = prompts.size();
    const std::size_t b = prompted ? prompts[0].dim(0) : 0;
    const std::size_t real_offset = prompts_first ? b : 0;
    Tensor<T> x = real;
    std::size_t seq_len = n_real;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (i < prompted) {
            if (i > 0) real = keep_rows(tape, x, sequences, seq_len, real_offset, n_real);
            x = b ? insert_prompts(tape, real, sequences, n_real, prompts[i], prompts_first) : real;
            seq_len = n_real + b;
        }
        x = block(tape, layers[i], x, seq_len, heads, causal);
    }
    seq_len_out = seq_len;
    return x;
}

}  // namespace

void EncoderConfig::validate() const {
    auto fail = [](const std::string& m) { throw std::invalid_argument("encoder config: " + m); };
    if (embed_dim == 0 || out_dim == 0) fail("embed_dim and out_dim must be positive");
    if (text_depth == 0 || image_depth == 0) fail("tower depths must be positive");
    if (prompt_depth > std::min(text_depth, image_depth))
        fail("prompt_depth " + std::to_string(prompt_depth) + " exceeds min(text_depth, image_depth)");
    if ((prompt_length == 0) != (prompt_depth == 0)) fail("prompt_length and prompt_depth must be both zero or both positive");
    if (patch_size == 0 || image_side == 0 || image_side % patch_size != 0)
        fail("image_side " + std::to_string(image_side) + " not divisible by patch_size " + std::to_string(patch_size));
    if (channels != 1 && channels != 3) fail("channels must be 1 or 3");
    if (head_count == 0 || embed_dim % head_count != 0)
        fail("embed_dim " + std::to_string(embed_dim) + " not divisible by head_count " + std::to_string(head_count));
    if (mlp_ratio == 0) fail("mlp_ratio must be positive");
    if (!(prompt_init_std >= 0.0)) fail("prompt_init_std must be non-negative");
    const auto vocab = Vocabulary::for_template(prompt_template, real_word, fake_word);
    if (vocab.size() > vocab_size)
        fail("vocabulary needs " + std::to_string(vocab.size()) + " ids but vocab_size is " + std::to_string(vocab_size));
    if (vocab.prompt_length() > context_length) fail("prompt longer than context_length");
}

Vocabulary Vocabulary::for_template(std::string_view prompt_template, std::string_view real_word,
                                    std::string_view fake_word) {
    Vocabulary v;
    v.template_ = prompt_template;
    v.real_word_ = real_word;
    v.fake_word_ = fake_word;
    v.tokens_.push_back("<pad>");
    v.ids_.emplace("<pad>", 0);
    for (auto* w : {&v.real_word_, &v.fake_word_}) {
        for (const auto& tok : split_words(render_words(prompt_template, *w))) {
            if (v.ids_.emplace(tok, v.tokens_.size()).second) v.tokens_.push_back(tok);
        }
    }
    if (v.words(Label::Real).size() != v.words(Label::Fake).size())
        throw std::invalid_argument("prompt template renders the two labels to different lengths");
    if (v.prompt_length() == 0) throw std::invalid_argument("prompt template renders to zero tokens");
    return v;
}

std::size_t Vocabulary::id(std::string_view token) const {
    auto it = ids_.find(token);
    if (it == ids_.end()) throw std::out_of_range("token '" + std::string(token) + "' not in vocabulary");
    return it->second;
}

std::vector<std::string> Vocabulary::words(Label label) const {
    if (label != Label::Real && label != Label::Fake)
        throw std::invalid_argument("unknown label " + std::to_string(static_cast<int>(label)));
    return split_words(render_words(template_, label == Label::Real ? real_word_ : fake_word_));
}

TokenIds render_prompt(Label label, const Vocabulary& vocab) {
    TokenIds ids;
    for (const auto& w : vocab.words(label)) ids.push_back(vocab.id(w));
    return ids;
}

template <typename T>
FrozenBackbone<T> FrozenBackbone<T>::random(const EncoderConfig& c, std::uint64_t seed) {
    c.validate();
    Rng rng(mix_seed(seed, 0xB0B));
    const std::size_t d = c.embed_dim;
    const std::size_t hidden = d * c.mlp_ratio;
    const double proj_std = 1.0 / std::sqrt(static_cast<double>(d));
    FrozenBackbone b;
    b.token_embedding = normal_tensor<T>(rng, {c.vocab_size, d}, 1.0);
    b.text_position = normal_tensor<T>(rng, {c.context_length, d}, 0.1);
    for (std::size_t i = 0; i < c.text_depth; ++i) b.text_layers.push_back(random_layer<T>(rng, d, hidden, c.text_depth));
    b.text_ln_gain = constant_tensor<T>({1, d}, T(1));
    b.text_ln_bias = constant_tensor<T>({1, d}, T(0));
    b.text_proj = normal_tensor<T>(rng, {d, c.out_dim}, proj_std);
    b.patch_proj = normal_tensor<T>(rng, {c.patch_dim(), d}, 1.0 / std::sqrt(static_cast<double>(c.patch_dim())));
    b.class_embedding = normal_tensor<T>(rng, {1, d}, 1.0);
    b.image_position = normal_tensor<T>(rng, {c.patch_count() + 1, d}, 0.1);
    for (std::size_t i = 0; i < c.image_depth; ++i)
        b.image_layers.push_back(random_layer<T>(rng, d, hidden, c.image_depth));
    b.image_ln_gain = constant_tensor<T>({1, d}, T(1));
    b.image_ln_bias = constant_tensor<T>({1, d}, T(0));
    b.image_proj = normal_tensor<T>(rng, {d, c.out_dim}, proj_std);
    return b;
}

template <typename T>
PromptStack<T> PromptStack<T>::random(const EncoderConfig& c, std::uint64_t seed) {
    Rng rng(mix_seed(seed, 0x9E0));
    PromptStack p;
    for (std::size_t i = 0; i < c.prompt_depth; ++i)
        p.layers.push_back(normal_tensor<T>(rng, {c.prompt_length, c.embed_dim}, c.prompt_init_std).as_leaf());
    return p;
}

template <typename T>
MappingStack<T> MappingStack<T>::random(const EncoderConfig& c, std::uint64_t seed) {
    Rng rng(mix_seed(seed, 0x3A9));
    const std::size_t d = c.embed_dim;
    const double std_in = 1.0 / std::sqrt(static_cast<double>(d));
    MappingStack m;
    m.kind = c.mapping;
    for (std::size_t i = 0; i < c.vision_prompt_depth(); ++i) {
        MappingLayer<T> l;
        l.w1 = normal_tensor<T>(rng, {d, d}, std_in).as_leaf();
        l.b1 = constant_tensor<T>({1, d}, T(0)).as_leaf();
        if (c.mapping == MappingKind::Mlp2) {
            l.w2 = normal_tensor<T>(rng, {d, d}, std_in).as_leaf();
            l.b2 = constant_tensor<T>({1, d}, T(0)).as_leaf();
        }
        m.layers.push_back(std::move(l));
    }
    return m;
}

template <typename T>
std::vector<Tensor<T>> map_prompts(Tape<T>& tape, const PromptStack<T>& prompts, const MappingStack<T>& mapping) {
    if (prompts.depth() != mapping.depth())
        throw std::invalid_argument("map_prompts: prompt depth " + std::to_string(prompts.depth()) +
                                    " != mapping depth " + std::to_string(mapping.depth()));
    std::vector<Tensor<T>> out;
    out.reserve(prompts.depth());
    for (std::size_t i = 0; i < prompts.depth(); ++i) {
        const auto& l = mapping.layers[i];
        auto y = tape.add(tape.matmul(prompts.layers[i], l.w1), l.b1);
        if (mapping.kind == MappingKind::Mlp2) y = tape.add(tape.matmul(tape.gelu(y), l.w2), l.b2);
        out.push_back(std::move(y));
    }
    return out;
}

template <typename T>
Tensor<T> encode_text(Tape<T>& tape, const EncoderConfig& c, std::span<const TokenIds> sequences,
                      const PromptStack<T>& prompts, const FrozenBackbone<T>& bb) {
    if (sequences.empty()) throw std::invalid_argument("encode_text: no sequences");
    const std::size_t n = sequences[0].size();
    if (n == 0) throw std::invalid_argument("encode_text: empty token sequence");
    if (n > c.context_length) throw std::invalid_argument("encode_text: sequence longer than context_length");
    if (prompts.depth() != c.prompt_depth)
        throw std::invalid_argument("encode_text: prompt stack depth " + std::to_string(prompts.depth()) +
                                    " != configured " + std::to_string(c.prompt_depth));
    std::vector<std::size_t> ids;
    for (const auto& seq : sequences) {
        if (seq.size() != n) throw std::invalid_argument("encode_text: sequences differ in length");
        for (auto id : seq) {
            if (id >= bb.token_embedding.dim(0)) throw std::out_of_range("encode_text: token id out of range");
            ids.push_back(id);
        }
    }
    const std::size_t s = sequences.size();
    auto x = tape.add(tape.gather_rows(bb.token_embedding, std::move(ids)), tiled_positions(bb.text_position, s, n));
    std::size_t seq_len = 0;
    x = run_tower<T>(tape, bb.text_layers, x, s, n, prompts.layers, true, c.head_count, true, seq_len);
    std::vector<std::size_t> last;
    for (std::size_t i = 0; i < s; ++i) last.push_back(i * seq_len + seq_len - 1);
    auto pooled = tape.add(tape.mul(tape.layer_norm(tape.gather_rows(x, std::move(last))), bb.text_ln_gain), bb.text_ln_bias);
    return tape.l2_normalize(tape.matmul(pooled, bb.text_proj));
}

template <typename T>
Tensor<T> patchify(const EncoderConfig& c, std::span<const ImageSample> images) {
    const std::size_t p = c.patch_size;
    const std::size_t per_side = c.image_side / p;
    const std::size_t m = c.patch_count();
    const std::size_t pd = c.patch_dim();
    std::vector<T> out(images.size() * m * pd);
    for (std::size_t s = 0; s < images.size(); ++s) {
        const auto& img = images[s];
        if (img.side != c.image_side || img.channels != c.channels || img.pixels.size() != img.side * img.side * img.channels)
            throw std::invalid_argument("encode_image: image " + std::to_string(img.side) + "x" +
                                        std::to_string(img.side) + "x" + std::to_string(img.channels) +
                                        " does not match configured " + std::to_string(c.image_side) + "x" +
                                        std::to_string(c.image_side) + "x" + std::to_string(c.channels));
        for (std::size_t py = 0; py < per_side; ++py)
            for (std::size_t px = 0; px < per_side; ++px) {
                T* row = out.data() + ((s * m) + py * per_side + px) * pd;
                std::size_t k = 0;
                for (std::size_t ch = 0; ch < c.channels; ++ch)
                    for (std::size_t y = 0; y < p; ++y)
                        for (std::size_t x = 0; x < p; ++x)
                            row[k++] = (static_cast<T>(img.at(py * p + y, px * p + x, ch)) - T(0.5)) / T(0.25);
            }
    }
    return Tensor<T>({images.size() * m, pd}, std::move(out));
}

template <typename T>
Tensor<T> encode_image(Tape<T>& tape, const EncoderConfig& c, std::span<const ImageSample> images,
                       std::span<const Tensor<T>> vision_prompts, const FrozenBackbone<T>& bb) {
    if (images.empty()) throw std::invalid_argument("encode_image: no images");
    if (vision_prompts.size() != c.vision_prompt_depth())
        throw std::invalid_argument("encode_image: vision prompt depth " + std::to_string(vision_prompts.size()) +
                                    " != configured " + std::to_string(c.vision_prompt_depth()));
    const std::size_t s = images.size();
    const std::size_t m = c.patch_count();
    auto patches = tape.matmul(patchify<T>(c, images), bb.patch_proj);
    // [c0, E0] per sample: row 0 of the stacked table is the class embedding.
    std::vector<std::size_t> order;
    order.reserve(s * (m + 1));
    for (std::size_t i = 0; i < s; ++i) {
        order.push_back(0);
        for (std::size_t j = 0; j < m; ++j) order.push_back(1 + i * m + j);
    }
    auto tokens = tape.gather_rows(tape.concat({bb.class_embedding, patches}, 0), std::move(order));
    auto x = tape.add(tokens, tiled_positions(bb.image_position, s, m + 1));
    std::size_t seq_len = 0;
    x = run_tower<T>(tape, bb.image_layers, x, s, m + 1, vision_prompts, false, c.head_count, false, seq_len);
    std::vector<std::size_t> cls;
    for (std::size_t i = 0; i < s; ++i) cls.push_back(i * seq_len);
    auto pooled = tape.add(tape.mul(tape.layer_norm(tape.gather_rows(x, std::move(cls))), bb.image_ln_gain), bb.image_ln_bias);
    return tape.l2_normalize(tape.matmul(pooled, bb.image_proj));
}

Prediction predict_from_similarities(double sim_real, double sim_fake, double tau) {
    if (!(tau > 0.0)) throw std::invalid_argument("temperature must be positive");
    Prediction p;
    p.sim_real = sim_real;
    p.sim_fake = sim_fake;
    p.label = sim_fake > sim_real ? Label::Fake : Label::Real;
    p.score = 1.0 / (1.0 + std::exp((sim_real - sim_fake) / tau));
    return p;
}

template <typename T>
DualEncoder<T>::DualEncoder(EncoderConfig config, FrozenBackbone<T> backbone, PromptStack<T> prompts,
                            MappingStack<T> mapping)
    : config_(std::move(config)),
      vocab_(Vocabulary::for_template(config_.prompt_template, config_.real_word, config_.fake_word)),
      backbone_(std::move(backbone)),
      prompts_(std::move(prompts)),
      mapping_(std::move(mapping)) {
    config_.validate();
    if (prompts_.depth() != config_.prompt_depth) throw std::invalid_argument("prompt stack depth does not match config");
    if (mapping_.depth() != config_.vision_prompt_depth())
        throw std::invalid_argument("mapping stack depth does not match config");
}

template <typename T>
DualEncoder<T> DualEncoder<T>::create(const EncoderConfig& config, std::uint64_t backbone_seed, std::uint64_t prompt_seed) {
    return DualEncoder(config, FrozenBackbone<T>::random(config, backbone_seed), PromptStack<T>::random(config, prompt_seed),
                       MappingStack<T>::random(config, prompt_seed));
}

template <typename T>
Tensor<T> DualEncoder<T>::anchors(Tape<T>& tape) const {
    const std::vector<TokenIds> seqs{render_prompt(Label::Real, vocab_), render_prompt(Label::Fake, vocab_)};
    return encode_text<T>(tape, config_, seqs, prompts_, backbone_);
}

template <typename T>
std::vector<Tensor<T>> DualEncoder<T>::vision_prompts(Tape<T>& tape) const {
    if (!config_.vision_prompts) return {};
    return map_prompts(tape, prompts_, mapping_);
}

template <typename T>
Tensor<T> DualEncoder<T>::encode_images(Tape<T>& tape, std::span<const ImageSample> images) const {
    const auto vp = vision_prompts(tape);
    return encode_images(tape, images, vp);
}

template <typename T>
Tensor<T> DualEncoder<T>::encode_images(Tape<T>& tape, std::span<const ImageSample> images,
                                        std::span<const Tensor<T>> vp) const {
    return encode_image<T>(tape, config_, images, vp, backbone_);
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> DualEncoder<T>::embed_all(std::span<const ImageSample> images, std::size_t chunk) const {
    Tape<T> tape;
    std::vector<Tensor<T>> vp;
    for (const auto& v : vision_prompts(tape)) vp.push_back(v.detach());
    const auto anchors_t = anchors(tape);
    std::vector<T> rows;
    rows.reserve(images.size() * config_.out_dim);
    for (std::size_t start = 0; start < images.size(); start += chunk) {
        const auto part = images.subspan(start, std::min(chunk, images.size() - start));
        const auto h = encode_images(tape, part, vp);
        rows.insert(rows.end(), h.data().begin(), h.data().end());
    }
    return {Tensor<T>({images.size(), config_.out_dim}, std::move(rows)), anchors_t.detach()};
}

template <typename T>
std::vector<Prediction> DualEncoder<T>::predict_all(std::span<const ImageSample> images, double tau,
                                                    std::size_t chunk) const {
    std::vector<Prediction> out;
    if (images.empty()) return out;
    const auto [h, a] = embed_all(images, chunk);
    const std::size_t d = config_.out_dim;
    for (std::size_t i = 0; i < images.size(); ++i) {
        double sr = 0, sf = 0;
        for (std::size_t j = 0; j < d; ++j) {
            sr += static_cast<double>(h.at(i, j)) * static_cast<double>(a.at(0, j));
            sf += static_cast<double>(h.at(i, j)) * static_cast<double>(a.at(1, j));
        }
        out.push_back(predict_from_similarities(sr, sf, tau));
    }
    return out;
}

template <typename T>
Prediction DualEncoder<T>::predict(const ImageSample& image, double tau) const {
    return predict_all(std::span(&image, 1), tau).front();
}

template <typename T>
std::vector<Tensor<T>> DualEncoder<T>::trainable() const {
    std::vector<Tensor<T>> out(prompts_.layers.begin(), prompts_.layers.end());
    for (const auto& l : mapping_.layers) {
        out.push_back(l.w1);
        out.push_back(l.b1);
        if (mapping_.kind == MappingKind::Mlp2) {
            out.push_back(l.w2);
            out.push_back(l.b2);
        }
    }
    return out;
}

template <typename T>
void DualEncoder<T>::set_trainable(std::span<const Tensor<T>> params) {
    const auto current = trainable();
    if (params.size() != current.size()) throw std::invalid_argument("set_trainable: parameter count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i)
        if (params[i].shape() != current[i].shape()) throw ad::ShapeError("set_trainable: shape mismatch at " + std::to_string(i));
    std::size_t k = 0;
    for (auto& p : prompts_.layers) p = params[k++];
    for (auto& l : mapping_.layers) {
        l.w1 = params[k++];
        l.b1 = params[k++];
        if (mapping_.kind == MappingKind::Mlp2) {
            l.w2 = params[k++];
            l.b2 = params[k++];
        }
    }
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>>> DualEncoder<T>::named_tensors() const {
    std::vector<std::pair<std::string, Tensor<T>>> out;
    auto bb = backbone_;
    bb.visit([&](const std::string& name, Tensor<T>& t) { out.emplace_back(name, t); });
    for (std::size_t i = 0; i < prompts_.layers.size(); ++i) out.emplace_back("prompts." + std::to_string(i), prompts_.layers[i]);
    for (std::size_t i = 0; i < mapping_.layers.size(); ++i) {
        const auto& l = mapping_.layers[i];
        const std::string p = "mapping." + std::to_string(i) + ".";
        out.emplace_back(p + "w1", l.w1);
        out.emplace_back(p + "b1", l.b1);
        if (mapping_.kind == MappingKind::Mlp2) {
            out.emplace_back(p + "w2", l.w2);
            out.emplace_back(p + "b2", l.b2);
        }
    }
    return out;
}

template <typename T>
void DualEncoder<T>::load_named(const std::map<std::string, Tensor<T>>& tensors) {
    auto fetch = [&](const std::string& name, const Tensor<T>& like, bool tracked) {
        auto it = tensors.find(name);
        if (it == tensors.end()) throw std::invalid_argument("checkpoint lacks tensor '" + name + "'");
        if (it->second.shape() != like.shape())
            throw ad::ShapeError("tensor '" + name + "' has shape " + ad::shape_str(it->second.shape()) + ", expected " +
                                 ad::shape_str(like.shape()));
        return Tensor<T>(like.shape(), it->second.values(), tracked);
    };
    backbone_.visit([&](const std::string& name, Tensor<T>& t) { t = fetch(name, t, false); });
    for (std::size_t i = 0; i < prompts_.layers.size(); ++i)
        prompts_.layers[i] = fetch("prompts." + std::to_string(i), prompts_.layers[i], true);
    for (std::size_t i = 0; i < mapping_.layers.size(); ++i) {
        auto& l = mapping_.layers[i];
        const std::string p = "mapping." + std::to_string(i) + ".";
        l.w1 = fetch(p + "w1", l.w1, true);
        l.b1 = fetch(p + "b1", l.b1, true);
        if (mapping_.kind == MappingKind::Mlp2) {
            l.w2 = fetch(p + "w2", l.w2, true);
            l.b2 = fetch(p + "b2", l.b2, true);
        }
    }
}

#define MIRAGE_INSTANTIATE_ENCODER(T)                                                                                  \
    template struct FrozenBackbone<T>;                                                                                 \
    template struct PromptStack<T>;                                                                                    \
    template struct MappingStack<T>;                                                                                   \
    template class DualEncoder<T>;                                                                                     \
    template std::vector<Tensor<T>> map_prompts(Tape<T>&, const PromptStack<T>&, const MappingStack<T>&);             \
    template Tensor<T> encode_text(Tape<T>&, const EncoderConfig&, std::span<const TokenIds>, const PromptStack<T>&, \
                                   const FrozenBackbone<T>&);                                                         \
    template Tensor<T> encode_image(Tape<T>&, const EncoderConfig&, std::span<const ImageSample>,                     \
                                    std::span<const Tensor<T>>, const FrozenBackbone<T>&);                            \
    template Tensor<T> patchify(const EncoderConfig&, std::span<const ImageSample>);

MIRAGE_INSTANTIATE_ENCODER(float)
MIRAGE_INSTANTIATE_ENCODER(double)

}  // namespace mirage::model
