#include "mirage/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace mirage::config {
namespace {

using nlohmann::json;

// Walks one JSON object, remembering which keys were read so leftovers can be
// rejected.
class Reader {
public:
    Reader(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
        if (!obj_.is_object()) throw ConfigError(where() + " must be an object");
    }

    bool has(const std::string& key) {
        if (!obj_.contains(key)) return false;
        seen_.insert(key);
        return true;
    }

    const json& raw(const std::string& key) { return obj_.at(key); }
    std::string where(const std::string& key = "") const { return key.empty() ? path_ : path_ + "." + key; }

    template <typename T>
    void read(const std::string& key, T& out) {
        if (!has(key)) return;
        const json& v = obj_.at(key);
        try {
            if constexpr (std::is_same_v<T, bool>) {
                if (!v.is_boolean()) throw ConfigError("");
                out = v.get<bool>();
            } else if constexpr (std::is_integral_v<T>) {
                if (!v.is_number_unsigned()) throw ConfigError("");
                out = v.get<T>();
            } else if constexpr (std::is_floating_point_v<T>) {
                if (!v.is_number()) throw ConfigError("");
                out = v.get<T>();
            } else {
                if (!v.is_string()) throw ConfigError("");
                out = v.get<T>();
            }
        } catch (const std::exception&) {
            throw ConfigError(where(key) + ": wrong type (" + std::string(v.type_name()) + ")");
        }
    }

    void finish() const {
        for (const auto& [key, _] : obj_.items())
            if (!seen_.count(key)) throw ConfigError("unknown key '" + where(key) + "'");
    }

private:
    const json& obj_;
    std::string path_;
    std::set<std::string> seen_;
};

template <typename Fn>
auto rethrow_as_config(const std::string& where, Fn&& fn) {
    try {
        return fn();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(where + ": " + e.what());
    }
}

std::string mapping_name(model::MappingKind k) { return k == model::MappingKind::Linear ? "linear" : "mlp2"; }

model::MappingKind parse_mapping(const std::string& s) {
    if (s == "linear") return model::MappingKind::Linear;
    if (s == "mlp2") return model::MappingKind::Mlp2;
    throw ConfigError("unknown mapping '" + s + "' (expected linear or mlp2)");
}

void read_encoder(Reader r, model::EncoderConfig& e) {
    r.read("embed_dim", e.embed_dim);
    r.read("out_dim", e.out_dim);
    r.read("text_depth", e.text_depth);
    r.read("image_depth", e.image_depth);
    r.read("prompt_depth", e.prompt_depth);
    r.read("prompt_length", e.prompt_length);
    r.read("patch_size", e.patch_size);
    r.read("image_side", e.image_side);
    r.read("channels", e.channels);
    r.read("vocab_size", e.vocab_size);
    r.read("context_length", e.context_length);
    r.read("head_count", e.head_count);
    r.read("mlp_ratio", e.mlp_ratio);
    std::string mapping = mapping_name(e.mapping);
    r.read("mapping", mapping);
    e.mapping = parse_mapping(mapping);
    r.read("vision_prompts", e.vision_prompts);
    r.read("prompt_init_std", e.prompt_init_std);
    r.read("prompt_template", e.prompt_template);
    r.read("real_word", e.real_word);
    r.read("fake_word", e.fake_word);
    r.finish();
}

json write_encoder(const model::EncoderConfig& e) {
    return {{"embed_dim", e.embed_dim},
            {"out_dim", e.out_dim},
            {"text_depth", e.text_depth},
            {"image_depth", e.image_depth},
            {"prompt_depth", e.prompt_depth},
            {"prompt_length", e.prompt_length},
            {"patch_size", e.patch_size},
            {"image_side", e.image_side},
            {"channels", e.channels},
            {"vocab_size", e.vocab_size},
            {"context_length", e.context_length},
            {"head_count", e.head_count},
            {"mlp_ratio", e.mlp_ratio},
            {"mapping", mapping_name(e.mapping)},
            {"vision_prompts", e.vision_prompts},
            {"prompt_init_std", e.prompt_init_std},
            {"prompt_template", e.prompt_template},
            {"real_word", e.real_word},
            {"fake_word", e.fake_word}};
}

void read_loss(Reader r, objective::LossConfig& l) {
    r.read("temperature", l.temperature);
    r.read("alpha", l.alpha);
    r.read("bank_capacity", l.bank_capacity);
    r.read("bank_enabled", l.bank_enabled);
    r.read("normalize_dis", l.normalize_dis);
    r.finish();
}

json write_loss(const objective::LossConfig& l) {
    return {{"temperature", l.temperature},
            {"alpha", l.alpha},
            {"bank_capacity", l.bank_capacity},
            {"bank_enabled", l.bank_enabled},
            {"normalize_dis", l.normalize_dis}};
}

void read_optim(Reader r, OptimConfig& o) {
    r.read("lr", o.lr);
    r.read("min_lr", o.min_lr);
    r.read("momentum", o.momentum);
    r.read("epochs", o.epochs);
    r.read("batch_size", o.batch_size);
    r.finish();
}

json write_optim(const OptimConfig& o) {
    return {{"lr", o.lr}, {"min_lr", o.min_lr}, {"momentum", o.momentum}, {"epochs", o.epochs}, {"batch_size", o.batch_size}};
}

void read_pipeline(const json& arr, const std::string& where, synth::AugmentationPipeline& p) {
    if (!arr.is_array()) throw ConfigError(where + " must be an array");
    p.stages.clear();
    for (std::size_t i = 0; i < arr.size(); ++i) {
        Reader r(arr[i], where + "[" + std::to_string(i) + "]");
        std::string kind;
        synth::AugmentStage s{synth::AugmentKind::GaussNoise, 0.0, 0.0, 0.0};
        if (!r.has("kind")) throw ConfigError(r.where("kind") + " is required");
        r.read("kind", kind);
        s.kind = rethrow_as_config(r.where("kind"), [&] { return synth::parse_augment_kind(kind); });
        r.read("probability", s.probability);
        r.read("low", s.low);
        r.read("high", s.high);
        r.finish();
        p.stages.push_back(s);
    }
}

json write_pipeline(const synth::AugmentationPipeline& p) {
    json arr = json::array();
    for (const auto& s : p.stages)
        arr.push_back({{"kind", synth::augment_kind_name(s.kind)}, {"probability", s.probability}, {"low", s.low}, {"high", s.high}});
    return arr;
}

GeneratorId read_family(const std::string& name, const std::string& where) {
    return rethrow_as_config(where, [&] { return parse_generator(name); });
}

void read_data(Reader r, DataSpec& d) {
    std::string family(generator_name(d.train_family));
    r.read("train_family", family);
    d.train_family = read_family(family, r.where("train_family"));
    r.read("train_real", d.train_real);
    r.read("train_fake", d.train_fake);
    r.read("holdout", d.holdout);
    r.read("strength", d.strength);
    r.read("correlation_min", d.correlation_min);
    r.read("correlation_max", d.correlation_max);
    r.read("contrast", d.contrast);
    r.read("sensor_noise", d.sensor_noise);
    r.read("augment", d.augment);
    if (r.has("augmentation")) read_pipeline(r.raw("augmentation"), r.where("augmentation"), d.augmentation);
    r.finish();
}

json write_data(const DataSpec& d) {
    return {{"train_family", generator_name(d.train_family)},
            {"train_real", d.train_real},
            {"train_fake", d.train_fake},
            {"holdout", d.holdout},
            {"strength", d.strength},
            {"correlation_min", d.correlation_min},
            {"correlation_max", d.correlation_max},
            {"contrast", d.contrast},
            {"sensor_noise", d.sensor_noise},
            {"augment", d.augment},
            {"augmentation", write_pipeline(d.augmentation)}};
}

template <typename T, typename Parse>
std::vector<T> read_string_list(const json& arr, const std::string& where, Parse parse) {
    if (!arr.is_array()) throw ConfigError(where + " must be an array");
    std::vector<T> out;
    for (std::size_t i = 0; i < arr.size(); ++i) {
        const std::string at = where + "[" + std::to_string(i) + "]";
        if (!arr[i].is_string()) throw ConfigError(at + " must be a string");
        out.push_back(rethrow_as_config(at, [&] { return parse(arr[i].get<std::string>()); }));
    }
    return out;
}

void read_protocol(Reader r, ProtocolSpec& p) {
    if (r.has("test_families"))
        p.test_families = read_string_list<GeneratorId>(r.raw("test_families"), r.where("test_families"),
                                                        [](const std::string& s) { return parse_generator(s); });
    r.read("test_count", p.test_count);
    if (r.has("degradations"))
        p.degradations = read_string_list<synth::DegradationSpec>(r.raw("degradations"), r.where("degradations"),
                                                                  synth::parse_degradation);
    if (r.has("seeds")) {
        const json& arr = r.raw("seeds");
        if (!arr.is_array()) throw ConfigError(r.where("seeds") + " must be an array");
        p.seeds.clear();
        for (const auto& v : arr) {
            if (!v.is_number_unsigned()) throw ConfigError(r.where("seeds") + " entries must be non-negative integers");
            p.seeds.push_back(v.get<std::uint64_t>());
        }
    }
    if (r.has("arms")) p.arms = read_string_list<Arm>(r.raw("arms"), r.where("arms"), parse_arm);
    r.finish();
}

json write_protocol(const ProtocolSpec& p) {
    json families = json::array(), degradations = json::array(), arms = json::array();
    for (auto f : p.test_families) families.push_back(generator_name(f));
    for (const auto& d : p.degradations) degradations.push_back(d.label());
    for (auto a : p.arms) arms.push_back(arm_name(a));
    return {{"test_families", families},
            {"test_count", p.test_count},
            {"degradations", degradations},
            {"seeds", p.seeds},
            {"arms", arms}};
}

}  // namespace

std::string arm_name(Arm arm) {
    switch (arm) {
        case Arm::Full: return "full";
        case Arm::NoBank: return "no-bank";
        case Arm::CeOnly: return "ce-only";
        case Arm::SingleModal: return "single-modal";
    }
    throw ConfigError("unknown arm");
}

Arm parse_arm(const std::string& name) {
    for (Arm a : {Arm::Full, Arm::NoBank, Arm::CeOnly, Arm::SingleModal})
        if (arm_name(a) == name) return a;
    throw ConfigError("unknown arm '" + name + "' (expected full, no-bank, ce-only or single-modal)");
}

void apply_arm(Arm arm, model::EncoderConfig& encoder, objective::LossConfig& loss) {
    switch (arm) {
        case Arm::Full: break;
        case Arm::NoBank: loss.bank_enabled = false; break;
        case Arm::CeOnly:
            loss.alpha = 0.0;
            loss.bank_enabled = false;
            break;
        case Arm::SingleModal:
            // Text-only prompts with the cross-entropy objective.
            encoder.vision_prompts = false;
            loss.alpha = 0.0;
            loss.bank_enabled = false;
            break;
    }
}

void OptimConfig::validate() const {
    if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("optim.lr must be positive");
    if (!(min_lr >= 0.0 && min_lr <= lr)) throw ConfigError("optim.min_lr must lie in [0, lr]");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("optim.momentum must lie in [0, 1)");
    if (batch_size == 0) throw ConfigError("optim.batch_size must be positive");
}

synth::GeneratorSpec DataSpec::generator(GeneratorId family) const {
    synth::GeneratorSpec g;
    g.family = family;
    g.strength = family == GeneratorId::Natural ? 0.0 : strength;
    g.correlation_min = correlation_min;
    g.correlation_max = correlation_max;
    g.contrast = contrast;
    g.sensor_noise = sensor_noise;
    return g;
}

void DataSpec::validate() const {
    if (train_family == GeneratorId::Natural) throw ConfigError("data.train_family must be a fake family");
    if (train_real == 0 || train_fake == 0) throw ConfigError("data.train_real and data.train_fake must be positive");
    if (holdout == 0) throw ConfigError("data.holdout must be positive");
    rethrow_as_config("data", [&] {
        generator(train_family).validate();
        augmentation.validate();
        return 0;
    });
}

void ProtocolSpec::validate() const {
    if (test_families.empty()) throw ConfigError("protocol.test_families must not be empty");
    std::set<GeneratorId> uniq;
    for (auto f : test_families) {
        if (f == GeneratorId::Natural) throw ConfigError("protocol.test_families lists fake families only");
        if (!uniq.insert(f).second) throw ConfigError("protocol.test_families has a duplicate");
    }
    if (test_count == 0) throw ConfigError("protocol.test_count must be positive");
    if (seeds.empty()) throw ConfigError("protocol.seeds must not be empty");
    if (arms.empty()) throw ConfigError("protocol.arms must not be empty");
    std::set<std::string> labels;
    for (const auto& d : degradations) {
        rethrow_as_config("protocol.degradations", [&] {
            d.validate();
            return 0;
        });
        if (!labels.insert(d.label()).second) throw ConfigError("protocol.degradations has a duplicate");
    }
}

void RunConfig::validate() const {
    rethrow_as_config("encoder", [&] {
        encoder.validate();
        return 0;
    });
    rethrow_as_config("loss", [&] {
        loss.validate();
        return 0;
    });
    optim.validate();
    data.validate();
    protocol.validate();
    if (out_dir.empty()) throw ConfigError("out_dir must not be empty");
    // Each arm must still produce a valid encoder.
    for (Arm a : protocol.arms) {
        auto e = encoder;
        auto l = loss;
        apply_arm(a, e, l);
        rethrow_as_config("arm " + arm_name(a), [&] {
            e.validate();
            l.validate();
            return 0;
        });
    }
}

RunConfig parse_config(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    RunConfig c;
    Reader r(doc, "config");
    if (r.has("encoder")) read_encoder(Reader(r.raw("encoder"), "encoder"), c.encoder);
    if (r.has("loss")) read_loss(Reader(r.raw("loss"), "loss"), c.loss);
    if (r.has("optim")) read_optim(Reader(r.raw("optim"), "optim"), c.optim);
    if (r.has("data")) read_data(Reader(r.raw("data"), "data"), c.data);
    if (r.has("protocol")) read_protocol(Reader(r.raw("protocol"), "protocol"), c.protocol);
    r.read("seed", c.seed);
    r.read("backbone_seed", c.backbone_seed);
    r.read("out_dir", c.out_dir);
    r.finish();
    c.validate();
    return c;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string serialize_config(const RunConfig& c) {
    const json doc = {{"encoder", write_encoder(c.encoder)},
                      {"loss", write_loss(c.loss)},
                      {"optim", write_optim(c.optim)},
                      {"data", write_data(c.data)},
                      {"protocol", write_protocol(c.protocol)},
                      {"seed", c.seed},
                      {"backbone_seed", c.backbone_seed},
                      {"out_dir", c.out_dir}};
    return doc.dump(2) + "\n";
}

}  // namespace mirage::config
