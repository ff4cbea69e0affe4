#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "mirage/synth.hpp"
#include "oracles.hpp"

using namespace mirage;
using namespace mirage::synth;

namespace {

GeneratorSpec spec_of(GeneratorId family, double strength) {
    GeneratorSpec s;
    s.family = family;
    s.strength = strength;
    return s;
}

double max_abs_diff(const ImageSample& a, const ImageSample& b) {
    double m = 0;
    for (std::size_t i = 0; i < a.pixels.size(); ++i) m = std::max(m, std::abs(double(a.pixels[i]) - b.pixels[i]));
    return m;
}

bool in_unit_range(const ImageSample& s) {
    return std::all_of(s.pixels.begin(), s.pixels.end(), [](float v) { return v >= 0.0f && v <= 1.0f; });
}

double probe(const GeneratorSpec& a, const GeneratorSpec& b, std::size_t n) {
    return oracle::logistic_probe(generate_dataset(a, n, 101), generate_dataset(b, n, 202), generate_dataset(a, n / 2, 303),
                                  generate_dataset(b, n / 2, 404));
}

constexpr GeneratorId kFakes[] = {GeneratorId::Checker, GeneratorId::Spectral, GeneratorId::Seam};

}  // namespace

TEST_CASE("generation is deterministic and labelled") {
    for (auto family : {GeneratorId::Natural, GeneratorId::Checker, GeneratorId::Spectral, GeneratorId::Seam}) {
        const auto s = spec_of(family, family == GeneratorId::Natural ? 0.0 : 0.5);
        const auto a = generate_dataset(s, 6, 9), b = generate_dataset(s, 6, 9);
        for (std::size_t i = 0; i < a.size(); ++i) {
            CHECK(a[i].pixels == b[i].pixels);
            CHECK(a[i].pixels == generate_sample(s, 9, i).pixels);
            CHECK(a[i].generator == family);
            CHECK(a[i].label == (family == GeneratorId::Natural ? Label::Real : Label::Fake));
            CHECK(a[i].side == 32);
            CHECK(in_unit_range(a[i]));
        }
        CHECK(generate_dataset(s, 1, 10)[0].pixels != a[0].pixels);
    }
    CHECK_THROWS(generate_dataset(GeneratorSpec{}, 0, 1));
    CHECK_THROWS(spec_of(GeneratorId::Checker, 1.5).validate());
    CHECK_THROWS(spec_of(GeneratorId::Natural, 0.3).validate());
}

TEST_CASE("strength zero reproduces the natural field") {
    const auto natural = generate_dataset(spec_of(GeneratorId::Natural, 0.0), 8, 5);
    for (auto family : kFakes) {
        const auto fake = generate_dataset(spec_of(family, 0.0), 8, 5);
        for (std::size_t i = 0; i < fake.size(); ++i) CHECK(fake[i].pixels == natural[i].pixels);
    }
}

TEST_CASE("checker artifact is linearly separable from natural") {
    const double acc = probe(spec_of(GeneratorId::Natural, 0), spec_of(GeneratorId::Checker, 0.5), 500);
    MESSAGE("checker vs natural probe accuracy " << acc);
    CHECK(acc >= 0.95);
}

TEST_CASE("fake families are mutually distinguishable") {
    for (std::size_t a = 0; a < 3; ++a)
        for (std::size_t b = a + 1; b < 3; ++b) {
            const double acc = probe(spec_of(kFakes[a], 0.5), spec_of(kFakes[b], 0.5), 300);
            CAPTURE(generator_name(kFakes[a]));
            CAPTURE(generator_name(kFakes[b]));
            CHECK(acc >= 0.90);
        }
}

TEST_CASE("probe separability grows with strength") {
    for (auto family : kFakes) {
        CAPTURE(generator_name(family));
        double prev = 0;
        for (double strength : {0.0, 0.25, 0.5, 1.0}) {
            const double acc = probe(spec_of(GeneratorId::Natural, 0), spec_of(family, strength), 200);
            CAPTURE(strength);
            CHECK(acc >= prev);
            prev = acc;
        }
    }
}

TEST_CASE("degradation identities") {
    const auto imgs = generate_dataset(spec_of(GeneratorId::Spectral, 0.5), 10, 3);
    for (const auto& s : imgs) {
        CHECK(max_abs_diff(degrade(s, {DegradationKind::GaussBlur, 0.0}), s) == 0.0);
        CHECK(max_abs_diff(degrade(s, {DegradationKind::LowRes, 32}), s) <= 1e-6);
        for (const auto& d : {DegradationSpec{DegradationKind::LowRes, 8}, DegradationSpec{DegradationKind::GaussBlur, 2},
                              DegradationSpec{DegradationKind::JpegLike, 30}}) {
            const auto out = degrade(s, d);
            CHECK(out.side == s.side);
            CHECK(out.label == s.label);
            CHECK(in_unit_range(out));
        }
    }
    CHECK_THROWS(degrade(imgs[0], {DegradationKind::GaussBlur, -1}));
    CHECK_THROWS(degrade(imgs[0], {DegradationKind::JpegLike, 0}));
    CHECK_THROWS(degrade(imgs[0], {DegradationKind::JpegLike, 101}));
}

TEST_CASE("jpeg at quality 100 is nearly lossless") {
    double worst = 0;
    for (std::size_t i = 0; i < 100; ++i) {
        const auto s = generate_sample(spec_of(GeneratorId::Natural, 0), 77, i);
        worst = std::max(worst, max_abs_diff(jpeg_like(s, 100), s));
    }
    CHECK(worst < 2.0 / 255.0);
}

TEST_CASE("quantization table follows the quality rule") {
    const auto q50 = quantization_table(50);
    CHECK(q50[0] == 16);
    CHECK(q50[63] == 99);
    CHECK(std::all_of(quantization_table(100).begin(), quantization_table(100).end(), [](int v) { return v == 1; }));
    const auto q10 = quantization_table(10);
    CHECK(q10[0] == 80);  // 16 * 500 / 100
    for (int qf = 1; qf <= 100; ++qf)
        for (int v : quantization_table(qf)) CHECK((v >= 1 && v <= 255));
}

TEST_CASE("blur kernel") {
    for (double sigma : {0.3, 1.0, 2.0, 3.7}) {
        const auto k = gaussian_kernel(sigma);
        CHECK(k.size() == 2 * static_cast<std::size_t>(std::ceil(3 * sigma)) + 1);
        CHECK(std::accumulate(k.begin(), k.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-9));
    }
    ImageSample flat;
    flat.side = 16;
    flat.pixels.assign(16 * 16 * 3, 0.375f);
    for (float v : gaussian_blur(flat, 1.5).pixels) CHECK(v == 0.375f);
}

TEST_CASE("degradation labels parse back") {
    for (const auto& text : {"LR(16)", "JPEG(QF=65)", "Blur(s=2)", "Blur(s=0)"}) CHECK(parse_degradation(text).label() == text);
    CHECK_THROWS(parse_degradation("Sharpen(3)"));
}

TEST_CASE("augmentation") {
    const auto s = generate_sample(spec_of(GeneratorId::Seam, 0.5), 4, 0);
    CHECK(augment(s, AugmentationPipeline::none(), 1).pixels == s.pixels);
    auto zero = AugmentationPipeline::standard();
    for (auto& st : zero.stages) st.probability = 0;
    CHECK(augment(s, zero, 1).pixels == s.pixels);

    const AugmentationPipeline gray{{{AugmentKind::Grayscale, 1.0, 0, 0}}};
    const auto g = augment(s, gray, 3);
    for (std::size_t p = 0; p < g.side * g.side; ++p) {
        CHECK(g.pixels[3 * p] == g.pixels[3 * p + 1]);
        CHECK(g.pixels[3 * p] == g.pixels[3 * p + 2]);
    }

    auto always = AugmentationPipeline::standard();
    for (auto& st : always.stages) st.probability = 1.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto a = augment(s, always, seed);
        CHECK(a.pixels == augment(s, always, seed).pixels);
        CHECK(in_unit_range(a));
        CHECK(a.side == s.side);
    }
    CHECK(augment(s, always, 1).pixels != augment(s, always, 2).pixels);

    AugmentationPipeline bad{{{AugmentKind::GaussNoise, 1.5, 0, 0.1}}};
    CHECK_THROWS(bad.validate());
    for (auto k : {AugmentKind::CropResize, AugmentKind::GaussNoise, AugmentKind::GaussBlur, AugmentKind::Rotation,
                   AugmentKind::JpegQuality, AugmentKind::ColorJitter, AugmentKind::Grayscale})
        CHECK(parse_augment_kind(augment_kind_name(k)) == k);
}
