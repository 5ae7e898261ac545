#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "prefgen/embed.hpp"
#include "prefgen/hashing.hpp"
#include "prefgen/taxonomy.hpp"

using namespace prefgen;
using embed::Embedding;

namespace {

taxonomy::Taxonomy bundled() {
    auto tax = taxonomy::load_taxonomy(std::string(PREFGEN_DATA_DIR) + "/attributes.tsv");
    taxonomy::load_overrides(tax, std::string(PREFGEN_DATA_DIR) + "/overrides.tsv");
    return tax;
}

Embedding random_embedding(DetRng& rng, bool content_zero) {
    Embedding e;
    for (auto& v : e.content) v = content_zero ? 0.0 : rng.uniform(-1.0, 1.0);
    for (size_t i = 0; i < e.style_target.size(); ++i) {
        e.style_target[i] = rng.uniform();
        e.style_defined[i] = rng.uniform() < 0.7;
        if (!e.style_defined[i]) e.style_target[i] = 0.0;
    }
    for (auto& v : e.residual) v = rng.uniform(-1.0, 1.0);
    return e;
}

}  // namespace

TEST_CASE("empty style_attrs give a zero style block with empty mask") {
    auto tax = bundled();
    embed::Prompt p;
    p.content.shape = world::Shape::kSquare;
    auto e = embed::encode_prompt(p, tax, 7);
    for (size_t i = 0; i < e.style_target.size(); ++i) {
        CHECK(e.style_target[i] == 0.0);
        CHECK_FALSE(e.style_defined[i]);
    }
    CHECK(e.content[1] == 1.0);  // square one-hot slot
    CHECK(e.content[3] == doctest::Approx(0.5));
}

TEST_CASE("encoding is deterministic") {
    auto tax = bundled();
    embed::Prompt p;
    p.style_attrs = {"electric blue", "rough texture"};
    CHECK(embed::encode_prompt(p, tax, 7) == embed::encode_prompt(p, tax, 7));
}

TEST_CASE("prompt naming one color attribute carries its hue target") {
    auto tax = bundled();
    embed::Prompt p;
    p.style_attrs = {"electric blue"};
    auto e = embed::encode_prompt(p, tax, 7);
    auto sig = taxonomy::signature(tax, tax.attribute("electric blue"), 7);
    CHECK(e.style_defined[taxonomy::kHue]);
    CHECK(e.style_target[taxonomy::kHue] == doctest::Approx(sig.target[taxonomy::kHue]));
    CHECK(e.style_target[taxonomy::kHue] == doctest::Approx(0.58));
}

TEST_CASE("unknown attribute id is rejected") {
    auto tax = bundled();
    embed::Prompt p;
    p.style_attrs = {"nonexistent attribute"};
    CHECK_THROWS_AS(embed::encode_prompt(p, tax, 7), std::invalid_argument);
    CHECK_THROWS_AS(embed::encode_vp_side({"nonexistent attribute"}, tax, 7),
                    std::invalid_argument);
}

TEST_CASE("encode_vp_side: empty set gives the zero embedding") {
    auto tax = bundled();
    auto e = embed::encode_vp_side({}, tax, 7);
    CHECK(e == Embedding{});
}

TEST_CASE("encode_vp_side has an exactly zero content block") {
    auto tax = bundled();
    auto e = embed::encode_vp_side({"electric blue", "somber", "dots"}, tax, 7);
    for (double v : e.content) CHECK(v == 0.0);
}

TEST_CASE("equal attribute sets encode identically") {
    auto tax = bundled();
    std::set<std::string> attrs = {"pastel hues", "dreamy"};
    CHECK(embed::encode_vp_side(attrs, tax, 7) == embed::encode_vp_side(attrs, tax, 7));
}

TEST_CASE("vp-side encoding matches the set-signature oracle on a 30-attribute set") {
    auto tax = bundled();
    std::set<std::string> ids;
    for (const auto& a : tax.attributes()) {
        if (a.category == "mood" || a.category == "color_palette") ids.insert(a.id);
        if (ids.size() == 30) break;
    }
    auto e = embed::encode_vp_side(ids, tax, 7);
    auto sig = taxonomy::set_signature(tax, ids, 7);
    for (int c = 0; c < taxonomy::kFeatureDim; ++c) {
        CHECK(e.style_defined[c] == sig.defined[c]);
        CHECK(e.style_target[c] == doctest::Approx(sig.target[c]).epsilon(1e-12));
    }
}

TEST_CASE("compose at beta 0 returns the prompt embedding bit-exactly") {
    DetRng rng(5);
    auto p = random_embedding(rng, false);
    auto a = random_embedding(rng, true);
    auto b = random_embedding(rng, true);
    auto out = embed::compose(p, a, b, 0.0);
    for (size_t i = 0; i < p.content.size(); ++i) CHECK(out.content[i] == p.content[i]);
    for (size_t i = 0; i < p.style_target.size(); ++i)
        CHECK(out.style_target[i] == p.style_target[i]);
    for (size_t i = 0; i < p.residual.size(); ++i) CHECK(out.residual[i] == p.residual[i]);
}

TEST_CASE("compose with matching vp sides cancels for any beta") {
    DetRng rng(6);
    auto p = random_embedding(rng, false);
    auto a = random_embedding(rng, true);
    for (double beta : {0.3, 1.0, 1.5, -2.0}) {
        auto out = embed::compose(p, a, a, beta);
        for (size_t i = 0; i < p.style_target.size(); ++i)
            CHECK(out.style_target[i] == doctest::Approx(p.style_target[i]).epsilon(1e-15));
    }
}

TEST_CASE("worked example: 0.4 + 0.5*(0.9 - 0.1) = 0.8") {
    Embedding p, plus, minus;
    p.style_target[2] = 0.4;
    p.style_defined[2] = true;
    plus.style_target[2] = 0.9;
    plus.style_defined[2] = true;
    minus.style_target[2] = 0.1;
    minus.style_defined[2] = true;
    auto out = embed::compose(p, plus, minus, 0.5);
    CHECK(out.style_target[2] == doctest::Approx(0.8).epsilon(1e-15));
}

TEST_CASE("beta linearity within 1e-12 over 1000 random triples") {
    DetRng rng(7);
    for (int trial = 0; trial < 1000; ++trial) {
        auto p = random_embedding(rng, false);
        auto a = random_embedding(rng, true);
        auto b = random_embedding(rng, true);
        double beta = rng.uniform(-1.5, 1.5);
        auto at_beta = embed::compose(p, a, b, beta);
        auto at_one = embed::compose(p, a, b, 1.0);
        for (size_t i = 0; i < p.style_target.size(); ++i) {
            double delta_beta = at_beta.style_target[i] - p.style_target[i];
            double delta_one = at_one.style_target[i] - p.style_target[i];
            CHECK(std::fabs(delta_beta - beta * delta_one) < 1e-12);
        }
        for (size_t i = 0; i < p.residual.size(); ++i) {
            double delta_beta = at_beta.residual[i] - p.residual[i];
            double delta_one = at_one.residual[i] - p.residual[i];
            CHECK(std::fabs(delta_beta - beta * delta_one) < 1e-12);
        }
    }
}

TEST_CASE("content block is preserved for all beta") {
    DetRng rng(8);
    for (int trial = 0; trial < 200; ++trial) {
        auto p = random_embedding(rng, false);
        auto a = random_embedding(rng, true);
        auto b = random_embedding(rng, true);
        auto out = embed::compose(p, a, b, rng.uniform(-2.0, 2.0));
        for (size_t i = 0; i < p.content.size(); ++i) CHECK(out.content[i] == p.content[i]);
    }
}

TEST_CASE("swapping vp sides negates the delta") {
    DetRng rng(9);
    for (int trial = 0; trial < 200; ++trial) {
        auto p = random_embedding(rng, false);
        auto a = random_embedding(rng, true);
        auto b = random_embedding(rng, true);
        double beta = rng.uniform(0.0, 1.5);
        auto fwd = embed::compose(p, a, b, beta);
        auto rev = embed::compose(p, b, a, beta);
        for (size_t i = 0; i < p.style_target.size(); ++i) {
            double d1 = fwd.style_target[i] - p.style_target[i];
            double d2 = rev.style_target[i] - p.style_target[i];
            CHECK(std::fabs(d1 + d2) < 1e-12);
        }
    }
}

TEST_CASE("non-finite beta is rejected") {
    Embedding p, a, b;
    CHECK_THROWS_AS(embed::compose(p, a, b, std::nan("")), std::invalid_argument);
}

TEST_CASE("fill_style_neutral defines missing channels at 0.5") {
    Embedding e;
    e.style_target[3] = 0.9;
    e.style_defined[3] = true;
    auto filled = embed::fill_style_neutral(e);
    for (size_t i = 0; i < filled.style_defined.size(); ++i) {
        CHECK(filled.style_defined[i]);
        CHECK(filled.style_target[i] == (i == 3 ? 0.9 : 0.5));
    }
}

TEST_CASE("condition vector layout: content, target, residual, mask") {
    Embedding e;
    e.content[0] = 1.0;
    e.style_target[1] = 0.25;
    e.style_defined[1] = true;
    e.residual[0] = -0.5;
    auto v = e.condition_vector();
    CHECK(v[0] == 1.0);
    CHECK(v[embed::kContentDim + 1] == 0.25);
    CHECK(v[embed::kContentDim + taxonomy::kFeatureDim] == -0.5);
    CHECK(v[embed::kContentDim + taxonomy::kFeatureDim + taxonomy::kResidualDim + 1] == 1.0);
    CHECK(embed::to_flat(e).size() == embed::kConditionDim);
}
