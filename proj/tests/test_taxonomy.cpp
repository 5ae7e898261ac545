#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "doctest.h"
#include "prefgen/taxonomy.hpp"

using namespace prefgen;
using taxonomy::Attribute;
using taxonomy::Taxonomy;

namespace {

std::string data_path(const char* name) {
    return std::string(PREFGEN_DATA_DIR) + "/" + name;
}

Taxonomy bundled() {
    auto tax = taxonomy::load_taxonomy(data_path("attributes.tsv"));
    taxonomy::load_overrides(tax, data_path("overrides.tsv"));
    return tax;
}

std::string write_temp(const std::string& name, const std::string& content) {
    std::string path = "/tmp/prefgen_tax_" + name;
    std::ofstream out(path);
    out << content;
    return path;
}

}  // namespace

TEST_CASE("bundled catalog loads with 20 categories and ~500 attributes") {
    auto tax = bundled();
    CHECK(tax.categories().size() == 20);
    CHECK(tax.attributes().size() >= 450);
    CHECK(tax.attributes().size() <= 550);
}

TEST_CASE("catalog integrity: no duplicate ids, every category known") {
    auto tax = bundled();
    std::set<std::string> ids;
    for (const auto& a : tax.attributes()) {
        CHECK(ids.insert(a.id).second);
        bool known = false;
        for (const auto& c : tax.categories()) known = known || c == a.category;
        CHECK(known);
        CHECK(a.polarity_channels == Taxonomy::channels_for(a.category));
    }
}

TEST_CASE("empty file is a parse error") {
    auto path = write_temp("empty.tsv", "");
    CHECK_THROWS_AS(taxonomy::load_taxonomy(path), std::runtime_error);
    auto path2 = write_temp("comments_only.tsv", "# nothing\n");
    CHECK_THROWS_AS(taxonomy::load_taxonomy(path2), std::runtime_error);
}

TEST_CASE("missing file, duplicate id, unknown category all rejected") {
    CHECK_THROWS_AS(taxonomy::load_taxonomy("/nonexistent/catalog.tsv"), std::runtime_error);
    auto dup = write_temp("dup.tsv", "hues\tred\nhues\tRed\n");
    CHECK_THROWS_WITH_AS(taxonomy::load_taxonomy(dup),
                         doctest::Contains("duplicate attribute id"), std::runtime_error);
    auto unk = write_temp("unk.tsv", "colour\tred\n");
    CHECK_THROWS_WITH_AS(taxonomy::load_taxonomy(unk), doctest::Contains("unknown category"),
                         std::runtime_error);
    auto noid = write_temp("noid.tsv", "hues red\n");
    CHECK_THROWS_AS(taxonomy::load_taxonomy(noid), std::runtime_error);
}

TEST_CASE("id normalization lowercases, trims, collapses whitespace") {
    CHECK(taxonomy::normalize_id("  Pastel   Hues ") == "pastel hues");
    CHECK(taxonomy::normalize_id("RED") == "red");
    CHECK(taxonomy::normalize_id("a\tb") == "a b");
}

TEST_CASE("signature is deterministic and bit-exact") {
    auto tax = bundled();
    const auto& attr = tax.attribute("electric blue");
    auto s1 = taxonomy::signature(tax, attr, 42);
    auto s2 = taxonomy::signature(tax, attr, 42);
    CHECK(std::memcmp(s1.target.data(), s2.target.data(), sizeof(s1.target)) == 0);
    CHECK(std::memcmp(s1.residual.data(), s2.residual.data(), sizeof(s1.residual)) == 0);
    // different seed moves non-overridden channels
    auto s3 = taxonomy::signature(tax, attr, 43);
    CHECK(s1.target != s3.target);
}

TEST_CASE("signature target is zero outside polarity channels") {
    auto tax = bundled();
    for (const auto& attr : tax.attributes()) {
        auto sig = taxonomy::signature(tax, attr, 7);
        for (int c = 0; c < taxonomy::kFeatureDim; ++c) {
            if (!attr.polarity_channels.count(c)) CHECK(sig.target[c] == 0.0);
        }
    }
}

TEST_CASE("single-channel category attributes have exactly one nonzero target") {
    auto tax = bundled();
    const auto& attr = tax.attribute("rough texture");  // texture maps to one channel
    auto sig = taxonomy::signature(tax, attr, 7);
    int nonzero = 0;
    for (double v : sig.target) nonzero += v != 0.0 ? 1 : 0;
    CHECK(nonzero == 1);
}

TEST_CASE("residual has unit norm within 1e-9") {
    auto tax = bundled();
    for (const auto& attr : tax.attributes()) {
        auto sig = taxonomy::signature(tax, attr, 7);
        double n2 = 0.0;
        for (double v : sig.residual) n2 += v * v;
        CHECK(std::fabs(std::sqrt(n2) - 1.0) < 1e-9);
    }
}

TEST_CASE("exhaustive pairwise scan: distinct targets, zero residual collisions") {
    auto tax = bundled();
    std::vector<taxonomy::FeatureSignature> sigs;
    for (const auto& attr : tax.attributes()) sigs.push_back(taxonomy::signature(tax, attr, 7));
    for (size_t i = 0; i < sigs.size(); ++i) {
        for (size_t j = i + 1; j < sigs.size(); ++j) {
            CHECK(sigs[i].target != sigs[j].target);
            CHECK(sigs[i].residual != sigs[j].residual);
        }
    }
}

TEST_CASE("hue overrides land on the hue channel") {
    auto tax = bundled();
    auto sig = taxonomy::signature(tax, tax.attribute("electric blue"), 7);
    CHECK(sig.target[taxonomy::kHue] == doctest::Approx(0.58));
    // override survives any seed
    auto sig2 = taxonomy::signature(tax, tax.attribute("electric blue"), 12345);
    CHECK(sig2.target[taxonomy::kHue] == doctest::Approx(0.58));
}

TEST_CASE("override outside polarity channels is rejected") {
    auto tax = bundled();
    CHECK_THROWS_AS(tax.add_override("rough texture", taxonomy::kHue, 0.5),
                    std::invalid_argument);
    CHECK_THROWS_AS(tax.add_override("rough texture", taxonomy::kRoughness, 1.5),
                    std::invalid_argument);
}

TEST_CASE("set_signature of a singleton equals the member signature") {
    auto tax = bundled();
    const auto& attr = tax.attribute("pastel hues");
    auto sig = taxonomy::signature(tax, attr, 7);
    auto set_sig = taxonomy::set_signature(tax, {attr.id}, 7);
    for (int c = 0; c < taxonomy::kFeatureDim; ++c) {
        CHECK(set_sig.defined[c] == (attr.polarity_channels.count(c) > 0));
        if (set_sig.defined[c]) CHECK(set_sig.target[c] == doctest::Approx(sig.target[c]));
    }
    for (int i = 0; i < taxonomy::kResidualDim; ++i)
        CHECK(set_sig.residual[i] == doctest::Approx(sig.residual[i]));
}

TEST_CASE("set_signature averages shared channels: 0.2 and 0.6 give 0.4") {
    Taxonomy tax;
    tax.add(Attribute{"glow a", "value", {}});
    tax.add(Attribute{"glow b", "value", {}});
    tax.add_override("glow a", taxonomy::kBrightness, 0.2);
    tax.add_override("glow b", taxonomy::kBrightness, 0.6);
    auto sig = taxonomy::set_signature(tax, {"glow a", "glow b"}, 7);
    CHECK(sig.target[taxonomy::kBrightness] == doctest::Approx(0.4));
}

TEST_CASE("set_signature of 30 attributes matches a brute-force oracle") {
    auto tax = bundled();
    std::set<std::string> ids;
    for (const auto& a : tax.attributes()) {
        ids.insert(a.id);
        if (ids.size() == 30) break;
    }
    auto sig = taxonomy::set_signature(tax, ids, 7);

    // independent recomputation: per-channel mean over covering members,
    // residual as the normalized sum
    double target[taxonomy::kFeatureDim] = {};
    int counts[taxonomy::kFeatureDim] = {};
    double residual[taxonomy::kResidualDim] = {};
    for (const auto& id : ids) {
        const auto& attr = tax.attribute(id);
        auto s = taxonomy::signature(tax, attr, 7);
        for (int c : attr.polarity_channels) {
            target[c] += s.target[c];
            counts[c]++;
        }
        for (int i = 0; i < taxonomy::kResidualDim; ++i) residual[i] += s.residual[i];
    }
    double norm = 0.0;
    for (double v : residual) norm += v * v;
    norm = std::sqrt(norm);
    for (int c = 0; c < taxonomy::kFeatureDim; ++c) {
        if (counts[c] == 0) {
            CHECK_FALSE(sig.defined[c]);
        } else {
            CHECK(sig.defined[c]);
            CHECK(sig.target[c] == doctest::Approx(target[c] / counts[c]).epsilon(1e-12));
        }
    }
    for (int i = 0; i < taxonomy::kResidualDim; ++i)
        CHECK(sig.residual[i] == doctest::Approx(residual[i] / norm).epsilon(1e-9));
}

TEST_CASE("empty attribute set is rejected") {
    auto tax = bundled();
    CHECK_THROWS_WITH_AS(taxonomy::set_signature(tax, {}, 7),
                         doctest::Contains("empty attribute set"), std::invalid_argument);
}

TEST_CASE("serializing all signatures twice is byte-identical") {
    auto tax = bundled();
    auto dump = [&] {
        std::ostringstream out;
        for (const auto& a : tax.attributes()) {
            auto sig = taxonomy::signature(tax, a, 7);
            out.write(reinterpret_cast<const char*>(sig.target.data()), sizeof(sig.target));
            out.write(reinterpret_cast<const char*>(sig.residual.data()), sizeof(sig.residual));
        }
        return out.str();
    };
    CHECK(dump() == dump());
}

TEST_CASE("category filtering drops attributes and keeps overrides") {
    auto tax = bundled();
    auto sub = tax.without_categories({"color_palette", "hues"});
    CHECK(sub.attributes().size() < tax.attributes().size());
    CHECK_FALSE(sub.has("electric blue"));
    CHECK(sub.has("rough texture"));
    double v = 0.0;
    CHECK(sub.override_for("rough texture", taxonomy::kRoughness, &v));
    CHECK(v == doctest::Approx(0.9));
}
