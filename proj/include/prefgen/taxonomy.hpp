#pragma once

#include <array>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "prefgen/hashing.hpp"

namespace prefgen::taxonomy {

constexpr int kFeatureDim = 8;   // d_f: measurable style channels
constexpr int kResidualDim = 24; // d_r: inert semantic residual

// style channel indices
enum Channel : int {
    kHue = 0,
    kSaturation = 1,
    kBrightness = 2,
    kStripeFrequency = 3,
    kStripeOrientation = 4,
    kRoughness = 5,
    kEdgeSoftness = 6,
    kBalance = 7,
};

inline bool is_circular_channel(int c) { return c == kHue || c == kStripeOrientation; }

struct Attribute {
    std::string id;        // normalized: lowercase, trimmed, single spaces
    std::string category;
    std::set<int> polarity_channels;
};

struct FeatureSignature {
    std::array<double, kFeatureDim> target{};   // zero outside polarity_channels
    std::array<double, kResidualDim> residual{}; // unit norm
};

struct SetSignature {
    std::array<double, kFeatureDim> target{};
    std::array<bool, kFeatureDim> defined{};
    std::array<double, kResidualDim> residual{};
};

class Taxonomy {
public:
    // The 20 known categories, in catalog order.
    static const std::vector<std::string>& known_categories();
    static const std::set<int>& channels_for(const std::string& category);

    const std::vector<std::string>& categories() const { return categories_; }
    const std::vector<Attribute>& attributes() const { return attributes_; }

    bool has(const std::string& id) const { return index_.count(id) != 0; }
    const Attribute& attribute(const std::string& id) const;
    const std::vector<std::string>& ids_in_category(const std::string& category) const;

    // Curated target override for (attribute, channel), if present.
    bool override_for(const std::string& id, int channel, double* value) const;
    void add_override(const std::string& id, int channel, double value);

    // taxonomy restricted to attributes outside the given categories
    Taxonomy without_categories(const std::set<std::string>& drop) const;

    void add(Attribute attr);  // validates id/category, rejects duplicates

private:
    std::vector<std::string> categories_ = known_categories();
    std::vector<Attribute> attributes_;
    std::map<std::string, size_t> index_;
    std::map<std::string, std::vector<std::string>> by_category_;
    std::map<std::pair<std::string, int>, double> overrides_;
};

// lowercase, trim, collapse internal whitespace
std::string normalize_id(const std::string& raw);

// Catalog format: `category<TAB>attribute`, '#' comments. Throws
// std::runtime_error with a line number on malformed input.
Taxonomy load_taxonomy(const std::string& path);

// Override table: `attribute<TAB>channel<TAB>value` rows merged into `tax`.
void load_overrides(Taxonomy& tax, const std::string& path);

// Deterministic signature for one attribute under a global signature seed.
FeatureSignature signature(const Taxonomy& tax, const Attribute& attr, uint64_t seed);

// Aggregate signature of an attribute set: per-channel mean of member targets
// over members covering that channel; residual is the normalized residual sum.
// Throws std::invalid_argument("empty attribute set") on an empty set.
SetSignature set_signature(const Taxonomy& tax, const std::set<std::string>& ids,
                           uint64_t seed);

}  // namespace prefgen::taxonomy
