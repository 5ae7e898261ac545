#include "prefgen/taxonomy.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

namespace prefgen::taxonomy {

const std::vector<std::string>& Taxonomy::known_categories() {
    static const std::vector<std::string> cats = {
        "art_style",   "color_palette", "composition", "skill",    "detail",
        "hues",        "line",          "shape",       "value",    "pattern",
        "texture",     "medium",        "mood",        "perspective", "depth",
        "movement",    "form",          "juxtaposition", "iconography", "brushstrokes",
    };
    return cats;
}

const std::set<int>& Taxonomy::channels_for(const std::string& category) {
    // Every category must have an observable effect in the renderer.
    static const std::map<std::string, std::set<int>> masks = [] {
        std::map<std::string, std::set<int>> m;
        m["color_palette"] = {kHue, kSaturation, kBrightness};
        m["hues"] = {kHue, kSaturation, kBrightness};
        m["texture"] = {kRoughness};
        m["brushstrokes"] = {kRoughness};
        m["line"] = {kStripeFrequency, kStripeOrientation};
        m["pattern"] = {kStripeFrequency, kStripeOrientation};
        m["composition"] = {kBalance};
        m["detail"] = {kBrightness, kEdgeSoftness};
        m["value"] = {kBrightness, kEdgeSoftness};
        for (const auto& cat : known_categories()) {
            if (!m.count(cat)) m[cat] = {kBrightness, kRoughness, kEdgeSoftness, kBalance};
        }
        return m;
    }();
    auto it = masks.find(category);
    if (it == masks.end()) throw std::invalid_argument("unknown category: " + category);
    return it->second;
}

const Attribute& Taxonomy::attribute(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw std::invalid_argument("unknown attribute id: " + id);
    return attributes_[it->second];
}

const std::vector<std::string>& Taxonomy::ids_in_category(const std::string& category) const {
    static const std::vector<std::string> empty;
    auto it = by_category_.find(category);
    return it == by_category_.end() ? empty : it->second;
}

bool Taxonomy::override_for(const std::string& id, int channel, double* value) const {
    auto it = overrides_.find({id, channel});
    if (it == overrides_.end()) return false;
    if (value) *value = it->second;
    return true;
}

void Taxonomy::add_override(const std::string& id, int channel, double value) {
    const Attribute& attr = attribute(id);
    if (!attr.polarity_channels.count(channel))
        throw std::invalid_argument("override channel " + std::to_string(channel) +
                                    " outside polarity channels of '" + id + "'");
    if (value < 0.0 || value > 1.0)
        throw std::invalid_argument("override value out of [0,1] for '" + id + "'");
    overrides_[{id, channel}] = value;
}

void Taxonomy::add(Attribute attr) {
    attr.id = normalize_id(attr.id);
    if (attr.id.empty()) throw std::invalid_argument("empty attribute id");
    if (index_.count(attr.id)) throw std::invalid_argument("duplicate attribute id: " + attr.id);
    if (std::find(categories_.begin(), categories_.end(), attr.category) == categories_.end())
        throw std::invalid_argument("attribute '" + attr.id + "' references unknown category: " +
                                    attr.category);
    if (attr.polarity_channels.empty()) attr.polarity_channels = channels_for(attr.category);
    index_[attr.id] = attributes_.size();
    by_category_[attr.category].push_back(attr.id);
    attributes_.push_back(std::move(attr));
}

Taxonomy Taxonomy::without_categories(const std::set<std::string>& drop) const {
    Taxonomy out;
    for (const auto& a : attributes_) {
        if (drop.count(a.category)) continue;
        out.add(a);
    }
    for (const auto& [key, v] : overrides_) {
        if (out.has(key.first)) out.add_override(key.first, key.second, v);
    }
    return out;
}

std::string normalize_id(const std::string& raw) {
    std::string out;
    out.reserve(raw.size());
    bool pending_space = false;
    for (char ch : raw) {
        unsigned char u = static_cast<unsigned char>(ch);
        if (std::isspace(u)) {
            if (!out.empty()) pending_space = true;
            continue;
        }
        if (pending_space) {
            out.push_back(' ');
            pending_space = false;
        }
        out.push_back(static_cast<char>(std::tolower(u)));
    }
    return out;
}

Taxonomy load_taxonomy(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open catalog file: " + path);
    Taxonomy tax;
    std::string line;
    int lineno = 0;
    int records = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": expected category<TAB>attribute");
        std::string cat = line.substr(0, tab);
        std::string id = line.substr(tab + 1);
        try {
            tax.add(Attribute{id, cat, {}});
        } catch (const std::invalid_argument& e) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
        ++records;
    }
    if (records == 0)
        throw std::runtime_error(path + ": parse error: no attribute records found");
    return tax;
}

void load_overrides(Taxonomy& tax, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open override file: " + path);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        std::string attr, chan, val;
        if (!std::getline(ss, attr, '\t') || !std::getline(ss, chan, '\t') ||
            !std::getline(ss, val, '\t'))
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": expected attribute<TAB>channel<TAB>value");
        try {
            tax.add_override(normalize_id(attr), std::stoi(chan), std::stod(val));
        } catch (const std::invalid_argument& e) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
}

namespace {

// per-channel unit value from the documented mixing chain
double hashed_unit(const std::string& id, uint64_t seed, uint64_t salt) {
    uint64_t h = fnv1a64(id);
    return u64_to_unit(mix64(mix64(h, seed), salt));
}

}  // namespace

FeatureSignature signature(const Taxonomy& tax, const Attribute& attr, uint64_t seed) {
    FeatureSignature sig;
    for (int c : attr.polarity_channels) {
        double v;
        if (!tax.override_for(attr.id, c, &v)) v = hashed_unit(attr.id, seed, 0x100 + c);
        sig.target[static_cast<size_t>(c)] = v;
    }
    double norm2 = 0.0;
    for (int i = 0; i < kResidualDim; ++i) {
        // symmetric around zero so residual sums can cancel
        double v = 2.0 * hashed_unit(attr.id, seed, 0x200 + static_cast<uint64_t>(i)) - 1.0;
        sig.residual[static_cast<size_t>(i)] = v;
        norm2 += v * v;
    }
    double norm = std::sqrt(norm2);
    for (auto& v : sig.residual) v /= norm;
    return sig;
}

SetSignature set_signature(const Taxonomy& tax, const std::set<std::string>& ids,
                           uint64_t seed) {
    if (ids.empty()) throw std::invalid_argument("empty attribute set");
    SetSignature out;
    std::array<int, kFeatureDim> counts{};
    for (const auto& id : ids) {
        const Attribute& attr = tax.attribute(id);
        FeatureSignature sig = signature(tax, attr, seed);
        for (int c : attr.polarity_channels) {
            out.target[static_cast<size_t>(c)] += sig.target[static_cast<size_t>(c)];
            counts[static_cast<size_t>(c)]++;
        }
        for (int i = 0; i < kResidualDim; ++i)
            out.residual[static_cast<size_t>(i)] += sig.residual[static_cast<size_t>(i)];
    }
    for (int c = 0; c < kFeatureDim; ++c) {
        if (counts[static_cast<size_t>(c)] > 0) {
            out.target[static_cast<size_t>(c)] /= counts[static_cast<size_t>(c)];
            out.defined[static_cast<size_t>(c)] = true;
        } else {
            out.target[static_cast<size_t>(c)] = 0.0;
        }
    }
    double norm2 = 0.0;
    for (double v : out.residual) norm2 += v * v;
    if (norm2 > 1e-24) {
        double norm = std::sqrt(norm2);
        for (auto& v : out.residual) v /= norm;
    } else {
        out.residual.fill(0.0);  // cancelled sum stays zero
    }
    return out;
}

}  // namespace prefgen::taxonomy
