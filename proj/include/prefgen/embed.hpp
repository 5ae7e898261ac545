#pragma once

#include <array>
#include <set>
#include <string>
#include <vector>

#include "prefgen/taxonomy.hpp"
#include "prefgen/world.hpp"

namespace prefgen::embed {

using taxonomy::kFeatureDim;
using taxonomy::kResidualDim;

constexpr int kContentDim = 8;  // shape one-hot(3) + scale + position(2) + padding
constexpr int kConditionDim = kContentDim + kFeatureDim + kResidualDim + kFeatureDim;

// Flat conditioning vector: a content block plus a style block carrying the
// set-signature target and residual. Undefined style channels are encoded as
// zero with a companion mask.
struct Embedding {
    std::array<double, kContentDim> content{};
    std::array<double, kFeatureDim> style_target{};
    std::array<bool, kFeatureDim> style_defined{};
    std::array<double, kResidualDim> residual{};

    // dense layout fed to the denoiser: [content, target, residual, mask]
    std::array<double, kConditionDim> condition_vector() const;

    bool operator==(const Embedding& o) const = default;
};

struct Prompt {
    world::Content content;
    std::set<std::string> style_attrs;  // may be empty
};

// content block one-hot + raw scale/position; style block from set_signature
// (zero with empty mask when style_attrs is empty)
Embedding encode_prompt(const Prompt& prompt, const taxonomy::Taxonomy& tax,
                        uint64_t signature_seed);

// pure-VP embedding: content block exactly zero; empty set gives a zero embedding
Embedding encode_vp_side(const std::set<std::string>& attrs, const taxonomy::Taxonomy& tax,
                         uint64_t signature_seed);

// p + beta * (vp_plus - vp_minus), blockwise; mask is the union of inputs
Embedding compose(const Embedding& p_emb, const Embedding& vp_plus,
                  const Embedding& vp_minus, double beta);

// copy with undefined style channels set to `neutral` and marked defined;
// applied by samplers before compose so a style-free prompt means "neutral
// style" rather than "style value zero"
Embedding fill_style_neutral(const Embedding& emb, double neutral = 0.5);

// style target re-read as a feature vector (for oracles and reports)
world::FeatureVector style_features(const Embedding& emb);

std::vector<double> to_flat(const Embedding& emb);  // for JSON records

}  // namespace prefgen::embed
