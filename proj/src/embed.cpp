#include "prefgen/embed.hpp"

#include <stdexcept>

namespace prefgen::embed {

std::array<double, kConditionDim> Embedding::condition_vector() const {
    std::array<double, kConditionDim> v{};
    size_t i = 0;
    for (double c : content) v[i++] = c;
    for (double c : style_target) v[i++] = c;
    for (double c : residual) v[i++] = c;
    for (bool b : style_defined) v[i++] = b ? 1.0 : 0.0;
    return v;
}

Embedding encode_prompt(const Prompt& prompt, const taxonomy::Taxonomy& tax,
                        uint64_t signature_seed) {
    prompt.content.validate();
    Embedding e;
    e.content[static_cast<size_t>(prompt.content.shape)] = 1.0;
    e.content[3] = prompt.content.scale;
    e.content[4] = prompt.content.position[0];
    e.content[5] = prompt.content.position[1];
    if (!prompt.style_attrs.empty()) {
        auto sig = taxonomy::set_signature(tax, prompt.style_attrs, signature_seed);
        e.style_target = sig.target;
        e.style_defined = sig.defined;
        e.residual = sig.residual;
    }
    return e;
}

Embedding encode_vp_side(const std::set<std::string>& attrs, const taxonomy::Taxonomy& tax,
                         uint64_t signature_seed) {
    Embedding e;
    if (attrs.empty()) return e;
    auto sig = taxonomy::set_signature(tax, attrs, signature_seed);
    e.style_target = sig.target;
    e.style_defined = sig.defined;
    e.residual = sig.residual;
    return e;
}

Embedding compose(const Embedding& p_emb, const Embedding& vp_plus,
                  const Embedding& vp_minus, double beta) {
    if (!std::isfinite(beta)) throw std::invalid_argument("beta must be finite");
    Embedding out = p_emb;
    for (size_t i = 0; i < out.content.size(); ++i)
        out.content[i] += beta * (vp_plus.content[i] - vp_minus.content[i]);
    for (size_t i = 0; i < out.style_target.size(); ++i) {
        out.style_target[i] += beta * (vp_plus.style_target[i] - vp_minus.style_target[i]);
        out.style_defined[i] = p_emb.style_defined[i] || vp_plus.style_defined[i] ||
                               vp_minus.style_defined[i];
    }
    for (size_t i = 0; i < out.residual.size(); ++i)
        out.residual[i] += beta * (vp_plus.residual[i] - vp_minus.residual[i]);
    return out;
}

Embedding fill_style_neutral(const Embedding& emb, double neutral) {
    Embedding out = emb;
    for (size_t i = 0; i < out.style_defined.size(); ++i) {
        if (!out.style_defined[i]) {
            out.style_target[i] = neutral;
            out.style_defined[i] = true;
        }
    }
    return out;
}

world::FeatureVector style_features(const Embedding& emb) {
    world::FeatureVector f;
    for (int c = 0; c < kFeatureDim; ++c) {
        f.values[c] = emb.style_target[c];
        f.defined[c] = emb.style_defined[c];
    }
    return f;
}

std::vector<double> to_flat(const Embedding& emb) {
    auto v = emb.condition_vector();
    return std::vector<double>(v.begin(), v.end());
}

}  // namespace prefgen::embed
