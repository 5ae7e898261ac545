#include "prefgen/agents.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "json.hpp"
#include "prefgen/vpe.hpp"

namespace prefgen::agents {

using nlohmann::json;

double jaccard_distance(const std::set<std::string>& a, const std::set<std::string>& b) {
    if (a.empty() && b.empty()) return 0.0;
    size_t inter = 0;
    for (const auto& x : a) inter += b.count(x);
    size_t uni = a.size() + b.size() - inter;
    return 1.0 - static_cast<double>(inter) / static_cast<double>(uni);
}

void validate_cohort_config(const CohortConfig& cfg, const taxonomy::Taxonomy& tax) {
    if (cfg.n < 1) throw std::invalid_argument("cohort.n must be >= 1");
    if (cfg.avg_attrs < 2.0) throw std::invalid_argument("cohort.avg_attrs must be >= 2");
    if (cfg.min_jaccard_dist < 0.0 || cfg.min_jaccard_dist > 1.0)
        throw std::invalid_argument("cohort.min_jaccard_dist must be in [0,1]");
    if (cfg.retry_budget < 1) throw std::invalid_argument("cohort.retry_budget must be >= 1");
    if (tax.attributes().size() < 4 * cfg.avg_attrs)
        throw std::invalid_argument("taxonomy too small for cohort.avg_attrs");
}

namespace {

int truncated_poisson(double mean, int lo, int hi, DetRng& rng) {
    // Knuth's product method; fine at desk-scale means
    double l = std::exp(-mean);
    for (int attempt = 0; attempt < 64; ++attempt) {
        int k = 0;
        double p = 1.0;
        do {
            ++k;
            p *= rng.uniform();
        } while (p > l);
        int v = k - 1;
        if (v >= lo && v <= hi) return v;
    }
    return std::clamp(static_cast<int>(std::lround(mean)), lo, hi);
}

std::set<std::string> weighted_sample(const std::vector<std::string>& ids,
                                      const std::vector<double>& weights, size_t count,
                                      const std::set<std::string>& exclude, DetRng& rng) {
    std::vector<size_t> pool;
    pool.reserve(ids.size());
    for (size_t i = 0; i < ids.size(); ++i)
        if (!exclude.count(ids[i])) pool.push_back(i);
    std::set<std::string> out;
    double total = 0.0;
    for (size_t i : pool) total += weights[i];
    while (out.size() < count && !pool.empty()) {
        double r = rng.uniform() * total;
        size_t chosen = pool.back();
        for (size_t j = 0; j < pool.size(); ++j) {
            r -= weights[pool[j]];
            if (r <= 0.0) {
                chosen = pool[j];
                pool.erase(pool.begin() + static_cast<long>(j));
                break;
            }
        }
        total -= weights[chosen];
        out.insert(ids[chosen]);
    }
    return out;
}

}  // namespace

std::vector<Agent> generate_agents(const CohortConfig& cfg, const taxonomy::Taxonomy& tax,
                                   DetRng& rng) {
    validate_cohort_config(cfg, tax);
    std::vector<std::string> ids;
    std::vector<double> weights;
    std::map<std::string, double> wmap(cfg.category_weights.begin(), cfg.category_weights.end());
    for (const auto& a : tax.attributes()) {
        ids.push_back(a.id);
        auto it = wmap.find(a.category);
        weights.push_back(it == wmap.end() ? 1.0 : it->second);
    }
    int side_cap = static_cast<int>(ids.size() / 3);

    std::vector<Agent> agents;
    std::vector<std::set<std::string>> unions;
    for (int i = 0; i < cfg.n; ++i) {
        int violations = 0;
        bool placed = false;
        for (int attempt = 0; attempt < cfg.retry_budget && !placed; ++attempt) {
            int n_like = truncated_poisson(cfg.avg_attrs, 2, side_cap, rng);
            int n_dis = truncated_poisson(cfg.avg_attrs, 2, side_cap, rng);
            VisualPreference vp;
            vp.liked = weighted_sample(ids, weights, static_cast<size_t>(n_like), {}, rng);
            vp.disliked =
                weighted_sample(ids, weights, static_cast<size_t>(n_dis), vp.liked, rng);
            auto uni = vp.all();

            violations = 0;
            for (size_t j = 0; j < agents.size(); ++j) {
                bool ok;
                if (cfg.per_side_constraint) {
                    ok = jaccard_distance(vp.liked, agents[j].vp.liked) >= cfg.min_jaccard_dist &&
                         jaccard_distance(vp.disliked, agents[j].vp.disliked) >=
                             cfg.min_jaccard_dist;
                } else {
                    ok = jaccard_distance(uni, unions[j]) >= cfg.min_jaccard_dist;
                }
                if (!ok) ++violations;
            }
            if (violations == 0) {
                Agent a;
                a.agent_id = i;
                a.vp = std::move(vp);
                a.comment_style = cfg.comment_style;
                switch (rng.below(3)) {
                    case 0: a.comment_style.verbosity = Verbosity::kTerse; break;
                    case 1: a.comment_style.verbosity = Verbosity::kNormal; break;
                    default: a.comment_style.verbosity = Verbosity::kVerbose; break;
                }
                unions.push_back(a.vp.all());
                agents.push_back(std::move(a));
                placed = true;
            }
        }
        if (!placed)
            throw std::runtime_error(
                "agent diversity constraint unsatisfiable at slot " + std::to_string(i) +
                ": last draw violated " + std::to_string(violations) + " pair(s) after " +
                std::to_string(cfg.retry_budget) + " tries");
    }
    return agents;
}

namespace {

std::set<std::string> random_subset(const std::set<std::string>& from, size_t lo, size_t hi,
                                    DetRng& rng) {
    std::vector<std::string> v(from.begin(), from.end());
    size_t k = std::min(v.size(), lo + rng.below(hi - lo + 1));
    // partial Fisher-Yates
    for (size_t i = 0; i < k; ++i) {
        size_t j = i + rng.below(v.size() - i);
        std::swap(v[i], v[j]);
    }
    return std::set<std::string>(v.begin(), v.begin() + static_cast<long>(k));
}

world::Content random_content(DetRng& rng) {
    world::Content c;
    switch (rng.below(3)) {
        case 0: c.shape = world::Shape::kCircle; break;
        case 1: c.shape = world::Shape::kSquare; break;
        default: c.shape = world::Shape::kTriangle; break;
    }
    c.scale = rng.uniform(0.3, 0.8);
    c.position = {rng.uniform(0.25, 0.75), rng.uniform(0.25, 0.75)};
    return c;
}

ImageMeta make_meta(const std::set<std::string>& attrs, bool from_liked,
                    const taxonomy::Taxonomy& tax, uint64_t signature_seed,
                    const std::string& ref, DetRng& rng) {
    auto sig = taxonomy::set_signature(tax, attrs, signature_seed);
    ImageMeta meta;
    meta.image_ref = ref;
    meta.attrs = attrs;
    meta.from_liked = from_liked;
    for (int c = 0; c < taxonomy::kFeatureDim; ++c) {
        meta.style.values[static_cast<size_t>(c)] = sig.target[static_cast<size_t>(c)];
        meta.style.defined[static_cast<size_t>(c)] = sig.defined[static_cast<size_t>(c)];
    }
    // keep generated image sets inside the measurement validity envelope
    if (meta.style.defined[taxonomy::kRoughness])
        meta.style.values[taxonomy::kRoughness] *= 0.35;
    (void)rng;
    return meta;
}

}  // namespace

AgentImages agent_image_set(const Agent& agent, const taxonomy::Taxonomy& tax,
                            uint64_t signature_seed, const ImageSetConfig& cfg, DetRng& rng,
                            const std::vector<Agent>& others) {
    if (agent.vp.liked.empty() || agent.vp.disliked.empty())
        throw std::invalid_argument("agent has an empty preference side");
    AgentImages out;
    world::RenderOptions opts;
    opts.width = opts.height = cfg.image_size;

    auto render_one = [&](const ImageMeta& meta, uint64_t seed) {
        return world::render(random_content(rng), world::fill_undefined(meta.style), seed, opts);
    };

    for (int i = 0; i < cfg.k_liked; ++i) {
        size_t n = agent.vp.liked.size();
        auto subset = random_subset(agent.vp.liked, std::max<size_t>(1, n / 2), n, rng);
        auto meta = make_meta(subset, true, tax, signature_seed,
                              "a" + std::to_string(agent.agent_id) + "-l" + std::to_string(i),
                              rng);
        out.liked.push_back(render_one(meta, rng.next_u64()));
        out.liked_meta.push_back(std::move(meta));
    }
    for (int i = 0; i < cfg.k_disliked; ++i) {
        std::set<std::string> source = agent.vp.disliked;
        if (!others.empty() && rng.uniform() < cfg.cross_agent_rate) {
            const Agent& other = others[rng.below(others.size())];
            if (!other.vp.liked.empty()) source = other.vp.liked;
        }
        size_t n = source.size();
        auto subset = random_subset(source, std::max<size_t>(1, n / 2), n, rng);
        auto meta = make_meta(subset, false, tax, signature_seed,
                              "a" + std::to_string(agent.agent_id) + "-d" + std::to_string(i),
                              rng);
        out.disliked.push_back(render_one(meta, rng.next_u64()));
        out.disliked_meta.push_back(std::move(meta));
    }
    return out;
}

namespace {

struct Templates {
    std::vector<std::string> positive = {
        "I love the {A}.",
        "The {A} really works for me.",
        "Such beautiful {A} in this one.",
        "I enjoy the {A} here.",
        "The {A} is wonderful.",
    };
    std::vector<std::string> negative = {
        "I hate the {A}.",
        "The {A} ruins it for me.",
        "The {A} looks awful.",
        "I find the {A} ugly.",
    };
    std::vector<std::string> negated = {
        "I don't like the {A}.",
        "I do not enjoy the {A}.",
        "There is too much {A} for my taste.",
    };
    std::vector<std::string> contrast = {
        "I love the {A} but the {B} ruins it.",
        "The {A} is beautiful but I hate the {B}.",
    };
    std::string generic_pos = "I love the {G} in this piece.";
    std::string generic_neg = "I hate the {G} here.";
};

std::string fill(std::string tpl, const std::string& key, const std::string& value) {
    auto pos = tpl.find(key);
    if (pos != std::string::npos) tpl.replace(pos, key.size(), value);
    return tpl;
}

std::string apply_typos(const std::string& text, double rate, DetRng& rng) {
    if (rate <= 0.0) return text;
    std::string out;
    out.reserve(text.size());
    for (size_t i = 0; i < text.size(); ++i) {
        if (std::isalpha(static_cast<unsigned char>(text[i])) && rng.uniform() < rate) {
            if (rng.uniform() < 0.5 && i + 1 < text.size() &&
                std::isalpha(static_cast<unsigned char>(text[i + 1]))) {
                out.push_back(text[i + 1]);  // swap with next
                out.push_back(text[i]);
                ++i;
            }
            // else drop the character
            continue;
        }
        out.push_back(text[i]);
    }
    return out;
}

}  // namespace

Comment synthesize_comment(const Agent& agent, const ImageMeta& meta,
                           const taxonomy::Taxonomy& tax, DetRng& rng) {
    std::vector<std::string> liked_here, disliked_here;
    for (const auto& a : meta.attrs) {
        if (agent.vp.liked.count(a)) liked_here.push_back(a);
        if (agent.vp.disliked.count(a)) disliked_here.push_back(a);
    }
    if (liked_here.empty() && disliked_here.empty())
        throw std::runtime_error("uninformative image");

    const Templates tpl;
    const CommentStyle& style = agent.comment_style;
    int max_sentences = style.verbosity == Verbosity::kTerse
                            ? 1
                            : (style.verbosity == Verbosity::kNormal ? 2 : 3);
    int max_mentions = style.verbosity == Verbosity::kTerse
                           ? 1
                           : (style.verbosity == Verbosity::kNormal ? 2 : 4);

    Comment out;
    out.image_ref = meta.image_ref;
    std::vector<std::string> sentences;

    // optional category-level mention when the image's attributes in one
    // category all fall on one side of the preference
    if (rng.uniform() < style.generic_rate && max_mentions > 1) {
        std::map<std::string, std::vector<std::string>> by_cat;
        for (const auto& a : meta.attrs) by_cat[tax.attribute(a).category].push_back(a);
        std::vector<std::pair<std::string, bool>> eligible;  // category, liked?
        for (const auto& [cat, attrs] : by_cat) {
            bool all_liked = true, all_disliked = true;
            for (const auto& a : attrs) {
                all_liked = all_liked && agent.vp.liked.count(a) > 0;
                all_disliked = all_disliked && agent.vp.disliked.count(a) > 0;
            }
            if (all_liked) eligible.push_back({cat, true});
            else if (all_disliked) eligible.push_back({cat, false});
        }
        if (!eligible.empty()) {
            auto [cat, liked] = eligible[rng.below(eligible.size())];
            sentences.push_back(fill(liked ? tpl.generic_pos : tpl.generic_neg, "{G}",
                                     vpe::generic_phrase(cat)));
            for (const auto& a : by_cat[cat])
                (liked ? out.mentioned_liked : out.mentioned_disliked).insert(a);
            --max_sentences;
            --max_mentions;
        }
    }

    auto take = [&](std::vector<std::string>& from) {
        size_t i = rng.below(from.size());
        std::string a = from[i];
        from.erase(from.begin() + static_cast<long>(i));
        return a;
    };

    while (max_sentences > 0 && max_mentions > 0 &&
           (!liked_here.empty() || !disliked_here.empty())) {
        bool can_contrast = !liked_here.empty() && !disliked_here.empty() && max_mentions >= 2;
        if (can_contrast && rng.uniform() < 0.4) {
            std::string a = take(liked_here);
            std::string b = take(disliked_here);
            std::string s = tpl.contrast[rng.below(tpl.contrast.size())];
            sentences.push_back(fill(fill(s, "{A}", a), "{B}", b));
            out.mentioned_liked.insert(a);
            out.mentioned_disliked.insert(b);
            max_mentions -= 2;
        } else {
            bool use_liked = !liked_here.empty() &&
                             (disliked_here.empty() || rng.uniform() < 0.5);
            if (use_liked) {
                std::string a = take(liked_here);
                sentences.push_back(fill(tpl.positive[rng.below(tpl.positive.size())], "{A}", a));
                out.mentioned_liked.insert(a);
            } else {
                std::string a = take(disliked_here);
                bool negate = rng.uniform() < style.negation_rate;
                const auto& pool = negate ? tpl.negated : tpl.negative;
                sentences.push_back(fill(pool[rng.below(pool.size())], "{A}", a));
                out.mentioned_disliked.insert(a);
            }
            --max_mentions;
        }
        --max_sentences;
    }

    if (out.mentioned_liked.empty() && out.mentioned_disliked.empty())
        throw std::runtime_error("uninformative image");

    std::string text;
    for (const auto& s : sentences) {
        if (!text.empty()) text += " ";
        text += s;
    }
    out.text = apply_typos(text, style.typo_rate, rng);
    return out;
}

Cohort build_cohort(const CohortConfig& cfg, const taxonomy::Taxonomy& tax,
                    const ImageSetConfig& img_cfg, const CommentsPerAgent& cc,
                    uint64_t seed, uint64_t signature_seed) {
    Cohort cohort;
    cohort.seed = seed;
    cohort.signature_seed = signature_seed;
    DetRng rng(mix64(seed, 0xC0404Dull));
    cohort.agents = generate_agents(cfg, tax, rng);

    for (size_t ai = 0; ai < cohort.agents.size(); ++ai) {
        const Agent& agent = cohort.agents[ai];
        DetRng arng = rng.fork(1000 + ai);
        std::vector<ImageMeta> metas;
        for (int i = 0; i < img_cfg.k_liked; ++i) {
            size_t n = agent.vp.liked.size();
            auto subset = random_subset(agent.vp.liked, std::max<size_t>(1, n / 2), n, arng);
            metas.push_back(make_meta(subset, true, tax, signature_seed,
                                      "a" + std::to_string(agent.agent_id) + "-l" +
                                          std::to_string(i),
                                      arng));
        }
        for (int i = 0; i < img_cfg.k_disliked; ++i) {
            size_t n = agent.vp.disliked.size();
            auto subset = random_subset(agent.vp.disliked, std::max<size_t>(1, n / 2), n, arng);
            metas.push_back(make_meta(subset, false, tax, signature_seed,
                                      "a" + std::to_string(agent.agent_id) + "-d" +
                                          std::to_string(i),
                                      arng));
        }
        int n_comments = cc.min_comments +
                         static_cast<int>(arng.below(
                             static_cast<uint64_t>(cc.max_comments - cc.min_comments + 1)));
        std::vector<Comment> comments;
        int guard = 0;
        while (static_cast<int>(comments.size()) < n_comments && guard < 10 * n_comments) {
            ++guard;
            const ImageMeta& meta = metas[arng.below(metas.size())];
            try {
                comments.push_back(synthesize_comment(agent, meta, tax, arng));
            } catch (const std::runtime_error&) {
                // image shares no attribute with the preference; pick another
            }
        }
        cohort.comments.push_back(std::move(comments));
        cohort.image_meta.push_back(std::move(metas));
    }
    return cohort;
}

namespace {

json vp_to_json(const VisualPreference& vp) {
    return json{{"liked", vp.liked}, {"disliked", vp.disliked}};
}

VisualPreference vp_from_json(const json& j) {
    VisualPreference vp;
    for (const auto& s : j.at("liked")) vp.liked.insert(s.get<std::string>());
    for (const auto& s : j.at("disliked")) vp.disliked.insert(s.get<std::string>());
    return vp;
}

}  // namespace

std::string Cohort::to_json() const {
    json j;
    j["seed"] = seed;
    j["signature_seed"] = signature_seed;
    json ja = json::array();
    for (size_t i = 0; i < agents.size(); ++i) {
        const Agent& a = agents[i];
        json agent;
        agent["agent_id"] = a.agent_id;
        agent["vp"] = vp_to_json(a.vp);
        agent["verbosity"] = static_cast<int>(a.comment_style.verbosity);
        agent["negation_rate"] = a.comment_style.negation_rate;
        agent["typo_rate"] = a.comment_style.typo_rate;
        json jc = json::array();
        for (const auto& c : comments[i]) {
            jc.push_back(json{{"text", c.text},
                              {"image_ref", c.image_ref},
                              {"mentioned_liked", c.mentioned_liked},
                              {"mentioned_disliked", c.mentioned_disliked}});
        }
        agent["comments"] = jc;
        json jm = json::array();
        for (const auto& m : image_meta[i]) {
            json style = json::array();
            json defined = json::array();
            for (int c = 0; c < taxonomy::kFeatureDim; ++c) {
                style.push_back(m.style.values[static_cast<size_t>(c)]);
                defined.push_back(m.style.defined[static_cast<size_t>(c)]);
            }
            jm.push_back(json{{"image_ref", m.image_ref},
                              {"attrs", m.attrs},
                              {"from_liked", m.from_liked},
                              {"style", style},
                              {"style_defined", defined}});
        }
        agent["image_meta"] = jm;
        ja.push_back(agent);
    }
    j["agents"] = ja;
    return j.dump(2);
}

Cohort Cohort::from_json(const std::string& text) {
    json j = json::parse(text);
    Cohort cohort;
    cohort.seed = j.at("seed").get<uint64_t>();
    cohort.signature_seed = j.at("signature_seed").get<uint64_t>();
    for (const auto& ja : j.at("agents")) {
        Agent a;
        a.agent_id = ja.at("agent_id").get<int>();
        a.vp = vp_from_json(ja.at("vp"));
        a.comment_style.verbosity = static_cast<Verbosity>(ja.at("verbosity").get<int>());
        a.comment_style.negation_rate = ja.at("negation_rate").get<double>();
        a.comment_style.typo_rate = ja.at("typo_rate").get<double>();
        std::vector<Comment> comments;
        for (const auto& jc : ja.at("comments")) {
            Comment c;
            c.text = jc.at("text").get<std::string>();
            c.image_ref = jc.at("image_ref").get<std::string>();
            for (const auto& s : jc.at("mentioned_liked")) c.mentioned_liked.insert(s.get<std::string>());
            for (const auto& s : jc.at("mentioned_disliked"))
                c.mentioned_disliked.insert(s.get<std::string>());
            comments.push_back(std::move(c));
        }
        std::vector<ImageMeta> metas;
        for (const auto& jm : ja.at("image_meta")) {
            ImageMeta m;
            m.image_ref = jm.at("image_ref").get<std::string>();
            for (const auto& s : jm.at("attrs")) m.attrs.insert(s.get<std::string>());
            m.from_liked = jm.at("from_liked").get<bool>();
            for (int c = 0; c < taxonomy::kFeatureDim; ++c) {
                m.style.values[static_cast<size_t>(c)] = jm.at("style")[static_cast<size_t>(c)].get<double>();
                m.style.defined[static_cast<size_t>(c)] =
                    jm.at("style_defined")[static_cast<size_t>(c)].get<bool>();
            }
            metas.push_back(std::move(m));
        }
        cohort.agents.push_back(std::move(a));
        cohort.comments.push_back(std::move(comments));
        cohort.image_meta.push_back(std::move(metas));
    }
    return cohort;
}

}  // namespace prefgen::agents
