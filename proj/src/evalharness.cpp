#include "prefgen/evalharness.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "json.hpp"
#include "prefgen/errors.hpp"
#include "prefgen/hashing.hpp"

namespace prefgen::evalharness {

BinomialInterval wilson95(double p_hat, long n) {
    if (n <= 0) return {0.0, 1.0};
    const double z = 1.959963984540054;
    double z2 = z * z;
    double denom = 1.0 + z2 / n;
    double center = p_hat + z2 / (2.0 * n);
    double margin = z * std::sqrt(p_hat * (1.0 - p_hat) / n + z2 / (4.0 * n * n));
    return {(center - margin) / denom, (center + margin) / denom};
}

std::string TopKReport::to_csv() const {
    std::ostringstream out;
    out << "k,accuracy,random_baseline,ci_lo,ci_hi\n";
    for (size_t i = 0; i < accuracy.size(); ++i) {
        auto ci = wilson95(accuracy[i], trials);
        out << (i + 1) << "," << accuracy[i] << "," << random_baseline[i] << "," << ci.lo << ","
            << ci.hi << "\n";
    }
    return out.str();
}

std::string TopKReport::to_json() const {
    nlohmann::json j;
    j["accuracy"] = accuracy;
    j["random_baseline"] = random_baseline;
    j["trials"] = trials;
    j["skipped"] = skipped;
    j["seed"] = seed;
    j["config_hash"] = config_hash;
    nlohmann::json ci = nlohmann::json::array();
    for (double a : accuracy) {
        auto w = wilson95(a, trials);
        ci.push_back({{"lo", w.lo}, {"hi", w.hi}});
    }
    j["wilson95"] = ci;
    return j.dump(2);
}

std::string RankMatrix::to_csv() const {
    std::ostringstream out;
    for (const auto& row : rows) {
        for (size_t j = 0; j < row.size(); ++j) out << (j ? "," : "") << row[j];
        out << "\n";
    }
    return out.str();
}

world::Image RankMatrix::heatmap(int cell_px) const {
    int n = static_cast<int>(rows.size());
    int m = n == 0 ? 0 : static_cast<int>(rows[0].size());
    world::Image img;
    img.width = std::max(1, m * cell_px);
    img.height = std::max(1, n * cell_px);
    img.pixels.assign(static_cast<size_t>(img.width) * img.height * 3, 0);
    double vmax = 1e-12;
    for (const auto& row : rows)
        for (double v : row) vmax = std::max(vmax, v);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            int i = y / cell_px, j = x / cell_px;
            double v = (i < n && j < m) ? rows[static_cast<size_t>(i)][static_cast<size_t>(j)] / vmax
                                        : 0.0;
            size_t idx = (static_cast<size_t>(y) * img.width + x) * 3;
            img.pixels[idx + 0] = static_cast<uint8_t>(std::lround(255.0 * v));
            img.pixels[idx + 1] = static_cast<uint8_t>(std::lround(64.0 * (1.0 - v)));
            img.pixels[idx + 2] = static_cast<uint8_t>(std::lround(255.0 * (1.0 - v)));
        }
    }
    return img;
}

namespace {

// descending by score with a seeded tiebreak, returns candidate order
std::vector<size_t> rank_candidates(const std::vector<double>& scores, DetRng& rng) {
    std::vector<size_t> tiebreak(scores.size());
    std::iota(tiebreak.begin(), tiebreak.end(), 0);
    for (size_t i = tiebreak.size(); i > 1; --i)
        std::swap(tiebreak[i - 1], tiebreak[rng.below(i)]);
    std::vector<size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return tiebreak[a] < tiebreak[b];
    });
    return order;
}

TopKReport make_report(int top_k, int n_candidates, uint64_t seed) {
    TopKReport rep;
    rep.accuracy.assign(static_cast<size_t>(top_k), 0.0);
    rep.random_baseline.resize(static_cast<size_t>(top_k));
    for (int k = 1; k <= top_k; ++k)
        rep.random_baseline[static_cast<size_t>(k - 1)] =
            std::min(1.0, static_cast<double>(k) / n_candidates);
    rep.seed = seed;
    return rep;
}

}  // namespace

TopKReport author_test(const agents::Cohort& cohort, const vpe::Lexicon& lexicon,
                       const AuthorTestOptions& opts, uint64_t seed) {
    if (cohort.agents.size() < static_cast<size_t>(opts.n_candidates))
        throw ConfigError("author_test: cohort smaller than candidate count");
    TopKReport rep = make_report(opts.top_k, opts.n_candidates, seed);
    DetRng rng(mix64(seed, 0xA07Full));

    std::vector<std::map<std::string, agents::ImageMeta>> metas(cohort.agents.size());
    for (size_t ai = 0; ai < cohort.agents.size(); ++ai)
        for (const auto& m : cohort.image_meta[ai]) metas[ai][m.image_ref] = m;

    for (int trial = 0; trial < opts.trials; ++trial) {
        size_t author = rng.below(cohort.agents.size());
        if (cohort.comments[author].empty()) {
            ++rep.skipped;
            continue;
        }
        const agents::Comment& comment =
            cohort.comments[author][rng.below(cohort.comments[author].size())];
        std::set<size_t> cand{author};
        while (cand.size() < static_cast<size_t>(opts.n_candidates))
            cand.insert(rng.below(cohort.agents.size()));
        std::vector<size_t> candidates(cand.begin(), cand.end());

        const agents::ImageMeta* meta = nullptr;
        auto mit = metas[author].find(comment.image_ref);
        if (mit != metas[author].end()) meta = &mit->second;
        std::set<std::string> pos, neg;
        for (const auto& m : vpe::detect_mentions(comment.text, lexicon, meta))
            (m.polarity > 0 ? pos : neg).insert(m.attr);

        std::vector<double> scores;
        for (size_t c : candidates) {
            if (opts.random_ranker) {
                scores.push_back(rng.uniform());
                continue;
            }
            const auto& vp = cohort.agents[c].vp;
            double s = 0.0;
            for (const auto& a : pos) s += vp.liked.count(a) ? 1.0 : 0.0;
            for (const auto& a : neg) s += vp.disliked.count(a) ? 1.0 : 0.0;
            scores.push_back(s);
        }
        auto order = rank_candidates(scores, rng);
        for (int k = 0; k < opts.top_k; ++k) {
            if (k < static_cast<int>(order.size()) &&
                candidates[order[static_cast<size_t>(k)]] == author) {
                for (int kk = k; kk < opts.top_k; ++kk)
                    rep.accuracy[static_cast<size_t>(kk)] += 1.0;
                break;
            }
        }
        ++rep.trials;
    }
    for (auto& a : rep.accuracy) a = rep.trials ? a / static_cast<double>(rep.trials) : 0.0;
    return rep;
}

namespace {

double jaccard_similarity(const std::set<std::string>& a, const std::set<std::string>& b) {
    if (a.empty() && b.empty()) return 1.0;
    return 1.0 - agents::jaccard_distance(a, b);
}

double vp_similarity(const agents::VisualPreference& rec, const agents::VisualPreference& cand,
                     VpVariant variant) {
    switch (variant) {
        case VpVariant::kPlusOnly: return jaccard_similarity(rec.liked, cand.liked);
        case VpVariant::kMinusOnly: return jaccard_similarity(rec.disliked, cand.disliked);
        default:
            return 0.5 * (jaccard_similarity(rec.liked, cand.liked) +
                          jaccard_similarity(rec.disliked, cand.disliked));
    }
}

}  // namespace

TopKReport vp_vs_vp_test(const agents::Cohort& cohort, const vpe::Lexicon& lexicon,
                         const VpVsVpOptions& opts, uint64_t seed) {
    if (cohort.agents.size() < static_cast<size_t>(opts.n_candidates))
        throw ConfigError("vp_vs_vp_test: cohort smaller than candidate count");
    TopKReport rep = make_report(opts.top_k, opts.n_candidates, seed);
    DetRng rng(mix64(seed, 0x4B4Bull));

    // reconstruct once per agent from all of their comments
    std::vector<agents::VisualPreference> reconstructed(cohort.agents.size());
    for (size_t ai = 0; ai < cohort.agents.size(); ++ai) {
        std::map<std::string, agents::ImageMeta> metas;
        for (const auto& m : cohort.image_meta[ai]) metas[m.image_ref] = m;
        if (!cohort.comments[ai].empty())
            reconstructed[ai] = vpe::extract_preferences(cohort.comments[ai], lexicon, metas);
    }

    for (int trial = 0; trial < opts.trials; ++trial) {
        size_t target = rng.below(cohort.agents.size());
        const auto& rec = reconstructed[target];
        std::set<size_t> cand{target};
        while (cand.size() < static_cast<size_t>(opts.n_candidates))
            cand.insert(rng.below(cohort.agents.size()));
        std::vector<size_t> candidates(cand.begin(), cand.end());
        ++rep.trials;
        bool empty_rec = opts.variant == VpVariant::kPlusOnly ? rec.liked.empty()
                         : opts.variant == VpVariant::kMinusOnly
                             ? rec.disliked.empty()
                             : rec.liked.empty() && rec.disliked.empty();
        if (empty_rec) {
            ++rep.skipped;
            continue;
        }
        std::vector<double> scores;
        for (size_t c : candidates)
            scores.push_back(opts.random_ranker
                                 ? rng.uniform()
                                 : vp_similarity(rec, cohort.agents[c].vp, opts.variant));
        auto order = rank_candidates(scores, rng);
        const auto& truth = cohort.agents[target].vp;
        for (int k = 0; k < opts.top_k && k < static_cast<int>(order.size()); ++k) {
            // any candidate equal to the true VP counts, so duplicates are fine
            if (cohort.agents[candidates[order[static_cast<size_t>(k)]]].vp == truth) {
                for (int kk = k; kk < opts.top_k; ++kk)
                    rep.accuracy[static_cast<size_t>(kk)] += 1.0;
                break;
            }
        }
    }
    for (auto& a : rep.accuracy) a = rep.trials ? a / static_cast<double>(rep.trials) : 0.0;
    return rep;
}

embed::Embedding baseline_prompt_concat(const embed::Prompt& prompt,
                                        const agents::VisualPreference& vp,
                                        const taxonomy::Taxonomy& tax, uint64_t signature_seed,
                                        int n) {
    embed::Prompt extended = prompt;
    int added = 0;
    for (const auto& a : vp.liked) {  // std::set iterates lexicographically
        if (added >= n) break;
        extended.style_attrs.insert(a);
        ++added;
    }
    return embed::encode_prompt(extended, tax, signature_seed);
}

std::vector<embed::Prompt> make_study_prompts(const taxonomy::Taxonomy& tax) {
    std::vector<embed::Prompt> prompts;
    const world::Shape shapes[3] = {world::Shape::kCircle, world::Shape::kSquare,
                                    world::Shape::kTriangle};
    for (int i = 0; i < 13; ++i) {
        embed::Prompt p;
        p.content.shape = shapes[i % 3];
        p.content.scale = 0.35 + 0.05 * (i % 7);
        p.content.position = {0.3 + 0.05 * (i % 5), 0.3 + 0.05 * ((i * 2) % 5)};
        prompts.push_back(p);
    }
    embed::Prompt styled1;
    styled1.content.shape = world::Shape::kCircle;
    styled1.content.scale = 0.5;
    if (tax.has("azure")) styled1.style_attrs.insert("azure");
    prompts.push_back(styled1);
    embed::Prompt styled2;
    styled2.content.shape = world::Shape::kSquare;
    styled2.content.scale = 0.6;
    if (tax.has("dense pattern")) styled2.style_attrs.insert("dense pattern");
    prompts.push_back(styled2);
    return prompts;
}

StudyResult personalization_study(const agents::Cohort& cohort, const taxonomy::Taxonomy& tax,
                                  const SampleFn& sampler,
                                  const std::vector<embed::Prompt>& prompts,
                                  const StudyOptions& opts, uint64_t seed) {
    if (static_cast<int>(cohort.agents.size()) < opts.n_agents)
        throw ConfigError("personalization_study: needs at least " +
                          std::to_string(opts.n_agents) + " agents");
    if (static_cast<int>(prompts.size()) < 12)
        throw ConfigError("personalization_study: needs at least 12 prompts");
    const int n = opts.n_agents;
    const int slots = opts.slots;
    DetRng rng(mix64(seed, 0x57D7ull));

    // per-agent embeddings and proxy contexts
    std::vector<embed::Embedding> vp_plus(static_cast<size_t>(n)), vp_minus(static_cast<size_t>(n));
    std::vector<proxy::ContextSet> contexts;
    for (int i = 0; i < n; ++i) {
        const auto& agent = cohort.agents[static_cast<size_t>(i)];
        vp_plus[static_cast<size_t>(i)] =
            embed::encode_vp_side(agent.vp.liked, tax, cohort.signature_seed);
        vp_minus[static_cast<size_t>(i)] =
            embed::encode_vp_side(agent.vp.disliked, tax, cohort.signature_seed);
        std::vector<world::Image> liked, disliked;
        for (const auto& m : cohort.image_meta[static_cast<size_t>(i)]) {
            auto& dst = m.from_liked ? liked : disliked;
            if (static_cast<int>(dst.size()) < opts.context_per_side)
                dst.push_back(proxy::render_meta(m, cohort.seed, opts.image_size));
        }
        contexts.emplace_back(std::move(liked), std::move(disliked));
    }
    proxy::ProxyModel model = proxy::ProxyModel::centroid_model(opts.kappa);

    auto personalized_embedding = [&](int agent_idx, const embed::Prompt& prompt) {
        const auto& agent = cohort.agents[static_cast<size_t>(agent_idx)];
        if (opts.concat_arm) {
            embed::Embedding e = baseline_prompt_concat(prompt, agent.vp, tax,
                                                        cohort.signature_seed);
            return embed::fill_style_neutral(e);
        }
        embed::Embedding p = embed::fill_style_neutral(embed::encode_prompt(prompt, tax,
                                                                            cohort.signature_seed));
        return embed::compose(p, vp_plus[static_cast<size_t>(agent_idx)],
                              vp_minus[static_cast<size_t>(agent_idx)], opts.beta);
    };

    StudyResult result;
    result.report = make_report(opts.top_k, slots, seed);
    int cols = opts.mode == StudyMode::kVsOthers ? n : 2;
    result.matrix.rows.assign(static_cast<size_t>(n), std::vector<double>(static_cast<size_t>(cols), 0.0));
    result.matrix.prompt_count = static_cast<int>(prompts.size());

    double own_score_sum = 0.0;
    long own_score_n = 0;

    for (size_t pi = 0; pi < prompts.size(); ++pi) {
        const embed::Prompt& prompt = prompts[pi];
        embed::Embedding p_neutral =
            embed::fill_style_neutral(embed::encode_prompt(prompt, tax, cohort.signature_seed));
        embed::Embedding zero;

        // personalized image per study agent for this prompt
        std::vector<world::Image> personalized;
        for (int i = 0; i < n; ++i) {
            const embed::Embedding composed = personalized_embedding(i, prompt);
            const embed::Embedding& vp = opts.concat_arm ? zero : vp_plus[static_cast<size_t>(i)];
            const embed::Embedding& vm = opts.concat_arm ? zero : vp_minus[static_cast<size_t>(i)];
            personalized.push_back(
                sampler(composed, vp, vm, mix64(mix64(seed, pi), static_cast<uint64_t>(i))));
        }
        // unpersonalized competitors, shared across agents
        std::vector<world::Image> plain;
        if (opts.mode == StudyMode::kVsNone) {
            for (int s = 0; s < slots - 1; ++s)
                plain.push_back(sampler(p_neutral, zero, zero,
                                        mix64(mix64(seed, pi), 1000 + static_cast<uint64_t>(s))));
        }

        for (int i = 0; i < n; ++i) {
            std::vector<const world::Image*> shown;
            std::vector<int> owner;  // agent index or -1 for unpersonalized
            shown.push_back(&personalized[static_cast<size_t>(i)]);
            owner.push_back(i);
            if (opts.mode == StudyMode::kVsNone) {
                for (const auto& img : plain) {
                    shown.push_back(&img);
                    owner.push_back(-1);
                }
            } else {
                for (int j = 0; j < n && static_cast<int>(shown.size()) < slots; ++j) {
                    if (j == i) continue;
                    shown.push_back(&personalized[static_cast<size_t>(j)]);
                    owner.push_back(j);
                }
            }
            std::vector<double> scores;
            for (const auto* img : shown)
                scores.push_back(opts.random_scorer
                                     ? rng.uniform()
                                     : proxy::score(model, *img, contexts[static_cast<size_t>(i)]));
            own_score_sum += opts.random_scorer
                                 ? 0.0
                                 : proxy::score(model, *shown[0], contexts[static_cast<size_t>(i)]);
            ++own_score_n;
            auto order = rank_candidates(scores, rng);
            for (size_t r = 0; r < order.size(); ++r) {
                size_t slot = order[r];
                int who = owner[slot];
                double credit = 1.0 / static_cast<double>(r + 1);
                if (opts.mode == StudyMode::kVsOthers) {
                    if (who >= 0)
                        result.matrix.rows[static_cast<size_t>(i)][static_cast<size_t>(who)] += credit;
                } else {
                    result.matrix.rows[static_cast<size_t>(i)][who == i ? 0 : 1] += credit;
                }
                if (who == i) {
                    for (int kk = static_cast<int>(r); kk < opts.top_k; ++kk)
                        result.report.accuracy[static_cast<size_t>(kk)] += 1.0;
                }
            }
            ++result.report.trials;
        }
    }

    for (auto& row : result.matrix.rows) {
        double s = std::accumulate(row.begin(), row.end(), 0.0);
        if (s > 0.0)
            for (auto& v : row) v /= s;
    }
    for (auto& a : result.report.accuracy)
        a = result.report.trials ? a / static_cast<double>(result.report.trials) : 0.0;
    result.mean_own_score = own_score_n ? own_score_sum / static_cast<double>(own_score_n) : 0.0;
    return result;
}

std::map<std::string, AblationRow> attribute_ablation(const taxonomy::Taxonomy& tax,
                                                      const AblationOptions& opts,
                                                      uint64_t seed) {
    std::map<std::string, std::set<std::string>> variants = {
        {"both", {}},
        {"no_color", {"color_palette", "hues"}},
        {"no_style", {"art_style"}},
        {"neither", {"color_palette", "hues", "art_style"}},
    };
    std::map<std::string, AblationRow> table;
    for (const auto& [name, drop] : variants) {
        taxonomy::Taxonomy sub = drop.empty() ? tax : tax.without_categories(drop);
        agents::CohortConfig ccfg;
        ccfg.n = opts.agents;
        ccfg.avg_attrs = opts.avg_attrs;
        ccfg.min_jaccard_dist = 0.6;  // small pool; diversity floor relaxed
        agents::ImageSetConfig icfg;
        icfg.k_liked = icfg.k_disliked = opts.context_per_side + 1;
        icfg.image_size = opts.image_size;
        agents::Cohort cohort = agents::build_cohort(ccfg, sub, icfg, {2, 4},
                                                     mix64(seed, fnv1a64(name)), 77);

        proxy::ProxyModel model = proxy::ProxyModel::centroid_model(opts.kappa);
        double correct = 0.0;
        long trials = 0;
        DetRng rng(mix64(seed, fnv1a64(name) + 1));
        for (size_t ai = 0; ai < cohort.agents.size(); ++ai) {
            std::vector<const agents::ImageMeta*> liked, disliked;
            for (const auto& m : cohort.image_meta[ai])
                (m.from_liked ? liked : disliked).push_back(&m);
            if (static_cast<int>(liked.size()) <= opts.context_per_side) continue;
            std::vector<world::Image> cl, cd;
            for (int i = 0; i < opts.context_per_side; ++i) {
                cl.push_back(proxy::render_meta(*liked[static_cast<size_t>(i)], cohort.seed,
                                                opts.image_size));
                if (i < static_cast<int>(disliked.size()))
                    cd.push_back(proxy::render_meta(*disliked[static_cast<size_t>(i)],
                                                    cohort.seed, opts.image_size));
            }
            proxy::ContextSet ctx(std::move(cl), std::move(cd));
            world::Image own = proxy::render_meta(*liked.back(), cohort.seed, opts.image_size);
            size_t other = rng.below(cohort.agents.size());
            if (other == ai) other = (other + 1) % cohort.agents.size();
            std::vector<const agents::ImageMeta*> other_liked;
            for (const auto& m : cohort.image_meta[other])
                if (m.from_liked) other_liked.push_back(&m);
            world::Image rnd = proxy::render_meta(*other_liked[rng.below(other_liked.size())],
                                                  cohort.seed, opts.image_size);
            double so = proxy::score(model, own, ctx);
            double sr = proxy::score(model, rnd, ctx);
            if (so > sr) correct += 1.0;
            else if (so == sr) correct += 0.5;
            ++trials;
        }
        AblationRow row;
        row.trials = trials;
        row.accuracy = trials ? correct / static_cast<double>(trials) : 0.0;
        row.ci = wilson95(row.accuracy, trials);
        table[name] = row;
    }

    // agents with no usable preference signal score through empty contexts
    {
        AblationRow row;
        DetRng rng(mix64(seed, 0xE447ull));
        proxy::ProxyModel model = proxy::ProxyModel::centroid_model(opts.kappa);
        proxy::ContextSet empty_ctx;
        long trials = 64;
        double correct = 0.0;
        for (long i = 0; i < trials; ++i) {
            world::FeatureVector s1, s2;
            for (int c = 0; c < taxonomy::kFeatureDim; ++c) {
                s1.values[static_cast<size_t>(c)] = rng.uniform();
                s1.defined[static_cast<size_t>(c)] = true;
                s2.values[static_cast<size_t>(c)] = rng.uniform();
                s2.defined[static_cast<size_t>(c)] = true;
            }
            world::Content c;
            c.scale = 0.5;
            world::RenderOptions ro;
            ro.width = ro.height = opts.image_size;
            double sa = proxy::score(model, world::render(c, s1, rng.next_u64(), ro), empty_ctx);
            double sb = proxy::score(model, world::render(c, s2, rng.next_u64(), ro), empty_ctx);
            if (sa > sb) correct += 1.0;
            else if (sa == sb) correct += 0.5;
        }
        row.trials = trials;
        row.accuracy = correct / static_cast<double>(trials);
        row.ci = wilson95(row.accuracy, trials);
        table["empty"] = row;
    }
    table["random"] = AblationRow{0.5, 0, {0.5, 0.5}};
    return table;
}

}  // namespace prefgen::evalharness
