#include "prefgen/cliapp.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "prefgen/agents.hpp"
#include "prefgen/config.hpp"
#include "prefgen/diffusion.hpp"
#include "prefgen/embed.hpp"
#include "prefgen/errors.hpp"
#include "prefgen/evalharness.hpp"
#include "prefgen/hashing.hpp"
#include "prefgen/proxy.hpp"
#include "prefgen/taxonomy.hpp"
#include "prefgen/vpe.hpp"
#include "prefgen/world.hpp"

namespace prefgen::cli {

namespace fs = std::filesystem;
using config::RunConfig;
using nlohmann::json;

namespace {

struct OutputDir {
    fs::path dir;
    std::vector<fs::path> files;

    fs::path path(const std::string& name) {
        fs::path p = dir / name;
        files.push_back(p);
        return p;
    }

    void write_text(const std::string& name, const std::string& text) {
        std::ofstream out(path(name), std::ios::binary);
        out << text;
    }
};

std::string file_hash_hex(const fs::path& p, uintmax_t* bytes) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    std::string data = ss.str();
    *bytes = data.size();
    uint64_t h = fnv1a64(data);
    std::ostringstream out;
    out << std::hex;
    for (int i = 15; i >= 0; --i) out << ((h >> (4 * i)) & 0xF);
    return out.str();
}

void write_manifest(OutputDir& out, const std::string& command, const RunConfig& cfg) {
    json manifest;
    manifest["command"] = command;
    manifest["config_hash"] = cfg.hash();
    manifest["config"] = cfg.raw();
    json files = json::array();
    std::sort(out.files.begin(), out.files.end());
    for (const auto& f : out.files) {
        uintmax_t bytes = 0;
        std::string h = file_hash_hex(f, &bytes);
        files.push_back({{"path", f.filename().string()}, {"bytes", bytes}, {"fnv1a64", h}});
    }
    manifest["files"] = files;
    std::ofstream m(out.dir / "manifest.json", std::ios::binary);
    m << manifest.dump(2) << "\n";
}

taxonomy::Taxonomy load_tax(const RunConfig& cfg) {
    auto tax = taxonomy::load_taxonomy(cfg.get<std::string>("taxonomy.path"));
    std::string op = cfg.get<std::string>("taxonomy.overrides_path");
    if (!op.empty()) taxonomy::load_overrides(tax, op);
    return tax;
}

agents::CohortConfig cohort_config(const RunConfig& cfg) {
    agents::CohortConfig c;
    c.n = cfg.get<int>("cohort.n");
    c.avg_attrs = cfg.get<double>("cohort.avg_attrs");
    c.min_jaccard_dist = cfg.get<double>("cohort.min_jaccard_dist");
    c.per_side_constraint = cfg.get<bool>("cohort.per_side");
    c.retry_budget = cfg.get<int>("cohort.retry_budget");
    c.comment_style.typo_rate = cfg.get<double>("cohort.typo_rate");
    c.comment_style.negation_rate = cfg.get<double>("cohort.negation_rate");
    c.comment_style.generic_rate = cfg.get<double>("cohort.generic_rate");
    return c;
}

agents::Cohort build_cohort(const RunConfig& cfg, const taxonomy::Taxonomy& tax,
                            int k_override = -1) {
    agents::ImageSetConfig icfg;
    icfg.k_liked = k_override > 0 ? k_override : cfg.get<int>("cohort.k_liked");
    icfg.k_disliked = k_override > 0 ? k_override : cfg.get<int>("cohort.k_disliked");
    icfg.image_size = cfg.get<int>("world.image_size");
    agents::CommentsPerAgent cc{cfg.get<int>("cohort.min_comments"),
                                cfg.get<int>("cohort.max_comments")};
    return agents::build_cohort(cohort_config(cfg), tax, icfg, cc,
                                cfg.get<uint64_t>("seed"),
                                cfg.get<uint64_t>("taxonomy.signature_seed"));
}

// demo preference with curated extreme targets, used by personalize/sweep-beta
agents::VisualPreference builtin_preference() {
    agents::VisualPreference vp;
    vp.liked = {"highly saturated", "light", "dense pattern", "balanced composition"};
    vp.disliked = {"desaturated", "dark", "sparse pattern", "imbalanced composition"};
    return vp;
}

diffusion::GuidanceConfig guidance_config(const RunConfig& cfg) {
    diffusion::GuidanceConfig g;
    g.w = cfg.get<double>("guidance.w");
    g.beta = cfg.get<double>("guidance.beta");
    std::string mode = cfg.get<std::string>("guidance.coefficient_mode");
    if (mode == "standard_ddpm")
        g.coefficient_mode = diffusion::GuidanceConfig::CoefficientMode::kStandardDdpm;
    else if (mode == "paper_literal")
        g.coefficient_mode = diffusion::GuidanceConfig::CoefficientMode::kPaperLiteral;
    else
        throw ConfigError("guidance.coefficient_mode must be standard_ddpm or paper_literal");
    g.use_noise_guidance = cfg.get<bool>("guidance.use_noise_guidance");
    return g;
}

diffusion::DenoiserParams require_checkpoint(const RunConfig& cfg) {
    std::string path = cfg.get<std::string>("diffusion.checkpoint");
    if (path.empty())
        throw MissingCheckpointError(
            "diffusion.checkpoint is empty; run the train command and point "
            "diffusion.checkpoint at its checkpoint.bin");
    return diffusion::load_checkpoint(path);
}

embed::Prompt prompt_from_config(const RunConfig& cfg) {
    embed::Prompt p;
    p.content.shape = world::shape_from_name(cfg.get<std::string>("personalize.prompt_shape"));
    p.content.scale = cfg.get<double>("personalize.prompt_scale");
    p.content.position = {cfg.get<double>("personalize.prompt_x"),
                          cfg.get<double>("personalize.prompt_y")};
    for (const auto& a : cfg.raw().at("personalize").at("prompt_attrs"))
        p.style_attrs.insert(a.get<std::string>());
    return p;
}

agents::VisualPreference preference_from_config(const RunConfig& cfg,
                                                const taxonomy::Taxonomy& tax) {
    std::string mode = cfg.get<std::string>("personalize.agent");
    if (mode == "builtin") return builtin_preference();
    if (mode == "cohort") {
        auto cohort = build_cohort(cfg, tax);
        int id = cfg.get<int>("personalize.cohort_agent");
        if (id < 0 || id >= static_cast<int>(cohort.agents.size()))
            throw ConfigError("personalize.cohort_agent out of range");
        return cohort.agents[static_cast<size_t>(id)].vp;
    }
    throw ConfigError("personalize.agent must be 'builtin' or 'cohort'");
}

struct Stack {
    taxonomy::Taxonomy tax;
    diffusion::NoiseSchedule sched;
    std::unique_ptr<diffusion::MlpDenoiser> den;
    diffusion::GuidanceConfig gcfg;
    uint64_t signature_seed = 7;
    int size = 32;
};

Stack load_stack(const RunConfig& cfg) {
    Stack s;
    s.tax = load_tax(cfg);
    auto params = require_checkpoint(cfg);
    s.size = params.width;
    s.sched = diffusion::make_schedule(params.T, params.beta_min, params.beta_max);
    s.den = std::make_unique<diffusion::MlpDenoiser>(std::move(params));
    s.gcfg = guidance_config(cfg);
    s.signature_seed = cfg.get<uint64_t>("taxonomy.signature_seed");
    return s;
}

evalharness::SampleFn make_sampler(const Stack& stack) {
    return [&stack](const embed::Embedding& composed, const embed::Embedding& vp,
                    const embed::Embedding& vm, uint64_t seed) {
        return diffusion::sample(composed, vp, vm, stack.gcfg, stack.sched, *stack.den,
                                 stack.size, stack.size, seed);
    };
}

double spearman(const std::vector<double>& xs, const std::vector<double>& ys) {
    auto ranks = [](const std::vector<double>& v) {
        std::vector<size_t> order(v.size());
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return v[a] < v[b]; });
        std::vector<double> r(v.size());
        for (size_t i = 0; i < order.size(); ++i) r[order[i]] = static_cast<double>(i);
        return r;
    };
    auto rx = ranks(xs), ry = ranks(ys);
    double mx = 0, my = 0;
    for (size_t i = 0; i < rx.size(); ++i) {
        mx += rx[i];
        my += ry[i];
    }
    mx /= static_cast<double>(rx.size());
    my /= static_cast<double>(ry.size());
    double num = 0, dx = 0, dy = 0;
    for (size_t i = 0; i < rx.size(); ++i) {
        num += (rx[i] - mx) * (ry[i] - my);
        dx += (rx[i] - mx) * (rx[i] - mx);
        dy += (ry[i] - my) * (ry[i] - my);
    }
    return dx > 0 && dy > 0 ? num / std::sqrt(dx * dy) : 0.0;
}

// ---- commands ----

void cmd_taxonomy(const RunConfig& cfg, OutputDir& out) {
    auto tax = load_tax(cfg);
    uint64_t seed = cfg.get<uint64_t>("taxonomy.signature_seed");
    json j;
    j["categories"] = tax.categories();
    j["attribute_count"] = tax.attributes().size();
    json per_cat;
    for (const auto& c : tax.categories())
        per_cat[c] = tax.ids_in_category(c).size();
    j["per_category"] = per_cat;
    uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& a : tax.attributes()) {
        auto sig = taxonomy::signature(tax, a, seed);
        h = fnv1a64(sig.target.data(), sizeof(sig.target), h);
        h = fnv1a64(sig.residual.data(), sizeof(sig.residual), h);
    }
    std::ostringstream hex;
    hex << std::hex << h;
    j["signature_checksum"] = hex.str();
    out.write_text("taxonomy_summary.json", j.dump(2) + "\n");
}

void cmd_agents(const RunConfig& cfg, OutputDir& out) {
    auto tax = load_tax(cfg);
    auto cohort = build_cohort(cfg, tax);
    out.write_text("cohort.json", cohort.to_json() + "\n");

    std::ostringstream jsonl;
    for (size_t ai = 0; ai < cohort.agents.size(); ++ai) {
        for (const auto& c : cohort.comments[ai]) {
            json j;
            j["agent_id"] = cohort.agents[ai].agent_id;
            j["image_ref"] = c.image_ref;
            j["text"] = c.text;
            j["mentioned_liked"] = c.mentioned_liked;
            j["mentioned_disliked"] = c.mentioned_disliked;
            jsonl << j.dump() << "\n";
        }
    }
    out.write_text("comments.jsonl", jsonl.str());

    auto lex = vpe::Lexicon::from_taxonomy(tax);
    out.write_text("extraction_report.json", vpe::extraction_report(cohort, lex).to_json() + "\n");
}

void cmd_train(const RunConfig& cfg, OutputDir& out) {
    int size = cfg.get<int>("world.image_size");
    auto dataset = diffusion::make_training_set(cfg.get<int>("diffusion.train_pairs"), size,
                                                cfg.get<uint64_t>("seed"));
    auto sched = diffusion::make_schedule(cfg.get<int>("diffusion.T"),
                                          cfg.get<double>("diffusion.beta_min"),
                                          cfg.get<double>("diffusion.beta_max"));
    diffusion::TrainConfig tcfg;
    tcfg.epochs = cfg.get<int>("diffusion.epochs");
    tcfg.batch = cfg.get<int>("diffusion.batch");
    tcfg.lr = cfg.get<double>("diffusion.lr");
    tcfg.cond_dropout = cfg.get<double>("diffusion.cond_dropout");
    tcfg.content_dropout = cfg.get<double>("diffusion.content_dropout");
    tcfg.channel_dropout = cfg.get<double>("diffusion.channel_dropout");
    tcfg.hidden1 = cfg.get<int>("diffusion.hidden1");
    tcfg.hidden2 = cfg.get<int>("diffusion.hidden2");
    tcfg.seed = cfg.get<uint64_t>("seed");
    auto result = diffusion::train_denoiser(dataset, sched, tcfg);
    diffusion::save_checkpoint(result.params, out.path("checkpoint.bin").string());

    std::ostringstream curve;
    curve << "epoch,loss\n";
    for (size_t e = 0; e < result.epoch_loss.size(); ++e)
        curve << e + 1 << "," << result.epoch_loss[e] << "\n";
    out.write_text("training_curve.csv", curve.str());
    std::cout << "train: final loss " << result.params.final_loss << "\n";
}

void cmd_personalize(const RunConfig& cfg, OutputDir& out) {
    Stack stack = load_stack(cfg);
    auto vp = preference_from_config(cfg, stack.tax);
    embed::Prompt prompt = prompt_from_config(cfg);

    embed::Embedding p = embed::fill_style_neutral(
        embed::encode_prompt(prompt, stack.tax, stack.signature_seed));
    embed::Embedding plus = embed::encode_vp_side(vp.liked, stack.tax, stack.signature_seed);
    embed::Embedding minus = embed::encode_vp_side(vp.disliked, stack.tax, stack.signature_seed);
    embed::Embedding composed = embed::compose(p, plus, minus, stack.gcfg.beta);

    uint64_t seed = cfg.get<uint64_t>("personalize.sample_seed");
    world::Image img = diffusion::sample(composed, plus, minus, stack.gcfg, stack.sched,
                                         *stack.den, stack.size, stack.size, seed);
    world::write_ppm(img, out.path("image.ppm").string());
    if (cfg.get<bool>("personalize.png")) world::write_png(img, out.path("image.png").string());

    auto measured = world::measure(img);
    json rec;
    rec["sample_seed"] = seed;
    rec["beta"] = stack.gcfg.beta;
    rec["prompt_embedding"] = embed::to_flat(p);
    rec["composed_embedding"] = embed::to_flat(composed);
    rec["vp_plus_embedding"] = embed::to_flat(plus);
    rec["vp_minus_embedding"] = embed::to_flat(minus);
    json meas = json::array();
    for (int c = 0; c < taxonomy::kFeatureDim; ++c)
        meas.push_back(measured.defined[static_cast<size_t>(c)]
                           ? json(measured.values[static_cast<size_t>(c)])
                           : json());
    rec["measured_features"] = meas;
    out.write_text("record.json", rec.dump(2) + "\n");
}

void cmd_sweep_beta(const RunConfig& cfg, OutputDir& out) {
    Stack stack = load_stack(cfg);
    auto vp = preference_from_config(cfg, stack.tax);
    embed::Prompt prompt = prompt_from_config(cfg);

    embed::Embedding p = embed::fill_style_neutral(
        embed::encode_prompt(prompt, stack.tax, stack.signature_seed));
    embed::Embedding plus = embed::encode_vp_side(vp.liked, stack.tax, stack.signature_seed);
    embed::Embedding minus = embed::encode_vp_side(vp.disliked, stack.tax, stack.signature_seed);
    auto plus_sig = taxonomy::set_signature(stack.tax, vp.liked, stack.signature_seed);
    world::FeatureVector target;
    for (int c = 0; c < taxonomy::kFeatureDim; ++c) {
        target.values[static_cast<size_t>(c)] = plus_sig.target[static_cast<size_t>(c)];
        target.defined[static_cast<size_t>(c)] = plus_sig.defined[static_cast<size_t>(c)];
    }

    std::vector<double> betas;
    for (const auto& b : cfg.raw().at("experiments").at("sweep_betas"))
        betas.push_back(b.get<double>());
    int seeds = cfg.get<int>("experiments.sweep_seeds");
    int div_n = std::min(cfg.get<int>("experiments.diversity_samples"), seeds);
    uint64_t master = cfg.get<uint64_t>("seed");

    std::ostringstream summary, channels;
    summary << "beta,mean_distance_to_vp_plus,stddev,diversity\n";
    channels << "beta,channel,mean,stddev\n";
    std::vector<double> mean_dist, diversity;
    for (size_t bi = 0; bi < betas.size(); ++bi) {
        diffusion::GuidanceConfig g = stack.gcfg;
        g.beta = betas[bi];
        embed::Embedding composed = embed::compose(p, plus, minus, g.beta);
        std::vector<world::FeatureVector> feats;
        std::vector<double> dists;
        for (int s = 0; s < seeds; ++s) {
            world::Image img =
                diffusion::sample(composed, plus, minus, g, stack.sched, *stack.den, stack.size,
                                  stack.size, mix64(mix64(master, bi), static_cast<uint64_t>(s)));
            auto f = world::measure(img);
            feats.push_back(f);
            double d = world::masked_distance(f, target, target.defined);
            if (!std::isnan(d)) dists.push_back(d);
        }
        double m = 0, sd = 0;
        for (double d : dists) m += d;
        m /= std::max<size_t>(1, dists.size());
        for (double d : dists) sd += (d - m) * (d - m);
        sd = std::sqrt(sd / std::max<size_t>(1, dists.size()));
        double div = 0;
        long pairs = 0;
        for (int a = 0; a < div_n; ++a)
            for (int b = a + 1; b < div_n; ++b) {
                double d = world::feature_distance(feats[static_cast<size_t>(a)],
                                                   feats[static_cast<size_t>(b)]);
                if (!std::isnan(d)) {
                    div += d;
                    ++pairs;
                }
            }
        div = pairs ? div / static_cast<double>(pairs) : 0.0;
        mean_dist.push_back(m);
        diversity.push_back(div);
        summary << betas[bi] << "," << m << "," << sd << "," << div << "\n";

        for (int c = 0; c < taxonomy::kFeatureDim; ++c) {
            double cm = 0, cs = 0;
            long n = 0;
            for (const auto& f : feats)
                if (f.defined[static_cast<size_t>(c)]) {
                    cm += f.values[static_cast<size_t>(c)];
                    ++n;
                }
            cm /= std::max(1L, n);
            for (const auto& f : feats)
                if (f.defined[static_cast<size_t>(c)])
                    cs += (f.values[static_cast<size_t>(c)] - cm) *
                          (f.values[static_cast<size_t>(c)] - cm);
            cs = std::sqrt(cs / std::max(1L, n));
            channels << betas[bi] << "," << c << "," << cm << "," << cs << "\n";
        }
    }
    out.write_text("sweep_summary.csv", summary.str());
    out.write_text("sweep_channels.csv", channels.str());

    json j;
    j["betas"] = betas;
    j["mean_distance_to_vp_plus"] = mean_dist;
    j["diversity"] = diversity;
    j["spearman_distance_vs_beta"] = spearman(betas, mean_dist);
    j["spearman_diversity_vs_beta"] = spearman(betas, diversity);
    j["config_hash"] = cfg.hash();
    out.write_text("sweep_summary.json", j.dump(2) + "\n");
    std::cout << "sweep-beta: spearman(distance)=" << spearman(betas, mean_dist)
              << " spearman(diversity)=" << spearman(betas, diversity) << "\n";
}

void cmd_proxy_train(const RunConfig& cfg, OutputDir& out) {
    Stack stack = load_stack(cfg);
    auto cohort = build_cohort(cfg, stack.tax);
    int ctx_n = cfg.get<int>("proxy.context_size");
    int size = stack.size;
    uint64_t master = cfg.get<uint64_t>("seed");
    auto sampler = make_sampler(stack);
    auto prompts = evalharness::make_study_prompts(stack.tax);

    std::vector<proxy::LabeledQuery> train, heldout;
    double centroid_correct = 0.0;
    long centroid_trials = 0;
    proxy::ProxyModel centroid_model =
        proxy::ProxyModel::centroid_model(cfg.get<double>("proxy.kappa"));

    size_t n_agents = std::min<size_t>(cohort.agents.size(), 80);
    for (size_t ai = 0; ai < n_agents; ++ai) {
        const auto& agent = cohort.agents[ai];
        std::vector<world::Image> cl, cd;
        for (const auto& m : cohort.image_meta[ai]) {
            auto& dst = m.from_liked ? cl : cd;
            if (static_cast<int>(dst.size()) < ctx_n)
                dst.push_back(proxy::render_meta(m, cohort.seed, size));
        }
        proxy::ContextSet ctx(std::move(cl), std::move(cd));
        DetRng rng(mix64(master, 0xBEEF + ai));

        std::vector<std::pair<world::Image, int>> queries;
        if (ai % 2 == 0) {
            // personalized samples as positives, mirroring the pipeline output
            embed::Embedding pemb = embed::fill_style_neutral(
                embed::encode_prompt(prompts[ai % prompts.size()], stack.tax,
                                     stack.signature_seed));
            embed::Embedding plus =
                embed::encode_vp_side(agent.vp.liked, stack.tax, stack.signature_seed);
            embed::Embedding minus =
                embed::encode_vp_side(agent.vp.disliked, stack.tax, stack.signature_seed);
            embed::Embedding composed = embed::compose(pemb, plus, minus, stack.gcfg.beta);
            for (int q = 0; q < 2; ++q)
                queries.push_back({sampler(composed, plus, minus, rng.next_u64()), 1});
            embed::Embedding zero;
            queries.push_back({sampler(pemb, zero, zero, rng.next_u64()), 0});
        } else {
            // attribute-conditioned renders as positives
            for (int q = 0; q < 2; ++q) {
                auto sig = taxonomy::set_signature(stack.tax, agent.vp.liked,
                                                   stack.signature_seed);
                world::FeatureVector style;
                for (int c = 0; c < taxonomy::kFeatureDim; ++c) {
                    style.values[static_cast<size_t>(c)] = sig.target[static_cast<size_t>(c)];
                    style.defined[static_cast<size_t>(c)] = sig.defined[static_cast<size_t>(c)];
                }
                style.values[taxonomy::kRoughness] *= 0.35;
                world::Content content;
                content.scale = rng.uniform(0.3, 0.8);
                world::RenderOptions ro;
                ro.width = ro.height = size;
                queries.push_back(
                    {world::render(content, world::fill_undefined(style), rng.next_u64(), ro),
                     1});
            }
        }
        // a random other agent's taste as a negative
        size_t other = rng.below(cohort.agents.size());
        if (other == ai) other = (other + 1) % cohort.agents.size();
        std::vector<const agents::ImageMeta*> other_liked;
        for (const auto& m : cohort.image_meta[other])
            if (m.from_liked) other_liked.push_back(&m);
        queries.push_back(
            {proxy::render_meta(*other_liked[rng.below(other_liked.size())], cohort.seed, size),
             0});

        bool is_heldout = ai % 5 == 4;
        for (const auto& [img, label] : queries) {
            proxy::LabeledQuery q;
            q.features = proxy::difference_features(world::measure(img), ctx);
            q.label = label;
            (is_heldout ? heldout : train).push_back(q);
        }
        if (is_heldout && queries.size() >= 2) {
            double sp = proxy::score(centroid_model, queries[0].first, ctx);
            double sn = proxy::score(centroid_model, queries.back().first, ctx);
            if (sp > sn) centroid_correct += 1.0;
            else if (sp == sn) centroid_correct += 0.5;
            ++centroid_trials;
        }
    }

    proxy::ProxyTrainConfig pcfg;
    pcfg.epochs = cfg.get<int>("proxy.epochs");
    pcfg.lr = cfg.get<double>("proxy.lr");
    pcfg.l2 = cfg.get<double>("proxy.l2");
    pcfg.kappa = cfg.get<double>("proxy.kappa");
    pcfg.init = cfg.get<std::string>("proxy.init") == "centroid"
                    ? proxy::ProxyTrainConfig::Init::kCentroid
                    : proxy::ProxyTrainConfig::Init::kZero;
    pcfg.seed = master;
    auto model = proxy::train_proxy(train, heldout, pcfg);
    proxy::save_proxy(model, out.path("proxy.bin").string());

    json j;
    j["train_examples"] = train.size();
    j["heldout_examples"] = heldout.size();
    j["heldout_accuracy"] = model.heldout_accuracy;
    j["centroid_heldout_accuracy"] =
        centroid_trials ? centroid_correct / static_cast<double>(centroid_trials) : 0.0;
    j["final_loss"] = model.final_loss;
    j["config_hash"] = cfg.hash();
    out.write_text("proxy_report.json", j.dump(2) + "\n");
    std::cout << "proxy-train: heldout accuracy " << model.heldout_accuracy << "\n";
}

void cmd_eval_author(const RunConfig& cfg, OutputDir& out) {
    auto tax = load_tax(cfg);
    auto cohort = build_cohort(cfg, tax);
    auto lex = vpe::Lexicon::from_taxonomy(tax);
    evalharness::AuthorTestOptions opts;
    opts.trials = cfg.get<int>("experiments.trials");
    opts.n_candidates = cfg.get<int>("experiments.n_candidates");
    auto rep = evalharness::author_test(cohort, lex, opts, cfg.get<uint64_t>("seed"));
    rep.config_hash = cfg.hash();
    opts.random_ranker = true;
    auto rnd = evalharness::author_test(cohort, lex, opts, cfg.get<uint64_t>("seed") + 1);
    rnd.config_hash = cfg.hash();
    out.write_text("author_test.csv", rep.to_csv());
    out.write_text("author_test_random.csv", rnd.to_csv());
    json j;
    j["lexical"] = json::parse(rep.to_json());
    j["random"] = json::parse(rnd.to_json());
    out.write_text("author_test.json", j.dump(2) + "\n");
    std::cout << "eval-author: top-1 " << rep.top(1) << " (random " << rnd.top(1) << ")\n";
}

void cmd_eval_vp(const RunConfig& cfg, OutputDir& out) {
    auto tax = load_tax(cfg);
    auto cohort = build_cohort(cfg, tax);
    auto lex = vpe::Lexicon::from_taxonomy(tax);
    evalharness::VpVsVpOptions opts;
    opts.trials = cfg.get<int>("experiments.trials");
    opts.n_candidates = cfg.get<int>("experiments.n_candidates");
    json j;
    const std::pair<const char*, evalharness::VpVariant> variants[] = {
        {"full", evalharness::VpVariant::kFull},
        {"plus_only", evalharness::VpVariant::kPlusOnly},
        {"minus_only", evalharness::VpVariant::kMinusOnly},
    };
    for (auto [name, variant] : variants) {
        opts.variant = variant;
        opts.random_ranker = false;
        auto rep = evalharness::vp_vs_vp_test(cohort, lex, opts, cfg.get<uint64_t>("seed"));
        rep.config_hash = cfg.hash();
        out.write_text(std::string("vp_vs_vp_") + name + ".csv", rep.to_csv());
        j[name] = json::parse(rep.to_json());
        std::cout << "eval-vp " << name << ": top-1 " << rep.top(1) << "\n";
    }
    opts.random_ranker = true;
    opts.variant = evalharness::VpVariant::kFull;
    auto rnd = evalharness::vp_vs_vp_test(cohort, lex, opts, cfg.get<uint64_t>("seed") + 1);
    rnd.config_hash = cfg.hash();
    out.write_text("vp_vs_vp_random.csv", rnd.to_csv());
    j["random"] = json::parse(rnd.to_json());
    out.write_text("vp_vs_vp.json", j.dump(2) + "\n");
}

void cmd_eval_study(const RunConfig& cfg, OutputDir& out) {
    Stack stack = load_stack(cfg);
    auto cohort = build_cohort(cfg, stack.tax);
    auto prompts = evalharness::make_study_prompts(stack.tax);
    auto sampler = make_sampler(stack);

    evalharness::StudyOptions opts;
    opts.n_agents = cfg.get<int>("experiments.study_agents");
    opts.beta = cfg.get<double>("guidance.beta");
    opts.context_per_side = cfg.get<int>("proxy.context_size");
    opts.image_size = stack.size;
    opts.kappa = cfg.get<double>("proxy.kappa");
    uint64_t seed = cfg.get<uint64_t>("seed");

    json j;
    opts.mode = evalharness::StudyMode::kVsNone;
    auto vs_none = evalharness::personalization_study(cohort, stack.tax, sampler, prompts, opts,
                                                      seed);
    vs_none.report.config_hash = cfg.hash();
    out.write_text("study_vs_none.csv", vs_none.report.to_csv());
    out.write_text("study_vs_none_matrix.csv", vs_none.matrix.to_csv());
    j["vs_none"] = json::parse(vs_none.report.to_json());
    j["vs_none_mean_own_score"] = vs_none.mean_own_score;

    opts.mode = evalharness::StudyMode::kVsOthers;
    auto vs_others = evalharness::personalization_study(cohort, stack.tax, sampler, prompts,
                                                        opts, seed);
    vs_others.report.config_hash = cfg.hash();
    out.write_text("study_vs_others.csv", vs_others.report.to_csv());
    out.write_text("study_vs_others_matrix.csv", vs_others.matrix.to_csv());
    world::write_ppm(vs_others.matrix.heatmap(), out.path("study_vs_others_heatmap.ppm").string());
    j["vs_others"] = json::parse(vs_others.report.to_json());

    opts.mode = evalharness::StudyMode::kVsNone;
    opts.random_scorer = true;
    auto random_run = evalharness::personalization_study(cohort, stack.tax, sampler, prompts,
                                                         opts, seed + 1);
    random_run.report.config_hash = cfg.hash();
    out.write_text("study_random_scorer.csv", random_run.report.to_csv());
    j["random_scorer"] = json::parse(random_run.report.to_json());

    opts.random_scorer = false;
    opts.concat_arm = true;
    auto concat = evalharness::personalization_study(cohort, stack.tax, sampler, prompts, opts,
                                                     seed);
    j["concat_arm_mean_own_score"] = concat.mean_own_score;
    j["viper_arm_mean_own_score"] = vs_none.mean_own_score;
    out.write_text("study_summary.json", j.dump(2) + "\n");
    std::cout << "eval-study: vs_none top-1 " << vs_none.report.top(1) << ", vs_others top-1 "
              << vs_others.report.top(1) << ", random top-1 " << random_run.report.top(1)
              << "\n";
}

void cmd_eval_ablation(const RunConfig& cfg, OutputDir& out) {
    auto tax = load_tax(cfg);
    evalharness::AblationOptions opts;
    opts.agents = cfg.get<int>("experiments.ablation_agents");
    opts.image_size = cfg.get<int>("world.image_size");
    opts.kappa = cfg.get<double>("proxy.kappa");
    auto table = evalharness::attribute_ablation(tax, opts, cfg.get<uint64_t>("seed"));
    std::ostringstream csv;
    csv << "variant,accuracy,trials,ci_lo,ci_hi\n";
    json j;
    for (const auto& [name, row] : table) {
        csv << name << "," << row.accuracy << "," << row.trials << "," << row.ci.lo << ","
            << row.ci.hi << "\n";
        j[name] = {{"accuracy", row.accuracy},
                   {"trials", row.trials},
                   {"ci_lo", row.ci.lo},
                   {"ci_hi", row.ci.hi}};
    }
    j["ordering_both_ge_color_ge_neither"] =
        table["both"].accuracy >= table["no_style"].accuracy &&
        table["no_style"].accuracy >= table["neither"].accuracy;
    j["ordering_both_ge_style_ge_neither"] =
        table["both"].accuracy >= table["no_color"].accuracy &&
        table["no_color"].accuracy >= table["neither"].accuracy;
    j["config_hash"] = cfg.hash();
    out.write_text("ablation.csv", csv.str());
    out.write_text("ablation.json", j.dump(2) + "\n");
    std::cout << "eval-ablation: both " << table["both"].accuracy << ", neither "
              << table["neither"].accuracy << "\n";
}

void cmd_eval_context_curve(const RunConfig& cfg, OutputDir& out) {
    auto tax = load_tax(cfg);
    std::vector<int> sizes;
    for (const auto& s : cfg.raw().at("experiments").at("context_sizes"))
        sizes.push_back(s.get<int>());
    int kmax = *std::max_element(sizes.begin(), sizes.end()) + 1;
    auto cohort = build_cohort(cfg, tax, kmax);
    auto curve = proxy::context_size_curve(cohort, sizes, cfg.get<int>("world.image_size"),
                                           cfg.get<double>("proxy.kappa"),
                                           cfg.get<uint64_t>("seed"));
    std::ostringstream csv;
    csv << "context_size,accuracy,trials\n";
    json arr = json::array();
    for (const auto& p : curve) {
        csv << p.context_size << "," << p.accuracy << "," << p.trials << "\n";
        arr.push_back({{"context_size", p.context_size},
                       {"accuracy", p.accuracy},
                       {"trials", p.trials}});
    }
    json j;
    j["curve"] = arr;
    j["config_hash"] = cfg.hash();
    out.write_text("context_curve.csv", csv.str());
    out.write_text("context_curve.json", j.dump(2) + "\n");
    std::cout << "eval-context-curve: " << curve.size() << " points\n";
}

}  // namespace

int run(const std::vector<std::string>& args) {
    CLI::App app{"preference-conditioned image generation workbench"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_root;
    std::vector<std::string> overrides;
    const char* env_out = std::getenv("PREFGEN_OUT");
    out_root = env_out ? env_out : "out";
    app.add_option("--config", config_path, "JSON config file");
    app.add_option("--set", overrides, "override config key, e.g. --set diffusion.epochs=4");
    app.add_option("--out", out_root, "output root directory (env PREFGEN_OUT)");

    std::ostringstream keys;
    keys << "Config keys (defaults):\n";
    for (const auto& line : config::RunConfig::describe_keys()) keys << "  " << line << "\n";
    app.footer(keys.str());

    using Handler = void (*)(const RunConfig&, OutputDir&);
    const std::vector<std::pair<std::string, Handler>> commands = {
        {"taxonomy", &cmd_taxonomy},
        {"agents", &cmd_agents},
        {"train", &cmd_train},
        {"personalize", &cmd_personalize},
        {"sweep-beta", &cmd_sweep_beta},
        {"proxy-train", &cmd_proxy_train},
        {"eval-author", &cmd_eval_author},
        {"eval-vp", &cmd_eval_vp},
        {"eval-study", &cmd_eval_study},
        {"eval-ablation", &cmd_eval_ablation},
        {"eval-context-curve", &cmd_eval_context_curve},
    };
    for (const auto& [name, handler] : commands) {
        auto* sub = app.add_subcommand(name);
        sub->callback([&, name = name, handler = handler] {
            RunConfig cfg = RunConfig::load(config_path, overrides);
            OutputDir out;
            out.dir = fs::path(out_root) / (name + "-" + cfg.hash());
            fs::create_directories(out.dir);
            handler(cfg, out);
            write_manifest(out, name, cfg);
            std::cout << "wrote " << out.dir.string() << "\n";
        });
    }

    std::vector<const char*> argv;
    argv.push_back("prefgen");
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const MissingCheckpointError& e) {
        std::cerr << "missing checkpoint: " << e.what() << "\n";
        return 3;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

}  // namespace prefgen::cli
