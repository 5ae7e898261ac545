#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "prefgen/agents.hpp"
#include "prefgen/embed.hpp"
#include "prefgen/proxy.hpp"
#include "prefgen/vpe.hpp"
#include "prefgen/world.hpp"

namespace prefgen::evalharness {

struct BinomialInterval {
    double lo = 0.0, hi = 1.0;  // Wilson 95%
};
BinomialInterval wilson95(double p_hat, long n);

struct TopKReport {
    std::vector<double> accuracy;         // index k-1
    std::vector<double> random_baseline;  // k/n for choose-1-of-n
    long trials = 0;
    long skipped = 0;
    uint64_t seed = 0;
    std::string config_hash;

    double top(int k) const { return accuracy[static_cast<size_t>(k - 1)]; }
    std::string to_csv() const;
    std::string to_json() const;
};

struct RankMatrix {
    std::vector<std::vector<double>> rows;  // normalized, each summing to 1
    int prompt_count = 0;
    std::string to_csv() const;
    world::Image heatmap(int cell_px = 24) const;
};

struct AuthorTestOptions {
    int n_candidates = 5;
    int trials = 500;
    int top_k = 3;
    bool random_ranker = false;
};

// Identify a comment's author among n_candidates agents; candidates ranked by
// lexical overlap between the comment's matched attributes and their VPs.
TopKReport author_test(const agents::Cohort& cohort, const vpe::Lexicon& lexicon,
                       const AuthorTestOptions& opts, uint64_t seed);

enum class VpVariant { kFull, kPlusOnly, kMinusOnly };

struct VpVsVpOptions {
    int n_candidates = 5;
    int trials = 200;
    int top_k = 3;
    bool random_ranker = false;
    VpVariant variant = VpVariant::kFull;
};

// Reconstruct each tested agent's VP from all their comments, then rank
// candidate ground-truth VPs by Jaccard similarity to the reconstruction.
TopKReport vp_vs_vp_test(const agents::Cohort& cohort, const vpe::Lexicon& lexicon,
                         const VpVsVpOptions& opts, uint64_t seed);

// prompt embedding extended by up to n VP+ attributes (lexicographic); the
// prompt-personalization comparison arm
embed::Embedding baseline_prompt_concat(const embed::Prompt& prompt,
                                        const agents::VisualPreference& vp,
                                        const taxonomy::Taxonomy& tax, uint64_t signature_seed,
                                        int n = 6);

// produces an image for a composed prompt embedding; the production stack
// wraps diffusion::sample, tests may substitute a cheap generator
using SampleFn = std::function<world::Image(const embed::Embedding& composed,
                                            const embed::Embedding& vp_plus,
                                            const embed::Embedding& vp_minus, uint64_t seed)>;

enum class StudyMode { kVsNone, kVsOthers };

struct StudyOptions {
    StudyMode mode = StudyMode::kVsNone;
    int n_agents = 8;        // study slots; competitors in vs_others come from these
    int slots = 8;           // images shown per trial
    double beta = 0.8;       // personalization degree for the personalized arm
    int context_per_side = 10;
    int image_size = 32;
    int top_k = 4;
    bool random_scorer = false;
    bool concat_arm = false;  // personalize via baseline_prompt_concat instead
    double kappa = 8.0;
};

struct StudyResult {
    TopKReport report;
    RankMatrix matrix;
    double mean_own_score = 0.0;  // proxy score of the agent's own image
};

std::vector<embed::Prompt> make_study_prompts(const taxonomy::Taxonomy& tax);

// Table-1-style study: per (agent, prompt), one personalized image ranked by
// proxy score among `slots` competitors.
StudyResult personalization_study(const agents::Cohort& cohort, const taxonomy::Taxonomy& tax,
                                  const SampleFn& sampler,
                                  const std::vector<embed::Prompt>& prompts,
                                  const StudyOptions& opts, uint64_t seed);

struct AblationRow {
    double accuracy = 0.0;
    long trials = 0;
    BinomialInterval ci;
};

struct AblationOptions {
    int agents = 40;
    double avg_attrs = 10.0;
    int context_per_side = 8;
    int image_size = 32;
    double kappa = 8.0;
};

// Personalized-vs-random discrimination accuracy for taxonomy variants
// {both, no_color, no_style, neither, empty, random}.
std::map<std::string, AblationRow> attribute_ablation(const taxonomy::Taxonomy& tax,
                                                      const AblationOptions& opts,
                                                      uint64_t seed);

}  // namespace prefgen::evalharness
