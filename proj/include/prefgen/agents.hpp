#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "prefgen/hashing.hpp"
#include "prefgen/taxonomy.hpp"
#include "prefgen/world.hpp"

namespace prefgen::agents {

struct VisualPreference {
    std::set<std::string> liked;     // VP+
    std::set<std::string> disliked;  // VP-

    std::set<std::string> all() const {
        std::set<std::string> u = liked;
        u.insert(disliked.begin(), disliked.end());
        return u;
    }
    bool operator==(const VisualPreference& o) const = default;
};

enum class Verbosity { kTerse, kNormal, kVerbose };

struct CommentStyle {
    Verbosity verbosity = Verbosity::kNormal;
    double negation_rate = 0.25;  // chance a dislike is phrased as negated praise
    double typo_rate = 0.02;      // per-character swap/drop chance
    double generic_rate = 0.15;   // chance of a category-level mention
};

struct Agent {
    int agent_id = 0;
    VisualPreference vp;
    CommentStyle comment_style;
};

struct Comment {
    std::string text;
    std::string image_ref;
    std::set<std::string> mentioned_liked;     // ground truth for extraction tests
    std::set<std::string> mentioned_disliked;
};

// Attributes present in a rendered image, with the style used to produce it.
struct ImageMeta {
    std::string image_ref;
    std::set<std::string> attrs;
    bool from_liked = false;  // rendered from the owner's VP+ side
    world::FeatureVector style;
};

struct CohortConfig {
    int n = 200;
    double avg_attrs = 12.0;        // per side, Poisson-like
    double min_jaccard_dist = 0.85;
    bool per_side_constraint = false;  // default: constraint on liked-union-disliked
    int retry_budget = 200;            // draws per agent slot
    CommentStyle comment_style;
    // category sampling weights; categories absent here get weight 1
    std::vector<std::pair<std::string, double>> category_weights = {
        {"art_style", 3.0}, {"color_palette", 3.0}, {"composition", 2.0},
        {"mood", 2.0},      {"medium", 2.0},        {"hues", 1.5},
    };
};

double jaccard_distance(const std::set<std::string>& a, const std::set<std::string>& b);

// Validates a cohort configuration against generate_agents preconditions.
// Throws std::invalid_argument naming the offending field.
void validate_cohort_config(const CohortConfig& cfg, const taxonomy::Taxonomy& tax);

// Rejection-samples n agents with disjoint category-weighted preference sides
// and the pairwise Jaccard-distance floor. Throws std::runtime_error naming
// the number of unsatisfiable pairs when the retry budget runs out.
std::vector<Agent> generate_agents(const CohortConfig& cfg, const taxonomy::Taxonomy& tax,
                                   DetRng& rng);

struct ImageSetConfig {
    int k_liked = 10;
    int k_disliked = 10;
    double cross_agent_rate = 0.25;  // disliked images drawn from another agent's taste
    int image_size = 32;
};

struct AgentImages {
    std::vector<world::Image> liked;
    std::vector<world::Image> disliked;
    std::vector<ImageMeta> liked_meta;
    std::vector<ImageMeta> disliked_meta;
};

// Renders per-agent liked/disliked image sets from random subsets of the VP
// sides. `others` supplies foreign preferences for the cross-agent dislikes;
// when empty, dislikes come from VP- subsets only.
AgentImages agent_image_set(const Agent& agent, const taxonomy::Taxonomy& tax,
                            uint64_t signature_seed, const ImageSetConfig& cfg, DetRng& rng,
                            const std::vector<Agent>& others = {});

// Template-based comment on an image the agent has an opinion about. Throws
// std::runtime_error("uninformative image") when the image shares no
// attribute with the agent's preference.
Comment synthesize_comment(const Agent& agent, const ImageMeta& meta,
                           const taxonomy::Taxonomy& tax, DetRng& rng);

// Full cohort with comments and image metadata, the unit of most experiments.
struct Cohort {
    std::vector<Agent> agents;
    std::vector<std::vector<Comment>> comments;     // per agent
    std::vector<std::vector<ImageMeta>> image_meta; // per agent, liked then disliked
    uint64_t seed = 0;
    uint64_t signature_seed = 0;

    std::string to_json() const;
    static Cohort from_json(const std::string& text);
};

struct CommentsPerAgent {
    int min_comments = 8;
    int max_comments = 12;
};

Cohort build_cohort(const CohortConfig& cfg, const taxonomy::Taxonomy& tax,
                    const ImageSetConfig& img_cfg, const CommentsPerAgent& cc,
                    uint64_t seed, uint64_t signature_seed);

}  // namespace prefgen::agents
