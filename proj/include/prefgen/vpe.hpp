#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "prefgen/agents.hpp"
#include "prefgen/taxonomy.hpp"

namespace prefgen::vpe {

// Category-level phrase used when a comment praises e.g. "the colors" without
// naming an attribute; resolved against the image's attributes.
const std::string& generic_phrase(const std::string& category);

struct Lexicon {
    // attribute phrases as token sequences, plus sentiment vocabulary
    std::map<std::vector<std::string>, std::string> phrases;  // tokens -> attribute id
    std::map<std::string, std::string> attr_category;          // attribute id -> category
    std::map<std::string, std::string> generic;                // token -> category
    std::set<std::string> positive_cues;
    std::set<std::string> negative_cues;
    std::set<std::string> negation_markers;
    int typo_tolerance = 1;  // max edit distance per token (tokens of length >= 4)

    static Lexicon from_taxonomy(const taxonomy::Taxonomy& tax);
    // `phrase<TAB>attribute` rows; every id must exist in the taxonomy
    static Lexicon from_file(const std::string& path, const taxonomy::Taxonomy& tax);
};

std::vector<std::string> tokenize(const std::string& text);

// Damerau-Levenshtein with adjacent transposition
int edit_distance(const std::string& a, const std::string& b);

// One detected attribute mention with polarity (+1 liked, -1 disliked, 0 no cue).
struct Mention {
    std::string attr;
    int polarity = 0;
};

// Detections for a single comment. Generic category mentions resolve to the
// image's attributes in that category when `meta` is provided.
std::vector<Mention> detect_mentions(const std::string& text, const Lexicon& lexicon,
                                     const agents::ImageMeta* meta);

// Majority-vote aggregation across comments; tied attributes are dropped so
// the output sides stay disjoint. `metas` is keyed by image_ref.
agents::VisualPreference extract_preferences(
    const std::vector<agents::Comment>& comments, const Lexicon& lexicon,
    const std::map<std::string, agents::ImageMeta>& metas);

struct PolarityMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    long true_pos = 0, false_pos = 0, false_neg = 0;
};

struct ExtractionReport {
    PolarityMetrics liked;
    PolarityMetrics disliked;
    PolarityMetrics micro;  // both polarities pooled
    long comments = 0;
    std::string to_json() const;
};

// Per-comment extraction scored against the ground-truth mention fields.
ExtractionReport extraction_report(const agents::Cohort& cohort, const Lexicon& lexicon);

}  // namespace prefgen::vpe
