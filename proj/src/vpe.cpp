#include "prefgen/vpe.hpp"

#include <algorithm>
#include <cctype>
#include <climits>
#include <cstdint>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace prefgen::vpe {

const std::string& generic_phrase(const std::string& category) {
    static const std::map<std::string, std::string> table = {
        {"art_style", "style"},       {"color_palette", "palette"},
        {"composition", "composition"}, {"skill", "technique"},
        {"detail", "detail"},         {"hues", "colors"},
        {"line", "lines"},            {"shape", "shapes"},
        {"value", "tones"},           {"pattern", "patterns"},
        {"texture", "textures"},      {"medium", "medium"},
        {"mood", "mood"},             {"perspective", "perspective"},
        {"depth", "depth"},           {"movement", "movement"},
        {"form", "forms"},            {"juxtaposition", "juxtaposition"},
        {"iconography", "imagery"},   {"brushstrokes", "brushwork"},
    };
    auto it = table.find(category);
    if (it == table.end()) throw std::invalid_argument("unknown category: " + category);
    return it->second;
}

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : text) {
        unsigned char u = static_cast<unsigned char>(ch);
        if (std::isalnum(u)) {
            cur.push_back(static_cast<char>(std::tolower(u)));
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

int edit_distance(const std::string& a, const std::string& b) {
    const size_t n = a.size(), m = b.size();
    std::vector<std::vector<int>> d(n + 1, std::vector<int>(m + 1));
    for (size_t i = 0; i <= n; ++i) d[i][0] = static_cast<int>(i);
    for (size_t j = 0; j <= m; ++j) d[0][j] = static_cast<int>(j);
    for (size_t i = 1; i <= n; ++i) {
        for (size_t j = 1; j <= m; ++j) {
            int cost = a[i - 1] == b[j - 1] ? 0 : 1;
            d[i][j] = std::min({d[i - 1][j] + 1, d[i][j - 1] + 1, d[i - 1][j - 1] + cost});
            if (i > 1 && j > 1 && a[i - 1] == b[j - 2] && a[i - 2] == b[j - 1])
                d[i][j] = std::min(d[i][j], d[i - 2][j - 2] + 1);
        }
    }
    return d[n][m];
}

Lexicon Lexicon::from_taxonomy(const taxonomy::Taxonomy& tax) {
    Lexicon lex;
    for (const auto& a : tax.attributes()) {
        lex.phrases[tokenize(a.id)] = a.id;
        lex.attr_category[a.id] = a.category;
    }
    for (const auto& cat : tax.categories()) lex.generic[generic_phrase(cat)] = cat;
    lex.positive_cues = {"love", "like",  "enjoy",    "beautiful", "wonderful",
                         "works", "great", "pleasing", "favorite"};
    lex.negative_cues = {"hate", "ruins", "awful",   "ugly", "dislike",
                         "terrible", "too", "distracting"};
    lex.negation_markers = {"not", "don", "dont", "never", "hardly"};
    return lex;
}

Lexicon Lexicon::from_file(const std::string& path, const taxonomy::Taxonomy& tax) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open lexicon file: " + path);
    Lexicon lex = from_taxonomy(tax);
    lex.phrases.clear();
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": expected phrase<TAB>attribute");
        std::string phrase = line.substr(0, tab);
        std::string id = taxonomy::normalize_id(line.substr(tab + 1));
        if (!tax.has(id))
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": lexicon id not in taxonomy: " + id);
        lex.phrases[tokenize(phrase)] = id;
        lex.attr_category[id] = tax.attribute(id).category;
    }
    return lex;
}

namespace {

bool token_matches(const std::string& text_tok, const std::string& phrase_tok, int tolerance) {
    if (text_tok == phrase_tok) return true;
    if (tolerance <= 0) return false;
    // tolerant matching only on longer tokens, so stopwords never alias
    if (text_tok.size() < 4 || phrase_tok.size() < 4) return false;
    if (std::max(text_tok.size(), phrase_tok.size()) -
            std::min(text_tok.size(), phrase_tok.size()) >
        static_cast<size_t>(tolerance))
        return false;
    return edit_distance(text_tok, phrase_tok) <= tolerance;
}

struct Hit {
    size_t pos;          // token index
    size_t len;          // tokens consumed
    std::string attr;    // empty for a generic hit
    std::string category;
    int total_distance;
};

// maximal munch: longest phrase wins at each position, exact beats tolerant
std::vector<Hit> scan(const std::vector<std::string>& toks, const Lexicon& lex) {
    std::vector<Hit> hits;
    size_t max_len = 1;
    for (const auto& [p, _] : lex.phrases) max_len = std::max(max_len, p.size());
    size_t i = 0;
    while (i < toks.size()) {
        Hit best{};
        bool found = false;
        for (size_t len = std::min(max_len, toks.size() - i); len >= 1 && !found; --len) {
            int best_dist = INT32_MAX;
            const std::string* best_attr = nullptr;
            for (const auto& [phrase, id] : lex.phrases) {
                if (phrase.size() != len) continue;
                int dist = 0;
                bool ok = true;
                for (size_t k = 0; k < len && ok; ++k) {
                    if (toks[i + k] == phrase[k]) continue;
                    if (!token_matches(toks[i + k], phrase[k], lex.typo_tolerance)) ok = false;
                    else ++dist;
                }
                if (ok && dist < best_dist) {
                    best_dist = dist;
                    best_attr = &id;
                }
            }
            if (best_attr) {
                best = Hit{i, len, *best_attr, "", best_dist};
                found = true;
            }
        }
        if (!found) {
            auto git = lex.generic.find(toks[i]);
            if (git != lex.generic.end()) {
                best = Hit{i, 1, "", git->second, 0};
                found = true;
            }
        }
        if (found) {
            hits.push_back(best);
            i += best.len;
        } else {
            ++i;
        }
    }
    return hits;
}

// polarity of the nearest sentiment cue, negation-flipped
int polarity_at(const std::vector<std::string>& toks, size_t lo, size_t hi, size_t attr_pos,
                size_t attr_len, const Lexicon& lex) {
    long best_gap = LONG_MAX;
    long cue_idx = -1;
    int cue_sign = 0;
    for (size_t t = lo; t < hi; ++t) {
        if (t >= attr_pos && t < attr_pos + attr_len) continue;
        int sign = 0;
        if (lex.positive_cues.count(toks[t])) sign = 1;
        else if (lex.negative_cues.count(toks[t])) sign = -1;
        if (sign == 0) continue;
        long gap = t < attr_pos ? static_cast<long>(attr_pos - t)
                                : static_cast<long>(t - (attr_pos + attr_len - 1));
        if (gap < best_gap) {
            best_gap = gap;
            cue_idx = static_cast<long>(t);
            cue_sign = sign;
        }
    }
    if (cue_sign == 0) return 0;
    for (long t = std::max<long>(static_cast<long>(lo), cue_idx - 3); t < cue_idx; ++t) {
        if (lex.negation_markers.count(toks[static_cast<size_t>(t)])) {
            cue_sign = -cue_sign;
            break;
        }
    }
    return cue_sign;
}

std::vector<std::pair<size_t, size_t>> sentence_spans(const std::string& text,
                                                      const std::vector<std::string>& toks) {
    // re-tokenize per sentence; spans index into the full token list
    std::vector<std::pair<size_t, size_t>> spans;
    std::vector<std::string> sentences;
    std::string cur;
    for (char ch : text) {
        cur.push_back(ch);
        if (ch == '.' || ch == '!' || ch == '?') {
            sentences.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) sentences.push_back(cur);
    size_t offset = 0;
    for (const auto& s : sentences) {
        size_t n = tokenize(s).size();
        if (n > 0) spans.push_back({offset, std::min(offset + n, toks.size())});
        offset += n;
    }
    if (spans.empty() && !toks.empty()) spans.push_back({0, toks.size()});
    return spans;
}

}  // namespace

std::vector<Mention> detect_mentions(const std::string& text, const Lexicon& lexicon,
                                     const agents::ImageMeta* meta) {
    auto toks = tokenize(text);
    auto spans = sentence_spans(text, toks);
    auto hits = scan(toks, lexicon);
    std::vector<Mention> out;
    for (const auto& hit : hits) {
        size_t lo = 0, hi = toks.size();
        for (auto [a, b] : spans) {
            if (hit.pos >= a && hit.pos < b) {
                lo = a;
                hi = b;
                break;
            }
        }
        int pol = polarity_at(toks, lo, hi, hit.pos, hit.len, lexicon);
        if (pol == 0) continue;
        if (!hit.attr.empty()) {
            out.push_back({hit.attr, pol});
        } else if (meta != nullptr) {
            for (const auto& a : meta->attrs) {
                // resolve the category-level mention to the image's attributes
                // in that category (closed world: ids come from the image meta)
                auto cit = lexicon.attr_category.find(a);
                if (cit == lexicon.attr_category.end() || cit->second != hit.category) continue;
                out.push_back({a, pol});
            }
        }
    }
    return out;
}

agents::VisualPreference extract_preferences(
    const std::vector<agents::Comment>& comments, const Lexicon& lexicon,
    const std::map<std::string, agents::ImageMeta>& metas) {
    if (comments.empty()) throw std::invalid_argument("comments must be non-empty");
    std::map<std::string, int> votes;
    for (const auto& c : comments) {
        const agents::ImageMeta* meta = nullptr;
        auto it = metas.find(c.image_ref);
        if (it != metas.end()) meta = &it->second;
        for (const auto& m : detect_mentions(c.text, lexicon, meta)) votes[m.attr] += m.polarity;
    }
    agents::VisualPreference vp;
    for (const auto& [attr, v] : votes) {
        if (v > 0) vp.liked.insert(attr);
        else if (v < 0) vp.disliked.insert(attr);
        // ties dropped: a tied attribute would cancel in the embedding delta
    }
    return vp;
}

namespace {

void tally(const std::set<std::string>& got, const std::set<std::string>& want,
           PolarityMetrics* m) {
    for (const auto& g : got) m->true_pos += want.count(g) ? 1 : 0;
    for (const auto& g : got) m->false_pos += want.count(g) ? 0 : 1;
    for (const auto& w : want) m->false_neg += got.count(w) ? 0 : 1;
}

void finish(PolarityMetrics* m) {
    double tp = static_cast<double>(m->true_pos);
    m->precision = tp + m->false_pos == 0 ? 1.0 : tp / (tp + m->false_pos);
    m->recall = tp + m->false_neg == 0 ? 1.0 : tp / (tp + m->false_neg);
    m->f1 = (m->precision + m->recall) == 0.0
                ? 0.0
                : 2.0 * m->precision * m->recall / (m->precision + m->recall);
}

}  // namespace

ExtractionReport extraction_report(const agents::Cohort& cohort, const Lexicon& lexicon) {
    ExtractionReport rep;
    for (size_t ai = 0; ai < cohort.agents.size(); ++ai) {
        std::map<std::string, agents::ImageMeta> metas;
        for (const auto& m : cohort.image_meta[ai]) metas[m.image_ref] = m;
        for (const auto& c : cohort.comments[ai]) {
            const agents::ImageMeta* meta = nullptr;
            auto it = metas.find(c.image_ref);
            if (it != metas.end()) meta = &it->second;
            std::set<std::string> got_liked, got_disliked;
            std::map<std::string, int> votes;
            for (const auto& m : detect_mentions(c.text, lexicon, meta))
                votes[m.attr] += m.polarity;
            for (const auto& [attr, v] : votes) {
                if (v > 0) got_liked.insert(attr);
                else if (v < 0) got_disliked.insert(attr);
            }
            tally(got_liked, c.mentioned_liked, &rep.liked);
            tally(got_disliked, c.mentioned_disliked, &rep.disliked);
            ++rep.comments;
        }
    }
    rep.micro.true_pos = rep.liked.true_pos + rep.disliked.true_pos;
    rep.micro.false_pos = rep.liked.false_pos + rep.disliked.false_pos;
    rep.micro.false_neg = rep.liked.false_neg + rep.disliked.false_neg;
    finish(&rep.liked);
    finish(&rep.disliked);
    finish(&rep.micro);
    return rep;
}

std::string ExtractionReport::to_json() const {
    nlohmann::json j;
    auto put = [&](const char* key, const PolarityMetrics& m) {
        j[key] = {{"precision", m.precision}, {"recall", m.recall},   {"f1", m.f1},
                  {"true_pos", m.true_pos},   {"false_pos", m.false_pos},
                  {"false_neg", m.false_neg}};
    };
    put("liked", liked);
    put("disliked", disliked);
    put("micro", micro);
    j["comments"] = comments;
    return j.dump(2);
}

}  // namespace prefgen::vpe
