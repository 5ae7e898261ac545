#include "prefgen/config.hpp"

#include <fstream>
#include <sstream>

#include "prefgen/errors.hpp"
#include "prefgen/hashing.hpp"

#ifndef PREFGEN_DATA_DIR
#define PREFGEN_DATA_DIR "data"
#endif

namespace prefgen::config {

using nlohmann::json;

json RunConfig::defaults() {
    json j;
    j["seed"] = 1;
    j["workers"] = 1;
    j["taxonomy"] = {
        {"path", std::string(PREFGEN_DATA_DIR) + "/attributes.tsv"},
        {"overrides_path", std::string(PREFGEN_DATA_DIR) + "/overrides.tsv"},
        {"signature_seed", 7},
    };
    j["cohort"] = {
        {"n", 200},          {"avg_attrs", 12.0},     {"min_jaccard_dist", 0.85},
        {"per_side", false}, {"retry_budget", 200},   {"typo_rate", 0.02},
        {"negation_rate", 0.25}, {"generic_rate", 0.15}, {"k_liked", 10},
        {"k_disliked", 10},  {"min_comments", 8},     {"max_comments", 12},
    };
    j["world"] = {{"image_size", 32}};
    j["diffusion"] = {
        {"T", 200},           {"beta_min", 1e-4},       {"beta_max", 0.02},
        {"epochs", 16},       {"batch", 64},            {"lr", 2e-3},
        {"cond_dropout", 0.1}, {"content_dropout", 0.25}, {"channel_dropout", 0.25},
        {"train_pairs", 10000}, {"hidden1", 256},       {"hidden2", 224},
        {"checkpoint", ""},
    };
    j["guidance"] = {
        {"w", 3.0},
        {"beta", 0.8},
        {"coefficient_mode", "standard_ddpm"},
        {"use_noise_guidance", true},
    };
    j["proxy"] = {
        {"variant", "centroid"}, {"kappa", 8.0}, {"context_size", 10}, {"epochs", 400},
        {"lr", 0.5},             {"l2", 1e-4},   {"init", "zero"},     {"checkpoint", ""},
    };
    j["personalize"] = {
        {"prompt_shape", "circle"}, {"prompt_scale", 0.5}, {"prompt_x", 0.5},
        {"prompt_y", 0.5},          {"prompt_attrs", json::array()},
        {"agent", "builtin"},       {"cohort_agent", 0},   {"sample_seed", 11},
        {"png", false},
    };
    j["experiments"] = {
        {"trials", 500},
        {"n_candidates", 5},
        {"study_agents", 8},
        {"sweep_betas", json::array({0.0, 0.2, 0.4, 0.6, 0.8, 1.0})},
        {"sweep_seeds", 50},
        {"diversity_samples", 20},
        {"context_sizes", json::array({0, 2, 6, 10, 14, 18})},
        {"ablation_agents", 40},
    };
    return j;
}

namespace {

void merge_checked(json& base, const json& user, const std::string& prefix) {
    if (!user.is_object())
        throw ConfigError("config section '" + (prefix.empty() ? "<root>" : prefix) +
                          "' must be an object");
    for (auto it = user.begin(); it != user.end(); ++it) {
        std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
        if (!base.contains(it.key())) throw ConfigError("unknown config key: " + path);
        json& slot = base[it.key()];
        if (slot.is_object()) {
            merge_checked(slot, it.value(), path);
        } else {
            if (slot.is_number() && !it.value().is_number() && !it.value().is_boolean())
                throw ConfigError("config key " + path + " expects a number");
            if (slot.is_string() && !it.value().is_string())
                throw ConfigError("config key " + path + " expects a string");
            if (slot.is_boolean() && !it.value().is_boolean())
                throw ConfigError("config key " + path + " expects a boolean");
            if (slot.is_array() && !it.value().is_array())
                throw ConfigError("config key " + path + " expects an array");
            slot = it.value();
        }
    }
}

void apply_override(json& base, const std::string& spec) {
    auto eq = spec.find('=');
    if (eq == std::string::npos)
        throw ConfigError("override must look like key.path=value: " + spec);
    std::string path = spec.substr(0, eq);
    std::string raw = spec.substr(eq + 1);
    json value;
    try {
        value = json::parse(raw);
    } catch (...) {
        value = raw;  // bare strings are fine
    }
    // build a nested object for the dotted path and merge it
    json nested = value;
    size_t pos = path.size();
    while (true) {
        size_t dot = path.rfind('.', pos - 1);
        std::string key =
            dot == std::string::npos ? path.substr(0, pos) : path.substr(dot + 1, pos - dot - 1);
        json wrap;
        wrap[key] = nested;
        nested = wrap;
        if (dot == std::string::npos) break;
        pos = dot;
    }
    merge_checked(base, nested, "");
}

void flatten(const json& j, const std::string& prefix, std::vector<std::string>* out) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
        if (it.value().is_object()) flatten(it.value(), path, out);
        else out->push_back(path + " = " + it.value().dump());
    }
}

}  // namespace

RunConfig RunConfig::load(const std::string& config_path,
                          const std::vector<std::string>& overrides) {
    RunConfig cfg;
    cfg.effective_ = defaults();
    if (!config_path.empty()) {
        std::ifstream in(config_path);
        if (!in) throw ConfigError("cannot open config file: " + config_path);
        json user;
        try {
            user = json::parse(in);
        } catch (const std::exception& e) {
            throw ConfigError("config parse error in " + config_path + ": " + e.what());
        }
        merge_checked(cfg.effective_, user, "");
    }
    for (const auto& o : overrides) apply_override(cfg.effective_, o);
    return cfg;
}

std::string RunConfig::hash() const {
    uint64_t h = fnv1a64(effective_.dump());
    std::ostringstream out;
    out << std::hex;
    for (int i = 15; i >= 0; --i) out << ((h >> (4 * i)) & 0xF);
    return out.str();
}

std::vector<std::string> RunConfig::describe_keys() {
    std::vector<std::string> out;
    flatten(defaults(), "", &out);
    return out;
}

}  // namespace prefgen::config
