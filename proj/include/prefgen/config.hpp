#pragma once

#include <string>
#include <vector>

#include "json.hpp"

namespace prefgen::config {

// Effective run configuration: defaults overlaid with an optional JSON file
// and dotted-key command-line overrides. Unknown keys are rejected.
class RunConfig {
public:
    static nlohmann::json defaults();

    static RunConfig load(const std::string& config_path,
                          const std::vector<std::string>& overrides);

    const nlohmann::json& raw() const { return effective_; }
    std::string hash() const;  // 16 hex chars over the canonical dump

    // typed accessors; missing paths are a programming error
    template <typename T>
    T get(const std::string& dotted) const {
        const nlohmann::json* cur = &effective_;
        size_t start = 0;
        while (true) {
            size_t dot = dotted.find('.', start);
            std::string key = dotted.substr(start, dot - start);
            cur = &cur->at(key);
            if (dot == std::string::npos) break;
            start = dot + 1;
        }
        return cur->get<T>();
    }

    // flattened "key.path = default" lines for --help
    static std::vector<std::string> describe_keys();

private:
    nlohmann::json effective_;
};

}  // namespace prefgen::config
