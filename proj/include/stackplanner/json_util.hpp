#pragma once

#include <optional>
#include <string>

#include <json.hpp>

namespace stackplanner::json_util {

// Pulls the first balanced {...} document out of model text, tolerating code
// fences and surrounding prose. Returns nothing when no parseable object is
// found.
inline std::optional<nlohmann::json> extract_json_object(const std::string& text) {
    auto start = text.find('{');
    while (start != std::string::npos) {
        int depth = 0;
        bool in_string = false;
        bool escaped = false;
        for (size_t i = start; i < text.size(); ++i) {
            char c = text[i];
            if (in_string) {
                if (escaped)
                    escaped = false;
                else if (c == '\\')
                    escaped = true;
                else if (c == '"')
                    in_string = false;
                continue;
            }
            if (c == '"') {
                in_string = true;
            } else if (c == '{') {
                ++depth;
            } else if (c == '}') {
                --depth;
                if (depth == 0) {
                    auto candidate = text.substr(start, i - start + 1);
                    auto parsed = nlohmann::json::parse(candidate, nullptr, false);
                    if (!parsed.is_discarded()) return parsed;
                    break;
                }
            }
        }
        start = text.find('{', start + 1);
    }
    return std::nullopt;
}

}  // namespace stackplanner::json_util
