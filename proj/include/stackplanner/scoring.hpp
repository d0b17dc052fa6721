#pragma once

#include <algorithm>
#include <cctype>
#include <map>
#include <string>
#include <vector>

#include "stackplanner/util.hpp"

namespace stackplanner::evaluation {

// Extractive-QA answer normalization: lowercase, strip punctuation, drop the
// articles "a"/"an"/"the" as whole tokens, collapse whitespace.
inline std::string normalize_answer(const std::string& text) {
    std::string lowered;
    lowered.reserve(text.size());
    for (unsigned char c : text) {
        if (std::ispunct(c)) continue;
        lowered += static_cast<char>(std::tolower(c));
    }
    std::string out;
    for (const auto& token : util::split_whitespace(lowered)) {
        if (token == "a" || token == "an" || token == "the") continue;
        if (!out.empty()) out += ' ';
        out += token;
    }
    return out;
}

namespace detail {
inline std::map<std::string, int> token_bag(const std::string& normalized) {
    std::map<std::string, int> bag;
    for (const auto& t : util::split_whitespace(normalized)) ++bag[t];
    return bag;
}

inline double f1_single(const std::string& prediction, const std::string& gold) {
    std::string p = normalize_answer(prediction);
    std::string g = normalize_answer(gold);
    if (p.empty() && g.empty()) return 1.0;
    if (p.empty() || g.empty()) return 0.0;
    auto pb = token_bag(p);
    auto gb = token_bag(g);
    int overlap = 0;
    int p_count = 0;
    int g_count = 0;
    for (const auto& [t, n] : pb) p_count += n;
    for (const auto& [t, n] : gb) g_count += n;
    for (const auto& [t, n] : pb) {
        auto it = gb.find(t);
        if (it != gb.end()) overlap += std::min(n, it->second);
    }
    if (overlap == 0) return 0.0;
    double precision = static_cast<double>(overlap) / p_count;
    double recall = static_cast<double>(overlap) / g_count;
    return 2.0 * precision * recall / (precision + recall);
}
}  // namespace detail

// Bag-of-tokens F1, best across the gold alternatives.
inline double token_f1(const std::string& prediction, const std::vector<std::string>& gold) {
    double best = 0.0;
    bool any = false;
    for (const auto& g : gold) {
        best = std::max(best, detail::f1_single(prediction, g));
        any = true;
    }
    return any ? best : 0.0;
}

inline int exact_match(const std::string& prediction, const std::vector<std::string>& gold) {
    std::string p = normalize_answer(prediction);
    for (const auto& g : gold)
        if (p == normalize_answer(g)) return 1;
    return 0;
}

}  // namespace stackplanner::evaluation
