#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "stackplanner/errors.hpp"
#include "stackplanner/util.hpp"

namespace stackplanner::tools {

struct EmptyQuery : Error {
    EmptyQuery() : Error("search: empty query") {}
};
struct InvalidK : Error {
    InvalidK() : Error("search: k must be positive") {}
};
struct ToolTimeout : Error {
    explicit ToolTimeout(const std::string& what) : Error("tool timeout: " + what) {}
};

struct SearchHit {
    std::string title;
    std::string text;
    std::optional<std::string> url;
    double score = 0.0;
};

struct ToolCall {
    std::string tool;
    std::map<std::string, std::string> args;  // "query", optional "k"
};

// Search backend signature shared by fixture and remote clients.
using SearchFn = std::function<std::vector<SearchHit>(const std::string& query, int k)>;

namespace detail {

inline std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (unsigned char c : text) {
        if (std::isalnum(c)) {
            cur += static_cast<char>(std::tolower(c));
        } else if (!cur.empty()) {
            out.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

// Single-quoted string in the observation dict; backslash and quote escaped.
inline std::string quote(const std::string& s) {
    std::string out = "'";
    for (char c : s) {
        if (c == '\\' || c == '\'') out += '\\';
        out += c;
    }
    out += "'";
    return out;
}

}  // namespace detail

// In-memory inverted index over a JSONL corpus of {id, title, text}.
// Ranking is raw term frequency times idf = ln((N+1)/df), with no document
// length normalization; ties break toward the lower document id.
class FixtureSearchIndex {
public:
    struct Doc {
        std::string id;
        std::string title;
        std::string text;
    };

    explicit FixtureSearchIndex(const std::string& corpus_path) {
        std::istringstream in(util::read_file(corpus_path));
        std::string line;
        while (std::getline(in, line)) {
            if (util::trim(line).empty()) continue;
            auto doc = nlohmann::json::parse(line);
            Doc d;
            const auto& id = doc.at("id");
            d.id = id.is_string() ? id.get<std::string>() : id.dump();
            d.title = doc.at("title").get<std::string>();
            d.text = doc.at("text").get<std::string>();
            docs_.push_back(std::move(d));
        }
        std::sort(docs_.begin(), docs_.end(),
                  [](const Doc& a, const Doc& b) { return a.id < b.id; });
        for (size_t i = 0; i < docs_.size(); ++i) {
            auto tokens = detail::tokenize(docs_[i].title + " " + docs_[i].text);
            std::map<std::string, int>& tf = term_freq_.emplace_back();
            for (const auto& t : tokens) ++tf[t];
            for (const auto& [term, _] : tf) ++doc_freq_[term];
        }
    }

    size_t size() const { return docs_.size(); }

    std::vector<SearchHit> search(const std::string& query, int k) const {
        if (k <= 0) throw InvalidK();
        auto terms = detail::tokenize(query);
        if (terms.empty()) throw EmptyQuery();
        std::vector<std::pair<double, size_t>> scored;
        for (size_t i = 0; i < docs_.size(); ++i) {
            double score = 0.0;
            for (const auto& term : terms) {
                auto tf_it = term_freq_[i].find(term);
                if (tf_it == term_freq_[i].end()) continue;
                double df = static_cast<double>(doc_freq_.at(term));
                double idf = std::log((static_cast<double>(docs_.size()) + 1.0) / df);
                score += static_cast<double>(tf_it->second) * idf;
            }
            if (score > 0.0) scored.emplace_back(score, i);
        }
        // Score descending, then document id ascending (docs_ is id-sorted).
        std::stable_sort(scored.begin(), scored.end(),
                         [](const auto& a, const auto& b) { return a.first > b.first; });
        std::vector<SearchHit> hits;
        for (const auto& [score, i] : scored) {
            if (static_cast<int>(hits.size()) >= k) break;
            hits.push_back({docs_[i].title, docs_[i].text, std::nullopt, score});
        }
        return hits;
    }

private:
    std::vector<Doc> docs_;
    std::vector<std::map<std::string, int>> term_freq_;
    std::unordered_map<std::string, int> doc_freq_;
};

inline SearchFn fixture_backend(std::shared_ptr<FixtureSearchIndex> index) {
    return [index](const std::string& query, int k) { return index->search(query, k); };
}

// HTTP search client: POST {query, k} to <base_url>/search with a bearer key
// from the environment. Response: {"results": [{title, text, url?}, ...]}.
inline SearchFn remote_backend(std::string base_url, std::string api_key,
                               int timeout_seconds = 10) {
    return [base_url = std::move(base_url), api_key = std::move(api_key),
            timeout_seconds](const std::string& query, int k) {
        if (k <= 0) throw InvalidK();
        if (detail::tokenize(query).empty()) throw EmptyQuery();
        std::string authority = base_url;
        std::string prefix;
        auto scheme_end = base_url.find("://");
        size_t host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
        auto path_start = base_url.find('/', host_start);
        if (path_start != std::string::npos) {
            authority = base_url.substr(0, path_start);
            prefix = base_url.substr(path_start);
            while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
        }
        httplib::Client client(authority);
        client.set_connection_timeout(timeout_seconds, 0);
        client.set_read_timeout(timeout_seconds, 0);
        httplib::Headers headers;
        if (!api_key.empty()) headers.emplace("Authorization", "Bearer " + api_key);
        nlohmann::ordered_json body{{"query", query}, {"k", k}};
        auto res = client.Post(prefix + "/search", headers, body.dump(), "application/json");
        if (!res) {
            auto err = res.error();
            if (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read)
                throw ToolTimeout(httplib::to_string(err));
            throw Error("search transport error: " + httplib::to_string(err));
        }
        if (res->status != 200) throw Error("search status " + std::to_string(res->status));
        auto doc = nlohmann::json::parse(res->body);
        std::vector<SearchHit> hits;
        for (const auto& item : doc.at("results")) {
            SearchHit h;
            h.title = item.value("title", "");
            h.text = item.value("text", "");
            if (item.contains("url")) h.url = item["url"].get<std::string>();
            if (static_cast<int>(hits.size()) < k) hits.push_back(std::move(h));
        }
        return hits;
    };
}

// Observation text for a hit list, matching the single-quoted dict shape the
// coordinator prompts teach agents to expect.
inline std::string serialize_hits(const std::vector<SearchHit>& hits) {
    if (hits.empty()) return "no results";
    auto dict = [](const SearchHit& h) {
        return "{'title': " + detail::quote(h.title) + ", 'text': " + detail::quote(h.text) + "}";
    };
    std::string out = "Observation: ";
    if (hits.size() == 1) return out + dict(hits[0]);
    out += "[";
    for (size_t i = 0; i < hits.size(); ++i) {
        if (i) out += ", ";
        out += dict(hits[i]);
    }
    out += "]";
    return out;
}

class ToolRegistry {
public:
    void register_tool(const std::string& name, SearchFn fn) { tools_[name] = std::move(fn); }

    bool has(const std::string& name) const { return tools_.count(name) > 0; }

    std::vector<std::string> names() const {
        std::vector<std::string> out;
        for (const auto& [name, _] : tools_) out.push_back(name);
        return out;
    }

    // Never throws: every failure becomes an observation the agent can read.
    std::string dispatch(const ToolCall& call) const {
        auto it = tools_.find(call.tool);
        if (it == tools_.end()) return "tool error: unknown tool";
        std::string query;
        if (auto q = call.args.find("query"); q != call.args.end()) query = q->second;
        int k = 3;
        if (auto arg = call.args.find("k"); arg != call.args.end()) {
            try {
                k = std::stoi(arg->second);
            } catch (const std::exception&) {
                return "tool error: invalid k";
            }
        }
        try {
            return serialize_hits(it->second(query, k));
        } catch (const std::exception& e) {
            return std::string("tool error: ") + e.what();
        }
    }

private:
    std::map<std::string, SearchFn> tools_;
};

// Standard registry wiring: both search tools share one backend pair, and the
// short aliases cover model outputs that drop the suffix.
inline ToolRegistry make_registry(SearchFn wiki, SearchFn web) {
    ToolRegistry reg;
    reg.register_tool("wiki_search", wiki);
    reg.register_tool("wiki", wiki);
    reg.register_tool("web_search", web);
    reg.register_tool("web", web);
    return reg;
}

}  // namespace stackplanner::tools
