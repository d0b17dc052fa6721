#pragma once

#include <algorithm>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "stackplanner/errors.hpp"
#include "stackplanner/gateway.hpp"
#include "stackplanner/json_util.hpp"
#include "stackplanner/scoring.hpp"
#include "stackplanner/task_memory.hpp"
#include "stackplanner/template_engine.hpp"
#include "stackplanner/util.hpp"

namespace stackplanner::experience {

struct MissingKey : Error {
    explicit MissingKey(const std::string& key) : Error("experience schema: missing key " + key) {}
};
struct ExtraKey : Error {
    explicit ExtraKey(const std::string& key)
        : Error("experience schema: unexpected key " + key) {}
};
struct EmptyElement : Error {
    explicit EmptyElement(const std::string& where)
        : Error("experience schema: empty element in " + where) {}
};
struct UserMismatch : Error {
    UserMismatch(const std::string& a, const std::string& b)
        : Error("experience merge: user " + a + " != " + b) {}
};
struct StorageError : Error {
    explicit StorageError(const std::string& what) : Error("experience storage: " + what) {}
};
struct SchemaError : Error {
    explicit SchemaError(const std::string& what) : Error("experience store schema: " + what) {}
};

struct ProcedureSop {
    std::string scenario;
    std::string procedure;
    std::string rationale;

    bool operator==(const ProcedureSop& other) const = default;
};

struct ExperienceRecord {
    std::string user_id;
    std::string updated_at;
    std::vector<std::string> user_profiles;
    std::vector<std::string> semantic_memory;
    std::vector<ProcedureSop> procedural_memory;

    bool empty() const {
        return user_profiles.empty() && semantic_memory.empty() && procedural_memory.empty();
    }
};

enum class Component { Profile, Semantic, Procedural };

inline const char* to_string(Component c) {
    switch (c) {
        case Component::Profile: return "profile";
        case Component::Semantic: return "semantic";
        case Component::Procedural: return "procedural";
    }
    return "semantic";
}

struct ExperienceQuery {
    std::string task_text;
    std::string user_id;
    int top_k = 3;
};

struct RetrievedItem {
    Component component = Component::Semantic;
    std::string content;
    double score = 0.0;
};

struct RetrievedExperience {
    std::vector<RetrievedItem> items;
};

// Curator-facing content document: exactly the three memory components.
inline nlohmann::ordered_json serialize_content(const ExperienceRecord& record) {
    nlohmann::ordered_json doc;
    doc["user_profiles"] = record.user_profiles;
    doc["semantic_memory"] = record.semantic_memory;
    doc["procedural_memory"] = nlohmann::ordered_json::array();
    for (const auto& sop : record.procedural_memory)
        doc["procedural_memory"].push_back({{"scenario", sop.scenario},
                                            {"procedure", sop.procedure},
                                            {"rationale", sop.rationale}});
    return doc;
}

// Full store document for one user.
inline nlohmann::ordered_json to_json(const ExperienceRecord& record) {
    nlohmann::ordered_json doc;
    doc["user_id"] = record.user_id;
    doc["updated_at"] = record.updated_at;
    auto content = serialize_content(record);
    doc["user_profiles"] = content["user_profiles"];
    doc["semantic_memory"] = content["semantic_memory"];
    doc["procedural_memory"] = content["procedural_memory"];
    return doc;
}

namespace detail {
inline std::vector<std::string> parse_text_list(const nlohmann::json& arr,
                                                const std::string& where) {
    if (!arr.is_array()) throw EmptyElement(where + " (not a list)");
    std::vector<std::string> out;
    std::set<std::string> seen;
    for (const auto& item : arr) {
        if (!item.is_string() || item.get<std::string>().empty()) throw EmptyElement(where);
        auto text = item.get<std::string>();
        if (seen.insert(text).second) out.push_back(std::move(text));
    }
    return out;
}
}  // namespace detail

// Strict validation of the curator output schema: exactly the three top-level
// keys, SOPs with exactly scenario/procedure/rationale, no empty elements.
// Exact-text duplicates are collapsed (keeping the first occurrence).
inline ExperienceRecord validate_record(const nlohmann::json& doc) {
    if (!doc.is_object()) throw MissingKey("user_profiles (document is not an object)");
    static const std::vector<std::string> required = {"user_profiles", "semantic_memory",
                                                      "procedural_memory"};
    for (const auto& key : required)
        if (!doc.contains(key)) throw MissingKey(key);
    for (const auto& [key, _] : doc.items())
        if (std::find(required.begin(), required.end(), key) == required.end())
            throw ExtraKey(key);

    ExperienceRecord record;
    record.user_profiles = detail::parse_text_list(doc["user_profiles"], "user_profiles");
    record.semantic_memory = detail::parse_text_list(doc["semantic_memory"], "semantic_memory");
    if (!doc["procedural_memory"].is_array())
        throw EmptyElement("procedural_memory (not a list)");
    std::vector<ProcedureSop> sops;
    for (const auto& item : doc["procedural_memory"]) {
        if (!item.is_object()) throw EmptyElement("procedural_memory");
        static const std::vector<std::string> sop_keys = {"scenario", "procedure", "rationale"};
        for (const auto& key : sop_keys)
            if (!item.contains(key)) throw MissingKey("procedural_memory." + key);
        for (const auto& [key, _] : item.items())
            if (std::find(sop_keys.begin(), sop_keys.end(), key) == sop_keys.end())
                throw ExtraKey("procedural_memory." + key);
        ProcedureSop sop;
        for (const auto* field : {"scenario", "procedure", "rationale"}) {
            if (!item[field].is_string() || item[field].get<std::string>().empty())
                throw EmptyElement(std::string("procedural_memory.") + field);
        }
        sop.scenario = item["scenario"].get<std::string>();
        sop.procedure = item["procedure"].get<std::string>();
        sop.rationale = item["rationale"].get<std::string>();
        if (std::find(sops.begin(), sops.end(), sop) == sops.end()) sops.push_back(std::move(sop));
    }
    record.procedural_memory = std::move(sops);
    return record;
}

// Union per component: existing entries first, fresh appended, exact-text
// duplicates dropped. Idempotent by construction.
inline ExperienceRecord merge(const ExperienceRecord& existing, const ExperienceRecord& fresh) {
    if (!existing.user_id.empty() && !fresh.user_id.empty() &&
        existing.user_id != fresh.user_id)
        throw UserMismatch(existing.user_id, fresh.user_id);
    ExperienceRecord out = existing;
    if (out.user_id.empty()) out.user_id = fresh.user_id;
    auto merge_texts = [](std::vector<std::string>& into, const std::vector<std::string>& from) {
        for (const auto& item : from)
            if (std::find(into.begin(), into.end(), item) == into.end()) into.push_back(item);
    };
    merge_texts(out.user_profiles, fresh.user_profiles);
    merge_texts(out.semantic_memory, fresh.semantic_memory);
    for (const auto& sop : fresh.procedural_memory)
        if (std::find(out.procedural_memory.begin(), out.procedural_memory.end(), sop) ==
            out.procedural_memory.end())
            out.procedural_memory.push_back(sop);
    return out;
}

// Directory-backed store: one document per user. Writes are serialized per
// user; distinct users write independently.
class ExperienceStore {
public:
    explicit ExperienceStore(std::string dir) : dir_(std::move(dir)) {
        std::filesystem::create_directories(dir_);
    }

    const std::string& dir() const { return dir_; }

    ExperienceRecord get(const std::string& user_id) {
        std::lock_guard<std::mutex> lock(user_mutex(user_id));
        auto path = user_path(user_id);
        if (!std::filesystem::exists(path)) {
            ExperienceRecord empty;
            empty.user_id = user_id;
            return empty;
        }
        return load_file(path);
    }

    void put(const ExperienceRecord& record) {
        if (record.user_id.empty()) throw StorageError("record has no user_id");
        std::lock_guard<std::mutex> lock(user_mutex(record.user_id));
        util::write_file(user_path(record.user_id), to_json(record).dump(2) + "\n");
    }

    void clear(const std::string& user_id) {
        std::lock_guard<std::mutex> lock(user_mutex(user_id));
        std::filesystem::remove(user_path(user_id));
    }

    std::vector<std::string> user_ids() const {
        std::vector<std::string> out;
        if (!std::filesystem::exists(dir_)) return out;
        for (const auto& entry : std::filesystem::directory_iterator(dir_)) {
            if (entry.path().extension() != ".json") continue;
            try {
                auto doc = nlohmann::json::parse(util::read_file(entry.path().string()));
                out.push_back(doc.at("user_id").get<std::string>());
            } catch (const std::exception&) {
                // Unreadable files are skipped; load_file reports them when addressed.
            }
        }
        std::sort(out.begin(), out.end());
        return out;
    }

    // Strict store-file schema: exactly the five documented keys.
    static ExperienceRecord load_file(const std::string& path) {
        nlohmann::json doc;
        try {
            doc = nlohmann::json::parse(util::read_file(path));
        } catch (const Error& e) {
            throw StorageError(e.what());
        } catch (const std::exception& e) {
            throw SchemaError(std::string("unparseable document: ") + e.what());
        }
        if (!doc.is_object()) throw SchemaError("store document is not an object");
        static const std::vector<std::string> keys = {"user_id", "updated_at", "user_profiles",
                                                      "semantic_memory", "procedural_memory"};
        for (const auto& key : keys)
            if (!doc.contains(key)) throw SchemaError("missing key " + key);
        for (const auto& [key, _] : doc.items())
            if (std::find(keys.begin(), keys.end(), key) == keys.end())
                throw SchemaError("unexpected key " + key);
        nlohmann::json content{{"user_profiles", doc["user_profiles"]},
                               {"semantic_memory", doc["semantic_memory"]},
                               {"procedural_memory", doc["procedural_memory"]}};
        ExperienceRecord record;
        try {
            record = validate_record(content);
        } catch (const Error& e) {
            throw SchemaError(e.what());
        }
        record.user_id = doc["user_id"].get<std::string>();
        record.updated_at = doc["updated_at"].get<std::string>();
        return record;
    }

private:
    std::string user_path(const std::string& user_id) const {
        std::string safe;
        for (char c : user_id)
            safe += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_')
                        ? c
                        : '_';
        return dir_ + "/" + safe + ".json";
    }

    std::mutex& user_mutex(const std::string& user_id) {
        std::lock_guard<std::mutex> lock(registry_mu_);
        auto& slot = user_mutexes_[user_id];
        if (!slot) slot = std::make_unique<std::mutex>();
        return *slot;
    }

    std::string dir_;
    std::mutex registry_mu_;
    std::map<std::string, std::unique_ptr<std::mutex>> user_mutexes_;
};

// --- Retrieval ---------------------------------------------------------

namespace detail {
inline std::set<std::string> normalized_token_set(const std::string& text) {
    std::set<std::string> out;
    for (const auto& t : util::split_whitespace(evaluation::normalize_answer(text)))
        out.insert(t);
    return out;
}

inline double jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
    if (a.empty() && b.empty()) return 0.0;
    size_t inter = 0;
    for (const auto& t : a)
        if (b.count(t)) ++inter;
    size_t uni = a.size() + b.size() - inter;
    return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

inline std::string sop_content(const ProcedureSop& sop) {
    return "scenario: " + sop.scenario + "; procedure: " + sop.procedure +
           "; rationale: " + sop.rationale;
}

// Tie rank for equal scores after recency: profiles, then SOPs, then facts.
inline int tie_rank(Component c) {
    switch (c) {
        case Component::Profile: return 0;
        case Component::Procedural: return 1;
        case Component::Semantic: return 2;
    }
    return 2;
}
}  // namespace detail

inline RetrievedExperience retrieve(ExperienceStore& store, const ExperienceQuery& query) {
    ExperienceRecord record = store.get(query.user_id);
    auto query_tokens = detail::normalized_token_set(query.task_text);

    struct Candidate {
        RetrievedItem item;
        int index;  // insertion index within its component sequence
    };
    std::vector<Candidate> candidates;
    auto consider = [&](Component component, int index, const std::string& content) {
        double score = detail::jaccard(query_tokens, detail::normalized_token_set(content));
        if (score > 0.0) candidates.push_back({{component, content, score}, index});
    };
    for (size_t i = 0; i < record.user_profiles.size(); ++i)
        consider(Component::Profile, static_cast<int>(i), record.user_profiles[i]);
    for (size_t i = 0; i < record.semantic_memory.size(); ++i)
        consider(Component::Semantic, static_cast<int>(i), record.semantic_memory[i]);
    for (size_t i = 0; i < record.procedural_memory.size(); ++i)
        consider(Component::Procedural, static_cast<int>(i),
                 detail::sop_content(record.procedural_memory[i]));

    std::stable_sort(candidates.begin(), candidates.end(), [](const auto& a, const auto& b) {
        if (a.item.score != b.item.score) return a.item.score > b.item.score;
        if (a.index != b.index) return a.index > b.index;  // later insertion wins
        return detail::tie_rank(a.item.component) < detail::tie_rank(b.item.component);
    });

    RetrievedExperience out;
    for (const auto& c : candidates) {
        if (static_cast<int>(out.items.size()) >= query.top_k) break;
        out.items.push_back(c.item);
    }
    return out;
}

// --- Injection ----------------------------------------------------------

using SummarizeFn = std::function<std::string(const std::string&)>;

constexpr int kInjectionTokenBound = 512;

// Deterministic one-block rendering of retrieved items.
inline std::string format_block(const RetrievedExperience& retrieved) {
    std::string block = "Relevant prior experience:";
    for (const auto& item : retrieved.items) {
        block += "\n- [";
        block += to_string(item.component);
        block += "] ";
        block += item.content;
    }
    return block;
}

// Pushes retrieved items as a single entry placed right after the task
// statement. At most one entry per run; bounded at 512 estimated tokens,
// with optional model summarization before hard truncation.
inline void inject(task_memory::MemoryStack& stack, const RetrievedExperience& retrieved,
                   int step, const SummarizeFn& summarize = {}) {
    if (retrieved.items.empty()) return;
    std::string block = format_block(retrieved);
    if (task_memory::estimate_tokens(block) > kInjectionTokenBound && summarize)
        block = "Relevant prior experience (summarized):\n" + summarize(block);
    if (task_memory::estimate_tokens(block) > kInjectionTokenBound)
        block.resize(static_cast<size_t>(kInjectionTokenBound) * 4);
    stack.push(task_memory::EntryKind::ExperienceInjection, block, step, "experience");
}

// --- Curation -----------------------------------------------------------

struct CurateOutcome {
    ExperienceRecord record;
    bool parse_failed = false;
    int attempts = 0;
};

// Asks the model to distill the finished task memory into the three-component
// schema, validates strictly, and merges into the existing record. After the
// allowed retries the existing record is returned unchanged.
inline CurateOutcome curate(const task_memory::MemoryStack& stack,
                            const ExperienceRecord& existing, const std::string& now,
                            gateway::Gateway& gw, const std::string& prompt_template,
                            const std::string& model = "default", int max_retries = 2,
                            const std::function<void(const std::string&)>& warn = {}) {
    templating::VarMap vars;
    vars["task_memory"] = stack.render(1 << 20).text;
    vars["existing_record"] = serialize_content(existing).dump(2);
    vars["current_time"] = now;
    std::string prompt = templating::render_template(prompt_template, vars);

    CurateOutcome outcome;
    for (int attempt = 0; attempt <= max_retries; ++attempt) {
        outcome.attempts = attempt + 1;
        gateway::ChatRequest req;
        req.model = model;
        req.messages.push_back({gateway::Role::User, prompt});
        if (attempt > 0)
            req.messages.push_back(
                {gateway::Role::User,
                 "The previous reply was not a valid document for the required schema. "
                 "Return JSON only, with exactly the keys user_profiles, semantic_memory, "
                 "procedural_memory."});
        std::string text;
        try {
            text = gw.complete(req).text;
        } catch (const gateway::ScriptExhausted&) {
            break;  // nothing left to retry against
        }
        auto doc = json_util::extract_json_object(text);
        if (!doc) continue;
        try {
            ExperienceRecord fresh = validate_record(*doc);
            fresh.user_id = existing.user_id;
            outcome.record = merge(existing, fresh);
            outcome.record.updated_at = now;
            return outcome;
        } catch (const Error&) {
            continue;
        }
    }
    if (warn) warn("experience curation failed to produce a valid document; keeping prior record");
    outcome.record = existing;
    outcome.parse_failed = true;
    return outcome;
}

}  // namespace stackplanner::experience
