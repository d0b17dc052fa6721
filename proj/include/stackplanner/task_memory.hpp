#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "stackplanner/errors.hpp"

namespace stackplanner::task_memory {

struct EmptyContent : Error {
    EmptyContent() : Error("memory entry content must be non-empty") {}
};
struct EmptySummary : Error {
    EmptySummary() : Error("condense summary must be non-empty") {}
};
struct IndexOutOfRange : Error {
    IndexOutOfRange(size_t k, size_t len)
        : Error("condense index " + std::to_string(k) + " out of range for stack of length " +
                std::to_string(len)) {}
};
struct PopTooDeep : Error {
    PopTooDeep(size_t pop, size_t len)
        : Error("prune pop_count " + std::to_string(pop) + " too deep for stack of length " +
                std::to_string(len)) {}
};
struct MissingFailureNote : Error {
    MissingFailureNote() : Error("prune with pop_count > 0 requires a failure note") {}
};

enum class EntryKind {
    TaskSpecEntry,
    CoordinatorMessage,
    SubAgentInput,
    SubAgentOutput,
    Condensed,
    FailureRecord,
    ExperienceInjection,
};

inline const char* to_string(EntryKind kind) {
    switch (kind) {
        case EntryKind::TaskSpecEntry: return "task_spec";
        case EntryKind::CoordinatorMessage: return "coordinator_message";
        case EntryKind::SubAgentInput: return "sub_agent_input";
        case EntryKind::SubAgentOutput: return "sub_agent_output";
        case EntryKind::Condensed: return "condensed";
        case EntryKind::FailureRecord: return "failure_record";
        case EntryKind::ExperienceInjection: return "experience_injection";
    }
    return "unknown";
}

inline EntryKind entry_kind_from_string(const std::string& s) {
    if (s == "task_spec") return EntryKind::TaskSpecEntry;
    if (s == "coordinator_message") return EntryKind::CoordinatorMessage;
    if (s == "sub_agent_input") return EntryKind::SubAgentInput;
    if (s == "sub_agent_output") return EntryKind::SubAgentOutput;
    if (s == "condensed") return EntryKind::Condensed;
    if (s == "failure_record") return EntryKind::FailureRecord;
    if (s == "experience_injection") return EntryKind::ExperienceInjection;
    throw Error("unknown entry kind: " + s);
}

// Deterministic default estimate: ceil(byte_length / 4). Exact tokenizers
// plug in through TokenEstimator.
inline int estimate_tokens(const std::string& content) {
    return static_cast<int>((content.size() + 3) / 4);
}

using TokenEstimator = std::function<int(const std::string&)>;

struct MemoryEntry {
    int64_t id = 0;
    EntryKind kind = EntryKind::CoordinatorMessage;
    std::string content;
    int token_estimate = 0;
    int created_step = 0;
    std::string source;  // "coordinator", an agent name, or "experience"
};

struct RenderResult {
    std::string text;
    bool verbose = false;  // set when the budget forced elision; a summarize hint
};

// The run's only task-level state: an ordered stack of execution records,
// bottom (index 1) to top. Owned by exactly one run; never shared mutably.
class MemoryStack {
public:
    explicit MemoryStack(int token_budget = 4096) : token_budget_(token_budget) {}

    size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    const std::vector<MemoryEntry>& entries() const { return entries_; }
    const MemoryEntry& top() const { return entries_.back(); }
    // 1-based, bottom to top, matching the rendered numbering.
    const MemoryEntry& at1(size_t k) const { return entries_.at(k - 1); }
    int token_budget() const { return token_budget_; }
    int64_t total_tokens() const { return total_tokens_; }

    const MemoryEntry& push(EntryKind kind, const std::string& content, int step,
                            const std::string& source,
                            const TokenEstimator& estimator = estimate_tokens) {
        if (content.empty()) throw EmptyContent();
        MemoryEntry e;
        e.id = next_id_++;
        e.kind = kind;
        e.content = content;
        e.token_estimate = estimator(content);
        e.created_step = step;
        e.source = source;
        total_tokens_ += e.token_estimate;
        entries_.push_back(std::move(e));
        return entries_.back();
    }

    // Pops the suffix k..top (1-based, inclusive) and pushes one Condensed
    // entry in its place, so the new length is exactly k. The replaced id
    // range is recorded in a one-line content header.
    const MemoryEntry& condense(size_t k, const std::string& summary, int step,
                                const TokenEstimator& estimator = estimate_tokens) {
        if (summary.empty()) throw EmptySummary();
        if (k < 1 || k > entries_.size()) throw IndexOutOfRange(k, entries_.size());
        int64_t first_id = entries_[k - 1].id;
        int64_t last_id = entries_.back().id;
        for (size_t i = k - 1; i < entries_.size(); ++i) {
            total_tokens_ -= entries_[i].token_estimate;
            removed_ids_.push_back(entries_[i].id);
        }
        entries_.resize(k - 1);
        std::string content = "[condensed ids " + std::to_string(first_id) + "-" +
                              std::to_string(last_id) + "]\n" + summary;
        return push(EntryKind::Condensed, content, step, "coordinator", estimator);
    }

    // Removes the top pop_count entries and pushes one FailureRecord holding
    // the failure note. pop_count=0 is the identity. The bottom TaskSpecEntry
    // is never prunable.
    void prune(size_t pop_count, const std::string& failure_note, int step,
               const TokenEstimator& estimator = estimate_tokens) {
        if (pop_count == 0) return;
        if (pop_count > entries_.size()) throw PopTooDeep(pop_count, entries_.size());
        size_t protected_count =
            (!entries_.empty() && entries_.front().kind == EntryKind::TaskSpecEntry) ? 1 : 0;
        if (pop_count > entries_.size() - protected_count)
            throw PopTooDeep(pop_count, entries_.size());
        if (failure_note.empty()) throw MissingFailureNote();
        for (size_t i = entries_.size() - pop_count; i < entries_.size(); ++i) {
            total_tokens_ -= entries_[i].token_estimate;
            removed_ids_.push_back(entries_[i].id);
        }
        entries_.resize(entries_.size() - pop_count);
        push(EntryKind::FailureRecord, failure_note, step, "coordinator", estimator);
    }

    // Renders entries bottom to top as numbered "[i][kind][source]" blocks.
    // When the estimate exceeds the budget, the oldest non-TaskSpec entries
    // are elided behind a marker line and the verbose flag is set.
    RenderResult render(int budget, const TokenEstimator& estimator = estimate_tokens) const {
        if (entries_.empty()) return {"(empty)", false};
        auto build = [&](size_t dropped) {
            std::string text;
            size_t skipped = 0;
            bool marker_written = false;
            for (size_t i = 0; i < entries_.size(); ++i) {
                const auto& e = entries_[i];
                bool elide = skipped < dropped && e.kind != EntryKind::TaskSpecEntry;
                if (elide) {
                    ++skipped;
                    if (!marker_written) {
                        if (!text.empty()) text += "\n";
                        text += "[... " + std::to_string(dropped) + " earlier entries elided ...]";
                        marker_written = true;
                    }
                    continue;
                }
                if (!text.empty()) text += "\n";
                text += "[" + std::to_string(i + 1) + "][" + to_string(e.kind) + "][" + e.source +
                        "] " + e.content;
            }
            return text;
        };
        size_t elidable = 0;
        for (const auto& e : entries_)
            if (e.kind != EntryKind::TaskSpecEntry) ++elidable;
        size_t dropped = 0;
        std::string text = build(dropped);
        while (estimator(text) > budget && dropped < elidable) {
            ++dropped;
            text = build(dropped);
        }
        return {text, dropped > 0};
    }

    // Ids that any prune or condense removed; they are never reused.
    const std::vector<int64_t>& removed_ids() const { return removed_ids_; }

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json doc;
        doc["token_budget"] = token_budget_;
        doc["entries"] = nlohmann::ordered_json::array();
        for (const auto& e : entries_) {
            nlohmann::ordered_json j;
            j["id"] = e.id;
            j["kind"] = to_string(e.kind);
            j["content"] = e.content;
            j["token_estimate"] = e.token_estimate;
            j["created_step"] = e.created_step;
            j["source"] = e.source;
            doc["entries"].push_back(std::move(j));
        }
        return doc;
    }

    static MemoryStack from_json(const nlohmann::json& doc) {
        MemoryStack stack(doc.at("token_budget").get<int>());
        for (const auto& j : doc.at("entries")) {
            MemoryEntry e;
            e.id = j.at("id").get<int64_t>();
            e.kind = entry_kind_from_string(j.at("kind").get<std::string>());
            e.content = j.at("content").get<std::string>();
            e.token_estimate = j.at("token_estimate").get<int>();
            e.created_step = j.at("created_step").get<int>();
            e.source = j.at("source").get<std::string>();
            stack.total_tokens_ += e.token_estimate;
            stack.next_id_ = std::max(stack.next_id_, e.id + 1);
            stack.entries_.push_back(std::move(e));
        }
        return stack;
    }

private:
    std::vector<MemoryEntry> entries_;
    std::vector<int64_t> removed_ids_;
    int64_t next_id_ = 1;
    int64_t total_tokens_ = 0;
    int token_budget_;
};

}  // namespace stackplanner::task_memory
