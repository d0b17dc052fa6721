#pragma once

#include <algorithm>
#include <chrono>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "stackplanner/agents.hpp"
#include "stackplanner/errors.hpp"
#include "stackplanner/experience.hpp"
#include "stackplanner/gateway.hpp"
#include "stackplanner/json_util.hpp"
#include "stackplanner/prompts.hpp"
#include "stackplanner/task.hpp"
#include "stackplanner/task_memory.hpp"
#include "stackplanner/template_engine.hpp"
#include "stackplanner/tools.hpp"
#include "stackplanner/util.hpp"

namespace stackplanner::runtime {

struct MalformedDocument : Error {
    explicit MalformedDocument(const std::string& what)
        : Error("decision parse: " + what) {}
};
struct UnknownAction : Error {
    explicit UnknownAction(const std::string& action)
        : Error("decision parse: unknown action \"" + action + "\"") {}
};
struct MissingField : Error {
    explicit MissingField(const std::string& field)
        : Error("decision parse: missing or invalid field " + field) {}
};
struct ParseFailure : Error {
    explicit ParseFailure(const std::string& what)
        : Error("decision unusable after retries: " + what) {}
};

enum class ActionKind { Plan, Reflect, Summarize, Delegate, Finish };

inline const char* to_string(ActionKind a) {
    switch (a) {
        case ActionKind::Plan: return "plan";
        case ActionKind::Reflect: return "reflect";
        case ActionKind::Summarize: return "summarize";
        case ActionKind::Delegate: return "delegate";
        case ActionKind::Finish: return "finish";
    }
    return "plan";
}

inline std::optional<ActionKind> action_from_string(std::string name) {
    name = util::to_lower(name);
    if (name == "plan") return ActionKind::Plan;
    if (name == "reflect") return ActionKind::Reflect;
    if (name == "summarize") return ActionKind::Summarize;
    if (name == "delegate") return ActionKind::Delegate;
    if (name == "finish") return ActionKind::Finish;
    return std::nullopt;
}

struct CoordinatorDecision {
    ActionKind action = ActionKind::Plan;
    std::string reasoning;
    std::map<std::string, std::string> params;  // delegate: agent_type, task_description
    std::string instruction;
    std::string locale;
};

// Accepts the decision document with surrounding prose tolerated. Only
// "action" is mandatory; delegation additionally requires its two params.
inline CoordinatorDecision parse_decision(const std::string& raw) {
    auto doc = json_util::extract_json_object(raw);
    if (!doc) throw MalformedDocument("no JSON object found in reply");
    if (!doc->contains("action")) throw MissingField("action");
    if (!(*doc)["action"].is_string()) throw MissingField("action");
    auto action = action_from_string((*doc)["action"].get<std::string>());
    if (!action) throw UnknownAction((*doc)["action"].get<std::string>());

    CoordinatorDecision decision;
    decision.action = *action;
    auto read_text = [&](const char* field) -> std::string {
        if (doc->contains(field) && (*doc)[field].is_string())
            return (*doc)[field].get<std::string>();
        return "";
    };
    decision.reasoning = read_text("reasoning");
    decision.instruction = read_text("instruction");
    decision.locale = read_text("locale");

    if (decision.action == ActionKind::Delegate) {
        if (!doc->contains("params") || !(*doc)["params"].is_object())
            throw MissingField("params");
        const auto& params = (*doc)["params"];
        for (const auto& [key, value] : params.items())
            if (value.is_string()) decision.params[key] = value.get<std::string>();
        if (decision.params["agent_type"].empty()) throw MissingField("params.agent_type");
        if (decision.params["task_description"].empty())
            throw MissingField("params.task_description");
    }
    return decision;
}

enum class Termination { Finished, StepCapReached, UnrecoverableError };

inline const char* to_string(Termination t) {
    switch (t) {
        case Termination::Finished: return "finished";
        case Termination::StepCapReached: return "step_cap_reached";
        case Termination::UnrecoverableError: return "unrecoverable_error";
    }
    return "unrecoverable_error";
}

// Pure termination rule: a Finish decision ends the run; otherwise the step
// cap is the only stop.
inline std::optional<Termination> should_terminate(std::optional<ActionKind> last_action,
                                                   int steps_taken, int max_steps) {
    if (last_action && *last_action == ActionKind::Finish) return Termination::Finished;
    if (steps_taken >= max_steps) return Termination::StepCapReached;
    return std::nullopt;
}

struct StepRecord {
    int step = 0;
    CoordinatorDecision decision;
    std::string outcome_digest;
    int memory_len_before = 0;
    int memory_len_after = 0;
    int tokens_used = 0;
    int64_t wall_time_ms = 0;
};

// One trace line, with the exact field set and order the replay tool checks.
inline nlohmann::ordered_json step_to_json(const StepRecord& record) {
    nlohmann::ordered_json line;
    line["step"] = record.step;
    line["action"] = to_string(record.decision.action);
    line["reasoning"] = record.decision.reasoning;
    if (record.decision.params.empty()) {
        line["params"] = nullptr;
    } else {
        nlohmann::ordered_json params;
        for (const auto& [key, value] : record.decision.params) params[key] = value;
        line["params"] = params;
    }
    line["outcome_digest"] = record.outcome_digest;
    line["memory_len_before"] = record.memory_len_before;
    line["memory_len_after"] = record.memory_len_after;
    line["tokens_used"] = record.tokens_used;
    line["wall_time_ms"] = record.wall_time_ms;
    return line;
}

struct RunResult {
    std::string final_answer;
    Termination termination = Termination::UnrecoverableError;
    std::vector<StepRecord> steps;
    task_memory::MemoryStack final_stack;
    std::vector<agents::AgentTranscript> transcripts;
    std::string error;  // set for UnrecoverableError
};

struct RuntimeConfig {
    int max_reparse = 2;          // decision re-prompts on parse failure
    int memory_token_budget = 4096;
    int context_excerpt_budget = 1024;  // delegated context rendering budget
    int agent_max_iters = 6;
    int experience_top_k = 3;
    std::string model = "default";
    bool disable_revise = false;      // ablation: Reflect/Summarize become no-ops
    bool disable_experience = false;  // ablation: no retrieval, injection, curation
    bool deterministic_time = false;  // zero wall clocks for replayable traces
};

struct RuntimeContext {
    gateway::Gateway* gw = nullptr;
    const tools::ToolRegistry* registry = nullptr;
    experience::ExperienceStore* store = nullptr;  // optional
    prompts::PromptSet prompt_set = prompts::defaults();
    RuntimeConfig config;
    std::function<void(const std::string&)> log;
};

namespace detail {

// Sums usage across every completion made on behalf of one step.
class MeteredGateway : public gateway::Gateway {
public:
    explicit MeteredGateway(gateway::Gateway& inner) : inner_(inner) {}

    gateway::Completion complete(const gateway::ChatRequest& req) override {
        auto c = inner_.complete(req);
        total_ += c.prompt_tokens + c.completion_tokens;
        return c;
    }

    long long total() const { return total_; }

private:
    gateway::Gateway& inner_;
    long long total_ = 0;
};

enum class AgentId { Searcher, Reporter, Replanner, Unknown };

inline AgentId resolve_agent(const std::string& agent_type) {
    std::string t = util::to_lower(agent_type);
    if (t.find("replan") != std::string::npos) return AgentId::Replanner;
    if (t.find("search") != std::string::npos || t.find("research") != std::string::npos)
        return AgentId::Searcher;
    if (t.find("report") != std::string::npos || t.find("writ") != std::string::npos)
        return AgentId::Reporter;
    return AgentId::Unknown;
}

inline const char* agent_name(AgentId id) {
    switch (id) {
        case AgentId::Searcher: return "searcher";
        case AgentId::Reporter: return "reporter";
        case AgentId::Replanner: return "searcher";  // replans run on the search agent
        case AgentId::Unknown: return "unknown";
    }
    return "unknown";
}

constexpr const char* kAvailableAgents =
    "searcher (retrieves evidence with search tools), "
    "reporter (writes final answers and structured reports), "
    "replanner (decomposes a stuck task into smaller subtasks)";

}  // namespace detail

// Drives one task end to end. Owns the stack; everything shared (gateway,
// tools, store) comes in through ctx and must be concurrency-safe.
class Runner {
public:
    Runner(const TaskSpec& task, const RuntimeContext& ctx)
        : task_(task), ctx_(ctx), gw_(*ctx.gw),
          stack_(ctx.config.memory_token_budget) {
        task_.validate();
        if (task_.created_at.empty())
            task_.created_at =
                ctx_.config.deterministic_time ? "1970-01-01T00:00:00Z" : util::now_iso8601();
    }

    RunResult run() {
        RunResult result;
        stack_.push(task_memory::EntryKind::TaskSpecEntry, task_.query, 0, "coordinator");
        if (experience_enabled()) inject_experience();

        std::optional<Termination> verdict;
        while (!verdict) {
            auto started = std::chrono::steady_clock::now();
            long long tokens_before = gw_.total();
            int len_before = static_cast<int>(stack_.size());

            CoordinatorDecision decision;
            try {
                decision = decide();
            } catch (const Error& e) {
                result.termination = Termination::UnrecoverableError;
                result.error = e.what();
                log(std::string("run aborted: ") + e.what());
                finalize(result);
                return result;
            }

            bool accepted_finish = false;
            std::string outcome = dispatch(decision, result, accepted_finish);

            StepRecord record;
            record.step = static_cast<int>(result.steps.size()) + 1;
            record.decision = decision;
            record.outcome_digest = util::fnv1a_hex(outcome);
            record.memory_len_before = len_before;
            record.memory_len_after = static_cast<int>(stack_.size());
            record.tokens_used = static_cast<int>(gw_.total() - tokens_before);
            record.wall_time_ms =
                ctx_.config.deterministic_time
                    ? 0
                    : std::chrono::duration_cast<std::chrono::milliseconds>(
                          std::chrono::steady_clock::now() - started)
                          .count();
            result.steps.push_back(std::move(record));

            std::optional<ActionKind> effective =
                accepted_finish ? std::optional<ActionKind>(ActionKind::Finish) : std::nullopt;
            verdict = should_terminate(effective, static_cast<int>(result.steps.size()),
                                       task_.max_steps);
        }
        result.termination = *verdict;
        if (result.termination == Termination::Finished) {
            result.final_answer = last_report_;
            curate_experience();
        }
        finalize(result);
        return result;
    }

    const TaskSpec& task() const { return task_; }

private:
    bool experience_enabled() const {
        return ctx_.store != nullptr && !ctx_.config.disable_experience;
    }

    void log(const std::string& message) const {
        if (ctx_.log) ctx_.log(message);
    }

    void finalize(RunResult& result) {
        result.final_stack = std::move(stack_);
    }

    std::string current_time() const { return task_.created_at; }

    void inject_experience() {
        experience::ExperienceQuery query{task_.query, task_.user_id,
                                          ctx_.config.experience_top_k};
        auto retrieved = experience::retrieve(*ctx_.store, query);
        experience::inject(stack_, retrieved, 0, [this](const std::string& block) {
            templating::VarMap vars{{"block", block}};
            gateway::ChatRequest req;
            req.model = ctx_.config.model;
            req.messages.push_back(
                {gateway::Role::User,
                 templating::render_template(ctx_.prompt_set.experience_summarizer, vars)});
            return gw_.complete(req).text;
        });
    }

    gateway::Completion complete_user_prompt(const std::string& prompt) {
        gateway::ChatRequest req;
        req.model = ctx_.config.model;
        req.messages.push_back({gateway::Role::User, prompt});
        return gw_.complete(req);
    }

    CoordinatorDecision decide() {
        auto rendered = stack_.render(ctx_.config.memory_token_budget);
        templating::VarMap vars;
        vars["current_time"] = current_time();
        vars["locale"] = task_.locale;
        vars["memory_stack"] = rendered.text;
        vars["available_agents"] = detail::kAvailableAgents;
        vars["verbose_hint"] = rendered.verbose ? "true" : "";
        std::string prompt =
            templating::render_template(ctx_.prompt_set.coordinator_decision, vars);

        std::vector<gateway::ChatMessage> messages{{gateway::Role::User, prompt}};
        std::string last_error;
        for (int attempt = 0; attempt <= ctx_.config.max_reparse; ++attempt) {
            gateway::ChatRequest req;
            req.model = ctx_.config.model;
            req.messages = messages;
            std::string raw = gw_.complete(req).text;
            try {
                return parse_decision(raw);
            } catch (const Error& e) {
                last_error = e.what();
                messages.push_back({gateway::Role::Assistant, raw});
                messages.push_back(
                    {gateway::Role::User,
                     std::string("Your reply could not be used: ") + e.what() +
                         ". Respond with JSON only, using exactly the fields action, "
                         "reasoning, params, instruction, locale."});
            }
        }
        throw ParseFailure(last_error);
    }

    std::string dispatch(const CoordinatorDecision& decision, RunResult& result,
                         bool& accepted_finish) {
        switch (decision.action) {
            case ActionKind::Plan: return dispatch_plan();
            case ActionKind::Summarize: return dispatch_summarize();
            case ActionKind::Reflect: return dispatch_reflect();
            case ActionKind::Delegate: return dispatch_delegate(decision, result);
            case ActionKind::Finish: return dispatch_finish(accepted_finish);
        }
        return "";
    }

    std::string dispatch_plan() {
        templating::VarMap vars;
        vars["current_time"] = current_time();
        vars["locale"] = task_.locale;
        vars["memory_stack"] = stack_.render(ctx_.config.memory_token_budget).text;
        std::string plan = complete_user_prompt(
                               templating::render_template(ctx_.prompt_set.coordinator_plan, vars))
                               .text;
        stack_.push(task_memory::EntryKind::CoordinatorMessage, plan,
                    static_cast<int>(stack_.size()), "coordinator");
        return plan;
    }

    // Entries below this index are structural (task statement and injected
    // experience) and are never condensed or counted as "recent".
    size_t protected_prefix() const {
        size_t prefix = 1;
        if (stack_.size() >= 2 &&
            stack_.at1(2).kind == task_memory::EntryKind::ExperienceInjection)
            prefix = 2;
        return prefix;
    }

    std::string dispatch_summarize() {
        if (ctx_.config.disable_revise) return "summarize disabled";
        size_t k = protected_prefix() + 1;
        if (stack_.size() < k) return "nothing to summarize";
        std::string segment;
        for (size_t i = k; i <= stack_.size(); ++i) {
            const auto& e = stack_.at1(i);
            segment += "[" + std::to_string(i) + "][" + task_memory::to_string(e.kind) + "][" +
                       e.source + "] " + e.content + "\n";
        }
        templating::VarMap vars{{"segment", segment}};
        std::string summary =
            complete_user_prompt(
                templating::render_template(ctx_.prompt_set.coordinator_summarize, vars))
                .text;
        stack_.condense(k, summary, static_cast<int>(stack_.size()));
        return summary;
    }

    std::string dispatch_reflect() {
        if (ctx_.config.disable_revise) return "reflect disabled";
        templating::VarMap vars;
        vars["current_time"] = current_time();
        vars["memory_stack"] = stack_.render(ctx_.config.memory_token_budget).text;
        std::string prompt =
            templating::render_template(ctx_.prompt_set.coordinator_reflect, vars);

        std::vector<gateway::ChatMessage> messages{{gateway::Role::User, prompt}};
        for (int attempt = 0; attempt <= ctx_.config.max_reparse; ++attempt) {
            gateway::ChatRequest req;
            req.model = ctx_.config.model;
            req.messages = messages;
            std::string raw = gw_.complete(req).text;
            auto doc = json_util::extract_json_object(raw);
            if (doc && doc->contains("pop_count") && (*doc)["pop_count"].is_number_integer()) {
                int pop = (*doc)["pop_count"].get<int>();
                std::string analysis = doc->value("analysis", "");
                if (pop <= 0) return analysis.empty() ? "no entries removed" : analysis;
                // Clamp to what pruning allows: the bottom task entry stays.
                int max_pop = static_cast<int>(stack_.size()) - 1;
                pop = std::min(pop, max_pop);
                if (pop <= 0) return "no entries removable";
                std::string note =
                    analysis.empty() ? "unproductive path removed after reflection" : analysis;
                stack_.prune(pop, note, static_cast<int>(stack_.size()));
                return note;
            }
            messages.push_back({gateway::Role::Assistant, raw});
            messages.push_back(
                {gateway::Role::User,
                 "Your reply could not be used. Respond with JSON only, using exactly the "
                 "fields analysis, pop_count, reasoning."});
        }
        return "reflection unparseable; no entries removed";
    }

    std::string dispatch_delegate(const CoordinatorDecision& decision, RunResult& result) {
        std::string agent_type = decision.params.at("agent_type");
        std::string description = decision.params.at("task_description");
        detail::AgentId id = detail::resolve_agent(agent_type);
        if (id == detail::AgentId::Unknown) {
            std::string note = "delegation error: unknown agent type \"" + agent_type + "\"";
            stack_.push(task_memory::EntryKind::FailureRecord, note,
                        static_cast<int>(stack_.size()), "coordinator");
            return note;
        }
        if (id == detail::AgentId::Replanner)
            description =
                "Decompose the task into smaller answerable subtasks and gather what each "
                "needs: " +
                description;

        agents::SubTask subtask;
        subtask.agent_type = detail::agent_name(id);
        subtask.description = description;
        subtask.context = stack_.render(ctx_.config.context_excerpt_budget).text;
        subtask.locale = task_.locale.empty() ? decision.locale : task_.locale;

        stack_.push(task_memory::EntryKind::SubAgentInput,
                    "[" + subtask.agent_type + "] " + description,
                    static_cast<int>(stack_.size()), "coordinator");

        agents::AgentTranscript transcript;
        transcript.agent_type = subtask.agent_type;
        transcript.description = description;
        agents::AgentResult agent_result;
        if (id == detail::AgentId::Reporter) {
            agent_result = agents::run_report_agent(subtask, gw_, ctx_.prompt_set,
                                                    ctx_.config.model, &transcript);
        } else {
            agent_result =
                agents::run_search_agent(subtask, *ctx_.registry, gw_,
                                         ctx_.config.agent_max_iters, ctx_.prompt_set,
                                         ctx_.config.model, &transcript);
        }
        result.transcripts.push_back(std::move(transcript));

        std::string outcome;
        if (agent_result.status == agents::AgentStatus::Ok) {
            outcome = agent_result.content;
            stack_.push(task_memory::EntryKind::SubAgentOutput, outcome,
                        static_cast<int>(stack_.size()), subtask.agent_type);
            if (id == detail::AgentId::Reporter) last_report_ = agent_result.content;
            if (!delegated_) delegated_ = true;
        } else {
            outcome = std::string("agent ") + subtask.agent_type + " " +
                      agents::to_string(agent_result.status) + ": " + agent_result.content;
            stack_.push(task_memory::EntryKind::FailureRecord, outcome,
                        static_cast<int>(stack_.size()), subtask.agent_type);
            delegated_ = true;
        }
        return outcome;
    }

    std::string dispatch_finish(bool& accepted_finish) {
        // The answer must come from a sub-agent: a finish before any
        // delegation is refused and the run continues.
        if (!delegated_) {
            std::string note =
                "cannot finish: no sub-agent has produced output yet; delegate first";
            stack_.push(task_memory::EntryKind::CoordinatorMessage, note,
                        static_cast<int>(stack_.size()), "coordinator");
            return note;
        }
        accepted_finish = true;
        std::string answer = last_report_;
        if (answer.empty()) {
            // Fall back to the most recent sub-agent output on record.
            for (size_t i = stack_.size(); i >= 1; --i) {
                if (stack_.at1(i).kind == task_memory::EntryKind::SubAgentOutput) {
                    answer = stack_.at1(i).content;
                    break;
                }
                if (i == 1) break;
            }
            last_report_ = answer;
        }
        return answer.empty() ? "finished without report" : answer;
    }

    void curate_experience() {
        if (!experience_enabled()) return;
        try {
            auto existing = ctx_.store->get(task_.user_id);
            auto outcome = experience::curate(
                stack_, existing, current_time(), gw_, ctx_.prompt_set.experience_curator,
                ctx_.config.model, ctx_.config.max_reparse,
                [this](const std::string& m) { log(m); });
            if (!outcome.parse_failed) ctx_.store->put(outcome.record);
        } catch (const std::exception& e) {
            log(std::string("experience curation skipped: ") + e.what());
        }
    }

    TaskSpec task_;
    RuntimeContext ctx_;
    detail::MeteredGateway gw_;
    task_memory::MemoryStack stack_;
    bool delegated_ = false;
    std::string last_report_;
};

inline RunResult run_task(const TaskSpec& task, const RuntimeContext& ctx) {
    Runner runner(task, ctx);
    return runner.run();
}

// --- Trace files ----------------------------------------------------------

inline std::string trace_text(const RunResult& result) {
    std::string out;
    for (const auto& step : result.steps) out += step_to_json(step).dump() + "\n";
    return out;
}

// Writes the trace plus its sidecars: the task document, the final stack
// snapshot, and the sub-agent debug transcripts.
inline void write_trace_files(const std::string& trace_path, const TaskSpec& task,
                              const RunResult& result) {
    util::write_file(trace_path, trace_text(result));
    util::write_file(trace_path + ".task.json", to_json(task).dump(2) + "\n");
    util::write_file(trace_path + ".stack.json", result.final_stack.to_json().dump(2) + "\n");
    std::string transcripts;
    for (const auto& t : result.transcripts) transcripts += agents::to_json(t).dump() + "\n";
    util::write_file(trace_path + ".agents.jsonl", transcripts);
}

}  // namespace stackplanner::runtime
