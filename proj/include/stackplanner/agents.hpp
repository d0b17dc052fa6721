#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "stackplanner/experience.hpp"
#include "stackplanner/gateway.hpp"
#include "stackplanner/prompts.hpp"
#include "stackplanner/task.hpp"
#include "stackplanner/template_engine.hpp"
#include "stackplanner/tools.hpp"
#include "stackplanner/util.hpp"

namespace stackplanner::agents {

struct SubTask {
    std::string agent_type;
    std::string description;
    std::string context;  // coordinator-provided excerpt, never the raw stack
    std::string locale = "en-US";
};

enum class AgentStatus { Ok, ToolBudgetExhausted, Failed };

inline const char* to_string(AgentStatus s) {
    switch (s) {
        case AgentStatus::Ok: return "ok";
        case AgentStatus::ToolBudgetExhausted: return "tool_budget_exhausted";
        case AgentStatus::Failed: return "failed";
    }
    return "failed";
}

struct ReactStep {
    std::string thought;
    std::optional<tools::ToolCall> tool_call;
    std::optional<std::string> observation;
    std::optional<std::string> answer;
};

struct AgentResult {
    AgentStatus status = AgentStatus::Failed;
    std::string content;
    std::vector<std::string> citations;
    int steps_taken = 0;
};

// Private working record of one sub-agent invocation. Lives only in the
// debug trace sidecar; never enters the coordinator's memory.
struct AgentTranscript {
    std::string agent_type;
    std::string description;
    std::vector<ReactStep> steps;
};

inline nlohmann::ordered_json to_json(const AgentTranscript& t) {
    nlohmann::ordered_json steps = nlohmann::ordered_json::array();
    for (const auto& s : t.steps) {
        nlohmann::ordered_json step;
        step["thought"] = s.thought;
        if (s.tool_call) {
            step["tool"] = s.tool_call->tool;
            auto q = s.tool_call->args.find("query");
            step["query"] = q == s.tool_call->args.end() ? "" : q->second;
        }
        if (s.observation) step["observation"] = *s.observation;
        if (s.answer) step["answer"] = *s.answer;
        steps.push_back(std::move(step));
    }
    return {{"agent_type", t.agent_type}, {"description", t.description}, {"steps", steps}};
}

namespace detail {

// First <tag>...</tag> span; an unclosed tag runs to end of text.
inline std::optional<std::string> extract_tag(const std::string& text, const std::string& tag) {
    std::string open = "<" + tag + ">";
    std::string close = "</" + tag + ">";
    auto start = text.find(open);
    if (start == std::string::npos) return std::nullopt;
    start += open.size();
    auto end = text.find(close, start);
    std::string inner =
        end == std::string::npos ? text.substr(start) : text.substr(start, end - start);
    return std::string(util::trim(inner));
}

inline tools::ToolCall parse_tool_tag(const std::string& body) {
    tools::ToolCall call;
    auto sep = body.find('|');
    if (sep == std::string::npos) {
        call.tool = std::string(util::trim(body));
    } else {
        call.tool = std::string(util::trim(body.substr(0, sep)));
        call.args["query"] = std::string(util::trim(body.substr(sep + 1)));
    }
    call.args.emplace("k", "1");
    return call;
}

inline std::string join_names(const std::vector<std::string>& names) {
    std::string out;
    for (const auto& n : names) {
        if (!out.empty()) out += ", ";
        out += n;
    }
    return out;
}

}  // namespace detail

// Thought→tool→observation loop with a private transcript. The result text
// is the only thing handed back to the coordinator.
inline AgentResult run_search_agent(const SubTask& subtask, const tools::ToolRegistry& registry,
                                    gateway::Gateway& gw, int max_iters = 6,
                                    const prompts::PromptSet& prompt_set = prompts::defaults(),
                                    const std::string& model = "default",
                                    AgentTranscript* transcript = nullptr) {
    AgentResult result;
    templating::VarMap vars;
    vars["description"] = subtask.description;
    vars["context"] = subtask.context;
    vars["tools"] = detail::join_names(registry.names());
    vars["locale"] = subtask.locale;

    std::vector<gateway::ChatMessage> messages;
    try {
        messages.push_back(
            {gateway::Role::User, templating::render_template(prompt_set.search_agent, vars)});
    } catch (const Error& e) {
        result.content = std::string("agent error: ") + e.what();
        return result;
    }

    int tool_calls = 0;
    for (int iter = 0; iter < max_iters; ++iter) {
        std::string text;
        try {
            gateway::ChatRequest req;
            req.model = model;
            req.messages = messages;
            text = gw.complete(req).text;
        } catch (const std::exception& e) {
            result.status = AgentStatus::Failed;
            result.content = std::string("agent error: ") + e.what();
            result.steps_taken = iter;
            return result;
        }
        ++result.steps_taken;

        ReactStep step;
        step.thought = detail::extract_tag(text, "thought").value_or("");
        auto answer = detail::extract_tag(text, "answer");
        auto tool = detail::extract_tag(text, "tool");

        if (answer && tool_calls > 0) {
            step.answer = answer;
            if (transcript) transcript->steps.push_back(std::move(step));
            result.status = AgentStatus::Ok;
            result.content = *answer;
            return result;
        }
        messages.push_back({gateway::Role::Assistant, text});
        if (answer) {
            // Retrieval-grounded contract: no answering before any evidence.
            step.answer = answer;
            step.observation = "You must consult at least one tool before answering. "
                               "Use <tool>name|query</tool>.";
            messages.push_back({gateway::Role::User, *step.observation});
        } else if (tool) {
            step.tool_call = detail::parse_tool_tag(*tool);
            step.observation = registry.dispatch(*step.tool_call);
            ++tool_calls;
            auto q = step.tool_call->args.find("query");
            result.citations.push_back(step.tool_call->tool + ": " +
                                       (q == step.tool_call->args.end() ? "" : q->second));
            messages.push_back({gateway::Role::User, *step.observation});
        } else {
            if (step.thought.empty()) step.thought = std::string(util::trim(text));
            step.observation = "Respond with <thought>...</thought> followed by "
                               "<tool>name|query</tool> or <answer>...</answer>.";
            messages.push_back({gateway::Role::User, *step.observation});
        }
        if (transcript) transcript->steps.push_back(std::move(step));
    }
    result.status = AgentStatus::ToolBudgetExhausted;
    result.content = "tool budget exhausted before a final answer was produced";
    return result;
}

// Single-call answer mode, or outline + per-section calls when the subtask
// asks for a report/outline.
inline AgentResult run_report_agent(const SubTask& subtask, gateway::Gateway& gw,
                                    const prompts::PromptSet& prompt_set = prompts::defaults(),
                                    const std::string& model = "default",
                                    AgentTranscript* transcript = nullptr) {
    AgentResult result;
    bool structured = util::contains_ci(subtask.description, "report") ||
                      util::contains_ci(subtask.description, "outline");
    templating::VarMap vars;
    vars["description"] = subtask.description;
    vars["context"] = subtask.context;
    vars["locale"] = subtask.locale;

    auto complete_with = [&](const std::string& tmpl) {
        gateway::ChatRequest req;
        req.model = model;
        req.messages.push_back({gateway::Role::User, templating::render_template(tmpl, vars)});
        ++result.steps_taken;
        return gw.complete(req).text;
    };

    try {
        if (!structured) {
            std::string text = complete_with(prompt_set.report_agent_answer);
            if (transcript) transcript->steps.push_back({"answer mode", {}, {}, text});
            result.status = AgentStatus::Ok;
            result.content = util::trim(subtask.context).empty()
                                 ? "(insufficient context) " + text
                                 : text;
            return result;
        }
        std::string outline = complete_with(prompt_set.report_agent_outline);
        if (transcript) transcript->steps.push_back({"outline", {}, {}, outline});
        std::vector<std::string> sections;
        std::istringstream lines(outline);
        std::string line;
        while (std::getline(lines, line) && sections.size() < 8) {
            auto title = util::trim(line);
            while (!title.empty() && (title.front() == '-' || title.front() == '*' ||
                                      title.front() == '#' || std::isdigit(static_cast<unsigned char>(
                                                                  title.front())) ||
                                      title.front() == '.' || title.front() == ')'))
                title.erase(0, 1);
            title = util::trim(title);
            if (!title.empty()) sections.emplace_back(title);
        }
        if (sections.empty()) {
            result.status = AgentStatus::Failed;
            result.content = "report outline was empty";
            return result;
        }
        std::string body;
        for (const auto& section : sections) {
            vars["section"] = section;
            std::string text = complete_with(prompt_set.report_agent_section);
            if (transcript) transcript->steps.push_back({"section: " + section, {}, {}, text});
            body += "## " + section + "\n" + text + "\n\n";
        }
        result.status = AgentStatus::Ok;
        result.content = body;
        return result;
    } catch (const std::exception& e) {
        result.status = AgentStatus::Failed;
        result.content = std::string("agent error: ") + e.what();
        return result;
    }
}

// Thin wrapper over store retrieval: formats what was found, or a sentinel.
inline AgentResult run_experience_search_agent(const runtime::TaskSpec& task,
                                               experience::ExperienceStore& store, int top_k = 3,
                                               gateway::Gateway* gw = nullptr,
                                               const prompts::PromptSet& prompt_set =
                                                   prompts::defaults(),
                                               const std::string& model = "default") {
    AgentResult result;
    result.status = AgentStatus::Ok;
    experience::ExperienceQuery query{task.query, task.user_id, top_k};
    auto retrieved = experience::retrieve(store, query);
    if (retrieved.items.empty()) {
        result.content = "no relevant prior experience";
        return result;
    }
    std::string block = experience::format_block(retrieved);
    if (gw && task_memory::estimate_tokens(block) > experience::kInjectionTokenBound) {
        templating::VarMap vars{{"block", block}};
        gateway::ChatRequest req;
        req.model = model;
        req.messages.push_back(
            {gateway::Role::User,
             templating::render_template(prompt_set.experience_summarizer, vars)});
        try {
            block = "Relevant prior experience (summarized):\n" + gw->complete(req).text;
            result.steps_taken = 1;
        } catch (const std::exception&) {
            // fall through to the unsummarized block
        }
    }
    result.content = block;
    for (const auto& item : retrieved.items)
        result.citations.push_back(std::string(experience::to_string(item.component)));
    return result;
}

}  // namespace stackplanner::agents
