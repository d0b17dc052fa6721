#pragma once

#include <algorithm>
#include <atomic>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "stackplanner/errors.hpp"
#include "stackplanner/gateway.hpp"
#include "stackplanner/runtime.hpp"
#include "stackplanner/scoring.hpp"
#include "stackplanner/util.hpp"

namespace stackplanner::evaluation {

struct DatasetParseError : Error {
    DatasetParseError(int line, const std::string& what)
        : Error("dataset parse error at line " + std::to_string(line) + ": " + what),
          line_number(line) {}
    int line_number;
};

struct QaExample {
    std::string id;
    std::string question;
    std::vector<std::string> gold_answers;  // non-empty
    std::map<std::string, std::string> metadata;
};

enum class DatasetFormat { Generic, TwoWiki, Musique, Gaia, Frames };

inline std::optional<DatasetFormat> format_from_string(std::string name) {
    name = util::to_lower(name);
    if (name == "generic") return DatasetFormat::Generic;
    if (name == "twowiki" || name == "2wiki") return DatasetFormat::TwoWiki;
    if (name == "musique") return DatasetFormat::Musique;
    if (name == "gaia") return DatasetFormat::Gaia;
    if (name == "frames") return DatasetFormat::Frames;
    return std::nullopt;
}

namespace detail {

inline std::string field_as_text(const nlohmann::json& value) {
    if (value.is_string()) return value.get<std::string>();
    return value.dump();
}

inline std::vector<std::string> answer_list(const nlohmann::json& doc, const char* primary,
                                            const char* aliases) {
    std::vector<std::string> out;
    if (doc.contains(primary)) {
        if (doc[primary].is_array())
            for (const auto& a : doc[primary]) out.push_back(field_as_text(a));
        else
            out.push_back(field_as_text(doc[primary]));
    }
    if (aliases && doc.contains(aliases) && doc[aliases].is_array())
        for (const auto& a : doc[aliases]) out.push_back(field_as_text(a));
    return out;
}

inline QaExample adapt_line(const nlohmann::json& doc, DatasetFormat format, int line) {
    QaExample ex;
    switch (format) {
        case DatasetFormat::Generic: {
            if (!doc.contains("id")) throw DatasetParseError(line, "missing field id");
            if (!doc.contains("question")) throw DatasetParseError(line, "missing field question");
            ex.id = field_as_text(doc["id"]);
            ex.question = field_as_text(doc["question"]);
            ex.gold_answers = answer_list(doc, "answers", nullptr);
            if (ex.gold_answers.empty()) ex.gold_answers = answer_list(doc, "answer", nullptr);
            break;
        }
        case DatasetFormat::TwoWiki: {
            if (!doc.contains("_id")) throw DatasetParseError(line, "missing field _id");
            ex.id = field_as_text(doc["_id"]);
            ex.question = doc.value("question", "");
            ex.gold_answers = answer_list(doc, "answer", "answer_aliases");
            if (doc.contains("type")) ex.metadata["type"] = field_as_text(doc["type"]);
            break;
        }
        case DatasetFormat::Musique: {
            if (!doc.contains("id")) throw DatasetParseError(line, "missing field id");
            ex.id = field_as_text(doc["id"]);
            ex.question = doc.value("question", "");
            ex.gold_answers = answer_list(doc, "answer", "answer_aliases");
            break;
        }
        case DatasetFormat::Gaia: {
            if (!doc.contains("task_id")) throw DatasetParseError(line, "missing field task_id");
            ex.id = field_as_text(doc["task_id"]);
            ex.question = doc.value("Question", "");
            ex.gold_answers = answer_list(doc, "Final answer", nullptr);
            if (doc.contains("Level")) ex.metadata["level"] = field_as_text(doc["Level"]);
            break;
        }
        case DatasetFormat::Frames: {
            ex.id = doc.contains("id") ? field_as_text(doc["id"])
                                       : "frames-" + std::to_string(line);
            ex.question = doc.value("Prompt", doc.value("question", ""));
            ex.gold_answers = answer_list(doc, "Answer", nullptr);
            if (ex.gold_answers.empty()) ex.gold_answers = answer_list(doc, "answer", nullptr);
            if (doc.contains("reasoning_types"))
                ex.metadata["reasoning_types"] = field_as_text(doc["reasoning_types"]);
            break;
        }
    }
    if (ex.question.empty()) throw DatasetParseError(line, "empty question");
    if (ex.gold_answers.empty()) throw DatasetParseError(line, "no gold answers");
    return ex;
}

}  // namespace detail

// JSONL, one example per line; adapters map each source layout onto QaExample.
inline std::vector<QaExample> load_dataset(const std::string& path, DatasetFormat format) {
    std::istringstream in(util::read_file(path));
    std::vector<QaExample> out;
    std::string line;
    int line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        if (util::trim(line).empty()) continue;
        auto doc = nlohmann::json::parse(line, nullptr, false);
        if (doc.is_discarded())
            throw DatasetParseError(line_number, "line is not a valid document");
        if (!doc.is_object()) throw DatasetParseError(line_number, "line is not an object");
        out.push_back(detail::adapt_line(doc, format, line_number));
    }
    return out;
}

struct EvalConfig {
    bool disable_task_memory_revise = false;
    bool disable_experience_memory = false;
    std::optional<int> limit;
    uint64_t seed = 0;
};

struct EvalRow {
    std::string id;
    std::string prediction;
    double f1 = 0.0;
    int em = 0;
    int steps = 0;
    std::string termination;
};

struct EvalReport {
    std::vector<EvalRow> rows;  // sorted by id
    double mean_f1 = 0.0;
    double mean_em = 0.0;
    double finished_rate = 0.0;
};

inline nlohmann::ordered_json report_to_json(const EvalReport& report) {
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (const auto& r : report.rows)
        rows.push_back({{"id", r.id},
                        {"prediction", r.prediction},
                        {"f1", r.f1},
                        {"em", r.em},
                        {"steps", r.steps},
                        {"termination", r.termination}});
    return {{"rows", rows},
            {"aggregates",
             {{"mean_f1", report.mean_f1},
              {"mean_em", report.mean_em},
              {"finished_rate", report.finished_rate}}}};
}

// Everything needed to run one example in isolation. Scripted and replay
// backends are consumed by a run, so the gateway is built per example.
struct EvalContext {
    std::function<std::unique_ptr<gateway::Gateway>(const QaExample&)> gateway_factory;
    const tools::ToolRegistry* registry = nullptr;
    experience::ExperienceStore* store = nullptr;
    prompts::PromptSet prompt_set = prompts::defaults();
    runtime::RuntimeConfig runtime_config;
    std::string trace_dir;  // per-example trace files when non-empty
    std::string user_id = "eval";
    int max_steps = 25;
    std::function<void(const std::string&)> log;
};

// Per-example failures score zero and are recorded; they never abort the
// sweep. Examples run concurrently when jobs > 1, each with its own runtime.
inline EvalReport run_eval(const std::vector<QaExample>& examples, const EvalContext& ectx,
                           const EvalConfig& cfg, int jobs = 1) {
    size_t count = examples.size();
    if (cfg.limit && *cfg.limit >= 0 && static_cast<size_t>(*cfg.limit) < count)
        count = static_cast<size_t>(*cfg.limit);

    std::vector<EvalRow> rows(count);
    std::atomic<size_t> next{0};
    auto worker = [&]() {
        while (true) {
            size_t i = next.fetch_add(1);
            if (i >= count) return;
            const QaExample& ex = examples[i];
            EvalRow row;
            row.id = ex.id;
            try {
                runtime::TaskSpec task;
                task.query = ex.question;
                task.user_id = ectx.user_id;
                task.max_steps = ectx.max_steps;
                auto gw = ectx.gateway_factory(ex);
                runtime::RuntimeContext rctx;
                rctx.gw = gw.get();
                rctx.registry = ectx.registry;
                rctx.store = ectx.store;
                rctx.prompt_set = ectx.prompt_set;
                rctx.config = ectx.runtime_config;
                rctx.config.disable_revise |= cfg.disable_task_memory_revise;
                rctx.config.disable_experience |= cfg.disable_experience_memory;
                rctx.log = ectx.log;
                runtime::Runner runner(task, rctx);
                runtime::RunResult result = runner.run();
                row.prediction = result.final_answer;
                row.f1 = token_f1(result.final_answer, ex.gold_answers);
                row.em = exact_match(result.final_answer, ex.gold_answers);
                row.steps = static_cast<int>(result.steps.size());
                row.termination = runtime::to_string(result.termination);
                if (!ectx.trace_dir.empty())
                    runtime::write_trace_files(ectx.trace_dir + "/" + ex.id + ".trace.jsonl",
                                               runner.task(), result);
            } catch (const std::exception& e) {
                row.prediction.clear();
                row.f1 = 0.0;
                row.em = 0;
                row.termination = "unrecoverable_error";
                if (ectx.log) ectx.log("example " + ex.id + " failed: " + e.what());
            }
            rows[i] = std::move(row);
        }
    };

    int thread_count = std::max(1, jobs);
    if (thread_count == 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        for (int t = 0; t < thread_count; ++t) threads.emplace_back(worker);
        for (auto& t : threads) t.join();
    }

    EvalReport report;
    report.rows = std::move(rows);
    std::sort(report.rows.begin(), report.rows.end(),
              [](const EvalRow& a, const EvalRow& b) { return a.id < b.id; });
    if (!report.rows.empty()) {
        double f1 = 0.0, em = 0.0, fin = 0.0;
        for (const auto& r : report.rows) {
            f1 += r.f1;
            em += r.em;
            if (r.termination == "finished") fin += 1.0;
        }
        double n = static_cast<double>(report.rows.size());
        report.mean_f1 = f1 / n;
        report.mean_em = em / n;
        report.finished_rate = fin / n;
    }
    return report;
}

}  // namespace stackplanner::evaluation
