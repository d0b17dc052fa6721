#pragma once

#include <string>

#include <json.hpp>

#include "stackplanner/errors.hpp"

namespace stackplanner::runtime {

struct InvalidTask : Error {
    explicit InvalidTask(const std::string& what) : Error("invalid task: " + what) {}
};

struct TaskSpec {
    std::string query;
    std::string user_id = "default";
    std::string locale = "en-US";
    int max_steps = 25;
    std::string created_at;  // ISO-8601 UTC

    void validate() const {
        if (query.empty()) throw InvalidTask("query is empty");
        if (max_steps < 1) throw InvalidTask("max_steps must be >= 1");
    }
};

inline nlohmann::ordered_json to_json(const TaskSpec& task) {
    return {{"query", task.query},
            {"user_id", task.user_id},
            {"locale", task.locale},
            {"max_steps", task.max_steps},
            {"created_at", task.created_at}};
}

inline TaskSpec task_from_json(const nlohmann::json& doc) {
    TaskSpec task;
    task.query = doc.at("query").get<std::string>();
    task.user_id = doc.at("user_id").get<std::string>();
    task.locale = doc.at("locale").get<std::string>();
    task.max_steps = doc.at("max_steps").get<int>();
    task.created_at = doc.at("created_at").get<std::string>();
    task.validate();
    return task;
}

}  // namespace stackplanner::runtime
