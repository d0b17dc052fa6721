#pragma once

#include <cstdlib>
#include <functional>
#include <string>

#include <json.hpp>

#include "stackplanner/errors.hpp"
#include "stackplanner/util.hpp"

namespace stackplanner::config {

struct ConfigError : Error {
    explicit ConfigError(const std::string& what) : Error("config: " + what) {}
};

// Resolved settings for one process. Precedence, lowest to highest:
// built-in defaults, config file sections, environment, command-line flags
// (flags are applied by the CLI after load()).
struct AppConfig {
    // gateway
    std::string backend = "scripted";  // remote | replay | scripted
    std::string base_url = "https://api.openai.com";
    std::string api_key;
    std::string model = "default";
    // tools
    std::string tools_mode = "fixture";  // remote | fixture
    std::string tools_fixture;           // corpus path for the fixture backend
    std::string search_base_url;
    std::string search_api_key;
    // memory
    int memory_token_budget = 4096;
    int context_excerpt_budget = 1024;
    // runtime
    int max_steps = 25;
    int max_reparse = 2;
    int agent_max_iters = 6;
    int experience_top_k = 3;
    std::string experience_dir = "experience_store";
    std::string prompts_dir;
    // grpo
    double epsilon = 0.2;
    double beta = 0.0;
    int group_size = 8;
    double std_floor = 1e-8;
    std::string scope = "token";  // token | trajectory
};

namespace detail {

template <typename T>
void read_field(const nlohmann::json& section, const char* key, T& slot) {
    if (section.contains(key)) slot = section[key].get<T>();
}

inline void check_keys(const nlohmann::json& section, const std::string& name,
                       std::initializer_list<const char*> allowed) {
    for (const auto& [key, _] : section.items()) {
        bool ok = false;
        for (const char* a : allowed)
            if (key == a) ok = true;
        if (!ok) throw ConfigError("unknown key " + name + "." + key);
    }
}

}  // namespace detail

// Sections: runtime / gateway / tools / memory / grpo. Unknown sections or
// keys are rejected so typos fail loudly (exit 2 at the CLI).
inline void apply_file(AppConfig& cfg, const std::string& path) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(util::read_file(path));
    } catch (const Error&) {
        throw ConfigError("cannot read config file " + path);
    } catch (const std::exception& e) {
        throw ConfigError(std::string("config file is not valid: ") + e.what());
    }
    if (!doc.is_object()) throw ConfigError("config root must be an object");
    for (const auto& [key, _] : doc.items())
        if (key != "runtime" && key != "gateway" && key != "tools" && key != "memory" &&
            key != "grpo")
            throw ConfigError("unknown section " + key);
    try {
        if (doc.contains("gateway")) {
            const auto& s = doc["gateway"];
            detail::check_keys(s, "gateway", {"backend", "base_url", "api_key", "model"});
            detail::read_field(s, "backend", cfg.backend);
            detail::read_field(s, "base_url", cfg.base_url);
            detail::read_field(s, "api_key", cfg.api_key);
            detail::read_field(s, "model", cfg.model);
        }
        if (doc.contains("tools")) {
            const auto& s = doc["tools"];
            detail::check_keys(s, "tools", {"mode", "fixture", "base_url", "api_key"});
            detail::read_field(s, "mode", cfg.tools_mode);
            detail::read_field(s, "fixture", cfg.tools_fixture);
            detail::read_field(s, "base_url", cfg.search_base_url);
            detail::read_field(s, "api_key", cfg.search_api_key);
        }
        if (doc.contains("memory")) {
            const auto& s = doc["memory"];
            detail::check_keys(s, "memory", {"token_budget", "context_excerpt_budget"});
            detail::read_field(s, "token_budget", cfg.memory_token_budget);
            detail::read_field(s, "context_excerpt_budget", cfg.context_excerpt_budget);
        }
        if (doc.contains("runtime")) {
            const auto& s = doc["runtime"];
            detail::check_keys(s, "runtime",
                               {"max_steps", "max_reparse", "agent_max_iters",
                                "experience_top_k", "experience_dir", "prompts_dir"});
            detail::read_field(s, "max_steps", cfg.max_steps);
            detail::read_field(s, "max_reparse", cfg.max_reparse);
            detail::read_field(s, "agent_max_iters", cfg.agent_max_iters);
            detail::read_field(s, "experience_top_k", cfg.experience_top_k);
            detail::read_field(s, "experience_dir", cfg.experience_dir);
            detail::read_field(s, "prompts_dir", cfg.prompts_dir);
        }
        if (doc.contains("grpo")) {
            const auto& s = doc["grpo"];
            detail::check_keys(s, "grpo",
                               {"epsilon", "beta", "group_size", "std_floor", "scope"});
            detail::read_field(s, "epsilon", cfg.epsilon);
            detail::read_field(s, "beta", cfg.beta);
            detail::read_field(s, "group_size", cfg.group_size);
            detail::read_field(s, "std_floor", cfg.std_floor);
            detail::read_field(s, "scope", cfg.scope);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad value type: ") + e.what());
    }
}

using EnvReader = std::function<const char*(const char*)>;

inline void apply_env(AppConfig& cfg, const EnvReader& getenv_fn = [](const char* name) {
    return std::getenv(name);
}) {
    if (const char* v = getenv_fn("STACKPLANNER_LLM_API_KEY")) cfg.api_key = v;
    if (const char* v = getenv_fn("STACKPLANNER_LLM_BASE_URL")) cfg.base_url = v;
    if (const char* v = getenv_fn("STACKPLANNER_LLM_MODEL")) cfg.model = v;
    if (const char* v = getenv_fn("STACKPLANNER_SEARCH_API_KEY")) cfg.search_api_key = v;
    if (const char* v = getenv_fn("STACKPLANNER_SEARCH_BASE_URL")) cfg.search_base_url = v;
}

// Defaults, then file (if given), then environment. Flags come last, at the
// CLI layer, because only it knows which flags the user actually passed.
inline AppConfig load(const std::string& file_path = "",
                      const EnvReader& getenv_fn = [](const char* name) {
                          return std::getenv(name);
                      }) {
    AppConfig cfg;
    if (!file_path.empty()) apply_file(cfg, file_path);
    apply_env(cfg, getenv_fn);
    return cfg;
}

}  // namespace stackplanner::config
