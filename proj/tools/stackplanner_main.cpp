// Command-line front end: run one task, sweep a dataset, manage the
// experience store, replay a recorded trace, or run the policy-optimization
// demo. Exit codes: 0 success, 2 usage/config error, 3 gateway error,
// 4 dataset error.

#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "stackplanner/config.hpp"
#include "stackplanner/evaluation.hpp"
#include "stackplanner/experience.hpp"
#include "stackplanner/gateway.hpp"
#include "stackplanner/grpo.hpp"
#include "stackplanner/prompts.hpp"
#include "stackplanner/runtime.hpp"
#include "stackplanner/tools.hpp"
#include "stackplanner/util.hpp"

namespace sp = stackplanner;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitGateway = 3;
constexpr int kExitDataset = 4;

struct GlobalOptions {
    std::string config_path;
    bool verbose = false;
    int jobs = 1;
};

std::function<void(const std::string&)> make_logger(const GlobalOptions& global) {
    if (!global.verbose) return {};
    return [](const std::string& line) { std::cerr << line << "\n"; };
}

// --tools remote | fixture | fixture:<corpus path>
void apply_tools_flag(sp::config::AppConfig& cfg, const std::string& value) {
    if (value.empty()) return;
    if (value == "remote") {
        cfg.tools_mode = "remote";
    } else if (value == "fixture") {
        cfg.tools_mode = "fixture";
    } else if (value.rfind("fixture:", 0) == 0) {
        cfg.tools_mode = "fixture";
        cfg.tools_fixture = value.substr(8);
    } else {
        throw sp::config::ConfigError("--tools must be remote, fixture, or fixture:<path>");
    }
}

sp::tools::ToolRegistry build_registry(const sp::config::AppConfig& cfg) {
    if (cfg.tools_mode == "remote") {
        auto backend = sp::tools::remote_backend(
            cfg.search_base_url.empty() ? "http://localhost:8080" : cfg.search_base_url,
            cfg.search_api_key);
        return sp::tools::make_registry(backend, backend);
    }
    if (cfg.tools_fixture.empty()) return sp::tools::ToolRegistry{};
    auto index = std::make_shared<sp::tools::FixtureSearchIndex>(cfg.tools_fixture);
    auto backend = sp::tools::fixture_backend(index);
    return sp::tools::make_registry(backend, backend);
}

// Owns whichever gateway stack the flags selected; `active` is what runs.
struct GatewayBundle {
    std::unique_ptr<sp::gateway::Gateway> inner;
    std::unique_ptr<sp::gateway::Gateway> recorder;
    sp::gateway::Gateway* active = nullptr;
    bool deterministic = false;
};

GatewayBundle build_gateway(const sp::config::AppConfig& cfg, const std::string& script_path,
                            const std::string& fixture_path, bool record,
                            const std::string& record_path, const GlobalOptions& global) {
    GatewayBundle bundle;
    if (cfg.backend == "scripted") {
        if (script_path.empty())
            throw sp::config::ConfigError("scripted backend requires --script");
        bundle.inner = sp::gateway::ScriptedGateway::from_file(script_path);
        bundle.deterministic = true;
    } else if (cfg.backend == "replay") {
        if (fixture_path.empty())
            throw sp::config::ConfigError("replay backend requires --fixture");
        bundle.inner = std::make_unique<sp::gateway::ReplayGateway>(fixture_path, true);
        bundle.deterministic = true;
    } else if (cfg.backend == "remote") {
        bundle.inner = std::make_unique<sp::gateway::RemoteGateway>(
            cfg.base_url, cfg.api_key, sp::gateway::RemoteGateway::Options{},
            make_logger(global));
    } else {
        throw sp::config::ConfigError("backend must be remote, replay, or scripted");
    }
    bundle.active = bundle.inner.get();
    if (record) {
        if (record_path.empty())
            throw sp::config::ConfigError("--record requires --trace to name the fixture");
        bundle.recorder =
            std::make_unique<sp::gateway::RecordingGateway>(*bundle.inner, record_path);
        bundle.active = bundle.recorder.get();
    }
    return bundle;
}

sp::runtime::RuntimeConfig runtime_config_from(const sp::config::AppConfig& cfg,
                                               bool deterministic, bool no_revise,
                                               bool no_experience) {
    sp::runtime::RuntimeConfig rc;
    rc.max_reparse = cfg.max_reparse;
    rc.memory_token_budget = cfg.memory_token_budget;
    rc.context_excerpt_budget = cfg.context_excerpt_budget;
    rc.agent_max_iters = cfg.agent_max_iters;
    rc.experience_top_k = cfg.experience_top_k;
    rc.model = cfg.model;
    rc.disable_revise = no_revise;
    rc.disable_experience = no_experience;
    rc.deterministic_time = deterministic;
    return rc;
}

// Everything replay needs to rebuild the identical runtime, next to the trace.
void write_config_sidecar(const std::string& trace_path, const sp::config::AppConfig& cfg,
                          const sp::runtime::RuntimeConfig& rc) {
    nlohmann::ordered_json doc;
    doc["model"] = rc.model;
    doc["memory_token_budget"] = rc.memory_token_budget;
    doc["context_excerpt_budget"] = rc.context_excerpt_budget;
    doc["max_reparse"] = rc.max_reparse;
    doc["agent_max_iters"] = rc.agent_max_iters;
    doc["experience_top_k"] = rc.experience_top_k;
    doc["disable_revise"] = rc.disable_revise;
    doc["disable_experience"] = rc.disable_experience;
    doc["tools_mode"] = cfg.tools_mode;
    doc["tools_fixture"] = cfg.tools_fixture;
    doc["experience_dir"] = cfg.experience_dir;
    doc["prompts_dir"] = cfg.prompts_dir;
    sp::util::write_file(trace_path + ".config.json", doc.dump(2) + "\n");
}

sp::prompts::PromptSet prompts_from(const sp::config::AppConfig& cfg) {
    return cfg.prompts_dir.empty() ? sp::prompts::defaults() : sp::prompts::load(cfg.prompts_dir);
}

// --- run -------------------------------------------------------------------

struct RunArgs {
    std::string query;
    std::string user = "default";
    std::string locale = "en-US";
    int max_steps = 0;  // 0 = config default
    std::string script;
    std::string fixture;
    std::string trace;
    std::string tools_flag;
    bool record = false;
    bool no_experience = false;
    bool no_revise = false;
};

int cmd_run(const sp::config::AppConfig& base_cfg, const RunArgs& args,
            const GlobalOptions& global) {
    sp::config::AppConfig cfg = base_cfg;
    apply_tools_flag(cfg, args.tools_flag);

    GatewayBundle gw = build_gateway(cfg, args.script, args.fixture, args.record,
                                     args.trace + ".gateway.jsonl", global);
    sp::tools::ToolRegistry registry = build_registry(cfg);
    std::optional<sp::experience::ExperienceStore> store;
    if (!args.no_experience) store.emplace(cfg.experience_dir);

    sp::runtime::TaskSpec task;
    task.query = args.query;
    task.user_id = args.user;
    task.locale = args.locale;
    task.max_steps = args.max_steps > 0 ? args.max_steps : cfg.max_steps;

    sp::runtime::RuntimeContext ctx;
    ctx.gw = gw.active;
    ctx.registry = &registry;
    ctx.store = store ? &*store : nullptr;
    ctx.prompt_set = prompts_from(cfg);
    ctx.config = runtime_config_from(cfg, gw.deterministic, args.no_revise, args.no_experience);
    ctx.log = make_logger(global);

    sp::runtime::Runner runner(task, ctx);
    sp::runtime::RunResult result = runner.run();

    if (!args.trace.empty()) {
        sp::runtime::write_trace_files(args.trace, runner.task(), result);
        write_config_sidecar(args.trace, cfg, ctx.config);
    }
    std::cout << "termination: " << sp::runtime::to_string(result.termination) << "\n"
              << "steps: " << result.steps.size() << "\n"
              << "final answer: " << result.final_answer << "\n";
    if (result.termination == sp::runtime::Termination::UnrecoverableError) {
        std::cerr << "error: " << result.error << "\n";
        return kExitGateway;
    }
    return kExitOk;
}

// --- replay ----------------------------------------------------------------

int cmd_replay(const std::string& trace_path, const GlobalOptions& global) {
    const std::string gateway_path = trace_path + ".gateway.jsonl";
    const std::string task_path = trace_path + ".task.json";
    const std::string config_path = trace_path + ".config.json";
    for (const auto& required : {trace_path, gateway_path, task_path, config_path}) {
        if (!std::filesystem::exists(required)) {
            std::cerr << "replay: missing fixture file " << required << "\n";
            return kExitGateway;
        }
    }
    std::string original = sp::util::read_file(trace_path);
    auto task = sp::runtime::task_from_json(
        nlohmann::json::parse(sp::util::read_file(task_path)));
    auto side = nlohmann::json::parse(sp::util::read_file(config_path));

    sp::config::AppConfig cfg;
    cfg.tools_mode = side.value("tools_mode", "fixture");
    cfg.tools_fixture = side.value("tools_fixture", "");
    cfg.experience_dir = side.value("experience_dir", "experience_store");
    cfg.prompts_dir = side.value("prompts_dir", "");

    sp::runtime::RuntimeConfig rc;
    rc.model = side.value("model", "default");
    rc.memory_token_budget = side.value("memory_token_budget", 4096);
    rc.context_excerpt_budget = side.value("context_excerpt_budget", 1024);
    rc.max_reparse = side.value("max_reparse", 2);
    rc.agent_max_iters = side.value("agent_max_iters", 6);
    rc.experience_top_k = side.value("experience_top_k", 3);
    rc.disable_revise = side.value("disable_revise", false);
    rc.disable_experience = side.value("disable_experience", false);
    rc.deterministic_time = true;

    sp::gateway::ReplayGateway gw(gateway_path, true);
    sp::tools::ToolRegistry registry = build_registry(cfg);
    std::optional<sp::experience::ExperienceStore> store;
    if (!rc.disable_experience) store.emplace(cfg.experience_dir);

    sp::runtime::RuntimeContext ctx;
    ctx.gw = &gw;
    ctx.registry = &registry;
    ctx.store = store ? &*store : nullptr;
    ctx.prompt_set = prompts_from(cfg);
    ctx.config = rc;
    ctx.log = make_logger(global);

    sp::runtime::RunResult result = sp::runtime::run_task(task, ctx);
    std::string regenerated = sp::runtime::trace_text(result);
    if (regenerated == original) {
        std::cout << "replay ok: " << result.steps.size() << " steps, byte-identical\n";
        return kExitOk;
    }
    // Report the first differing line, counting from 1.
    std::istringstream a(original), b(regenerated);
    std::string la, lb;
    int line = 0;
    while (true) {
        ++line;
        bool ha = static_cast<bool>(std::getline(a, la));
        bool hb = static_cast<bool>(std::getline(b, lb));
        if (!ha && !hb) break;
        if (!ha || !hb || la != lb) {
            std::cerr << "replay mismatch at line " << line << ":\n"
                      << "  recorded: " << (ha ? la : "<end of file>") << "\n"
                      << "  replayed: " << (hb ? lb : "<end of file>") << "\n";
            return 1;
        }
    }
    std::cerr << "replay mismatch: traces differ\n";
    return 1;
}

// --- eval --------------------------------------------------------------------

struct EvalArgs {
    std::string dataset;
    std::string format = "generic";
    int limit = -1;
    std::string ablation;
    std::string out;
    std::string trace_dir;
    std::string script_dir;
    std::string tools_flag;
    std::string user = "eval";
    int max_steps = 0;
};

int cmd_eval(const sp::config::AppConfig& base_cfg, const EvalArgs& args,
             const GlobalOptions& global) {
    sp::config::AppConfig cfg = base_cfg;
    apply_tools_flag(cfg, args.tools_flag);

    auto format = sp::evaluation::format_from_string(args.format);
    if (!format) throw sp::config::ConfigError("unknown dataset format " + args.format);

    sp::evaluation::EvalConfig eval_cfg;
    if (args.limit >= 0) eval_cfg.limit = args.limit;
    if (!args.ablation.empty()) {
        std::istringstream parts(args.ablation);
        std::string item;
        while (std::getline(parts, item, ',')) {
            auto name = sp::util::trim(item);
            if (name == "no-revise")
                eval_cfg.disable_task_memory_revise = true;
            else if (name == "no-experience")
                eval_cfg.disable_experience_memory = true;
            else if (!name.empty())
                throw sp::config::ConfigError("unknown ablation \"" + std::string(name) +
                                              "\" (expected no-revise, no-experience)");
        }
    }

    std::vector<sp::evaluation::QaExample> examples;
    try {
        examples = sp::evaluation::load_dataset(args.dataset, *format);
    } catch (const sp::evaluation::DatasetParseError&) {
        throw;
    } catch (const sp::Error& e) {
        throw sp::evaluation::DatasetParseError(0, e.what());
    }

    sp::tools::ToolRegistry registry = build_registry(cfg);
    std::optional<sp::experience::ExperienceStore> store;
    if (!eval_cfg.disable_experience_memory) store.emplace(cfg.experience_dir);

    bool deterministic = cfg.backend != "remote";
    sp::evaluation::EvalContext ectx;
    ectx.registry = &registry;
    ectx.store = store ? &*store : nullptr;
    ectx.prompt_set = prompts_from(cfg);
    ectx.runtime_config = runtime_config_from(cfg, deterministic, false, false);
    ectx.trace_dir = args.trace_dir;
    ectx.user_id = args.user;
    ectx.max_steps = args.max_steps > 0 ? args.max_steps : cfg.max_steps;
    ectx.log = make_logger(global);

    if (cfg.backend == "scripted") {
        if (args.script_dir.empty())
            throw sp::config::ConfigError("scripted backend requires --script-dir for eval");
        std::string dir = args.script_dir;
        ectx.gateway_factory = [dir](const sp::evaluation::QaExample& ex) {
            return std::unique_ptr<sp::gateway::Gateway>(
                sp::gateway::ScriptedGateway::from_file(dir + "/" + ex.id + ".jsonl"));
        };
    } else if (cfg.backend == "remote") {
        auto cfg_copy = cfg;
        auto logger = make_logger(global);
        ectx.gateway_factory = [cfg_copy, logger](const sp::evaluation::QaExample&) {
            return std::unique_ptr<sp::gateway::Gateway>(
                std::make_unique<sp::gateway::RemoteGateway>(
                    cfg_copy.base_url, cfg_copy.api_key,
                    sp::gateway::RemoteGateway::Options{}, logger));
        };
    } else {
        throw sp::config::ConfigError("eval supports scripted or remote backends");
    }

    if (!args.trace_dir.empty()) std::filesystem::create_directories(args.trace_dir);
    auto report = sp::evaluation::run_eval(examples, ectx, eval_cfg, global.jobs);

    if (!args.trace_dir.empty())
        for (const auto& row : report.rows)
            write_config_sidecar(args.trace_dir + "/" + row.id + ".trace.jsonl", cfg,
                                 ectx.runtime_config);
    if (!args.out.empty())
        sp::util::write_file(args.out, sp::evaluation::report_to_json(report).dump(2) + "\n");
    std::cout << "examples: " << report.rows.size() << "\n"
              << "mean_f1: " << report.mean_f1 << "\n"
              << "mean_em: " << report.mean_em << "\n"
              << "finished_rate: " << report.finished_rate << "\n";
    return kExitOk;
}

// --- experience ----------------------------------------------------------------

int cmd_experience_show(const sp::config::AppConfig& cfg, const std::string& user) {
    sp::experience::ExperienceStore store(cfg.experience_dir);
    std::cout << sp::experience::to_json(store.get(user)).dump(2) << "\n";
    return kExitOk;
}

int cmd_experience_clear(const sp::config::AppConfig& cfg, const std::string& user) {
    sp::experience::ExperienceStore store(cfg.experience_dir);
    store.clear(user);
    std::cout << "cleared experience for user " << user << "\n";
    return kExitOk;
}

int cmd_experience_curate(const sp::config::AppConfig& base_cfg, const std::string& user,
                          const std::string& trace, const std::string& script,
                          const GlobalOptions& global) {
    sp::config::AppConfig cfg = base_cfg;
    std::string stack_path = trace + ".stack.json";
    if (!std::filesystem::exists(stack_path)) {
        std::cerr << "curate: missing stack snapshot " << stack_path << "\n";
        return kExitGateway;
    }
    auto stack = sp::task_memory::MemoryStack::from_json(
        nlohmann::json::parse(sp::util::read_file(stack_path)));

    GatewayBundle gw = build_gateway(cfg, script, "", false, "", global);
    sp::experience::ExperienceStore store(cfg.experience_dir);
    auto existing = store.get(user);
    auto outcome = sp::experience::curate(stack, existing, sp::util::now_iso8601(), *gw.active,
                                          prompts_from(cfg).experience_curator, cfg.model, 2,
                                          make_logger(global));
    if (outcome.parse_failed) {
        std::cerr << "curation produced no valid document; store unchanged\n";
        return 1;
    }
    store.put(outcome.record);
    std::cout << "curated experience for user " << user << " ("
              << outcome.record.user_profiles.size() << " profiles, "
              << outcome.record.semantic_memory.size() << " facts, "
              << outcome.record.procedural_memory.size() << " procedures)\n";
    return kExitOk;
}

// --- grpo-demo -------------------------------------------------------------------

struct GrpoArgs {
    uint64_t seed = 7;
    int iterations = 300;
    int group_size = 8;
    double epsilon = 0.2;
    double beta = 0.0;
    std::string scope = "token";
    std::string out;
};

int cmd_grpo_demo(const GrpoArgs& args) {
    sp::grpo::GrpoConfig cfg;
    cfg.epsilon = args.epsilon;
    cfg.beta = args.beta;
    cfg.group_size = args.group_size;
    if (args.scope == "token")
        cfg.reward_stat_scope = sp::grpo::RewardStatScope::TokenMultiset;
    else if (args.scope == "trajectory")
        cfg.reward_stat_scope = sp::grpo::RewardStatScope::PerTrajectory;
    else
        throw sp::config::ConfigError("--scope must be token or trajectory");

    auto result = sp::grpo::train_toy(cfg, args.seed, args.iterations);
    if (!args.out.empty())
        sp::util::write_file(args.out, sp::grpo::curve_to_csv(result.curve));

    double final_reward = result.curve.empty() ? 0.0 : result.curve.back();
    double tail = 0.0;
    size_t tail_n = std::min<size_t>(10, result.curve.size());
    for (size_t i = result.curve.size() - tail_n; i < result.curve.size(); ++i)
        tail += result.curve[i];
    if (tail_n > 0) tail /= static_cast<double>(tail_n);
    std::cout << "iterations: " << result.curve.size() << "\n"
              << "final mean reward: " << final_reward << "\n"
              << "last-10 mean reward: " << tail << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"stackplanner: hierarchical multi-agent task runner"};
    app.require_subcommand(1);

    GlobalOptions global;
    app.add_option("--config", global.config_path, "config file (JSON)");
    app.add_flag("--verbose", global.verbose, "log progress to stderr");
    app.add_option("--jobs", global.jobs, "parallel examples for eval")->default_val(1);

    // run
    auto* run_cmd = app.add_subcommand("run", "run one task");
    RunArgs run_args;
    run_cmd->add_option("--query", run_args.query, "task query")->required();
    run_cmd->add_option("--user", run_args.user, "user id for experience memory");
    run_cmd->add_option("--locale", run_args.locale, "user locale tag");
    run_cmd->add_option("--max-steps", run_args.max_steps, "coordinator step cap");
    std::string run_backend;
    run_cmd->add_option("--backend", run_backend, "remote | replay | scripted");
    run_cmd->add_option("--script", run_args.script, "scripted responses (JSONL)");
    run_cmd->add_option("--fixture", run_args.fixture, "replay fixture (JSONL)");
    run_cmd->add_option("--trace", run_args.trace, "trace output path");
    run_cmd->add_option("--tools", run_args.tools_flag, "remote | fixture:<corpus>");
    run_cmd->add_flag("--record", run_args.record, "record gateway fixture beside trace");
    run_cmd->add_flag("--no-experience", run_args.no_experience, "disable experience memory");
    run_cmd->add_flag("--no-revise", run_args.no_revise, "disable reflect/summarize");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "run a dataset sweep");
    EvalArgs eval_args;
    eval_cmd->add_option("--dataset", eval_args.dataset, "dataset file (JSONL)")->required();
    eval_cmd->add_option("--format", eval_args.format,
                         "generic | twowiki | musique | gaia | frames");
    eval_cmd->add_option("--limit", eval_args.limit, "evaluate at most N examples");
    eval_cmd->add_option("--ablation", eval_args.ablation,
                         "comma list: no-revise, no-experience");
    eval_cmd->add_option("--out", eval_args.out, "report output path (JSON)");
    eval_cmd->add_option("--trace-dir", eval_args.trace_dir, "per-example trace directory");
    eval_cmd->add_option("--script-dir", eval_args.script_dir,
                         "per-example scripted responses: <dir>/<id>.jsonl");
    eval_cmd->add_option("--tools", eval_args.tools_flag, "remote | fixture:<corpus>");
    eval_cmd->add_option("--user", eval_args.user, "user id for experience memory");
    eval_cmd->add_option("--max-steps", eval_args.max_steps, "coordinator step cap");
    std::string eval_backend;
    eval_cmd->add_option("--backend", eval_backend, "remote | scripted");

    // experience
    auto* exp_cmd = app.add_subcommand("experience", "inspect or edit the experience store");
    exp_cmd->require_subcommand(1);
    std::string exp_user, exp_trace, exp_script, exp_backend;
    auto* exp_show = exp_cmd->add_subcommand("show", "print one user's record");
    exp_show->add_option("--user", exp_user, "user id")->required();
    auto* exp_clear = exp_cmd->add_subcommand("clear", "delete one user's record");
    exp_clear->add_option("--user", exp_user, "user id")->required();
    auto* exp_curate = exp_cmd->add_subcommand("curate", "bootstrap from a trace");
    exp_curate->add_option("--user", exp_user, "user id")->required();
    exp_curate->add_option("--trace", exp_trace, "trace path (uses its stack snapshot)")
        ->required();
    exp_curate->add_option("--script", exp_script, "scripted curator responses (JSONL)");
    exp_curate->add_option("--backend", exp_backend, "remote | scripted");

    // replay
    auto* replay_cmd = app.add_subcommand("replay", "re-execute a recorded trace");
    std::string replay_trace;
    replay_cmd->add_option("trace", replay_trace, "trace path")->required();

    // grpo-demo
    auto* grpo_cmd = app.add_subcommand("grpo-demo", "toy policy-optimization demo");
    GrpoArgs grpo_args;
    grpo_cmd->add_option("--seed", grpo_args.seed, "RNG seed");
    grpo_cmd->add_option("--iterations", grpo_args.iterations, "training iterations");
    grpo_cmd->add_option("--group-size", grpo_args.group_size, "rollouts per group");
    grpo_cmd->add_option("--epsilon", grpo_args.epsilon, "clip width");
    grpo_cmd->add_option("--beta", grpo_args.beta, "KL coefficient");
    grpo_cmd->add_option("--scope", grpo_args.scope, "token | trajectory");
    grpo_cmd->add_option("--out", grpo_args.out, "learning-curve CSV path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        sp::config::AppConfig cfg = sp::config::load(global.config_path);
        if (run_cmd->parsed()) {
            if (!run_backend.empty()) cfg.backend = run_backend;
            return cmd_run(cfg, run_args, global);
        }
        if (eval_cmd->parsed()) {
            if (!eval_backend.empty()) cfg.backend = eval_backend;
            return cmd_eval(cfg, eval_args, global);
        }
        if (exp_cmd->parsed()) {
            if (!exp_backend.empty()) cfg.backend = exp_backend;
            if (exp_show->parsed()) return cmd_experience_show(cfg, exp_user);
            if (exp_clear->parsed()) return cmd_experience_clear(cfg, exp_user);
            if (exp_curate->parsed())
                return cmd_experience_curate(cfg, exp_user, exp_trace, exp_script, global);
        }
        if (replay_cmd->parsed()) return cmd_replay(replay_trace, global);
        if (grpo_cmd->parsed()) return cmd_grpo_demo(grpo_args);
    } catch (const sp::config::ConfigError& e) {
        std::cerr << e.what() << "\n";
        return kExitUsage;
    } catch (const sp::evaluation::DatasetParseError& e) {
        std::cerr << e.what() << "\n";
        return kExitDataset;
    } catch (const sp::gateway::GatewayError& e) {
        std::cerr << e.what() << "\n";
        return kExitGateway;
    } catch (const sp::gateway::ReplayMismatch& e) {
        std::cerr << e.what() << "\n";
        return kExitGateway;
    } catch (const sp::gateway::ScriptExhausted& e) {
        std::cerr << e.what() << "\n";
        return kExitGateway;
    } catch (const sp::Error& e) {
        std::cerr << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "unexpected error: " << e.what() << "\n";
        return 1;
    }
    return kExitUsage;
}
