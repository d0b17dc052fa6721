#include <gtest/gtest.h>

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "stackplanner/gateway.hpp"
#include "stackplanner/util.hpp"

namespace gw = stackplanner::gateway;
using gw::ChatMessage;
using gw::ChatRequest;
using gw::Role;

namespace {

ChatRequest make_request(std::initializer_list<ChatMessage> messages) {
    ChatRequest req;
    req.messages = messages;
    return req;
}

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& name)
        : path((std::filesystem::temp_directory_path() / name).string()) {}
    ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST(RequestDigest, StableForIdenticalRequests) {
    auto req = make_request({{Role::System, "be brief"}, {Role::User, "hello"}});
    EXPECT_EQ(gw::request_digest(req), gw::request_digest(req));
    EXPECT_EQ(gw::request_digest(req).size(), 16u);
}

TEST(RequestDigest, SensitiveToRoleContentAndBoundaries) {
    auto base = make_request({{Role::User, "hello"}});
    auto other_role = make_request({{Role::Assistant, "hello"}});
    auto other_text = make_request({{Role::User, "hello!"}});
    // Two messages whose concatenation equals one message must not collide.
    auto split = make_request({{Role::User, "hel"}, {Role::User, "lo"}});
    EXPECT_NE(gw::request_digest(base), gw::request_digest(other_role));
    EXPECT_NE(gw::request_digest(base), gw::request_digest(other_text));
    EXPECT_NE(gw::request_digest(base), gw::request_digest(split));
}

TEST(ScriptedGateway, PopsResponsesInOrder) {
    gw::ScriptedGateway scripted({"first", "second"});
    auto req = make_request({{Role::User, "q"}});
    EXPECT_EQ(scripted.complete(req).text, "first");
    EXPECT_EQ(scripted.remaining(), 1u);
    EXPECT_EQ(scripted.complete(req).text, "second");
    EXPECT_THROW(scripted.complete(req), gw::ScriptExhausted);
}

TEST(ScriptedGateway, EnqueueAppends) {
    gw::ScriptedGateway scripted;
    scripted.enqueue("only");
    EXPECT_EQ(scripted.complete(make_request({{Role::User, "q"}})).text, "only");
}

TEST(ScriptedGateway, EstimatesUsageFromByteLengths) {
    gw::ScriptedGateway scripted({"12345678"});  // 8 bytes -> 2 tokens
    auto req = make_request({{Role::System, "abcd"}, {Role::User, "efghi"}});  // 1 + 2 tokens
    auto completion = scripted.complete(req);
    EXPECT_EQ(completion.prompt_tokens, 3);
    EXPECT_EQ(completion.completion_tokens, 2);
}

TEST(ScriptedGateway, LoadsScriptFile) {
    TempFile file("sp_script_test.jsonl");
    {
        std::ofstream out(file.path);
        out << R"({"response": "alpha"})" << "\n\n";  // blank lines are skipped
        out << R"({"response": "beta"})" << "\n";
    }
    auto scripted = gw::ScriptedGateway::from_file(file.path);
    EXPECT_EQ(scripted->remaining(), 2u);
    EXPECT_EQ(scripted->complete(make_request({{Role::User, "q"}})).text, "alpha");
    EXPECT_EQ(scripted->complete(make_request({{Role::User, "q"}})).text, "beta");
}

TEST(RecordReplay, RoundTripReturnsIdenticalCompletions) {
    TempFile fixture("sp_fixture_roundtrip.jsonl");
    auto req1 = make_request({{Role::User, "first question"}});
    auto req2 = make_request({{Role::User, "second question"}});

    gw::ScriptedGateway scripted({"answer one", "answer two"});
    {
        gw::RecordingGateway recorder(scripted, fixture.path);
        EXPECT_EQ(recorder.complete(req1).text, "answer one");
        EXPECT_EQ(recorder.complete(req2).text, "answer two");
    }

    gw::ReplayGateway replay(fixture.path, /*strict=*/true);
    auto c1 = replay.complete(req1);
    auto c2 = replay.complete(req2);
    EXPECT_EQ(c1.text, "answer one");
    EXPECT_EQ(c2.text, "answer two");
    // Usage numbers survive the round trip byte-exactly.
    EXPECT_EQ(c1.prompt_tokens, stackplanner::task_memory::estimate_tokens("first question"));
    EXPECT_EQ(c1.completion_tokens, stackplanner::task_memory::estimate_tokens("answer one"));
}

TEST(RecordReplay, FixtureLinesCarryIndexAndDigest) {
    TempFile fixture("sp_fixture_lines.jsonl");
    auto req = make_request({{Role::User, "q"}});
    gw::ScriptedGateway scripted({"a", "b"});
    {
        gw::RecordingGateway recorder(scripted, fixture.path);
        recorder.complete(req);
        recorder.complete(req);
    }
    std::istringstream in(stackplanner::util::read_file(fixture.path));
    std::string line;
    int expected_index = 0;
    while (std::getline(in, line)) {
        auto doc = nlohmann::json::parse(line);
        EXPECT_EQ(doc.at("index").get<int>(), expected_index++);
        EXPECT_EQ(doc.at("request_digest").get<std::string>(), gw::request_digest(req));
        EXPECT_TRUE(doc.contains("response_text"));
        EXPECT_TRUE(doc.contains("prompt_tokens"));
        EXPECT_TRUE(doc.contains("completion_tokens"));
    }
    EXPECT_EQ(expected_index, 2);
}

TEST(ReplayGateway, StrictModeRejectsDivergentRequest) {
    TempFile fixture("sp_fixture_strict.jsonl");
    auto recorded_req = make_request({{Role::User, "original prompt"}});
    gw::ScriptedGateway scripted({"answer"});
    {
        gw::RecordingGateway recorder(scripted, fixture.path);
        recorder.complete(recorded_req);
    }
    gw::ReplayGateway replay(fixture.path, /*strict=*/true);
    auto divergent = make_request({{Role::User, "different prompt"}});
    try {
        replay.complete(divergent);
        FAIL() << "expected ReplayMismatch";
    } catch (const gw::ReplayMismatch& e) {
        EXPECT_NE(std::string(e.what()).find("request 0: digest"), std::string::npos);
    }
}

TEST(ReplayGateway, LenientModeIgnoresDigest) {
    TempFile fixture("sp_fixture_lenient.jsonl");
    gw::ScriptedGateway scripted({"answer"});
    {
        gw::RecordingGateway recorder(scripted, fixture.path);
        recorder.complete(make_request({{Role::User, "original"}}));
    }
    gw::ReplayGateway replay(fixture.path, /*strict=*/false);
    EXPECT_EQ(replay.complete(make_request({{Role::User, "changed"}})).text, "answer");
}

TEST(ReplayGateway, ExhaustionIsAnError) {
    TempFile fixture("sp_fixture_exhaust.jsonl");
    auto req = make_request({{Role::User, "q"}});
    gw::ScriptedGateway scripted({"only"});
    {
        gw::RecordingGateway recorder(scripted, fixture.path);
        recorder.complete(req);
    }
    gw::ReplayGateway replay(fixture.path, true);
    replay.complete(req);
    EXPECT_THROW(replay.complete(req), gw::GatewayError);
}

TEST(RemoteGateway, ParsesCompletionAndUsage) {
    httplib::Server server;
    std::string seen_path, seen_auth, seen_body;
    server.Post("/v1/chat/completions", [&](const httplib::Request& req,
                                            httplib::Response& res) {
        seen_path = req.path;
        seen_auth = req.get_header_value("Authorization");
        seen_body = req.body;
        nlohmann::json reply = {
            {"choices", {{{"message", {{"role", "assistant"}, {"content", "remote says hi"}}}}}},
            {"usage", {{"prompt_tokens", 12}, {"completion_tokens", 5}}}};
        res.set_content(reply.dump(), "application/json");
    });
    int port = server.bind_to_any_port("127.0.0.1");
    std::thread serve([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    gw::RemoteGateway remote("http://127.0.0.1:" + std::to_string(port), "sk-test-key");
    ChatRequest req = make_request({{Role::System, "be brief"}, {Role::User, "hi"}});
    req.model = "demo-model";
    req.seed = 11;
    auto completion = remote.complete(req);
    server.stop();
    serve.join();

    EXPECT_EQ(completion.text, "remote says hi");
    EXPECT_EQ(completion.prompt_tokens, 12);
    EXPECT_EQ(completion.completion_tokens, 5);
    EXPECT_EQ(seen_path, "/v1/chat/completions");
    EXPECT_EQ(seen_auth, "Bearer sk-test-key");
    auto body = nlohmann::json::parse(seen_body);
    EXPECT_EQ(body.at("model"), "demo-model");
    EXPECT_EQ(body.at("seed"), 11);
    EXPECT_EQ(body.at("messages").size(), 2u);
    EXPECT_EQ(body.at("messages")[0].at("role"), "system");
}

TEST(RemoteGateway, DoesNotDoubleVersionedBasePath) {
    httplib::Server server;
    std::string seen_path;
    server.Post("/custom/v1/chat/completions",
                [&](const httplib::Request& req, httplib::Response& res) {
                    seen_path = req.path;
                    nlohmann::json reply = {
                        {"choices", {{{"message", {{"content", "ok"}}}}}}};
                    res.set_content(reply.dump(), "application/json");
                });
    int port = server.bind_to_any_port("127.0.0.1");
    std::thread serve([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    gw::RemoteGateway remote("http://127.0.0.1:" + std::to_string(port) + "/custom/v1/", "");
    auto completion = remote.complete(make_request({{Role::User, "q"}}));
    server.stop();
    serve.join();
    EXPECT_EQ(completion.text, "ok");
    EXPECT_EQ(seen_path, "/custom/v1/chat/completions");
}

TEST(RemoteGateway, RetriesAfterTransientFailures) {
    httplib::Server server;
    std::atomic<int> calls{0};
    server.Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
        int n = ++calls;
        if (n == 1) {
            res.status = 429;
            res.set_content("slow down", "text/plain");
        } else if (n == 2) {
            res.status = 503;
            res.set_content("unavailable", "text/plain");
        } else {
            nlohmann::json reply = {{"choices", {{{"message", {{"content", "third time"}}}}}}};
            res.set_content(reply.dump(), "application/json");
        }
    });
    int port = server.bind_to_any_port("127.0.0.1");
    std::thread serve([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    std::vector<std::string> log_lines;
    gw::RemoteGateway remote("http://127.0.0.1:" + std::to_string(port), "sk-secret",
                             gw::RemoteOptions{4, 10, 2, 60},
                             [&](const std::string& line) { log_lines.push_back(line); });
    auto completion = remote.complete(make_request({{Role::User, "q"}}));
    server.stop();
    serve.join();

    EXPECT_EQ(completion.text, "third time");
    EXPECT_EQ(calls.load(), 3);
    ASSERT_EQ(log_lines.size(), 2u);  // one line per failed attempt
    EXPECT_NE(log_lines[0].find("status 429"), std::string::npos);
    EXPECT_NE(log_lines[1].find("status 503"), std::string::npos);
    // The key never appears in log output; the request digest does.
    for (const auto& line : log_lines) {
        EXPECT_EQ(line.find("sk-secret"), std::string::npos);
        EXPECT_NE(line.find("digest="), std::string::npos);
    }
}

TEST(RemoteGateway, GivesUpAfterMaxAttempts) {
    httplib::Server server;
    std::atomic<int> calls{0};
    server.Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
        ++calls;
        res.status = 500;
        res.set_content("boom", "text/plain");
    });
    int port = server.bind_to_any_port("127.0.0.1");
    std::thread serve([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    gw::RemoteGateway remote("http://127.0.0.1:" + std::to_string(port), "",
                             gw::RemoteOptions{2, 5, 2, 60});
    try {
        remote.complete(make_request({{Role::User, "q"}}));
        FAIL() << "expected GatewayError";
    } catch (const gw::GatewayError& e) {
        EXPECT_NE(std::string(e.what()).find("exhausted 2 attempts"), std::string::npos);
    }
    server.stop();
    serve.join();
    EXPECT_EQ(calls.load(), 2);
}

TEST(RemoteGateway, NonRetryableStatusFailsImmediately) {
    httplib::Server server;
    std::atomic<int> calls{0};
    server.Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
        ++calls;
        res.status = 401;
        res.set_content("bad key", "text/plain");
    });
    int port = server.bind_to_any_port("127.0.0.1");
    std::thread serve([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    gw::RemoteGateway remote("http://127.0.0.1:" + std::to_string(port), "wrong",
                             gw::RemoteOptions{4, 5, 2, 60});
    EXPECT_THROW(remote.complete(make_request({{Role::User, "q"}})), gw::GatewayError);
    server.stop();
    serve.join();
    EXPECT_EQ(calls.load(), 1);
}
