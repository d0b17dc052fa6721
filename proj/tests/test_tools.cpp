#include <gtest/gtest.h>

#include <atomic>
#include <chrono>
#include <memory>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "stackplanner/tools.hpp"

namespace tools = stackplanner::tools;
using tools::FixtureSearchIndex;
using tools::SearchHit;
using tools::ToolCall;

namespace {

const char* kWikiCorpus = "tests/fixtures/wiki_corpus.jsonl";
const char* kWebCorpus = "tests/fixtures/web_corpus.jsonl";

std::shared_ptr<FixtureSearchIndex> wiki_index() {
    static auto index = std::make_shared<FixtureSearchIndex>(kWikiCorpus);
    return index;
}

std::shared_ptr<FixtureSearchIndex> web_index() {
    static auto index = std::make_shared<FixtureSearchIndex>(kWebCorpus);
    return index;
}

}  // namespace

TEST(FixtureSearch, LoadsCorpus) {
    EXPECT_EQ(wiki_index()->size(), 8u);
    EXPECT_EQ(web_index()->size(), 6u);
}

TEST(FixtureSearch, CerebrospinalPressureQueryRanksHydrocephalusFirst) {
    auto hits = wiki_index()->search("Cerebrospinal fluid pressure", 3);
    ASSERT_EQ(hits.size(), 3u);
    EXPECT_EQ(hits[0].title, "Hydrocephalus");
    EXPECT_EQ(hits[1].title, "Intracranial pressure");
    EXPECT_EQ(hits[2].title, "Lumbar puncture");
    // Scores frozen from a separate reference implementation of tf*ln((N+1)/df).
    EXPECT_NEAR(hits[0].score, 9.3121464531094258, 1e-12);
    EXPECT_NEAR(hits[1].score, 4.6300152259852059, 1e-12);
    EXPECT_NEAR(hits[2].score, 4.1067670822206583, 1e-12);
}

TEST(FixtureSearch, WebOpeningPressureQueryRanksReferencePageFirst) {
    auto hits = web_index()->search("Lumbar puncture, cerebrospinal fluid pressure", 2);
    ASSERT_EQ(hits.size(), 2u);
    EXPECT_EQ(hits[0].title, "Normal Cerebrospinal Fluid Opening Pressure");
    EXPECT_EQ(hits[1].title, "Lumbar Puncture: Technique and Aftercare");
    EXPECT_NEAR(hits[0].score, 8.7085446751848039, 1e-12);
    EXPECT_NEAR(hits[1].score, 5.5706676619168949, 1e-12);
}

TEST(FixtureSearch, ZeroScoreDocumentsAreNotReturned) {
    auto hits = wiki_index()->search("aqueductal stenosis obstructive hydrocephalus", 5);
    ASSERT_EQ(hits.size(), 2u);  // only two articles share any query term
    EXPECT_EQ(hits[0].title, "Aqueduct of Sylvius");
    EXPECT_EQ(hits[1].title, "Hydrocephalus");
    EXPECT_NEAR(hits[0].score, 8.0957511287849329, 1e-12);
    EXPECT_NEAR(hits[1].score, 3.0081547935525483, 1e-12);
}

TEST(FixtureSearch, KLargerThanCorpusReturnsAllWithoutPadding) {
    auto hits = web_index()->search("acetazolamide dose", 50);
    ASSERT_EQ(hits.size(), 1u);
    EXPECT_EQ(hits[0].title, "Acetazolamide Dosing Guide");
    EXPECT_NEAR(hits[0].score, 3.8918202981106265, 1e-12);
}

TEST(FixtureSearch, QueryTokenizationIgnoresCaseAndPunctuation) {
    auto base = wiki_index()->search("cerebrospinal fluid pressure", 3);
    auto noisy = wiki_index()->search("CEREBROSPINAL, fluid; PRESSURE!!", 3);
    ASSERT_EQ(base.size(), noisy.size());
    for (size_t i = 0; i < base.size(); ++i) {
        EXPECT_EQ(base[i].title, noisy[i].title);
        EXPECT_DOUBLE_EQ(base[i].score, noisy[i].score);
    }
}

TEST(FixtureSearch, InvalidArgumentsThrow) {
    EXPECT_THROW(wiki_index()->search("pressure", 0), tools::InvalidK);
    EXPECT_THROW(wiki_index()->search("pressure", -2), tools::InvalidK);
    EXPECT_THROW(wiki_index()->search("", 3), tools::EmptyQuery);
    EXPECT_THROW(wiki_index()->search(" ,;! ", 3), tools::EmptyQuery);
}

TEST(SerializeHits, SingleHitUsesDictShape) {
    std::vector<SearchHit> hits{{"Hydrocephalus", "Raised pressure in the skull.", {}, 1.0}};
    EXPECT_EQ(tools::serialize_hits(hits),
              "Observation: {'title': 'Hydrocephalus', 'text': 'Raised pressure in the skull.'}");
}

TEST(SerializeHits, MultipleHitsUseListShape) {
    std::vector<SearchHit> hits{{"A", "one", {}, 2.0}, {"B", "two", {}, 1.0}};
    EXPECT_EQ(tools::serialize_hits(hits),
              "Observation: [{'title': 'A', 'text': 'one'}, {'title': 'B', 'text': 'two'}]");
}

TEST(SerializeHits, EmptyHitsSaySo) {
    EXPECT_EQ(tools::serialize_hits({}), "no results");
}

TEST(SerializeHits, EscapesQuotesAndBackslashes) {
    std::vector<SearchHit> hits{{"It's a title", "path\\to 'file'", {}, 1.0}};
    EXPECT_EQ(tools::serialize_hits(hits),
              "Observation: {'title': 'It\\'s a title', 'text': 'path\\\\to \\'file\\''}");
}

TEST(ToolRegistry, DispatchFormatsObservations) {
    auto reg = tools::make_registry(tools::fixture_backend(wiki_index()),
                                    tools::fixture_backend(web_index()));
    std::string obs = reg.dispatch({"wiki_search", {{"query", "Cerebrospinal fluid pressure"},
                                                    {"k", "1"}}});
    EXPECT_EQ(obs.rfind("Observation: {'title': 'Hydrocephalus'", 0), 0u);
}

TEST(ToolRegistry, RegistersBothToolsAndAliases) {
    auto reg = tools::make_registry(tools::fixture_backend(wiki_index()),
                                    tools::fixture_backend(web_index()));
    EXPECT_TRUE(reg.has("wiki_search"));
    EXPECT_TRUE(reg.has("wiki"));
    EXPECT_TRUE(reg.has("web_search"));
    EXPECT_TRUE(reg.has("web"));
    EXPECT_FALSE(reg.has("calculator"));
}

TEST(ToolRegistry, DispatchNeverThrows) {
    auto reg = tools::make_registry(tools::fixture_backend(wiki_index()),
                                    tools::fixture_backend(web_index()));
    EXPECT_EQ(reg.dispatch({"calculator", {{"query", "2+2"}}}), "tool error: unknown tool");
    EXPECT_EQ(reg.dispatch({"wiki_search", {{"query", ""}}}), "tool error: search: empty query");
    EXPECT_EQ(reg.dispatch({"wiki_search", {{"query", "x"}, {"k", "0"}}}),
              "tool error: search: k must be positive");
    EXPECT_EQ(reg.dispatch({"wiki_search", {{"query", "x"}, {"k", "lots"}}}),
              "tool error: invalid k");
}

TEST(ToolRegistry, DispatchDefaultsKToThree) {
    auto reg = tools::make_registry(tools::fixture_backend(wiki_index()),
                                    tools::fixture_backend(web_index()));
    std::string obs = reg.dispatch({"wiki_search", {{"query", "Cerebrospinal fluid pressure"}}});
    // Three hits means the list shape with exactly three dicts.
    EXPECT_EQ(obs.rfind("Observation: [", 0), 0u);
    size_t count = 0;
    for (size_t pos = 0; (pos = obs.find("{'title':", pos)) != std::string::npos; ++pos) ++count;
    EXPECT_EQ(count, 3u);
}

TEST(RemoteBackend, PostsQueryAndParsesResults) {
    httplib::Server server;
    std::string seen_auth, seen_body;
    server.Post("/api/search", [&](const httplib::Request& req, httplib::Response& res) {
        seen_auth = req.get_header_value("Authorization");
        seen_body = req.body;
        nlohmann::json results = {
            {"results",
             {{{"title", "Remote Doc"}, {"text", "remote text"}, {"url", "http://x"}},
              {{"title", "Second"}, {"text", "more"}}}}};
        res.set_content(results.dump(), "application/json");
    });
    int port = server.bind_to_any_port("127.0.0.1");
    std::thread serve([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    auto backend = tools::remote_backend("http://127.0.0.1:" + std::to_string(port) + "/api",
                                         "secret-key");
    auto hits = backend("pressure range", 2);
    server.stop();
    serve.join();

    ASSERT_EQ(hits.size(), 2u);
    EXPECT_EQ(hits[0].title, "Remote Doc");
    EXPECT_EQ(hits[0].text, "remote text");
    ASSERT_TRUE(hits[0].url.has_value());
    EXPECT_EQ(*hits[0].url, "http://x");
    EXPECT_FALSE(hits[1].url.has_value());
    EXPECT_EQ(seen_auth, "Bearer secret-key");
    auto body = nlohmann::json::parse(seen_body);
    EXPECT_EQ(body.at("query"), "pressure range");
    EXPECT_EQ(body.at("k"), 2);
}

TEST(RemoteBackend, CapsResultsAtK) {
    httplib::Server server;
    server.Post("/search", [&](const httplib::Request&, httplib::Response& res) {
        nlohmann::json results = {{"results", nlohmann::json::array()}};
        for (int i = 0; i < 5; ++i)
            results["results"].push_back({{"title", "t" + std::to_string(i)}, {"text", "x"}});
        res.set_content(results.dump(), "application/json");
    });
    int port = server.bind_to_any_port("127.0.0.1");
    std::thread serve([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    auto backend = tools::remote_backend("http://127.0.0.1:" + std::to_string(port), "");
    auto hits = backend("q", 2);
    server.stop();
    serve.join();
    EXPECT_EQ(hits.size(), 2u);
}

TEST(RemoteBackend, SlowServerRaisesToolTimeout) {
    httplib::Server server;
    server.Post("/search", [&](const httplib::Request&, httplib::Response& res) {
        std::this_thread::sleep_for(std::chrono::milliseconds(1600));
        res.set_content("{\"results\": []}", "application/json");
    });
    int port = server.bind_to_any_port("127.0.0.1");
    std::thread serve([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    auto backend = tools::remote_backend("http://127.0.0.1:" + std::to_string(port), "",
                                         /*timeout_seconds=*/1);
    EXPECT_THROW(backend("q", 1), tools::ToolTimeout);
    server.stop();
    serve.join();
}
