#include <gtest/gtest.h>

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "stackplanner/experience.hpp"
#include "stackplanner/prompts.hpp"

namespace xp = stackplanner::experience;
namespace mem = stackplanner::task_memory;
using xp::Component;
using xp::ExperienceRecord;
using xp::ProcedureSop;
using nlohmann::json;

namespace {

json valid_content() {
    return json::parse(R"({
        "user_profiles": ["prefers concise answers"],
        "semantic_memory": ["normal csf opening pressure is 6 to 25 cmH2O"],
        "procedural_memory": [
            {"scenario": "multi-hop question",
             "procedure": "decompose, search each hop, then delegate a report",
             "rationale": "isolated hops keep the context small"}
        ]
    })");
}

ExperienceRecord sample_record(const std::string& user = "u1") {
    ExperienceRecord r = xp::validate_record(valid_content());
    r.user_id = user;
    r.updated_at = "2026-08-13T00:00:00Z";
    return r;
}

struct TempDir {
    std::string path;
    explicit TempDir(const std::string& name)
        : path((std::filesystem::temp_directory_path() / name).string()) {
        std::filesystem::remove_all(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
};

}  // namespace

TEST(ExperienceSchema, ValidDocumentParses) {
    auto record = xp::validate_record(valid_content());
    ASSERT_EQ(record.user_profiles.size(), 1u);
    ASSERT_EQ(record.semantic_memory.size(), 1u);
    ASSERT_EQ(record.procedural_memory.size(), 1u);
    EXPECT_EQ(record.procedural_memory[0].scenario, "multi-hop question");
}

TEST(ExperienceSchema, MissingTopLevelKeyThrows) {
    auto doc = valid_content();
    doc.erase("semantic_memory");
    try {
        xp::validate_record(doc);
        FAIL() << "expected MissingKey";
    } catch (const xp::MissingKey& e) {
        EXPECT_STREQ(e.what(), "experience schema: missing key semantic_memory");
    }
}

TEST(ExperienceSchema, ExtraTopLevelKeyThrows) {
    auto doc = valid_content();
    doc["episodic_memory"] = json::array();
    EXPECT_THROW(xp::validate_record(doc), xp::ExtraKey);
}

TEST(ExperienceSchema, EmptyStringElementThrows) {
    auto doc = valid_content();
    doc["user_profiles"].push_back("");
    EXPECT_THROW(xp::validate_record(doc), xp::EmptyElement);
}

TEST(ExperienceSchema, NonListComponentThrows) {
    auto doc = valid_content();
    doc["semantic_memory"] = "just a string";
    EXPECT_THROW(xp::validate_record(doc), xp::EmptyElement);
}

TEST(ExperienceSchema, SopKeySetIsExact) {
    auto missing = valid_content();
    missing["procedural_memory"][0].erase("rationale");
    EXPECT_THROW(xp::validate_record(missing), xp::MissingKey);

    auto extra = valid_content();
    extra["procedural_memory"][0]["confidence"] = 0.9;
    EXPECT_THROW(xp::validate_record(extra), xp::ExtraKey);

    auto empty_field = valid_content();
    empty_field["procedural_memory"][0]["procedure"] = "";
    EXPECT_THROW(xp::validate_record(empty_field), xp::EmptyElement);
}

TEST(ExperienceSchema, ExactDuplicatesCollapseKeepingFirst) {
    auto doc = valid_content();
    doc["semantic_memory"] = {"fact one", "fact two", "fact one"};
    doc["procedural_memory"].push_back(doc["procedural_memory"][0]);
    auto record = xp::validate_record(doc);
    ASSERT_EQ(record.semantic_memory.size(), 2u);
    EXPECT_EQ(record.semantic_memory[0], "fact one");
    EXPECT_EQ(record.semantic_memory[1], "fact two");
    EXPECT_EQ(record.procedural_memory.size(), 1u);
}

TEST(ExperienceSchema, NonObjectDocumentThrows) {
    EXPECT_THROW(xp::validate_record(json::array()), xp::MissingKey);
    EXPECT_THROW(xp::validate_record(json("text")), xp::MissingKey);
}

TEST(ExperienceMerge, AppendsFreshAfterExistingAndDedups) {
    ExperienceRecord existing = sample_record();
    ExperienceRecord fresh;
    fresh.user_id = "u1";
    fresh.user_profiles = {"prefers concise answers", "works in en-US locale"};
    fresh.semantic_memory = {"papilledema signals raised pressure"};

    auto merged = xp::merge(existing, fresh);
    ASSERT_EQ(merged.user_profiles.size(), 2u);
    EXPECT_EQ(merged.user_profiles[0], "prefers concise answers");
    EXPECT_EQ(merged.user_profiles[1], "works in en-US locale");
    ASSERT_EQ(merged.semantic_memory.size(), 2u);
    EXPECT_EQ(merged.semantic_memory[1], "papilledema signals raised pressure");
}

TEST(ExperienceMerge, IsIdempotent) {
    ExperienceRecord existing = sample_record();
    ExperienceRecord fresh;
    fresh.user_id = "u1";
    fresh.semantic_memory = {"new fact"};
    auto once = xp::merge(existing, fresh);
    auto twice = xp::merge(once, fresh);
    EXPECT_EQ(once.user_profiles, twice.user_profiles);
    EXPECT_EQ(once.semantic_memory, twice.semantic_memory);
    EXPECT_EQ(once.procedural_memory.size(), twice.procedural_memory.size());
}

TEST(ExperienceMerge, RejectsUserMismatch) {
    auto a = sample_record("alice");
    auto b = sample_record("bob");
    EXPECT_THROW(xp::merge(a, b), xp::UserMismatch);
}

TEST(ExperienceStore, GetMissingUserReturnsEmptyRecord) {
    TempDir dir("sp_store_missing");
    xp::ExperienceStore store(dir.path);
    auto record = store.get("nobody");
    EXPECT_EQ(record.user_id, "nobody");
    EXPECT_TRUE(record.empty());
}

TEST(ExperienceStore, PutGetRoundTrip) {
    TempDir dir("sp_store_roundtrip");
    xp::ExperienceStore store(dir.path);
    auto record = sample_record("carol");
    store.put(record);
    auto loaded = store.get("carol");
    EXPECT_EQ(loaded.user_id, "carol");
    EXPECT_EQ(loaded.updated_at, record.updated_at);
    EXPECT_EQ(loaded.user_profiles, record.user_profiles);
    EXPECT_EQ(loaded.semantic_memory, record.semantic_memory);
    ASSERT_EQ(loaded.procedural_memory.size(), record.procedural_memory.size());
    EXPECT_EQ(loaded.procedural_memory[0], record.procedural_memory[0]);
}

TEST(ExperienceStore, ClearRemovesUser) {
    TempDir dir("sp_store_clear");
    xp::ExperienceStore store(dir.path);
    store.put(sample_record("dave"));
    store.clear("dave");
    EXPECT_TRUE(store.get("dave").empty());
}

TEST(ExperienceStore, UserIdsAreSorted) {
    TempDir dir("sp_store_ids");
    xp::ExperienceStore store(dir.path);
    store.put(sample_record("zoe"));
    store.put(sample_record("amy"));
    auto ids = store.user_ids();
    ASSERT_EQ(ids.size(), 2u);
    EXPECT_EQ(ids[0], "amy");
    EXPECT_EQ(ids[1], "zoe");
}

TEST(ExperienceStore, SanitizesUserIdInPath) {
    TempDir dir("sp_store_sanitize");
    xp::ExperienceStore store(dir.path);
    store.put(sample_record("we/ird:user"));
    EXPECT_TRUE(std::filesystem::exists(dir.path + "/we_ird_user.json"));
    EXPECT_FALSE(store.get("we/ird:user").empty());
}

TEST(ExperienceStore, LoadRejectsForeignSchema) {
    TempDir dir("sp_store_schema");
    std::filesystem::create_directories(dir.path);
    auto write = [&](const std::string& name, const std::string& text) {
        std::ofstream(dir.path + "/" + name) << text;
        return dir.path + "/" + name;
    };
    auto extra = write("extra.json", R"({"user_id": "x", "updated_at": "t",
        "user_profiles": [], "semantic_memory": [], "procedural_memory": [],
        "notes": "nope"})");
    EXPECT_THROW(xp::ExperienceStore::load_file(extra), xp::SchemaError);

    auto missing = write("missing.json", R"({"user_id": "x",
        "user_profiles": [], "semantic_memory": [], "procedural_memory": []})");
    EXPECT_THROW(xp::ExperienceStore::load_file(missing), xp::SchemaError);

    auto garbage = write("garbage.json", "this is not json");
    EXPECT_THROW(xp::ExperienceStore::load_file(garbage), xp::SchemaError);
}

TEST(ExperienceRetrieve, ScoresByTokenOverlap) {
    TempDir dir("sp_retrieve_scores");
    xp::ExperienceStore store(dir.path);
    ExperienceRecord record;
    record.user_id = "u";
    record.updated_at = "t";
    record.user_profiles = {"prefers concise answers"};
    record.semantic_memory = {"cerebrospinal fluid pressure normal range 6 to 25 cmH2O",
                              "fluid dynamics"};
    store.put(record);

    auto out = xp::retrieve(store, {"find cerebrospinal fluid pressure", "u", 5});
    ASSERT_EQ(out.items.size(), 2u);  // the profile shares no token and is excluded
    EXPECT_EQ(out.items[0].content, "cerebrospinal fluid pressure normal range 6 to 25 cmH2O");
    EXPECT_NEAR(out.items[0].score, 3.0 / 10.0, 1e-15);  // |inter|=3, |union|=10
    EXPECT_EQ(out.items[1].content, "fluid dynamics");
    EXPECT_NEAR(out.items[1].score, 1.0 / 5.0, 1e-15);
}

TEST(ExperienceRetrieve, TieBreaksTowardLaterInsertionThenComponent) {
    TempDir dir("sp_retrieve_ties");
    xp::ExperienceStore store(dir.path);
    ExperienceRecord record;
    record.user_id = "u";
    record.updated_at = "t";
    // Both semantic entries score 1/5 against the query; the later one wins.
    record.semantic_memory = {"pressure basics", "fluid basics"};
    store.put(record);
    auto out = xp::retrieve(store, {"find cerebrospinal fluid pressure", "u", 2});
    ASSERT_EQ(out.items.size(), 2u);
    EXPECT_EQ(out.items[0].content, "fluid basics");
    EXPECT_EQ(out.items[1].content, "pressure basics");

    // Equal score and index: profile outranks semantic.
    ExperienceRecord cross;
    cross.user_id = "v";
    cross.updated_at = "t";
    cross.user_profiles = {"pressure notes"};
    cross.semantic_memory = {"fluid notes"};
    store.put(cross);
    auto out2 = xp::retrieve(store, {"find cerebrospinal fluid pressure", "v", 2});
    ASSERT_EQ(out2.items.size(), 2u);
    EXPECT_EQ(out2.items[0].component, Component::Profile);
    EXPECT_EQ(out2.items[1].component, Component::Semantic);
}

TEST(ExperienceRetrieve, SopsMatchOnAssembledContent) {
    TempDir dir("sp_retrieve_sop");
    xp::ExperienceStore store(dir.path);
    ExperienceRecord record;
    record.user_id = "u";
    record.updated_at = "t";
    record.procedural_memory = {{"pressure question", "search then report", "works well"}};
    store.put(record);
    auto out = xp::retrieve(store, {"a pressure question", "u", 3});
    ASSERT_EQ(out.items.size(), 1u);
    EXPECT_EQ(out.items[0].component, Component::Procedural);
    EXPECT_EQ(out.items[0].content,
              "scenario: pressure question; procedure: search then report; "
              "rationale: works well");
}

TEST(ExperienceRetrieve, TopKLimitsResults) {
    TempDir dir("sp_retrieve_topk");
    xp::ExperienceStore store(dir.path);
    ExperienceRecord record;
    record.user_id = "u";
    record.updated_at = "t";
    for (int i = 0; i < 6; ++i)
        record.semantic_memory.push_back("pressure fact " + std::to_string(i));
    store.put(record);
    auto out = xp::retrieve(store, {"pressure", "u", 3});
    EXPECT_EQ(out.items.size(), 3u);
}

TEST(ExperienceInject, PushesSingleEntryAfterTaskStatement) {
    mem::MemoryStack stack(4096);
    stack.push(mem::EntryKind::TaskSpecEntry, "the task", 0, "user");
    xp::RetrievedExperience retrieved;
    retrieved.items = {{Component::Profile, "prefers concise answers", 0.5},
                       {Component::Semantic, "a useful fact", 0.25}};
    xp::inject(stack, retrieved, 0);
    ASSERT_EQ(stack.size(), 2u);
    EXPECT_EQ(stack.at1(2).kind, mem::EntryKind::ExperienceInjection);
    EXPECT_EQ(stack.at1(2).source, "experience");
    EXPECT_EQ(stack.at1(2).content,
              "Relevant prior experience:\n"
              "- [profile] prefers concise answers\n"
              "- [semantic] a useful fact");
}

TEST(ExperienceInject, EmptyRetrievalInjectsNothing) {
    mem::MemoryStack stack(4096);
    stack.push(mem::EntryKind::TaskSpecEntry, "the task", 0, "user");
    xp::inject(stack, {}, 0);
    EXPECT_EQ(stack.size(), 1u);
}

TEST(ExperienceInject, OversizedBlockIsHardTruncated) {
    mem::MemoryStack stack(4096);
    stack.push(mem::EntryKind::TaskSpecEntry, "the task", 0, "user");
    xp::RetrievedExperience retrieved;
    retrieved.items = {{Component::Semantic, std::string(5000, 'x'), 1.0}};
    xp::inject(stack, retrieved, 0);
    ASSERT_EQ(stack.size(), 2u);
    EXPECT_EQ(stack.at1(2).content.size(), static_cast<size_t>(xp::kInjectionTokenBound) * 4);
    EXPECT_LE(stack.at1(2).token_estimate, xp::kInjectionTokenBound);
}

TEST(ExperienceInject, SummarizerRunsBeforeTruncation) {
    mem::MemoryStack stack(4096);
    stack.push(mem::EntryKind::TaskSpecEntry, "the task", 0, "user");
    xp::RetrievedExperience retrieved;
    retrieved.items = {{Component::Semantic, std::string(5000, 'x'), 1.0}};
    bool called = false;
    xp::inject(stack, retrieved, 0, [&](const std::string&) {
        called = true;
        return std::string("short gist");
    });
    ASSERT_TRUE(called);
    EXPECT_EQ(stack.at1(2).content, "Relevant prior experience (summarized):\nshort gist");
}

TEST(ExperienceCurate, ValidResponseMergesIntoRecord) {
    mem::MemoryStack stack(4096);
    stack.push(mem::EntryKind::TaskSpecEntry, "find the pressure range", 0, "user");
    stack.push(mem::EntryKind::SubAgentOutput, "the range is 6 to 25 cmH2O", 1, "searcher");

    ExperienceRecord existing;
    existing.user_id = "u1";
    existing.semantic_memory = {"old fact"};

    json fresh = {{"user_profiles", json::array()},
                  {"semantic_memory", {"normal csf opening pressure is 6 to 25 cmH2O"}},
                  {"procedural_memory", json::array()}};
    stackplanner::gateway::ScriptedGateway gw({fresh.dump()});
    auto outcome = xp::curate(stack, existing, "2026-08-13T12:00:00Z", gw,
                               stackplanner::prompts::defaults().experience_curator);
    EXPECT_FALSE(outcome.parse_failed);
    EXPECT_EQ(outcome.attempts, 1);
    EXPECT_EQ(outcome.record.updated_at, "2026-08-13T12:00:00Z");
    ASSERT_EQ(outcome.record.semantic_memory.size(), 2u);
    EXPECT_EQ(outcome.record.semantic_memory[0], "old fact");
}

TEST(ExperienceCurate, RetriesAfterGarbageThenSucceeds) {
    mem::MemoryStack stack(4096);
    stack.push(mem::EntryKind::TaskSpecEntry, "task", 0, "user");
    ExperienceRecord existing;
    existing.user_id = "u1";

    json fresh = {{"user_profiles", json::array()},
                  {"semantic_memory", {"a fact"}},
                  {"procedural_memory", json::array()}};
    stackplanner::gateway::ScriptedGateway gw({"sorry, no JSON here", fresh.dump()});
    auto outcome = xp::curate(stack, existing, "now", gw,
                               stackplanner::prompts::defaults().experience_curator);
    EXPECT_FALSE(outcome.parse_failed);
    EXPECT_EQ(outcome.attempts, 2);
    ASSERT_EQ(outcome.record.semantic_memory.size(), 1u);
}

TEST(ExperienceCurate, AcceptsJsonWrappedInProse) {
    mem::MemoryStack stack(4096);
    stack.push(mem::EntryKind::TaskSpecEntry, "task", 0, "user");
    ExperienceRecord existing;
    existing.user_id = "u1";
    std::string reply = "Here is the updated record:\n```json\n"
                        R"({"user_profiles": [], "semantic_memory": ["wrapped fact"],)"
                        R"( "procedural_memory": []})"
                        "\n```\nDone.";
    stackplanner::gateway::ScriptedGateway gw({reply});
    auto outcome = xp::curate(stack, existing, "now", gw,
                               stackplanner::prompts::defaults().experience_curator);
    EXPECT_FALSE(outcome.parse_failed);
    ASSERT_EQ(outcome.record.semantic_memory.size(), 1u);
    EXPECT_EQ(outcome.record.semantic_memory[0], "wrapped fact");
}

TEST(ExperienceCurate, GivesUpAfterRetriesAndKeepsExisting) {
    mem::MemoryStack stack(4096);
    stack.push(mem::EntryKind::TaskSpecEntry, "task", 0, "user");
    ExperienceRecord existing = sample_record("u1");

    stackplanner::gateway::ScriptedGateway gw({"junk", "more junk", "{\"wrong\": 1}"});
    std::vector<std::string> warnings;
    auto outcome = xp::curate(stack, existing, "now", gw,
                               stackplanner::prompts::defaults().experience_curator, "default",
                               2, [&](const std::string& w) { warnings.push_back(w); });
    EXPECT_TRUE(outcome.parse_failed);
    EXPECT_EQ(outcome.attempts, 3);
    EXPECT_EQ(outcome.record.semantic_memory, existing.semantic_memory);
    EXPECT_EQ(warnings.size(), 1u);
}

TEST(ExperienceCurate, ScriptExhaustionKeepsExisting) {
    mem::MemoryStack stack(4096);
    stack.push(mem::EntryKind::TaskSpecEntry, "task", 0, "user");
    ExperienceRecord existing = sample_record("u1");
    stackplanner::gateway::ScriptedGateway gw({"junk"});  // retry has nothing to consume
    auto outcome = xp::curate(stack, existing, "now", gw,
                               stackplanner::prompts::defaults().experience_curator);
    EXPECT_TRUE(outcome.parse_failed);
    EXPECT_EQ(outcome.record.semantic_memory, existing.semantic_memory);
}

TEST(ExperienceRoundTrip, SerializeValidateIsAFixedPoint) {
    auto record = sample_record();
    auto doc = xp::serialize_content(record);
    auto reparsed = xp::validate_record(json::parse(doc.dump()));
    EXPECT_EQ(reparsed.user_profiles, record.user_profiles);
    EXPECT_EQ(reparsed.semantic_memory, record.semantic_memory);
    ASSERT_EQ(reparsed.procedural_memory.size(), record.procedural_memory.size());
    EXPECT_EQ(reparsed.procedural_memory[0], record.procedural_memory[0]);
}
