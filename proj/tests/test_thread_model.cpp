#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <set>

#include "test_support.hpp"
#include "veritree/errors.hpp"
#include "veritree/rng.hpp"
#include "veritree/thread_model.hpp"

using namespace veritree;
using nlohmann::json;
using test_support::make_claim;
using test_support::make_comment;

namespace {

std::string doc_with_comments(std::vector<json> comments, const std::string& label = "false") {
    json doc;
    doc["claim"] = make_claim("t1", "Report says the museum is closed", label);
    doc["comments"] = comments;
    return doc.dump();
}

std::size_t edge_count(const CommentNode& n) {
    std::size_t edges = n.children.size();
    for (const auto& c : n.children) edges += edge_count(c);
    return edges;
}

}  // namespace

TEST_CASE("claim with zero comments parses to empty roots") {
    const ParsedThread p = parse_thread(doc_with_comments({}));
    CHECK(p.thread.roots.empty());
    CHECK(p.thread.comment_count() == 0);
    CHECK(p.warnings.empty());
    CHECK(p.thread.label == Label::fake);
}

TEST_CASE("three comments build depth 2, width 2 at level 1") {
    const ParsedThread p = parse_thread(doc_with_comments({
        make_comment("c1", "t1", "first reply"),
        make_comment("c2", "t1", "second reply"),
        make_comment("c3", "c1", "nested reply"),
    }));
    REQUIRE(p.thread.roots.size() == 2);  // width 2 at level 1
    CHECK(p.thread.roots[0].id == "c1");
    CHECK(p.thread.roots[1].id == "c2");
    REQUIRE(p.thread.roots[0].children.size() == 1);  // depth 2
    CHECK(p.thread.roots[0].children[0].id == "c3");
    CHECK(p.thread.comment_count() == 3);
}

TEST_CASE("orphan comment is re-rooted with one warning") {
    const ParsedThread p = parse_thread(doc_with_comments({
        make_comment("c1", "t1", "attached"),
        make_comment("c2", "missing-parent", "orphan"),
    }));
    REQUIRE(p.thread.roots.size() == 2);
    CHECK(p.thread.roots[1].id == "c2");
    CHECK(p.thread.roots[1].parent_id == "t1");  // re-rooted under the claim
    REQUIRE(p.warnings.size() == 1);
    CHECK(p.warnings[0].find("c2") != std::string::npos);
}

TEST_CASE("malformed and invalid documents") {
    CHECK_THROWS_AS(parse_thread("{not json"), ParseError);
    CHECK_THROWS_AS(parse_thread("{}"), ParseError);
    CHECK_THROWS_AS(parse_thread(R"({"claim": {"id": "a", "text": "x"}})"), ParseError);

    // duplicate comment id
    CHECK_THROWS_AS(parse_thread(doc_with_comments({
                        make_comment("c1", "t1", "a"),
                        make_comment("c1", "t1", "b"),
                    })),
                    ValidationError);

    // comment id colliding with the claim id
    CHECK_THROWS_AS(parse_thread(doc_with_comments({make_comment("t1", "t1", "a")})),
                    ValidationError);

    // empty claim text
    json doc;
    doc["claim"] = make_claim("t1", "", "true");
    doc["comments"] = json::array();
    CHECK_THROWS_AS(parse_thread(doc.dump()), ValidationError);

    // parent cycle
    CHECK_THROWS_AS(parse_thread(doc_with_comments({
                        make_comment("c1", "c2", "a"),
                        make_comment("c2", "c1", "b"),
                    })),
                    ValidationError);

    // negative count
    json bad = json::parse(doc_with_comments({make_comment("c1", "t1", "a")}));
    bad["comments"][0]["user"]["followers_count"] = -3;
    CHECK_THROWS_AS(parse_thread(bad.dump()), ValidationError);

    // unknown label
    json badlabel = json::parse(doc_with_comments({}));
    badlabel["claim"]["label"] = "maybe";
    CHECK_THROWS_AS(parse_thread(badlabel.dump()), ParseError);
}

TEST_CASE("content_length is the token count of the comment text") {
    const ParsedThread p = parse_thread(doc_with_comments({
        make_comment("c1", "t1", "Report says #shooting!"),
    }));
    CHECK(p.thread.roots[0].meta.content_length == 4);
}

TEST_CASE("serialize/parse round trip is structurally exact") {
    // Random forests: ids c0..cN, each with a random earlier parent or the claim.
    Rng rng(2026);
    for (int iter = 0; iter < 25; ++iter) {
        std::vector<json> comments;
        const std::size_t n = 1 + rng.next_below(12);
        for (std::size_t i = 0; i < n; ++i) {
            std::string parent =
                (i == 0 || rng.next_double() < 0.4) ? "t1" : "c" + std::to_string(rng.next_below(i));
            json c = make_comment("c" + std::to_string(i), parent,
                                  "comment number " + std::to_string(i) + " #tag!");
            c["user"]["followers_count"] = static_cast<int>(rng.next_below(1000));
            c["meta"]["favorite_count"] = static_cast<int>(rng.next_below(300));
            comments.push_back(c);
        }
        const ParsedThread first = parse_thread(doc_with_comments(comments));
        const ParsedThread second = parse_thread(serialize_thread(first.thread));
        CHECK(first.thread == second.thread);

        // Tree property: node count = edge count + number of roots.
        std::size_t edges = 0;
        for (const auto& r : first.thread.roots) edges += edge_count(r);
        CHECK(first.thread.comment_count() == edges + first.thread.roots.size());
    }
}

namespace {

std::vector<ConversationThread> corpus_fixture(std::size_t total, std::size_t unverified) {
    std::vector<ConversationThread> threads;
    for (std::size_t i = 0; i < total; ++i) {
        json doc;
        const std::string label =
            i < unverified ? "unverified" : (i % 2 == 0 ? "true" : "false");
        doc["claim"] = make_claim("t" + std::to_string(i), "claim " + std::to_string(i), label);
        doc["comments"] = json::array();
        threads.push_back(parse_thread(doc.dump()).thread);
    }
    return threads;
}

}  // namespace

TEST_CASE("filter_and_split: 10 threads, 2 unverified, ratios 0.7/0.1/0.2, seed 7") {
    const Corpus corpus = filter_and_split(corpus_fixture(10, 2), SplitRatios{}, 7);
    CHECK(corpus.threads.size() == 8);

    // Largest-remainder rounding of (5.6, 0.8, 1.6): 6/1/1.
    CHECK(corpus.threads_in(Split::train).size() == 6);
    CHECK(corpus.threads_in(Split::validation).size() == 1);
    CHECK(corpus.threads_in(Split::test).size() == 1);

    // Partition: every thread appears in exactly one split.
    CHECK(corpus.split_assignment.size() == 8);

    // Label closure after filtering.
    for (const auto& t : corpus.threads) CHECK(t.label != Label::unverified);
}

TEST_CASE("filter_and_split is deterministic and filtering is identity without unverified") {
    const auto threads = corpus_fixture(12, 0);
    const Corpus a = filter_and_split(threads, SplitRatios{}, 99);
    const Corpus b = filter_and_split(threads, SplitRatios{}, 99);
    CHECK(a.split_assignment == b.split_assignment);
    CHECK(a.threads.size() == 12);

    const Corpus c = filter_and_split(threads, SplitRatios{}, 100);
    CHECK(c.split_assignment != a.split_assignment);  // different seed moves threads around
}

TEST_CASE("filter_and_split rejects bad inputs") {
    CHECK_THROWS_AS(filter_and_split(corpus_fixture(4, 2), SplitRatios{}, 1), DataError);
    CHECK_THROWS_AS(filter_and_split(corpus_fixture(6, 0), SplitRatios{0.5, 0.2, 0.2}, 1),
                    ConfigError);
}

TEST_CASE("every split is populated even when rounding assigns zero") {
    // 5 threads at 0.7/0.1/0.2: floors are 3/0/1 and the largest remainders
    // tie; validation must still end up non-empty.
    const Corpus corpus = filter_and_split(corpus_fixture(5, 0), SplitRatios{}, 3);
    CHECK(corpus.threads_in(Split::train).size() >= 1);
    CHECK(corpus.threads_in(Split::validation).size() >= 1);
    CHECK(corpus.threads_in(Split::test).size() >= 1);
}

TEST_CASE("corpus and split files round trip") {
    test_support::TempDir dir;
    const auto threads = corpus_fixture(6, 1);
    save_corpus_file(dir.file("corpus.jsonl"), threads);
    const auto loaded = load_corpus_file(dir.file("corpus.jsonl"));
    REQUIRE(loaded.size() == 6);
    for (std::size_t i = 0; i < 6; ++i) CHECK(loaded[i].thread == threads[i]);

    const Corpus corpus = filter_and_split(threads, SplitRatios{}, 5);
    save_split_file(dir.file("splits.tsv"), corpus.split_assignment);
    CHECK(load_split_file(dir.file("splits.tsv")) == corpus.split_assignment);

    CHECK_THROWS_AS(load_corpus_file(dir.file("absent.jsonl")), DataError);
    test_support::write_file(dir.file("bad.jsonl"), "{broken\n");
    CHECK_THROWS_AS(load_corpus_file(dir.file("bad.jsonl")), ParseError);
}

TEST_CASE("pheme-style directory ingestion") {
    test_support::TempDir dir;
    namespace fs = std::filesystem;
    const auto thread_dir = dir.path() / "event" / "12345";
    fs::create_directories(thread_dir / "source-tweets");
    fs::create_directories(thread_dir / "reactions");

    test_support::write_file((thread_dir / "source-tweets" / "12345.json").string(), json{
        {"id_str", "12345"},
        {"text", "Breaking: museum closed after incident"},
        {"user",
         {{"verified", true},
          {"geo_enabled", true},
          {"screen_name", "reporter"},
          {"profile_image_url", "http://example.org/p.png"},
          {"followers_count", 700},
          {"friends_count", 240},
          {"favourites_count", 150}}}}.dump());
    test_support::write_file((thread_dir / "reactions" / "777.json").string(), json{
        {"id_str", "777"},
        {"in_reply_to_status_id_str", "12345"},
        {"text", "where was that reported?"},
        {"favorited", true},
        {"favorite_count", 120},
        {"source", "<a href=\"x\">app</a>"},
        {"geo", nullptr},
        {"user",
         {{"verified", false},
          {"screen_name", "skeptic"},
          {"followers_count", 42}}}}.dump());
    test_support::write_file((thread_dir / "annotation.json").string(),
                             json{{"misinformation", "1"}}.dump());

    const auto parsed = ingest_pheme_directory(dir.path().string());
    REQUIRE(parsed.size() == 1);
    const ConversationThread& t = parsed[0].thread;
    CHECK(t.claim_id == "12345");
    CHECK(t.label == Label::fake);
    CHECK(t.claim_reviewer.verified);
    CHECK(t.claim_reviewer.followers == 700);
    REQUIRE(t.roots.size() == 1);
    CHECK(t.roots[0].id == "777");
    CHECK(t.roots[0].meta.favorite_count == 120);
    CHECK(t.roots[0].meta.source_present);
    CHECK_FALSE(t.roots[0].meta.geo_present);  // geo was null
    CHECK(t.roots[0].reviewer.followers == 42);
}
