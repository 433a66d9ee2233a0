// Benchmark records, supportive-evidence judging, two-stage generation,
// retrieval/QA metrics, and the ranker family used by the evaluation
// harness.

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>
#include <set>

#include <ypath/ypath.hpp>

#include "test_util.hpp"

using namespace ypath;
using testutil::TempDir;

// ---------------------------------------------------------------------------
// benchmark records
// ---------------------------------------------------------------------------

TEST_CASE("support levels carry fixed canonical scores") {
    CHECK(canonical_score(Level::P1) == 0.95);
    CHECK(canonical_score(Level::P2) == 0.75);
    CHECK(canonical_score(Level::P3) == 0.55);
    CHECK(canonical_score(Level::A1) == 0.25);
    CHECK(canonical_score(Level::A2) == 0.20);
    CHECK(canonical_score(Level::A3) == 0.15);
    CHECK(canonical_score(Level::A4) == 0.10);
    for (Level l : kAllLevels) {
        CHECK(is_positive(l) == (to_string(l)[0] == 'P'));
        auto back = level_from_string(to_string(l));
        REQUIRE(back.has_value());
        CHECK(*back == l);
    }
    CHECK_FALSE(level_from_string("P9").has_value());
    CHECK_FALSE(level_from_string("").has_value());
}

TEST_CASE("benchmark items survive a json round trip") {
    auto g = testutil::rng(601);
    auto item = testutil::make_item(g, "q001");
    item.candidates[3].unverified = true;
    auto j = item_to_json(item, true);
    auto back = item_from_json(j);
    CHECK(back.question_id == item.question_id);
    CHECK(back.question == item.question);
    CHECK(back.reference_answer == item.reference_answer);
    CHECK(back.keywords == item.keywords);
    CHECK(back.difficulty == item.difficulty);
    REQUIRE(back.candidates.size() == 14);
    for (size_t i = 0; i < 14; ++i) {
        CHECK(back.candidates[i].text == item.candidates[i].text);
        CHECK(back.candidates[i].level == item.candidates[i].level);
        CHECK(back.candidates[i].rank_score == item.candidates[i].rank_score);
        CHECK(back.candidates[i].unverified == item.candidates[i].unverified);
    }
    // QA-only shape drops candidates entirely
    auto qa = item_to_json(item, false);
    CHECK_FALSE(qa.contains("candidates"));
    auto qa_back = item_from_json(qa);
    CHECK(qa_back.candidates.empty());
    CHECK_NOTHROW(validate_item(qa_back, false));
    CHECK_THROWS_AS(validate_item(qa_back, true), DataError);
}

TEST_CASE("item validation rejects malformed sets") {
    auto g = testutil::rng(603);
    auto item = testutil::make_item(g, "q001");
    CHECK_NOTHROW(validate_item(item));

    auto wrong_count = item;
    wrong_count.candidates.pop_back();
    CHECK_THROWS_AS(validate_item(wrong_count), DataError);

    auto bad_score = item;
    bad_score.candidates[0].rank_score = 0.99;
    CHECK_THROWS_AS(validate_item(bad_score), DataError);

    auto all_positive = item;
    for (auto& c : all_positive.candidates) c.level = Level::P1;
    CHECK_THROWS_AS(validate_item(all_positive), DataError);

    auto no_question = item;
    no_question.question.clear();
    CHECK_THROWS_AS(validate_item(no_question), DataError);

    auto bad_difficulty = item;
    bad_difficulty.difficulty = 1.5;
    CHECK_THROWS_AS(validate_item(bad_difficulty), DataError);
}

TEST_CASE("benchmark files round trip and reject junk lines") {
    TempDir tmp("bench-io");
    auto g = testutil::rng(605);
    std::vector<BenchmarkItem> items;
    for (int i = 0; i < 5; ++i)
        items.push_back(testutil::make_item(g, "q00" + std::to_string(i)));
    save_benchmark(items, tmp / "bench.jsonl");
    auto back = load_benchmark(tmp / "bench.jsonl");
    REQUIRE(back.size() == items.size());
    for (size_t i = 0; i < items.size(); ++i) {
        CHECK(back[i].question_id == items[i].question_id);
        CHECK(back[i].candidates.size() == 14);
    }
    auto body = Store::read_file(tmp / "bench.jsonl");
    Store::write_file(tmp / "bad.jsonl", body + "this is not json\n");
    CHECK_THROWS_AS(load_benchmark(tmp / "bad.jsonl"), DataError);
    Store::write_file(tmp / "empty.jsonl", "");
    CHECK_THROWS_AS(load_benchmark(tmp / "empty.jsonl"), DataError);
}

// ---------------------------------------------------------------------------
// support judgment parsing
// ---------------------------------------------------------------------------

TEST_CASE("judge verdict lines parse strictly") {
    auto parse = [](std::string_view s) { return detail::parse_support_verdict(s); };

    auto v = parse("P1|0.93|directly states the finding");
    REQUIRE(v.has_value());
    CHECK(v->support_score == 0.93);
    REQUIRE(v->level.has_value());
    CHECK(*v->level == Level::P1);
    CHECK(v->rationale == "directly states the finding");

    // whitespace around fields is tolerated
    v = parse("  P2 | 0.75 |  partial  ");
    REQUIRE(v.has_value());
    CHECK(*v->level == Level::P2);

    // the rationale may contain further pipes
    v = parse("A1|0.25|topic a|b|c");
    REQUIRE(v.has_value());
    CHECK(v->rationale == "topic a|b|c");

    // only the first line counts
    v = parse("P3|0.55|weak\nsecond line is ignored");
    REQUIRE(v.has_value());
    CHECK(*v->level == Level::P3);
    CHECK(v->rationale == "weak");

    // a level inconsistent with its score loses the level, keeps the score
    v = parse("P1|0.50|confused");
    REQUIRE(v.has_value());
    CHECK_FALSE(v->level.has_value());
    CHECK(v->support_score == 0.50);
    v = parse("P1|0.85|near the canonical value");
    REQUIRE(v.has_value());
    CHECK(v->level.has_value());  // |0.85-0.95| == 0.10 is still consistent
    v = parse("P1|0.84|too far");
    REQUIRE(v.has_value());
    CHECK_FALSE(v->level.has_value());

    // unknown level token: score stands alone
    v = parse("Q9|0.40|made-up grade");
    REQUIRE(v.has_value());
    CHECK_FALSE(v->level.has_value());
    CHECK(v->support_score == 0.40);

    // malformed shapes
    CHECK_FALSE(parse("no pipes at all").has_value());
    CHECK_FALSE(parse("P1|0.9").has_value());
    CHECK_FALSE(parse("P1|1.5|score out of range").has_value());
    CHECK_FALSE(parse("P1|-0.1|negative").has_value());
    CHECK_FALSE(parse("P1|abc|not a number").has_value());
    CHECK_FALSE(parse("P1|0.9x|trailing junk in number").has_value());
    CHECK_FALSE(parse("").has_value());
}

TEST_CASE("judging retries once with a stricter instruction") {
    TempDir tmp("judge");
    auto backend = std::make_shared<MockBackend>();
    Gateway gw(tmp / "cache", backend);
    SedConfig cfg;
    cfg.judge_provider.model_id = "judge";

    int calls = 0;
    backend->set_chat_handler([&](const ChatRequest& req) -> std::string {
        ++calls;
        if (req.user_text.find("Reply with exactly one line") != std::string::npos)
            return "P3|0.55|after the stricter nudge";
        return "let me think about this...";
    });
    auto j = judge(gw, "does necrosis occur?", "Necrosis is present.", "a:0", cfg);
    CHECK(calls == 2);
    CHECK(j.passage_ref == "a:0");
    CHECK(j.support_score == 0.55);
    REQUIRE(j.level.has_value());
    CHECK(*j.level == Level::P3);

    // both attempts unparseable: zero score, no level, flagged rationale
    calls = 0;
    backend->set_chat_handler([&](const ChatRequest&) -> std::string {
        ++calls;
        return "still rambling";
    });
    auto j2 = judge(gw, "does necrosis occur?", "Different passage.", "a:1", cfg);
    CHECK(calls == 2);
    CHECK(j2.support_score == 0.0);
    CHECK_FALSE(j2.level.has_value());
    CHECK(j2.rationale == "unparseable judge output");
}

TEST_CASE("pool judging isolates transport failures") {
    TempDir tmp("judge-pool");
    auto backend = std::make_shared<MockBackend>();
    Gateway gw(tmp / "cache", backend);
    SedConfig cfg;
    cfg.judge_provider.max_retries = 0;

    backend->set_chat_handler([&](const ChatRequest& req) -> std::string {
        if (req.user_text.find("POISON") != std::string::npos) throw TransportError("down");
        return "P2|0.75|fine";
    });
    std::vector<Candidate> pool(3);
    pool[0].passage_ref = "x:0";
    pool[1].passage_ref = "x:1";
    pool[2].passage_ref = "x:2";
    std::vector<std::string> texts = {"good text", "POISON text", "another good text"};
    auto pj = judge_pool(gw, "question?", pool, texts, cfg, 2);
    CHECK(pj.judged.size() == 2);
    CHECK(pj.judged.count("x:0") == 1);
    CHECK(pj.judged.count("x:2") == 1);
    REQUIRE(pj.unjudged.size() == 1);
    CHECK(pj.unjudged[0] == "x:1");
    CHECK_THROWS_AS(judge_pool(gw, "q", pool, {"one"}, cfg), DataError);
}

TEST_CASE("filtering drops weak support and blends the rest") {
    SedConfig cfg;  // threshold 0.5, alpha 0.5
    std::vector<Candidate> pool(4);
    pool[0].passage_ref = "a";
    pool[0].fused = 0.9;
    pool[1].passage_ref = "b";
    pool[1].fused = 0.8;
    pool[2].passage_ref = "c";
    pool[2].fused = 0.7;
    pool[3].passage_ref = "d";
    pool[3].fused = 0.6;
    std::map<std::string, SupportJudgment> judgments;
    judgments["a"] = {"a", 0.49, std::nullopt, ""};  // below threshold
    judgments["b"] = {"b", 0.50, std::nullopt, ""};  // boundary survives
    judgments["c"] = {"c", 0.95, Level::P1, ""};
    // d stays unjudged
    auto evidence = filter_and_rerank(pool, judgments, cfg);
    REQUIRE(evidence.size() == 2);
    // c: 0.5*0.7 + 0.5*0.95 = 0.825; b: 0.5*0.8 + 0.5*0.5 = 0.65
    CHECK(evidence[0].passage_ref == "c");
    CHECK(evidence[0].final_score == Catch::Approx(0.825));
    CHECK(evidence[0].fused == 0.7);
    CHECK(evidence[0].support_score == 0.95);
    CHECK(evidence[1].passage_ref == "b");
    CHECK(evidence[1].final_score == Catch::Approx(0.65));

    // everything filtered is a valid outcome
    SedConfig strict = cfg;
    strict.threshold = 0.99;
    CHECK(filter_and_rerank(pool, judgments, strict).empty());

    // final-score ties order by passage_ref
    std::map<std::string, SupportJudgment> tied;
    tied["a"] = {"a", 0.6, std::nullopt, ""};
    tied["b"] = {"b", 0.7, std::nullopt, ""};
    std::vector<Candidate> p2(2);
    p2[0].passage_ref = "b";
    p2[0].fused = 0.5;
    p2[1].passage_ref = "a";
    p2[1].fused = 0.6;
    auto ev2 = filter_and_rerank(p2, tied, cfg);  // both final 0.6
    REQUIRE(ev2.size() == 2);
    CHECK(ev2[0].passage_ref == "a");
    CHECK(ev2[1].passage_ref == "b");
}

TEST_CASE("training pair export writes one labeled line per candidate") {
    TempDir tmp("pairs");
    auto g = testutil::rng(607);
    std::vector<BenchmarkItem> items = {testutil::make_item(g, "q000"),
                                        testutil::make_item(g, "q001")};
    size_t n = export_training_pairs(items, tmp / "pairs.jsonl");
    CHECK(n == 28);
    size_t lines = 0, positives = 0;
    Store::for_each_line(Store::read_file(tmp / "pairs.jsonl"), [&](const std::string& line) {
        auto j = nlohmann::json::parse(line);
        REQUIRE(j.contains("question"));
        REQUIRE(j.contains("passage"));
        REQUIRE(j.contains("level"));
        REQUIRE(j.contains("rank_score"));
        int label = j.at("label").get<int>();
        auto level = level_from_string(j.at("level").get<std::string>());
        REQUIRE(level.has_value());
        CHECK(label == (is_positive(*level) ? 1 : 0));
        if (label) ++positives;
        ++lines;
    });
    CHECK(lines == 28);
    CHECK(positives == 12);  // 6 positive levels per item
}

// ---------------------------------------------------------------------------
// context assembly and generation
// ---------------------------------------------------------------------------

namespace {

struct GenFixture {
    TempDir tmp{"gen"};
    Store store{tmp / "store"};
    std::shared_ptr<MockBackend> backend = std::make_shared<MockBackend>();
    Gateway gw{tmp / "cache", backend};

    GenFixture() {
        Document d;
        d.doc_id = "doc";
        d.subfield = "general";
        d.raw_text =
            "Caseating necrosis marks tuberculous granulomas. Langhans cells ring the center. "
            "Acid fast stains confirm the organism. Margins were free of tumor.";
        ChunkingPolicy policy;
        policy.min_tokens = 1;
        policy.max_tokens = 6;
        store.ingest({d}, policy);
    }

    std::vector<EvidenceItem> evidence(std::initializer_list<const char*> refs) {
        std::vector<EvidenceItem> out;
        double score = 0.9;
        for (const char* r : refs) {
            EvidenceItem e;
            e.passage_ref = r;
            e.fused = score;
            e.support_score = score;
            e.final_score = score;
            score -= 0.1;
            out.push_back(e);
        }
        return out;
    }
};

}  // namespace

TEST_CASE_METHOD(GenFixture, "context blocks are numbered, referenced, and parse back") {
    auto ev = evidence({"doc:0", "doc:2", "doc:1"});
    std::string block = assemble_context(ev, store, 2);
    // only the top two survive the cut
    std::string expected = "[1] (doc:0)\n" + store.get("doc:0").text + "\n\n[2] (doc:2)\n" +
                           store.get("doc:2").text;
    CHECK(block == expected);
    auto entries = parse_context(block);
    REQUIRE(entries.size() == 2);
    CHECK(entries[0].k == 1);
    CHECK(entries[0].passage_ref == "doc:0");
    CHECK(entries[0].text == store.get("doc:0").text);
    CHECK(entries[1].k == 2);
    CHECK(entries[1].passage_ref == "doc:2");

    CHECK(assemble_context({}, store, 3).empty());
    CHECK_THROWS_AS(assemble_context(ev, store, 0), ConfigError);
    CHECK_THROWS_AS(parse_context("no header here"), DataError);
}

TEST_CASE_METHOD(GenFixture, "citation extraction dedups and ignores strays") {
    auto ev = evidence({"doc:0", "doc:1", "doc:2"});
    auto entries = parse_context(assemble_context(ev, store, 3));
    auto cited = extract_citations(
        "Finding one [2]. Finding two [1], repeated [2]. Stray [9] and [0] ignored. "
        "Also [12] is not [1][2]. Closing note [3]. Malformed [x] [] [3 skipped.",
        entries);
    REQUIRE(cited.size() == 3);
    CHECK(cited[0] == "doc:1");  // [2] first
    CHECK(cited[1] == "doc:0");  // then [1]
    CHECK(cited[2] == "doc:2");  // [3] last; repeats and malformed forms add nothing
    CHECK(extract_citations("no markers", entries).empty());
    CHECK(extract_citations("[4]", entries).empty());
}

TEST_CASE_METHOD(GenFixture, "empty evidence short-circuits without model calls") {
    GenerationConfig cfg;
    auto ans = generate_answer(gw, "what stains confirm?", {}, store, cfg);
    CHECK(ans.text == kNoEvidenceAnswer);
    CHECK(ans.cited_passage_refs.empty());
    CHECK_FALSE(ans.draft_text.has_value());
    CHECK(ans.evidence_used.empty());
    CHECK(backend->chat_calls() == 0);
}

TEST_CASE_METHOD(GenFixture, "two-stage generation drafts then refines") {
    backend->configure(nlohmann::json{
        {"chat_rules",
         {{{"match", {"Task: evidence-grounded-draft"}}, {"mode", "draft_extract"}},
          {{"match", {"Task: answer-refinement"}}, {"mode", "echo_draft"}}}}});
    GenerationConfig cfg;
    cfg.context_c = 3;
    auto ev = evidence({"doc:0", "doc:2"});
    auto ans = generate_answer(gw, "what marks tuberculous granulomas?", ev, store, cfg);
    CHECK(backend->chat_calls() == 2);
    REQUIRE(ans.draft_text.has_value());
    // the refine stage echoed the draft unchanged
    CHECK(ans.text == *ans.draft_text);
    // the draft cites the first sentence of each context entry
    CHECK(ans.text.find("[1]") != std::string::npos);
    CHECK(ans.text.find("[2]") != std::string::npos);
    REQUIRE(ans.cited_passage_refs.size() == 2);
    CHECK(ans.cited_passage_refs[0] == "doc:0");
    CHECK(ans.cited_passage_refs[1] == "doc:2");
    CHECK(ans.evidence_used.size() == 2);
    CHECK(ans.evidence_used[0].first == "doc:0");

    // single-stage runs the draft prompt once through the refiner provider
    auto before = backend->chat_calls();
    GenerationConfig single = cfg;
    single.single_stage = true;
    auto ans2 = generate_answer(gw, "what rings the center?", ev, store, single);
    CHECK(backend->chat_calls() - before == 1);
    CHECK_FALSE(ans2.draft_text.has_value());
    CHECK_FALSE(ans2.text.empty());
}

TEST_CASE_METHOD(GenFixture, "citations always point into the supplied evidence") {
    backend->configure(nlohmann::json{
        {"chat_rules",
         {{{"match", {"Task: evidence-grounded-draft"}},
           {"mode", "const"},
           {"text", "Claim [1]. Wild claim [7]. Another [3]."}},
          {{"match", {"Task: answer-refinement"}}, {"mode", "echo_draft"}}}}});
    auto ev = evidence({"doc:0", "doc:1", "doc:2"});
    GenerationConfig cfg;
    cfg.context_c = 3;
    auto ans = generate_answer(gw, "anything?", ev, store, cfg);
    // echo_draft found no DRAFT block in a const reply, but citations still
    // resolve against the context: [7] has no entry
    for (const auto& ref : ans.cited_passage_refs) {
        bool in_evidence = false;
        for (const auto& e : ev) in_evidence |= e.passage_ref == ref;
        CHECK(in_evidence);
    }
}

// ---------------------------------------------------------------------------
// retrieval metrics
// ---------------------------------------------------------------------------

namespace {

// metric recomputation working directly off the ranking array
RetrievalRecord metric_oracle(const std::vector<size_t>& ranking, const BenchmarkItem& item) {
    RetrievalRecord r;
    r.question_id = item.question_id;
    size_t pos_total = 0;
    double rank_sum = 0;
    size_t in5 = 0, in6 = 0;
    for (size_t rank = 0; rank < ranking.size(); ++rank) {
        const auto& c = item.candidates[ranking[rank]];
        if (!is_positive(c.level)) continue;
        ++pos_total;
        rank_sum += double(rank + 1);
        if (rank < 5) ++in5;
        if (rank < 6) ++in6;
    }
    r.precision_at_5 = double(in5) / 5.0;
    r.hit_at_6 = double(in6);
    r.mean_rank = pos_total ? rank_sum / double(pos_total) : 0.0;

    std::vector<size_t> pos_of(ranking.size());
    for (size_t rank = 0; rank < ranking.size(); ++rank) pos_of[ranking[rank]] = rank;
    size_t g_total = 0, g_ok = 0, p_total = 0, p_ok = 0;
    for (size_t i = 0; i < item.candidates.size(); ++i) {
        for (size_t j = i + 1; j < item.candidates.size(); ++j) {
            double si = item.candidates[i].rank_score, sj = item.candidates[j].rank_score;
            if (si == sj) continue;
            size_t hi = si > sj ? i : j;  // gold-better candidate
            size_t lo = si > sj ? j : i;
            bool match = pos_of[hi] < pos_of[lo];
            ++g_total;
            g_ok += match;
            if (is_positive(item.candidates[i].level) && is_positive(item.candidates[j].level)) {
                ++p_total;
                p_ok += match;
            }
        }
    }
    r.ior_global = g_total ? double(g_ok) / double(g_total) : 1.0;
    r.ior_positive = p_total ? double(p_ok) / double(p_total) : 1.0;
    return r;
}

}  // namespace

TEST_CASE("retrieval metrics match a pairwise recount over random rankings") {
    auto g = testutil::rng(701);
    for (int trial = 0; trial < 300; ++trial) {
        auto item = testutil::make_item(g, "q" + std::to_string(trial));
        std::vector<size_t> ranking(14);
        for (size_t i = 0; i < 14; ++i) ranking[i] = i;
        std::shuffle(ranking.begin(), ranking.end(), g);
        auto got = retrieval_metrics(ranking, item);
        auto want = metric_oracle(ranking, item);
        CHECK(got.precision_at_5 == Catch::Approx(want.precision_at_5).margin(1e-12));
        CHECK(got.hit_at_6 == want.hit_at_6);
        CHECK(got.mean_rank == Catch::Approx(want.mean_rank).margin(1e-12));
        CHECK(got.ior_global == Catch::Approx(want.ior_global).margin(1e-12));
        CHECK(got.ior_positive == Catch::Approx(want.ior_positive).margin(1e-12));
    }
}

TEST_CASE("perfect and inverted rankings hit the metric extremes") {
    auto g = testutil::rng(703);
    for (int trial = 0; trial < 20; ++trial) {
        auto item = testutil::make_item(g, "q" + std::to_string(trial));
        auto best = retrieval_metrics(oracle_ranking(item), item);
        CHECK(best.precision_at_5 == 1.0);
        CHECK(best.hit_at_6 == 6.0);
        CHECK(best.mean_rank == Catch::Approx(3.5));
        CHECK(best.ior_global == 1.0);
        CHECK(best.ior_positive == 1.0);
        auto worst = retrieval_metrics(reverse_oracle_ranking(item), item);
        CHECK(worst.precision_at_5 == 0.0);
        CHECK(worst.hit_at_6 == 0.0);
        CHECK(worst.mean_rank == Catch::Approx(11.5));
        CHECK(worst.ior_global == 0.0);
        CHECK(worst.ior_positive == 0.0);
    }
}

TEST_CASE("non-permutations are rejected") {
    auto g = testutil::rng(705);
    auto item = testutil::make_item(g, "q0");
    std::vector<size_t> ranking(14);
    for (size_t i = 0; i < 14; ++i) ranking[i] = i;
    auto too_short = ranking;
    too_short.pop_back();
    CHECK_THROWS_AS(retrieval_metrics(too_short, item), DataError);
    auto dup = ranking;
    dup[5] = dup[4];
    CHECK_THROWS_AS(retrieval_metrics(dup, item), DataError);
    auto oob = ranking;
    oob[0] = 14;
    CHECK_THROWS_AS(retrieval_metrics(oob, item), DataError);
}

TEST_CASE("a fully tied gold ordering counts as in order") {
    auto g = testutil::rng(707);
    auto item = testutil::make_item(g, "q0", false);  // all scores canonical
    for (auto& c : item.candidates) c.rank_score = 0.5;
    std::vector<size_t> ranking(14);
    for (size_t i = 0; i < 14; ++i) ranking[i] = i;
    std::shuffle(ranking.begin(), ranking.end(), g);
    auto rec = retrieval_metrics(ranking, item);
    CHECK(rec.ior_global == 1.0);
    CHECK(rec.ior_positive == 1.0);
}

// ---------------------------------------------------------------------------
// QA metrics
// ---------------------------------------------------------------------------

TEST_CASE("keyword score is a normalized substring match") {
    CHECK(keyword_score("Caseating granulomas were seen.",
                        {"caseating granuloma", "necrosis"}) == 0.5);
    CHECK(keyword_score("nothing relevant", {"alpha", "beta"}) == 0.0);
    CHECK(keyword_score("ALPHA and beta", {"alpha", "beta"}) == 1.0);
    // internal whitespace is collapsed on both sides
    CHECK(keyword_score("acid  fast bacilli", {"acid fast"}) == 1.0);
    CHECK_THROWS_AS(keyword_score("x", {}), DataError);
}

TEST_CASE("ratio replies parse strictly") {
    using detail::parse_ratio;
    CHECK(parse_ratio("3/4") == 0.75);
    CHECK(parse_ratio(" 2/5 ") == 0.4);
    CHECK(parse_ratio("0/4") == 0.0);
    CHECK(parse_ratio("4/4\nextra line") == 1.0);
    CHECK_FALSE(parse_ratio("5/4").has_value());  // more covered than total
    CHECK_FALSE(parse_ratio("3/0").has_value());
    CHECK_FALSE(parse_ratio("three/four").has_value());
    CHECK_FALSE(parse_ratio("3 / 4").has_value());
    CHECK_FALSE(parse_ratio("/4").has_value());
    CHECK_FALSE(parse_ratio("3/").has_value());
    CHECK_FALSE(parse_ratio("").has_value());
}

TEST_CASE("judged ratios retry once and then go missing") {
    TempDir tmp("ratio");
    auto backend = std::make_shared<MockBackend>();
    Gateway gw(tmp / "cache", backend);
    ProviderConfig judge;
    judge.model_id = "judge";

    int calls = 0;
    backend->set_chat_handler([&](const ChatRequest& req) -> std::string {
        ++calls;
        if (req.user_text.find("Reply with exactly COVERED/TOTAL") != std::string::npos)
            return "3/4";
        return "I would say three of four";
    });
    auto cov = judged_coverage(gw, judge, "the answer", "the reference");
    REQUIRE(cov.has_value());
    CHECK(*cov == 0.75);
    CHECK(calls == 2);

    backend->set_chat_handler([&](const ChatRequest&) -> std::string { return "unclear"; });
    CHECK_FALSE(judged_coverage(gw, judge, "another answer", "the reference").has_value());
    CHECK_FALSE(judged_faithfulness(gw, judge, "another answer", "evidence").has_value());
}

TEST_CASE("semantic similarity embeds once and stays in range") {
    TempDir tmp("sem");
    auto backend = std::make_shared<MockBackend>();
    backend->set_embed_mode("trigram");
    Gateway gw(tmp / "cache", backend);
    ProviderConfig emb;
    emb.model_id = "emb";
    double self = semantic_similarity(gw, emb, "identical answer text", "identical answer text");
    CHECK(self == Catch::Approx(1.0).margin(1e-6));
    CHECK(backend->embed_calls() == 1);  // both texts in one batch
    double other =
        semantic_similarity(gw, emb, "caseating granuloma present", "granuloma with caseation");
    double far = semantic_similarity(gw, emb, "caseating granuloma present", "zzzz qqqq xxxx");
    CHECK(other > far);
    for (double v : {self, other, far}) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("qa eval aggregates per-question records") {
    TempDir tmp("qa-eval");
    auto backend = std::make_shared<MockBackend>(nlohmann::json{
        {"embed", {{"mode", "trigram"}}},
        {"chat_rules",
         {{{"match", {"Task: coverage-judgment"}}, {"mode", "ratio"}, {"num", 3}, {"den", 4}},
          {{"match", {"Task: faithfulness-judgment"}}, {"mode", "ratio"}, {"num", 1}, {"den", 2}}}}});
    Gateway gw(tmp / "cache", backend);
    ProviderConfig emb, judge;

    auto g = testutil::rng(801);
    std::vector<BenchmarkItem> items;
    for (int i = 0; i < 4; ++i) items.push_back(testutil::make_item(g, "q00" + std::to_string(i)));

    QaPipeline pipeline = [&](const BenchmarkItem& item) -> QaOutput {
        if (item.question_id == "q003") throw DataError("pipeline exploded");
        QaOutput out;
        out.answer_text = "the marker " + item.question_id + " indicates the finding";
        out.evidence_block = "[1] (x:0)\nsupporting text";
        return out;
    };
    auto report = run_qa_eval(items, pipeline, gw, emb, judge, 2);
    CHECK(report.failures == 1);
    REQUIRE(report.records.size() == 3);
    for (const auto& r : report.records) {
        CHECK(r.keyword == 1.0);  // both keywords appear in the answer
        REQUIRE(r.coverage.has_value());
        CHECK(*r.coverage == 0.75);
        REQUIRE(r.faithfulness.has_value());
        CHECK(*r.faithfulness == 0.5);
        CHECK(r.semantic >= 0.0);
        CHECK(r.semantic <= 1.0);
    }
    CHECK(report.mean_keyword == 1.0);
    CHECK(report.mean_coverage == Catch::Approx(0.75));
    CHECK(report.mean_faithfulness == Catch::Approx(0.5));
    CHECK(report.missing_coverage == 0);

    // an unparseable judge leaves those cells missing, not zeroed
    auto vague = std::make_shared<MockBackend>(
        nlohmann::json{{"embed", {{"mode", "trigram"}}},
                       {"chat_default", {{"mode", "const"}, {"text", "no ratio here"}}}});
    Gateway gw2(tmp / "cache2", vague);
    auto report2 = run_qa_eval({items[0]}, pipeline, gw2, emb, judge, 1);
    REQUIRE(report2.records.size() == 1);
    CHECK_FALSE(report2.records[0].coverage.has_value());
    CHECK(report2.missing_coverage == 1);
    CHECK(report2.missing_faithfulness == 1);
    CHECK(report2.mean_coverage == 0.0);

    auto tsv = qa_report_tsv(report2);
    CHECK(tsv.find("missing") != std::string::npos);
    CHECK(tsv.rfind("question_id\tkeyword\tcoverage\tfaithfulness\tsemantic\n", 0) == 0);
}

// ---------------------------------------------------------------------------
// rankers
// ---------------------------------------------------------------------------

namespace {

bool is_permutation_of_14(const std::vector<size_t>& ranking) {
    if (ranking.size() != 14) return false;
    std::set<size_t> seen(ranking.begin(), ranking.end());
    return seen.size() == 14 && *seen.rbegin() == 13;
}

}  // namespace

TEST_CASE("every ranker yields a permutation and the oracles bound them") {
    TempDir tmp("rankers");
    auto backend = std::make_shared<MockBackend>(nlohmann::json{
        {"embed", {{"mode", "trigram"}}},
        {"chat_rules",
         {{{"match", {"Task: supportive-evidence-judgment"}}, {"mode", "overlap_judge"}}}}});
    Gateway gw(tmp / "cache", backend);
    RankerSet set;
    set.gateway = &gw;
    set.lexicon = std::make_shared<Lexicon>();
    set.retrieval.pool_k = 14;

    auto g = testutil::rng(901);
    std::vector<BenchmarkItem> items;
    for (int i = 0; i < 8; ++i) items.push_back(testutil::make_item(g, "q00" + std::to_string(i)));

    for (const char* name : {"oracle", "reverse-oracle", "dense", "sparse", "hybrid",
                             "hybrid-sed", "hybrid-oracle-sed"}) {
        auto ranker = set.make(name);
        for (const auto& item : items) {
            auto ranking = ranker(item);
            INFO(name);
            CHECK(is_permutation_of_14(ranking));
        }
    }
    CHECK_THROWS_AS(set.make("nonsense"), ConfigError);

    // the oracle dominates every other ranker on mean precision
    auto oracle_rep = run_retrieval_eval(items, set.make("oracle"), 2);
    auto hybrid_rep = run_retrieval_eval(items, set.make("hybrid"), 2);
    auto reverse_rep = run_retrieval_eval(items, set.make("reverse-oracle"), 2);
    CHECK(oracle_rep.mean.precision_at_5 == 1.0);
    CHECK(reverse_rep.mean.precision_at_5 == 0.0);
    CHECK(oracle_rep.mean.precision_at_5 >= hybrid_rep.mean.precision_at_5);
    CHECK(hybrid_rep.mean.precision_at_5 >= reverse_rep.mean.precision_at_5);

    // gateways are mandatory for model-backed rankers
    RankerSet offline;
    CHECK_THROWS_AS(offline.make("dense"), ConfigError);
    CHECK_NOTHROW(offline.make("oracle"));
}

TEST_CASE("gold-level judging puts every positive ahead of every negative") {
    TempDir tmp("oracle-sed");
    auto backend = std::make_shared<MockBackend>(nlohmann::json{{"embed", {{"mode", "trigram"}}}});
    Gateway gw(tmp / "cache", backend);
    RankerSet set;
    set.gateway = &gw;
    set.lexicon = std::make_shared<Lexicon>();
    auto ranker = set.make("hybrid-oracle-sed");

    auto g = testutil::rng(903);
    for (int i = 0; i < 10; ++i) {
        auto item = testutil::make_item(g, "q" + std::to_string(i));
        auto ranking = ranker(item);
        REQUIRE(is_permutation_of_14(ranking));
        // canonical positives (>= 0.55) survive the 0.5 threshold, canonical
        // negatives (<= 0.25) are filtered and appended after
        for (size_t r = 0; r < 6; ++r) CHECK(is_positive(item.candidates[ranking[r]].level));
        for (size_t r = 6; r < 14; ++r) CHECK_FALSE(is_positive(item.candidates[ranking[r]].level));
    }
}

TEST_CASE("the sparse ranker rewards lexical overlap with the question") {
    BenchmarkItem item;
    item.question_id = "q0";
    item.question = "does caseating necrosis indicate tuberculosis?";
    item.reference_answer = "yes";
    item.keywords = {"caseating"};
    item.difficulty = 0.5;
    for (int i = 0; i < 14; ++i) {
        CandidateRecord c;
        c.level = i < 6 ? Level::P1 : Level::A1;
        c.rank_score = 0.5;
        c.text = "filler passage number " + std::to_string(i) + " about unrelated matters";
        item.candidates.push_back(c);
    }
    item.candidates[9].text = "caseating necrosis strongly indicates tuberculosis in biopsies";
    item.candidates[4].text = "necrosis appears in many lesions";
    Lexicon empty;
    auto scores = sparse_candidate_scores(item, empty);
    REQUIRE(scores.size() == 14);
    auto ranking = detail::order_by_score_desc(scores);
    CHECK(ranking[0] == 9);
    CHECK(ranking[1] == 4);
    CHECK(scores[9] > scores[4]);
    CHECK(scores[0] == 0.0);

    // dense scores see the same winner through trigram embeddings
    TempDir tmp("dense-rank");
    auto backend = std::make_shared<MockBackend>(nlohmann::json{{"embed", {{"mode", "trigram"}}}});
    Gateway gw(tmp / "cache", backend);
    ProviderConfig emb;
    auto dscores = dense_candidate_scores(item, gw, emb);
    REQUIRE(dscores.size() == 14);
    CHECK(detail::order_by_score_desc(dscores)[0] == 9);
    // one batched embed call for question plus candidates
    CHECK(backend->embed_calls() == 1);
    CHECK(backend->embed_texts() == 15);
}

TEST_CASE("retrieval eval counts failing questions instead of dying") {
    auto g = testutil::rng(905);
    std::vector<BenchmarkItem> items;
    for (int i = 0; i < 6; ++i) items.push_back(testutil::make_item(g, "q00" + std::to_string(i)));
    Ranker flaky = [](const BenchmarkItem& item) -> std::vector<size_t> {
        if (item.question_id == "q002") throw TransportError("provider down");
        if (item.question_id == "q004") throw DataError("bad item");
        return oracle_ranking(item);
    };
    auto report = run_retrieval_eval(items, flaky, 3);
    CHECK(report.failures == 2);
    CHECK(report.records.size() == 4);
    CHECK(report.mean.precision_at_5 == 1.0);
    CHECK(report.mean.question_id == "mean");

    auto tsv = retrieval_report_tsv(report);
    CHECK(tsv.rfind("question_id\tprecision_at_5\thit_at_6\tmean_rank\tior_global\tior_positive\n",
                    0) == 0);
    // one line per record plus header plus mean
    CHECK(std::count(tsv.begin(), tsv.end(), '\n') == 6);
}

TEST_CASE("sweep emits one csv row per value") {
    std::vector<size_t> values = {10, 20, 30, 40};
    auto csv = sweep_csv("k", values, [](size_t v) {
        QaReport r;
        r.mean_keyword = double(v) / 100.0;
        r.mean_coverage = 0.5;
        r.mean_faithfulness = 0.25;
        r.mean_semantic = 0.75;
        return r;
    });
    CHECK(csv.rfind("param,value,keyword,coverage,faithfulness,semantic\n", 0) == 0);
    CHECK(csv.find("k,10,0.1000,0.5000,0.2500,0.7500\n") != std::string::npos);
    CHECK(csv.find("k,40,0.4000,0.5000,0.2500,0.7500\n") != std::string::npos);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
}
