// Hashing, text utilities, binary IO, config parsing, and the gateway
// (cache, retries, batching, concurrency bound) against hand-checked and
// brute-force oracles.

#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <set>
#include <thread>

#include <ypath/ypath.hpp>

#include "test_util.hpp"

using namespace ypath;
using testutil::TempDir;

// ---------------------------------------------------------------------------
// hashing
// ---------------------------------------------------------------------------

TEST_CASE("sha256 matches published test vectors") {
    CHECK(detail::sha256_hex("") ==
          "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(detail::sha256_hex("abc") ==
          "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(detail::sha256_hex("The quick brown fox jumps over the lazy dog") ==
          "d7a8fbb307d7809469ca9abcb0082e4f8d5651e46d3cdb762d02d0bf37c9e592");
    // incremental update equals one-shot
    detail::Sha256 h;
    h.update("ab");
    h.update("c");
    auto d = h.digest();
    CHECK(detail::hex_encode(d.data(), d.size()) ==
          "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    // block-boundary lengths
    std::string s55(55, 'a'), s56(56, 'a'), s64(64, 'a'), s1000(1000, 'a');
    CHECK(detail::sha256_hex(s55) ==
          "9f4390f8d30c2dd92ec9f095b65e2b9ae9b0a925a5258e241c9f1e910f734318");
    CHECK(detail::sha256_hex(s64) ==
          "ffe054fe7ae0cb6dc65c3af9b61d5209f439851db43d0ba5997337df154668eb");
    CHECK(detail::sha256_hex(s55) != detail::sha256_hex(s56));
    CHECK(detail::sha256_hex(s1000).size() == 64);
}

TEST_CASE("fnv1a64 matches the reference constants") {
    CHECK(detail::fnv1a64("") == 0xcbf29ce484222325ULL);
    CHECK(detail::fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
    CHECK(detail::fnv1a64("foobar") == 0x85944171f73967e8ULL);
    CHECK(detail::fnv1a64("a") != detail::fnv1a64("b"));
}

TEST_CASE("u64_hex round trips") {
    auto g = testutil::rng(7);
    for (int i = 0; i < 200; ++i) {
        uint64_t v = g();
        std::string hex = detail::u64_hex(v);
        REQUIRE(hex.size() == 16);
        CHECK(detail::parse_u64_hex(hex) == v);
    }
    CHECK(detail::u64_hex(0) == "0000000000000000");
    CHECK(detail::u64_hex(0xdeadbeefULL) == "00000000deadbeef");
}

TEST_CASE("splitmix64 is a deterministic stream") {
    uint64_t s1 = 42, s2 = 42;
    std::vector<uint64_t> a, b;
    for (int i = 0; i < 16; ++i) a.push_back(detail::splitmix64(s1));
    for (int i = 0; i < 16; ++i) b.push_back(detail::splitmix64(s2));
    CHECK(a == b);
    CHECK(std::set<uint64_t>(a.begin(), a.end()).size() == a.size());
}

// ---------------------------------------------------------------------------
// binary io
// ---------------------------------------------------------------------------

TEST_CASE("binio round trips scalars and strings") {
    auto g = testutil::rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        std::string buf;
        uint32_t u32 = uint32_t(g());
        uint64_t u64 = g();
        double f = double(int64_t(g())) / 7.0;
        std::string s = testutil::random_word(g, 0, 40);
        detail::write_u32(buf, u32);
        detail::write_u64(buf, u64);
        detail::write_f64(buf, f);
        detail::write_str(buf, s);
        size_t pos = 0;
        CHECK(detail::read_u32(buf, pos) == u32);
        CHECK(detail::read_u64(buf, pos) == u64);
        CHECK(detail::read_f64(buf, pos) == f);
        CHECK(detail::read_str(buf, pos) == s);
        CHECK(pos == buf.size());
    }
}

TEST_CASE("binio rejects truncated input") {
    std::string buf;
    detail::write_str(buf, "hello world");
    for (size_t cut = 0; cut < buf.size(); ++cut) {
        std::string part = buf.substr(0, cut);
        size_t pos = 0;
        CHECK_THROWS_AS(detail::read_str(part, pos), IndexError);
    }
}

// ---------------------------------------------------------------------------
// text utilities
// ---------------------------------------------------------------------------

TEST_CASE("normalize_text collapses whitespace and is idempotent") {
    CHECK(detail::normalize_text("  a\t\n b  ") == "a b");
    CHECK(detail::normalize_text("") == "");
    CHECK(detail::normalize_text(" \n\t ") == "");
    CHECK(detail::normalize_text("one  two") == "one two");
    auto g = testutil::rng(3);
    std::uniform_int_distribution<int> ch(0, 127);
    for (int i = 0; i < 200; ++i) {
        std::string s;
        for (int j = 0; j < 60; ++j) s.push_back(char(ch(g)));
        std::string once = detail::normalize_text(s);
        CHECK(detail::normalize_text(once) == once);
    }
}

TEST_CASE("invalid utf8 is replaced, never fatal") {
    std::string bad = "ok \xff\xfe then \xc3 end";
    std::string out = detail::normalize_text(bad);
    CHECK(out.find("ok") != std::string::npos);
    CHECK(out.find("end") != std::string::npos);
    CHECK(detail::normalize_text(out) == out);
}

TEST_CASE("casefold lowers ascii only") {
    CHECK(detail::casefold("HER2-Positive") == "her2-positive");
    CHECK(detail::casefold("MiXeD 123") == "mixed 123");
    std::string cjk = "\xe7\x97\x85\xe7\x90\x86";  // CJK stays untouched
    CHECK(detail::casefold(cjk) == cjk);
}

TEST_CASE("split_sentences handles terminators, decimals, and cjk stops") {
    auto texts = [](std::string_view s) {
        std::vector<std::string> out;
        for (auto& sp : detail::split_sentences(s))
            out.push_back(std::string(s.substr(sp.begin, sp.end - sp.begin)));
        return out;
    };
    auto t1 = texts("First finding. Second finding. ");
    REQUIRE(t1.size() == 2);
    CHECK(t1[0] == "First finding.");
    // a period inside a decimal does not split
    auto t2 = texts("Tumor measures 3.5 cm in extent. Margins are clear.");
    REQUIRE(t2.size() == 2);
    CHECK(t2[0] == "Tumor measures 3.5 cm in extent.");
    // ! and ? split, delimiter stays attached
    auto t3 = texts("Really? Yes! Done.");
    REQUIRE(t3.size() == 3);
    CHECK(t3[0] == "Really?");
    CHECK(t3[1] == "Yes!");
    // CJK full stop splits without trailing space
    auto t4 = texts("\xe7\x97\x85\xe5\x8f\x98\xe3\x80\x82\xe6\x98\x8e\xe6\x98\xbe\xe3\x80\x82");
    CHECK(t4.size() == 2);
    // newline ends a sentence
    auto t5 = texts("header line\nbody text.");
    REQUIRE(t5.size() == 2);
    CHECK(t5[0] == "header line");
    // no terminator at all: the whole text is one sentence
    auto t6 = texts("no terminator here");
    REQUIRE(t6.size() == 1);
    CHECK(t6[0] == "no terminator here");
}

TEST_CASE("sentence spans tile their source text") {
    auto g = testutil::rng(5);
    auto vocab = testutil::make_vocab(g, 12);
    for (int i = 0; i < 50; ++i) {
        std::string doc;
        int n = 1 + int(g() % 6);
        for (int k = 0; k < n; ++k) {
            if (k) doc.push_back(' ');
            doc += testutil::random_sentence(g, vocab, 2, 9);
        }
        auto spans = detail::split_sentences(doc);
        size_t prev_end = 0;
        for (const auto& sp : spans) {
            CHECK(sp.begin >= prev_end);
            CHECK(sp.end > sp.begin);
            prev_end = sp.end;
        }
        CHECK(prev_end <= doc.size());
    }
}

TEST_CASE("unit segmentation separates words, cjk chars, punctuation") {
    auto units = detail::segment_units("HER2-positive breast cases");
    REQUIRE(units == std::vector<std::string>{"her2", "positive", "breast", "cases"});
    // single cjk characters are their own units
    auto cjk = detail::segment_units("\xe7\x97\x85\xe7\x90\x86 report");
    REQUIRE(cjk.size() == 3);
    CHECK(cjk[0] == "\xe7\x97\x85");
    CHECK(cjk[1] == "\xe7\x90\x86");
    CHECK(cjk[2] == "report");
    // punctuation spans are kept by segment_unit_spans but not segment_units
    auto spans = detail::segment_unit_spans("a, b");
    REQUIRE(spans.size() == 3);
    CHECK(spans[0].is_word);
    CHECK_FALSE(spans[1].is_word);
    CHECK(spans[2].is_word);
}

TEST_CASE("fallback token count equals word unit count") {
    CHECK(detail::fallback_token_count("one two, three") == 3);
    CHECK(detail::fallback_token_count("") == 0);
    CHECK(detail::fallback_token_count("...") == 0);
    CHECK(detail::fallback_token_count("\xe7\x97\x85\xe7\x90\x86 exam") == 3);
}

// ---------------------------------------------------------------------------
// config
// ---------------------------------------------------------------------------

TEST_CASE("config parses flat key-value files") {
    TempDir tmp("config");
    auto path = tmp / "ypath.conf";
    Store::write_file(path,
                      "# comment\n"
                      "paths.store_dir = /data/store\n"
                      "retrieval.pool_k=25\n"
                      "retrieval.w_dense = 0.6\n"
                      "sed.threshold = 0.4\n"
                      "generation.single_stage = true\n"
                      "providers.judge.model_id = judge-v2\n"
                      "\n");
    Config cfg = Config::from_file(path);
    CHECK(cfg.store_dir() == "/data/store");
    CHECK(cfg.retrieval().pool_k == 25);
    CHECK(cfg.retrieval().w_dense == 0.6);
    CHECK(cfg.sed().threshold == 0.4);
    CHECK(cfg.generation().single_stage == true);
    CHECK(cfg.provider("judge").model_id == "judge-v2");
    // defaults fill unset keys
    CHECK(cfg.sed().alpha == 0.5);
    CHECK(cfg.generation().context_c == 3);
    CHECK(cfg.provider("embedder").model_id == "embedder");
    // missing required key
    CHECK_THROWS_AS(cfg.lexicon_file(), ConfigError);
}

TEST_CASE("config rejects malformed input") {
    TempDir tmp("config-bad");
    auto path = tmp / "bad.conf";
    Store::write_file(path, "just a line without equals\n");
    CHECK_THROWS_AS(Config::from_file(path), ConfigError);
    Store::write_file(path, "retrieval.pool_k = banana\n");
    Config cfg = Config::from_file(path);
    CHECK_THROWS_AS(cfg.retrieval(), ConfigError);
    Store::write_file(path, "generation.single_stage = maybe\n");
    CHECK_THROWS_AS(Config::from_file(path).generation(), ConfigError);
    CHECK_THROWS_AS(Config::from_file(tmp / "missing.conf"), ConfigError);
}

TEST_CASE("environment variables override config keys") {
    TempDir tmp("config-env");
    auto path = tmp / "ypath.conf";
    Store::write_file(path, "retrieval.pool_k = 20\n");
    Config cfg = Config::from_file(path);
    CHECK(cfg.retrieval().pool_k == 20);
    ::setenv("YPRAG_RETRIEVAL_POOL_K", "31", 1);
    CHECK(cfg.retrieval().pool_k == 31);
    ::unsetenv("YPRAG_RETRIEVAL_POOL_K");
    CHECK(cfg.retrieval().pool_k == 20);
    // env can introduce keys absent from the file
    ::setenv("YPRAG_PATHS_CACHE_DIR", "/tmp/altcache", 1);
    CHECK(cfg.cache_dir() == "/tmp/altcache");
    ::unsetenv("YPRAG_PATHS_CACHE_DIR");
}

// ---------------------------------------------------------------------------
// mock backend
// ---------------------------------------------------------------------------

TEST_CASE("mock rules match in order on system plus user text") {
    nlohmann::json script = {
        {"chat_rules",
         {{{"match", {"alpha"}}, {"mode", "const"}, {"text", "FIRST"}},
          {{"match", {"beta", "gamma"}}, {"mode", "const"}, {"text", "SECOND"}}}},
        {"chat_default", {{"mode", "const"}, {"text", "DEFAULT"}}}};
    MockBackend mock(script);
    ChatRequest req;
    req.system_text = "task alpha";
    req.user_text = "anything";
    CHECK(mock.chat({}, req) == "FIRST");
    req.system_text = "other";
    req.user_text = "mentions gamma here";
    CHECK(mock.chat({}, req) == "SECOND");
    req.user_text = "nothing matches";
    CHECK(mock.chat({}, req) == "DEFAULT");
    // first matching rule wins even if later rules also match
    req.system_text = "alpha beta";
    CHECK(mock.chat({}, req) == "FIRST");
    CHECK(mock.chat_calls() == 4);
}

TEST_CASE("mock modes behave as scripted") {
    MockBackend mock;
    ChatRequest req;
    req.user_text = "payload";

    nlohmann::json script = {
        {"chat_rules",
         {{{"match", {"ECHO"}}, {"mode", "echo_user"}},
          {{"match", {"RATIO"}}, {"mode", "ratio"}, {"num", 5}, {"den", 8}},
          {{"match", {"FAIL"}}, {"mode", "fail"}},
          {{"match", {"EXTRACT"}}, {"mode", "extract_passage"}},
          {{"match", {"VAGUE"}}, {"mode", "vague"}},
          {{"match", {"CONTRA"}}, {"mode", "contradict"}}}}};
    mock.configure(script);

    req.system_text = "ECHO";
    CHECK(mock.chat({}, req) == "payload");

    req.system_text = "RATIO";
    CHECK(mock.chat({}, req) == "5/8");

    req.system_text = "FAIL";
    CHECK_THROWS_AS(mock.chat({}, req), TransportError);

    req.system_text = "EXTRACT";
    req.user_text = std::string(prompts::kPassageBegin) + "inner text" + prompts::kPassageEnd;
    CHECK(mock.chat({}, req) == "inner text");

    req.system_text = "VAGUE";
    req.user_text = std::string(prompts::kPassageBegin) +
                    "Nuclear atypia with mitoses indicates high grade disease here." +
                    prompts::kPassageEnd;
    std::string vague = mock.chat({}, req);
    CHECK(vague.rfind("Nuclear atypia with mitoses indicates", 0) == 0);
    CHECK(vague.find("general terms") != std::string::npos);

    req.system_text = "CONTRA";
    req.user_text = std::string(prompts::kPassageBegin) + "Grade 2 lesion" + prompts::kPassageEnd;
    CHECK(mock.chat({}, req).find("Grade 7") != std::string::npos);
    req.user_text = std::string(prompts::kPassageBegin) + "margin is clear" + prompts::kPassageEnd;
    CHECK(mock.chat({}, req).find("is not clear") != std::string::npos);
}

TEST_CASE("mock embeddings are pure and unit length") {
    auto v1 = MockBackend::mock_embedding("some text", 64, "trigram");
    auto v2 = MockBackend::mock_embedding("some text", 64, "trigram");
    CHECK(v1 == v2);
    CHECK(detail::l2_norm(v1) == Catch::Approx(1.0).epsilon(1e-5));
    auto h1 = MockBackend::mock_embedding("some text", 64, "hash");
    CHECK(detail::l2_norm(h1) == Catch::Approx(1.0).epsilon(1e-5));
    CHECK(v1 != h1);
    // trigram mode: shared substrings pull vectors together
    auto a = MockBackend::mock_embedding("caseating granuloma with necrosis", 128, "trigram");
    auto b = MockBackend::mock_embedding("caseating granuloma with histiocytes", 128, "trigram");
    auto c = MockBackend::mock_embedding("unrelated wording entirely", 128, "trigram");
    auto dot = [](const std::vector<float>& x, const std::vector<float>& y) {
        double s = 0;
        for (size_t i = 0; i < x.size(); ++i) s += double(x[i]) * double(y[i]);
        return s;
    };
    CHECK(dot(a, b) > dot(a, c));
    // casefolded input: case differences do not change the vector
    CHECK(MockBackend::mock_embedding("Tumor Grade", 64, "trigram") ==
          MockBackend::mock_embedding("tumor grade", 64, "trigram"));
    // text too short for trigrams falls back to the hash stream
    auto tiny = MockBackend::mock_embedding("ab", 32, "trigram");
    CHECK(detail::l2_norm(tiny) == Catch::Approx(1.0).epsilon(1e-5));
}

// ---------------------------------------------------------------------------
// gateway: cache keys
// ---------------------------------------------------------------------------

TEST_CASE("chat cache keys separate every request dimension") {
    ProviderConfig p;
    p.model_id = "m1";
    ChatRequest base;
    base.system_text = "sys";
    base.user_text = "user";
    std::string k0 = Gateway::chat_cache_key(p, base);

    ChatRequest r = base;
    r.user_text = "user ";  // byte-exact: trailing space is a different prompt
    CHECK(Gateway::chat_cache_key(p, r) != k0);
    r = base;
    r.system_text = "sys2";
    CHECK(Gateway::chat_cache_key(p, r) != k0);
    r = base;
    r.temperature = 0.5;
    CHECK(Gateway::chat_cache_key(p, r) != k0);
    r = base;
    r.max_tokens = 77;
    CHECK(Gateway::chat_cache_key(p, r) != k0);
    r = base;
    r.seed = std::nullopt;
    CHECK(Gateway::chat_cache_key(p, r) != k0);
    ProviderConfig p2 = p;
    p2.model_id = "m2";
    CHECK(Gateway::chat_cache_key(p2, base) != k0);
    // stable across calls
    CHECK(Gateway::chat_cache_key(p, base) == k0);

    CHECK(Gateway::embed_cache_key(p, "a") != Gateway::embed_cache_key(p, "b"));
    CHECK(Gateway::embed_cache_key(p, "a") != Gateway::embed_cache_key(p2, "a"));
    CHECK(Gateway::embed_cache_key(p, "a") == Gateway::embed_cache_key(p, "a"));
}

TEST_CASE("gateway serves repeats from the disk cache") {
    TempDir tmp("gw-cache");
    auto backend = std::make_shared<MockBackend>();
    ProviderConfig p;
    p.model_id = "m";
    ChatRequest req;
    req.system_text = "s";
    req.user_text = "hello";
    {
        Gateway gw(tmp / "cache", backend);
        CHECK(gw.chat(p, req) == "OK");
        CHECK(gw.chat(p, req) == "OK");
        CHECK(backend->chat_calls() == 1);
        CHECK(gw.cache_hits() == 1);
        CHECK(gw.cache_misses() == 1);
        req.user_text = "different";
        gw.chat(p, req);
        CHECK(backend->chat_calls() == 2);
    }
    // a fresh gateway over the same directory reuses the records
    Gateway gw2(tmp / "cache", backend);
    req.user_text = "hello";
    CHECK(gw2.chat(p, req) == "OK");
    CHECK(backend->chat_calls() == 2);
}

TEST_CASE("gateway validates chat requests") {
    TempDir tmp("gw-val");
    Gateway gw(tmp / "cache", std::make_shared<MockBackend>());
    ProviderConfig p;
    ChatRequest req;
    req.user_text = "";
    CHECK_THROWS_AS(gw.chat(p, req), DataError);
    req.user_text = "x";
    req.temperature = 2.5;
    CHECK_THROWS_AS(gw.chat(p, req), DataError);
    ProviderConfig bad;
    bad.max_in_flight = 0;
    req.temperature = 0;
    CHECK_THROWS_AS(gw.chat(bad, req), ConfigError);
}

TEST_CASE("embed caches per text and batches misses") {
    TempDir tmp("gw-embed");
    auto backend = std::make_shared<MockBackend>();
    backend->set_embed_dim(16);
    Gateway gw(tmp / "cache", backend);
    ProviderConfig p;
    p.model_id = "e";

    auto b1 = gw.embed(p, {"alpha", "beta"}, 64);
    CHECK(b1.dim == 16);
    CHECK(backend->embed_texts() == 2);
    auto b2 = gw.embed(p, {"beta", "gamma"}, 64);
    CHECK(backend->embed_texts() == 3);  // beta came from cache
    CHECK(b2.vectors[0] == b1.vectors[1]);

    // batches of size 3 over 7 misses -> 3 backend calls
    std::vector<std::string> texts;
    for (int i = 0; i < 7; ++i) texts.push_back("text" + std::to_string(i));
    uint64_t calls_before = backend->embed_calls();
    gw.embed(p, texts, 3);
    CHECK(backend->embed_calls() - calls_before == 3);

    // all vectors are unit length even when the provider is not normalized
    auto raw = std::make_shared<MockBackend>();
    raw->configure({{"embed", {{"dim", 8}, {"mode", "hash"}, {"unnormalized", true}}}});
    Gateway gw2(tmp / "cache2", raw);
    auto b3 = gw2.embed(p, {"anything"}, 8);
    CHECK(detail::l2_norm(b3.vectors[0]) == Catch::Approx(1.0).epsilon(1e-5));

    CHECK_THROWS_AS(gw.embed(p, {}, 4), DataError);
    CHECK_THROWS_AS(gw.embed(p, {""}, 4), DataError);
}

TEST_CASE("transport errors retry with a bounded budget") {
    TempDir tmp("gw-retry");
    auto backend = std::make_shared<MockBackend>();
    Gateway gw(tmp / "cache", backend);
    ProviderConfig p;
    p.max_retries = 2;

    int failures_left = 2;
    int calls = 0;
    backend->set_chat_handler([&](const ChatRequest&) -> std::string {
        ++calls;
        if (failures_left-- > 0) throw TransportError("flaky");
        return "recovered";
    });
    ChatRequest req;
    req.user_text = "q1";
    CHECK(gw.chat(p, req) == "recovered");
    CHECK(calls == 3);

    failures_left = 3;  // one more than the retry budget allows
    calls = 0;
    req.user_text = "q2";
    CHECK_THROWS_AS(gw.chat(p, req), TransportError);
    CHECK(calls == 3);

    // protocol errors do not retry
    calls = 0;
    backend->set_chat_handler([&](const ChatRequest&) -> std::string {
        ++calls;
        throw ProtocolError("bad shape");
    });
    req.user_text = "q3";
    CHECK_THROWS_AS(gw.chat(p, req), ProtocolError);
    CHECK(calls == 1);
}

TEST_CASE("per-provider in-flight bound holds under parallel calls") {
    TempDir tmp("gw-conc");
    auto backend = std::make_shared<MockBackend>();
    backend->set_delay_ms(15);
    Gateway gw(tmp / "cache", backend);
    ProviderConfig p;
    p.max_in_flight = 2;

    std::vector<std::thread> threads;
    for (int i = 0; i < 8; ++i) {
        threads.emplace_back([&gw, &p, i] {
            ChatRequest req;
            req.user_text = "concurrent " + std::to_string(i);
            gw.chat(p, req);
        });
    }
    for (auto& t : threads) t.join();
    CHECK(backend->peak_in_flight() <= 2);
    CHECK(backend->chat_calls() == 8);
}

TEST_CASE("disk cache writes survive and tolerate garbage records") {
    TempDir tmp("cache-dir");
    DiskCache cache(tmp / "c");
    cache.put("key1", {{"v", 42}});
    auto hit = cache.get("key1");
    REQUIRE(hit.has_value());
    CHECK((*hit)["v"] == 42);
    CHECK_FALSE(cache.get("absent").has_value());
    // corrupt record reads as a miss
    Store::write_file(tmp / "c" / "key2.json", "{not json");
    CHECK_FALSE(cache.get("key2").has_value());
}
