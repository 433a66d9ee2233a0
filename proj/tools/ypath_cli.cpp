#include <cstdint>
#include <filesystem>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <ypath/gateway_http.hpp>
#include <ypath/service.hpp>
#include <ypath/ypath.hpp>

namespace fs = std::filesystem;
using namespace ypath;

namespace {

struct GlobalOpts {
    std::string config_path = "ypath.conf";
    std::string mock_script;
    bool json = false;
    unsigned workers = 4;
};

std::shared_ptr<Backend> make_backend(const GlobalOpts& g) {
    if (!g.mock_script.empty()) return MockBackend::from_file(g.mock_script);
    return std::make_shared<HttpBackend>();
}

Config load_config(const GlobalOpts& g) { return Config::from_file(g.config_path); }

Engine make_engine(const GlobalOpts& g) {
    Engine engine(load_config(g), make_backend(g));
    engine.set_workers(g.workers);
    return engine;
}

void emit_json(const nlohmann::json& j) { std::cout << j.dump(2) << "\n"; }

void write_or_print(const std::string& body, const std::string& out_path) {
    if (out_path.empty()) {
        std::cout << body;
    } else {
        Store::write_file(out_path, body);
        std::cerr << "wrote " << out_path << "\n";
    }
}

std::vector<Document> read_docs_dir(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw DataError("ingest: not a directory: " + dir.string());
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".txt")
            files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw DataError("ingest: no .txt documents in " + dir.string());

    std::vector<Document> docs;
    for (const auto& file : files) {
        Document d;
        d.doc_id = file.stem().string();
        d.source_path = file.string();
        d.raw_text = Store::read_file(file);
        d.title = d.doc_id;
        d.subfield = "general";
        fs::path meta = file;
        meta.replace_extension(".meta.json");
        if (fs::exists(meta)) {
            nlohmann::json j = Store::read_json(meta);
            d.title = j.value("title", d.title);
            d.year = j.value("year", 0);
            d.subfield = j.value("subfield", d.subfield);
        }
        docs.push_back(std::move(d));
    }
    return docs;
}

void check_eval_failures(size_t failures, size_t total) {
    if (total > 0 && failures * 10 > total)
        throw DataError(std::to_string(failures) + " of " + std::to_string(total) +
                        " questions failed (more than 10%)");
}

int cmd_ingest(const GlobalOpts& g, const std::string& docs_dir, const std::string& policy_name,
               size_t min_tokens, size_t max_tokens, size_t overlap) {
    Config cfg = load_config(g);
    ChunkingPolicy policy;
    policy.min_tokens = min_tokens;
    policy.max_tokens = max_tokens;
    policy.overlap_tokens = overlap;
    if (policy_name == "rule") {
        policy.mode = ChunkingPolicy::Mode::Rule;
    } else if (policy_name == "llm") {
        policy.mode = ChunkingPolicy::Mode::LlmAssisted;
    } else {
        throw ConfigError("ingest: unknown policy: " + policy_name);
    }

    Store store(cfg.store_dir());
    if (fs::exists(cfg.lexicon_file())) {
        auto lex = std::make_shared<Lexicon>(Lexicon::load(cfg.lexicon_file()));
        store.set_token_counter(make_token_counter(lex));
    }

    auto docs = read_docs_dir(docs_dir);
    StoreStats stats;
    if (policy.mode == ChunkingPolicy::Mode::LlmAssisted) {
        Gateway gateway(cfg.cache_dir(), make_backend(g));
        ProviderConfig drafter = cfg.provider("drafter");
        stats = store.ingest(docs, policy, &gateway, &drafter);
    } else {
        stats = store.ingest(docs, policy);
    }
    store.persist();

    if (g.json) {
        emit_json({{"command", "ingest"},
                   {"docs", stats.docs},
                   {"passages", stats.passages},
                   {"duplicates_dropped", stats.duplicates_dropped}});
    } else {
        std::cout << "ingested " << stats.docs << " docs, " << stats.passages << " passages, "
                  << stats.duplicates_dropped << " duplicates dropped\n";
    }
    return 0;
}

int cmd_lexicon_mine(const GlobalOpts& g, const std::string& out, size_t max_ngram,
                     uint64_t min_freq, double min_pmi, double min_entropy,
                     const std::string& seed_path) {
    Engine engine = make_engine(g);
    auto cands = mine_candidates(engine.store(), max_ngram, min_freq, engine.workers());
    FilterThresholds t;
    t.min_pmi = min_pmi;
    t.min_entropy = min_entropy;
    t.min_freq = min_freq;
    std::unique_ptr<Lexicon> seed;
    if (!seed_path.empty()) seed = std::make_unique<Lexicon>(Lexicon::load(seed_path));
    auto kept = filter_candidates(cands, t, seed.get());
    save_candidates(kept, out);
    if (g.json) {
        emit_json({{"command", "lexicon mine"},
                   {"candidates", cands.size()},
                   {"kept", kept.size()},
                   {"out", out}});
    } else {
        std::cout << "mined " << cands.size() << " candidates, kept " << kept.size() << " -> "
                  << out << "\n";
    }
    return 0;
}

int cmd_lexicon_validate(const GlobalOpts& g, const std::string& in,
                         const std::string& seed_path) {
    Config cfg = load_config(g);
    auto cands = load_candidates(in);
    Gateway gateway(cfg.cache_dir(), make_backend(g));
    auto entries = llm_validate(cands, gateway, cfg.provider("judge"));

    Lexicon lex;
    if (!seed_path.empty()) {
        Lexicon seed = Lexicon::load(seed_path);
        for (const auto& e : seed.entries()) {
            LexiconEntry copy = e;
            copy.origin = TermOrigin::Seed;
            lex.add(copy);
        }
    }
    for (const auto& e : entries) lex.add(e);
    if (lex.empty()) throw DataError("lexicon validate: no terms survived validation");
    lex.save(cfg.lexicon_file());

    if (g.json) {
        emit_json({{"command", "lexicon validate"},
                   {"input_candidates", cands.size()},
                   {"entries", lex.size()},
                   {"version", lex.version()},
                   {"out", cfg.lexicon_file().string()}});
    } else {
        std::cout << "validated " << lex.size() << " terms (version "
                  << lex.version().substr(0, 12) << ") -> " << cfg.lexicon_file().string()
                  << "\n";
    }
    return 0;
}

int cmd_index_sparse(const GlobalOpts& g, double k1, double b, double term_boost) {
    Engine engine = make_engine(g);
    Bm25Params params;
    params.k1 = k1;
    params.b = b;
    params.lexicon_term_boost = term_boost;
    SparseIndex idx = SparseIndex::build(engine.store(), engine.lexicon(), params);
    fs::path out = engine.config().sparse_index();
    idx.save(out);
    if (g.json) {
        emit_json({{"command", "index sparse"},
                   {"passages", idx.doc_count()},
                   {"terms", idx.term_count()},
                   {"out", out.string()}});
    } else {
        std::cout << "indexed " << idx.doc_count() << " passages, " << idx.term_count()
                  << " terms -> " << out.string() << "\n";
    }
    return 0;
}

int cmd_index_dense(const GlobalOpts& g, size_t batch_size) {
    Engine engine = make_engine(g);
    DenseIndex idx = DenseIndex::build(engine.store(), engine.gateway(),
                                       engine.config().provider("embedder"), batch_size);
    fs::path out = engine.config().dense_dir();
    idx.save(out);
    if (g.json) {
        emit_json({{"command", "index dense"},
                   {"rows", idx.size()},
                   {"dim", idx.dim()},
                   {"out", out.string()}});
    } else {
        std::cout << "embedded " << idx.size() << " passages at dim " << idx.dim() << " -> "
                  << out.string() << "\n";
    }
    return 0;
}

int cmd_search(const GlobalOpts& g, const std::string& query, size_t k, bool judge) {
    Engine engine = make_engine(g);
    SearchResult res = engine.search(query, k, judge);
    if (g.json) {
        emit_json(search_result_json(res));
    } else {
        std::cout << search_result_tsv(res);
    }
    return 0;
}

int cmd_ask(const GlobalOpts& g, const std::string& question) {
    Engine engine = make_engine(g);
    AskResult res = engine.ask(question);
    if (g.json) {
        emit_json(ask_result_json(res));
        return 0;
    }
    std::cout << res.answer.text << "\n";
    if (!res.answer.cited_passage_refs.empty()) {
        std::cout << "\ncitations:";
        for (const auto& ref : res.answer.cited_passage_refs) std::cout << " " << ref;
        std::cout << "\n";
    }
    std::cout << "\nevidence:\n";
    for (const auto& e : res.evidence) {
        std::cout << "  " << e.passage_ref << "  fused=" << detail::fmt_score(e.fused)
                  << " support=" << detail::fmt_score(e.support_score)
                  << " final=" << detail::fmt_score(e.final_score) << "\n";
    }
    if (!res.unjudged.empty()) {
        std::cerr << "warning: " << res.unjudged.size() << " candidates unjudged (transport)\n";
    }
    return 0;
}

int cmd_eval_retrieval(const GlobalOpts& g, const std::string& benchmark,
                       const std::string& ranker_name, const std::string& out) {
    auto items = load_benchmark(benchmark);
    Ranker ranker;
    std::optional<Engine> engine;
    if (ranker_name == "oracle" || ranker_name == "reverse-oracle") {
        ranker = RankerSet{}.make(ranker_name);
    } else {
        engine.emplace(make_engine(g));
        ranker = engine->ranker_set().make(ranker_name);
    }
    RetrievalReport report = run_retrieval_eval(items, ranker, g.workers);
    if (g.json) {
        emit_json({{"command", "eval retrieval"},
                   {"ranker", ranker_name},
                   {"questions", items.size()},
                   {"failures", report.failures},
                   {"mean",
                    {{"precision_at_5", report.mean.precision_at_5},
                     {"hit_at_6", report.mean.hit_at_6},
                     {"mean_rank", report.mean.mean_rank},
                     {"ior_global", report.mean.ior_global},
                     {"ior_positive", report.mean.ior_positive}}}});
    } else {
        write_or_print(retrieval_report_tsv(report), out);
    }
    check_eval_failures(report.failures, items.size());
    return 0;
}

int cmd_eval_qa(const GlobalOpts& g, const std::string& benchmark, const std::string& out) {
    auto items = load_benchmark(benchmark, false);
    Engine engine = make_engine(g);
    QaReport report =
        run_qa_eval(items, engine.qa_pipeline(), engine.gateway(),
                    engine.config().provider("embedder"), engine.config().provider("judge"),
                    g.workers);
    if (g.json) {
        emit_json({{"command", "eval qa"},
                   {"questions", items.size()},
                   {"failures", report.failures},
                   {"mean",
                    {{"keyword", report.mean_keyword},
                     {"coverage", report.mean_coverage},
                     {"faithfulness", report.mean_faithfulness},
                     {"semantic", report.mean_semantic}}},
                   {"missing",
                    {{"coverage", report.missing_coverage},
                     {"faithfulness", report.missing_faithfulness}}}});
    } else {
        write_or_print(qa_report_tsv(report), out);
    }
    check_eval_failures(report.failures, items.size());
    return 0;
}

int cmd_sweep(const GlobalOpts& g, const std::string& param, const std::string& benchmark,
              std::vector<size_t> values, const std::string& out) {
    if (param != "k" && param != "c") throw ConfigError("sweep: param must be k or c");
    if (values.empty()) values = (param == "k") ? std::vector<size_t>{10, 20, 30, 40}
                                                : std::vector<size_t>{1, 2, 3, 5};
    auto items = load_benchmark(benchmark, false);
    Engine engine = make_engine(g);
    auto run_at = [&](size_t v) {
        QaPipeline pipeline =
            (param == "k") ? engine.qa_pipeline(v, 0) : engine.qa_pipeline(0, v);
        return run_qa_eval(items, pipeline, engine.gateway(),
                           engine.config().provider("embedder"),
                           engine.config().provider("judge"), g.workers);
    };
    if (g.json) {
        nlohmann::json rows = nlohmann::json::array();
        for (size_t v : values) {
            QaReport r = run_at(v);
            rows.push_back({{"value", v},
                            {"keyword", r.mean_keyword},
                            {"coverage", r.mean_coverage},
                            {"faithfulness", r.mean_faithfulness},
                            {"semantic", r.mean_semantic}});
        }
        emit_json({{"command", "sweep"}, {"param", param}, {"rows", rows}});
    } else {
        write_or_print(sweep_csv(param, values, run_at), out);
    }
    return 0;
}

int cmd_bench_build(const GlobalOpts& g, size_t n, uint64_t seed, const std::string& out,
                    size_t hardest, const std::string& hardest_out,
                    const std::string& review_out) {
    Engine engine = make_engine(g);
    BenchProviders providers;
    providers.qgen = engine.config().provider("drafter");
    providers.transform = engine.config().provider("drafter");
    providers.judge = engine.config().provider("judge");
    QuestionGenStats stats;
    auto items = build_benchmark(engine.store(), engine.dense(), engine.gateway(), providers, n,
                                 seed, LevelPlan{}, &stats);
    save_benchmark(items, out);
    if (!review_out.empty()) export_review(items, review_out);
    size_t hardest_n = 0;
    if (hardest > 0) {
        if (hardest_out.empty()) throw ConfigError("bench build: --hardest needs --hardest-out");
        bool fewer = false;
        auto subset = select_hardest(items, hardest, &fewer);
        if (fewer)
            std::cerr << "warning: only " << subset.size() << " questions available, asked for "
                      << hardest << "\n";
        save_benchmark(subset, hardest_out, false);
        hardest_n = subset.size();
    }
    if (g.json) {
        nlohmann::json j{{"command", "bench build"},
                         {"questions", items.size()},
                         {"attempted", stats.attempted},
                         {"parse_failures", stats.parse_failures},
                         {"guard_rejections", stats.guard_rejections},
                         {"out", out}};
        if (hardest > 0) j["hardest"] = {{"questions", hardest_n}, {"out", hardest_out}};
        emit_json(j);
    } else {
        std::cout << "built " << items.size() << " questions (attempted " << stats.attempted
                  << ", parse failures " << stats.parse_failures << ", guard rejections "
                  << stats.guard_rejections << ") -> " << out << "\n";
        if (hardest > 0)
            std::cout << "hardest " << hardest_n << " -> " << hardest_out << "\n";
    }
    return 0;
}

int cmd_sed_export(const GlobalOpts& g, const std::string& benchmark, const std::string& out) {
    auto items = load_benchmark(benchmark);
    size_t records = export_training_pairs(items, out);
    if (g.json) {
        emit_json({{"command", "sed export-pairs"}, {"records", records}, {"out", out}});
    } else {
        std::cout << "exported " << records << " pairs -> " << out << "\n";
    }
    return 0;
}

int cmd_serve(const GlobalOpts& g, const std::string& host, int port) {
    Engine engine = make_engine(g);
    Service service(engine);
    std::cerr << "listening on " << host << ":" << port << "\n";
    service.run(host, port);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"hybrid retrieval and grounded QA over a passage corpus"};
    app.require_subcommand(1);

    GlobalOpts g;
    app.add_option("--config", g.config_path, "config file (flat key = value)")
        ->envname("YPRAG_CONFIG");
    app.add_option("--mock-providers", g.mock_script,
                   "scripted provider backend for offline runs");
    app.add_flag("--json", g.json, "machine-readable output");
    app.add_option("--workers", g.workers, "parallelism for batch stages");

    int rc = 0;
    auto run = [&rc](auto fn) {
        return [&rc, fn] { rc = fn(); };
    };

    // ingest
    auto* ingest = app.add_subcommand("ingest", "chunk documents into the passage store");
    std::string docs_dir, policy = "rule";
    size_t min_tokens = 64, max_tokens = 512, overlap = 0;
    ingest->add_option("--docs", docs_dir, "directory of .txt files (+ optional .meta.json)")
        ->required();
    ingest->add_option("--policy", policy, "rule | llm");
    ingest->add_option("--min-tokens", min_tokens, "lower bound per passage");
    ingest->add_option("--max-tokens", max_tokens, "upper bound per passage");
    ingest->add_option("--overlap", overlap, "token overlap between adjacent passages");
    ingest->callback(run([&] {
        return cmd_ingest(g, docs_dir, policy, min_tokens, max_tokens, overlap);
    }));

    // lexicon mine | validate
    auto* lexicon = app.add_subcommand("lexicon", "domain term discovery");
    lexicon->require_subcommand(1);
    auto* mine = lexicon->add_subcommand("mine", "mine and filter term candidates");
    std::string mine_out, mine_seed;
    size_t max_ngram = 6;
    uint64_t min_freq = 5;
    double min_pmi = 3.0, min_entropy = 1.0;
    mine->add_option("--out", mine_out, "candidate TSV path")->required();
    mine->add_option("--max-ngram", max_ngram, "longest unit n-gram considered");
    mine->add_option("--min-freq", min_freq, "frequency floor");
    mine->add_option("--min-pmi", min_pmi, "cohesion floor (bits)");
    mine->add_option("--min-entropy", min_entropy, "boundary entropy floor (bits)");
    mine->add_option("--seed", mine_seed, "seed lexicon whose terms are excluded");
    mine->callback(run([&] {
        return cmd_lexicon_mine(g, mine_out, max_ngram, min_freq, min_pmi, min_entropy,
                                mine_seed);
    }));
    auto* validate = lexicon->add_subcommand("validate", "judge candidates into the lexicon");
    std::string validate_in, validate_seed;
    validate->add_option("--in", validate_in, "candidate TSV from mine")->required();
    validate->add_option("--seed", validate_seed, "seed lexicon merged into the result");
    validate->callback(run([&] { return cmd_lexicon_validate(g, validate_in, validate_seed); }));

    // index sparse | dense
    auto* index = app.add_subcommand("index", "build retrieval indexes");
    index->require_subcommand(1);
    auto* sparse = index->add_subcommand("sparse", "lexical index over the store");
    double k1 = 1.2, b = 0.75, term_boost = 1.0;
    sparse->add_option("--k1", k1, "term-frequency saturation");
    sparse->add_option("--b", b, "length normalization");
    sparse->add_option("--term-boost", term_boost, "idf multiplier for lexicon terms");
    sparse->callback(run([&] { return cmd_index_sparse(g, k1, b, term_boost); }));
    auto* dense = index->add_subcommand("dense", "embedding index over the store");
    size_t batch_size = 64;
    dense->add_option("--batch-size", batch_size, "texts per embedding request");
    dense->callback(run([&] { return cmd_index_dense(g, batch_size); }));

    // search
    auto* search = app.add_subcommand("search", "retrieve the fused candidate pool");
    std::string query;
    size_t search_k = 0;
    bool judge = false;
    search->add_option("query", query, "query text")->required();
    search->add_option("--k", search_k, "pool size override");
    search->add_flag("--judge", judge, "score pool members for support");
    search->callback(run([&] { return cmd_search(g, query, search_k, judge); }));

    // ask
    auto* ask = app.add_subcommand("ask", "answer a question with cited evidence");
    std::string question;
    ask->add_option("question", question, "question text")->required();
    ask->callback(run([&] { return cmd_ask(g, question); }));

    // eval retrieval | qa
    auto* eval = app.add_subcommand("eval", "benchmark evaluation");
    eval->require_subcommand(1);
    auto* eval_r = eval->add_subcommand("retrieval", "ranking metrics over candidates");
    std::string eval_bench, eval_ranker = "hybrid-sed", eval_out;
    eval_r->add_option("--benchmark", eval_bench, "benchmark JSONL")->required();
    eval_r->add_option("--ranker", eval_ranker,
                       "oracle | reverse-oracle | sparse | dense | hybrid | hybrid-sed | "
                       "hybrid-oracle-sed");
    eval_r->add_option("--out", eval_out, "write TSV here instead of stdout");
    eval_r->callback(run([&] { return cmd_eval_retrieval(g, eval_bench, eval_ranker, eval_out); }));
    auto* eval_q = eval->add_subcommand("qa", "answer-quality metrics end to end");
    std::string qa_bench, qa_out;
    eval_q->add_option("--benchmark", qa_bench, "benchmark JSONL")->required();
    eval_q->add_option("--out", qa_out, "write TSV here instead of stdout");
    eval_q->callback(run([&] { return cmd_eval_qa(g, qa_bench, qa_out); }));

    // sweep
    auto* sweep = app.add_subcommand("sweep", "ablation over pool size or context size");
    std::string sweep_param, sweep_bench, sweep_out;
    std::vector<size_t> sweep_values;
    sweep->add_option("param", sweep_param, "k | c")->required();
    sweep->add_option("--benchmark", sweep_bench, "benchmark JSONL")->required();
    sweep->add_option("--values", sweep_values, "comma-separated values")->delimiter(',');
    sweep->add_option("--out", sweep_out, "write CSV here instead of stdout");
    sweep->callback(run([&] { return cmd_sweep(g, sweep_param, sweep_bench, sweep_values, sweep_out); }));

    // bench build
    auto* bench = app.add_subcommand("bench", "benchmark construction");
    bench->require_subcommand(1);
    auto* build = bench->add_subcommand("build", "generate questions and candidate sets");
    size_t bench_n = 60, hardest = 0;
    uint64_t bench_seed = 0;
    std::string bench_out, hardest_out, review_out;
    build->add_option("--n", bench_n, "questions to attempt");
    build->add_option("--seed", bench_seed, "sampling seed")->required();
    build->add_option("--out", bench_out, "benchmark JSONL path")->required();
    build->add_option("--hardest", hardest, "also export the m hardest questions");
    build->add_option("--hardest-out", hardest_out, "path for the hardest subset");
    build->add_option("--review-out", review_out, "candidate review TSV for human edits");
    build->callback(run([&] {
        return cmd_bench_build(g, bench_n, bench_seed, bench_out, hardest, hardest_out,
                               review_out);
    }));

    // sed export-pairs
    auto* sed = app.add_subcommand("sed", "support-judge utilities");
    sed->require_subcommand(1);
    auto* pairs = sed->add_subcommand("export-pairs", "benchmark to training pairs JSONL");
    std::string pairs_bench, pairs_out;
    pairs->add_option("--benchmark", pairs_bench, "benchmark JSONL")->required();
    pairs->add_option("--out", pairs_out, "training pairs path")->required();
    pairs->callback(run([&] { return cmd_sed_export(g, pairs_bench, pairs_out); }));

    // serve
    auto* serve = app.add_subcommand("serve", "read-only JSON service");
    std::string host = "127.0.0.1";
    int port = 8080;
    serve->add_option("--host", host, "bind address");
    serve->add_option("--port", port, "bind port");
    serve->callback(run([&] { return cmd_serve(g, host, port); }));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const IndexError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const TransportError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const ProtocolError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return rc;
}
