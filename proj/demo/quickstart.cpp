// End-to-end tour on a six-document toy corpus with scripted providers:
// ingest, mine a lexicon, build both indexes, search, and answer a question.
// Everything lives under a throwaway directory printed at the end.

#include <filesystem>
#include <iostream>

#include <json.hpp>

#include <ypath/ypath.hpp>

namespace fs = std::filesystem;
using namespace ypath;

namespace {

const char* kDocs[][2] = {
    {"granuloma",
     "Caseating granulomas show central necrosis surrounded by epithelioid histiocytes. "
     "Langhans giant cells ring the necrotic core in classic tuberculoid reactions. "
     "Acid fast staining highlights mycobacteria within the necrotic center. "
     "Non caseating granulomas lack central necrosis and suggest sarcoidosis instead."},
    {"carcinoma",
     "Invasive ductal carcinoma infiltrates stroma as irregular nests and cords. "
     "Nuclear pleomorphism and frequent mitoses raise the histologic grade. "
     "Perineural invasion predicts local recurrence after excision. "
     "Immunostains for estrogen receptor guide endocrine therapy decisions."},
    {"amyloid",
     "Amyloid deposits appear as amorphous eosinophilic material in vessel walls. "
     "Congo red staining shows apple green birefringence under polarized light. "
     "Mass spectrometry subtypes the amyloid protein when morphology is ambiguous. "
     "Cardiac involvement carries the worst prognosis among systemic forms."},
    {"nephritis",
     "Crescentic glomerulonephritis shows cellular crescents filling Bowman space. "
     "Immunofluorescence separates linear from granular immune deposition patterns. "
     "Pauci immune cases associate with circulating ANCA antibodies. "
     "Rapid progression to renal failure demands urgent immunosuppression."},
    {"cirrhosis",
     "Cirrhosis replaces lobular architecture with regenerative nodules and fibrous septa. "
     "Trichrome staining outlines bridging fibrosis between portal tracts. "
     "Nodule size separates micronodular from macronodular patterns. "
     "Hepatocellular carcinoma risk rises with long standing cirrhosis."},
    {"thyroiditis",
     "Hashimoto thyroiditis shows diffuse lymphocytic infiltration with germinal centers. "
     "Hurthle cell change gives follicular cells abundant granular cytoplasm. "
     "Antithyroid peroxidase antibodies support the clinical diagnosis. "
     "Long standing disease predisposes to marginal zone lymphoma."},
};

nlohmann::json mock_script() {
    return {
        {"embed", {{"dim", 64}, {"mode", "trigram"}}},
        {"chat_rules",
         {
             {{"match", {"Task: supportive-evidence-judgment"}}, {"mode", "overlap_judge"}},
             {{"match", {"Task: evidence-grounded-draft"}}, {"mode", "draft_extract"}},
             {{"match", {"Task: answer-refinement"}}, {"mode", "echo_draft"}},
         }},
        {"chat_default", {{"mode", "const"}, {"text", "OK"}}},
    };
}

}  // namespace

int main() {
    fs::path root = fs::temp_directory_path() / "ypath-quickstart";
    fs::remove_all(root);
    fs::create_directories(root);

    auto backend = std::make_shared<MockBackend>(mock_script());
    Gateway gateway(root / "cache", backend);

    // 1. Ingest: chunk each document into passages and persist the store.
    Store store(root / "store");
    std::vector<Document> docs;
    for (const auto& [id, text] : kDocs) {
        Document d;
        d.doc_id = id;
        d.title = id;
        d.year = 2024;
        d.subfield = "surgical";
        d.raw_text = text;
        docs.push_back(std::move(d));
    }
    ChunkingPolicy policy;
    policy.min_tokens = 8;
    policy.max_tokens = 24;
    StoreStats stats = store.ingest(docs, policy);
    store.persist();
    std::cout << "store: " << stats.docs << " docs -> " << stats.passages << " passages\n";

    // 2. Lexicon: mine multi-word terms, keep the cohesive ones.
    auto lex = std::make_shared<Lexicon>();
    lex->add({"caseating granuloma", TermCategory::PathologySpecific, TermOrigin::Seed, true});
    lex->add({"congo red", TermCategory::PathologySpecific, TermOrigin::Seed, true});
    auto cands = mine_candidates(store, 4, 2);
    FilterThresholds loose{1.0, 0.0, 2};
    for (const auto& c : filter_candidates(cands, loose, lex.get()))
        lex->add({c.term, TermCategory::PathologySpecific, TermOrigin::Mined, false});
    std::cout << "lexicon: " << lex->size() << " terms, version "
              << lex->version().substr(0, 12) << "\n";

    // 3. Indexes: lexical and embedding channels over the same store.
    SparseIndex sparse = SparseIndex::build(store, lex);
    sparse.save(root / "sparse.idx");
    DenseIndex dense = DenseIndex::build(store, gateway, ProviderConfig{});
    dense.save(root / "dense");
    std::cout << "indexes: " << sparse.term_count() << " lexical terms, dim " << dense.dim()
              << " embeddings\n";

    // 4. Search: fuse the two channels for one query.
    std::string query = "necrotizing granuloma with giant cells";
    auto pool = fuse(dense.top_k(embed_query(gateway, ProviderConfig{}, query), 5),
                     sparse.top_k(query, 5));
    std::cout << "\ntop fused hits for \"" << query << "\":\n";
    for (size_t i = 0; i < pool.size() && i < 3; ++i)
        std::cout << "  " << pool[i].passage_ref << "  fused=" << pool[i].fused << "\n";

    // 5. Ask: judge the pool for support, then answer from survivors.
    SedConfig sed;
    std::vector<std::string> texts;
    for (const auto& c : pool) texts.push_back(store.get(c.passage_ref).text);
    auto judgments = judge_pool(gateway, query, pool, texts, sed);
    auto evidence = filter_and_rerank(pool, judgments.judged, sed);
    GenerationConfig gen;
    Answer answer = generate_answer(gateway, query, evidence, store, gen);
    std::cout << "\nanswer: " << answer.text << "\n";
    std::cout << "citations:";
    for (const auto& ref : answer.cited_passage_refs) std::cout << " " << ref;
    std::cout << "\n\nartifacts left in " << root << "\n";
    return 0;
}
