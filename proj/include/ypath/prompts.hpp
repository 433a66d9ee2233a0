#pragma once

// Prompt templates are versioned text assets: bump the _v suffix whenever
// wording changes, since prompt bytes feed response cache keys.

namespace ypath::prompts {

// Block markers shared by prompt builders, response parsers, and the
// scripted mock backend. Payload goes between begin/end lines verbatim.
inline constexpr const char* kPassageBegin = "PASSAGE:\n";
inline constexpr const char* kPassageEnd = "\nEND PASSAGE";
inline constexpr const char* kQuestionBegin = "QUESTION:\n";
inline constexpr const char* kQuestionEnd = "\nEND QUESTION";
inline constexpr const char* kAnswerBegin = "ANSWER:\n";
inline constexpr const char* kAnswerEnd = "\nEND ANSWER";
inline constexpr const char* kDraftBegin = "DRAFT:\n";
inline constexpr const char* kDraftEnd = "\nEND DRAFT";
inline constexpr const char* kEvidenceBegin = "EVIDENCE:\n";
inline constexpr const char* kEvidenceEnd = "\nEND EVIDENCE";
inline constexpr const char* kReferenceBegin = "REFERENCE:\n";
inline constexpr const char* kReferenceEnd = "\nEND REFERENCE";
inline constexpr const char* kIntendedLevelPrefix = "INTENDED LEVEL: ";
inline constexpr const char* kTermPrefix = "TERM: ";
inline constexpr const char* kDocumentBegin = "DOCUMENT:\n";
inline constexpr const char* kDocumentEnd = "\nEND DOCUMENT";
inline constexpr const char* kSegmentSeparator = "===SEGMENT===";

// --- store: LLM-assisted chunking (chunk_llm_v1) ---
inline constexpr const char* kChunkSystem =
    "Task: semantic-chunking.\n"
    "Split the document into semantically complete segments. Preserve the original wording "
    "exactly; the only permitted edit is replacing a pronoun with the noun phrase it refers to. "
    "Do not summarize, reorder, or drop text. Output the segments in order, separated by lines "
    "containing exactly ===SEGMENT===. Output nothing else.";

// --- lexicon: term validation (lexicon_validate_v1) ---
inline constexpr const char* kLexiconValidateSystem =
    "Task: lexicon-validation.\n"
    "You classify candidate terms mined from a pathology corpus. Reply with exactly one word: "
    "PATHOLOGY if the term is pathology-specific, GENERIC_MEDICAL if it is general medical "
    "vocabulary, or REJECT if it is not a meaningful domain term.";

// --- sed: supportive evidence judgment (sed_judge_v1) ---
inline constexpr const char* kSedJudgeSystem =
    "Task: supportive-evidence-judgment.\n"
    "Decide whether the passage provides factual evidence for answering the question, beyond "
    "mere topical relevance. Grade it as one of P1 (direct evidence), P2 (partial support), "
    "P3 (weak or contextual support), A1 (topic mismatch), A2 (semantically vague), "
    "A3 (contradicts the required conditions), A4 (non-informative boilerplate). "
    "Reply with exactly one line in the form LEVEL|SCORE|RATIONALE where SCORE is a number "
    "between 0 and 1 measuring support strength.";

// --- generate: two-stage answering (draft_v1 / refine_v1) ---
inline constexpr const char* kDraftSystem =
    "Task: evidence-grounded-draft.\n"
    "Answer the question using only the numbered evidence passages. Cite every factual claim "
    "with the bracketed index of its supporting passage, e.g. [2]. If the evidence is "
    "insufficient, say so explicitly. Do not use outside knowledge.";

inline constexpr const char* kRefineSystem =
    "Task: answer-refinement.\n"
    "Rewrite the draft answer for clarity, structure, and readability. Preserve every factual "
    "claim and every bracketed citation exactly; do not add new claims or new citations.";

// --- benchbuild: question generation (bench_qgen_v1) ---
inline constexpr const char* kQgenSystem =
    "Task: question-generation.\n"
    "From the passage, write one professional exam-style question answerable from the passage "
    "alone, the reference answer, and 3 to 8 keywords taken from the answer. Reply in exactly "
    "this format:\nQUESTION: <question>\nANSWER: <answer>\nKEYWORDS: <k1>; <k2>; <k3>";

// --- benchbuild: candidate synthesis (bench_vague_v1 / bench_contradict_v1) ---
inline constexpr const char* kVagueSystem =
    "Task: vague-paraphrase.\n"
    "Rewrite the passage so it stays on topic but loses all evidentiary value: keep the topic "
    "words, remove all specific claims, findings, numbers, and conditions. Output only the "
    "rewritten text.";

inline constexpr const char* kContradictSystem =
    "Task: contradiction-synthesis.\n"
    "Rewrite the passage preserving its wording except for one change: flip one quantitative "
    "or temporal condition so the passage contradicts the original. Output only the rewritten "
    "text.";

// --- benchbuild: support scoring (bench_score_v1) ---
inline constexpr const char* kBenchScoreSystem =
    "Task: support-scoring.\n"
    "Given a question and a candidate passage with its intended support level, confirm or "
    "override the level, assign a rank score between 0.10 and 0.95 measuring support strength, "
    "and justify briefly. Levels: P1 direct evidence, P2 partial, P3 weak, A1 topic mismatch, "
    "A2 vague, A3 contradiction, A4 non-informative. Reply with exactly one line: "
    "LEVEL|SCORE|JUSTIFICATION.";

// --- eval: judged coverage / faithfulness (eval_coverage_v1 / eval_faithfulness_v1) ---
inline constexpr const char* kCoverageSystem =
    "Task: coverage-judgment.\n"
    "Enumerate the atomic information points of the reference answer, count how many are "
    "covered by the candidate answer, and reply with exactly COVERED/TOTAL as two integers, "
    "e.g. 3/4. Output nothing else.";

inline constexpr const char* kFaithfulnessSystem =
    "Task: faithfulness-judgment.\n"
    "Enumerate the atomic factual claims of the answer, count how many are supported by the "
    "evidence passages, and reply with exactly SUPPORTED/TOTAL as two integers, e.g. 3/4. "
    "Output nothing else.";

}  // namespace ypath::prompts
