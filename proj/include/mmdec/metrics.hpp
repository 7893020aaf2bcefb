#pragma once

#include "mmdec/decoding.hpp"
#include "mmdec/synthdata.hpp"

#include <optional>
#include <vector>

namespace mmdec {

struct CaptionRecord {
    int32_t scene_id = 0;
    std::vector<Token> tokens;
    std::vector<std::pair<int, int>> sentences; // [begin,end) intervals, partition

    // Splits on the separator token; the separator belongs to the sentence it
    // terminates. An empty token list has zero sentences.
    static CaptionRecord from_tokens(int32_t scene_id, std::vector<Token> tokens,
                                     Token separator = kTokenSep);
};

struct ObjectMentions {
    std::vector<std::vector<int>> per_sentence; // object indices, repeats kept
    std::vector<int> unique_objects;            // caption level, ascending
};

// Maps canonical and synonym text tokens to canonical objects.
ObjectMentions extract_objects(const CaptionRecord& caption, const Lexicon& lexicon);

struct ChairResult {
    double chair_s = 0.0;
    double chair_i = 0.0;
    int64_t halluc_sentences = 0;
    int64_t total_sentences = 0;
    int64_t halluc_objects = 0;    // caption-level unique hallucinated mentions
    int64_t mentioned_objects = 0; // caption-level unique mentions
    bool zero_mention_warning = false;
};

// Corpus-pooled sentence- and object-level hallucination ratios. A mentioned
// object is hallucinated when it is not in the caption's scene.
ChairResult chair_metrics(const std::vector<CaptionRecord>& captions,
                          const std::vector<Scene>& scenes, const Lexicon& lexicon);

struct PopeAnswer {
    PopeQuestion question;
    bool predicted_yes = false;
    bool invalid = false; // emitted token was not a designated answer token
};

struct PopeMetrics {
    int64_t tp = 0, fp = 0, fn = 0, tn = 0;
    int64_t invalid = 0;
    double accuracy = 0.0, precision = 0.0, recall = 0.0, f1 = 0.0;
};

// Confusion-matrix metrics with "yes" as the positive class.
PopeMetrics pope_metrics(const std::vector<PopeAnswer>& answers);

// Builds a prompt per question, decodes one step, and maps the emitted token
// to yes/no. Non-answer tokens count as "no" and are flagged invalid. With a
// mask the contrastive decoder is used, otherwise the baseline.
std::vector<PopeAnswer> answer_pope(const Model& model, const ImageHeadMask* mask,
                                    const std::vector<PopeQuestion>& questions,
                                    const std::vector<Scene>& scenes,
                                    const Lexicon& lexicon, const DecodeParams& params,
                                    const PromptLayout& layout);

struct EvalReport {
    std::optional<ChairResult> chair;
    std::optional<PopeMetrics> pope;
};

} // namespace mmdec
