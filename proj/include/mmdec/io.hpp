#pragma once

#include "mmdec/mask.hpp"
#include "mmdec/metrics.hpp"
#include "mmdec/synthdata.hpp"
#include "mmdec/trace.hpp"

#include <string>
#include <vector>

namespace mmdec::io {

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

// Human-readable mask file: shape, tau, metadata, then one 0/1 row per layer.
// Round-trips bit-exactly.
std::string format_mask(const ImageHeadMask& mask);
ImageHeadMask parse_mask(const std::string& text);
void save_mask(const ImageHeadMask& mask, const std::string& path);
ImageHeadMask load_mask(const std::string& path);

std::string format_counts(const CountMatrix& counts);
CountMatrix parse_counts(const std::string& text);
void save_counts(const CountMatrix& counts, const std::string& path);
CountMatrix load_counts(const std::string& path);

// One row per (t, layer, head, score).
void save_trace_csv(const AttentionTrace& trace, const std::string& path);

// Normalized counts as a comma-separated L x H matrix and a portable graymap
// (row = layer, column = head).
void save_heatmap_csv(const CountMatrix& counts, const std::string& path);
void save_heatmap_pgm(const CountMatrix& counts, const std::string& path);

void save_scenes(const std::vector<Scene>& scenes, const Lexicon& lexicon,
                 const std::string& path);
std::vector<Scene> load_scenes(const Lexicon& lexicon, const std::string& path);

void save_questions(const std::vector<PopeQuestion>& questions, const Lexicon& lexicon,
                    const std::string& path);
std::vector<PopeQuestion> load_questions(const Lexicon& lexicon, const std::string& path);

void save_captions(const std::vector<CaptionRecord>& captions, const std::string& path);
std::vector<CaptionRecord> load_captions(const std::string& path);

void save_answers(const std::vector<PopeAnswer>& answers, const Lexicon& lexicon,
                  const std::string& path);
std::vector<PopeAnswer> load_answers(const Lexicon& lexicon, const std::string& path);

// Flat key=value report plus a JSON twin, both carrying the backing counts.
std::string format_report_text(const EvalReport& report);
std::string format_report_json(const EvalReport& report);

// Debug dump of per-step decode logits, one row per (scene, step, token).
void save_step_records(const std::vector<std::pair<int32_t, std::vector<StepRecord>>>& records,
                       const std::string& path);

} // namespace mmdec::io
