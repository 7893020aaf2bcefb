#pragma once

#include "mmdec/grounded.hpp"
#include "mmdec/io.hpp"
#include "mmdec/metrics.hpp"
#include "mmdec/trace.hpp"

#include <optional>
#include <string>
#include <vector>

namespace mmdec {

// Model file: either a seeded random model or a constructed grounded fixture.
struct ModelSpec {
    enum class Kind { random, grounded };
    Kind kind = Kind::random;
    ModelConfig config;
    int n_objects = 8;
    std::vector<HeadRef> grounding_heads; // grounded kind only

    Lexicon lexicon() const { return Lexicon::make_default(n_objects); }
    Model build() const;

    std::string serialize() const;
    static ModelSpec deserialize(const std::string& text);
};

// One run configuration drives every command; a single seed feeds all derived
// randomness so ablations differ only where intended.
struct RunConfig {
    ModelSpec model;
    uint64_t seed = 1;
    double tau = 0.5;
    float alpha = 1.0f;
    int scenes = 50;
    int questions_per_scene = 4;
    PopeSplit split = PopeSplit::random;
    int gen_len = 12;
    int workers = 1;
    std::string out_dir = "out";
    PromptLayout layout;

    void validate() const;
};

// Loads key=value run config; the model= path is resolved relative to the
// config file's directory.
RunConfig load_run_config(const std::string& path);

std::vector<Scene> run_scenes(const RunConfig& run);
std::vector<MultimodalSequence> caption_corpus(const RunConfig& run,
                                               const std::vector<Scene>& scenes);

struct ProfileResult {
    std::string trace_path;
    std::string counts_path;
    CountMatrix counts;
};
ProfileResult cmd_profile(const RunConfig& run);

// Builds a mask from a count file. When tau is given it must match the tau
// the counts were accumulated at.
std::string cmd_mask(const std::string& counts_path, const std::string& out_dir,
                     std::optional<double> tau = std::nullopt);

MaskOverlap cmd_overlap(const std::string& mask_a, const std::string& mask_b,
                        const std::string& out_path = "");

enum class DecodeMode { caption, pope };

struct DecodeOutputs {
    std::string scenes_path;
    std::string captions_path;  // caption mode
    std::string questions_path; // pope mode
    std::string answers_path;   // pope mode
    std::string logits_path;    // caption mode with dump_logits
};
DecodeOutputs cmd_decode(const RunConfig& run, const std::string& mask_path,
                         DecodeMode mode, bool dump_logits = false);

struct EvalInputs {
    std::string captions_path; // chair
    std::string scenes_path;   // chair
    std::string answers_path;  // pope
};
EvalReport cmd_eval(const RunConfig& run, const EvalInputs& inputs);

struct PlotOutputs {
    std::string csv_path;
    std::string pgm_path;
};
PlotOutputs cmd_plot(const std::string& counts_path, const std::string& out_dir);

} // namespace mmdec
