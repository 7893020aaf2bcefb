#include "mmdec/pipeline.hpp"

#include "mmdec/decoding.hpp"
#include "mmdec/rng.hpp"

#include <filesystem>
#include <sstream>
#include <stdexcept>

namespace fs = std::filesystem;

namespace mmdec {

namespace {

std::string path_join(const std::string& dir, const std::string& name) {
    return (fs::path(dir) / name).string();
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw std::runtime_error("cannot create output directory: " + dir);
}

void check_hash(uint64_t file_hash, uint64_t model_hash, const std::string& what) {
    if (file_hash != 0 && model_hash != 0 && file_hash != model_hash) {
        throw std::runtime_error(what + ": model config hash mismatch (file belongs to a different model)");
    }
}

} // namespace

Model ModelSpec::build() const {
    switch (kind) {
        case Kind::random:
            return build_model(config);
        case Kind::grounded:
            return build_grounded_model(config, lexicon(), grounding_heads);
    }
    throw std::logic_error("unreachable");
}

std::string ModelSpec::serialize() const {
    std::ostringstream os;
    os << "kind=" << (kind == Kind::random ? "random" : "grounded") << "\n";
    os << config.serialize();
    os << "n_objects=" << n_objects << "\n";
    if (kind == Kind::grounded) {
        os << "grounding_heads=";
        for (size_t i = 0; i < grounding_heads.size(); ++i) {
            if (i) os << ' ';
            os << grounding_heads[i].layer << ':' << grounding_heads[i].head;
        }
        os << "\n";
    }
    return os.str();
}

ModelSpec ModelSpec::deserialize(const std::string& text) {
    ModelSpec spec;
    spec.config = ModelConfig::deserialize(text);
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = line.substr(0, eq);
        const std::string value = line.substr(eq + 1);
        if (key == "kind") {
            if (value == "random") spec.kind = Kind::random;
            else if (value == "grounded") spec.kind = Kind::grounded;
            else throw std::runtime_error("model file: unknown kind: " + value);
        } else if (key == "n_objects") {
            spec.n_objects = std::stoi(value);
        } else if (key == "grounding_heads") {
            std::istringstream hs(value);
            std::string item;
            while (hs >> item) {
                const auto colon = item.find(':');
                if (colon == std::string::npos) {
                    throw std::runtime_error("model file: bad head ref: " + item);
                }
                spec.grounding_heads.push_back(
                    {std::stoi(item.substr(0, colon)), std::stoi(item.substr(colon + 1))});
            }
        }
    }
    if (spec.n_objects < 1) throw std::runtime_error("model file: n_objects must be >= 1");
    return spec;
}

void RunConfig::validate() const {
    if (!(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("run config: tau must be in (0,1)");
    if (!(alpha >= 0.0f)) throw std::invalid_argument("run config: alpha must be >= 0");
    if (scenes < 1) throw std::invalid_argument("run config: scenes must be >= 1");
    if (gen_len < 1) throw std::invalid_argument("run config: gen_len must be >= 1");
    if (workers < 1) throw std::invalid_argument("run config: workers must be >= 1");
    if (questions_per_scene < 2 || questions_per_scene % 2 != 0) {
        throw std::invalid_argument("run config: questions_per_scene must be a positive even number");
    }
}

RunConfig load_run_config(const std::string& path) {
    RunConfig run;
    const std::string text = io::read_file(path);
    const fs::path base = fs::path(path).parent_path();
    std::istringstream is(text);
    std::string line;
    bool have_model = false;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = line.substr(0, eq);
        const std::string value = line.substr(eq + 1);
        if (key == "model") {
            const std::string model_path = (base / value).string();
            run.model = ModelSpec::deserialize(io::read_file(model_path));
            have_model = true;
        } else if (key == "seed") run.seed = std::stoull(value);
        else if (key == "tau") run.tau = std::stod(value);
        else if (key == "alpha") run.alpha = std::stof(value);
        else if (key == "scenes") run.scenes = std::stoi(value);
        else if (key == "questions_per_scene") run.questions_per_scene = std::stoi(value);
        else if (key == "split") run.split = pope_split_from_string(value);
        else if (key == "gen_len") run.gen_len = std::stoi(value);
        else if (key == "workers") run.workers = std::stoi(value);
        else if (key == "out") run.out_dir = (base / value).string();
        else if (key == "system_len") run.layout.system_len = std::stoi(value);
        else if (key == "span_len") run.layout.image_span_len = std::stoi(value);
    }
    if (!have_model) throw std::runtime_error("run config: missing model= entry");
    run.validate();
    return run;
}

std::vector<Scene> run_scenes(const RunConfig& run) {
    return generate_scenes(run.model.lexicon(), run.scenes, derive_seed(run.seed, "scenes"));
}

std::vector<MultimodalSequence> caption_corpus(const RunConfig& run,
                                               const std::vector<Scene>& scenes) {
    const Lexicon lex = run.model.lexicon();
    std::vector<MultimodalSequence> corpus;
    corpus.reserve(scenes.size());
    for (const Scene& s : scenes) {
        corpus.push_back(make_caption_prompt(s, lex, run.layout));
    }
    return corpus;
}

ProfileResult cmd_profile(const RunConfig& run) {
    ensure_dir(run.out_dir);
    const Model model = run.model.build();
    const std::vector<Scene> scenes = run_scenes(run);
    const std::vector<MultimodalSequence> corpus = caption_corpus(run, scenes);

    AttentionTrace trace = profile(model, corpus, run.gen_len, run.workers);
    CountMatrix counts = count_exceedances(trace, run.tau);

    ProfileResult res;
    res.trace_path = path_join(run.out_dir, "trace.csv");
    res.counts_path = path_join(run.out_dir, "counts.txt");
    io::save_trace_csv(trace, res.trace_path);
    io::save_counts(counts, res.counts_path);
    res.counts = std::move(counts);
    return res;
}

std::string cmd_mask(const std::string& counts_path, const std::string& out_dir,
                     std::optional<double> tau) {
    ensure_dir(out_dir);
    const CountMatrix counts = io::load_counts(counts_path);
    if (tau && *tau != counts.tau) {
        throw std::runtime_error("cmd_mask: requested tau differs from the tau the counts were "
                                 "accumulated at; re-run profiling with the desired tau");
    }
    const ImageHeadMask mask = build_mask(counts);
    const std::string path = path_join(out_dir, "mask.txt");
    io::save_mask(mask, path);
    return path;
}

MaskOverlap cmd_overlap(const std::string& mask_a, const std::string& mask_b,
                        const std::string& out_path) {
    const ImageHeadMask a = io::load_mask(mask_a);
    const ImageHeadMask b = io::load_mask(mask_b);
    if (!a.same_shape(b)) throw std::runtime_error("cmd_overlap: mask shapes differ");
    check_hash(a.config_hash, b.config_hash, "cmd_overlap");
    const MaskOverlap o = mask_overlap(a, b);
    if (!out_path.empty()) {
        std::ostringstream os;
        os << "intersection=" << o.intersection << "\n"
           << "union=" << o.unions << "\n";
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.17g", o.ratio);
        os << "ratio=" << buf << "\n";
        io::write_file(out_path, os.str());
    }
    return o;
}

DecodeOutputs cmd_decode(const RunConfig& run, const std::string& mask_path,
                         DecodeMode mode, bool dump_logits) {
    ensure_dir(run.out_dir);
    const Model model = run.model.build();
    const Lexicon lex = run.model.lexicon();
    const std::vector<Scene> scenes = run_scenes(run);

    std::optional<ImageHeadMask> mask;
    if (!mask_path.empty()) {
        mask = io::load_mask(mask_path);
        if (mask->num_layers != model.config.num_layers ||
            mask->num_heads != model.config.num_heads) {
            throw std::runtime_error("cmd_decode: mask shape does not match the model");
        }
        check_hash(mask->config_hash, model.config.hash(), "cmd_decode");
    }

    DecodeOutputs outs;
    outs.scenes_path = path_join(run.out_dir, "scenes.txt");
    io::save_scenes(scenes, lex, outs.scenes_path);

    if (mode == DecodeMode::caption) {
        DecodeParams params;
        params.alpha = run.alpha;
        params.max_new_tokens = run.gen_len;
        params.stop_token = kTokenStop;
        params.record_logits = dump_logits;
        std::vector<CaptionRecord> captions;
        captions.reserve(scenes.size());
        std::vector<std::pair<int32_t, std::vector<StepRecord>>> dumps;
        for (const Scene& s : scenes) {
            const MultimodalSequence prompt = make_caption_prompt(s, lex, run.layout);
            DecodeResult r = mask ? decode_contrastive(model, *mask, prompt, params)
                                  : decode_baseline(model, prompt, params);
            captions.push_back(CaptionRecord::from_tokens(s.id, r.tokens));
            if (dump_logits) dumps.emplace_back(s.id, std::move(r.steps));
        }
        outs.captions_path = path_join(run.out_dir, "captions.txt");
        io::save_captions(captions, outs.captions_path);
        if (dump_logits) {
            outs.logits_path = path_join(run.out_dir, "logits.csv");
            io::save_step_records(dumps, outs.logits_path);
        }
    } else {
        const std::vector<PopeQuestion> questions =
            build_pope_questions(scenes, lex, run.questions_per_scene, run.split,
                                 derive_seed(run.seed, "pope"));
        DecodeParams params;
        params.alpha = run.alpha;
        const std::vector<PopeAnswer> answers =
            answer_pope(model, mask ? &*mask : nullptr, questions, scenes, lex, params,
                        run.layout);
        outs.questions_path = path_join(run.out_dir, "questions.txt");
        outs.answers_path = path_join(run.out_dir, "answers.txt");
        io::save_questions(questions, lex, outs.questions_path);
        io::save_answers(answers, lex, outs.answers_path);
    }
    return outs;
}

EvalReport cmd_eval(const RunConfig& run, const EvalInputs& inputs) {
    ensure_dir(run.out_dir);
    const Lexicon lex = run.model.lexicon();
    EvalReport report;
    if (!inputs.captions_path.empty()) {
        const std::vector<CaptionRecord> captions = io::load_captions(inputs.captions_path);
        const std::vector<Scene> scenes = io::load_scenes(lex, inputs.scenes_path);
        report.chair = chair_metrics(captions, scenes, lex);
    }
    if (!inputs.answers_path.empty()) {
        const std::vector<PopeAnswer> answers = io::load_answers(lex, inputs.answers_path);
        report.pope = pope_metrics(answers);
    }
    io::write_file(path_join(run.out_dir, "report.txt"), io::format_report_text(report));
    io::write_file(path_join(run.out_dir, "report.json"), io::format_report_json(report));
    return report;
}

PlotOutputs cmd_plot(const std::string& counts_path, const std::string& out_dir) {
    ensure_dir(out_dir);
    const CountMatrix counts = io::load_counts(counts_path);
    PlotOutputs outs;
    outs.csv_path = path_join(out_dir, "heatmap.csv");
    outs.pgm_path = path_join(out_dir, "heatmap.pgm");
    io::save_heatmap_csv(counts, outs.csv_path);
    io::save_heatmap_pgm(counts, outs.pgm_path);
    return outs;
}

} // namespace mmdec
