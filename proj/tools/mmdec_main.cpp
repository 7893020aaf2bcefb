#include "mmdec/pipeline.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <optional>

using namespace mmdec;

namespace {

struct CommonOpts {
    std::string config_path;
    std::optional<double> tau;
    std::optional<double> alpha;
    std::optional<std::string> split;
    std::optional<int> workers;
    std::optional<std::string> out_dir;
};

RunConfig load_run(const CommonOpts& o) {
    RunConfig run = load_run_config(o.config_path);
    if (o.tau) run.tau = *o.tau;
    if (o.alpha) run.alpha = static_cast<float>(*o.alpha);
    if (o.split) run.split = pope_split_from_string(*o.split);
    if (o.workers) run.workers = *o.workers;
    if (o.out_dir) run.out_dir = *o.out_dir;
    run.validate();
    return run;
}

void add_common(CLI::App* cmd, CommonOpts& o, bool need_config = true) {
    auto* c = cmd->add_option("--config", o.config_path, "run config file (key=value)");
    if (need_config) c->required();
    cmd->add_option("--tau", o.tau, "attention-mass threshold in (0,1)");
    cmd->add_option("--alpha", o.alpha, "contrast intensity, >= 0");
    cmd->add_option("--split", o.split, "question split: random|popular|adversarial");
    cmd->add_option("--workers", o.workers, "profiling worker threads");
    cmd->add_option("--out", o.out_dir, "output directory");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"image-head profiling and masked contrastive decoding toolkit"};
    app.require_subcommand(1);

    CommonOpts opts;

    auto* profile_cmd = app.add_subcommand("profile", "record image-attention trace and counts");
    add_common(profile_cmd, opts);

    auto* mask_cmd = app.add_subcommand("mask", "build an image-head mask from a count file");
    std::string counts_path, reference_path;
    std::optional<double> mask_tau;
    std::optional<uint64_t> random_seed;
    std::string mask_out = "out";
    mask_cmd->add_option("--counts", counts_path, "count file from profile");
    mask_cmd->add_option("--tau", mask_tau, "expected tau of the count file");
    mask_cmd->add_option("--reference", reference_path, "reference mask for a random control mask");
    mask_cmd->add_option("--random-seed", random_seed, "draw a random control mask instead");
    mask_cmd->add_option("--out", mask_out, "output directory");

    auto* overlap_cmd = app.add_subcommand("overlap", "intersection/union/ratio of two masks");
    std::string mask_a, mask_b, overlap_out;
    overlap_cmd->add_option("--a", mask_a, "first mask file")->required();
    overlap_cmd->add_option("--b", mask_b, "second mask file")->required();
    overlap_cmd->add_option("--out", overlap_out, "optional report file");

    auto* decode_cmd = app.add_subcommand("decode", "generate captions or answer questions");
    std::string decode_mask, decode_mode = "caption";
    bool dump_logits = false;
    decode_cmd->add_option("--mask", decode_mask, "image-head mask (enables contrastive decoding)");
    decode_cmd->add_option("--mode", decode_mode, "caption|pope")
        ->check(CLI::IsMember({"caption", "pope"}));
    decode_cmd->add_flag("--dump-logits", dump_logits, "write per-step logits (caption mode)");
    add_common(decode_cmd, opts);

    auto* eval_cmd = app.add_subcommand("eval", "compute caption/question metrics");
    EvalInputs eval_inputs;
    eval_cmd->add_option("--captions", eval_inputs.captions_path, "caption file");
    eval_cmd->add_option("--scenes", eval_inputs.scenes_path, "scene ground-truth file");
    eval_cmd->add_option("--answers", eval_inputs.answers_path, "answer file");
    add_common(eval_cmd, opts);

    auto* plot_cmd = app.add_subcommand("plot", "export count heatmap (csv + pgm)");
    std::string plot_counts, plot_out = "out";
    plot_cmd->add_option("--counts", plot_counts, "count file")->required();
    plot_cmd->add_option("--out", plot_out, "output directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (profile_cmd->parsed()) {
            const RunConfig run = load_run(opts);
            const ProfileResult res = cmd_profile(run);
            std::printf("T=%lld L=%d H=%d\n",
                        static_cast<long long>(res.counts.total_tokens),
                        res.counts.num_layers, res.counts.num_heads);
            std::printf("trace: %s\ncounts: %s\n", res.trace_path.c_str(),
                        res.counts_path.c_str());
        } else if (mask_cmd->parsed()) {
            if (random_seed) {
                if (reference_path.empty()) {
                    throw std::runtime_error("mask --random-seed needs --reference");
                }
                const ImageHeadMask ref = io::load_mask(reference_path);
                const ImageHeadMask rnd = random_mask(ref, *random_seed);
                std::filesystem::create_directories(mask_out);
                const std::string path =
                    (std::filesystem::path(mask_out) / "mask_random.txt").string();
                io::save_mask(rnd, path);
                std::printf("mask: %s\n", path.c_str());
            } else {
                if (counts_path.empty()) throw std::runtime_error("mask needs --counts");
                const std::string path = cmd_mask(counts_path, mask_out, mask_tau);
                const ImageHeadMask m = io::load_mask(path);
                const MaskStats s = mask_stats(m);
                std::printf("mask: %s\nimage_heads=%lld proportion=%.4f\n", path.c_str(),
                            static_cast<long long>(s.num_image_heads), s.proportion);
            }
        } else if (overlap_cmd->parsed()) {
            const MaskOverlap o = cmd_overlap(mask_a, mask_b, overlap_out);
            std::printf("intersection=%lld union=%lld ratio=%.4f\n",
                        static_cast<long long>(o.intersection),
                        static_cast<long long>(o.unions), o.ratio);
        } else if (decode_cmd->parsed()) {
            const RunConfig run = load_run(opts);
            const DecodeMode mode =
                decode_mode == "pope" ? DecodeMode::pope : DecodeMode::caption;
            const DecodeOutputs outs = cmd_decode(run, decode_mask, mode, dump_logits);
            std::printf("scenes: %s\n", outs.scenes_path.c_str());
            if (mode == DecodeMode::caption) {
                std::printf("captions: %s\n", outs.captions_path.c_str());
                if (!outs.logits_path.empty()) {
                    std::printf("logits: %s\n", outs.logits_path.c_str());
                }
            } else {
                std::printf("questions: %s\nanswers: %s\n", outs.questions_path.c_str(),
                            outs.answers_path.c_str());
            }
        } else if (eval_cmd->parsed()) {
            const RunConfig run = load_run(opts);
            if (eval_inputs.captions_path.empty() && eval_inputs.answers_path.empty()) {
                throw std::runtime_error("eval needs --captions/--scenes or --answers");
            }
            if (!eval_inputs.captions_path.empty() && eval_inputs.scenes_path.empty()) {
                throw std::runtime_error("eval --captions needs --scenes");
            }
            const EvalReport report = cmd_eval(run, eval_inputs);
            std::fputs(io::format_report_text(report).c_str(), stdout);
        } else if (plot_cmd->parsed()) {
            const PlotOutputs outs = cmd_plot(plot_counts, plot_out);
            std::printf("heatmap: %s %s\n", outs.csv_path.c_str(), outs.pgm_path.c_str());
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
