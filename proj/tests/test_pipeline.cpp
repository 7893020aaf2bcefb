#include <doctest.h>

#include "mmdec/pipeline.hpp"

#include <filesystem>
#include <fstream>

using namespace mmdec;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path dir;
    explicit TempDir(const std::string& name) {
        dir = fs::temp_directory_path() / name;
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    ~TempDir() { fs::remove_all(dir); }
    std::string path(const std::string& name) const { return (dir / name).string(); }
};

void write(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
}

std::string grounded_model_text() {
    return "kind=grounded\n"
           "num_layers=4\n"
           "num_heads=16\n"
           "d_model=128\n"
           "vocab_size=32\n"
           "max_seq_len=64\n"
           "rng_seed=5\n"
           "n_objects=8\n"
           "grounding_heads=0:2 0:3 0:4 0:5 1:1 2:9 3:14 2:6\n";
}

std::string run_config_text(const std::string& out_rel) {
    return "model=model.cfg\n"
           "seed=11\n"
           "tau=0.5\n"
           "alpha=1.0\n"
           "scenes=25\n"
           "questions_per_scene=4\n"
           "split=popular\n"
           "gen_len=10\n"
           "workers=1\n"
           "out=" + out_rel + "\n";
}

} // namespace

TEST_CASE("run config loading resolves and validates") {
    TempDir tmp("mmdec_pipe_cfg");
    write(tmp.path("model.cfg"), grounded_model_text());
    write(tmp.path("run.cfg"), run_config_text("results"));
    const RunConfig run = load_run_config(tmp.path("run.cfg"));
    CHECK(run.model.kind == ModelSpec::Kind::grounded);
    CHECK(run.model.config.num_heads == 16);
    CHECK(run.model.grounding_heads.size() == 8);
    CHECK(run.tau == 0.5);
    CHECK(run.out_dir == (tmp.dir / "results").string());

    write(tmp.path("bad.cfg"), "model=model.cfg\ntau=1.5\n");
    CHECK_THROWS(load_run_config(tmp.path("bad.cfg")));
    write(tmp.path("nomodel.cfg"), "tau=0.5\n");
    CHECK_THROWS(load_run_config(tmp.path("nomodel.cfg")));
}

TEST_CASE("model spec serialization round-trips") {
    const ModelSpec spec = ModelSpec::deserialize(grounded_model_text());
    const ModelSpec back = ModelSpec::deserialize(spec.serialize());
    CHECK(back.kind == spec.kind);
    CHECK(back.config == spec.config);
    CHECK(back.n_objects == spec.n_objects);
    CHECK(back.grounding_heads == spec.grounding_heads);
}

TEST_CASE("profile -> mask recovers the planted heads through files") {
    TempDir tmp("mmdec_pipe_profile");
    write(tmp.path("model.cfg"), grounded_model_text());
    write(tmp.path("run.cfg"), run_config_text("out"));
    const RunConfig run = load_run_config(tmp.path("run.cfg"));

    const ProfileResult prof = cmd_profile(run);
    CHECK(fs::exists(prof.trace_path));
    CHECK(fs::exists(prof.counts_path));
    CHECK(prof.counts.num_layers == 4);
    CHECK(prof.counts.num_heads == 16);
    CHECK(prof.counts.total_tokens == 25 * 10);

    const std::string mask_path = cmd_mask(prof.counts_path, run.out_dir);
    const ImageHeadMask mask = io::load_mask(mask_path);
    const ImageHeadMask planted = mask_for_heads(run.model.config, run.model.grounding_heads);
    CHECK(mask.bits == planted.bits);

    // tau override must match the counts
    CHECK(cmd_mask(prof.counts_path, run.out_dir, 0.5) == mask_path);
    CHECK_THROWS_AS(cmd_mask(prof.counts_path, run.out_dir, 0.9), std::runtime_error);

    const PlotOutputs plots = cmd_plot(prof.counts_path, run.out_dir);
    CHECK(fs::exists(plots.csv_path));
    CHECK(fs::exists(plots.pgm_path));
}

TEST_CASE("overlap command checks shapes and hashes") {
    TempDir tmp("mmdec_pipe_overlap");
    ImageHeadMask a = ImageHeadMask::ones(2, 4);
    a.set(0, 0, 0);
    a.config_hash = 10;
    ImageHeadMask b = a;
    b.set(1, 3, 0);
    io::save_mask(a, tmp.path("a.txt"));
    io::save_mask(b, tmp.path("b.txt"));

    const MaskOverlap same = cmd_overlap(tmp.path("a.txt"), tmp.path("a.txt"));
    CHECK(same.ratio == 1.0);
    const MaskOverlap o = cmd_overlap(tmp.path("a.txt"), tmp.path("b.txt"), tmp.path("o.txt"));
    CHECK(o.intersection == 1);
    CHECK(o.unions == 2);
    CHECK(fs::exists(tmp.path("o.txt")));

    ImageHeadMask wrong_shape = ImageHeadMask::ones(3, 4);
    io::save_mask(wrong_shape, tmp.path("c.txt"));
    CHECK_THROWS_AS(cmd_overlap(tmp.path("a.txt"), tmp.path("c.txt")), std::runtime_error);

    ImageHeadMask wrong_model = a;
    wrong_model.config_hash = 11;
    io::save_mask(wrong_model, tmp.path("d.txt"));
    CHECK_THROWS_AS(cmd_overlap(tmp.path("a.txt"), tmp.path("d.txt")), std::runtime_error);
}

TEST_CASE("mask built on all-zero counts keeps every head") {
    TempDir tmp("mmdec_pipe_zeromask");
    CountMatrix zeros;
    zeros.num_layers = 3;
    zeros.num_heads = 4;
    zeros.tau = 0.5;
    zeros.total_tokens = 10;
    zeros.counts.assign(12, 0);
    io::save_counts(zeros, tmp.path("counts.txt"));
    const std::string mask_path = cmd_mask(tmp.path("counts.txt"), tmp.dir.string());
    CHECK(io::load_mask(mask_path).count_zeros() == 0);
}

TEST_CASE("decode and eval close the loop on the grounded fixture") {
    TempDir tmp("mmdec_pipe_e2e");
    write(tmp.path("model.cfg"), grounded_model_text());
    write(tmp.path("run.cfg"), run_config_text("out"));
    const RunConfig run = load_run_config(tmp.path("run.cfg"));

    // baseline captions hallucinate, contrastive decoding with the planted
    // mask stops them
    const ProfileResult prof = cmd_profile(run);
    const std::string mask_path = cmd_mask(prof.counts_path, run.out_dir);

    RunConfig base_run = run;
    base_run.out_dir = tmp.path("base");
    const DecodeOutputs base = cmd_decode(base_run, "", DecodeMode::caption);
    EvalInputs base_in;
    base_in.captions_path = base.captions_path;
    base_in.scenes_path = base.scenes_path;
    const EvalReport base_rep = cmd_eval(base_run, base_in);
    REQUIRE(base_rep.chair.has_value());

    RunConfig cd_run = run;
    cd_run.out_dir = tmp.path("cd");
    const DecodeOutputs cd = cmd_decode(cd_run, mask_path, DecodeMode::caption);
    EvalInputs cd_in;
    cd_in.captions_path = cd.captions_path;
    cd_in.scenes_path = cd.scenes_path;
    const EvalReport cd_rep = cmd_eval(cd_run, cd_in);
    REQUIRE(cd_rep.chair.has_value());

    CHECK(base_rep.chair->chair_s > cd_rep.chair->chair_s);
    CHECK(base_rep.chair->chair_i > cd_rep.chair->chair_i);
    CHECK(fs::exists(tmp.path("base") + "/report.txt"));
    CHECK(fs::exists(tmp.path("base") + "/report.json"));

    // question answering path
    RunConfig pope_run = run;
    pope_run.out_dir = tmp.path("pope");
    const DecodeOutputs pp = cmd_decode(pope_run, "", DecodeMode::pope);
    EvalInputs pope_in;
    pope_in.answers_path = pp.answers_path;
    const EvalReport pope_rep = cmd_eval(pope_run, pope_in);
    REQUIRE(pope_rep.pope.has_value());
    CHECK(pope_rep.pope->accuracy > 0.5);
}

TEST_CASE("decode refuses a mask from another model") {
    TempDir tmp("mmdec_pipe_hash");
    write(tmp.path("model.cfg"), grounded_model_text());
    write(tmp.path("run.cfg"), run_config_text("out"));
    const RunConfig run = load_run_config(tmp.path("run.cfg"));

    ImageHeadMask alien = ImageHeadMask::ones(4, 16);
    alien.config_hash = 0x1234;
    io::save_mask(alien, tmp.path("alien.txt"));
    CHECK_THROWS_AS(cmd_decode(run, tmp.path("alien.txt"), DecodeMode::caption),
                    std::runtime_error);

    ImageHeadMask bad_shape = ImageHeadMask::ones(4, 8);
    io::save_mask(bad_shape, tmp.path("shape.txt"));
    CHECK_THROWS_AS(cmd_decode(run, tmp.path("shape.txt"), DecodeMode::caption),
                    std::runtime_error);
}

TEST_CASE("pipeline outputs are byte-identical across reruns and worker counts") {
    TempDir tmp("mmdec_pipe_det");
    write(tmp.path("model.cfg"), grounded_model_text());
    write(tmp.path("run.cfg"), run_config_text("out"));

    auto run_all = [&](const std::string& out, int workers) {
        RunConfig run = load_run_config(tmp.path("run.cfg"));
        run.out_dir = tmp.path(out);
        run.workers = workers;
        const ProfileResult prof = cmd_profile(run);
        const std::string mask = cmd_mask(prof.counts_path, run.out_dir);
        const DecodeOutputs dec = cmd_decode(run, mask, DecodeMode::caption);
        EvalInputs in;
        in.captions_path = dec.captions_path;
        in.scenes_path = dec.scenes_path;
        cmd_eval(run, in);
        cmd_plot(prof.counts_path, run.out_dir);
    };

    run_all("r1", 1);
    run_all("r2", 1);
    run_all("r4", 4);

    for (const char* name : {"trace.csv", "counts.txt", "mask.txt", "scenes.txt",
                             "captions.txt", "report.txt", "report.json", "heatmap.csv",
                             "heatmap.pgm"}) {
        const std::string a = io::read_file(tmp.path("r1") + "/" + name);
        const std::string b = io::read_file(tmp.path("r2") + "/" + name);
        const std::string c = io::read_file(tmp.path("r4") + "/" + name);
        CHECK(a == b);
        CHECK(a == c);
    }
}
