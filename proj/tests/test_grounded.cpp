#include <doctest.h>

#include "mmdec/decoding.hpp"
#include "mmdec/grounded.hpp"
#include "mmdec/metrics.hpp"
#include "mmdec/trace.hpp"

#include <algorithm>
#include <cmath>

using namespace mmdec;

namespace {

ModelConfig fixture_config(int layers = 4, int heads = 16, int d_model = 128,
                           uint64_t seed = 5) {
    ModelConfig c;
    c.num_layers = layers;
    c.num_heads = heads;
    c.d_model = d_model;
    c.vocab_size = 32;
    c.max_seq_len = 64;
    c.rng_seed = seed;
    return c;
}

const std::vector<HeadRef> kPlanted = {{0, 2}, {0, 3}, {0, 4}, {0, 5},
                                       {1, 1}, {2, 9}, {3, 14}, {2, 6}};

struct Fixture {
    ModelConfig config = fixture_config();
    Lexicon lexicon = Lexicon::make_default(8);
    Model model;
    ImageHeadMask planted_mask;
    PromptLayout layout;

    Fixture() : model(build_grounded_model(config, lexicon, kPlanted)),
                planted_mask(mask_for_heads(config, kPlanted)) {}

    Scene scene(std::vector<int> objects) const {
        Scene s;
        s.id = 0;
        s.objects = std::move(objects);
        return s;
    }
};

std::vector<float> softmax(const std::vector<float>& logits) {
    float mx = logits[0];
    for (float v : logits) mx = std::max(mx, v);
    std::vector<float> p(logits.size());
    float denom = 0.0f;
    for (size_t i = 0; i < p.size(); ++i) {
        p[i] = std::exp(logits[i] - mx);
        denom += p[i];
    }
    for (float& v : p) v /= denom;
    return p;
}

} // namespace

TEST_CASE("grounded builder validates its inputs") {
    const Lexicon lex = Lexicon::make_default(8);
    const ModelConfig cfg = fixture_config();
    CHECK_THROWS_AS(build_grounded_model(cfg, lex, {}), std::invalid_argument);
    CHECK_THROWS_AS(build_grounded_model(cfg, lex, {{9, 0}}), std::invalid_argument);
    CHECK_THROWS_AS(build_grounded_model(cfg, lex, {{0, 2}, {0, 2}}), std::invalid_argument);
    // no layer-0 head
    CHECK_THROWS_AS(build_grounded_model(cfg, lex, {{1, 0}, {2, 3}}), std::invalid_argument);
    // d_head smaller than the object count
    ModelConfig tiny = fixture_config(2, 32, 128);
    CHECK_THROWS_AS(build_grounded_model(tiny, lex, {{0, 5}}), std::invalid_argument);
}

TEST_CASE("grounded model is deterministic") {
    const Fixture f;
    const Model again = build_grounded_model(f.config, f.lexicon, kPlanted);
    CHECK(f.model.tok_embed == again.tok_embed);
    for (int l = 0; l < f.config.num_layers; ++l) {
        CHECK(f.model.layers[l].wv == again.layers[l].wv);
        CHECK(f.model.layers[l].wo == again.layers[l].wo);
        CHECK(f.model.layers[l].attn_role_bias == again.layers[l].attn_role_bias);
    }
    CHECK(f.model.w_out == again.w_out);
}

TEST_CASE("grounding heads dominate image attention while generating") {
    const Fixture f;
    const std::vector<Scene> scenes = generate_scenes(f.lexicon, 10, 3);
    std::vector<MultimodalSequence> corpus;
    for (const Scene& s : scenes) corpus.push_back(make_caption_prompt(s, f.lexicon, f.layout));
    const AttentionTrace tr = profile(f.model, corpus, 10);

    // role-biased grounding heads stay above 0.9 at every generated token
    for (const HeadRef& g : {HeadRef{0, 2}, HeadRef{0, 4}, HeadRef{1, 1}, HeadRef{3, 14}}) {
        for (int t = 0; t < tr.steps(); ++t) {
            CHECK(tr.at(t, g.layer, g.head) >= 0.9f);
        }
    }
    // matcher heads cross 0.9 at some step of every caption
    for (const HeadRef& g : {HeadRef{0, 3}, HeadRef{0, 5}}) {
        for (size_t p = 0; p < corpus.size(); ++p) {
            float best = 0.0f;
            for (int t = 0; t < 10; ++t) {
                best = std::max(best, tr.at(static_cast<int>(p) * 10 + t, g.layer, g.head));
            }
            CHECK(best >= 0.9f);
        }
    }
    // every non-grounding head stays at or below 0.5 throughout
    for (int l = 0; l < f.config.num_layers; ++l) {
        for (int h = 0; h < f.config.num_heads; ++h) {
            if (f.planted_mask.at(l, h) == 0) continue;
            for (int t = 0; t < tr.steps(); ++t) {
                CHECK(tr.at(t, l, h) <= 0.5f);
            }
        }
    }
}

TEST_CASE("profiling recovers exactly the planted heads across the tau range") {
    const Fixture f;
    const std::vector<Scene> scenes = generate_scenes(f.lexicon, 20, 9);
    std::vector<MultimodalSequence> corpus;
    for (const Scene& s : scenes) corpus.push_back(make_caption_prompt(s, f.lexicon, f.layout));
    const AttentionTrace tr = profile(f.model, corpus, 12);
    for (double tau : {0.5, 0.7, 0.9}) {
        const ImageHeadMask rec = build_mask(count_exceedances(tr, tau));
        CHECK(rec.bits == f.planted_mask.bits);
    }
}

TEST_CASE("greedy captions name the scene objects") {
    const Fixture f;
    DecodeParams params;
    params.max_new_tokens = 10;
    params.stop_token = kTokenStop;

    const MultimodalSequence solo =
        make_caption_prompt(f.scene({0}), f.lexicon, f.layout);
    const DecodeResult dog = decode_baseline(f.model, solo, params);
    CHECK(std::count(dog.tokens.begin(), dog.tokens.end(), f.lexicon.text_token(0)) == 1);

    const MultimodalSequence duo =
        make_caption_prompt(f.scene({0, 4}), f.lexicon, f.layout);
    const DecodeResult pair = decode_baseline(f.model, duo, params);
    CHECK(std::count(pair.tokens.begin(), pair.tokens.end(), f.lexicon.text_token(0)) == 1);
    CHECK(std::count(pair.tokens.begin(), pair.tokens.end(), f.lexicon.text_token(4)) == 1);
    CHECK(pair.tokens.back() == kTokenStop);
}

TEST_CASE("masking the grounding heads removes the image-to-logit path") {
    const Fixture f;
    const MultimodalSequence prompt =
        make_caption_prompt(f.scene({6}), f.lexicon, f.layout); // unpopular object
    const StepOutput full = forward_full(f.model, prompt);
    const StepOutput masked = forward_full(f.model, prompt, &f.planted_mask);

    const Token obj = f.lexicon.text_token(6);
    // visible object wins outright with the heads on
    CHECK(argmax_token(full.logits) == obj);
    // with them off, the popularity prior takes over
    CHECK(argmax_token(masked.logits) == f.lexicon.text_token(0));

    // and the raw logit advantage of the object collapses
    const float margin_full = full.logits[obj] - full.logits[f.lexicon.text_token(0)];
    const float margin_masked = masked.logits[obj] - masked.logits[f.lexicon.text_token(0)];
    CHECK(margin_full > 0.0f);
    CHECK(margin_masked < 0.0f);
}

TEST_CASE("combined probability of the grounded token only grows with the contrast") {
    const Fixture f;
    const MultimodalSequence prompt = make_caption_prompt(f.scene({5}), f.lexicon, f.layout);
    const StepOutput base = forward_full(f.model, prompt);
    const StepOutput masked = forward_full(f.model, prompt, &f.planted_mask);
    const Token obj = f.lexicon.text_token(5);

    const std::vector<float> combined = contrastive_combine(base.logits, masked.logits, 1.0f);
    CHECK(softmax(combined)[obj] >= softmax(base.logits)[obj]);
}

TEST_CASE("contrast margin of the grounded token is nondecreasing in alpha") {
    const Fixture f;
    const MultimodalSequence prompt = make_caption_prompt(f.scene({4, 6}), f.lexicon, f.layout);
    const StepOutput base = forward_full(f.model, prompt);
    const StepOutput masked = forward_full(f.model, prompt, &f.planted_mask);

    const Token grounded = f.lexicon.text_token(4);
    const Token prior_token = f.lexicon.text_token(0); // popular but absent
    float prev_margin = -1e30f;
    float prev_stop_margin = -1e30f;
    for (float alpha : {0.0f, 0.5f, 1.0f, 2.0f, 4.0f, 6.0f}) {
        const std::vector<float> c = contrastive_combine(base.logits, masked.logits, alpha);
        const float margin = c[grounded] - c[prior_token];
        CHECK(margin >= prev_margin);
        prev_margin = margin;
        const float stop_margin = c[kTokenStop] - c[prior_token];
        CHECK(stop_margin >= prev_stop_margin);
        prev_stop_margin = stop_margin;
    }

    // large alpha stays finite through a whole decode
    DecodeParams params;
    params.alpha = 6.0f;
    params.max_new_tokens = 12;
    params.stop_token = kTokenStop;
    params.record_logits = true;
    const DecodeResult r = decode_contrastive(f.model, f.planted_mask, prompt, params);
    for (const StepRecord& s : r.steps) {
        for (float v : s.combined) CHECK(std::isfinite(v));
    }
    CHECK(std::count(r.tokens.begin(), r.tokens.end(), f.lexicon.text_token(4)) == 1);
}

TEST_CASE("question answering tracks object presence") {
    const Fixture f;
    const std::vector<Scene> scenes = generate_scenes(f.lexicon, 40, 21);
    const std::vector<PopeQuestion> qs =
        build_pope_questions(scenes, f.lexicon, 4, PopeSplit::random, 31);
    DecodeParams params;
    const std::vector<PopeAnswer> answers =
        answer_pope(f.model, nullptr, qs, scenes, f.lexicon, params, f.layout);

    std::vector<Scene> by_id(scenes.size());
    for (const Scene& s : scenes) by_id[s.id] = s;

    for (const PopeAnswer& a : answers) {
        CHECK(!a.invalid);
        if (a.question.truth_yes) {
            CHECK(a.predicted_yes); // present objects are always found
        } else {
            // absent objects that do not neighbor any present object are rejected
            const Scene& scene = by_id[a.question.scene_id];
            int min_dist = 99;
            for (int p : scene.objects) {
                min_dist = std::min(min_dist, std::abs(p - a.question.object_index));
            }
            if (min_dist >= 2) CHECK(!a.predicted_yes);
        }
    }
}

TEST_CASE("with all grounding heads masked the answers are prior-driven") {
    const Fixture f;
    const std::vector<Scene> scenes = generate_scenes(f.lexicon, 15, 23);
    const std::vector<PopeQuestion> qs =
        build_pope_questions(scenes, f.lexicon, 4, PopeSplit::random, 37);
    // greedy decoding of the masked model itself (the degraded branch alone)
    for (const PopeQuestion& q : qs) {
        const Scene* scene = nullptr;
        for (const Scene& s : scenes) {
            if (s.id == q.scene_id) scene = &s;
        }
        const MultimodalSequence prompt =
            make_pope_prompt(*scene, f.lexicon, q.object_index, f.layout);
        const StepOutput out = forward_full(f.model, prompt, &f.planted_mask);
        CHECK(argmax_token(out.logits) == kTokenNo);
    }
}

TEST_CASE("baseline accuracy declines from random to popular to adversarial") {
    const Fixture f;
    const std::vector<Scene> scenes = generate_scenes(f.lexicon, 300, 555);
    DecodeParams params;
    double acc[3];
    int i = 0;
    for (PopeSplit split : {PopeSplit::random, PopeSplit::popular, PopeSplit::adversarial}) {
        const std::vector<PopeQuestion> qs = build_pope_questions(scenes, f.lexicon, 4, split, 99);
        REQUIRE(qs.size() >= 1000);
        const std::vector<PopeAnswer> answers =
            answer_pope(f.model, nullptr, qs, scenes, f.lexicon, params, f.layout);
        acc[i++] = pope_metrics(answers).accuracy;
    }
    CHECK(acc[0] >= acc[1]);
    CHECK(acc[1] >= acc[2]);
}

TEST_CASE("alpha zero question answering equals the baseline answers") {
    const Fixture f;
    const std::vector<Scene> scenes = generate_scenes(f.lexicon, 20, 29);
    const std::vector<PopeQuestion> qs =
        build_pope_questions(scenes, f.lexicon, 4, PopeSplit::popular, 41);
    DecodeParams params;
    params.alpha = 0.0f;
    const std::vector<PopeAnswer> base =
        answer_pope(f.model, nullptr, qs, scenes, f.lexicon, params, f.layout);
    const std::vector<PopeAnswer> cd =
        answer_pope(f.model, &f.planted_mask, qs, scenes, f.lexicon, params, f.layout);
    REQUIRE(base.size() == cd.size());
    for (size_t i = 0; i < base.size(); ++i) {
        CHECK(base[i].predicted_yes == cd[i].predicted_yes);
    }
}
