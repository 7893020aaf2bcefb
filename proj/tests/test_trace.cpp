#include <doctest.h>

#include "mmdec/reference.hpp"
#include "mmdec/trace.hpp"
#include "test_util.hpp"

#include <algorithm>
#include <cmath>
#include <set>

using namespace mmdec;
using namespace mmdec::test;

namespace {

// hand-built step output with identical rows for every head
StepOutput uniform_step(int layers, int heads, int prefix) {
    StepOutput s;
    s.num_layers = layers;
    s.num_heads = heads;
    s.prefix_len = prefix;
    std::vector<float> row(prefix, 1.0f / prefix);
    s.attention.assign(static_cast<size_t>(layers) * heads, row);
    return s;
}

AttentionTrace random_trace(int layers, int heads, int steps, uint64_t seed) {
    AttentionTrace t;
    t.num_layers = layers;
    t.num_heads = heads;
    Rng rng(seed);
    t.entries.resize(static_cast<size_t>(steps) * layers * heads);
    for (float& v : t.entries) v = static_cast<float>(rng.uniform());
    return t;
}

std::set<std::pair<int, int>> zero_set(const ImageHeadMask& m) {
    std::set<std::pair<int, int>> s;
    for (int l = 0; l < m.num_layers; ++l) {
        for (int h = 0; h < m.num_heads; ++h) {
            if (m.at(l, h) == 0) s.insert({l, h});
        }
    }
    return s;
}

} // namespace

TEST_CASE("record_step sums the row over the image span") {
    const StepOutput s = uniform_step(2, 3, 10);
    const std::vector<float> mass = record_step(s, 2, 6);
    REQUIRE(mass.size() == 6);
    for (float v : mass) CHECK(v == doctest::Approx(0.4).epsilon(1e-6));
}

TEST_CASE("record_step with zero mass on the span") {
    StepOutput s = uniform_step(1, 2, 8);
    for (auto& row : s.attention) {
        row.assign(8, 0.0f);
        row[7] = 1.0f;
    }
    const std::vector<float> mass = record_step(s, 0, 4);
    for (float v : mass) CHECK(v == 0.0f);
}

TEST_CASE("record_step rejects spans outside the prefix") {
    const StepOutput s = uniform_step(1, 1, 5);
    CHECK_THROWS_AS(record_step(s, 2, 7), std::runtime_error);
    CHECK_THROWS_AS(record_step(s, -1, 3), std::runtime_error);
}

TEST_CASE("record_step matches direct softmax recomputation on a seeded model") {
    const ModelConfig cfg = small_config(17);
    const Model m = build_model(cfg);
    const MultimodalSequence seq = random_prompt(cfg, 16, 6, 5);
    const StepOutput step = forward_full(m, seq);
    const std::vector<float> mass = record_step(step, seq.image_start, seq.image_end);

    const reference::RefOutput ref = reference::forward(m, seq);
    for (int l = 0; l < cfg.num_layers; ++l) {
        for (int h = 0; h < cfg.num_heads; ++h) {
            float want = 0.0f;
            for (int t = seq.image_start; t < seq.image_end; ++t) {
                want += ref.attn_at(l, h, ref.n - 1, t);
            }
            CHECK(std::fabs(mass[static_cast<size_t>(l) * cfg.num_heads + h] - want) <= 1e-5f);
        }
    }
}

TEST_CASE("profile counts generated tokens across prompts") {
    const ModelConfig cfg = small_config(23);
    const Model m = build_model(cfg);
    std::vector<MultimodalSequence> corpus = {random_prompt(cfg, 14, 5, 1),
                                              random_prompt(cfg, 12, 4, 2)};
    const AttentionTrace t = profile(m, corpus, 5);
    CHECK(t.steps() == 10);
    CHECK(t.config_hash == cfg.hash());
    for (float v : t.entries) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f + 1e-6f);
    }

    const AttentionTrace t2 = profile(m, corpus, 5);
    CHECK(t.entries == t2.entries);

    CHECK_THROWS_AS(profile(m, {}, 5), std::invalid_argument);
}

TEST_CASE("parallel profiling merges to the sequential result") {
    const ModelConfig cfg = small_config(29);
    const Model m = build_model(cfg);
    std::vector<MultimodalSequence> corpus;
    for (int i = 0; i < 6; ++i) corpus.push_back(random_prompt(cfg, 13, 5, 10 + i));

    const AttentionTrace whole = profile(m, corpus, 4, 1);
    const AttentionTrace par = profile(m, corpus, 4, 4);
    CHECK(whole.entries == par.entries);

    // profiling the halves and merging the counts equals counting the whole
    std::vector<MultimodalSequence> first(corpus.begin(), corpus.begin() + 3);
    std::vector<MultimodalSequence> second(corpus.begin() + 3, corpus.end());
    const CountMatrix ca = count_exceedances(profile(m, first, 4), 0.3);
    const CountMatrix cb = count_exceedances(profile(m, second, 4), 0.3);
    const CountMatrix merged = merge_counts(ca, cb);
    const CountMatrix direct = count_exceedances(whole, 0.3);
    CHECK(merged.counts == direct.counts);
    CHECK(merged.total_tokens == direct.total_tokens);
}

TEST_CASE("count merging is commutative and associative") {
    auto counts = [](uint64_t seed) {
        const AttentionTrace t = random_trace(2, 3, 25, seed);
        return count_exceedances(t, 0.7);
    };
    const CountMatrix a = counts(1), b = counts(2), c = counts(3);
    CHECK(merge_counts(a, b).counts == merge_counts(b, a).counts);
    CHECK(merge_counts(merge_counts(a, b), c).counts ==
          merge_counts(a, merge_counts(b, c)).counts);
    CHECK(merge_counts(a, b).total_tokens == a.total_tokens + b.total_tokens);

    CountMatrix other_tau = b;
    other_tau.tau = 0.9;
    CHECK_THROWS_AS(merge_counts(a, other_tau), std::invalid_argument);
    CountMatrix other_shape = b;
    other_shape.num_heads = 4;
    CHECK_THROWS_AS(merge_counts(a, other_shape), std::invalid_argument);
}

TEST_CASE("count_exceedances uses strict inequality and validates tau") {
    AttentionTrace t;
    t.num_layers = 1;
    t.num_heads = 1;
    t.entries = {0.95f};
    CHECK(count_exceedances(t, 0.9).at(0, 0) == 1);
    t.entries = {0.9f};
    CHECK(count_exceedances(t, 0.9).at(0, 0) == 0); // equality does not count
    t.entries = {0.5f, 0.2f, 0.85f};
    CHECK(count_exceedances(t, 0.9).at(0, 0) == 0);

    CHECK_THROWS_AS(count_exceedances(t, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(count_exceedances(t, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(count_exceedances(t, -0.5), std::invalid_argument);
}

TEST_CASE("counts are elementwise non-increasing in tau") {
    for (uint64_t seed = 0; seed < 5; ++seed) {
        const AttentionTrace t = random_trace(3, 4, 40, seed);
        const CountMatrix lo = count_exceedances(t, 0.6);
        const CountMatrix hi = count_exceedances(t, 0.9);
        for (size_t i = 0; i < lo.counts.size(); ++i) {
            CHECK(lo.counts[i] >= hi.counts[i]);
        }
        // brute-force recount
        for (int l = 0; l < 3; ++l) {
            for (int h = 0; h < 4; ++h) {
                int64_t n = 0;
                for (int s = 0; s < t.steps(); ++s) n += t.at(s, l, h) > 0.6f;
                CHECK(n == lo.at(l, h));
            }
        }
    }
}

TEST_CASE("build_mask marks exactly the non-zero counts") {
    CountMatrix c;
    c.num_layers = 4;
    c.num_heads = 8;
    c.tau = 0.5;
    c.counts.assign(32, 0);
    const ImageHeadMask all_ones = build_mask(c);
    CHECK(all_ones.count_zeros() == 0);

    c.counts[static_cast<size_t>(2) * 8 + 5] = 3;
    const ImageHeadMask m = build_mask(c);
    CHECK(m.count_zeros() == 1);
    CHECK(m.at(2, 5) == 0);
    CHECK(m.tau == 0.5);
}

TEST_CASE("mask_stats reproduces the published count/proportion arithmetic") {
    ImageHeadMask m = ImageHeadMask::ones(32, 32);
    for (int i = 0; i < 238; ++i) m.bits[i] = 0;
    MaskStats s = mask_stats(m);
    CHECK(s.num_image_heads == 238);
    CHECK(std::round(s.proportion * 1e4) / 1e4 == doctest::Approx(0.2324));

    ImageHeadMask m2 = ImageHeadMask::ones(32, 32);
    for (int i = 0; i < 192; ++i) m2.bits[i] = 0;
    CHECK(mask_stats(m2).proportion == 0.1875); // 192/1024 is exact

    const ImageHeadMask ones = ImageHeadMask::ones(4, 4);
    const MaskStats empty = mask_stats(ones);
    CHECK(empty.num_image_heads == 0);
    CHECK(empty.proportion == 0.0);
}

TEST_CASE("normalize_counts scales by the maximum and preserves order") {
    CountMatrix c;
    c.num_layers = 2;
    c.num_heads = 3;
    c.counts = {4, 0, 9, 2, 9, 7};
    const std::vector<double> n = normalize_counts(c);
    CHECK(*std::max_element(n.begin(), n.end()) == 1.0);
    CHECK(n[1] == 0.0);
    for (size_t i = 0; i < n.size(); ++i) {
        for (size_t j = 0; j < n.size(); ++j) {
            CHECK((c.counts[i] < c.counts[j]) == (n[i] < n[j]));
        }
    }

    c.counts = {0, 0, 0, 0, 0, 0};
    for (double v : normalize_counts(c)) CHECK(v == 0.0);
}

TEST_CASE("mask_overlap on the published intersection/union pair") {
    // zero sets: b subset of a with |b|=189, |a|=202
    ImageHeadMask a = ImageHeadMask::ones(32, 32);
    ImageHeadMask b = ImageHeadMask::ones(32, 32);
    for (int i = 0; i < 202; ++i) a.bits[i] = 0;
    for (int i = 0; i < 189; ++i) b.bits[i] = 0;
    const MaskOverlap o = mask_overlap(a, b);
    CHECK(o.intersection == 189);
    CHECK(o.unions == 202);
    CHECK(std::round(o.ratio * 100) / 100 == doctest::Approx(0.94));
}

TEST_CASE("mask_overlap identities") {
    ImageHeadMask a = ImageHeadMask::ones(3, 3);
    a.set(0, 0, 0);
    a.set(1, 1, 0);
    const MaskOverlap same = mask_overlap(a, a);
    CHECK(same.ratio == 1.0);

    ImageHeadMask b = ImageHeadMask::ones(3, 3);
    b.set(2, 2, 0);
    const MaskOverlap disjoint = mask_overlap(a, b);
    CHECK(disjoint.intersection == 0);
    CHECK(disjoint.ratio == 0.0);

    const ImageHeadMask e1 = ImageHeadMask::ones(3, 3);
    const ImageHeadMask e2 = ImageHeadMask::ones(3, 3);
    CHECK(mask_overlap(e1, e2).ratio == 1.0); // both empty

    const ImageHeadMask other = ImageHeadMask::ones(3, 4);
    CHECK_THROWS_AS(mask_overlap(a, other), std::invalid_argument);
}

TEST_CASE("random_mask keeps cardinality and avoids the reference zeros") {
    ImageHeadMask ref = ImageHeadMask::ones(4, 4);
    ref.set(0, 0, 0);
    ref.set(1, 2, 0);
    ref.set(3, 3, 0);
    const ImageHeadMask r = random_mask(ref, 42);
    CHECK(r.count_zeros() == 3);
    for (const auto& [l, h] : zero_set(r)) {
        CHECK(ref.at(l, h) == 1);
    }
    CHECK(random_mask(ref, 42).bits == r.bits);
    CHECK(random_mask(ref, 43).bits != r.bits);
}

TEST_CASE("random_mask draws uniformly over the complement") {
    ImageHeadMask ref = ImageHeadMask::ones(4, 8); // 32 heads
    for (int i = 0; i < 6; ++i) ref.bits[i] = 0;   // complement size 26
    const int draws = 10000;
    const int k = 6;
    const double p = static_cast<double>(k) / 26.0;
    std::vector<int> hits(32, 0);
    for (int s = 0; s < draws; ++s) {
        const ImageHeadMask r = random_mask(ref, 1000 + s);
        for (size_t i = 0; i < r.bits.size(); ++i) {
            if (r.bits[i] == 0) ++hits[i];
        }
    }
    const double sigma = std::sqrt(draws * p * (1 - p));
    for (int i = 6; i < 32; ++i) {
        CHECK(std::fabs(hits[i] - draws * p) <= 3.0 * sigma);
    }

    ImageHeadMask infeasible = ImageHeadMask::ones(2, 2);
    for (int i = 0; i < 3; ++i) infeasible.bits[i] = 0;
    CHECK_THROWS_AS(random_mask(infeasible, 1), std::invalid_argument);
}

TEST_CASE("tau sweep: image-head sets shrink as tau grows") {
    for (uint64_t seed = 50; seed < 55; ++seed) {
        const AttentionTrace t = random_trace(4, 4, 60, seed);
        const double grid[] = {0.5, 0.6, 0.7, 0.8, 0.9, 0.95};
        std::set<std::pair<int, int>> prev;
        bool first = true;
        for (double tau : grid) {
            const auto zs = zero_set(build_mask(count_exceedances(t, tau)));
            if (!first) {
                CHECK(std::includes(prev.begin(), prev.end(), zs.begin(), zs.end()));
            }
            prev = zs;
            first = false;
        }
    }
}
