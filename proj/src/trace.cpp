#include "mmdec/trace.hpp"

#include "mmdec/decoding.hpp"
#include "mmdec/rng.hpp"

#include <algorithm>
#include <stdexcept>

namespace mmdec {

std::vector<float> record_step(const StepOutput& step, int image_start, int image_end) {
    if (image_start < 0 || image_end < image_start || image_end > step.prefix_len) {
        throw std::runtime_error("record_step: image span out of range of attended prefix");
    }
    std::vector<float> mass(static_cast<size_t>(step.num_layers) * step.num_heads);
    for (int l = 0; l < step.num_layers; ++l) {
        for (int h = 0; h < step.num_heads; ++h) {
            const std::vector<float>& row = step.row(l, h);
            float s = 0.0f;
            for (int t = image_start; t < image_end; ++t) s += row[t];
            mass[static_cast<size_t>(l) * step.num_heads + h] = s;
        }
    }
    return mass;
}

AttentionTrace profile(const Model& model, const std::vector<MultimodalSequence>& corpus,
                       int gen_len, int workers) {
    if (corpus.empty()) throw std::invalid_argument("profile: empty corpus");
    if (gen_len < 1) throw std::invalid_argument("profile: gen_len must be >= 1");
    if (workers < 1) workers = 1;

    const int lh = model.config.num_layers * model.config.num_heads;
    AttentionTrace trace;
    trace.num_layers = model.config.num_layers;
    trace.num_heads = model.config.num_heads;
    trace.config_hash = model.config.hash();
    trace.source = "profile:prompts=" + std::to_string(corpus.size()) +
                   ",gen_len=" + std::to_string(gen_len);
    trace.entries.assign(static_cast<size_t>(corpus.size()) * gen_len * lh, 0.0f);

    const int np = static_cast<int>(corpus.size());
    // Each prompt owns a disjoint slice of the trace, so the result is
    // bit-identical for any worker count.
#pragma omp parallel for schedule(static) num_threads(workers)
    for (int pi = 0; pi < np; ++pi) {
        MultimodalSequence seq = corpus[pi];
        IncrementalState state;
        for (int g = 0; g < gen_len; ++g) {
            StepOutput step = forward_step(model, seq, nullptr, state);
            std::vector<float> mass = record_step(step, seq.image_start, seq.image_end);
            std::copy(mass.begin(), mass.end(),
                      trace.entries.begin() +
                          (static_cast<size_t>(pi) * gen_len + g) * lh);
            seq.append_generated(argmax_token(step.logits));
        }
    }
    return trace;
}

CountMatrix count_exceedances(const AttentionTrace& trace, double tau) {
    if (!(tau > 0.0 && tau < 1.0)) {
        throw std::invalid_argument("count_exceedances: tau must be in (0,1)");
    }
    CountMatrix cm;
    cm.num_layers = trace.num_layers;
    cm.num_heads = trace.num_heads;
    cm.tau = tau;
    cm.total_tokens = trace.steps();
    cm.config_hash = trace.config_hash;
    cm.counts.assign(static_cast<size_t>(trace.num_layers) * trace.num_heads, 0);
    const int T = trace.steps();
    for (int t = 0; t < T; ++t) {
        for (size_t i = 0; i < cm.counts.size(); ++i) {
            if (trace.entries[static_cast<size_t>(t) * cm.counts.size() + i] >
                static_cast<float>(tau)) {
                ++cm.counts[i];
            }
        }
    }
    return cm;
}

CountMatrix merge_counts(const CountMatrix& a, const CountMatrix& b) {
    if (a.num_layers != b.num_layers || a.num_heads != b.num_heads) {
        throw std::invalid_argument("merge_counts: shape mismatch");
    }
    if (a.tau != b.tau) throw std::invalid_argument("merge_counts: tau mismatch");
    CountMatrix out = a;
    out.total_tokens += b.total_tokens;
    for (size_t i = 0; i < out.counts.size(); ++i) out.counts[i] += b.counts[i];
    return out;
}

ImageHeadMask build_mask(const CountMatrix& counts) {
    ImageHeadMask m;
    m.num_layers = counts.num_layers;
    m.num_heads = counts.num_heads;
    m.tau = counts.tau;
    m.config_hash = counts.config_hash;
    m.source = "counts:T=" + std::to_string(counts.total_tokens);
    m.bits.resize(counts.counts.size());
    for (size_t i = 0; i < counts.counts.size(); ++i) {
        m.bits[i] = counts.counts[i] > 0 ? 0 : 1;
    }
    return m;
}

MaskStats mask_stats(const ImageHeadMask& mask) {
    MaskStats s;
    s.num_image_heads = mask.count_zeros();
    const size_t total = mask.bits.size();
    s.proportion = total == 0 ? 0.0
                              : static_cast<double>(s.num_image_heads) /
                                    static_cast<double>(total);
    return s;
}

std::vector<double> normalize_counts(const CountMatrix& counts) {
    int64_t mx = 0;
    for (int64_t c : counts.counts) mx = std::max(mx, c);
    std::vector<double> out(counts.counts.size(), 0.0);
    if (mx == 0) return out;
    for (size_t i = 0; i < out.size(); ++i) {
        out[i] = static_cast<double>(counts.counts[i]) / static_cast<double>(mx);
    }
    return out;
}

MaskOverlap mask_overlap(const ImageHeadMask& a, const ImageHeadMask& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("mask_overlap: shape mismatch");
    MaskOverlap o;
    for (size_t i = 0; i < a.bits.size(); ++i) {
        const bool za = a.bits[i] == 0;
        const bool zb = b.bits[i] == 0;
        o.intersection += (za && zb);
        o.unions += (za || zb);
    }
    o.ratio = o.unions == 0 ? 1.0
                            : static_cast<double>(o.intersection) /
                                  static_cast<double>(o.unions);
    return o;
}

ImageHeadMask random_mask(const ImageHeadMask& reference, uint64_t seed) {
    std::vector<size_t> complement;
    for (size_t i = 0; i < reference.bits.size(); ++i) {
        if (reference.bits[i] == 1) complement.push_back(i);
    }
    const size_t k = static_cast<size_t>(reference.count_zeros());
    if (k > complement.size()) {
        throw std::invalid_argument("random_mask: not enough non-image heads");
    }
    Rng rng(seed);
    // partial Fisher-Yates: first k entries are the draw
    for (size_t i = 0; i < k; ++i) {
        const size_t j = i + rng.below(complement.size() - i);
        std::swap(complement[i], complement[j]);
    }
    ImageHeadMask m = ImageHeadMask::ones(reference.num_layers, reference.num_heads);
    m.tau = reference.tau;
    m.config_hash = reference.config_hash;
    m.source = "random:seed=" + std::to_string(seed);
    for (size_t i = 0; i < k; ++i) m.bits[complement[i]] = 0;
    return m;
}

} // namespace mmdec
