#pragma once

#include "mmdec/mask.hpp"
#include "mmdec/model.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace mmdec {

// Per-generated-token record of how much attention mass each head put on the
// image span. T entries of shape L x H, values in [0,1].
struct AttentionTrace {
    int num_layers = 0;
    int num_heads = 0;
    uint64_t config_hash = 0;
    std::string source;
    std::vector<float> entries; // [T][L][H]

    int steps() const {
        const int lh = num_layers * num_heads;
        return lh == 0 ? 0 : static_cast<int>(entries.size() / lh);
    }
    float at(int t, int layer, int head) const {
        return entries[(static_cast<size_t>(t) * num_layers + layer) * num_heads + head];
    }
};

struct CountMatrix {
    int num_layers = 0;
    int num_heads = 0;
    double tau = 0.0;
    int64_t total_tokens = 0;
    uint64_t config_hash = 0;
    std::vector<int64_t> counts; // [L][H]

    int64_t at(int layer, int head) const {
        return counts[static_cast<size_t>(layer) * num_heads + head];
    }
};

// Sum of the last-query attention row over the image span, per (layer, head).
std::vector<float> record_step(const StepOutput& step, int image_start, int image_end);

// Greedy-decodes each prompt for exactly gen_len tokens, recording the image
// attention mass at every generated token (the first one uses the attention
// row of the final prompt position). Traces of consecutive prompts
// concatenate, so the result does not depend on worker count.
AttentionTrace profile(const Model& model, const std::vector<MultimodalSequence>& corpus,
                       int gen_len, int workers = 1);

// counts[i][j] = |{t : trace[t][i][j] > tau}|, strict inequality.
CountMatrix count_exceedances(const AttentionTrace& trace, double tau);

// Elementwise sum; shapes and tau must agree. Merging partial counts from a
// partitioned corpus equals counting the whole corpus.
CountMatrix merge_counts(const CountMatrix& a, const CountMatrix& b);

// Bit 0 (image head) exactly where count > 0.
ImageHeadMask build_mask(const CountMatrix& counts);

struct MaskStats {
    int64_t num_image_heads = 0;
    double proportion = 0.0;
};
MaskStats mask_stats(const ImageHeadMask& mask);

// Counts scaled by the maximum entry, for heatmap export; all-zero counts map
// to all zeros. Does not participate in image-head selection.
std::vector<double> normalize_counts(const CountMatrix& counts);

struct MaskOverlap {
    int64_t intersection = 0;
    int64_t unions = 0;
    double ratio = 0.0; // 1.0 when both zero-bit sets are empty
};
MaskOverlap mask_overlap(const ImageHeadMask& a, const ImageHeadMask& b);

// Control mask with the same number of zero bits, drawn uniformly without
// replacement from the complement of the reference's zero set.
ImageHeadMask random_mask(const ImageHeadMask& reference, uint64_t seed);

} // namespace mmdec
