#pragma once

#include "mmdec/model.hpp"

namespace mmdec::reference {

// Output of the serial reference forward. Keeps the full per-layer, per-head
// attention matrices, which the production path never materializes.
struct RefOutput {
    int n = 0;
    int num_layers = 0;
    int num_heads = 0;
    std::vector<float> logits;
    std::vector<float> attn; // [layer][head][query][key], causal entries only nonzero

    float attn_at(int layer, int head, int query, int key) const {
        return attn[((static_cast<size_t>(layer) * num_heads + head) * n + query) * n + key];
    }
};

// Naive single-threaded full-prefix forward, written independently of the
// incremental path: no cache, whole-sequence recompute, masked heads realized
// by zeroing their value-output. Serves as the numerical oracle in tests and
// as the baseline in the benchmark.
RefOutput forward(const Model& model, const MultimodalSequence& seq,
                  const ImageHeadMask* head_mask = nullptr);

} // namespace mmdec::reference
