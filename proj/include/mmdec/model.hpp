#pragma once

#include "mmdec/config.hpp"
#include "mmdec/mask.hpp"
#include "mmdec/sequence.hpp"

#include <atomic>
#include <cstdint>
#include <memory>
#include <vector>

namespace mmdec {

// All matrices are row-major [out_dim][in_dim]. Head h of a projection owns
// rows [h*d_head, (h+1)*d_head).
struct LayerWeights {
    std::vector<float> wq, wk, wv; // [d_model][d_model]
    std::vector<float> wo;         // [d_model][d_model], input is the head concat
    std::vector<float> ln1_gamma, ln1_beta;
    std::vector<float> ln2_gamma, ln2_beta;
    std::vector<float> ff1; // [d_ff][d_model]
    std::vector<float> ff2; // [d_model][d_ff]
    // Additive attention-logit bias per (head, key role), applied inside the
    // softmax argument. Test fixture only; all zeros in production models.
    std::vector<float> attn_role_bias; // [num_heads * kNumRoles]
};

// Immutable after construction. Identical (config, rng_seed) rebuilds the
// exact same weights, so no weight file format exists. Safe to share across
// threads; the forward-pass counter is instrumentation and does not affect
// any output.
struct Model {
    ModelConfig config;
    std::vector<float> tok_embed; // [vocab_size][d_model]
    std::vector<float> pos_embed; // [max_seq_len][d_model]
    std::vector<LayerWeights> layers;
    std::vector<float> lnf_gamma, lnf_beta;
    std::vector<float> w_out; // [vocab_size][d_model]

    mutable std::unique_ptr<std::atomic<uint64_t>> forward_passes;

    int d_ff() const { return 2 * config.d_model; }
    uint64_t forward_pass_count() const { return forward_passes->load(); }
};

struct StepOutput {
    std::vector<float> logits; // [vocab_size], pre-softmax
    int prefix_len = 0;        // number of positions the last query attends to
    // Attention row of the last query position for every (layer, head);
    // index layer*num_heads+head, each row has prefix_len entries.
    std::vector<std::vector<float>> attention;
    int num_layers = 0;
    int num_heads = 0;

    const std::vector<float>& row(int layer, int head) const {
        return attention[static_cast<size_t>(layer) * num_heads + head];
    }
};

// Per-layer key/value history. Reusing the state across forward_step calls
// makes continuation O(new positions) instead of O(prefix).
struct IncrementalState {
    int n_cached = 0;
    std::vector<std::vector<float>> k_cache; // [layer][pos*d_model]
    std::vector<std::vector<float>> v_cache;
};

// Deterministic seeded initialization; throws on invalid config.
Model build_model(const ModelConfig& config);

// Processes seq positions [state.n_cached, seq.size()) and returns logits and
// attention rows at the last position. With head_mask, the attention output
// of every bit-0 head is the zero vector before the layer output projection;
// no weight is touched. Counts as one forward pass.
StepOutput forward_step(const Model& model, const MultimodalSequence& seq,
                        const ImageHeadMask* head_mask, IncrementalState& state);

// Convenience: full forward over seq with a fresh state.
StepOutput forward_full(const Model& model, const MultimodalSequence& seq,
                        const ImageHeadMask* head_mask = nullptr);

float gelu(float x);

} // namespace mmdec
