#pragma once

#include "mmdec/mask.hpp"
#include "mmdec/model.hpp"
#include "mmdec/synthdata.hpp"

#include <vector>

namespace mmdec {

struct HeadRef {
    int layer = 0;
    int head = 0;
    bool operator==(const HeadRef&) const = default;
};

// Calibration constants of the constructed fixture. All values are evidence
// units in the residual stream; greedy choice compares them directly because
// every output row of the unembedding has equal sum.
struct GroundedGains {
    float role_bias = 30.0f;       // attention-logit bias for role-keyed heads
    float match_gain = 20.0f;      // attention logit of an exact image-object match
    float neighbor_frac = 0.17f;   // key smear onto id-adjacent objects
    float carrier_gain = 12.0f;    // present-object evidence at full image mass
    float stop_from_image = 1.0f;  // end-of-caption evidence carried by image heads
    float yes_gain = 6.0f;         // answer evidence at full match mass
    float yes_pivot = 0.55f;       // match mass where answer evidence crosses zero
    float gate_gain = 100.0f;      // answer-token gate injected by the ask head
    float yes_floor = -7.0f;       // standing prior against answering yes
    float yes_margin = 0.5f;       // how decisively "no" wins at zero match evidence
    float stop_prior = -0.3f;      // standing end-of-caption prior
    float popular_prior[3] = {3.5f, 3.2f, 2.9f}; // prior pull toward the most popular objects
    float inhibit_gain = 40.0f;    // suppression of already-generated objects
    // Non-grounding layer-0 heads leak a little image evidence; the per-head
    // shares are random but normalized so the whole population sums to these
    // totals, delivered at the fixed image share of the (system+image) window.
    float leak_gain_total = 0.8f;
    float leak_stop_total = 5.3f;
};

// Constructs (never trains) a model in which exactly grounding_heads put
// >= 0.9 attention mass on the image span during caption generation and carry
// the image content to the output logits; masking them severs that path and
// leaves only the popularity-driven prior. Requirements beyond the base
// config checks: one-hot embeddings need d_model >= vocab_size + n_objects + 4,
// d_head >= n_objects, and at least one grounding head in layer 0 (the value
// paths live there so the arithmetic stays exact); layer 0 must also keep
// three non-grounding slots free for the ask/inhibit/prior machinery.
Model build_grounded_model(const ModelConfig& config, const Lexicon& lexicon,
                           const std::vector<HeadRef>& grounding_heads,
                           const GroundedGains& gains = {});

// Mask with zeros exactly at the given heads.
ImageHeadMask mask_for_heads(const ModelConfig& config, const std::vector<HeadRef>& heads);

} // namespace mmdec
