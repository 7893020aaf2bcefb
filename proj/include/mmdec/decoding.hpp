#pragma once

#include "mmdec/mask.hpp"
#include "mmdec/model.hpp"

#include <optional>
#include <vector>

namespace mmdec {

struct DecodeParams {
    float alpha = 0.0f; // contrast intensity, >= 0
    int max_new_tokens = 1;
    std::optional<Token> stop_token;
    bool record_logits = false;

    void validate() const;
};

struct StepRecord {
    std::vector<float> baseline;
    std::vector<float> masked;
    std::vector<float> combined;
};

struct DecodeResult {
    std::vector<Token> tokens;
    std::vector<StepRecord> steps; // per generated token, when record_logits
    uint64_t forward_passes = 0;
};

// Greedy argmax; ties go to the lowest token id.
Token argmax_token(const std::vector<float>& logits);

// combined = (1+alpha)*base - alpha*masked, computed as base + alpha*(base -
// masked) so that alpha = 0 and base == masked both reduce to base bit-exactly.
std::vector<float> contrastive_combine(const std::vector<float>& base_logits,
                                       const std::vector<float>& masked_logits,
                                       float alpha);

// Plain greedy decoding.
DecodeResult decode_baseline(const Model& model, const MultimodalSequence& prompt,
                             const DecodeParams& params);

// Dual-branch contrastive decoding: per step one unmasked and one head-masked
// forward, each on its own incremental state; the next token is the argmax of
// the combined logits and is consumed by both branches. Exactly two forward
// passes per generated token.
DecodeResult decode_contrastive(const Model& model, const ImageHeadMask& mask,
                                const MultimodalSequence& prompt,
                                const DecodeParams& params);

} // namespace mmdec
