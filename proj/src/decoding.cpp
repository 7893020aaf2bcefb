#include "mmdec/decoding.hpp"

#include <cmath>
#include <stdexcept>

namespace mmdec {

void DecodeParams::validate() const {
    if (!(alpha >= 0.0f) || !std::isfinite(alpha)) {
        throw std::invalid_argument("decode params: alpha must be finite and >= 0");
    }
    if (max_new_tokens < 1) {
        throw std::invalid_argument("decode params: max_new_tokens must be >= 1");
    }
}

Token argmax_token(const std::vector<float>& logits) {
    Token best = 0;
    float best_v = logits[0];
    for (size_t i = 1; i < logits.size(); ++i) {
        if (logits[i] > best_v) {
            best_v = logits[i];
            best = static_cast<Token>(i);
        }
    }
    return best;
}

std::vector<float> contrastive_combine(const std::vector<float>& base_logits,
                                       const std::vector<float>& masked_logits,
                                       float alpha) {
    if (base_logits.size() != masked_logits.size()) {
        throw std::invalid_argument("contrastive_combine: length mismatch");
    }
    std::vector<float> out(base_logits.size());
    for (size_t i = 0; i < out.size(); ++i) {
        if (!std::isfinite(base_logits[i]) || !std::isfinite(masked_logits[i])) {
            throw std::invalid_argument("contrastive_combine: non-finite input logit");
        }
        out[i] = base_logits[i] + alpha * (base_logits[i] - masked_logits[i]);
    }
    return out;
}

namespace {

void check_headroom(const Model& model, const MultimodalSequence& prompt,
                    const DecodeParams& params) {
    if (prompt.size() + params.max_new_tokens > model.config.max_seq_len) {
        throw std::runtime_error("decode: prompt plus max_new_tokens exceeds max_seq_len");
    }
}

} // namespace

DecodeResult decode_baseline(const Model& model, const MultimodalSequence& prompt,
                             const DecodeParams& params) {
    params.validate();
    check_headroom(model, prompt, params);

    DecodeResult res;
    MultimodalSequence seq = prompt;
    IncrementalState state;
    for (int g = 0; g < params.max_new_tokens; ++g) {
        StepOutput step = forward_step(model, seq, nullptr, state);
        ++res.forward_passes;
        const Token tok = argmax_token(step.logits);
        if (params.record_logits) {
            res.steps.push_back({step.logits, {}, step.logits});
        }
        res.tokens.push_back(tok);
        seq.append_generated(tok);
        if (params.stop_token && tok == *params.stop_token) break;
    }
    return res;
}

DecodeResult decode_contrastive(const Model& model, const ImageHeadMask& mask,
                                const MultimodalSequence& prompt,
                                const DecodeParams& params) {
    params.validate();
    check_headroom(model, prompt, params);
    if (mask.num_layers != model.config.num_layers ||
        mask.num_heads != model.config.num_heads) {
        throw std::runtime_error("decode: head mask shape mismatch");
    }

    DecodeResult res;
    MultimodalSequence seq = prompt;
    IncrementalState base_state;
    IncrementalState masked_state;
    for (int g = 0; g < params.max_new_tokens; ++g) {
        StepOutput base = forward_step(model, seq, nullptr, base_state);
        StepOutput degraded = forward_step(model, seq, &mask, masked_state);
        res.forward_passes += 2;
        std::vector<float> combined =
            contrastive_combine(base.logits, degraded.logits, params.alpha);
        const Token tok = argmax_token(combined);
        if (params.record_logits) {
            res.steps.push_back({std::move(base.logits), std::move(degraded.logits),
                                 std::move(combined)});
        }
        res.tokens.push_back(tok);
        seq.append_generated(tok);
        if (params.stop_token && tok == *params.stop_token) break;
    }
    return res;
}

} // namespace mmdec
