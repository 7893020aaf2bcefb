#include "mmdec/reference.hpp"

#include <cmath>
#include <stdexcept>

namespace mmdec::reference {

namespace {

std::vector<float> norm_row(const std::vector<float>& x, int off, int d,
                            const std::vector<float>& gamma,
                            const std::vector<float>& beta) {
    float mean = 0.0f;
    for (int i = 0; i < d; ++i) mean += x[off + i];
    mean /= static_cast<float>(d);
    float var = 0.0f;
    for (int i = 0; i < d; ++i) var += (x[off + i] - mean) * (x[off + i] - mean);
    var /= static_cast<float>(d);
    const float inv = 1.0f / std::sqrt(var + 1e-5f);
    std::vector<float> out(d);
    for (int i = 0; i < d; ++i) out[i] = (x[off + i] - mean) * inv * gamma[i] + beta[i];
    return out;
}

} // namespace

RefOutput forward(const Model& model, const MultimodalSequence& seq,
                  const ImageHeadMask* head_mask) {
    const ModelConfig& cfg = model.config;
    const int n = seq.size();
    const int d = cfg.d_model;
    const int nh = cfg.num_heads;
    const int dh = cfg.d_head();
    const int dff = model.d_ff();

    if (n > cfg.max_seq_len) throw std::runtime_error("reference: sequence overflow");
    if (head_mask &&
        (head_mask->num_layers != cfg.num_layers || head_mask->num_heads != nh)) {
        throw std::runtime_error("reference: head mask shape mismatch");
    }

    RefOutput out;
    out.n = n;
    out.num_layers = cfg.num_layers;
    out.num_heads = nh;
    out.attn.assign(static_cast<size_t>(cfg.num_layers) * nh * n * n, 0.0f);

    // residual stream, all positions
    std::vector<float> x(static_cast<size_t>(n) * d);
    for (int p = 0; p < n; ++p) {
        for (int i = 0; i < d; ++i) {
            x[static_cast<size_t>(p) * d + i] =
                model.tok_embed[static_cast<size_t>(seq.tokens[p]) * d + i] +
                model.pos_embed[static_cast<size_t>(p) * d + i];
        }
    }

    for (int l = 0; l < cfg.num_layers; ++l) {
        const LayerWeights& lw = model.layers[l];

        std::vector<float> q(static_cast<size_t>(n) * d);
        std::vector<float> k(static_cast<size_t>(n) * d);
        std::vector<float> v(static_cast<size_t>(n) * d);
        for (int p = 0; p < n; ++p) {
            std::vector<float> h = norm_row(x, p * d, d, lw.ln1_gamma, lw.ln1_beta);
            for (int r = 0; r < d; ++r) {
                float aq = 0.0f, ak = 0.0f, av = 0.0f;
                for (int c = 0; c < d; ++c) {
                    aq += lw.wq[static_cast<size_t>(r) * d + c] * h[c];
                    ak += lw.wk[static_cast<size_t>(r) * d + c] * h[c];
                    av += lw.wv[static_cast<size_t>(r) * d + c] * h[c];
                }
                q[static_cast<size_t>(p) * d + r] = aq;
                k[static_cast<size_t>(p) * d + r] = ak;
                v[static_cast<size_t>(p) * d + r] = av;
            }
        }

        std::vector<float> heads(static_cast<size_t>(n) * d, 0.0f);
        for (int h = 0; h < nh; ++h) {
            for (int p = 0; p < n; ++p) {
                std::vector<float> scores(p + 1);
                float mx = -1e30f;
                for (int t = 0; t <= p; ++t) {
                    float s = 0.0f;
                    for (int i = 0; i < dh; ++i) {
                        s += q[static_cast<size_t>(p) * d + h * dh + i] *
                             k[static_cast<size_t>(t) * d + h * dh + i];
                    }
                    s = s / std::sqrt(static_cast<float>(dh)) +
                        lw.attn_role_bias[h * kNumRoles + static_cast<int>(seq.roles[t])];
                    scores[t] = s;
                    mx = std::max(mx, s);
                }
                float denom = 0.0f;
                for (int t = 0; t <= p; ++t) {
                    scores[t] = std::exp(scores[t] - mx);
                    denom += scores[t];
                }
                for (int t = 0; t <= p; ++t) {
                    scores[t] /= denom;
                    out.attn[((static_cast<size_t>(l) * nh + h) * n + p) * n + t] = scores[t];
                }
                const bool zeroed = head_mask && head_mask->at(l, h) == 0;
                if (!zeroed) {
                    // value mixing, dimension-major to differ from the
                    // production accumulation order
                    for (int i = 0; i < dh; ++i) {
                        float acc = 0.0f;
                        for (int t = 0; t <= p; ++t) {
                            acc += scores[t] * v[static_cast<size_t>(t) * d + h * dh + i];
                        }
                        heads[static_cast<size_t>(p) * d + h * dh + i] = acc;
                    }
                }
            }
        }

        for (int p = 0; p < n; ++p) {
            for (int r = 0; r < d; ++r) {
                float acc = 0.0f;
                for (int c = 0; c < d; ++c) {
                    acc += lw.wo[static_cast<size_t>(r) * d + c] *
                           heads[static_cast<size_t>(p) * d + c];
                }
                x[static_cast<size_t>(p) * d + r] += acc;
            }
        }

        for (int p = 0; p < n; ++p) {
            std::vector<float> h2 = norm_row(x, p * d, d, lw.ln2_gamma, lw.ln2_beta);
            std::vector<float> ff(dff);
            for (int r = 0; r < dff; ++r) {
                float acc = 0.0f;
                for (int c = 0; c < d; ++c) acc += lw.ff1[static_cast<size_t>(r) * d + c] * h2[c];
                ff[r] = gelu(acc);
            }
            for (int r = 0; r < d; ++r) {
                float acc = 0.0f;
                for (int c = 0; c < dff; ++c) acc += lw.ff2[static_cast<size_t>(r) * dff + c] * ff[c];
                x[static_cast<size_t>(p) * d + r] += acc;
            }
        }
    }

    std::vector<float> fin = norm_row(x, (n - 1) * d, d, model.lnf_gamma, model.lnf_beta);
    out.logits.resize(cfg.vocab_size);
    for (int t = 0; t < cfg.vocab_size; ++t) {
        float acc = 0.0f;
        for (int c = 0; c < d; ++c) acc += model.w_out[static_cast<size_t>(t) * d + c] * fin[c];
        out.logits[t] = acc;
    }
    return out;
}

} // namespace mmdec::reference
