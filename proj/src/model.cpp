#include "mmdec/model.hpp"

#include "mmdec/rng.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace mmdec {

float gelu(float x) {
    const float k = 0.7978845608028654f; // sqrt(2/pi)
    return 0.5f * x * (1.0f + std::tanh(k * (x + 0.044715f * x * x * x)));
}

namespace {

constexpr float kLnEps = 1e-5f;

void fill_uniform(std::vector<float>& w, size_t n, int fan_in, Rng& rng) {
    const float a = 1.0f / std::sqrt(static_cast<float>(fan_in));
    w.resize(n);
    for (size_t i = 0; i < n; ++i) w[i] = rng.uniform(-a, a);
}

void layer_norm(const float* x, int d, const float* gamma, const float* beta,
                float* out) {
    float mean = 0.0f;
    for (int i = 0; i < d; ++i) mean += x[i];
    mean /= static_cast<float>(d);
    float var = 0.0f;
    for (int i = 0; i < d; ++i) {
        const float c = x[i] - mean;
        var += c * c;
    }
    var /= static_cast<float>(d);
    const float inv = 1.0f / std::sqrt(var + kLnEps);
    for (int i = 0; i < d; ++i) out[i] = (x[i] - mean) * inv * gamma[i] + beta[i];
}

// y = W x, W row-major [rows][cols]
void matvec(const float* w, const float* x, int rows, int cols, float* y) {
    for (int r = 0; r < rows; ++r) {
        const float* wr = w + static_cast<size_t>(r) * cols;
        float acc = 0.0f;
        for (int c = 0; c < cols; ++c) acc += wr[c] * x[c];
        y[r] = acc;
    }
}

} // namespace

Model build_model(const ModelConfig& config) {
    config.validate();
    Model m;
    m.config = config;
    m.forward_passes = std::make_unique<std::atomic<uint64_t>>(0);

    const int d = config.d_model;
    const int v = config.vocab_size;
    const int dff = 2 * d;

    {
        Rng rng(derive_seed(config.rng_seed, "tok_embed"));
        fill_uniform(m.tok_embed, static_cast<size_t>(v) * d, d, rng);
    }
    {
        Rng rng(derive_seed(config.rng_seed, "pos_embed"));
        fill_uniform(m.pos_embed, static_cast<size_t>(config.max_seq_len) * d, d, rng);
    }

    m.layers.resize(config.num_layers);
    for (int l = 0; l < config.num_layers; ++l) {
        LayerWeights& lw = m.layers[l];
        const uint64_t ls = derive_seed(config.rng_seed, static_cast<uint64_t>(l) + 1);
        Rng rq(derive_seed(ls, "wq"));
        Rng rk(derive_seed(ls, "wk"));
        Rng rv(derive_seed(ls, "wv"));
        Rng ro(derive_seed(ls, "wo"));
        Rng r1(derive_seed(ls, "ff1"));
        Rng r2(derive_seed(ls, "ff2"));
        fill_uniform(lw.wq, static_cast<size_t>(d) * d, d, rq);
        fill_uniform(lw.wk, static_cast<size_t>(d) * d, d, rk);
        fill_uniform(lw.wv, static_cast<size_t>(d) * d, d, rv);
        fill_uniform(lw.wo, static_cast<size_t>(d) * d, d, ro);
        fill_uniform(lw.ff1, static_cast<size_t>(dff) * d, d, r1);
        fill_uniform(lw.ff2, static_cast<size_t>(d) * dff, dff, r2);
        lw.ln1_gamma.assign(d, 1.0f);
        lw.ln1_beta.assign(d, 0.0f);
        lw.ln2_gamma.assign(d, 1.0f);
        lw.ln2_beta.assign(d, 0.0f);
        lw.attn_role_bias.assign(static_cast<size_t>(config.num_heads) * kNumRoles, 0.0f);
    }

    m.lnf_gamma.assign(d, 1.0f);
    m.lnf_beta.assign(d, 0.0f);
    {
        Rng rng(derive_seed(config.rng_seed, "w_out"));
        fill_uniform(m.w_out, static_cast<size_t>(v) * d, d, rng);
    }
    return m;
}

StepOutput forward_step(const Model& model, const MultimodalSequence& seq,
                        const ImageHeadMask* head_mask, IncrementalState& state) {
    const ModelConfig& cfg = model.config;
    const int d = cfg.d_model;
    const int nh = cfg.num_heads;
    const int dh = cfg.d_head();
    const int dff = model.d_ff();
    const int n1 = seq.size();
    const int n0 = state.n_cached;

    if (n1 > cfg.max_seq_len) {
        throw std::runtime_error("forward_step: sequence length " + std::to_string(n1) +
                                 " exceeds max_seq_len " + std::to_string(cfg.max_seq_len));
    }
    if (n0 >= n1) {
        throw std::runtime_error("forward_step: no new positions to process");
    }
    if (head_mask &&
        (head_mask->num_layers != cfg.num_layers || head_mask->num_heads != nh)) {
        throw std::runtime_error("forward_step: head mask shape mismatch");
    }
    seq.validate();

    if (state.k_cache.empty()) {
        state.k_cache.assign(cfg.num_layers,
                             std::vector<float>(static_cast<size_t>(cfg.max_seq_len) * d));
        state.v_cache.assign(cfg.num_layers,
                             std::vector<float>(static_cast<size_t>(cfg.max_seq_len) * d));
    }

    const int nn = n1 - n0; // new positions this call
    const float inv_sqrt_dh = 1.0f / std::sqrt(static_cast<float>(dh));

    // residual stream for the new positions
    std::vector<float> x(static_cast<size_t>(nn) * d);
#pragma omp parallel for schedule(static) if(nn >= 8)
    for (int p = 0; p < nn; ++p) {
        const int pos = n0 + p;
        const float* te = model.tok_embed.data() + static_cast<size_t>(seq.tokens[pos]) * d;
        const float* pe = model.pos_embed.data() + static_cast<size_t>(pos) * d;
        float* xp = x.data() + static_cast<size_t>(p) * d;
        for (int i = 0; i < d; ++i) xp[i] = te[i] + pe[i];
    }

    StepOutput out;
    out.num_layers = cfg.num_layers;
    out.num_heads = nh;
    out.prefix_len = n1;
    out.attention.resize(static_cast<size_t>(cfg.num_layers) * nh);

    std::vector<float> normed(static_cast<size_t>(nn) * d);
    std::vector<float> q(static_cast<size_t>(nn) * d);
    std::vector<float> attn_out(static_cast<size_t>(nn) * d);

    for (int l = 0; l < cfg.num_layers; ++l) {
        const LayerWeights& lw = model.layers[l];
        float* kc = state.k_cache[l].data();
        float* vc = state.v_cache[l].data();

#pragma omp parallel for schedule(static) if(nn >= 8)
        for (int p = 0; p < nn; ++p) {
            layer_norm(x.data() + static_cast<size_t>(p) * d, d, lw.ln1_gamma.data(),
                       lw.ln1_beta.data(), normed.data() + static_cast<size_t>(p) * d);
        }

#pragma omp parallel for schedule(static) if(nn >= 8)
        for (int p = 0; p < nn; ++p) {
            const float* hp = normed.data() + static_cast<size_t>(p) * d;
            const size_t cache_off = static_cast<size_t>(n0 + p) * d;
            matvec(lw.wq.data(), hp, d, d, q.data() + static_cast<size_t>(p) * d);
            matvec(lw.wk.data(), hp, d, d, kc + cache_off);
            matvec(lw.wv.data(), hp, d, d, vc + cache_off);
        }

        // per (position, head) causal attention over the cached prefix
#pragma omp parallel for collapse(2) schedule(static) if(nn >= 8)
        for (int p = 0; p < nn; ++p) {
            for (int h = 0; h < nh; ++h) {
                const int pos = n0 + p;
                const int plen = pos + 1;
                const float* qh = q.data() + static_cast<size_t>(p) * d + h * dh;
                const float* bias = lw.attn_role_bias.data() + h * kNumRoles;

                std::vector<float> row(plen);
                float mx = -1e30f;
                for (int t = 0; t < plen; ++t) {
                    const float* kt = kc + static_cast<size_t>(t) * d + h * dh;
                    float s = 0.0f;
                    for (int i = 0; i < dh; ++i) s += qh[i] * kt[i];
                    s = s * inv_sqrt_dh + bias[static_cast<int>(seq.roles[t])];
                    row[t] = s;
                    if (s > mx) mx = s;
                }
                float denom = 0.0f;
                for (int t = 0; t < plen; ++t) {
                    row[t] = std::exp(row[t] - mx);
                    denom += row[t];
                }
                const float inv_denom = 1.0f / denom;
                for (int t = 0; t < plen; ++t) row[t] *= inv_denom;

                float* oh = attn_out.data() + static_cast<size_t>(p) * d + h * dh;
                const bool zeroed = head_mask && head_mask->at(l, h) == 0;
                if (zeroed) {
                    for (int i = 0; i < dh; ++i) oh[i] = 0.0f;
                } else {
                    for (int i = 0; i < dh; ++i) oh[i] = 0.0f;
                    for (int t = 0; t < plen; ++t) {
                        const float* vt = vc + static_cast<size_t>(t) * d + h * dh;
                        const float w = row[t];
                        for (int i = 0; i < dh; ++i) oh[i] += w * vt[i];
                    }
                }
                if (p == nn - 1) {
                    out.attention[static_cast<size_t>(l) * nh + h] = std::move(row);
                }
            }
        }

#pragma omp parallel for schedule(static) if(nn >= 8)
        for (int p = 0; p < nn; ++p) {
            const float* ap = attn_out.data() + static_cast<size_t>(p) * d;
            float* xp = x.data() + static_cast<size_t>(p) * d;
            for (int r = 0; r < d; ++r) {
                const float* wr = lw.wo.data() + static_cast<size_t>(r) * d;
                float acc = 0.0f;
                for (int c = 0; c < d; ++c) acc += wr[c] * ap[c];
                xp[r] += acc;
            }
        }

#pragma omp parallel for schedule(static) if(nn >= 8)
        for (int p = 0; p < nn; ++p) {
            float* xp = x.data() + static_cast<size_t>(p) * d;
            std::vector<float> h2(d), ff(dff);
            layer_norm(xp, d, lw.ln2_gamma.data(), lw.ln2_beta.data(), h2.data());
            matvec(lw.ff1.data(), h2.data(), dff, d, ff.data());
            for (int i = 0; i < dff; ++i) ff[i] = gelu(ff[i]);
            for (int r = 0; r < d; ++r) {
                const float* wr = lw.ff2.data() + static_cast<size_t>(r) * dff;
                float acc = 0.0f;
                for (int c = 0; c < dff; ++c) acc += wr[c] * ff[c];
                xp[r] += acc;
            }
        }
    }

    std::vector<float> final_h(d);
    layer_norm(x.data() + static_cast<size_t>(nn - 1) * d, d, model.lnf_gamma.data(),
               model.lnf_beta.data(), final_h.data());
    out.logits.resize(cfg.vocab_size);
#pragma omp parallel for schedule(static) if(nn >= 8)
    for (int t = 0; t < cfg.vocab_size; ++t) {
        const float* wr = model.w_out.data() + static_cast<size_t>(t) * d;
        float acc = 0.0f;
        for (int c = 0; c < d; ++c) acc += wr[c] * final_h[c];
        out.logits[t] = acc;
    }

    state.n_cached = n1;
    model.forward_passes->fetch_add(1, std::memory_order_relaxed);
    return out;
}

StepOutput forward_full(const Model& model, const MultimodalSequence& seq,
                        const ImageHeadMask* head_mask) {
    IncrementalState state;
    return forward_step(model, seq, head_mask, state);
}

} // namespace mmdec
