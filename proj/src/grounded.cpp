#include "mmdec/grounded.hpp"

#include "mmdec/rng.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mmdec {

namespace {

enum class HeadJob { inert, carrier, matcher, attention_only, ask, inhibit, prior, leak };

} // namespace

ImageHeadMask mask_for_heads(const ModelConfig& config, const std::vector<HeadRef>& heads) {
    ImageHeadMask m = ImageHeadMask::ones(config.num_layers, config.num_heads);
    m.config_hash = config.hash();
    m.source = "planted";
    for (const HeadRef& h : heads) m.set(h.layer, h.head, 0);
    return m;
}

Model build_grounded_model(const ModelConfig& config, const Lexicon& lexicon,
                           const std::vector<HeadRef>& grounding_heads,
                           const GroundedGains& gains) {
    config.validate();
    lexicon.validate();

    const int d = config.d_model;
    const int v = config.vocab_size;
    const int nv = lexicon.size();
    const int dh = config.d_head();

    if (v < lexicon.min_vocab_size()) {
        throw std::invalid_argument("grounded model: vocab_size smaller than lexicon needs");
    }
    if (dh < nv) {
        throw std::invalid_argument("grounded model: d_head must be >= number of objects");
    }
    if (d < v + nv + 4) {
        throw std::invalid_argument("grounded model: d_model too small for evidence dims");
    }
    if (grounding_heads.empty()) {
        throw std::invalid_argument("grounded model: grounding_heads must be nonempty");
    }

    // evidence dimensions past the one-hot token block
    const int carrier0 = v;
    const int yes_ev = v + nv;
    const int no_ev = v + nv + 1;
    const int stop_ev = v + nv + 2;
    const int sink = v + nv + 3;

    std::vector<HeadJob> job(static_cast<size_t>(config.num_layers) * config.num_heads,
                             HeadJob::inert);
    auto job_at = [&](int l, int h) -> HeadJob& {
        return job[static_cast<size_t>(l) * config.num_heads + h];
    };

    int n_carriers = 0, n_matchers = 0, layer0_planted = 0;
    for (const HeadRef& g : grounding_heads) {
        if (g.layer < 0 || g.layer >= config.num_layers || g.head < 0 ||
            g.head >= config.num_heads) {
            throw std::invalid_argument("grounded model: grounding head out of range");
        }
        if (job_at(g.layer, g.head) != HeadJob::inert) {
            throw std::invalid_argument("grounded model: duplicate grounding head");
        }
        if (g.layer == 0) {
            // alternate value roles across the listed layer-0 heads
            job_at(0, g.head) = (layer0_planted % 2 == 0) ? HeadJob::carrier : HeadJob::matcher;
            ++layer0_planted;
        } else {
            job_at(g.layer, g.head) = HeadJob::attention_only;
        }
    }
    if (layer0_planted == 0) {
        throw std::invalid_argument("grounded model: need at least one grounding head in layer 0");
    }

    // fixed support machinery takes the first free layer-0 slots
    int placed = 0;
    for (int h = 0; h < config.num_heads && placed < 3; ++h) {
        if (job_at(0, h) != HeadJob::inert) continue;
        job_at(0, h) = placed == 0 ? HeadJob::ask : placed == 1 ? HeadJob::inhibit : HeadJob::prior;
        ++placed;
    }
    if (placed < 3) {
        throw std::invalid_argument("grounded model: layer 0 needs three free non-grounding heads");
    }
    // remaining layer-0 slots leak a trace of image evidence; deeper
    // non-grounding heads stay inert
    int n_leaks = 0;
    for (int h = 0; h < config.num_heads; ++h) {
        if (job_at(0, h) == HeadJob::inert) {
            job_at(0, h) = HeadJob::leak;
            ++n_leaks;
        }
        n_carriers += job_at(0, h) == HeadJob::carrier;
        n_matchers += job_at(0, h) == HeadJob::matcher;
    }

    // normalized per-head leak shares
    std::vector<float> leak_gain(config.num_heads, 0.0f);
    std::vector<float> leak_stop(config.num_heads, 0.0f);
    if (n_leaks > 0) {
        float sum_g = 0.0f, sum_s = 0.0f;
        for (int h = 0; h < config.num_heads; ++h) {
            if (job_at(0, h) != HeadJob::leak) continue;
            Rng rng(derive_seed(config.rng_seed, "leak:" + std::to_string(h)));
            leak_gain[h] = rng.uniform(0.05f, 1.0f);
            leak_stop[h] = rng.uniform(0.05f, 1.0f);
            sum_g += leak_gain[h];
            sum_s += leak_stop[h];
        }
        for (int h = 0; h < config.num_heads; ++h) {
            leak_gain[h] *= gains.leak_gain_total / sum_g;
            leak_stop[h] *= gains.leak_stop_total / sum_s;
        }
    }

    Model m;
    m.config = config;
    m.forward_passes = std::make_unique<std::atomic<uint64_t>>(0);
    m.tok_embed.assign(static_cast<size_t>(v) * d, 0.0f);
    for (int t = 0; t < v; ++t) m.tok_embed[static_cast<size_t>(t) * d + t] = 1.0f;
    m.pos_embed.assign(static_cast<size_t>(config.max_seq_len) * d, 0.0f);
    m.lnf_gamma.assign(d, 1.0f);
    m.lnf_beta.assign(d, 0.0f);

    // LayerNorm of a one-hot row scales every read of the token block by
    // 1/sigma0; pre-multiplying the constructed rows by sigma0 cancels it, and
    // a balancing entry on the sink dim keeps every row sum at zero so the
    // mean term drops out exactly.
    const double var0 = (1.0 / d) * (1.0 - 1.0 / d);
    const float sigma0 = static_cast<float>(std::sqrt(var0 + 1e-5));

    const float lam = gains.yes_pivot / (1.0f - gains.yes_pivot);
    const float kappa = std::sqrt(gains.match_gain * std::sqrt(static_cast<float>(dh)));
    // yes-vs-no balance: with the ask gate split over the two instruction
    // tokens, yes - no = match_evidence + gate/2*(1-nu) + yes_floor; nu places
    // that boundary yes_margin below zero evidence so ties resolve to "no"
    const float nu = 1.0f + 2.0f * (gains.yes_floor + gains.yes_margin) / gains.gate_gain;

    m.layers.resize(config.num_layers);
    for (int l = 0; l < config.num_layers; ++l) {
        LayerWeights& lw = m.layers[l];
        lw.wq.assign(static_cast<size_t>(d) * d, 0.0f);
        lw.wk.assign(static_cast<size_t>(d) * d, 0.0f);
        lw.wv.assign(static_cast<size_t>(d) * d, 0.0f);
        lw.wo.assign(static_cast<size_t>(d) * d, 0.0f);
        lw.ff1.assign(static_cast<size_t>(2 * d) * d, 0.0f);
        lw.ff2.assign(static_cast<size_t>(d) * (2 * d), 0.0f);
        lw.ln1_gamma.assign(d, 1.0f);
        lw.ln1_beta.assign(d, 0.0f);
        lw.ln2_gamma.assign(d, 1.0f);
        lw.ln2_beta.assign(d, 0.0f);
        lw.attn_role_bias.assign(static_cast<size_t>(config.num_heads) * kNumRoles, 0.0f);

        auto in = [&](std::vector<float>& w, int row, int col, float val) {
            w[static_cast<size_t>(row) * d + col] += sigma0 * val;
        };
        auto out = [&](int row, int col, float val) {
            lw.wo[static_cast<size_t>(row) * d + col] += val;
        };
        auto bias = [&](int h, Role r, float val) {
            lw.attn_role_bias[static_cast<size_t>(h) * kNumRoles + static_cast<int>(r)] = val;
        };

        for (int h = 0; h < config.num_heads; ++h) {
            const int base = h * dh;
            switch (job_at(l, h)) {
                case HeadJob::inert:
                    break;
                case HeadJob::attention_only:
                    bias(h, Role::image, gains.role_bias);
                    break;
                case HeadJob::carrier: {
                    bias(h, Role::image, gains.role_bias);
                    for (int o = 0; o < nv; ++o) {
                        in(lw.wv, base + o, lexicon.image_token(o), 1.0f);
                        out(carrier0 + o, base + o, gains.carrier_gain / n_carriers);
                        out(stop_ev, base + o, gains.stop_from_image / n_carriers);
                    }
                    break;
                }
                case HeadJob::matcher: {
                    for (int o = 0; o < nv; ++o) {
                        in(lw.wq, base + o, lexicon.text_token(o), kappa);
                        in(lw.wk, base + o, lexicon.image_token(o), kappa);
                        if (o > 0) in(lw.wk, base + o - 1, lexicon.image_token(o), kappa * gains.neighbor_frac);
                        if (o < nv - 1) in(lw.wk, base + o + 1, lexicon.image_token(o), kappa * gains.neighbor_frac);
                    }
                    // value +1 on image tokens, -lam elsewhere: the head output
                    // is (1+lam)*image_mass - lam, signed evidence around the pivot
                    for (int t = 0; t < v; ++t) in(lw.wv, base, t, -lam);
                    for (int o = 0; o < nv; ++o) in(lw.wv, base, lexicon.image_token(o), 1.0f + lam);
                    out(yes_ev, base, gains.yes_gain / n_matchers);
                    break;
                }
                case HeadJob::ask: {
                    bias(h, Role::instruction, gains.role_bias);
                    in(lw.wv, base, kTokenAsk, 1.0f);
                    out(yes_ev, base, gains.gate_gain);
                    out(no_ev, base, gains.gate_gain * nu);
                    break;
                }
                case HeadJob::inhibit: {
                    bias(h, Role::generated, gains.role_bias);
                    bias(h, Role::image, -gains.role_bias);
                    for (int o = 0; o < nv; ++o) {
                        in(lw.wv, base + o, lexicon.text_token(o), 1.0f);
                        out(carrier0 + o, base + o, -gains.inhibit_gain);
                    }
                    break;
                }
                case HeadJob::prior: {
                    bias(h, Role::system, gains.role_bias);
                    in(lw.wv, base, kTokenPad, 1.0f);
                    for (int r = 0; r < std::min(3, nv); ++r) {
                        out(carrier0 + r, base, gains.popular_prior[r]);
                    }
                    out(stop_ev, base, gains.stop_prior);
                    out(yes_ev, base, gains.yes_floor);
                    break;
                }
                case HeadJob::leak: {
                    // pinned to the system+image window so the image share is
                    // a length-independent constant below the 0.5 threshold
                    bias(h, Role::system, gains.role_bias);
                    bias(h, Role::image, gains.role_bias);
                    for (int o = 0; o < nv; ++o) {
                        in(lw.wv, base + o, lexicon.image_token(o), 1.0f);
                        out(carrier0 + o, base + o, leak_gain[h]);
                        out(stop_ev, base + o, leak_stop[h]);
                    }
                    break;
                }
            }
        }

        // zero every constructed row's sum via the sink input dim
        for (std::vector<float>* w : {&lw.wq, &lw.wk, &lw.wv}) {
            for (int r = 0; r < d; ++r) {
                float sum = 0.0f;
                for (int c = 0; c < d; ++c) sum += (*w)[static_cast<size_t>(r) * d + c];
                (*w)[static_cast<size_t>(r) * d + sink] -= sum;
            }
        }
    }

    // Unembedding: identity over the token block plus an evidence column per
    // designated row; all row sums equal 2, so the final norm's mean shift is
    // the same for every logit and greedy choice compares raw evidence.
    m.w_out.assign(static_cast<size_t>(v) * d, 0.0f);
    auto wout = [&](int row, int col, float val) {
        m.w_out[static_cast<size_t>(row) * d + col] = val;
    };
    for (int t = 0; t < v; ++t) wout(t, t, 1.0f);
    std::vector<bool> balanced(v, false);
    for (int o = 0; o < nv; ++o) {
        wout(lexicon.text_token(o), carrier0 + o, 1.0f);
        balanced[lexicon.text_token(o)] = true;
        for (Token s : lexicon.objects[o].synonyms) {
            wout(s, carrier0 + o, 1.0f);
            balanced[s] = true;
        }
    }
    wout(kTokenYes, yes_ev, 1.0f);
    wout(kTokenNo, no_ev, 1.0f);
    wout(kTokenStop, stop_ev, 1.0f);
    balanced[kTokenYes] = balanced[kTokenNo] = balanced[kTokenStop] = true;
    for (int t = 0; t < v; ++t) {
        if (!balanced[t]) wout(t, sink, 1.0f);
    }

    return m;
}

} // namespace mmdec
