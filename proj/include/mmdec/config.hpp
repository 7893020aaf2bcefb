#pragma once

#include <cstdint>
#include <string>

namespace mmdec {

// Immutable structural description of the toy decoder model. Weights are
// regenerated from (config, rng_seed), so this plus the seed fully identifies
// a model; hash() is embedded in output files for shape validation.
struct ModelConfig {
    int num_layers = 0;
    int num_heads = 0;
    int d_model = 0;
    int vocab_size = 0;
    int max_seq_len = 0;
    uint64_t rng_seed = 0;

    int d_head() const { return d_model / num_heads; }
    int total_heads() const { return num_layers * num_heads; }

    // throws std::invalid_argument on bad dimension relations
    void validate() const;

    // canonical human-readable key=value form (one key per line)
    std::string serialize() const;
    static ModelConfig deserialize(const std::string& text);

    uint64_t hash() const;

    bool operator==(const ModelConfig&) const = default;
};

} // namespace mmdec
