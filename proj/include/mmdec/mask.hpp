#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace mmdec {

// L x H binary matrix. Bit 0 marks an image head: its attention output is
// zeroed in a masked forward pass. Bit 1 leaves the head untouched.
struct ImageHeadMask {
    int num_layers = 0;
    int num_heads = 0;
    double tau = 0.0;
    std::string source;        // provenance metadata, free-form
    uint64_t config_hash = 0;  // model the mask was built against (0 = unknown)
    std::vector<uint8_t> bits; // num_layers * num_heads values in {0,1}

    static ImageHeadMask ones(int layers, int heads) {
        ImageHeadMask m;
        m.num_layers = layers;
        m.num_heads = heads;
        m.bits.assign(static_cast<size_t>(layers) * heads, 1);
        return m;
    }

    uint8_t at(int layer, int head) const {
        return bits[static_cast<size_t>(layer) * num_heads + head];
    }
    void set(int layer, int head, uint8_t v) {
        bits[static_cast<size_t>(layer) * num_heads + head] = v;
    }

    int64_t count_zeros() const {
        int64_t n = 0;
        for (uint8_t b : bits) n += (b == 0);
        return n;
    }

    bool same_shape(const ImageHeadMask& o) const {
        return num_layers == o.num_layers && num_heads == o.num_heads;
    }
};

} // namespace mmdec
