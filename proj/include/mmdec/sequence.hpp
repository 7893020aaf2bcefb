#pragma once

#include <cstdint>
#include <vector>

namespace mmdec {

using Token = int32_t;

enum class Role : uint8_t { system = 0, image = 1, instruction = 2, generated = 3 };

inline constexpr int kNumRoles = 4;

// Token stream with a marked contiguous image span and per-position role tags.
// Generated positions are always a suffix.
struct MultimodalSequence {
    std::vector<Token> tokens;
    std::vector<Role> roles;
    int image_start = 0; // [image_start, image_end)
    int image_end = 0;

    int size() const { return static_cast<int>(tokens.size()); }
    int image_len() const { return image_end - image_start; }

    void append_generated(Token t) {
        tokens.push_back(t);
        roles.push_back(Role::generated);
    }

    // throws std::invalid_argument if roles/span are inconsistent
    void validate() const;
};

// Assembles [system][image][instruction] with role tags set accordingly.
MultimodalSequence make_sequence(const std::vector<Token>& system_tokens,
                                 const std::vector<Token>& image_tokens,
                                 const std::vector<Token>& instruction_tokens);

} // namespace mmdec
