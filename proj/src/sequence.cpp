#include "mmdec/sequence.hpp"

#include <stdexcept>

namespace mmdec {

void MultimodalSequence::validate() const {
    if (tokens.size() != roles.size()) {
        throw std::invalid_argument("sequence: tokens/roles length mismatch");
    }
    if (image_start < 0 || image_end < image_start || image_end > size()) {
        throw std::invalid_argument("sequence: image span out of bounds");
    }
    for (int i = image_start; i < image_end; ++i) {
        if (roles[i] != Role::image) {
            throw std::invalid_argument("sequence: position inside image span not tagged image");
        }
    }
    bool seen_generated = false;
    for (int i = 0; i < size(); ++i) {
        if (roles[i] == Role::image && (i < image_start || i >= image_end)) {
            throw std::invalid_argument("sequence: image role outside image span");
        }
        if (roles[i] == Role::generated) {
            seen_generated = true;
        } else if (seen_generated) {
            throw std::invalid_argument("sequence: generated positions must be a suffix");
        }
    }
}

MultimodalSequence make_sequence(const std::vector<Token>& system_tokens,
                                 const std::vector<Token>& image_tokens,
                                 const std::vector<Token>& instruction_tokens) {
    MultimodalSequence seq;
    seq.tokens.reserve(system_tokens.size() + image_tokens.size() + instruction_tokens.size());
    for (Token t : system_tokens) {
        seq.tokens.push_back(t);
        seq.roles.push_back(Role::system);
    }
    seq.image_start = seq.size();
    for (Token t : image_tokens) {
        seq.tokens.push_back(t);
        seq.roles.push_back(Role::image);
    }
    seq.image_end = seq.size();
    for (Token t : instruction_tokens) {
        seq.tokens.push_back(t);
        seq.roles.push_back(Role::instruction);
    }
    seq.validate();
    return seq;
}

} // namespace mmdec
