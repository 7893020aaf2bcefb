#include "mmdec/config.hpp"

#include "mmdec/rng.hpp"

#include <sstream>
#include <stdexcept>

namespace mmdec {

void ModelConfig::validate() const {
    if (num_layers < 1 || num_heads < 1 || d_model < 1 || vocab_size < 1 ||
        max_seq_len < 1) {
        throw std::invalid_argument("model config: all dimensions must be >= 1");
    }
    if (d_model % num_heads != 0) {
        throw std::invalid_argument(
            "model config: d_model (" + std::to_string(d_model) +
            ") must be divisible by num_heads (" + std::to_string(num_heads) + ")");
    }
}

std::string ModelConfig::serialize() const {
    std::ostringstream os;
    os << "num_layers=" << num_layers << "\n"
       << "num_heads=" << num_heads << "\n"
       << "d_model=" << d_model << "\n"
       << "vocab_size=" << vocab_size << "\n"
       << "max_seq_len=" << max_seq_len << "\n"
       << "rng_seed=" << rng_seed << "\n";
    return os.str();
}

ModelConfig ModelConfig::deserialize(const std::string& text) {
    ModelConfig c;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        std::string key = line.substr(0, eq);
        std::string value = line.substr(eq + 1);
        if (key == "num_layers") c.num_layers = std::stoi(value);
        else if (key == "num_heads") c.num_heads = std::stoi(value);
        else if (key == "d_model") c.d_model = std::stoi(value);
        else if (key == "vocab_size") c.vocab_size = std::stoi(value);
        else if (key == "max_seq_len") c.max_seq_len = std::stoi(value);
        else if (key == "rng_seed") c.rng_seed = std::stoull(value);
    }
    c.validate();
    return c;
}

uint64_t ModelConfig::hash() const { return fnv1a64(serialize()); }

} // namespace mmdec
