#pragma once

#include "mmdec/sequence.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace mmdec {

// Fixed special token ids shared by the synthetic corpus and the constructed
// fixture models.
inline constexpr Token kTokenPad = 0;     // system filler
inline constexpr Token kTokenStop = 1;    // end of caption / answer
inline constexpr Token kTokenSep = 2;     // sentence separator
inline constexpr Token kTokenYes = 3;
inline constexpr Token kTokenNo = 4;
inline constexpr Token kTokenCaption = 5; // "describe the image" instruction
inline constexpr Token kTokenAsk = 6;     // "is the object present" instruction
inline constexpr Token kFirstObjectToken = 7;

struct LexiconEntry {
    std::string name;
    Token token_id;               // canonical text token
    std::vector<Token> synonyms;  // alternative text tokens
};

// Object vocabulary. Index order doubles as the popularity order of the
// synthetic corpus: lower index = more frequent. Text tokens start at
// kFirstObjectToken, one synonym per object follows, then one image token per
// object (image content is token-level).
struct Lexicon {
    std::vector<LexiconEntry> objects;
    Token first_synonym_token = 0;
    Token first_image_token = 0;

    static Lexicon make_default(int n_objects);

    int size() const { return static_cast<int>(objects.size()); }
    Token image_token(int object_index) const { return first_image_token + object_index; }
    Token text_token(int object_index) const { return objects[object_index].token_id; }

    // canonical object index for a text or synonym token
    std::optional<int> canonical_index(Token t) const;
    // object index for an image token
    std::optional<int> image_index(Token t) const;

    // smallest model vocab that covers all ids
    int min_vocab_size() const;

    void validate() const;
};

struct Scene {
    int32_t id = 0;
    std::vector<int> objects; // lexicon indices, unique, ascending, nonempty

    bool contains(int object_index) const;
};

// Deterministic scenes with geometric popularity decay over object indices
// and id-neighborhood co-occurrence clusters.
std::vector<Scene> generate_scenes(const Lexicon& lexicon, int n, uint64_t seed);

enum class PopeSplit { random, popular, adversarial };

const char* to_string(PopeSplit s);
PopeSplit pope_split_from_string(const std::string& s);

struct PopeQuestion {
    int32_t scene_id = 0;
    int object_index = 0;
    bool truth_yes = false;
    PopeSplit split = PopeSplit::random;
};

// Exactly per_scene/2 yes and per_scene/2 no questions per scene. Absent
// objects are picked uniformly (random), by corpus frequency (popular), or by
// co-occurrence with the scene's present objects (adversarial); ties break
// toward the lower object index.
std::vector<PopeQuestion> build_pope_questions(const std::vector<Scene>& scenes,
                                               const Lexicon& lexicon, int per_scene,
                                               PopeSplit split, uint64_t seed);

std::vector<int64_t> object_frequencies(const std::vector<Scene>& scenes, int n_objects);
// symmetric V x V co-occurrence counts over the scene corpus
std::vector<int64_t> object_cooccurrence(const std::vector<Scene>& scenes, int n_objects);

struct PromptLayout {
    int system_len = 12;
    int image_span_len = 8;
    int distractor_slots = 0; // trailing span slots rendered as filler
};

// Round-robin rendering of the scene's objects (ascending index) into the
// image span; injective over object sets so ground truth stays exact.
std::vector<Token> render_image_span(const Scene& scene, const Lexicon& lexicon,
                                     int span_len, int distractor_slots = 0);

// [system][image span][instruction] with role tags set accordingly.
MultimodalSequence make_prompt(const Scene& scene, const Lexicon& lexicon,
                               const std::vector<Token>& system_tokens,
                               const std::vector<Token>& instruction,
                               int span_len, int distractor_slots = 0);

MultimodalSequence make_caption_prompt(const Scene& scene, const Lexicon& lexicon,
                                       const PromptLayout& layout);
MultimodalSequence make_pope_prompt(const Scene& scene, const Lexicon& lexicon,
                                    int queried_object, const PromptLayout& layout);

} // namespace mmdec
