#include "mmdec/synthdata.hpp"

#include "mmdec/rng.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace mmdec {

namespace {

const char* kObjectNames[] = {"dog",  "cat",  "car",  "tree", "cup",  "chair",
                              "bird", "boat", "fish", "lamp", "bike", "sofa",
                              "bear", "cake", "book", "kite"};

} // namespace

Lexicon Lexicon::make_default(int n_objects) {
    if (n_objects < 1) throw std::invalid_argument("lexicon: need at least one object");
    Lexicon lex;
    lex.first_synonym_token = kFirstObjectToken + n_objects;
    lex.first_image_token = kFirstObjectToken + 2 * n_objects;
    for (int i = 0; i < n_objects; ++i) {
        LexiconEntry e;
        e.name = i < static_cast<int>(std::size(kObjectNames))
                     ? kObjectNames[i]
                     : "obj" + std::to_string(i);
        e.token_id = kFirstObjectToken + i;
        e.synonyms = {lex.first_synonym_token + i};
        lex.objects.push_back(std::move(e));
    }
    lex.validate();
    return lex;
}

std::optional<int> Lexicon::canonical_index(Token t) const {
    for (int i = 0; i < size(); ++i) {
        if (objects[i].token_id == t) return i;
        for (Token s : objects[i].synonyms) {
            if (s == t) return i;
        }
    }
    return std::nullopt;
}

std::optional<int> Lexicon::image_index(Token t) const {
    const int idx = t - first_image_token;
    if (idx >= 0 && idx < size()) return idx;
    return std::nullopt;
}

int Lexicon::min_vocab_size() const {
    Token mx = kFirstObjectToken;
    for (const LexiconEntry& e : objects) {
        mx = std::max(mx, e.token_id);
        for (Token s : e.synonyms) mx = std::max(mx, s);
    }
    mx = std::max(mx, first_image_token + size() - 1);
    return mx + 1;
}

void Lexicon::validate() const {
    if (objects.empty()) throw std::invalid_argument("lexicon: empty");
    std::set<Token> seen;
    auto add = [&](Token t) {
        if (t < kFirstObjectToken) throw std::invalid_argument("lexicon: id collides with special tokens");
        if (!seen.insert(t).second) throw std::invalid_argument("lexicon: duplicate token id");
    };
    for (int i = 0; i < size(); ++i) {
        add(objects[i].token_id);
        for (Token s : objects[i].synonyms) add(s);
        add(image_token(i));
    }
}

bool Scene::contains(int object_index) const {
    return std::binary_search(objects.begin(), objects.end(), object_index);
}

std::vector<Scene> generate_scenes(const Lexicon& lexicon, int n, uint64_t seed) {
    if (n < 1) throw std::invalid_argument("generate_scenes: n must be >= 1");
    const int v = lexicon.size();

    // geometric popularity decay; anchors pull in id-neighbors so that
    // popularity and co-occurrence structure are both nontrivial
    std::vector<double> cumw(v);
    double acc = 0.0;
    for (int i = 0; i < v; ++i) {
        acc += std::pow(0.62, i);
        cumw[i] = acc;
    }

    std::vector<Scene> scenes;
    scenes.reserve(n);
    for (int i = 0; i < n; ++i) {
        Rng rng(derive_seed(seed, static_cast<uint64_t>(i)));
        std::set<int> objs;
        const double r = rng.uniform() * cumw.back();
        int anchor = 0;
        while (anchor < v - 1 && cumw[anchor] < r) ++anchor;
        objs.insert(anchor);
        if (anchor - 1 >= 0 && rng.uniform() < 0.45) objs.insert(anchor - 1);
        if (anchor + 1 < v && rng.uniform() < 0.45) objs.insert(anchor + 1);
        if (anchor - 2 >= 0 && rng.uniform() < 0.18) objs.insert(anchor - 2);
        if (anchor + 2 < v && rng.uniform() < 0.18) objs.insert(anchor + 2);
        if (rng.uniform() < 0.25) objs.insert(static_cast<int>(rng.below(v)));
        while (static_cast<int>(objs.size()) > 4) objs.erase(std::prev(objs.end()));

        Scene s;
        s.id = i;
        s.objects.assign(objs.begin(), objs.end());
        scenes.push_back(std::move(s));
    }
    return scenes;
}

const char* to_string(PopeSplit s) {
    switch (s) {
        case PopeSplit::random: return "random";
        case PopeSplit::popular: return "popular";
        case PopeSplit::adversarial: return "adversarial";
    }
    return "random";
}

PopeSplit pope_split_from_string(const std::string& s) {
    if (s == "random") return PopeSplit::random;
    if (s == "popular") return PopeSplit::popular;
    if (s == "adversarial") return PopeSplit::adversarial;
    throw std::invalid_argument("unknown pope split: " + s);
}

std::vector<int64_t> object_frequencies(const std::vector<Scene>& scenes, int n_objects) {
    std::vector<int64_t> freq(n_objects, 0);
    for (const Scene& s : scenes) {
        for (int o : s.objects) ++freq[o];
    }
    return freq;
}

std::vector<int64_t> object_cooccurrence(const std::vector<Scene>& scenes, int n_objects) {
    std::vector<int64_t> co(static_cast<size_t>(n_objects) * n_objects, 0);
    for (const Scene& s : scenes) {
        for (size_t a = 0; a < s.objects.size(); ++a) {
            for (size_t b = a + 1; b < s.objects.size(); ++b) {
                ++co[static_cast<size_t>(s.objects[a]) * n_objects + s.objects[b]];
                ++co[static_cast<size_t>(s.objects[b]) * n_objects + s.objects[a]];
            }
        }
    }
    return co;
}

std::vector<PopeQuestion> build_pope_questions(const std::vector<Scene>& scenes,
                                               const Lexicon& lexicon, int per_scene,
                                               PopeSplit split, uint64_t seed) {
    if (per_scene < 2 || per_scene % 2 != 0) {
        throw std::invalid_argument("build_pope_questions: per_scene must be a positive even number");
    }
    const int v = lexicon.size();
    const int half = per_scene / 2;
    const std::vector<int64_t> freq = object_frequencies(scenes, v);
    const std::vector<int64_t> co = object_cooccurrence(scenes, v);

    std::vector<PopeQuestion> out;
    out.reserve(scenes.size() * per_scene);
    for (const Scene& scene : scenes) {
        std::vector<int> absent;
        for (int o = 0; o < v; ++o) {
            if (!scene.contains(o)) absent.push_back(o);
        }
        if (static_cast<int>(absent.size()) < half) {
            throw std::invalid_argument("build_pope_questions: not enough absent objects for scene " +
                                        std::to_string(scene.id));
        }

        std::vector<int> negatives;
        switch (split) {
            case PopeSplit::random: {
                Rng rng(derive_seed(seed, static_cast<uint64_t>(scene.id) * 2654435761ull + 17));
                std::vector<int> pool = absent;
                for (int j = 0; j < half; ++j) {
                    const size_t k = j + rng.below(pool.size() - j);
                    std::swap(pool[j], pool[k]);
                    negatives.push_back(pool[j]);
                }
                break;
            }
            case PopeSplit::popular: {
                std::vector<int> pool = absent;
                std::stable_sort(pool.begin(), pool.end(), [&](int a, int b) {
                    if (freq[a] != freq[b]) return freq[a] > freq[b];
                    return a < b;
                });
                negatives.assign(pool.begin(), pool.begin() + half);
                break;
            }
            case PopeSplit::adversarial: {
                std::vector<int64_t> score(v, 0);
                for (int a : absent) {
                    for (int p : scene.objects) {
                        score[a] += co[static_cast<size_t>(a) * v + p];
                    }
                }
                std::vector<int> pool = absent;
                std::stable_sort(pool.begin(), pool.end(), [&](int a, int b) {
                    if (score[a] != score[b]) return score[a] > score[b];
                    return a < b;
                });
                negatives.assign(pool.begin(), pool.begin() + half);
                break;
            }
        }

        for (int j = 0; j < half; ++j) {
            PopeQuestion yes;
            yes.scene_id = scene.id;
            yes.object_index = scene.objects[j % scene.objects.size()];
            yes.truth_yes = true;
            yes.split = split;
            out.push_back(yes);

            PopeQuestion no;
            no.scene_id = scene.id;
            no.object_index = negatives[j];
            no.truth_yes = false;
            no.split = split;
            out.push_back(no);
        }
    }
    return out;
}

std::vector<Token> render_image_span(const Scene& scene, const Lexicon& lexicon,
                                     int span_len, int distractor_slots) {
    const int k = static_cast<int>(scene.objects.size());
    if (k == 0) throw std::invalid_argument("render_image_span: empty scene");
    if (distractor_slots < 0 || distractor_slots >= span_len) {
        throw std::invalid_argument("render_image_span: bad distractor_slots");
    }
    const int object_slots = span_len - distractor_slots;
    if (k > object_slots) {
        throw std::invalid_argument("render_image_span: more objects than span slots");
    }
    std::vector<Token> span(span_len, kTokenPad);
    for (int i = 0; i < object_slots; ++i) {
        span[i] = lexicon.image_token(scene.objects[i % k]);
    }
    return span;
}

MultimodalSequence make_prompt(const Scene& scene, const Lexicon& lexicon,
                               const std::vector<Token>& system_tokens,
                               const std::vector<Token>& instruction,
                               int span_len, int distractor_slots) {
    return make_sequence(system_tokens,
                         render_image_span(scene, lexicon, span_len, distractor_slots),
                         instruction);
}

MultimodalSequence make_caption_prompt(const Scene& scene, const Lexicon& lexicon,
                                       const PromptLayout& layout) {
    return make_prompt(scene, lexicon, std::vector<Token>(layout.system_len, kTokenPad),
                       {kTokenCaption}, layout.image_span_len, layout.distractor_slots);
}

MultimodalSequence make_pope_prompt(const Scene& scene, const Lexicon& lexicon,
                                    int queried_object, const PromptLayout& layout) {
    if (queried_object < 0 || queried_object >= lexicon.size()) {
        throw std::invalid_argument("make_pope_prompt: object index out of range");
    }
    return make_prompt(scene, lexicon, std::vector<Token>(layout.system_len, kTokenPad),
                       {kTokenAsk, lexicon.text_token(queried_object)},
                       layout.image_span_len, layout.distractor_slots);
}

} // namespace mmdec
