#include "mmdec/metrics.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>
#include <unordered_map>

namespace mmdec {

CaptionRecord CaptionRecord::from_tokens(int32_t scene_id, std::vector<Token> tokens,
                                         Token separator) {
    CaptionRecord rec;
    rec.scene_id = scene_id;
    rec.tokens = std::move(tokens);
    int begin = 0;
    for (int i = 0; i < static_cast<int>(rec.tokens.size()); ++i) {
        if (rec.tokens[i] == separator) {
            rec.sentences.emplace_back(begin, i + 1);
            begin = i + 1;
        }
    }
    if (begin < static_cast<int>(rec.tokens.size())) {
        rec.sentences.emplace_back(begin, static_cast<int>(rec.tokens.size()));
    }
    return rec;
}

ObjectMentions extract_objects(const CaptionRecord& caption, const Lexicon& lexicon) {
    ObjectMentions m;
    std::set<int> uniq;
    for (const auto& [begin, end] : caption.sentences) {
        std::vector<int> sent;
        for (int i = begin; i < end; ++i) {
            if (auto idx = lexicon.canonical_index(caption.tokens[i])) {
                sent.push_back(*idx);
                uniq.insert(*idx);
            }
        }
        m.per_sentence.push_back(std::move(sent));
    }
    m.unique_objects.assign(uniq.begin(), uniq.end());
    return m;
}

ChairResult chair_metrics(const std::vector<CaptionRecord>& captions,
                          const std::vector<Scene>& scenes, const Lexicon& lexicon) {
    std::unordered_map<int32_t, const Scene*> by_id;
    for (const Scene& s : scenes) by_id[s.id] = &s;

    ChairResult r;
    for (const CaptionRecord& cap : captions) {
        auto it = by_id.find(cap.scene_id);
        if (it == by_id.end()) {
            throw std::runtime_error("chair_metrics: caption references unknown scene " +
                                     std::to_string(cap.scene_id));
        }
        const Scene& scene = *it->second;
        const ObjectMentions m = extract_objects(cap, lexicon);

        r.total_sentences += static_cast<int64_t>(m.per_sentence.size());
        for (const std::vector<int>& sent : m.per_sentence) {
            bool halluc = false;
            for (int o : sent) {
                if (!scene.contains(o)) {
                    halluc = true;
                    break;
                }
            }
            r.halluc_sentences += halluc;
        }
        r.mentioned_objects += static_cast<int64_t>(m.unique_objects.size());
        for (int o : m.unique_objects) {
            r.halluc_objects += !scene.contains(o);
        }
    }

    r.chair_s = r.total_sentences == 0
                    ? 0.0
                    : static_cast<double>(r.halluc_sentences) / r.total_sentences;
    if (r.mentioned_objects == 0) {
        r.chair_i = 0.0;
        r.zero_mention_warning = true;
    } else {
        r.chair_i = static_cast<double>(r.halluc_objects) / r.mentioned_objects;
    }
    return r;
}

PopeMetrics pope_metrics(const std::vector<PopeAnswer>& answers) {
    PopeMetrics m;
    for (const PopeAnswer& a : answers) {
        m.invalid += a.invalid;
        if (a.question.truth_yes) {
            a.predicted_yes ? ++m.tp : ++m.fn;
        } else {
            a.predicted_yes ? ++m.fp : ++m.tn;
        }
    }
    const int64_t total = m.tp + m.fp + m.fn + m.tn;
    m.accuracy = total == 0 ? 0.0 : static_cast<double>(m.tp + m.tn) / total;
    m.precision = (m.tp + m.fp) == 0 ? 0.0 : static_cast<double>(m.tp) / (m.tp + m.fp);
    m.recall = (m.tp + m.fn) == 0 ? 0.0 : static_cast<double>(m.tp) / (m.tp + m.fn);
    m.f1 = (m.precision + m.recall) == 0.0
               ? 0.0
               : 2.0 * m.precision * m.recall / (m.precision + m.recall);
    return m;
}

std::vector<PopeAnswer> answer_pope(const Model& model, const ImageHeadMask* mask,
                                    const std::vector<PopeQuestion>& questions,
                                    const std::vector<Scene>& scenes,
                                    const Lexicon& lexicon, const DecodeParams& params,
                                    const PromptLayout& layout) {
    std::unordered_map<int32_t, const Scene*> by_id;
    for (const Scene& s : scenes) by_id[s.id] = &s;

    DecodeParams step_params = params;
    step_params.max_new_tokens = 1;
    step_params.record_logits = false;

    std::vector<PopeAnswer> answers;
    answers.reserve(questions.size());
    for (const PopeQuestion& q : questions) {
        auto it = by_id.find(q.scene_id);
        if (it == by_id.end()) {
            throw std::runtime_error("answer_pope: unknown scene " + std::to_string(q.scene_id));
        }
        MultimodalSequence prompt = make_pope_prompt(*it->second, lexicon, q.object_index, layout);
        DecodeResult res = mask ? decode_contrastive(model, *mask, prompt, step_params)
                                : decode_baseline(model, prompt, step_params);
        PopeAnswer a;
        a.question = q;
        const Token tok = res.tokens.at(0);
        if (tok == kTokenYes) {
            a.predicted_yes = true;
        } else if (tok == kTokenNo) {
            a.predicted_yes = false;
        } else {
            a.predicted_yes = false;
            a.invalid = true;
        }
        answers.push_back(a);
    }
    return answers;
}

} // namespace mmdec
