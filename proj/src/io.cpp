#include "mmdec/io.hpp"

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace mmdec::io {

namespace {

std::map<std::string, std::string> parse_header(std::istringstream& is, int n_keys) {
    std::map<std::string, std::string> kv;
    std::string line;
    for (int i = 0; i < n_keys && std::getline(is, line); ++i) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw std::runtime_error("malformed header line: " + line);
        }
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return kv;
}

const std::string& need(const std::map<std::string, std::string>& kv, const std::string& key) {
    auto it = kv.find(key);
    if (it == kv.end()) throw std::runtime_error("missing header key: " + key);
    return it->second;
}

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string fmt_float(float v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

std::string fmt_hash(uint64_t h) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

uint64_t parse_hash(const std::string& s) { return std::stoull(s, nullptr, 16); }

int object_by_name(const Lexicon& lexicon, const std::string& name) {
    for (int i = 0; i < lexicon.size(); ++i) {
        if (lexicon.objects[i].name == name) return i;
    }
    throw std::runtime_error("unknown object name: " + name);
}

} // namespace

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    out << content;
    if (!out) throw std::runtime_error("write failed: " + path);
}

std::string format_mask(const ImageHeadMask& mask) {
    std::ostringstream os;
    os << "L=" << mask.num_layers << "\n"
       << "H=" << mask.num_heads << "\n"
       << "tau=" << fmt_double(mask.tau) << "\n"
       << "model_hash=" << fmt_hash(mask.config_hash) << "\n"
       << "source=" << mask.source << "\n";
    for (int l = 0; l < mask.num_layers; ++l) {
        for (int h = 0; h < mask.num_heads; ++h) os << static_cast<char>('0' + mask.at(l, h));
        os << "\n";
    }
    return os.str();
}

ImageHeadMask parse_mask(const std::string& text) {
    std::istringstream is(text);
    auto kv = parse_header(is, 5);
    ImageHeadMask m;
    m.num_layers = std::stoi(need(kv, "L"));
    m.num_heads = std::stoi(need(kv, "H"));
    m.tau = std::stod(need(kv, "tau"));
    m.config_hash = parse_hash(need(kv, "model_hash"));
    m.source = need(kv, "source");
    if (m.num_layers < 1 || m.num_heads < 1) throw std::runtime_error("mask file: bad shape");
    m.bits.reserve(static_cast<size_t>(m.num_layers) * m.num_heads);
    std::string line;
    for (int l = 0; l < m.num_layers; ++l) {
        if (!std::getline(is, line) || static_cast<int>(line.size()) != m.num_heads) {
            throw std::runtime_error("mask file: bad bit row");
        }
        for (char c : line) {
            if (c != '0' && c != '1') throw std::runtime_error("mask file: bit must be 0 or 1");
            m.bits.push_back(static_cast<uint8_t>(c - '0'));
        }
    }
    return m;
}

void save_mask(const ImageHeadMask& mask, const std::string& path) {
    write_file(path, format_mask(mask));
}

ImageHeadMask load_mask(const std::string& path) { return parse_mask(read_file(path)); }

std::string format_counts(const CountMatrix& counts) {
    std::ostringstream os;
    os << "L=" << counts.num_layers << "\n"
       << "H=" << counts.num_heads << "\n"
       << "tau=" << fmt_double(counts.tau) << "\n"
       << "total_tokens=" << counts.total_tokens << "\n"
       << "model_hash=" << fmt_hash(counts.config_hash) << "\n";
    for (int l = 0; l < counts.num_layers; ++l) {
        for (int h = 0; h < counts.num_heads; ++h) {
            if (h) os << ' ';
            os << counts.at(l, h);
        }
        os << "\n";
    }
    return os.str();
}

CountMatrix parse_counts(const std::string& text) {
    std::istringstream is(text);
    auto kv = parse_header(is, 5);
    CountMatrix c;
    c.num_layers = std::stoi(need(kv, "L"));
    c.num_heads = std::stoi(need(kv, "H"));
    c.tau = std::stod(need(kv, "tau"));
    c.total_tokens = std::stoll(need(kv, "total_tokens"));
    c.config_hash = parse_hash(need(kv, "model_hash"));
    if (c.num_layers < 1 || c.num_heads < 1) throw std::runtime_error("count file: bad shape");
    c.counts.reserve(static_cast<size_t>(c.num_layers) * c.num_heads);
    std::string line;
    for (int l = 0; l < c.num_layers; ++l) {
        if (!std::getline(is, line)) throw std::runtime_error("count file: missing row");
        std::istringstream row(line);
        for (int h = 0; h < c.num_heads; ++h) {
            int64_t v;
            if (!(row >> v) || v < 0) throw std::runtime_error("count file: bad count entry");
            c.counts.push_back(v);
        }
    }
    return c;
}

void save_counts(const CountMatrix& counts, const std::string& path) {
    write_file(path, format_counts(counts));
}

CountMatrix load_counts(const std::string& path) { return parse_counts(read_file(path)); }

void save_trace_csv(const AttentionTrace& trace, const std::string& path) {
    std::ostringstream os;
    os << "# model_hash=" << fmt_hash(trace.config_hash) << " L=" << trace.num_layers
       << " H=" << trace.num_heads << " source=" << trace.source << "\n";
    os << "t,layer,head,score\n";
    const int T = trace.steps();
    for (int t = 0; t < T; ++t) {
        for (int l = 0; l < trace.num_layers; ++l) {
            for (int h = 0; h < trace.num_heads; ++h) {
                os << t << ',' << l << ',' << h << ',' << fmt_float(trace.at(t, l, h)) << "\n";
            }
        }
    }
    write_file(path, os.str());
}

void save_heatmap_csv(const CountMatrix& counts, const std::string& path) {
    const std::vector<double> norm = normalize_counts(counts);
    std::ostringstream os;
    for (int l = 0; l < counts.num_layers; ++l) {
        for (int h = 0; h < counts.num_heads; ++h) {
            if (h) os << ',';
            os << fmt_float(static_cast<float>(norm[static_cast<size_t>(l) * counts.num_heads + h]));
        }
        os << "\n";
    }
    write_file(path, os.str());
}

void save_heatmap_pgm(const CountMatrix& counts, const std::string& path) {
    const std::vector<double> norm = normalize_counts(counts);
    std::ostringstream os;
    os << "P2\n" << counts.num_heads << ' ' << counts.num_layers << "\n255\n";
    for (int l = 0; l < counts.num_layers; ++l) {
        for (int h = 0; h < counts.num_heads; ++h) {
            if (h) os << ' ';
            os << static_cast<int>(norm[static_cast<size_t>(l) * counts.num_heads + h] * 255.0 + 0.5);
        }
        os << "\n";
    }
    write_file(path, os.str());
}

void save_scenes(const std::vector<Scene>& scenes, const Lexicon& lexicon,
                 const std::string& path) {
    std::ostringstream os;
    for (const Scene& s : scenes) {
        os << s.id << ',';
        for (size_t i = 0; i < s.objects.size(); ++i) {
            if (i) os << ' ';
            os << lexicon.objects[s.objects[i]].name;
        }
        os << "\n";
    }
    write_file(path, os.str());
}

std::vector<Scene> load_scenes(const Lexicon& lexicon, const std::string& path) {
    std::istringstream is(read_file(path));
    std::vector<Scene> scenes;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw std::runtime_error("scene file: bad line: " + line);
        Scene s;
        s.id = std::stoi(line.substr(0, comma));
        std::istringstream names(line.substr(comma + 1));
        std::string name;
        while (names >> name) s.objects.push_back(object_by_name(lexicon, name));
        if (s.objects.empty()) throw std::runtime_error("scene file: empty scene " + line);
        scenes.push_back(std::move(s));
    }
    return scenes;
}

void save_questions(const std::vector<PopeQuestion>& questions, const Lexicon& lexicon,
                    const std::string& path) {
    std::ostringstream os;
    for (const PopeQuestion& q : questions) {
        os << q.scene_id << ',' << lexicon.objects[q.object_index].name << ','
           << (q.truth_yes ? "yes" : "no") << ',' << to_string(q.split) << "\n";
    }
    write_file(path, os.str());
}

std::vector<PopeQuestion> load_questions(const Lexicon& lexicon, const std::string& path) {
    std::istringstream is(read_file(path));
    std::vector<PopeQuestion> out;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string id_s, name, truth, split;
        if (!std::getline(ls, id_s, ',') || !std::getline(ls, name, ',') ||
            !std::getline(ls, truth, ',') || !std::getline(ls, split, ',')) {
            throw std::runtime_error("question file: bad line: " + line);
        }
        PopeQuestion q;
        q.scene_id = std::stoi(id_s);
        q.object_index = object_by_name(lexicon, name);
        q.truth_yes = truth == "yes";
        q.split = pope_split_from_string(split);
        out.push_back(q);
    }
    return out;
}

void save_captions(const std::vector<CaptionRecord>& captions, const std::string& path) {
    std::ostringstream os;
    for (const CaptionRecord& c : captions) {
        os << c.scene_id << ',';
        for (size_t i = 0; i < c.tokens.size(); ++i) {
            if (i) os << ' ';
            os << c.tokens[i];
        }
        os << "\n";
    }
    write_file(path, os.str());
}

std::vector<CaptionRecord> load_captions(const std::string& path) {
    std::istringstream is(read_file(path));
    std::vector<CaptionRecord> out;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw std::runtime_error("caption file: bad line: " + line);
        const int32_t scene_id = std::stoi(line.substr(0, comma));
        std::istringstream toks(line.substr(comma + 1));
        std::vector<Token> tokens;
        Token t;
        while (toks >> t) tokens.push_back(t);
        out.push_back(CaptionRecord::from_tokens(scene_id, std::move(tokens)));
    }
    return out;
}

void save_answers(const std::vector<PopeAnswer>& answers, const Lexicon& lexicon,
                  const std::string& path) {
    std::ostringstream os;
    for (const PopeAnswer& a : answers) {
        os << a.question.scene_id << ',' << lexicon.objects[a.question.object_index].name
           << ',' << (a.question.truth_yes ? "yes" : "no") << ','
           << to_string(a.question.split) << ',' << (a.predicted_yes ? "yes" : "no") << ','
           << (a.invalid ? "invalid" : "valid") << "\n";
    }
    write_file(path, os.str());
}

std::vector<PopeAnswer> load_answers(const Lexicon& lexicon, const std::string& path) {
    std::istringstream is(read_file(path));
    std::vector<PopeAnswer> out;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string id_s, name, truth, split, pred, valid;
        if (!std::getline(ls, id_s, ',') || !std::getline(ls, name, ',') ||
            !std::getline(ls, truth, ',') || !std::getline(ls, split, ',') ||
            !std::getline(ls, pred, ',') || !std::getline(ls, valid, ',')) {
            throw std::runtime_error("answer file: bad line: " + line);
        }
        PopeAnswer a;
        a.question.scene_id = std::stoi(id_s);
        a.question.object_index = object_by_name(lexicon, name);
        a.question.truth_yes = truth == "yes";
        a.question.split = pope_split_from_string(split);
        a.predicted_yes = pred == "yes";
        a.invalid = valid == "invalid";
        out.push_back(a);
    }
    return out;
}

std::string format_report_text(const EvalReport& report) {
    std::ostringstream os;
    if (report.chair) {
        const ChairResult& c = *report.chair;
        os << "chair_s=" << fmt_double(c.chair_s) << "\n"
           << "chair_i=" << fmt_double(c.chair_i) << "\n"
           << "halluc_sentences=" << c.halluc_sentences << "\n"
           << "total_sentences=" << c.total_sentences << "\n"
           << "halluc_objects=" << c.halluc_objects << "\n"
           << "mentioned_objects=" << c.mentioned_objects << "\n"
           << "zero_mention_warning=" << (c.zero_mention_warning ? 1 : 0) << "\n";
    }
    if (report.pope) {
        const PopeMetrics& p = *report.pope;
        os << "accuracy=" << fmt_double(p.accuracy) << "\n"
           << "precision=" << fmt_double(p.precision) << "\n"
           << "recall=" << fmt_double(p.recall) << "\n"
           << "f1=" << fmt_double(p.f1) << "\n"
           << "tp=" << p.tp << "\n"
           << "fp=" << p.fp << "\n"
           << "fn=" << p.fn << "\n"
           << "tn=" << p.tn << "\n"
           << "invalid_answers=" << p.invalid << "\n";
    }
    return os.str();
}

void save_step_records(const std::vector<std::pair<int32_t, std::vector<StepRecord>>>& records,
                       const std::string& path) {
    std::ostringstream os;
    os << "scene,step,token,baseline,masked,combined\n";
    for (const auto& [scene_id, steps] : records) {
        for (size_t g = 0; g < steps.size(); ++g) {
            const StepRecord& s = steps[g];
            for (size_t t = 0; t < s.baseline.size(); ++t) {
                os << scene_id << ',' << g << ',' << t << ',' << fmt_float(s.baseline[t]) << ',';
                if (!s.masked.empty()) os << fmt_float(s.masked[t]);
                os << ',' << fmt_float(s.combined[t]) << "\n";
            }
        }
    }
    write_file(path, os.str());
}

std::string format_report_json(const EvalReport& report) {
    nlohmann::ordered_json j;
    if (report.chair) {
        const ChairResult& c = *report.chair;
        j["chair"] = {{"chair_s", c.chair_s},
                      {"chair_i", c.chair_i},
                      {"halluc_sentences", c.halluc_sentences},
                      {"total_sentences", c.total_sentences},
                      {"halluc_objects", c.halluc_objects},
                      {"mentioned_objects", c.mentioned_objects},
                      {"zero_mention_warning", c.zero_mention_warning}};
    }
    if (report.pope) {
        const PopeMetrics& p = *report.pope;
        j["pope"] = {{"accuracy", p.accuracy}, {"precision", p.precision},
                     {"recall", p.recall},     {"f1", p.f1},
                     {"tp", p.tp},             {"fp", p.fp},
                     {"fn", p.fn},             {"tn", p.tn},
                     {"invalid_answers", p.invalid}};
    }
    return j.dump(2) + "\n";
}

} // namespace mmdec::io
