#include "tabrex/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

namespace tabrex {

using nlohmann::json;

int RelationVocabulary::index_of(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (names[i] == name) return static_cast<int>(i);
    }
    return -1;
}

RelationVocabulary RelationVocabulary::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open relations file: " + path.string());
    RelationVocabulary vocab;
    std::string line;
    std::set<std::string> seen;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (!seen.insert(line).second) {
            throw ValidationError("duplicate relation name '" + line + "' in " + path.string());
        }
        vocab.names.push_back(line);
    }
    if (vocab.names.empty()) throw ValidationError("empty relations file: " + path.string());
    if (vocab.names[0] != "NA") {
        throw ValidationError("first relation must be \"NA\" in " + path.string());
    }
    return vocab;
}

void RelationVocabulary::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot write relations file: " + path.string());
    for (const auto& n : names) out << n << "\n";
}

const char* split_name(Split s) { return s == Split::train ? "train" : "test"; }

std::optional<Split> parse_split(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "test") return Split::test;
    return std::nullopt;
}

namespace {

MentionSpan parse_mention(const json& j) {
    MentionSpan m;
    m.entity_id = j.at("eid").get<std::string>();
    m.start = j.at("start").get<int>();
    m.end = j.at("end").get<int>();
    return m;
}

[[noreturn]] void fail_line(const char* kind, const std::filesystem::path& path, std::size_t line,
                            const std::string& what) {
    std::ostringstream msg;
    msg << path.string() << ":" << line << ": " << what;
    std::string s = msg.str();
    if (kind == std::string("parse")) throw ParseError(s);
    if (kind == std::string("vocab")) throw VocabError(s);
    throw ValidationError(s);
}

void validate_sentence(const SentenceInstance& s, const std::filesystem::path& path,
                       std::size_t line) {
    const int n = static_cast<int>(s.tokens.size());
    if (n < 2) fail_line("validate", path, line, "sentence must have at least 2 tokens");
    for (const MentionSpan* m : {&s.head, &s.tail}) {
        if (m->entity_id.empty()) fail_line("validate", path, line, "empty entity id");
        if (!(0 <= m->start && m->start < m->end && m->end <= n)) {
            std::ostringstream w;
            w << "mention span [" << m->start << "," << m->end << ") out of range for " << n
              << " tokens";
            fail_line("validate", path, line, w.str());
        }
    }
    if (s.head.entity_id == s.tail.entity_id) {
        fail_line("validate", path, line, "head and tail entity ids must differ");
    }
    const bool overlap = s.head.start < s.tail.end && s.tail.start < s.head.end;
    if (overlap) fail_line("validate", path, line, "head and tail spans overlap");
}

// Cuts a long sentence to a max_len window centered between the two mention
// midpoints. Both mentions must fit in the window.
void truncate_sentence(SentenceInstance& s, int max_len, const std::filesystem::path& path,
                       std::size_t line) {
    const int n = static_cast<int>(s.tokens.size());
    if (n <= max_len) return;
    const double head_mid = (s.head.start + s.head.end - 1) / 2.0;
    const double tail_mid = (s.tail.start + s.tail.end - 1) / 2.0;
    const double center = (head_mid + tail_mid) / 2.0;
    int ws = static_cast<int>(std::llround(center - max_len / 2.0));
    ws = std::clamp(ws, 0, n - max_len);
    const int we = ws + max_len;
    if (s.head.start < ws || s.head.end > we || s.tail.start < ws || s.tail.end > we) {
        fail_line("validate", path, line,
                  "mentions too far apart to fit a " + std::to_string(max_len) + "-token window");
    }
    s.tokens = std::vector<std::string>(s.tokens.begin() + ws, s.tokens.begin() + we);
    s.head.start -= ws;
    s.head.end -= ws;
    s.tail.start -= ws;
    s.tail.end -= ws;
}

}  // namespace

Corpus load_sentences(const std::filesystem::path& path, const RelationVocabulary& vocab,
                      int max_len) {
    if (max_len < 2) throw ConfigError("max_len must be at least 2");
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open sentences file: " + path.string());

    Corpus corpus;
    std::unordered_set<std::string> seen_ids;
    std::map<std::pair<EntityPair, int>, bool> seen_labels;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            fail_line("parse", path, line_no, e.what());
        }

        SentenceInstance s;
        std::string relation;
        try {
            s.id = j.at("id").get<std::string>();
            s.tokens = j.at("tokens").get<std::vector<std::string>>();
            s.head = parse_mention(j.at("head"));
            s.tail = parse_mention(j.at("tail"));
            relation = j.at("relation").get<std::string>();
            auto split = parse_split(j.at("split").get<std::string>());
            if (!split) fail_line("validate", path, line_no, "split must be \"train\" or \"test\"");
            s.split = *split;
        } catch (const json::exception& e) {
            fail_line("parse", path, line_no, e.what());
        }

        if (!seen_ids.insert(s.id).second) {
            fail_line("validate", path, line_no, "duplicate sentence id '" + s.id + "'");
        }
        validate_sentence(s, path, line_no);
        truncate_sentence(s, max_len, path, line_no);

        const int rel_idx = vocab.index_of(relation);
        if (rel_idx < 0) fail_line("vocab", path, line_no, "unknown relation '" + relation + "'");

        EntityPair pair{s.head.entity_id, s.tail.entity_id};
        auto key = std::make_pair(pair, rel_idx);
        if (!seen_labels.count(key)) {
            seen_labels[key] = true;
            corpus.labels.push_back(LabeledPair{pair, rel_idx});
        }
        corpus.sentence_relations.push_back(rel_idx);
        corpus.sentences.push_back(std::move(s));
    }
    return corpus;
}

std::vector<LabeledPair> derive_labels(const Corpus& corpus, Split split) {
    std::vector<LabeledPair> labels;
    std::set<std::pair<EntityPair, int>> seen;
    for (std::size_t i = 0; i < corpus.sentences.size(); ++i) {
        const auto& s = corpus.sentences[i];
        if (s.split != split) continue;
        EntityPair pair{s.head.entity_id, s.tail.entity_id};
        const int rel = corpus.sentence_relations[i];
        if (seen.insert({pair, rel}).second) labels.push_back(LabeledPair{pair, rel});
    }
    return labels;
}

BagMap build_onehop_bags(std::span<const SentenceInstance> sentences) {
    BagMap bags;
    for (std::uint32_t i = 0; i < sentences.size(); ++i) {
        EntityPair pair{sentences[i].head.entity_id, sentences[i].tail.entity_id};
        auto [it, inserted] = bags.try_emplace(pair);
        if (inserted) {
            it->second.pair = pair;
            it->second.kind = BagKind::one_hop;
        }
        it->second.sentences.push_back(i);
    }
    return bags;
}

BagMap build_onehop_bags(std::span<const SentenceInstance> sentences, Split split) {
    BagMap bags;
    for (std::uint32_t i = 0; i < sentences.size(); ++i) {
        if (sentences[i].split != split) continue;
        EntityPair pair{sentences[i].head.entity_id, sentences[i].tail.entity_id};
        auto [it, inserted] = bags.try_emplace(pair);
        if (inserted) {
            it->second.pair = pair;
            it->second.kind = BagKind::one_hop;
        }
        it->second.sentences.push_back(i);
    }
    return bags;
}

std::pair<std::vector<LabeledPair>, std::vector<LabeledPair>> split_train_dev(
    const std::vector<LabeledPair>& pairs, double dev_fraction, std::uint64_t seed) {
    if (!(dev_fraction > 0.0 && dev_fraction < 1.0)) {
        throw ConfigError("dev_fraction must be in (0, 1)");
    }
    // Distinct pairs in first-appearance order.
    std::vector<EntityPair> distinct;
    std::set<EntityPair> seen;
    for (const auto& lp : pairs) {
        if (seen.insert(lp.pair).second) distinct.push_back(lp.pair);
    }
    if (distinct.size() < 2) throw ValidationError("need at least 2 entity pairs to split");

    std::vector<std::size_t> order(distinct.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(seed);
    rng.shuffle(order);

    std::size_t n_dev = static_cast<std::size_t>(
        std::llround(static_cast<double>(distinct.size()) * dev_fraction));
    n_dev = std::clamp<std::size_t>(n_dev, 1, distinct.size() - 1);

    std::set<EntityPair> dev_pairs;
    for (std::size_t i = 0; i < n_dev; ++i) dev_pairs.insert(distinct[order[i]]);

    std::vector<LabeledPair> train, dev;
    for (const auto& lp : pairs) {
        (dev_pairs.count(lp.pair) ? dev : train).push_back(lp);
    }
    return {std::move(train), std::move(dev)};
}

CorpusStats corpus_stats(const BagMap& onehop, const BagMap& twohop,
                         const std::vector<LabeledPair>& labels) {
    // Pair universe: distinct labeled pairs. A pair is non-NA when it carries
    // at least one non-NA label.
    std::map<EntityPair, bool> universe;  // pair -> has non-NA label
    for (const auto& lp : labels) {
        bool& non_na = universe[lp.pair];
        non_na = non_na || lp.relation != RelationVocabulary::kNaIndex;
    }

    auto bag_size = [](const BagMap& m, const EntityPair& p) -> std::int64_t {
        auto it = m.find(p);
        return it == m.end() ? 0 : static_cast<std::int64_t>(it->second.sentences.size());
    };

    CorpusStats stats;
    std::int64_t sum_s[2] = {0, 0};
    std::int64_t sum_st[2] = {0, 0};
    for (const auto& [pair, non_na] : universe) {
        const std::int64_t ns = bag_size(onehop, pair);
        const std::int64_t nst = bag_size(twohop, pair);
        for (int side = 0; side < (non_na ? 2 : 1); ++side) {
            CorpusStats::Side& s = side == 0 ? stats.overall : stats.non_na;
            s.n_pairs += 1;
            sum_s[side] += ns;
            if (nst > 0) {
                s.n_with_twohop += 1;
                sum_st[side] += nst;
            }
        }
    }
    for (int side = 0; side < 2; ++side) {
        CorpusStats::Side& s = side == 0 ? stats.overall : stats.non_na;
        if (s.n_pairs > 0) {
            s.mean_onehop = static_cast<double>(sum_s[side]) / static_cast<double>(s.n_pairs);
            s.pct_with_twohop =
                100.0 * static_cast<double>(s.n_with_twohop) / static_cast<double>(s.n_pairs);
        }
        if (s.n_with_twohop > 0) {
            s.mean_twohop =
                static_cast<double>(sum_st[side]) / static_cast<double>(s.n_with_twohop);
        }
    }
    return stats;
}

}  // namespace tabrex
