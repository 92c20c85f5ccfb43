#include "tabrex/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <vector>

#include <json.hpp>

namespace tabrex {

using nlohmann::json;

void SynthConfig::validate() const {
    if (n_relations < 2) throw ConfigError("need at least 2 relations (NA plus one)");
    if (n_entities < 4) throw ConfigError("need at least 4 entities");
    if (vocab_size < 10) throw ConfigError("need at least 10 vocabulary words");
    if (n_pairs < 4) throw ConfigError("need at least 4 pairs");
    for (double f :
         {frac_single, frac_empty_onehop, noise, cross_relation_noise, na_fraction,
          test_fraction}) {
        if (!(f >= 0.0 && f <= 1.0)) throw ConfigError("fractions must be in [0, 1]");
    }
    if (!(table_na_rows >= 0.0 && table_na_rows < 1.0)) {
        throw ConfigError("table_na_rows must be in [0, 1)");
    }
    if (frac_single + frac_empty_onehop > 1.0) {
        throw ConfigError("frac_single + frac_empty_onehop must not exceed 1");
    }
    if (templates_per_relation < 1) throw ConfigError("need at least 1 template per relation");
    if (max_bag < 2) throw ConfigError("max_bag must be at least 2");
    if (table_rows < 2) throw ConfigError("table_rows must be at least 2");
}

namespace {

constexpr int kHeadSlot = -1;
constexpr int kTailSlot = -2;
constexpr int kKeywordSlot = -3;

// A template is a token list; negative values are slots.
using Template = std::vector<int>;

struct SynthPair {
    std::string head;
    std::string tail;
    int relation = 0;
    bool test = false;
    bool empty_onehop = false;
    int bag_size = 0;
};

std::string word_name(int i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "w%04d", i);
    return buf;
}

std::string entity_name(int i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "e%05d", i);
    return buf;
}

std::string keyword_name(int relation) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "kw%03d", relation);
    return buf;
}

Template make_template(Rng& rng, int vocab_size, bool with_keyword) {
    const int len = 5 + static_cast<int>(rng.below(11));  // 5..15 tokens
    Template t(static_cast<std::size_t>(len));
    for (int& tok : t) tok = static_cast<int>(rng.below(static_cast<std::uint64_t>(vocab_size)));
    // Choose distinct slot positions.
    std::vector<int> positions(static_cast<std::size_t>(len));
    for (int i = 0; i < len; ++i) positions[static_cast<std::size_t>(i)] = i;
    rng.shuffle(positions);
    t[static_cast<std::size_t>(positions[0])] = kHeadSlot;
    t[static_cast<std::size_t>(positions[1])] = kTailSlot;
    if (with_keyword) t[static_cast<std::size_t>(positions[2])] = kKeywordSlot;
    return t;
}

}  // namespace

SynthSummary generate(const SynthConfig& cfg, const std::filesystem::path& out_dir) {
    cfg.validate();
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    Rng rng(cfg.seed);

    // Relation names; index 0 is NA.
    std::vector<std::string> relations;
    relations.push_back("NA");
    for (int r = 1; r < cfg.n_relations; ++r) {
        char buf[16];
        std::snprintf(buf, sizeof buf, "rel%03d", r);
        relations.push_back(buf);
    }

    // Templates per relation. Non-NA templates carry a relation keyword token.
    std::vector<std::vector<Template>> templates(static_cast<std::size_t>(cfg.n_relations));
    for (int r = 0; r < cfg.n_relations; ++r) {
        for (int k = 0; k < cfg.templates_per_relation; ++k) {
            templates[static_cast<std::size_t>(r)].push_back(
                make_template(rng, cfg.vocab_size, r != 0));
        }
    }

    // Pairs: the non-NA ones split into empty-1-hop, single-sentence and
    // multi-sentence groups; relations assigned round-robin for balance.
    const int n_na = static_cast<int>(std::llround(cfg.na_fraction * cfg.n_pairs));
    const int n_nonna = cfg.n_pairs - n_na;
    if (n_nonna < cfg.n_relations - 1) {
        throw ConfigError("too few non-NA pairs to cover every relation");
    }
    const int n_empty = static_cast<int>(std::llround(cfg.frac_empty_onehop * n_nonna));
    const int n_single = static_cast<int>(std::llround(cfg.frac_single * n_nonna));
    if (n_empty + n_single > n_nonna) throw ConfigError("infeasible pair fractions");

    std::set<std::pair<std::string, std::string>> used;
    auto fresh_pair = [&](std::string& h, std::string& t) {
        for (;;) {
            const int hi = static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.n_entities)));
            const int ti = static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.n_entities)));
            if (hi == ti) continue;
            h = entity_name(hi);
            t = entity_name(ti);
            if (used.insert({h, t}).second) return;
        }
    };

    std::vector<SynthPair> pairs;
    pairs.reserve(static_cast<std::size_t>(cfg.n_pairs));
    for (int i = 0; i < n_nonna; ++i) {
        SynthPair p;
        fresh_pair(p.head, p.tail);
        p.relation = 1 + i % (cfg.n_relations - 1);
        if (i < n_empty) {
            p.empty_onehop = true;
            p.test = true;  // evaluation-only pairs
            p.bag_size = 0;
        } else {
            p.test = rng.uniform() < cfg.test_fraction;
            p.bag_size = i < n_empty + n_single
                             ? 1
                             : 2 + static_cast<int>(rng.below(
                                       static_cast<std::uint64_t>(cfg.max_bag - 1)));
        }
        pairs.push_back(std::move(p));
    }
    for (int i = 0; i < n_na; ++i) {
        SynthPair p;
        fresh_pair(p.head, p.tail);
        p.relation = 0;
        p.test = rng.uniform() < cfg.test_fraction;
        p.bag_size = 1 + static_cast<int>(rng.below(3));
        pairs.push_back(std::move(p));
    }

    // Sentences.
    std::ofstream sent_out(out_dir / "sentences.jsonl");
    if (!sent_out) throw ParseError("cannot write sentences.jsonl in " + out_dir.string());
    SynthSummary summary;
    int sentence_counter = 0;
    for (const SynthPair& p : pairs) {
        for (int s = 0; s < p.bag_size; ++s) {
            int tpl_rel = p.relation;
            if (p.relation != 0 && rng.uniform() < cfg.noise) {
                // Wrong-label sentence: usually relation-less text, sometimes a
                // different relation's template.
                if (cfg.n_relations > 2 && rng.uniform() < cfg.cross_relation_noise) {
                    int q = static_cast<int>(
                        rng.below(static_cast<std::uint64_t>(cfg.n_relations - 2)));
                    if (q + 1 >= p.relation) ++q;
                    tpl_rel = q + 1;
                } else {
                    tpl_rel = 0;
                }
            }
            const auto& tset = templates[static_cast<std::size_t>(tpl_rel)];
            const Template& tpl = tset[rng.below(tset.size())];

            json tokens = json::array();
            int head_pos = -1, tail_pos = -1;
            for (std::size_t i = 0; i < tpl.size(); ++i) {
                switch (tpl[i]) {
                    case kHeadSlot:
                        head_pos = static_cast<int>(i);
                        tokens.push_back(p.head);
                        break;
                    case kTailSlot:
                        tail_pos = static_cast<int>(i);
                        tokens.push_back(p.tail);
                        break;
                    case kKeywordSlot:
                        tokens.push_back(keyword_name(tpl_rel));
                        break;
                    default:
                        tokens.push_back(word_name(tpl[i]));
                }
            }

            char sid[24];
            std::snprintf(sid, sizeof sid, "s%06d", sentence_counter++);
            json j;
            j["id"] = sid;
            j["tokens"] = std::move(tokens);
            j["head"] = {{"eid", p.head}, {"start", head_pos}, {"end", head_pos + 1}};
            j["tail"] = {{"eid", p.tail}, {"start", tail_pos}, {"end", tail_pos + 1}};
            j["relation"] = relations[static_cast<std::size_t>(p.relation)];
            j["split"] = p.test ? "test" : "train";
            sent_out << j.dump() << "\n";
            ++summary.n_sentences;
        }
        if (p.empty_onehop) {
            ++summary.n_pairs_empty_onehop;
        } else if (p.test) {
            ++summary.n_pairs_test;
        } else {
            ++summary.n_pairs_train;
        }
    }

    // Tables: per non-NA relation, its pairs shuffled and chunked into
    // two-NE-column tables (plus an unlinked text column). Every chunk must
    // contain a training sentence-bearing pair so expansion has a source.
    // Chunks are then diluted with rows holding relation-less pairs.
    std::vector<const SynthPair*> na_pool;
    for (const SynthPair& p : pairs) {
        if (p.relation == 0 && !p.test && p.bag_size > 0) na_pool.push_back(&p);
    }
    std::ofstream table_out(out_dir / "tables.jsonl");
    if (!table_out) throw ParseError("cannot write tables.jsonl in " + out_dir.string());
    for (int r = 1; r < cfg.n_relations; ++r) {
        std::vector<const SynthPair*> members;
        for (const SynthPair& p : pairs) {
            if (p.relation == r) members.push_back(&p);
        }
        if (members.size() < 2) continue;
        rng.shuffle(members);

        // Deal anchor sources (train pairs with sentences) round-robin so
        // every chunk holds at least one, then fill with the rest.
        std::vector<const SynthPair*> sources, others;
        for (const SynthPair* p : members) {
            (!p->test && p->bag_size > 0 ? sources : others).push_back(p);
        }
        std::size_t n_chunks =
            (members.size() + static_cast<std::size_t>(cfg.table_rows) - 1) /
            static_cast<std::size_t>(cfg.table_rows);
        if (!sources.empty()) n_chunks = std::min(n_chunks, sources.size());
        n_chunks = std::max<std::size_t>(n_chunks, 1);

        std::vector<std::vector<const SynthPair*>> chunks(n_chunks);
        std::size_t ci = 0;
        for (const SynthPair* p : sources) {
            chunks[ci].push_back(p);
            ci = (ci + 1) % n_chunks;
        }
        for (const SynthPair* p : others) {
            chunks[ci].push_back(p);
            ci = (ci + 1) % n_chunks;
        }
        if (cfg.table_na_rows > 0.0 && !na_pool.empty()) {
            for (auto& chunk : chunks) {
                const auto extra = static_cast<std::size_t>(std::llround(
                    cfg.table_na_rows / (1.0 - cfg.table_na_rows) *
                    static_cast<double>(chunk.size())));
                for (std::size_t i = 0; i < extra; ++i) {
                    chunk.push_back(na_pool[rng.below(na_pool.size())]);
                }
            }
        }

        for (std::size_t c = 0; c < chunks.size(); ++c) {
            json rows = json::array();
            for (const SynthPair* p : chunks[c]) {
                json row = json::array();
                row.push_back({{"text", p->head}, {"eid", p->head}});
                row.push_back({{"text", p->tail}, {"eid", p->tail}});
                row.push_back({{"text", word_name(static_cast<int>(
                                            rng.below(static_cast<std::uint64_t>(cfg.vocab_size))))},
                               {"eid", nullptr}});
                rows.push_back(std::move(row));
            }
            char tid[32];
            std::snprintf(tid, sizeof tid, "t%03d_%03zu", r, c);
            json j;
            j["table_id"] = tid;
            j["page_eid"] = nullptr;
            j["rows"] = std::move(rows);
            table_out << j.dump() << "\n";
            ++summary.n_tables;
        }
    }

    // Relation list and gold labels.
    {
        std::ofstream rel_out(out_dir / "relations.txt");
        for (const auto& r : relations) rel_out << r << "\n";
    }
    {
        std::ofstream gold_out(out_dir / "gold.jsonl");
        for (const SynthPair& p : pairs) {
            json j;
            j["head"] = p.head;
            j["tail"] = p.tail;
            j["relation"] = relations[static_cast<std::size_t>(p.relation)];
            j["split"] = p.test ? "test" : "train";
            gold_out << j.dump() << "\n";
        }
    }
    return summary;
}

}  // namespace tabrex
