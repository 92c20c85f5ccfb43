#include <doctest.h>
#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <set>

#include "anchor_oracle.hpp"
#include "tabrex/corpus.hpp"
#include "tabrex/synthgen.hpp"
#include "tabrex/tables.hpp"
#include "test_util.hpp"

using namespace tabrex;
using test_util::read_file;
using test_util::TempDir;

namespace {

SynthConfig small_cfg(std::uint64_t seed) {
    SynthConfig cfg;
    cfg.n_relations = 5;
    cfg.n_entities = 60;
    cfg.vocab_size = 40;
    cfg.n_pairs = 120;
    cfg.frac_single = 0.4;
    cfg.frac_empty_onehop = 0.15;
    cfg.noise = 0.2;
    cfg.na_fraction = 0.3;
    cfg.table_rows = 12;
    cfg.seed = seed;
    return cfg;
}

}  // namespace

TEST_CASE("generation is byte-identical per seed") {
    TempDir a("synth_a"), b("synth_b"), c("synth_c");
    generate(small_cfg(5), a.path());
    generate(small_cfg(5), b.path());
    generate(small_cfg(6), c.path());
    for (const char* name : {"sentences.jsonl", "tables.jsonl", "relations.txt", "gold.jsonl"}) {
        CHECK(read_file(a.file(name)) == read_file(b.file(name)));
    }
    CHECK(read_file(a.file("sentences.jsonl")) != read_file(c.file("sentences.jsonl")));
}

TEST_CASE("outputs load back through the corpus and table readers") {
    TempDir dir("synth_load");
    const SynthSummary summary = generate(small_cfg(7), dir.path());

    const RelationVocabulary relations = RelationVocabulary::load(dir.file("relations.txt"));
    CHECK(relations.size() == 5);
    const Corpus corpus = load_sentences(dir.file("sentences.jsonl"), relations);
    CHECK(static_cast<int>(corpus.sentences.size()) == summary.n_sentences);
    const auto tables = load_tables(dir.file("tables.jsonl"));
    CHECK(static_cast<int>(tables.size()) == summary.n_tables);

    // Gold covers every pair, including the sentence-less ones.
    std::set<EntityPair> gold_pairs;
    std::ifstream gold(dir.file("gold.jsonl"));
    std::string line;
    int empty_count = 0;
    const BagMap all_bags = build_onehop_bags(corpus.sentences);
    while (std::getline(gold, line)) {
        const auto j = nlohmann::json::parse(line);
        EntityPair p{j.at("head").get<std::string>(), j.at("tail").get<std::string>()};
        gold_pairs.insert(p);
        if (!all_bags.count(p)) ++empty_count;
    }
    CHECK(static_cast<int>(gold_pairs.size()) ==
          summary.n_pairs_train + summary.n_pairs_test + summary.n_pairs_empty_onehop);
    CHECK(empty_count == summary.n_pairs_empty_onehop);
}

TEST_CASE("with zero noise every sentence shows its relation keyword") {
    TempDir dir("synth_clean");
    SynthConfig cfg = small_cfg(8);
    cfg.noise = 0.0;
    cfg.frac_single = 1.0;
    cfg.frac_empty_onehop = 0.0;
    generate(cfg, dir.path());

    const RelationVocabulary relations = RelationVocabulary::load(dir.file("relations.txt"));
    const Corpus corpus = load_sentences(dir.file("sentences.jsonl"), relations);
    // A keyword-matching classifier is exact on this corpus: a non-NA
    // sentence always carries its own relation's keyword and no other.
    for (std::size_t i = 0; i < corpus.sentences.size(); ++i) {
        const int rel = corpus.sentence_relations[i];
        int keywords_seen = 0;
        for (const std::string& tok : corpus.sentences[i].tokens) {
            if (tok.rfind("kw", 0) == 0) {
                ++keywords_seen;
                if (rel != 0) {
                    CHECK(tok == "kw" + std::string(rel < 10 ? "00" : "0") + std::to_string(rel));
                }
            }
        }
        if (rel != 0) CHECK(keywords_seen == 1);
        if (rel == 0) CHECK(keywords_seen == 0);
    }
}

TEST_CASE("generated tables anchor same-relation pairs per the brute-force rule") {
    TempDir dir("synth_anchor");
    generate(small_cfg(9), dir.path());
    const auto tables = load_tables(dir.file("tables.jsonl"));
    const AnchorIndex fast = build_anchor_index(tables, 0.5);
    const AnchorIndex brute = test_oracle::brute_force_anchor_index(tables, 0.5);
    CHECK(fast.anchors == brute.anchors);
    CHECK(!fast.anchors.empty());

    // Row-mates in one table are mutually anchored.
    REQUIRE(!tables.empty());
    const WebTable& t0 = tables.front();
    REQUIRE(t0.rows.size() >= 2);
    const EntityPair p0{t0.rows[0][0].eid, t0.rows[0][1].eid};
    const EntityPair p1{t0.rows[1][0].eid, t0.rows[1][1].eid};
    if (p0 != p1) {
        const auto anchors = fast.anchor_pairs(p0);
        CHECK(std::find(anchors.begin(), anchors.end(), p1) != anchors.end());
    }
}

TEST_CASE("silent pairs recover their relation through anchored sentences") {
    TempDir dir("synth_recover");
    SynthConfig cfg = small_cfg(10);
    cfg.noise = 0.0;
    generate(cfg, dir.path());

    const RelationVocabulary relations = RelationVocabulary::load(dir.file("relations.txt"));
    const Corpus corpus = load_sentences(dir.file("sentences.jsonl"), relations);
    const auto tables = load_tables(dir.file("tables.jsonl"));
    const AnchorIndex index = build_anchor_index(tables, 0.5);
    const BagMap train_bags = build_onehop_bags(corpus.sentences, Split::train);
    const BagMap all_bags = build_onehop_bags(corpus.sentences);

    std::ifstream gold(dir.file("gold.jsonl"));
    std::string line;
    int checked = 0;
    while (std::getline(gold, line)) {
        const auto j = nlohmann::json::parse(line);
        const EntityPair pair{j.at("head").get<std::string>(), j.at("tail").get<std::string>()};
        if (all_bags.count(pair)) continue;  // has its own sentences
        const std::string rel = j.at("relation").get<std::string>();
        const int rel_idx = relations.index_of(rel);
        REQUIRE(rel_idx > 0);

        const SentenceBag st = expand_bag(pair, index, train_bags, 300, 0);
        REQUIRE(!st.sentences.empty());
        bool expresses_gold = false;
        char want[16];
        std::snprintf(want, sizeof want, "kw%03d", rel_idx);
        for (std::uint32_t idx : st.sentences) {
            const auto& toks = corpus.sentences[idx].tokens;
            if (std::find(toks.begin(), toks.end(), std::string(want)) != toks.end()) {
                expresses_gold = true;
                break;
            }
        }
        CHECK(expresses_gold);
        ++checked;
    }
    CHECK(checked > 0);
}

TEST_CASE("single-sentence fraction is honored") {
    TempDir dir("synth_frac");
    SynthConfig cfg = small_cfg(11);
    cfg.n_pairs = 400;
    cfg.frac_single = 0.5;
    cfg.frac_empty_onehop = 0.1;
    generate(cfg, dir.path());

    const RelationVocabulary relations = RelationVocabulary::load(dir.file("relations.txt"));
    const Corpus corpus = load_sentences(dir.file("sentences.jsonl"), relations);
    const BagMap bags = build_onehop_bags(corpus.sentences);
    int non_na_pairs = 0, single = 0;
    for (const LabeledPair& lp : corpus.labels) {
        if (lp.relation == RelationVocabulary::kNaIndex) continue;
        ++non_na_pairs;
        if (bags.at(lp.pair).sentences.size() == 1) ++single;
    }
    const double frac = static_cast<double>(single) / non_na_pairs;
    CHECK(frac > 0.4);
    CHECK(frac < 0.7);
}

TEST_CASE("infeasible fractions are rejected") {
    SynthConfig cfg = small_cfg(12);
    cfg.frac_single = 0.7;
    cfg.frac_empty_onehop = 0.5;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.frac_single = -0.1;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = small_cfg(12);
    cfg.n_relations = 1;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
