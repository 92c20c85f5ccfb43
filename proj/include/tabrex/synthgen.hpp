#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "tabrex/common.hpp"

namespace tabrex {

// Deterministic generator for a desk-scale corpus: sentences with controllable
// 1-hop sparsity and label noise, plus two-column tables that group
// same-relation pairs so row-aligned anchoring recovers them.
struct SynthConfig {
    int n_relations = 21;  // including NA
    int n_entities = 600;
    int vocab_size = 400;
    int n_pairs = 2200;
    // Both fractions apply to the non-NA pairs; their sum must stay <= 1.
    double frac_single = 0.5;        // pairs with exactly one sentence
    double frac_empty_onehop = 0.1;  // pairs with no sentences but table anchors
    double noise = 0.3;  // probability a sentence realizes a wrong template
    std::uint64_t seed = 0;

    // Of the noisy sentences, this share realizes another relation's template;
    // the rest realize a relation-less NA template.
    double cross_relation_noise = 0.0;
    // Fraction of table rows holding a relation-less pair, diluting the 2-hop
    // bags the way off-schema rows do in real tables.
    double table_na_rows = 0.5;
    double na_fraction = 0.35;  // share of pairs labeled NA
    double test_fraction = 0.3;
    int templates_per_relation = 3;
    int max_bag = 4;      // multi-sentence bags hold 2..max_bag sentences
    int table_rows = 40;  // rows per generated table

    void validate() const;
};

struct SynthSummary {
    int n_sentences = 0;
    int n_tables = 0;
    int n_pairs_train = 0;
    int n_pairs_test = 0;
    int n_pairs_empty_onehop = 0;
};

// Writes sentences.jsonl, tables.jsonl, relations.txt and gold.jsonl into
// out_dir. Byte-identical output for a fixed config.
SynthSummary generate(const SynthConfig& cfg, const std::filesystem::path& out_dir);

}  // namespace tabrex
