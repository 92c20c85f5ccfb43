#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tabrex/common.hpp"

namespace tabrex {

// Relation label set. Index 0 is always the no-relation label "NA".
struct RelationVocabulary {
    std::vector<std::string> names;

    static constexpr int kNaIndex = 0;

    int size() const { return static_cast<int>(names.size()); }
    const std::string& name(int idx) const { return names[static_cast<std::size_t>(idx)]; }
    // Returns -1 when the name is unknown.
    int index_of(const std::string& name) const;

    // One relation name per line; line 0 must be "NA".
    static RelationVocabulary load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;
};

struct MentionSpan {
    std::string entity_id;
    int start = 0;  // token index, inclusive
    int end = 0;    // token index, exclusive
};

enum class Split : std::uint8_t { train, test };

const char* split_name(Split s);
std::optional<Split> parse_split(const std::string& s);

struct SentenceInstance {
    std::string id;
    std::vector<std::string> tokens;
    MentionSpan head;
    MentionSpan tail;
    Split split = Split::train;
};

struct EntityPair {
    std::string head;
    std::string tail;

    auto operator<=>(const EntityPair&) const = default;
};

enum class BagKind : std::uint8_t { one_hop, two_hop };

// A bag references sentences by index into the corpus sentence list.
struct SentenceBag {
    EntityPair pair;
    std::vector<std::uint32_t> sentences;
    BagKind kind = BagKind::one_hop;
};

struct LabeledPair {
    EntityPair pair;
    int relation = 0;
};

using BagMap = std::map<EntityPair, SentenceBag>;

struct CorpusStats {
    // [0] = overall, [1] = non-NA subset.
    struct Side {
        std::int64_t n_pairs = 0;
        std::int64_t n_with_twohop = 0;
        double pct_with_twohop = 0.0;  // percentage
        double mean_onehop = 0.0;      // over all pairs of the subset
        double mean_twohop = 0.0;      // over pairs of the subset with a nonempty 2-hop bag
    };
    Side overall;
    Side non_na;
};

struct Corpus {
    std::vector<SentenceInstance> sentences;
    std::vector<int> sentence_relations;  // parallel to sentences
    std::vector<LabeledPair> labels;      // distinct (pair, relation), first-appearance order
};

// Reads `sentences.jsonl`; one JSON object per line:
//   {"id": str, "tokens": [str], "head": {"eid": str, "start": int, "end": int},
//    "tail": {...}, "relation": str, "split": "train"|"test"}
// Sentences longer than max_len are cut to a max_len window centered between
// the two mention midpoints; a sentence whose mentions cannot both fit is a
// validation error. All errors carry the offending line number.
Corpus load_sentences(const std::filesystem::path& path, const RelationVocabulary& vocab,
                      int max_len = 120);

// Distinct (pair, relation) combinations of the given split, first-appearance order.
std::vector<LabeledPair> derive_labels(const Corpus& corpus, Split split);

// Groups sentences into 1-hop bags keyed by their own (head, tail) pair.
// Bag order is input order; indices refer to positions in `sentences`.
BagMap build_onehop_bags(std::span<const SentenceInstance> sentences);
// Same, restricted to one split (indices still refer to the full span).
BagMap build_onehop_bags(std::span<const SentenceInstance> sentences, Split split);

// Entity-pair-level split: all labels of a pair land on the same side.
// Deterministic in (pairs, dev_fraction, seed). Throws on fewer than 2 pairs.
std::pair<std::vector<LabeledPair>, std::vector<LabeledPair>> split_train_dev(
    const std::vector<LabeledPair>& pairs, double dev_fraction, std::uint64_t seed);

// Pair universe is the set of labeled pairs; bag maps supply |S| and |S^T|.
CorpusStats corpus_stats(const BagMap& onehop, const BagMap& twohop,
                         const std::vector<LabeledPair>& labels);

}  // namespace tabrex
