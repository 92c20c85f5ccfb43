#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "tabrex/evaluation.hpp"
#include "tabrex/training.hpp"

namespace tabrex {

// One record of `gold.jsonl`: a labeled pair that may have no sentences.
struct GoldRecord {
    EntityPair pair;
    int relation = 0;
    Split split = Split::train;
};

std::vector<GoldRecord> load_gold(const std::filesystem::path& path,
                                  const RelationVocabulary& relations);

// Word table + vocabulary from the pretrained file when given, else a random
// table over the training-split corpus vocabulary.
ModelParams build_initial_params(const Corpus& corpus, const RelationVocabulary& relations,
                                 const Hyperparams& hp,
                                 const std::optional<std::filesystem::path>& embeddings,
                                 std::uint64_t seed);

struct EvalOutcome {
    EvalReport report;
    PRCurve curve;
    std::vector<Prediction> ranked;
};

// Held-out evaluation of a trained model under one test mode. Candidates for
// the standard modes are the test-split pairs with their test sentences; the
// empty-onehop mode takes candidates from `extra_gold` (pairs with no corpus
// sentences at all). 2-hop bags are expanded from training sentences when the
// model has a gate and an index is supplied. Gold facts are the non-NA labels
// of the evaluated pairs.
EvalOutcome evaluate_mode(const ModelParams& params, const RelationVocabulary& relations,
                          const Corpus& corpus, const AnchorIndex* index, const TestMode& mode,
                          int cap, std::uint64_t expand_seed,
                          std::span<const GoldRecord> extra_gold = {});

// Scores arbitrary pairs: 1-hop bags come from the chosen corpus split, 2-hop
// bags from the anchor index over training sentences. Pairs with nothing to
// score are reported in `skipped`.
std::vector<Prediction> predict_pairs(const ModelParams& params,
                                      const RelationVocabulary& relations, const Corpus& corpus,
                                      const AnchorIndex* index, std::span<const EntityPair> pairs,
                                      Split onehop_split, int cap, std::uint64_t expand_seed,
                                      std::vector<EntityPair>* skipped = nullptr);

}  // namespace tabrex
