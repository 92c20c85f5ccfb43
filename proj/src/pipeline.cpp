#include "tabrex/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace tabrex {

using nlohmann::json;

std::vector<GoldRecord> load_gold(const std::filesystem::path& path,
                                  const RelationVocabulary& relations) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open gold file: " + path.string());
    std::vector<GoldRecord> records;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            std::ostringstream msg;
            msg << path.string() << ":" << line_no << ": " << e.what();
            throw ParseError(msg.str());
        }
        GoldRecord r;
        try {
            r.pair.head = j.at("head").get<std::string>();
            r.pair.tail = j.at("tail").get<std::string>();
            const std::string rel = j.at("relation").get<std::string>();
            r.relation = relations.index_of(rel);
            if (r.relation < 0) {
                throw VocabError(path.string() + ":" + std::to_string(line_no) +
                                 ": unknown relation '" + rel + "'");
            }
            const auto split = parse_split(j.value("split", "test"));
            if (!split) {
                throw ValidationError(path.string() + ":" + std::to_string(line_no) +
                                      ": split must be \"train\" or \"test\"");
            }
            r.split = *split;
        } catch (const json::exception& e) {
            std::ostringstream msg;
            msg << path.string() << ":" << line_no << ": " << e.what();
            throw ParseError(msg.str());
        }
        records.push_back(std::move(r));
    }
    return records;
}

ModelParams build_initial_params(const Corpus& corpus, const RelationVocabulary& relations,
                                 const Hyperparams& hp,
                                 const std::optional<std::filesystem::path>& embeddings,
                                 std::uint64_t seed) {
    Rng init_rng(mix_seed(seed, 0x1417));
    std::optional<std::pair<Vocabulary, Matrix>> pretrained;
    if (embeddings) pretrained = load_word_embeddings(*embeddings, init_rng);
    Vocabulary vocab = pretrained ? pretrained->first
                                  : Vocabulary::from_corpus(corpus.sentences, Split::train);
    return init_params(hp, relations.size(), vocab, init_rng, std::move(pretrained));
}

namespace {

std::vector<const SentenceInstance*> deref(std::span<const std::uint32_t> indices,
                                           std::span<const SentenceInstance> sentences) {
    std::vector<const SentenceInstance*> out;
    out.reserve(indices.size());
    for (std::uint32_t i : indices) out.push_back(&sentences[i]);
    return out;
}

void append_predictions(std::vector<Prediction>& out, const EntityPair& pair,
                        const VecD& confidence, const RelationVocabulary& relations) {
    for (int r = 1; r < relations.size(); ++r) {
        Prediction p;
        p.pair = pair;
        p.relation = r;
        p.relation_name = relations.name(r);
        p.score = confidence[static_cast<std::size_t>(r)];
        out.push_back(std::move(p));
    }
}

}  // namespace

EvalOutcome evaluate_mode(const ModelParams& params, const RelationVocabulary& relations,
                          const Corpus& corpus, const AnchorIndex* index, const TestMode& mode,
                          int cap, std::uint64_t expand_seed,
                          std::span<const GoldRecord> extra_gold) {
    const BagMap train_bags = build_onehop_bags(corpus.sentences, Split::train);
    const BagMap test_bags = build_onehop_bags(corpus.sentences, Split::test);
    const bool expand = params.has_gate() && index != nullptr;

    std::vector<EvalPair> candidates;
    GoldSet gold;
    if (mode.kind == TestModeKind::empty_onehop) {
        if (extra_gold.empty()) {
            throw ValidationError("empty-onehop evaluation needs a gold file with candidate pairs");
        }
        if (!expand) {
            throw ConfigError(
                "empty-onehop evaluation needs a gated model and an anchor index");
        }
        std::set<EntityPair> seen;
        const BagMap all_bags = build_onehop_bags(corpus.sentences);
        for (const GoldRecord& g : extra_gold) {
            if (!seen.insert(g.pair).second) continue;
            if (all_bags.count(g.pair)) continue;  // pair occurs in the corpus
            EvalPair ep;
            ep.pair = g.pair;
            ep.twohop = expand_bag(g.pair, *index, train_bags, cap, expand_seed).sentences;
            candidates.push_back(std::move(ep));
        }
        std::set<EntityPair> kept;
        for (const EvalPair& ep : candidates) kept.insert(ep.pair);
        for (const GoldRecord& g : extra_gold) {
            if (g.relation != RelationVocabulary::kNaIndex && kept.count(g.pair)) {
                gold.insert({g.pair, g.relation});
            }
        }
    } else {
        for (const auto& [pair, bag] : test_bags) {
            EvalPair ep;
            ep.pair = pair;
            ep.onehop = bag.sentences;
            if (expand) {
                ep.twohop = expand_bag(pair, *index, train_bags, cap, expand_seed).sentences;
            }
            candidates.push_back(std::move(ep));
        }
    }

    std::vector<EvalPair> filtered = filter_test_mode(std::move(candidates), mode);

    if (mode.kind != TestModeKind::empty_onehop) {
        std::set<EntityPair> kept;
        for (const EvalPair& ep : filtered) kept.insert(ep.pair);
        for (const LabeledPair& lp : derive_labels(corpus, Split::test)) {
            if (lp.relation != RelationVocabulary::kNaIndex && kept.count(lp.pair)) {
                gold.insert({lp.pair, lp.relation});
            }
        }
    } else {
        // Recompute against the filtered set (expansion may have emptied some).
        GoldSet pruned;
        std::set<EntityPair> kept;
        for (const EvalPair& ep : filtered) kept.insert(ep.pair);
        for (const auto& fact : gold) {
            if (kept.count(fact.first)) pruned.insert(fact);
        }
        gold = std::move(pruned);
    }

    std::vector<Prediction> predictions;
    predictions.reserve(filtered.size() * static_cast<std::size_t>(relations.size() - 1));
    for (const EvalPair& ep : filtered) {
        const auto s = deref(ep.onehop, corpus.sentences);
        const auto st = deref(ep.twohop, corpus.sentences);
        const VecD confidence = predict_pair(s, st, params);
        append_predictions(predictions, ep.pair, confidence, relations);
    }

    EvalOutcome out;
    out.ranked = rank_facts(std::move(predictions));
    auto [curve, report] = pr_metrics(out.ranked, gold);
    report.mode = test_mode_name(mode.kind);
    out.curve = std::move(curve);
    out.report = std::move(report);
    return out;
}

std::vector<Prediction> predict_pairs(const ModelParams& params,
                                      const RelationVocabulary& relations, const Corpus& corpus,
                                      const AnchorIndex* index, std::span<const EntityPair> pairs,
                                      Split onehop_split, int cap, std::uint64_t expand_seed,
                                      std::vector<EntityPair>* skipped) {
    const BagMap train_bags = build_onehop_bags(corpus.sentences, Split::train);
    const BagMap split_bags = onehop_split == Split::train
                                  ? train_bags
                                  : build_onehop_bags(corpus.sentences, Split::test);
    const bool expand = params.has_gate() && index != nullptr;

    std::vector<Prediction> predictions;
    for (const EntityPair& pair : pairs) {
        std::vector<std::uint32_t> onehop;
        if (auto it = split_bags.find(pair); it != split_bags.end()) {
            onehop = it->second.sentences;
        }
        std::vector<std::uint32_t> twohop;
        if (expand) {
            twohop = expand_bag(pair, *index, train_bags, cap, expand_seed).sentences;
        }
        if (onehop.empty() && (!params.has_gate() || twohop.empty())) {
            if (skipped) skipped->push_back(pair);
            continue;
        }
        const VecD confidence =
            predict_pair(deref(onehop, corpus.sentences), deref(twohop, corpus.sentences), params);
        append_predictions(predictions, pair, confidence, relations);
    }
    return rank_facts(std::move(predictions));
}

}  // namespace tabrex
