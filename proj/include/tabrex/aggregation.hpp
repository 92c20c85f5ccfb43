#pragma once

#include <optional>
#include <span>
#include <vector>

#include "tabrex/encoder.hpp"
#include "tabrex/linalg.hpp"

namespace tabrex {

// Relation scoring matrix. Row r doubles as the attention query q_r.
struct RelationMatrix {
    Matrix m;  // n_r x d_s
    VecD d;    // n_r

    int n_relations() const { return m.rows; }
    std::span<const double> query(int r) const { return m.row_span(r); }
};

struct GateParams {
    VecD w;  // 3 * d_s
    double b = 0.0;
};

struct BagRepresentation {
    VecD h;      // d_s
    VecD alpha;  // attention weights, sums to 1
};

struct FinalRepresentation {
    VecD r;              // d_s
    double beta = 1.0;   // weight on the 1-hop bag
    bool beta_forced = false;  // true when an empty bag forced beta to an endpoint
};

// Query-scored softmax average over the bag: e_i = q . s_i, alpha = softmax(e),
// h = sum alpha_i s_i. Throws on an empty bag.
BagRepresentation selective_attention(std::span<const VecD> reps, std::span<const double> query);

// beta = sigmoid(w . [h; hT; q] + b), r = beta h + (1 - beta) hT. A missing
// bag forces beta to the corresponding endpoint; both missing is an error.
FinalRepresentation fuse_bags(const VecD* h, const VecD* hT, std::span<const double> query,
                              const GateParams& gate);

struct RelationScores {
    VecD logits;  // o = M r + d
    VecD probs;   // softmax(o)
};

RelationScores score_relations(std::span<const double> r, const RelationMatrix& rel);

struct ModelParams;  // defined in params.hpp

// Per-relation confidence for a pair: attention, fusion and scoring run once
// per candidate relation with that relation's own query; the confidence for
// relation r is probs[r] from r's pass. Sentences are encoded once.
// Models without a gate ignore the 2-hop bag entirely.
VecD predict_pair(std::span<const SentenceInstance* const> onehop,
                  std::span<const SentenceInstance* const> twohop, const ModelParams& params);

}  // namespace tabrex
