#include "tabrex/aggregation.hpp"

#include <cmath>

#include "tabrex/params.hpp"

namespace tabrex {

BagRepresentation selective_attention(std::span<const VecD> reps, std::span<const double> query) {
    if (reps.empty()) throw ValidationError("selective attention over an empty bag");
    const std::size_t n = reps.size();
    const std::size_t dim = reps[0].size();

    BagRepresentation out;
    out.alpha.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (reps[i].size() != dim) throw ValidationError("ragged sentence representations");
        out.alpha[i] = dot(query, reps[i]);
    }
    softmax_inplace(out.alpha);

    out.h.assign(dim, 0.0);
    for (std::size_t i = 0; i < n; ++i) axpy(out.alpha[i], reps[i], out.h);
    return out;
}

FinalRepresentation fuse_bags(const VecD* h, const VecD* hT, std::span<const double> query,
                              const GateParams& gate) {
    if (!h && !hT) throw ValidationError("cannot fuse two empty bags");
    FinalRepresentation out;
    if (!hT) {
        out.beta = 1.0;
        out.beta_forced = true;
        out.r = *h;
        return out;
    }
    if (!h) {
        out.beta = 0.0;
        out.beta_forced = true;
        out.r = *hT;
        return out;
    }
    const std::size_t dim = h->size();
    if (hT->size() != dim || gate.w.size() != 3 * dim || query.size() != dim) {
        throw ValidationError("gate dimension mismatch");
    }
    double z = gate.b;
    z += dot({gate.w.data(), dim}, *h);
    z += dot({gate.w.data() + dim, dim}, *hT);
    z += dot({gate.w.data() + 2 * dim, dim}, query);
    out.beta = stable_sigmoid(z);
    out.beta_forced = false;
    out.r.resize(dim);
    for (std::size_t i = 0; i < dim; ++i) {
        out.r[i] = out.beta * (*h)[i] + (1.0 - out.beta) * (*hT)[i];
    }
    return out;
}

RelationScores score_relations(std::span<const double> r, const RelationMatrix& rel) {
    if (static_cast<int>(r.size()) != rel.m.cols || rel.d.size() != static_cast<std::size_t>(rel.m.rows)) {
        throw ValidationError("relation scorer dimension mismatch");
    }
    RelationScores out;
    out.logits = matvec(rel.m, r);
    for (int i = 0; i < rel.m.rows; ++i) out.logits[static_cast<std::size_t>(i)] += rel.d[static_cast<std::size_t>(i)];
    out.probs = out.logits;
    softmax_inplace(out.probs);
    return out;
}

VecD predict_pair(std::span<const SentenceInstance* const> onehop,
                  std::span<const SentenceInstance* const> twohop, const ModelParams& params) {
    const bool use_twohop = params.has_gate() && !twohop.empty();
    if (onehop.empty() && !use_twohop) {
        throw ValidationError("cannot predict a pair with no usable sentences");
    }

    auto encode_all = [&](std::span<const SentenceInstance* const> bag) {
        std::vector<VecD> reps;
        reps.reserve(bag.size());
        for (const SentenceInstance* s : bag) {
            reps.push_back(
                encode_sentence(*s, params.emb, params.conv_kernel, params.conv_bias, params.hp)
                    .rep);
        }
        return reps;
    };
    const std::vector<VecD> s_reps = encode_all(onehop);
    const std::vector<VecD> st_reps = use_twohop ? encode_all(twohop) : std::vector<VecD>{};

    const int n_r = params.n_relations();
    VecD confidence(static_cast<std::size_t>(n_r), 0.0);
    static const GateParams kNoGate{};
    for (int r = 0; r < n_r; ++r) {
        const auto query = params.rel.query(r);
        std::optional<BagRepresentation> bag_s, bag_st;
        if (!s_reps.empty()) bag_s = selective_attention(s_reps, query);
        if (!st_reps.empty()) bag_st = selective_attention(st_reps, query);
        const FinalRepresentation fused =
            fuse_bags(bag_s ? &bag_s->h : nullptr, bag_st ? &bag_st->h : nullptr, query,
                      params.gate ? *params.gate : kNoGate);
        const RelationScores scores = score_relations(fused.r, params.rel);
        confidence[static_cast<std::size_t>(r)] = scores.probs[static_cast<std::size_t>(r)];
    }
    return confidence;
}

}  // namespace tabrex
