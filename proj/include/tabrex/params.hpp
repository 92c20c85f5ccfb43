#pragma once

#include <optional>

#include "tabrex/aggregation.hpp"
#include "tabrex/encoder.hpp"

namespace tabrex {

// Every learnable tensor of the model.
struct ModelParams {
    Hyperparams hp;
    EmbeddingTables emb;
    Matrix conv_kernel;  // n_f x (m * k_i)
    VecD conv_bias;      // n_f
    RelationMatrix rel;
    std::optional<GateParams> gate;  // present after the gated phase starts

    int n_relations() const { return rel.m.rows; }
    bool has_gate() const { return gate.has_value(); }
};

// Position tables, kernel, relation matrix and bias start uniform(-0.05, 0.05);
// the word table comes from `pretrained` when given, else uniform(-0.25, 0.25).
// The gate is not created here; see init_gate.
ModelParams init_params(const Hyperparams& hp, int n_relations, const Vocabulary& vocab, Rng& rng,
                        std::optional<std::pair<Vocabulary, Matrix>> pretrained = std::nullopt);

// Fresh gate parameters, uniform(-0.05, 0.05).
GateParams init_gate(const Hyperparams& hp, Rng& rng);

}  // namespace tabrex
