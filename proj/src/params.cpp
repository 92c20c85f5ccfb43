#include "tabrex/params.hpp"

namespace tabrex {

namespace {

void fill_uniform(Matrix& m, Rng& rng, double lo, double hi) {
    for (double& v : m.data) v = rng.uniform(lo, hi);
}

void fill_uniform(VecD& v, Rng& rng, double lo, double hi) {
    for (double& x : v) x = rng.uniform(lo, hi);
}

}  // namespace

ModelParams init_params(const Hyperparams& hp, int n_relations, const Vocabulary& vocab, Rng& rng,
                        std::optional<std::pair<Vocabulary, Matrix>> pretrained) {
    hp.validate();
    if (n_relations < 2) throw ConfigError("need at least 2 relations (NA plus one)");

    ModelParams p;
    p.hp = hp;
    if (pretrained) {
        if (pretrained->second.cols != hp.word_dim) {
            throw ConfigError("pretrained embedding dimension " +
                              std::to_string(pretrained->second.cols) +
                              " does not match configured word_dim " +
                              std::to_string(hp.word_dim));
        }
        p.emb.vocab = std::move(pretrained->first);
        p.emb.word = std::move(pretrained->second);
    } else {
        p.emb.vocab = vocab;
        p.emb.word = Matrix(vocab.size(), hp.word_dim);
        fill_uniform(p.emb.word, rng, -0.25, 0.25);
        for (int j = 0; j < hp.word_dim; ++j) p.emb.word.at(Vocabulary::kPadRow, j) = 0.0;
    }

    p.emb.pos_head = Matrix(hp.pos_rows(), hp.pos_dim);
    p.emb.pos_tail = Matrix(hp.pos_rows(), hp.pos_dim);
    fill_uniform(p.emb.pos_head, rng, -0.05, 0.05);
    fill_uniform(p.emb.pos_tail, rng, -0.05, 0.05);

    p.conv_kernel = Matrix(hp.filters, hp.window * hp.input_dim());
    p.conv_bias.assign(static_cast<std::size_t>(hp.filters), 0.0);
    fill_uniform(p.conv_kernel, rng, -0.05, 0.05);
    fill_uniform(p.conv_bias, rng, -0.05, 0.05);

    p.rel.m = Matrix(n_relations, hp.sent_dim());
    p.rel.d.assign(static_cast<std::size_t>(n_relations), 0.0);
    fill_uniform(p.rel.m, rng, -0.05, 0.05);
    fill_uniform(p.rel.d, rng, -0.05, 0.05);
    return p;
}

GateParams init_gate(const Hyperparams& hp, Rng& rng) {
    GateParams g;
    g.w.assign(static_cast<std::size_t>(3) * hp.sent_dim(), 0.0);
    fill_uniform(g.w, rng, -0.05, 0.05);
    g.b = rng.uniform(-0.05, 0.05);
    return g;
}

}  // namespace tabrex
