#include <doctest.h>

#include <cmath>

#include "fd_oracle.hpp"
#include "tabrex/training.hpp"
#include "test_util.hpp"
#include "tiny_fixture.hpp"

using namespace tabrex;
using test_fixture::make_tiny_world;
using test_fixture::TinyWorld;
using test_util::TempDir;

namespace {

TrainConfig tiny_cfg(Phase phase, double dropout = 0.0) {
    TrainConfig cfg;
    cfg.phase = phase;
    cfg.learning_rate = 0.05;
    cfg.dropout = dropout;
    cfg.epochs = 1;
    cfg.batch_size = 4;
    cfg.seed = 9;
    cfg.cap = 300;
    return cfg;
}

bool params_equal(const ModelParams& a, const ModelParams& b) {
    return a.emb.word.data == b.emb.word.data && a.emb.pos_head.data == b.emb.pos_head.data &&
           a.emb.pos_tail.data == b.emb.pos_tail.data &&
           a.conv_kernel.data == b.conv_kernel.data && a.conv_bias == b.conv_bias &&
           a.rel.m.data == b.rel.m.data && a.rel.d == b.rel.d &&
           a.gate.has_value() == b.gate.has_value() &&
           (!a.gate || (a.gate->w == b.gate->w && a.gate->b == b.gate->b));
}

}  // namespace

TEST_CASE("uniform predictions lose ln(n_relations)") {
    // All-zero scorer with 2 relations puts probability 1/2 on the gold label.
    TinyWorld w = make_tiny_world(31, /*with_gate=*/false, 2, 2);
    w.params.rel.m.fill(0.0);
    std::fill(w.params.rel.d.begin(), w.params.rel.d.end(), 0.0);
    const double loss =
        compute_loss(w.batch, w.sentences, w.params, tiny_cfg(Phase::pretrain), Rng(1));
    CHECK(loss == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("a perfect prediction has zero loss") {
    TinyWorld w = make_tiny_world(32, /*with_gate=*/false, 1, 3);
    w.batch[0].label.relation = 1;
    w.params.rel.m.fill(0.0);
    std::fill(w.params.rel.d.begin(), w.params.rel.d.end(), 0.0);
    w.params.rel.d[1] = 60.0;  // gold probability is 1 up to ~1e-26
    const double loss =
        compute_loss(w.batch, w.sentences, w.params, tiny_cfg(Phase::pretrain), Rng(1));
    CHECK(loss >= 0.0);
    CHECK(loss < 1e-12);
}

TEST_CASE("batch loss is the mean of per-example losses") {
    TinyWorld w = make_tiny_world(33, /*with_gate=*/true, 2, 3);
    const TrainConfig cfg = tiny_cfg(Phase::finetune);
    const double both = compute_loss(w.batch, w.sentences, w.params, cfg, Rng(1));
    const double first =
        compute_loss({w.batch.data(), 1}, w.sentences, w.params, cfg, Rng(1));
    const double second =
        compute_loss({w.batch.data() + 1, 1}, w.sentences, w.params, cfg, Rng(1));
    CHECK(both == doctest::Approx((first + second) / 2.0).epsilon(1e-12));
    CHECK(both >= 0.0);

    CHECK_THROWS_AS(compute_loss({}, w.sentences, w.params, cfg, Rng(1)), ValidationError);
}

TEST_CASE("a saturated correct prediction has vanishing gradients") {
    TinyWorld w = make_tiny_world(34, /*with_gate=*/false, 1, 3);
    w.batch[0].label.relation = 2;
    w.params.rel.d[2] = 80.0;  // one-hot on the gold relation
    Gradients g;
    g.init_like(w.params);
    compute_gradients(w.batch, w.sentences, w.params, tiny_cfg(Phase::pretrain), Rng(1), g);
    for (const auto& view : test_oracle::tensor_views(w.params, g)) {
        for (std::size_t i = 0; i < view.count; ++i) {
            CHECK(std::abs(view.grad[i]) < 1e-12);
        }
    }
}

TEST_CASE("analytic gradients match central differences") {
    // Pretraining path (1-hop bags only, no gate).
    for (std::uint64_t seed : {101, 102, 103}) {
        TinyWorld w = make_tiny_world(seed, /*with_gate=*/false, 3, 3);
        const auto report =
            test_oracle::fd_check(w.batch, w.sentences, w.params, tiny_cfg(Phase::pretrain), 7);
        INFO("pretrain seed ", seed, " worst ", report.worst_tensor, "[", report.worst_index,
             "]");
        CHECK(report.max_rel_err < 1e-6);
    }
    // Finetuning path: mixed bags exercise the gate and both forced endpoints.
    for (std::uint64_t seed : {201, 202, 203}) {
        TinyWorld w = make_tiny_world(seed, /*with_gate=*/true, 4, 3);
        const auto report =
            test_oracle::fd_check(w.batch, w.sentences, w.params, tiny_cfg(Phase::finetune), 7);
        INFO("finetune seed ", seed, " worst ", report.worst_tensor, "[", report.worst_index,
             "]");
        CHECK(report.max_rel_err < 1e-6);
    }
}

TEST_CASE("gradients match central differences under a fixed dropout mask") {
    TinyWorld w = make_tiny_world(210, /*with_gate=*/true, 3, 3);
    const auto report = test_oracle::fd_check(w.batch, w.sentences, w.params,
                                              tiny_cfg(Phase::finetune, /*dropout=*/0.5), 11);
    INFO("worst ", report.worst_tensor, "[", report.worst_index, "]");
    CHECK(report.max_rel_err < 1e-6);
}

TEST_CASE("dropout 0 reproduces the no-dropout gradient exactly") {
    TinyWorld w = make_tiny_world(220, /*with_gate=*/true, 3, 3);
    Gradients a, b;
    a.init_like(w.params);
    b.init_like(w.params);
    // Different rng seeds must not matter when the keep probability is 1.
    compute_gradients(w.batch, w.sentences, w.params, tiny_cfg(Phase::finetune, 0.0), Rng(1), a);
    compute_gradients(w.batch, w.sentences, w.params, tiny_cfg(Phase::finetune, 0.0), Rng(99), b);
    CHECK(a.word.data == b.word.data);
    CHECK(a.conv_kernel.data == b.conv_kernel.data);
    CHECK(a.rel_m.data == b.rel_m.data);
    CHECK(a.gate_w == b.gate_w);
    CHECK(a.gate_b == b.gate_b);
}

TEST_CASE("pretraining ignores the 2-hop bag entirely") {
    TinyWorld w = make_tiny_world(230, /*with_gate=*/true, 5, 3);
    // Pretraining requires a nonempty 1-hop bag per pair.
    std::vector<TrainExample> batch;
    for (const auto& ex : w.batch) {
        if (!ex.onehop.empty()) batch.push_back(ex);
    }
    REQUIRE(!batch.empty());
    const TrainConfig cfg = tiny_cfg(Phase::pretrain);
    const double with_st = compute_loss(batch, w.sentences, w.params, cfg, Rng(1));
    auto stripped = batch;
    for (auto& ex : stripped) ex.twohop.clear();
    const double without_st = compute_loss(stripped, w.sentences, w.params, cfg, Rng(1));
    CHECK(with_st == without_st);

    // And a pair with no 1-hop sentences cannot be pretrained on.
    TrainExample empty_s;
    empty_s.label = batch[0].label;
    empty_s.twohop = batch[0].onehop;
    const std::vector<TrainExample> bad = {empty_s};
    CHECK_THROWS_AS(compute_loss(bad, w.sentences, w.params, cfg, Rng(1)), ValidationError);
}

TEST_CASE("a zero learning rate leaves parameters bit-identical") {
    TinyWorld w = make_tiny_world(41, /*with_gate=*/true, 4, 3);
    TrainConfig cfg = tiny_cfg(Phase::finetune);
    cfg.learning_rate = 0.0;
    ModelParams before = w.params;
    Gradients scratch;
    scratch.init_like(w.params);
    sgd_epoch(w.batch, w.sentences, w.params, cfg, 1, scratch);
    CHECK(params_equal(before, w.params));
}

TEST_CASE("training is deterministic for a fixed seed") {
    TinyWorld w = make_tiny_world(42, /*with_gate=*/true, 6, 3);
    TrainConfig cfg = tiny_cfg(Phase::finetune, /*dropout=*/0.5);
    cfg.batch_size = 2;
    cfg.epochs = 3;

    ModelParams a = w.params;
    ModelParams b = w.params;
    Gradients scratch;
    scratch.init_like(w.params);
    for (int epoch = 1; epoch <= 3; ++epoch) {
        const double la = sgd_epoch(w.batch, w.sentences, a, cfg, epoch, scratch);
        const double lb = sgd_epoch(w.batch, w.sentences, b, cfg, epoch, scratch);
        CHECK(la == lb);
    }
    CHECK(params_equal(a, b));
}

TEST_CASE("frozen tensors stay put while the scorer learns") {
    TinyWorld w = make_tiny_world(43, /*with_gate=*/true, 4, 3);
    TrainConfig cfg = tiny_cfg(Phase::finetune);
    cfg.freeze_encoder = true;
    ModelParams before = w.params;
    Gradients scratch;
    scratch.init_like(w.params);
    sgd_epoch(w.batch, w.sentences, w.params, cfg, 1, scratch);
    CHECK(w.params.emb.word.data == before.emb.word.data);
    CHECK(w.params.conv_kernel.data == before.conv_kernel.data);
    CHECK(w.params.emb.pos_head.data == before.emb.pos_head.data);
    CHECK(w.params.rel.m.data != before.rel.m.data);

    // Freezing just the word table keeps the rest of the encoder learning.
    TinyWorld w2 = make_tiny_world(43, /*with_gate=*/true, 4, 3);
    TrainConfig cfg2 = tiny_cfg(Phase::finetune);
    cfg2.freeze_word_embeddings = true;
    ModelParams before2 = w2.params;
    sgd_epoch(w2.batch, w2.sentences, w2.params, cfg2, 1, scratch);
    CHECK(w2.params.emb.word.data == before2.emb.word.data);
    CHECK(w2.params.conv_kernel.data != before2.conv_kernel.data);
}

TEST_CASE("loss decreases on a separable toy task") {
    // 3 relations, 50 pairs; each relation has a dedicated keyword token so
    // the task is linearly separable from the bag contents.
    Rng rng(50);
    std::vector<SentenceInstance> sentences;
    std::vector<TrainExample> examples;
    for (int p = 0; p < 50; ++p) {
        const int rel = p % 3;
        TrainExample ex;
        ex.label.pair = {"h" + std::to_string(p), "t" + std::to_string(p)};
        ex.label.relation = rel;
        SentenceInstance s;
        s.id = "s" + std::to_string(p);
        s.tokens = {"eh", "kw" + std::to_string(rel), "filler", "et"};
        s.head = {"eh", 0, 1};
        s.tail = {"et", 3, 4};
        ex.onehop.push_back(static_cast<std::uint32_t>(sentences.size()));
        sentences.push_back(std::move(s));
        examples.push_back(std::move(ex));
    }
    Vocabulary vocab;
    for (const char* t : {"eh", "et", "filler", "kw0", "kw1", "kw2"}) vocab.add(t);

    Hyperparams hp;
    hp.window = 3;
    hp.filters = 6;
    hp.word_dim = 6;
    hp.pos_dim = 2;
    hp.pos_clip = 3;
    hp.max_len = 8;
    ModelParams params = init_params(hp, 3, vocab, rng);

    TrainConfig cfg = tiny_cfg(Phase::pretrain);
    cfg.learning_rate = 0.5;
    cfg.batch_size = 50;  // full batch keeps the per-epoch loss monotone
    Gradients scratch;
    scratch.init_like(params);
    double prev = 1e100;
    for (int epoch = 1; epoch <= 5; ++epoch) {
        const double loss = sgd_epoch(examples, sentences, params, cfg, epoch, scratch);
        CHECK(loss < prev);
        prev = loss;
    }
}

TEST_CASE("checkpoints round-trip bit-exactly") {
    TinyWorld w = make_tiny_world(60, /*with_gate=*/true, 3, 3);
    RelationVocabulary relations;
    relations.names = {"NA", "r1", "r2"};

    TempDir dir("ckpt");
    save_checkpoint(dir.path(), w.params, relations, Phase::finetune, 1234);
    const Checkpoint loaded = load_checkpoint(dir.path());

    CHECK(loaded.phase == Phase::finetune);
    CHECK(loaded.seed == 1234);
    CHECK(loaded.relations.names == relations.names);
    CHECK(params_equal(loaded.params, w.params));
    CHECK(loaded.params.emb.vocab.words == w.params.emb.vocab.words);

    const TrainConfig cfg = tiny_cfg(Phase::finetune);
    const double a = compute_loss(w.batch, w.sentences, w.params, cfg, Rng(5));
    const double b = compute_loss(w.batch, w.sentences, loaded.params, cfg, Rng(5));
    CHECK(a == b);

    CHECK_THROWS_AS(load_checkpoint(dir.path() / "missing"), ParseError);
}

namespace {

// A small separable corpus for the end-to-end training entry points.
Corpus keyword_corpus(int n_pairs, int n_relations) {
    Corpus corpus;
    for (int p = 0; p < n_pairs; ++p) {
        const int rel = p % n_relations;
        const std::string h = "h" + std::to_string(p);
        const std::string t = "t" + std::to_string(p);
        for (int k = 0; k < 2; ++k) {
            SentenceInstance s;
            s.id = "s" + std::to_string(p) + "_" + std::to_string(k);
            s.tokens = {h, "kw" + std::to_string(rel), "mid", t, "end"};
            s.head = {h, 0, 1};
            s.tail = {t, 3, 4};
            s.split = Split::train;
            corpus.sentence_relations.push_back(rel);
            corpus.sentences.push_back(std::move(s));
        }
        corpus.labels.push_back({{h, t}, rel});
    }
    return corpus;
}

}  // namespace

TEST_CASE("phase training returns the best-dev parameters and accuracy beats majority") {
    const Corpus corpus = keyword_corpus(45, 3);
    RelationVocabulary relations;
    relations.names = {"NA", "r1", "r2"};

    Hyperparams hp;
    hp.window = 3;
    hp.filters = 6;
    hp.word_dim = 6;
    hp.pos_dim = 2;
    hp.pos_clip = 4;
    hp.max_len = 8;

    Vocabulary vocab = Vocabulary::from_corpus(corpus.sentences, Split::train);
    Rng rng(77);
    ModelParams init = init_params(hp, 3, vocab, rng);

    TrainConfig cfg;
    cfg.phase = Phase::pretrain;
    cfg.learning_rate = 0.5;
    cfg.dropout = 0.0;
    cfg.epochs = 25;
    cfg.batch_size = 8;
    cfg.seed = 3;

    const PhaseRunResult result =
        run_phase_training(init, corpus, relations, nullptr, cfg, 0.2, 3);
    REQUIRE(result.log.size() == 25);

    // The returned parameters reproduce the minimum dev loss seen in the log.
    double best = result.log[0].dev_loss;
    for (const auto& row : result.log) best = std::min(best, row.dev_loss);
    auto [train_set, dev_set] =
        split_train_dev(derive_labels(corpus, Split::train), 0.2, mix_seed(3, 0xDE5));
    const BagMap train_bags = build_onehop_bags(corpus.sentences, Split::train);
    const auto dev_ex = prepare_examples(dev_set, train_bags, nullptr, cfg.cap, 0);
    const double returned_dev =
        compute_loss(dev_ex, corpus.sentences, result.params, cfg, Rng(1), false);
    CHECK(returned_dev == doctest::Approx(best).epsilon(1e-12));

    // Dev accuracy beats the majority-class baseline (1/3 here).
    int correct = 0;
    for (const auto& ex : dev_ex) {
        std::vector<const SentenceInstance*> bag;
        for (auto idx : ex.onehop) bag.push_back(&corpus.sentences[idx]);
        const VecD conf = predict_pair(bag, {}, result.params);
        const int argmax =
            static_cast<int>(std::max_element(conf.begin(), conf.end()) - conf.begin());
        if (argmax == ex.label.relation) ++correct;
    }
    CHECK(static_cast<double>(correct) / static_cast<double>(dev_ex.size()) > 1.0 / 3.0);
}

TEST_CASE("with every 2-hop bag empty the gated model predicts like the 1-hop model") {
    const Corpus corpus = keyword_corpus(30, 3);
    RelationVocabulary relations;
    relations.names = {"NA", "r1", "r2"};

    Hyperparams hp;
    hp.window = 3;
    hp.filters = 4;
    hp.word_dim = 4;
    hp.pos_dim = 2;
    hp.pos_clip = 4;
    hp.max_len = 8;

    TrainConfig pre;
    pre.phase = Phase::pretrain;
    pre.learning_rate = 0.1;
    pre.dropout = 0.0;
    pre.epochs = 3;
    pre.batch_size = 8;
    pre.seed = 4;
    TrainConfig fine = pre;
    fine.phase = Phase::finetune;
    fine.learning_rate = 0.05;

    const AnchorIndex empty_index;  // anchors nothing: every 2-hop bag is empty
    const TwoPhaseResult result =
        run_two_phase(corpus, relations, &empty_index, hp, pre, fine, std::nullopt, 0.2, 4);
    REQUIRE(result.finetuned.has_gate());

    // Forced-endpoint path: with no 2-hop sentences the gate cannot act, so
    // stripping it changes nothing.
    ModelParams stripped = result.finetuned;
    stripped.gate.reset();
    std::vector<const SentenceInstance*> bag = {&corpus.sentences[0], &corpus.sentences[1]};
    const VecD gated = predict_pair(bag, {}, result.finetuned);
    const VecD plain = predict_pair(bag, {}, stripped);
    CHECK(gated == plain);

    // And the gate received no gradient at all during such a finetune phase.
    Rng gate_rng(mix_seed(4, 0x6A7E));
    const GateParams untouched = init_gate(hp, gate_rng);
    CHECK(result.finetuned.gate->w == untouched.w);
    CHECK(result.finetuned.gate->b == untouched.b);

    CHECK_THROWS_AS(
        run_two_phase(corpus, relations, nullptr, hp, pre, fine, std::nullopt, 0.2, 4),
        ConfigError);
}
