#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tabrex/params.hpp"
#include "tabrex/tables.hpp"

namespace tabrex {

enum class Phase : std::uint8_t { pretrain, finetune };

const char* phase_name(Phase p);
std::optional<Phase> parse_phase(const std::string& s);

struct TrainConfig {
    Phase phase = Phase::pretrain;
    double learning_rate = 0.005;  // pretrain 0.005, finetune 0.002
    double dropout = 0.5;
    int epochs = 100;  // pretrain ~100, finetune <= 50
    int batch_size = 64;
    std::uint64_t seed = 0;
    int cap = 300;  // max |S^T| used during finetuning
    bool freeze_encoder = false;
    bool freeze_word_embeddings = false;

    void validate() const;
};

// One training unit: a labeled pair with its 1-hop and 2-hop sentence indices.
struct TrainExample {
    LabeledPair label;
    std::vector<std::uint32_t> onehop;
    std::vector<std::uint32_t> twohop;
};

// Dense gradients mirroring every ModelParams tensor.
struct Gradients {
    Matrix word, pos_head, pos_tail, conv_kernel;
    VecD conv_bias;
    Matrix rel_m;
    VecD rel_d;
    VecD gate_w;
    double gate_b = 0.0;

    void init_like(const ModelParams& params);
    void zero();
};

// Mean cross-entropy over the batch: J = -(1/B) sum log P(gold | S, S^T).
// Pretraining ignores S^T and forces beta = 1. With `training` set, inverted
// dropout is applied to the fused representation; the rng is taken by value so
// a caller holding the same rng state reproduces the same masks.
double compute_loss(std::span<const TrainExample> batch, std::span<const SentenceInstance> sentences,
                    const ModelParams& params, const TrainConfig& cfg, Rng rng,
                    bool training = true);

// Exact analytic gradient of compute_loss for every tensor; returns the loss.
// `grads` is zeroed first. The dropout stream matches compute_loss called with
// an identically seeded rng.
double compute_gradients(std::span<const TrainExample> batch,
                         std::span<const SentenceInstance> sentences, const ModelParams& params,
                         const TrainConfig& cfg, Rng rng, Gradients& grads);

// theta <- theta - lr * grad, honoring the freeze flags.
void apply_sgd_update(ModelParams& params, const Gradients& grads, const TrainConfig& cfg);

// One pass over the examples: deterministic shuffle per (cfg.seed, epoch),
// per-batch gradient step. Returns the example-weighted mean batch loss.
double sgd_epoch(std::span<const TrainExample> examples,
                 std::span<const SentenceInstance> sentences, ModelParams& params,
                 const TrainConfig& cfg, int epoch, Gradients& scratch);

struct TrainLogRow {
    int epoch = 0;
    Phase phase = Phase::pretrain;
    double train_loss = 0.0;
    double dev_loss = 0.0;
    double wall_seconds = 0.0;
};

void write_training_log(const std::filesystem::path& path, std::span<const TrainLogRow> rows);

struct PhaseRunResult {
    ModelParams params;  // best-dev parameters
    std::vector<TrainLogRow> log;
};

// Trains one phase starting from `start`. The dev split and bag expansion are
// derived from `seed`, so consecutive phase runs with the same seed see the
// same data. A finetune run adds a freshly initialized gate when `start` has
// none, and requires an anchor index.
PhaseRunResult run_phase_training(ModelParams start, const Corpus& corpus,
                                  const RelationVocabulary& relations, const AnchorIndex* index,
                                  const TrainConfig& cfg, double dev_fraction, std::uint64_t seed);

struct TwoPhaseResult {
    ModelParams pretrained;  // best-dev parameters after phase 1
    ModelParams finetuned;   // best-dev parameters after phase 2
    std::vector<TrainLogRow> log;
};

// Phase 1 trains encoder and scorer on 1-hop bags only; phase 2 continues from
// the best phase-1 weights with a freshly initialized gate and 2-hop bags.
// Best-dev parameters are retained per phase. The anchor index is required
// whenever phase 2 runs for at least one epoch.
TwoPhaseResult run_two_phase(const Corpus& corpus, const RelationVocabulary& relations,
                             const AnchorIndex* index, const Hyperparams& hp,
                             const TrainConfig& cfg_pre, const TrainConfig& cfg_fine,
                             std::optional<std::pair<Vocabulary, Matrix>> pretrained_emb,
                             double dev_fraction, std::uint64_t seed);

// Assembles examples for the training-split labeled pairs. Expansion runs only
// when an index is given; pairs with no usable sentences in either bag are
// dropped.
std::vector<TrainExample> prepare_examples(std::span<const LabeledPair> labels,
                                           const BagMap& train_bags, const AnchorIndex* index,
                                           int cap, std::uint64_t seed);

// Checkpoint directory: manifest.json describing raw little-endian f64 tensor
// blobs, plus the vocabulary and relation list.
struct Checkpoint {
    ModelParams params;
    RelationVocabulary relations;
    Phase phase = Phase::pretrain;
    std::uint64_t seed = 0;
};

void save_checkpoint(const std::filesystem::path& dir, const ModelParams& params,
                     const RelationVocabulary& relations, Phase phase, std::uint64_t seed);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace tabrex
