#include "tabrex/training.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>

#include <json.hpp>

namespace tabrex {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "checkpoint serialization assumes a little-endian host");

const char* phase_name(Phase p) { return p == Phase::pretrain ? "pretrain" : "finetune"; }

std::optional<Phase> parse_phase(const std::string& s) {
    if (s == "pretrain") return Phase::pretrain;
    if (s == "finetune") return Phase::finetune;
    return std::nullopt;
}

void TrainConfig::validate() const {
    if (!(learning_rate >= 0.0)) throw ConfigError("learning rate must be nonnegative");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must be in [0, 1)");
    if (epochs < 0) throw ConfigError("epochs must be nonnegative");
    if (batch_size < 1) throw ConfigError("batch size must be positive");
    if (cap < 1) throw ConfigError("cap must be positive");
}

void Gradients::init_like(const ModelParams& p) {
    word = Matrix(p.emb.word.rows, p.emb.word.cols);
    pos_head = Matrix(p.emb.pos_head.rows, p.emb.pos_head.cols);
    pos_tail = Matrix(p.emb.pos_tail.rows, p.emb.pos_tail.cols);
    conv_kernel = Matrix(p.conv_kernel.rows, p.conv_kernel.cols);
    conv_bias.assign(p.conv_bias.size(), 0.0);
    rel_m = Matrix(p.rel.m.rows, p.rel.m.cols);
    rel_d.assign(p.rel.d.size(), 0.0);
    gate_w.assign(p.gate ? p.gate->w.size() : 0, 0.0);
    gate_b = 0.0;
}

void Gradients::zero() {
    word.fill(0.0);
    pos_head.fill(0.0);
    pos_tail.fill(0.0);
    conv_kernel.fill(0.0);
    std::fill(conv_bias.begin(), conv_bias.end(), 0.0);
    rel_m.fill(0.0);
    std::fill(rel_d.begin(), rel_d.end(), 0.0);
    std::fill(gate_w.begin(), gate_w.end(), 0.0);
    gate_b = 0.0;
}

namespace {

struct ExampleForward {
    std::vector<PcnnTrace> s_traces;
    std::vector<PcnnTrace> st_traces;
    std::optional<BagRepresentation> bag_s;
    std::optional<BagRepresentation> bag_st;
    FinalRepresentation fused;
    std::vector<char> mask;  // empty when dropout is off
    double inv_keep = 1.0;
    VecD r_tilde;
    VecD logits;
    VecD probs;
    double loss = 0.0;
};

std::vector<PcnnTrace> encode_bag(std::span<const std::uint32_t> bag,
                                  std::span<const SentenceInstance> sentences,
                                  const ModelParams& params) {
    std::vector<PcnnTrace> traces;
    traces.reserve(bag.size());
    for (std::uint32_t idx : bag) {
        traces.push_back(encode_sentence(sentences[idx], params.emb, params.conv_kernel,
                                         params.conv_bias, params.hp));
    }
    return traces;
}

BagRepresentation attend(const std::vector<PcnnTrace>& traces, std::span<const double> query) {
    std::vector<VecD> reps;
    reps.reserve(traces.size());
    for (const auto& t : traces) reps.push_back(t.rep);
    return selective_attention(reps, query);
}

ExampleForward forward_example(const TrainExample& ex,
                               std::span<const SentenceInstance> sentences,
                               const ModelParams& params, const TrainConfig& cfg, bool training,
                               Rng& rng) {
    const int gold = ex.label.relation;
    if (gold < 0 || gold >= params.n_relations()) {
        throw ValidationError("gold relation index out of range");
    }
    const bool use_twohop = cfg.phase == Phase::finetune;
    if (use_twohop && !params.has_gate()) {
        throw ConfigError("finetuning requires gate parameters");
    }

    ExampleForward f;
    f.s_traces = encode_bag(ex.onehop, sentences, params);
    if (use_twohop) f.st_traces = encode_bag(ex.twohop, sentences, params);
    if (f.s_traces.empty() && f.st_traces.empty()) {
        throw ValidationError("pair (" + ex.label.pair.head + ", " + ex.label.pair.tail +
                              ") has no usable sentences for this phase");
    }

    const auto query = params.rel.query(gold);
    if (!f.s_traces.empty()) f.bag_s = attend(f.s_traces, query);
    if (!f.st_traces.empty()) f.bag_st = attend(f.st_traces, query);

    static const GateParams kNoGate{};
    f.fused = fuse_bags(f.bag_s ? &f.bag_s->h : nullptr, f.bag_st ? &f.bag_st->h : nullptr, query,
                        params.gate ? *params.gate : kNoGate);

    f.r_tilde = f.fused.r;
    if (training && cfg.dropout > 0.0) {
        f.inv_keep = 1.0 / (1.0 - cfg.dropout);
        f.mask.resize(f.r_tilde.size());
        for (std::size_t k = 0; k < f.r_tilde.size(); ++k) {
            f.mask[k] = rng.uniform() >= cfg.dropout ? 1 : 0;
            f.r_tilde[k] = f.mask[k] ? f.r_tilde[k] * f.inv_keep : 0.0;
        }
    }

    // Stable cross-entropy: loss = logsumexp(o) - o_gold.
    f.logits = matvec(params.rel.m, f.r_tilde);
    for (std::size_t k = 0; k < f.logits.size(); ++k) f.logits[k] += params.rel.d[k];
    double mx = f.logits[0];
    for (double v : f.logits) mx = std::max(mx, v);
    double sum = 0.0;
    f.probs.resize(f.logits.size());
    for (std::size_t k = 0; k < f.logits.size(); ++k) {
        f.probs[k] = std::exp(f.logits[k] - mx);
        sum += f.probs[k];
    }
    for (double& p : f.probs) p /= sum;
    f.loss = std::log(sum) + mx - f.logits[static_cast<std::size_t>(gold)];
    return f;
}

// Accumulates dq and per-sentence representation gradients for one bag.
void attention_backward(const BagRepresentation& bag, const std::vector<PcnnTrace>& traces,
                        std::span<const double> query, const VecD& dh, VecD& dq,
                        std::vector<VecD>& ds) {
    const std::size_t n = traces.size();
    const std::size_t dim = dh.size();
    VecD dalpha(n, 0.0);
    double weighted = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        dalpha[i] = dot({dh.data(), dim}, traces[i].rep);
        weighted += bag.alpha[i] * dalpha[i];
    }
    ds.assign(n, VecD(dim, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        const double de = bag.alpha[i] * (dalpha[i] - weighted);
        for (std::size_t k = 0; k < dim; ++k) {
            ds[i][k] = bag.alpha[i] * dh[k] + de * query[k];
            dq[k] += de * traces[i].rep[k];
        }
    }
}

void encoder_backward(const PcnnTrace& trace, const SentenceInstance& sent,
                      const ModelParams& params, const VecD& ds, Gradients& g) {
    const Hyperparams& hp = params.hp;
    const int n = trace.inputs.rows;
    const int ki = hp.input_dim();
    const int nf = hp.filters;
    const int half = (hp.window - 1) / 2;

    Matrix dx(n, ki);
    std::vector<char> touched(static_cast<std::size_t>(n), 0);

    for (int seg = 0; seg < 3; ++seg) {
        for (int f = 0; f < nf; ++f) {
            const std::size_t k = static_cast<std::size_t>(seg) * nf + f;
            const int pos = trace.argmax[k];
            if (pos < 0) continue;
            // tanh backward, then route through the pooling argmax.
            const double gv = ds[k] * (1.0 - trace.rep[k] * trace.rep[k]);
            if (gv == 0.0) continue;
            g.conv_bias[static_cast<std::size_t>(f)] += gv;
            const double* krow = params.conv_kernel.row(f);
            double* dkrow = g.conv_kernel.row(f);
            for (int w = -half; w <= half; ++w) {
                const int src = pos + w;
                if (src < 0 || src >= n) continue;
                const double* x = trace.inputs.row(src);
                double* dxr = dx.row(src);
                const int base = (w + half) * ki;
                for (int d = 0; d < ki; ++d) {
                    dkrow[base + d] += gv * x[d];
                    dxr[d] += gv * krow[base + d];
                }
                touched[static_cast<std::size_t>(src)] = 1;
            }
        }
    }

    for (int i = 0; i < n; ++i) {
        if (!touched[static_cast<std::size_t>(i)]) continue;
        const double* dxr = dx.row(i);
        double* wrow = g.word.row(params.emb.vocab.row_of(sent.tokens[static_cast<std::size_t>(i)]));
        for (int d = 0; d < hp.word_dim; ++d) wrow[d] += dxr[d];
        double* phr = g.pos_head.row(position_row(i - sent.head.start, hp.pos_clip));
        for (int d = 0; d < hp.pos_dim; ++d) phr[d] += dxr[hp.word_dim + d];
        double* ptr = g.pos_tail.row(position_row(i - sent.tail.start, hp.pos_clip));
        for (int d = 0; d < hp.pos_dim; ++d) ptr[d] += dxr[hp.word_dim + hp.pos_dim + d];
    }
}

void backward_example(const TrainExample& ex, const ExampleForward& f,
                      std::span<const SentenceInstance> sentences, const ModelParams& params,
                      double scale, Gradients& g) {
    const int gold = ex.label.relation;
    const std::size_t dim = f.fused.r.size();
    const std::size_t n_r = f.probs.size();

    // Softmax cross-entropy backward, batch-mean scale folded in here.
    VecD dlogits(n_r);
    for (std::size_t k = 0; k < n_r; ++k) dlogits[k] = scale * f.probs[k];
    dlogits[static_cast<std::size_t>(gold)] -= scale;

    VecD dr_tilde(dim, 0.0);
    for (std::size_t k = 0; k < n_r; ++k) {
        g.rel_d[k] += dlogits[k];
        const double* mrow = params.rel.m.row(static_cast<int>(k));
        double* dmrow = g.rel_m.row(static_cast<int>(k));
        for (std::size_t j = 0; j < dim; ++j) {
            dmrow[j] += dlogits[k] * f.r_tilde[j];
            dr_tilde[j] += dlogits[k] * mrow[j];
        }
    }

    VecD dr(dim);
    if (!f.mask.empty()) {
        for (std::size_t j = 0; j < dim; ++j) {
            dr[j] = f.mask[j] ? dr_tilde[j] * f.inv_keep : 0.0;
        }
    } else {
        dr = dr_tilde;
    }

    const auto query = params.rel.query(gold);
    VecD dq(dim, 0.0);
    VecD dh, dhT;
    if (!f.fused.beta_forced) {
        const VecD& h = f.bag_s->h;
        const VecD& hT = f.bag_st->h;
        const GateParams& gate = *params.gate;
        const double beta = f.fused.beta;
        double dbeta = 0.0;
        dh.assign(dim, 0.0);
        dhT.assign(dim, 0.0);
        for (std::size_t j = 0; j < dim; ++j) {
            dbeta += dr[j] * (h[j] - hT[j]);
            dh[j] = beta * dr[j];
            dhT[j] = (1.0 - beta) * dr[j];
        }
        const double dz = dbeta * beta * (1.0 - beta);
        g.gate_b += dz;
        for (std::size_t j = 0; j < dim; ++j) {
            g.gate_w[j] += dz * h[j];
            g.gate_w[dim + j] += dz * hT[j];
            g.gate_w[2 * dim + j] += dz * query[j];
            dh[j] += dz * gate.w[j];
            dhT[j] += dz * gate.w[dim + j];
            dq[j] += dz * gate.w[2 * dim + j];
        }
    } else if (f.fused.beta == 1.0) {
        dh = dr;
    } else {
        dhT = dr;
    }

    std::vector<VecD> ds;
    if (!dh.empty() && f.bag_s) {
        attention_backward(*f.bag_s, f.s_traces, query, dh, dq, ds);
        for (std::size_t i = 0; i < f.s_traces.size(); ++i) {
            encoder_backward(f.s_traces[i], sentences[ex.onehop[i]], params, ds[i], g);
        }
    }
    if (!dhT.empty() && f.bag_st) {
        attention_backward(*f.bag_st, f.st_traces, query, dhT, dq, ds);
        for (std::size_t i = 0; i < f.st_traces.size(); ++i) {
            encoder_backward(f.st_traces[i], sentences[ex.twohop[i]], params, ds[i], g);
        }
    }

    double* qgrad = g.rel_m.row(gold);
    for (std::size_t j = 0; j < dim; ++j) qgrad[j] += dq[j];
}

}  // namespace

double compute_loss(std::span<const TrainExample> batch,
                    std::span<const SentenceInstance> sentences, const ModelParams& params,
                    const TrainConfig& cfg, Rng rng, bool training) {
    if (batch.empty()) throw ValidationError("empty batch");
    double total = 0.0;
    for (const TrainExample& ex : batch) {
        total += forward_example(ex, sentences, params, cfg, training, rng).loss;
    }
    return total / static_cast<double>(batch.size());
}

double compute_gradients(std::span<const TrainExample> batch,
                         std::span<const SentenceInstance> sentences, const ModelParams& params,
                         const TrainConfig& cfg, Rng rng, Gradients& grads) {
    if (batch.empty()) throw ValidationError("empty batch");
    grads.zero();
    const double scale = 1.0 / static_cast<double>(batch.size());
    double total = 0.0;
    for (const TrainExample& ex : batch) {
        ExampleForward f = forward_example(ex, sentences, params, cfg, /*training=*/true, rng);
        total += f.loss;
        backward_example(ex, f, sentences, params, scale, grads);
    }
    return total * scale;
}

void apply_sgd_update(ModelParams& params, const Gradients& g, const TrainConfig& cfg) {
    const double lr = cfg.learning_rate;
    auto update_mat = [lr](Matrix& p, const Matrix& grad) {
        for (std::size_t i = 0; i < p.data.size(); ++i) p.data[i] -= lr * grad.data[i];
    };
    auto update_vec = [lr](VecD& p, const VecD& grad) {
        for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr * grad[i];
    };
    if (!cfg.freeze_encoder) {
        if (!cfg.freeze_word_embeddings) update_mat(params.emb.word, g.word);
        update_mat(params.emb.pos_head, g.pos_head);
        update_mat(params.emb.pos_tail, g.pos_tail);
        update_mat(params.conv_kernel, g.conv_kernel);
        update_vec(params.conv_bias, g.conv_bias);
    }
    update_mat(params.rel.m, g.rel_m);
    update_vec(params.rel.d, g.rel_d);
    if (params.gate) {
        update_vec(params.gate->w, g.gate_w);
        params.gate->b -= lr * g.gate_b;
    }
}

double sgd_epoch(std::span<const TrainExample> examples,
                 std::span<const SentenceInstance> sentences, ModelParams& params,
                 const TrainConfig& cfg, int epoch, Gradients& scratch) {
    if (examples.empty()) throw ValidationError("no training examples");
    std::vector<std::size_t> order(examples.size());
    std::iota(order.begin(), order.end(), 0);
    Rng epoch_rng(mix_seed(cfg.seed, 0xE50C000000ULL + static_cast<std::uint64_t>(epoch)));
    epoch_rng.shuffle(order);

    double total = 0.0;
    std::size_t done = 0;
    std::vector<TrainExample> batch;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
        const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
        batch.clear();
        for (std::size_t i = start; i < stop; ++i) batch.push_back(examples[order[i]]);
        Rng batch_rng(epoch_rng.next());
        const double loss = compute_gradients(batch, sentences, params, cfg, batch_rng, scratch);
        apply_sgd_update(params, scratch, cfg);
        total += loss * static_cast<double>(batch.size());
        done += batch.size();
    }
    return total / static_cast<double>(done);
}

std::vector<TrainExample> prepare_examples(std::span<const LabeledPair> labels,
                                           const BagMap& train_bags, const AnchorIndex* index,
                                           int cap, std::uint64_t seed) {
    std::vector<TrainExample> examples;
    examples.reserve(labels.size());
    for (const LabeledPair& lp : labels) {
        TrainExample ex;
        ex.label = lp;
        if (auto it = train_bags.find(lp.pair); it != train_bags.end()) {
            ex.onehop = it->second.sentences;
        }
        if (index) {
            ex.twohop = expand_bag(lp.pair, *index, train_bags, cap, seed).sentences;
        }
        if (ex.onehop.empty() && ex.twohop.empty()) continue;
        examples.push_back(std::move(ex));
    }
    return examples;
}

void write_training_log(const std::filesystem::path& path, std::span<const TrainLogRow> rows) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot write training log: " + path.string());
    out << "epoch,phase,train_loss,dev_loss,wall_seconds\n";
    char buf[160];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%d,%s,%.9f,%.9f,%.3f\n", r.epoch, phase_name(r.phase),
                      r.train_loss, r.dev_loss, r.wall_seconds);
        out << buf;
    }
}

namespace {

// Runs one training phase; leaves `params` at the best-dev epoch.
void run_phase(ModelParams& params, std::span<const TrainExample> train_ex,
               std::span<const TrainExample> dev_ex, std::span<const SentenceInstance> sentences,
               const TrainConfig& cfg, std::vector<TrainLogRow>& log) {
    Gradients scratch;
    scratch.init_like(params);
    ModelParams best = params;
    double best_dev = std::numeric_limits<double>::infinity();
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        const double train_loss = sgd_epoch(train_ex, sentences, params, cfg, epoch, scratch);
        const double dev_loss =
            dev_ex.empty() ? train_loss
                           : compute_loss(dev_ex, sentences, params, cfg,
                                          Rng(mix_seed(cfg.seed, 0xDE7000ULL + epoch)),
                                          /*training=*/false);
        const auto t1 = std::chrono::steady_clock::now();
        log.push_back(TrainLogRow{epoch, cfg.phase, train_loss, dev_loss,
                                  std::chrono::duration<double>(t1 - t0).count()});
        if (dev_loss < best_dev) {
            best_dev = dev_loss;
            best = params;
        }
    }
    if (cfg.epochs > 0) params = std::move(best);
}

}  // namespace

PhaseRunResult run_phase_training(ModelParams start, const Corpus& corpus,
                                  const RelationVocabulary& relations, const AnchorIndex* index,
                                  const TrainConfig& cfg, double dev_fraction, std::uint64_t seed) {
    cfg.validate();
    if (relations.size() != start.n_relations()) {
        throw ConfigError("relation vocabulary does not match the model's relation matrix");
    }
    if (cfg.phase == Phase::finetune) {
        if (cfg.epochs > 0 && index == nullptr) {
            throw ConfigError("the finetune phase requires an anchor index");
        }
        if (!start.gate) {
            Rng gate_rng(mix_seed(seed, 0x6A7E));
            start.gate = init_gate(start.hp, gate_rng);
        }
    }

    const std::vector<LabeledPair> train_labels = derive_labels(corpus, Split::train);
    auto [train_set, dev_set] = split_train_dev(train_labels, dev_fraction, mix_seed(seed, 0xDE5));
    const BagMap train_bags = build_onehop_bags(corpus.sentences, Split::train);
    const std::uint64_t expand_seed = mix_seed(seed, 0xE48);
    const std::vector<TrainExample> train_ex =
        prepare_examples(train_set, train_bags, index, cfg.cap, expand_seed);
    const std::vector<TrainExample> dev_ex =
        prepare_examples(dev_set, train_bags, index, cfg.cap, expand_seed);

    PhaseRunResult result;
    run_phase(start, train_ex, dev_ex, corpus.sentences, cfg, result.log);
    result.params = std::move(start);
    return result;
}

TwoPhaseResult run_two_phase(const Corpus& corpus, const RelationVocabulary& relations,
                             const AnchorIndex* index, const Hyperparams& hp,
                             const TrainConfig& cfg_pre, const TrainConfig& cfg_fine,
                             std::optional<std::pair<Vocabulary, Matrix>> pretrained_emb,
                             double dev_fraction, std::uint64_t seed) {
    hp.validate();
    if (cfg_pre.phase != Phase::pretrain || cfg_fine.phase != Phase::finetune) {
        throw ConfigError("run_two_phase expects a pretrain config then a finetune config");
    }

    Vocabulary vocab = pretrained_emb ? pretrained_emb->first
                                      : Vocabulary::from_corpus(corpus.sentences, Split::train);
    Rng init_rng(mix_seed(seed, 0x1417));
    ModelParams params =
        init_params(hp, relations.size(), vocab, init_rng, std::move(pretrained_emb));

    TwoPhaseResult result;
    PhaseRunResult pre =
        run_phase_training(std::move(params), corpus, relations, index, cfg_pre, dev_fraction, seed);
    result.pretrained = pre.params;
    result.log = std::move(pre.log);

    PhaseRunResult fine = run_phase_training(std::move(pre.params), corpus, relations, index,
                                             cfg_fine, dev_fraction, seed);
    result.finetuned = std::move(fine.params);
    result.log.insert(result.log.end(), fine.log.begin(), fine.log.end());
    return result;
}

namespace {

struct TensorRef {
    std::string name;
    std::vector<int> shape;
    const double* data;
    std::size_t count;
};

std::vector<TensorRef> tensor_table(const ModelParams& p) {
    std::vector<TensorRef> t = {
        {"word_embeddings", {p.emb.word.rows, p.emb.word.cols}, p.emb.word.data.data(),
         p.emb.word.size()},
        {"pos_head_embeddings", {p.emb.pos_head.rows, p.emb.pos_head.cols},
         p.emb.pos_head.data.data(), p.emb.pos_head.size()},
        {"pos_tail_embeddings", {p.emb.pos_tail.rows, p.emb.pos_tail.cols},
         p.emb.pos_tail.data.data(), p.emb.pos_tail.size()},
        {"conv_kernel", {p.conv_kernel.rows, p.conv_kernel.cols}, p.conv_kernel.data.data(),
         p.conv_kernel.size()},
        {"conv_bias", {static_cast<int>(p.conv_bias.size())}, p.conv_bias.data(),
         p.conv_bias.size()},
        {"relation_matrix", {p.rel.m.rows, p.rel.m.cols}, p.rel.m.data.data(), p.rel.m.size()},
        {"relation_bias", {static_cast<int>(p.rel.d.size())}, p.rel.d.data(), p.rel.d.size()},
    };
    if (p.gate) {
        t.push_back({"gate_weight", {static_cast<int>(p.gate->w.size())}, p.gate->w.data(),
                     p.gate->w.size()});
        t.push_back({"gate_bias", {1}, &p.gate->b, 1});
    }
    return t;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, const ModelParams& params,
                     const RelationVocabulary& relations, Phase phase, std::uint64_t seed) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);

    std::ofstream blob(dir / "tensors.bin", std::ios::binary);
    if (!blob) throw ParseError("cannot write checkpoint blob in " + dir.string());

    json manifest;
    manifest["format"] = "tabrex-checkpoint";
    manifest["version"] = 1;
    manifest["phase"] = phase_name(phase);
    manifest["seed"] = seed;
    manifest["n_relations"] = params.n_relations();
    manifest["hyperparams"] = {{"window", params.hp.window},     {"filters", params.hp.filters},
                               {"word_dim", params.hp.word_dim}, {"pos_dim", params.hp.pos_dim},
                               {"pos_clip", params.hp.pos_clip}, {"max_len", params.hp.max_len}};
    manifest["vocab_file"] = "vocab.txt";
    manifest["relations_file"] = "relations.txt";

    json tensors = json::array();
    std::uint64_t offset = 0;
    for (const TensorRef& t : tensor_table(params)) {
        blob.write(reinterpret_cast<const char*>(t.data),
                   static_cast<std::streamsize>(t.count * sizeof(double)));
        tensors.push_back({{"name", t.name},
                           {"shape", t.shape},
                           {"dtype", "f64"},
                           {"file", "tensors.bin"},
                           {"offset", offset}});
        offset += t.count * sizeof(double);
    }
    manifest["tensors"] = std::move(tensors);
    if (!blob) throw ParseError("write failure on checkpoint blob in " + dir.string());

    std::ofstream mf(dir / "manifest.json");
    mf << manifest.dump(2) << "\n";

    std::ofstream vf(dir / "vocab.txt");
    for (const auto& w : params.emb.vocab.words) vf << w << "\n";
    relations.save(dir / "relations.txt");
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    std::ifstream mf(dir / "manifest.json");
    if (!mf) throw ParseError("cannot open checkpoint manifest in " + dir.string());
    json manifest;
    try {
        mf >> manifest;
    } catch (const json::exception& e) {
        throw ParseError("bad checkpoint manifest in " + dir.string() + ": " + e.what());
    }
    if (manifest.value("format", "") != "tabrex-checkpoint") {
        throw ParseError("not a checkpoint directory: " + dir.string());
    }

    Checkpoint ckpt;
    const auto phase = parse_phase(manifest.at("phase").get<std::string>());
    if (!phase) throw ParseError("bad phase in checkpoint manifest");
    ckpt.phase = *phase;
    ckpt.seed = manifest.at("seed").get<std::uint64_t>();

    const json& hj = manifest.at("hyperparams");
    Hyperparams hp;
    hp.window = hj.at("window").get<int>();
    hp.filters = hj.at("filters").get<int>();
    hp.word_dim = hj.at("word_dim").get<int>();
    hp.pos_dim = hj.at("pos_dim").get<int>();
    hp.pos_clip = hj.at("pos_clip").get<int>();
    hp.max_len = hj.at("max_len").get<int>();
    hp.validate();
    ckpt.params.hp = hp;

    // Vocabulary with the reserved rows validated.
    {
        std::ifstream vf(dir / manifest.at("vocab_file").get<std::string>());
        if (!vf) throw ParseError("cannot open checkpoint vocabulary in " + dir.string());
        Vocabulary v;
        v.words.clear();
        v.index.clear();
        std::string line;
        while (std::getline(vf, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty()) continue;
            v.index.emplace(line, static_cast<int>(v.words.size()));
            v.words.push_back(line);
        }
        if (v.words.size() < 2 || v.words[0] != "<pad>" || v.words[1] != "<unk>") {
            throw ValidationError("checkpoint vocabulary must start with <pad> and <unk>");
        }
        ckpt.params.emb.vocab = std::move(v);
    }
    ckpt.relations = RelationVocabulary::load(dir / manifest.at("relations_file").get<std::string>());

    std::ifstream blob(dir / "tensors.bin", std::ios::binary);
    if (!blob) throw ParseError("cannot open checkpoint blob in " + dir.string());
    auto read_tensor = [&](const json& tj, double* dst, std::size_t count) {
        blob.seekg(static_cast<std::streamoff>(tj.at("offset").get<std::uint64_t>()));
        blob.read(reinterpret_cast<char*>(dst),
                  static_cast<std::streamsize>(count * sizeof(double)));
        if (!blob) throw ParseError("truncated checkpoint blob in " + dir.string());
    };

    ModelParams& p = ckpt.params;
    std::optional<json> gate_w, gate_b;
    for (const json& tj : manifest.at("tensors")) {
        const std::string name = tj.at("name").get<std::string>();
        if (tj.at("dtype").get<std::string>() != "f64") {
            throw ParseError("unsupported tensor dtype in checkpoint: " + name);
        }
        const auto shape = tj.at("shape").get<std::vector<int>>();
        auto expect_rank = [&](std::size_t rank) {
            if (shape.size() != rank) throw ParseError("bad shape for tensor " + name);
        };
        if (name == "word_embeddings") {
            expect_rank(2);
            p.emb.word = Matrix(shape[0], shape[1]);
            read_tensor(tj, p.emb.word.data.data(), p.emb.word.size());
        } else if (name == "pos_head_embeddings") {
            expect_rank(2);
            p.emb.pos_head = Matrix(shape[0], shape[1]);
            read_tensor(tj, p.emb.pos_head.data.data(), p.emb.pos_head.size());
        } else if (name == "pos_tail_embeddings") {
            expect_rank(2);
            p.emb.pos_tail = Matrix(shape[0], shape[1]);
            read_tensor(tj, p.emb.pos_tail.data.data(), p.emb.pos_tail.size());
        } else if (name == "conv_kernel") {
            expect_rank(2);
            p.conv_kernel = Matrix(shape[0], shape[1]);
            read_tensor(tj, p.conv_kernel.data.data(), p.conv_kernel.size());
        } else if (name == "conv_bias") {
            expect_rank(1);
            p.conv_bias.assign(static_cast<std::size_t>(shape[0]), 0.0);
            read_tensor(tj, p.conv_bias.data(), p.conv_bias.size());
        } else if (name == "relation_matrix") {
            expect_rank(2);
            p.rel.m = Matrix(shape[0], shape[1]);
            read_tensor(tj, p.rel.m.data.data(), p.rel.m.size());
        } else if (name == "relation_bias") {
            expect_rank(1);
            p.rel.d.assign(static_cast<std::size_t>(shape[0]), 0.0);
            read_tensor(tj, p.rel.d.data(), p.rel.d.size());
        } else if (name == "gate_weight") {
            gate_w = tj;
        } else if (name == "gate_bias") {
            gate_b = tj;
        } else {
            throw ParseError("unknown tensor in checkpoint: " + name);
        }
    }
    if (gate_w && gate_b) {
        GateParams gate;
        const auto shape = gate_w->at("shape").get<std::vector<int>>();
        if (shape.size() != 1) throw ParseError("bad shape for tensor gate_weight");
        gate.w.assign(static_cast<std::size_t>(shape[0]), 0.0);
        read_tensor(*gate_w, gate.w.data(), gate.w.size());
        read_tensor(*gate_b, &gate.b, 1);
        p.gate = std::move(gate);
    } else if (gate_w || gate_b) {
        throw ParseError("checkpoint has a partial gate tensor set");
    }

    // Shape cross-checks against the recorded hyperparameters.
    if (p.emb.word.cols != hp.word_dim || p.emb.pos_head.rows != hp.pos_rows() ||
        p.emb.pos_head.cols != hp.pos_dim || p.emb.pos_tail.rows != hp.pos_rows() ||
        p.conv_kernel.rows != hp.filters ||
        p.conv_kernel.cols != hp.window * hp.input_dim() ||
        static_cast<int>(p.conv_bias.size()) != hp.filters ||
        p.rel.m.cols != hp.sent_dim() ||
        p.rel.m.rows != manifest.at("n_relations").get<int>() ||
        p.rel.d.size() != static_cast<std::size_t>(p.rel.m.rows) ||
        (p.gate && p.gate->w.size() != static_cast<std::size_t>(3) * hp.sent_dim()) ||
        p.emb.word.rows != static_cast<int>(p.emb.vocab.words.size())) {
        throw ValidationError("checkpoint tensor shapes are inconsistent in " + dir.string());
    }
    if (ckpt.relations.size() != p.rel.m.rows) {
        throw ValidationError("checkpoint relation list does not match the relation matrix");
    }
    return ckpt;
}

}  // namespace tabrex
