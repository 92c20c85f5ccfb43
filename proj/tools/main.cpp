// Command-line front end: index building, bag expansion, training, evaluation,
// prediction and synthetic corpus generation.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "tabrex/pipeline.hpp"
#include "tabrex/synthgen.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace tabrex;

namespace {

struct CliState {
    json config = json::object();
    std::string config_path;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int cap = 0;
    bool cap_set = false;
    std::string out;

    std::uint64_t effective_seed() const {
        if (seed_set) return seed;
        return config.value("seed", std::uint64_t{0});
    }

    int effective_cap() const {
        if (cap_set) return cap;
        return config.value("cap", 300);
    }

    // Flag > config["paths"][key] > empty.
    std::string path_of(const std::string& flag_value, const std::string& key) const {
        if (!flag_value.empty()) return flag_value;
        if (config.contains("paths") && config["paths"].contains(key)) {
            return config["paths"][key].get<std::string>();
        }
        return {};
    }

    std::string require_path(const std::string& flag_value, const std::string& key,
                             const std::string& what) const {
        std::string p = path_of(flag_value, key);
        if (p.empty()) {
            throw ConfigError("missing " + what + ": pass --" + key + " or set paths." + key +
                              " in the config file");
        }
        return p;
    }
};

void load_config(CliState& st) {
    if (st.config_path.empty()) return;
    std::ifstream in(st.config_path);
    if (!in) throw ConfigError("cannot open config file: " + st.config_path);
    try {
        in >> st.config;
    } catch (const json::exception& e) {
        throw ParseError("bad config file " + st.config_path + ": " + e.what());
    }
}

Hyperparams hyperparams_from(const json& config) {
    Hyperparams hp;
    if (config.contains("hyperparams")) {
        const json& h = config["hyperparams"];
        hp.window = h.value("window", hp.window);
        hp.filters = h.value("filters", hp.filters);
        hp.word_dim = h.value("word_dim", hp.word_dim);
        hp.pos_dim = h.value("pos_dim", hp.pos_dim);
        hp.pos_clip = h.value("pos_clip", hp.pos_clip);
        hp.max_len = h.value("max_len", hp.max_len);
    }
    hp.validate();
    return hp;
}

TrainConfig train_config_from(const CliState& st, Phase phase) {
    TrainConfig cfg;
    cfg.phase = phase;
    cfg.learning_rate = phase == Phase::pretrain ? 0.005 : 0.002;
    cfg.epochs = phase == Phase::pretrain ? 100 : 50;
    if (st.config.contains("train")) {
        const json& t = st.config["train"];
        cfg.learning_rate = t.value("learning_rate", cfg.learning_rate);
        cfg.dropout = t.value("dropout", cfg.dropout);
        cfg.epochs = t.value("epochs", cfg.epochs);
        cfg.batch_size = t.value("batch_size", cfg.batch_size);
        cfg.freeze_encoder = t.value("freeze_encoder", cfg.freeze_encoder);
        cfg.freeze_word_embeddings =
            t.value("freeze_word_embeddings", cfg.freeze_word_embeddings);
    }
    cfg.seed = st.effective_seed();
    cfg.cap = st.effective_cap();
    cfg.validate();
    return cfg;
}

SynthConfig synth_config_from(const CliState& st) {
    SynthConfig cfg;
    if (st.config.contains("synth")) {
        const json& s = st.config["synth"];
        cfg.n_relations = s.value("n_relations", cfg.n_relations);
        cfg.n_entities = s.value("n_entities", cfg.n_entities);
        cfg.vocab_size = s.value("vocab_size", cfg.vocab_size);
        cfg.n_pairs = s.value("n_pairs", cfg.n_pairs);
        cfg.frac_single = s.value("frac_single", cfg.frac_single);
        cfg.frac_empty_onehop = s.value("frac_empty_onehop", cfg.frac_empty_onehop);
        cfg.noise = s.value("noise", cfg.noise);
        cfg.na_fraction = s.value("na_fraction", cfg.na_fraction);
        cfg.test_fraction = s.value("test_fraction", cfg.test_fraction);
        cfg.templates_per_relation = s.value("templates_per_relation", cfg.templates_per_relation);
        cfg.max_bag = s.value("max_bag", cfg.max_bag);
        cfg.table_rows = s.value("table_rows", cfg.table_rows);
    }
    cfg.seed = st.effective_seed();
    cfg.validate();
    return cfg;
}

int cmd_synth(const CliState& st) {
    const std::string out = st.out.empty() ? st.path_of("", "out") : st.out;
    if (out.empty()) throw ConfigError("synth needs --out DIR");
    const SynthSummary s = generate(synth_config_from(st), out);
    std::cout << "wrote " << s.n_sentences << " sentences, " << s.n_tables << " tables ("
              << s.n_pairs_train << " train pairs, " << s.n_pairs_test << " test pairs, "
              << s.n_pairs_empty_onehop << " table-only pairs) to " << out << "\n";
    return 0;
}

int cmd_build_index(const CliState& st, const std::string& tables_flag,
                    const std::string& entity_map_flag, double ne_threshold, bool threshold_set) {
    const std::string tables_path = st.require_path(tables_flag, "tables", "tables file");
    const std::string out = st.out.empty() ? st.path_of("", "index") : st.out;
    if (out.empty()) throw ConfigError("build-index needs --out FILE");
    double threshold = threshold_set ? ne_threshold : st.config.value("ne_threshold", 0.5);

    std::map<std::string, std::string> entity_map;
    const std::string map_path = st.path_of(entity_map_flag, "entity_map");
    if (!map_path.empty()) entity_map = load_entity_map(map_path);

    const std::vector<WebTable> tables =
        load_tables(tables_path, map_path.empty() ? nullptr : &entity_map);
    AnchorIndexBuilder builder(threshold);
    for (const WebTable& t : tables) builder.add(t);
    const AnchorIndex index = builder.finish();
    index.save(out);
    std::cout << "indexed " << tables.size() << " tables: " << index.anchors.size()
              << " anchored pairs -> " << out << "\n";
    return 0;
}

void print_stats(const char* title, const CorpusStats& stats) {
    auto side = [](const char* name, const CorpusStats::Side& s) {
        std::cout << "  " << name << ": pairs=" << s.n_pairs
                  << " with_twohop=" << s.n_with_twohop << " (" << s.pct_with_twohop
                  << "%) mean_onehop=" << s.mean_onehop << " mean_twohop=" << s.mean_twohop
                  << "\n";
    };
    std::cout << title << "\n";
    side("overall", stats.overall);
    side("non-NA ", stats.non_na);
}

int cmd_expand(const CliState& st, const std::string& sentences_flag,
               const std::string& relations_flag, const std::string& index_flag) {
    const RelationVocabulary relations =
        RelationVocabulary::load(st.require_path(relations_flag, "relations", "relations file"));
    const Hyperparams hp = hyperparams_from(st.config);
    const Corpus corpus = load_sentences(
        st.require_path(sentences_flag, "sentences", "sentences file"), relations, hp.max_len);
    const AnchorIndex index =
        AnchorIndex::load(st.require_path(index_flag, "index", "anchor index"));
    const BagMap train_bags = build_onehop_bags(corpus.sentences, Split::train);
    const int cap = st.effective_cap();
    const std::uint64_t expand_seed = mix_seed(st.effective_seed(), 0xE48);

    std::ofstream tsv;
    if (!st.out.empty()) {
        tsv.open(st.out);
        if (!tsv) throw ParseError("cannot write " + st.out);
        tsv << "head\ttail\tsplit\tn_onehop\tn_twohop\n";
    }
    for (Split split : {Split::train, Split::test}) {
        const std::vector<LabeledPair> labels = derive_labels(corpus, split);
        const BagMap onehop = build_onehop_bags(corpus.sentences, split);
        BagMap twohop;
        std::set<EntityPair> seen;
        for (const LabeledPair& lp : labels) {
            if (!seen.insert(lp.pair).second) continue;
            SentenceBag bag = expand_bag(lp.pair, index, train_bags, cap, expand_seed);
            if (tsv.is_open()) {
                auto it = onehop.find(lp.pair);
                tsv << lp.pair.head << "\t" << lp.pair.tail << "\t" << split_name(split) << "\t"
                    << (it == onehop.end() ? 0 : it->second.sentences.size()) << "\t"
                    << bag.sentences.size() << "\n";
            }
            if (!bag.sentences.empty()) twohop.emplace(lp.pair, std::move(bag));
        }
        print_stats(split == Split::train ? "train split" : "test split",
                    corpus_stats(onehop, twohop, labels));
    }
    return 0;
}

int cmd_train(const CliState& st, const std::string& phase_str, const std::string& sentences_flag,
              const std::string& relations_flag, const std::string& index_flag,
              const std::string& embeddings_flag, const std::string& init_flag) {
    const auto phase = parse_phase(phase_str);
    if (!phase) throw ConfigError("unknown phase '" + phase_str + "'");
    const std::string out = st.out.empty() ? st.path_of("", "checkpoint") : st.out;
    if (out.empty()) throw ConfigError("train needs --out DIR for the checkpoint");

    const TrainConfig cfg = train_config_from(st, *phase);
    const double dev_fraction = st.config.value("dev_fraction", 0.2);
    const std::uint64_t seed = st.effective_seed();

    RelationVocabulary relations;
    ModelParams params;
    std::optional<AnchorIndex> index;
    if (*phase == Phase::pretrain) {
        relations = RelationVocabulary::load(
            st.require_path(relations_flag, "relations", "relations file"));
    } else {
        const std::string init_path = st.path_of(init_flag, "init_checkpoint");
        if (init_path.empty()) {
            throw ConfigError("finetune needs --init CHECKPOINT from the pretrain phase");
        }
        Checkpoint ckpt = load_checkpoint(init_path);
        relations = std::move(ckpt.relations);
        params = std::move(ckpt.params);
        index = AnchorIndex::load(st.require_path(index_flag, "index", "anchor index"));
    }

    const Hyperparams hp = *phase == Phase::pretrain ? hyperparams_from(st.config) : params.hp;
    const Corpus corpus = load_sentences(
        st.require_path(sentences_flag, "sentences", "sentences file"), relations, hp.max_len);

    if (*phase == Phase::pretrain) {
        std::optional<fs::path> embeddings;
        const std::string emb = st.path_of(embeddings_flag, "embeddings");
        if (!emb.empty()) embeddings = emb;
        params = build_initial_params(corpus, relations, hp, embeddings, seed);
    }

    PhaseRunResult result = run_phase_training(std::move(params), corpus, relations,
                                               index ? &*index : nullptr, cfg, dev_fraction, seed);
    fs::create_directories(out);
    save_checkpoint(out, result.params, relations, *phase, seed);
    write_training_log(fs::path(out) / "log.csv", result.log);
    if (!result.log.empty()) {
        const TrainLogRow& last = result.log.back();
        std::cout << phase_str << " done: " << result.log.size()
                  << " epochs, final train_loss=" << last.train_loss
                  << " dev_loss=" << last.dev_loss << "; checkpoint -> " << out << "\n";
    } else {
        std::cout << phase_str << ": no epochs run; checkpoint -> " << out << "\n";
    }
    return 0;
}

int cmd_eval(const CliState& st, const std::string& mode_str, const std::string& checkpoint_flag,
             const std::string& sentences_flag, const std::string& index_flag,
             const std::string& gold_flag) {
    const auto kind = parse_test_mode(mode_str);
    if (!kind) throw ConfigError("unknown test mode '" + mode_str + "'");
    const std::string ckpt_path =
        st.require_path(checkpoint_flag, "checkpoint", "checkpoint directory");
    if (!fs::exists(fs::path(ckpt_path) / "manifest.json")) {
        throw ValidationError("checkpoint not found: " + ckpt_path);
    }
    const std::string out = st.out.empty() ? st.path_of("", "out") : st.out;
    if (out.empty()) throw ConfigError("eval needs --out DIR");

    const Checkpoint ckpt = load_checkpoint(ckpt_path);
    const Corpus corpus =
        load_sentences(st.require_path(sentences_flag, "sentences", "sentences file"),
                       ckpt.relations, ckpt.params.hp.max_len);

    std::optional<AnchorIndex> index;
    const std::string index_path = st.path_of(index_flag, "index");
    if (!index_path.empty()) index = AnchorIndex::load(index_path);

    std::vector<GoldRecord> extra_gold;
    const std::string gold_path = st.path_of(gold_flag, "gold");
    if (!gold_path.empty()) extra_gold = load_gold(gold_path, ckpt.relations);

    const std::uint64_t seed = st.effective_seed();
    TestMode mode{*kind, mix_seed(seed, 0x3000E)};
    const EvalOutcome outcome =
        evaluate_mode(ckpt.params, ckpt.relations, corpus, index ? &*index : nullptr, mode,
                      st.effective_cap(), mix_seed(seed, 0xE48), extra_gold);

    fs::create_directories(out);
    write_report(fs::path(out) / "report.json", outcome.report);
    write_pr_curve(fs::path(out) / "pr_curve.csv", outcome.curve);
    write_predictions(fs::path(out) / "predictions.jsonl", outcome.ranked);
    std::cout << "mode=" << outcome.report.mode << " auc=" << outcome.report.auc
              << " n_gold=" << outcome.report.n_gold
              << " n_predictions=" << outcome.report.n_predictions << " -> " << out << "\n";
    return 0;
}

int cmd_predict(const CliState& st, const std::string& checkpoint_flag,
                const std::string& sentences_flag, const std::string& index_flag,
                const std::string& pairs_flag, const std::string& split_str) {
    const std::string ckpt_path =
        st.require_path(checkpoint_flag, "checkpoint", "checkpoint directory");
    if (!fs::exists(fs::path(ckpt_path) / "manifest.json")) {
        throw ValidationError("checkpoint not found: " + ckpt_path);
    }
    const std::string out = st.out.empty() ? st.path_of("", "out") : st.out;
    if (out.empty()) throw ConfigError("predict needs --out DIR");
    const auto split = parse_split(split_str);
    if (!split) throw ConfigError("--split must be train or test");

    const Checkpoint ckpt = load_checkpoint(ckpt_path);
    const Corpus corpus =
        load_sentences(st.require_path(sentences_flag, "sentences", "sentences file"),
                       ckpt.relations, ckpt.params.hp.max_len);
    std::optional<AnchorIndex> index;
    const std::string index_path = st.path_of(index_flag, "index");
    if (!index_path.empty()) index = AnchorIndex::load(index_path);

    const std::string pairs_path = st.require_path(pairs_flag, "pairs", "pairs file");
    std::vector<EntityPair> pairs;
    {
        std::set<EntityPair> seen;
        for (const GoldRecord& g : load_gold(pairs_path, ckpt.relations)) {
            if (seen.insert(g.pair).second) pairs.push_back(g.pair);
        }
    }

    std::vector<EntityPair> skipped;
    const std::vector<Prediction> ranked =
        predict_pairs(ckpt.params, ckpt.relations, corpus, index ? &*index : nullptr, pairs,
                      *split, st.effective_cap(), mix_seed(st.effective_seed(), 0xE48), &skipped);
    fs::create_directories(out);
    write_predictions(fs::path(out) / "predictions.jsonl", ranked);
    for (const EntityPair& p : skipped) {
        std::cerr << "skipped (" << p.head << ", " << p.tail << "): no sentences in either bag\n";
    }
    std::cout << "scored " << pairs.size() - skipped.size() << "/" << pairs.size() << " pairs -> "
              << out << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"2-hop distant supervision for relation extraction"};
    app.require_subcommand(1);

    CliState st;
    app.add_option("--config", st.config_path, "JSON config file; flags override its keys");
    app.add_option("--seed", st.seed, "master seed")->each([&](const std::string&) {
        st.seed_set = true;
    });
    app.add_option("--cap", st.cap, "max 2-hop bag size")->each([&](const std::string&) {
        st.cap_set = true;
    });
    app.add_option("--out", st.out, "output file or directory");

    std::string sentences, relations, tables, index_path, entity_map, embeddings, init_ckpt,
        checkpoint, gold, pairs_file;
    std::string phase_str = "pretrain", mode_str = "overall", split_str = "test";
    double ne_threshold = 0.5;
    bool threshold_set = false;

    // Global flags may appear after the subcommand name.
    auto* synth = app.add_subcommand("synth", "generate a synthetic corpus");

    auto* build = app.add_subcommand("build-index", "build the anchor index from tables");
    build->add_option("--tables", tables, "tables.jsonl");
    build->add_option("--entity-map", entity_map, "entity_map.tsv");
    build->add_option("--ne-threshold", ne_threshold, "linked-cell ratio for NE columns")
        ->each([&](const std::string&) { threshold_set = true; });

    auto* expand = app.add_subcommand("expand", "report 2-hop bag statistics per pair");
    expand->add_option("--sentences", sentences, "sentences.jsonl");
    expand->add_option("--relations", relations, "relations.txt");
    expand->add_option("--index", index_path, "anchor index file");

    auto* train = app.add_subcommand("train", "train one phase");
    train->add_option("--phase", phase_str, "pretrain|finetune");
    train->add_option("--sentences", sentences, "sentences.jsonl");
    train->add_option("--relations", relations, "relations.txt");
    train->add_option("--index", index_path, "anchor index file (finetune)");
    train->add_option("--embeddings", embeddings, "pretrained word embeddings (pretrain)");
    train->add_option("--init", init_ckpt, "checkpoint to start finetuning from");

    auto* eval = app.add_subcommand("eval", "held-out evaluation of a checkpoint");
    eval->add_option("--mode", mode_str, "overall|single|one|two|all|empty-onehop");
    eval->add_option("--checkpoint", checkpoint, "checkpoint directory");
    eval->add_option("--sentences", sentences, "sentences.jsonl");
    eval->add_option("--index", index_path, "anchor index file");
    eval->add_option("--gold", gold, "gold.jsonl (required for empty-onehop)");

    auto* predict = app.add_subcommand("predict", "score arbitrary entity pairs");
    predict->add_option("--checkpoint", checkpoint, "checkpoint directory");
    predict->add_option("--sentences", sentences, "sentences.jsonl");
    predict->add_option("--index", index_path, "anchor index file");
    predict->add_option("--pairs", pairs_file, "JSONL with head/tail per line");
    predict->add_option("--split", split_str, "corpus split for 1-hop bags (default test)");

    for (CLI::App* sub : {synth, build, expand, train, eval, predict}) sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        load_config(st);
        if (synth->parsed()) return cmd_synth(st);
        if (build->parsed()) {
            return cmd_build_index(st, tables, entity_map, ne_threshold, threshold_set);
        }
        if (expand->parsed()) return cmd_expand(st, sentences, relations, index_path);
        if (train->parsed()) {
            return cmd_train(st, phase_str, sentences, relations, index_path, embeddings,
                             init_ckpt);
        }
        if (eval->parsed()) return cmd_eval(st, mode_str, checkpoint, sentences, index_path, gold);
        if (predict->parsed()) {
            return cmd_predict(st, checkpoint, sentences, index_path, pairs_file, split_str);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
