#include "tabrex/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace tabrex {

void Hyperparams::validate() const {
    if (window < 1 || window % 2 == 0) throw ConfigError("window must be odd and positive");
    if (filters < 1) throw ConfigError("filters must be positive");
    if (word_dim < 1 || pos_dim < 1) throw ConfigError("embedding dims must be positive");
    if (pos_clip < 1) throw ConfigError("pos_clip must be positive");
    if (max_len < 2) throw ConfigError("max_len must be at least 2");
}

Vocabulary::Vocabulary() {
    words = {"<pad>", "<unk>"};
    index = {{"<pad>", kPadRow}, {"<unk>", kUnkRow}};
}

int Vocabulary::add(const std::string& word) {
    auto [it, inserted] = index.try_emplace(word, static_cast<int>(words.size()));
    if (inserted) words.push_back(word);
    return it->second;
}

int Vocabulary::row_of(const std::string& word) const {
    auto it = index.find(word);
    return it == index.end() ? kUnkRow : it->second;
}

Vocabulary Vocabulary::from_corpus(std::span<const SentenceInstance> sentences, Split split) {
    Vocabulary v;
    for (const auto& s : sentences) {
        if (s.split != split) continue;
        for (const auto& t : s.tokens) v.add(t);
    }
    return v;
}

std::pair<Vocabulary, Matrix> load_word_embeddings(const std::filesystem::path& path, Rng& rng) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open embedding file: " + path.string());
    std::string header;
    if (!std::getline(in, header)) throw ParseError("empty embedding file: " + path.string());
    std::istringstream hs(header);
    long long count = 0, dim = 0;
    if (!(hs >> count >> dim) || count < 1 || dim < 1) {
        throw ParseError(path.string() + ":1: expected \"|V| k_w\" header");
    }

    Vocabulary vocab;
    Matrix table(static_cast<int>(count) + 2, static_cast<int>(dim));
    // PAD stays zero; UNK gets a small random vector.
    for (int j = 0; j < table.cols; ++j) table.at(Vocabulary::kUnkRow, j) = rng.uniform(-0.25, 0.25);

    std::string line;
    std::size_t line_no = 1;
    long long loaded = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        if (loaded >= count) {
            throw ParseError(path.string() + ":" + std::to_string(line_no) +
                             ": more rows than declared in header");
        }
        std::istringstream ls(line);
        std::string word;
        if (!(ls >> word)) continue;
        const int row = vocab.add(word);
        if (row < 2 + loaded) {
            throw ValidationError(path.string() + ":" + std::to_string(line_no) +
                                  ": duplicate word '" + word + "'");
        }
        for (int j = 0; j < table.cols; ++j) {
            if (!(ls >> table.at(row, j))) {
                throw ParseError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                                 std::to_string(dim) + " values for '" + word + "'");
            }
        }
        double extra;
        if (ls >> extra) {
            throw ParseError(path.string() + ":" + std::to_string(line_no) +
                             ": more values than the declared dimension");
        }
        ++loaded;
    }
    if (loaded != count) {
        throw ParseError(path.string() + ": header declares " + std::to_string(count) +
                         " words but file has " + std::to_string(loaded));
    }
    return {std::move(vocab), std::move(table)};
}

int position_row(int offset, int pos_clip) {
    return std::clamp(offset, -pos_clip, pos_clip) + pos_clip;
}

Matrix embed_tokens(const SentenceInstance& sentence, const EmbeddingTables& tables,
                    const Hyperparams& hp) {
    const int n = static_cast<int>(sentence.tokens.size());
    if (n > hp.max_len) {
        throw ValidationError("sentence '" + sentence.id + "' exceeds max length " +
                              std::to_string(hp.max_len));
    }
    if (sentence.head.end > n || sentence.tail.end > n) {
        throw ValidationError("mention outside sentence in '" + sentence.id + "'");
    }
    Matrix x(n, hp.input_dim());
    for (int i = 0; i < n; ++i) {
        double* out = x.row(i);
        const double* w = tables.word.row(tables.vocab.row_of(sentence.tokens[i]));
        std::copy_n(w, hp.word_dim, out);
        const double* ph = tables.pos_head.row(position_row(i - sentence.head.start, hp.pos_clip));
        std::copy_n(ph, hp.pos_dim, out + hp.word_dim);
        const double* pt = tables.pos_tail.row(position_row(i - sentence.tail.start, hp.pos_clip));
        std::copy_n(pt, hp.pos_dim, out + hp.word_dim + hp.pos_dim);
    }
    return x;
}

PcnnTrace pcnn_forward(Matrix inputs, const Matrix& kernel, const VecD& bias, int b1, int b2,
                       const Hyperparams& hp) {
    const int n = inputs.rows;
    const int ki = hp.input_dim();
    const int nf = hp.filters;
    const int half = (hp.window - 1) / 2;
    if (n < 1) throw ValidationError("cannot encode an empty sentence");
    if (inputs.cols != ki || kernel.rows != nf || kernel.cols != hp.window * ki ||
        static_cast<int>(bias.size()) != nf) {
        throw ValidationError("encoder dimension mismatch");
    }
    if (!(0 <= b1 && b1 <= b2 && b2 < n)) {
        throw ValidationError("pooling boundaries out of order or out of range");
    }

    PcnnTrace trace;
    trace.boundary1 = b1;
    trace.boundary2 = b2;
    trace.hidden = Matrix(n, nf);
    for (int i = 0; i < n; ++i) {
        double* h = trace.hidden.row(i);
        for (int f = 0; f < nf; ++f) {
            const double* k = kernel.row(f);
            double acc = bias[f];
            for (int w = -half; w <= half; ++w) {
                const int src = i + w;
                if (src < 0 || src >= n) continue;  // zero padding
                const double* xs = inputs.row(src);
                const double* ks = k + (w + half) * ki;
                for (int d = 0; d < ki; ++d) acc += ks[d] * xs[d];
            }
            h[f] = acc;
        }
    }

    // Segment boundaries: [0..b1], (b1..b2], (b2..n-1]. Only the third
    // segment can be empty.
    const std::array<std::pair<int, int>, 3> segments = {
        std::pair{0, b1}, std::pair{b1 + 1, b2}, std::pair{b2 + 1, n - 1}};
    trace.argmax.assign(static_cast<std::size_t>(3) * nf, -1);
    trace.pooled.assign(static_cast<std::size_t>(hp.sent_dim()), 0.0);
    for (int seg = 0; seg < 3; ++seg) {
        const auto [lo, hi] = segments[seg];
        if (lo > hi) continue;  // empty segment pools to 0
        for (int f = 0; f < nf; ++f) {
            int best = lo;
            double best_val = trace.hidden.at(lo, f);
            for (int i = lo + 1; i <= hi; ++i) {
                if (trace.hidden.at(i, f) > best_val) {  // ties keep the lowest index
                    best_val = trace.hidden.at(i, f);
                    best = i;
                }
            }
            trace.argmax[static_cast<std::size_t>(seg) * nf + f] = best;
            trace.pooled[static_cast<std::size_t>(seg) * nf + f] = best_val;
        }
    }

    trace.rep.resize(trace.pooled.size());
    for (std::size_t i = 0; i < trace.pooled.size(); ++i) trace.rep[i] = std::tanh(trace.pooled[i]);
    trace.inputs = std::move(inputs);
    return trace;
}

std::pair<int, int> pooling_boundaries(const SentenceInstance& s) {
    const int head_last = s.head.end - 1;
    const int tail_last = s.tail.end - 1;
    return {std::min(head_last, tail_last), std::max(head_last, tail_last)};
}

PcnnTrace encode_sentence(const SentenceInstance& sentence, const EmbeddingTables& tables,
                          const Matrix& kernel, const VecD& bias, const Hyperparams& hp) {
    Matrix x = embed_tokens(sentence, tables, hp);
    const auto [b1, b2] = pooling_boundaries(sentence);
    return pcnn_forward(std::move(x), kernel, bias, b1, b2, hp);
}

}  // namespace tabrex
