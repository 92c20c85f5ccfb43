#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "tabrex/corpus.hpp"
#include "tabrex/linalg.hpp"

namespace tabrex {

struct Hyperparams {
    int window = 3;      // convolution window m (odd)
    int filters = 230;   // n_f
    int word_dim = 50;   // k_w
    int pos_dim = 5;     // k_p
    int pos_clip = 100;  // P; offsets clipped to [-P, P]
    int max_len = 120;   // L

    int input_dim() const { return word_dim + 2 * pos_dim; }   // k_i
    int sent_dim() const { return 3 * filters; }                // d_s
    int pos_rows() const { return 2 * pos_clip + 2; }           // offsets plus a PAD row

    void validate() const;
};

// Word list with reserved PAD and UNK rows at the front.
struct Vocabulary {
    static constexpr int kPadRow = 0;
    static constexpr int kUnkRow = 1;

    std::vector<std::string> words;  // words[0] = "<pad>", words[1] = "<unk>"
    std::unordered_map<std::string, int> index;

    Vocabulary();
    int size() const { return static_cast<int>(words.size()); }
    int add(const std::string& word);
    int row_of(const std::string& word) const;  // kUnkRow for OOV

    static Vocabulary from_corpus(std::span<const SentenceInstance> sentences, Split split);
};

struct EmbeddingTables {
    Vocabulary vocab;
    Matrix word;      // |V| x k_w
    Matrix pos_head;  // (2P+2) x k_p
    Matrix pos_tail;  // (2P+2) x k_p
};

// Pretrained word embedding text file: first line "|V| k_w", then one
// "word v1 ... v_kw" per line. Returns the vocabulary and word table; words
// get rows in file order after PAD and UNK (random rows, rng-seeded).
std::pair<Vocabulary, Matrix> load_word_embeddings(const std::filesystem::path& path, Rng& rng);

// Row in a position table for a (clipped) offset.
int position_row(int offset, int pos_clip);

// Per-token input vectors x_i = [word(w_i); pos_head(i - head.start);
// pos_tail(i - tail.start)], one row per token.
Matrix embed_tokens(const SentenceInstance& sentence, const EmbeddingTables& tables,
                    const Hyperparams& hp);

// Everything the backward pass needs from one encoded sentence.
struct PcnnTrace {
    Matrix inputs;              // n x k_i
    Matrix hidden;              // n x n_f, pre-pooling
    std::vector<int> argmax;    // 3 * n_f source positions, -1 for empty segment
    VecD pooled;                // d_s, pre-tanh
    VecD rep;                   // d_s, tanh(pooled)
    int boundary1 = 0;          // 0-based last token index of the earlier mention
    int boundary2 = 0;          // 0-based last token index of the later mention
};

// Convolution (zero-padded, window hp.window) followed by piecewise max
// pooling over the three segments delimited by b1 and b2 (0-based inclusive
// last-token indices of the two mentions, b1 <= b2), then elementwise tanh.
// Empty segments pool to 0 pre-tanh.
PcnnTrace pcnn_forward(Matrix inputs, const Matrix& kernel, const VecD& bias, int b1, int b2,
                       const Hyperparams& hp);

// Mention-derived pooling boundaries: sorted last token indices.
std::pair<int, int> pooling_boundaries(const SentenceInstance& s);

// embed_tokens + pcnn_forward with boundaries from the mentions.
PcnnTrace encode_sentence(const SentenceInstance& sentence, const EmbeddingTables& tables,
                          const Matrix& kernel, const VecD& bias, const Hyperparams& hp);

}  // namespace tabrex
