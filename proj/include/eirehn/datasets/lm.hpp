#pragma once

#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "eirehn/cells/cell.hpp"
#include "eirehn/errors.hpp"
#include "eirehn/rng.hpp"
#include "eirehn/tape.hpp"
#include "eirehn/tensor.hpp"

namespace eirehn {

struct Vocab {
    std::vector<std::string> id_to_tok;
    std::map<std::string, int> tok_to_id;
    int unk_id = 0;

    int size() const { return static_cast<int>(id_to_tok.size()); }

    int add(const std::string& tok) {
        auto it = tok_to_id.find(tok);
        if (it != tok_to_id.end()) return it->second;
        int id = size();
        id_to_tok.push_back(tok);
        tok_to_id.emplace(tok, id);
        return id;
    }

    int lookup(const std::string& tok) const {
        auto it = tok_to_id.find(tok);
        return it == tok_to_id.end() ? unk_id : it->second;
    }
};

struct Corpus {
    std::vector<int> train, val, test;
    Vocab vocab;
};

// Tied input/output embedding: one U [D_h x C] used both as the embedding
// table (column lookup for the one-hot product U w_t) and, transposed, as
// the output projection U^T h_t. Gradients from both uses accumulate on
// the single tensor.
struct LmHead {
    Tensor u;

    LmHead() = default;
    LmHead(int hidden, int vocab) : u({hidden, vocab}) {}

    void init(Rng& rng, int hidden) {
        detail::init_uniform(u, rng, hidden);
    }
};

inline Value lm_embed(Tape& tape, Value u, int token, int vocab_size) {
    if (token < 0 || token >= vocab_size)
        throw ContractError("lm_embed: token id " + std::to_string(token) + " out of range");
    return tape.col(u, token);
}

inline Value lm_logits(Tape& tape, Value u, Value h) { return tape.matmul_ta(u, h); }

// exp of the mean per-token cross-entropy (natural log).
inline double perplexity(double total_cross_entropy, size_t tokens) {
    if (tokens < 1) throw ContractError("perplexity: needs at least one token");
    return std::exp(total_cross_entropy / static_cast<double>(tokens));
}

// Unigram baseline from training counts with add-one smoothing.
inline double unigram_perplexity(const std::vector<int>& train, const std::vector<int>& eval,
                                 int vocab_size) {
    std::vector<double> counts(vocab_size, 1.0);
    for (int t : train) counts[t] += 1.0;
    double total = static_cast<double>(train.size()) + vocab_size;
    double ce = 0.0;
    for (int t : eval) ce += -std::log(counts[t] / total);
    return perplexity(ce, eval.size());
}

// Deterministic synthetic character corpus with second-order Markov
// structure: each two-token context has three candidate successors drawn
// once from the seed, emitted with probabilities 0.7 / 0.2 / 0.1. Roughly
// 100k tokens over a 30-symbol vocabulary, split 80/10/10.
inline Corpus toy_corpus(uint64_t seed, size_t tokens = 100000) {
    constexpr int kVocab = 30;
    Corpus out;
    for (int i = 0; i < kVocab; ++i)
        out.vocab.add(std::string(1, static_cast<char>(i < 26 ? 'a' + i : '0' + i - 26)));
    out.vocab.unk_id = 0;

    Rng table_rng(derive_seed(seed, 1));
    std::vector<std::array<int, 3>> successors(kVocab * kVocab);
    for (auto& s : successors)
        for (int k = 0; k < 3; ++k) s[k] = static_cast<int>(table_rng.uniform_index(kVocab));

    Rng walk_rng(derive_seed(seed, 2));
    std::vector<int> stream;
    stream.reserve(tokens);
    int prev2 = 0, prev1 = 0;
    for (size_t i = 0; i < tokens; ++i) {
        const auto& cand = successors[prev2 * kVocab + prev1];
        double u = walk_rng.uniform01();
        int next = u < 0.7 ? cand[0] : (u < 0.9 ? cand[1] : cand[2]);
        stream.push_back(next);
        prev2 = prev1;
        prev1 = next;
    }

    size_t n_train = tokens * 8 / 10;
    size_t n_val = tokens / 10;
    out.train.assign(stream.begin(), stream.begin() + n_train);
    out.val.assign(stream.begin() + n_train, stream.begin() + n_train + n_val);
    out.test.assign(stream.begin() + n_train + n_val, stream.end());
    return out;
}

// Plain-text loader in the one-sentence-per-line convention: whitespace
// tokens, vocabulary from the train split, "<unk>" substitution, and an
// end-of-sentence token appended per line. Expects <dir>/ptb.{train,valid,
// test}.txt.
inline Corpus load_ptb(const std::string& dir) {
    Corpus out;
    const std::string eos = "</s>";
    const std::string unk = "<unk>";
    out.vocab.add(unk);
    out.vocab.add(eos);
    out.vocab.unk_id = 0;

    auto read = [&](const std::string& path, bool build_vocab) {
        std::ifstream is(path);
        if (!is) throw IoError("ptb: missing file '" + path + "'");
        std::vector<int> ids;
        std::string line;
        while (std::getline(is, line)) {
            std::istringstream ls(line);
            std::string tok;
            while (ls >> tok)
                ids.push_back(build_vocab ? out.vocab.add(tok) : out.vocab.lookup(tok));
            ids.push_back(out.vocab.lookup(eos));
        }
        return ids;
    };

    out.train = read(dir + "/ptb.train.txt", true);
    out.val = read(dir + "/ptb.valid.txt", false);
    out.test = read(dir + "/ptb.test.txt", false);
    return out;
}

}  // namespace eirehn
