#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "leakgan/common.hpp"
#include "leakgan/nn.hpp"

namespace leakgan {

using Sentence = std::vector<std::string>;
using TokenSequence = std::vector<TokenId>;

/// Bijective token <-> id map. Ids are dense; 0 and 1 are PAD and START.
class Vocabulary {
  public:
    static constexpr const char *kPadToken = "<pad>";
    static constexpr const char *kStartToken = "<start>";

    Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

    /// `real_tokens` must not contain the special tokens or duplicates.
    explicit Vocabulary(const std::vector<std::string> &real_tokens);

    /// Vocabulary of `size` ids whose real tokens are spelled as their id ("2", "3", ...).
    static Vocabulary synthetic(std::size_t size);

    std::size_t size() const { return tokens_.size(); }
    bool contains(const std::string &token) const { return index_.count(token) != 0; }
    TokenId id(const std::string &token) const;
    const std::string &token(TokenId id) const;
    const std::vector<std::string> &tokens() const { return tokens_; }

    /// One token per line; line number (0-based) is the id.
    void save(const std::filesystem::path &path) const;
    static Vocabulary load(const std::filesystem::path &path);

  private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, TokenId> index_;
};

struct VocabularyBuild {
    Vocabulary vocab;
    /// flagged[i] is true when sentence i contains a token below the frequency cut.
    std::vector<bool> flagged;
};

/// Keeps every token seen at least min_freq times, ordered by frequency
/// (descending) then lexicographically.
VocabularyBuild build_vocab(const std::vector<Sentence> &corpus, int min_freq);

/// Right-pads with PAD to length T. Throws naming the first unknown token.
TokenSequence encode(const Sentence &sentence, const Vocabulary &vocab, std::size_t T);

/// Tokens up to (excluding) the first PAD.
Sentence decode(std::span<const TokenId> ids, const Vocabulary &vocab);

Sentence tokenize(const std::string &line);

/// B x T token matrix, row-major.
class SequenceBatch {
  public:
    SequenceBatch() = default;
    SequenceBatch(std::size_t rows, std::size_t length, TokenId fill = kPad)
        : rows_(rows), length_(length), ids_(rows * length, fill) {}

    static SequenceBatch from_rows(const std::vector<TokenSequence> &rows);

    std::size_t rows() const { return rows_; }
    std::size_t length() const { return length_; }

    std::span<TokenId> operator[](std::size_t r) { return {ids_.data() + r * length_, length_}; }
    std::span<const TokenId> operator[](std::size_t r) const {
        return {ids_.data() + r * length_, length_};
    }
    TokenId &at(std::size_t r, std::size_t t) { return ids_[r * length_ + t]; }
    TokenId at(std::size_t r, std::size_t t) const { return ids_[r * length_ + t]; }

    /// Rows [begin, end).
    SequenceBatch slice(std::size_t begin, std::size_t end) const;
    /// Rows in the given order.
    SequenceBatch gather(std::span<const std::size_t> rows) const;

    /// Throws unless every id is < vocab_size.
    void validate(std::size_t vocab_size) const;

    bool operator==(const SequenceBatch &) const = default;

  private:
    std::size_t rows_ = 0;
    std::size_t length_ = 0;
    std::vector<TokenId> ids_;
};

/// Prefix for provenance lines written at the top of every text output.
inline constexpr const char *kProvenancePrefix = "# leakgan";

/// Reads whitespace-tokenized sentences, one per line; provenance lines are skipped.
std::vector<Sentence> read_sentences(const std::filesystem::path &path);

void write_sentences(const std::filesystem::path &path, const std::vector<Sentence> &sentences,
                     const std::string &provenance);

/// Decodes every row and writes it in corpus text format.
void write_batch(const std::filesystem::path &path, const SequenceBatch &batch,
                 const Vocabulary &vocab, const std::string &provenance);

/// Reads a corpus file and encodes it. Sentences longer than T are dropped.
SequenceBatch read_batch(const std::filesystem::path &path, const Vocabulary &vocab, std::size_t T);

// ---------------------------------------------------------------------------
// Synthetic oracle: a single-layer LSTM language model with N(0,1) weights.

struct OracleParams {
    Matrix embedding; // H x |V|
    LstmParams lstm;  // H -> H
    Matrix out_weight; // |V| x H
    Vector out_bias;  // |V|

    ParamList parameters();
};

/// Oracle NLL under both conventions: per-sequence sum averaged over
/// sequences (primary) and per-token mean.
struct NllEstimate {
    double per_sequence = 0.0;
    double per_token = 0.0;
    std::size_t sequences = 0;
    std::size_t tokens = 0;
};

class Oracle {
  public:
    Oracle(std::size_t vocab_size, std::size_t length, std::size_t hidden);

    /// All weights i.i.d. N(0,1) from a generator seeded with `seed`.
    static Oracle init(std::size_t vocab_size, std::size_t length, std::size_t hidden,
                       std::uint64_t seed);

    std::size_t vocab_size() const { return vocab_size_; }
    std::size_t length() const { return length_; }
    std::size_t hidden() const { return hidden_; }

    /// n sequences of exactly T real tokens; row r uses its own stream derived from (seed, r).
    SequenceBatch sample(std::size_t n, std::uint64_t seed) const;

    /// B x T matrix of log p(x_t | x_<t); PAD targets contribute 0.
    Matrix log_probs(const SequenceBatch &batch) const;

    NllEstimate nll(const SequenceBatch &batch) const;

    OracleParams &params() { return params_; }
    const OracleParams &params() const { return params_; }
    ParamList parameters() { return params_.parameters(); }

  private:
    std::size_t vocab_size_;
    std::size_t length_;
    std::size_t hidden_;
    OracleParams params_;
};

} // namespace leakgan
