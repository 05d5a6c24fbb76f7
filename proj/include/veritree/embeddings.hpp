#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace veritree {

/// Deterministic tokenizer: ASCII-lowercased, whitespace-split, punctuation
/// separated into single-char tokens. '#' and '@' stay attached when they
/// prefix a word ("#shooting"), matching how hashtags/mentions are written.
/// Bytes >= 0x80 are treated as word characters so UTF-8 stays intact.
std::vector<std::string> tokenize(const std::string& text);

/// A token sequence padded/truncated to a fixed length, with a parallel
/// mask marking real (1) vs pad (0) positions.
struct TokenSequence {
    std::vector<std::string> tokens;
    std::vector<std::uint8_t> mask;

    std::size_t length() const { return tokens.size(); }
    std::size_t real_count() const;
};

/// Unpadded sequence (mask all ones).
TokenSequence sequence_of(std::vector<std::string> tokens);

/// Truncate/pad to exactly `max_length` positions; pads carry empty tokens.
TokenSequence pad_sequence(const TokenSequence& seq, std::size_t max_length);

enum class FallbackMode { zero, hashed };

/// Token -> d-dimensional vector store. Unknown tokens fall back to either
/// the zero vector or a unit-norm vector drawn deterministically from
/// (token, d, seed), so hashed embeddings reproduce across processes.
class EmbeddingTable {
public:
    EmbeddingTable(std::size_t dimension, FallbackMode mode, std::uint64_t hash_seed);

    /// Embedding file: header line `d=<int>`, then `token v1 ... vd` lines.
    static EmbeddingTable load_file(const std::string& path, FallbackMode mode,
                                    std::uint64_t hash_seed);

    std::size_t dimension() const { return dimension_; }
    FallbackMode fallback_mode() const { return mode_; }
    std::uint64_t hash_seed() const { return hash_seed_; }
    std::size_t vocabulary_size() const { return vocabulary_.size(); }
    bool contains(const std::string& token) const { return vocabulary_.count(token) > 0; }

    void insert(const std::string& token, std::vector<double> vec);

    /// Stored vector, or the fallback vector for unknown tokens.
    std::vector<double> vector_for(const std::string& token) const;

private:
    std::size_t dimension_;
    FallbackMode mode_;
    std::uint64_t hash_seed_;
    std::unordered_map<std::string, std::vector<double>> vocabulary_;
};

/// Row-major l×d embedding matrix with its position mask.
struct EmbeddedSequence {
    std::size_t length = 0;
    std::size_t dim = 0;
    std::vector<double> values;      // length * dim, pad rows all-zero
    std::vector<std::uint8_t> mask;  // length entries
};

/// Embed a padded sequence; row i is the table vector for token i, pad rows
/// are all-zero with mask 0.
EmbeddedSequence embed(const TokenSequence& seq, const EmbeddingTable& table);

/// Mean embedding over non-pad positions; zero vector when the sequence is
/// empty.
std::vector<double> average_embedding(const TokenSequence& seq, const EmbeddingTable& table);

}  // namespace veritree
