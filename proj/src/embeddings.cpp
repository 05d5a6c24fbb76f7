#include "veritree/embeddings.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "veritree/errors.hpp"
#include "veritree/rng.hpp"

namespace veritree {

namespace {

// Word characters: ASCII alphanumerics, '_', and any byte >= 0x80 so that
// multi-byte UTF-8 sequences stay in one token. Locale-independent on
// purpose; tokenization must not drift with the process environment.
bool is_word_byte(unsigned char c) {
    return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
           c == '_' || c >= 0x80;
}

bool is_space_byte(unsigned char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
}

}  // namespace

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> tokens;
    const std::size_t n = text.size();
    std::size_t i = 0;
    while (i < n) {
        const unsigned char c = static_cast<unsigned char>(text[i]);
        if (is_space_byte(c)) {
            ++i;
            continue;
        }
        std::string token;
        if ((c == '#' || c == '@') && i + 1 < n &&
            is_word_byte(static_cast<unsigned char>(text[i + 1]))) {
            token.push_back(static_cast<char>(c));
            ++i;
        }
        if (i < n && is_word_byte(static_cast<unsigned char>(text[i]))) {
            while (i < n && is_word_byte(static_cast<unsigned char>(text[i]))) {
                const unsigned char b = static_cast<unsigned char>(text[i]);
                token.push_back(static_cast<char>(b >= 'A' && b <= 'Z' ? b + 32 : b));
                ++i;
            }
        } else if (token.empty()) {
            // Lone punctuation becomes a single-char token.
            token.push_back(text[i]);
            ++i;
        }
        tokens.push_back(std::move(token));
    }
    return tokens;
}

std::size_t TokenSequence::real_count() const {
    std::size_t n = 0;
    for (auto m : mask) n += (m != 0);
    return n;
}

TokenSequence sequence_of(std::vector<std::string> tokens) {
    TokenSequence seq;
    seq.mask.assign(tokens.size(), 1);
    seq.tokens = std::move(tokens);
    return seq;
}

TokenSequence pad_sequence(const TokenSequence& seq, std::size_t max_length) {
    if (max_length == 0) throw ConfigError("max sequence length must be positive");
    TokenSequence out;
    out.tokens.reserve(max_length);
    out.mask.reserve(max_length);
    for (std::size_t i = 0; i < max_length; ++i) {
        if (i < seq.tokens.size() && seq.mask[i]) {
            out.tokens.push_back(seq.tokens[i]);
            out.mask.push_back(1);
        } else {
            out.tokens.emplace_back();
            out.mask.push_back(0);
        }
    }
    return out;
}

EmbeddingTable::EmbeddingTable(std::size_t dimension, FallbackMode mode, std::uint64_t hash_seed)
    : dimension_(dimension), mode_(mode), hash_seed_(hash_seed) {
    if (dimension_ == 0) throw ConfigError("embedding dimension must be positive");
}

EmbeddingTable EmbeddingTable::load_file(const std::string& path, FallbackMode mode,
                                         std::uint64_t hash_seed) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open embedding file '" + path + "'");
    std::string header;
    if (!std::getline(in, header))
        throw ParseError(path + ": empty embedding file (expected 'd=<int>' header)");
    if (!header.empty() && header.back() == '\r') header.pop_back();
    if (header.rfind("d=", 0) != 0)
        throw ParseError(path + ":1: expected 'd=<int>' header, got '" + header + "'");
    std::size_t dim = 0;
    try {
        dim = static_cast<std::size_t>(std::stoul(header.substr(2)));
    } catch (const std::exception&) {
        throw ParseError(path + ":1: invalid dimension in header '" + header + "'");
    }
    EmbeddingTable table(dim, mode, hash_seed);

    std::string line;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::istringstream ls(line);
        std::string token;
        ls >> token;
        std::vector<double> vec;
        vec.reserve(dim);
        double v;
        while (ls >> v) vec.push_back(v);
        if (vec.size() != dim)
            throw ParseError(path + ":" + std::to_string(lineno) + ": expected " +
                             std::to_string(dim) + " values for token '" + token + "', got " +
                             std::to_string(vec.size()));
        table.insert(token, std::move(vec));
    }
    return table;
}

void EmbeddingTable::insert(const std::string& token, std::vector<double> vec) {
    if (vec.size() != dimension_)
        throw ConfigError("embedding for '" + token + "' has length " +
                          std::to_string(vec.size()) + ", table dimension is " +
                          std::to_string(dimension_));
    vocabulary_[token] = std::move(vec);
}

std::vector<double> EmbeddingTable::vector_for(const std::string& token) const {
    auto it = vocabulary_.find(token);
    if (it != vocabulary_.end()) return it->second;
    if (mode_ == FallbackMode::zero) return std::vector<double>(dimension_, 0.0);

    // Hashed fallback: a unit vector drawn from (token, d, seed) only.
    Rng rng(derive_seed(hash_seed_, fnv1a64(token) ^ dimension_));
    std::vector<double> vec(dimension_);
    double norm_sq = 0.0;
    for (auto& x : vec) {
        x = rng.next_normal();
        norm_sq += x * x;
    }
    if (norm_sq < 1e-30) {
        vec.assign(dimension_, 0.0);
        vec[0] = 1.0;
        return vec;
    }
    const double inv = 1.0 / std::sqrt(norm_sq);
    for (auto& x : vec) x *= inv;
    return vec;
}

EmbeddedSequence embed(const TokenSequence& seq, const EmbeddingTable& table) {
    EmbeddedSequence out;
    out.length = seq.length();
    out.dim = table.dimension();
    out.mask = seq.mask;
    out.values.assign(out.length * out.dim, 0.0);
    for (std::size_t i = 0; i < out.length; ++i) {
        if (!seq.mask[i]) continue;
        const std::vector<double> v = table.vector_for(seq.tokens[i]);
        std::copy(v.begin(), v.end(), out.values.begin() + static_cast<std::ptrdiff_t>(i * out.dim));
    }
    return out;
}

std::vector<double> average_embedding(const TokenSequence& seq, const EmbeddingTable& table) {
    std::vector<double> acc(table.dimension(), 0.0);
    std::size_t count = 0;
    for (std::size_t i = 0; i < seq.length(); ++i) {
        if (!seq.mask[i]) continue;
        const std::vector<double> v = table.vector_for(seq.tokens[i]);
        for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += v[j];
        ++count;
    }
    if (count == 0) return acc;
    for (auto& x : acc) x /= static_cast<double>(count);
    return acc;
}

}  // namespace veritree
