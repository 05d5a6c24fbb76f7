#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "veritree/embeddings.hpp"
#include "veritree/thread_model.hpp"

namespace veritree {

/// One scored metadata element: either boolean (score iff present) or
/// bracketed counts with half-open [lo, hi) brackets covering [0, inf).
struct RubricItem {
    struct Bracket {
        std::uint64_t lo = 0;
        std::uint64_t hi = std::numeric_limits<std::uint64_t>::max();  // exclusive; max = open
        double score = 0.0;
    };

    std::string element;
    bool is_boolean = false;
    double boolean_score = 0.0;
    std::vector<Bracket> brackets;

    double max_score() const;
    double score_count(std::uint64_t value) const;
};

/// Score rubric for reviewers and comments. B1/B2 are the per-side maxima
/// (29 and 21 under the defaults).
struct CredibilityRubric {
    std::vector<RubricItem> reviewer_items;
    std::vector<RubricItem> comment_items;

    double reviewer_total() const;  // B1
    double comment_total() const;   // B2

    static CredibilityRubric defaults();
    static CredibilityRubric load_file(const std::string& path);

    /// Throws ConfigError unless brackets are disjoint, cover [0, inf),
    /// element names match the known metadata fields, and totals are > 0.
    void validate() const;
};

/// The three per-comment decision-condition values, each in [0, 1].
struct ConditionScores {
    double simi = 0.0;
    double r_cred = 0.0;
    double c_cred = 0.0;
};

/// A1/B1 over the reviewer rubric rows.
double reviewer_credibility(const ReviewerMeta& meta, const CredibilityRubric& rubric);

/// A2/B2 over the comment rubric rows.
double comment_credibility(const CommentMeta& meta, const CredibilityRubric& rubric);

/// Bag-of-words with term counts, for the soft-cosine mode.
struct BagOfWords {
    std::vector<std::string> terms;
    std::vector<double> counts;

    static BagOfWords from_tokens(const std::vector<std::string>& tokens);
};

/// Soft cosine over two bags of words with term similarity
/// s_ij = max(0, cosine(emb_i, emb_j)). Result in [0, 1]; 0 when either
/// side is empty or degenerate.
double soft_cosine(const BagOfWords& a, const BagOfWords& b, const EmbeddingTable& table);

/// Fallback mode: cosine of the average embeddings mapped to [0, 1] via
/// (cos + 1) / 2. Throws ShapeError on dimension mismatch.
double average_embedding_similarity(const std::vector<double>& claim_avg,
                                    const std::vector<double>& comment_avg);

struct SimilarityInput {
    std::vector<double> claim_avg;
    std::vector<double> comment_avg;
    const BagOfWords* claim_bag = nullptr;    // both bags + table present => soft cosine
    const BagOfWords* comment_bag = nullptr;
    const EmbeddingTable* table = nullptr;
};

/// Primary mode is true soft cosine when term data is supplied; otherwise
/// the rescaled-cosine fallback. Clamped to [0, 1]; both texts empty => 0.
double semantic_similarity(const SimilarityInput& input);

}  // namespace veritree
