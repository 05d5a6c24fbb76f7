#include "veritree/credibility.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_map>

#include "json.hpp"
#include "veritree/errors.hpp"

namespace veritree {

using nlohmann::json;

double RubricItem::max_score() const {
    if (is_boolean) return boolean_score;
    double best = 0.0;
    for (const auto& b : brackets) best = std::max(best, b.score);
    return best;
}

double RubricItem::score_count(std::uint64_t value) const {
    for (const auto& b : brackets)
        if (value >= b.lo && value < b.hi) return b.score;
    throw ConfigError("rubric element '" + element + "' has no bracket covering " +
                      std::to_string(value));
}

double CredibilityRubric::reviewer_total() const {
    double t = 0.0;
    for (const auto& item : reviewer_items) t += item.max_score();
    return t;
}

double CredibilityRubric::comment_total() const {
    double t = 0.0;
    for (const auto& item : comment_items) t += item.max_score();
    return t;
}

namespace {

constexpr std::uint64_t kOpen = std::numeric_limits<std::uint64_t>::max();

RubricItem boolean_item(std::string element, double score) {
    RubricItem item;
    item.element = std::move(element);
    item.is_boolean = true;
    item.boolean_score = score;
    return item;
}

RubricItem count_item(std::string element, std::vector<RubricItem::Bracket> brackets) {
    RubricItem item;
    item.element = std::move(element);
    item.brackets = std::move(brackets);
    return item;
}

const std::vector<std::string>& reviewer_elements() {
    static const std::vector<std::string> names = {
        "verified", "geo", "screen_name", "profile_image", "followers", "friends", "favourites"};
    return names;
}

const std::vector<std::string>& comment_elements() {
    static const std::vector<std::string> names = {"geo", "source", "favorited", "favorite_count",
                                                   "content_length"};
    return names;
}

}  // namespace

CredibilityRubric CredibilityRubric::defaults() {
    CredibilityRubric r;
    r.reviewer_items = {
        boolean_item("verified", 3),
        boolean_item("geo", 3),
        boolean_item("screen_name", 1),
        boolean_item("profile_image", 2),
        count_item("followers", {{0, 100, 2}, {100, 500, 5}, {500, kOpen, 10}}),
        count_item("friends", {{0, 100, 1}, {100, 200, 2}, {200, kOpen, 5}}),
        count_item("favourites", {{0, 100, 2}, {100, 200, 3}, {200, kOpen, 5}}),
    };
    r.comment_items = {
        boolean_item("geo", 3),
        boolean_item("source", 3),
        boolean_item("favorited", 1),
        count_item("favorite_count", {{0, 100, 5}, {100, kOpen, 7}}),
        count_item("content_length", {{0, 10, 3}, {10, kOpen, 7}}),
    };
    return r;
}

void CredibilityRubric::validate() const {
    auto check_side = [](const std::vector<RubricItem>& items,
                         const std::vector<std::string>& known, const char* side) {
        for (const auto& item : items) {
            if (std::find(known.begin(), known.end(), item.element) == known.end())
                throw ConfigError(std::string(side) + " rubric references unknown element '" +
                                  item.element + "'");
            if (item.is_boolean) {
                if (!item.brackets.empty())
                    throw ConfigError("boolean element '" + item.element +
                                      "' must not carry brackets");
                continue;
            }
            if (item.brackets.empty())
                throw ConfigError("count element '" + item.element + "' needs brackets");
            // Brackets must be sorted, disjoint, and cover [0, inf).
            std::uint64_t expected_lo = 0;
            for (std::size_t i = 0; i < item.brackets.size(); ++i) {
                const auto& b = item.brackets[i];
                if (b.lo != expected_lo || b.hi <= b.lo)
                    throw ConfigError("element '" + item.element +
                                      "': brackets must be disjoint and cover [0, inf)");
                expected_lo = b.hi;
            }
            if (item.brackets.back().hi != kOpen)
                throw ConfigError("element '" + item.element + "': last bracket must be open");
        }
    };
    check_side(reviewer_items, reviewer_elements(), "reviewer");
    check_side(comment_items, comment_elements(), "comment");
    if (reviewer_total() <= 0 || comment_total() <= 0)
        throw ConfigError("rubric totals must be positive");
}

namespace {

RubricItem item_from_json(const json& j) {
    RubricItem item;
    item.element = j.at("element").get<std::string>();
    if (j.contains("score")) {
        item.is_boolean = true;
        item.boolean_score = j.at("score").get<double>();
        return item;
    }
    if (!j.contains("brackets")) throw ParseError("rubric item needs 'score' or 'brackets'");
    for (const json& b : j.at("brackets")) {
        RubricItem::Bracket br;
        br.lo = b.at(0).get<std::uint64_t>();
        br.hi = b.at(1).is_null() ? kOpen : b.at(1).get<std::uint64_t>();
        br.score = b.at(2).get<double>();
        item.brackets.push_back(br);
    }
    return item;
}

}  // namespace

CredibilityRubric CredibilityRubric::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open rubric file '" + path + "'");
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError(path + ": " + e.what());
    }
    CredibilityRubric r;
    try {
        for (const json& j : doc.at("reviewer")) r.reviewer_items.push_back(item_from_json(j));
        for (const json& j : doc.at("comment")) r.comment_items.push_back(item_from_json(j));
    } catch (const json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
    r.validate();
    return r;
}

double reviewer_credibility(const ReviewerMeta& meta, const CredibilityRubric& rubric) {
    double a1 = 0.0;
    for (const auto& item : rubric.reviewer_items) {
        if (item.is_boolean) {
            const bool present = item.element == "verified"        ? meta.verified
                                 : item.element == "geo"           ? meta.geo_present
                                 : item.element == "screen_name"   ? meta.screen_name_present
                                 : item.element == "profile_image" ? meta.profile_image_present
                                                                   : false;
            if (present) a1 += item.boolean_score;
        } else {
            const std::uint64_t value = item.element == "followers" ? meta.followers
                                        : item.element == "friends" ? meta.friends
                                                                    : meta.favourites;
            a1 += item.score_count(value);
        }
    }
    return a1 / rubric.reviewer_total();
}

double comment_credibility(const CommentMeta& meta, const CredibilityRubric& rubric) {
    double a2 = 0.0;
    for (const auto& item : rubric.comment_items) {
        if (item.is_boolean) {
            const bool present = item.element == "geo"        ? meta.geo_present
                                 : item.element == "source"   ? meta.source_present
                                 : item.element == "favorited" ? meta.favorited
                                                               : false;
            if (present) a2 += item.boolean_score;
        } else {
            const std::uint64_t value =
                item.element == "favorite_count" ? meta.favorite_count : meta.content_length;
            a2 += item.score_count(value);
        }
    }
    return a2 / rubric.comment_total();
}

BagOfWords BagOfWords::from_tokens(const std::vector<std::string>& tokens) {
    BagOfWords bag;
    std::unordered_map<std::string, std::size_t> index;
    for (const auto& t : tokens) {
        auto [it, inserted] = index.emplace(t, bag.terms.size());
        if (inserted) {
            bag.terms.push_back(t);
            bag.counts.push_back(1.0);
        } else {
            bag.counts[it->second] += 1.0;
        }
    }
    return bag;
}

namespace {

double clamp01(double x) { return std::min(1.0, std::max(0.0, x)); }

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na < 1e-30 || nb < 1e-30) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace

double soft_cosine(const BagOfWords& a, const BagOfWords& b, const EmbeddingTable& table) {
    if (a.terms.empty() || b.terms.empty()) return 0.0;

    // Union vocabulary; term-similarity matrix entries are computed lazily
    // from the two sides' embedding vectors.
    std::vector<std::vector<double>> ea(a.terms.size()), eb(b.terms.size());
    for (std::size_t i = 0; i < a.terms.size(); ++i) ea[i] = table.vector_for(a.terms[i]);
    for (std::size_t j = 0; j < b.terms.size(); ++j) eb[j] = table.vector_for(b.terms[j]);

    auto sim = [&](const std::vector<double>& u, const std::vector<double>& v) {
        return std::max(0.0, cosine(u, v));
    };

    double num = 0.0;
    for (std::size_t i = 0; i < a.terms.size(); ++i)
        for (std::size_t j = 0; j < b.terms.size(); ++j)
            num += sim(ea[i], eb[j]) * a.counts[i] * b.counts[j];

    double den_a = 0.0;
    for (std::size_t i = 0; i < a.terms.size(); ++i)
        for (std::size_t j = 0; j < a.terms.size(); ++j)
            den_a += sim(ea[i], ea[j]) * a.counts[i] * a.counts[j];

    double den_b = 0.0;
    for (std::size_t i = 0; i < b.terms.size(); ++i)
        for (std::size_t j = 0; j < b.terms.size(); ++j)
            den_b += sim(eb[i], eb[j]) * b.counts[i] * b.counts[j];

    if (den_a < 1e-30 || den_b < 1e-30) return 0.0;
    return clamp01(num / (std::sqrt(den_a) * std::sqrt(den_b)));
}

double average_embedding_similarity(const std::vector<double>& claim_avg,
                                    const std::vector<double>& comment_avg) {
    if (claim_avg.size() != comment_avg.size())
        throw ShapeError("semantic_similarity: dimension mismatch (" +
                         std::to_string(claim_avg.size()) + " vs " +
                         std::to_string(comment_avg.size()) + ")");
    bool claim_zero = true, comment_zero = true;
    for (double x : claim_avg)
        if (x != 0.0) { claim_zero = false; break; }
    for (double x : comment_avg)
        if (x != 0.0) { comment_zero = false; break; }
    if (claim_zero || comment_zero) return 0.0;  // no text on a side => no similarity
    return clamp01((cosine(claim_avg, comment_avg) + 1.0) / 2.0);
}

double semantic_similarity(const SimilarityInput& input) {
    if (input.claim_bag && input.comment_bag && input.table) {
        if (input.claim_bag->terms.empty() && input.comment_bag->terms.empty()) return 0.0;
        return soft_cosine(*input.claim_bag, *input.comment_bag, *input.table);
    }
    return average_embedding_similarity(input.claim_avg, input.comment_avg);
}

}  // namespace veritree
