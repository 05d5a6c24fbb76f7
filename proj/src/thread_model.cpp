#include "veritree/thread_model.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"
#include "veritree/embeddings.hpp"
#include "veritree/errors.hpp"
#include "veritree/rng.hpp"

namespace veritree {

using nlohmann::json;

std::string label_name(Label l) {
    switch (l) {
        case Label::truthful: return "true";
        case Label::fake: return "false";
        case Label::unverified: return "unverified";
    }
    throw ValidationError("unknown label value");
}

Label label_from_name(const std::string& name) {
    if (name == "true") return Label::truthful;
    if (name == "false") return Label::fake;
    if (name == "unverified") return Label::unverified;
    throw ParseError("unknown label '" + name + "' (expected true/false/unverified)");
}

std::string split_name(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::validation: return "validation";
        case Split::test: return "test";
    }
    throw ValidationError("unknown split value");
}

Split split_from_name(const std::string& name) {
    if (name == "train") return Split::train;
    if (name == "validation") return Split::validation;
    if (name == "test") return Split::test;
    throw ParseError("unknown split '" + name + "' (expected train/validation/test)");
}

std::size_t ConversationThread::comment_count() const {
    std::size_t n = 0;
    for_each_comment([&](const CommentNode&) { ++n; });
    return n;
}

std::vector<const ConversationThread*> Corpus::threads_in(Split s) const {
    std::vector<const ConversationThread*> out;
    for (const auto& t : threads) {
        auto it = split_assignment.find(t.claim_id);
        if (it != split_assignment.end() && it->second == s) out.push_back(&t);
    }
    return out;
}

namespace {

std::uint64_t read_count(const json& obj, const char* key, const std::string& where) {
    if (!obj.contains(key)) return 0;
    const json& v = obj.at(key);
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer()) {
        const long long x = v.get<long long>();
        if (x < 0) throw ValidationError(where + ": '" + key + "' must be non-negative");
        return static_cast<std::uint64_t>(x);
    }
    throw ParseError(where + ": '" + key + "' must be an integer");
}

bool read_flag(const json& obj, const char* key) {
    if (!obj.contains(key)) return false;
    const json& v = obj.at(key);
    if (!v.is_boolean()) throw ParseError(std::string("'") + key + "' must be a boolean");
    return v.get<bool>();
}

ReviewerMeta parse_user(const json& obj, const std::string& where) {
    ReviewerMeta m;
    if (!obj.contains("user")) return m;
    const json& u = obj.at("user");
    if (!u.is_object()) throw ParseError(where + ": 'user' must be an object");
    m.verified = read_flag(u, "verified");
    m.geo_present = read_flag(u, "geo");
    m.screen_name_present = read_flag(u, "screen_name");
    m.profile_image_present = read_flag(u, "profile_image");
    m.followers = read_count(u, "followers_count", where);
    m.friends = read_count(u, "friends_count", where);
    m.favourites = read_count(u, "favourites_count", where);
    return m;
}

CommentMeta parse_comment_meta(const json& obj, const std::string& text, const std::string& where) {
    CommentMeta m;
    if (obj.contains("meta")) {
        const json& mm = obj.at("meta");
        if (!mm.is_object()) throw ParseError(where + ": 'meta' must be an object");
        m.geo_present = read_flag(mm, "geo");
        m.source_present = read_flag(mm, "source");
        m.favorited = read_flag(mm, "favorited");
        m.favorite_count = read_count(mm, "favorite_count", where);
    }
    m.content_length = tokenize(text).size();
    return m;
}

std::string require_string(const json& obj, const char* key, const std::string& where) {
    if (!obj.contains(key)) throw ParseError(where + ": missing required field '" + key + "'");
    const json& v = obj.at(key);
    if (!v.is_string()) throw ParseError(where + ": '" + key + "' must be a string");
    return v.get<std::string>();
}

struct FlatComment {
    CommentNode node;  // children left empty here
    std::string parent_id;
};

json user_to_json(const ReviewerMeta& m) {
    return json{{"verified", m.verified},
                {"geo", m.geo_present},
                {"screen_name", m.screen_name_present},
                {"profile_image", m.profile_image_present},
                {"followers_count", m.followers},
                {"friends_count", m.friends},
                {"favourites_count", m.favourites}};
}

}  // namespace

ParsedThread parse_thread(const std::string& raw) {
    json doc;
    try {
        doc = json::parse(raw);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("malformed thread document: ") + e.what());
    }
    if (!doc.is_object() || !doc.contains("claim"))
        throw ParseError("thread document must be an object with a 'claim' field");
    const json& claim = doc.at("claim");
    if (!claim.is_object()) throw ParseError("'claim' must be an object");

    ParsedThread out;
    ConversationThread& thread = out.thread;
    thread.claim_id = require_string(claim, "id", "claim");
    thread.claim_text = require_string(claim, "text", "claim");
    if (thread.claim_text.empty()) throw ValidationError("claim text must be non-empty");
    thread.label = label_from_name(require_string(claim, "label", "claim"));
    thread.claim_reviewer = parse_user(claim, "claim");

    std::vector<FlatComment> flat;
    if (doc.contains("comments")) {
        const json& comments = doc.at("comments");
        if (!comments.is_array()) throw ParseError("'comments' must be an array");
        flat.reserve(comments.size());
        std::size_t idx = 0;
        for (const json& c : comments) {
            const std::string where = "comments[" + std::to_string(idx++) + "]";
            if (!c.is_object()) throw ParseError(where + ": comment must be an object");
            FlatComment fc;
            fc.node.id = require_string(c, "id", where);
            fc.parent_id =
                c.contains("parent_id") ? require_string(c, "parent_id", where) : thread.claim_id;
            fc.node.parent_id = fc.parent_id;
            fc.node.text = c.contains("text") ? require_string(c, "text", where) : std::string{};
            fc.node.reviewer = parse_user(c, where);
            fc.node.meta = parse_comment_meta(c, fc.node.text, where);
            flat.push_back(std::move(fc));
        }
    }

    std::unordered_map<std::string, std::size_t> index;
    index.reserve(flat.size());
    for (std::size_t i = 0; i < flat.size(); ++i) {
        const std::string& id = flat[i].node.id;
        if (id == thread.claim_id)
            throw ValidationError("comment id '" + id + "' duplicates the claim id");
        if (!index.emplace(id, i).second)
            throw ValidationError("duplicate comment id '" + id + "'");
    }

    // Forest assembly over indices; orphans are re-rooted under the claim.
    std::vector<std::vector<std::size_t>> children(flat.size());
    std::vector<std::size_t> roots;
    for (std::size_t i = 0; i < flat.size(); ++i) {
        const std::string& pid = flat[i].parent_id;
        if (pid == thread.claim_id) {
            roots.push_back(i);
            continue;
        }
        auto it = index.find(pid);
        if (it == index.end()) {
            out.warnings.push_back("comment '" + flat[i].node.id + "' references missing parent '" +
                                   pid + "'; re-rooted under the claim");
            flat[i].node.parent_id = thread.claim_id;
            roots.push_back(i);
        } else {
            children[it->second].push_back(i);
        }
    }

    std::vector<char> reachable(flat.size(), 0);
    std::vector<std::size_t> stack(roots);
    std::size_t seen = 0;
    while (!stack.empty()) {
        const std::size_t i = stack.back();
        stack.pop_back();
        if (reachable[i]) continue;
        reachable[i] = 1;
        ++seen;
        for (std::size_t c : children[i]) stack.push_back(c);
    }
    if (seen != flat.size()) {
        for (std::size_t i = 0; i < flat.size(); ++i)
            if (!reachable[i])
                throw ValidationError("comment '" + flat[i].node.id +
                                      "' is part of a parent cycle");
    }

    // Materialize nested nodes, preserving input order of siblings.
    auto build = [&](auto&& self, std::size_t i) -> CommentNode {
        CommentNode n = std::move(flat[i].node);
        n.children.reserve(children[i].size());
        for (std::size_t c : children[i]) n.children.push_back(self(self, c));
        return n;
    };
    thread.roots.reserve(roots.size());
    for (std::size_t r : roots) thread.roots.push_back(build(build, r));
    return out;
}

std::string serialize_thread(const ConversationThread& thread) {
    json doc;
    doc["claim"] = json{{"id", thread.claim_id},
                        {"text", thread.claim_text},
                        {"label", label_name(thread.label)},
                        {"user", user_to_json(thread.claim_reviewer)}};
    json comments = json::array();
    thread.for_each_comment([&](const CommentNode& n) {
        comments.push_back(json{{"id", n.id},
                                {"parent_id", n.parent_id},
                                {"text", n.text},
                                {"user", user_to_json(n.reviewer)},
                                {"meta", json{{"geo", n.meta.geo_present},
                                              {"source", n.meta.source_present},
                                              {"favorited", n.meta.favorited},
                                              {"favorite_count", n.meta.favorite_count}}}});
    });
    doc["comments"] = std::move(comments);
    return doc.dump();
}

Corpus filter_and_split(std::vector<ConversationThread> threads, const SplitRatios& ratios,
                        std::uint64_t seed) {
    const double total = ratios.train + ratios.validation + ratios.test;
    if (std::abs(total - 1.0) > 1e-9)
        throw ConfigError("split ratios must sum to 1 (got " + std::to_string(total) + ")");
    if (ratios.train < 0 || ratios.validation < 0 || ratios.test < 0)
        throw ConfigError("split ratios must be non-negative");

    Corpus corpus;
    for (auto& t : threads)
        if (t.label != Label::unverified) corpus.threads.push_back(std::move(t));

    const std::size_t n = corpus.threads.size();
    if (n < 3)
        throw DataError("need at least 3 verified threads to populate all splits (got " +
                        std::to_string(n) + ")");

    const double fractions[3] = {ratios.train, ratios.validation, ratios.test};
    std::size_t counts[3];
    double remainders[3];
    std::size_t assigned = 0;
    for (int i = 0; i < 3; ++i) {
        const double exact = fractions[i] * static_cast<double>(n);
        counts[i] = static_cast<std::size_t>(exact);
        remainders[i] = exact - static_cast<double>(counts[i]);
        assigned += counts[i];
    }
    // Largest remainder; ties (within fp noise of the ratio products) resolve
    // in split order (train, validation, test).
    while (assigned < n) {
        int best = 0;
        for (int i = 1; i < 3; ++i)
            if (remainders[i] > remainders[best] + 1e-9) best = i;
        ++counts[best];
        remainders[best] = -1.0;
        ++assigned;
    }
    // Every split with positive ratio gets at least one thread.
    for (int i = 0; i < 3; ++i) {
        if (fractions[i] > 0 && counts[i] == 0) {
            int largest = 0;
            for (int j = 1; j < 3; ++j)
                if (counts[j] > counts[largest]) largest = j;
            --counts[largest];
            ++counts[i];
        }
    }

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(seed);
    rng.shuffle(order);

    const Split split_of[3] = {Split::train, Split::validation, Split::test};
    std::size_t cursor = 0;
    for (int s = 0; s < 3; ++s)
        for (std::size_t k = 0; k < counts[s]; ++k)
            corpus.split_assignment[corpus.threads[order[cursor++]].claim_id] = split_of[s];
    return corpus;
}

std::vector<ParsedThread> load_corpus_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open corpus file '" + path + "'");
    std::vector<ParsedThread> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(parse_thread(line));
        } catch (const std::runtime_error& e) {
            throw ParseError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

void save_corpus_file(const std::string& path, const std::vector<ConversationThread>& threads) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write corpus file '" + path + "'");
    for (const auto& t : threads) out << serialize_thread(t) << '\n';
}

std::map<std::string, Split> load_split_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open split file '" + path + "'");
    std::map<std::string, Split> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw ParseError(path + ":" + std::to_string(lineno) +
                             ": expected 'thread_id<TAB>split'");
        out[line.substr(0, tab)] = split_from_name(line.substr(tab + 1));
    }
    return out;
}

void save_split_file(const std::string& path, const std::map<std::string, Split>& assignment) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write split file '" + path + "'");
    for (const auto& [id, split] : assignment) out << id << '\t' << split_name(split) << '\n';
}

namespace {

namespace fs = std::filesystem;

json load_json_file(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw DataError("cannot open '" + p.string() + "'");
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError(p.string() + ": " + e.what());
    }
}

bool nonempty_string(const json& obj, const char* key) {
    return obj.contains(key) && obj.at(key).is_string() && !obj.at(key).get<std::string>().empty();
}

json twitter_user_to_canonical(const json& tweet) {
    json u = json::object();
    if (tweet.contains("user") && tweet.at("user").is_object()) {
        const json& tu = tweet.at("user");
        u["verified"] = tu.value("verified", false);
        u["geo"] = tu.value("geo_enabled", false);
        u["screen_name"] = nonempty_string(tu, "screen_name");
        u["profile_image"] = nonempty_string(tu, "profile_image_url");
        u["followers_count"] = std::max<long long>(0, tu.value("followers_count", 0LL));
        u["friends_count"] = std::max<long long>(0, tu.value("friends_count", 0LL));
        u["favourites_count"] = std::max<long long>(0, tu.value("favourites_count", 0LL));
    }
    return u;
}

std::string tweet_id(const json& tweet) {
    if (nonempty_string(tweet, "id_str")) return tweet.at("id_str").get<std::string>();
    if (tweet.contains("id") && tweet.at("id").is_number())
        return std::to_string(tweet.at("id").get<long long>());
    throw ParseError("tweet without id/id_str");
}

std::string tweet_text(const json& tweet) {
    if (nonempty_string(tweet, "text")) return tweet.at("text").get<std::string>();
    if (nonempty_string(tweet, "full_text")) return tweet.at("full_text").get<std::string>();
    return "";
}

// PHEME annotation conventions: an explicit veracity string wins; otherwise
// the "true"/"misinformation" flag pair (strings or numbers) decides.
std::string annotation_label(const json& ann) {
    if (nonempty_string(ann, "veracity")) return ann.at("veracity").get<std::string>();
    auto flag = [&](const char* key) {
        if (!ann.contains(key)) return false;
        const json& v = ann.at(key);
        if (v.is_number()) return v.get<long long>() == 1;
        if (v.is_string()) return v.get<std::string>() == "1";
        if (v.is_boolean()) return v.get<bool>();
        return false;
    };
    if (flag("true")) return "true";
    if (flag("misinformation")) return "false";
    return "unverified";
}

}  // namespace

std::vector<ParsedThread> ingest_pheme_directory(const std::string& root) {
    const fs::path base(root);
    if (!fs::is_directory(base)) throw DataError("'" + root + "' is not a directory");

    std::vector<fs::path> thread_dirs;
    for (auto it = fs::recursive_directory_iterator(base); it != fs::recursive_directory_iterator();
         ++it) {
        if (it->is_directory() && fs::is_directory(it->path() / "source-tweets"))
            thread_dirs.push_back(it->path());
    }
    std::sort(thread_dirs.begin(), thread_dirs.end());

    std::vector<ParsedThread> out;
    for (const fs::path& dir : thread_dirs) {
        std::vector<fs::path> sources;
        for (const auto& f : fs::directory_iterator(dir / "source-tweets"))
            if (f.path().extension() == ".json") sources.push_back(f.path());
        if (sources.empty()) continue;
        std::sort(sources.begin(), sources.end());
        const json source = load_json_file(sources.front());

        json doc;
        doc["claim"] = json{{"id", tweet_id(source)},
                            {"text", tweet_text(source)},
                            {"label", "unverified"},
                            {"user", twitter_user_to_canonical(source)}};
        if (fs::exists(dir / "annotation.json"))
            doc["claim"]["label"] = annotation_label(load_json_file(dir / "annotation.json"));

        json comments = json::array();
        if (fs::is_directory(dir / "reactions")) {
            std::vector<fs::path> reaction_files;
            for (const auto& f : fs::directory_iterator(dir / "reactions"))
                if (f.path().extension() == ".json") reaction_files.push_back(f.path());
            std::sort(reaction_files.begin(), reaction_files.end());
            for (const fs::path& rf : reaction_files) {
                const json tweet = load_json_file(rf);
                json c;
                c["id"] = tweet_id(tweet);
                if (nonempty_string(tweet, "in_reply_to_status_id_str"))
                    c["parent_id"] = tweet.at("in_reply_to_status_id_str").get<std::string>();
                else if (tweet.contains("in_reply_to_status_id") &&
                         tweet.at("in_reply_to_status_id").is_number())
                    c["parent_id"] =
                        std::to_string(tweet.at("in_reply_to_status_id").get<long long>());
                else
                    c["parent_id"] = doc["claim"]["id"];
                c["text"] = tweet_text(tweet);
                c["user"] = twitter_user_to_canonical(tweet);
                c["meta"] = json{{"geo", tweet.contains("geo") && !tweet.at("geo").is_null()},
                                 {"source", nonempty_string(tweet, "source")},
                                 {"favorited", tweet.value("favorited", false)},
                                 {"favorite_count",
                                  std::max<long long>(0, tweet.value("favorite_count", 0LL))}};
                comments.push_back(std::move(c));
            }
        }
        doc["comments"] = std::move(comments);

        try {
            out.push_back(parse_thread(doc.dump()));
        } catch (const std::runtime_error& e) {
            throw ParseError(dir.string() + ": " + e.what());
        }
    }
    return out;
}

}  // namespace veritree
