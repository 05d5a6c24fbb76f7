#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "veritree/cli.hpp"
#include "veritree/errors.hpp"
#include "veritree/pipeline.hpp"
#include "veritree/synthetic.hpp"

namespace py = pybind11;
using namespace veritree;

namespace {

/// Bindings keep an embedding table + rubric bundle behind one handle so the
/// scoring setup mirrors the CLI's.
struct Scorer {
    EmbeddingTable table;
    ScoringContext scoring;

    Scorer(std::size_t dim, std::uint64_t seed, const std::string& embeddings_path,
           bool use_soft_cosine)
        : table(embeddings_path.empty()
                    ? EmbeddingTable(dim, FallbackMode::hashed, seed)
                    : EmbeddingTable::load_file(embeddings_path, FallbackMode::hashed, seed)),
          scoring{&table, CredibilityRubric::defaults(), use_soft_cosine} {}

    ConditionScores score(const ConversationThread& thread, const CommentNode& node) const {
        return scoring.scorer()(thread, node);
    }
};

py::dict selection_to_dict(const EvidenceSelection& sel) {
    py::list selected;
    for (const auto& s : sel.selected) {
        py::dict d;
        d["id"] = s.id;
        d["simi"] = s.scores.simi;
        d["r_cred"] = s.scores.r_cred;
        d["c_cred"] = s.scores.c_cred;
        d["fired"] = s.fired.names();
        selected.append(d);
    }
    py::dict out;
    out["selected"] = selected;
    py::list tokens;
    for (std::size_t i = 0; i < sel.evidence_tokens.length(); ++i)
        if (sel.evidence_tokens.mask[i]) tokens.append(sel.evidence_tokens.tokens[i]);
    out["evidence_tokens"] = tokens;
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Decision-rule evidence selection and co-attention claim verification";

    py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
    py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
    py::register_exception<DataError>(m, "DataError", PyExc_RuntimeError);

    m.def("tokenize", &tokenize, py::arg("text"),
          "Deterministic lowercased, punctuation-separated tokens.");

    py::class_<ReviewerMeta>(m, "ReviewerMeta")
        .def(py::init([](bool verified, bool geo, bool screen_name, bool profile_image,
                         std::uint64_t followers, std::uint64_t friends,
                         std::uint64_t favourites) {
                 return ReviewerMeta{verified, geo,     screen_name, profile_image,
                                     followers, friends, favourites};
             }),
             py::arg("verified") = false, py::arg("geo") = false, py::arg("screen_name") = false,
             py::arg("profile_image") = false, py::arg("followers") = 0, py::arg("friends") = 0,
             py::arg("favourites") = 0)
        .def_readwrite("verified", &ReviewerMeta::verified)
        .def_readwrite("followers", &ReviewerMeta::followers);

    py::class_<CommentMeta>(m, "CommentMeta")
        .def(py::init([](bool geo, bool source, bool favorited, std::uint64_t favorite_count,
                         std::uint64_t content_length) {
                 return CommentMeta{geo, source, favorited, favorite_count, content_length};
             }),
             py::arg("geo") = false, py::arg("source") = false, py::arg("favorited") = false,
             py::arg("favorite_count") = 0, py::arg("content_length") = 0);

    m.def(
        "reviewer_credibility",
        [](const ReviewerMeta& meta) {
            return reviewer_credibility(meta, CredibilityRubric::defaults());
        },
        py::arg("meta"), "A1/B1 under the default rubric.");
    m.def(
        "comment_credibility",
        [](const CommentMeta& meta) {
            return comment_credibility(meta, CredibilityRubric::defaults());
        },
        py::arg("meta"), "A2/B2 under the default rubric.");

    py::class_<DecisionThresholds>(m, "DecisionThresholds")
        .def(py::init([](double simi_low, double simi_high, double rcred_min, double ccred_min) {
                 DecisionThresholds th{simi_low, simi_high, rcred_min, ccred_min};
                 th.validate();
                 return th;
             }),
             py::arg("simi_low") = 0.0, py::arg("simi_high") = 1.0, py::arg("rcred_min") = 0.0,
             py::arg("ccred_min") = 0.0)
        .def_readonly("simi_low", &DecisionThresholds::simi_low)
        .def_readonly("simi_high", &DecisionThresholds::simi_high)
        .def_readonly("rcred_min", &DecisionThresholds::rcred_min)
        .def_readonly("ccred_min", &DecisionThresholds::ccred_min);

    m.def(
        "decide",
        [](double simi, double r_cred, double c_cred, const DecisionThresholds& th) {
            const Decision d = decide(ConditionScores{simi, r_cred, c_cred}, th);
            return py::make_tuple(d.selected, d.fired.names());
        },
        py::arg("simi"), py::arg("r_cred"), py::arg("c_cred"), py::arg("thresholds"),
        "Disjunctive decision rule; returns (selected, fired condition names).");

    py::class_<ConversationThread>(m, "Thread")
        .def_property_readonly("claim_id",
                               [](const ConversationThread& t) { return t.claim_id; })
        .def_property_readonly("claim_text",
                               [](const ConversationThread& t) { return t.claim_text; })
        .def_property_readonly("label",
                               [](const ConversationThread& t) { return label_name(t.label); })
        .def_property_readonly("comment_count",
                               [](const ConversationThread& t) { return t.comment_count(); });

    m.def(
        "parse_thread",
        [](const std::string& raw) {
            ParsedThread p = parse_thread(raw);
            return py::make_tuple(std::move(p.thread), p.warnings);
        },
        py::arg("document"),
        "Parse one canonical thread document; returns (thread, warnings).");

    m.def("serialize_thread", &serialize_thread, py::arg("thread"));

    py::class_<Scorer>(m, "Scorer")
        .def(py::init<std::size_t, std::uint64_t, const std::string&, bool>(),
             py::arg("dim") = 32, py::arg("seed") = 42, py::arg("embeddings_path") = "",
             py::arg("use_soft_cosine") = true)
        .def(
            "score_comments",
            [](const Scorer& s, const ConversationThread& thread) {
                py::list out;
                const ScoreFn fn = s.scoring.scorer();
                thread.for_each_comment([&](const CommentNode& node) {
                    const ConditionScores c = fn(thread, node);
                    py::dict d;
                    d["id"] = node.id;
                    d["simi"] = c.simi;
                    d["r_cred"] = c.r_cred;
                    d["c_cred"] = c.c_cred;
                    out.append(d);
                });
                return out;
            },
            py::arg("thread"), "Condition scores per comment in DFS pre-order.")
        .def(
            "select_evidence",
            [](const Scorer& s, const ConversationThread& thread, const DecisionThresholds& th,
               std::size_t max_tokens) {
                return selection_to_dict(
                    select_evidence(thread, th, s.scoring.scorer(), max_tokens));
            },
            py::arg("thread"), py::arg("thresholds"), py::arg("max_tokens") = 128);

    m.def(
        "make_planted_corpus_file",
        [](const std::string& path, std::size_t threads, std::uint64_t seed) {
            SyntheticSpec spec;
            spec.threads = threads;
            spec.seed = seed;
            save_corpus_file(path, make_planted_corpus(spec));
        },
        py::arg("path"), py::arg("threads") = 40, py::arg("seed") = 7,
        "Write a desk-scale planted-signal corpus to a file.");

    m.def(
        "run_cli",
        [](const std::vector<std::string>& args) { return run_cli(args); },
        py::arg("args"),
        "Invoke the command-line pipeline in-process; returns the exit code.");
}
