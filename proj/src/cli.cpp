#include "veritree/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "veritree/errors.hpp"
#include "veritree/pipeline.hpp"
#include "veritree/rng.hpp"

namespace veritree {

using nlohmann::json;

namespace {

constexpr const char* kSeedEnv = "VERITREE_SEED";
constexpr const char* kEmbeddingsEnv = "VERITREE_EMBEDDINGS";

struct Options {
    std::string corpus;
    std::string pheme_dir;
    std::string splits;
    std::string splits_out;
    std::string embeddings;
    std::string config_path;
    std::string out;
    std::string model;
    std::string thread_id;
    std::string rubric;
    std::string ratios = "0.7,0.1,0.2";
    std::uint64_t seed = 42;
    double simi_low = 0.0;
    double simi_high = 0.5;
    double rcred = 0.7;
    double ccred = 0.6;
    double grid_step = 0.1;
    std::size_t epochs = 30;
    std::size_t batch_size = 64;
    double lr = 0.001;
    std::string fallback = "hashed";
    bool use_soft_cosine = true;  // config key "use_soft_cosine"; fallback mode = rescaled cosine
    bool no_evidence = false;

    json config;  // parsed --config document (may be empty)

    DecisionThresholds thresholds() const {
        DecisionThresholds th{simi_low, simi_high, rcred, ccred};
        th.validate();
        return th;
    }
};

/// Registers the shared flag set on a subcommand. Returns the option
/// pointers needed for merge precedence (flag > env > config > default).
struct FlagSet {
    CLI::App* cmd = nullptr;
    Options* opts = nullptr;
    std::map<std::string, CLI::Option*> by_key;

    CLI::Option* add(CLI::Option* opt, const std::string& key) {
        by_key[key] = opt;
        return opt;
    }

    bool flag_given(const std::string& key) const {
        auto it = by_key.find(key);
        return it != by_key.end() && it->second->count() > 0;
    }
};

void register_common(FlagSet& fs, bool with_model_dims) {
    CLI::App* c = fs.cmd;
    Options& o = *fs.opts;
    fs.add(c->add_option("--corpus", o.corpus, "Corpus file, one thread document per line"),
           "corpus");
    fs.add(c->add_option("--splits", o.splits, "Split file (thread_id<TAB>split)"), "splits");
    fs.add(c->add_option("--embeddings", o.embeddings, "Embedding file (d=<int> header)"),
           "embeddings");
    fs.add(c->add_option("--seed", o.seed, "Global random seed"), "seed");
    fs.add(c->add_option("--config", o.config_path, "JSON config merged under flag overrides"),
           "config");
    fs.add(c->add_option("--out", o.out, "Output path (stdout when omitted)"), "out");
    fs.add(c->add_option("--simi-low", o.simi_low, "Lower edge of the simi band"), "simi_low");
    fs.add(c->add_option("--simi-high", o.simi_high, "Upper edge of the simi band"), "simi_high");
    fs.add(c->add_option("--rcred", o.rcred, "Reviewer-credibility cutoff a2 (strict >)"),
           "rcred");
    fs.add(c->add_option("--ccred", o.ccred, "Comment-credibility cutoff a3 (strict >)"), "ccred");
    fs.add(c->add_option("--fallback", o.fallback, "Unknown-token fallback: hashed|zero"),
           "fallback");
    fs.add(c->add_option("--rubric", o.rubric, "Credibility rubric file (defaults baked in)"),
           "rubric");
    if (with_model_dims) {
        fs.add(c->add_option("--epochs", o.epochs, "Training epochs"), "epochs");
        fs.add(c->add_option("--batch-size", o.batch_size, "Mini-batch size"), "batch_size");
        fs.add(c->add_option("--lr", o.lr, "Learning rate"), "lr");
        fs.add(c->add_option("--model", o.model, "Checkpoint base path"), "model");
    }
}

json load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open config file '" + path + "'");
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError(path + ": " + e.what());
    }
}

/// Apply precedence below explicit flags: environment (seed, embeddings),
/// then the --config document.
void merge_defaults(FlagSet& fs) {
    Options& o = *fs.opts;
    if (!o.config_path.empty()) o.config = load_config_file(o.config_path);

    if (!fs.flag_given("seed")) {
        if (const char* env = std::getenv(kSeedEnv)) {
            o.seed = std::strtoull(env, nullptr, 10);
        } else if (o.config.contains("seed")) {
            o.seed = o.config.at("seed").get<std::uint64_t>();
        }
    }
    if (!fs.flag_given("embeddings")) {
        if (const char* env = std::getenv(kEmbeddingsEnv)) {
            o.embeddings = env;
        } else if (o.config.contains("embeddings")) {
            o.embeddings = o.config.at("embeddings").get<std::string>();
        }
    }

    auto fill = [&](const char* key, auto& value) {
        if (!fs.flag_given(key) && o.config.contains(key))
            value = o.config.at(key).get<std::decay_t<decltype(value)>>();
    };
    fill("corpus", o.corpus);
    fill("splits", o.splits);
    fill("out", o.out);
    fill("model", o.model);
    fill("ratios", o.ratios);
    fill("simi_low", o.simi_low);
    fill("simi_high", o.simi_high);
    fill("rcred", o.rcred);
    fill("ccred", o.ccred);
    fill("grid_step", o.grid_step);
    fill("epochs", o.epochs);
    fill("batch_size", o.batch_size);
    fill("lr", o.lr);
    fill("fallback", o.fallback);
    fill("rubric", o.rubric);
    if (o.config.contains("use_soft_cosine"))
        o.use_soft_cosine = o.config.at("use_soft_cosine").get<bool>();
}

CasaConfig casa_config_from(const Options& o) {
    CasaConfig cfg;
    if (o.config.contains("casa")) cfg = CasaConfig::from_json(o.config.at("casa").dump());
    cfg.validate();
    return cfg;
}

TrainConfig train_config_from(const Options& o) {
    TrainConfig cfg;
    cfg.epochs = o.epochs;
    cfg.batch_size = o.batch_size;
    cfg.lr = o.lr;
    cfg.seed = o.seed;
    cfg.grid_step = o.grid_step;
    if (o.config.contains("early_stop_patience"))
        cfg.early_stop_patience = o.config.at("early_stop_patience").get<std::size_t>();
    if (o.config.contains("optimizer")) {
        const std::string name = o.config.at("optimizer").get<std::string>();
        if (name == "adam")
            cfg.optimizer = TrainConfig::Optimizer::adam;
        else if (name == "sgd")
            cfg.optimizer = TrainConfig::Optimizer::sgd;
        else
            throw ConfigError("unknown optimizer '" + name + "'");
    }
    cfg.disable_evidence = o.no_evidence;
    cfg.validate();
    return cfg;
}

FallbackMode fallback_from(const Options& o) {
    if (o.fallback == "hashed") return FallbackMode::hashed;
    if (o.fallback == "zero") return FallbackMode::zero;
    throw ConfigError("unknown fallback mode '" + o.fallback + "' (expected hashed|zero)");
}

CredibilityRubric rubric_from(const Options& o) {
    return o.rubric.empty() ? CredibilityRubric::defaults()
                            : CredibilityRubric::load_file(o.rubric);
}

EmbeddingTable make_table(const Options& o, std::size_t dim) {
    if (!o.embeddings.empty())
        return EmbeddingTable::load_file(o.embeddings, fallback_from(o), o.seed);
    return EmbeddingTable(dim, fallback_from(o), o.seed);
}

SplitRatios parse_ratios(const std::string& text) {
    SplitRatios r;
    std::istringstream is(text);
    char c1 = 0, c2 = 0;
    if (!(is >> r.train >> c1 >> r.validation >> c2 >> r.test) || c1 != ',' || c2 != ',')
        throw ConfigError("ratios must look like '0.7,0.1,0.2' (got '" + text + "')");
    return r;
}

std::vector<ConversationThread> threads_of(std::vector<ParsedThread> parsed,
                                           std::vector<std::string>* warnings) {
    std::vector<ConversationThread> threads;
    threads.reserve(parsed.size());
    for (auto& p : parsed) {
        if (warnings)
            for (auto& w : p.warnings) warnings->push_back(p.thread.claim_id + ": " + w);
        threads.push_back(std::move(p.thread));
    }
    return threads;
}

Corpus corpus_from(const Options& o) {
    if (o.corpus.empty()) throw ConfigError("--corpus is required");
    std::vector<std::string> warnings;
    auto threads = threads_of(load_corpus_file(o.corpus), &warnings);
    for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';

    if (!o.splits.empty()) {
        const auto assignment = load_split_file(o.splits);
        Corpus corpus;
        for (auto& t : threads) {
            if (t.label == Label::unverified) continue;
            auto it = assignment.find(t.claim_id);
            if (it == assignment.end())
                throw DataError("thread '" + t.claim_id + "' is missing from the split file");
            corpus.split_assignment[t.claim_id] = it->second;
            corpus.threads.push_back(std::move(t));
        }
        if (corpus.threads.empty()) throw DataError("no usable threads after filtering");
        return corpus;
    }
    return filter_and_split(std::move(threads), parse_ratios(o.ratios), o.seed);
}

void write_output(const Options& o, const std::string& text) {
    if (o.out.empty()) {
        std::cout << text;
        if (text.empty() || text.back() != '\n') std::cout << '\n';
        return;
    }
    std::ofstream f(o.out);
    if (!f) throw DataError("cannot write output file '" + o.out + "'");
    f << text;
    if (text.empty() || text.back() != '\n') f << '\n';
}

json thresholds_json(const DecisionThresholds& th) {
    return json{{"simi_low", th.simi_low},
                {"simi_high", th.simi_high},
                {"rcred_min", th.rcred_min},
                {"ccred_min", th.ccred_min}};
}

DecisionThresholds thresholds_from_json(const json& j) {
    DecisionThresholds th;
    th.simi_low = j.value("simi_low", 0.0);
    th.simi_high = j.value("simi_high", 1.0);
    th.rcred_min = j.value("rcred_min", 0.0);
    th.ccred_min = j.value("ccred_min", 0.0);
    th.validate();
    return th;
}

json embedding_json(const Options& o, const EmbeddingTable& table) {
    return json{{"dim", table.dimension()},
                {"mode", table.fallback_mode() == FallbackMode::hashed ? "hashed" : "zero"},
                {"seed", table.hash_seed()},
                {"path", o.embeddings}};
}

EmbeddingTable table_from_extra(const Options& o, const json& extra, std::size_t model_dim) {
    if (!o.embeddings.empty())
        return EmbeddingTable::load_file(o.embeddings, fallback_from(o), o.seed);
    if (!extra.contains("embedding")) return EmbeddingTable(model_dim, fallback_from(o), o.seed);
    const json& e = extra.at("embedding");
    const std::string mode = e.value("mode", "hashed");
    const FallbackMode fb = mode == "zero" ? FallbackMode::zero : FallbackMode::hashed;
    const std::string path = e.value("path", "");
    const std::uint64_t seed = e.value("seed", std::uint64_t{42});
    if (!path.empty()) return EmbeddingTable::load_file(path, fb, seed);
    return EmbeddingTable(e.value("dim", model_dim), fb, seed);
}

// ---------------------------------------------------------------------------
// Commands

int cmd_ingest(const Options& o) {
    std::vector<std::string> warnings;
    std::vector<ConversationThread> threads;
    if (!o.pheme_dir.empty())
        threads = threads_of(ingest_pheme_directory(o.pheme_dir), &warnings);
    else if (!o.corpus.empty())
        threads = threads_of(load_corpus_file(o.corpus), &warnings);
    else
        throw ConfigError("ingest needs --corpus or --pheme-dir");
    for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';

    const Corpus corpus = filter_and_split(std::move(threads), parse_ratios(o.ratios), o.seed);
    if (!o.out.empty()) save_corpus_file(o.out, corpus.threads);
    if (!o.splits_out.empty()) save_split_file(o.splits_out, corpus.split_assignment);

    std::size_t per_split[3] = {0, 0, 0};
    for (const auto& [id, s] : corpus.split_assignment) per_split[static_cast<int>(s)]++;
    json summary{{"threads", corpus.threads.size()},
                 {"warnings", warnings.size()},
                 {"train", per_split[0]},
                 {"validation", per_split[1]},
                 {"test", per_split[2]}};
    std::cout << summary.dump() << '\n';
    return 0;
}

int cmd_score(const Options& o) {
    if (o.corpus.empty()) throw ConfigError("--corpus is required");
    auto parsed = load_corpus_file(o.corpus);
    const CasaConfig casa = casa_config_from(o);
    const EmbeddingTable table = make_table(o, casa.d);
    const DefaultScorer scorer(table, rubric_from(o), o.use_soft_cosine);

    std::ostringstream os;
    for (const auto& p : parsed) {
        json line{{"thread_id", p.thread.claim_id}, {"comments", json::array()}};
        p.thread.for_each_comment([&](const CommentNode& node) {
            const ConditionScores s = scorer(p.thread, node);
            line["comments"].push_back(json{
                {"id", node.id}, {"simi", s.simi}, {"r_cred", s.r_cred}, {"c_cred", s.c_cred}});
        });
        os << line.dump() << '\n';
    }
    write_output(o, os.str());
    return 0;
}

int cmd_select(const Options& o) {
    if (o.corpus.empty()) throw ConfigError("--corpus is required");
    auto parsed = load_corpus_file(o.corpus);
    const CasaConfig casa = casa_config_from(o);
    const EmbeddingTable table = make_table(o, casa.d);
    const DecisionThresholds th = o.thresholds();
    const DefaultScorer scorer(table, rubric_from(o), o.use_soft_cosine);

    std::ostringstream os;
    for (const auto& p : parsed) {
        const EvidenceSelection sel = select_evidence(p.thread, th, scorer, casa.l);
        json line{{"thread_id", p.thread.claim_id},
                  {"thresholds", thresholds_json(th)},
                  {"selected", json::array()}};
        for (const auto& s : sel.selected) {
            line["selected"].push_back(json{{"id", s.id},
                                            {"simi", s.scores.simi},
                                            {"r_cred", s.scores.r_cred},
                                            {"c_cred", s.scores.c_cred},
                                            {"fired", s.fired.names()}});
        }
        os << line.dump() << '\n';
    }
    write_output(o, os.str());
    return 0;
}

int cmd_train(const Options& o) {
    const Corpus corpus = corpus_from(o);
    const CasaConfig casa = casa_config_from(o);
    const EmbeddingTable table = make_table(o, casa.d);
    const TrainConfig tc = train_config_from(o);
    const DecisionThresholds th = o.thresholds();

    ScoringContext scoring{&table, rubric_from(o), o.use_soft_cosine};
    TrainOutcome outcome = train_once(corpus, th, tc, casa, scoring);

    if (!o.model.empty()) {
        json extra{{"thresholds", thresholds_json(th)},
                   {"embedding", embedding_json(o, table)},
                   {"rubric", o.rubric},
                   {"use_soft_cosine", scoring.use_soft_cosine}};
        outcome.model.save(o.model, extra.dump());
    }
    json report{{"validation", json::parse(outcome.validation.to_json(class_names()))},
                {"epochs_run", outcome.epochs_run},
                {"final_loss",
                 outcome.epoch_losses.empty() ? 0.0 : outcome.epoch_losses.back()}};
    write_output(o, report.dump());
    return 0;
}

int cmd_sweep(const Options& o) {
    const Corpus corpus = corpus_from(o);
    const CasaConfig casa = casa_config_from(o);
    const EmbeddingTable table = make_table(o, casa.d);
    const TrainConfig tc = train_config_from(o);

    ThresholdRanges ranges;
    ranges.simi_low = o.simi_low;
    if (o.config.contains("ranges")) {
        const json& r = o.config.at("ranges");
        auto pair = [&](const char* key, double& lo, double& hi) {
            if (!r.contains(key)) return;
            lo = r.at(key).at(0).get<double>();
            hi = r.at(key).at(1).get<double>();
        };
        pair("simi_high", ranges.simi_high_lo, ranges.simi_high_hi);
        pair("rcred", ranges.rcred_lo, ranges.rcred_hi);
        pair("ccred", ranges.ccred_lo, ranges.ccred_hi);
    }
    const auto grid = threshold_grid(ranges, tc.grid_step);

    ScoringContext scoring{&table, rubric_from(o), o.use_soft_cosine};
    SweepOutcome outcome = sweep(corpus, grid, tc, casa, scoring);

    write_output(o, sweep_table_csv(outcome.table));
    if (!o.model.empty()) {
        json extra{{"thresholds", thresholds_json(outcome.best)},
                   {"embedding", embedding_json(o, table)},
                   {"rubric", o.rubric},
                   {"use_soft_cosine", scoring.use_soft_cosine}};
        outcome.best_model.save(o.model, extra.dump());
    }
    std::cerr << "best " << thresholds_json(outcome.best).dump() << " macro_f1 "
              << outcome.table[outcome.best_index].validation.macro_f1 << '\n';
    return 0;
}

int cmd_evaluate(const Options& o, const FlagSet& fs) {
    if (o.model.empty()) throw ConfigError("--model is required");
    std::string extra_text;
    CasaModel model = CasaModel::load(o.model, &extra_text);
    const json extra = extra_text.empty() ? json::object() : json::parse(extra_text);

    const Corpus corpus = corpus_from(o);
    EmbeddingTable table = table_from_extra(o, extra, model.config().d);

    DecisionThresholds th = extra.contains("thresholds")
                                ? thresholds_from_json(extra.at("thresholds"))
                                : DecisionThresholds{};
    if (fs.flag_given("simi_low")) th.simi_low = o.simi_low;
    if (fs.flag_given("simi_high")) th.simi_high = o.simi_high;
    if (fs.flag_given("rcred")) th.rcred_min = o.rcred;
    if (fs.flag_given("ccred")) th.ccred_min = o.ccred;
    th.validate();

    Options rubric_source = o;
    if (rubric_source.rubric.empty()) rubric_source.rubric = extra.value("rubric", "");
    ScoringContext scoring{&table, rubric_from(rubric_source),
                           extra.value("use_soft_cosine", true)};
    const MetricsReport metrics =
        evaluate(model, corpus, Split::test, th, scoring, o.no_evidence);
    write_output(o, metrics.to_json(class_names()));
    return 0;
}

int cmd_explain(const Options& o, const FlagSet& fs) {
    if (o.model.empty()) throw ConfigError("--model is required");
    if (o.corpus.empty()) throw ConfigError("--corpus is required");
    if (o.thread_id.empty()) throw ConfigError("--thread is required");

    std::string extra_text;
    CasaModel model = CasaModel::load(o.model, &extra_text);
    const json extra = extra_text.empty() ? json::object() : json::parse(extra_text);

    auto parsed = load_corpus_file(o.corpus);
    const ConversationThread* thread = nullptr;
    for (const auto& p : parsed)
        if (p.thread.claim_id == o.thread_id) thread = &p.thread;
    if (!thread) throw DataError("thread '" + o.thread_id + "' not found in corpus");

    EmbeddingTable table = table_from_extra(o, extra, model.config().d);
    DecisionThresholds th = extra.contains("thresholds")
                                ? thresholds_from_json(extra.at("thresholds"))
                                : DecisionThresholds{};
    if (fs.flag_given("simi_low")) th.simi_low = o.simi_low;
    if (fs.flag_given("simi_high")) th.simi_high = o.simi_high;
    if (fs.flag_given("rcred")) th.rcred_min = o.rcred;
    if (fs.flag_given("ccred")) th.ccred_min = o.ccred;
    th.validate();

    Options rubric_source = o;
    if (rubric_source.rubric.empty()) rubric_source.rubric = extra.value("rubric", "");
    ScoringContext scoring{&table, rubric_from(rubric_source),
                           extra.value("use_soft_cosine", true)};
    const ExplanationReport report = explain(model, *thread, th, scoring);
    write_output(o, report.to_json());
    return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
    CLI::App app{"veritree: decision-rule evidence selection + co-attention claim verification"};
    app.require_subcommand(1);

    Options opts;
    std::map<std::string, FlagSet> sets;

    auto make_cmd = [&](const std::string& name, const std::string& desc, bool model_dims) {
        CLI::App* cmd = app.add_subcommand(name, desc);
        FlagSet fs;
        fs.cmd = cmd;
        fs.opts = &opts;
        register_common(fs, model_dims);
        sets[name] = fs;
        return cmd;
    };

    CLI::App* ingest = make_cmd("ingest", "Validate, filter, and split a corpus", false);
    ingest->add_option("--pheme-dir", opts.pheme_dir,
                       "PHEME/RumourEval-style directory to convert");
    ingest->add_option("--splits-out", opts.splits_out, "Where to write the split file");
    sets["ingest"].add(ingest->add_option("--ratios", opts.ratios, "train,val,test fractions"),
                       "ratios");

    make_cmd("score", "Emit per-comment decision-condition scores", false);
    make_cmd("select", "Run the decision-rule evidence selector", false);

    CLI::App* train = make_cmd("train", "Train the verifier at fixed thresholds", true);
    train->add_flag("--no-evidence", opts.no_evidence, "Train with evidence forcibly empty");

    CLI::App* sweep_cmd = make_cmd("sweep", "Grid-search thresholds, training per point", true);
    sets["sweep"].add(
        sweep_cmd->add_option("--grid-step", opts.grid_step, "Threshold grid step"), "grid_step");

    CLI::App* evaluate_cmd = make_cmd("evaluate", "Evaluate a checkpoint on the test split", true);
    evaluate_cmd->add_flag("--no-evidence", opts.no_evidence,
                           "Evaluate with evidence forcibly empty");

    CLI::App* explain_cmd = make_cmd("explain", "Emit an explanation report for one thread", true);
    explain_cmd->add_option("--thread", opts.thread_id, "Thread id to explain");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);  // help goes to stdout, exit 0
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << '\n';
        CLI::App* active = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
        std::cerr << active->help() << '\n';
        return 1;
    }

    const std::string name = app.get_subcommands().front()->get_name();
    try {
        FlagSet& fs = sets.at(name);
        merge_defaults(fs);
        if (name == "ingest") return cmd_ingest(opts);
        if (name == "score") return cmd_score(opts);
        if (name == "select") return cmd_select(opts);
        if (name == "train") return cmd_train(opts);
        if (name == "sweep") return cmd_sweep(opts);
        if (name == "evaluate") return cmd_evaluate(opts, fs);
        if (name == "explain") return cmd_explain(opts, fs);
        throw ConfigError("unknown command '" + name + "'");
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
}

}  // namespace veritree
