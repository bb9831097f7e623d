// bpf: command-line front end for the back-prompting data pipeline.

#include <csignal>
#include <filesystem>
#include <cstdlib>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bpf/annotation.hpp"
#include "bpf/annotation_server.hpp"
#include "bpf/backprompt.hpp"
#include "bpf/cluster.hpp"
#include "bpf/corpus.hpp"
#include "bpf/error.hpp"
#include "bpf/metrics.hpp"
#include "bpf/pipeline.hpp"
#include "bpf/provenance.hpp"
#include "bpf/stages.hpp"

namespace {

using bpf::json;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitStage = 2;

bpf::AnnotationServer* g_server = nullptr;

void on_signal(int) {
    if (g_server) g_server->stop();
}

// A backend/run config file for the single-stage subcommands. Missing file
// means "all mock backends, default parameters".
json load_config(const std::string& path) {
    if (path.empty()) return json::object();
    std::string text;
    try {
        text = bpf::read_file(path);
    } catch (const bpf::Error& e) {
        throw bpf::ConfigError(e.what());
    }
    auto parsed = json::parse(text, nullptr, false);
    if (!parsed.is_object()) throw bpf::ConfigError("config " + path + " is not a JSON object");
    // Fixture files are named relative to the config, as in run configs.
    const auto base = std::filesystem::path(path).parent_path();
    if (auto backends = parsed.find("backends"); backends != parsed.end() && backends->is_object()) {
        for (auto& [role, backend] : backends->items()) {
            if (!backend.is_object() || !backend.contains("fixtures_path")) continue;
            std::filesystem::path fixtures = backend["fixtures_path"].get<std::string>();
            if (fixtures.is_relative()) backend["fixtures_path"] = (base / fixtures).string();
        }
    }
    return parsed;
}

json backend_of(const json& config, const char* role) {
    return config.value("backends", json::object()).value(role, json{{"kind", "mock"}});
}

std::optional<bpf::Polarity> polarity_arg(const std::string& text) {
    if (text.empty()) return std::nullopt;
    return bpf::parse_polarity(text);
}

void print(const json& value) { std::cout << value.dump(2) << "\n"; }

int cmd_ingest(const std::string& in, const std::string& out, const std::string& source, bool expect_labels,
               const std::string& polarity) {
    bpf::LoadOptions options;
    options.expect_labels = expect_labels || !polarity.empty();
    if (!source.empty()) options.source = source;
    auto data = bpf::load_dataset(in, options);
    if (auto p = polarity_arg(polarity)) data = bpf::filter_by_polarity(data, *p);
    if (!out.empty()) bpf::write_dataset(out, data);
    print(bpf::to_json(bpf::stats(data)));
    return kExitOk;
}

int cmd_generate(const std::string& seeds_path, const std::string& journal, const std::string& config_path,
                 const std::string& polarity, std::size_t concurrency) {
    auto config = load_config(config_path);
    auto params = bpf::gen_params_from_json(config.value("gen_params", json::object()));
    auto generator = bpf::make_generator(backend_of(config, "generation"));
    auto seeds = bpf::load_dataset(seeds_path, bpf::LoadOptions{!polarity.empty(), std::nullopt, bpf::default_label_aliases()});
    if (auto p = polarity_arg(polarity)) seeds = bpf::filter_by_polarity(seeds, *p);

    bpf::BackpromptOptions options;
    if (concurrency > 0) options.concurrency = concurrency;
    options.provenance = bpf::make_provenance(bpf::config_hash(config), {generator->id()});
    auto result = bpf::run_backprompt(seeds, *generator, params, journal, options);

    json skips = json::array();
    for (const auto& s : result.skips) skips.push_back(bpf::to_json(s));
    print({{"records", result.records.size()},
           {"generated", result.generated},
           {"resumed", result.resumed},
           {"skips", skips}});
    return kExitOk;
}

int cmd_cluster(const std::string& corpus, std::size_t k, std::uint64_t seed, const std::string& out,
                const std::string& config_path) {
    auto config = load_config(config_path);
    auto classifier = bpf::make_classifier(backend_of(config, "classifier"));
    if (!std::filesystem::exists(corpus)) throw bpf::ConfigError("corpus not found: " + corpus);
    auto journal = bpf::read_journal(corpus);
    auto clustered = bpf::cluster_corpus(journal.records, *classifier, k, seed);
    json params{{"k", k}, {"rng_seed", seed}, {"config", config}};
    bpf::write_clustered_corpus(out, clustered.rows, bpf::make_provenance(bpf::config_hash(params), {classifier->id()}));

    json splits = json::object();
    for (const auto& [label, model] : clustered.models) {
        std::vector<std::size_t> assignments;
        for (const auto& [id, cluster] : model.assignments) assignments.push_back(cluster);
        splits[std::string(bpf::to_string(label))] = {
            {"size", model.assignments.size()},
            {"k", model.k},
            {"sse", model.sse},
            {"cluster_size_std", assignments.empty() ? 0.0 : bpf::cluster_size_std(assignments)}};
    }
    print({{"rows", clustered.rows.size()}, {"splits", splits}});
    return kExitOk;
}

int cmd_serve(const std::string& host, int port, const std::string& data_dir, bool allow_relabel) {
    bpf::AnnotationService service(data_dir, allow_relabel);
    std::optional<std::string> token;
    if (const char* env = std::getenv("BPF_API_TOKEN"); env && *env) token = env;
    bpf::AnnotationServer server(service, token);
    int bound = server.bind(host, port);
    if (bound < 0) throw bpf::ConfigError("cannot bind " + host + ":" + std::to_string(port));
    g_server = &server;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::cerr << "annotation service on http://" << host << ":" << bound << "\n";
    server.listen();
    g_server = nullptr;
    return kExitOk;
}

bpf::Dataset load_all(const std::vector<std::string>& paths, bool expect_labels) {
    bpf::Dataset out;
    for (const auto& p : paths) {
        auto part = bpf::load_dataset(p, bpf::LoadOptions{expect_labels, std::nullopt, bpf::default_label_aliases()});
        out.insert(out.end(), part.begin(), part.end());
    }
    return out;
}

int cmd_assemble(const std::string& stage, const std::vector<std::string>& synthetic_paths,
                 const std::vector<std::string>& real_paths, const std::string& out, const std::string& config_path) {
    auto config = load_config(config_path);
    bpf::TrainConfig train;
    if (auto it = config.find("train_config"); it != config.end()) {
        train.learning_rate = it->value("learning_rate", train.learning_rate);
        train.batch_size = it->value("batch_size", train.batch_size);
        train.epochs = it->value("epochs", train.epochs);
        train.weight_decay = it->value("weight_decay", train.weight_decay);
    }
    auto synthetic = load_all(synthetic_paths, true);
    std::vector<bpf::Dataset> real;
    for (const auto& p : real_paths) real.push_back(load_all({p}, true));
    auto provenance = bpf::make_provenance(bpf::config_hash(config), {});

    std::vector<bpf::StageManifest> manifests;
    if (stage == "1") {
        manifests.push_back(bpf::assemble_stage1(synthetic, real));
    } else if (stage == "2") {
        manifests.push_back(bpf::assemble_stage2(synthetic));
    } else {
        bpf::Dataset positive;
        bpf::Dataset negative;
        for (const auto& s : synthetic) {
            auto p = bpf::seed_polarity(s);
            (p == bpf::Polarity::Positive ? positive : negative).push_back(s);
        }
        auto [first, second] = bpf::assemble_alternate(positive, negative, real);
        manifests.push_back(std::move(first));
        manifests.push_back(std::move(second));
    }

    json written = json::array();
    for (auto& m : manifests) {
        m.train_config = train;
        written.push_back({{"stage", m.stage},
                           {"manifest", bpf::write_manifest(out, m, provenance).string()},
                           {"counts", bpf::to_json(m.counts)}});
    }
    print(written);
    return kExitOk;
}

int cmd_evaluate(const std::string& preds_path, const std::string& gold_path) {
    bpf::LoadOptions options{true, std::nullopt, bpf::default_label_aliases()};
    auto preds = bpf::load_dataset(preds_path, options);
    auto gold = bpf::load_dataset(gold_path, options);
    std::map<std::string, bpf::LabelClass> gold_by_id;
    for (const auto& g : gold) gold_by_id[g.id] = *g.label;
    if (preds.size() != gold.size()) {
        throw bpf::PreconditionError("evaluate: " + std::to_string(preds.size()) + " predictions vs " +
                                     std::to_string(gold.size()) + " gold labels");
    }
    std::vector<bpf::LabelClass> p;
    std::vector<bpf::LabelClass> g;
    for (const auto& s : preds) {
        auto it = gold_by_id.find(s.id);
        if (it == gold_by_id.end()) throw bpf::PreconditionError("evaluate: no gold label for '" + s.id + "'");
        p.push_back(*s.label);
        g.push_back(it->second);
    }
    print(bpf::metrics_report(bpf::confusion(p, g)));
    return kExitOk;
}

std::vector<bpf::Vector> token_vectors(bpf::Embedder& embedder, const std::string& text) {
    std::vector<bpf::Vector> out;
    for (auto& t : embedder.embed_tokens(text)) {
        bool nonzero = false;
        for (double x : t.vector) nonzero = nonzero || x != 0.0;
        // Tokens without any embedding signal (digits, punctuation under the
        // mock embedder) carry no direction and are left out.
        if (nonzero) out.push_back(std::move(t.vector));
    }
    return out;
}

int cmd_drift(const std::string& corpus, const std::string& config_path) {
    auto config = load_config(config_path);
    auto embedder = bpf::make_embedder(backend_of(config, "embedding"));
    struct Totals {
        double p = 0;
        double r = 0;
        double f = 0;
        std::size_t n = 0;
        std::size_t skipped = 0;
    };
    std::map<std::string, Totals> per_source;
    bpf::read_jsonl(corpus, [&](std::size_t line, const json& row) {
        if (row.value("type", std::string("record")) != "record") return;
        if (!row.contains("seed_text") || !row.contains("synthetic_text")) {
            throw bpf::ParseError("drift needs seed_text and synthetic_text", line);
        }
        auto& totals = per_source[row.value("seed_source", std::string("unknown"))];
        auto candidate = token_vectors(*embedder, row["synthetic_text"].get<std::string>());
        auto reference = token_vectors(*embedder, row["seed_text"].get<std::string>());
        if (candidate.empty() || reference.empty()) {
            ++totals.skipped;
            return;
        }
        auto score = bpf::drift_score(candidate, reference);
        totals.p += score.precision;
        totals.r += score.recall;
        totals.f += score.f1;
        ++totals.n;
    });
    json table = json::array();
    for (const auto& [source, t] : per_source) {
        const double n = t.n ? static_cast<double>(t.n) : 1.0;
        table.push_back({{"source", source},
                         {"pairs", t.n},
                         {"skipped", t.skipped},
                         {"precision", t.p / n},
                         {"recall", t.r / n},
                         {"f1", t.f / n}});
    }
    print(table);
    return kExitOk;
}

int cmd_audit(const std::string& clusters, const std::string& out, std::size_t per_cluster, std::uint64_t seed) {
    auto labeled = bpf::load_dataset(clusters, bpf::LoadOptions{true, std::nullopt, bpf::default_label_aliases()});
    auto rows = bpf::audit_sample(labeled, per_cluster, seed);
    std::vector<json> lines;
    for (const auto& r : rows) lines.push_back(bpf::to_json(r));
    bpf::write_jsonl(out, lines);
    print({{"rows", rows.size()}, {"sheet", out}});
    return kExitOk;
}

int cmd_audit_score(const std::string& sheet) {
    std::vector<bpf::AuditVerdict> verdicts;
    bpf::read_jsonl(sheet, [&](std::size_t line, const json& row) {
        auto parsed = bpf::audit_row_from_json(row);
        if (!parsed.verdict) throw bpf::ParseError("audit row '" + parsed.sample_id + "' has no verdict", line);
        verdicts.push_back(*parsed.verdict);
    });
    auto score = bpf::audit_accuracy(verdicts);
    print({{"total", score.total},
           {"fp", score.fp},
           {"fn", score.fn},
           {"accuracy", score.accuracy},
           {"display_accuracy", score.display_accuracy}});
    return kExitOk;
}

int cmd_run(const std::string& config_path) {
    auto config = bpf::RunConfig::load(config_path);
    bpf::PipelineHooks hooks;
    hooks.on_serving = [](const std::string& session, int port) {
        std::cerr << "annotate session " << session << " at http://localhost:" << port << "\n";
    };
    print(bpf::run_pipeline(config, hooks));
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Back-prompting synthetic data pipeline for health-advice detection"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(bpf::kToolVersion));

    std::string in, out, source, polarity, seeds, journal, config, corpus, data_dir, stage, preds, gold, sheet;
    std::string host = "127.0.0.1";
    std::vector<std::string> synthetic, real;
    bool expect_labels = false;
    bool allow_relabel = false;
    std::size_t k = bpf::kDefaultClusters;
    std::uint64_t seed = bpf::kDefaultClusterSeed;
    std::size_t concurrency = 0;
    std::size_t per_cluster = 2;
    int port = 8787;

    auto* ingest = app.add_subcommand("ingest", "Load and validate a seed or real dataset; print label counts");
    ingest->add_option("--in", in, "Input JSONL")->required();
    ingest->add_option("--out", out, "Write the normalized dataset here");
    ingest->add_option("--source", source, "Source name for records without one");
    ingest->add_flag("--expect-labels", expect_labels, "Reject unlabeled records");
    ingest->add_option("--polarity", polarity, "Keep only seeds of this polarity")->check(CLI::IsMember({"positive", "negative"}));

    auto* generate = app.add_subcommand("generate", "Back-prompt seeds into a resumable journal");
    generate->add_option("--seeds", seeds, "Seed JSONL")->required();
    generate->add_option("--journal", journal, "Journal JSONL (appended; resumes completed seeds)")->required();
    generate->add_option("--config", config, "Backend/parameter config JSON");
    generate->add_option("--polarity", polarity, "Keep only seeds of this polarity")->check(CLI::IsMember({"positive", "negative"}));
    generate->add_option("--concurrency", concurrency, "Worker count (default: backend in-flight bound)");

    auto* cluster = app.add_subcommand("cluster", "Classify, split and cluster a journal");
    cluster->add_option("--corpus", corpus, "Journal JSONL")->required();
    cluster->add_option("--k", k, "Clusters per split")->check(CLI::PositiveNumber);
    cluster->add_option("--seed", seed, "k-means seed");
    cluster->add_option("--out", out, "Clustered corpus JSONL")->required();
    cluster->add_option("--config", config, "Backend config JSON");

    auto* serve = app.add_subcommand("serve", "Run the annotation REST service (token from BPF_API_TOKEN)");
    serve->add_option("--port", port, "Port (0 picks a free one)");
    serve->add_option("--host", host, "Bind address");
    serve->add_option("--data-dir", data_dir, "Session storage directory")->required();
    serve->add_flag("--allow-relabel", allow_relabel, "Accept a different label for an already labeled item");

    auto* assemble = app.add_subcommand("assemble", "Build stage training sets and manifests");
    assemble->add_option("--stage", stage, "1, 2 or alt")->required()->check(CLI::IsMember({"1", "2", "alt"}));
    assemble->add_option("--synthetic", synthetic, "Labeled synthetic JSONL files")->required();
    assemble->add_option("--real", real, "Labeled real JSONL files");
    assemble->add_option("--out", out, "Output directory")->required();
    assemble->add_option("--config", config, "Config JSON with train_config");

    auto* evaluate = app.add_subcommand("evaluate", "Binary metrics of predictions against gold labels");
    evaluate->add_option("--preds", preds, "Predictions JSONL (id, label)")->required();
    evaluate->add_option("--gold", gold, "Gold JSONL (id, label)")->required();

    auto* drift = app.add_subcommand("drift", "Per-source greedy-matching drift between synthetic texts and seeds");
    drift->add_option("--corpus", corpus, "Journal or clustered corpus JSONL")->required();
    drift->add_option("--config", config, "Backend config JSON");

    auto* audit = app.add_subcommand("audit", "Sample a label-audit sheet from a labeled synthetic dataset");
    audit->add_option("--clusters", corpus, "Labeled synthetic JSONL")->required();
    audit->add_option("--out", out, "Audit sheet JSONL")->required();
    audit->add_option("--per-cluster", per_cluster, "Rows per cluster")->check(CLI::PositiveNumber);
    audit->add_option("--seed", seed, "Sampling seed");

    auto* audit_score = app.add_subcommand("audit-score", "Score a completed audit sheet");
    audit_score->add_option("--sheet", sheet, "Audit sheet JSONL with verdicts")->required();

    auto* run = app.add_subcommand("run", "End-to-end pipeline from a run config");
    run->add_option("--config", config, "Run config JSON")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*ingest) return cmd_ingest(in, out, source, expect_labels, polarity);
        if (*generate) return cmd_generate(seeds, journal, config, polarity, concurrency);
        if (*cluster) return cmd_cluster(corpus, k, seed, out, config);
        if (*serve) return cmd_serve(host, port, data_dir, allow_relabel);
        if (*assemble) return cmd_assemble(stage, synthetic, real, out, config);
        if (*evaluate) return cmd_evaluate(preds, gold);
        if (*drift) return cmd_drift(corpus, config);
        if (*audit) return cmd_audit(corpus, out, per_cluster, seed);
        if (*audit_score) return cmd_audit_score(sheet);
        if (*run) return cmd_run(config);
    } catch (const bpf::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const bpf::StageFailure& e) {
        std::cerr << e.what() << "\n";
        return kExitStage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitStage;
    }
    return kExitUsage;
}
