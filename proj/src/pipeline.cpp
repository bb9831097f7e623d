#include "bpf/pipeline.hpp"

#include <chrono>
#include <fstream>
#include <set>
#include <thread>

#include "bpf/annotation.hpp"
#include "bpf/annotation_server.hpp"
#include "bpf/backprompt.hpp"
#include "bpf/error.hpp"
#include "bpf/log.hpp"
#include "bpf/provenance.hpp"

namespace bpf {
namespace {

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& value) {
    std::filesystem::path p(value);
    return p.is_absolute() ? p : base / p;
}

template <typename T>
T field(const json& object, const char* key, T fallback) {
    try {
        return object.value(key, fallback);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config field '") + key + "': " + e.what());
    }
}

void require_readable(const std::filesystem::path& path, const std::string& what) {
    std::error_code ec;
    if (!std::filesystem::is_regular_file(path, ec)) throw ConfigError(what + " does not resolve to a file: " + path.string());
    std::ifstream probe(path);
    if (!probe) throw ConfigError(what + " is not readable: " + path.string());
}

// Runs one named stage, recording its wall time and wrapping failures.
template <typename F>
auto timed_stage(json& timings, const std::string& name, F&& body) {
    auto start = std::chrono::steady_clock::now();
    auto record = [&] {
        timings[name] =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    };
    try {
        if constexpr (std::is_void_v<decltype(body())>) {
            body();
            record();
        } else {
            auto result = body();
            record();
            return result;
        }
    } catch (const StageFailure&) {
        throw;
    } catch (const std::exception& e) {
        throw StageFailure(name, e.what());
    }
}

} // namespace

RunConfig RunConfig::from_json(const json& config, const std::filesystem::path& base_dir) {
    if (!config.is_object()) throw ConfigError("run config must be a JSON object");
    RunConfig c;
    c.raw = config;

    const json backends = config.value("backends", json::object());
    c.generation_backend = backends.value("generation", json{{"kind", "mock"}});
    c.embedding_backend = backends.value("embedding", json{{"kind", "mock"}});
    c.classifier_backend = backends.value("classifier", json{{"kind", "mock"}});
    for (auto* backend : {&c.generation_backend, &c.embedding_backend, &c.classifier_backend}) {
        if (backend->is_object() && backend->contains("fixtures_path")) {
            (*backend)["fixtures_path"] = resolve(base_dir, (*backend)["fixtures_path"].get<std::string>()).string();
        }
    }

    try {
        c.gen_params = gen_params_from_json(config.value("gen_params", json::object()));
    } catch (const PreconditionError& e) {
        throw ConfigError(e.what());
    }
    c.k = field<std::size_t>(config, "k", kDefaultClusters);
    if (c.k == 0) throw ConfigError("k must be >= 1");
    c.rng_seed = field<std::uint64_t>(config, "rng_seed", kDefaultClusterSeed);
    if (auto it = config.find("polarity"); it != config.end() && !it->is_null()) {
        try {
            c.polarity = parse_polarity(it->get<std::string>());
        } catch (const ParseError& e) {
            throw ConfigError(e.what());
        }
    }
    if (auto it = config.find("concurrency"); it != config.end() && !it->is_null()) c.concurrency = it->get<std::size_t>();
    if (auto it = config.find("train_config"); it != config.end()) {
        c.train_config.learning_rate = field(*it, "learning_rate", c.train_config.learning_rate);
        c.train_config.batch_size = field(*it, "batch_size", c.train_config.batch_size);
        c.train_config.epochs = field(*it, "epochs", c.train_config.epochs);
        c.train_config.weight_decay = field(*it, "weight_decay", c.train_config.weight_decay);
    }

    const json paths = config.value("paths", json::object());
    if (!paths.contains("seeds")) throw ConfigError("paths.seeds is required");
    if (!paths.contains("output_dir")) throw ConfigError("paths.output_dir is required");
    c.seeds = resolve(base_dir, paths["seeds"].get<std::string>());
    c.output_dir = resolve(base_dir, paths["output_dir"].get<std::string>());
    c.journal = paths.contains("journal") ? resolve(base_dir, paths["journal"].get<std::string>())
                                          : c.output_dir / "journal.jsonl";
    for (const auto& r : paths.value("real", json::array())) c.real.push_back(resolve(base_dir, r.get<std::string>()));

    const json annotation = config.value("annotation", json::object());
    auto mode = field<std::string>(annotation, "mode", "headless");
    if (mode == "headless") {
        c.mode = AnnotationMode::Headless;
    } else if (mode == "serve") {
        c.mode = AnnotationMode::Serve;
    } else {
        throw ConfigError("annotation.mode must be headless|serve");
    }
    if (annotation.contains("label_map")) c.label_map = resolve(base_dir, annotation["label_map"].get<std::string>());
    c.fallback_to_predicted = field(annotation, "fallback_to_predicted", false);
    c.port = field(annotation, "port", 8787);
    if (annotation.contains("bearer_token")) c.bearer_token = annotation["bearer_token"].get<std::string>();

    require_readable(c.seeds, "paths.seeds");
    for (const auto& r : c.real) require_readable(r, "paths.real entry");
    if (c.label_map) require_readable(*c.label_map, "annotation.label_map");
    if (c.mode == AnnotationMode::Headless && !c.label_map && !c.fallback_to_predicted) {
        throw ConfigError("headless annotation needs annotation.label_map or fallback_to_predicted");
    }
    return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
    std::string text;
    try {
        text = read_file(path);
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
    auto parsed = json::parse(text, nullptr, false);
    if (parsed.is_discarded()) throw ConfigError("config " + path.string() + " is not valid JSON");
    return from_json(parsed, path.has_parent_path() ? path.parent_path() : std::filesystem::path("."));
}

std::string RunConfig::hash() const { return config_hash(raw); }

json version_and_provenance(const RunConfig& config) {
    auto out = make_provenance(config.hash(), {make_generator(config.generation_backend)->id(),
                                               make_embedder(config.embedding_backend)->id(),
                                               make_classifier(config.classifier_backend)->id()});
    out["query_prompt_template"] = query_prompt_template();
    out["answer_prompt_mode"] = kAnswerPromptMode;
    out["gen_params"] = to_json(config.gen_params);
    out["train_config"] = to_json(config.train_config);
    return out;
}

std::map<std::string, LabelClass> load_label_map(const std::filesystem::path& path) {
    auto parsed = json::parse(read_file(path), nullptr, false);
    if (!parsed.is_object()) throw ParseError("label map " + path.string() + " must be a JSON object");
    std::map<std::string, LabelClass> out;
    for (const auto& [id, label] : parsed.items()) {
        if (!label.is_string()) throw ParseError("label map entry '" + id + "' is not a string");
        out[id] = parse_label(label.get<std::string>());
    }
    return out;
}

json run_pipeline(const RunConfig& config, const PipelineHooks& hooks) {
    auto generator = make_generator(config.generation_backend);
    auto classifier = make_classifier(config.classifier_backend);
    const auto provenance = version_and_provenance(config);

    json timings = json::object();
    json report{{"provenance", provenance},
                {"config_hash", config.hash()},
                {"query_prompt_template", query_prompt_template()},
                {"answer_prompt_mode", kAnswerPromptMode},
                {"gen_params", to_json(config.gen_params)},
                {"train_config", to_json(config.train_config)},
                {"k", config.k},
                {"rng_seed", config.rng_seed}};

    // ingest
    auto seeds = timed_stage(timings, "ingest", [&] {
        auto data = load_dataset(config.seeds, LoadOptions{config.polarity.has_value(), std::nullopt, default_label_aliases()});
        if (config.polarity) data = filter_by_polarity(data, *config.polarity);
        if (data.empty()) throw PreconditionError("no seeds left after polarity filtering");
        return data;
    });
    std::filesystem::create_directories(config.output_dir);

    auto generated = timed_stage(timings, "generate", [&] {
        BackpromptOptions options;
        options.concurrency = config.concurrency;
        options.clock = hooks.clock;
        options.provenance = provenance;
        return run_backprompt(seeds, *generator, config.gen_params, config.journal, options);
    });
    if (generated.records.empty()) throw StageFailure("generate", "every seed was skipped");

    const auto clustered_path = config.output_dir / "clustered.jsonl";
    auto clustered = timed_stage(timings, "cluster", [&] {
        auto corpus = cluster_corpus(generated.records, *classifier, config.k, config.rng_seed);
        write_clustered_corpus(clustered_path, corpus.rows, provenance);
        return corpus;
    });

    AnnotationService service(config.output_dir / "annotation");
    std::size_t human_labels = 0;
    std::size_t fallback_labels = 0;
    std::size_t ignored_labels = 0;
    const auto session_id = timed_stage(timings, "annotate", [&] {
        auto id = service.create_session(clustered_path);
        if (config.mode == AnnotationMode::Headless) {
            auto supplied = config.label_map ? load_label_map(*config.label_map) : std::map<std::string, LabelClass>{};
            std::set<std::string> representative_ids;
            for (const auto& item : service.items(id)) {
                representative_ids.insert(item.item_id);
                if (auto it = supplied.find(item.item_id); it != supplied.end()) {
                    service.submit_label(id, item.item_id, it->second);
                    ++human_labels;
                } else if (config.fallback_to_predicted) {
                    service.submit_label(id, item.item_id, item.predicted_label);
                    ++fallback_labels;
                } else {
                    throw ConflictError("label map has no label for representative '" + item.item_id + "'", {item.item_id});
                }
            }
            for (const auto& [sample_id, label] : supplied) ignored_labels += representative_ids.count(sample_id) ? 0 : 1;
        } else {
            AnnotationServer server(service, config.bearer_token);
            int port = server.bind("0.0.0.0", config.port);
            if (port < 0) throw Error("cannot bind annotation server to port " + std::to_string(config.port));
            std::thread listener([&] { server.listen(); });
            server.wait_until_ready();
            if (hooks.on_serving) hooks.on_serving(id, port);
            log_warning("annotation session " + id + " waiting on http://localhost:" + std::to_string(port));
            while (service.status(id).state != SessionState::Finalized) {
                std::this_thread::sleep_for(std::chrono::milliseconds(200));
            }
            server.stop();
            listener.join();
            human_labels = service.labels(id).size();
        }
        return id;
    });

    const auto labeled_path = config.output_dir / "labeled.jsonl";
    auto labeled = timed_stage(timings, "propagate", [&] {
        service.finalize(session_id);
        write_file(labeled_path, service.export_jsonl(session_id));
        return load_dataset(labeled_path);
    });

    // A run restricted to one seed polarity feeds the matching stage; an
    // unrestricted run is split by seed polarity and feeds both.
    auto manifest_paths = timed_stage(timings, "assemble", [&] {
        std::vector<Dataset> real;
        for (const auto& path : config.real) real.push_back(load_dataset(path, LoadOptions{true, std::nullopt, default_label_aliases()}));
        std::vector<StageManifest> manifests;
        if (config.polarity == Polarity::Positive) {
            manifests.push_back(assemble_stage2(labeled));
        } else if (config.polarity == Polarity::Negative) {
            manifests.push_back(assemble_stage1(labeled, real));
        } else {
            Dataset positive, negative;
            for (const auto& s : labeled) (seed_polarity(s) == Polarity::Positive ? positive : negative).push_back(s);
            if (!negative.empty() || !real.empty()) manifests.push_back(assemble_stage1(negative, real));
            if (!positive.empty()) manifests.push_back(assemble_stage2(positive));
        }
        std::vector<std::string> paths;
        for (auto& manifest : manifests) {
            manifest.train_config = config.train_config;
            paths.push_back(write_manifest(config.output_dir, manifest, provenance).string());
        }
        return paths;
    });

    std::size_t representatives = 0;
    for (const auto& [label, model] : clustered.models) representatives += model.representatives.size();

    report["counts"] = {{"seeds", seeds.size()},
                        {"records", generated.records.size()},
                        {"generated", generated.generated},
                        {"resumed", generated.resumed},
                        {"skips", generated.skips.size()},
                        {"labeled", labeled.size()},
                        {"labels", to_json(stats(labeled))}};
    json skips = json::array();
    for (const auto& s : generated.skips) skips.push_back(to_json(s));
    report["skips"] = skips;
    report["annotation"] = {{"mode", config.mode == AnnotationMode::Headless ? "headless" : "serve"},
                            {"session_id", session_id},
                            {"representatives", representatives},
                            {"human_labels", human_labels},
                            {"fallback_labels", fallback_labels},
                            {"ignored_map_entries", ignored_labels},
                            {"budget_bound", 3 * config.k}};
    report["outputs"] = {{"journal", config.journal.string()},
                         {"clustered", clustered_path.string()},
                         {"labeled", labeled_path.string()},
                         {"manifests", manifest_paths}};
    report["stage_timings_ms"] = timings;
    write_file(config.output_dir / "run_report.json", report.dump(2) + "\n");
    return report;
}

} // namespace bpf
