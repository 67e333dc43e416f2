#include "embedclf/pipeline.hpp"

#include <chrono>
#include <cstdio>
#include <iostream>
#include <unordered_map>

#include "byte_io.hpp"
#include "embedclf/error.hpp"
#include "embedclf/parallel.hpp"
#include "json.hpp"

namespace embedclf {

namespace {

void say(const LogSink& log, const std::string& line) {
    if (log) log(line);
    else std::cerr << line << '\n';
}

std::string hex16(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string safe_name(std::string s) {
    for (auto& c : s)
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.')) c = '_';
    return s;
}

void ensure_dir(const std::filesystem::path& p) {
    std::error_code ec;
    std::filesystem::create_directories(p, ec);
    if (ec) fail(ErrorKind::Io, "cannot create directory '" + p.string() + "': " + ec.message());
}

// Runs one stage, records its wall time and prefixes errors with its name.
template <typename F>
auto stage(const char* name, std::vector<StageTiming>* timings, F&& body) {
    const auto t0 = std::chrono::steady_clock::now();
    auto done = [&] {
        if (timings)
            timings->push_back({name, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()});
    };
    try {
        if constexpr (std::is_void_v<decltype(body())>) {
            body();
            done();
        } else {
            auto r = body();
            done();
            return r;
        }
    } catch (const Error& e) {
        throw Error(e.kind(), std::string("stage '") + name + "': " + e.what());
    }
}

// Cache row i must be sample i with the expected provenance.
bool cache_matches(const EmbeddingMatrix& m, const Dataset& ds, std::size_t first, std::size_t count,
                   const Encoder& enc, std::uint64_t prehash) {
    if (m.rows != count || m.encoder_id != to_string(enc.spec().encoder_id) || m.preprocess_hash != prehash ||
        m.dim != static_cast<std::size_t>(enc.embedding_dim()))
        return false;
    for (std::size_t i = 0; i < count; ++i)
        if (m.sample_ids[i] != ds.samples[first + i].id) return false;
    return true;
}

std::optional<EmbeddingMatrix> try_cache(const std::filesystem::path& p, const Dataset& ds, std::size_t first,
                                         std::size_t count, const Encoder& enc, std::uint64_t prehash,
                                         const LogSink& log) {
    if (!std::filesystem::exists(p)) return std::nullopt;
    try {
        auto m = read_cache(p);
        if (cache_matches(m, ds, first, count, enc, prehash)) return m;
        say(log, "warning: " + p.string() + " was built for different samples or settings; recomputing");
    } catch (const Error& e) {
        say(log, std::string("warning: ignoring unreadable cache: ") + e.what());
    }
    return std::nullopt;
}

std::vector<std::uint8_t> label_column(const Targets& t, std::size_t c) {
    std::vector<std::uint8_t> y(t.rows);
    for (std::size_t i = 0; i < t.rows; ++i) y[i] = t.at(i, c);
    return y;
}

void write_text(const std::filesystem::path& p, const std::string& text) { bytes::write_atomically(p, text); }

std::string winner_json(const CVResult& cv, std::size_t k) {
    const auto& w = cv.best();
    nlohmann::ordered_json j;
    j["family"] = std::string(to_string(w.config.family));
    j["config"] = w.config.label();
    j["C"] = w.config.C;
    if (w.config.family == Family::LinearSvm) j["loss"] = std::string(to_string(w.config.loss));
    if (w.config.family == Family::KernelSvm) j["kernel"] = w.config.kernel.label();
    j["folds"] = k;
    j["fold_auc"] = w.fold_auc;
    j["mean_auc"] = w.mean;
    j["std_auc"] = w.stddev;
    j["fallback_folds"] = w.fallback_folds;
    return j.dump(2) + "\n";
}

struct Embedded {
    Prepared data;
    EmbeddingMatrix matrix;
    EmbedStats stats;
    Features X_train, X_test;
    Targets Y_train;
};

Embedded ingest_and_embed(const RunConfig& cfg, std::vector<StageTiming>* timings, const LogSink& log) {
    // the encoder opens first so a bad graph fails before any decoding
    auto enc = stage("encoder", timings, [&] { return open_encoder(cfg); });
    Embedded e{stage("ingest", timings, [&] { return run_ingest(cfg, log); }), {}, {}, {}, {}, {}};
    e.matrix = stage("embed", timings, [&] { return embed_dataset(e.data.full, cfg, enc, e.stats, log); });
    e.X_train = features_for(e.matrix, e.data.split.train);
    e.X_test = features_for(e.matrix, e.data.split.test);
    e.Y_train = Targets::from_dataset(e.data.split.train);
    return e;
}

}  // namespace

Prepared run_ingest(const RunConfig& cfg, const LogSink& log) {
    auto imputed = impute_missing_labels(load_manifest(cfg.manifest, cfg.schema(), cfg.dataset));
    auto parts = split(imputed.dataset, cfg.split);
    Prepared p{std::move(imputed.dataset), std::move(parts), imputed.imputed};
    ensure_dir(cfg.out_dir);
    write_id_list(cfg.out_dir / "train_ids.txt", p.split.train);
    write_id_list(cfg.out_dir / "test_ids.txt", p.split.test);
    std::size_t missing = 0;
    for (const auto& s : p.full.samples) missing += s.image_missing;
    say(log, "ingest: " + std::to_string(p.full.size()) + " samples (" + std::to_string(p.split.train.size()) +
                 " train, " + std::to_string(p.split.test.size()) + " test), " + std::to_string(p.imputed) +
                 " labels imputed, " + std::to_string(missing) + " images missing");
    return p;
}

Encoder open_encoder(const RunConfig& cfg) {
    auto spec = default_encoder_spec(cfg.encoder_id, cfg.encoder_graph);
    spec.batch_size = cfg.batch_size;
    spec.threads = cfg.threads;
    return load_encoder(spec);
}

std::filesystem::path cache_path(const RunConfig& cfg, const Encoder& enc) {
    return cfg.cache_dir / (safe_name(cfg.dataset) + "." + std::string(to_string(enc.spec().encoder_id)) + "." +
                            hex16(enc.graph_fingerprint()) + "." + hex16(cfg.preprocess.hash()) + ".embd");
}

EmbeddingMatrix embed_dataset(const Dataset& ds, const RunConfig& cfg, const Encoder& enc, EmbedStats& stats,
                              const LogSink& log) {
    const std::uint64_t prehash = cfg.preprocess.hash();
    stats.cache_file = cache_path(cfg, enc);
    const std::size_t n = ds.size();
    if (auto m = try_cache(stats.cache_file, ds, 0, n, enc, prehash, log)) {
        stats.reused_rows += n;
        say(log, "embed: " + std::to_string(n) + " rows from " + stats.cache_file.string());
        return std::move(*m);
    }

    ensure_dir(cfg.cache_dir);
    auto shard_dir = stats.cache_file;
    shard_dir += ".shards";
    ensure_dir(shard_dir);
    const std::size_t shard = std::max<std::size_t>(cfg.batch_size * std::max(1u, cfg.threads), 64);
    const auto dim = static_cast<std::size_t>(enc.embedding_dim());

    EmbeddingMatrix all;
    all.rows = n;
    all.dim = dim;
    all.encoder_id = std::string(to_string(enc.spec().encoder_id));
    all.preprocess_hash = prehash;
    all.data.reserve(n * dim);
    for (std::size_t first = 0; first < n; first += shard) {
        const std::size_t count = std::min(shard, n - first);
        const auto path = shard_dir / (hex16(first) + ".embd");
        auto part = try_cache(path, ds, first, count, enc, prehash, log);
        if (part) {
            stats.reused_rows += count;
        } else {
            std::vector<ImageTensor> tensors(count);
            parallel_for(count, cfg.threads, [&](std::size_t i) {
                const auto& s = ds.samples[first + i];
                tensors[i] = preprocess_image(s.image_path, s.image_missing, cfg.preprocess, s.id);
            });
            auto emb = enc.embed_batch(tensors);
            stats.encoder_invocations += count;
            EmbeddingMatrix m;
            m.rows = count;
            m.dim = dim;
            m.encoder_id = all.encoder_id;
            m.preprocess_hash = prehash;
            m.data.reserve(count * dim);
            for (auto& v : emb) {
                m.data.insert(m.data.end(), v.vector.begin(), v.vector.end());
                m.sample_ids.push_back(std::move(v.sample_id));
            }
            write_cache(m, path);
            part = std::move(m);
        }
        all.data.insert(all.data.end(), part->data.begin(), part->data.end());
        all.sample_ids.insert(all.sample_ids.end(), part->sample_ids.begin(), part->sample_ids.end());
        say(log, "embed: " + std::to_string(first + count) + "/" + std::to_string(n));
    }
    write_cache(all, stats.cache_file);
    std::error_code ec;
    std::filesystem::remove_all(shard_dir, ec);
    return all;
}

Features features_for(const EmbeddingMatrix& m, const Dataset& ds) {
    std::unordered_map<std::string_view, std::size_t> row;
    for (std::size_t i = 0; i < m.rows; ++i) row.emplace(m.sample_ids[i], i);
    std::vector<std::size_t> idx;
    idx.reserve(ds.size());
    for (const auto& s : ds.samples) {
        auto it = row.find(s.id);
        if (it == row.end()) fail(ErrorKind::Validation, "no embedding for sample '" + s.id + "'");
        idx.push_back(it->second);
    }
    Features all = Features::from_embeddings(m);
    auto out = all.select(idx);
    out.require_finite();
    return out;
}

EvaluateResult evaluate_model(const TrainedModel& model, const Features& X, const Dataset& test,
                              const RunConfig& cfg) {
    const auto& schema = schema_of(model);
    if (!(schema == cfg.schema())) fail(ErrorKind::Config, "model label schema does not match the config's classes");
    const auto Y = Targets::from_dataset(test);
    const auto scores = model_scores(model, X);
    const auto pred = labels_from_scores(scores, schema.kind());
    EvaluateResult r;
    r.metrics = full_report(schema, Y, pred, scores, cfg.averaging);
    ensure_dir(cfg.out_dir / "roc");
    write_text(cfg.out_dir / "metrics.json", metrics_json(r.metrics));
    write_text(cfg.out_dir / "metrics.csv", metrics_csv(r.metrics));
    r.roc.resize(schema.num_classes());
    for (std::size_t c = 0; c < schema.num_classes(); ++c) {
        // binary: the negative column's curve is the mirror image, skip it
        if (!r.metrics.auc.per_class[c] || (schema.kind() == TaskKind::Binary && c == 0)) continue;
        const auto name = safe_name(schema.class_names()[c]);
        r.roc[c] = emit_roc_points(scores.column(c), label_column(Y, c), cfg.out_dir / "roc" / (name + ".csv"));
        if (cfg.roc_svg)
            write_text(cfg.out_dir / "roc" / (name + ".svg"),
                       roc_svg(r.roc[c], cfg.dataset + " / " + schema.class_names()[c]));
    }
    return r;
}

void cmd_ingest(const RunConfig& cfg, const LogSink& log) { stage("ingest", nullptr, [&] { run_ingest(cfg, log); }); }

EmbedStats cmd_embed(const RunConfig& cfg, const LogSink& log) {
    return ingest_and_embed(cfg, nullptr, log).stats;
}

GridSearchResult cmd_gridsearch(const RunConfig& cfg, const LogSink& log) {
    auto e = ingest_and_embed(cfg, nullptr, log);
    return stage("gridsearch", nullptr, [&] {
        auto r = grid_search(e.X_train, e.Y_train, cfg.schema(), cfg.family, cfg.grid, cfg.seed, cfg.solver,
                             cfg.threads, cfg.folds);
        write_text(cfg.out_dir / "cv.csv", cv_table_csv(r.cv));
        write_text(cfg.out_dir / "winner.json", winner_json(r.cv, cfg.folds));
        save_model(r.model, cfg.out_dir / "model.emdl");
        say(log, "gridsearch: winner " + r.cv.best().config.label());
        return r;
    });
}

TrainedModel cmd_train(const RunConfig& cfg, const LogSink& log) {
    auto e = ingest_and_embed(cfg, nullptr, log);
    return stage("train", nullptr, [&] {
        auto opts = cfg.solver;
        opts.threads = cfg.threads;
        auto m = train_model(e.X_train, e.Y_train, cfg.schema(), cfg.train, opts);
        save_model(m, cfg.out_dir / "model.emdl");
        say(log, "train: " + cfg.train.label());
        return m;
    });
}

EvaluateResult cmd_evaluate(const RunConfig& cfg, const std::filesystem::path& model_path, const LogSink& log) {
    auto model = stage("load-model", nullptr, [&] { return load_model(model_path); });
    auto e = ingest_and_embed(cfg, nullptr, log);
    return stage("evaluate", nullptr, [&] { return evaluate_model(model, e.X_test, e.data.split.test, cfg); });
}

RunRecord run_pipeline(const RunConfig& cfg, bool canonical, const LogSink& log) {
    RunRecord rec;
    rec.dataset = cfg.dataset;
    rec.encoder_id = std::string(to_string(cfg.encoder_id));
    rec.family = cfg.family;
    std::optional<BenchmarkTable> bench;
    if (!cfg.benchmarks.empty()) {
        bench = stage("benchmarks", nullptr, [&] { return BenchmarkTable::load(cfg.benchmarks); });
        if (!bench->contains(cfg.dataset))
            say(log, "warning: no benchmark AUC for '" + cfg.dataset + "'; the record carries no comparison");
    }
    auto e = ingest_and_embed(cfg, &rec.timings, log);
    rec.encoder_invocations = e.stats.encoder_invocations;
    auto search = stage("gridsearch", &rec.timings, [&] {
        auto r = grid_search(e.X_train, e.Y_train, cfg.schema(), cfg.family, cfg.grid, cfg.seed, cfg.solver,
                             cfg.threads, cfg.folds);
        write_text(cfg.out_dir / "cv.csv", cv_table_csv(r.cv));
        write_text(cfg.out_dir / "winner.json", winner_json(r.cv, cfg.folds));
        save_model(r.model, cfg.out_dir / "model.emdl");
        return r;
    });
    rec.winner = search.cv.best().config;
    rec.cv_mean_auc = search.cv.best().mean;
    say(log, "gridsearch: winner " + rec.winner.label() + " (mean CV AUC " + std::to_string(rec.cv_mean_auc) + ")");
    auto ev = stage("evaluate", &rec.timings,
                    [&] { return evaluate_model(search.model, e.X_test, e.data.split.test, cfg); });
    rec.metrics = std::move(ev.metrics);
    if (bench && bench->contains(cfg.dataset)) rec.benchmark = compare_to_benchmark(cfg.dataset, rec.metrics.auc.average, *bench);
    write_text(cfg.out_dir / "run_record.json", run_record_json(rec, canonical));
    say(log, "evaluate: test AUC " + std::to_string(rec.metrics.auc.average));
    return rec;
}

RunRecord read_run_record(const std::filesystem::path& path) {
    RunRecord r;
    try {
        const auto j = nlohmann::json::parse(bytes::read_all(path, "run record"));
        r.dataset = j.at("dataset").get<std::string>();
        r.encoder_id = j.at("encoder_id").get<std::string>();
        r.family = parse_family(j.at("family").get<std::string>());
        const auto& w = j.at("winner");
        r.winner.family = parse_family(w.at("family").get<std::string>());
        r.winner.C = w.at("C").get<double>();
        if (w.contains("loss")) r.winner.loss = parse_svm_loss(w.at("loss").get<std::string>());
        if (w.contains("kernel")) r.winner.kernel = parse_kernel_spec(w.at("kernel").get<std::string>());
        r.cv_mean_auc = j.at("cv_mean_auc").get<double>();
        const auto& m = j.at("metrics");
        r.metrics.task = parse_task_kind(m.at("task").get<std::string>());
        r.metrics.n = m.at("n").get<std::size_t>();
        r.metrics.accuracy = m.at("accuracy").get<double>();
        r.metrics.prf.precision_avg = m.at("precision").get<double>();
        r.metrics.prf.recall_avg = m.at("recall").get<double>();
        r.metrics.prf.f1_avg = m.at("f1").get<double>();
        r.metrics.auc.average = m.at("auc").get<double>();
        if (const auto& b = j.at("benchmark"); !b.is_null())
            r.benchmark = BenchmarkComparison{b.at("dataset").get<std::string>(), b.at("benchmark_auc").get<double>(),
                                              b.at("achieved_auc").get<double>(), b.at("delta").get<double>()};
        r.encoder_invocations = j.at("encoder_invocations").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Parse, path.string() + ": malformed run record: " + e.what());
    }
    return r;
}

}  // namespace embedclf
