#include <chrono>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "zfm/autobatcher.hpp"
#include "zfm/model_store.hpp"
#include "zfm/record_io.hpp"
#include "zfm/synth.hpp"
#include "zfm/trainer.hpp"

using json = nlohmann::json;
using namespace zfm;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitFormat = 3;
constexpr int kExitRuntime = 4;
constexpr int kReportSchemaVersion = 1;

SynthSchema parse_fields(const std::string& spec) {
    SynthSchema schema;
    std::stringstream ss(spec);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        int card = std::stoi(tok);
        if (card <= 0) throw ValidationError("field cardinality must be positive");
        schema.field_cardinalities.push_back(uint32_t(card));
    }
    if (schema.field_cardinalities.empty())
        throw ValidationError("--fields must list at least one cardinality");
    return schema;
}

OptimizerConfig parse_optimizer(const std::string& name, double lr) {
    OptimizerConfig cfg;
    if (name == "adagrad") {
        cfg = OptimizerConfig::adagrad();
    } else if (name == "adam") {
        cfg.kind = OptimizerKind::Adam;
    } else if (name == "lazy-adam") {
        cfg.kind = OptimizerKind::LazyAdam;
    } else {
        throw ValidationError("unknown optimizer: " + name);
    }
    if (lr > 0) cfg.lr = float(lr);
    return cfg;
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw FormatError("cannot open for writing: " + path);
    out << text;
}

void emit_report(const std::string& path, const std::string& kind, json body) {
    if (path.empty()) return;
    json wrapped{{"schema_version", kReportSchemaVersion}, {"kind", kind}};
    wrapped["data"] = std::move(body);
    write_text_file(path, wrapped.dump(2) + "\n");
}

// ------------------------------------------------------------------------ gen

struct GenOptions {
    size_t n = 10000;
    std::string fields = "100,100,100";
    uint64_t seed = 1;
    std::string format = "binary";
    std::string out;
};

int cmd_gen(const GenOptions& o) {
    SynthSchema schema = parse_fields(o.fields);
    double bayes = 0.0;
    if (o.format == "binary") {
        std::vector<uint8_t> bytes = generate_stream_bytes(schema, o.seed, o.n, &bayes);
        write_file(o.out, bytes);
        std::cout << "wrote " << bytes.size() << " bytes (" << o.n << " records) to "
                  << o.out << "\n";
    } else if (o.format == "csv") {
        SyntheticSource src(schema, o.seed);
        std::string csv;
        for (size_t i = 0; i < o.n; ++i) csv += csv_encode(src.next());
        bayes = src.bayes_logloss();
        write_text_file(o.out, csv);
        std::cout << "wrote " << csv.size() << " bytes (" << o.n << " records) to "
                  << o.out << "\n";
    } else {
        throw ValidationError("--format must be binary or csv");
    }
    std::cout << "n_features=" << schema.n_features()
              << " planted_bayes_logloss=" << bayes << "\n";
    return 0;
}

// ---------------------------------------------------------------------- train

struct TrainOptions {
    std::string in;
    std::string out_model;
    std::string arch = "fm";
    std::string fields = "100,100,100";
    uint32_t k = 4;
    std::vector<uint32_t> hidden;
    std::string optimizer = "lazy-adam";
    double lr = 0.0;
    size_t batch_size = 256;
    uint64_t seed = 42;
    std::string report_json;
};

int cmd_train(const TrainOptions& o) {
    SynthSchema schema = parse_fields(o.fields);
    TrainConfig cfg;
    cfg.arch = o.arch == "deepfm" ? Arch::DeepFM : Arch::FM;
    if (o.arch != "fm" && o.arch != "deepfm")
        throw ValidationError("--arch must be fm or deepfm");
    cfg.n_features = schema.n_features();
    cfg.k = o.k;
    cfg.n_fields = uint32_t(schema.field_cardinalities.size());
    cfg.field_starts = schema.field_starts();
    cfg.hidden_sizes = o.hidden;
    if (cfg.arch == Arch::DeepFM && cfg.hidden_sizes.empty())
        cfg.hidden_sizes = {32};
    cfg.optimizer = parse_optimizer(o.optimizer, o.lr);
    cfg.batch_size = o.batch_size;
    cfg.seed = o.seed;

    TrainResult result = [&] {
        if (o.in == "-") {
            RecordStream stream(std::cin);
            return train_stream(stream, cfg);
        }
        RecordStream stream(o.in);
        return train_stream(stream, cfg);
    }();

    if (!o.out_model.empty())
        write_file(o.out_model, save_artifact(result.params, &result.state, true));

    std::cout << result.report.to_json() << "\n";
    emit_report(o.report_json, "train_report", json::parse(result.report.to_json()));
    return 0;
}

// ---------------------------------------------------------------- serve-bench

struct ServeOptions {
    std::string model;
    double rate = 5000.0;  // requests/s
    double duration_s = 2.0;
    std::string arrival = "constant";
    double deadline_ms = 100.0;
    size_t max_batch = 64;
    double flush_interval_ms = 3.0;
    unsigned threads = 2;
    uint64_t seed = 1;
    double stall_prob = 0.0;
    double stall_ms = 5.0;
    bool verify = false;
    std::string report_json;
};

int cmd_serve_bench(const ServeOptions& o) {
    if (o.rate <= 0 || o.duration_s <= 0)
        throw ValidationError("rate and duration must be positive");
    LoadedArtifact artifact = load_artifact(read_file(o.model));
    auto model = std::make_shared<const ModelParams>(std::move(artifact.params));
    if (model->n_fields == 0 || model->field_starts.empty())
        throw ValidationError("model lacks field layout; cannot synthesize requests");

    BatcherConfig cfg;
    cfg.max_batch = o.max_batch;
    cfg.flush_interval =
        std::chrono::microseconds(int64_t(o.flush_interval_ms * 1000));
    cfg.n_batcher_threads = o.threads;
    cfg.request_timeout = std::chrono::microseconds(int64_t(o.deadline_ms * 1000));
    cfg.stall_probability = o.stall_prob;
    cfg.stall_duration = std::chrono::microseconds(int64_t(o.stall_ms * 1000));
    cfg.stall_seed = o.seed;
    BatchEngine engine(model, cfg);

    std::mt19937_64 rng(o.seed);
    std::exponential_distribution<double> exp_gap(o.rate);
    const bool poisson = o.arrival == "poisson";
    if (!poisson && o.arrival != "constant")
        throw ValidationError("--arrival must be constant or poisson");

    auto make_example = [&] {
        SparseExample ex;
        for (uint32_t f = 0; f < model->n_fields; ++f) {
            uint32_t lo = model->field_starts[f], hi = model->field_starts[f + 1] - 1;
            ex.feature_ids.push_back(
                std::uniform_int_distribution<uint32_t>(lo, hi)(rng));
            ex.feature_values.push_back(1.0f);
        }
        return ex;
    };

    std::vector<PredictionTicket> tickets;
    std::vector<SparseExample> sent;
    using Clock = std::chrono::steady_clock;
    auto start = Clock::now();
    auto next = start;
    auto end = start + std::chrono::duration_cast<Clock::duration>(
                           std::chrono::duration<double>(o.duration_s));
    while (Clock::now() < end) {
        SparseExample ex = make_example();
        if (o.verify) sent.push_back(ex);
        tickets.push_back(engine.enqueue(std::move(ex)));
        double gap_s = poisson ? exp_gap(rng) : 1.0 / o.rate;
        next += std::chrono::duration_cast<Clock::duration>(
            std::chrono::duration<double>(gap_s));
        if (next > Clock::now()) std::this_thread::sleep_until(next);
    }
    for (auto& t : tickets) t.wait();

    size_t mismatches = 0;
    if (o.verify) {
        for (size_t i = 0; i < tickets.size(); ++i) {
            // tickets resolve in unknown order but indices line up with sent
            Outcome out = tickets[i].wait();
            if (out.kind != OutcomeKind::Probability) continue;
            PackedBatch b;
            b.push(sent[i]);
            if (out.probability != predict(b, *model)[0]) ++mismatches;
        }
    }

    ServeMetrics m = engine.shutdown_drain(std::chrono::milliseconds(500));
    std::cout << m.to_text();
    std::cout << "reduction_factor=" << m.avg_batch_size() << "\n";
    std::cout << "timeout_fraction="
              << (m.requests_total
                      ? double(m.timeouts_total) / double(m.requests_total)
                      : 0.0)
              << "\n";
    if (o.verify) std::cout << "verify_mismatches=" << mismatches << "\n";
    std::cout << "# latency_* and *_per_sec values are hardware-dependent\n";

    json body = json::parse(m.to_json());
    body["reduction_factor"] = m.avg_batch_size();
    body["timeout_fraction"] =
        m.requests_total ? double(m.timeouts_total) / double(m.requests_total) : 0.0;
    body["hardware_dependent"] = json::array({"latency_us"});
    if (o.verify) body["verify_mismatches"] = mismatches;
    emit_report(o.report_json, "serve_metrics", std::move(body));
    return 0;
}

// ---------------------------------------------------------------------- strip

int cmd_strip(const std::string& in, const std::string& out) {
    std::vector<uint8_t> bytes = read_file(in);
    ArtifactInfo before = artifact_info(bytes);
    if (!before.has_optimizer) {
        std::cout << "input has no optimizer state; copying unchanged\n";
        write_file(out, bytes);
        return 0;
    }
    std::vector<uint8_t> stripped = strip_artifact(bytes);
    ArtifactInfo after = artifact_info(stripped);
    write_file(out, stripped);
    double payload_before = double(before.params_len + before.optimizer_len);
    double payload_after = double(after.params_len);
    std::cout << "total_bytes_before=" << bytes.size() << "\n"
              << "total_bytes_after=" << stripped.size() << "\n"
              << "payload_reduction="
              << (1.0 - payload_after / payload_before) * 100.0 << "%\n";
    return 0;
}

// --------------------------------------------------------------------- report

int cmd_report(const std::vector<std::string>& paths, const std::string& out_json) {
    std::vector<json> train_reports, serve_reports;
    for (const auto& path : paths) {
        std::ifstream in(path);
        if (!in) throw FormatError("cannot open report: " + path);
        json j = json::parse(in, nullptr, false);
        if (j.is_discarded()) throw FormatError("invalid JSON in " + path);
        if (!j.contains("schema_version") || !j.contains("kind"))
            throw FormatError("not a zfm report: " + path);
        if (j["schema_version"] != kReportSchemaVersion)
            throw FormatError("conflicting report schema version in " + path);
        if (j["kind"] == "train_report")
            train_reports.push_back(j["data"]);
        else if (j["kind"] == "serve_metrics")
            serve_reports.push_back(j["data"]);
        else
            throw FormatError("unknown report kind in " + path);
    }

    json summary{{"schema_version", kReportSchemaVersion}, {"kind", "summary"}};
    if (!train_reports.empty()) {
        // aggregate from raw counters, never from pre-averaged fields
        uint64_t examples = 0, steps = 0, touched = 0;
        double wall = 0.0, loss_weighted = 0.0;
        for (const auto& r : train_reports) {
            examples += r["examples"].get<uint64_t>();
            steps += r["steps"].get<uint64_t>();
            touched += r["touched_entries_total"].get<uint64_t>();
            wall += r["wall_seconds"].get<double>();
            loss_weighted += r["mean_progressive_loss"].get<double>() *
                             double(r["steps"].get<uint64_t>());
        }
        summary["train"] = {
            {"runs", train_reports.size()},
            {"examples", examples},
            {"steps", steps},
            {"touched_entries_total", touched},
            {"examples_per_sec", wall > 0 ? double(examples) / wall : 0.0},
            {"mean_progressive_loss", steps ? loss_weighted / double(steps) : 0.0},
        };
    }
    if (!serve_reports.empty()) {
        uint64_t requests = 0, calls = 0, computed = 0, timeouts = 0;
        for (const auto& r : serve_reports) {
            requests += r["requests_total"].get<uint64_t>();
            calls += r["compute_calls_total"].get<uint64_t>();
            computed += r["examples_computed_total"].get<uint64_t>();
            timeouts += r["timeouts_total"].get<uint64_t>();
        }
        summary["serve"] = {
            {"runs", serve_reports.size()},
            {"requests_total", requests},
            {"compute_calls_total", calls},
            {"examples_computed_total", computed},
            {"timeouts_total", timeouts},
            {"avg_batch_size", calls ? double(computed) / double(calls) : 0.0},
            {"timeout_fraction",
             requests ? double(timeouts) / double(requests) : 0.0},
        };
    }

    std::cout << summary.dump(2) << "\n";
    if (!out_json.empty()) write_text_file(out_json, summary.dump(2) + "\n");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"sparse FM/DeepFM training and autobatched serving harness"};
    app.require_subcommand(1);
    app.set_config("--config")->configurable(false);

    GenOptions gen;
    auto* cgen = app.add_subcommand("gen", "generate a synthetic labeled stream");
    cgen->add_option("--n", gen.n, "number of records");
    cgen->add_option("--fields", gen.fields, "comma-separated field cardinalities");
    cgen->add_option("--seed", gen.seed, "PRNG seed");
    cgen->add_option("--format", gen.format, "binary|csv");
    cgen->add_option("--out", gen.out, "output path")->required();

    TrainOptions train;
    auto* ctrain = app.add_subcommand("train", "train a model from a record stream");
    ctrain->add_option("--in", train.in, "input stream path, or - for stdin")
        ->required();
    ctrain->add_option("--out-model", train.out_model, "output .zmdl artifact");
    ctrain->add_option("--arch", train.arch, "fm|deepfm");
    ctrain->add_option("--fields", train.fields, "comma-separated field cardinalities");
    ctrain->add_option("--k", train.k, "embedding dimension");
    ctrain->add_option("--hidden", train.hidden, "hidden layer sizes (deepfm)");
    ctrain->add_option("--optimizer", train.optimizer, "adagrad|adam|lazy-adam");
    ctrain->add_option("--lr", train.lr, "learning rate override");
    ctrain->add_option("--batch-size", train.batch_size, "mini-batch size");
    ctrain->add_option("--seed", train.seed, "PRNG seed");
    ctrain->add_option("--report-json", train.report_json, "write TrainReport JSON");

    ServeOptions serve;
    auto* cserve =
        app.add_subcommand("serve-bench", "run the autobatcher under synthetic load");
    cserve->add_option("--model", serve.model, "model artifact")->required();
    cserve->add_option("--rate", serve.rate, "request arrival rate per second");
    cserve->add_option("--duration-s", serve.duration_s, "load duration in seconds");
    cserve->add_option("--arrival", serve.arrival, "constant|poisson");
    cserve->add_option("--deadline-ms", serve.deadline_ms, "per-request deadline");
    cserve->add_option("--max-batch", serve.max_batch, "maximum batch size");
    cserve->add_option("--flush-interval-ms", serve.flush_interval_ms,
                       "oldest-waiter flush age");
    cserve->add_option("--threads", serve.threads, "batcher threads");
    cserve->add_option("--seed", serve.seed, "PRNG seed");
    cserve->add_option("--stall-prob", serve.stall_prob,
                       "injected stall probability per flush");
    cserve->add_option("--stall-ms", serve.stall_ms, "injected stall duration");
    cserve->add_flag("--verify", serve.verify,
                     "check every result against direct single-example predict");
    cserve->add_option("--report-json", serve.report_json, "write metrics JSON");

    std::string strip_in, strip_out;
    auto* cstrip =
        app.add_subcommand("strip", "remove optimizer state from an artifact");
    cstrip->add_option("--in", strip_in, "input artifact")->required();
    cstrip->add_option("--out", strip_out, "output artifact")->required();

    std::vector<std::string> report_paths;
    std::string report_out;
    auto* creport = app.add_subcommand("report", "merge train/serve JSON reports");
    creport->add_option("paths", report_paths, "report JSON files")->required();
    creport->add_option("--out", report_out, "write merged summary JSON");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitValidation;
    }

    try {
        if (*cgen) return cmd_gen(gen);
        if (*ctrain) return cmd_train(train);
        if (*cserve) return cmd_serve_bench(serve);
        if (*cstrip) return cmd_strip(strip_in, strip_out);
        if (*creport) return cmd_report(report_paths, report_out);
    } catch (const ValidationError& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const FormatError& e) {
        std::cerr << "format error: " << e.what() << "\n";
        return kExitFormat;
    } catch (const CorruptionError& e) {
        std::cerr << "corruption error: " << e.what() << "\n";
        return kExitFormat;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return 0;
}
