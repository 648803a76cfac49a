// autofocus: ground, eval, mock-gen, viz, probe, mock-serve.

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "autofocus/autofocus.hpp"

namespace fs = std::filesystem;
using namespace autofocus;

namespace {

struct ConfigFlags {
    std::string config_path;
    bool no_refine = false;
    double temperature = 0.75;
    int samples = 5;
    double beta = 50.0;
    std::vector<double> alphas{5.0, 8.0};
    double lambda = 0.5;
    int k_local = 3;
    double iou = 0.5;
    double min_crop = 336.0;
    int concurrency = 4;
    std::string mode = "full";
    std::vector<CLI::Option*> opts;
    CLI::Option* no_refine_opt = nullptr;
    CLI::Option* mode_opt = nullptr;

    void add(CLI::App& app) {
        app.add_option("--config", config_path, "JSON pipeline config (flags override it)")->check(CLI::ExistingFile);
        no_refine_opt = app.add_flag("--no-refine", no_refine, "Single greedy pass, no verification or zoom");
        opts = {
            app.add_option("--temperature", temperature, "Sampling temperature")->capture_default_str(),
            app.add_option("--samples", samples, "Number of sampled hypotheses")->capture_default_str(),
            app.add_option("--beta", beta, "Pixels per perplexity unit")->capture_default_str(),
            app.add_option("--alphas", alphas, "Global proposal scales")->delimiter(',')->capture_default_str(),
            app.add_option("--lambda", lambda, "Shape-aware zoom strength")->capture_default_str(),
            app.add_option("--k-local", k_local, "Local proposals kept after NMS")->capture_default_str(),
            app.add_option("--iou", iou, "NMS IoU threshold")->capture_default_str(),
            app.add_option("--min-crop", min_crop, "Minimum crop side in pixels")->capture_default_str(),
            app.add_option("--concurrency", concurrency, "In-flight refinement calls")->capture_default_str(),
        };
        mode_opt = app.add_option("--mode", mode, "Ablation: full, global_only, multi_sample_only")
                       ->check(CLI::IsMember({"full", "global_only", "multi_sample_only"}))
                       ->capture_default_str();
    }

    PipelineConfig resolve() const {
        PipelineConfig c = config_path.empty() ? PipelineConfig{} : load_config(config_path);
        auto set = [](CLI::Option* o) { return o->count() > 0; };
        if (set(opts[0])) c.uncertainty.temperature = temperature;
        if (set(opts[1])) c.uncertainty.n_samples = samples;
        if (set(opts[2])) c.uncertainty.beta = beta;
        if (set(opts[3])) c.proposals.alphas = alphas;
        if (set(opts[4])) c.proposals.lambda = lambda;
        if (set(opts[5])) c.proposals.k_local = k_local;
        if (set(opts[6])) c.proposals.iou_threshold = iou;
        if (set(opts[7])) c.proposals.min_crop = min_crop;
        if (set(opts[8])) c.concurrency_limit = concurrency;
        if (set(mode_opt)) c.mode = parse_ablation_mode(mode);
        if (no_refine) c.refinement_enabled = false;
        c.validate();
        return c;
    }
};

struct BackendFlags {
    std::string base_url, model, api_key;
    std::string verifier_url, aggregator_url;
    std::string mock_world;

    void add(CLI::App& app) {
        app.add_option("--base-url", base_url, "Predictor endpoint (default: $AUTOFOCUS_BASE_URL)");
        app.add_option("--model", model, "Model name (default: $AUTOFOCUS_MODEL)");
        app.add_option("--verifier-url", verifier_url, "Separate verifier endpoint");
        app.add_option("--aggregator-url", aggregator_url, "Separate aggregator endpoint");
        app.add_option("--mock-world", mock_world, "Use the in-process mock oracle from mock_world.json")
            ->check(CLI::ExistingFile);
    }
};

// Owns whatever models the flags describe.
struct BackendSet {
    std::vector<std::unique_ptr<ChatModel>> owned;
    Backends backends;
};

BackendSet make_backends(const BackendFlags& f) {
    BackendSet s;
    if (!f.mock_world.empty()) {
        LoadedWorld w = load_world(f.mock_world);
        s.owned.push_back(std::make_unique<MockWorld>(std::move(w.scenes), w.noise, w.oracle));
        s.backends = Backends::uniform(*s.owned.back());
        return s;
    }
    EndpointConfig base = endpoint_from_env({f.base_url, f.model, f.api_key});
    s.owned.push_back(std::make_unique<HttpChatModel>(base));
    const ChatModel* predictor = s.owned.back().get();
    auto extra = [&](const std::string& url) -> const ChatModel* {
        if (url.empty()) return predictor;
        EndpointConfig c = base;
        c.base_url = url;
        s.owned.push_back(std::make_unique<HttpChatModel>(c));
        return s.owned.back().get();
    };
    s.backends = {predictor, extra(f.verifier_url), extra(f.aggregator_url)};
    return s;
}

void write_trace_artifacts(const fs::path& dir, const std::string& stem, const Image& image, const Trace& trace,
                           const PipelineConfig& cfg, bool timings) {
    write_text(dir / (stem + ".trace.json"), to_json(trace, timings).dump(2) + "\n");
    if (!trace.kernels.empty()) emit_heatmap(trace, image.size(), dir / (stem + ".heatmap.png"));
    emit_overlay(image, trace, dir / (stem + ".overlay.png"), cfg.marker);
}

int cmd_ground(const std::string& image_path, const std::string& instruction, std::uint64_t seed,
               const std::string& out, const std::string& trace_dir, const ConfigFlags& cf, const BackendFlags& bf,
               bool timings) {
    const PipelineConfig cfg = cf.resolve();
    BackendSet bs = make_backends(bf);
    const Image image = read_png(image_path);
    const RunResult r = run(image, instruction, cfg, bs.backends, seed);
    nlohmann::json j = {{"image", image_path},
                        {"instruction", instruction},
                        {"point", to_json(r.point)},
                        {"trace", to_json(r.trace, timings)}};
    if (!trace_dir.empty()) write_trace_artifacts(trace_dir, "ground", image, r.trace, cfg, timings);
    if (out.empty()) {
        std::cout << j.dump(2) << "\n";
    } else {
        write_text(out, j.dump(2) + "\n");
        std::cout << "point " << r.point.x << " " << r.point.y << " (" << r.trace.path << ")\n";
    }
    return 0;
}

int cmd_eval(const std::string& dataset, std::uint64_t seed, const std::string& out, const std::string& trace_dir,
             int workers, const ConfigFlags& cf, const BackendFlags& bf, bool timings) {
    const PipelineConfig cfg = cf.resolve();
    BackendSet bs = make_backends(bf);
    const auto cases = load_dataset(dataset);
    EvalOptions opts;
    opts.base_seed = seed;
    opts.workers = workers;
    opts.keep_traces = !trace_dir.empty();
    EvalReport report = evaluate(cases, cfg, bs.backends, opts);
    if (!trace_dir.empty()) {
        for (const auto& cr : report.cases) {
            if (!cr.trace) continue;
            const std::string stem = "case_" + std::to_string(cr.index);
            write_trace_artifacts(trace_dir, stem, read_png(cases[cr.index].image_path), *cr.trace, cfg, timings);
        }
    }
    nlohmann::json j = report_to_json(report, cases, timings);
    j["config"] = config_to_json(cfg);
    j["seed"] = seed;
    j["prompt_version"] = std::string(prompts::version);
    if (out.empty()) {
        std::cout << j.dump(2) << "\n";
    } else {
        write_text(out, j.dump(2) + "\n");
    }
    std::fprintf(stderr, "accuracy: %s (%zu/%zu)\n",
                 report.accuracy() ? std::to_string(*report.accuracy()).c_str() : "n/a", report.correct,
                 report.total);
    return 0;
}

int cmd_mock_gen(const std::string& out, std::size_t scenes, std::uint64_t seed, const NoiseModel& noise,
                 const OracleConfig& oracle, int elements) {
    MockBenchmarkSpec spec;
    spec.n_scenes = scenes;
    spec.base_seed = seed;
    spec.noise = noise;
    spec.oracle = oracle;
    spec.scene.n_elements = elements;
    write_mock_benchmark(make_mock_benchmark(spec), out);
    std::cout << "wrote " << scenes << " scenes to " << out << "\n";
    return 0;
}

int cmd_viz(const std::string& trace_path, const std::string& image_path, const std::string& out_dir) {
    std::ifstream in(trace_path);
    if (!in) throw InvalidArgument("cannot open trace " + trace_path);
    nlohmann::json j = nlohmann::json::parse(in);
    if (j.contains("trace")) j = j["trace"];
    const Trace t = trace_from_json(j);
    const Image image = read_png(image_path);
    const fs::path dir(out_dir);
    if (!t.kernels.empty()) {
        emit_heatmap(t, image.size(), dir / "heatmap.png");
    } else {
        std::cerr << "trace has no density field (" << t.path << " path); skipping heatmap\n";
    }
    emit_overlay(image, t, dir / "overlay.png");
    std::cout << "wrote artifacts to " << dir.string() << "\n";
    return 0;
}

int cmd_probe(const BackendFlags& bf) {
    BackendSet bs = make_backends(bf);
    const ProbeResult r = probe(*bs.backends.predictor);
    if (r.ok) {
        std::cout << "probe: " << r.diagnostic << "\n";
        return 0;
    }
    std::cerr << "probe failed: " << r.diagnostic << "\n";
    return 2;
}

ModelServer* g_server = nullptr;

int cmd_mock_serve(const std::string& world_path, const std::string& host, int port, bool no_logprobs) {
    LoadedWorld w = load_world(world_path);
    const MockWorld world(std::move(w.scenes), w.noise, w.oracle);
    ModelServer server(world, ServeOptions{host, port, "autofocus-mock", no_logprobs});
    g_server = &server;
    std::signal(SIGINT, [](int) { if (g_server) g_server->stop(); });
    std::signal(SIGTERM, [](int) { if (g_server) g_server->stop(); });
    std::cout << "serving " << server.base_url() << std::endl;
    server.run();
    g_server = nullptr;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Uncertainty-guided zoom-in GUI grounding"};
    app.require_subcommand(1);

    std::uint64_t seed = 0;
    std::string out, trace_dir;
    bool timings = false;

    auto* ground_cmd = app.add_subcommand("ground", "Ground one instruction on one screenshot");
    std::string image, instruction;
    ConfigFlags ground_cfg;
    BackendFlags ground_be;
    ground_cmd->add_option("--image", image, "Screenshot (PNG)")->required()->check(CLI::ExistingFile);
    ground_cmd->add_option("--instruction", instruction, "Target description")->required();
    ground_cmd->add_option("--seed", seed, "Base seed")->capture_default_str();
    ground_cmd->add_option("--out", out, "Write result JSON here instead of stdout");
    ground_cmd->add_option("--trace-dir", trace_dir, "Write trace JSON, heatmap and overlay here");
    ground_cmd->add_flag("--timings", timings, "Include wall-clock timings in JSON output");
    ground_cfg.add(*ground_cmd);
    ground_be.add(*ground_cmd);

    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a dataset");
    std::string dataset;
    int workers = 1;
    ConfigFlags eval_cfg;
    BackendFlags eval_be;
    eval_cmd->add_option("--dataset", dataset, "Dataset JSON")->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--seed", seed, "Base seed; case i uses seed + i")->capture_default_str();
    eval_cmd->add_option("--out", out, "Report JSON path (stdout if absent)");
    eval_cmd->add_option("--trace-dir", trace_dir, "Per-case trace JSON and PNG artifacts");
    eval_cmd->add_option("--workers", workers, "Cases evaluated in parallel")->capture_default_str()
        ->check(CLI::PositiveNumber);
    eval_cmd->add_flag("--timings", timings, "Include wall-clock timings (reports stop being byte-stable)");
    eval_cfg.add(*eval_cmd);
    eval_be.add(*eval_cmd);

    auto* gen_cmd = app.add_subcommand("mock-gen", "Emit a synthetic benchmark");
    std::size_t scenes = 200;
    std::uint64_t gen_seed = 1000;
    int elements = 20;
    NoiseModel noise;
    OracleConfig oracle;
    gen_cmd->add_option("--out", out, "Output directory")->required();
    gen_cmd->add_option("--scenes", scenes, "Number of scenes")->capture_default_str();
    gen_cmd->add_option("--seed", gen_seed, "Seed of the first scene")->capture_default_str();
    gen_cmd->add_option("--elements", elements, "Elements per scene (1-25)")->capture_default_str()
        ->check(CLI::Range(1, 25));
    gen_cmd->add_option("--downsample", noise.downsample_factor, "Mock resolution loss")->capture_default_str();
    gen_cmd->add_option("--base-sigma", noise.base_sigma, "Mock noise scale")->capture_default_str();
    gen_cmd->add_option("--confusion", noise.confusion_rate, "Mock distractor rate")->capture_default_str();
    gen_cmd->add_option("--oracle-error", oracle.verify_error_rate, "Mock verify/aggregate error rate")
        ->capture_default_str();

    auto* viz_cmd = app.add_subcommand("viz", "Re-render heatmap and overlay from a trace");
    std::string trace_path;
    viz_cmd->add_option("--trace", trace_path, "Trace JSON")->required()->check(CLI::ExistingFile);
    viz_cmd->add_option("--image", image, "Screenshot the trace belongs to")->required()->check(CLI::ExistingFile);
    viz_cmd->add_option("--out", out, "Output directory")->required();

    auto* probe_cmd = app.add_subcommand("probe", "Check that a backend returns token logprobs");
    BackendFlags probe_be;
    probe_be.add(*probe_cmd);

    auto* serve_cmd = app.add_subcommand("mock-serve", "Serve the mock oracle over HTTP");
    std::string world_path, host = "127.0.0.1";
    int port = 8089;
    bool no_logprobs = false;
    serve_cmd->add_option("--mock-world", world_path, "mock_world.json")->required()->check(CLI::ExistingFile);
    serve_cmd->add_option("--host", host)->capture_default_str();
    serve_cmd->add_option("--port", port)->capture_default_str();
    serve_cmd->add_flag("--no-logprobs", no_logprobs, "Omit logprobs, like a backend that hides them");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*ground_cmd) return cmd_ground(image, instruction, seed, out, trace_dir, ground_cfg, ground_be, timings);
        if (*eval_cmd) return cmd_eval(dataset, seed, out, trace_dir, workers, eval_cfg, eval_be, timings);
        if (*gen_cmd) {
            oracle.aggregate_error_rate = oracle.verify_error_rate;
            return cmd_mock_gen(out, scenes, gen_seed, noise, oracle, elements);
        }
        if (*viz_cmd) return cmd_viz(trace_path, image, out);
        if (*probe_cmd) return cmd_probe(probe_be);
        if (*serve_cmd) return cmd_mock_serve(world_path, host, port, no_logprobs);
    } catch (const ConfigurationError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
