#include <gtest/gtest.h>

#include <filesystem>

#include "autofocus/harness.hpp"

using namespace autofocus;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("autofocus_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

const MockBenchmark& bench() {
    static const MockBenchmark b = [] {
        MockBenchmarkSpec spec;
        spec.n_scenes = 16;
        spec.base_seed = 77;
        return make_mock_benchmark(spec);
    }();
    return b;
}

const MockWorld& world() {
    static const MockWorld w(bench().scenes, bench().spec.noise, bench().spec.oracle);
    return w;
}

}  // namespace

TEST(Dataset, ThreeCaseFixtureRoundTrips) {
    const nlohmann::json j = nlohmann::json::parse(R"([
      {"img_filename": "a.png", "instruction": "Click Save", "bbox": [1, 2, 30, 40], "platform": "web", "target_kind": "text"},
      {"img_filename": "b.png", "instruction": "Open menu", "bbox": [5, 5, 9, 9], "platform": "macos", "target_kind": "icon"},
      {"img_filename": "sub/c.png", "instruction": "Close", "bbox": [0, 0, 1, 1], "platform": "web", "target_kind": "icon"}
    ])");
    const auto cases = parse_dataset(j, "/data");
    ASSERT_EQ(cases.size(), 3u);
    EXPECT_EQ(cases[2].image_path, fs::path("/data/sub/c.png"));
    EXPECT_EQ(cases[1].gt_bbox, (Box{5, 5, 9, 9}));
    EXPECT_EQ(cases[0].target_kind, "text");
    EXPECT_EQ(dataset_to_json(cases), j);
}

TEST(Dataset, MissingBboxNamesRecord) {
    const nlohmann::json j = nlohmann::json::parse(R"([
      {"img_filename": "a.png", "instruction": "x", "bbox": [1, 2, 3, 4]},
      {"img_filename": "b.png", "instruction": "y"}
    ])");
    try {
        parse_dataset(j, ".");
        FAIL() << "expected an error";
    } catch (const InvalidArgument& e) {
        EXPECT_NE(std::string(e.what()).find("record 1"), std::string::npos) << e.what();
        EXPECT_NE(std::string(e.what()).find("bbox"), std::string::npos) << e.what();
    }
    EXPECT_THROW(parse_dataset(nlohmann::json::parse(R"([{"img_filename": "a", "instruction": "x", "bbox": [1, 2]}])"), "."),
                 InvalidArgument);
    EXPECT_THROW(parse_dataset(nlohmann::json::object(), "."), InvalidArgument);
}

TEST(Dataset, MockExportRoundTrips) {
    const fs::path dir = scratch_dir("export");
    MockBenchmarkSpec spec;
    spec.n_scenes = 3;
    const MockBenchmark b = make_mock_benchmark(spec);
    write_mock_benchmark(b, dir);
    const auto cases = load_dataset(dir / "dataset.json");
    ASSERT_EQ(cases.size(), 3u);
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_EQ(cases[i].instruction, b.cases[i].instruction);
        EXPECT_EQ(cases[i].gt_bbox, b.cases[i].gt_bbox);
        EXPECT_EQ(read_png(cases[i].image_path), render_scene(b.scenes[i]));
    }
    const LoadedWorld w = load_world(dir / "mock_world.json");
    EXPECT_EQ(w.scenes.size(), 3u);
    EXPECT_DOUBLE_EQ(w.noise.base_sigma, spec.noise.base_sigma);
    EXPECT_DOUBLE_EQ(w.oracle.verify_error_rate, 0.05);
}

TEST(ScoreCase, InclusiveEdges) {
    EvalCase c;
    c.gt_bbox = {10, 10, 20, 20};
    EXPECT_TRUE(score_case({15, 15}, c));
    EXPECT_TRUE(score_case({10, 10}, c));
    EXPECT_TRUE(score_case({20, 20}, c));
    EXPECT_FALSE(score_case({21, 15}, c));
    EXPECT_FALSE(score_case({15, 9}, c));
}

TEST(Evaluate, EmptyDatasetHasNoAccuracy) {
    const EvalReport r = evaluate({}, {}, Backends::uniform(world()));
    EXPECT_EQ(r.total, 0u);
    EXPECT_FALSE(r.accuracy().has_value());
    const nlohmann::json j = report_to_json(r, {});
    EXPECT_FALSE(j.contains("accuracy"));
    EXPECT_EQ(j["total"], 0);
}

TEST(Evaluate, AggregatesMatchPerCaseRecords) {
    EvalOptions opts;
    opts.load_image = scene_loader(bench());
    opts.workers = 3;
    EvalReport r = evaluate(bench().cases, {}, Backends::uniform(world()), opts);
    std::size_t correct = 0;
    for (const auto& cr : r.cases) {
        ASSERT_TRUE(cr.final_point);
        EXPECT_EQ(cr.correct, score_case(*cr.final_point, bench().cases[cr.index]));
        correct += cr.correct;
    }
    EXPECT_EQ(r.correct, correct);
    EXPECT_DOUBLE_EQ(*r.accuracy(), double(correct) / 16.0);
    std::size_t split_total = 0;
    for (const auto& [kind, v] : r.by_kind) split_total += v.second;
    EXPECT_EQ(split_total, 16u);
    const auto snapshot = report_to_json(r, bench().cases);
    summarize(r, bench().cases);
    EXPECT_EQ(report_to_json(r, bench().cases), snapshot);
}

TEST(Evaluate, NoRefineEqualsPerCaseGreedy) {
    EvalOptions opts;
    opts.load_image = scene_loader(bench());
    opts.base_seed = 40;
    PipelineConfig cfg;
    cfg.refinement_enabled = false;
    const EvalReport r = evaluate(bench().cases, cfg, Backends::uniform(world()), opts);
    for (const auto& cr : r.cases) {
        const Image img = render_scene(bench().scenes[cr.index]);
        const GroundingResponse g = ground(
            world(), GroundingRequest{&img, bench().cases[cr.index].instruction, {0, 1, case_seed(40, cr.index)}, {}});
        EXPECT_EQ(*cr.final_point, g.point);
    }
}

TEST(Evaluate, ReportSchemaGolden) {
    EvalOptions opts;
    opts.load_image = scene_loader(bench());
    const std::vector<EvalCase> two(bench().cases.begin(), bench().cases.begin() + 2);
    const nlohmann::json j = report_to_json(evaluate(two, {}, Backends::uniform(world()), opts), two);
    std::vector<std::string> top;
    for (const auto& [k, _] : j.items()) top.push_back(k);
    EXPECT_EQ(top, (std::vector<std::string>{"accuracy", "by_platform", "by_target_kind", "calls", "cases", "correct",
                                             "total"}));
    std::vector<std::string> per_case;
    for (const auto& [k, _] : j["cases"][0].items()) per_case.push_back(k);
    EXPECT_EQ(per_case, (std::vector<std::string>{"correct", "final", "img_filename", "index", "trace"}));
    std::vector<std::string> trace;
    for (const auto& [k, _] : j["cases"][0]["trace"].items()) trace.push_back(k);
    EXPECT_EQ(trace, (std::vector<std::string>{"calls", "chosen", "fallback_used", "path", "proposals", "refined",
                                               "verify_result"}));
    EXPECT_TRUE(j["by_platform"].contains("mock"));
}

TEST(Evaluate, LoaderErrorsAreRecordedPerCase) {
    EvalCase c = bench().cases[0];
    c.image_path = "/nonexistent/file.png";
    const EvalReport r = evaluate({c}, {}, Backends::uniform(world()));
    ASSERT_EQ(r.cases.size(), 1u);
    EXPECT_FALSE(r.cases[0].error.empty());
    EXPECT_FALSE(r.cases[0].correct);
    EXPECT_DOUBLE_EQ(*r.accuracy(), 0.0);
}

TEST(Artifacts, DeterministicHeatmapAndOverlay) {
    const fs::path dir = scratch_dir("artifacts");
    const Image img = render_scene(bench().scenes[1]);
    const OracleConfig never_accept{1.0, 0.0};
    const MockWorld w(bench().scenes, bench().spec.noise, never_accept);
    const Trace t = run(img, bench().cases[1].instruction, {}, Backends::uniform(w), 5).trace;
    ASSERT_FALSE(t.kernels.empty());
    emit_heatmap(t, img.size(), dir / "a.png");
    emit_heatmap(t, img.size(), dir / "b.png");
    emit_overlay(img, t, dir / "c.png");
    emit_overlay(img, t, dir / "d.png");
    EXPECT_GT(fs::file_size(dir / "a.png"), 0u);
    EXPECT_EQ(read_file(dir / "a.png"), read_file(dir / "b.png"));
    EXPECT_EQ(read_file(dir / "c.png"), read_file(dir / "d.png"));
    const Image heat = read_png(dir / "a.png");
    EXPECT_EQ(heat.size(), (ImageSize{480, 270}));
}

TEST(Artifacts, OverlayBoxesSitOnTraceCoordinates) {
    const Image img(400, 300, Rgb{255, 255, 255});
    Trace t;
    RegionProposal local;
    local.box = {50.4, 60.0, 150.0, 160.2};
    local.kind = ProposalKind::local;
    RegionProposal global;
    global.box = {200, 20, 380, 200};
    global.kind = ProposalKind::global;
    t.proposals = {local, global};
    t.samples = {CoordinateSample{{300, 250}, 1, 1, 1}};
    t.final_point = {20, 280};
    const Image o = render_overlay(img, t);
    EXPECT_EQ(o.at(50, 100), overlay_palette::local);   // floor(50.4)
    EXPECT_EQ(o.at(149, 100), overlay_palette::local);  // ceil(150) - 1
    EXPECT_EQ(o.at(100, 60), overlay_palette::local);
    EXPECT_EQ(o.at(100, 160), overlay_palette::local);  // ceil(160.2) - 1
    EXPECT_EQ(o.at(52, 100), (Rgb{255, 255, 255}));
    EXPECT_EQ(o.at(200, 100), overlay_palette::global);
    EXPECT_EQ(o.at(300, 20), overlay_palette::global);
    EXPECT_EQ(o.at(300, 250), overlay_palette::sample);
    EXPECT_EQ(o.at(20, 280), MarkerStyle{}.color);
}

TEST(TraceJson, RoundTripForVisualization) {
    const Image img = render_scene(bench().scenes[2]);
    const MockWorld w(bench().scenes, bench().spec.noise, OracleConfig{1.0, 0.0});
    const Trace t = run(img, bench().cases[2].instruction, {}, Backends::uniform(w), 5).trace;
    const Trace back = trace_from_json(to_json(t));
    EXPECT_EQ(render_overlay(img, back), render_overlay(img, t));
    EXPECT_EQ(heatmap_png(back, img.size()), heatmap_png(t, img.size()));
    EXPECT_FALSE(to_json(t).contains("timings_ms"));
    EXPECT_TRUE(to_json(t, true).contains("timings_ms"));
}
