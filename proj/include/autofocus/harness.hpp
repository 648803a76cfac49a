#pragma once

// Dataset evaluation, reports and trace visualizations.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "autofocus/config.hpp"
#include "autofocus/field.hpp"
#include "autofocus/image.hpp"
#include "autofocus/marker.hpp"
#include "autofocus/mock_world.hpp"
#include "autofocus/pipeline.hpp"

namespace autofocus {

struct EvalCase {
    std::filesystem::path image_path;  // resolved against the dataset directory
    std::string img_filename;          // as written in the dataset file
    std::string instruction;
    Box gt_bbox;
    std::string platform;
    std::string target_kind;
};

/// Reads a JSON array of {img_filename, instruction, bbox, platform, target_kind}.
inline std::vector<EvalCase> parse_dataset(const nlohmann::json& j, const std::filesystem::path& base_dir) {
    if (!j.is_array()) throw InvalidArgument("dataset: top level must be a JSON array");
    std::vector<EvalCase> cases;
    for (std::size_t i = 0; i < j.size(); ++i) {
        const auto& r = j[i];
        auto fail = [&](const std::string& why) -> InvalidArgument {
            return InvalidArgument("dataset record " + std::to_string(i) + ": " + why);
        };
        if (!r.is_object()) throw fail("not an object");
        for (const char* key : {"img_filename", "instruction", "bbox"}) {
            if (!r.contains(key)) throw fail(std::string("missing field '") + key + "'");
        }
        EvalCase c;
        try {
            c.img_filename = r.at("img_filename").get<std::string>();
            c.instruction = r.at("instruction").get<std::string>();
            const auto& b = r.at("bbox");
            if (!b.is_array() || b.size() != 4) throw fail("bbox must be [x1, y1, x2, y2]");
            c.gt_bbox = {b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()};
            c.platform = r.value("platform", "");
            c.target_kind = r.value("target_kind", "");
        } catch (const nlohmann::json::exception& e) {
            throw fail(e.what());
        }
        if (c.img_filename.empty()) throw fail("empty img_filename");
        if (c.instruction.empty()) throw fail("empty instruction");
        if (!(c.gt_bbox.x_max >= c.gt_bbox.x_min && c.gt_bbox.y_max >= c.gt_bbox.y_min) || c.gt_bbox.x_min < 0 ||
            c.gt_bbox.y_min < 0) {
            throw fail("invalid bbox");
        }
        c.image_path = base_dir / c.img_filename;
        cases.push_back(std::move(c));
    }
    return cases;
}

inline std::vector<EvalCase> load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InvalidArgument("cannot open dataset " + path.string());
    const nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw InvalidArgument("dataset " + path.string() + " is not valid JSON");
    return parse_dataset(j, path.parent_path());
}

inline nlohmann::json dataset_to_json(const std::vector<EvalCase>& cases) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& c : cases) {
        j.push_back({{"img_filename", c.img_filename},
                     {"instruction", c.instruction},
                     {"bbox", {c.gt_bbox.x_min, c.gt_bbox.y_min, c.gt_bbox.x_max, c.gt_bbox.y_max}},
                     {"platform", c.platform},
                     {"target_kind", c.target_kind}});
    }
    return j;
}

/// Inclusive point-in-box.
inline bool score_case(Point pred, const EvalCase& c) { return contains(c.gt_bbox, pred); }

struct CaseResult {
    std::size_t index = 0;
    std::optional<Point> final_point;  // absent when the pipeline errored
    bool correct = false;
    std::string error;
    std::optional<Trace> trace;
};

struct EvalReport {
    std::vector<CaseResult> cases;
    std::size_t total = 0;
    std::size_t correct = 0;
    std::map<std::string, std::pair<std::size_t, std::size_t>> by_platform;  // correct, total
    std::map<std::string, std::pair<std::size_t, std::size_t>> by_kind;
    CallCounts calls;
    double wall_clock_s = 0.0;

    std::optional<double> accuracy() const {
        if (total == 0) return std::nullopt;
        return double(correct) / double(total);
    }
};

using ImageLoader = std::function<Image(const EvalCase&)>;

struct EvalOptions {
    std::uint64_t base_seed = 0;
    int workers = 1;
    ImageLoader load_image;  // defaults to reading the PNG at image_path
    bool keep_traces = false;
};

inline std::uint64_t case_seed(std::uint64_t base, std::size_t index) { return base + index; }

/// Recomputes the aggregate fields from the per-case records.
inline void summarize(EvalReport& r, const std::vector<EvalCase>& cases) {
    r.total = r.cases.size();
    r.correct = 0;
    r.by_platform.clear();
    r.by_kind.clear();
    r.calls = {};
    for (const auto& cr : r.cases) {
        const EvalCase& c = cases[cr.index];
        r.correct += cr.correct ? 1 : 0;
        auto& p = r.by_platform[c.platform];
        auto& k = r.by_kind[c.target_kind];
        p.first += cr.correct ? 1 : 0;
        ++p.second;
        k.first += cr.correct ? 1 : 0;
        ++k.second;
        if (cr.trace) {
            r.calls.predictor += cr.trace->calls.predictor;
            r.calls.verifier += cr.trace->calls.verifier;
            r.calls.aggregator += cr.trace->calls.aggregator;
            r.calls.refinement += cr.trace->calls.refinement;
        }
    }
}

inline EvalReport evaluate(const std::vector<EvalCase>& cases, const PipelineConfig& cfg, const Backends& backends,
                           const EvalOptions& opts = {}) {
    cfg.validate();
    const auto start = std::chrono::steady_clock::now();
    const ImageLoader loader = opts.load_image ? opts.load_image : [](const EvalCase& c) { return read_png(c.image_path); };
    EvalReport report;
    report.cases = detail::bounded_map<CaseResult>(cases.size(), opts.workers, [&](std::size_t i) {
        CaseResult cr;
        cr.index = i;
        try {
            const Image img = loader(cases[i]);
            RunResult rr = run(img, cases[i].instruction, cfg, backends, case_seed(opts.base_seed, i));
            cr.final_point = rr.point;
            cr.correct = score_case(rr.point, cases[i]);
            cr.trace = std::move(rr.trace);
        } catch (const std::exception& e) {
            cr.error = e.what();
        }
        return cr;
    });
    summarize(report, cases);
    if (!opts.keep_traces) {
        // Call counts are already folded into the summary.
        for (auto& cr : report.cases) {
            if (cr.trace) {
                Trace slim;
                slim.path = cr.trace->path;
                slim.calls = cr.trace->calls;
                slim.verify_result = cr.trace->verify_result;
                slim.fallback_used = cr.trace->fallback_used;
                slim.chosen = cr.trace->chosen;
                slim.refined.resize(cr.trace->refined.size());
                slim.proposals.resize(cr.trace->proposals.size());
                cr.trace = std::move(slim);
            }
        }
    }
    report.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
}

inline nlohmann::json report_to_json(const EvalReport& r, const std::vector<EvalCase>& cases,
                                     bool include_wall_clock = false) {
    auto split = [](const std::map<std::string, std::pair<std::size_t, std::size_t>>& m) {
        nlohmann::json j = nlohmann::json::object();
        for (const auto& [key, v] : m) {
            j[key] = {{"correct", v.first}, {"total", v.second}, {"accuracy", double(v.first) / double(v.second)}};
        }
        return j;
    };
    nlohmann::json per_case = nlohmann::json::array();
    for (const auto& cr : r.cases) {
        nlohmann::json jc = {{"index", cr.index}, {"img_filename", cases[cr.index].img_filename},
                             {"correct", cr.correct}};
        jc["final"] = cr.final_point ? to_json(*cr.final_point) : nlohmann::json(nullptr);
        if (!cr.error.empty()) jc["error"] = cr.error;
        if (cr.trace) {
            jc["trace"] = {{"path", cr.trace->path},
                           {"verify_result", cr.trace->verify_result},
                           {"proposals", cr.trace->proposals.size()},
                           {"refined", cr.trace->refined.size()},
                           {"chosen", cr.trace->chosen ? nlohmann::json(*cr.trace->chosen) : nlohmann::json(nullptr)},
                           {"fallback_used", cr.trace->fallback_used},
                           {"calls",
                            {{"predictor", cr.trace->calls.predictor},
                             {"verifier", cr.trace->calls.verifier},
                             {"aggregator", cr.trace->calls.aggregator}}}};
        }
        per_case.push_back(std::move(jc));
    }
    nlohmann::json j = {{"total", r.total},
                        {"correct", r.correct},
                        {"by_platform", split(r.by_platform)},
                        {"by_target_kind", split(r.by_kind)},
                        {"calls",
                         {{"predictor", r.calls.predictor},
                          {"verifier", r.calls.verifier},
                          {"aggregator", r.calls.aggregator},
                          {"refinement", r.calls.refinement}}},
                        {"cases", per_case}};
    if (const auto acc = r.accuracy()) j["accuracy"] = *acc;
    if (include_wall_clock) j["wall_clock_s"] = r.wall_clock_s;
    return j;
}

// ---------------------------------------------------------------------------
// Visualizations

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

/// 8-bit grayscale rendering of the density field, one pixel per `downsample` cell.
inline std::vector<std::uint8_t> heatmap_png(const Trace& trace, ImageSize image, int downsample = 4) {
    if (trace.kernels.empty()) throw InvalidArgument("heatmap: trace has no density field (accepted or baseline path)");
    const Heatmap h = rasterize_field(trace.kernels, image, downsample);
    std::vector<std::uint8_t> gray(h.values.size());
    for (std::size_t i = 0; i < gray.size(); ++i) gray[i] = std::uint8_t(std::lround(255.0 * h.values[i]));
    return encode_png_gray(h.width, h.height, gray);
}

inline void emit_heatmap(const Trace& trace, ImageSize image, const std::filesystem::path& out, int downsample = 4) {
    write_file(out, heatmap_png(trace, image, downsample));
}

namespace overlay_palette {
inline constexpr Rgb sample{0, 160, 255};
inline constexpr Rgb local{0, 200, 0};
inline constexpr Rgb global{255, 140, 0};
}  // namespace overlay_palette

/// Outline of the rasterized box, `thickness` pixels inward.
inline void draw_box_outline(Image& img, const Box& box, Rgb color, int thickness = 2) {
    const PixelRect r = rasterize(box, img.size());
    const int t = std::max(1, std::min({thickness, r.width, r.height}));
    img.fill_rect({r.x, r.y, r.width, t}, color);
    img.fill_rect({r.x, r.y + r.height - t, r.width, t}, color);
    img.fill_rect({r.x, r.y, t, r.height}, color);
    img.fill_rect({r.x + r.width - t, r.y, t, r.height}, color);
}

inline Image render_overlay(const Image& image, const Trace& trace, const MarkerStyle& marker = {}) {
    Image out = image;
    for (const auto& p : trace.proposals) {
        draw_box_outline(out, p.box, p.kind == ProposalKind::local ? overlay_palette::local : overlay_palette::global);
    }
    for (const auto& s : trace.samples) {
        const int x = int(std::floor(s.point.x)), y = int(std::floor(s.point.y));
        out.fill_rect({x - 2, y - 2, 5, 5}, overlay_palette::sample);
    }
    return draw_marker(out, trace.final_point, marker);
}

inline void emit_overlay(const Image& image, const Trace& trace, const std::filesystem::path& out,
                         const MarkerStyle& marker = {}) {
    write_png(out, render_overlay(image, trace, marker));
}

// ---------------------------------------------------------------------------
// Synthetic benchmark export

struct MockBenchmarkSpec {
    std::size_t n_scenes = 200;
    std::uint64_t base_seed = 1000;
    SceneSpec scene;
    NoiseModel noise;
    OracleConfig oracle;
};

struct MockBenchmark {
    MockBenchmarkSpec spec;
    std::vector<Scene> scenes;
    std::vector<EvalCase> cases;  // one per scene
};

inline std::string scene_filename(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "images/scene_%04zu.png", i);
    return buf;
}

inline MockBenchmark make_mock_benchmark(const MockBenchmarkSpec& spec) {
    MockBenchmark b;
    b.spec = spec;
    for (std::size_t i = 0; i < spec.n_scenes; ++i) {
        const std::uint64_t seed = spec.base_seed + i;
        Scene s = generate_scene(seed, spec.scene);
        std::mt19937_64 rng(detail::combine(seed, 0x7A59E7ull));
        const SceneElement& target = s.elements[rng() % s.elements.size()];
        EvalCase c;
        c.img_filename = scene_filename(i);
        c.instruction = instruction_for(target);
        c.gt_bbox = target.bbox;
        c.platform = "mock";
        c.target_kind = target.kind == ElementKind::icon ? "icon" : "text";
        b.cases.push_back(std::move(c));
        b.scenes.push_back(std::move(s));
    }
    return b;
}

inline nlohmann::json world_to_json(const MockBenchmarkSpec& spec, const std::vector<Scene>& scenes) {
    nlohmann::json js = nlohmann::json::array();
    for (const auto& s : scenes) js.push_back(scene_to_json(s));
    return {{"noise",
             {{"downsample_factor", spec.noise.downsample_factor},
              {"base_sigma", spec.noise.base_sigma},
              {"confusion_rate", spec.noise.confusion_rate}}},
            {"oracle",
             {{"verify_error_rate", spec.oracle.verify_error_rate},
              {"aggregate_error_rate", spec.oracle.aggregate_error_rate}}},
            {"scenes", js}};
}

struct LoadedWorld {
    NoiseModel noise;
    OracleConfig oracle;
    std::vector<Scene> scenes;
};

inline LoadedWorld world_from_json(const nlohmann::json& j) {
    LoadedWorld w;
    const auto& n = j.at("noise");
    w.noise = {n.at("downsample_factor").get<double>(), n.at("base_sigma").get<double>(),
               n.at("confusion_rate").get<double>()};
    const auto& o = j.at("oracle");
    w.oracle = {o.at("verify_error_rate").get<double>(), o.at("aggregate_error_rate").get<double>()};
    for (const auto& s : j.at("scenes")) w.scenes.push_back(scene_from_json(s));
    return w;
}

inline LoadedWorld load_world(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InvalidArgument("cannot open mock world " + path.string());
    return world_from_json(nlohmann::json::parse(in));
}

/// Writes dataset.json, mock_world.json and images/*.png under `dir`.
inline void write_mock_benchmark(const MockBenchmark& b, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir / "images");
    for (std::size_t i = 0; i < b.scenes.size(); ++i) write_png(dir / b.cases[i].img_filename, render_scene(b.scenes[i]));
    write_text(dir / "dataset.json", dataset_to_json(b.cases).dump(2) + "\n");
    write_text(dir / "mock_world.json", world_to_json(b.spec, b.scenes).dump(1) + "\n");
}

/// Image loader that renders scenes in memory instead of decoding PNGs.
inline ImageLoader scene_loader(const MockBenchmark& b) {
    return [&b](const EvalCase& c) {
        for (std::size_t i = 0; i < b.cases.size(); ++i) {
            if (b.cases[i].img_filename == c.img_filename) return render_scene(b.scenes[i]);
        }
        throw InvalidArgument("no scene for " + c.img_filename);
    };
}

}  // namespace autofocus
