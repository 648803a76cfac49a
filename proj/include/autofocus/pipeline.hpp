#pragma once

// The full loop: greedy guess, marker self-check, sampling, Gaussian focusing,
// zoomed re-grounding of each proposal, and visual aggregation.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <exception>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "autofocus/backend.hpp"
#include "autofocus/error.hpp"
#include "autofocus/field.hpp"
#include "autofocus/geometry.hpp"
#include "autofocus/image.hpp"
#include "autofocus/marker.hpp"
#include "autofocus/proposals.hpp"
#include "autofocus/uncertainty.hpp"

namespace autofocus {

enum class AblationMode { full, global_only, multi_sample_only };

inline const char* to_string(AblationMode m) {
    switch (m) {
        case AblationMode::full: return "full";
        case AblationMode::global_only: return "global_only";
        case AblationMode::multi_sample_only: return "multi_sample_only";
    }
    return "full";
}

inline AblationMode parse_ablation_mode(std::string_view s) {
    if (s == "full") return AblationMode::full;
    if (s == "global_only") return AblationMode::global_only;
    if (s == "multi_sample_only") return AblationMode::multi_sample_only;
    throw InvalidArgument("unknown ablation mode: " + std::string(s));
}

struct PipelineConfig {
    UncertaintyConfig uncertainty;
    ProposalConfig proposals;
    MarkerStyle marker;
    ResizePolicy crop_target;
    int concurrency_limit = 4;
    bool refinement_enabled = true;
    AblationMode mode = AblationMode::full;
    CoordinateGrammar grammar;
    PplScope ppl_scope = PplScope::coordinate_tokens;
    GroundOptions ground_options;

    void validate() const {
        if (uncertainty.n_samples < 1) throw InvalidArgument("config: samples must be >= 1");
        if (!(uncertainty.temperature > 0.0)) throw InvalidArgument("config: sampling temperature must be > 0");
        if (!(uncertainty.top_p > 0.0 && uncertainty.top_p <= 1.0)) throw InvalidArgument("config: top_p in (0, 1]");
        if (!(uncertainty.beta > 0.0)) throw InvalidArgument("config: beta must be > 0");
        if (proposals.k_local < 0) throw InvalidArgument("config: k_local must be >= 0");
        if (proposals.alphas.empty() && proposals.k_local == 0) {
            throw InvalidArgument("config: no proposals would be generated");
        }
        for (double a : proposals.alphas) {
            if (!(a > 0.0)) throw InvalidArgument("config: alphas must be positive");
        }
        if (proposals.lambda < 0.0 || proposals.lambda > 1.0) throw InvalidArgument("config: lambda in [0, 1]");
        if (proposals.iou_threshold < 0.0 || proposals.iou_threshold > 1.0) {
            throw InvalidArgument("config: iou threshold in [0, 1]");
        }
        if (!(proposals.min_crop >= 1.0)) throw InvalidArgument("config: min crop must be >= 1");
        if (concurrency_limit < 1) throw InvalidArgument("config: concurrency must be >= 1");
        if (marker.radius < 4) throw InvalidArgument("config: marker radius must be >= 4");
    }
};

struct Backends {
    const ChatModel* predictor = nullptr;
    const ChatModel* verifier = nullptr;
    const ChatModel* aggregator = nullptr;

    static Backends uniform(const ChatModel& m) { return {&m, &m, &m}; }
};

struct CallCounts {
    int predictor = 0;
    int verifier = 0;
    int aggregator = 0;
    int refinement = 0;  // subset of predictor calls issued on zoomed crops

    int total() const { return predictor + verifier + aggregator; }
};

struct RefinedPoint {
    std::size_t region = 0;  // index into Trace::proposals
    Point local;             // frame of the resized crop
    Point global;            // frame of the original image
    bool outside_region = false;
};

struct Timings {
    double initial_ms = 0.0, verify_ms = 0.0, sampling_ms = 0.0, refine_ms = 0.0, aggregate_ms = 0.0, total_ms = 0.0;
};

struct Trace {
    std::string path;  // baseline | accepted | refined | multi_sample | fallback
    CoordinateSample initial;
    bool verify_result = false;
    bool verify_transport_failure = false;
    std::vector<CoordinateSample> samples;
    int failed_samples = 0;
    std::vector<GaussianKernel> kernels;
    std::optional<FieldMoments> moments;
    std::vector<RegionProposal> proposals;
    std::vector<RefinedPoint> refined;
    std::vector<std::size_t> dropped_regions;
    std::optional<std::size_t> chosen;  // index into refined
    bool aggregation_from_reply = false;
    bool fallback_used = false;
    Point final_point;
    CallCounts calls;
    Timings timings;
};

namespace detail {

class CountingModel final : public ChatModel {
public:
    explicit CountingModel(const ChatModel& inner) : inner_(inner) {}
    ChatReply complete(const ChatRequest& req) const override {
        calls_.fetch_add(1, std::memory_order_relaxed);
        return inner_.complete(req);
    }
    int calls() const { return calls_.load(); }

private:
    const ChatModel& inner_;
    mutable std::atomic<int> calls_{0};
};

class Stopwatch {
public:
    double lap_ms() {
        const auto now = std::chrono::steady_clock::now();
        const double ms = std::chrono::duration<double, std::milli>(now - last_).count();
        last_ = now;
        return ms;
    }

private:
    std::chrono::steady_clock::time_point last_ = std::chrono::steady_clock::now();
};

/// Runs fn(i) for i in [0, n) with at most `limit` in flight; results keep index order.
template <class T, class Fn>
std::vector<T> bounded_map(std::size_t n, int limit, Fn fn) {
    std::vector<T> out(n);
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                out[i] = fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const std::size_t threads = std::min<std::size_t>(n, std::size_t(std::max(1, limit)));
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    return out;
}

}  // namespace detail

/// Kernels, then globals followed by locals (each group in its own order).
inline std::vector<RegionProposal> gdf(std::span<const CoordinateSample> samples, const PipelineConfig& cfg,
                                       ImageSize image) {
    if (samples.empty()) throw InvalidArgument("gdf: no samples");
    std::vector<RegionProposal> out = global_proposals(samples, cfg.uncertainty, cfg.proposals, image);
    for (auto& p : local_proposals(samples, cfg.uncertainty, cfg.proposals, image)) out.push_back(std::move(p));
    return out;
}

/// Crop, resize, greedy ground, map back.
inline RefinedPoint refine_region(const Image& image, const RegionProposal& proposal, const std::string& instruction,
                                  const PipelineConfig& cfg, const ChatModel& predictor, std::uint64_t seed) {
    const PixelRect rect = rasterize(proposal.box, image.size());
    const Image cropped = crop(image, rect);
    const ImageSize target = resize_target(cropped.size(), cfg.crop_target);
    const Image view = resize_bilinear(cropped, target);
    const CropTransform t = make_crop_transform(rect.to_box(), target);

    GroundingRequest req{&view, instruction, Decoding{0.0, 1.0, seed}, cfg.grammar};
    const GroundingResponse resp = ground(predictor, req, cfg.ground_options);
    RefinedPoint r;
    r.local = resp.point;
    const Point g = remap_to_global(resp.point, t);
    r.global = {std::clamp(g.x, 0.0, double(image.width())), std::clamp(g.y, 0.0, double(image.height()))};
    r.outside_region = !contains(proposal.box, g);
    return r;
}

namespace seeds {
inline std::uint64_t sample(std::uint64_t base, int i) { return base + 1 + std::uint64_t(i); }
inline std::uint64_t refine(std::uint64_t base, std::size_t j) { return base + 100 + j; }
}  // namespace seeds

struct RunResult {
    Point point;
    Trace trace;
};

inline RunResult run(const Image& image, const std::string& instruction, const PipelineConfig& cfg,
                     const Backends& backends, std::uint64_t seed = 0) {
    cfg.validate();
    if (!backends.predictor) throw InvalidArgument("run: no predictor backend");
    const ChatModel& verifier_ref = backends.verifier ? *backends.verifier : *backends.predictor;
    const ChatModel& aggregator_ref = backends.aggregator ? *backends.aggregator : *backends.predictor;
    detail::CountingModel predictor(*backends.predictor), verifier(verifier_ref), aggregator(aggregator_ref);

    RunResult out;
    Trace& tr = out.trace;
    detail::Stopwatch watch;
    auto finish = [&](Point p, std::string path) {
        tr.final_point = p;
        tr.path = std::move(path);
        tr.calls.predictor = predictor.calls();
        tr.calls.verifier = verifier.calls();
        tr.calls.aggregator = aggregator.calls();
        out.point = p;
        return out;
    };
    const auto total_start = std::chrono::steady_clock::now();
    auto stamp_total = [&] {
        tr.timings.total_ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - total_start).count();
    };

    // Greedy initial prediction.
    const GroundingResponse first =
        ground(predictor, GroundingRequest{&image, instruction, Decoding{0.0, 1.0, seed}, cfg.grammar},
               cfg.ground_options);
    tr.initial = make_sample(first, SampleSource::initial, cfg.ppl_scope);
    tr.timings.initial_ms = watch.lap_ms();
    if (!cfg.refinement_enabled) {
        stamp_total();
        return finish(tr.initial.point, "baseline");
    }

    try {
        tr.verify_result = verify(verifier, image, tr.initial.point, instruction, cfg.marker, seed);
    } catch (const TransportError&) {
        tr.verify_result = false;
        tr.verify_transport_failure = true;
    }
    tr.timings.verify_ms = watch.lap_ms();
    if (tr.verify_result) {
        stamp_total();
        return finish(tr.initial.point, "accepted");
    }

    // Stochastic exploration.
    const Decoding sampling{cfg.uncertainty.temperature, cfg.uncertainty.top_p, 0};
    for (int i = 0; i < cfg.uncertainty.n_samples; ++i) {
        Decoding d = sampling;
        d.seed = seeds::sample(seed, i);
        try {
            const GroundingResponse r =
                ground(predictor, GroundingRequest{&image, instruction, d, cfg.grammar}, cfg.ground_options);
            tr.samples.push_back(make_sample(r, SampleSource::sampled, cfg.ppl_scope));
        } catch (const GroundingError&) {
            ++tr.failed_samples;
        } catch (const TransportError&) {
            ++tr.failed_samples;
        }
    }
    tr.timings.sampling_ms = watch.lap_ms();
    if (tr.samples.empty()) {
        tr.fallback_used = true;
        stamp_total();
        return finish(tr.initial.point, "fallback");
    }
    const auto best_sample = std::size_t(
        std::min_element(tr.samples.begin(), tr.samples.end(),
                         [](const CoordinateSample& a, const CoordinateSample& b) { return a.ppl_total < b.ppl_total; }) -
        tr.samples.begin());
    if (cfg.mode == AblationMode::multi_sample_only) {
        stamp_total();
        return finish(tr.samples[best_sample].point, "multi_sample");
    }

    PipelineConfig effective = cfg;
    if (cfg.mode == AblationMode::global_only) effective.proposals.k_local = 0;
    tr.kernels = build_kernels(tr.samples, cfg.uncertainty);
    tr.moments = mixture_moments(tr.kernels);
    tr.proposals = gdf(tr.samples, effective, image.size());

    // Zoomed re-grounding, joined in proposal order.
    struct Slot {
        std::optional<RefinedPoint> point;
    };
    const auto slots = detail::bounded_map<Slot>(tr.proposals.size(), cfg.concurrency_limit, [&](std::size_t j) {
        Slot s;
        try {
            RefinedPoint r = refine_region(image, tr.proposals[j], instruction, cfg, predictor, seeds::refine(seed, j));
            r.region = j;
            s.point = r;
        } catch (const GroundingError&) {
        } catch (const TransportError&) {
        }
        return s;
    });
    tr.calls.refinement = int(tr.proposals.size());
    for (std::size_t j = 0; j < slots.size(); ++j) {
        if (slots[j].point) {
            tr.refined.push_back(*slots[j].point);
        } else {
            tr.dropped_regions.push_back(j);
        }
    }
    tr.timings.refine_ms = watch.lap_ms();
    if (tr.refined.empty()) {
        tr.fallback_used = true;
        stamp_total();
        return finish(tr.samples[best_sample].point, "fallback");
    }

    // Fallback candidate: the one from the most confident sample, else the first global.
    std::size_t fallback = 0;
    bool found = false;
    for (std::size_t c = 0; c < tr.refined.size() && !found; ++c) {
        const RegionProposal& p = tr.proposals[tr.refined[c].region];
        if (p.kind == ProposalKind::local && p.source_sample == best_sample) {
            fallback = c;
            found = true;
        }
    }
    for (std::size_t c = 0; c < tr.refined.size() && !found; ++c) {
        if (tr.proposals[tr.refined[c].region].kind == ProposalKind::global) {
            fallback = c;
            found = true;
        }
    }

    std::vector<Image> annotated;
    annotated.reserve(tr.refined.size());
    for (const auto& r : tr.refined) annotated.push_back(draw_marker(image, r.global, cfg.marker));
    AggregationOutcome agg;
    try {
        agg = aggregate(aggregator, annotated, instruction, fallback, seed);
    } catch (const TransportError&) {
        agg = {fallback, false, true};
    }
    tr.chosen = agg.index;
    tr.aggregation_from_reply = agg.from_reply;
    tr.timings.aggregate_ms = watch.lap_ms();
    stamp_total();
    return finish(tr.refined[agg.index].global, "refined");
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::json to_json(const Point& p) { return nlohmann::json::array({p.x, p.y}); }
inline nlohmann::json to_json(const Box& b) { return nlohmann::json::array({b.x_min, b.y_min, b.x_max, b.y_max}); }

inline nlohmann::json to_json(const CoordinateSample& s) {
    return {{"point", to_json(s.point)},
            {"ppl_x", s.ppl_x},
            {"ppl_y", s.ppl_y},
            {"ppl_total", s.ppl_total},
            {"source", s.source == SampleSource::initial ? "initial" : "sampled"}};
}

inline CoordinateSample sample_from_json(const nlohmann::json& j) {
    CoordinateSample s;
    s.point = {j.at("point").at(0).get<double>(), j.at("point").at(1).get<double>()};
    s.ppl_x = j.at("ppl_x").get<double>();
    s.ppl_y = j.at("ppl_y").get<double>();
    s.ppl_total = j.at("ppl_total").get<double>();
    s.source = j.at("source").get<std::string>() == "initial" ? SampleSource::initial : SampleSource::sampled;
    return s;
}

inline Box box_from_json(const nlohmann::json& j) {
    return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>(), j.at(3).get<double>()};
}

inline nlohmann::json to_json(const Trace& t, bool include_timings = false) {
    nlohmann::json samples = nlohmann::json::array();
    for (const auto& s : t.samples) samples.push_back(to_json(s));
    nlohmann::json kernels = nlohmann::json::array();
    for (const auto& k : t.kernels) {
        kernels.push_back({{"mu", to_json(k.mu)}, {"sigma_x", k.sigma_x}, {"sigma_y", k.sigma_y}, {"weight", k.weight}});
    }
    nlohmann::json proposals = nlohmann::json::array();
    for (const auto& p : t.proposals) {
        nlohmann::json jp = {{"box", to_json(p.box)}, {"raw", to_json(p.raw)}, {"kind", to_string(p.kind)},
                             {"score", p.score}};
        if (p.source_sample) jp["source_sample"] = *p.source_sample;
        if (p.alpha) jp["alpha"] = *p.alpha;
        proposals.push_back(std::move(jp));
    }
    nlohmann::json refined = nlohmann::json::array();
    for (const auto& r : t.refined) {
        refined.push_back({{"region", r.region},
                           {"local", to_json(r.local)},
                           {"global", to_json(r.global)},
                           {"outside_region", r.outside_region}});
    }
    nlohmann::json j = {{"path", t.path},
                        {"initial", to_json(t.initial)},
                        {"verify_result", t.verify_result},
                        {"verify_transport_failure", t.verify_transport_failure},
                        {"samples", samples},
                        {"failed_samples", t.failed_samples},
                        {"kernels", kernels},
                        {"proposals", proposals},
                        {"refined", refined},
                        {"dropped_regions", t.dropped_regions},
                        {"aggregation_from_reply", t.aggregation_from_reply},
                        {"fallback_used", t.fallback_used},
                        {"final", to_json(t.final_point)},
                        {"calls",
                         {{"predictor", t.calls.predictor},
                          {"verifier", t.calls.verifier},
                          {"aggregator", t.calls.aggregator},
                          {"refinement", t.calls.refinement}}}};
    j["moments"] = t.moments ? nlohmann::json{{"mean", to_json(t.moments->mean)},
                                              {"var_x", t.moments->var_x},
                                              {"var_y", t.moments->var_y},
                                              {"cov_xy", t.moments->cov_xy}}
                             : nlohmann::json(nullptr);
    j["chosen"] = t.chosen ? nlohmann::json(*t.chosen) : nlohmann::json(nullptr);
    if (include_timings) {
        j["timings_ms"] = {{"initial", t.timings.initial_ms}, {"verify", t.timings.verify_ms},
                           {"sampling", t.timings.sampling_ms}, {"refine", t.timings.refine_ms},
                           {"aggregate", t.timings.aggregate_ms}, {"total", t.timings.total_ms}};
    }
    return j;
}

/// Inverse of to_json for the parts visualizations need.
inline Trace trace_from_json(const nlohmann::json& j) {
    Trace t;
    t.path = j.value("path", "");
    t.initial = sample_from_json(j.at("initial"));
    t.verify_result = j.value("verify_result", false);
    for (const auto& s : j.at("samples")) t.samples.push_back(sample_from_json(s));
    for (const auto& k : j.at("kernels")) {
        t.kernels.push_back({{k.at("mu").at(0).get<double>(), k.at("mu").at(1).get<double>()},
                             k.at("sigma_x").get<double>(), k.at("sigma_y").get<double>(),
                             k.at("weight").get<double>()});
    }
    for (const auto& jp : j.at("proposals")) {
        RegionProposal p;
        p.box = box_from_json(jp.at("box"));
        p.raw = box_from_json(jp.at("raw"));
        p.kind = jp.at("kind").get<std::string>() == "local" ? ProposalKind::local : ProposalKind::global;
        p.score = jp.value("score", 0.0);
        if (jp.contains("source_sample")) p.source_sample = jp["source_sample"].get<std::size_t>();
        if (jp.contains("alpha")) p.alpha = jp["alpha"].get<double>();
        t.proposals.push_back(p);
    }
    for (const auto& jr : j.at("refined")) {
        RefinedPoint r;
        r.region = jr.at("region").get<std::size_t>();
        r.local = {jr.at("local").at(0).get<double>(), jr.at("local").at(1).get<double>()};
        r.global = {jr.at("global").at(0).get<double>(), jr.at("global").at(1).get<double>()};
        r.outside_region = jr.value("outside_region", false);
        t.refined.push_back(r);
    }
    if (!j.at("chosen").is_null()) t.chosen = j["chosen"].get<std::size_t>();
    t.final_point = {j.at("final").at(0).get<double>(), j.at("final").at(1).get<double>()};
    return t;
}

}  // namespace autofocus
