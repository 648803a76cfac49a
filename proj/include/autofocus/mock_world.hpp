#pragma once

// Seeded synthetic GUI scenes and an oracle "model" that reads them.
//
// MockWorld implements ChatModel by looking at pixels only: every element is
// filled with a colour unique within its scene, so the oracle can find
// elements (and pink markers) in full screenshots as well as in cropped and
// resized views. That keeps the in-process and HTTP-served paths identical.
//
// Localization model for a view of the scene:
//   sigma_view[axis] = base_sigma * downsample_factor * size_term * aspect[axis]   (view pixels)
//   size_term        = clamp(sqrt(ref_area_fraction * scene_area / element_area))
//   aspect           = (sqrt(w/h), sqrt(h/w))
// The greedy answer is the element centre plus a perception offset
// N(0, sigma_view) fixed per (view, element); sampled answers add
// temperature * sigma_view * z on top. A zoomed view magnifies the element by
// m, so the same sigma_view in view pixels is sigma_view / m in the scene:
//   sigma_eff[axis] = sigma_view[axis] / m[axis]
// Logprob fabrication: every digit token of an axis carries
//   log q = -(sigma_eff / beta_cal) * (1 + z^2 / 2) * (confused ? penalty : 1)
// so that axial perplexity = exp(sigma_eff / beta_cal) for a greedy, on-target answer.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <regex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "autofocus/backend.hpp"
#include "autofocus/coord_parser.hpp"
#include "autofocus/error.hpp"
#include "autofocus/geometry.hpp"
#include "autofocus/image.hpp"

namespace autofocus {

enum class ElementKind { button, icon, text_field };

inline const char* to_string(ElementKind k) {
    switch (k) {
        case ElementKind::button: return "button";
        case ElementKind::icon: return "icon";
        case ElementKind::text_field: return "text_field";
    }
    return "button";
}

inline ElementKind parse_element_kind(std::string_view s) {
    if (s == "button") return ElementKind::button;
    if (s == "icon") return ElementKind::icon;
    if (s == "text_field") return ElementKind::text_field;
    throw InvalidArgument("unknown element kind: " + std::string(s));
}

struct SceneElement {
    int id = 0;
    Box bbox;  // integer-aligned, includes the 1-px border
    std::string label;
    ElementKind kind = ElementKind::button;
    Rgb fill;
};

struct Scene {
    ImageSize size;
    std::vector<SceneElement> elements;
    std::uint64_t seed = 0;
};

struct SceneSpec {
    int n_elements = 20;
    int min_side = 12;
    int max_side = 144;
    ImageSize size{1920, 1080};
    double max_area_fraction = 0.01;
};

struct NoiseModel {
    double downsample_factor = 4.0;
    double base_sigma = 6.0;
    double confusion_rate = 0.1;
};

struct OracleConfig {
    double verify_error_rate = 0.05;
    double aggregate_error_rate = 0.05;
};

struct MockCalibration {
    double beta_cal = 50.0;
    double confusion_penalty = 1.5;
    double ref_area_fraction = 1.0 / 2000.0;
    double size_term_min = 0.5;
    double size_term_max = 4.0;
};

namespace mock_palette {
inline constexpr Rgb background{236, 238, 242};
inline constexpr Rgb border{16, 16, 16};
inline constexpr Rgb glyph{250, 250, 250};
inline constexpr int max_elements = 25;
// Element i is identified by its red channel.
inline constexpr std::uint8_t red_for(int i) { return std::uint8_t(24 + 8 * i); }
}  // namespace mock_palette

namespace detail {

inline std::uint64_t mix64(std::uint64_t x) {
    // splitmix64 finalizer
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

inline std::uint64_t combine(std::uint64_t a, std::uint64_t b) { return mix64(a ^ mix64(b)); }

inline const std::array<const char*, 32>& label_words() {
    static const std::array<const char*, 32> words{
        "Save", "Open", "Export", "Import", "Print", "Undo", "Redo", "Cut",
        "Copy", "Paste", "Search", "Filter", "Sort", "Zoom", "Refresh", "Share",
        "Settings", "Profile", "Help", "Close", "Layers", "Brush", "Render", "Compile",
        "Debug", "Run", "Stop", "Sync", "Upload", "Download", "Delete", "Rename"};
    return words;
}

}  // namespace detail

/// Deterministic per seed; elements never overlap (4-px gap).
inline Scene generate_scene(std::uint64_t seed, const SceneSpec& spec = {}) {
    if (spec.n_elements < 1) throw InvalidArgument("generate_scene: need at least one element");
    if (spec.n_elements > mock_palette::max_elements) {
        throw InvalidArgument("generate_scene: at most 25 elements per scene");
    }
    if (spec.min_side < 4 || spec.max_side < spec.min_side || spec.size.width < spec.max_side + 8 ||
        spec.size.height < spec.max_side + 8) {
        throw InvalidArgument("generate_scene: infeasible side limits for the image size");
    }
    std::mt19937_64 rng(detail::mix64(seed));
    auto uni = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
    const double max_area = spec.max_area_fraction * spec.size.width * spec.size.height;
    const double lo = spec.min_side, hi = spec.max_side;

    Scene scene;
    scene.size = spec.size;
    scene.seed = seed;
    const auto& words = detail::label_words();
    constexpr int gap = 4;
    for (int i = 0; i < spec.n_elements; ++i) {
        const auto kind = ElementKind(std::uniform_int_distribution<int>(0, 2)(rng));
        double w = lo, h = lo;
        switch (kind) {
            case ElementKind::icon:
                w = uni(lo, std::min(hi, 3.0 * lo));
                h = w * uni(0.8, 1.2);
                break;
            case ElementKind::button:
                h = uni(lo, std::min(hi, 2.5 * lo));
                w = h * uni(1.5, 4.0);
                break;
            case ElementKind::text_field:
                h = uni(lo, std::min(hi, 2.0 * lo));
                w = h * uni(4.0, 8.0);
                break;
        }
        w = std::clamp(w, lo, hi);
        h = std::clamp(h, lo, hi);
        if (w * h > max_area) {
            const double shrink = std::sqrt(max_area / (w * h));
            w = std::max(lo, w * shrink);
            h = std::max(lo, h * shrink);
        }
        const int iw = int(std::lround(w)), ih = int(std::lround(h));
        bool placed = false;
        for (int attempt = 0; attempt < 4000 && !placed; ++attempt) {
            const int x = std::uniform_int_distribution<int>(gap, spec.size.width - iw - gap)(rng);
            const int y = std::uniform_int_distribution<int>(gap, spec.size.height - ih - gap)(rng);
            const Box b{double(x), double(y), double(x + iw), double(y + ih)};
            const Box padded{b.x_min - gap, b.y_min - gap, b.x_max + gap, b.y_max + gap};
            const bool clash = std::any_of(scene.elements.begin(), scene.elements.end(), [&](const SceneElement& e) {
                return intersection_area(padded, e.bbox) > 0.0;
            });
            if (clash) continue;
            SceneElement e;
            e.id = i;
            e.bbox = b;
            e.kind = kind;
            e.label = std::string(words[rng() % words.size()]) + " #" + std::to_string(seed) + "-" + std::to_string(i);
            e.fill = {mock_palette::red_for(i), std::uint8_t(40 + rng() % 161), std::uint8_t(40 + rng() % 161)};
            scene.elements.push_back(std::move(e));
            placed = true;
        }
        if (!placed) throw InvalidArgument("generate_scene: could not place element " + std::to_string(i));
    }
    return scene;
}

/// Flat rectangles with a 1-px border and a row of glyph bars for the label.
inline Image render_scene(const Scene& scene) {
    Image img(scene.size.width, scene.size.height, mock_palette::background);
    for (const auto& e : scene.elements) {
        const PixelRect r{int(e.bbox.x_min), int(e.bbox.y_min), int(e.bbox.width()), int(e.bbox.height())};
        img.fill_rect(r, mock_palette::border);
        img.fill_rect({r.x + 1, r.y + 1, r.width - 2, r.height - 2}, e.fill);
        if (r.width >= 12 && r.height >= 10) {
            const std::size_t h = std::hash<std::string>{}(e.label);
            const int bars = std::min<int>(int(e.label.size()), (r.width - 6) / 3);
            const int bar_h = std::max(2, r.height / 3);
            const int y0 = r.y + (r.height - bar_h) / 2;
            for (int k = 0; k < bars; ++k) {
                if ((h >> (k % 48)) & 1u) img.fill_rect({r.x + 3 + 3 * k, y0, 2, bar_h}, mock_palette::glyph);
            }
        }
    }
    return img;
}

inline nlohmann::json scene_to_json(const Scene& s) {
    nlohmann::json elements = nlohmann::json::array();
    for (const auto& e : s.elements) {
        elements.push_back({{"id", e.id},
                            {"bbox", {e.bbox.x_min, e.bbox.y_min, e.bbox.x_max, e.bbox.y_max}},
                            {"label", e.label},
                            {"kind", to_string(e.kind)},
                            {"fill", {e.fill.r, e.fill.g, e.fill.b}}});
    }
    return {{"seed", s.seed}, {"size", {s.size.width, s.size.height}}, {"elements", elements}};
}

inline Scene scene_from_json(const nlohmann::json& j) {
    Scene s;
    s.seed = j.at("seed").get<std::uint64_t>();
    s.size = {j.at("size").at(0).get<int>(), j.at("size").at(1).get<int>()};
    for (const auto& je : j.at("elements")) {
        SceneElement e;
        e.id = je.at("id").get<int>();
        const auto& b = je.at("bbox");
        e.bbox = {b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<double>(), b.at(3).get<double>()};
        e.label = je.at("label").get<std::string>();
        e.kind = parse_element_kind(je.at("kind").get<std::string>());
        const auto& f = je.at("fill");
        e.fill = {f.at(0).get<std::uint8_t>(), f.at(1).get<std::uint8_t>(), f.at(2).get<std::uint8_t>()};
        s.elements.push_back(std::move(e));
    }
    return s;
}

/// Canonical instruction text for an element; the oracle reads the quoted label back.
inline std::string instruction_for(const SceneElement& e) {
    std::string kind = to_string(e.kind);
    std::replace(kind.begin(), kind.end(), '_', ' ');
    return "Click the " + kind + " labeled \"" + e.label + "\"";
}

class MockWorld final : public ChatModel {
public:
    struct Diagnostics {
        std::size_t scene_index = 0;
        int target = -1;
        int chosen = -1;  // -1: nothing recognisable in view
        bool confused = false;
        bool target_visible = false;
        Point center_view;
        double sigma_view_x = 0.0, sigma_view_y = 0.0;
        double sigma_eff_x = 0.0, sigma_eff_y = 0.0;
        double magnification_x = 1.0, magnification_y = 1.0;
        double ppl_x = 1.0, ppl_y = 1.0;
    };

    struct GroundResult {
        ChatReply reply;
        Diagnostics diag;
    };

    MockWorld(std::vector<Scene> scenes, NoiseModel noise = {}, OracleConfig oracle = {}, MockCalibration cal = {})
        : scenes_(std::move(scenes)), noise_(noise), oracle_(oracle), cal_(cal) {
        if (noise_.downsample_factor < 1.0 || !(noise_.base_sigma > 0.0) || noise_.confusion_rate < 0.0 ||
            noise_.confusion_rate >= 1.0) {
            throw InvalidArgument("MockWorld: invalid noise model");
        }
        for (std::size_t s = 0; s < scenes_.size(); ++s) {
            for (std::size_t e = 0; e < scenes_[s].elements.size(); ++e) {
                if (!by_label_.emplace(scenes_[s].elements[e].label, std::make_pair(s, int(e))).second) {
                    throw InvalidArgument("MockWorld: duplicate label " + scenes_[s].elements[e].label);
                }
            }
        }
    }

    const std::vector<Scene>& scenes() const { return scenes_; }
    const NoiseModel& noise() const { return noise_; }
    const OracleConfig& oracle() const { return oracle_; }

    ChatReply complete(const ChatRequest& req) const override {
        std::smatch m;
        const std::string& p = req.prompt;
        if (std::regex_match(p, m, grounding_re())) {
            if (req.images.size() != 1) return refusal("Please provide exactly one screenshot.");
            return ground_view(req.images[0], m.str(2), grammar_from_hint(m.str(1)), req.decoding).reply;
        }
        if (std::regex_match(p, m, verification_re())) {
            if (req.images.size() != 1) return refusal("Please provide exactly one screenshot.");
            return verify_view(req.images[0], m.str(1), req.decoding.seed);
        }
        if (std::regex_match(p, m, aggregation_re())) {
            return aggregate_views(req.images, m.str(3), req.decoding.seed);
        }
        return refusal("I can only help with locating interface elements.");
    }

    GroundResult ground_view(const Image& view, const std::string& instruction, const CoordinateGrammar& grammar,
                             const Decoding& dec) const {
        GroundResult out;
        const auto target = lookup(instruction);
        if (!target) {
            out.reply = refusal("I cannot find an element matching that description.");
            return out;
        }
        const Scene& scene = scenes_[target->first];
        const ViewAnalysis va = analyze(view, scene);
        const std::uint64_t vh = view_hash(view, scene);
        Diagnostics& d = out.diag;
        d.scene_index = target->first;
        d.target = target->second;
        d.target_visible = va.elements[std::size_t(d.target)].count > 0;
        const auto [mx, my] = magnification(va, scene, view.size());
        d.magnification_x = mx;
        d.magnification_y = my;

        const bool sampling = dec.temperature > 0.0;
        std::mt19937_64 rng_view(detail::combine(vh, 0xC0FFEEull));
        std::mt19937_64 rng_sample(detail::combine(vh, detail::combine(dec.seed, 0x5EEDull)));
        std::mt19937_64& pick_rng = sampling ? rng_sample : rng_view;
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        std::normal_distribution<double> normal(0.0, 1.0);

        d.confused = !d.target_visible || unit(pick_rng) < noise_.confusion_rate;
        d.chosen = d.target_visible ? d.target : -1;
        if (d.confused) {
            std::vector<int> visible;
            for (std::size_t i = 0; i < va.elements.size(); ++i) {
                if (int(i) != d.target && va.elements[i].count > 0) visible.push_back(int(i));
            }
            if (!visible.empty()) {
                d.chosen = visible[std::uniform_int_distribution<std::size_t>(0, visible.size() - 1)(pick_rng)];
            } else if (!d.target_visible) {
                d.chosen = -1;
            } else {
                d.confused = false;  // nothing else to confuse it with
            }
        }

        double zx = 0.0, zy = 0.0;
        Point point;
        if (d.chosen < 0) {
            // Blind guess at the view centre.
            d.center_view = {view.width() / 2.0, view.height() / 2.0};
            d.sigma_view_x = view.width() / 4.0;
            d.sigma_view_y = view.height() / 4.0;
        } else {
            const SceneElement& e = scene.elements[std::size_t(d.chosen)];
            const ElementView& ev = va.elements[std::size_t(d.chosen)];
            d.center_view = {0.5 * (ev.x0 + ev.x1 + 1), 0.5 * (ev.y0 + ev.y1 + 1)};
            const double area_frac = e.bbox.area() / (double(scene.size.width) * scene.size.height);
            const double size_term =
                std::clamp(std::sqrt(cal_.ref_area_fraction / area_frac), cal_.size_term_min, cal_.size_term_max);
            const double base = noise_.base_sigma * noise_.downsample_factor * size_term;
            d.sigma_view_x = base * std::sqrt(e.bbox.width() / e.bbox.height());
            d.sigma_view_y = base * std::sqrt(e.bbox.height() / e.bbox.width());
        }
        std::mt19937_64 rng_bias(detail::combine(vh, std::uint64_t(d.chosen + 2) * 0x100000001B3ull));
        point.x = d.center_view.x + d.sigma_view_x * normal(rng_bias);
        point.y = d.center_view.y + d.sigma_view_y * normal(rng_bias);
        if (sampling) {
            zx = normal(rng_sample);
            zy = normal(rng_sample);
            point.x += dec.temperature * d.sigma_view_x * zx;
            point.y += dec.temperature * d.sigma_view_y * zy;
        }
        point.x = std::clamp(point.x, 0.0, double(view.width() - 1));
        point.y = std::clamp(point.y, 0.0, double(view.height() - 1));

        d.sigma_eff_x = d.sigma_view_x / mx;
        d.sigma_eff_y = d.sigma_view_y / my;
        const double penalty = d.confused ? cal_.confusion_penalty : 1.0;
        const double nll_x = d.sigma_eff_x / cal_.beta_cal * penalty * (1.0 + 0.5 * zx * zx);
        const double nll_y = d.sigma_eff_y / cal_.beta_cal * penalty * (1.0 + 0.5 * zy * zy);
        d.ppl_x = std::exp(nll_x);
        d.ppl_y = std::exp(nll_y);

        out.reply = tokenize_coordinate(serialize_point(point, grammar, view.size()), grammar, view.size(), -nll_x,
                                        -nll_y, rng_sample);
        return out;
    }

    /// Convenience: ground against the scene's own full rendering.
    GroundResult ground_scene(std::size_t scene_index, const std::string& instruction, double temperature,
                              std::uint64_t seed, const CoordinateGrammar& grammar = {}) const {
        const Image view = render_scene(scenes_.at(scene_index));
        return ground_view(view, instruction, grammar, Decoding{temperature, 1.0, seed});
    }

private:
    struct ElementView {
        int count = 0;
        int x0 = std::numeric_limits<int>::max(), y0 = std::numeric_limits<int>::max();
        int x1 = -1, y1 = -1;
    };
    struct ViewAnalysis {
        std::vector<ElementView> elements;
        long marker_count = 0;
        double marker_sx = 0.0, marker_sy = 0.0;

        std::optional<Point> marker() const {
            if (marker_count == 0) return std::nullopt;
            return Point{marker_sx / double(marker_count), marker_sy / double(marker_count)};
        }
    };

    static ViewAnalysis analyze(const Image& view, const Scene& scene) {
        ViewAnalysis va;
        va.elements.resize(scene.elements.size());
        std::array<int, 256> by_red;
        by_red.fill(-1);
        for (std::size_t i = 0; i < scene.elements.size(); ++i) by_red[scene.elements[i].fill.r] = int(i);
        const Rgb pink = MarkerStyle{}.color;
        for (int y = 0; y < view.height(); ++y) {
            const std::uint8_t* row = view.row(y);
            for (int x = 0; x < view.width(); ++x) {
                const std::uint8_t r = row[3 * x], g = row[3 * x + 1], b = row[3 * x + 2];
                const int idx = by_red[r];
                if (idx >= 0) {
                    const Rgb& f = scene.elements[std::size_t(idx)].fill;
                    if (g == f.g && b == f.b) {
                        ElementView& ev = va.elements[std::size_t(idx)];
                        ++ev.count;
                        ev.x0 = std::min(ev.x0, x);
                        ev.x1 = std::max(ev.x1, x);
                        ev.y0 = std::min(ev.y0, y);
                        ev.y1 = std::max(ev.y1, y);
                    }
                } else if (r == pink.r && g == pink.g && b == pink.b) {
                    ++va.marker_count;
                    va.marker_sx += x + 0.5;
                    va.marker_sy += y + 0.5;
                }
            }
        }
        return va;
    }

    // View-to-scene affine map per axis: scene = (view - view_ref) / m + scene_ref.
    struct AxisMap {
        double m = 1.0, view_ref = 0.0, scene_ref = 0.0;
        double to_scene(double v) const { return (v - view_ref) / m + scene_ref; }
    };

    static std::pair<AxisMap, AxisMap> view_map(const ViewAnalysis& va, const Scene& scene, ImageSize view) {
        if (view == scene.size) return {AxisMap{}, AxisMap{}};
        int best = -1;
        for (std::size_t i = 0; i < va.elements.size(); ++i) {
            const ElementView& ev = va.elements[i];
            const bool interior = ev.count > 0 && ev.x0 > 0 && ev.y0 > 0 && ev.x1 < view.width - 1 &&
                                  ev.y1 < view.height - 1;
            if (interior && (best < 0 || ev.count > va.elements[std::size_t(best)].count)) best = int(i);
        }
        if (best < 0) return {AxisMap{}, AxisMap{}};
        const ElementView& ev = va.elements[std::size_t(best)];
        const Box& b = scene.elements[std::size_t(best)].bbox;
        // Fill spans the bbox minus the border.
        AxisMap mx{double(ev.x1 - ev.x0 + 1) / (b.width() - 2.0), double(ev.x0), b.x_min + 1.0};
        AxisMap my{double(ev.y1 - ev.y0 + 1) / (b.height() - 2.0), double(ev.y0), b.y_min + 1.0};
        return {mx, my};
    }

    static std::pair<double, double> magnification(const ViewAnalysis& va, const Scene& scene, ImageSize view) {
        const auto [mx, my] = view_map(va, scene, view);
        return {mx.m, my.m};
    }

    static std::uint64_t view_hash(const Image& view, const Scene& scene) {
        const auto& bytes = view.bytes();
        const std::size_t h = std::hash<std::string_view>{}(
            std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
        return detail::combine(detail::combine(std::uint64_t(h), scene.seed),
                               (std::uint64_t(view.width()) << 32) | std::uint64_t(view.height()));
    }

    std::optional<std::pair<std::size_t, int>> lookup(const std::string& instruction) const {
        static const std::regex quoted("\"([^\"]+)\"");
        std::smatch m;
        if (!std::regex_search(instruction, m, quoted)) return std::nullopt;
        const auto it = by_label_.find(m.str(1));
        if (it == by_label_.end()) return std::nullopt;
        return it->second;
    }

    ChatReply verify_view(const Image& view, const std::string& instruction, std::uint64_t seed) const {
        const auto target = lookup(instruction);
        if (!target) return refusal("I cannot tell which element the instruction means.");
        const Scene& scene = scenes_[target->first];
        const ViewAnalysis va = analyze(view, scene);
        bool correct = false;
        if (const auto mk = va.marker()) {
            const auto [ax, ay] = view_map(va, scene, view.size());
            const Point p{ax.to_scene(mk->x), ay.to_scene(mk->y)};
            correct = contains(scene.elements[std::size_t(target->second)].bbox, p);
        }
        std::mt19937_64 rng(detail::combine(view_hash(view, scene), detail::combine(seed, 0x7E41F7ull)));
        if (std::uniform_real_distribution<double>(0.0, 1.0)(rng) < oracle_.verify_error_rate) correct = !correct;
        return words(correct ? "Yes, the star is on the requested element."
                             : "No, the star is not on the requested element.");
    }

    ChatReply aggregate_views(std::span<const Image> views, const std::string& instruction, std::uint64_t seed) const {
        const auto target = lookup(instruction);
        if (!target || views.empty()) return refusal("I cannot compare these images.");
        const Scene& scene = scenes_[target->first];
        const Point goal = scene.elements[std::size_t(target->second)].bbox.center();
        std::size_t best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        std::uint64_t h = seed;
        for (std::size_t i = 0; i < views.size(); ++i) {
            const ViewAnalysis va = analyze(views[i], scene);
            h = detail::combine(h, view_hash(views[i], scene));
            const auto mk = va.marker();
            if (!mk) continue;
            const auto [ax, ay] = view_map(va, scene, views[i].size());
            const double d = std::hypot(ax.to_scene(mk->x) - goal.x, ay.to_scene(mk->y) - goal.y);
            if (d < best_d) {
                best_d = d;
                best = i;
            }
        }
        std::mt19937_64 rng(detail::combine(h, 0xA66ull));
        if (views.size() > 1 && std::uniform_real_distribution<double>(0.0, 1.0)(rng) < oracle_.aggregate_error_rate) {
            std::size_t other = std::uniform_int_distribution<std::size_t>(0, views.size() - 2)(rng);
            best = other >= best ? other + 1 : other;
        }
        return words("Image " + std::to_string(best + 1));
    }

    static ChatReply words(const std::string& text) {
        ChatReply r;
        r.text = text;
        std::size_t start = 0;
        for (std::size_t i = 1; i <= text.size(); ++i) {
            if (i == text.size() || text[i] == ' ') {
                r.tokens.push_back({text.substr(start, i - start), -0.05});
                start = i;
            }
        }
        return r;
    }

    static ChatReply refusal(const std::string& text) { return words(text); }

    // Chunks text into 1-3 character tokens; a delimiter character directly
    // before a number is sometimes merged into the number's first token.
    static ChatReply tokenize_coordinate(const std::string& text, const CoordinateGrammar& grammar, ImageSize frame,
                                         double logprob_x, double logprob_y, std::mt19937_64& rng) {
        const std::vector<TokenScore> whole{{text, 0.0}};
        const ParsedCoordinate pc = parse_coordinate(whole, grammar, frame);
        auto axis_of = [&](std::size_t i) {
            if (i >= pc.x_chars.first && i < pc.x_chars.second) return 1;
            if (i >= pc.y_chars.first && i < pc.y_chars.second) return 2;
            return 0;
        };
        std::uniform_int_distribution<int> len(1, 3);
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        ChatReply r;
        r.text = text;
        std::size_t i = 0;
        while (i < text.size()) {
            const int axis = axis_of(i);
            std::size_t j = i;
            const std::size_t want = std::size_t(len(rng));
            if (axis == 0 && i + 1 < text.size() && axis_of(i + 1) != 0 && unit(rng) < 0.3) {
                j = i + 1;  // merge one delimiter into the following number
                const int next = axis_of(j);
                std::size_t k = 0;
                while (j < text.size() && axis_of(j) == next && k < want) { ++j; ++k; }
                r.tokens.push_back({text.substr(i, j - i), next == 1 ? logprob_x : logprob_y});
                i = j;
                continue;
            }
            while (j < text.size() && axis_of(j) == axis && j - i < want) ++j;
            const double lp = axis == 1 ? logprob_x : axis == 2 ? logprob_y : 0.0;
            r.tokens.push_back({text.substr(i, j - i), lp});
            i = j;
        }
        return r;
    }

    static std::string prompt_pattern(std::string_view tmpl) {
        std::string re = detail::regex_escape(tmpl);
        for (const char* key : {"format", "instruction", "count"}) {
            const std::string needle = std::string("\\{") + key + "\\}";
            for (std::size_t pos = re.find(needle); pos != std::string::npos; pos = re.find(needle, pos)) {
                re.replace(pos, needle.size(), "([\\s\\S]*)");
            }
        }
        return re;
    }
    static const std::regex& grounding_re() {
        static const std::regex re(prompt_pattern(prompts::grounding));
        return re;
    }
    static const std::regex& verification_re() {
        static const std::regex re(prompt_pattern(prompts::verification));
        return re;
    }
    static const std::regex& aggregation_re() {
        static const std::regex re(prompt_pattern(prompts::aggregation));
        return re;
    }

    static CoordinateGrammar grammar_from_hint(const std::string& hint) {
        for (auto style : {GrammarStyle::paren_pair, GrammarStyle::json_object, GrammarStyle::tagged_box}) {
            for (auto units : {CoordinateUnits::pixels, CoordinateUnits::unit_interval}) {
                CoordinateGrammar g{style, units};
                if (format_hint(g) == hint) return g;
            }
        }
        return {};
    }

    std::vector<Scene> scenes_;
    NoiseModel noise_;
    OracleConfig oracle_;
    MockCalibration cal_;
    std::unordered_map<std::string, std::pair<std::size_t, int>> by_label_;
};

/// One grounding trial against a freshly rendered single-scene world.
inline GroundingResponse mock_ground(const Scene& scene, const std::string& instruction, const NoiseModel& noise,
                                     double temperature, std::uint64_t rng_seed,
                                     const CoordinateGrammar& grammar = {}) {
    const MockWorld world({scene}, noise);
    const Image view = render_scene(scene);
    GroundingRequest req{&view, instruction, Decoding{temperature, 1.0, rng_seed}, grammar};
    return ground(world, req, GroundOptions{0});
}

}  // namespace autofocus
