#include <gtest/gtest.h>

#include <chrono>
#include <set>

#include "autofocus/mock_world.hpp"
#include "stats.hpp"

using namespace autofocus;

namespace {

const SceneSpec kSmall{};  // default: 20 elements, <= 1% of a 1920x1080 frame

Image zoom_on(const Image& full, const Box& region, ResizePolicy policy = {}) {
    const PixelRect r = rasterize(region, full.size());
    const Image c = crop(full, r);
    return resize_bilinear(c, resize_target(c.size(), policy));
}

double distance_to(const Box& b, Point p) { return std::hypot(p.x - b.center().x, p.y - b.center().y); }

}  // namespace

TEST(GenerateScene, DeterministicPerSeed) {
    const Scene a = generate_scene(1, {5});
    const Scene b = generate_scene(1, {5});
    EXPECT_EQ(scene_to_json(a).dump(), scene_to_json(b).dump());
    EXPECT_NE(scene_to_json(a).dump(), scene_to_json(generate_scene(2, {5})).dump());
    EXPECT_EQ(a.elements.size(), 5u);
}

TEST(GenerateScene, RejectsInfeasibleSpecs) {
    EXPECT_THROW(generate_scene(1, {0}), InvalidArgument);
    EXPECT_THROW(generate_scene(1, {26}), InvalidArgument);
    SceneSpec tight{25, 100, 140, {300, 300}};
    EXPECT_THROW(generate_scene(1, tight), InvalidArgument);
}

TEST(GenerateScene, ElementsDisjointInsideUniqueAndSmall) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const Scene s = generate_scene(seed, kSmall);
        std::set<std::string> labels;
        for (std::size_t i = 0; i < s.elements.size(); ++i) {
            const Box& b = s.elements[i].bbox;
            EXPECT_TRUE(inside_image(b, s.size));
            EXPECT_LE(b.area(), 0.01 * s.size.width * s.size.height + 1e-9);
            labels.insert(s.elements[i].label);
            for (std::size_t j = 0; j < i; ++j) EXPECT_EQ(intersection_area(b, s.elements[j].bbox), 0.0);
        }
        EXPECT_EQ(labels.size(), s.elements.size());
    }
}

TEST(GenerateScene, FiveHundredScenesUnderOneSecond) {
    const auto t0 = std::chrono::steady_clock::now();
    for (std::uint64_t seed = 0; seed < 500; ++seed) generate_scene(seed, kSmall);
    EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), 1.0);
}

TEST(RenderScene, BackgroundBordersAndIdempotence) {
    const Scene s = generate_scene(4, kSmall);
    const Image a = render_scene(s);
    EXPECT_EQ(a, render_scene(s));
    const SceneElement& e = s.elements[0];
    EXPECT_EQ(a.at(int(e.bbox.x_min), int(e.bbox.y_min)), mock_palette::border);
    EXPECT_EQ(a.at(int(e.bbox.x_min) + 1, int(e.bbox.y_min) + 1), e.fill);
    // Any pixel outside every element is background.
    for (int y = 0; y < a.height(); y += 37) {
        for (int x = 0; x < a.width(); x += 41) {
            const bool in_any = std::any_of(s.elements.begin(), s.elements.end(), [&](const SceneElement& el) {
                return x >= el.bbox.x_min && x < el.bbox.x_max && y >= el.bbox.y_min && y < el.bbox.y_max;
            });
            if (!in_any) {
                ASSERT_EQ(a.at(x, y), mock_palette::background);
            }
        }
    }
}

TEST(RenderScene, GoldenDigests) {
    EXPECT_EQ(pixel_digest(render_scene(generate_scene(1, kSmall))),
              "bc13dfe178d188ecc929422611de94983e398ad1269e8b526f61b4b99a75ca5b");
    EXPECT_EQ(pixel_digest(render_scene(generate_scene(42, {5}))),
              "db9bd0c8f7a52a9ee8c284e88abd503eb35423f18412c8a7d04ba20ea58ad0ec");
}

TEST(SceneJson, RoundTrip) {
    const Scene s = generate_scene(9, kSmall);
    const Scene back = scene_from_json(scene_to_json(s));
    EXPECT_EQ(scene_to_json(back), scene_to_json(s));
    EXPECT_EQ(render_scene(back), render_scene(s));
}

TEST(MockGround, SingleButtonSceneSeedSeven) {
    SceneSpec one{1, 100, 144};
    const Scene s = generate_scene(7, one);
    const std::string instr = instruction_for(s.elements[0]);
    const GroundingResponse a = mock_ground(s, instr, {}, 0.0, 7);
    const GroundingResponse b = mock_ground(s, instr, {}, 0.0, 7);
    EXPECT_TRUE(contains(s.elements[0].bbox, a.point));
    EXPECT_EQ(a.raw_text, b.raw_text);
    EXPECT_EQ(a.tokens, b.tokens);
}

TEST(MockGround, NoiselessLimit) {
    SceneSpec big{1, 140, 144};
    const Scene s = generate_scene(3, big);
    const NoiseModel clean{1.0, 1.0, 0.0};
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const GroundingResponse r = mock_ground(s, instruction_for(s.elements[0]), clean, 0.75, seed);
        EXPECT_LE(distance_to(s.elements[0].bbox, r.point), 6.0);
        const CoordinateSample c = make_sample(r, SampleSource::sampled);
        EXPECT_LT(c.ppl_total, 1.05);
    }
}

TEST(MockGround, LogprobsNonPositiveAndCalibrated) {
    const Scene s = generate_scene(5, kSmall);
    const MockWorld world({s});
    for (std::size_t e = 0; e < 5; ++e) {
        const auto g = world.ground_scene(0, instruction_for(s.elements[e]), 0.0, 1);
        for (const auto& t : g.reply.tokens) EXPECT_LE(t.logprob, 0.0);
        const ParsedCoordinate p = parse_coordinate(g.reply.tokens, g.reply.text, {}, s.size);
        const double px = axial_perplexity(g.reply.tokens, p.spans.x);
        const double penalty = g.diag.confused ? MockCalibration{}.confusion_penalty : 1.0;
        EXPECT_NEAR(px, std::exp(g.diag.sigma_eff_x / 50.0 * penalty), 1e-9);
        EXPECT_NEAR(px, g.diag.ppl_x, 1e-9);
        const auto sampled = world.ground_scene(0, instruction_for(s.elements[e]), 0.75, 99);
        const ParsedCoordinate q = parse_coordinate(sampled.reply.tokens, sampled.reply.text, {}, s.size);
        EXPECT_NEAR(axial_perplexity(sampled.reply.tokens, q.spans.y), sampled.diag.ppl_y, 1e-9);
        EXPECT_GE(sampled.diag.ppl_y, std::exp(sampled.diag.sigma_eff_y / 50.0) - 1e-12);
    }
}

TEST(MockGround, AnisotropicForElongatedElements) {
    const Scene s = generate_scene(12, kSmall);
    const MockWorld world({s});
    for (const auto& e : s.elements) {
        const auto g = world.ground_scene(0, instruction_for(e), 0.0, 0);
        if (g.diag.confused) continue;
        if (e.bbox.width() > 2 * e.bbox.height()) {
            EXPECT_GT(g.diag.sigma_eff_x, g.diag.sigma_eff_y);
        }
        if (e.bbox.height() > 2 * e.bbox.width()) {
            EXPECT_LT(g.diag.sigma_eff_x, g.diag.sigma_eff_y);
        }
    }
}

TEST(MockGround, UnknownLabelIsRefused) {
    const Scene s = generate_scene(5, kSmall);
    EXPECT_THROW(mock_ground(s, "Click the button labeled \"Nope\"", {}, 0.0, 1), GroundingError);
    const MockWorld world({s});
    const auto g = world.ground_scene(0, "Click the thing", 0.0, 1);
    EXPECT_EQ(g.diag.target, -1);
    EXPECT_EQ(g.reply.text.find('('), std::string::npos);
}

TEST(MockGround, ZoomShrinksSigmaByMagnification) {
    const Scene s = generate_scene(21, kSmall);
    const MockWorld world({s}, NoiseModel{4.0, 6.0, 0.0});
    const Image full = render_scene(s);
    for (std::size_t i = 0; i < 4; ++i) {
        const SceneElement& e = s.elements[i];
        const auto wide = world.ground_view(full, instruction_for(e), {}, {});
        const Box region = enforce_min_size(Box::from_center(e.bbox.center(), 336, 336), 336, s.size);
        const Image view = zoom_on(full, region);
        const auto zoomed = world.ground_view(view, instruction_for(e), {}, {});
        const double m = 1288.0 / 336.0;
        // Estimated from element edges, so short sides (12 px) cost about one pixel of accuracy.
        EXPECT_NEAR(zoomed.diag.magnification_x, m, 0.4);
        EXPECT_NEAR(zoomed.diag.magnification_y, m, 0.4);
        EXPECT_NEAR(zoomed.diag.sigma_eff_x * zoomed.diag.magnification_x, zoomed.diag.sigma_view_x, 1e-9);
        EXPECT_NEAR(zoomed.diag.sigma_eff_y * zoomed.diag.magnification_y, zoomed.diag.sigma_view_y, 1e-9);
        EXPECT_LT(zoomed.diag.sigma_eff_x, wide.diag.sigma_eff_x / (m - 0.4));
        EXPECT_LT(zoomed.diag.sigma_eff_y, wide.diag.sigma_eff_y / (m - 0.4));
    }
}

TEST(MockGround, ZoomRaisesAccuracy) {
    int hits_full = 0, hits_zoom = 0, n = 0;
    for (std::uint64_t seed = 0; seed < 60; ++seed) {
        const Scene s = generate_scene(3000 + seed, kSmall);
        const MockWorld world({s}, NoiseModel{4.0, 6.0, 0.0});
        const Image full = render_scene(s);
        for (std::size_t i = 0; i < 5; ++i) {
            const SceneElement& e = s.elements[i];
            const Box region = enforce_min_size(Box::from_center(e.bbox.center(), 336, 336), 336, s.size);
            const PixelRect r = rasterize(region, s.size);
            const Image view = zoom_on(full, region);
            const CropTransform t = make_crop_transform(r.to_box(), view.size());
            const auto a = world.ground_view(full, instruction_for(e), {}, {0.75, 1, seed});
            const auto b = world.ground_view(view, instruction_for(e), {}, {0.75, 1, seed});
            const Point pa = parse_coordinate(a.reply.tokens, {}, s.size).point;
            const Point pb = remap_to_global(parse_coordinate(b.reply.tokens, {}, view.size()).point, t);
            hits_full += contains(e.bbox, pa);
            hits_zoom += contains(e.bbox, pb);
            ++n;
        }
    }
    EXPECT_GT(hits_zoom, hits_full + n / 5) << hits_full << " vs " << hits_zoom << " of " << n;
}

TEST(MockGround, ErrorGrowsWithDownsampleAndShrinksWithArea) {
    std::vector<double> err_ds1, err_ds8, err_small, err_large;
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
        const Scene s = generate_scene(5000 + seed, kSmall);
        const MockWorld lo({s}, NoiseModel{1.0, 6.0, 0.0});
        const MockWorld hi({s}, NoiseModel{8.0, 6.0, 0.0});
        std::vector<const SceneElement*> by_area;
        for (const auto& e : s.elements) by_area.push_back(&e);
        std::sort(by_area.begin(), by_area.end(), [](auto* a, auto* b) { return a->bbox.area() < b->bbox.area(); });
        for (int k = 0; k < 5; ++k) {
            const SceneElement& e = s.elements[std::size_t(k)];
            auto err = [&](const MockWorld& w, const SceneElement& el) {
                const auto g = w.ground_scene(0, instruction_for(el), 0.75, seed * 31 + std::uint64_t(k));
                return distance_to(el.bbox, parse_coordinate(g.reply.tokens, {}, s.size).point);
            };
            err_ds1.push_back(err(lo, e));
            err_ds8.push_back(err(hi, e));
            err_small.push_back(err(hi, *by_area[std::size_t(k)]));
            err_large.push_back(err(hi, *by_area[by_area.size() - 1 - std::size_t(k)]));
        }
    }
    EXPECT_LT(teststats::mann_whitney_greater(err_ds8, err_ds1), 0.01);
    EXPECT_LT(teststats::mann_whitney_greater(err_small, err_large), 0.01);
}

TEST(MockVerify, PerfectAndAdversarialOracles) {
    const Scene s = generate_scene(8, kSmall);
    const Image img = render_scene(s);
    const SceneElement& e = s.elements[2];
    const MockWorld perfect({s}, {}, OracleConfig{0.0, 0.0});
    const MockWorld adversarial({s}, {}, OracleConfig{1.0, 1.0});
    const Point inside = e.bbox.center();
    const Point outside{inside.x + 400 < s.size.width ? inside.x + 400 : inside.x - 400, inside.y};
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        EXPECT_TRUE(verify(perfect, img, inside, instruction_for(e), {}, seed));
        EXPECT_FALSE(verify(perfect, img, outside, instruction_for(e), {}, seed));
        EXPECT_FALSE(verify(adversarial, img, inside, instruction_for(e), {}, seed));
        EXPECT_TRUE(verify(adversarial, img, outside, instruction_for(e), {}, seed));
    }
}

TEST(MockAggregate, PicksTheCandidateInsideTheTarget) {
    const Scene s = generate_scene(8, kSmall);
    const Image img = render_scene(s);
    const SceneElement& e = s.elements[3];
    const MockWorld world({s}, {}, OracleConfig{0.0, 0.0});
    const Point c = e.bbox.center();
    const std::vector<Image> marked{draw_marker(img, {c.x + 300 > 1900 ? c.x - 300 : c.x + 300, c.y}),
                                    draw_marker(img, c),
                                    draw_marker(img, {c.x, c.y + 200 > 1070 ? c.y - 200 : c.y + 200})};
    const AggregationOutcome o = aggregate(world, marked, instruction_for(e));
    EXPECT_EQ(o.index, 1u);
    EXPECT_TRUE(o.from_reply);
    const MockWorld adversarial({s}, {}, OracleConfig{0.0, 1.0});
    EXPECT_NE(aggregate(adversarial, marked, instruction_for(e)).index, 1u);
}

TEST(MockWorld, PureInRequestAndSeed) {
    const Scene s = generate_scene(17, kSmall);
    const MockWorld world({s});
    const auto a = world.ground_scene(0, instruction_for(s.elements[1]), 0.75, 5);
    const auto b = world.ground_scene(0, instruction_for(s.elements[1]), 0.75, 5);
    const auto c = world.ground_scene(0, instruction_for(s.elements[1]), 0.75, 6);
    EXPECT_EQ(a.reply.text, b.reply.text);
    EXPECT_EQ(a.reply.tokens, b.reply.tokens);
    EXPECT_NE(a.reply.tokens, c.reply.tokens);
}

TEST(MockWorld, RejectsDuplicateLabelsAndBadNoise) {
    const Scene s = generate_scene(17, kSmall);
    EXPECT_THROW(MockWorld({s, s}), InvalidArgument);
    EXPECT_THROW(MockWorld({s}, NoiseModel{4.0, 0.0, 0.1}), InvalidArgument);
    EXPECT_THROW(MockWorld({s}, NoiseModel{4.0, 1.0, 1.0}), InvalidArgument);
}
