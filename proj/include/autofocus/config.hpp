#pragma once

// JSON form of PipelineConfig. Missing keys keep their defaults.

#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "autofocus/error.hpp"
#include "autofocus/pipeline.hpp"

namespace autofocus {

inline nlohmann::json config_to_json(const PipelineConfig& c) {
    return {{"temperature", c.uncertainty.temperature},
            {"top_p", c.uncertainty.top_p},
            {"samples", c.uncertainty.n_samples},
            {"beta", c.uncertainty.beta},
            {"alphas", c.proposals.alphas},
            {"lambda", c.proposals.lambda},
            {"k_local", c.proposals.k_local},
            {"iou", c.proposals.iou_threshold},
            {"min_crop", c.proposals.min_crop},
            {"concurrency", c.concurrency_limit},
            {"refine", c.refinement_enabled},
            {"mode", to_string(c.mode)},
            {"crop_long_side", c.crop_target.long_side},
            {"marker_radius", c.marker.radius},
            {"grammar", to_string(c.grammar.style)},
            {"unit_coordinates", c.grammar.units == CoordinateUnits::unit_interval},
            {"ppl_scope", c.ppl_scope == PplScope::coordinate_tokens ? "coordinate" : "full"}};
}

inline PipelineConfig config_from_json(const nlohmann::json& j, PipelineConfig c = {}) {
    if (!j.is_object()) throw InvalidArgument("config: expected a JSON object");
    static const char* known[] = {"temperature", "top_p",  "samples", "beta",           "alphas",        "lambda",
                                  "k_local",     "iou",    "min_crop", "concurrency",   "refine",        "mode",
                                  "crop_long_side", "marker_radius", "grammar", "unit_coordinates", "ppl_scope"};
    for (const auto& [key, _] : j.items()) {
        if (std::find(std::begin(known), std::end(known), key) == std::end(known)) {
            throw InvalidArgument("config: unknown key '" + key + "'");
        }
    }
    try {
        c.uncertainty.temperature = j.value("temperature", c.uncertainty.temperature);
        c.uncertainty.top_p = j.value("top_p", c.uncertainty.top_p);
        c.uncertainty.n_samples = j.value("samples", c.uncertainty.n_samples);
        c.uncertainty.beta = j.value("beta", c.uncertainty.beta);
        c.proposals.alphas = j.value("alphas", c.proposals.alphas);
        c.proposals.lambda = j.value("lambda", c.proposals.lambda);
        c.proposals.k_local = j.value("k_local", c.proposals.k_local);
        c.proposals.iou_threshold = j.value("iou", c.proposals.iou_threshold);
        c.proposals.min_crop = j.value("min_crop", c.proposals.min_crop);
        c.concurrency_limit = j.value("concurrency", c.concurrency_limit);
        c.refinement_enabled = j.value("refine", c.refinement_enabled);
        if (j.contains("mode")) c.mode = parse_ablation_mode(j["mode"].get<std::string>());
        c.crop_target.long_side = j.value("crop_long_side", c.crop_target.long_side);
        c.marker.radius = j.value("marker_radius", c.marker.radius);
        if (j.contains("grammar")) c.grammar.style = parse_grammar_style(j["grammar"].get<std::string>());
        if (j.contains("unit_coordinates")) {
            c.grammar.units = j["unit_coordinates"].get<bool>() ? CoordinateUnits::unit_interval : CoordinateUnits::pixels;
        }
        if (j.contains("ppl_scope")) {
            const std::string s = j["ppl_scope"].get<std::string>();
            if (s != "coordinate" && s != "full") throw InvalidArgument("config: ppl_scope is 'coordinate' or 'full'");
            c.ppl_scope = s == "coordinate" ? PplScope::coordinate_tokens : PplScope::full_response;
        }
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument(std::string("config: ") + e.what());
    }
    c.validate();
    return c;
}

inline PipelineConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InvalidArgument("cannot open config " + path.string());
    const nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw InvalidArgument("config " + path.string() + " is not valid JSON");
    return config_from_json(j);
}

}  // namespace autofocus
