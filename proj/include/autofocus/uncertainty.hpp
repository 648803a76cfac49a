#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "autofocus/error.hpp"
#include "autofocus/field.hpp"
#include "autofocus/geometry.hpp"

namespace autofocus {

enum class SampleSource { initial, sampled };

struct CoordinateSample {
    Point point;
    double ppl_x = 1.0;
    double ppl_y = 1.0;
    double ppl_total = 1.0;
    SampleSource source = SampleSource::sampled;
};

struct UncertaintyConfig {
    double beta = 50.0;         // pixels per perplexity unit
    double temperature = 0.75;  // sampling temperature
    double top_p = 1.0;
    int n_samples = 5;
};

inline double sigma_from_ppl(double ppl, double beta) {
    if (!(ppl >= 1.0) || !std::isfinite(ppl)) throw InvalidArgument("sigma_from_ppl: perplexity must be >= 1");
    if (!(beta > 0.0) || !std::isfinite(beta)) throw InvalidArgument("sigma_from_ppl: beta must be positive");
    return beta * ppl;
}

/// Softmax of -ppl. Shifted by the minimum perplexity for stability.
inline std::vector<double> sample_weights(std::span<const double> ppl_totals) {
    if (ppl_totals.empty()) throw InvalidArgument("sample_weights: no samples");
    const double lo = *std::min_element(ppl_totals.begin(), ppl_totals.end());
    std::vector<double> w(ppl_totals.size());
    double z = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        if (!(ppl_totals[i] >= 1.0)) throw InvalidArgument("sample_weights: perplexity must be >= 1");
        w[i] = std::exp(-(ppl_totals[i] - lo));
        z += w[i];
    }
    for (double& v : w) v /= z;
    return w;
}

inline std::vector<GaussianKernel> build_kernels(std::span<const CoordinateSample> samples,
                                                 const UncertaintyConfig& cfg) {
    if (samples.empty()) throw InvalidArgument("build_kernels: no samples");
    std::vector<double> ppl(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) ppl[i] = samples[i].ppl_total;
    const std::vector<double> w = sample_weights(ppl);

    std::vector<GaussianKernel> kernels;
    kernels.reserve(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& s = samples[i];
        kernels.push_back({s.point, sigma_from_ppl(s.ppl_x, cfg.beta), sigma_from_ppl(s.ppl_y, cfg.beta), w[i]});
    }
    return kernels;
}

}  // namespace autofocus
