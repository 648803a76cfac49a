#pragma once

#include <algorithm>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "autofocus/error.hpp"
#include "autofocus/field.hpp"
#include "autofocus/geometry.hpp"
#include "autofocus/uncertainty.hpp"

namespace autofocus {

enum class ProposalKind { local, global };

inline const char* to_string(ProposalKind k) { return k == ProposalKind::local ? "local" : "global"; }

struct RegionProposal {
    Box box;  // finalized, inside the image
    ProposalKind kind = ProposalKind::local;
    double score = 0.0;
    std::optional<std::size_t> source_sample;  // local proposals
    std::optional<double> alpha;               // global proposals
    Box raw;                                   // before finalization
};

struct ProposalConfig {
    int k_local = 3;
    std::vector<double> alphas{5.0, 8.0};
    double lambda = 0.5;
    double iou_threshold = 0.5;
    double min_crop = 336.0;

    int k_global() const { return int(alphas.size()); }
};

/// Greedy NMS. Candidates are visited by descending score, ties by lower
/// index; a candidate is dropped when its IoU with any kept box exceeds the
/// threshold. Returns kept indices in selection order.
inline std::vector<std::size_t> nms(std::span<const Box> boxes, std::span<const double> scores,
                                    double iou_threshold, std::size_t keep) {
    if (boxes.size() != scores.size()) throw InvalidArgument("nms: boxes and scores differ in length");
    std::vector<std::size_t> order(boxes.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    std::vector<std::size_t> selected;
    for (std::size_t i : order) {
        if (selected.size() >= keep) break;
        const bool suppressed = std::any_of(selected.begin(), selected.end(), [&](std::size_t s) {
            return iou(boxes[i], boxes[s]) > iou_threshold;
        });
        if (!suppressed) selected.push_back(i);
    }
    return selected;
}

/// Shape-aware zoom, then minimum size, then containment.
inline Box finalize(const Box& box, const ProposalConfig& cfg, ImageSize image) {
    const Box zoomed = shape_aware_zoom(box, cfg.lambda);
    const Box sized = enforce_min_size(zoomed, cfg.min_crop, image);
    return boundary_adjust(sized, image);
}

inline std::vector<RegionProposal> local_proposals(std::span<const CoordinateSample> samples,
                                                   const UncertaintyConfig& ucfg,
                                                   const ProposalConfig& pcfg, ImageSize image) {
    if (samples.empty()) throw InvalidArgument("local_proposals: no samples");
    if (pcfg.k_local < 0) throw InvalidArgument("local_proposals: k_local must be >= 0");
    std::vector<Box> boxes;
    std::vector<double> scores;
    for (const auto& s : samples) {
        boxes.push_back(local_box(s.point, sigma_from_ppl(s.ppl_x, ucfg.beta), sigma_from_ppl(s.ppl_y, ucfg.beta)));
        scores.push_back(-s.ppl_total);
    }
    std::vector<RegionProposal> out;
    for (std::size_t i : nms(boxes, scores, pcfg.iou_threshold, std::size_t(pcfg.k_local))) {
        RegionProposal p;
        p.raw = boxes[i];
        p.box = finalize(boxes[i], pcfg, image);
        p.kind = ProposalKind::local;
        p.score = scores[i];
        p.source_sample = i;
        out.push_back(p);
    }
    return out;
}

/// One box per alpha, centered on the field mean with size alpha * field sigma.
inline std::vector<RegionProposal> global_proposals(std::span<const CoordinateSample> samples,
                                                    const UncertaintyConfig& ucfg,
                                                    const ProposalConfig& pcfg, ImageSize image) {
    const auto kernels = build_kernels(samples, ucfg);
    const FieldMoments m = mixture_moments(kernels);
    std::vector<RegionProposal> out;
    for (double alpha : pcfg.alphas) {
        RegionProposal p;
        p.raw = global_box(m.mean, m.sigma_x(), m.sigma_y(), alpha);
        p.box = finalize(p.raw, pcfg, image);
        p.kind = ProposalKind::global;
        p.alpha = alpha;
        out.push_back(p);
    }
    return out;
}

}  // namespace autofocus
