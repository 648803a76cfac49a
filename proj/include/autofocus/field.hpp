#pragma once

// Anisotropic Gaussian density field M(p) = sum_i w_i N_i(p) with
// unnormalized (peak-one) kernels, and its first two moments.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include "autofocus/error.hpp"
#include "autofocus/geometry.hpp"

namespace autofocus {

struct GaussianKernel {
    Point mu;
    double sigma_x = 1.0;
    double sigma_y = 1.0;
    double weight = 1.0;
};

struct FieldMoments {
    Point mean;
    double var_x = 0.0;
    double var_y = 0.0;
    double cov_xy = 0.0;
    // Set by grid_moments when some kernel's 4-sigma support leaves the grid.
    bool truncated = false;

    double sigma_x() const { return std::sqrt(var_x); }
    double sigma_y() const { return std::sqrt(var_y); }
};

inline double eval_kernel(const GaussianKernel& k, Point p) {
    const double dx = (p.x - k.mu.x) / k.sigma_x;
    const double dy = (p.y - k.mu.y) / k.sigma_y;
    return std::exp(-0.5 * (dx * dx + dy * dy));
}

inline double eval_field(std::span<const GaussianKernel> kernels, Point p) {
    double m = 0.0;
    for (const auto& k : kernels) m += k.weight * eval_kernel(k, p);
    return m;
}

/// Closed-form moments of the normalized field. Each peak-one kernel carries
/// mass 2*pi*sigma_x*sigma_y, so component weights are w_i * sigma_x * sigma_y
/// (the 2*pi cancels in the normalization).
inline FieldMoments mixture_moments(std::span<const GaussianKernel> kernels) {
    if (kernels.empty()) throw InvalidArgument("mixture_moments: no kernels");
    std::vector<double> mass(kernels.size());
    double total = 0.0;
    for (std::size_t i = 0; i < kernels.size(); ++i) {
        mass[i] = kernels[i].weight * kernels[i].sigma_x * kernels[i].sigma_y;
        total += mass[i];
    }
    if (!(total > 0.0)) throw InvalidArgument("mixture_moments: field has no mass");

    FieldMoments m;
    for (std::size_t i = 0; i < kernels.size(); ++i) {
        const double w = mass[i] / total;
        m.mean.x += w * kernels[i].mu.x;
        m.mean.y += w * kernels[i].mu.y;
    }
    for (std::size_t i = 0; i < kernels.size(); ++i) {
        const double w = mass[i] / total;
        const double dx = kernels[i].mu.x - m.mean.x;
        const double dy = kernels[i].mu.y - m.mean.y;
        m.var_x += w * (kernels[i].sigma_x * kernels[i].sigma_x + dx * dx);
        m.var_y += w * (kernels[i].sigma_y * kernels[i].sigma_y + dy * dy);
        m.cov_xy += w * dx * dy;
    }
    return m;
}

/// Moments by direct summation of M(p) over cell centers of `region`, cell
/// side `cell`. Mass outside the region is dropped, as a pixel sum would.
inline FieldMoments grid_moments(std::span<const GaussianKernel> kernels, double cell, const Box& region) {
    if (kernels.empty()) throw InvalidArgument("grid_moments: no kernels");
    if (!(cell > 0.0) || !region.valid()) throw InvalidArgument("grid_moments: bad grid");

    const auto nx = std::size_t(std::ceil(region.width() / cell));
    const auto ny = std::size_t(std::ceil(region.height() / cell));
    std::vector<double> xs(nx), ys(ny);
    for (std::size_t c = 0; c < nx; ++c) xs[c] = region.x_min + (double(c) + 0.5) * cell;
    for (std::size_t r = 0; r < ny; ++r) ys[r] = region.y_min + (double(r) + 0.5) * cell;

    FieldMoments out;
    // exp(a + b) = exp(a) exp(b): tabulate each kernel's row and column factors.
    std::vector<std::vector<double>> fx(kernels.size()), fy(kernels.size());
    for (std::size_t i = 0; i < kernels.size(); ++i) {
        const auto& k = kernels[i];
        fx[i].resize(nx);
        fy[i].resize(ny);
        for (std::size_t c = 0; c < nx; ++c) {
            const double d = (xs[c] - k.mu.x) / k.sigma_x;
            fx[i][c] = std::exp(-0.5 * d * d);
        }
        for (std::size_t r = 0; r < ny; ++r) {
            const double d = (ys[r] - k.mu.y) / k.sigma_y;
            fy[i][r] = k.weight * std::exp(-0.5 * d * d);
        }
        const Box support = Box::from_center(k.mu, 8.0 * k.sigma_x, 8.0 * k.sigma_y);
        if (!contains(region, support)) out.truncated = true;
    }

    // First pass: mass and first moments. Second pass: central second moments.
    std::vector<double> row(nx);
    double s0 = 0.0, sx = 0.0, sy = 0.0;
    auto fill_row = [&](std::size_t r) {
        std::fill(row.begin(), row.end(), 0.0);
        for (std::size_t i = 0; i < kernels.size(); ++i) {
            const double wy = fy[i][r];
            if (wy == 0.0) continue;
            const double* f = fx[i].data();
            for (std::size_t c = 0; c < nx; ++c) row[c] += wy * f[c];
        }
    };
    for (std::size_t r = 0; r < ny; ++r) {
        fill_row(r);
        for (std::size_t c = 0; c < nx; ++c) {
            s0 += row[c];
            sx += row[c] * xs[c];
            sy += row[c] * ys[r];
        }
    }
    if (!(s0 > 0.0)) throw InvalidArgument("grid_moments: field has no mass on the grid");
    out.mean = {sx / s0, sy / s0};

    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (std::size_t r = 0; r < ny; ++r) {
        fill_row(r);
        const double dy = ys[r] - out.mean.y;
        for (std::size_t c = 0; c < nx; ++c) {
            const double dx = xs[c] - out.mean.x;
            sxx += row[c] * dx * dx;
            syy += row[c] * dy * dy;
            sxy += row[c] * dx * dy;
        }
    }
    out.var_x = sxx / s0;
    out.var_y = syy / s0;
    out.cov_xy = sxy / s0;
    return out;
}

inline FieldMoments grid_moments(std::span<const GaussianKernel> kernels, double cell, ImageSize extent) {
    return grid_moments(kernels, cell, Box{0.0, 0.0, double(extent.width), double(extent.height)});
}

struct Heatmap {
    int width = 0;
    int height = 0;
    int downsample = 1;
    std::vector<double> values;  // row-major, peak-normalized to [0, 1]

    double at(int col, int row) const { return values[std::size_t(row) * width + col]; }
};

/// Field sampled at the centers of downsample x downsample cells.
inline Heatmap rasterize_field(std::span<const GaussianKernel> kernels, ImageSize extent, int downsample) {
    if (kernels.empty()) throw InvalidArgument("rasterize_field: no kernels");
    if (downsample < 1) throw InvalidArgument("rasterize_field: downsample must be >= 1");
    Heatmap h;
    h.downsample = downsample;
    h.width = (extent.width + downsample - 1) / downsample;
    h.height = (extent.height + downsample - 1) / downsample;
    h.values.resize(std::size_t(h.width) * h.height);
    double peak = 0.0;
    for (int r = 0; r < h.height; ++r) {
        for (int c = 0; c < h.width; ++c) {
            const Point p{(c + 0.5) * downsample, (r + 0.5) * downsample};
            const double v = eval_field(kernels, p);
            h.values[std::size_t(r) * h.width + c] = v;
            peak = std::max(peak, v);
        }
    }
    if (peak > 0.0) {
        for (double& v : h.values) v /= peak;
    }
    return h;
}

}  // namespace autofocus
