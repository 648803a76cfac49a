#pragma once

// Axis-aligned box algebra in continuous pixel coordinates of the original
// screenshot. Rasterization to integer pixels happens only in rasterize().

#include <algorithm>
#include <cmath>
#include <string>

#include "autofocus/error.hpp"

namespace autofocus {

struct Point {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const Point&, const Point&) = default;
};

struct ImageSize {
    int width = 0;
    int height = 0;

    friend bool operator==(const ImageSize&, const ImageSize&) = default;
};

struct Box {
    double x_min = 0.0;
    double y_min = 0.0;
    double x_max = 0.0;
    double y_max = 0.0;

    double width() const { return x_max - x_min; }
    double height() const { return y_max - y_min; }
    double area() const { return width() * height(); }
    Point center() const { return {0.5 * (x_min + x_max), 0.5 * (y_min + y_max)}; }
    bool valid() const { return x_min < x_max && y_min < y_max; }

    static Box from_center(Point c, double w, double h) {
        return {c.x - 0.5 * w, c.y - 0.5 * h, c.x + 0.5 * w, c.y + 0.5 * h};
    }

    friend bool operator==(const Box&, const Box&) = default;
};

// Integer pixel rectangle [x, x+width) x [y, y+height).
struct PixelRect {
    int x = 0;
    int y = 0;
    int width = 0;
    int height = 0;

    Box to_box() const {
        return {double(x), double(y), double(x + width), double(y + height)};
    }
    friend bool operator==(const PixelRect&, const PixelRect&) = default;
};

// Maps a crop of the original image, resized to `target`, back to the
// original frame.
struct CropTransform {
    Point origin;
    double s_x = 1.0;  // resized px per original px
    double s_y = 1.0;
    Box crop;
    ImageSize target;
};

namespace detail {
inline void require(bool cond, const char* what) {
    if (!cond) throw InvalidArgument(what);
}
}  // namespace detail

inline bool contains(const Box& b, Point p) {
    return p.x >= b.x_min && p.x <= b.x_max && p.y >= b.y_min && p.y <= b.y_max;
}

inline bool contains(const Box& outer, const Box& inner) {
    return inner.x_min >= outer.x_min && inner.x_max <= outer.x_max &&
           inner.y_min >= outer.y_min && inner.y_max <= outer.y_max;
}

inline bool inside_image(const Box& b, ImageSize image) {
    return contains(Box{0.0, 0.0, double(image.width), double(image.height)}, b);
}

inline double intersection_area(const Box& a, const Box& b) {
    const double w = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
    const double h = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
    return (w > 0.0 && h > 0.0) ? w * h : 0.0;
}

inline double iou(const Box& a, const Box& b) {
    const double inter = intersection_area(a, b);
    const double uni = a.area() + b.area() - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

/// 3-sigma box around a sample; extends past the image freely.
inline Box local_box(Point center, double sigma_x, double sigma_y) {
    detail::require(sigma_x > 0.0 && sigma_y > 0.0, "local_box: sigma must be positive");
    return {center.x - 3.0 * sigma_x, center.y - 3.0 * sigma_y,
            center.x + 3.0 * sigma_x, center.y + 3.0 * sigma_y};
}

/// Box of size (alpha*sigma_x, alpha*sigma_y) centered on the field mean.
inline Box global_box(Point mean, double sigma_x, double sigma_y, double alpha) {
    detail::require(sigma_x > 0.0 && sigma_y > 0.0, "global_box: sigma must be positive");
    detail::require(alpha > 0.0, "global_box: alpha must be positive");
    return Box::from_center(mean, alpha * sigma_x, alpha * sigma_y);
}

namespace detail {
// Translate [lo, hi] into [0, extent]; clamp to the full extent when it cannot fit.
inline void fit_axis(double& lo, double& hi, double extent) {
    const double len = hi - lo;
    if (len >= extent) {
        lo = 0.0;
        hi = extent;
        return;
    }
    if (lo < 0.0) {
        hi -= lo;
        lo = 0.0;
    } else if (hi > extent) {
        lo -= hi - extent;
        hi = extent;
    }
}
}  // namespace detail

/// Moves the box inside the image keeping its size. A dimension larger than
/// the image is clamped to the full image extent.
inline Box boundary_adjust(const Box& box, ImageSize image) {
    Box out = box;
    detail::fit_axis(out.x_min, out.x_max, double(image.width));
    detail::fit_axis(out.y_min, out.y_max, double(image.height));
    return out;
}

/// Interpolates each side toward max(W, H) by lambda.
inline Box shape_aware_zoom(const Box& box, double lambda) {
    detail::require(lambda >= 0.0 && lambda <= 1.0, "shape_aware_zoom: lambda must be in [0, 1]");
    const double w = box.width();
    const double h = box.height();
    const double side = std::max(w, h);
    const double w_final = w + lambda * (side - w);
    const double h_final = h + lambda * (side - h);
    return Box::from_center(box.center(), w_final, h_final);
}

/// Grows each side symmetrically to at least min(min_side, image side), then
/// restores containment.
inline Box enforce_min_size(const Box& box, double min_side, ImageSize image) {
    const double w = std::max(box.width(), std::min(min_side, double(image.width)));
    const double h = std::max(box.height(), std::min(min_side, double(image.height)));
    return boundary_adjust(Box::from_center(box.center(), w, h), image);
}

/// Pixel rectangle covering the box (floor of the min corner, ceil of the max
/// corner), clipped to the image and at least one pixel in each direction.
inline PixelRect rasterize(const Box& box, ImageSize image) {
    int x0 = int(std::floor(box.x_min));
    int y0 = int(std::floor(box.y_min));
    int x1 = int(std::ceil(box.x_max));
    int y1 = int(std::ceil(box.y_max));
    x0 = std::clamp(x0, 0, image.width - 1);
    y0 = std::clamp(y0, 0, image.height - 1);
    x1 = std::clamp(x1, x0 + 1, image.width);
    y1 = std::clamp(y1, y0 + 1, image.height);
    return {x0, y0, x1 - x0, y1 - y0};
}

struct ResizePolicy {
    enum class Mode { uniform_long_side, fixed };
    Mode mode = Mode::uniform_long_side;
    int long_side = 1288;
    ImageSize fixed_size{1288, 1288};
};

/// Resolution a crop of `crop` pixels is resized to before being sent to the model.
inline ImageSize resize_target(ImageSize crop, const ResizePolicy& policy) {
    detail::require(crop.width >= 1 && crop.height >= 1, "resize_target: empty crop");
    if (policy.mode == ResizePolicy::Mode::fixed) {
        detail::require(policy.fixed_size.width >= 1 && policy.fixed_size.height >= 1,
                        "resize_target: empty fixed size");
        return policy.fixed_size;
    }
    detail::require(policy.long_side >= 1, "resize_target: long_side must be positive");
    const double scale = double(policy.long_side) / double(std::max(crop.width, crop.height));
    return {std::max(1, int(std::lround(crop.width * scale))),
            std::max(1, int(std::lround(crop.height * scale)))};
}

inline CropTransform make_crop_transform(const Box& box, ImageSize target) {
    detail::require(box.width() > 0.0 && box.height() > 0.0,
                    "make_crop_transform: zero-area box");
    detail::require(target.width >= 1 && target.height >= 1,
                    "make_crop_transform: invalid target size");
    CropTransform t;
    t.origin = {box.x_min, box.y_min};
    t.s_x = double(target.width) / box.width();
    t.s_y = double(target.height) / box.height();
    t.crop = box;
    t.target = target;
    return t;
}

/// Crop-local (resized) coordinates to the original image frame.
inline Point remap_to_global(Point local, const CropTransform& t) {
    return {t.origin.x + local.x / t.s_x, t.origin.y + local.y / t.s_y};
}

/// Inverse of remap_to_global.
inline Point map_to_local(Point global, const CropTransform& t) {
    return {(global.x - t.origin.x) * t.s_x, (global.y - t.origin.y) * t.s_y};
}

inline std::string to_string(const Box& b) {
    return "[" + std::to_string(b.x_min) + "," + std::to_string(b.x_max) + "]x[" +
           std::to_string(b.y_min) + "," + std::to_string(b.y_max) + "]";
}

}  // namespace autofocus
