#pragma once

// The visual-prompt operator: a filled five-pointed star stamped on a copy of
// the screenshot.

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "autofocus/error.hpp"
#include "autofocus/geometry.hpp"
#include "autofocus/image.hpp"

namespace autofocus {

enum class MarkerShape { star5 };

struct MarkerStyle {
    MarkerShape shape = MarkerShape::star5;
    double radius = 20.0;
    Rgb color{255, 105, 180};  // pink
};

/// Ten star vertices, alternating outer/inner radius, first vertex pointing up.
inline std::array<Point, 10> star_polygon(Point center, double radius) {
    std::array<Point, 10> v{};
    for (int k = 0; k < 10; ++k) {
        const double r = (k % 2 == 0) ? radius : 0.4 * radius;
        const double theta = -std::numbers::pi / 2.0 + k * std::numbers::pi / 5.0;
        v[k] = {center.x + r * std::cos(theta), center.y + r * std::sin(theta)};
    }
    return v;
}

namespace detail {
// Even-odd crossing test.
template <std::size_t N>
bool point_in_polygon(const std::array<Point, N>& poly, double x, double y) {
    bool inside = false;
    for (std::size_t i = 0, j = N - 1; i < N; j = i++) {
        const Point& a = poly[i];
        const Point& b = poly[j];
        if ((a.y > y) != (b.y > y)) {
            const double xc = a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y);
            if (x < xc) inside = !inside;
        }
    }
    return inside;
}
}  // namespace detail

/// Returns a marked copy; pixels whose centres fall inside the star take the
/// marker colour. The point is clamped into the image first.
inline Image draw_marker(const Image& image, Point point, const MarkerStyle& style = {}) {
    if (style.radius < 4.0) throw InvalidArgument("draw_marker: radius must be >= 4");
    Image out = image;
    const Point c{std::clamp(point.x, 0.0, double(image.width())),
                  std::clamp(point.y, 0.0, double(image.height()))};
    const auto poly = star_polygon(c, style.radius);
    const int x0 = std::max(0, int(std::floor(c.x - style.radius)));
    const int x1 = std::min(image.width() - 1, int(std::ceil(c.x + style.radius)));
    const int y0 = std::max(0, int(std::floor(c.y - style.radius)));
    const int y1 = std::min(image.height() - 1, int(std::ceil(c.y + style.radius)));
    for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
            if (detail::point_in_polygon(poly, x + 0.5, y + 0.5)) out.set(x, y, style.color);
        }
    }
    return out;
}

}  // namespace autofocus
