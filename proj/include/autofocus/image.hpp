#pragma once

// 8-bit RGB rasters plus the PNG / base64 encodings used on the wire.

#include <png.h>
#include <sodium.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "autofocus/error.hpp"
#include "autofocus/geometry.hpp"

namespace autofocus {

struct Rgb {
    std::uint8_t r = 0, g = 0, b = 0;
    friend bool operator==(const Rgb&, const Rgb&) = default;
};

class Image {
public:
    Image() = default;
    Image(int width, int height, Rgb fill = {})
        : width_(width), height_(height), data_(std::size_t(width) * height * 3) {
        if (width < 1 || height < 1) throw InvalidArgument("Image: dimensions must be positive");
        for (std::size_t i = 0; i < data_.size(); i += 3) {
            data_[i] = fill.r;
            data_[i + 1] = fill.g;
            data_[i + 2] = fill.b;
        }
    }
    Image(int width, int height, std::vector<std::uint8_t> rgb)
        : width_(width), height_(height), data_(std::move(rgb)) {
        if (width < 1 || height < 1 || data_.size() != std::size_t(width) * height * 3) {
            throw InvalidArgument("Image: buffer does not match dimensions");
        }
    }

    int width() const { return width_; }
    int height() const { return height_; }
    ImageSize size() const { return {width_, height_}; }
    bool empty() const { return data_.empty(); }

    Rgb at(int x, int y) const {
        const std::size_t i = index(x, y);
        return {data_[i], data_[i + 1], data_[i + 2]};
    }
    void set(int x, int y, Rgb c) {
        const std::size_t i = index(x, y);
        data_[i] = c.r;
        data_[i + 1] = c.g;
        data_[i + 2] = c.b;
    }
    const std::uint8_t* row(int y) const { return data_.data() + std::size_t(y) * width_ * 3; }
    std::uint8_t* row(int y) { return data_.data() + std::size_t(y) * width_ * 3; }
    const std::vector<std::uint8_t>& bytes() const { return data_; }

    void fill_rect(const PixelRect& r, Rgb c) {
        const int x0 = std::max(0, r.x), y0 = std::max(0, r.y);
        const int x1 = std::min(width_, r.x + r.width), y1 = std::min(height_, r.y + r.height);
        for (int y = y0; y < y1; ++y) {
            for (int x = x0; x < x1; ++x) set(x, y, c);
        }
    }

    friend bool operator==(const Image&, const Image&) = default;

private:
    std::size_t index(int x, int y) const { return (std::size_t(y) * width_ + x) * 3; }

    int width_ = 0;
    int height_ = 0;
    std::vector<std::uint8_t> data_;
};

inline Image crop(const Image& src, const PixelRect& r) {
    if (r.width < 1 || r.height < 1 || r.x < 0 || r.y < 0 || r.x + r.width > src.width() ||
        r.y + r.height > src.height()) {
        throw InvalidArgument("crop: rectangle outside image");
    }
    std::vector<std::uint8_t> out(std::size_t(r.width) * r.height * 3);
    for (int y = 0; y < r.height; ++y) {
        std::memcpy(out.data() + std::size_t(y) * r.width * 3, src.row(r.y + y) + std::size_t(r.x) * 3,
                    std::size_t(r.width) * 3);
    }
    return Image(r.width, r.height, std::move(out));
}

/// Bilinear resize with pixel-center alignment: destination pixel centre
/// (u + 0.5) samples the source at (u + 0.5) / s - 0.5.
inline Image resize_bilinear(const Image& src, ImageSize target) {
    if (target.width < 1 || target.height < 1) throw InvalidArgument("resize: empty target");
    if (target == src.size()) return src;
    struct Tap {
        int i0, i1;
        double t;
    };
    auto taps = [](int dst, int srcn) {
        std::vector<Tap> out(dst);
        const double s = double(dst) / double(srcn);
        for (int u = 0; u < dst; ++u) {
            double f = (u + 0.5) / s - 0.5;
            f = std::clamp(f, 0.0, double(srcn - 1));
            const int i0 = int(std::floor(f));
            const int i1 = std::min(i0 + 1, srcn - 1);
            out[u] = {i0, i1, f - i0};
        }
        return out;
    };
    const auto tx = taps(target.width, src.width());
    const auto ty = taps(target.height, src.height());
    std::vector<std::uint8_t> out(std::size_t(target.width) * target.height * 3);
    for (int v = 0; v < target.height; ++v) {
        const std::uint8_t* r0 = src.row(ty[v].i0);
        const std::uint8_t* r1 = src.row(ty[v].i1);
        const double t = ty[v].t;
        std::uint8_t* o = out.data() + std::size_t(v) * target.width * 3;
        for (int u = 0; u < target.width; ++u) {
            const Tap& h = tx[u];
            for (int ch = 0; ch < 3; ++ch) {
                const double a = r0[h.i0 * 3 + ch] + h.t * (r0[h.i1 * 3 + ch] - r0[h.i0 * 3 + ch]);
                const double b = r1[h.i0 * 3 + ch] + h.t * (r1[h.i1 * 3 + ch] - r1[h.i0 * 3 + ch]);
                o[u * 3 + ch] = std::uint8_t(std::lround(a + t * (b - a)));
            }
        }
    }
    return Image(target.width, target.height, std::move(out));
}

// ---------------------------------------------------------------------------
// PNG

namespace detail {

inline std::vector<std::uint8_t> encode_png_raw(int width, int height, png_uint_32 format,
                                                const std::uint8_t* pixels) {
    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    image.width = png_uint_32(width);
    image.height = png_uint_32(height);
    image.format = format;
    png_alloc_size_t size = 0;
    if (!png_image_write_get_memory_size(image, size, 0, pixels, 0, nullptr)) {
        std::string msg = image.message;
        png_image_free(&image);
        throw std::runtime_error("png: " + msg);
    }
    std::vector<std::uint8_t> out(size);
    if (!png_image_write_to_memory(&image, out.data(), &size, 0, pixels, 0, nullptr)) {
        std::string msg = image.message;
        png_image_free(&image);
        throw std::runtime_error("png: " + msg);
    }
    out.resize(size);
    return out;
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_png(const Image& img) {
    return detail::encode_png_raw(img.width(), img.height(), PNG_FORMAT_RGB, img.bytes().data());
}

inline std::vector<std::uint8_t> encode_png_gray(int width, int height, const std::vector<std::uint8_t>& gray) {
    if (gray.size() != std::size_t(width) * height) throw InvalidArgument("encode_png_gray: size mismatch");
    return detail::encode_png_raw(width, height, PNG_FORMAT_GRAY, gray.data());
}

/// Decodes any PNG into 8-bit RGB (alpha composited away, gray expanded).
inline Image decode_png(std::span<const std::uint8_t> bytes) {
    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
        std::string msg = image.message;
        png_image_free(&image);
        throw std::runtime_error("png: " + msg);
    }
    image.format = PNG_FORMAT_RGB;
    std::vector<std::uint8_t> rgb(PNG_IMAGE_SIZE(image));
    const png_color black{0, 0, 0};
    if (!png_image_finish_read(&image, &black, rgb.data(), 0, nullptr)) {
        std::string msg = image.message;
        png_image_free(&image);
        throw std::runtime_error("png: " + msg);
    }
    return Image(int(image.width), int(image.height), std::move(rgb));
}

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
}

inline Image read_png(const std::filesystem::path& path) { return decode_png(read_file(path)); }

inline void write_png(const std::filesystem::path& path, const Image& img) { write_file(path, encode_png(img)); }

// ---------------------------------------------------------------------------
// base64 / digests (libsodium)

namespace detail {
inline void ensure_sodium() {
    static const bool ok = sodium_init() >= 0;
    if (!ok) throw std::runtime_error("libsodium initialisation failed");
}
}  // namespace detail

inline std::string base64_encode(std::span<const std::uint8_t> bytes) {
    detail::ensure_sodium();
    const std::size_t len = sodium_base64_encoded_len(bytes.size(), sodium_base64_VARIANT_ORIGINAL);
    std::string out(len, '\0');
    sodium_bin2base64(out.data(), len, bytes.data(), bytes.size(), sodium_base64_VARIANT_ORIGINAL);
    out.resize(len - 1);  // drop terminator
    return out;
}

inline std::vector<std::uint8_t> base64_decode(std::string_view text) {
    detail::ensure_sodium();
    std::vector<std::uint8_t> out(text.size() / 4 * 3 + 3);
    std::size_t len = 0;
    if (sodium_base642bin(out.data(), out.size(), text.data(), text.size(), " \r\n", &len, nullptr,
                          sodium_base64_VARIANT_ORIGINAL) != 0) {
        throw std::runtime_error("invalid base64 payload");
    }
    out.resize(len);
    return out;
}

inline std::string sha256_hex(std::span<const std::uint8_t> bytes) {
    detail::ensure_sodium();
    std::array<unsigned char, crypto_hash_sha256_BYTES> digest{};
    crypto_hash_sha256(digest.data(), bytes.data(), bytes.size());
    std::array<char, crypto_hash_sha256_BYTES * 2 + 1> hex{};
    sodium_bin2hex(hex.data(), hex.size(), digest.data(), digest.size());
    return std::string(hex.data());
}

/// Digest of dimensions and pixel payload; independent of PNG encoder settings.
inline std::string pixel_digest(const Image& img) {
    std::vector<std::uint8_t> buf;
    buf.reserve(img.bytes().size() + 8);
    for (int v : {img.width(), img.height()}) {
        for (int s = 0; s < 32; s += 8) buf.push_back(std::uint8_t((unsigned(v) >> s) & 0xFF));
    }
    buf.insert(buf.end(), img.bytes().begin(), img.bytes().end());
    return sha256_hex(buf);
}

}  // namespace autofocus
