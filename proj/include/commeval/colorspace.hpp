#pragma once

// Color conversions (HSV, sRGB, CIELAB), the CIEDE2000 color difference,
// and the feature vectors listener models consume.

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

#include "commeval/error.hpp"

namespace commeval {

/// HSV color: hue in degrees [0, 360), saturation and value in [0, 1].
struct Color {
    double h = 0.0;
    double s = 0.0;
    double v = 0.0;

    bool valid() const {
        return std::isfinite(h) && h >= 0.0 && h < 360.0 && s >= 0.0 && s <= 1.0 && v >= 0.0 && v <= 1.0;
    }
    friend bool operator==(const Color &, const Color &) = default;
};

struct Rgb {
    double r = 0.0;
    double g = 0.0;
    double b = 0.0;
};

struct LabColor {
    double L = 0.0;
    double a = 0.0;
    double b = 0.0;
};

inline Rgb hsv_to_rgb(const Color &c) {
    const double chroma = c.v * c.s;
    const double sector = c.h / 60.0;
    const double x = chroma * (1.0 - std::abs(std::fmod(sector, 2.0) - 1.0));
    const double m = c.v - chroma;
    double r = 0, g = 0, b = 0;
    switch (static_cast<int>(sector) % 6) {
    case 0: r = chroma, g = x, b = 0; break;
    case 1: r = x, g = chroma, b = 0; break;
    case 2: r = 0, g = chroma, b = x; break;
    case 3: r = 0, g = x, b = chroma; break;
    case 4: r = x, g = 0, b = chroma; break;
    default: r = chroma, g = 0, b = x; break;
    }
    return {r + m, g + m, b + m};
}

inline Color rgb_to_hsv(const Rgb &c) {
    const double hi = std::max({c.r, c.g, c.b});
    const double lo = std::min({c.r, c.g, c.b});
    const double delta = hi - lo;
    Color out{0.0, hi > 0.0 ? delta / hi : 0.0, hi};
    if (delta > 0.0) {
        double h;
        if (hi == c.r)
            h = 60.0 * std::fmod((c.g - c.b) / delta, 6.0);
        else if (hi == c.g)
            h = 60.0 * ((c.b - c.r) / delta + 2.0);
        else
            h = 60.0 * ((c.r - c.g) / delta + 4.0);
        if (h < 0.0) h += 360.0;
        if (h >= 360.0) h -= 360.0;
        out.h = h;
    }
    return out;
}

namespace detail {

inline double srgb_to_linear(double c) {
    return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

inline double lab_f(double t) {
    constexpr double delta = 6.0 / 29.0;
    return t > delta * delta * delta ? std::cbrt(t) : t / (3.0 * delta * delta) + 4.0 / 29.0;
}

} // namespace detail

/// sRGB (D65, 2 degree observer) to CIELAB.
inline LabColor rgb_to_lab(const Rgb &c) {
    const double r = detail::srgb_to_linear(c.r);
    const double g = detail::srgb_to_linear(c.g);
    const double b = detail::srgb_to_linear(c.b);

    const double x = 0.4124564 * r + 0.3575761 * g + 0.1804375 * b;
    const double y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
    const double z = 0.0193339 * r + 0.1191920 * g + 0.9503041 * b;

    constexpr double xn = 0.95047, yn = 1.0, zn = 1.08883;
    const double fx = detail::lab_f(x / xn);
    const double fy = detail::lab_f(y / yn);
    const double fz = detail::lab_f(z / zn);
    return {std::clamp(116.0 * fy - 16.0, 0.0, 100.0), 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

inline LabColor hsv_to_lab(const Color &c) { return rgb_to_lab(hsv_to_rgb(c)); }

/// CIEDE2000 color difference with unit weighting factors (kL = kC = kH = 1).
inline double ciede2000(const LabColor &x, const LabColor &y) {
    using std::atan2, std::cos, std::exp, std::hypot, std::pow, std::sin, std::sqrt;
    constexpr double pi = std::numbers::pi;
    constexpr double deg = pi / 180.0;
    constexpr double pow25_7 = 6103515625.0; // 25^7

    const double c1 = hypot(x.a, x.b);
    const double c2 = hypot(y.a, y.b);
    const double c_bar7 = pow((c1 + c2) / 2.0, 7.0);
    const double g = 0.5 * (1.0 - sqrt(c_bar7 / (c_bar7 + pow25_7)));

    const double a1p = (1.0 + g) * x.a;
    const double a2p = (1.0 + g) * y.a;
    const double c1p = hypot(a1p, x.b);
    const double c2p = hypot(a2p, y.b);

    auto hue = [](double b, double ap) {
        if (b == 0.0 && ap == 0.0) return 0.0;
        double h = atan2(b, ap) / deg;
        return h < 0.0 ? h + 360.0 : h;
    };
    const double h1p = hue(x.b, a1p);
    const double h2p = hue(y.b, a2p);

    const double d_lp = y.L - x.L;
    const double d_cp = c2p - c1p;

    double d_hp = 0.0;
    if (c1p * c2p != 0.0) {
        d_hp = h2p - h1p;
        if (d_hp > 180.0)
            d_hp -= 360.0;
        else if (d_hp < -180.0)
            d_hp += 360.0;
    }
    const double d_HP = 2.0 * sqrt(c1p * c2p) * sin(d_hp * deg / 2.0);

    const double l_bar = (x.L + y.L) / 2.0;
    const double c_barp = (c1p + c2p) / 2.0;

    double h_barp = h1p + h2p;
    if (c1p * c2p != 0.0) {
        if (std::abs(h1p - h2p) <= 180.0)
            h_barp /= 2.0;
        else if (h1p + h2p < 360.0)
            h_barp = (h1p + h2p + 360.0) / 2.0;
        else
            h_barp = (h1p + h2p - 360.0) / 2.0;
    }

    const double t = 1.0 - 0.17 * cos((h_barp - 30.0) * deg) + 0.24 * cos(2.0 * h_barp * deg) +
                     0.32 * cos((3.0 * h_barp + 6.0) * deg) - 0.20 * cos((4.0 * h_barp - 63.0) * deg);
    const double d_theta = 30.0 * exp(-pow((h_barp - 275.0) / 25.0, 2.0));
    const double c_barp7 = pow(c_barp, 7.0);
    const double r_c = 2.0 * sqrt(c_barp7 / (c_barp7 + pow25_7));
    const double l50 = (l_bar - 50.0) * (l_bar - 50.0);
    const double s_l = 1.0 + 0.015 * l50 / sqrt(20.0 + l50);
    const double s_c = 1.0 + 0.045 * c_barp;
    const double s_h = 1.0 + 0.015 * c_barp * t;
    const double r_t = -sin(2.0 * d_theta * deg) * r_c;

    const double tl = d_lp / s_l;
    const double tc = d_cp / s_c;
    const double th = d_HP / s_h;
    return sqrt(std::max(0.0, tl * tl + tc * tc + th * th + r_t * tc * th));
}

inline double ciede2000(const Color &x, const Color &y) { return ciede2000(hsv_to_lab(x), hsv_to_lab(y)); }

enum class FeatureMode { raw_hsv, fourier };

inline std::size_t feature_dim(FeatureMode mode) { return mode == FeatureMode::raw_hsv ? 3 : 54; }

inline std::string_view to_string(FeatureMode mode) {
    return mode == FeatureMode::raw_hsv ? "raw_hsv" : "fourier";
}

inline FeatureMode parse_feature_mode(std::string_view s) {
    if (s == "raw_hsv") return FeatureMode::raw_hsv;
    if (s == "fourier") return FeatureMode::fourier;
    throw UsageError("unknown feature mode '" + std::string(s) + "' (expected raw_hsv or fourier)");
}

/// raw_hsv: (h/360, s, v). fourier: for (j,k,l) in {0,1,2}^3 in lexicographic
/// order, the pair cos(2 pi (j h + k s + l v)), sin(...) on normalized hsv.
inline std::vector<double> color_features(const Color &c, FeatureMode mode) {
    const double hn = c.h / 360.0;
    if (mode == FeatureMode::raw_hsv) return {hn, c.s, c.v};
    std::vector<double> out;
    out.reserve(54);
    for (int j = 0; j < 3; ++j)
        for (int k = 0; k < 3; ++k)
            for (int l = 0; l < 3; ++l) {
                const double arg = 2.0 * std::numbers::pi * (j * hn + k * c.s + l * c.v);
                out.push_back(std::cos(arg));
                out.push_back(std::sin(arg));
            }
    return out;
}

} // namespace commeval
