#include "prefgen/world.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "prefgen/hashing.hpp"

namespace prefgen::world {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kTwoPi = 2.0 * kPi;

// Renderer constants. Every style channel has a documented pixel-level
// effect; measure() inverts exactly these mappings.
constexpr double kValueLo = 0.08, kValueSpan = 0.84;   // display band for value
constexpr double kSatLo = 0.06, kSatSpan = 0.88;       // display band for saturation
constexpr double kGratingAmp = 0.16;                   // sinusoidal grating on value
constexpr double kBalanceAmp = 0.30;                   // vertical brightness tilt
constexpr double kRoughAmp = 0.45;                     // seeded value-noise on value
constexpr double kEdgeAmp = 0.28;                      // shape contrast on saturation
constexpr double kFreqMin = 2.0, kFreqSpan = 8.0;      // grating cycles per image
constexpr double kEdgeMinPx = 2.0, kEdgeSpanPx = 4.5;  // edge ramp width at size 32
constexpr double kHfBand = 11.5;   // cycles; roughness energy lives above this
constexpr double kHfNoiseStd = 0.0282;  // band std of unit lattice noise, calibrated

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

// shape contrast shrinks near full saturation to leave headroom
double edge_amp_for(double sat) { return kEdgeAmp * (1.0 - 0.75 * sat); }

double wrap01(double v) {
    v = std::fmod(v, 1.0);
    return v < 0.0 ? v + 1.0 : v;
}

struct Hsv {
    double h, s, v;
};

void hsv_to_rgb(const Hsv& c, double* r, double* g, double* b) {
    double h = wrap01(c.h) * 6.0;
    int i = static_cast<int>(h) % 6;
    double f = h - std::floor(h);
    double p = c.v * (1.0 - c.s);
    double q = c.v * (1.0 - c.s * f);
    double t = c.v * (1.0 - c.s * (1.0 - f));
    switch (i) {
        case 0: *r = c.v; *g = t; *b = p; break;
        case 1: *r = q; *g = c.v; *b = p; break;
        case 2: *r = p; *g = c.v; *b = t; break;
        case 3: *r = p; *g = q; *b = c.v; break;
        case 4: *r = t; *g = p; *b = c.v; break;
        default: *r = c.v; *g = p; *b = q; break;
    }
}

Hsv rgb_to_hsv(double r, double g, double b) {
    double mx = std::max({r, g, b});
    double mn = std::min({r, g, b});
    double d = mx - mn;
    Hsv out{0.0, 0.0, mx};
    if (mx > 0.0) out.s = d / mx;
    if (d > 0.0) {
        if (mx == r)
            out.h = (g - b) / d;
        else if (mx == g)
            out.h = 2.0 + (b - r) / d;
        else
            out.h = 4.0 + (r - g) / d;
        out.h = wrap01(out.h / 6.0);
    }
    return out;
}

double sd_circle(double px, double py, double r) { return std::hypot(px, py) - r; }

double sd_square(double px, double py, double half) {
    double qx = std::fabs(px) - half;
    double qy = std::fabs(py) - half;
    double ox = std::max(qx, 0.0);
    double oy = std::max(qy, 0.0);
    return std::hypot(ox, oy) + std::min(std::max(qx, qy), 0.0);
}

double sd_triangle(double px, double py, double r) {
    // equilateral, apex up (image y grows downward)
    const double k = std::sqrt(3.0);
    py = -py;
    px = std::fabs(px) - r;
    py = py + r / k;
    if (px + k * py > 0.0) {
        double nx = (px - k * py) / 2.0;
        double ny = (-k * px - py) / 2.0;
        px = nx;
        py = ny;
    }
    px -= std::clamp(px, -2.0 * r, 0.0);
    double sgn = py > 0.0 ? 1.0 : (py < 0.0 ? -1.0 : 0.0);
    return -std::hypot(px, py) * sgn;
}

double signed_distance(const Content& c, double x_px, double y_px, int w, int h) {
    double cx = c.position[0] * w;
    double cy = c.position[1] * h;
    double base = 0.5 * c.scale * std::min(w, h);
    switch (c.shape) {
        case Shape::kCircle: return sd_circle(x_px - cx, y_px - cy, base);
        case Shape::kSquare: return sd_square(x_px - cx, y_px - cy, base * 0.9);
        default: return sd_triangle(x_px - cx, y_px - cy, base * 1.1);
    }
}

// bilinear value noise on a 2px lattice, range [-1,1]
struct LatticeNoise {
    int gw, gh;
    std::vector<double> cells;

    LatticeNoise(int w, int h, uint64_t seed) : gw(w / 2 + 1), gh(h / 2 + 1) {
        DetRng rng(mix64(seed, 0xA11CEull));
        cells.resize(static_cast<size_t>(gw) * gh);
        for (auto& c : cells) c = 2.0 * rng.uniform() - 1.0;
    }

    double at(double x_px, double y_px) const {
        double gx = (x_px + 0.5) / 2.0;
        double gy = (y_px + 0.5) / 2.0;
        int i = std::min(static_cast<int>(gx), gw - 2);
        int j = std::min(static_cast<int>(gy), gh - 2);
        double fx = gx - i;
        double fy = gy - j;
        auto v = [&](int a, int b) { return cells[static_cast<size_t>(b) * gw + a]; };
        double top = v(i, j) * (1.0 - fx) + v(i + 1, j) * fx;
        double bot = v(i, j + 1) * (1.0 - fx) + v(i + 1, j + 1) * fx;
        return top * (1.0 - fy) + bot * fy;
    }
};

}  // namespace

const char* shape_name(Shape s) {
    switch (s) {
        case Shape::kCircle: return "circle";
        case Shape::kSquare: return "square";
        default: return "triangle";
    }
}

Shape shape_from_name(const std::string& name) {
    if (name == "circle") return Shape::kCircle;
    if (name == "square") return Shape::kSquare;
    if (name == "triangle") return Shape::kTriangle;
    throw std::invalid_argument("unknown shape: " + name);
}

void Content::validate() const {
    if (scale < 0.3 || scale > 0.8)
        throw std::invalid_argument("content scale out of [0.3,0.8]");
    for (double p : position)
        if (p < 0.2 || p > 0.8) throw std::invalid_argument("content position out of [0.2,0.8]");
}

double channel_distance(double a, double b, int channel) {
    if (taxonomy::is_circular_channel(channel)) {
        double d = std::fabs(wrap01(a) - wrap01(b));
        return std::min(d, 1.0 - d);
    }
    return std::fabs(a - b);
}

double feature_distance(const FeatureVector& a, const FeatureVector& b) {
    double sum = 0.0;
    int n = 0;
    for (int c = 0; c < kFeatureDim; ++c) {
        if (!a.defined[c] || !b.defined[c]) continue;
        sum += channel_distance(a.values[c], b.values[c], c);
        ++n;
    }
    return n == 0 ? std::nan("") : sum / n;
}

double masked_distance(const FeatureVector& a, const FeatureVector& b,
                       const std::array<bool, kFeatureDim>& mask) {
    double sum = 0.0;
    int n = 0;
    for (int c = 0; c < kFeatureDim; ++c) {
        if (!mask[c] || !a.defined[c] || !b.defined[c]) continue;
        sum += channel_distance(a.values[c], b.values[c], c);
        ++n;
    }
    return n == 0 ? std::nan("") : sum / n;
}

FeatureVector fill_undefined(const FeatureVector& f, double neutral) {
    FeatureVector out = f;
    for (int c = 0; c < kFeatureDim; ++c) {
        if (!out.defined[c]) {
            out.values[c] = neutral;
            out.defined[c] = true;
        }
    }
    return out;
}

Image render(const Content& content, const FeatureVector& style, uint64_t rng_seed,
             const RenderOptions& opts) {
    content.validate();
    if (opts.width < 8 || opts.height < 8)
        throw std::invalid_argument("image size must be at least 8x8");
    for (int c = 0; c < kFeatureDim; ++c) {
        if (!style.defined[c])
            throw std::invalid_argument("style channel " + std::to_string(c) +
                                        " undefined; fill_undefined() first");
        if (style.values[c] < 0.0 || style.values[c] > 1.0)
            throw std::invalid_argument("style channel " + std::to_string(c) +
                                        " out of [0,1]");
    }
    const int w = opts.width, h = opts.height;
    const double hue = wrap01(style.values[taxonomy::kHue]);
    const double sat = style.values[taxonomy::kSaturation];
    const double bri = style.values[taxonomy::kBrightness];
    const double freq = style.values[taxonomy::kStripeFrequency];
    const double orient = wrap01(style.values[taxonomy::kStripeOrientation]);
    const double rough = style.values[taxonomy::kRoughness];
    const double soft = style.values[taxonomy::kEdgeSoftness];
    const double bal = style.values[taxonomy::kBalance];

    const double k_cyc = kFreqMin + freq * kFreqSpan;
    const double theta = kPi * orient;
    const double dir_x = std::cos(theta), dir_y = std::sin(theta);
    const double edge_w = (kEdgeMinPx + soft * kEdgeSpanPx) * (std::min(w, h) / 32.0);
    const double edge_amp = edge_amp_for(sat);
    const LatticeNoise noise(w, h, rng_seed);

    std::vector<double> mask(static_cast<size_t>(w) * h);
    double mask_mean = 0.0;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double d = signed_distance(content, x + 0.5, y + 0.5, w, h);
            double m = clamp01(0.5 - d / edge_w);
            mask[static_cast<size_t>(y) * w + x] = m;
            mask_mean += m;
        }
    }
    mask_mean /= static_cast<double>(w) * h;

    Image img;
    img.width = w;
    img.height = h;
    img.pixels.resize(static_cast<size_t>(w) * h * 3);
    for (int y = 0; y < h; ++y) {
        double yn = (y + 0.5) / h;
        double y_mid = (y + 0.5) / h - (0.5 + 0.5 / h);  // zero-mean over rows
        for (int x = 0; x < w; ++x) {
            double xn = (x + 0.5) / w;
            double grat = std::sin(kTwoPi * (k_cyc * (dir_x * xn + dir_y * yn) +
                                             opts.grating_phase));
            double v = bri + kGratingAmp * grat + kBalanceAmp * (2.0 * bal - 1.0) * y_mid +
                       kRoughAmp * rough * noise.at(x + 0.5, y + 0.5);
            double m = mask[static_cast<size_t>(y) * w + x];
            double s = sat + edge_amp * (m - mask_mean);
            Hsv hsv{hue, kSatLo + kSatSpan * clamp01(s), kValueLo + kValueSpan * clamp01(v)};
            double r, g, b;
            hsv_to_rgb(hsv, &r, &g, &b);
            size_t idx = (static_cast<size_t>(y) * w + x) * 3;
            img.pixels[idx + 0] = static_cast<uint8_t>(std::lround(255.0 * r));
            img.pixels[idx + 1] = static_cast<uint8_t>(std::lround(255.0 * g));
            img.pixels[idx + 2] = static_cast<uint8_t>(std::lround(255.0 * b));
        }
    }
    return img;
}

FeatureVector measure(const Image& img) {
    if (img.width < 8 || img.height < 8 ||
        img.pixels.size() != static_cast<size_t>(img.width) * img.height * 3)
        throw std::invalid_argument("malformed image");
    const int w = img.width, h = img.height;
    const size_t n = static_cast<size_t>(w) * h;

    std::vector<double> vmod(n), smod(n);
    double sat_sum = 0.0, val_sum = 0.0;
    double hue_x = 0.0, hue_y = 0.0, chroma_sum = 0.0;
    for (size_t i = 0; i < n; ++i) {
        double r = img.pixels[3 * i + 0] / 255.0;
        double g = img.pixels[3 * i + 1] / 255.0;
        double b = img.pixels[3 * i + 2] / 255.0;
        Hsv c = rgb_to_hsv(r, g, b);
        vmod[i] = (c.v - kValueLo) / kValueSpan;
        smod[i] = (c.s - kSatLo) / kSatSpan;
        val_sum += vmod[i];
        sat_sum += smod[i];
        double chroma = c.s * c.v;
        hue_x += chroma * std::cos(kTwoPi * c.h);
        hue_y += chroma * std::sin(kTwoPi * c.h);
        chroma_sum += chroma;
    }

    FeatureVector f;
    f.values[taxonomy::kBrightness] = clamp01(val_sum / n);
    f.defined[taxonomy::kBrightness] = true;
    double sat_est = clamp01(sat_sum / n);
    f.values[taxonomy::kSaturation] = sat_est;
    f.defined[taxonomy::kSaturation] = true;

    if (chroma_sum / n > 0.008) {
        f.values[taxonomy::kHue] = wrap01(std::atan2(hue_y, hue_x) / kTwoPi);
        f.defined[taxonomy::kHue] = true;
    }

    // balance: least-squares slope of row-mean value against row position
    {
        double sxy = 0.0, sxx = 0.0;
        for (int y = 0; y < h; ++y) {
            double row = 0.0;
            for (int x = 0; x < w; ++x) row += vmod[static_cast<size_t>(y) * w + x];
            row /= w;
            double yc = (y + 0.5) / h - (0.5 + 0.5 / h);
            sxy += yc * (row - val_sum / n);
            sxx += yc * yc;
        }
        double slope = sxy / sxx;
        f.values[taxonomy::kBalance] = clamp01(0.5 + slope / (2.0 * kBalanceAmp));
        f.defined[taxonomy::kBalance] = true;
    }

    // 2D DFT of the value channel (separable, half-plane v >= 0). A Hann
    // window keeps non-integer grating frequencies from leaking into the
    // high-frequency roughness band.
    {
        const int umax = w / 2, vmax = h / 2;
        const double mean_v = val_sum / static_cast<double>(n);
        std::vector<double> win_x(static_cast<size_t>(w)), win_y(static_cast<size_t>(h));
        for (int x = 0; x < w; ++x)
            win_x[static_cast<size_t>(x)] = 0.5 * (1.0 - std::cos(kTwoPi * x / w));
        for (int y = 0; y < h; ++y)
            win_y[static_cast<size_t>(y)] = 0.5 * (1.0 - std::cos(kTwoPi * y / h));
        std::vector<std::complex<double>> row_tf(static_cast<size_t>(2 * umax + 1) * h);
        for (int y = 0; y < h; ++y) {
            for (int u = -umax; u <= umax; ++u) {
                std::complex<double> acc;
                for (int x = 0; x < w; ++x) {
                    double ph = -kTwoPi * u * x / static_cast<double>(w);
                    acc += win_x[static_cast<size_t>(x)] *
                           (vmod[static_cast<size_t>(y) * w + x] - mean_v) *
                           std::complex<double>(std::cos(ph), std::sin(ph));
                }
                row_tf[static_cast<size_t>(u + umax) * h + y] = acc;
            }
        }
        auto spec = [&](int u, int v) {
            std::complex<double> acc;
            for (int y = 0; y < h; ++y) {
                double ph = -kTwoPi * v * y / static_cast<double>(h);
                acc += win_y[static_cast<size_t>(y)] *
                       row_tf[static_cast<size_t>(u + umax) * h + y] *
                       std::complex<double>(std::cos(ph), std::sin(ph));
            }
            return std::abs(acc);
        };
        std::vector<double> mag(static_cast<size_t>(2 * umax + 1) * (vmax + 1));
        auto mag_at = [&](int u, int v) -> double& {
            return mag[static_cast<size_t>(v) * (2 * umax + 1) + (u + umax)];
        };
        for (int v = 0; v <= vmax; ++v)
            for (int u = -umax; u <= umax; ++u) mag_at(u, v) = spec(u, v);

        int best_u = 0, best_v = 0;
        double best = -1.0;
        double hf_power = 0.0;
        for (int v = 0; v <= vmax; ++v) {
            for (int u = -umax; u <= umax; ++u) {
                double r = std::hypot(static_cast<double>(u), static_cast<double>(v));
                double m2 = mag_at(u, v) * mag_at(u, v);
                if (r > kHfBand) hf_power += (v == 0 || v == vmax) ? m2 : 2.0 * m2;
                if (v == 0 && u <= 0) continue;  // conjugate half
                if (r < kFreqMin - 0.5 || r > kFreqMin + kFreqSpan + 1.0) continue;
                if (mag_at(u, v) > best) {
                    best = mag_at(u, v);
                    best_u = u;
                    best_v = v;
                }
            }
        }
        double peak_amp = 8.0 * best / static_cast<double>(n);  // window gain 1/4
        if (best > 0.0 && peak_amp > 0.045) {
            auto neighbor = [&](int u, int v) {
                if (v < 0) { u = -u; v = -v; }       // conjugate symmetry
                if (v > vmax || u < -umax || u > umax) return 0.0;
                return mag_at(u, v);
            };
            auto refine = [](double l, double c, double r) {
                double den = l - 2.0 * c + r;
                if (std::fabs(den) < 1e-12) return 0.0;
                return std::clamp(0.5 * (l - r) / den, -0.5, 0.5);
            };
            double du = refine(neighbor(best_u - 1, best_v), best,
                               neighbor(best_u + 1, best_v));
            double dv = refine(neighbor(best_u, best_v - 1), best,
                               neighbor(best_u, best_v + 1));
            double uu = best_u + du, vv = best_v + dv;
            double k_est = std::hypot(uu, vv);
            double theta = std::atan2(vv, uu);
            if (theta < 0.0) theta += kPi;
            f.values[taxonomy::kStripeFrequency] = clamp01((k_est - kFreqMin) / kFreqSpan);
            f.defined[taxonomy::kStripeFrequency] = true;
            f.values[taxonomy::kStripeOrientation] = wrap01(theta / kPi);
            f.defined[taxonomy::kStripeOrientation] = true;
        }

        double band_var = hf_power / (static_cast<double>(n) * n);
        double rough = std::sqrt(std::max(band_var, 0.0)) / (kRoughAmp * kHfNoiseStd);
        f.values[taxonomy::kRoughness] = clamp01(rough);
        f.defined[taxonomy::kRoughness] = true;
    }

    // edge softness: steepest saturation ramp, steepness -> ramp width
    {
        std::vector<double> gmag;
        gmag.reserve(n);
        for (int y = 1; y + 1 < h; ++y) {
            for (int x = 1; x + 1 < w; ++x) {
                size_t i = static_cast<size_t>(y) * w + x;
                double gx = (smod[i + 1] - smod[i - 1]) / 2.0;
                double gy = (smod[i + w] - smod[i - w]) / 2.0;
                gmag.push_back(std::hypot(gx, gy));
            }
        }
        std::sort(gmag.begin(), gmag.end());
        // The ramp slope is uniform on the ring, so the median of the ramp
        // pixels is a quantization-robust slope estimate; a pure max or
        // top-percentile mean collects the noise tail instead.
        double p99 = gmag[static_cast<size_t>(0.99 * (gmag.size() - 1))];
        double threshold = 0.62 * p99;
        std::vector<double> ramp;
        for (double g : gmag)
            if (g >= threshold) ramp.push_back(g);
        double gmax = ramp.empty() ? 0.0 : ramp[ramp.size() / 2];
        double amp = edge_amp_for(sat_est);  // ramp height in s_model units
        double soft = 1.0;
        if (gmax > 1e-4) {
            double width_px = amp / gmax * (32.0 / std::min(w, h));
            soft = clamp01((width_px - kEdgeMinPx) / kEdgeSpanPx);
        }
        f.values[taxonomy::kEdgeSoftness] = soft;
        f.defined[taxonomy::kEdgeSoftness] = true;
    }

    return f;
}

std::vector<double> to_tensor(const Image& img) {
    std::vector<double> t(img.pixels.size());
    for (size_t i = 0; i < img.pixels.size(); ++i)
        t[i] = img.pixels[i] / 127.5 - 1.0;
    return t;
}

Image from_tensor(const std::vector<double>& t, int width, int height) {
    if (t.size() != static_cast<size_t>(width) * height * 3)
        throw std::invalid_argument("tensor size does not match image dims");
    Image img;
    img.width = width;
    img.height = height;
    img.pixels.resize(t.size());
    for (size_t i = 0; i < t.size(); ++i) {
        double v = std::clamp(t[i], -1.0, 1.0);
        img.pixels[i] = static_cast<uint8_t>(std::lround((v + 1.0) * 127.5));
    }
    return img;
}

void write_ppm(const Image& img, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "P6\n" << img.width << " " << img.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.pixels.data()),
              static_cast<std::streamsize>(img.pixels.size()));
}

Image read_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string magic;
    int w, h, maxv;
    in >> magic >> w >> h >> maxv;
    if (magic != "P6" || maxv != 255) throw std::runtime_error("not an 8-bit P6 file: " + path);
    in.get();
    Image img;
    img.width = w;
    img.height = h;
    img.pixels.resize(static_cast<size_t>(w) * h * 3);
    in.read(reinterpret_cast<char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
    if (!in) throw std::runtime_error("truncated P6 file: " + path);
    return img;
}

namespace {

void png_chunk(std::ofstream& out, const char* type, const std::vector<uint8_t>& data) {
    auto be32 = [](uint32_t v) {
        return std::array<uint8_t, 4>{static_cast<uint8_t>(v >> 24), static_cast<uint8_t>(v >> 16),
                                      static_cast<uint8_t>(v >> 8), static_cast<uint8_t>(v)};
    };
    auto len = be32(static_cast<uint32_t>(data.size()));
    out.write(reinterpret_cast<const char*>(len.data()), 4);
    out.write(type, 4);
    if (!data.empty())
        out.write(reinterpret_cast<const char*>(data.data()),
                  static_cast<std::streamsize>(data.size()));
    uLong crc = crc32(0L, reinterpret_cast<const Bytef*>(type), 4);
    if (!data.empty()) crc = crc32(crc, data.data(), static_cast<uInt>(data.size()));
    auto crcb = be32(static_cast<uint32_t>(crc));
    out.write(reinterpret_cast<const char*>(crcb.data()), 4);
}

}  // namespace

void write_png(const Image& img, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    static const uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
    out.write(reinterpret_cast<const char*>(sig), 8);

    std::vector<uint8_t> ihdr(13);
    auto put32 = [&](size_t off, uint32_t v) {
        ihdr[off] = static_cast<uint8_t>(v >> 24);
        ihdr[off + 1] = static_cast<uint8_t>(v >> 16);
        ihdr[off + 2] = static_cast<uint8_t>(v >> 8);
        ihdr[off + 3] = static_cast<uint8_t>(v);
    };
    put32(0, static_cast<uint32_t>(img.width));
    put32(4, static_cast<uint32_t>(img.height));
    ihdr[8] = 8;   // bit depth
    ihdr[9] = 2;   // truecolor
    png_chunk(out, "IHDR", ihdr);

    std::vector<uint8_t> raw;
    raw.reserve(static_cast<size_t>(img.height) * (1 + static_cast<size_t>(img.width) * 3));
    for (int y = 0; y < img.height; ++y) {
        raw.push_back(0);  // filter none
        const uint8_t* row = img.pixels.data() + static_cast<size_t>(y) * img.width * 3;
        raw.insert(raw.end(), row, row + static_cast<size_t>(img.width) * 3);
    }
    uLongf bound = compressBound(static_cast<uLong>(raw.size()));
    std::vector<uint8_t> comp(bound);
    if (compress2(comp.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
        throw std::runtime_error("png deflate failed");
    comp.resize(bound);
    png_chunk(out, "IDAT", comp);
    png_chunk(out, "IEND", {});
}

}  // namespace prefgen::world
