#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "prefgen/taxonomy.hpp"

namespace prefgen::world {

using taxonomy::kFeatureDim;

enum class Shape { kCircle, kSquare, kTriangle };

const char* shape_name(Shape s);
Shape shape_from_name(const std::string& name);

// Semantic content of a prompt: what is drawn, independent of style.
struct Content {
    Shape shape = Shape::kCircle;
    double scale = 0.5;                    // in [0.3, 0.8]
    std::array<double, 2> position{0.5, 0.5};  // in [0.2, 0.8]
    void validate() const;
};

// Measurable style of an image. Channels (see taxonomy::Channel):
// hue and stripe-orientation are circular in [0,1); the rest live in [0,1].
struct FeatureVector {
    std::array<double, kFeatureDim> values{};
    std::array<bool, kFeatureDim> defined{};

    static FeatureVector all(double v) {
        FeatureVector f;
        f.values.fill(v);
        f.defined.fill(true);
        return f;
    }
};

// distance on one channel, circular-aware
double channel_distance(double a, double b, int channel);

// mean channel distance over channels defined in both vectors; NaN if none
double feature_distance(const FeatureVector& a, const FeatureVector& b);

// mean channel distance over `mask` channels where both are defined
double masked_distance(const FeatureVector& a, const FeatureVector& b,
                       const std::array<bool, kFeatureDim>& mask);

struct Image {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> pixels;  // RGB, row-major, 3 bytes per pixel

    bool operator==(const Image& o) const = default;
};

struct RenderOptions {
    int width = 32;
    int height = 32;
    double grating_phase = 0.0;  // in cycles; fixed phase keeps renders reproducible
};

// Deterministic render of (content, style) at the given seed. Style must be
// fully defined; use fill_undefined() for partial styles. Throws
// std::invalid_argument on out-of-range style values or bad content.
Image render(const Content& content, const FeatureVector& style, uint64_t rng_seed,
             const RenderOptions& opts = {});

// copy with undefined channels replaced by `neutral` (caller fill policy)
FeatureVector fill_undefined(const FeatureVector& f, double neutral = 0.5);

// Estimate all style channels back from pixels. On degenerate (near-uniform)
// images the stripe channels are marked undefined, as is hue when there is no
// chroma to read it from.
FeatureVector measure(const Image& img);

// image <-> real tensor in [-1,1], the representation the denoiser works in
std::vector<double> to_tensor(const Image& img);
Image from_tensor(const std::vector<double>& t, int width, int height);

// binary P6; byte-exact output is the reference format for golden tests
void write_ppm(const Image& img, const std::string& path);
Image read_ppm(const std::string& path);

// PNG via zlib-compressed IDAT
void write_png(const Image& img, const std::string& path);

}  // namespace prefgen::world
