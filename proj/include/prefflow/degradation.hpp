#pragma once

#include <cstdint>

#include "prefflow/image.hpp"
#include "prefflow/rng.hpp"

namespace prefflow {

// Parameters of the LQ synthesis pipeline: blur -> down -> noise -> JPEG -> up.
struct DegradationParams {
    double sigma = 0.0;    // blur std in pixels, [0,15]; 0 bypasses the blur
    int factor = 1;        // down/up factor r, [1,30]
    double delta = 0.0;    // noise std on the 0-255 scale, [0,20]
    int quality = 100;     // JPEG quality q, [40,100]
    std::uint64_t seed = 0;

    void validate() const;
};

enum class ResampleDir { Down, Up };

Image gaussian_blur(const Image& img, double sigma);
// Down: r x r box average (dims must be divisible by r). Up: bilinear to r x size.
Image resample(const Image& img, int factor, ResampleDir dir);
Image add_noise(const Image& img, double delta, std::uint64_t seed);
// Block-DCT luminance quantization path; q in [1,100].
Image jpeg_like(const Image& img, int quality);
Image degrade(const Image& img, const DegradationParams& params);

DegradationParams sample_params(Rng& rng);

// With probability p_rec returns the HQ image unchanged, otherwise degrades it.
Image maybe_bypass(const Image& img_hq, const DegradationParams& params, double p_rec, Rng& rng);

// Largest divisor of n that is <= factor; used to snap sampled factors onto
// sizes where the box average is defined.
int snap_factor(int factor, std::size_t height, std::size_t width);

}  // namespace prefflow
