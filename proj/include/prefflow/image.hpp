#pragma once

#include <string>

#include "prefflow/tensor.hpp"

namespace prefflow {

// Grayscale image with pixels in [0,1], stored row-major.
struct Image {
    std::size_t height = 0;
    std::size_t width = 0;
    Tensor pixels;  // shape (height, width)

    Image() = default;
    Image(std::size_t h, std::size_t w) : height(h), width(w), pixels(Tensor::zeros({h, w})) {}
    Image(std::size_t h, std::size_t w, Tensor p);

    double& at(std::size_t r, std::size_t c) { return pixels.at(r, c); }
    double at(std::size_t r, std::size_t c) const { return pixels.at(r, c); }

    void clamp01();
    double mean() const { return pixels.mean(); }
    // population variance over pixels
    double variance() const;
};

Image image_from_tensor(const Tensor& t, std::size_t height, std::size_t width);

// Binary PGM (P5, maxval 255). Pixel p maps to p/255 on read and
// round(clamp(x,0,1)*255) on write.
void write_pgm(const std::string& path, const Image& img);
Image read_pgm(const std::string& path);

}  // namespace prefflow
