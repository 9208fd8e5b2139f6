#include "prefflow/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace prefflow {

Image::Image(std::size_t h, std::size_t w, Tensor p) : height(h), width(w), pixels(std::move(p)) {
    if (pixels.ndim() != 2 || pixels.dim(0) != h || pixels.dim(1) != w)
        throw ContractError("image tensor shape mismatch");
}

void Image::clamp01() {
    for (double& v : pixels.vec()) v = std::clamp(v, 0.0, 1.0);
}

double Image::variance() const {
    const double mu = pixels.mean();
    double acc = 0.0;
    for (double v : pixels.vec()) acc += (v - mu) * (v - mu);
    return acc / static_cast<double>(pixels.size());
}

Image image_from_tensor(const Tensor& t, std::size_t height, std::size_t width) {
    if (t.size() != height * width) throw ContractError("tensor size does not match image dims");
    Tensor p({height, width}, t.vec());
    Image img(height, width, std::move(p));
    img.clamp01();
    return img;
}

void write_pgm(const std::string& path, const Image& img) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open PGM for writing: " + path);
    out << "P5\n" << img.width << " " << img.height << "\n255\n";
    for (double v : img.pixels.vec()) {
        const double c = std::clamp(v, 0.0, 1.0);
        const int byte = static_cast<int>(std::lround(c * 255.0));
        out.put(static_cast<char>(byte));
    }
    if (!out) throw IoError("failed to write PGM: " + path);
}

Image read_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open PGM: " + path);
    std::string magic;
    in >> magic;
    if (magic != "P5") throw IoError("not a binary PGM (P5): " + path);
    auto skip_ws_comments = [&in]() {
        while (true) {
            int c = in.peek();
            if (c == '#') {
                std::string line;
                std::getline(in, line);
            } else if (std::isspace(c)) {
                in.get();
            } else {
                break;
            }
        }
    };
    skip_ws_comments();
    std::size_t w = 0, h = 0, maxval = 0;
    in >> w;
    skip_ws_comments();
    in >> h;
    skip_ws_comments();
    in >> maxval;
    if (!in || w == 0 || h == 0) throw IoError("malformed PGM header: " + path);
    if (maxval != 255) throw IoError("only maxval 255 PGM supported: " + path);
    in.get();  // single whitespace after maxval
    Image img(h, w);
    for (double& v : img.pixels.vec()) {
        const int byte = in.get();
        if (byte == EOF) throw IoError("truncated PGM: " + path);
        v = static_cast<double>(byte) / 255.0;
    }
    return img;
}

}  // namespace prefflow
