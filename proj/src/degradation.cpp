#include "prefflow/degradation.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace prefflow {

void DegradationParams::validate() const {
    if (sigma < 0.0 || sigma > 15.0) throw ContractError("sigma must be in [0,15]");
    if (factor < 1 || factor > 30) throw ContractError("factor must be in [1,30]");
    if (delta < 0.0 || delta > 20.0) throw ContractError("delta must be in [0,20]");
    if (quality < 40 || quality > 100) throw ContractError("quality must be in [40,100]");
}

namespace {

// symmetric reflection: ... 1 0 | 0 1 2 ... n-1 | n-1 n-2 ...
std::size_t reflect_index(long i, std::size_t n) {
    const long m = static_cast<long>(n);
    while (i < 0 || i >= m) {
        if (i < 0) i = -i - 1;
        if (i >= m) i = 2 * m - 1 - i;
    }
    return static_cast<std::size_t>(i);
}

std::vector<double> gaussian_kernel(double sigma) {
    const long radius = static_cast<long>(std::ceil(3.0 * sigma));
    std::vector<double> k(2 * radius + 1);
    double total = 0.0;
    for (long i = -radius; i <= radius; ++i) {
        const double w = std::exp(-0.5 * (static_cast<double>(i) / sigma) * (static_cast<double>(i) / sigma));
        k[i + radius] = w;
        total += w;
    }
    for (double& w : k) w /= total;
    return k;
}

}  // namespace

Image gaussian_blur(const Image& img, double sigma) {
    if (sigma < 0.0) throw ContractError("gaussian_blur: sigma must be >= 0");
    if (sigma == 0.0) return img;
    const auto k = gaussian_kernel(sigma);
    const long radius = static_cast<long>(k.size() / 2);
    const std::size_t h = img.height, w = img.width;
    Image tmp(h, w);
    for (std::size_t r = 0; r < h; ++r)
        for (std::size_t c = 0; c < w; ++c) {
            double acc = 0.0;
            for (long d = -radius; d <= radius; ++d)
                acc += k[d + radius] * img.at(r, reflect_index(static_cast<long>(c) + d, w));
            tmp.at(r, c) = acc;
        }
    Image out(h, w);
    for (std::size_t r = 0; r < h; ++r)
        for (std::size_t c = 0; c < w; ++c) {
            double acc = 0.0;
            for (long d = -radius; d <= radius; ++d)
                acc += k[d + radius] * tmp.at(reflect_index(static_cast<long>(r) + d, h), c);
            out.at(r, c) = acc;
        }
    out.clamp01();
    return out;
}

Image resample(const Image& img, int factor, ResampleDir dir) {
    if (factor < 1) throw ContractError("resample: factor must be >= 1");
    if (factor == 1) return img;
    const std::size_t h = img.height, w = img.width;
    const auto r = static_cast<std::size_t>(factor);
    if (dir == ResampleDir::Down) {
        // the box size saturates at the image extent, so degenerate axes
        // (e.g. a single row) average along the other axis only
        const std::size_t rh = std::min(r, h), rw = std::min(r, w);
        if (h % rh != 0 || w % rw != 0)
            throw ContractError("resample: dimensions not divisible by factor");
        Image out(h / rh, w / rw);
        const double inv = 1.0 / static_cast<double>(rh * rw);
        for (std::size_t i = 0; i < out.height; ++i)
            for (std::size_t j = 0; j < out.width; ++j) {
                double acc = 0.0;
                for (std::size_t di = 0; di < rh; ++di)
                    for (std::size_t dj = 0; dj < rw; ++dj)
                        acc += img.at(i * rh + di, j * rw + dj);
                out.at(i, j) = acc * inv;
            }
        return out;
    }
    // bilinear upsample, half-pixel alignment
    Image out(h * r, w * r);
    const double scale = 1.0 / static_cast<double>(r);
    for (std::size_t i = 0; i < out.height; ++i) {
        const double sy = (static_cast<double>(i) + 0.5) * scale - 0.5;
        const double fy = std::clamp(sy, 0.0, static_cast<double>(h - 1));
        const std::size_t y0 = static_cast<std::size_t>(fy);
        const std::size_t y1 = std::min(y0 + 1, h - 1);
        const double ty = fy - static_cast<double>(y0);
        for (std::size_t j = 0; j < out.width; ++j) {
            const double sx = (static_cast<double>(j) + 0.5) * scale - 0.5;
            const double fx = std::clamp(sx, 0.0, static_cast<double>(w - 1));
            const std::size_t x0 = static_cast<std::size_t>(fx);
            const std::size_t x1 = std::min(x0 + 1, w - 1);
            const double tx = fx - static_cast<double>(x0);
            out.at(i, j) = (1.0 - ty) * ((1.0 - tx) * img.at(y0, x0) + tx * img.at(y0, x1)) +
                           ty * ((1.0 - tx) * img.at(y1, x0) + tx * img.at(y1, x1));
        }
    }
    out.clamp01();
    return out;
}

Image add_noise(const Image& img, double delta, std::uint64_t seed) {
    if (delta < 0.0) throw ContractError("add_noise: delta must be >= 0");
    if (delta == 0.0) return img;
    Rng rng(seed);
    Image out = img;
    const double std01 = delta / 255.0;
    for (double& v : out.pixels.vec()) v += std01 * rng.normal();
    out.clamp01();
    return out;
}

namespace {

// Annex-K luminance quantization table.
constexpr int kLumaQuant[64] = {
    16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,
    14, 13, 16, 24, 40,  57,  69,  56,  14, 17, 22, 29, 51,  87,  80,  62,
    18, 22, 37, 56, 68,  109, 103, 77,  24, 35, 55, 64, 81,  104, 113, 92,
    49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};

void dct8(const double in[8], double out[8]) {
    constexpr double pi = 3.14159265358979323846;
    for (int u = 0; u < 8; ++u) {
        double acc = 0.0;
        for (int x = 0; x < 8; ++x)
            acc += in[x] * std::cos((2 * x + 1) * u * pi / 16.0);
        const double cu = (u == 0) ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0);
        out[u] = cu * acc;
    }
}

void idct8(const double in[8], double out[8]) {
    constexpr double pi = 3.14159265358979323846;
    for (int x = 0; x < 8; ++x) {
        double acc = 0.0;
        for (int u = 0; u < 8; ++u) {
            const double cu = (u == 0) ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0);
            acc += cu * in[u] * std::cos((2 * x + 1) * u * pi / 16.0);
        }
        out[x] = acc;
    }
}

}  // namespace

Image jpeg_like(const Image& img, int quality) {
    if (quality < 1 || quality > 100) throw ContractError("jpeg_like: quality must be in [1,100]");
    const int scale = quality < 50 ? 5000 / quality : 200 - 2 * quality;
    int quant[64];
    for (int i = 0; i < 64; ++i)
        quant[i] = std::clamp((kLumaQuant[i] * scale + 50) / 100, 1, 255);

    const std::size_t h = img.height, w = img.width;
    const std::size_t bh = (h + 7) / 8, bw = (w + 7) / 8;
    Image out(h, w);
    for (std::size_t by = 0; by < bh; ++by)
        for (std::size_t bx = 0; bx < bw; ++bx) {
            double block[8][8];
            // edge blocks padded by replication; no level shift, so an
            // all-zero image has all-zero coefficients and round-trips exactly
            for (int y = 0; y < 8; ++y)
                for (int x = 0; x < 8; ++x) {
                    const std::size_t sy = std::min(by * 8 + y, h - 1);
                    const std::size_t sx = std::min(bx * 8 + x, w - 1);
                    block[y][x] = img.at(sy, sx) * 255.0;
                }
            double tmp[8][8], coef[8][8];
            for (int y = 0; y < 8; ++y) dct8(block[y], tmp[y]);
            for (int x = 0; x < 8; ++x) {
                double col[8], res[8];
                for (int y = 0; y < 8; ++y) col[y] = tmp[y][x];
                dct8(col, res);
                for (int y = 0; y < 8; ++y) coef[y][x] = res[y];
            }
            for (int y = 0; y < 8; ++y)
                for (int x = 0; x < 8; ++x) {
                    const double q = static_cast<double>(quant[y * 8 + x]);
                    coef[y][x] = std::round(coef[y][x] / q) * q;
                }
            for (int x = 0; x < 8; ++x) {
                double col[8], res[8];
                for (int y = 0; y < 8; ++y) col[y] = coef[y][x];
                idct8(col, res);
                for (int y = 0; y < 8; ++y) tmp[y][x] = res[y];
            }
            for (int y = 0; y < 8; ++y) idct8(tmp[y], block[y]);
            for (int y = 0; y < 8; ++y)
                for (int x = 0; x < 8; ++x) {
                    const std::size_t dy = by * 8 + y, dx = bx * 8 + x;
                    if (dy < h && dx < w)
                        out.at(dy, dx) = std::clamp(block[y][x] / 255.0, 0.0, 1.0);
                }
        }
    return out;
}

Image degrade(const Image& img, const DegradationParams& params) {
    params.validate();
    Image cur = gaussian_blur(img, params.sigma);
    cur = resample(cur, params.factor, ResampleDir::Down);
    cur = add_noise(cur, params.delta, params.seed);
    cur = jpeg_like(cur, params.quality);
    cur = resample(cur, params.factor, ResampleDir::Up);
    return cur;
}

DegradationParams sample_params(Rng& rng) {
    DegradationParams p;
    p.sigma = rng.uniform(1.0, 15.0);
    p.factor = static_cast<int>(rng.uniform_int(1, 30));
    p.delta = rng.uniform(0.0, 20.0);
    p.quality = static_cast<int>(rng.uniform_int(40, 100));
    p.seed = rng.next_u64();
    return p;
}

Image maybe_bypass(const Image& img_hq, const DegradationParams& params, double p_rec, Rng& rng) {
    if (p_rec < 0.0 || p_rec > 1.0) throw ContractError("p_rec must be in [0,1]");
    if (rng.uniform() < p_rec) return img_hq;
    return degrade(img_hq, params);
}

int snap_factor(int factor, std::size_t height, std::size_t width) {
    if (factor < 1) throw ContractError("snap_factor: factor must be >= 1");
    int best = 1;
    for (int f = 1; f <= factor; ++f)
        if (height % static_cast<std::size_t>(f) == 0 && width % static_cast<std::size_t>(f) == 0)
            best = f;
    return best;
}

}  // namespace prefflow
