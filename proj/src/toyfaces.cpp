#include "prefflow/toyfaces.hpp"

#include <algorithm>
#include <cmath>

namespace prefflow {

void FaceSpec::validate() const {
    if (levels.size() != kNumAttributes) throw ContractError("FaceSpec needs exactly 4 attributes");
    if (n_levels < 2) throw ContractError("FaceSpec needs at least 2 levels");
    for (int v : levels)
        if (v < 0 || v >= n_levels) throw ContractError("attribute level out of range");
}

Image render(const FaceSpec& spec, std::size_t size) {
    spec.validate();
    if (size < 16) throw ContractError("render: size must be >= 16");
    const double denom = static_cast<double>(spec.n_levels - 1);
    const double u_eye = spec.levels[0] / denom;
    const double u_mouth = spec.levels[1] / denom;
    const double u_bright = spec.levels[2] / denom;
    const double u_width = spec.levels[3] / denom;

    const double s = static_cast<double>(size);
    const double cx = (s - 1.0) / 2.0, cy = (s - 1.0) / 2.0;
    const double ax = s * (0.30 + 0.10 * u_width);
    const double ay = s * 0.42;
    const double bright = 0.35 + 0.60 * u_bright;

    const double eye_dx = ax * (0.35 + 0.25 * u_eye);
    const double eye_y = cy - 0.18 * s;
    const double eye_r = 0.055 * s;

    const double mouth_y = cy + 0.22 * s;
    const double mouth_halfw = 0.55 * ax;
    const double mouth_r = 0.05 * s;
    const double curve = (u_mouth - 0.5) * 0.24 * s;

    Image img(size, size);
    for (std::size_t r = 0; r < size; ++r)
        for (std::size_t c = 0; c < size; ++c) {
            const double y = static_cast<double>(r), x = static_cast<double>(c);
            const double e = ((x - cx) / ax) * ((x - cx) / ax) + ((y - cy) / ay) * ((y - cy) / ay);
            const double mask = std::clamp(4.0 * (1.0 - e), 0.0, 1.0);
            if (mask == 0.0) continue;

            auto blob = [](double dx, double dy, double rad) {
                return std::exp(-(dx * dx + dy * dy) / (2.0 * rad * rad));
            };
            const double eyes = blob(x - (cx - eye_dx), y - eye_y, eye_r) +
                                blob(x - (cx + eye_dx), y - eye_y, eye_r);
            const double mx = (x - cx) / mouth_halfw;
            const double my = mouth_y + curve * (mx * mx - 0.5);
            const double mouth = std::exp(-(y - my) * (y - my) / (2.0 * mouth_r * mouth_r)) *
                                 std::exp(-mx * mx * mx * mx);
            const double v = mask * bright * (1.0 - 0.8 * std::min(eyes, 1.0) - 0.6 * mouth);
            img.at(r, c) = std::clamp(v, 0.01 * bright * mask, 1.0);
        }
    return img;
}

SemanticTokens spec_to_tokens(const FaceSpec& spec) {
    spec.validate();
    SemanticTokens t;
    t.ids.reserve(kNumAttributes);
    for (std::size_t i = 0; i < kNumAttributes; ++i)
        t.ids.push_back(static_cast<int>(i) * spec.n_levels + spec.levels[i]);
    return t;
}

FaceSpec tokens_to_spec(const SemanticTokens& tokens, int n_levels) {
    if (tokens.ids.size() != kNumAttributes) throw ContractError("token sequence length mismatch");
    FaceSpec spec;
    spec.n_levels = n_levels;
    for (std::size_t i = 0; i < kNumAttributes; ++i) {
        const int id = tokens.ids[i];
        const int base = static_cast<int>(i) * n_levels;
        if (id < base || id >= base + n_levels)
            throw ContractError("token id outside its attribute range");
        spec.levels.push_back(id - base);
    }
    spec.validate();
    return spec;
}

std::vector<FaceSpec> enumerate_specs(int n_levels) {
    std::vector<FaceSpec> out;
    const std::size_t total = static_cast<std::size_t>(
        std::pow(static_cast<double>(n_levels), static_cast<double>(kNumAttributes)) + 0.5);
    out.reserve(total);
    for (std::size_t idx = 0; idx < total; ++idx) {
        FaceSpec spec;
        spec.n_levels = n_levels;
        std::size_t rem = idx;
        spec.levels.resize(kNumAttributes);
        for (std::size_t i = kNumAttributes; i-- > 0;) {
            spec.levels[i] = static_cast<int>(rem % static_cast<std::size_t>(n_levels));
            rem /= static_cast<std::size_t>(n_levels);
        }
        out.push_back(std::move(spec));
    }
    return out;
}

}  // namespace prefflow
