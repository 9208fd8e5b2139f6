#include "prefflow/tensor.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <ostream>

namespace prefflow {

namespace {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) {
        if (d == 0) throw ContractError("tensor dimension must be positive");
        n *= d;
    }
    return n;
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(shape_product(shape_), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_product(shape_) != data_.size())
        throw ContractError("tensor shape/data size mismatch");
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }

Tensor Tensor::full(std::vector<std::size_t> shape, double value) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
}

Tensor Tensor::from_vector(std::vector<double> values) {
    const std::size_t n = values.size();
    return Tensor({n}, std::move(values));
}

bool Tensor::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

void Tensor::require_finite(const std::string& where) const {
    if (!all_finite()) throw NumericError("non-finite value in " + where);
}

double Tensor::norm2() const {
    double s = 0.0;
    for (double v : data_) s += v * v;
    return std::sqrt(s);
}

double Tensor::sum() const { return std::accumulate(data_.begin(), data_.end(), 0.0); }

double Tensor::mean() const {
    if (data_.empty()) return 0.0;
    return sum() / static_cast<double>(data_.size());
}

Tensor& Tensor::operator+=(const Tensor& other) {
    if (!same_shape(other)) throw ContractError("tensor shape mismatch in +=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
}

Tensor& Tensor::operator-=(const Tensor& other) {
    if (!same_shape(other)) throw ContractError("tensor shape mismatch in -=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
    return *this;
}

Tensor& Tensor::operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
}

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
    out.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
    out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t get_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw IoError("truncated PFTD stream");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

std::uint64_t get_u64(std::istream& in) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    if (!in) throw IoError("truncated PFTD stream");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

}  // namespace

void write_pftd(std::ostream& out, const Tensor& t) {
    out.write("PFTD", 4);
    put_u32(out, 1);
    put_u32(out, static_cast<std::uint32_t>(t.ndim()));
    for (std::size_t d : t.shape()) put_u64(out, d);
    for (double v : t.vec()) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        put_u64(out, bits);
    }
    if (!out) throw IoError("failed to write PFTD tensor");
}

Tensor read_pftd(std::istream& in) {
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "PFTD", 4) != 0) throw IoError("bad PFTD magic");
    const std::uint32_t version = get_u32(in);
    if (version != 1) throw IoError("unsupported PFTD version");
    const std::uint32_t ndim = get_u32(in);
    std::vector<std::size_t> shape(ndim);
    std::size_t n = 1;
    for (std::uint32_t i = 0; i < ndim; ++i) {
        shape[i] = static_cast<std::size_t>(get_u64(in));
        n *= shape[i];
    }
    std::vector<double> data(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint64_t bits = get_u64(in);
        std::memcpy(&data[i], &bits, 8);
    }
    return Tensor(std::move(shape), std::move(data));
}

void write_checkpoint(const std::string& path, const std::vector<NamedTensor>& entries) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open checkpoint for writing: " + path);
    out.write("PFTC", 4);
    put_u32(out, 1);
    put_u32(out, static_cast<std::uint32_t>(entries.size()));
    for (const auto& e : entries) {
        put_u32(out, static_cast<std::uint32_t>(e.name.size()));
        out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
        write_pftd(out, e.tensor);
    }
    if (!out) throw IoError("failed to write checkpoint: " + path);
}

std::vector<NamedTensor> read_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "PFTC", 4) != 0) throw IoError("bad checkpoint magic in " + path);
    if (get_u32(in) != 1) throw IoError("unsupported checkpoint version in " + path);
    const std::uint32_t count = get_u32(in);
    std::vector<NamedTensor> entries;
    entries.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint32_t len = get_u32(in);
        std::string name(len, '\0');
        in.read(name.data(), len);
        if (!in) throw IoError("truncated checkpoint: " + path);
        entries.push_back({std::move(name), read_pftd(in)});
    }
    return entries;
}

}  // namespace prefflow
