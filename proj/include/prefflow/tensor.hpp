#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace prefflow {

struct ContractError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Dense row-major array of 64-bit reals.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape);
    Tensor(std::vector<std::size_t> shape, std::vector<double> data);

    static Tensor zeros(std::vector<std::size_t> shape);
    static Tensor full(std::vector<std::size_t> shape, double value);
    static Tensor from_vector(std::vector<double> values);  // 1-D

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t ndim() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& vec() { return data_; }
    const std::vector<double>& vec() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    // 2-D accessors
    double& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool all_finite() const;
    void require_finite(const std::string& where) const;

    double norm2() const;   // Euclidean norm
    double sum() const;
    double mean() const;

    Tensor& operator+=(const Tensor& other);
    Tensor& operator-=(const Tensor& other);
    Tensor& operator*=(double s);

    friend Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
    friend Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
    friend Tensor operator*(Tensor a, double s) { return a *= s; }
    friend Tensor operator*(double s, Tensor a) { return a *= s; }

private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

// PFTD dump format: magic "PFTD", u32 version (=1), u32 ndim,
// ndim u64 little-endian dims, then little-endian doubles row-major.
void write_pftd(std::ostream& out, const Tensor& t);
Tensor read_pftd(std::istream& in);

// Checkpoint container: magic "PFTC", u32 version, u32 entry count,
// then per entry a length-prefixed name followed by a PFTD blob.
struct NamedTensor {
    std::string name;
    Tensor tensor;
};
void write_checkpoint(const std::string& path, const std::vector<NamedTensor>& entries);
std::vector<NamedTensor> read_checkpoint(const std::string& path);

}  // namespace prefflow
