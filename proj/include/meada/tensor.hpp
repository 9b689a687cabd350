#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace meada {

// Error raised by any operation whose operands do not conform (shape, axis,
// padding mode, ...). The message always names the operation and the shapes.
struct shape_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Error raised when training or an objective produces a non-finite value.
// Carries a short diagnostic snapshot for the operator.
struct numeric_error : std::runtime_error {
    std::string snapshot;
    numeric_error(const std::string& msg, std::string snap = {})
        : std::runtime_error(msg), snapshot(std::move(snap)) {}
};

// Error raised by file I/O (IDX, checkpoints, configs): bad magic, truncation,
// version or count mismatches.
struct format_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

using Shape = std::vector<int>;

std::string shape_str(const Shape& s);
std::int64_t shape_numel(const Shape& s);

// Dense n-dimensional float64 array, row-major. The single numeric carrier
// for images, latents, logits, probability rows and parameters.
struct Tensor {
    Shape shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(Shape s, std::vector<double> d);
    explicit Tensor(Shape s);  // zeros

    static Tensor zeros(const Shape& s) { return Tensor(s); }
    static Tensor full(const Shape& s, double v);
    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
    int ndim() const { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape[static_cast<size_t>(i)]; }

    double& operator[](std::int64_t i) { return data[static_cast<size_t>(i)]; }
    double operator[](std::int64_t i) const { return data[static_cast<size_t>(i)]; }

    // 2-d and 4-d accessors for the common layouts [rows, cols] and [N, H, W, C].
    double& at2(int r, int c) { return data[static_cast<size_t>(r) * shape[1] + c]; }
    double at2(int r, int c) const { return data[static_cast<size_t>(r) * shape[1] + c]; }
    double& at4(int n, int y, int x, int c) {
        return data[((static_cast<size_t>(n) * shape[1] + y) * shape[2] + x) * shape[3] + c];
    }
    double at4(int n, int y, int x, int c) const {
        return data[((static_cast<size_t>(n) * shape[1] + y) * shape[2] + x) * shape[3] + c];
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
    bool all_finite() const;

    double sum() const;
    double min() const;
    double max() const;

    // Reinterpret as a new shape with identical numel (row-major order kept).
    Tensor reshaped(Shape s) const;
};

inline bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape == b.shape && a.data == b.data;
}

}  // namespace meada
