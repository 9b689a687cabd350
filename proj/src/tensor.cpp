#include "meada/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace meada {

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) os << ',';
        os << s[i];
    }
    os << ']';
    return os.str();
}

std::int64_t shape_numel(const Shape& s) {
    std::int64_t n = 1;
    for (int d : s) n *= d;
    return n;
}

static void validate_shape(const Shape& s) {
    for (int d : s)
        if (d <= 0) throw shape_error("tensor: non-positive dim in shape " + shape_str(s));
}

Tensor::Tensor(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    validate_shape(shape);
    if (shape_numel(shape) != numel())
        throw shape_error("tensor: shape " + shape_str(shape) + " does not match data length " +
                          std::to_string(data.size()));
}

Tensor::Tensor(Shape s) : shape(std::move(s)) {
    validate_shape(shape);
    data.assign(static_cast<size_t>(shape_numel(shape)), 0.0);
}

Tensor Tensor::full(const Shape& s, double v) {
    Tensor t(s);
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
}

bool Tensor::all_finite() const {
    for (double v : data)
        if (!std::isfinite(v)) return false;
    return true;
}

double Tensor::sum() const {
    double s = 0.0;
    for (double v : data) s += v;
    return s;
}

double Tensor::min() const {
    double m = std::numeric_limits<double>::infinity();
    for (double v : data) m = std::min(m, v);
    return m;
}

double Tensor::max() const {
    double m = -std::numeric_limits<double>::infinity();
    for (double v : data) m = std::max(m, v);
    return m;
}

Tensor Tensor::reshaped(Shape s) const {
    if (shape_numel(s) != numel())
        throw shape_error("reshape: " + shape_str(shape) + " to " + shape_str(s));
    Tensor t = *this;
    t.shape = std::move(s);
    return t;
}

}  // namespace meada
