#include "iscp/tensor.hpp"

#include <sstream>

namespace iscp {

int shape_numel(const std::vector<int>& s) {
    int n = 1;
    for (int d : s) {
        if (d <= 0) throw ShapeError("non-positive dimension in shape " + shape_str(s));
        n *= d;
    }
    return n;
}

Tensor::Tensor(std::vector<int> s, std::vector<double> d, bool rg)
    : shape(std::move(s)), data(std::move(d)), requires_grad(rg) {
    if (shape_numel(shape) != static_cast<int>(data.size()))
        throw ShapeError("tensor data size " + std::to_string(data.size()) +
                         " does not match shape " + shape_str(shape));
}

Tensor Tensor::zeros(std::vector<int> s) {
    int n = shape_numel(s);
    Tensor t;
    t.shape = std::move(s);
    t.data.assign(static_cast<size_t>(n), 0.0);
    return t;
}

Tensor Tensor::full(std::vector<int> s, double v) {
    Tensor t = zeros(std::move(s));
    for (double& x : t.data) x = v;
    return t;
}

namespace {

int flat_index(const std::vector<int>& shape, std::initializer_list<int> idx) {
    if (idx.size() != shape.size())
        throw ShapeError("index rank " + std::to_string(idx.size()) + " vs tensor rank " +
                         std::to_string(shape.size()));
    int flat = 0;
    int d = 0;
    for (int i : idx) {
        if (i < 0 || i >= shape[static_cast<size_t>(d)])
            throw ShapeError("index out of range in dim " + std::to_string(d));
        flat = flat * shape[static_cast<size_t>(d)] + i;
        ++d;
    }
    return flat;
}

} // namespace

double& Tensor::at(std::initializer_list<int> idx) {
    return data[static_cast<size_t>(flat_index(shape, idx))];
}

double Tensor::at(std::initializer_list<int> idx) const {
    return data[static_cast<size_t>(flat_index(shape, idx))];
}

bool same_shape(const Tensor& a, const Tensor& b) { return a.shape == b.shape; }

std::string shape_str(const std::vector<int>& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) os << ",";
        os << s[i];
    }
    os << "]";
    return os.str();
}

} // namespace iscp
