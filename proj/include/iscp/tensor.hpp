#pragma once

#include <cstddef>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace iscp {

// Dense row-major tensor of 64-bit floats. Value semantics throughout; the
// autodiff graph, datasets and models all share this one container.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;
    bool requires_grad = false;

    Tensor() = default;
    Tensor(std::vector<int> s, std::vector<double> d, bool rg = false);

    static Tensor zeros(std::vector<int> s);
    static Tensor full(std::vector<int> s, double v);

    int numel() const { return static_cast<int>(data.size()); }
    int ndim() const { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape.at(static_cast<size_t>(i)); }

    double& at(std::initializer_list<int> idx);
    double at(std::initializer_list<int> idx) const;

    double* ptr() { return data.data(); }
    const double* ptr() const { return data.data(); }
};

int shape_numel(const std::vector<int>& s);
bool same_shape(const Tensor& a, const Tensor& b);
std::string shape_str(const std::vector<int>& s);

struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace iscp
