#include "iscp/model.hpp"

#include "iscp/rng.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include <omp.h>

namespace iscp {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace {

Tensor init_uniform(std::vector<int> shape, int fan_in, Rng& rng) {
    Tensor t = Tensor::zeros(std::move(shape));
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& v : t.data) v = rng.uniform(-bound, bound);
    return t;
}

} // namespace

Model build_custom(std::array<int, 3> input_shape, int num_classes,
                   const std::vector<Model::Layer>& layers, std::uint64_t seed) {
    Model m;
    m.input_shape = input_shape;
    m.num_classes = num_classes;
    Rng rng(seed);
    int c = input_shape[0], h = input_shape[1], w = input_shape[2];
    for (Model::Layer layer : layers) {
        switch (layer.kind) {
            case Model::Layer::Kind::kConv: {
                layer.param_idx = static_cast<int>(m.params.size());
                const int fan_in = c * layer.ksize * layer.ksize;
                m.params.push_back(init_uniform({layer.out, c, layer.ksize, layer.ksize},
                                                fan_in, rng));
                m.params.push_back(Tensor::zeros({layer.out}));
                c = layer.out;
                break;
            }
            case Model::Layer::Kind::kRelu:
                break;
            case Model::Layer::Kind::kPool:
                h /= 2;
                w /= 2;
                break;
            case Model::Layer::Kind::kDense: {
                layer.param_idx = static_cast<int>(m.params.size());
                const int fan_in = c * h * w;
                m.params.push_back(init_uniform({layer.out, fan_in}, fan_in, rng));
                m.params.push_back(Tensor::zeros({layer.out}));
                c = layer.out;
                h = w = 1;
                break;
            }
        }
        m.layers.push_back(layer);
    }
    return m;
}

Model build_small_cnn(std::array<int, 3> input_shape, int num_classes, std::uint64_t seed) {
    if (input_shape[1] != input_shape[2] ||
        (input_shape[1] != 28 && input_shape[1] != 32))
        throw ShapeError("build_small_cnn: supported inputs are C×28×28 and C×32×32, got C×" +
                         std::to_string(input_shape[1]) + "×" + std::to_string(input_shape[2]));
    using L = Model::Layer;
    using K = Model::Layer::Kind;
    const std::vector<L> arch = {
        {K::kConv, 32, 3, -1}, {K::kRelu, 0, 0, -1},
        {K::kConv, 32, 3, -1}, {K::kRelu, 0, 0, -1},
        {K::kPool, 0, 0, -1},
        {K::kConv, 64, 3, -1}, {K::kRelu, 0, 0, -1},
        {K::kConv, 64, 3, -1}, {K::kRelu, 0, 0, -1},
        {K::kPool, 0, 0, -1},
        {K::kDense, 256, 0, -1}, {K::kRelu, 0, 0, -1},
        {K::kDense, num_classes, 0, -1},
    };
    return build_custom(input_shape, num_classes, arch, seed);
}

int parameter_count(const Model& m) {
    int n = 0;
    for (const Tensor& t : m.params) n += t.numel();
    return n;
}

Graph::NodeId append_model_forward(Graph& g, const Model& m, Graph::NodeId input,
                                   const std::vector<Graph::NodeId>& param_leaves,
                                   std::vector<Graph::NodeId>* conv_outputs) {
    Graph::NodeId cur = input;
    for (size_t li = 0; li < m.layers.size(); ++li) {
        const Model::Layer& layer = m.layers[li];
        switch (layer.kind) {
            case Model::Layer::Kind::kConv: {
                cur = g.conv2d(cur, param_leaves[static_cast<size_t>(layer.param_idx)],
                               param_leaves[static_cast<size_t>(layer.param_idx) + 1]);
                // Grad-CAM reads the activation after the conv's relu when
                // one follows, otherwise the conv output itself.
                const bool relu_next = li + 1 < m.layers.size() &&
                                       m.layers[li + 1].kind == Model::Layer::Kind::kRelu;
                if (relu_next) {
                    cur = g.relu(cur);
                    ++li;
                }
                if (conv_outputs) conv_outputs->push_back(cur);
                break;
            }
            case Model::Layer::Kind::kRelu:
                cur = g.relu(cur);
                break;
            case Model::Layer::Kind::kPool:
                cur = g.maxpool2(cur);
                break;
            case Model::Layer::Kind::kDense:
                cur = g.dense(cur, param_leaves[static_cast<size_t>(layer.param_idx)],
                              param_leaves[static_cast<size_t>(layer.param_idx) + 1]);
                break;
        }
    }
    return cur;
}

ForwardGraph build_forward(const Model& m, bool weights_require_grad,
                           bool input_requires_grad, bool with_xent) {
    ForwardGraph fg;
    Tensor input = Tensor::zeros({m.input_shape[0], m.input_shape[1], m.input_shape[2]});
    input.requires_grad = input_requires_grad;
    fg.input = fg.g.leaf(std::move(input));
    for (const Tensor& p : m.params) {
        Tensor leafv = p;
        leafv.requires_grad = weights_require_grad;
        fg.param_leaves.push_back(fg.g.leaf(std::move(leafv)));
    }
    fg.logits = append_model_forward(fg.g, m, fg.input, fg.param_leaves, &fg.conv_outputs);
    if (with_xent) fg.xent = fg.g.softmax_xent(fg.logits, 0);
    return fg;
}

void sync_params(ForwardGraph& fg, const Model& m) {
    for (size_t i = 0; i < m.params.size(); ++i)
        fg.g.set_leaf(fg.param_leaves[i], m.params[i]);
}

Evaluator::Evaluator(const Model& m) : fg_(build_forward(m, false, false, false)) {}

Tensor Evaluator::logits(const Tensor& image) {
    fg_.g.set_leaf(fg_.input, image);
    return fg_.g.forward(fg_.logits);
}

std::vector<double> Evaluator::probabilities(const Tensor& image) {
    return softmax(logits(image));
}

int Evaluator::predict(const Tensor& image) { return argmax(logits(image)); }

double evaluate_accuracy(const Model& m, const Dataset& d, int class_filter,
                         const std::vector<int>& indices) {
    std::vector<int> idx = indices;
    if (idx.empty())
        for (int i = 0; i < d.size(); ++i) idx.push_back(i);
    if (class_filter >= 0) {
        std::vector<int> filtered;
        for (int i : idx)
            if (d.labels[static_cast<size_t>(i)] == class_filter) filtered.push_back(i);
        idx = std::move(filtered);
    }
    if (idx.empty()) throw std::invalid_argument("evaluate_accuracy: empty set after filter");
    long correct = 0;
#pragma omp parallel reduction(+ : correct)
    {
        Evaluator ev(m);
#pragma omp for schedule(static)
        for (size_t i = 0; i < idx.size(); ++i) {
            const int j = idx[i];
            if (ev.predict(d.images[static_cast<size_t>(j)]) == d.labels[static_cast<size_t>(j)])
                ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(idx.size());
}

namespace {

constexpr char kMagic[8] = {'I', 'S', 'C', 'P', 'M', 'D', 'L', '1'};

template <class T>
void wr(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T rd(std::istream& in, const std::string& path) {
    T v;
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw LoadError(path + ": truncated checkpoint");
    return v;
}

} // namespace

void save_checkpoint(const std::string& path, const Model& m, int epoch,
                     double test_accuracy) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw LoadError(path + ": cannot open for writing");
    out.write(kMagic, 8);
    wr<std::uint32_t>(out, 1);
    for (int v : m.input_shape) wr<std::int32_t>(out, v);
    wr<std::int32_t>(out, m.num_classes);
    wr<std::uint32_t>(out, static_cast<std::uint32_t>(m.layers.size()));
    for (const Model::Layer& l : m.layers) {
        wr<std::uint8_t>(out, static_cast<std::uint8_t>(l.kind));
        wr<std::int32_t>(out, l.out);
        wr<std::int32_t>(out, l.ksize);
        wr<std::int32_t>(out, l.param_idx);
    }
    wr<std::uint32_t>(out, static_cast<std::uint32_t>(m.params.size()));
    for (const Tensor& t : m.params) {
        wr<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape.size()));
        for (int dsz : t.shape) wr<std::int32_t>(out, dsz);
        out.write(reinterpret_cast<const char*>(t.data.data()),
                  static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    }
    wr<std::int32_t>(out, epoch);
    wr<double>(out, test_accuracy);
    if (!out) throw LoadError(path + ": write failed");
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError(path + ": cannot open");
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0)
        throw LoadError(path + ": bad checkpoint magic");
    if (rd<std::uint32_t>(in, path) != 1) throw LoadError(path + ": unsupported version");
    Checkpoint ck;
    Model& m = ck.model;
    for (int i = 0; i < 3; ++i) m.input_shape[static_cast<size_t>(i)] = rd<std::int32_t>(in, path);
    m.num_classes = rd<std::int32_t>(in, path);
    const auto n_layers = rd<std::uint32_t>(in, path);
    for (std::uint32_t i = 0; i < n_layers; ++i) {
        Model::Layer l;
        l.kind = static_cast<Model::Layer::Kind>(rd<std::uint8_t>(in, path));
        l.out = rd<std::int32_t>(in, path);
        l.ksize = rd<std::int32_t>(in, path);
        l.param_idx = rd<std::int32_t>(in, path);
        m.layers.push_back(l);
    }
    const auto n_params = rd<std::uint32_t>(in, path);
    for (std::uint32_t i = 0; i < n_params; ++i) {
        const auto ndim = rd<std::uint32_t>(in, path);
        std::vector<int> shape;
        for (std::uint32_t j = 0; j < ndim; ++j) shape.push_back(rd<std::int32_t>(in, path));
        Tensor t = Tensor::zeros(shape);
        in.read(reinterpret_cast<char*>(t.data.data()),
                static_cast<std::streamsize>(t.data.size() * sizeof(double)));
        if (!in) throw LoadError(path + ": truncated checkpoint");
        m.params.push_back(std::move(t));
    }
    ck.epoch = rd<std::int32_t>(in, path);
    ck.test_accuracy = rd<double>(in, path);
    return ck;
}

} // namespace iscp
