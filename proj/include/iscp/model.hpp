#pragma once

#include "iscp/dataset.hpp"
#include "iscp/graph.hpp"
#include "iscp/tensor.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace iscp {

// Small fixed-architecture CNN classifier. Weights live in `params`
// (weight/bias pairs per parameterized layer); forward passes are built as
// autodiff graphs over leaf copies of these tensors.
struct Model {
    struct Layer {
        enum class Kind : std::uint8_t { kConv, kRelu, kPool, kDense };
        Kind kind;
        int out = 0;       // output channels (conv) or units (dense)
        int ksize = 0;     // conv kernel size
        int param_idx = -1; // index of the weight tensor; bias follows at +1
    };

    std::array<int, 3> input_shape{0, 0, 0}; // C,H,W
    int num_classes = 0;
    std::vector<Layer> layers;
    std::vector<Tensor> params;
};

// conv3×3×32, relu, conv3×3×32, relu, pool2, conv3×3×64, relu, conv3×3×64,
// relu, pool2, dense→256, relu, dense→K. Weights U(±1/√fan_in), biases 0.
Model build_small_cnn(std::array<int, 3> input_shape, int num_classes, std::uint64_t seed);

// Tiny custom stacks for oracles and baselines tests.
Model build_custom(std::array<int, 3> input_shape, int num_classes,
                   const std::vector<Model::Layer>& layers, std::uint64_t seed);

int parameter_count(const Model& m);

// Appends the model's layer stack to an existing graph over the given
// input node and parameter leaves (one leaf per entry of m.params).
// Returns the logits node; conv_outputs, when non-null, receives the
// post-relu activation of each conv layer (the Grad-CAM taps).
Graph::NodeId append_model_forward(Graph& g, const Model& m, Graph::NodeId input,
                                   const std::vector<Graph::NodeId>& param_leaves,
                                   std::vector<Graph::NodeId>* conv_outputs = nullptr);

// A reusable forward graph: rebind `input` (and optionally the xent label)
// per sample, call forward(), read logits or loss. sync_params() copies the
// model weights into the leaf nodes; do this whenever the weights changed.
struct ForwardGraph {
    Graph g;
    Graph::NodeId input = -1;
    Graph::NodeId logits = -1;
    Graph::NodeId xent = -1; // -1 unless built with a loss head
    std::vector<Graph::NodeId> param_leaves;
    std::vector<Graph::NodeId> conv_outputs; // relu output following each conv
};

ForwardGraph build_forward(const Model& m, bool weights_require_grad,
                           bool input_requires_grad, bool with_xent);
void sync_params(ForwardGraph& fg, const Model& m);

// Convenience single-image inference wrapper owning one forward graph.
class Evaluator {
public:
    explicit Evaluator(const Model& m);
    Tensor logits(const Tensor& image);
    std::vector<double> probabilities(const Tensor& image);
    int predict(const Tensor& image);
    void refresh(const Model& m) { sync_params(fg_, m); }

private:
    ForwardGraph fg_;
};

// Argmax accuracy over a dataset; `class_filter` < 0 means all classes,
// otherwise only images of that label. `indices` empty means the whole set.
double evaluate_accuracy(const Model& m, const Dataset& d, int class_filter = -1,
                         const std::vector<int>& indices = {});

struct Checkpoint {
    int epoch = 0;
    double test_accuracy = 0.0;
    Model model;
};

// Versioned binary container: magic, layer manifest, little-endian doubles.
void save_checkpoint(const std::string& path, const Model& m, int epoch, double test_accuracy);
Checkpoint load_checkpoint(const std::string& path);

} // namespace iscp
