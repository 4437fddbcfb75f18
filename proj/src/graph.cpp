#include "iscp/graph.hpp"

#include "iscp/kernels.hpp"

#include <cmath>
#include <cstdlib>

namespace iscp {

namespace {

const char* op_name(Graph::Op op) {
    switch (op) {
        case Graph::Op::kLeaf: return "leaf";
        case Graph::Op::kIdentity: return "identity";
        case Graph::Op::kAdd: return "add";
        case Graph::Op::kSub: return "sub";
        case Graph::Op::kMul: return "mul";
        case Graph::Op::kAffine: return "affine";
        case Graph::Op::kBroadcastC: return "broadcast_channels";
        case Graph::Op::kMix: return "mix";
        case Graph::Op::kConv2d: return "conv2d";
        case Graph::Op::kDense: return "dense";
        case Graph::Op::kRelu: return "relu";
        case Graph::Op::kMaxPool2: return "maxpool2";
        case Graph::Op::kSoftmaxXent: return "softmax_xent";
        case Graph::Op::kPickLogit: return "pick_logit";
        case Graph::Op::kMean: return "mean";
        case Graph::Op::kL1Norm: return "l1norm";
        case Graph::Op::kTvPenalty: return "tv_penalty";
    }
    return "?";
}

bool is_scalar(const Tensor& t) { return t.numel() == 1; }

} // namespace

void Graph::fail(NodeId id, const std::string& msg) const {
    const char* op = id >= 0 && id < size() ? op_name(nodes_[static_cast<size_t>(id)].op) : "?";
    throw ShapeError("node " + std::to_string(id) + " (" + op + "): " + msg);
}

void Graph::check_id(NodeId id, const char* who) const {
    if (id < 0 || id >= size())
        throw ShapeError(std::string(who) + ": node id " + std::to_string(id) +
                         " not in graph of size " + std::to_string(size()));
}

Graph::NodeId Graph::push(Node n) {
    for (NodeId in : n.in) {
        if (in < 0) continue;
        check_id(in, op_name(n.op));
        if (nodes_[static_cast<size_t>(in)].requires_grad) n.requires_grad = true;
    }
    nodes_.push_back(std::move(n));
    NodeId id = static_cast<NodeId>(nodes_.size()) - 1;
    eval(nodes_.back());
    return id;
}

Graph::NodeId Graph::leaf(Tensor value) {
    Node n;
    n.op = Op::kLeaf;
    n.requires_grad = value.requires_grad;
    n.value = std::move(value);
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size()) - 1;
}

Graph::NodeId Graph::identity(NodeId a) {
    check_id(a, "identity");
    Node n;
    n.op = Op::kIdentity;
    n.in[0] = a;
    return push(std::move(n));
}

Graph::NodeId Graph::add(NodeId a, NodeId b) {
    check_id(a, "add");
    check_id(b, "add");
    Node n;
    n.op = Op::kAdd;
    n.in = {a, b, -1};
    return push(std::move(n));
}

Graph::NodeId Graph::sub(NodeId a, NodeId b) {
    check_id(a, "sub");
    check_id(b, "sub");
    Node n;
    n.op = Op::kSub;
    n.in = {a, b, -1};
    return push(std::move(n));
}

Graph::NodeId Graph::mul(NodeId a, NodeId b) {
    check_id(a, "mul");
    check_id(b, "mul");
    Node n;
    n.op = Op::kMul;
    n.in = {a, b, -1};
    return push(std::move(n));
}

Graph::NodeId Graph::affine(NodeId a, double k, double c) {
    check_id(a, "affine");
    Node n;
    n.op = Op::kAffine;
    n.in[0] = a;
    n.k = k;
    n.c = c;
    return push(std::move(n));
}

Graph::NodeId Graph::broadcast_channels(NodeId m, int channels) {
    check_id(m, "broadcast_channels");
    Node n;
    n.op = Op::kBroadcastC;
    n.in[0] = m;
    n.aux = channels;
    return push(std::move(n));
}

Graph::NodeId Graph::mix(NodeId m, NodeId xc, NodeId xn) {
    check_id(m, "mix");
    check_id(xc, "mix");
    check_id(xn, "mix");
    Node n;
    n.op = Op::kMix;
    n.in = {m, xc, xn};
    return push(std::move(n));
}

Graph::NodeId Graph::conv2d(NodeId x, NodeId w, NodeId b) {
    check_id(x, "conv2d");
    check_id(w, "conv2d");
    check_id(b, "conv2d");
    Node n;
    n.op = Op::kConv2d;
    n.in = {x, w, b};
    return push(std::move(n));
}

Graph::NodeId Graph::dense(NodeId x, NodeId w, NodeId b) {
    check_id(x, "dense");
    check_id(w, "dense");
    check_id(b, "dense");
    Node n;
    n.op = Op::kDense;
    n.in = {x, w, b};
    return push(std::move(n));
}

Graph::NodeId Graph::relu(NodeId a) {
    check_id(a, "relu");
    Node n;
    n.op = Op::kRelu;
    n.in[0] = a;
    return push(std::move(n));
}

Graph::NodeId Graph::maxpool2(NodeId a) {
    check_id(a, "maxpool2");
    Node n;
    n.op = Op::kMaxPool2;
    n.in[0] = a;
    return push(std::move(n));
}

Graph::NodeId Graph::softmax_xent(NodeId logits, int label) {
    check_id(logits, "softmax_xent");
    Node n;
    n.op = Op::kSoftmaxXent;
    n.in[0] = logits;
    n.aux = label;
    return push(std::move(n));
}

Graph::NodeId Graph::pick_logit(NodeId logits, int index) {
    check_id(logits, "pick_logit");
    Node n;
    n.op = Op::kPickLogit;
    n.in[0] = logits;
    n.aux = index;
    return push(std::move(n));
}

Graph::NodeId Graph::mean(NodeId a) {
    check_id(a, "mean");
    Node n;
    n.op = Op::kMean;
    n.in[0] = a;
    return push(std::move(n));
}

Graph::NodeId Graph::l1norm(NodeId a) {
    check_id(a, "l1norm");
    Node n;
    n.op = Op::kL1Norm;
    n.in[0] = a;
    return push(std::move(n));
}

Graph::NodeId Graph::tv_penalty(NodeId a) {
    check_id(a, "tv_penalty");
    Node n;
    n.op = Op::kTvPenalty;
    n.in[0] = a;
    return push(std::move(n));
}

void Graph::set_leaf(NodeId id, const Tensor& value) {
    check_id(id, "set_leaf");
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.op != Op::kLeaf) fail(id, "set_leaf on a non-leaf node");
    if (!n.value.shape.empty() && n.value.shape != value.shape)
        fail(id, "rebinding leaf with shape " + shape_str(value.shape) +
                     ", expected " + shape_str(n.value.shape));
    n.value.shape = value.shape;
    n.value.data = value.data;
}

void Graph::set_label(NodeId id, int label) {
    check_id(id, "set_label");
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.op != Op::kSoftmaxXent) fail(id, "set_label on a non-xent node");
    n.aux = label;
}

void Graph::set_pick_index(NodeId id, int index) {
    check_id(id, "set_pick_index");
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.op != Op::kPickLogit) fail(id, "set_pick_index on a non-pick node");
    n.aux = index;
}

bool Graph::is_leaf(NodeId id) const {
    check_id(id, "is_leaf");
    return nodes_[static_cast<size_t>(id)].op == Op::kLeaf;
}

const Tensor& Graph::value(NodeId id) const {
    check_id(id, "value");
    return nodes_[static_cast<size_t>(id)].value;
}

const Tensor& Graph::grad(NodeId id) const {
    check_id(id, "grad");
    return nodes_[static_cast<size_t>(id)].grad;
}

double Graph::scalar(NodeId id) const {
    const Tensor& v = value(id);
    if (!is_scalar(v)) fail(id, "scalar read of tensor with shape " + shape_str(v.shape));
    return v.data[0];
}

void Graph::eval(Node& n) {
    const NodeId self = static_cast<NodeId>(&n - nodes_.data());
    auto in = [&](int i) -> const Tensor& {
        return nodes_[static_cast<size_t>(n.in[static_cast<size_t>(i)])].value;
    };
    auto out_resize = [&](std::vector<int> shape) {
        if (n.value.shape != shape) {
            n.value.shape = std::move(shape);
            n.value.data.assign(static_cast<size_t>(shape_numel(n.value.shape)), 0.0);
        }
    };

    switch (n.op) {
        case Op::kLeaf:
            if (n.value.shape.empty()) fail(self, "leaf evaluated before binding");
            return;
        case Op::kIdentity:
            n.value.shape = in(0).shape;
            n.value.data = in(0).data;
            return;
        case Op::kAdd:
        case Op::kSub:
        case Op::kMul: {
            const Tensor& a = in(0);
            const Tensor& b = in(1);
            if (a.shape != b.shape)
                fail(self, "shape mismatch " + shape_str(a.shape) + " vs " + shape_str(b.shape));
            out_resize(a.shape);
            const int m = a.numel();
            if (n.op == Op::kAdd)
                for (int i = 0; i < m; ++i) n.value.data[i] = a.data[i] + b.data[i];
            else if (n.op == Op::kSub)
                for (int i = 0; i < m; ++i) n.value.data[i] = a.data[i] - b.data[i];
            else
                for (int i = 0; i < m; ++i) n.value.data[i] = a.data[i] * b.data[i];
            return;
        }
        case Op::kAffine: {
            const Tensor& a = in(0);
            out_resize(a.shape);
            for (int i = 0; i < a.numel(); ++i) n.value.data[i] = n.k * a.data[i] + n.c;
            return;
        }
        case Op::kBroadcastC: {
            const Tensor& m = in(0);
            if (m.ndim() != 2) fail(self, "mask must be H×W, got " + shape_str(m.shape));
            const int c = n.aux, plane = m.numel();
            out_resize({c, m.dim(0), m.dim(1)});
            for (int ch = 0; ch < c; ++ch)
                for (int i = 0; i < plane; ++i) n.value.data[ch * plane + i] = m.data[i];
            return;
        }
        case Op::kMix: {
            const Tensor& m = in(0);
            const Tensor& xc = in(1);
            const Tensor& xn = in(2);
            if (m.ndim() != 2) fail(self, "mask must be H×W, got " + shape_str(m.shape));
            if (xc.shape != xn.shape)
                fail(self, "canvas " + shape_str(xc.shape) + " vs image " + shape_str(xn.shape));
            if (xc.ndim() != 3 || xc.dim(1) != m.dim(0) || xc.dim(2) != m.dim(1))
                fail(self, "mask " + shape_str(m.shape) + " incompatible with image " +
                               shape_str(xc.shape));
            out_resize(xc.shape);
            const int c = xc.dim(0), plane = m.numel();
            for (int ch = 0; ch < c; ++ch)
                for (int i = 0; i < plane; ++i) {
                    const int j = ch * plane + i;
                    n.value.data[j] = m.data[i] * xc.data[j] + (1.0 - m.data[i]) * xn.data[j];
                }
            return;
        }
        case Op::kConv2d: {
            const Tensor& x = in(0);
            const Tensor& w = in(1);
            const Tensor& b = in(2);
            if (x.ndim() != 3) fail(self, "input must be C×H×W, got " + shape_str(x.shape));
            if (w.ndim() != 4 || w.dim(2) != w.dim(3) || w.dim(2) % 2 == 0)
                fail(self, "weights must be Co×Ci×k×k with odd k, got " + shape_str(w.shape));
            if (w.dim(1) != x.dim(0))
                fail(self, "input channels " + std::to_string(x.dim(0)) + " vs weight Ci " +
                               std::to_string(w.dim(1)));
            if (b.numel() != w.dim(0)) fail(self, "bias length vs output channels");
            out_resize({w.dim(0), x.dim(1), x.dim(2)});
            kernels::conv2d_forward(x.ptr(), x.dim(0), x.dim(1), x.dim(2), w.ptr(), w.dim(0),
                                    w.dim(2), b.ptr(), n.value.ptr());
            return;
        }
        case Op::kDense: {
            const Tensor& x = in(0);
            const Tensor& w = in(1);
            const Tensor& b = in(2);
            if (w.ndim() != 2) fail(self, "weights must be M×N, got " + shape_str(w.shape));
            if (x.numel() != w.dim(1))
                fail(self, "input numel " + std::to_string(x.numel()) + " vs weight N " +
                               std::to_string(w.dim(1)));
            if (b.numel() != w.dim(0)) fail(self, "bias length vs output dim");
            out_resize({w.dim(0)});
            kernels::dense_forward(x.ptr(), x.numel(), w.ptr(), w.dim(0), b.ptr(),
                                   n.value.ptr());
            return;
        }
        case Op::kRelu: {
            const Tensor& a = in(0);
            out_resize(a.shape);
            kernels::relu_forward(a.ptr(), a.numel(), n.value.ptr());
            return;
        }
        case Op::kMaxPool2: {
            const Tensor& a = in(0);
            if (a.ndim() != 3) fail(self, "input must be C×H×W, got " + shape_str(a.shape));
            if (a.dim(1) % 2 || a.dim(2) % 2)
                fail(self, "maxpool2 needs even H and W, got " + shape_str(a.shape));
            out_resize({a.dim(0), a.dim(1) / 2, a.dim(2) / 2});
            n.argmax.resize(static_cast<size_t>(n.value.numel()));
            kernels::maxpool2_forward(a.ptr(), a.dim(0), a.dim(1), a.dim(2), n.value.ptr(),
                                      n.argmax.data());
            return;
        }
        case Op::kSoftmaxXent: {
            const Tensor& a = in(0);
            if (n.aux < 0 || n.aux >= a.numel())
                fail(self, "label " + std::to_string(n.aux) + " out of range for " +
                               std::to_string(a.numel()) + " logits");
            out_resize({1});
            n.probs.resize(static_cast<size_t>(a.numel()));
            n.value.data[0] =
                kernels::softmax_xent_forward(a.ptr(), a.numel(), n.aux, n.probs.data());
            return;
        }
        case Op::kPickLogit: {
            const Tensor& a = in(0);
            if (n.aux < 0 || n.aux >= a.numel()) fail(self, "pick index out of range");
            out_resize({1});
            n.value.data[0] = a.data[static_cast<size_t>(n.aux)];
            return;
        }
        case Op::kMean: {
            const Tensor& a = in(0);
            out_resize({1});
            double s = 0.0;
            for (double v : a.data) s += v;
            n.value.data[0] = s / a.numel();
            return;
        }
        case Op::kL1Norm: {
            const Tensor& a = in(0);
            out_resize({1});
            double s = 0.0;
            for (double v : a.data) s += std::abs(v);
            n.value.data[0] = s;
            return;
        }
        case Op::kTvPenalty: {
            const Tensor& a = in(0);
            if (a.ndim() != 2) fail(self, "mask must be H×W, got " + shape_str(a.shape));
            out_resize({1});
            n.value.data[0] = iscp::tv_penalty(a);
            return;
        }
    }
}

void Graph::backprop(Node& n) {
    const NodeId self = static_cast<NodeId>(&n - nodes_.data());
    auto inode = [&](int i) -> Node& {
        return nodes_[static_cast<size_t>(n.in[static_cast<size_t>(i)])];
    };
    auto gptr = [&](int i) -> double* {
        Node& m = inode(i);
        return m.requires_grad ? m.grad.ptr() : nullptr;
    };
    const Tensor& g = n.grad;

    switch (n.op) {
        case Op::kLeaf:
            return;
        case Op::kIdentity: {
            if (double* gx = gptr(0))
                for (int i = 0; i < g.numel(); ++i) gx[i] += g.data[i];
            return;
        }
        case Op::kAdd: {
            for (int s = 0; s < 2; ++s)
                if (double* gx = gptr(s))
                    for (int i = 0; i < g.numel(); ++i) gx[i] += g.data[i];
            return;
        }
        case Op::kSub: {
            if (double* gx = gptr(0))
                for (int i = 0; i < g.numel(); ++i) gx[i] += g.data[i];
            if (double* gx = gptr(1))
                for (int i = 0; i < g.numel(); ++i) gx[i] -= g.data[i];
            return;
        }
        case Op::kMul: {
            const Tensor& a = inode(0).value;
            const Tensor& b = inode(1).value;
            if (double* gx = gptr(0))
                for (int i = 0; i < g.numel(); ++i) gx[i] += g.data[i] * b.data[i];
            if (double* gx = gptr(1))
                for (int i = 0; i < g.numel(); ++i) gx[i] += g.data[i] * a.data[i];
            return;
        }
        case Op::kAffine: {
            if (double* gx = gptr(0))
                for (int i = 0; i < g.numel(); ++i) gx[i] += n.k * g.data[i];
            return;
        }
        case Op::kBroadcastC: {
            if (double* gm = gptr(0)) {
                const int c = n.aux, plane = inode(0).value.numel();
                for (int ch = 0; ch < c; ++ch)
                    for (int i = 0; i < plane; ++i) gm[i] += g.data[ch * plane + i];
            }
            return;
        }
        case Op::kMix: {
            const Tensor& m = inode(0).value;
            const Tensor& xc = inode(1).value;
            const Tensor& xn = inode(2).value;
            const int c = xc.dim(0), plane = m.numel();
            if (double* gm = gptr(0))
                for (int ch = 0; ch < c; ++ch)
                    for (int i = 0; i < plane; ++i) {
                        const int j = ch * plane + i;
                        gm[i] += g.data[j] * (xc.data[j] - xn.data[j]);
                    }
            if (double* gc = gptr(1))
                for (int ch = 0; ch < c; ++ch)
                    for (int i = 0; i < plane; ++i) {
                        const int j = ch * plane + i;
                        gc[j] += g.data[j] * m.data[i];
                    }
            if (double* gn = gptr(2))
                for (int ch = 0; ch < c; ++ch)
                    for (int i = 0; i < plane; ++i) {
                        const int j = ch * plane + i;
                        gn[j] += g.data[j] * (1.0 - m.data[i]);
                    }
            return;
        }
        case Op::kConv2d: {
            const Tensor& x = inode(0).value;
            const Tensor& w = inode(1).value;
            if (double* gx = gptr(0))
                kernels::conv2d_backward_input(w.ptr(), w.dim(0), w.dim(1), w.dim(2), g.ptr(),
                                               x.dim(1), x.dim(2), gx);
            double* gw = gptr(1);
            double* gb = gptr(2);
            if (gw || gb) {
                // Parameter gradients always travel together in this net.
                Tensor scratch_w, scratch_b;
                if (!gw) {
                    scratch_w = Tensor::zeros(w.shape);
                    gw = scratch_w.ptr();
                }
                if (!gb) {
                    scratch_b = Tensor::zeros({w.dim(0)});
                    gb = scratch_b.ptr();
                }
                kernels::conv2d_backward_params(x.ptr(), x.dim(0), x.dim(1), x.dim(2), g.ptr(),
                                                w.dim(0), w.dim(2), gw, gb);
            }
            return;
        }
        case Op::kDense: {
            const Tensor& x = inode(0).value;
            const Tensor& w = inode(1).value;
            kernels::dense_backward(x.ptr(), x.numel(), w.ptr(), w.dim(0), g.ptr(), gptr(0),
                                    gptr(1), gptr(2));
            return;
        }
        case Op::kRelu: {
            if (double* gx = gptr(0))
                kernels::relu_backward(inode(0).value.ptr(), g.ptr(), g.numel(), gx);
            return;
        }
        case Op::kMaxPool2: {
            if (double* gx = gptr(0)) {
                const Tensor& x = inode(0).value;
                kernels::maxpool2_backward(g.ptr(), x.dim(0), x.dim(1), x.dim(2),
                                           n.argmax.data(), gx);
            }
            return;
        }
        case Op::kSoftmaxXent: {
            if (double* gl = gptr(0))
                kernels::softmax_xent_backward(n.probs.data(),
                                               static_cast<int>(n.probs.size()), n.aux,
                                               g.data[0], gl);
            return;
        }
        case Op::kPickLogit: {
            if (double* gl = gptr(0)) gl[n.aux] += g.data[0];
            return;
        }
        case Op::kMean: {
            if (double* gx = gptr(0)) {
                const int m = inode(0).value.numel();
                const double gv = g.data[0] / m;
                for (int i = 0; i < m; ++i) gx[i] += gv;
            }
            return;
        }
        case Op::kL1Norm: {
            if (double* gx = gptr(0)) {
                const Tensor& a = inode(0).value;
                for (int i = 0; i < a.numel(); ++i) {
                    if (a.data[i] > 0.0)
                        gx[i] += g.data[0];
                    else if (a.data[i] < 0.0)
                        gx[i] -= g.data[0];
                }
            }
            return;
        }
        case Op::kTvPenalty: {
            if (double* gx = gptr(0)) {
                const Tensor& a = inode(0).value;
                const int h = a.dim(0), w = a.dim(1);
                const double s = 2.0 * g.data[0] / (h * w);
                for (int y = 0; y < h; ++y)
                    for (int x = 0; x < w; ++x) {
                        const double v = a.data[y * w + x];
                        if (y + 1 < h) {
                            const double d = a.data[(y + 1) * w + x] - v;
                            gx[(y + 1) * w + x] += s * d;
                            gx[y * w + x] -= s * d;
                        }
                        if (x + 1 < w) {
                            const double d = a.data[y * w + x + 1] - v;
                            gx[y * w + x + 1] += s * d;
                            gx[y * w + x] -= s * d;
                        }
                    }
            }
            return;
        }
    }
}

const Tensor& Graph::forward(NodeId root) {
    check_id(root, "forward");
    for (NodeId i = 0; i <= root; ++i) eval(nodes_[static_cast<size_t>(i)]);
    return nodes_[static_cast<size_t>(root)].value;
}

void Graph::backward(NodeId root) {
    check_id(root, "backward");
    Node& r = nodes_[static_cast<size_t>(root)];
    if (!is_scalar(r.value))
        fail(root, "backward from non-scalar root with shape " + shape_str(r.value.shape));
    for (NodeId i = 0; i <= root; ++i) {
        Node& n = nodes_[static_cast<size_t>(i)];
        if (!n.requires_grad) continue;
        if (n.grad.shape != n.value.shape) {
            n.grad.shape = n.value.shape;
            n.grad.data.assign(n.value.data.size(), 0.0);
        } else {
            std::fill(n.grad.data.begin(), n.grad.data.end(), 0.0);
        }
    }
    if (!r.requires_grad) return; // nothing reachable wants a gradient
    r.grad.data[0] = 1.0;
    for (NodeId i = root; i >= 0; --i) {
        Node& n = nodes_[static_cast<size_t>(i)];
        if (n.requires_grad && n.op != Op::kLeaf) backprop(n);
    }
}

Tensor Graph::gradient(NodeId root, NodeId leaf) {
    check_id(root, "gradient");
    check_id(leaf, "gradient");
    forward(root);
    backward(root);
    const Node& l = nodes_[static_cast<size_t>(leaf)];
    // A leaf past the root or without requires_grad has no path into the
    // root; its gradient is identically zero.
    if (leaf <= root && l.requires_grad) return l.grad;
    return Tensor::zeros(l.value.shape);
}

double tv_penalty(const Tensor& mask) {
    if (mask.ndim() != 2) throw ShapeError("tv_penalty: mask must be H×W");
    const int h = mask.dim(0), w = mask.dim(1);
    double s = 0.0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double v = mask.data[y * w + x];
            if (y + 1 < h) {
                const double d = mask.data[(y + 1) * w + x] - v;
                s += d * d;
            }
            if (x + 1 < w) {
                const double d = mask.data[y * w + x + 1] - v;
                s += d * d;
            }
        }
    return s / (h * w);
}

std::vector<double> softmax(const Tensor& logits) {
    std::vector<double> p(static_cast<size_t>(logits.numel()));
    kernels::softmax_xent_forward(logits.ptr(), logits.numel(), 0, p.data());
    return p;
}

int argmax(const Tensor& v) {
    int best = 0;
    for (int i = 1; i < v.numel(); ++i)
        if (v.data[i] > v.data[best]) best = i;
    return best;
}

} // namespace iscp
