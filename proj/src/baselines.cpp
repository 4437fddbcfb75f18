#include "iscp/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

#include <omp.h>

namespace iscp {

Tensor apply_uap(const Tensor& image, const Tensor& uap) {
    if (image.shape != uap.shape)
        throw ShapeError("apply_uap: image " + shape_str(image.shape) + " vs uap " +
                         shape_str(uap.shape));
    Tensor out = image;
    for (int i = 0; i < out.numel(); ++i)
        out.data[i] = std::clamp(out.data[i] + uap.data[i], 0.0, 1.0);
    return out;
}

Tensor targeted_uap(const Model& m, const Dataset& crafting, const UapConfig& cfg) {
    if (cfg.eps <= 0.0) throw std::invalid_argument("targeted_uap: eps must be > 0");
    if (cfg.effective_step() > cfg.eps)
        throw std::invalid_argument("targeted_uap: step must be <= eps");
    std::vector<int> idx;
    for (int i = 0; i < crafting.size(); ++i)
        if (!cfg.exclude_target || crafting.labels[static_cast<size_t>(i)] != cfg.target_class)
            idx.push_back(i);
    if (idx.empty()) throw std::invalid_argument("targeted_uap: empty crafting set");

    const auto shape = crafting.image_shape();
    Tensor delta = Tensor::zeros(shape);
    const double step = cfg.effective_step();

    const int nthreads = omp_get_max_threads();
    std::vector<std::unique_ptr<ForwardGraph>> graphs;
    std::vector<Tensor> gsum(static_cast<size_t>(nthreads));
    for (int t = 0; t < nthreads; ++t) {
        graphs.emplace_back(std::make_unique<ForwardGraph>(build_forward(m, false, true, true)));
        gsum[static_cast<size_t>(t)] = Tensor::zeros(shape);
    }

    Rng rng(cfg.seed);
    for (int pass = 0; pass < cfg.passes; ++pass) {
        rng.shuffle(idx);
        for (size_t start = 0; start < idx.size(); start += static_cast<size_t>(cfg.batch)) {
            const int bsz = static_cast<int>(
                std::min(idx.size() - start, static_cast<size_t>(cfg.batch)));
            for (Tensor& g : gsum) std::fill(g.data.begin(), g.data.end(), 0.0);
#pragma omp parallel
            {
                const int t = omp_get_thread_num();
                ForwardGraph& fg = *graphs[static_cast<size_t>(t)];
                Tensor& acc = gsum[static_cast<size_t>(t)];
#pragma omp for schedule(static)
                for (int i = 0; i < bsz; ++i) {
                    const Tensor& x =
                        crafting.images[static_cast<size_t>(idx[start + static_cast<size_t>(i)])];
                    Tensor pert = x;
                    for (int q = 0; q < pert.numel(); ++q) pert.data[q] += delta.data[q];
                    fg.g.set_leaf(fg.input, pert);
                    fg.g.set_label(fg.xent, cfg.target_class);
                    fg.g.forward(fg.xent);
                    fg.g.backward(fg.xent);
                    const Tensor& g = fg.g.grad(fg.input);
                    for (int q = 0; q < g.numel(); ++q) acc.data[q] += g.data[q];
                }
            }
            for (int t = 1; t < nthreads; ++t)
                for (int q = 0; q < gsum[0].numel(); ++q)
                    gsum[0].data[q] += gsum[static_cast<size_t>(t)].data[q];
            for (int q = 0; q < delta.numel(); ++q) {
                const double g = gsum[0].data[q];
                const double s = g > 0.0 ? 1.0 : (g < 0.0 ? -1.0 : 0.0);
                delta.data[q] = std::clamp(delta.data[q] - step * s, -cfg.eps, cfg.eps);
            }
        }
    }
    return delta;
}

double uap_success_rate(const Model& m, const Dataset& d, const std::vector<int>& indices,
                        const Tensor& uap, int target_class) {
    if (indices.empty()) throw std::invalid_argument("uap_success_rate: empty set");
    long hits = 0;
#pragma omp parallel reduction(+ : hits)
    {
        Evaluator ev(m);
#pragma omp for schedule(static)
        for (size_t i = 0; i < indices.size(); ++i) {
            if (ev.predict(apply_uap(d.images[static_cast<size_t>(indices[i])], uap)) ==
                target_class)
                ++hits;
        }
    }
    return static_cast<double>(hits) / static_cast<double>(indices.size());
}

Tensor bilinear_upsample(const Tensor& map, int out_h, int out_w) {
    const int h = map.dim(0), w = map.dim(1);
    Tensor out = Tensor::zeros({out_h, out_w});
    const double sy = static_cast<double>(h) / out_h;
    const double sx = static_cast<double>(w) / out_w;
    for (int y = 0; y < out_h; ++y) {
        double fy = (y + 0.5) * sy - 0.5;
        fy = std::clamp(fy, 0.0, static_cast<double>(h - 1));
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, h - 1);
        const double wy = fy - y0;
        for (int x = 0; x < out_w; ++x) {
            double fx = (x + 0.5) * sx - 0.5;
            fx = std::clamp(fx, 0.0, static_cast<double>(w - 1));
            const int x0 = static_cast<int>(fx);
            const int x1 = std::min(x0 + 1, w - 1);
            const double wx = fx - x0;
            out.data[y * out_w + x] = (1 - wy) * ((1 - wx) * map.data[y0 * w + x0] +
                                                  wx * map.data[y0 * w + x1]) +
                                      wy * ((1 - wx) * map.data[y1 * w + x0] +
                                            wx * map.data[y1 * w + x1]);
        }
    }
    return out;
}

Tensor gradcam(const Model& m, const Tensor& image, int target_class) {
    ForwardGraph fg = build_forward(m, false, true, false);
    if (fg.conv_outputs.empty())
        throw std::invalid_argument("gradcam: model has no conv layer");
    const Graph::NodeId tap = fg.conv_outputs.back();
    const Graph::NodeId pick = fg.g.pick_logit(fg.logits, target_class);
    fg.g.set_leaf(fg.input, image);
    fg.g.forward(pick);
    fg.g.backward(pick);
    const Tensor& act = fg.g.value(tap);
    const Tensor& g = fg.g.grad(tap);
    const int c = act.dim(0), h = act.dim(1), w = act.dim(2);
    Tensor map = Tensor::zeros({h, w});
    for (int ch = 0; ch < c; ++ch) {
        double wc = 0.0;
        for (int i = 0; i < h * w; ++i) wc += g.data[ch * h * w + i];
        wc /= h * w;
        for (int i = 0; i < h * w; ++i) map.data[i] += wc * act.data[ch * h * w + i];
    }
    for (double& v : map.data) v = std::max(0.0, v);
    Tensor up = bilinear_upsample(map, image.dim(1), image.dim(2));
    double lo = up.data[0], hi = up.data[0];
    for (double v : up.data) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (hi > lo)
        for (double& v : up.data) v = (v - lo) / (hi - lo);
    else if (hi > 0.0)
        for (double& v : up.data) v = 1.0;
    return up;
}

Pattern attention_pattern(const Model& m, const Tensor& canvas, int target_class,
                          double target_fraction) {
    const Tensor map = gradcam(m, canvas, target_class);
    const GammaClip clip = gamma_clip(map, target_fraction);
    Pattern p = extract_pattern(clip, canvas, target_class);
    p.strategy = "attention";
    p.canvas_provenance = "positive";
    p.size_fraction = target_fraction;
    return p;
}

} // namespace iscp
