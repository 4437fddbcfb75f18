#include "iscp/search.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include <omp.h>

namespace iscp {

using nlohmann::json;

void SearchConfig::validate() const {
    if (alpha < 0.0 || beta < 0.0) throw std::invalid_argument("search: alpha/beta must be >= 0");
    if (eta < 0.0) throw std::invalid_argument("search: eta must be >= 0");
    if (epochs < 1 || batch < 1 || canvases < 1)
        throw std::invalid_argument("search: epochs, batch and canvases must be >= 1");
    if (target_fraction <= 0.0 || target_fraction > 1.0)
        throw std::invalid_argument("search: target_fraction must be in (0,1]");
    if (canvas_step < 0.0) throw std::invalid_argument("search: canvas_step must be >= 0");
}

std::string to_string(CanvasStrategy s) {
    switch (s) {
        case CanvasStrategy::kPositive: return "positive";
        case CanvasStrategy::kNegative: return "negative";
        case CanvasStrategy::kRandom: return "random";
        case CanvasStrategy::kWhite: return "white";
    }
    return "?";
}

CanvasStrategy canvas_strategy_from_string(const std::string& s) {
    if (s == "positive") return CanvasStrategy::kPositive;
    if (s == "negative") return CanvasStrategy::kNegative;
    if (s == "random") return CanvasStrategy::kRandom;
    if (s == "white") return CanvasStrategy::kWhite;
    throw std::invalid_argument("unknown canvas strategy: " + s);
}

CanvasSet sample_canvases(const Model& m, const Dataset& d, int target_class,
                          CanvasStrategy strategy, int n, std::uint64_t seed) {
    if (n < 1) throw std::invalid_argument("sample_canvases: n must be >= 1");
    CanvasSet set;
    set.strategy = strategy;

    if (strategy == CanvasStrategy::kWhite) {
        const auto shape = d.image_shape();
        for (int i = 0; i < n; ++i)
            set.canvases.push_back({Tensor::full(shape, 1.0), -1, 0.0});
        return set;
    }
    if (strategy == CanvasStrategy::kRandom) {
        Rng rng(seed);
        for (int i : rng.sample_without_replacement(d.size(), n)) {
            Evaluator ev(m);
            const Tensor lg = ev.logits(d.images[static_cast<size_t>(i)]);
            set.canvases.push_back(
                {d.images[static_cast<size_t>(i)], i, lg.data[static_cast<size_t>(target_class)]});
        }
        return set;
    }

    // positive / negative need predictions over the whole set
    std::vector<int> pred(static_cast<size_t>(d.size()));
    std::vector<double> score(static_cast<size_t>(d.size()));
#pragma omp parallel
    {
        Evaluator ev(m);
#pragma omp for schedule(static)
        for (int i = 0; i < d.size(); ++i) {
            const Tensor lg = ev.logits(d.images[static_cast<size_t>(i)]);
            pred[static_cast<size_t>(i)] = argmax(lg);
            score[static_cast<size_t>(i)] = lg.data[static_cast<size_t>(target_class)];
        }
    }
    std::vector<int> candidates;
    for (int i = 0; i < d.size(); ++i) {
        const bool of_class = d.labels[static_cast<size_t>(i)] == target_class;
        const bool predicted = pred[static_cast<size_t>(i)] == target_class;
        if (strategy == CanvasStrategy::kPositive ? (of_class && predicted)
                                                  : (!of_class && predicted))
            candidates.push_back(i);
    }
    if (static_cast<int>(candidates.size()) < n)
        throw std::runtime_error("sample_canvases: " + to_string(strategy) + " has only " +
                                 std::to_string(candidates.size()) + " candidates for class " +
                                 std::to_string(target_class) + ", need " + std::to_string(n));
    std::sort(candidates.begin(), candidates.end(), [&](int a, int b) {
        const double sa = score[static_cast<size_t>(a)], sb = score[static_cast<size_t>(b)];
        return sa != sb ? sa > sb : a < b;
    });
    for (int i = 0; i < n; ++i) {
        const int idx = candidates[static_cast<size_t>(i)];
        set.canvases.push_back(
            {d.images[static_cast<size_t>(idx)], idx, score[static_cast<size_t>(idx)]});
    }
    return set;
}

Tensor mix(const Tensor& mask, const Tensor& canvas, const Tensor& nontarget) {
    Graph g;
    const auto m = g.leaf(mask);
    const auto xc = g.leaf(canvas);
    const auto xn = g.leaf(nontarget);
    return g.forward(g.mix(m, xc, xn));
}

namespace {

// One search step graph: B mixed branches through the frozen model plus the
// batch-level regularizers.
struct SearchGraph {
    Graph g;
    Graph::NodeId mask = -1;
    Graph::NodeId canvas = -1;
    std::vector<Graph::NodeId> xn;
    Graph::NodeId total = -1;
};

SearchGraph build_search_graph(const Model& m, int batch, int target_class, double alpha,
                               double beta, bool canvas_requires_grad) {
    SearchGraph sg;
    const int c = m.input_shape[0], h = m.input_shape[1], w = m.input_shape[2];
    Tensor mask0 = Tensor::full({h, w}, 0.5);
    mask0.requires_grad = true;
    sg.mask = sg.g.leaf(std::move(mask0));
    Tensor canvas0 = Tensor::zeros({c, h, w});
    canvas0.requires_grad = canvas_requires_grad;
    sg.canvas = sg.g.leaf(std::move(canvas0));
    std::vector<Graph::NodeId> params;
    for (const Tensor& p : m.params) params.push_back(sg.g.leaf(p));

    Graph::NodeId sum = -1;
    for (int j = 0; j < batch; ++j) {
        sg.xn.push_back(sg.g.leaf(Tensor::zeros({c, h, w})));
        const auto mixed = sg.g.mix(sg.mask, sg.canvas, sg.xn.back());
        const auto logits = append_model_forward(sg.g, m, mixed, params);
        const auto loss = sg.g.softmax_xent(logits, target_class);
        sum = j == 0 ? loss : sg.g.add(sum, loss);
    }
    const double n = static_cast<double>(h) * w;
    sum = sg.g.add(sum, sg.g.affine(sg.g.l1norm(sg.mask), alpha / n, 0.0));
    if (beta > 0.0) sum = sg.g.add(sum, sg.g.affine(sg.g.tv_penalty(sg.mask), beta, 0.0));
    sg.total = sum;
    return sg;
}

void sign_step_clip01(Tensor& x, const Tensor& g, double step) {
    for (int i = 0; i < x.numel(); ++i) {
        const double s = g.data[i] > 0.0 ? 1.0 : (g.data[i] < 0.0 ? -1.0 : 0.0);
        x.data[i] = std::clamp(x.data[i] - step * s, 0.0, 1.0);
    }
}

SearchResult run_search(const Model& m, const Tensor& canvas, const Dataset& d,
                        const NontargetSubset& dn, int target_class, const SearchConfig& cfg,
                        bool learn_canvas, const StepObserver& observer) {
    cfg.validate();
    if (dn.dn_indices.empty()) throw std::invalid_argument("iscp_search: empty D_n");
    for (int i : dn.dn_indices)
        if (d.labels[static_cast<size_t>(i)] == target_class)
            throw std::invalid_argument("iscp_search: D_n contains a target-class image");

    const int h = m.input_shape[1], w = m.input_shape[2];
    Tensor mask = Tensor::full({h, w}, 0.5);
    Tensor xc = canvas;
    // Graphs are cached per batch size (the last batch of an epoch may be
    // short).
    std::map<int, SearchGraph> graphs;
    auto graph_for = [&](int bsz) -> SearchGraph& {
        auto it = graphs.find(bsz);
        if (it == graphs.end())
            it = graphs
                     .emplace(std::piecewise_construct, std::forward_as_tuple(bsz),
                              std::forward_as_tuple(build_search_graph(
                                  m, bsz, target_class, cfg.alpha, cfg.beta, learn_canvas)))
                     .first;
        return it->second;
    };

    Rng rng(cfg.seed);
    std::vector<int> order = dn.dn_indices;
    SearchResult res;
    // Alternation counter for the learned-canvas variant: five mask steps,
    // then five canvas steps. canvas_step == 0 keeps every step on the mask.
    long step_count = 0;
    const bool alternate = learn_canvas && cfg.canvas_step > 0.0;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        double loss_sum = 0.0;
        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch)) {
            const int bsz = static_cast<int>(
                std::min(order.size() - start, static_cast<size_t>(cfg.batch)));
            SearchGraph& sg = graph_for(bsz);
            sg.g.set_leaf(sg.mask, mask);
            sg.g.set_leaf(sg.canvas, xc);
            for (int j = 0; j < bsz; ++j)
                sg.g.set_leaf(sg.xn[static_cast<size_t>(j)],
                              d.images[static_cast<size_t>(order[start + static_cast<size_t>(j)])]);
            sg.g.forward(sg.total);
            sg.g.backward(sg.total);
            loss_sum += sg.g.scalar(sg.total);

            const bool canvas_turn = alternate && (step_count / 5) % 2 == 1;
            if (canvas_turn)
                sign_step_clip01(xc, sg.g.grad(sg.canvas), cfg.canvas_step);
            else
                sign_step_clip01(mask, sg.g.grad(sg.mask), cfg.eta);
            if (observer) observer(mask, epoch, step_count);
            ++step_count;
        }
        res.epoch_mean_loss.push_back(loss_sum / static_cast<double>(order.size()));
    }
    res.mask = std::move(mask);
    if (learn_canvas) res.learned_canvas = std::move(xc);
    return res;
}

std::string provenance(const Canvas& c, CanvasStrategy strategy) {
    if (c.source_index < 0) return to_string(strategy);
    char buf[96];
    std::snprintf(buf, sizeof(buf), "%s[idx=%d,logit=%.6f]", to_string(strategy).c_str(),
                  c.source_index, c.score);
    return buf;
}

} // namespace

double search_loss(const Model& m, const Tensor& mask, const Tensor& canvas,
                   const std::vector<Tensor>& batch, int target_class, double alpha,
                   double beta) {
    if (batch.empty()) throw std::invalid_argument("search_loss: empty batch");
    SearchGraph sg = build_search_graph(m, static_cast<int>(batch.size()), target_class,
                                        alpha, beta, false);
    sg.g.set_leaf(sg.mask, mask);
    sg.g.set_leaf(sg.canvas, canvas);
    for (size_t j = 0; j < batch.size(); ++j) sg.g.set_leaf(sg.xn[j], batch[j]);
    sg.g.forward(sg.total);
    return sg.g.scalar(sg.total);
}

SearchResult iscp_search(const Model& m, const Tensor& canvas, const Dataset& d,
                         const NontargetSubset& dn, int target_class,
                         const SearchConfig& cfg, const StepObserver& observer) {
    return run_search(m, canvas, d, dn, target_class, cfg, false, observer);
}

SearchResult iscp_search_learned_canvas(const Model& m, const Tensor& initial_canvas,
                                        const Dataset& d, const NontargetSubset& dn,
                                        int target_class, const SearchConfig& cfg,
                                        const StepObserver& observer) {
    return run_search(m, initial_canvas, d, dn, target_class, cfg, true, observer);
}

GammaClip gamma_clip(const Tensor& mask, double target_fraction) {
    if (target_fraction <= 0.0 || target_fraction > 1.0)
        throw std::invalid_argument("gamma_clip: target_fraction must be in (0,1]");
    const int n = mask.numel();
    // ⌈k·n⌉ with a nudge so exact products (0.1·100) do not round up.
    int c = static_cast<int>(std::ceil(target_fraction * n - 1e-9));
    c = std::clamp(c, 1, n);
    std::vector<int> idx(static_cast<size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](int a, int b) {
        const double va = mask.data[static_cast<size_t>(a)], vb = mask.data[static_cast<size_t>(b)];
        return va != vb ? va > vb : a < b;
    });
    GammaClip out;
    out.binary = Tensor::zeros(mask.shape);
    for (int i = 0; i < c; ++i) out.binary.data[static_cast<size_t>(idx[static_cast<size_t>(i)])] = 1.0;
    out.gamma = mask.data[static_cast<size_t>(idx[static_cast<size_t>(c - 1)])];
    return out;
}

Pattern extract_pattern(const GammaClip& clip, const Tensor& canvas, int target_class) {
    const int c = canvas.dim(0), h = canvas.dim(1), w = canvas.dim(2);
    if (clip.binary.dim(0) != h || clip.binary.dim(1) != w)
        throw ShapeError("extract_pattern: mask " + shape_str(clip.binary.shape) +
                         " vs canvas " + shape_str(canvas.shape));
    Pattern p;
    p.binary_mask = clip.binary;
    p.gamma = clip.gamma;
    p.target_class = target_class;
    p.pixels = Tensor::zeros(canvas.shape);
    for (int ch = 0; ch < c; ++ch)
        for (int i = 0; i < h * w; ++i)
            p.pixels.data[ch * h * w + i] = clip.binary.data[static_cast<size_t>(i)] *
                                            canvas.data[ch * h * w + i];
    return p;
}

ClassSearchOutcome search_class_mask(const Model& m, const Dataset& d,
                                     const NontargetSubset& dn, int target_class,
                                     CanvasStrategy strategy, const SearchConfig& cfg) {
    cfg.validate();
    const CanvasSet set = sample_canvases(m, d, target_class, strategy, cfg.canvases, cfg.seed);
    std::vector<SearchResult> results;
    std::vector<double> losses;
    for (size_t i = 0; i < set.canvases.size(); ++i) {
        SearchConfig per = cfg;
        per.seed = cfg.seed + i; // independent but reproducible per canvas
        results.push_back(iscp_search(m, set.canvases[i].image, d, dn, target_class, per));
        losses.push_back(results.back().epoch_mean_loss.back());
    }
    size_t best = 0;
    for (size_t i = 1; i < losses.size(); ++i)
        if (losses[i] < losses[best]) best = i;
    ClassSearchOutcome out;
    out.best = std::move(results[best]);
    out.best_canvas = set.canvases[best];
    out.best_provenance = provenance(set.canvases[best], strategy);
    out.losses = std::move(losses);
    out.strategy = strategy;
    return out;
}

Pattern make_pattern(const ClassSearchOutcome& outcome, int target_class,
                     double target_fraction, const SearchConfig& cfg) {
    Pattern p = extract_pattern(gamma_clip(outcome.best.mask, target_fraction),
                                outcome.best_canvas.image, target_class);
    p.strategy = to_string(outcome.strategy);
    p.canvas_provenance = outcome.best_provenance;
    p.alpha = cfg.alpha;
    p.beta = cfg.beta;
    p.size_fraction = target_fraction;
    p.final_loss = *std::min_element(outcome.losses.begin(), outcome.losses.end());
    p.seed = cfg.seed;
    p.candidate_losses = outcome.losses;
    return p;
}

Pattern search_class_pattern(const Model& m, const Dataset& d, const NontargetSubset& dn,
                             int target_class, CanvasStrategy strategy,
                             const SearchConfig& cfg) {
    const ClassSearchOutcome outcome =
        search_class_mask(m, d, dn, target_class, strategy, cfg);
    return make_pattern(outcome, target_class, cfg.target_fraction, cfg);
}

LearnedCanvasPattern search_learned_canvas(const Model& m, const Tensor& initial_canvas,
                                           const Dataset& d, const NontargetSubset& dn,
                                           int target_class, const SearchConfig& cfg) {
    SearchResult res = iscp_search_learned_canvas(m, initial_canvas, d, dn, target_class, cfg);
    LearnedCanvasPattern out;
    out.pattern = extract_pattern(gamma_clip(res.mask, cfg.target_fraction),
                                  res.learned_canvas, target_class);
    out.pattern.strategy = "learned-canvas";
    out.pattern.canvas_provenance = "learned-canvas[step=" + std::to_string(cfg.canvas_step) + "]";
    out.pattern.alpha = cfg.alpha;
    out.pattern.beta = cfg.beta;
    out.pattern.size_fraction = cfg.target_fraction;
    out.pattern.final_loss = res.epoch_mean_loss.back();
    out.pattern.seed = cfg.seed;
    out.pattern.candidate_losses = {res.epoch_mean_loss.back()};
    out.learned_canvas = res.learned_canvas;
    return out;
}

std::string Pattern::to_json() const {
    json j;
    j["schema"] = "iscp-pattern-v1";
    j["class"] = target_class;
    j["strategy"] = strategy;
    j["canvas_provenance"] = canvas_provenance;
    j["alpha"] = alpha;
    j["beta"] = beta;
    j["k"] = size_fraction;
    j["gamma"] = gamma;
    j["final_loss"] = final_loss;
    j["seed"] = seed;
    j["candidate_losses"] = candidate_losses;
    j["pixels_shape"] = pixels.shape;
    j["pixels"] = pixels.data;
    j["mask_shape"] = binary_mask.shape;
    j["mask"] = binary_mask.data;
    return j.dump(2);
}

Pattern Pattern::from_json(const std::string& text) {
    const json j = json::parse(text);
    if (j.value("schema", "") != "iscp-pattern-v1")
        throw std::runtime_error("pattern json: unknown schema");
    Pattern p;
    p.target_class = j.at("class").get<int>();
    p.strategy = j.at("strategy").get<std::string>();
    p.canvas_provenance = j.at("canvas_provenance").get<std::string>();
    p.alpha = j.at("alpha").get<double>();
    p.beta = j.at("beta").get<double>();
    p.size_fraction = j.at("k").get<double>();
    p.gamma = j.at("gamma").get<double>();
    p.final_loss = j.at("final_loss").is_null() ? std::numeric_limits<double>::quiet_NaN()
                                                : j.at("final_loss").get<double>();
    p.seed = j.at("seed").get<std::uint64_t>();
    p.candidate_losses = j.at("candidate_losses").get<std::vector<double>>();
    p.pixels = Tensor(j.at("pixels_shape").get<std::vector<int>>(),
                      j.at("pixels").get<std::vector<double>>());
    p.binary_mask = Tensor(j.at("mask_shape").get<std::vector<int>>(),
                           j.at("mask").get<std::vector<double>>());
    return p;
}

} // namespace iscp
