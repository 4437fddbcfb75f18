#include "iscp/search.hpp"
#include "iscp/synth.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

using iscp::Dataset;
using iscp::Model;
using iscp::SearchConfig;
using iscp::Tensor;

namespace {

// Two-class linear model over a flat 1×h×w input: logits = W·x + b.
Model linear_model(int h, int w, const std::vector<double>& w_row0,
                   const std::vector<double>& w_row1) {
    using L = Model::Layer;
    Model m = iscp::build_custom({1, h, w}, 2, {{L::Kind::kDense, 2, 0, -1}}, 1);
    for (int i = 0; i < h * w; ++i) {
        m.params[0].data[static_cast<size_t>(i)] = w_row0[static_cast<size_t>(i)];
        m.params[0].data[static_cast<size_t>(h * w + i)] = w_row1[static_cast<size_t>(i)];
    }
    std::fill(m.params[1].data.begin(), m.params[1].data.end(), 0.0);
    return m;
}

Dataset one_image_dataset(const Tensor& img, int label, int num_classes) {
    Dataset d;
    d.images = {img};
    d.labels = {label};
    d.num_classes = num_classes;
    d.split = "test";
    return d;
}

} // namespace

TEST_CASE("mix endpoints") {
    iscp::Rng rng(1);
    Tensor canvas = Tensor::zeros({3, 4, 4});
    Tensor xn = Tensor::zeros({3, 4, 4});
    for (double& v : canvas.data) v = rng.uniform();
    for (double& v : xn.data) v = rng.uniform();
    CHECK(iscp::mix(Tensor::full({4, 4}, 1.0), canvas, xn).data == canvas.data);
    CHECK(iscp::mix(Tensor::full({4, 4}, 0.0), canvas, xn).data == xn.data);
    CHECK_THROWS_AS(iscp::mix(Tensor::full({3, 4}, 0.5), canvas, xn), iscp::ShapeError);
}

TEST_CASE("search loss on the constant-zero-logit stub is ln(10) + 0.1") {
    Model m = iscp::build_small_cnn({1, 28, 28}, 10, 1);
    for (Tensor& p : m.params) std::fill(p.data.begin(), p.data.end(), 0.0);
    const Tensor mask = Tensor::full({28, 28}, 0.5);
    const Tensor canvas = Tensor::full({1, 28, 28}, 1.0);
    const std::vector<Tensor> batch = {Tensor::zeros({1, 28, 28})};
    const double loss = iscp::search_loss(m, mask, canvas, batch, 3, 0.2, 0.0);
    CHECK(loss == doctest::Approx(std::log(10.0) + 0.1).epsilon(1e-9));
    CHECK(loss == doctest::Approx(2.40259).epsilon(1e-5));
}

TEST_CASE("search loss matches a straight-line recomputation") {
    iscp::Rng rng(2);
    const int h = 6, w = 6;
    Model m = iscp::build_custom(
        {1, h, w}, 3,
        {{Model::Layer::Kind::kConv, 2, 3, -1},
         {Model::Layer::Kind::kRelu, 0, 0, -1},
         {Model::Layer::Kind::kDense, 3, 0, -1}},
        7);
    Tensor mask = Tensor::zeros({h, w});
    for (double& v : mask.data) v = rng.uniform();
    Tensor canvas = Tensor::zeros({1, h, w});
    for (double& v : canvas.data) v = rng.uniform();
    std::vector<Tensor> batch;
    for (int j = 0; j < 4; ++j) {
        Tensor xn = Tensor::zeros({1, h, w});
        for (double& v : xn.data) v = rng.uniform();
        batch.push_back(xn);
    }
    const double alpha = 0.25, beta = 0.4;
    const int y = 2;
    const double got = iscp::search_loss(m, mask, canvas, batch, y, alpha, beta);

    // straight line: per-sample mix + model probabilities + manual penalties
    iscp::Evaluator ev(m);
    double want = 0.0;
    for (const Tensor& xn : batch) {
        const Tensor mixed = iscp::mix(mask, canvas, xn);
        want += -std::log(ev.probabilities(mixed)[static_cast<size_t>(y)]);
    }
    double l1 = 0.0;
    for (double v : mask.data) l1 += std::abs(v);
    want += alpha * l1 / (h * w);
    want += beta * iscp::tv_penalty(mask);
    CHECK(std::abs(got - want) <= 1e-12);

    // beta = 0 drops exactly the TV term
    const double no_tv = iscp::search_loss(m, mask, canvas, batch, y, alpha, 0.0);
    CHECK(std::abs(no_tv - (want - beta * iscp::tv_penalty(mask))) <= 1e-12);
}

TEST_CASE("iscp_search zero step leaves the mask at 0.5") {
    const Model m = linear_model(2, 2, {1, 0, 0, 0}, {0, 1, 0, 0});
    const Dataset d = one_image_dataset(Tensor::zeros({1, 2, 2}), 0, 2);
    const auto dn = iscp::select_nontarget_subset(d, 1, 1.0, 1);
    SearchConfig cfg;
    cfg.eta = 0.0;
    cfg.epochs = 3;
    cfg.batch = 1;
    const auto res = iscp::iscp_search(m, Tensor::full({1, 2, 2}, 1.0), d, dn, 1, cfg);
    for (double v : res.mask.data) CHECK(v == 0.5);
    CHECK(res.epoch_mean_loss.size() == 3);
}

TEST_CASE("single-step hand trace on a one-pixel linear model") {
    // class-1 logit = x, class-0 logit = -x, canvas = 1, x_n = 0, y = 1
    const Model m = linear_model(1, 1, {-1}, {1});
    const Dataset d = one_image_dataset(Tensor::zeros({1, 1, 1}), 0, 2);
    const auto dn = iscp::select_nontarget_subset(d, 1, 1.0, 1);
    SearchConfig cfg;
    cfg.epochs = 1;
    cfg.batch = 1;
    cfg.alpha = 0.2;
    cfg.eta = 0.02;
    const auto res = iscp::iscp_search(m, Tensor::full({1, 1, 1}, 1.0), d, dn, 1, cfg);

    // Hand computation: x̃ = 0.5, logits (−0.5, 0.5), p1 = 1/(1+e^{-1}),
    // dL/dm = (p1−1)·1·(xc−xn)·… plus the sign contribution of α·|m|:
    // dL/dx̃ = (p0·(−1) + (p1−1)·(1)) = −(1 − p1)·2? Work with the exact
    // expression instead: g = (softmax−onehot)·w · (xc−xn) + α·sign(m).
    const double p1 = 1.0 / (1.0 + std::exp(-1.0));
    const double p0 = 1.0 - p1;
    const double g = (p0 * -1.0 + (p1 - 1.0) * 1.0) * 1.0 + 0.2 * 1.0;
    REQUIRE(g < 0.0); // pushes the mask up
    CHECK(res.mask.data[0] == doctest::Approx(0.5 + 0.02).epsilon(1e-12));
}

TEST_CASE("search finds the single predictive pixel of a linear model") {
    // class-1 score depends only on pixel (0,0); the optimized mask must
    // rank that pixel first, matching a brute-force scan over single-pixel
    // masks.
    const int h = 4, w = 4;
    std::vector<double> row0(static_cast<size_t>(h * w), 0.0);
    std::vector<double> row1(static_cast<size_t>(h * w), 0.0);
    row1[0] = 4.0;
    const Model m = linear_model(h, w, row0, row1);
    Dataset d;
    d.num_classes = 2;
    d.split = "test";
    iscp::Rng rng(5);
    for (int i = 0; i < 12; ++i) {
        Tensor img = Tensor::zeros({1, h, w});
        for (double& v : img.data) v = rng.uniform(0.0, 0.4);
        d.images.push_back(img);
        d.labels.push_back(0);
    }
    const auto dn = iscp::select_nontarget_subset(d, 1, 1.0, 1);
    const Tensor canvas = Tensor::full({1, h, w}, 1.0);
    SearchConfig cfg;
    cfg.alpha = 0.05;
    cfg.epochs = 5;
    cfg.batch = 4;
    const auto res = iscp::iscp_search(m, canvas, d, dn, 1, cfg);
    int best = 0;
    for (int i = 1; i < h * w; ++i)
        if (res.mask.data[static_cast<size_t>(i)] > res.mask.data[static_cast<size_t>(best)])
            best = i;

    // brute force: lowest search loss over all single-pixel binary masks
    int brute_best = -1;
    double brute_loss = 0.0;
    for (int i = 0; i < h * w; ++i) {
        Tensor mask = Tensor::zeros({h, w});
        mask.data[static_cast<size_t>(i)] = 1.0;
        double total = 0.0;
        for (const Tensor& xn : d.images)
            total += iscp::search_loss(m, mask, canvas, {xn}, 1, cfg.alpha, 0.0);
        if (brute_best < 0 || total < brute_loss) {
            brute_loss = total;
            brute_best = i;
        }
    }
    CHECK(brute_best == 0);
    CHECK(best == brute_best);
}

TEST_CASE("search is deterministic and leaves weights untouched") {
    const Dataset d = iscp::make_synth_dataset(iscp::synth_mnist_like(), 40, 3, "test");
    Model m = iscp::build_small_cnn({1, 28, 28}, 10, 4);
    const auto params_before = m.params;
    const auto dn = iscp::select_nontarget_subset(d, 0, 0.5, 2);
    SearchConfig cfg;
    cfg.epochs = 2;
    cfg.seed = 31;
    bool in_bounds = true;
    const auto r1 = iscp::iscp_search(m, Tensor::full({1, 28, 28}, 1.0), d, dn, 0, cfg,
                                      [&](const Tensor& mask, int, long) {
                                          for (double v : mask.data)
                                              if (v < 0.0 || v > 1.0) in_bounds = false;
                                      });
    const auto r2 = iscp::iscp_search(m, Tensor::full({1, 28, 28}, 1.0), d, dn, 0, cfg);
    CHECK(in_bounds);
    REQUIRE(r1.mask.data == r2.mask.data);
    CHECK(r1.epoch_mean_loss == r2.epoch_mean_loss);
    for (size_t i = 0; i < m.params.size(); ++i)
        REQUIRE(m.params[i].data == params_before[i].data);
    // D_n containing the target class is rejected
    iscp::NontargetSubset bad = dn;
    bad.dn_indices[0] = -1;
    for (int i = 0; i < d.size(); ++i)
        if (d.labels[static_cast<size_t>(i)] == 0) bad.dn_indices[0] = i;
    CHECK_THROWS_AS(iscp::iscp_search(m, Tensor::full({1, 28, 28}, 1.0), d, bad, 0, cfg),
                    std::invalid_argument);
}

TEST_CASE("gamma clip") {
    SUBCASE("k = 1 selects everything") {
        const Tensor m({2, 2}, {0.2, 0.4, 0.6, 0.8});
        const auto r = iscp::gamma_clip(m, 1.0);
        for (double v : r.binary.data) CHECK(v == 1.0);
        CHECK(r.gamma == 0.2);
    }
    SUBCASE("hand case with a tie broken in raster order") {
        const Tensor m({2, 2}, {0.9, 0.1, 0.5, 0.5});
        const auto r = iscp::gamma_clip(m, 0.5);
        CHECK(r.binary.data == std::vector<double>{1.0, 0.0, 1.0, 0.0});
        CHECK(r.gamma == 0.5);
    }
    SUBCASE("random masks match the counting oracle at several k") {
        iscp::Rng rng(6);
        for (int trial = 0; trial < 20; ++trial) {
            Tensor m = Tensor::zeros({16, 16});
            for (double& v : m.data) v = rng.uniform();
            // inject ties
            m.data[5] = m.data[77] = m.data[200];
            for (double k : {0.01, 0.05, 0.1, 0.25, 1.0}) {
                const auto r = iscp::gamma_clip(m, k);
                const int c = static_cast<int>(std::ceil(k * 256.0 - 1e-9));
                int selected = 0;
                for (double v : r.binary.data) selected += v == 1.0;
                REQUIRE(selected == c);
                // counting oracle: i is selected iff fewer than c entries
                // beat it (greater value, or equal value at a lower index)
                for (int i = 0; i < 256; ++i) {
                    int ahead = 0;
                    for (int j = 0; j < 256; ++j) {
                        if (j == i) continue;
                        if (m.data[static_cast<size_t>(j)] > m.data[static_cast<size_t>(i)] ||
                            (m.data[static_cast<size_t>(j)] == m.data[static_cast<size_t>(i)] &&
                             j < i))
                            ++ahead;
                    }
                    REQUIRE(r.binary.data[static_cast<size_t>(i)] == (ahead < c ? 1.0 : 0.0));
                }
            }
        }
    }
}

TEST_CASE("extract_pattern") {
    const Tensor canvas = Tensor::full({3, 2, 2}, 1.0);
    SUBCASE("white canvas gives a {0,1} pattern") {
        const Tensor m({2, 2}, {0.9, 0.1, 0.7, 0.2});
        const auto clip = iscp::gamma_clip(m, 0.5);
        const auto p = iscp::extract_pattern(clip, canvas, 3);
        for (double v : p.pixels.data) CHECK((v == 0.0 || v == 1.0));
        CHECK(p.target_class == 3);
        CHECK(p.gamma == 0.7);
    }
    SUBCASE("all-zero mask gives an all-zero pattern") {
        iscp::GammaClip clip;
        clip.binary = Tensor::zeros({2, 2});
        clip.gamma = 1.0;
        const auto p = iscp::extract_pattern(clip, canvas, 0);
        for (double v : p.pixels.data) CHECK(v == 0.0);
    }
    SUBCASE("nonzero coordinates equal the mask support") {
        iscp::Rng rng(7);
        Tensor m = Tensor::zeros({2, 2});
        for (double& v : m.data) v = rng.uniform();
        Tensor c2 = Tensor::zeros({3, 2, 2});
        for (double& v : c2.data) v = rng.uniform(0.1, 1.0);
        const auto clip = iscp::gamma_clip(m, 0.5);
        const auto p = iscp::extract_pattern(clip, c2, 1);
        for (int ch = 0; ch < 3; ++ch)
            for (int i = 0; i < 4; ++i)
                REQUIRE((p.pixels.data[ch * 4 + i] != 0.0) ==
                        (clip.binary.data[static_cast<size_t>(i)] == 1.0));
    }
}

TEST_CASE("canvas sampling") {
    SUBCASE("white, N=3 gives three identical all-ones canvases") {
        const Dataset d = iscp::make_synth_dataset(iscp::synth_mnist_like(), 10, 1, "test");
        const Model m = iscp::build_small_cnn({1, 28, 28}, 10, 1);
        const auto set = iscp::sample_canvases(m, d, 0, iscp::CanvasStrategy::kWhite, 3);
        REQUIRE(set.canvases.size() == 3);
        for (const auto& c : set.canvases) {
            CHECK(c.source_index == -1);
            for (double v : c.image.data) REQUIRE(v == 1.0);
        }
    }
    SUBCASE("positive picks the higher-logit image and matches a sort oracle") {
        // logit_1 = Σx: ranking by pixel sum
        const int h = 2, w = 2;
        const Model m = linear_model(h, w, {0, 0, 0, 0}, {1, 1, 1, 1});
        Dataset d;
        d.num_classes = 2;
        d.split = "test";
        iscp::Rng rng(8);
        std::vector<double> sums;
        for (int i = 0; i < 10; ++i) {
            Tensor img = Tensor::zeros({1, h, w});
            double s = 0.0;
            for (double& v : img.data) {
                v = rng.uniform(0.1, 1.0);
                s += v;
            }
            d.images.push_back(img);
            d.labels.push_back(1); // all class 1, all correctly classified
            sums.push_back(s);
        }
        const auto top1 = iscp::sample_canvases(m, d, 1, iscp::CanvasStrategy::kPositive, 1);
        int want = 0;
        for (int i = 1; i < 10; ++i)
            if (sums[static_cast<size_t>(i)] > sums[static_cast<size_t>(want)]) want = i;
        CHECK(top1.canvases[0].source_index == want);

        const auto top5 = iscp::sample_canvases(m, d, 1, iscp::CanvasStrategy::kPositive, 5);
        std::vector<int> oracle(10);
        std::iota(oracle.begin(), oracle.end(), 0);
        std::sort(oracle.begin(), oracle.end(), [&](int a, int b) {
            return sums[static_cast<size_t>(a)] != sums[static_cast<size_t>(b)]
                       ? sums[static_cast<size_t>(a)] > sums[static_cast<size_t>(b)]
                       : a < b;
        });
        for (int i = 0; i < 5; ++i)
            CHECK(top5.canvases[static_cast<size_t>(i)].source_index ==
                  oracle[static_cast<size_t>(i)]);
    }
    SUBCASE("negative with no misclassified-into-y images is an error") {
        const Dataset d = iscp::make_synth_dataset(iscp::synth_mnist_like(), 10, 1, "test");
        Model m = iscp::build_small_cnn({1, 28, 28}, 10, 1);
        for (Tensor& p : m.params) std::fill(p.data.begin(), p.data.end(), 0.0);
        // zero logits predict class 0 everywhere; nothing is misclassified
        // into class 1
        CHECK_THROWS_AS(iscp::sample_canvases(m, d, 1, iscp::CanvasStrategy::kNegative, 1),
                        std::runtime_error);
    }
    SUBCASE("random sampling is seed-deterministic") {
        const Dataset d = iscp::make_synth_dataset(iscp::synth_mnist_like(), 20, 1, "test");
        const Model m = iscp::build_small_cnn({1, 28, 28}, 10, 1);
        const auto a = iscp::sample_canvases(m, d, 0, iscp::CanvasStrategy::kRandom, 4, 9);
        const auto b = iscp::sample_canvases(m, d, 0, iscp::CanvasStrategy::kRandom, 4, 9);
        for (size_t i = 0; i < 4; ++i)
            CHECK(a.canvases[i].source_index == b.canvases[i].source_index);
    }
}

TEST_CASE("search_class_pattern with N=1 equals search + clip + extract") {
    const Dataset d = iscp::make_synth_dataset(iscp::synth_mnist_like(), 60, 10, "test");
    const Model m = iscp::build_small_cnn({1, 28, 28}, 10, 11);
    const auto dn = iscp::select_nontarget_subset(d, 2, 0.5, 3);
    SearchConfig cfg;
    cfg.canvases = 1;
    cfg.epochs = 2;
    cfg.seed = 17;
    cfg.target_fraction = 0.05;
    const auto pat = iscp::search_class_pattern(m, d, dn, 2, iscp::CanvasStrategy::kWhite, cfg);

    const auto res = iscp::iscp_search(m, Tensor::full({1, 28, 28}, 1.0), d, dn, 2, cfg);
    const auto manual =
        iscp::extract_pattern(iscp::gamma_clip(res.mask, 0.05), Tensor::full({1, 28, 28}, 1.0), 2);
    REQUIRE(pat.pixels.data == manual.pixels.data);
    REQUIRE(pat.binary_mask.data == manual.binary_mask.data);
    CHECK(pat.final_loss == res.epoch_mean_loss.back());
    CHECK(pat.candidate_losses.size() == 1);
}

TEST_CASE("the returned pattern's loss is the minimum over canvases") {
    const Dataset d = iscp::make_synth_dataset(iscp::synth_mnist_like(), 60, 12, "test");
    const Model m = iscp::build_small_cnn({1, 28, 28}, 10, 13);
    const auto dn = iscp::select_nontarget_subset(d, 1, 0.5, 3);
    SearchConfig cfg;
    cfg.canvases = 3;
    cfg.epochs = 1;
    const auto pat = iscp::search_class_pattern(m, d, dn, 1, iscp::CanvasStrategy::kRandom, cfg);
    REQUIRE(pat.candidate_losses.size() == 3);
    double mn = pat.candidate_losses[0];
    for (double l : pat.candidate_losses) mn = std::min(mn, l);
    CHECK(pat.final_loss == mn);
}

TEST_CASE("learned canvas variant") {
    const Dataset d = iscp::make_synth_dataset(iscp::synth_mnist_like(), 30, 14, "test");
    const Model m = iscp::build_small_cnn({1, 28, 28}, 10, 15);
    const auto dn = iscp::select_nontarget_subset(d, 0, 0.5, 3);
    const Tensor canvas = d.images[1];
    SearchConfig cfg;
    cfg.epochs = 2;
    cfg.seed = 5;

    SUBCASE("canvas step 0 reduces exactly to iscp_search") {
        SearchConfig frozen = cfg;
        frozen.canvas_step = 0.0;
        const auto learned = iscp::iscp_search_learned_canvas(m, canvas, d, dn, 0, frozen);
        const auto plain = iscp::iscp_search(m, canvas, d, dn, 0, frozen);
        REQUIRE(learned.mask.data == plain.mask.data);
        CHECK(learned.learned_canvas.data == canvas.data);
    }
    SUBCASE("canvas stays inside the unit box and actually moves") {
        const auto res = iscp::iscp_search_learned_canvas(m, canvas, d, dn, 0, cfg);
        bool moved = false;
        for (int i = 0; i < res.learned_canvas.numel(); ++i) {
            CHECK(res.learned_canvas.data[i] >= 0.0);
            CHECK(res.learned_canvas.data[i] <= 1.0);
            moved |= res.learned_canvas.data[i] != canvas.data[i];
        }
        CHECK(moved);
    }
}

TEST_CASE("pattern json round trip") {
    const Tensor canvas = Tensor::full({1, 2, 2}, 1.0);
    const Tensor m({2, 2}, {0.9, 0.2, 0.4, 0.1});
    auto p = iscp::extract_pattern(iscp::gamma_clip(m, 0.5), canvas, 6);
    p.strategy = "white";
    p.canvas_provenance = "white";
    p.alpha = 0.2;
    p.size_fraction = 0.5;
    p.final_loss = 1.25;
    p.seed = 42;
    p.candidate_losses = {1.25, 1.5};
    const auto q = iscp::Pattern::from_json(p.to_json());
    CHECK(q.pixels.data == p.pixels.data);
    CHECK(q.binary_mask.data == p.binary_mask.data);
    CHECK(q.target_class == 6);
    CHECK(q.strategy == "white");
    CHECK(q.alpha == 0.2);
    CHECK(q.final_loss == 1.25);
    CHECK(q.seed == 42);
    CHECK(q.candidate_losses == p.candidate_losses);
}
