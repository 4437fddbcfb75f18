#include "iscp/baselines.hpp"
#include "iscp/synth.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using iscp::Dataset;
using iscp::Model;
using iscp::Tensor;

TEST_CASE("uap stays in the eps ball and perturbed images in the unit box") {
    const Dataset d = iscp::make_synth_dataset(iscp::synth_mnist_like(), 40, 21, "test");
    const Model m = iscp::build_small_cnn({1, 28, 28}, 10, 22);
    iscp::UapConfig cfg;
    cfg.eps = 0.05;
    cfg.passes = 1;
    cfg.batch = 8;
    cfg.target_class = 3;
    const Tensor delta = iscp::targeted_uap(m, d, cfg);
    for (double v : delta.data) CHECK(std::abs(v) <= cfg.eps + 1e-12);
    const Tensor pert = iscp::apply_uap(d.images[0], delta);
    for (double v : pert.data) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    CHECK_THROWS_AS(iscp::targeted_uap(m, d, iscp::UapConfig{0.0, 0, 1, 8, 0, true, 1}),
                    std::invalid_argument);
}

TEST_CASE("vanishing eps leaves the target rate at the base rate") {
    const Dataset d = iscp::make_synth_dataset(iscp::synth_mnist_like(), 60, 23, "test");
    const Model m = iscp::build_small_cnn({1, 28, 28}, 10, 24);
    const int y = 2;
    std::vector<int> nontarget;
    for (int i = 0; i < d.size(); ++i)
        if (d.labels[static_cast<size_t>(i)] != y) nontarget.push_back(i);

    iscp::Evaluator ev(m);
    int base_hits = 0;
    for (int i : nontarget)
        if (ev.predict(d.images[static_cast<size_t>(i)]) == y) ++base_hits;
    const double base_rate = static_cast<double>(base_hits) / nontarget.size();

    iscp::UapConfig cfg;
    cfg.eps = 1e-9;
    cfg.passes = 1;
    cfg.target_class = y;
    const Tensor delta = iscp::targeted_uap(m, d, cfg);
    const double asr = iscp::uap_success_rate(m, d, nontarget, delta, y);
    CHECK(asr == doctest::Approx(base_rate).epsilon(1e-12));
}

TEST_CASE("gradcam on a 1x1 conv identity model is proportional to the input") {
    using L = Model::Layer;
    // one 1×1 conv with a positive weight feeding a dense layer whose
    // class-0 row is a positive constant
    Model m = iscp::build_custom({1, 4, 4}, 2,
                                 {{L::Kind::kConv, 1, 1, -1}, {L::Kind::kDense, 2, 0, -1}}, 1);
    m.params[0].data = {0.8}; // conv weight
    m.params[1].data = {0.0}; // conv bias
    std::fill(m.params[2].data.begin(), m.params[2].data.end(), 0.0);
    for (int i = 0; i < 16; ++i) m.params[2].data[static_cast<size_t>(i)] = 0.5; // class-0 row
    std::fill(m.params[3].data.begin(), m.params[3].data.end(), 0.0);

    iscp::Rng rng(3);
    Tensor x = Tensor::zeros({1, 4, 4});
    for (double& v : x.data) v = rng.uniform(0.1, 1.0);
    const Tensor map = iscp::gradcam(m, x, 0);

    // map should be a min-max normalized copy of x
    double lo = x.data[0], hi = x.data[0];
    for (double v : x.data) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    for (int i = 0; i < 16; ++i)
        CHECK(map.data[static_cast<size_t>(i)] ==
              doctest::Approx((x.data[static_cast<size_t>(i)] - lo) / (hi - lo)).epsilon(1e-9));
}

TEST_CASE("gradcam of all-zero activations is all zero") {
    using L = Model::Layer;
    Model m = iscp::build_custom({1, 4, 4}, 2,
                                 {{L::Kind::kConv, 1, 1, -1},
                                  {L::Kind::kRelu, 0, 0, -1},
                                  {L::Kind::kDense, 2, 0, -1}},
                                 1);
    m.params[0].data = {1.0};
    m.params[1].data = {0.0};
    for (auto& v : m.params[2].data) v = 0.3;
    const Tensor map = iscp::gradcam(m, Tensor::zeros({1, 4, 4}), 0);
    for (double v : map.data) CHECK(v == 0.0);
}

TEST_CASE("gradcam argmax location is invariant to positive logit rescaling") {
    const Dataset d = iscp::make_synth_dataset(iscp::synth_mnist_like(), 4, 25, "test");
    Model m = iscp::build_small_cnn({1, 28, 28}, 10, 26);
    const Tensor a = iscp::gradcam(m, d.images[0], 1);
    // scale the final dense layer by 3
    Model scaled = m;
    for (double& v : scaled.params[10].data) v *= 3.0;
    for (double& v : scaled.params[11].data) v *= 3.0;
    const Tensor b = iscp::gradcam(scaled, d.images[0], 1);
    int ia = 0, ib = 0;
    for (int i = 1; i < a.numel(); ++i) {
        if (a.data[i] > a.data[ia]) ia = i;
        if (b.data[i] > b.data[ib]) ib = i;
    }
    CHECK(ia == ib);
    for (double v : a.data) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("attention pattern selects top-k attention pixels with raster ties") {
    using L = Model::Layer;
    Model m = iscp::build_custom({1, 4, 4}, 2,
                                 {{L::Kind::kConv, 1, 1, -1}, {L::Kind::kDense, 2, 0, -1}}, 1);
    m.params[0].data = {1.0};
    m.params[1].data = {0.0};
    for (int i = 0; i < 16; ++i) m.params[2].data[static_cast<size_t>(i)] = 0.25;
    const Tensor canvas = Tensor::full({1, 4, 4}, 0.6); // uniform attention map
    const auto p = iscp::attention_pattern(m, canvas, 0, 0.25);
    // ⌈0.25·16⌉ = 4 pixels, raster-first under the uniform tie
    int count = 0;
    for (double v : p.binary_mask.data) count += v != 0.0;
    CHECK(count == 4);
    for (int i = 0; i < 4; ++i) CHECK(p.binary_mask.data[static_cast<size_t>(i)] == 1.0);
    for (int i = 4; i < 16; ++i) CHECK(p.binary_mask.data[static_cast<size_t>(i)] == 0.0);
    CHECK(p.strategy == "attention");
}
