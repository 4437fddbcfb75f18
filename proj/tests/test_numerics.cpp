#include "iscp/graph.hpp"
#include "iscp/kernels_serial.hpp"
#include "iscp/rng.hpp"

#include "fd_check.hpp"

#include <doctest.h>

#include <cmath>
#include <vector>

using iscp::Graph;
using iscp::Rng;
using iscp::Tensor;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (double& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

Tensor grad_leaf(std::vector<int> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t = random_tensor(std::move(shape), rng, lo, hi);
    t.requires_grad = true;
    return t;
}

} // namespace

TEST_CASE("identity node returns its leaf") {
    Graph g;
    const auto a = g.leaf(Tensor({3}, {1.0, 2.0, 3.0}));
    const auto id = g.identity(a);
    const Tensor& v = g.forward(id);
    CHECK(v.data == std::vector<double>{1.0, 2.0, 3.0});
}

TEST_CASE("0.5 mask times all-ones canvas gives all 0.5") {
    Graph g;
    const auto m = g.leaf(Tensor::full({2, 2}, 0.5));
    const auto canvas = g.leaf(Tensor::full({2, 2}, 1.0));
    const auto out = g.mul(m, canvas);
    for (double v : g.forward(out).data) CHECK(v == 0.5);
}

TEST_CASE("mix with mask 0.5, canvas ones, nontarget zeros gives 0.5") {
    Graph g;
    const auto m = g.leaf(Tensor::full({2, 2}, 0.5));
    const auto xc = g.leaf(Tensor::full({3, 2, 2}, 1.0));
    const auto xn = g.leaf(Tensor::zeros({3, 2, 2}));
    for (double v : g.forward(g.mix(m, xc, xn)).data) CHECK(v == 0.5);
}

TEST_CASE("graph CNN forward matches a straight-line serial composition") {
    // Three conv blocks and a dense head built two ways: through the graph
    // (parallel kernels) and as a hand-sequenced serial computation.
    Rng rng(21);
    const int ci = 2, h = 8, w = 8, c1 = 4, c2 = 6, k = 3, classes = 5;
    const Tensor x = random_tensor({ci, h, w}, rng);
    const Tensor w1 = random_tensor({c1, ci, k, k}, rng);
    const Tensor b1 = random_tensor({c1}, rng);
    const Tensor w2 = random_tensor({c2, c1, k, k}, rng);
    const Tensor b2 = random_tensor({c2}, rng);
    const Tensor wd = random_tensor({classes, c2 * (h / 2) * (w / 2)}, rng);
    const Tensor bd = random_tensor({classes}, rng);

    Graph g;
    const auto xi = g.leaf(x);
    auto cur = g.relu(g.conv2d(xi, g.leaf(w1), g.leaf(b1)));
    cur = g.relu(g.conv2d(cur, g.leaf(w2), g.leaf(b2)));
    cur = g.maxpool2(cur);
    cur = g.dense(cur, g.leaf(wd), g.leaf(bd));
    const Tensor& got = g.forward(cur);

    Tensor a1 = Tensor::zeros({c1, h, w});
    iscp::serial::conv2d_forward(x.ptr(), ci, h, w, w1.ptr(), c1, k, b1.ptr(), a1.ptr());
    Tensor r1 = Tensor::zeros(a1.shape);
    iscp::serial::relu_forward(a1.ptr(), a1.numel(), r1.ptr());
    Tensor a2 = Tensor::zeros({c2, h, w});
    iscp::serial::conv2d_forward(r1.ptr(), c1, h, w, w2.ptr(), c2, k, b2.ptr(), a2.ptr());
    Tensor r2 = Tensor::zeros(a2.shape);
    iscp::serial::relu_forward(a2.ptr(), a2.numel(), r2.ptr());
    Tensor pooled = Tensor::zeros({c2, h / 2, w / 2});
    std::vector<int> am(static_cast<size_t>(pooled.numel()));
    iscp::serial::maxpool2_forward(r2.ptr(), c2, h, w, pooled.ptr(), am.data());
    Tensor logits = Tensor::zeros({classes});
    iscp::serial::dense_forward(pooled.ptr(), pooled.numel(), wd.ptr(), classes, bd.ptr(),
                                logits.ptr());

    REQUIRE(got.numel() == classes);
    for (int i = 0; i < classes; ++i)
        CHECK(std::abs(got.data[i] - logits.data[i]) <= 1e-12);
}

TEST_CASE("gradient of sum(m) is all ones") {
    Graph g;
    Rng rng(22);
    const auto m = g.leaf(grad_leaf({3, 4}, rng, 0.1, 0.9));
    const auto root = g.affine(g.mean(m), 12.0, 0.0); // sum = n * mean
    const Tensor grad = g.gradient(root, m);
    for (double v : grad.data) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("gradient of the scaled L1 term is alpha/n for positive masks") {
    Graph g;
    Rng rng(23);
    const double alpha = 0.2;
    const auto m = g.leaf(grad_leaf({4, 4}, rng, 0.05, 0.95));
    const auto root = g.affine(g.l1norm(m), alpha / 16.0, 0.0);
    const Tensor grad = g.gradient(root, m);
    for (double v : grad.data) CHECK(v == doctest::Approx(alpha / 16.0).epsilon(1e-12));
}

TEST_CASE("tv penalty values") {
    CHECK(iscp::tv_penalty(Tensor::full({5, 7}, 0.3)) == 0.0);
    // [[0,1],[0,1]]: two vertical-neighbor diffs of 0, two horizontal of 1
    const Tensor m({2, 2}, {0.0, 1.0, 0.0, 1.0});
    CHECK(iscp::tv_penalty(m) == doctest::Approx(0.5).epsilon(1e-15));

    Rng rng(24);
    const Tensor r = random_tensor({8, 8}, rng, 0.0, 1.0);
    double brute = 0.0;
    for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 8; ++j) {
            if (i + 1 < 8) {
                const double d = r.data[(i + 1) * 8 + j] - r.data[i * 8 + j];
                brute += d * d;
            }
            if (j + 1 < 8) {
                const double d = r.data[i * 8 + j + 1] - r.data[i * 8 + j];
                brute += d * d;
            }
        }
    brute /= 64.0;
    CHECK(std::abs(iscp::tv_penalty(r) - brute) <= 1e-12);
}

TEST_CASE("finite differences validate every differentiable op") {
    Rng rng(25);
    // relu and l1 kinks avoided by sampling away from zero; maxpool ties
    // have measure zero under uniform draws.
    SUBCASE("add/sub/mul chain") {
        Graph g;
        const auto a = g.leaf(grad_leaf({3, 3}, rng));
        const auto b = g.leaf(grad_leaf({3, 3}, rng));
        const auto root = g.mean(g.mul(g.add(a, b), g.sub(a, b)));
        CHECK(iscp_test::fd_check(g, root, a).max_rel_err <= 1e-4);
        CHECK(iscp_test::fd_check(g, root, b).max_rel_err <= 1e-4);
    }
    SUBCASE("affine, broadcast, mix") {
        Graph g;
        const auto m = g.leaf(grad_leaf({4, 5}, rng, 0.2, 0.8));
        const auto xc = g.leaf(grad_leaf({2, 4, 5}, rng, 0.1, 0.9));
        const auto xn = g.leaf(grad_leaf({2, 4, 5}, rng, 0.1, 0.9));
        const auto mixed = g.mix(m, xc, xn);
        const auto bc = g.broadcast_channels(g.affine(m, -1.0, 1.0), 2);
        const auto root = g.mean(g.mul(mixed, bc));
        CHECK(iscp_test::fd_check(g, root, m).max_rel_err <= 1e-4);
        CHECK(iscp_test::fd_check(g, root, xc).max_rel_err <= 1e-4);
        CHECK(iscp_test::fd_check(g, root, xn).max_rel_err <= 1e-4);
    }
    SUBCASE("conv2d") {
        Graph g;
        const auto x = g.leaf(grad_leaf({2, 6, 6}, rng));
        const auto w = g.leaf(grad_leaf({3, 2, 3, 3}, rng));
        const auto b = g.leaf(grad_leaf({3}, rng));
        const auto root = g.mean(g.conv2d(x, w, b));
        CHECK(iscp_test::fd_check(g, root, x).max_rel_err <= 1e-4);
        CHECK(iscp_test::fd_check(g, root, w).max_rel_err <= 1e-4);
        CHECK(iscp_test::fd_check(g, root, b).max_rel_err <= 1e-4);
    }
    SUBCASE("dense") {
        Graph g;
        const auto x = g.leaf(grad_leaf({6}, rng));
        const auto w = g.leaf(grad_leaf({4, 6}, rng));
        const auto b = g.leaf(grad_leaf({4}, rng));
        const auto root = g.softmax_xent(g.dense(x, w, b), 2);
        CHECK(iscp_test::fd_check(g, root, x).max_rel_err <= 1e-4);
        CHECK(iscp_test::fd_check(g, root, w).max_rel_err <= 1e-4);
        CHECK(iscp_test::fd_check(g, root, b).max_rel_err <= 1e-4);
    }
    SUBCASE("relu and maxpool") {
        Graph g;
        Tensor xv = random_tensor({2, 4, 4}, rng, 0.2, 1.0);
        for (size_t i = 0; i < xv.data.size(); i += 2) xv.data[i] = -xv.data[i];
        xv.requires_grad = true;
        const auto x = g.leaf(xv);
        const auto root = g.mean(g.maxpool2(g.relu(x)));
        CHECK(iscp_test::fd_check(g, root, x, 1e-6).max_rel_err <= 1e-4);
    }
    SUBCASE("pick_logit") {
        Graph g;
        const auto x = g.leaf(grad_leaf({7}, rng));
        const auto root = g.pick_logit(x, 3);
        CHECK(iscp_test::fd_check(g, root, x).max_rel_err <= 1e-4);
    }
    SUBCASE("l1norm and tv") {
        Graph g;
        const auto m = g.leaf(grad_leaf({5, 5}, rng, 0.1, 0.9));
        const auto root = g.add(g.l1norm(m), g.tv_penalty(m));
        CHECK(iscp_test::fd_check(g, root, m).max_rel_err <= 1e-4);
    }
}

TEST_CASE("full search loss gradient matches finite differences on a 2-layer net") {
    Rng rng(26);
    const int h = 6, w = 6;
    Graph g;
    const auto m = g.leaf(grad_leaf({h, w}, rng, 0.3, 0.7));
    const auto xc = g.leaf(random_tensor({1, h, w}, rng, 0.0, 1.0));
    const auto xn = g.leaf(random_tensor({1, h, w}, rng, 0.0, 1.0));
    const auto wc = g.leaf(random_tensor({3, 1, 3, 3}, rng));
    const auto bc = g.leaf(random_tensor({3}, rng));
    const auto wd = g.leaf(random_tensor({4, 3 * h * w}, rng, -0.3, 0.3));
    const auto bd = g.leaf(random_tensor({4}, rng));
    const auto logits = g.dense(g.relu(g.conv2d(g.mix(m, xc, xn), wc, bc)), wd, bd);
    auto root = g.softmax_xent(logits, 1);
    root = g.add(root, g.affine(g.l1norm(m), 0.2 / (h * w), 0.0));
    root = g.add(root, g.affine(g.tv_penalty(m), 0.5, 0.0));
    CHECK(iscp_test::fd_check(g, root, m).max_rel_err <= 1e-4);
}

TEST_CASE("forward is deterministic and leaves can be rebound") {
    Rng rng(27);
    Graph g;
    const auto x = g.leaf(random_tensor({2, 4, 4}, rng));
    const auto w = g.leaf(random_tensor({2, 2, 3, 3}, rng));
    const auto b = g.leaf(random_tensor({2}, rng));
    const auto root = g.mean(g.conv2d(x, w, b));
    const double v1 = g.forward(root).data[0];
    const double v2 = g.forward(root).data[0];
    CHECK(v1 == v2);

    const Tensor x2 = random_tensor({2, 4, 4}, rng);
    g.set_leaf(x, x2);
    const double v3 = g.forward(root).data[0];
    CHECK(v3 != v1);
    g.set_leaf(x, x2);
    CHECK(g.forward(root).data[0] == v3);
}

TEST_CASE("no path from leaf to root yields a zero gradient") {
    Graph g;
    Rng rng(28);
    const auto used = g.leaf(grad_leaf({3}, rng));
    const auto unused = g.leaf(grad_leaf({4}, rng));
    const auto root = g.mean(used);
    const Tensor grad = g.gradient(root, unused);
    REQUIRE(grad.shape == std::vector<int>{4});
    for (double v : grad.data) CHECK(v == 0.0);
}

TEST_CASE("graph errors are structured") {
    Graph g;
    const auto a = g.leaf(Tensor::full({2, 3}, 1.0));
    const auto b = g.leaf(Tensor::full({3, 2}, 1.0));
    CHECK_THROWS_AS(g.add(a, b), iscp::ShapeError);
    CHECK_THROWS_AS(g.backward(a), iscp::ShapeError); // non-scalar root
    CHECK_THROWS_AS(g.gradient(a, 99), iscp::ShapeError); // leaf not in graph
    try {
        g.mul(a, b);
        FAIL("expected a shape error");
    } catch (const iscp::ShapeError& e) {
        CHECK(std::string(e.what()).find("node") != std::string::npos);
    }
}
