#include "iscp/model.hpp"
#include "iscp/synth.hpp"
#include "iscp/train.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>

using iscp::Dataset;
using iscp::Model;
using iscp::Tensor;

TEST_CASE("parameter count matches the closed-form hand count") {
    const Model m = iscp::build_small_cnn({3, 32, 32}, 10, 1);
    // conv stacks: 32@3ch, 32@32ch, 64@32ch, 64@64ch, then dense 4096->256->10
    const int expected = (32 * 3 * 3 * 3 + 32) + (32 * 32 * 3 * 3 + 32) +
                         (64 * 32 * 3 * 3 + 64) + (64 * 64 * 3 * 3 + 64) +
                         (256 * 64 * 8 * 8 + 256) + (10 * 256 + 10);
    CHECK(iscp::parameter_count(m) == expected);

    const Model mm = iscp::build_small_cnn({1, 28, 28}, 10, 1);
    const int expected_mnist = (32 * 1 * 3 * 3 + 32) + (32 * 32 * 3 * 3 + 32) +
                               (64 * 32 * 3 * 3 + 64) + (64 * 64 * 3 * 3 + 64) +
                               (256 * 64 * 7 * 7 + 256) + (10 * 256 + 10);
    CHECK(iscp::parameter_count(mm) == expected_mnist);

    CHECK_THROWS_AS(iscp::build_small_cnn({1, 20, 20}, 10, 1), iscp::ShapeError);
}

TEST_CASE("zeroed weights give a uniform softmax") {
    Model m = iscp::build_small_cnn({1, 28, 28}, 10, 1);
    for (Tensor& p : m.params) std::fill(p.data.begin(), p.data.end(), 0.0);
    iscp::Evaluator ev(m);
    const auto probs = ev.probabilities(Tensor::full({1, 28, 28}, 0.3));
    double sum = 0.0;
    for (double p : probs) {
        CHECK(p == doctest::Approx(0.1).epsilon(1e-12));
        sum += p;
    }
    CHECK(std::abs(sum - 1.0) <= 1e-9);
}

TEST_CASE("initialization is deterministic per seed") {
    const Model a = iscp::build_small_cnn({1, 28, 28}, 10, 77);
    const Model b = iscp::build_small_cnn({1, 28, 28}, 10, 77);
    const Model c = iscp::build_small_cnn({1, 28, 28}, 10, 78);
    for (size_t i = 0; i < a.params.size(); ++i) REQUIRE(a.params[i].data == b.params[i].data);
    CHECK(a.params[0].data != c.params[0].data);
}

TEST_CASE("checkpoint round trip is bit exact") {
    const auto dir = std::filesystem::temp_directory_path() / "iscp_classifier_tests";
    std::filesystem::create_directories(dir);
    const std::string path = (dir / "model.ckpt").string();
    const Model m = iscp::build_small_cnn({3, 32, 32}, 10, 5);
    iscp::save_checkpoint(path, m, 17, 0.8125);
    const iscp::Checkpoint ck = iscp::load_checkpoint(path);
    CHECK(ck.epoch == 17);
    CHECK(ck.test_accuracy == 0.8125);
    REQUIRE(ck.model.params.size() == m.params.size());
    for (size_t i = 0; i < m.params.size(); ++i) {
        REQUIRE(ck.model.params[i].shape == m.params[i].shape);
        REQUIRE(ck.model.params[i].data == m.params[i].data);
    }
    CHECK(ck.model.input_shape == m.input_shape);
    CHECK_THROWS_AS(iscp::load_checkpoint((dir / "missing.ckpt").string()), iscp::LoadError);
}

TEST_CASE("evaluate_accuracy matches a brute-force loop and handles filters") {
    const Dataset d = iscp::make_synth_dataset(iscp::synth_mnist_like(), 40, 3, "test");
    Model m = iscp::build_small_cnn({1, 28, 28}, 10, 2);
    const double acc = iscp::evaluate_accuracy(m, d);
    iscp::Evaluator ev(m);
    int correct = 0;
    for (int i = 0; i < d.size(); ++i)
        if (ev.predict(d.images[static_cast<size_t>(i)]) == d.labels[static_cast<size_t>(i)])
            ++correct;
    CHECK(acc == doctest::Approx(correct / 40.0).epsilon(1e-12));

    // constant-class model: zero weights -> argmax 0 -> perfect on class 0
    for (Tensor& p : m.params) std::fill(p.data.begin(), p.data.end(), 0.0);
    CHECK(iscp::evaluate_accuracy(m, d, 0) == 1.0);
    CHECK_THROWS_AS(iscp::evaluate_accuracy(m, d, 3, {0}), std::invalid_argument);
}

TEST_CASE("train mechanics: epoch 0, checkpoint selection, reproducibility") {
    const Dataset d = iscp::make_synth_dataset(iscp::synth_mnist_like(), 16, 4, "train");
    SUBCASE("zero epochs returns only the initial checkpoint") {
        Model m = iscp::build_small_cnn({1, 28, 28}, 10, 3);
        iscp::TrainConfig cfg;
        cfg.epochs = 0;
        const auto cks = iscp::train(m, d, nullptr, cfg);
        REQUIRE(cks.size() == 1);
        CHECK(cks[0].epoch == 0);
    }
    SUBCASE("checkpoint epochs beyond the run are accepted") {
        Model m = iscp::build_small_cnn({1, 28, 28}, 10, 3);
        iscp::TrainConfig cfg;
        cfg.epochs = 5;
        cfg.batch = 8;
        cfg.checkpoint_epochs = {3, 5, 10, 50, 100};
        const auto cks = iscp::train(m, d, nullptr, cfg);
        REQUIRE(cks.size() == 2);
        CHECK(cks[0].epoch == 3);
        CHECK(cks[1].epoch == 5);
    }
    SUBCASE("fixed seed reproduces identical weights") {
        Model m1 = iscp::build_small_cnn({1, 28, 28}, 10, 3);
        Model m2 = iscp::build_small_cnn({1, 28, 28}, 10, 3);
        iscp::TrainConfig cfg;
        cfg.epochs = 2;
        cfg.batch = 8;
        cfg.seed = 99;
        cfg.augment = iscp::parse_augment_policy({"shift"});
        iscp::train(m1, d, nullptr, cfg);
        iscp::train(m2, d, nullptr, cfg);
        for (size_t i = 0; i < m1.params.size(); ++i)
            REQUIRE(m1.params[i].data == m2.params[i].data);
    }
}

TEST_CASE("single-batch overfit reaches train accuracy 1.0") {
    const Dataset d = iscp::make_synth_dataset(iscp::synth_mnist_like(), 64, 9, "train");
    Model m = iscp::build_small_cnn({1, 28, 28}, 10, 7);
    iscp::TrainConfig cfg;
    cfg.batch = 64;
    cfg.lr = 0.05;
    cfg.lr_decay = false;
    cfg.seed = 1;
    bool perfect = false;
    int epochs_used = 0;
    for (int round = 0; round < 20 && !perfect; ++round) { // 20 × 10 = 200 epochs cap
        cfg.epochs = 10;
        cfg.seed = static_cast<std::uint64_t>(round + 1);
        iscp::train(m, d, nullptr, cfg);
        epochs_used += 10;
        perfect = iscp::evaluate_accuracy(m, d) == 1.0;
    }
    INFO("epochs used: " << epochs_used);
    CHECK(perfect);
}

TEST_CASE("pgd attack contracts") {
    const Dataset d = iscp::make_synth_dataset(iscp::synth_mnist_like(), 8, 6, "test");
    const Model m = iscp::build_small_cnn({1, 28, 28}, 10, 12);
    const Tensor& x = d.images[0];
    const int y = d.labels[0];

    SUBCASE("eps 0 is the identity") {
        const Tensor out = iscp::pgd_attack(m, x, y, 0.0, 0.1, 5);
        CHECK(out.data == x.data);
    }
    SUBCASE("one saturated step lands on clip(x + eps*sign(grad))") {
        const double eps = 0.1;
        const Tensor out = iscp::pgd_attack(m, x, y, eps, 0.5, 1);
        iscp::ForwardGraph fg = iscp::build_forward(m, false, true, true);
        fg.g.set_leaf(fg.input, x);
        fg.g.set_label(fg.xent, y);
        fg.g.forward(fg.xent);
        fg.g.backward(fg.xent);
        const Tensor& g = fg.g.grad(fg.input);
        for (int i = 0; i < x.numel(); ++i) {
            const double s = g.data[i] > 0.0 ? 1.0 : (g.data[i] < 0.0 ? -1.0 : 0.0);
            const double want = std::clamp(x.data[i] + eps * s, 0.0, 1.0);
            REQUIRE(out.data[i] == doctest::Approx(want).epsilon(1e-12));
        }
    }
    SUBCASE("iterates stay inside the eps ball and the unit box") {
        const double eps = 0.03;
        for (int i = 0; i < 4; ++i) {
            const Tensor out =
                iscp::pgd_attack(m, d.images[static_cast<size_t>(i)],
                                 d.labels[static_cast<size_t>(i)], eps, 0.01, 7);
            for (int q = 0; q < out.numel(); ++q) {
                CHECK(std::abs(out.data[q] - d.images[static_cast<size_t>(i)].data[q]) <=
                      eps + 1e-12);
                CHECK(out.data[q] >= 0.0);
                CHECK(out.data[q] <= 1.0);
            }
        }
    }
}

TEST_CASE("divergent training reports epoch and batch") {
    const Dataset d = iscp::make_synth_dataset(iscp::synth_mnist_like(), 16, 2, "train");
    Model m = iscp::build_small_cnn({1, 28, 28}, 10, 1);
    iscp::TrainConfig cfg;
    cfg.epochs = 50;
    cfg.batch = 8;
    cfg.lr = 1e14; // drives the loss to NaN within a few steps
    cfg.lr_decay = false;
    CHECK_THROWS_AS(iscp::train(m, d, nullptr, cfg), iscp::TrainingDiverged);
}
