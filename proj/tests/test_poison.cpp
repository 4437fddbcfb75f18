#include "iscp/poison.hpp"
#include "iscp/synth.hpp"

#include <doctest.h>

#include <set>

using iscp::Dataset;
using iscp::Tensor;
using iscp::TriggerSpec;

TEST_CASE("inject_trigger replaces exactly the patch region") {
    SUBCASE("3x3 white patch on a black image") {
        const Tensor black = Tensor::zeros({1, 28, 28});
        const TriggerSpec spec = iscp::make_white_square_trigger({1, 28, 28}, 3, 0, 0.05);
        const Tensor out = iscp::inject_trigger(black, spec);
        int whites = 0;
        for (double v : out.data) whites += v == 1.0;
        CHECK(whites == 9);
        CHECK(out.at({0, 24, 24}) == 1.0);
        CHECK(out.at({0, 26, 26}) == 1.0);
        CHECK(out.at({0, 23, 24}) == 0.0);
    }
    SUBCASE("pixel-level equality against a double-loop oracle") {
        const Dataset d = iscp::make_synth_dataset(iscp::synth_cifar_like(), 3, 4, "train");
        TriggerSpec spec = iscp::make_white_square_trigger({3, 32, 32}, 4, 1, 0.1);
        spec.row = 5;
        spec.col = 9;
        const Tensor out = iscp::inject_trigger(d.images[0], spec);
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < 32; ++y)
                for (int x = 0; x < 32; ++x) {
                    const bool inside = y >= 5 && y < 9 && x >= 9 && x < 13;
                    const double want = inside ? 1.0 : d.images[0].at({c, y, x});
                    REQUIRE(out.at({c, y, x}) == want);
                }
    }
    SUBCASE("out-of-bounds placement fails") {
        TriggerSpec spec = iscp::make_white_square_trigger({1, 28, 28}, 3, 0, 0.05);
        spec.row = 27;
        CHECK_THROWS_AS(iscp::inject_trigger(Tensor::zeros({1, 28, 28}), spec),
                        iscp::ShapeError);
    }
}

TEST_CASE("poison_dataset selection and manifest") {
    const Dataset d = iscp::make_synth_dataset(iscp::synth_mnist_like(), 200, 5, "train");
    const TriggerSpec spec = iscp::make_white_square_trigger({1, 28, 28}, 3, 0, 0.05);

    const iscp::PoisonResult r = iscp::poison_dataset(d, spec, 11);
    CHECK(static_cast<int>(r.manifest.size()) == 10); // ceil(0.05 * 200)
    std::set<int> poisoned(r.manifest.begin(), r.manifest.end());
    CHECK(poisoned.size() == r.manifest.size());

    for (int i = 0; i < d.size(); ++i) {
        if (poisoned.count(i)) {
            CHECK(d.labels[static_cast<size_t>(i)] != 0); // drawn from non-target classes
            CHECK(r.poisoned.labels[static_cast<size_t>(i)] == 0);
            // differs from the original only inside the patch
            const Tensor& a = d.images[static_cast<size_t>(i)];
            const Tensor& b = r.poisoned.images[static_cast<size_t>(i)];
            for (int y = 0; y < 28; ++y)
                for (int x = 0; x < 28; ++x) {
                    const bool inside = y >= spec.row && y < spec.row + 3 && x >= spec.col &&
                                        x < spec.col + 3;
                    if (inside)
                        REQUIRE(b.at({0, y, x}) == 1.0);
                    else
                        REQUIRE(b.at({0, y, x}) == a.at({0, y, x}));
                }
        } else {
            // bit-identical to the original
            REQUIRE(r.poisoned.images[static_cast<size_t>(i)].data ==
                    d.images[static_cast<size_t>(i)].data);
            REQUIRE(r.poisoned.labels[static_cast<size_t>(i)] ==
                    d.labels[static_cast<size_t>(i)]);
        }
    }

    SUBCASE("deterministic per seed") {
        const auto r2 = iscp::poison_dataset(d, spec, 11);
        CHECK(r2.manifest == r.manifest);
    }
    SUBCASE("rate selecting a single image") {
        TriggerSpec tiny = spec;
        tiny.poison_rate = 0.004; // ceil(0.8) = 1
        CHECK(iscp::poison_dataset(d, tiny, 1).manifest.size() == 1);
    }
    SUBCASE("invalid rates fail") {
        TriggerSpec bad = spec;
        bad.poison_rate = 0.0;
        CHECK_THROWS_AS(iscp::poison_dataset(d, bad, 1), std::invalid_argument);
    }
}

TEST_CASE("trigger spec json round trip") {
    TriggerSpec spec = iscp::make_white_square_trigger({3, 32, 32}, 3, 7, 0.05);
    const TriggerSpec back = TriggerSpec::from_json(spec.to_json());
    CHECK(back.patch.shape == spec.patch.shape);
    CHECK(back.patch.data == spec.patch.data);
    CHECK(back.row == spec.row);
    CHECK(back.col == spec.col);
    CHECK(back.target_class == 7);
    CHECK(back.poison_rate == 0.05);
}
