// Generates the synthetic stand-in datasets on disk in the real formats:
// IDX image/label pairs for the mnist-like variant, CIFAR-10 binary batches
// for the cifar-like one.
//
//   make_synth_data --kind mnist-like --dir data/synth --train 4000 --test 2000 --seed 1

#include "iscp/synth.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <string>

int main(int argc, char** argv) {
    CLI::App app{"synthetic dataset generator"};
    std::string kind = "mnist-like";
    std::string dir = "data/synth";
    int train = 4000, test = 2000;
    std::uint64_t seed = 1;
    app.add_option("--kind", kind, "mnist-like | cifar-like")
        ->check(CLI::IsMember({"mnist-like", "cifar-like"}));
    app.add_option("--dir", dir, "output directory");
    app.add_option("--train", train, "training images");
    app.add_option("--test", test, "test images");
    app.add_option("--seed", seed, "generator seed");
    CLI11_PARSE(app, argc, argv);

    std::filesystem::create_directories(dir);
    const iscp::SynthSpec spec =
        kind == "mnist-like" ? iscp::synth_mnist_like() : iscp::synth_cifar_like();
    const iscp::Dataset train_set = iscp::make_synth_dataset(spec, train, seed, "train");
    const iscp::Dataset test_set = iscp::make_synth_dataset(spec, test, seed + 1, "test");

    if (kind == "mnist-like") {
        iscp::write_idx_files(train_set, dir + "/train-images-idx3-ubyte",
                              dir + "/train-labels-idx1-ubyte");
        iscp::write_idx_files(test_set, dir + "/t10k-images-idx3-ubyte",
                              dir + "/t10k-labels-idx1-ubyte");
    } else {
        iscp::write_cifar10_batch(train_set, dir + "/data_batch_1.bin");
        iscp::write_cifar10_batch(test_set, dir + "/test_batch.bin");
    }
    std::printf("wrote %d train / %d test %s images to %s\n", train, test, kind.c_str(),
                dir.c_str());
    return 0;
}
