#pragma once

#include "iscp/dataset.hpp"

#include <cstdint>
#include <string>

namespace iscp {

// Procedurally generated stand-in datasets for self-contained runs: each
// class is a constellation of smooth Gaussian blobs at class-specific
// locations, drawn over a noisy background with a random ±max_shift
// translation and amplitude jitter. Class evidence is spatially spread, so
// a small CNN learns the classes well while no single pixel is predictive
// on its own.
struct SynthSpec {
    int num_classes = 10;
    int channels = 1; // 1 = mnist-like 28×28, 3 = cifar-like 32×32
    int height = 28;
    int width = 28;
    int blobs_per_class = 3;
    double noise = 0.05;
    int max_shift = 2;
    std::uint64_t class_seed = 7; // fixes the class templates
};

SynthSpec synth_mnist_like();
SynthSpec synth_cifar_like();

Dataset make_synth_dataset(const SynthSpec& spec, int n_images, std::uint64_t seed,
                           const std::string& split);

// Writers for the real on-disk formats (big-endian IDX, CIFAR-10 binary
// batches); quantize pixels to bytes.
void write_idx_files(const Dataset& d, const std::string& images_path,
                     const std::string& labels_path);
void write_cifar10_batch(const Dataset& d, const std::string& path);

} // namespace iscp
