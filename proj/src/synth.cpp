#include "iscp/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace iscp {

namespace {

struct Blob {
    double cy, cx, sigma;
    double amp[3];
};

std::vector<std::vector<Blob>> class_templates(const SynthSpec& spec) {
    Rng rng(spec.class_seed);
    std::vector<std::vector<Blob>> classes;
    const double margin = 6.0;
    for (int k = 0; k < spec.num_classes; ++k) {
        std::vector<Blob> blobs;
        for (int b = 0; b < spec.blobs_per_class; ++b) {
            Blob blob;
            blob.cy = rng.uniform(margin, spec.height - 1 - margin);
            blob.cx = rng.uniform(margin, spec.width - 1 - margin);
            // blob 0 is a compact high-amplitude signature, the rest are
            // broad low-contrast context
            if (b == 0) {
                blob.sigma = rng.uniform(1.6, 2.2);
                for (int c = 0; c < 3; ++c) blob.amp[c] = rng.uniform(0.85, 1.0);
            } else {
                blob.sigma = rng.uniform(3.0, 4.5);
                for (int c = 0; c < 3; ++c) blob.amp[c] = rng.uniform(0.4, 0.65);
            }
            if (spec.channels == 1) blob.amp[1] = blob.amp[2] = blob.amp[0];
            blobs.push_back(blob);
        }
        classes.push_back(std::move(blobs));
    }
    return classes;
}

void write_be32(std::ostream& out, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                                static_cast<unsigned char>(v >> 16),
                                static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

unsigned char to_byte(double v) {
    const int q = static_cast<int>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
    return static_cast<unsigned char>(q);
}

} // namespace

SynthSpec synth_mnist_like() { return SynthSpec{}; }

SynthSpec synth_cifar_like() {
    SynthSpec s;
    s.channels = 3;
    s.height = 32;
    s.width = 32;
    return s;
}

Dataset make_synth_dataset(const SynthSpec& spec, int n_images, std::uint64_t seed,
                           const std::string& split) {
    const auto classes = class_templates(spec);
    Rng rng(seed);
    Dataset d;
    d.num_classes = spec.num_classes;
    d.split = split;
    d.images.reserve(static_cast<size_t>(n_images));
    d.labels.reserve(static_cast<size_t>(n_images));
    const int h = spec.height, w = spec.width, c = spec.channels;
    const double base_hi = spec.channels == 1 ? 0.12 : 0.35;
    for (int i = 0; i < n_images; ++i) {
        const int label = i % spec.num_classes;
        const double gain = rng.uniform(0.75, 1.25);
        const double sy = rng.uniform_int(2 * spec.max_shift + 1) - spec.max_shift;
        const double sx = rng.uniform_int(2 * spec.max_shift + 1) - spec.max_shift;
        double base[3];
        for (int ch = 0; ch < c; ++ch) base[ch] = rng.uniform(0.02, base_hi);
        Tensor img = Tensor::zeros({c, h, w});
        for (int ch = 0; ch < c; ++ch)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    double v = base[ch] + spec.noise * rng.normal();
                    for (const Blob& blob : classes[static_cast<size_t>(label)]) {
                        const double dy = y - blob.cy - sy;
                        const double dx = x - blob.cx - sx;
                        v += gain * blob.amp[ch] *
                             std::exp(-(dy * dy + dx * dx) / (2.0 * blob.sigma * blob.sigma));
                    }
                    img.data[(ch * h + y) * w + x] = std::clamp(v, 0.0, 1.0);
                }
        d.images.push_back(std::move(img));
        d.labels.push_back(label);
    }
    return d;
}

void write_idx_files(const Dataset& d, const std::string& images_path,
                     const std::string& labels_path) {
    const int h = d.images.at(0).dim(1), w = d.images.at(0).dim(2);
    std::ofstream imgs(images_path, std::ios::binary);
    if (!imgs) throw LoadError(images_path + ": cannot open for writing");
    write_be32(imgs, 0x00000803u);
    write_be32(imgs, static_cast<std::uint32_t>(d.size()));
    write_be32(imgs, static_cast<std::uint32_t>(h));
    write_be32(imgs, static_cast<std::uint32_t>(w));
    for (const Tensor& t : d.images)
        for (int j = 0; j < h * w; ++j) {
            const unsigned char b = to_byte(t.data[static_cast<size_t>(j)]);
            imgs.write(reinterpret_cast<const char*>(&b), 1);
        }
    std::ofstream labs(labels_path, std::ios::binary);
    if (!labs) throw LoadError(labels_path + ": cannot open for writing");
    write_be32(labs, 0x00000801u);
    write_be32(labs, static_cast<std::uint32_t>(d.size()));
    for (int lab : d.labels) {
        const unsigned char b = static_cast<unsigned char>(lab);
        labs.write(reinterpret_cast<const char*>(&b), 1);
    }
}

void write_cifar10_batch(const Dataset& d, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw LoadError(path + ": cannot open for writing");
    for (int i = 0; i < d.size(); ++i) {
        const unsigned char lab = static_cast<unsigned char>(d.labels[static_cast<size_t>(i)]);
        out.write(reinterpret_cast<const char*>(&lab), 1);
        const Tensor& t = d.images[static_cast<size_t>(i)];
        for (int j = 0; j < t.numel(); ++j) {
            const unsigned char b = to_byte(t.data[static_cast<size_t>(j)]);
            out.write(reinterpret_cast<const char*>(&b), 1);
        }
    }
}

} // namespace iscp
