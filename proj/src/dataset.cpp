#include "iscp/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

namespace iscp {

namespace {

std::uint32_t read_be32(std::istream& in, const std::string& path, long offset) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in)
        throw LoadError(path + ": truncated at byte offset " + std::to_string(offset));
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
           (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

std::vector<unsigned char> read_exact(std::istream& in, size_t n, const std::string& path,
                                      long offset) {
    std::vector<unsigned char> buf(n);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n));
    if (static_cast<size_t>(in.gcount()) != n)
        throw LoadError(path + ": truncated at byte offset " +
                        std::to_string(offset + in.gcount()));
    return buf;
}

std::ifstream open_binary(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError(path + ": cannot open");
    return in;
}

} // namespace

Dataset load_mnist(const std::string& images_path, const std::string& labels_path,
                   const std::string& split) {
    std::ifstream imgs = open_binary(images_path);
    const std::uint32_t img_magic = read_be32(imgs, images_path, 0);
    if (img_magic != 0x00000803u)
        throw LoadError(images_path + ": bad magic at byte offset 0 (expected 0x00000803)");
    const int n = static_cast<int>(read_be32(imgs, images_path, 4));
    const int h = static_cast<int>(read_be32(imgs, images_path, 8));
    const int w = static_cast<int>(read_be32(imgs, images_path, 12));

    std::ifstream labs = open_binary(labels_path);
    const std::uint32_t lab_magic = read_be32(labs, labels_path, 0);
    if (lab_magic != 0x00000801u)
        throw LoadError(labels_path + ": bad magic at byte offset 0 (expected 0x00000801)");
    const int nl = static_cast<int>(read_be32(labs, labels_path, 4));
    if (nl != n)
        throw LoadError(labels_path + ": " + std::to_string(nl) + " labels for " +
                        std::to_string(n) + " images");

    Dataset d;
    d.num_classes = 10;
    d.split = split;
    d.images.reserve(static_cast<size_t>(n));
    d.labels.reserve(static_cast<size_t>(n));
    const auto pixels = read_exact(imgs, static_cast<size_t>(n) * h * w, images_path, 16);
    const auto labels = read_exact(labs, static_cast<size_t>(n), labels_path, 8);
    for (int i = 0; i < n; ++i) {
        Tensor t = Tensor::zeros({1, h, w});
        const unsigned char* src = pixels.data() + static_cast<size_t>(i) * h * w;
        for (int j = 0; j < h * w; ++j) t.data[static_cast<size_t>(j)] = src[j] / 255.0;
        const int lab = labels[static_cast<size_t>(i)];
        if (lab >= d.num_classes)
            throw LoadError(labels_path + ": label " + std::to_string(lab) + " >= 10 at byte offset " +
                            std::to_string(8 + i));
        d.images.push_back(std::move(t));
        d.labels.push_back(lab);
    }
    return d;
}

Dataset load_cifar10(const std::vector<std::string>& batch_paths, const std::string& split) {
    constexpr int kRecord = 1 + 3 * 32 * 32;
    Dataset d;
    d.num_classes = 10;
    d.split = split;
    for (const std::string& path : batch_paths) {
        std::ifstream in = open_binary(path);
        in.seekg(0, std::ios::end);
        const long bytes = static_cast<long>(in.tellg());
        in.seekg(0);
        if (bytes % kRecord != 0)
            throw LoadError(path + ": size " + std::to_string(bytes) +
                            " is not a multiple of the " + std::to_string(kRecord) +
                            "-byte record (truncated at byte offset " +
                            std::to_string(bytes - bytes % kRecord) + ")");
        const int n = static_cast<int>(bytes / kRecord);
        for (int i = 0; i < n; ++i) {
            const auto rec = read_exact(in, kRecord, path, static_cast<long>(i) * kRecord);
            const int lab = rec[0];
            if (lab >= d.num_classes)
                throw LoadError(path + ": label " + std::to_string(lab) +
                                " >= 10 at byte offset " + std::to_string(static_cast<long>(i) * kRecord));
            Tensor t = Tensor::zeros({3, 32, 32});
            for (int j = 0; j < 3 * 32 * 32; ++j)
                t.data[static_cast<size_t>(j)] = rec[static_cast<size_t>(1 + j)] / 255.0;
            d.images.push_back(std::move(t));
            d.labels.push_back(lab);
        }
    }
    if (d.images.empty()) throw LoadError("cifar10: no records loaded");
    return d;
}

Dataset load_dataset(const std::string& path, DataFormat format, const std::string& split) {
    if (format == DataFormat::kCifar10Binary) return load_cifar10({path}, split);
    std::string labels = path;
    const auto pos = labels.find("images");
    if (pos == std::string::npos)
        throw LoadError(path + ": cannot infer labels file (no \"images\" in name); "
                               "use load_mnist with explicit paths");
    labels.replace(pos, 6, "labels");
    const auto idx = labels.find("idx3");
    if (idx != std::string::npos) labels.replace(idx, 4, "idx1");
    return load_mnist(path, labels, split);
}

NontargetSubset select_nontarget_subset(const Dataset& d, int target_class, double fraction,
                                        std::uint64_t seed) {
    if (fraction <= 0.0 || fraction > 1.0)
        throw std::invalid_argument("select_nontarget_subset: fraction must be in (0,1]");
    const int n = d.size();
    const int take = static_cast<int>(fraction * n);
    Rng rng(seed);
    std::vector<int> sampled = rng.sample_without_replacement(n, take);
    std::sort(sampled.begin(), sampled.end());

    NontargetSubset s;
    s.parent = &d;
    s.target_class = target_class;
    s.fraction = fraction;
    s.seed = seed;
    std::vector<char> in_dn(static_cast<size_t>(n), 0);
    for (int i : sampled) {
        if (d.labels[static_cast<size_t>(i)] == target_class) continue;
        s.dn_indices.push_back(i);
        in_dn[static_cast<size_t>(i)] = 1;
    }
    if (s.dn_indices.empty())
        throw std::invalid_argument("select_nontarget_subset: empty nontarget subset");
    for (int i = 0; i < n; ++i)
        if (!in_dn[static_cast<size_t>(i)]) s.eval_indices.push_back(i);
    return s;
}

Tensor flip_horizontal(const Tensor& image) {
    const int c = image.dim(0), h = image.dim(1), w = image.dim(2);
    Tensor out = Tensor::zeros(image.shape);
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                out.data[(ch * h + y) * w + x] = image.data[(ch * h + y) * w + (w - 1 - x)];
    return out;
}

Tensor shift_pad_crop(const Tensor& image, int dy, int dx, int pad) {
    const int c = image.dim(0), h = image.dim(1), w = image.dim(2);
    if (dy < 0 || dy > 2 * pad || dx < 0 || dx > 2 * pad)
        throw std::invalid_argument("shift_pad_crop: offset outside [0, 2*pad]");
    Tensor out = Tensor::zeros(image.shape);
    // Crop the padded image at (dy, dx): output (y,x) reads input
    // (y + dy - pad, x + dx - pad), zeros outside.
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y) {
            const int iy = y + dy - pad;
            if (iy < 0 || iy >= h) continue;
            for (int x = 0; x < w; ++x) {
                const int ix = x + dx - pad;
                if (ix < 0 || ix >= w) continue;
                out.data[(ch * h + y) * w + x] = image.data[(ch * h + iy) * w + ix];
            }
        }
    return out;
}

Tensor augment_image(const Tensor& image, const std::vector<Augment>& policy, Rng& rng) {
    Tensor out = image;
    for (Augment a : policy) {
        switch (a) {
            case Augment::kShift:
            case Augment::kCropPad4: {
                const int dy = rng.uniform_int(9);
                const int dx = rng.uniform_int(9);
                out = shift_pad_crop(out, dy, dx, 4);
                break;
            }
            case Augment::kHorizontalFlip:
                if (rng.uniform_int(2)) out = flip_horizontal(out);
                break;
        }
    }
    return out;
}

std::vector<Augment> parse_augment_policy(const std::vector<std::string>& names) {
    std::vector<Augment> policy;
    for (const std::string& s : names) {
        if (s == "shift")
            policy.push_back(Augment::kShift);
        else if (s == "crop_pad4" || s == "crop-with-4px-pad")
            policy.push_back(Augment::kCropPad4);
        else if (s == "hflip" || s == "horizontal-flip")
            policy.push_back(Augment::kHorizontalFlip);
        else
            throw std::invalid_argument("unknown augmentation: " + s);
    }
    return policy;
}

} // namespace iscp
