#pragma once

#include "iscp/rng.hpp"
#include "iscp/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace iscp {

struct LoadError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Immutable after load; images are C×H×W tensors with pixels in [0,1].
struct Dataset {
    std::vector<Tensor> images;
    std::vector<int> labels;
    int num_classes = 0;
    std::string split; // "train" or "test"

    int size() const { return static_cast<int>(images.size()); }
    std::vector<int> image_shape() const { return images.empty() ? std::vector<int>{} : images[0].shape; }
};

enum class DataFormat { kIdx, kCifar10Binary };

// IDX pair (images magic 0x00000803, labels 0x00000801).
Dataset load_mnist(const std::string& images_path, const std::string& labels_path,
                   const std::string& split = "train");

// One or more CIFAR-10 batch files (10000 records of 1 label byte + 3072
// pixel bytes each, R/G/B planes).
Dataset load_cifar10(const std::vector<std::string>& batch_paths,
                     const std::string& split = "train");

// Single-path entry point. For kIdx, `path` is the images file and the
// labels file is inferred by the standard naming convention
// (…-images-idx3-ubyte → …-labels-idx1-ubyte).
Dataset load_dataset(const std::string& path, DataFormat format,
                     const std::string& split = "train");

// The nontarget search subset D_n and its evaluation complement.
// `dn_indices` are the images driving the search: a seeded uniform sample
// of ⌊fraction·N⌋ test indices with class-y images dropped afterwards.
// `eval_indices` is everything outside D_n (all classes).
struct NontargetSubset {
    const Dataset* parent = nullptr;
    int target_class = -1;
    double fraction = 0.0;
    std::uint64_t seed = 0;
    std::vector<int> dn_indices;
    std::vector<int> eval_indices;
};

NontargetSubset select_nontarget_subset(const Dataset& d, int target_class, double fraction,
                                        std::uint64_t seed);

enum class Augment { kShift, kCropPad4, kHorizontalFlip };

// Deterministic single-image transforms.
Tensor flip_horizontal(const Tensor& image);
Tensor shift_pad_crop(const Tensor& image, int dy, int dx, int pad = 4);

// Random policy application: shift / crop-with-4px-pad draw an offset in
// [0, 2·pad], horizontal flip fires with probability 1/2.
Tensor augment_image(const Tensor& image, const std::vector<Augment>& policy, Rng& rng);

std::vector<Augment> parse_augment_policy(const std::vector<std::string>& names);

} // namespace iscp
