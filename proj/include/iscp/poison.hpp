#pragma once

#include "iscp/dataset.hpp"
#include "iscp/model.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace iscp {

// BadNets trigger: a fixed pixel patch stamped at `row`,`col`; poisoned
// samples are relabelled to `target_class`.
struct TriggerSpec {
    Tensor patch; // c×h×w
    int row = 0;
    int col = 0;
    int target_class = 0;
    double poison_rate = 0.05;

    std::string to_json() const;
    static TriggerSpec from_json(const std::string& text);
};

// h×w all-white square at (H-1-size-offset). The default 3×3 patch at
// (H-4, W-4) sits fully inside the image with a 1-pixel border.
TriggerSpec make_white_square_trigger(const std::vector<int>& image_shape, int size,
                                      int target_class, double poison_rate);

Tensor inject_trigger(const Tensor& image, const TriggerSpec& spec);

struct PoisonResult {
    Dataset poisoned;
    std::vector<int> manifest; // poisoned indices, ascending
};

// Stamps the trigger on ⌈rate·N⌉ images drawn (seeded, without
// replacement) from the non-target classes and relabels them. All other
// images are bit-identical to the input.
PoisonResult poison_dataset(const Dataset& train_set, const TriggerSpec& spec,
                            std::uint64_t seed);

// Fraction of nontarget images classified as the trigger's target class
// after stamping.
double attack_success_rate(const Model& m, const Dataset& d, const TriggerSpec& spec,
                           const std::vector<int>& indices = {});

} // namespace iscp
