#pragma once

#include "iscp/dataset.hpp"
#include "iscp/model.hpp"
#include "iscp/search.hpp"

#include <cstdint>
#include <vector>

namespace iscp {

struct UapConfig {
    double eps = 8.0 / 255.0; // L∞ bound in pixel units
    double step = 0.0;        // 0 → eps/4
    int passes = 10;          // full passes over the crafting set
    int batch = 32;
    int target_class = 0;
    bool exclude_target = true; // drop class-y images from the crafting set
    std::uint64_t seed = 1;

    double effective_step() const { return step > 0.0 ? step : eps / 4.0; }
};

// One shared perturbation δ, ‖δ‖∞ ≤ eps, crafted by batched targeted
// sign-gradient descent; applied as clip01(x + δ).
Tensor targeted_uap(const Model& m, const Dataset& crafting, const UapConfig& cfg);

Tensor apply_uap(const Tensor& image, const Tensor& uap);

// Fraction of nontarget images in `indices` driven to the target class.
double uap_success_rate(const Model& m, const Dataset& d, const std::vector<int>& indices,
                        const Tensor& uap, int target_class);

// Gradient-weighted class activation map at the last conv layer: channel
// weights are spatial means of ∂logit_y/∂activation, the weighted sum is
// relu'd, bilinearly upsampled to the input size and min-max normalized
// (an all-zero map stays all-zero).
Tensor gradcam(const Model& m, const Tensor& image, int target_class);

Tensor bilinear_upsample(const Tensor& map, int out_h, int out_w);

// Top-⌈k·n⌉ attention pixels of the canvas (gamma_clip tie-breaking) as a
// pattern, for the same predictive-power machinery as ISCP patterns.
Pattern attention_pattern(const Model& m, const Tensor& canvas, int target_class,
                          double target_fraction);

} // namespace iscp
