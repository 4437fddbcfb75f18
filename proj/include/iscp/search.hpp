#pragma once

#include "iscp/dataset.hpp"
#include "iscp/model.hpp"

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

namespace iscp {

struct SearchConfig {
    double alpha = 0.2;      // L1 weight (sensible range ~[0.1, 0.3])
    double beta = 0.0;       // TV weight; 0 disables the TV term
    int epochs = 5;          // T
    int batch = 4;           // B
    double eta = 0.02;       // mask sign-step
    int canvases = 5;        // N
    double target_fraction = 0.05; // k: pattern size as a share of pixels
    double dn_fraction = 0.2;      // share of the test set sampled into D_n
    double canvas_step = 2.0 / 255.0; // learned-canvas sign-step
    std::uint64_t seed = 1;

    void validate() const;
};

enum class CanvasStrategy { kPositive, kNegative, kRandom, kWhite };

std::string to_string(CanvasStrategy s);
CanvasStrategy canvas_strategy_from_string(const std::string& s);

struct Canvas {
    Tensor image;
    int source_index = -1; // -1 for synthetic (white)
    double score = 0.0;    // target-class logit used for ranking (pos/neg)
};

struct CanvasSet {
    CanvasStrategy strategy;
    std::vector<Canvas> canvases;
};

// positive: top-N by target-class logit among correctly classified class-y
// images; negative: top-N among images of other classes misclassified as
// y; random: seeded uniform draw; white: an all-ones canvas replicated.
CanvasSet sample_canvases(const Model& m, const Dataset& d, int target_class,
                          CanvasStrategy strategy, int n, std::uint64_t seed = 0);

// x̃ = m·x_c + (1−m)·x_n with the H×W mask broadcast over channels.
Tensor mix(const Tensor& mask, const Tensor& canvas, const Tensor& nontarget);

// Σ_batch[−log f_y(x̃)] + α·(1/n)·‖m‖₁ (+ β·(1/n)·‖∇m‖₂² when β>0); the
// regularizers enter once per batch. Non-differentiating convenience
// wrapper over the same graph the search uses.
double search_loss(const Model& m, const Tensor& mask, const Tensor& canvas,
                   const std::vector<Tensor>& batch, int target_class, double alpha,
                   double beta);

struct SearchResult {
    Tensor mask;                        // H×W, in [0,1]
    std::vector<double> epoch_mean_loss; // per-image mean, one entry per epoch
    Tensor learned_canvas;              // only set by the learned-canvas variant
};

// Called after every optimizer step with the freshly clipped mask.
using StepObserver = std::function<void(const Tensor& mask, int epoch, long step)>;

// Algorithm core: mask starts at 0.5 everywhere; for `epochs` passes over a
// seeded shuffle of D_n in batches of `batch`, m ← clip01(m − η·sign(∂L/∂m)).
// Model weights are read-only throughout.
SearchResult iscp_search(const Model& m, const Tensor& canvas, const Dataset& d,
                         const NontargetSubset& dn, int target_class,
                         const SearchConfig& cfg, const StepObserver& observer = {});

// Eq. 4 variant: canvas is a second optimization leaf. Steps alternate in
// runs of five (five mask steps, then five canvas steps at `canvas_step`,
// clipped to [0,1]); with canvas_step == 0 every step goes to the mask and
// the routine reduces exactly to iscp_search.
SearchResult iscp_search_learned_canvas(const Model& m, const Tensor& initial_canvas,
                                        const Dataset& d, const NontargetSubset& dn,
                                        int target_class, const SearchConfig& cfg,
                                        const StepObserver& observer = {});

struct GammaClip {
    Tensor binary; // H×W of {0,1}, exactly ⌈k·n⌉ ones
    double gamma;  // the ⌈k·n⌉-th largest mask value
};

// Ties at γ are broken by raster order, earliest first.
GammaClip gamma_clip(const Tensor& mask, double target_fraction);

struct Pattern {
    Tensor pixels;      // C×H×W, zero off the mask support
    Tensor binary_mask; // H×W of {0,1}
    int target_class = -1;
    std::string strategy;
    std::string canvas_provenance;
    double alpha = 0.0, beta = 0.0;
    double size_fraction = 0.0;
    double gamma = 0.0;
    double final_loss = std::numeric_limits<double>::quiet_NaN();
    std::uint64_t seed = 0;
    std::vector<double> candidate_losses; // final loss of every canvas tried

    std::string to_json() const;
    static Pattern from_json(const std::string& text);
};

Pattern extract_pattern(const GammaClip& clip, const Tensor& canvas, int target_class);

// N-canvas search without committing to a pattern size: runs iscp_search on
// each sampled canvas and keeps the mask with the lowest final mean loss.
// γ-clipping at any size can then reuse the same optimized mask.
struct ClassSearchOutcome {
    SearchResult best;
    Canvas best_canvas;
    std::string best_provenance;
    std::vector<double> losses; // final mean loss per canvas
    CanvasStrategy strategy;
};

ClassSearchOutcome search_class_mask(const Model& m, const Dataset& d,
                                     const NontargetSubset& dn, int target_class,
                                     CanvasStrategy strategy, const SearchConfig& cfg);

Pattern make_pattern(const ClassSearchOutcome& outcome, int target_class,
                     double target_fraction, const SearchConfig& cfg);

// Runs iscp_search on each of the N sampled canvases and keeps the pattern
// from the canvas with the lowest final mean loss.
Pattern search_class_pattern(const Model& m, const Dataset& d, const NontargetSubset& dn,
                             int target_class, CanvasStrategy strategy,
                             const SearchConfig& cfg);

struct LearnedCanvasPattern {
    Pattern pattern;
    Tensor learned_canvas;
};

LearnedCanvasPattern search_learned_canvas(const Model& m, const Tensor& initial_canvas,
                                           const Dataset& d, const NontargetSubset& dn,
                                           int target_class, const SearchConfig& cfg);

} // namespace iscp
