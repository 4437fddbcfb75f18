#pragma once

#include "iscp/dataset.hpp"
#include "iscp/model.hpp"

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <vector>

namespace iscp {

struct TrainingDiverged : std::runtime_error {
    int epoch;
    int batch;
    TrainingDiverged(int e, int b)
        : std::runtime_error("training diverged (loss is not finite) at epoch " +
                             std::to_string(e) + ", batch " + std::to_string(b)),
          epoch(e), batch(b) {}
};

struct TrainConfig {
    int epochs = 10;
    int batch = 64;
    double lr = 0.01;
    double momentum = 0.9;
    bool lr_decay = true; // ×0.1 past 50% of epochs, ×0.01 past 75%
    std::vector<Augment> augment;
    std::vector<int> checkpoint_epochs; // the final epoch is always included
    std::uint64_t seed = 1;

    // PGD inner maximization for adversarial_train; adv_steps = 0 reduces
    // to natural training.
    double adv_eps = 8.0 / 255.0;
    double adv_step = 2.0 / 255.0;
    int adv_steps = 7;

    std::ostream* log = nullptr; // CSV rows: epoch,train_loss,test_acc
};

// SGD with momentum over the softmax cross-entropy. Returns checkpoints at
// the requested epochs plus the final state; with epochs == 0, only the
// initial state. Test accuracy is evaluated at checkpointed epochs when a
// test set is given.
std::vector<Checkpoint> train(Model& m, const Dataset& train_set, const Dataset* test_set,
                              const TrainConfig& cfg);

// Madry-style adversarial training: each minibatch is replaced by PGD
// examples crafted against the current weights.
std::vector<Checkpoint> adversarial_train(Model& m, const Dataset& train_set,
                                          const Dataset* test_set, const TrainConfig& cfg);

// L∞ PGD. Untargeted ascends the true-label loss; targeted descends the
// target-class loss. No random start, so the attack is deterministic.
// Output stays within eps of `image` and inside [0,1].
Tensor pgd_attack(const Model& m, const Tensor& image, int label, double eps, double step,
                  int iters, bool targeted = false, int target_class = -1);

// Accuracy under an untargeted PGD attack (the robust-accuracy metric).
double robust_accuracy(const Model& m, const Dataset& d, double eps, double step, int iters,
                       const std::vector<int>& indices = {});

} // namespace iscp
