#pragma once

#include "iscp/search.hpp"
#include "iscp/train.hpp"

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace iscp {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DatasetConfig {
    std::string name = "synth-mnist"; // mnist | cifar10 | synth-mnist | synth-cifar
    std::string dir;
    std::string train_images, train_labels, test_images, test_labels;
    std::vector<std::string> train_batches, test_batches;
    int synth_train = 4000;
    int synth_test = 2000;
    int limit_train = 0; // optional truncation after load, 0 = all
    int limit_test = 0;
};

struct ModelSection {
    std::string arch = "small_cnn";
    std::string checkpoint; // starting weights for search/eval subcommands
};

struct TrainingSection {
    int epochs = 10;
    int batch = 64;
    double lr = 0.01;
    double momentum = 0.9;
    bool lr_decay = true;
    std::vector<std::string> augment;
    std::vector<int> checkpoint_epochs;
    double adv_eps = 8.0 / 255.0;
    double adv_step = 2.0 / 255.0;
    int adv_steps = 7;
};

struct PoisonSection {
    bool present = false;
    int trigger_size = 3;
    int target_class = 0;
    double poison_rate = 0.05;
    int row = -1; // -1 = H - size - 1
    int col = -1;
};

struct SearchSection {
    SearchConfig base;
    std::string strategy = "positive";
    bool learned_canvas = false;
    std::vector<int> classes; // empty = all classes
};

struct EvaluationSection {
    std::vector<double> sizes{0.05};
    std::vector<double> uap_eps{8.0 / 255.0, 16.0 / 255.0, 32.0 / 255.0};
    int uap_passes = 10;
    int uap_batch = 32;
    double uap_step = 0.0; // 0 → eps/4
};

struct ExperimentConfig {
    std::uint64_t seed = 1;
    std::string output_dir = "out";
    DatasetConfig dataset;
    ModelSection model;
    TrainingSection training;
    PoisonSection poisoning;
    SearchSection search;
    EvaluationSection evaluation;

    TrainConfig train_config() const;
};

// Parses and schema-validates a config document; unknown keys and type
// mismatches raise ConfigError naming the offending path. Overrides are
// "section.key=value" strings applied before validation.
ExperimentConfig parse_config(const std::string& json_text,
                              const std::vector<std::string>& overrides = {});
ExperimentConfig load_config(const std::string& path,
                             const std::vector<std::string>& overrides = {});

} // namespace iscp
