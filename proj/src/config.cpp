#include "iscp/config.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <set>
#include <sstream>

namespace iscp {

using nlohmann::json;

namespace {

void require_keys(const json& j, const std::string& path,
                  const std::set<std::string>& known) {
    if (!j.is_object()) throw ConfigError(path + ": expected an object");
    for (const auto& [key, _] : j.items())
        if (!known.count(key)) throw ConfigError(path + "." + key + ": unknown key");
}

template <class T>
T get_or(const json& j, const std::string& path, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(path + "." + key + ": wrong type");
    }
}

json parse_override_value(const std::string& text) {
    // Accept bare strings as JSON strings so `--search.strategy=white` works.
    const json v = json::parse(text, nullptr, false);
    if (v.is_discarded()) return json(text);
    return v;
}

void apply_override(json& root, const std::string& spec) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos)
        throw ConfigError("override '" + spec + "': expected key.path=value");
    const std::string path = spec.substr(0, eq);
    const json value = parse_override_value(spec.substr(eq + 1));
    json* cur = &root;
    std::istringstream keys(path);
    std::string key;
    std::vector<std::string> parts;
    while (std::getline(keys, key, '.')) parts.push_back(key);
    if (parts.empty()) throw ConfigError("override '" + spec + "': empty key path");
    for (size_t i = 0; i + 1 < parts.size(); ++i) cur = &((*cur)[parts[i]]);
    (*cur)[parts.back()] = value;
}

} // namespace

TrainConfig ExperimentConfig::train_config() const {
    TrainConfig t;
    t.epochs = training.epochs;
    t.batch = training.batch;
    t.lr = training.lr;
    t.momentum = training.momentum;
    t.lr_decay = training.lr_decay;
    t.augment = parse_augment_policy(training.augment);
    t.checkpoint_epochs = training.checkpoint_epochs;
    t.seed = seed;
    t.adv_eps = training.adv_eps;
    t.adv_step = training.adv_step;
    t.adv_steps = training.adv_steps;
    return t;
}

ExperimentConfig parse_config(const std::string& json_text,
                              const std::vector<std::string>& overrides) {
    json j = json::parse(json_text, nullptr, false);
    if (j.is_discarded()) throw ConfigError("config: invalid JSON");
    for (const std::string& o : overrides) apply_override(j, o);

    require_keys(j, "config",
                 {"seed", "output_dir", "dataset", "model", "training", "poisoning", "search",
                  "evaluation"});
    ExperimentConfig c;
    c.seed = get_or<std::uint64_t>(j, "config", "seed", 1);
    c.output_dir = get_or<std::string>(j, "config", "output_dir", "out");

    if (j.contains("dataset")) {
        const json& d = j.at("dataset");
        require_keys(d, "dataset",
                     {"name", "dir", "train_images", "train_labels", "test_images",
                      "test_labels", "train_batches", "test_batches", "synth_train",
                      "synth_test", "limit_train", "limit_test"});
        c.dataset.name = get_or<std::string>(d, "dataset", "name", c.dataset.name);
        static const std::set<std::string> names = {"mnist", "cifar10", "synth-mnist",
                                                    "synth-cifar"};
        if (!names.count(c.dataset.name))
            throw ConfigError("dataset.name: '" + c.dataset.name + "' is not a known dataset");
        c.dataset.dir = get_or<std::string>(d, "dataset", "dir", "");
        c.dataset.train_images = get_or<std::string>(d, "dataset", "train_images", "");
        c.dataset.train_labels = get_or<std::string>(d, "dataset", "train_labels", "");
        c.dataset.test_images = get_or<std::string>(d, "dataset", "test_images", "");
        c.dataset.test_labels = get_or<std::string>(d, "dataset", "test_labels", "");
        c.dataset.train_batches =
            get_or<std::vector<std::string>>(d, "dataset", "train_batches", {});
        c.dataset.test_batches =
            get_or<std::vector<std::string>>(d, "dataset", "test_batches", {});
        c.dataset.synth_train = get_or<int>(d, "dataset", "synth_train", c.dataset.synth_train);
        c.dataset.synth_test = get_or<int>(d, "dataset", "synth_test", c.dataset.synth_test);
        c.dataset.limit_train = get_or<int>(d, "dataset", "limit_train", 0);
        c.dataset.limit_test = get_or<int>(d, "dataset", "limit_test", 0);
    }
    if (j.contains("model")) {
        const json& m = j.at("model");
        require_keys(m, "model", {"arch", "checkpoint"});
        c.model.arch = get_or<std::string>(m, "model", "arch", "small_cnn");
        if (c.model.arch != "small_cnn")
            throw ConfigError("model.arch: only 'small_cnn' is available");
        c.model.checkpoint = get_or<std::string>(m, "model", "checkpoint", "");
    }
    if (j.contains("training")) {
        const json& t = j.at("training");
        require_keys(t, "training",
                     {"epochs", "batch", "lr", "momentum", "lr_decay", "augment",
                      "checkpoint_epochs", "adv_eps", "adv_step", "adv_steps"});
        c.training.epochs = get_or<int>(t, "training", "epochs", c.training.epochs);
        c.training.batch = get_or<int>(t, "training", "batch", c.training.batch);
        c.training.lr = get_or<double>(t, "training", "lr", c.training.lr);
        c.training.momentum = get_or<double>(t, "training", "momentum", c.training.momentum);
        c.training.lr_decay = get_or<bool>(t, "training", "lr_decay", c.training.lr_decay);
        c.training.augment = get_or<std::vector<std::string>>(t, "training", "augment", {});
        c.training.checkpoint_epochs =
            get_or<std::vector<int>>(t, "training", "checkpoint_epochs", {});
        c.training.adv_eps = get_or<double>(t, "training", "adv_eps", c.training.adv_eps);
        c.training.adv_step = get_or<double>(t, "training", "adv_step", c.training.adv_step);
        c.training.adv_steps = get_or<int>(t, "training", "adv_steps", c.training.adv_steps);
        parse_augment_policy(c.training.augment); // validate names
        if (c.training.epochs < 0) throw ConfigError("training.epochs: must be >= 0");
        if (c.training.batch < 1) throw ConfigError("training.batch: must be >= 1");
    }
    if (j.contains("poisoning") && !j.at("poisoning").is_null()) {
        const json& p = j.at("poisoning");
        require_keys(p, "poisoning",
                     {"trigger_size", "target_class", "poison_rate", "row", "col"});
        c.poisoning.present = true;
        c.poisoning.trigger_size = get_or<int>(p, "poisoning", "trigger_size", 3);
        c.poisoning.target_class = get_or<int>(p, "poisoning", "target_class", 0);
        c.poisoning.poison_rate = get_or<double>(p, "poisoning", "poison_rate", 0.05);
        c.poisoning.row = get_or<int>(p, "poisoning", "row", -1);
        c.poisoning.col = get_or<int>(p, "poisoning", "col", -1);
        if (c.poisoning.poison_rate <= 0.0 || c.poisoning.poison_rate >= 1.0)
            throw ConfigError("poisoning.poison_rate: must be in (0,1)");
    }
    if (j.contains("search")) {
        const json& s = j.at("search");
        require_keys(s, "search",
                     {"alpha", "beta", "epochs", "batch", "eta", "canvases", "strategy",
                      "size", "dn_fraction", "canvas_step", "learned_canvas", "classes"});
        c.search.base.alpha = get_or<double>(s, "search", "alpha", c.search.base.alpha);
        c.search.base.beta = get_or<double>(s, "search", "beta", c.search.base.beta);
        c.search.base.epochs = get_or<int>(s, "search", "epochs", c.search.base.epochs);
        c.search.base.batch = get_or<int>(s, "search", "batch", c.search.base.batch);
        c.search.base.eta = get_or<double>(s, "search", "eta", c.search.base.eta);
        c.search.base.canvases = get_or<int>(s, "search", "canvases", c.search.base.canvases);
        c.search.base.target_fraction =
            get_or<double>(s, "search", "size", c.search.base.target_fraction);
        c.search.base.dn_fraction =
            get_or<double>(s, "search", "dn_fraction", c.search.base.dn_fraction);
        c.search.base.canvas_step =
            get_or<double>(s, "search", "canvas_step", c.search.base.canvas_step);
        c.search.strategy = get_or<std::string>(s, "search", "strategy", c.search.strategy);
        c.search.learned_canvas = get_or<bool>(s, "search", "learned_canvas", false);
        c.search.classes = get_or<std::vector<int>>(s, "search", "classes", {});
        canvas_strategy_from_string(c.search.strategy); // validate
        c.search.base.seed = c.seed;
        try {
            c.search.base.validate();
        } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("search: ") + e.what());
        }
    } else {
        c.search.base.seed = c.seed;
    }
    if (j.contains("evaluation")) {
        const json& e = j.at("evaluation");
        require_keys(e, "evaluation", {"sizes", "uap_eps", "uap_passes", "uap_batch", "uap_step"});
        c.evaluation.sizes = get_or<std::vector<double>>(e, "evaluation", "sizes",
                                                         c.evaluation.sizes);
        c.evaluation.uap_eps = get_or<std::vector<double>>(e, "evaluation", "uap_eps",
                                                           c.evaluation.uap_eps);
        c.evaluation.uap_passes = get_or<int>(e, "evaluation", "uap_passes", 10);
        c.evaluation.uap_batch = get_or<int>(e, "evaluation", "uap_batch", 32);
        c.evaluation.uap_step = get_or<double>(e, "evaluation", "uap_step", 0.0);
        for (double s : c.evaluation.sizes)
            if (s <= 0.0 || s > 1.0) throw ConfigError("evaluation.sizes: entries must be in (0,1]");
    }
    return c;
}

ExperimentConfig load_config(const std::string& path,
                             const std::vector<std::string>& overrides) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path + ": cannot open config");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), overrides);
}

} // namespace iscp
