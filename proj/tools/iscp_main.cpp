// Command-line front end. One subcommand per experiment family; every run
// takes a JSON config (plus flat --section.key=value overrides) and writes
// its artifacts under output_dir/{checkpoints,patterns,reports,figures}
// with a manifest.json of hashes.

#include "iscp/baselines.hpp"
#include "iscp/config.hpp"
#include "iscp/evaluate.hpp"
#include "iscp/io_image.hpp"
#include "iscp/manifest.hpp"
#include "iscp/poison.hpp"
#include "iscp/search.hpp"
#include "iscp/synth.hpp"
#include "iscp/train.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <clocale>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <thread>

#include <omp.h>

namespace fs = std::filesystem;
using namespace iscp;

namespace {

struct RunPaths {
    fs::path root, checkpoints, patterns, reports, figures;
};

RunPaths make_run_paths(const std::string& output_dir) {
    RunPaths p;
    p.root = output_dir;
    p.checkpoints = p.root / "checkpoints";
    p.patterns = p.root / "patterns";
    p.reports = p.root / "reports";
    p.figures = p.root / "figures";
    for (const fs::path& d : {p.root, p.checkpoints, p.patterns, p.reports, p.figures})
        fs::create_directories(d);
    return p;
}

std::pair<Dataset, Dataset> load_datasets(const ExperimentConfig& cfg) {
    const DatasetConfig& dc = cfg.dataset;
    Dataset train_set, test_set;
    if (dc.name == "synth-mnist" || dc.name == "synth-cifar") {
        const SynthSpec spec =
            dc.name == "synth-mnist" ? synth_mnist_like() : synth_cifar_like();
        train_set = make_synth_dataset(spec, dc.synth_train, cfg.seed, "train");
        test_set = make_synth_dataset(spec, dc.synth_test, cfg.seed + 1, "test");
    } else if (dc.name == "mnist") {
        const std::string ti = !dc.train_images.empty()
                                   ? dc.train_images
                                   : dc.dir + "/train-images-idx3-ubyte";
        const std::string tl = !dc.train_labels.empty()
                                   ? dc.train_labels
                                   : dc.dir + "/train-labels-idx1-ubyte";
        const std::string ei =
            !dc.test_images.empty() ? dc.test_images : dc.dir + "/t10k-images-idx3-ubyte";
        const std::string el =
            !dc.test_labels.empty() ? dc.test_labels : dc.dir + "/t10k-labels-idx1-ubyte";
        train_set = load_mnist(ti, tl, "train");
        test_set = load_mnist(ei, el, "test");
    } else { // cifar10
        std::vector<std::string> tb = dc.train_batches;
        if (tb.empty())
            for (int i = 1; i <= 5; ++i)
                tb.push_back(dc.dir + "/data_batch_" + std::to_string(i) + ".bin");
        std::vector<std::string> eb = dc.test_batches;
        if (eb.empty()) eb.push_back(dc.dir + "/test_batch.bin");
        train_set = load_cifar10(tb, "train");
        test_set = load_cifar10(eb, "test");
    }
    auto truncate = [](Dataset& d, int limit) {
        if (limit > 0 && limit < d.size()) {
            d.images.resize(static_cast<size_t>(limit));
            d.labels.resize(static_cast<size_t>(limit));
        }
    };
    truncate(train_set, cfg.dataset.limit_train);
    truncate(test_set, cfg.dataset.limit_test);
    return {std::move(train_set), std::move(test_set)};
}

Model load_model_checkpoint(const ExperimentConfig& cfg) {
    if (cfg.model.checkpoint.empty())
        throw ConfigError("model.checkpoint: required by this subcommand");
    return load_checkpoint(cfg.model.checkpoint).model;
}

std::vector<int> classes_to_run(const ExperimentConfig& cfg, int num_classes) {
    if (!cfg.search.classes.empty()) {
        for (int y : cfg.search.classes)
            if (y < 0 || y >= num_classes)
                throw ConfigError("search.classes: class " + std::to_string(y) +
                                  " out of range");
        return cfg.search.classes;
    }
    std::vector<int> all;
    for (int y = 0; y < num_classes; ++y) all.push_back(y);
    return all;
}

// Fans class-level work across `jobs` worker threads. With jobs > 1 the
// OpenMP kernels are pinned to one thread each so the machine is not
// oversubscribed; results are keyed by class so the output order (and every
// written byte) is independent of scheduling.
void for_each_class(const std::vector<int>& classes, int jobs,
                    const std::function<void(int)>& fn) {
    if (jobs <= 1) {
        for (int y : classes) fn(y);
        return;
    }
    omp_set_num_threads(1);
    std::vector<std::thread> workers;
    std::mutex mu;
    size_t next = 0;
    for (int t = 0; t < jobs; ++t)
        workers.emplace_back([&] {
            for (;;) {
                size_t i;
                {
                    std::lock_guard<std::mutex> lock(mu);
                    if (next >= classes.size()) return;
                    i = next++;
                }
                fn(classes[i]);
            }
        });
    for (auto& w : workers) w.join();
}

void export_pattern(const Pattern& p, const fs::path& dir, Manifest& manifest,
                    const fs::path& root) {
    fs::create_directories(dir);
    auto rel = [&](const fs::path& f) { return fs::relative(f, root).string(); };
    {
        std::ofstream out(dir / "pattern.json", std::ios::binary);
        out << p.to_json() << "\n";
    }
    write_png((dir / "pattern.png").string(), p.pixels);
    write_pgm_mask((dir / "mask.pgm").string(), p.binary_mask);
    manifest.add(rel(dir / "pattern.json"));
    manifest.add(rel(dir / "pattern.png"));
    manifest.add(rel(dir / "mask.pgm"));
}

std::vector<Pattern> load_patterns(const std::string& dir) {
    std::vector<Pattern> out;
    std::vector<fs::path> files;
    for (const auto& entry : fs::recursive_directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().filename() == "pattern.json")
            files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    for (const fs::path& f : files) {
        std::ifstream in(f);
        std::ostringstream ss;
        ss << in.rdbuf();
        out.push_back(Pattern::from_json(ss.str()));
    }
    if (out.empty()) throw LoadError(dir + ": no pattern.json files found");
    return out;
}

void write_text(const fs::path& path, const std::string& text, Manifest& manifest,
                const fs::path& root) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error(path.string() + ": cannot open for writing");
    out << text;
    out.close();
    manifest.add(fs::relative(path, root).string());
}

int cmd_train(const ExperimentConfig& cfg, bool poison, bool adversarial) {
    const RunPaths paths = make_run_paths(cfg.output_dir);
    Manifest manifest(cfg.output_dir);
    auto [train_set, test_set] = load_datasets(cfg);

    TriggerSpec trig;
    PoisonResult poisoned;
    if (poison) {
        if (!cfg.poisoning.present)
            throw ConfigError("poisoning: section required for poison-train");
        trig = make_white_square_trigger(train_set.image_shape(), cfg.poisoning.trigger_size,
                                         cfg.poisoning.target_class,
                                         cfg.poisoning.poison_rate);
        if (cfg.poisoning.row >= 0) trig.row = cfg.poisoning.row;
        if (cfg.poisoning.col >= 0) trig.col = cfg.poisoning.col;
        poisoned = poison_dataset(train_set, trig, cfg.seed);
        write_text(paths.reports / "trigger.json", trig.to_json() + "\n", manifest, paths.root);
        nlohmann::json man;
        man["poisoned_indices"] = poisoned.manifest;
        write_text(paths.reports / "poisoned_indices.json", man.dump(2) + "\n", manifest,
                   paths.root);
    }
    const Dataset& effective_train = poison ? poisoned.poisoned : train_set;

    Model model = build_small_cnn(
        {train_set.image_shape()[0], train_set.image_shape()[1], train_set.image_shape()[2]},
        train_set.num_classes, cfg.seed);
    TrainConfig tc = cfg.train_config();
    std::ostringstream log;
    log << "epoch,train_loss,test_acc\n";
    tc.log = &log;
    const std::vector<Checkpoint> cks = adversarial
                                            ? adversarial_train(model, effective_train,
                                                                &test_set, tc)
                                            : train(model, effective_train, &test_set, tc);
    for (const Checkpoint& ck : cks) {
        char name[64];
        std::snprintf(name, sizeof(name), "model_epoch_%03d.ckpt", ck.epoch);
        save_checkpoint((paths.checkpoints / name).string(), ck.model, ck.epoch,
                        ck.test_accuracy);
        manifest.add(fs::relative(paths.checkpoints / name, paths.root).string());
    }
    save_checkpoint((paths.checkpoints / "model_final.ckpt").string(), model,
                    cks.empty() ? 0 : cks.back().epoch,
                    cks.empty() ? 0.0 : cks.back().test_accuracy);
    manifest.add(fs::relative(paths.checkpoints / "model_final.ckpt", paths.root).string());
    write_text(paths.reports / "training_log.csv", log.str(), manifest, paths.root);

    if (poison) {
        const double asr = attack_success_rate(model, test_set, trig);
        nlohmann::json j;
        j["attack_success_rate"] = asr;
        j["clean_test_accuracy"] = cks.empty() ? 0.0 : cks.back().test_accuracy;
        write_text(paths.reports / "backdoor.json", j.dump(2) + "\n", manifest, paths.root);
        std::printf("attack success rate: %.4f\n", asr);
    }
    manifest.write();
    std::printf("final test accuracy: %.4f\n", cks.empty() ? 0.0 : cks.back().test_accuracy);
    return 0;
}

int cmd_search(const ExperimentConfig& cfg, int jobs) {
    const RunPaths paths = make_run_paths(cfg.output_dir);
    Manifest manifest(cfg.output_dir);
    auto [train_set, test_set] = load_datasets(cfg);
    (void)train_set;
    const Model model = load_model_checkpoint(cfg);
    const std::vector<int> classes = classes_to_run(cfg, test_set.num_classes);
    const CanvasStrategy strategy = canvas_strategy_from_string(cfg.search.strategy);

    std::vector<PwReport> reports(classes.size());
    std::vector<Pattern> patterns(classes.size());
    std::mutex mu;
    for_each_class(classes, jobs, [&](int y) {
        SearchConfig sc = cfg.search.base;
        sc.seed = cfg.seed + static_cast<std::uint64_t>(y) * 1000;
        const auto dn = select_nontarget_subset(test_set, y, sc.dn_fraction, cfg.seed);
        Pattern p;
        if (cfg.search.learned_canvas) {
            const CanvasSet set = sample_canvases(model, test_set, y,
                                                  CanvasStrategy::kPositive, 1, sc.seed);
            p = search_learned_canvas(model, set.canvases[0].image, test_set, dn, y, sc)
                    .pattern;
        } else {
            p = search_class_pattern(model, test_set, dn, y, strategy, sc);
        }
        const PwReport r = predictive_power(model, p, test_set, dn, cfg.model.checkpoint);
        const size_t slot = static_cast<size_t>(
            std::find(classes.begin(), classes.end(), y) - classes.begin());
        std::lock_guard<std::mutex> lock(mu);
        reports[slot] = r;
        patterns[slot] = std::move(p);
    });
    for (size_t i = 0; i < classes.size(); ++i) {
        export_pattern(patterns[i], paths.patterns / ("class_" + std::to_string(classes[i])),
                       manifest, paths.root);
        std::printf("class %d: pw %.4f (attach %.4f / original %.4f)\n", classes[i],
                    reports[i].pw, reports[i].acc_attach, reports[i].acc_original);
    }
    std::string csv = pw_csv_header();
    for (const PwReport& r : reports) csv += pw_csv_row(r);
    write_text(paths.reports / "search_pw.csv", csv, manifest, paths.root);
    write_text(paths.reports / "search_pw.json", pw_reports_json(reports) + "\n", manifest,
               paths.root);
    manifest.write();
    return 0;
}

int cmd_uap(const ExperimentConfig& cfg, int jobs) {
    const RunPaths paths = make_run_paths(cfg.output_dir);
    Manifest manifest(cfg.output_dir);
    auto [train_set, test_set] = load_datasets(cfg);
    (void)train_set;
    const Model model = load_model_checkpoint(cfg);
    const std::vector<int> classes = classes_to_run(cfg, test_set.num_classes);

    std::string csv = "class,eps,success_rate\n";
    std::mutex mu;
    std::vector<std::string> rows(classes.size() * cfg.evaluation.uap_eps.size());
    for_each_class(classes, jobs, [&](int y) {
        for (size_t e = 0; e < cfg.evaluation.uap_eps.size(); ++e) {
            UapConfig uc;
            uc.eps = cfg.evaluation.uap_eps[e];
            uc.step = cfg.evaluation.uap_step;
            uc.passes = cfg.evaluation.uap_passes;
            uc.batch = cfg.evaluation.uap_batch;
            uc.target_class = y;
            uc.seed = cfg.seed + static_cast<std::uint64_t>(y) * 131 + e;
            const Tensor delta = targeted_uap(model, test_set, uc);
            std::vector<int> nontarget;
            for (int i = 0; i < test_set.size(); ++i)
                if (test_set.labels[static_cast<size_t>(i)] != y) nontarget.push_back(i);
            const double asr = uap_success_rate(model, test_set, nontarget, delta, y);
            char tensor_name[96], png_name[96];
            std::snprintf(tensor_name, sizeof(tensor_name), "uap_class_%d_eps_%.4f.tensor", y,
                          uc.eps);
            std::snprintf(png_name, sizeof(png_name), "uap_class_%d_eps_%.4f.png", y, uc.eps);
            char row[96];
            std::snprintf(row, sizeof(row), "%d,%.6f,%.6f\n", y, uc.eps, asr);
            std::lock_guard<std::mutex> lock(mu);
            write_tensor((paths.figures / tensor_name).string(), delta);
            write_png_centered((paths.figures / png_name).string(), delta);
            manifest.add(fs::relative(paths.figures / tensor_name, paths.root).string());
            manifest.add(fs::relative(paths.figures / png_name, paths.root).string());
            rows[static_cast<size_t>(
                     std::find(classes.begin(), classes.end(), y) - classes.begin()) *
                     cfg.evaluation.uap_eps.size() +
                 e] = row;
            std::printf("class %d eps %.4f: targeted success %.4f\n", y, uc.eps, asr);
        }
    });
    for (const std::string& r : rows) csv += r;
    write_text(paths.reports / "uap.csv", csv, manifest, paths.root);
    manifest.write();
    return 0;
}

int cmd_gradcam(const ExperimentConfig& cfg, int jobs) {
    const RunPaths paths = make_run_paths(cfg.output_dir);
    Manifest manifest(cfg.output_dir);
    auto [train_set, test_set] = load_datasets(cfg);
    (void)train_set;
    const Model model = load_model_checkpoint(cfg);
    const std::vector<int> classes = classes_to_run(cfg, test_set.num_classes);

    std::vector<PwReport> reports(classes.size());
    std::vector<Pattern> patterns(classes.size());
    std::vector<Tensor> maps(classes.size());
    std::mutex mu;
    for_each_class(classes, jobs, [&](int y) {
        const CanvasSet set = sample_canvases(model, test_set, y, CanvasStrategy::kPositive, 1,
                                              cfg.seed);
        const Tensor& canvas = set.canvases[0].image;
        const Tensor map = gradcam(model, canvas, y);
        Pattern p = attention_pattern(model, canvas, y, cfg.search.base.target_fraction);
        const auto dn =
            select_nontarget_subset(test_set, y, cfg.search.base.dn_fraction, cfg.seed);
        const PwReport r = predictive_power(model, p, test_set, dn, cfg.model.checkpoint);
        const size_t slot = static_cast<size_t>(
            std::find(classes.begin(), classes.end(), y) - classes.begin());
        std::lock_guard<std::mutex> lock(mu);
        maps[slot] = map;
        patterns[slot] = std::move(p);
        reports[slot] = r;
    });
    for (size_t i = 0; i < classes.size(); ++i) {
        const std::string png = "gradcam_class_" + std::to_string(classes[i]) + ".png";
        Tensor vis = Tensor::zeros({1, maps[i].dim(0), maps[i].dim(1)});
        vis.data = maps[i].data;
        write_png((paths.figures / png).string(), vis);
        manifest.add(fs::relative(paths.figures / png, paths.root).string());
        export_pattern(patterns[i],
                       paths.patterns / ("attention_class_" + std::to_string(classes[i])),
                       manifest, paths.root);
        std::printf("class %d: attention-pattern pw %.4f\n", classes[i], reports[i].pw);
    }
    std::string csv = pw_csv_header();
    for (const PwReport& r : reports) csv += pw_csv_row(r);
    write_text(paths.reports / "attention_pw.csv", csv, manifest, paths.root);
    manifest.write();
    return 0;
}

int cmd_eval_pw(const ExperimentConfig& cfg, const std::string& patterns_dir) {
    const RunPaths paths = make_run_paths(cfg.output_dir);
    Manifest manifest(cfg.output_dir);
    auto [train_set, test_set] = load_datasets(cfg);
    (void)train_set;
    const Model model = load_model_checkpoint(cfg);
    const std::vector<Pattern> patterns = load_patterns(patterns_dir);
    std::vector<PwReport> reports;
    for (const Pattern& p : patterns) {
        const auto dn = select_nontarget_subset(test_set, p.target_class,
                                                cfg.search.base.dn_fraction, cfg.seed);
        reports.push_back(predictive_power(model, p, test_set, dn, cfg.model.checkpoint));
        std::printf("class %d (%s): pw %.4f\n", p.target_class, p.strategy.c_str(),
                    reports.back().pw);
    }
    std::string csv = pw_csv_header();
    for (const PwReport& r : reports) csv += pw_csv_row(r);
    write_text(paths.reports / "eval_pw.csv", csv, manifest, paths.root);
    manifest.write();
    return 0;
}

int cmd_transfer(const ExperimentConfig& cfg, const std::string& patterns_dir,
                 const std::string& target_ckpt) {
    const RunPaths paths = make_run_paths(cfg.output_dir);
    Manifest manifest(cfg.output_dir);
    auto [train_set, test_set] = load_datasets(cfg);
    (void)train_set;
    const Model source = load_model_checkpoint(cfg);
    const Model target = load_checkpoint(target_ckpt).model;
    const std::vector<Pattern> patterns = load_patterns(patterns_dir);

    std::string csv = "class,pattern,pw_source,pw_target,transfer_rate,infinite\n";
    for (const Pattern& p : patterns) {
        const auto dn = select_nontarget_subset(test_set, p.target_class,
                                                cfg.search.base.dn_fraction, cfg.seed);
        const TransferResult t = transfer_rate(p, source, target, test_set, dn);
        char row[256];
        std::snprintf(row, sizeof(row), "%d,%s,%.6f,%.6f,%.6f,%d\n", p.target_class,
                      p.strategy.c_str(), t.pw_source, t.pw_target,
                      t.infinite ? 0.0 : t.rate, t.infinite ? 1 : 0);
        csv += row;
        std::printf("class %d: pw %.4f -> %.4f (rate %s)\n", p.target_class, t.pw_source,
                    t.pw_target, t.infinite ? "inf" : std::to_string(t.rate).c_str());
    }
    write_text(paths.reports / "transfer.csv", csv, manifest, paths.root);
    manifest.write();
    return 0;
}

int cmd_sweep_sizes(const ExperimentConfig& cfg, int jobs) {
    const RunPaths paths = make_run_paths(cfg.output_dir);
    Manifest manifest(cfg.output_dir);
    auto [train_set, test_set] = load_datasets(cfg);
    (void)train_set;
    const Model model = load_model_checkpoint(cfg);
    const std::vector<int> classes = classes_to_run(cfg, test_set.num_classes);
    const CanvasStrategy strategy = canvas_strategy_from_string(cfg.search.strategy);

    std::vector<std::vector<PwReport>> rows(classes.size());
    std::mutex mu;
    for_each_class(classes, jobs, [&](int y) {
        SearchConfig sc = cfg.search.base;
        sc.seed = cfg.seed + static_cast<std::uint64_t>(y) * 1000;
        const auto dn = select_nontarget_subset(test_set, y, sc.dn_fraction, cfg.seed);
        auto reports = size_sweep(model, test_set, dn, y, cfg.evaluation.sizes, strategy, sc,
                                  cfg.model.checkpoint);
        const size_t slot = static_cast<size_t>(
            std::find(classes.begin(), classes.end(), y) - classes.begin());
        std::lock_guard<std::mutex> lock(mu);
        rows[slot] = std::move(reports);
    });
    std::string csv = pw_csv_header();
    for (size_t i = 0; i < classes.size(); ++i)
        for (const PwReport& r : rows[i]) {
            csv += pw_csv_row(r);
            std::printf("class %d size %.4f: pw %.4f\n", classes[i], r.size_fraction, r.pw);
        }
    write_text(paths.reports / "size_sweep.csv", csv, manifest, paths.root);
    manifest.write();
    return 0;
}

int cmd_sweep_stages(const ExperimentConfig& cfg, const std::string& checkpoints_dir,
                     int jobs) {
    const RunPaths paths = make_run_paths(cfg.output_dir);
    Manifest manifest(cfg.output_dir);
    auto [train_set, test_set] = load_datasets(cfg);
    (void)train_set;
    if (cfg.training.checkpoint_epochs.empty())
        throw ConfigError("training.checkpoint_epochs: required for sweep-stages");
    const std::vector<int> classes = classes_to_run(cfg, test_set.num_classes);
    const CanvasStrategy strategy = canvas_strategy_from_string(cfg.search.strategy);
    fs::create_directories(paths.figures / "stages");

    std::string csv = "epoch,class,final_loss,test_acc\n";
    for (int epoch : cfg.training.checkpoint_epochs) {
        char name[64];
        std::snprintf(name, sizeof(name), "model_epoch_%03d.ckpt", epoch);
        const fs::path ckpt = fs::path(checkpoints_dir) / name;
        if (!fs::exists(ckpt)) throw LoadError(ckpt.string() + ": missing checkpoint");
        const Checkpoint ck = load_checkpoint(ckpt.string());

        std::vector<Pattern> patterns(classes.size());
        std::mutex mu;
        for_each_class(classes, jobs, [&](int y) {
            SearchConfig sc = cfg.search.base;
            sc.seed = cfg.seed + static_cast<std::uint64_t>(y) * 1000 +
                      static_cast<std::uint64_t>(epoch);
            const auto dn = select_nontarget_subset(test_set, y, sc.dn_fraction, cfg.seed);
            Pattern p = search_class_pattern(ck.model, test_set, dn, y, strategy, sc);
            const size_t slot = static_cast<size_t>(
                std::find(classes.begin(), classes.end(), y) - classes.begin());
            std::lock_guard<std::mutex> lock(mu);
            patterns[slot] = std::move(p);
        });
        for (size_t i = 0; i < classes.size(); ++i) {
            char png[96];
            std::snprintf(png, sizeof(png), "stages/epoch_%03d_class_%d.png", epoch,
                          classes[i]);
            write_png((paths.figures / png).string(), patterns[i].pixels);
            manifest.add(fs::relative(paths.figures / png, paths.root).string());
            char row[128];
            std::snprintf(row, sizeof(row), "%d,%d,%.6f,%.6f\n", epoch, classes[i],
                          patterns[i].final_loss, ck.test_accuracy);
            csv += row;
        }
        std::printf("epoch %d: %zu patterns emitted (test acc %.4f)\n", epoch, classes.size(),
                    ck.test_accuracy);
    }
    write_text(paths.reports / "stages.csv", csv, manifest, paths.root);
    manifest.write();
    return 0;
}

int cmd_export(const ExperimentConfig& cfg, const std::string& patterns_dir) {
    const RunPaths paths = make_run_paths(cfg.output_dir);
    Manifest manifest(cfg.output_dir);
    const std::vector<Pattern> patterns = load_patterns(patterns_dir);
    for (const Pattern& p : patterns) {
        const fs::path dir =
            paths.patterns / ("class_" + std::to_string(p.target_class) + "_" + p.strategy);
        export_pattern(p, dir, manifest, paths.root);
        std::printf("exported class %d (%s)\n", p.target_class, p.strategy.c_str());
    }
    manifest.write();
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    std::setlocale(LC_ALL, "C");
    CLI::App app{"input-space class-wise pattern search toolkit"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> overrides;
    std::string patterns_dir, target_ckpt, checkpoints_dir;
    int jobs = 1;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("-c,--config", config_path, "JSON experiment config")->required();
        sub->add_option("--set", overrides,
                        "config override, section.key=value (repeatable)");
        sub->add_option("--jobs", jobs, "worker threads for per-class fan-out");
        sub->allow_extras(); // --section.key=value shorthand
    };

    CLI::App* train = app.add_subcommand("train", "train a clean classifier");
    CLI::App* poison_train =
        app.add_subcommand("poison-train", "train on a BadNets-poisoned training set");
    CLI::App* adv_train = app.add_subcommand("adv-train", "PGD adversarial training");
    CLI::App* search =
        app.add_subcommand("search", "class-wise pattern search (± TV, ± learned canvas)");
    CLI::App* uap = app.add_subcommand("uap", "targeted class-wise UAP baseline");
    CLI::App* gradcam_cmd =
        app.add_subcommand("gradcam", "Grad-CAM maps and attention-pattern baseline");
    CLI::App* eval_pw = app.add_subcommand("eval-pw", "re-evaluate stored patterns");
    CLI::App* transfer = app.add_subcommand("transfer", "transfer rates between two models");
    CLI::App* sweep_sizes = app.add_subcommand("sweep-sizes", "pattern-size sweep");
    CLI::App* sweep_stages =
        app.add_subcommand("sweep-stages", "pattern search over training-stage checkpoints");
    CLI::App* export_cmd = app.add_subcommand("export", "re-emit PNG/PGM views of patterns");

    for (CLI::App* sub : {train, poison_train, adv_train, search, uap, gradcam_cmd, eval_pw,
                          transfer, sweep_sizes, sweep_stages, export_cmd})
        add_common(sub);
    eval_pw->add_option("--patterns", patterns_dir, "directory of pattern.json files")
        ->required();
    transfer->add_option("--patterns", patterns_dir, "directory of pattern.json files")
        ->required();
    transfer->add_option("--target-checkpoint", target_ckpt, "transfer target model")
        ->required();
    sweep_stages
        ->add_option("--checkpoints", checkpoints_dir, "directory of epoch checkpoints")
        ->required();
    export_cmd->add_option("--patterns", patterns_dir, "directory of pattern.json files")
        ->required();

    CLI11_PARSE(app, argc, argv);

    try {
        CLI::App* sub = app.get_subcommands().front();
        // accept flat --section.key=value extras as overrides
        for (std::string extra : sub->remaining()) {
            if (extra.rfind("--", 0) == 0) extra = extra.substr(2);
            if (extra.find('=') == std::string::npos || extra.find('.') == std::string::npos)
                throw ConfigError("unrecognized argument: " + extra);
            overrides.push_back(extra);
        }
        ExperimentConfig cfg = load_config(config_path, overrides);
        if (jobs <= 1) omp_set_num_threads(omp_get_max_threads());

        if (sub == train) return cmd_train(cfg, false, false);
        if (sub == poison_train) return cmd_train(cfg, true, false);
        if (sub == adv_train) return cmd_train(cfg, false, true);
        if (sub == search) return cmd_search(cfg, jobs);
        if (sub == uap) return cmd_uap(cfg, jobs);
        if (sub == gradcam_cmd) return cmd_gradcam(cfg, jobs);
        if (sub == eval_pw) return cmd_eval_pw(cfg, patterns_dir);
        if (sub == transfer) return cmd_transfer(cfg, patterns_dir, target_ckpt);
        if (sub == sweep_sizes) return cmd_sweep_sizes(cfg, jobs);
        if (sub == sweep_stages) return cmd_sweep_stages(cfg, checkpoints_dir, jobs);
        if (sub == export_cmd) return cmd_export(cfg, patterns_dir);
        return 1;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 1;
    } catch (const LoadError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 2;
    } catch (const ShapeError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 2;
    } catch (const TrainingDiverged& e) {
        std::fprintf(stderr, "numeric failure: %s\n", e.what());
        return 3;
    } catch (const UndefinedPwError& e) {
        std::fprintf(stderr, "numeric failure: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
}
