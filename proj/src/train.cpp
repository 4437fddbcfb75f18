#include "iscp/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <numeric>
#include <ostream>

#include <omp.h>

namespace iscp {

namespace {

Tensor pgd_core(ForwardGraph& fg, const Tensor& x0, int label, double eps, double step,
                int iters, bool targeted, int target_class) {
    Tensor x = x0;
    const double dir = targeted ? -1.0 : 1.0;
    const int loss_label = targeted ? target_class : label;
    for (int it = 0; it < iters; ++it) {
        fg.g.set_leaf(fg.input, x);
        fg.g.set_label(fg.xent, loss_label);
        fg.g.forward(fg.xent);
        fg.g.backward(fg.xent);
        const Tensor& g = fg.g.grad(fg.input);
        for (int i = 0; i < x.numel(); ++i) {
            const double s = g.data[i] > 0.0 ? 1.0 : (g.data[i] < 0.0 ? -1.0 : 0.0);
            double v = x.data[i] + dir * step * s;
            v = std::clamp(v, x0.data[i] - eps, x0.data[i] + eps);
            x.data[i] = std::clamp(v, 0.0, 1.0);
        }
    }
    return x;
}

double lr_at_epoch(const TrainConfig& cfg, int epoch) {
    if (!cfg.lr_decay) return cfg.lr;
    const int m1 = cfg.epochs / 2;
    const int m2 = 3 * cfg.epochs / 4;
    if (epoch > m2) return cfg.lr * 0.01;
    if (epoch > m1) return cfg.lr * 0.1;
    return cfg.lr;
}

std::vector<Checkpoint> run_training(Model& m, const Dataset& train_set,
                                     const Dataset* test_set, const TrainConfig& cfg,
                                     bool adversarial) {
    if (train_set.size() == 0) throw std::invalid_argument("train: empty training set");
    if (cfg.batch < 1) throw std::invalid_argument("train: batch must be >= 1");

    std::vector<Checkpoint> checkpoints;
    auto record = [&](int epoch) {
        Checkpoint ck;
        ck.epoch = epoch;
        ck.test_accuracy = test_set ? evaluate_accuracy(m, *test_set) : 0.0;
        ck.model = m;
        checkpoints.push_back(std::move(ck));
        return checkpoints.back().test_accuracy;
    };
    if (cfg.epochs == 0) {
        record(0);
        return checkpoints;
    }

    const int nthreads = omp_get_max_threads();
    std::vector<std::unique_ptr<ForwardGraph>> graphs;
    std::vector<std::unique_ptr<ForwardGraph>> attack_graphs;
    for (int t = 0; t < nthreads; ++t) {
        graphs.emplace_back(std::make_unique<ForwardGraph>(build_forward(m, true, false, true)));
        if (adversarial)
            attack_graphs.emplace_back(
                std::make_unique<ForwardGraph>(build_forward(m, false, true, true)));
    }
    // Per-thread gradient accumulators, reduced in thread order.
    std::vector<std::vector<Tensor>> grads(static_cast<size_t>(nthreads));
    for (auto& gs : grads)
        for (const Tensor& p : m.params) gs.push_back(Tensor::zeros(p.shape));
    std::vector<Tensor> velocity;
    for (const Tensor& p : m.params) velocity.push_back(Tensor::zeros(p.shape));

    Rng rng(cfg.seed);
    std::vector<int> order(static_cast<size_t>(train_set.size()));
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        rng.shuffle(order);
        const double lr = lr_at_epoch(cfg, epoch);
        double epoch_loss = 0.0;
        long epoch_count = 0;

        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch)) {
            const int bsz = static_cast<int>(
                std::min(order.size() - start, static_cast<size_t>(cfg.batch)));
            // Materialize (and augment) the batch serially so the rng
            // stream does not depend on the thread count.
            std::vector<Tensor> batch;
            std::vector<int> labels;
            batch.reserve(static_cast<size_t>(bsz));
            for (int i = 0; i < bsz; ++i) {
                const int j = order[start + static_cast<size_t>(i)];
                batch.push_back(cfg.augment.empty()
                                    ? train_set.images[static_cast<size_t>(j)]
                                    : augment_image(train_set.images[static_cast<size_t>(j)],
                                                    cfg.augment, rng));
                labels.push_back(train_set.labels[static_cast<size_t>(j)]);
            }

            std::vector<double> thread_loss(static_cast<size_t>(nthreads), 0.0);
#pragma omp parallel
            {
                const int t = omp_get_thread_num();
                ForwardGraph& fg = *graphs[static_cast<size_t>(t)];
                sync_params(fg, m);
                ForwardGraph* atk = adversarial ? attack_graphs[static_cast<size_t>(t)].get()
                                                : nullptr;
                if (atk) sync_params(*atk, m);
                for (Tensor& g : grads[static_cast<size_t>(t)])
                    std::fill(g.data.begin(), g.data.end(), 0.0);
#pragma omp for schedule(static)
                for (int i = 0; i < bsz; ++i) {
                    const Tensor* x = &batch[static_cast<size_t>(i)];
                    Tensor adv;
                    if (atk && cfg.adv_steps > 0) {
                        adv = pgd_core(*atk, *x, labels[static_cast<size_t>(i)], cfg.adv_eps,
                                       cfg.adv_step, cfg.adv_steps, false, -1);
                        x = &adv;
                    }
                    fg.g.set_leaf(fg.input, *x);
                    fg.g.set_label(fg.xent, labels[static_cast<size_t>(i)]);
                    fg.g.forward(fg.xent);
                    fg.g.backward(fg.xent);
                    thread_loss[static_cast<size_t>(t)] += fg.g.scalar(fg.xent);
                    auto& acc = grads[static_cast<size_t>(t)];
                    for (size_t p = 0; p < m.params.size(); ++p) {
                        const Tensor& gp = fg.g.grad(fg.param_leaves[p]);
                        for (size_t q = 0; q < gp.data.size(); ++q) acc[p].data[q] += gp.data[q];
                    }
                }
            }

            double batch_loss = 0.0;
            for (double l : thread_loss) batch_loss += l;
            if (!std::isfinite(batch_loss))
                throw TrainingDiverged(epoch, static_cast<int>(start / static_cast<size_t>(cfg.batch)));
            epoch_loss += batch_loss;
            epoch_count += bsz;

            for (size_t p = 0; p < m.params.size(); ++p) {
                Tensor& g0 = grads[0][p];
                for (int t = 1; t < nthreads; ++t) {
                    const Tensor& gt = grads[static_cast<size_t>(t)][p];
                    for (size_t q = 0; q < g0.data.size(); ++q) g0.data[q] += gt.data[q];
                }
                Tensor& v = velocity[p];
                Tensor& w = m.params[p];
                const double inv = 1.0 / bsz;
                for (size_t q = 0; q < g0.data.size(); ++q) {
                    v.data[q] = cfg.momentum * v.data[q] + g0.data[q] * inv;
                    w.data[q] -= lr * v.data[q];
                }
            }
        }

        const bool checkpoint_now =
            epoch == cfg.epochs ||
            std::find(cfg.checkpoint_epochs.begin(), cfg.checkpoint_epochs.end(), epoch) !=
                cfg.checkpoint_epochs.end();
        double test_acc = -1.0;
        if (checkpoint_now) test_acc = record(epoch);
        if (cfg.log) {
            char row[128];
            if (test_acc >= 0.0)
                std::snprintf(row, sizeof(row), "%d,%.6f,%.6f\n", epoch,
                              epoch_loss / static_cast<double>(epoch_count), test_acc);
            else
                std::snprintf(row, sizeof(row), "%d,%.6f,\n", epoch,
                              epoch_loss / static_cast<double>(epoch_count));
            (*cfg.log) << row;
        }
    }
    return checkpoints;
}

} // namespace

std::vector<Checkpoint> train(Model& m, const Dataset& train_set, const Dataset* test_set,
                              const TrainConfig& cfg) {
    return run_training(m, train_set, test_set, cfg, false);
}

std::vector<Checkpoint> adversarial_train(Model& m, const Dataset& train_set,
                                          const Dataset* test_set, const TrainConfig& cfg) {
    if (cfg.adv_eps < 0.0 || cfg.adv_step < 0.0 || cfg.adv_steps < 0)
        throw std::invalid_argument("adversarial_train: bad PGD parameters");
    return run_training(m, train_set, test_set, cfg, true);
}

Tensor pgd_attack(const Model& m, const Tensor& image, int label, double eps, double step,
                  int iters, bool targeted, int target_class) {
    if (targeted && (target_class < 0 || target_class >= m.num_classes))
        throw std::invalid_argument("pgd_attack: targeted attack needs a valid target class");
    ForwardGraph fg = build_forward(m, false, true, true);
    return pgd_core(fg, image, label, eps, step, iters, targeted, target_class);
}

double robust_accuracy(const Model& m, const Dataset& d, double eps, double step, int iters,
                       const std::vector<int>& indices) {
    std::vector<int> idx = indices;
    if (idx.empty())
        for (int i = 0; i < d.size(); ++i) idx.push_back(i);
    long correct = 0;
#pragma omp parallel reduction(+ : correct)
    {
        ForwardGraph atk = build_forward(m, false, true, true);
        Evaluator ev(m);
#pragma omp for schedule(static)
        for (size_t i = 0; i < idx.size(); ++i) {
            const int j = idx[i];
            const Tensor& x = d.images[static_cast<size_t>(j)];
            const int y = d.labels[static_cast<size_t>(j)];
            const Tensor adv = pgd_core(atk, x, y, eps, step, iters, false, -1);
            if (ev.predict(adv) == y) ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(idx.size());
}

} // namespace iscp
