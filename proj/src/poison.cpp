#include "iscp/poison.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>

#include <omp.h>

namespace iscp {

using nlohmann::json;

std::string TriggerSpec::to_json() const {
    json j;
    j["patch_shape"] = patch.shape;
    j["patch_data"] = patch.data;
    j["row"] = row;
    j["col"] = col;
    j["target_class"] = target_class;
    j["poison_rate"] = poison_rate;
    return j.dump(2);
}

TriggerSpec TriggerSpec::from_json(const std::string& text) {
    const json j = json::parse(text);
    TriggerSpec s;
    s.patch = Tensor(j.at("patch_shape").get<std::vector<int>>(),
                     j.at("patch_data").get<std::vector<double>>());
    s.row = j.at("row").get<int>();
    s.col = j.at("col").get<int>();
    s.target_class = j.at("target_class").get<int>();
    s.poison_rate = j.at("poison_rate").get<double>();
    return s;
}

TriggerSpec make_white_square_trigger(const std::vector<int>& image_shape, int size,
                                      int target_class, double poison_rate) {
    TriggerSpec s;
    s.patch = Tensor::full({image_shape.at(0), size, size}, 1.0);
    s.row = image_shape.at(1) - size - 1;
    s.col = image_shape.at(2) - size - 1;
    s.target_class = target_class;
    s.poison_rate = poison_rate;
    return s;
}

Tensor inject_trigger(const Tensor& image, const TriggerSpec& spec) {
    const int c = image.dim(0), h = image.dim(1), w = image.dim(2);
    const int pc = spec.patch.dim(0), ph = spec.patch.dim(1), pw = spec.patch.dim(2);
    if (pc != c) throw ShapeError("inject_trigger: patch channels vs image channels");
    if (spec.row < 0 || spec.col < 0 || spec.row + ph > h || spec.col + pw > w)
        throw ShapeError("inject_trigger: patch out of bounds at (" + std::to_string(spec.row) +
                         "," + std::to_string(spec.col) + ")");
    Tensor out = image;
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < ph; ++y)
            for (int x = 0; x < pw; ++x)
                out.data[(ch * h + spec.row + y) * w + spec.col + x] =
                    spec.patch.data[(ch * ph + y) * pw + x];
    return out;
}

PoisonResult poison_dataset(const Dataset& train_set, const TriggerSpec& spec,
                            std::uint64_t seed) {
    if (spec.poison_rate <= 0.0 || spec.poison_rate >= 1.0)
        throw std::invalid_argument("poison_dataset: rate must be in (0,1)");
    std::vector<int> candidates;
    for (int i = 0; i < train_set.size(); ++i)
        if (train_set.labels[static_cast<size_t>(i)] != spec.target_class)
            candidates.push_back(i);
    const int want = static_cast<int>(std::ceil(spec.poison_rate * train_set.size()));
    if (want < 1 || want > static_cast<int>(candidates.size()))
        throw std::invalid_argument("poison_dataset: rate selects " + std::to_string(want) +
                                    " of " + std::to_string(candidates.size()) +
                                    " non-target images");
    Rng rng(seed);
    std::vector<int> picks =
        rng.sample_without_replacement(static_cast<int>(candidates.size()), want);
    PoisonResult r;
    r.poisoned = train_set;
    for (int p : picks) r.manifest.push_back(candidates[static_cast<size_t>(p)]);
    std::sort(r.manifest.begin(), r.manifest.end());
    for (int i : r.manifest) {
        r.poisoned.images[static_cast<size_t>(i)] =
            inject_trigger(train_set.images[static_cast<size_t>(i)], spec);
        r.poisoned.labels[static_cast<size_t>(i)] = spec.target_class;
    }
    return r;
}

double attack_success_rate(const Model& m, const Dataset& d, const TriggerSpec& spec,
                           const std::vector<int>& indices) {
    std::vector<int> idx = indices;
    if (idx.empty())
        for (int i = 0; i < d.size(); ++i) idx.push_back(i);
    std::vector<int> nontarget;
    for (int i : idx)
        if (d.labels[static_cast<size_t>(i)] != spec.target_class) nontarget.push_back(i);
    if (nontarget.empty())
        throw std::invalid_argument("attack_success_rate: no nontarget images");
    long hits = 0;
#pragma omp parallel reduction(+ : hits)
    {
        Evaluator ev(m);
#pragma omp for schedule(static)
        for (size_t i = 0; i < nontarget.size(); ++i) {
            const Tensor t = inject_trigger(d.images[static_cast<size_t>(nontarget[i])], spec);
            if (ev.predict(t) == spec.target_class) ++hits;
        }
    }
    return static_cast<double>(hits) / static_cast<double>(nontarget.size());
}

} // namespace iscp
