#include "iscp/evaluate.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>

#include <omp.h>

namespace iscp {

Tensor attach(const Tensor& image, const Pattern& p) {
    if (image.shape != p.pixels.shape)
        throw ShapeError("attach: image " + shape_str(image.shape) + " vs pattern " +
                         shape_str(p.pixels.shape));
    const int c = image.dim(0), plane = image.dim(1) * image.dim(2);
    Tensor out = image;
    for (int ch = 0; ch < c; ++ch)
        for (int i = 0; i < plane; ++i) {
            const int j = ch * plane + i;
            if (p.binary_mask.data[static_cast<size_t>(i)] != 0.0)
                out.data[static_cast<size_t>(j)] = p.pixels.data[static_cast<size_t>(j)];
        }
    return out;
}

namespace {

std::string eval_descriptor(const NontargetSubset& dn) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "test\\D_n[frac=%.3f,seed=%llu]", dn.fraction,
                  static_cast<unsigned long long>(dn.seed));
    return buf;
}

} // namespace

double transformed_target_rate(const Model& m, const Dataset& d,
                               const std::vector<int>& indices, int target_class,
                               const std::function<Tensor(const Tensor&)>& transform) {
    if (indices.empty()) throw std::invalid_argument("transformed_target_rate: empty set");
    long hits = 0;
#pragma omp parallel reduction(+ : hits)
    {
        Evaluator ev(m);
#pragma omp for schedule(static)
        for (size_t i = 0; i < indices.size(); ++i) {
            const Tensor t = transform(d.images[static_cast<size_t>(indices[i])]);
            if (ev.predict(t) == target_class) ++hits;
        }
    }
    return static_cast<double>(hits) / static_cast<double>(indices.size());
}

PwReport predictive_power(const Model& m, const Pattern& p, const Dataset& d,
                          const NontargetSubset& dn, const std::string& model_id) {
    const int y = p.target_class;
    std::vector<int> nontarget, target;
    for (int i : dn.eval_indices)
        (d.labels[static_cast<size_t>(i)] == y ? target : nontarget).push_back(i);
    if (nontarget.empty() || target.empty())
        throw std::invalid_argument("predictive_power: evaluation split lacks nontarget or "
                                    "target-class images");

    PwReport r;
    r.target_class = y;
    r.size_fraction = p.size_fraction;
    char id[160];
    std::snprintf(id, sizeof(id), "%s|%s|k=%.4f", p.strategy.c_str(),
                  p.canvas_provenance.c_str(), p.size_fraction);
    r.pattern_id = id;
    r.eval_desc = eval_descriptor(dn);
    r.model_id = model_id;
    r.acc_attach = transformed_target_rate(m, d, nontarget, y,
                                           [&](const Tensor& x) { return attach(x, p); });
    r.acc_original = evaluate_accuracy(m, d, y, dn.eval_indices);
    if (r.acc_original == 0.0) throw UndefinedPwError(r.acc_attach, r.acc_original);
    r.pw = r.acc_attach / r.acc_original;
    return r;
}

TransferResult transfer_rate(const Pattern& p, const Model& source, const Model& target,
                             const Dataset& d, const NontargetSubset& dn) {
    TransferResult t;
    t.pw_source = predictive_power(source, p, d, dn, "source").pw;
    t.pw_target = predictive_power(target, p, d, dn, "target").pw;
    if (t.pw_target == 0.0) {
        t.infinite = true;
        t.rate = std::numeric_limits<double>::infinity();
    } else {
        t.rate = t.pw_source / t.pw_target;
    }
    return t;
}

std::vector<PwReport> size_sweep(const Model& m, const Dataset& d, const NontargetSubset& dn,
                                 int target_class, const std::vector<double>& sizes,
                                 CanvasStrategy strategy, const SearchConfig& cfg,
                                 const std::string& model_id) {
    for (double s : sizes)
        if (s <= 0.0 || s > 1.0)
            throw std::invalid_argument("size_sweep: sizes must be in (0,1]");
    const ClassSearchOutcome outcome =
        search_class_mask(m, d, dn, target_class, strategy, cfg);
    std::vector<PwReport> out;
    for (double s : sizes) {
        const Pattern p = make_pattern(outcome, target_class, s, cfg);
        out.push_back(predictive_power(m, p, d, dn, model_id));
    }
    return out;
}

std::string pw_csv_header() {
    return "model,class,pattern,size,acc_attach,acc_original,pw,eval_set\n";
}

std::string pw_csv_row(const PwReport& r) {
    char buf[512];
    std::snprintf(buf, sizeof(buf), "%s,%d,%s,%.4f,%.6f,%.6f,%.6f,%s\n", r.model_id.c_str(),
                  r.target_class, r.pattern_id.c_str(), r.size_fraction, r.acc_attach,
                  r.acc_original, r.pw, r.eval_desc.c_str());
    return buf;
}

void write_pw_csv(const std::string& path, const std::vector<PwReport>& reports) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error(path + ": cannot open for writing");
    out << pw_csv_header();
    for (const PwReport& r : reports) out << pw_csv_row(r);
}

std::string pw_reports_json(const std::vector<PwReport>& reports) {
    nlohmann::json arr = nlohmann::json::array();
    for (const PwReport& r : reports) {
        nlohmann::json j;
        j["model"] = r.model_id;
        j["class"] = r.target_class;
        j["pattern"] = r.pattern_id;
        j["size"] = r.size_fraction;
        j["acc_attach"] = r.acc_attach;
        j["acc_original"] = r.acc_original;
        j["pw"] = r.pw;
        j["eval_set"] = r.eval_desc;
        arr.push_back(j);
    }
    return arr.dump(2);
}

} // namespace iscp
