#pragma once

#include "iscp/dataset.hpp"
#include "iscp/model.hpp"
#include "iscp/search.hpp"

#include <functional>
#include <string>
#include <vector>

namespace iscp {

// Pattern pixels replace image pixels on the mask support:
// out = binary_mask·pattern + (1−binary_mask)·image. Idempotent.
Tensor attach(const Tensor& image, const Pattern& p);

struct UndefinedPwError : std::runtime_error {
    double acc_attach;
    double acc_original;
    UndefinedPwError(double attach_acc, double orig_acc)
        : std::runtime_error("predictive power undefined: original accuracy is 0 "
                             "(acc_attach = " + std::to_string(attach_acc) + ")"),
          acc_attach(attach_acc), acc_original(orig_acc) {}
};

struct PwReport {
    int target_class = -1;
    std::string pattern_id; // strategy + provenance + size
    double size_fraction = 0.0;
    double acc_attach = 0.0;
    double acc_original = 0.0;
    double pw = 0.0; // acc_attach / acc_original; may exceed 1
    std::string eval_desc;
    std::string model_id;
};

// ACC_attach: accuracy of predicting the target class on pattern-attached
// nontarget images of the evaluation split (D_test \ D_n). ACC_original:
// accuracy on the evaluation split's target-class images.
PwReport predictive_power(const Model& m, const Pattern& p, const Dataset& d,
                          const NontargetSubset& dn, const std::string& model_id = "");

struct TransferResult {
    double pw_source = 0.0;
    double pw_target = 0.0;
    double rate = 0.0; // pw_source / pw_target
    bool infinite = false;
};

// The pattern must have been searched on `source`.
TransferResult transfer_rate(const Pattern& p, const Model& source, const Model& target,
                             const Dataset& d, const NontargetSubset& dn);

// One shared search per class, re-clipped at each size.
std::vector<PwReport> size_sweep(const Model& m, const Dataset& d, const NontargetSubset& dn,
                                 int target_class, const std::vector<double>& sizes,
                                 CanvasStrategy strategy, const SearchConfig& cfg,
                                 const std::string& model_id = "");

// Fraction of nontarget eval images driven to the target class by an
// arbitrary transform (trigger stamping, UAP addition, pattern attach).
double transformed_target_rate(const Model& m, const Dataset& d,
                               const std::vector<int>& indices, int target_class,
                               const std::function<Tensor(const Tensor&)>& transform);

std::string pw_csv_header();
std::string pw_csv_row(const PwReport& r);
void write_pw_csv(const std::string& path, const std::vector<PwReport>& reports);
std::string pw_reports_json(const std::vector<PwReport>& reports);

} // namespace iscp
