#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "gzslkit/dataset.hpp"
#include "gzslkit/nn.hpp"
#include "gzslkit/synthesis.hpp"

namespace gzsl::eval {

using data::SplitSpec;

// Per-class GZSL metrics. Unseen clusters discovered transductively are
// anonymous, so the unseen accuracies are computed after an oracle
// optimal matching between predicted unseen ids and true unseen labels
// on the test set; acc_u_raw keeps the unmatched identity-map number and
// the confusion matrix stays unmatched.
struct EvalReport {
    std::map<int, double> per_class;  // unseen entries are matched accuracies
    double acc_s = 0.0;
    double acc_u = 0.0;  // equals acc_u_matched
    double acc_u_matched = 0.0;
    double acc_u_raw = 0.0;
    double h = 0.0;
    data::ClassIndex confusion_classes;             // row/col order of `confusion`
    std::vector<std::vector<long long>> confusion;  // true x predicted counts
    std::size_t n_test_s = 0;
    std::size_t n_test_u = 0;
    std::string config_digest;
    std::uint64_t seed = 0;

    nlohmann::json to_json() const;
};

// n_per_class generated feature rows per requested class, labels attached.
data::FeatureDataset synthesize_dataset(const nn::Mlp& gen, std::span<const int> classes,
                                        std::size_t n_per_class, synth::ConditioningMode mode,
                                        const data::ClassIndex& universe,
                                        const cluster::PrototypeBank& bank,
                                        const num::Matrix* attributes, num::RngState& rng);

enum class Provenance { real_seen, synth_seen, synth_unseen };

struct AssembledSet {
    num::Matrix x;
    std::vector<int> labels;
    std::vector<Provenance> provenance;
};

AssembledSet assemble_training_set(const num::Matrix& real_seen_x,
                                   std::span<const int> real_seen_y,
                                   const data::FeatureDataset& synth_seen,
                                   const data::FeatureDataset& synth_unseen);

// Linear softmax classifier over `classes`, trained by Adam to the
// configured convergence criterion.
nn::Mlp train_softmax(const num::Matrix& x, std::span<const int> labels,
                      const data::ClassIndex& classes, const nn::SoftmaxTrainConfig& cfg,
                      num::RngState& rng);

// argmax_y P(y | x); ties break toward the smallest class id.
std::vector<int> predict(const nn::Mlp& classifier, const data::ClassIndex& classes,
                         const num::Matrix& x);

// Fraction of each class's samples predicted correctly. Every class in
// `classes` must appear among the labels.
std::map<int, double> per_class_accuracy(std::span<const int> preds, std::span<const int> labels,
                                         std::span<const int> classes);

// 2ab/(a+b), zero when both are zero. Works on fractions or percents as
// long as both sides share the scale.
double harmonic_mean(double acc_s, double acc_u);

// Both settings share one classifier: setting S tests the held-out seen
// rows, setting U the unseen rows.
EvalReport evaluate_gzsl(const nn::Mlp& classifier, const data::ClassIndex& classifier_classes,
                         const num::Matrix& x_seen_test, std::span<const int> y_seen_test,
                         const num::Matrix& x_unseen_test, std::span<const int> y_unseen_test,
                         const SplitSpec& split);

}  // namespace gzsl::eval
