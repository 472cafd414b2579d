#include "gzslkit/gzsl_eval.hpp"

#include <algorithm>
#include <set>

#include "gzslkit/assignment.hpp"
#include "gzslkit/error.hpp"
#include "gzslkit/kernels.hpp"

namespace gzsl::eval {

nlohmann::json EvalReport::to_json() const {
    nlohmann::json j;
    j["acc_s"] = acc_s;
    j["acc_u"] = acc_u;
    j["acc_u_matched"] = acc_u_matched;
    j["acc_u_raw"] = acc_u_raw;
    j["h"] = h;
    nlohmann::json pc = nlohmann::json::object();
    for (const auto& [cls, acc] : per_class) pc[std::to_string(cls)] = acc;
    j["per_class"] = pc;
    j["confusion"] = {{"classes", confusion_classes.ids}, {"counts", confusion}};
    j["n_test_s"] = n_test_s;
    j["n_test_u"] = n_test_u;
    j["config_digest"] = config_digest;
    j["seed"] = seed;
    return j;
}

data::FeatureDataset synthesize_dataset(const nn::Mlp& gen, std::span<const int> classes,
                                        std::size_t n_per_class, synth::ConditioningMode mode,
                                        const data::ClassIndex& universe,
                                        const cluster::PrototypeBank& bank,
                                        const num::Matrix* attributes, num::RngState& rng) {
    data::FeatureDataset out;
    out.features = num::Matrix(classes.size() * n_per_class, gen.output_dim());
    out.labels.reserve(out.features.rows());
    const std::size_t noise_dim = gen.input_dim() -
        synth::conditioning_dim(mode, universe, &bank, attributes);
    std::size_t row = 0;
    for (int cls : classes) {
        const synth::ConditioningVector cond =
            synth::make_condition(cls, mode, universe, &bank, attributes);
        for (std::size_t i = 0; i < n_per_class; ++i, ++row) {
            const std::vector<double> z = num::sample_gaussian(rng, noise_dim);
            const std::vector<double> x = synth::generate(gen, cond, z);
            std::copy(x.begin(), x.end(), out.features.row(row).begin());
            out.labels.push_back(cls);
        }
    }
    return out;
}

AssembledSet assemble_training_set(const num::Matrix& real_seen_x,
                                   std::span<const int> real_seen_y,
                                   const data::FeatureDataset& synth_seen,
                                   const data::FeatureDataset& synth_unseen) {
    const std::size_t d = real_seen_x.cols();
    if ((synth_seen.rows() > 0 && synth_seen.dim() != d) ||
        (synth_unseen.rows() > 0 && synth_unseen.dim() != d))
        throw DimensionMismatchError("assemble_training_set: feature widths disagree");
    if (real_seen_x.rows() != real_seen_y.size())
        throw DimensionMismatchError("assemble_training_set: real label count mismatch");

    AssembledSet out;
    const std::size_t n = real_seen_x.rows() + synth_seen.rows() + synth_unseen.rows();
    out.x = num::Matrix(n, d);
    out.labels.reserve(n);
    out.provenance.reserve(n);
    std::size_t row = 0;
    for (std::size_t i = 0; i < real_seen_x.rows(); ++i, ++row) {
        auto src = real_seen_x.row(i);
        std::copy(src.begin(), src.end(), out.x.row(row).begin());
        out.labels.push_back(real_seen_y[i]);
        out.provenance.push_back(Provenance::real_seen);
    }
    for (std::size_t i = 0; i < synth_seen.rows(); ++i, ++row) {
        auto src = synth_seen.features.row(i);
        std::copy(src.begin(), src.end(), out.x.row(row).begin());
        out.labels.push_back(synth_seen.labels[i]);
        out.provenance.push_back(Provenance::synth_seen);
    }
    for (std::size_t i = 0; i < synth_unseen.rows(); ++i, ++row) {
        auto src = synth_unseen.features.row(i);
        std::copy(src.begin(), src.end(), out.x.row(row).begin());
        out.labels.push_back(synth_unseen.labels[i]);
        out.provenance.push_back(Provenance::synth_unseen);
    }
    return out;
}

nn::Mlp train_softmax(const num::Matrix& x, std::span<const int> labels,
                      const data::ClassIndex& classes, const nn::SoftmaxTrainConfig& cfg,
                      num::RngState& rng) {
    std::vector<int> idx(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i)
        idx[i] = static_cast<int>(classes.index_of(labels[i]));
    nn::SoftmaxTrainConfig linear = cfg;
    linear.hidden.clear();
    return nn::train_softmax_classifier(x, idx, classes.size(), linear, rng);
}

std::vector<int> predict(const nn::Mlp& classifier, const data::ClassIndex& classes,
                         const num::Matrix& x) {
    if (classifier.output_dim() != classes.size())
        throw DimensionMismatchError("predict: classifier output width != class count");
    num::Matrix logits = nn::mlp_forward(classifier, x);
    std::vector<int> preds(x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        auto row = logits.row(i);
        std::size_t best = 0;
        for (std::size_t k = 1; k < row.size(); ++k)
            if (row[k] > row[best]) best = k;  // ties keep the smaller id
        preds[i] = classes.ids[best];
    }
    return preds;
}

std::map<int, double> per_class_accuracy(std::span<const int> preds, std::span<const int> labels,
                                         std::span<const int> classes) {
    if (preds.size() != labels.size())
        throw DimensionMismatchError("per_class_accuracy: length mismatch");
    std::map<int, double> acc;
    for (int cls : classes) {
        std::size_t total = 0, correct = 0;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (labels[i] != cls) continue;
            ++total;
            if (preds[i] == cls) ++correct;
        }
        if (total == 0)
            throw EmptyClassError("per_class_accuracy: class " + std::to_string(cls) +
                                  " has no test samples");
        acc[cls] = static_cast<double>(correct) / static_cast<double>(total);
    }
    return acc;
}

double harmonic_mean(double acc_s, double acc_u) {
    if (acc_s == 0.0 && acc_u == 0.0) return 0.0;
    return 2.0 * acc_u * acc_s / (acc_u + acc_s);
}

EvalReport evaluate_gzsl(const nn::Mlp& classifier, const data::ClassIndex& classifier_classes,
                         const num::Matrix& x_seen_test, std::span<const int> y_seen_test,
                         const num::Matrix& x_unseen_test, std::span<const int> y_unseen_test,
                         const SplitSpec& split) {
    split.validate();
    for (int cls : split.seen_classes) {
        if (!classifier_classes.contains(cls))
            throw MissingClassInTestError("evaluate_gzsl: classifier cannot emit seen class " +
                                          std::to_string(cls));
        if (std::find(y_seen_test.begin(), y_seen_test.end(), cls) == y_seen_test.end())
            throw MissingClassInTestError("evaluate_gzsl: no seen test rows for class " +
                                          std::to_string(cls));
    }
    for (int cls : split.unseen_classes)
        if (std::find(y_unseen_test.begin(), y_unseen_test.end(), cls) == y_unseen_test.end())
            throw MissingClassInTestError("evaluate_gzsl: no unseen test rows for class " +
                                          std::to_string(cls));

    EvalReport report;
    const std::vector<int> preds_s = predict(classifier, classifier_classes, x_seen_test);
    const std::vector<int> preds_u = predict(classifier, classifier_classes, x_unseen_test);
    report.n_test_s = x_seen_test.rows();
    report.n_test_u = x_unseen_test.rows();

    report.per_class = per_class_accuracy(preds_s, y_seen_test, split.seen_classes);
    double sum = 0.0;
    for (int cls : split.seen_classes) sum += report.per_class[cls];
    report.acc_s = sum / static_cast<double>(split.seen_classes.size());

    // Predicted ids outside the seen set are anonymous cluster ids.
    std::set<int> seen_ids(split.seen_classes.begin(), split.seen_classes.end());
    std::vector<int> cluster_ids;
    for (int id : classifier_classes.ids)
        if (!seen_ids.count(id)) cluster_ids.push_back(id);

    const std::size_t n_true = split.unseen_classes.size();
    std::vector<std::size_t> class_count(n_true, 0);
    auto true_idx = [&](int cls) {
        return static_cast<std::size_t>(
            std::find(split.unseen_classes.begin(), split.unseen_classes.end(), cls) -
            split.unseen_classes.begin());
    };
    auto cluster_idx = [&](int id) {
        return static_cast<std::size_t>(
            std::find(cluster_ids.begin(), cluster_ids.end(), id) - cluster_ids.begin());
    };

    // raw identity-map accuracy
    {
        double raw_sum = 0.0;
        for (std::size_t c = 0; c < n_true; ++c) {
            const int cls = split.unseen_classes[c];
            std::size_t total = 0, correct = 0;
            for (std::size_t i = 0; i < y_unseen_test.size(); ++i) {
                if (y_unseen_test[i] != cls) continue;
                ++total;
                if (preds_u[i] == cls) ++correct;
            }
            class_count[c] = total;
            raw_sum += static_cast<double>(correct) / static_cast<double>(total);
        }
        report.acc_u_raw = raw_sum / static_cast<double>(n_true);
    }

    // oracle matching between cluster ids and true unseen labels
    {
        const std::size_t m = std::max(n_true, cluster_ids.size());
        num::Matrix counts(m, m);
        for (std::size_t i = 0; i < y_unseen_test.size(); ++i) {
            if (seen_ids.count(preds_u[i])) continue;
            counts(true_idx(y_unseen_test[i]), cluster_idx(preds_u[i])) += 1.0;
        }
        std::vector<std::size_t> match =
            m == 0 ? std::vector<std::size_t>{} : num::hungarian_max(counts);
        double matched_sum = 0.0;
        for (std::size_t c = 0; c < n_true; ++c) {
            double correct = 0.0;
            if (match[c] < cluster_ids.size()) correct = counts(c, match[c]);
            const double acc = correct / static_cast<double>(class_count[c]);
            report.per_class[split.unseen_classes[c]] = acc;
            matched_sum += acc;
        }
        report.acc_u_matched = matched_sum / static_cast<double>(n_true);
    }

    report.acc_u = report.acc_u_matched;
    report.h = harmonic_mean(report.acc_s, report.acc_u);

    // Unmatched confusion over the union of every id in play.
    {
        std::vector<int> all = split.seen_classes;
        all.insert(all.end(), split.unseen_classes.begin(), split.unseen_classes.end());
        all.insert(all.end(), classifier_classes.ids.begin(), classifier_classes.ids.end());
        report.confusion_classes = data::ClassIndex::from_ids(std::move(all));
        const std::size_t k = report.confusion_classes.size();
        report.confusion.assign(k, std::vector<long long>(k, 0));
        for (std::size_t i = 0; i < y_seen_test.size(); ++i)
            ++report.confusion[report.confusion_classes.index_of(y_seen_test[i])]
                              [report.confusion_classes.index_of(preds_s[i])];
        for (std::size_t i = 0; i < y_unseen_test.size(); ++i)
            ++report.confusion[report.confusion_classes.index_of(y_unseen_test[i])]
                              [report.confusion_classes.index_of(preds_u[i])];
    }
    return report;
}

}  // namespace gzsl::eval
