#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "gzslkit/clustering.hpp"
#include "gzslkit/dataset.hpp"
#include "gzslkit/gzsl_eval.hpp"
#include "gzslkit/synthesis.hpp"

namespace gzsl::pipe {

struct PipelineConfig {
    cluster::ClusterConfig cluster;
    synth::GanConfig gan;
    nn::SoftmaxTrainConfig final_classifier;
    double train_frac = 0.8;
    double test_frac = 0.2;
    std::size_t n_seen = 0;  // first n of the sorted label set; ignored when lists given
    std::vector<int> seen_classes;
    std::vector<int> unseen_classes;
    std::size_t synth_per_class = 200;
    std::uint64_t seed = 0;
    std::string out_dir;  // artifacts written per stage when set

    void validate() const;
    bool operator==(const PipelineConfig&) const = default;
};

nlohmann::json config_to_json(const PipelineConfig& cfg);
PipelineConfig config_from_json(const nlohmann::json& j);
PipelineConfig load_config(const std::string& path);
void save_config(const PipelineConfig& cfg, const std::string& path);

// FNV-1a over the canonical config serialization (out_dir excluded).
std::string config_digest(const PipelineConfig& cfg);

// Everything trained before synthesis; reused by the sweeps.
struct TrainedStages {
    data::SplitSpec split;
    num::Matrix x_seen_train, x_seen_test, x_unseen;
    std::vector<int> y_seen_train, y_seen_test, y_unseen;
    cluster::PrototypeBank bank;
    std::optional<nn::Mlp> projection;
    nn::Mlp classifier_cl;
    synth::Gan gan;
    data::ClassIndex universe;    // bank class ids (seen + synthetic unseen)
    data::ClassIndex seen_index;  // seen class ids
};

// Stage seeds derive from `master` in a fixed order, so later stages can
// keep drawing from the same stream.
TrainedStages train_stages(const PipelineConfig& cfg, const data::FeatureDataset& dataset,
                           num::RngState& master);
TrainedStages train_stages(const PipelineConfig& cfg, const data::FeatureDataset& dataset);

struct PipelineResult {
    TrainedStages stages;
    data::FeatureDataset synthetic;
    nn::Mlp softmax;
    data::ClassIndex classifier_classes;
    eval::EvalReport report;
};

// split -> seen clustering -> unseen clustering -> classifier pretrain ->
// adversarial training -> synthesis -> classifier training -> evaluation
PipelineResult run_pipeline(const PipelineConfig& cfg, const data::FeatureDataset& dataset);

struct SweepRow {
    double value = 0.0;  // augmentation factor or hyperparameter value
    eval::EvalReport report;
};

// Re-runs synthesis + final classifier + evaluation per factor on one
// trained generator; factor = synthetic samples per class.
std::vector<SweepRow> sweep_augmentation_factor(const PipelineConfig& cfg,
                                                const data::FeatureDataset& dataset,
                                                std::span<const std::size_t> factors);

enum class HyperParam { lambda1, lambda2, lambda3, sigma1, sigma2 };
HyperParam hyper_param_from_string(const std::string& s);
std::string to_string(HyperParam p);
// lambda presets run 0.4..1.5 step 0.05; sigma presets 0.1..0.5 step 0.05
std::vector<double> default_hyper_values(HyperParam p);

// Full pipeline per value with the parameter overridden.
std::vector<SweepRow> sweep_hyper(const PipelineConfig& cfg, const data::FeatureDataset& dataset,
                                  HyperParam param, std::span<const double> values);

std::string sweep_csv(const std::vector<SweepRow>& rows, const std::string& value_name);

}  // namespace gzsl::pipe
