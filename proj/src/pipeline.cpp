#include "gzslkit/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "gzslkit/error.hpp"

namespace gzsl::pipe {

void PipelineConfig::validate() const {
    cluster.validate();
    gan.validate();
    if (train_frac <= 0.0 || test_frac <= 0.0 || train_frac + test_frac > 1.0 + 1e-12)
        throw InvalidConfigError("pipeline: train/test fractions must be positive, sum <= 1");
    if (seen_classes.empty() != unseen_classes.empty())
        throw InvalidConfigError("pipeline: give both class lists or neither");
    if (seen_classes.empty() && n_seen == 0)
        throw InvalidConfigError("pipeline: set n_seen or explicit class lists");
}

namespace {

nlohmann::json softmax_cfg_to_json(const nn::SoftmaxTrainConfig& c) {
    return {{"hidden", c.hidden},       {"lr", c.lr},   {"max_epochs", c.max_epochs},
            {"batch_size", c.batch_size}, {"tol", c.tol}, {"beta1", c.beta1},
            {"beta2", c.beta2}};
}

nn::SoftmaxTrainConfig softmax_cfg_from_json(const nlohmann::json& j) {
    nn::SoftmaxTrainConfig c;
    c.hidden = j.value("hidden", c.hidden);
    c.lr = j.value("lr", c.lr);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.tol = j.value("tol", c.tol);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    return c;
}

}  // namespace

nlohmann::json config_to_json(const PipelineConfig& cfg) {
    nlohmann::json j;
    j["cluster"] = {{"tau", cfg.cluster.tau},
                    {"eps_sinkhorn", cfg.cluster.eps_sinkhorn},
                    {"sinkhorn_iters", cfg.cluster.sinkhorn_iters},
                    {"sigma1", cfg.cluster.sigma1},
                    {"sigma2", cfg.cluster.sigma2},
                    {"lambda1", cfg.cluster.lambda1},
                    {"lambda2", cfg.cluster.lambda2},
                    {"aug_noise_std", cfg.cluster.aug_noise_std},
                    {"aug_mask_frac", cfg.cluster.aug_mask_frac},
                    {"batch_size", cfg.cluster.batch_size},
                    {"epochs", cfg.cluster.epochs},
                    {"lr", cfg.cluster.lr},
                    {"proj_dims", cfg.cluster.proj_dims},
                    {"ssl2_form", cluster::to_string(cfg.cluster.ssl2_form)}};
    j["gan"] = {{"lambda_gp", cfg.gan.lambda_gp},
                {"lambda_cl", cfg.gan.lambda_cl},
                {"lambda3", cfg.gan.lambda3},
                {"noise_dim", cfg.gan.noise_dim},
                {"critic_steps", cfg.gan.critic_steps},
                {"epochs", cfg.gan.epochs},
                {"batch_size", cfg.gan.batch_size},
                {"lr", cfg.gan.lr},
                {"beta1", cfg.gan.beta1},
                {"beta2", cfg.gan.beta2},
                {"conditioning", synth::to_string(cfg.gan.conditioning)},
                {"gen_hidden", cfg.gan.gen_hidden},
                {"critic_hidden", cfg.gan.critic_hidden},
                {"gen_output", nn::to_string(cfg.gan.gen_output)},
                {"classifier", softmax_cfg_to_json(cfg.gan.classifier)}};
    j["final_classifier"] = softmax_cfg_to_json(cfg.final_classifier);
    j["split"] = {{"train_frac", cfg.train_frac},
                  {"test_frac", cfg.test_frac},
                  {"n_seen", cfg.n_seen},
                  {"seen_classes", cfg.seen_classes},
                  {"unseen_classes", cfg.unseen_classes}};
    j["synth_per_class"] = cfg.synth_per_class;
    j["seed"] = cfg.seed;
    j["out_dir"] = cfg.out_dir;
    return j;
}

PipelineConfig config_from_json(const nlohmann::json& j) {
    PipelineConfig cfg;
    if (j.contains("cluster")) {
        const auto& c = j["cluster"];
        cfg.cluster.tau = c.value("tau", cfg.cluster.tau);
        cfg.cluster.eps_sinkhorn = c.value("eps_sinkhorn", cfg.cluster.eps_sinkhorn);
        cfg.cluster.sinkhorn_iters = c.value("sinkhorn_iters", cfg.cluster.sinkhorn_iters);
        cfg.cluster.sigma1 = c.value("sigma1", cfg.cluster.sigma1);
        cfg.cluster.sigma2 = c.value("sigma2", cfg.cluster.sigma2);
        cfg.cluster.lambda1 = c.value("lambda1", cfg.cluster.lambda1);
        cfg.cluster.lambda2 = c.value("lambda2", cfg.cluster.lambda2);
        cfg.cluster.aug_noise_std = c.value("aug_noise_std", cfg.cluster.aug_noise_std);
        cfg.cluster.aug_mask_frac = c.value("aug_mask_frac", cfg.cluster.aug_mask_frac);
        cfg.cluster.batch_size = c.value("batch_size", cfg.cluster.batch_size);
        cfg.cluster.epochs = c.value("epochs", cfg.cluster.epochs);
        cfg.cluster.lr = c.value("lr", cfg.cluster.lr);
        cfg.cluster.proj_dims = c.value("proj_dims", cfg.cluster.proj_dims);
        if (c.contains("ssl2_form"))
            cfg.cluster.ssl2_form = cluster::ssl2_form_from_string(c["ssl2_form"].get<std::string>());
    }
    if (j.contains("gan")) {
        const auto& g = j["gan"];
        cfg.gan.lambda_gp = g.value("lambda_gp", cfg.gan.lambda_gp);
        cfg.gan.lambda_cl = g.value("lambda_cl", cfg.gan.lambda_cl);
        cfg.gan.lambda3 = g.value("lambda3", cfg.gan.lambda3);
        cfg.gan.noise_dim = g.value("noise_dim", cfg.gan.noise_dim);
        cfg.gan.critic_steps = g.value("critic_steps", cfg.gan.critic_steps);
        cfg.gan.epochs = g.value("epochs", cfg.gan.epochs);
        cfg.gan.batch_size = g.value("batch_size", cfg.gan.batch_size);
        cfg.gan.lr = g.value("lr", cfg.gan.lr);
        cfg.gan.beta1 = g.value("beta1", cfg.gan.beta1);
        cfg.gan.beta2 = g.value("beta2", cfg.gan.beta2);
        if (g.contains("conditioning"))
            cfg.gan.conditioning = synth::conditioning_from_string(g["conditioning"].get<std::string>());
        cfg.gan.gen_hidden = g.value("gen_hidden", cfg.gan.gen_hidden);
        cfg.gan.critic_hidden = g.value("critic_hidden", cfg.gan.critic_hidden);
        if (g.contains("gen_output"))
            cfg.gan.gen_output = nn::activation_from_string(g["gen_output"].get<std::string>());
        if (g.contains("classifier")) cfg.gan.classifier = softmax_cfg_from_json(g["classifier"]);
    }
    if (j.contains("final_classifier"))
        cfg.final_classifier = softmax_cfg_from_json(j["final_classifier"]);
    if (j.contains("split")) {
        const auto& s = j["split"];
        cfg.train_frac = s.value("train_frac", cfg.train_frac);
        cfg.test_frac = s.value("test_frac", cfg.test_frac);
        cfg.n_seen = s.value("n_seen", cfg.n_seen);
        cfg.seen_classes = s.value("seen_classes", cfg.seen_classes);
        cfg.unseen_classes = s.value("unseen_classes", cfg.unseen_classes);
    }
    cfg.synth_per_class = j.value("synth_per_class", cfg.synth_per_class);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.out_dir = j.value("out_dir", cfg.out_dir);
    return cfg;
}

PipelineConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("load_config: cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("load_config: ") + e.what());
    }
    return config_from_json(j);
}

void save_config(const PipelineConfig& cfg, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("save_config: cannot open " + path);
    out << config_to_json(cfg).dump(1);
}

std::string config_digest(const PipelineConfig& cfg) {
    nlohmann::json j = config_to_json(cfg);
    j.erase("out_dir");
    const std::string dump = j.dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : dump) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

namespace {

struct ResolvedSplit {
    data::SplitSpec split;
    std::vector<std::size_t> seen_train, seen_test, unseen_rows;
};

ResolvedSplit resolve_split(const PipelineConfig& cfg, const data::FeatureDataset& dataset,
                            std::uint64_t split_seed) {
    ResolvedSplit r;
    if (!cfg.seen_classes.empty()) {
        r.split.seen_classes = cfg.seen_classes;
        r.split.unseen_classes = cfg.unseen_classes;
    } else {
        const data::ClassIndex all = data::ClassIndex::from_labels(dataset.labels);
        if (cfg.n_seen == 0 || cfg.n_seen >= all.size())
            throw InvalidConfigError("pipeline: n_seen must satisfy 0 < n_seen < class count");
        r.split.seen_classes.assign(all.ids.begin(), all.ids.begin() + static_cast<long>(cfg.n_seen));
        r.split.unseen_classes.assign(all.ids.begin() + static_cast<long>(cfg.n_seen), all.ids.end());
    }
    r.split.train_frac = cfg.train_frac;
    r.split.test_frac = cfg.test_frac;
    r.split.seed = split_seed;
    r.split.validate();

    data::SeenSplit seen = data::stratified_split(dataset.labels, r.split);
    r.seen_train = std::move(seen.train_rows);
    r.seen_test = std::move(seen.test_rows);
    std::set<int> unseen(r.split.unseen_classes.begin(), r.split.unseen_classes.end());
    for (std::size_t i = 0; i < dataset.labels.size(); ++i)
        if (unseen.count(dataset.labels[i])) r.unseen_rows.push_back(i);
    if (r.unseen_rows.empty())
        throw EmptyDatasetError("pipeline: no samples carry an unseen-class label");
    return r;
}

num::Matrix gather(const num::Matrix& x, std::span<const std::size_t> rows) {
    num::Matrix out(rows.size(), x.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        auto src = x.row(rows[i]);
        std::copy(src.begin(), src.end(), out.row(i).begin());
    }
    return out;
}

std::vector<int> gather_labels(std::span<const int> labels, std::span<const std::size_t> rows) {
    std::vector<int> out(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) out[i] = labels[rows[i]];
    return out;
}

}  // namespace

TrainedStages train_stages(const PipelineConfig& cfg, const data::FeatureDataset& dataset) {
    cfg.validate();
    dataset.check_consistent();

    num::RngState master(cfg.seed);
    num::RngState rng_split = master.split();
    num::RngState rng_cluster_seen = master.split();
    num::RngState rng_cluster_unseen = master.split();
    num::RngState rng_classifier = master.split();
    num::RngState rng_gan = master.split();

    TrainedStages st;
    ResolvedSplit rs = resolve_split(cfg, dataset, rng_split.seed());
    st.split = rs.split;
    st.x_seen_train = gather(dataset.features, rs.seen_train);
    st.y_seen_train = gather_labels(dataset.labels, rs.seen_train);
    st.x_seen_test = gather(dataset.features, rs.seen_test);
    st.y_seen_test = gather_labels(dataset.labels, rs.seen_test);
    st.x_unseen = gather(dataset.features, rs.unseen_rows);
    st.y_unseen = gather_labels(dataset.labels, rs.unseen_rows);
    st.seen_index = data::ClassIndex::from_ids(st.split.seen_classes);

    cluster::SeenFit fit = cluster::fit_seen_prototypes(
        st.x_seen_train, st.y_seen_train, st.split.seen_classes.size(), cfg.cluster,
        rng_cluster_seen);
    st.bank = std::move(fit.bank);
    st.projection = std::move(fit.projection);
    st.bank.seen_frozen = true;
    cluster::fit_unseen_prototypes(st.bank, st.x_unseen, st.split.unseen_classes.size(),
                                   st.x_seen_train, st.y_seen_train,
                                   st.projection ? &*st.projection : nullptr, cfg.cluster,
                                   rng_cluster_unseen);

    st.classifier_cl = synth::pretrain_classifier(st.x_seen_train, st.y_seen_train, st.seen_index,
                                                  cfg.gan, rng_classifier);
    st.universe = data::ClassIndex::from_ids(st.bank.class_map);
    st.gan = synth::train_gan(st.x_seen_train, st.y_seen_train, st.bank, st.classifier_cl,
                              cfg.gan, st.universe, st.seen_index,
                              dataset.attributes ? &*dataset.attributes : nullptr, rng_gan);
    return st;
}

namespace {

struct SynthEval {
    data::FeatureDataset synthetic;
    nn::Mlp softmax;
    data::ClassIndex classifier_classes;
    eval::EvalReport report;
};

SynthEval synth_and_evaluate(const TrainedStages& st, const PipelineConfig& cfg,
                             const data::FeatureDataset& dataset, std::size_t n_per_class,
                             num::RngState& rng_synth, num::RngState& rng_softmax) {
    SynthEval se;
    const num::Matrix* attrs = dataset.attributes ? &*dataset.attributes : nullptr;
    if (n_per_class > 0) {
        se.synthetic = eval::synthesize_dataset(st.gan.gen, st.universe.ids, n_per_class,
                                                cfg.gan.conditioning, st.universe, st.bank, attrs,
                                                rng_synth);
    } else {
        se.synthetic.features = num::Matrix(0, dataset.dim());
    }

    std::set<int> seen(st.split.seen_classes.begin(), st.split.seen_classes.end());
    data::FeatureDataset synth_seen, synth_unseen;
    synth_seen.features = num::Matrix(0, dataset.dim());
    synth_unseen.features = num::Matrix(0, dataset.dim());
    {
        std::vector<std::size_t> seen_rows, unseen_rows;
        for (std::size_t i = 0; i < se.synthetic.rows(); ++i)
            (seen.count(se.synthetic.labels[i]) ? seen_rows : unseen_rows).push_back(i);
        if (!seen_rows.empty()) synth_seen = data::subset(se.synthetic, seen_rows);
        if (!unseen_rows.empty()) synth_unseen = data::subset(se.synthetic, unseen_rows);
    }

    eval::AssembledSet assembled =
        eval::assemble_training_set(st.x_seen_train, st.y_seen_train, synth_seen, synth_unseen);
    se.classifier_classes = data::ClassIndex::from_labels(assembled.labels);
    se.softmax = eval::train_softmax(assembled.x, assembled.labels, se.classifier_classes,
                                     cfg.final_classifier, rng_softmax);
    se.report = eval::evaluate_gzsl(se.softmax, se.classifier_classes, st.x_seen_test,
                                    st.y_seen_test, st.x_unseen, st.y_unseen, st.split);
    se.report.config_digest = config_digest(cfg);
    se.report.seed = cfg.seed;
    return se;
}

void write_artifacts(const PipelineResult& result, const PipelineConfig& cfg) {
    namespace fs = std::filesystem;
    fs::create_directories(cfg.out_dir);
    const fs::path dir(cfg.out_dir);
    cluster::save_bank(result.stages.bank, (dir / "bank.json").string());
    if (result.stages.projection)
        nn::save_mlp(*result.stages.projection, (dir / "projection.json").string());
    nn::save_mlp(result.stages.classifier_cl, (dir / "classifier_cl.json").string());
    {
        nlohmann::json j;
        j["model"] = nn::mlp_to_json(result.stages.gan.gen);
        j["gan_config"] = config_to_json(cfg)["gan"];
        std::ofstream out(dir / "gen.json");
        out << j.dump(1);
    }
    {
        nlohmann::json j;
        j["model"] = nn::mlp_to_json(result.stages.gan.critic);
        j["gan_config"] = config_to_json(cfg)["gan"];
        std::ofstream out(dir / "critic.json");
        out << j.dump(1);
    }
    nn::save_mlp(result.softmax, (dir / "classifier_final.json").string());
    if (result.synthetic.rows() > 0)
        data::save_features(result.synthetic, (dir / "synthetic.fvec1").string(),
                            data::FileFormat::fvec1);
    save_config(cfg, (dir / "config.json").string());
    std::ofstream out(dir / "report.json");
    out << result.report.to_json().dump(1) << "\n";
}

}  // namespace

PipelineResult run_pipeline(const PipelineConfig& cfg, const data::FeatureDataset& dataset) {
    PipelineResult result;
    result.stages = train_stages(cfg, dataset);

    // synth/softmax stage seeds derive from the same master stream order
    num::RngState master(cfg.seed);
    for (int i = 0; i < 5; ++i) master.split();  // stage seeds consumed by train_stages
    num::RngState rng_synth = master.split();
    num::RngState rng_softmax = master.split();

    SynthEval se = synth_and_evaluate(result.stages, cfg, dataset, cfg.synth_per_class, rng_synth,
                                      rng_softmax);
    result.synthetic = std::move(se.synthetic);
    result.softmax = std::move(se.softmax);
    result.classifier_classes = std::move(se.classifier_classes);
    result.report = std::move(se.report);

    if (!cfg.out_dir.empty()) write_artifacts(result, cfg);
    return result;
}

std::vector<SweepRow> sweep_augmentation_factor(const PipelineConfig& cfg,
                                                const data::FeatureDataset& dataset,
                                                std::span<const std::size_t> factors) {
    TrainedStages st = train_stages(cfg, dataset);
    num::RngState master(cfg.seed);
    for (int i = 0; i < 5; ++i) master.split();
    num::RngState sweep_master = master.split();

    std::vector<SweepRow> rows;
    for (std::size_t factor : factors) {
        num::RngState rng_synth = sweep_master.split();
        num::RngState rng_softmax = sweep_master.split();
        SynthEval se = synth_and_evaluate(st, cfg, dataset, factor, rng_synth, rng_softmax);
        rows.push_back({static_cast<double>(factor), std::move(se.report)});
    }
    return rows;
}

HyperParam hyper_param_from_string(const std::string& s) {
    if (s == "lambda1") return HyperParam::lambda1;
    if (s == "lambda2") return HyperParam::lambda2;
    if (s == "lambda3") return HyperParam::lambda3;
    if (s == "sigma1") return HyperParam::sigma1;
    if (s == "sigma2") return HyperParam::sigma2;
    throw InvalidConfigError("unknown hyperparameter: " + s);
}

std::string to_string(HyperParam p) {
    switch (p) {
        case HyperParam::lambda1: return "lambda1";
        case HyperParam::lambda2: return "lambda2";
        case HyperParam::lambda3: return "lambda3";
        case HyperParam::sigma1: return "sigma1";
        case HyperParam::sigma2: return "sigma2";
    }
    return "lambda1";
}

std::vector<double> default_hyper_values(HyperParam p) {
    std::vector<double> values;
    const bool lambda = p == HyperParam::lambda1 || p == HyperParam::lambda2 ||
                        p == HyperParam::lambda3;
    const double lo = lambda ? 0.4 : 0.1;
    const double hi = lambda ? 1.5 : 0.5;
    for (int i = 0;; ++i) {
        const double v = lo + 0.05 * i;
        if (v > hi + 1e-9) break;
        values.push_back(v);
    }
    return values;
}

std::vector<SweepRow> sweep_hyper(const PipelineConfig& cfg, const data::FeatureDataset& dataset,
                                  HyperParam param, std::span<const double> values) {
    std::vector<SweepRow> rows;
    for (double v : values) {
        PipelineConfig varied = cfg;
        varied.out_dir.clear();
        switch (param) {
            case HyperParam::lambda1: varied.cluster.lambda1 = v; break;
            case HyperParam::lambda2: varied.cluster.lambda2 = v; break;
            case HyperParam::lambda3: varied.gan.lambda3 = v; break;
            case HyperParam::sigma1: varied.cluster.sigma1 = v; break;
            case HyperParam::sigma2: varied.cluster.sigma2 = v; break;
        }
        rows.push_back({v, run_pipeline(varied, dataset).report});
    }
    return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows, const std::string& value_name) {
    std::string out = value_name + ",acc_s,acc_u,h\n";
    char buf[128];
    for (const auto& row : rows) {
        std::snprintf(buf, sizeof buf, "%.10g,%.6f,%.6f,%.6f\n", row.value, row.report.acc_s,
                      row.report.acc_u, row.report.h);
        out += buf;
    }
    return out;
}

}  // namespace gzsl::pipe
