#pragma once

#include <span>
#include <string>
#include <vector>

#include "gzslkit/clustering.hpp"
#include "gzslkit/dataset.hpp"
#include "gzslkit/matrix.hpp"
#include "gzslkit/nn.hpp"
#include "gzslkit/rng.hpp"

namespace gzsl::synth {

enum class ConditioningMode { one_hot, anchor, attribute };
std::string to_string(ConditioningMode m);
ConditioningMode conditioning_from_string(const std::string& s);

struct GanConfig {
    double lambda_gp = 10.0;  // gradient-penalty weight
    double lambda_cl = 0.6;   // frozen-classifier term
    double lambda3 = 0.9;     // anchor-cosine term
    std::size_t noise_dim = 128;
    int critic_steps = 5;  // critic updates per generator update
    int epochs = 50;
    std::size_t batch_size = 64;
    double lr = 1e-4;  // generator and critic
    double beta1 = 0.9;
    double beta2 = 0.999;
    ConditioningMode conditioning = ConditioningMode::one_hot;
    std::vector<std::size_t> gen_hidden = {2000, 1000};
    std::vector<std::size_t> critic_hidden = {1000};
    nn::Activation gen_output = nn::Activation::relu;  // or linear
    nn::SoftmaxTrainConfig classifier;                 // pretrained seen classifier

    void validate() const;
    bool operator==(const GanConfig&) const = default;
};

// e^y: one-hot over the class universe, the unit-norm anchor row, or a
// per-class attribute row.
struct ConditioningVector {
    std::vector<double> e;
    int class_id = 0;
    ConditioningMode mode = ConditioningMode::one_hot;
};

ConditioningVector make_condition(int class_id, ConditioningMode mode,
                                  const data::ClassIndex& universe,
                                  const cluster::PrototypeBank* bank,
                                  const num::Matrix* attributes);

// x_tilde = G([e; z])
std::vector<double> generate(const nn::Mlp& gen, const ConditioningVector& cond,
                             std::span<const double> z);

struct CriticBatch {
    num::Matrix x;                          // B x d
    std::vector<ConditioningVector> conds;  // one per row
};

struct LossGrads {
    double loss = 0.0;
    nn::Gradients grads;
    std::size_t gp_skipped = 0;  // samples whose penalty gradient was singular
};

// mean D(fake) - mean D(real) + lambda_gp * mean (||grad_xhat D|| - 1)^2,
// with xhat = alpha x_real + (1-alpha) x_fake per index-paired sample and
// a fresh alpha ~ U(0,1) each. Interpolates carry the fake conditioning;
// the penalty norm runs over the feature block only. Minimizing the
// returned loss in the critic parameters is the inner max step of the
// adversarial objective.
LossGrads critic_loss(const nn::Mlp& critic, const CriticBatch& real, const CriticBatch& fake,
                      double lambda_gp, num::RngState& rng);

// 1 - cos(x_tilde, c_y), gradient w.r.t. x_tilde
struct Ssl3Loss {
    double loss = 0.0;
    std::vector<double> d_x;
};
Ssl3Loss ssl3_loss(std::span<const double> x_tilde, const cluster::PrototypeBank& bank,
                   int class_id);

// Mean negative log-likelihood of seen labels under the frozen
// classifier; gradient w.r.t. the synthetic features only.
struct ClLoss {
    double loss = 0.0;
    num::Matrix d_x;
};
ClLoss cl_loss(const nn::Mlp& classifier_frozen, const num::Matrix& x_fake_seen,
               std::span<const int> labels, const data::ClassIndex& seen_index);

struct GenBatch {
    std::vector<int> class_ids;
    std::vector<ConditioningVector> conds;
    num::Matrix z;  // B x noise_dim
};

// -mean D(x_tilde, e) + lambda_cl * CL(seen rows) + lambda3 * SSL3(all rows)
LossGrads generator_loss(const nn::Mlp& gen, const nn::Mlp& critic,
                         const nn::Mlp& classifier_frozen, const cluster::PrototypeBank& bank,
                         const GenBatch& batch, const GanConfig& cfg,
                         const data::ClassIndex& seen_index);

// Softmax classifier over the seen classes, trained on real features and
// frozen afterwards.
nn::Mlp pretrain_classifier(const num::Matrix& x_seen, std::span<const int> labels,
                            const data::ClassIndex& seen_index, const GanConfig& cfg,
                            num::RngState& rng);

struct Gan {
    nn::Mlp gen;
    nn::Mlp critic;
    std::size_t gp_skipped = 0;  // total skipped penalty gradients
};

// Alternating optimization: critic_steps critic updates per generator
// update, Adam on both nets. Real data comes from seen classes only;
// generator batches sample classes uniformly over the whole bank, so
// unseen classes train through the critic score and the anchor term.
Gan train_gan(const num::Matrix& x_real_seen, std::span<const int> labels,
              const cluster::PrototypeBank& bank, const nn::Mlp& classifier_frozen,
              const GanConfig& cfg, const data::ClassIndex& universe,
              const data::ClassIndex& seen_index, const num::Matrix* attributes,
              num::RngState& rng);

std::size_t conditioning_dim(ConditioningMode mode, const data::ClassIndex& universe,
                             const cluster::PrototypeBank* bank, const num::Matrix* attributes);

}  // namespace gzsl::synth
