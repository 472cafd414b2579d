#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "gzslkit/matrix.hpp"
#include "gzslkit/nn.hpp"
#include "gzslkit/rng.hpp"

namespace gzsl::cluster {

// The paper-form seen/unseen margin term saturates (zero gradient) once
// the margin is violated; the hinge form activates there instead.
enum class Ssl2Form { paper, hinge };

std::string to_string(Ssl2Form f);
Ssl2Form ssl2_form_from_string(const std::string& s);

struct ClusterConfig {
    double tau = 0.1;            // softmax temperature
    double eps_sinkhorn = 0.05;  // assignment smoothness
    int sinkhorn_iters = 3;
    double sigma1 = 0.15;  // anchor separation cap
    double sigma2 = 0.25;  // sample-margin floor
    double lambda1 = 1.1;
    double lambda2 = 0.7;
    double aug_noise_std = 0.05;
    double aug_mask_frac = 0.1;  // in [0,1)
    std::size_t batch_size = 128;
    int epochs = 40;
    double lr = 1e-3;
    std::vector<std::size_t> proj_dims;  // empty = identity projection head
    Ssl2Form ssl2_form = Ssl2Form::paper;

    void validate() const;  // throws InvalidConfigError
};

// Unit-norm anchor vectors; rows [0, n_seen) are the seen block, rows
// [n_seen, n_seen+n_unseen) the unseen block. class_map maps prototype
// row -> class id (seen block bijectively; unseen block synthetic ids).
struct PrototypeBank {
    num::Matrix prototypes;
    std::size_t n_seen = 0;
    std::size_t n_unseen = 0;
    bool seen_frozen = false;
    std::vector<int> class_map;

    std::size_t total() const { return n_seen + n_unseen; }
    int prototype_index(int class_id) const;               // throws UnknownClassError
    std::span<const double> anchor_for_class(int class_id) const;
    void check_invariants() const;
};

nlohmann::json bank_to_json(const PrototypeBank& bank);
PrototypeBank bank_from_json(const nlohmann::json& j);
void save_bank(const PrototypeBank& bank, const std::string& path);
PrototypeBank load_bank(const std::string& path);

// Two stochastic feature-space views per input row: additive Gaussian
// noise plus independent coordinate masking, re-projected to the sphere.
struct AugmentedBatch {
    num::Matrix view_t;
    num::Matrix view_s;
};
AugmentedBatch augment_features(const num::Matrix& rows, const ClusterConfig& cfg,
                                num::RngState& rng);

// Entropy-regularized assignment: Q = diag(u) exp(scores/eps) diag(v)
// after `iters` alternating row (1/K) and column (1/B) renormalizations.
// scores is K x B; the returned Q has strictly positive entries and
// exact column marginals (columns are normalized last).
num::Matrix sinkhorn_assign(const num::Matrix& scores, double eps, int iters);

// Swapped-prediction cross-entropy over a batch: codes from one view
// supervise the tempered softmax of the other. Codes are constants for
// the backward pass (stop-gradient). q_t/q_s are K x B assignment
// matrices whose columns scale by B to per-sample codes.
struct SwappedLoss {
    double loss = 0.0;
    num::Matrix d_prototypes;
    num::Matrix d_view_t;
    num::Matrix d_view_s;
};
SwappedLoss swapped_loss(const num::Matrix& x_t, const num::Matrix& x_s,
                         const num::Matrix& prototypes, const num::Matrix& q_t,
                         const num::Matrix& q_s, double tau);

// mean over seen-unseen pairs of min(cos(c_s, c_u), sigma1); gradients
// flow to the unseen block only.
struct Ssl1Loss {
    double loss = 0.0;
    num::Matrix d_unseen;
};
Ssl1Loss ssl1_loss(const PrototypeBank& bank, double sigma1);

// Paper form: mean over (sample, unseen prototype) of
//   max(cos(x, c_{y}) - cos(x, c_u), sigma2).
// Hinge form: mean of max(sigma2 - diff, 0). Rows of x_seen must be in
// the same (projected, unit-norm) space as the prototypes. Gradients are
// w.r.t. the unseen block (the seen block is frozen where this is used).
struct Ssl2Loss {
    double loss = 0.0;
    num::Matrix d_unseen;
};
Ssl2Loss ssl2_loss(const num::Matrix& x_seen, std::span<const int> labels,
                   const PrototypeBank& bank, double sigma2,
                   Ssl2Form form = Ssl2Form::paper);

// Phase 1: swapped-prediction clustering of seen-class features into
// n_seen prototypes. Labels are not used by the optimization; they fix
// the prototype -> class map afterwards (majority vote resolved to a
// bijection by optimal assignment).
struct SeenFit {
    PrototypeBank bank;                  // n_unseen == 0
    std::optional<nn::Mlp> projection;   // nullopt = identity head
};
SeenFit fit_seen_prototypes(const num::Matrix& x, std::span<const int> labels,
                            std::size_t n_seen, const ClusterConfig& cfg,
                            num::RngState& rng);

// Phase 2: clusters unlabeled unseen-class features into n_unseen new
// prototypes under the combined loss
//   swapped + lambda1 * ssl1  -  lambda2 * ssl2      (paper form)
//   swapped + lambda1 * ssl1  +  lambda2 * ssl2      (hinge form)
// The seen block must be frozen and is left bit-identical. The seen
// training features feed the sample-margin term; the projection head
// (when present) is applied frozen.
void fit_unseen_prototypes(PrototypeBank& bank, const num::Matrix& x_unseen,
                           std::size_t n_unseen, const num::Matrix& x_seen,
                           std::span<const int> seen_labels, const nn::Mlp* projection,
                           const ClusterConfig& cfg, num::RngState& rng);

// Projected, unit-normalized representation used by both fit phases.
num::Matrix project_features(const num::Matrix& x, const nn::Mlp* projection);

}  // namespace gzsl::cluster
