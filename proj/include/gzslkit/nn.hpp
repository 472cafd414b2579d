#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "gzslkit/matrix.hpp"
#include "gzslkit/rng.hpp"

namespace gzsl::nn {

enum class Activation { linear, relu, leaky_relu };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

// Fully-connected network. Layer l maps dims[l] -> dims[l+1] via
// act_l(W_l x + b_l); W_l is stored dims[l+1] x dims[l].
//
// Derivatives of relu / leaky_relu at exactly zero pre-activation take
// the positive-side value.
struct Mlp {
    std::vector<std::size_t> dims;
    std::vector<num::Matrix> weights;
    std::vector<std::vector<double>> biases;
    std::vector<Activation> activations;
    double leaky_slope = 0.2;

    std::size_t num_layers() const { return weights.size(); }
    std::size_t input_dim() const { return dims.front(); }
    std::size_t output_dim() const { return dims.back(); }

    void check_consistent() const;
    bool params_finite() const;

    bool operator==(const Mlp&) const = default;
};

// Weights from a truncated normal (resampled beyond two sigma), biases zero.
Mlp make_mlp(std::vector<std::size_t> dims, std::vector<Activation> activations,
             num::RngState& rng, double init_std = 0.01, double leaky_slope = 0.2);

struct ForwardCache {
    num::Matrix input;              // B x dims[0]
    std::vector<num::Matrix> pre;   // Z_l = A_{l-1} W_l^T + b_l
    std::vector<num::Matrix> post;  // A_l = act_l(Z_l)
};

// Rows of x are samples. Returns the final activations; fills `cache`
// when given so a backward pass can follow.
num::Matrix mlp_forward(const Mlp& net, const num::Matrix& x, ForwardCache* cache = nullptr);
std::vector<double> mlp_forward_one(const Mlp& net, std::span<const double> x);

struct Gradients {
    std::vector<num::Matrix> d_weights;
    std::vector<std::vector<double>> d_biases;
    num::Matrix d_input;  // B x dims[0]
};

Gradients zero_gradients(const Mlp& net, std::size_t batch_rows = 0);
void accumulate(Gradients& into, const Gradients& g, double scale = 1.0);

// Reverse pass for the scalar loss whose gradient w.r.t. the network
// output is `upstream` (B x dims.back()).
Gradients mlp_backward(const Mlp& net, const ForwardCache& cache, const num::Matrix& upstream);

// Exact gradient of a scalar-output net w.r.t. its input.
std::vector<double> input_grad(const Mlp& net, std::span<const double> x);

// Gradient penalty (||grad_x D(x)|| - target)^2 with analytic parameter
// gradients via a second reverse pass. Piecewise-linear activations make
// the activation masks locally constant, so bias gradients vanish and
// the weight recurrence below is exact almost everywhere.
//
// Samples whose input-gradient norm falls below 1e-12 keep their penalty
// value but contribute no parameter gradient (the norm derivative is
// singular there); they are counted in `singular`.
//
// Only the first `penalized_coords` input coordinates enter the norm
// (the critic input is [features; conditioning] and the penalty applies
// to the feature block).
struct GpBatchResult {
    double mean_penalty = 0.0;
    Gradients grads;  // d(mean penalty)/d(params); d_input unused
    std::size_t singular = 0;
};
GpBatchResult gradient_penalty(const Mlp& critic, const num::Matrix& xhat,
                               double target_norm, std::size_t penalized_coords);

struct GpResult {
    double penalty = 0.0;
    Gradients grads;
    bool singular = false;
};
GpResult gp_param_grads(const Mlp& critic, std::span<const double> xhat, double target_norm);

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Standard Adam with bias correction over a fixed list of parameter blocks.
class AdamState {
public:
    AdamState() = default;
    AdamState(std::vector<std::size_t> block_sizes, AdamConfig cfg);
    AdamState(const Mlp& net, AdamConfig cfg);

    void step(std::span<const std::span<double>> params,
              std::span<const std::span<const double>> grads);
    std::uint64_t step_count() const { return t_; }
    const AdamConfig& config() const { return cfg_; }

private:
    AdamConfig cfg_;
    std::vector<std::vector<double>> m_, v_;
    std::uint64_t t_ = 0;
};

// One Adam update on every weight/bias block; throws NonFiniteError if
// any parameter leaves the finite range.
void adam_step(Mlp& net, const Gradients& grads, AdamState& state);

// Pointers to every scalar parameter in block order (W0, b0, W1, b1, ...).
std::vector<double*> param_ptrs(Mlp& net);
std::vector<double> flatten(const Gradients& grads);

// Central-difference check of `analytic` against f at the current params.
// Error metric: |a - fd| / max(|a|, |fd|, floor) — relative above the
// floor, absolute below it. Checks all coordinates, or a seeded random
// subset of `max_coords` when that is smaller.
double grad_check(const std::function<double()>& f, std::span<double* const> params,
                  std::span<const double> analytic, double h, double floor = 1e-3,
                  std::size_t max_coords = 0, std::uint64_t subset_seed = 0);

// Mean cross-entropy of row-wise softmax(logits) against integer labels,
// with the gradient w.r.t. logits.
struct SoftmaxXent {
    double loss = 0.0;
    num::Matrix d_logits;
};
SoftmaxXent softmax_xent(const num::Matrix& logits, std::span<const int> label_indices);

// Mini-batch Adam training of a softmax classifier (hidden empty =
// linear). Stops when the mean epoch loss changes by less than `tol`
// or after max_epochs.
struct SoftmaxTrainConfig {
    std::vector<std::size_t> hidden;
    double lr = 1e-3;
    int max_epochs = 300;
    std::size_t batch_size = 128;
    double tol = 1e-6;
    double beta1 = 0.9;
    double beta2 = 0.999;

    bool operator==(const SoftmaxTrainConfig&) const = default;
};
Mlp train_softmax_classifier(const num::Matrix& x, std::span<const int> label_indices,
                             std::size_t n_classes, const SoftmaxTrainConfig& cfg,
                             num::RngState& rng);

// Versioned JSON model format; decimal parameter arrays round-trip to at
// least 15 significant digits.
nlohmann::json mlp_to_json(const Mlp& net);
Mlp mlp_from_json(const nlohmann::json& j);
void save_mlp(const Mlp& net, const std::string& path);
Mlp load_mlp(const std::string& path);

}  // namespace gzsl::nn
