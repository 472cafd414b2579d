#include "gzslkit/nn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "gzslkit/error.hpp"
#include "gzslkit/kernels.hpp"

namespace gzsl::nn {

namespace {

double act_value(Activation a, double z, double slope) {
    switch (a) {
        case Activation::linear: return z;
        case Activation::relu: return z > 0.0 ? z : 0.0;
        case Activation::leaky_relu: return z >= 0.0 ? z : slope * z;
    }
    return z;
}

double act_deriv(Activation a, double z, double slope) {
    switch (a) {
        case Activation::linear: return 1.0;
        case Activation::relu: return z >= 0.0 ? 1.0 : 0.0;
        case Activation::leaky_relu: return z >= 0.0 ? 1.0 : slope;
    }
    return 1.0;
}

}  // namespace

std::string to_string(Activation a) {
    switch (a) {
        case Activation::linear: return "linear";
        case Activation::relu: return "relu";
        case Activation::leaky_relu: return "leaky_relu";
    }
    return "linear";
}

Activation activation_from_string(const std::string& s) {
    if (s == "linear") return Activation::linear;
    if (s == "relu") return Activation::relu;
    if (s == "leaky_relu") return Activation::leaky_relu;
    throw ParseError("unknown activation tag: " + s);
}

void Mlp::check_consistent() const {
    if (dims.size() < 2) throw DimensionMismatchError("Mlp: needs at least one layer");
    const std::size_t L = dims.size() - 1;
    if (weights.size() != L || biases.size() != L || activations.size() != L)
        throw DimensionMismatchError("Mlp: layer count mismatch");
    for (std::size_t l = 0; l < L; ++l) {
        if (weights[l].rows() != dims[l + 1] || weights[l].cols() != dims[l])
            throw DimensionMismatchError("Mlp: weight shape breaks the dims chain");
        if (biases[l].size() != dims[l + 1])
            throw DimensionMismatchError("Mlp: bias length breaks the dims chain");
    }
}

bool Mlp::params_finite() const {
    for (const auto& w : weights)
        if (!w.all_finite()) return false;
    for (const auto& b : biases)
        for (double v : b)
            if (!std::isfinite(v)) return false;
    return true;
}

Mlp make_mlp(std::vector<std::size_t> dims, std::vector<Activation> activations,
             num::RngState& rng, double init_std, double leaky_slope) {
    Mlp net;
    net.dims = std::move(dims);
    net.activations = std::move(activations);
    net.leaky_slope = leaky_slope;
    const std::size_t L = net.dims.size() - 1;
    if (net.activations.size() != L)
        throw DimensionMismatchError("make_mlp: one activation per layer required");
    net.weights.reserve(L);
    net.biases.reserve(L);
    for (std::size_t l = 0; l < L; ++l) {
        num::Matrix w(net.dims[l + 1], net.dims[l]);
        for (double& v : w.data()) {
            double z;
            do {
                z = rng.normal();
            } while (std::abs(z) > 2.0);
            v = init_std * z;
        }
        net.weights.push_back(std::move(w));
        net.biases.emplace_back(net.dims[l + 1], 0.0);
    }
    net.check_consistent();
    return net;
}

num::Matrix mlp_forward(const Mlp& net, const num::Matrix& x, ForwardCache* cache) {
    if (x.cols() != net.input_dim())
        throw DimensionMismatchError("mlp_forward: input width != dims[0]");
    const std::size_t L = net.num_layers();
    if (cache) {
        cache->input = x;
        cache->pre.assign(L, {});
        cache->post.assign(L, {});
    }
    num::Matrix a = x;
    for (std::size_t l = 0; l < L; ++l) {
        num::Matrix z = num::matmul_nt(a, net.weights[l]);
        for (std::size_t i = 0; i < z.rows(); ++i) {
            double* zr = z.row(i).data();
            for (std::size_t j = 0; j < z.cols(); ++j) zr[j] += net.biases[l][j];
        }
        num::Matrix out(z.rows(), z.cols());
        for (std::size_t i = 0; i < z.size(); ++i)
            out.data()[i] = act_value(net.activations[l], z.data()[i], net.leaky_slope);
        if (cache) {
            cache->pre[l] = std::move(z);
            cache->post[l] = out;
        }
        a = std::move(out);
    }
    return a;
}

std::vector<double> mlp_forward_one(const Mlp& net, std::span<const double> x) {
    num::Matrix m(1, x.size());
    std::copy(x.begin(), x.end(), m.data().begin());
    num::Matrix out = mlp_forward(net, m);
    return {out.data().begin(), out.data().end()};
}

Gradients zero_gradients(const Mlp& net, std::size_t batch_rows) {
    Gradients g;
    g.d_weights.reserve(net.num_layers());
    g.d_biases.reserve(net.num_layers());
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
        g.d_weights.emplace_back(net.weights[l].rows(), net.weights[l].cols());
        g.d_biases.emplace_back(net.biases[l].size(), 0.0);
    }
    g.d_input = num::Matrix(batch_rows, net.input_dim());
    return g;
}

void accumulate(Gradients& into, const Gradients& g, double scale) {
    for (std::size_t l = 0; l < into.d_weights.size(); ++l) {
        num::add_inplace(into.d_weights[l], g.d_weights[l], scale);
        num::axpy(scale, g.d_biases[l], into.d_biases[l]);
    }
}

Gradients mlp_backward(const Mlp& net, const ForwardCache& cache, const num::Matrix& upstream) {
    const std::size_t L = net.num_layers();
    if (upstream.rows() != cache.input.rows() || upstream.cols() != net.output_dim())
        throw DimensionMismatchError("mlp_backward: upstream shape mismatch");

    Gradients g = zero_gradients(net);
    num::Matrix delta(upstream.rows(), upstream.cols());
    for (std::size_t i = 0; i < delta.size(); ++i)
        delta.data()[i] = upstream.data()[i] *
                          act_deriv(net.activations[L - 1], cache.pre[L - 1].data()[i], net.leaky_slope);

    for (std::size_t l = L; l-- > 0;) {
        const num::Matrix& below = (l == 0) ? cache.input : cache.post[l - 1];
        g.d_weights[l] = num::matmul_tn(delta, below);
        for (std::size_t i = 0; i < delta.rows(); ++i) {
            const double* dr = delta.row(i).data();
            for (std::size_t j = 0; j < delta.cols(); ++j) g.d_biases[l][j] += dr[j];
        }
        num::Matrix down = num::matmul(delta, net.weights[l]);
        if (l == 0) {
            g.d_input = std::move(down);
        } else {
            for (std::size_t i = 0; i < down.size(); ++i)
                down.data()[i] *= act_deriv(net.activations[l - 1], cache.pre[l - 1].data()[i],
                                            net.leaky_slope);
            delta = std::move(down);
        }
    }
    return g;
}

std::vector<double> input_grad(const Mlp& net, std::span<const double> x) {
    if (net.output_dim() != 1)
        throw NonScalarOutputError("input_grad: net output must be scalar");
    num::Matrix xm(1, x.size());
    std::copy(x.begin(), x.end(), xm.data().begin());
    ForwardCache cache;
    mlp_forward(net, xm, &cache);
    num::Matrix upstream(1, 1, 1.0);
    Gradients g = mlp_backward(net, cache, upstream);
    return {g.d_input.data().begin(), g.d_input.data().end()};
}

GpBatchResult gradient_penalty(const Mlp& critic, const num::Matrix& xhat,
                               double target_norm, std::size_t penalized_coords) {
    if (critic.output_dim() != 1)
        throw NonScalarOutputError("gradient_penalty: critic output must be scalar");
    if (penalized_coords == 0 || penalized_coords > critic.input_dim())
        throw DimensionMismatchError("gradient_penalty: bad penalized coordinate count");

    const std::size_t L = critic.num_layers();
    const std::size_t B = xhat.rows();
    ForwardCache cache;
    mlp_forward(critic, xhat, &cache);

    // First reverse pass with unit upstream; keep every delta level.
    std::vector<num::Matrix> deltas(L);
    {
        num::Matrix d(B, 1);
        for (std::size_t i = 0; i < d.size(); ++i)
            d.data()[i] = act_deriv(critic.activations[L - 1], cache.pre[L - 1].data()[i],
                                    critic.leaky_slope);
        deltas[L - 1] = std::move(d);
        for (std::size_t l = L - 1; l-- > 0;) {
            num::Matrix down = num::matmul(deltas[l + 1], critic.weights[l + 1]);
            for (std::size_t i = 0; i < down.size(); ++i)
                down.data()[i] *=
                    act_deriv(critic.activations[l], cache.pre[l].data()[i], critic.leaky_slope);
            deltas[l] = std::move(down);
        }
    }
    num::Matrix input_grads = num::matmul(deltas[0], critic.weights[0]);  // B x dims[0]

    GpBatchResult res;
    res.grads = zero_gradients(critic);

    // Seed of the second pass: d(mean penalty)/d(input_grads), with the
    // 2 (s - t) / (B s) coefficient folded in row-wise; zero outside the
    // penalized block and for singular samples.
    num::Matrix seed(B, critic.input_dim());
    for (std::size_t i = 0; i < B; ++i) {
        const double s = num::norm2(input_grads.row(i).subspan(0, penalized_coords));
        const double diff = s - target_norm;
        res.mean_penalty += diff * diff;
        if (s < 1e-12) {
            ++res.singular;
            continue;
        }
        const double coeff = 2.0 * diff / (static_cast<double>(B) * s);
        for (std::size_t j = 0; j < penalized_coords; ++j)
            seed(i, j) = coeff * input_grads(i, j);
    }
    res.mean_penalty /= static_cast<double>(B);

    // Second reverse pass through the gradient computation. Activation
    // masks are constants here, so only weights pick up gradient.
    num::add_inplace(res.grads.d_weights[0], num::matmul_tn(deltas[0], seed));
    num::Matrix dbar = num::matmul_nt(seed, critic.weights[0]);  // B x dims[1]
    for (std::size_t l = 1; l < L; ++l) {
        for (std::size_t i = 0; i < dbar.size(); ++i)
            dbar.data()[i] *=
                act_deriv(critic.activations[l - 1], cache.pre[l - 1].data()[i], critic.leaky_slope);
        num::add_inplace(res.grads.d_weights[l], num::matmul_tn(deltas[l], dbar));
        if (l + 1 < L) dbar = num::matmul_nt(dbar, critic.weights[l]);
    }
    return res;
}

GpResult gp_param_grads(const Mlp& critic, std::span<const double> xhat, double target_norm) {
    num::Matrix m(1, xhat.size());
    std::copy(xhat.begin(), xhat.end(), m.data().begin());
    GpBatchResult batch = gradient_penalty(critic, m, target_norm, critic.input_dim());
    return {batch.mean_penalty, std::move(batch.grads), batch.singular > 0};
}

AdamState::AdamState(std::vector<std::size_t> block_sizes, AdamConfig cfg) : cfg_(cfg) {
    for (std::size_t n : block_sizes) {
        m_.emplace_back(n, 0.0);
        v_.emplace_back(n, 0.0);
    }
}

AdamState::AdamState(const Mlp& net, AdamConfig cfg) : cfg_(cfg) {
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
        m_.emplace_back(net.weights[l].size(), 0.0);
        v_.emplace_back(net.weights[l].size(), 0.0);
        m_.emplace_back(net.biases[l].size(), 0.0);
        v_.emplace_back(net.biases[l].size(), 0.0);
    }
}

void AdamState::step(std::span<const std::span<double>> params,
                     std::span<const std::span<const double>> grads) {
    if (params.size() != m_.size() || grads.size() != m_.size())
        throw DimensionMismatchError("AdamState::step: block count mismatch");
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t b = 0; b < params.size(); ++b) {
        if (params[b].size() != m_[b].size() || grads[b].size() != m_[b].size())
            throw DimensionMismatchError("AdamState::step: block size mismatch");
        double* m = m_[b].data();
        double* v = v_[b].data();
        double* p = params[b].data();
        const double* g = grads[b].data();
        for (std::size_t i = 0; i < params[b].size(); ++i) {
            m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
            v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

void adam_step(Mlp& net, const Gradients& grads, AdamState& state) {
    std::vector<std::span<double>> params;
    std::vector<std::span<const double>> gs;
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
        params.emplace_back(net.weights[l].data());
        gs.emplace_back(grads.d_weights[l].data());
        params.emplace_back(net.biases[l]);
        gs.emplace_back(grads.d_biases[l]);
    }
    state.step(params, gs);
    if (!net.params_finite())
        throw NonFiniteError("adam_step: non-finite parameter after update");
}

std::vector<double*> param_ptrs(Mlp& net) {
    std::vector<double*> out;
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
        for (double& v : net.weights[l].data()) out.push_back(&v);
        for (double& v : net.biases[l]) out.push_back(&v);
    }
    return out;
}

std::vector<double> flatten(const Gradients& grads) {
    std::vector<double> out;
    for (std::size_t l = 0; l < grads.d_weights.size(); ++l) {
        out.insert(out.end(), grads.d_weights[l].data().begin(), grads.d_weights[l].data().end());
        out.insert(out.end(), grads.d_biases[l].begin(), grads.d_biases[l].end());
    }
    return out;
}

double grad_check(const std::function<double()>& f, std::span<double* const> params,
                  std::span<const double> analytic, double h, double floor,
                  std::size_t max_coords, std::uint64_t subset_seed) {
    if (params.size() != analytic.size())
        throw DimensionMismatchError("grad_check: gradient length mismatch");
    std::vector<std::size_t> coords(params.size());
    for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
    if (max_coords > 0 && max_coords < coords.size()) {
        num::RngState rng(subset_seed);
        rng.shuffle(coords);
        coords.resize(max_coords);
    }
    double worst = 0.0;
    for (std::size_t i : coords) {
        double* p = params[i];
        const double saved = *p;
        *p = saved + h;
        const double fp = f();
        *p = saved - h;
        const double fm = f();
        *p = saved;
        const double fd = (fp - fm) / (2.0 * h);
        const double err =
            std::abs(analytic[i] - fd) / std::max({std::abs(analytic[i]), std::abs(fd), floor});
        worst = std::max(worst, err);
    }
    return worst;
}

SoftmaxXent softmax_xent(const num::Matrix& logits, std::span<const int> label_indices) {
    if (logits.rows() != label_indices.size())
        throw DimensionMismatchError("softmax_xent: label count mismatch");
    const std::size_t B = logits.rows();
    SoftmaxXent out;
    out.d_logits = num::Matrix(B, logits.cols());
    for (std::size_t i = 0; i < B; ++i) {
        const int y = label_indices[i];
        if (y < 0 || static_cast<std::size_t>(y) >= logits.cols())
            throw UnknownLabelError("softmax_xent: label index out of range");
        std::vector<double> p = num::tempered_softmax(logits.row(i), 1.0);
        out.loss -= std::log(std::max(p[static_cast<std::size_t>(y)], 1e-300));
        double* dr = out.d_logits.row(i).data();
        for (std::size_t j = 0; j < logits.cols(); ++j)
            dr[j] = (p[j] - (static_cast<std::size_t>(y) == j ? 1.0 : 0.0)) /
                    static_cast<double>(B);
    }
    out.loss /= static_cast<double>(B);
    return out;
}

Mlp train_softmax_classifier(const num::Matrix& x, std::span<const int> label_indices,
                             std::size_t n_classes, const SoftmaxTrainConfig& cfg,
                             num::RngState& rng) {
    if (x.rows() == 0) throw EmptyDatasetError("train_softmax_classifier: empty dataset");
    if (x.rows() != label_indices.size())
        throw DimensionMismatchError("train_softmax_classifier: label count mismatch");

    std::vector<std::size_t> dims{x.cols()};
    dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
    dims.push_back(n_classes);
    std::vector<Activation> acts(dims.size() - 1, Activation::leaky_relu);
    acts.back() = Activation::linear;
    Mlp net = make_mlp(dims, acts, rng, 0.01);
    AdamState opt(net, {.lr = cfg.lr, .beta1 = cfg.beta1, .beta2 = cfg.beta2});

    std::vector<std::size_t> order(x.rows());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    double prev_loss = 0.0;
    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t stop = std::min(start + cfg.batch_size, order.size());
            num::Matrix xb(stop - start, x.cols());
            std::vector<int> yb(stop - start);
            for (std::size_t i = start; i < stop; ++i) {
                auto src = x.row(order[i]);
                std::copy(src.begin(), src.end(), xb.row(i - start).begin());
                yb[i - start] = label_indices[order[i]];
            }
            ForwardCache cache;
            num::Matrix logits = mlp_forward(net, xb, &cache);
            SoftmaxXent xent = softmax_xent(logits, yb);
            Gradients grads = mlp_backward(net, cache, xent.d_logits);
            adam_step(net, grads, opt);
            epoch_loss += xent.loss;
            ++batches;
        }
        epoch_loss /= static_cast<double>(batches);
        if (epoch > 0 && std::abs(epoch_loss - prev_loss) < cfg.tol) break;
        prev_loss = epoch_loss;
    }
    return net;
}

nlohmann::json mlp_to_json(const Mlp& net) {
    nlohmann::json j;
    j["format_version"] = 1;
    j["layer_dims"] = net.dims;
    std::vector<std::string> acts;
    for (Activation a : net.activations) acts.push_back(to_string(a));
    j["activations"] = acts;
    j["leaky_slope"] = net.leaky_slope;
    std::vector<std::vector<double>> w, b;
    for (const auto& m : net.weights) w.push_back(m.data());
    for (const auto& bias : net.biases) b.push_back(bias);
    j["weights"] = w;
    j["biases"] = b;
    return j;
}

Mlp mlp_from_json(const nlohmann::json& j) {
    if (!j.contains("format_version") || j["format_version"].get<int>() != 1)
        throw ParseError("mlp_from_json: unsupported model format version");
    Mlp net;
    net.dims = j["layer_dims"].get<std::vector<std::size_t>>();
    for (const auto& s : j["activations"])
        net.activations.push_back(activation_from_string(s.get<std::string>()));
    net.leaky_slope = j["leaky_slope"].get<double>();
    const auto w = j["weights"].get<std::vector<std::vector<double>>>();
    const auto b = j["biases"].get<std::vector<std::vector<double>>>();
    if (w.size() + 1 != net.dims.size() || b.size() != w.size())
        throw ParseError("mlp_from_json: layer count mismatch");
    for (std::size_t l = 0; l < w.size(); ++l) {
        num::Matrix m(net.dims[l + 1], net.dims[l]);
        if (w[l].size() != m.size() || b[l].size() != net.dims[l + 1])
            throw ParseError("mlp_from_json: parameter block size mismatch");
        m.data() = w[l];
        net.weights.push_back(std::move(m));
        net.biases.push_back(b[l]);
    }
    net.check_consistent();
    return net;
}

void save_mlp(const Mlp& net, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("save_mlp: cannot open " + path);
    out << mlp_to_json(net).dump(1);
}

Mlp load_mlp(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("load_mlp: cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("load_mlp: ") + e.what());
    }
    return mlp_from_json(j);
}

}  // namespace gzsl::nn
