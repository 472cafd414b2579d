#include "gzslkit/clustering.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <set>

#include "gzslkit/assignment.hpp"
#include "gzslkit/error.hpp"
#include "gzslkit/kernels.hpp"

namespace gzsl::cluster {

std::string to_string(Ssl2Form f) {
    return f == Ssl2Form::paper ? "paper" : "hinge";
}

Ssl2Form ssl2_form_from_string(const std::string& s) {
    if (s == "paper") return Ssl2Form::paper;
    if (s == "hinge") return Ssl2Form::hinge;
    throw InvalidConfigError("ssl2_form must be 'paper' or 'hinge', got: " + s);
}

void ClusterConfig::validate() const {
    if (tau <= 0.0) throw InvalidConfigError("cluster.tau must be > 0");
    if (eps_sinkhorn <= 0.0) throw InvalidConfigError("cluster.eps_sinkhorn must be > 0");
    if (sinkhorn_iters < 1) throw InvalidConfigError("cluster.sinkhorn_iters must be >= 1");
    if (sigma1 <= 0.0 || sigma1 >= 1.0) throw InvalidConfigError("cluster.sigma1 must be in (0,1)");
    if (sigma2 <= 0.0 || sigma2 >= 1.0) throw InvalidConfigError("cluster.sigma2 must be in (0,1)");
    if (lambda1 < 0.0 || lambda2 < 0.0) throw InvalidConfigError("cluster.lambda weights must be >= 0");
    if (aug_noise_std < 0.0) throw InvalidConfigError("cluster.aug_noise_std must be >= 0");
    if (aug_mask_frac < 0.0 || aug_mask_frac >= 1.0)
        throw InvalidConfigError("cluster.aug_mask_frac must be in [0,1)");
    if (batch_size < 1) throw InvalidConfigError("cluster.batch_size must be >= 1");
    if (epochs < 0) throw InvalidConfigError("cluster.epochs must be >= 0");
    if (lr <= 0.0) throw InvalidConfigError("cluster.lr must be > 0");
}

int PrototypeBank::prototype_index(int class_id) const {
    for (std::size_t k = 0; k < class_map.size(); ++k)
        if (class_map[k] == class_id) return static_cast<int>(k);
    throw UnknownClassError("no prototype for class id " + std::to_string(class_id));
}

std::span<const double> PrototypeBank::anchor_for_class(int class_id) const {
    return prototypes.row(static_cast<std::size_t>(prototype_index(class_id)));
}

void PrototypeBank::check_invariants() const {
    if (prototypes.rows() != total() || class_map.size() != total())
        throw DimensionMismatchError("PrototypeBank: K != n_seen + n_unseen");
    for (std::size_t k = 0; k < prototypes.rows(); ++k) {
        if (std::abs(num::norm2(prototypes.row(k)) - 1.0) > 1e-9)
            throw NumericError("PrototypeBank: prototype row not unit norm");
    }
    std::set<int> seen_ids(class_map.begin(), class_map.begin() + static_cast<long>(n_seen));
    if (seen_ids.size() != n_seen)
        throw DegenerateClusteringError("PrototypeBank: seen class map is not a bijection");
}

nlohmann::json bank_to_json(const PrototypeBank& bank) {
    nlohmann::json j;
    j["n_seen"] = bank.n_seen;
    j["n_unseen"] = bank.n_unseen;
    j["class_map"] = bank.class_map;
    std::vector<std::vector<double>> rows;
    for (std::size_t k = 0; k < bank.prototypes.rows(); ++k) {
        auto r = bank.prototypes.row(k);
        rows.emplace_back(r.begin(), r.end());
    }
    j["prototypes"] = rows;
    return j;
}

PrototypeBank bank_from_json(const nlohmann::json& j) {
    PrototypeBank bank;
    bank.n_seen = j["n_seen"].get<std::size_t>();
    bank.n_unseen = j["n_unseen"].get<std::size_t>();
    bank.class_map = j["class_map"].get<std::vector<int>>();
    bank.prototypes = num::Matrix::from_rows(j["prototypes"].get<std::vector<std::vector<double>>>());
    bank.check_invariants();
    return bank;
}

void save_bank(const PrototypeBank& bank, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("save_bank: cannot open " + path);
    out << bank_to_json(bank).dump(1);
}

PrototypeBank load_bank(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("load_bank: cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("load_bank: ") + e.what());
    }
    return bank_from_json(j);
}

namespace {

void make_view(std::span<const double> x, std::span<double> view, const ClusterConfig& cfg,
               num::RngState& rng) {
    const std::size_t d = x.size();
    const std::size_t n_mask =
        static_cast<std::size_t>(std::floor(cfg.aug_mask_frac * static_cast<double>(d)));
    for (int attempt = 0; attempt < 100; ++attempt) {
        std::copy(x.begin(), x.end(), view.begin());
        if (cfg.aug_noise_std > 0.0)
            for (double& v : view) v += cfg.aug_noise_std * rng.normal();
        if (n_mask > 0) {
            // partial Fisher-Yates picks n_mask distinct coordinates
            std::vector<std::size_t> idx(d);
            for (std::size_t i = 0; i < d; ++i) idx[i] = i;
            for (std::size_t i = 0; i < n_mask; ++i) {
                const std::size_t j = i + static_cast<std::size_t>(rng.below(d - i));
                std::swap(idx[i], idx[j]);
                view[idx[i]] = 0.0;
            }
        }
        if (num::norm2(view) >= num::kZeroVectorNorm) {
            num::l2_normalize_inplace(view);
            return;
        }
    }
    throw NumericError("augment_features: view collapsed to zero repeatedly");
}

}  // namespace

AugmentedBatch augment_features(const num::Matrix& rows, const ClusterConfig& cfg,
                                num::RngState& rng) {
    AugmentedBatch out;
    out.view_t = num::Matrix(rows.rows(), rows.cols());
    out.view_s = num::Matrix(rows.rows(), rows.cols());
    for (std::size_t i = 0; i < rows.rows(); ++i) {
        make_view(rows.row(i), out.view_t.row(i), cfg, rng);
        make_view(rows.row(i), out.view_s.row(i), cfg, rng);
    }
    return out;
}

num::Matrix sinkhorn_assign(const num::Matrix& scores, double eps, int iters) {
    if (eps <= 0.0) throw InvalidConfigError("sinkhorn_assign: eps must be > 0");
    if (iters < 1) throw InvalidConfigError("sinkhorn_assign: iters must be >= 1");
    const std::size_t K = scores.rows();
    const std::size_t B = scores.cols();
    if (K == 0 || B == 0) throw DimensionMismatchError("sinkhorn_assign: empty scores");

    double mx = scores.data()[0];
    for (double v : scores.data()) mx = std::max(mx, v);
    num::Matrix q(K, B);
    for (std::size_t i = 0; i < q.size(); ++i)
        q.data()[i] = std::exp((scores.data()[i] - mx) / eps);

    const double row_target = 1.0 / static_cast<double>(K);
    const double col_target = 1.0 / static_cast<double>(B);
    for (int it = 0; it < iters; ++it) {
        for (std::size_t i = 0; i < K; ++i) {
            double s = 0.0;
            for (double v : q.row(i)) s += v;
            const double f = row_target / s;
            for (double& v : q.row(i)) v *= f;
        }
        for (std::size_t j = 0; j < B; ++j) {
            double s = 0.0;
            for (std::size_t i = 0; i < K; ++i) s += q(i, j);
            const double f = col_target / s;
            for (std::size_t i = 0; i < K; ++i) q(i, j) *= f;
        }
    }
    return q;
}

namespace {

// One direction of the swapped loss: codes q (columns of a K x B
// assignment, scaled by B) supervise softmax(prototypes . x / tau).
double half_swapped(const num::Matrix& x, const num::Matrix& q, const num::Matrix& prototypes,
                    double tau, num::Matrix& d_prototypes, num::Matrix& d_x) {
    const std::size_t B = x.rows();
    const std::size_t K = prototypes.rows();
    num::Matrix scores = num::matmul_nt(x, prototypes);  // B x K
    num::Matrix d_scores(B, K);
    double loss = 0.0;
    std::vector<double> p(K);
    for (std::size_t n = 0; n < B; ++n) {
        const double* srow = scores.row(n).data();
        double mxs = srow[0];
        for (std::size_t k = 0; k < K; ++k) mxs = std::max(mxs, srow[k]);
        double z = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
            p[k] = std::exp((srow[k] - mxs) / tau);
            z += p[k];
        }
        const double logz = std::log(z);
        double* drow = d_scores.row(n).data();
        for (std::size_t k = 0; k < K; ++k) {
            p[k] /= z;
            const double code = static_cast<double>(B) * q(k, n);
            const double logp = (srow[k] - mxs) / tau - logz;
            loss -= code * logp;
            drow[k] = (p[k] - code) / (tau * static_cast<double>(B));
        }
    }
    num::add_inplace(d_prototypes, num::matmul_tn(d_scores, x));
    num::add_inplace(d_x, num::matmul(d_scores, prototypes));
    return loss / static_cast<double>(B);
}

}  // namespace

SwappedLoss swapped_loss(const num::Matrix& x_t, const num::Matrix& x_s,
                         const num::Matrix& prototypes, const num::Matrix& q_t,
                         const num::Matrix& q_s, double tau) {
    if (x_t.rows() != x_s.rows() || x_t.cols() != x_s.cols())
        throw DimensionMismatchError("swapped_loss: view shapes differ");
    if (x_t.cols() != prototypes.cols())
        throw DimensionMismatchError("swapped_loss: feature/prototype width mismatch");
    if (q_t.rows() != prototypes.rows() || q_t.cols() != x_t.rows() ||
        q_s.rows() != prototypes.rows() || q_s.cols() != x_s.rows())
        throw DimensionMismatchError("swapped_loss: assignment shape mismatch");

    SwappedLoss out;
    out.d_prototypes = num::Matrix(prototypes.rows(), prototypes.cols());
    out.d_view_t = num::Matrix(x_t.rows(), x_t.cols());
    out.d_view_s = num::Matrix(x_s.rows(), x_s.cols());
    out.loss = half_swapped(x_t, q_s, prototypes, tau, out.d_prototypes, out.d_view_t) +
               half_swapped(x_s, q_t, prototypes, tau, out.d_prototypes, out.d_view_s);
    return out;
}

Ssl1Loss ssl1_loss(const PrototypeBank& bank, double sigma1) {
    Ssl1Loss out;
    out.d_unseen = num::Matrix(bank.n_unseen, bank.prototypes.cols());
    if (bank.n_seen == 0 || bank.n_unseen == 0) return out;
    const double inv_n = 1.0 / static_cast<double>(bank.n_seen * bank.n_unseen);
    for (std::size_t i = 0; i < bank.n_seen; ++i) {
        auto cs = bank.prototypes.row(i);
        for (std::size_t j = 0; j < bank.n_unseen; ++j) {
            auto cu = bank.prototypes.row(bank.n_seen + j);
            const double cos = num::cosine_sim(cs, cu);
            if (cos < sigma1) {
                out.loss += cos * inv_n;
                // d cos / d cu for unit rows = cs - cos * cu
                double* g = out.d_unseen.row(j).data();
                for (std::size_t c = 0; c < cs.size(); ++c)
                    g[c] += inv_n * (cs[c] - cos * cu[c]);
            } else {
                out.loss += sigma1 * inv_n;
            }
        }
    }
    return out;
}

Ssl2Loss ssl2_loss(const num::Matrix& x_seen, std::span<const int> labels,
                   const PrototypeBank& bank, double sigma2, Ssl2Form form) {
    if (x_seen.rows() != labels.size())
        throw DimensionMismatchError("ssl2_loss: label count mismatch");
    Ssl2Loss out;
    out.d_unseen = num::Matrix(bank.n_unseen, bank.prototypes.cols());
    if (x_seen.rows() == 0 || bank.n_unseen == 0) return out;
    const double inv_n = 1.0 / static_cast<double>(x_seen.rows() * bank.n_unseen);
    for (std::size_t i = 0; i < x_seen.rows(); ++i) {
        auto x = x_seen.row(i);
        const int k = bank.prototype_index(labels[i]);
        if (static_cast<std::size_t>(k) >= bank.n_seen)
            throw UnknownLabelError("ssl2_loss: label maps to an unseen prototype");
        const double cos_self = num::cosine_sim(x, bank.prototypes.row(static_cast<std::size_t>(k)));
        for (std::size_t j = 0; j < bank.n_unseen; ++j) {
            auto cu = bank.prototypes.row(bank.n_seen + j);
            const double cos_u = num::cosine_sim(x, cu);
            const double diff = cos_self - cos_u;
            double sign = 0.0;  // of d(term)/d cos_u
            if (form == Ssl2Form::paper) {
                out.loss += std::max(diff, sigma2) * inv_n;
                if (diff > sigma2) sign = -1.0;
            } else {
                out.loss += std::max(sigma2 - diff, 0.0) * inv_n;
                if (diff < sigma2) sign = 1.0;
            }
            if (sign != 0.0) {
                double* g = out.d_unseen.row(j).data();
                for (std::size_t c = 0; c < x.size(); ++c)
                    g[c] += sign * inv_n * (x[c] - cos_u * cu[c]);
            }
        }
    }
    return out;
}

num::Matrix project_features(const num::Matrix& x, const nn::Mlp* projection) {
    num::Matrix out = projection ? nn::mlp_forward(*projection, x) : x;
    for (std::size_t i = 0; i < out.rows(); ++i) num::l2_normalize_inplace(out.row(i));
    return out;
}

namespace {

struct ProjectedViews {
    num::Matrix x_t, x_s;                    // unit rows in prototype space
    nn::ForwardCache cache_t, cache_s;       // only filled when a head exists
    std::vector<double> znorm_t, znorm_s;    // pre-normalization norms
};

ProjectedViews project_views(const AugmentedBatch& views, const nn::Mlp* head) {
    ProjectedViews pv;
    if (!head) {
        pv.x_t = views.view_t;  // augmented views are already unit-norm
        pv.x_s = views.view_s;
        return pv;
    }
    pv.x_t = nn::mlp_forward(*head, views.view_t, &pv.cache_t);
    pv.x_s = nn::mlp_forward(*head, views.view_s, &pv.cache_s);
    pv.znorm_t.resize(pv.x_t.rows());
    pv.znorm_s.resize(pv.x_s.rows());
    for (std::size_t i = 0; i < pv.x_t.rows(); ++i) {
        pv.znorm_t[i] = num::norm2(pv.x_t.row(i));
        pv.znorm_s[i] = num::norm2(pv.x_s.row(i));
        num::l2_normalize_inplace(pv.x_t.row(i));
        num::l2_normalize_inplace(pv.x_s.row(i));
    }
    return pv;
}

// Pull the swapped-loss gradient back through the row normalization:
// d/dz = (d/dx - x (x . d/dx)) / ||z||.
num::Matrix through_normalization(const num::Matrix& d_x, const num::Matrix& x,
                                  const std::vector<double>& znorm) {
    num::Matrix up(d_x.rows(), d_x.cols());
    for (std::size_t i = 0; i < d_x.rows(); ++i) {
        auto xi = x.row(i);
        auto gi = d_x.row(i);
        const double proj = num::dot(xi, gi);
        double* u = up.row(i).data();
        for (std::size_t c = 0; c < xi.size(); ++c) u[c] = (gi[c] - xi[c] * proj) / znorm[i];
    }
    return up;
}

num::Matrix gather_rows(const num::Matrix& x, std::span<const std::size_t> idx) {
    num::Matrix out(idx.size(), x.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        auto src = x.row(idx[i]);
        std::copy(src.begin(), src.end(), out.row(i).begin());
    }
    return out;
}

void renormalize_rows(num::Matrix& m, std::size_t first, std::size_t count) {
    for (std::size_t i = first; i < first + count; ++i) num::l2_normalize_inplace(m.row(i));
}

}  // namespace

SeenFit fit_seen_prototypes(const num::Matrix& x, std::span<const int> labels,
                            std::size_t n_seen, const ClusterConfig& cfg, num::RngState& rng) {
    cfg.validate();
    if (x.rows() == 0) throw EmptyDatasetError("fit_seen_prototypes: no samples");
    if (x.rows() != labels.size())
        throw DimensionMismatchError("fit_seen_prototypes: label count mismatch");

    std::set<int> distinct(labels.begin(), labels.end());
    if (distinct.size() != n_seen)
        throw DegenerateClusteringError("fit_seen_prototypes: need exactly n_seen distinct labels");
    std::vector<int> classes(distinct.begin(), distinct.end());

    SeenFit fit;
    if (!cfg.proj_dims.empty()) {
        std::vector<std::size_t> dims;
        dims.push_back(x.cols());
        dims.insert(dims.end(), cfg.proj_dims.begin(), cfg.proj_dims.end());
        std::vector<nn::Activation> acts(dims.size() - 1, nn::Activation::leaky_relu);
        acts.back() = nn::Activation::linear;
        fit.projection = nn::make_mlp(dims, acts, rng, 0.1);
    }
    const nn::Mlp* head = fit.projection ? &*fit.projection : nullptr;
    const std::size_t proj_dim = head ? head->output_dim() : x.cols();

    // Seen prototypes start at normalized per-class means in projected space.
    num::Matrix projected = project_features(x, head);
    fit.bank.prototypes = num::Matrix(n_seen, proj_dim);
    fit.bank.n_seen = n_seen;
    for (std::size_t c = 0; c < classes.size(); ++c) {
        std::vector<double> mean(proj_dim, 0.0);
        std::size_t count = 0;
        for (std::size_t i = 0; i < x.rows(); ++i) {
            if (labels[i] != classes[c]) continue;
            num::axpy(1.0, projected.row(i), mean);
            ++count;
        }
        for (double& v : mean) v /= static_cast<double>(count);
        num::l2_normalize_inplace(std::span<double>(mean));
        std::copy(mean.begin(), mean.end(), fit.bank.prototypes.row(c).begin());
    }

    std::vector<std::size_t> blocks{fit.bank.prototypes.size()};
    if (head)
        for (std::size_t l = 0; l < head->num_layers(); ++l) {
            blocks.push_back(head->weights[l].size());
            blocks.push_back(head->biases[l].size());
        }
    nn::AdamState opt(blocks, {.lr = cfg.lr});

    std::vector<std::size_t> order(x.rows());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t stop = std::min(start + cfg.batch_size, order.size());
            num::Matrix batch = gather_rows(x, std::span(order).subspan(start, stop - start));
            AugmentedBatch views = augment_features(batch, cfg, rng);
            ProjectedViews pv = project_views(views, fit.projection ? &*fit.projection : nullptr);

            num::Matrix scores_t = num::matmul_nt(fit.bank.prototypes, pv.x_t);
            num::Matrix scores_s = num::matmul_nt(fit.bank.prototypes, pv.x_s);
            num::Matrix code_t = sinkhorn_assign(scores_t, cfg.eps_sinkhorn, cfg.sinkhorn_iters);
            num::Matrix code_s = sinkhorn_assign(scores_s, cfg.eps_sinkhorn, cfg.sinkhorn_iters);
            SwappedLoss sw =
                swapped_loss(pv.x_t, pv.x_s, fit.bank.prototypes, code_t, code_s, cfg.tau);

            std::vector<std::span<double>> params{fit.bank.prototypes.data()};
            std::vector<std::span<const double>> grads{sw.d_prototypes.data()};
            nn::Gradients head_grads;
            if (fit.projection) {
                num::Matrix up_t = through_normalization(sw.d_view_t, pv.x_t, pv.znorm_t);
                num::Matrix up_s = through_normalization(sw.d_view_s, pv.x_s, pv.znorm_s);
                head_grads = nn::mlp_backward(*fit.projection, pv.cache_t, up_t);
                nn::accumulate(head_grads, nn::mlp_backward(*fit.projection, pv.cache_s, up_s));
                for (std::size_t l = 0; l < fit.projection->num_layers(); ++l) {
                    params.emplace_back(fit.projection->weights[l].data());
                    grads.emplace_back(head_grads.d_weights[l].data());
                    params.emplace_back(fit.projection->biases[l]);
                    grads.emplace_back(head_grads.d_biases[l]);
                }
            }
            opt.step(params, grads);
            renormalize_rows(fit.bank.prototypes, 0, n_seen);
        }
    }

    // Majority vote per prototype, resolved to a bijection.
    projected = project_features(x, fit.projection ? &*fit.projection : nullptr);
    num::Matrix agree(n_seen, n_seen);
    num::Matrix all_scores = num::matmul_nt(projected, fit.bank.prototypes);  // N x K
    for (std::size_t i = 0; i < x.rows(); ++i) {
        auto s = all_scores.row(i);
        std::size_t best = 0;
        for (std::size_t k = 1; k < n_seen; ++k)
            if (s[k] > s[best]) best = k;
        const std::size_t cls = static_cast<std::size_t>(
            std::lower_bound(classes.begin(), classes.end(), labels[i]) - classes.begin());
        agree(best, cls) += 1.0;
    }
    std::vector<std::size_t> match = num::hungarian_max(agree);
    fit.bank.class_map.resize(n_seen);
    for (std::size_t k = 0; k < n_seen; ++k) {
        if (agree(k, match[k]) == 0.0)
            throw DegenerateClusteringError(
                "fit_seen_prototypes: a prototype matched a class with zero support");
        fit.bank.class_map[k] = classes[match[k]];
    }
    fit.bank.check_invariants();
    return fit;
}

void fit_unseen_prototypes(PrototypeBank& bank, const num::Matrix& x_unseen,
                           std::size_t n_unseen, const num::Matrix& x_seen,
                           std::span<const int> seen_labels, const nn::Mlp* projection,
                           const ClusterConfig& cfg, num::RngState& rng) {
    cfg.validate();
    if (!bank.seen_frozen)
        throw InvalidConfigError("fit_unseen_prototypes: seen block must be frozen");
    if (bank.n_unseen != 0)
        throw InvalidConfigError("fit_unseen_prototypes: bank already has an unseen block");
    if (n_unseen == 0) throw InvalidConfigError("fit_unseen_prototypes: n_unseen must be >= 1");
    if (x_unseen.rows() == 0) throw EmptyDatasetError("fit_unseen_prototypes: no unseen samples");

    const std::size_t d = bank.prototypes.cols();
    const std::size_t n_seen = bank.n_seen;
    const std::size_t K = n_seen + n_unseen;

    num::Matrix protos(K, d);
    for (std::size_t k = 0; k < n_seen; ++k) {
        auto src = bank.prototypes.row(k);
        std::copy(src.begin(), src.end(), protos.row(k).begin());
    }

    // Unseen rows start as random unit vectors, rejected until they sit
    // below the sigma1 cap against every seen anchor (best effort).
    for (std::size_t j = 0; j < n_unseen; ++j) {
        std::vector<double> best(d, 0.0);
        double best_max_cos = 2.0;
        for (int attempt = 0; attempt < 10000; ++attempt) {
            std::vector<double> cand = num::sample_gaussian(rng, d);
            num::l2_normalize_inplace(std::span<double>(cand));
            double max_cos = -2.0;
            for (std::size_t k = 0; k < n_seen; ++k)
                max_cos = std::max(max_cos, num::cosine_sim(cand, protos.row(k)));
            if (max_cos < best_max_cos) {
                best = cand;
                best_max_cos = max_cos;
            }
            if (max_cos < cfg.sigma1) break;
        }
        std::copy(best.begin(), best.end(), protos.row(n_seen + j).begin());
    }

    PrototypeBank work;
    work.prototypes = std::move(protos);
    work.n_seen = n_seen;
    work.n_unseen = n_unseen;
    work.class_map = bank.class_map;
    work.class_map.resize(K, -1);

    num::Matrix proj_seen = project_features(x_seen, projection);

    nn::AdamState opt({n_unseen * d}, {.lr = cfg.lr});
    std::vector<std::size_t> order(x_unseen.rows());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    const double lam2_sign = cfg.ssl2_form == Ssl2Form::paper ? -cfg.lambda2 : cfg.lambda2;

    // The unseen block is a contiguous row range of the prototype matrix.
    std::span<double> unseen_span(work.prototypes.row(n_seen).data(), n_unseen * d);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t stop = std::min(start + cfg.batch_size, order.size());
            num::Matrix batch = gather_rows(x_unseen, std::span(order).subspan(start, stop - start));
            AugmentedBatch views = augment_features(batch, cfg, rng);
            ProjectedViews pv = project_views(views, projection);

            // Codes and the swapped term live on the unseen block only;
            // the frozen seen anchors enter through the ssl terms.
            num::Matrix active(n_unseen, d);
            for (std::size_t j = 0; j < n_unseen; ++j) {
                auto src = work.prototypes.row(n_seen + j);
                std::copy(src.begin(), src.end(), active.row(j).begin());
            }
            num::Matrix scores_t = num::matmul_nt(active, pv.x_t);
            num::Matrix scores_s = num::matmul_nt(active, pv.x_s);
            num::Matrix code_t = sinkhorn_assign(scores_t, cfg.eps_sinkhorn, cfg.sinkhorn_iters);
            num::Matrix code_s = sinkhorn_assign(scores_s, cfg.eps_sinkhorn, cfg.sinkhorn_iters);
            SwappedLoss sw = swapped_loss(pv.x_t, pv.x_s, active, code_t, code_s, cfg.tau);

            // Margin batch is always drawn so paired ablation runs see
            // identical random streams.
            std::vector<std::size_t> sample(std::min<std::size_t>(cfg.batch_size, proj_seen.rows()));
            for (auto& s : sample) s = static_cast<std::size_t>(rng.below(proj_seen.rows()));
            num::Matrix margin_x = gather_rows(proj_seen, sample);
            std::vector<int> margin_y(sample.size());
            for (std::size_t i = 0; i < sample.size(); ++i)
                margin_y[i] = seen_labels[sample[i]];

            num::Matrix grad = sw.d_prototypes;
            if (cfg.lambda1 > 0.0) {
                Ssl1Loss l1 = ssl1_loss(work, cfg.sigma1);
                num::add_inplace(grad, l1.d_unseen, cfg.lambda1);
            }
            if (cfg.lambda2 > 0.0) {
                Ssl2Loss l2 = ssl2_loss(margin_x, margin_y, work, cfg.sigma2, cfg.ssl2_form);
                num::add_inplace(grad, l2.d_unseen, lam2_sign);
            }

            std::array<std::span<double>, 1> params{unseen_span};
            std::array<std::span<const double>, 1> grads{std::span<const double>(grad.data())};
            opt.step(params, grads);
            renormalize_rows(work.prototypes, n_seen, n_unseen);
        }
    }

    // Unseen clusters are anonymous; they get synthetic ids n_seen..K-1
    // (shifted past the seen ids if those ranges collide).
    int base = static_cast<int>(n_seen);
    auto collides = [&](int b) {
        for (std::size_t k = 0; k < n_seen; ++k)
            if (work.class_map[k] >= b && work.class_map[k] < b + static_cast<int>(n_unseen))
                return true;
        return false;
    };
    while (collides(base)) ++base;
    for (std::size_t j = 0; j < n_unseen; ++j)
        work.class_map[n_seen + j] = base + static_cast<int>(j);

    work.seen_frozen = true;
    work.check_invariants();
    bank = std::move(work);
}

}  // namespace gzsl::cluster
