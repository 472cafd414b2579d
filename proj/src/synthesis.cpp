#include "gzslkit/synthesis.hpp"

#include <algorithm>
#include <cmath>

#include "gzslkit/error.hpp"
#include "gzslkit/kernels.hpp"

namespace gzsl::synth {

std::string to_string(ConditioningMode m) {
    switch (m) {
        case ConditioningMode::one_hot: return "one_hot";
        case ConditioningMode::anchor: return "anchor";
        case ConditioningMode::attribute: return "attribute";
    }
    return "one_hot";
}

ConditioningMode conditioning_from_string(const std::string& s) {
    if (s == "one_hot") return ConditioningMode::one_hot;
    if (s == "anchor") return ConditioningMode::anchor;
    if (s == "attribute") return ConditioningMode::attribute;
    throw InvalidConfigError("unknown conditioning mode: " + s);
}

void GanConfig::validate() const {
    if (lambda_gp < 0.0 || lambda_cl < 0.0 || lambda3 < 0.0)
        throw InvalidConfigError("gan: loss weights must be >= 0");
    if (noise_dim == 0) throw InvalidConfigError("gan: noise_dim must be >= 1");
    if (critic_steps < 1) throw InvalidConfigError("gan: critic_steps must be >= 1");
    if (epochs < 0) throw InvalidConfigError("gan: epochs must be >= 0");
    if (batch_size < 1) throw InvalidConfigError("gan: batch_size must be >= 1");
    if (lr <= 0.0) throw InvalidConfigError("gan: lr must be > 0");
    if (beta1 <= 0.0 || beta1 >= 1.0 || beta2 <= 0.0 || beta2 >= 1.0)
        throw InvalidConfigError("gan: adam betas must be in (0,1)");
}

std::size_t conditioning_dim(ConditioningMode mode, const data::ClassIndex& universe,
                             const cluster::PrototypeBank* bank, const num::Matrix* attributes) {
    switch (mode) {
        case ConditioningMode::one_hot: return universe.size();
        case ConditioningMode::anchor:
            if (!bank) throw UnknownClassError("anchor conditioning needs a prototype bank");
            return bank->prototypes.cols();
        case ConditioningMode::attribute:
            if (!attributes)
                throw MissingAttributeTableError("attribute conditioning needs a table");
            return attributes->cols();
    }
    return 0;
}

ConditioningVector make_condition(int class_id, ConditioningMode mode,
                                  const data::ClassIndex& universe,
                                  const cluster::PrototypeBank* bank,
                                  const num::Matrix* attributes) {
    ConditioningVector cond;
    cond.class_id = class_id;
    cond.mode = mode;
    switch (mode) {
        case ConditioningMode::one_hot: {
            cond.e.assign(universe.size(), 0.0);
            cond.e[universe.index_of(class_id)] = 1.0;
            break;
        }
        case ConditioningMode::anchor: {
            if (!bank) throw UnknownClassError("anchor conditioning needs a prototype bank");
            auto row = bank->anchor_for_class(class_id);
            cond.e.assign(row.begin(), row.end());
            break;
        }
        case ConditioningMode::attribute: {
            if (!attributes)
                throw MissingAttributeTableError("attribute conditioning needs a table");
            if (class_id < 0 || static_cast<std::size_t>(class_id) >= attributes->rows())
                throw UnknownClassError("no attribute row for class " + std::to_string(class_id));
            auto row = attributes->row(static_cast<std::size_t>(class_id));
            cond.e.assign(row.begin(), row.end());
            break;
        }
    }
    return cond;
}

std::vector<double> generate(const nn::Mlp& gen, const ConditioningVector& cond,
                             std::span<const double> z) {
    if (gen.input_dim() != cond.e.size() + z.size())
        throw DimensionMismatchError("generate: |e| + |z| != generator input dim");
    std::vector<double> in;
    in.reserve(gen.input_dim());
    in.insert(in.end(), cond.e.begin(), cond.e.end());
    in.insert(in.end(), z.begin(), z.end());
    return nn::mlp_forward_one(gen, in);
}

namespace {

num::Matrix concat_cols(const num::Matrix& x, const std::vector<ConditioningVector>& conds) {
    if (x.rows() != conds.size())
        throw DimensionMismatchError("conditioning count != batch rows");
    const std::size_t e_dim = conds.empty() ? 0 : conds[0].e.size();
    num::Matrix out(x.rows(), x.cols() + e_dim);
    for (std::size_t i = 0; i < x.rows(); ++i) {
        auto src = x.row(i);
        auto dst = out.row(i);
        std::copy(src.begin(), src.end(), dst.begin());
        if (conds[i].e.size() != e_dim)
            throw DimensionMismatchError("conditioning vectors have mixed lengths");
        std::copy(conds[i].e.begin(), conds[i].e.end(), dst.begin() + static_cast<long>(x.cols()));
    }
    return out;
}

}  // namespace

LossGrads critic_loss(const nn::Mlp& critic, const CriticBatch& real, const CriticBatch& fake,
                      double lambda_gp, num::RngState& rng) {
    if (real.x.rows() != fake.x.rows() || real.x.cols() != fake.x.cols())
        throw DimensionMismatchError("critic_loss: real/fake batch shapes differ");
    const std::size_t B = real.x.rows();
    const std::size_t d = real.x.cols();

    LossGrads out;
    out.grads = nn::zero_gradients(critic);

    // Wasserstein terms: +mean D(fake) - mean D(real) in the critic loss.
    {
        num::Matrix fake_in = concat_cols(fake.x, fake.conds);
        nn::ForwardCache cache;
        num::Matrix score = nn::mlp_forward(critic, fake_in, &cache);
        for (std::size_t i = 0; i < B; ++i) out.loss += score(i, 0);
        num::Matrix up(B, 1, 1.0 / static_cast<double>(B));
        nn::accumulate(out.grads, nn::mlp_backward(critic, cache, up));
    }
    {
        num::Matrix real_in = concat_cols(real.x, real.conds);
        nn::ForwardCache cache;
        num::Matrix score = nn::mlp_forward(critic, real_in, &cache);
        for (std::size_t i = 0; i < B; ++i) out.loss -= score(i, 0);
        num::Matrix up(B, 1, -1.0 / static_cast<double>(B));
        nn::accumulate(out.grads, nn::mlp_backward(critic, cache, up));
    }
    out.loss /= static_cast<double>(B);

    if (lambda_gp > 0.0) {
        num::Matrix xhat(B, d);
        for (std::size_t i = 0; i < B; ++i) {
            const double alpha = rng.uniform();
            auto xr = real.x.row(i);
            auto xf = fake.x.row(i);
            auto dst = xhat.row(i);
            for (std::size_t j = 0; j < d; ++j) dst[j] = alpha * xr[j] + (1.0 - alpha) * xf[j];
        }
        num::Matrix hat_in = concat_cols(xhat, fake.conds);
        nn::GpBatchResult gp = nn::gradient_penalty(critic, hat_in, 1.0, d);
        out.loss += lambda_gp * gp.mean_penalty;
        nn::accumulate(out.grads, gp.grads, lambda_gp);
        out.gp_skipped = gp.singular;
    }
    return out;
}

Ssl3Loss ssl3_loss(std::span<const double> x_tilde, const cluster::PrototypeBank& bank,
                   int class_id) {
    auto anchor = bank.anchor_for_class(class_id);
    if (anchor.size() != x_tilde.size())
        throw DimensionMismatchError("ssl3_loss: feature/anchor width mismatch");
    const double nx = num::norm2(x_tilde);
    if (nx < num::kZeroVectorNorm) throw ZeroVectorError("ssl3_loss: zero synthetic vector");
    const double cos = num::cosine_sim(x_tilde, anchor);
    Ssl3Loss out;
    out.loss = 1.0 - cos;
    out.d_x.resize(x_tilde.size());
    // d(1 - cos)/dx = -(c/||x|| - cos x/||x||^2) for a unit anchor
    for (std::size_t j = 0; j < x_tilde.size(); ++j)
        out.d_x[j] = -(anchor[j] / nx - cos * x_tilde[j] / (nx * nx));
    return out;
}

ClLoss cl_loss(const nn::Mlp& classifier_frozen, const num::Matrix& x_fake_seen,
               std::span<const int> labels, const data::ClassIndex& seen_index) {
    if (x_fake_seen.rows() != labels.size())
        throw DimensionMismatchError("cl_loss: label count mismatch");
    std::vector<int> idx(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (!seen_index.contains(labels[i]))
            throw UnseenLabelInClLossError("cl_loss: label " + std::to_string(labels[i]) +
                                           " is not a seen class");
        idx[i] = static_cast<int>(seen_index.index_of(labels[i]));
    }
    nn::ForwardCache cache;
    num::Matrix logits = nn::mlp_forward(classifier_frozen, x_fake_seen, &cache);
    nn::SoftmaxXent xent = nn::softmax_xent(logits, idx);
    nn::Gradients grads = nn::mlp_backward(classifier_frozen, cache, xent.d_logits);
    // classifier parameters stay untouched; only the input gradient leaves
    return {xent.loss, std::move(grads.d_input)};
}

LossGrads generator_loss(const nn::Mlp& gen, const nn::Mlp& critic,
                         const nn::Mlp& classifier_frozen, const cluster::PrototypeBank& bank,
                         const GenBatch& batch, const GanConfig& cfg,
                         const data::ClassIndex& seen_index) {
    const std::size_t B = batch.class_ids.size();
    if (batch.conds.size() != B || batch.z.rows() != B)
        throw DimensionMismatchError("generator_loss: batch pieces disagree");

    num::Matrix gen_in(B, batch.conds[0].e.size() + batch.z.cols());
    for (std::size_t i = 0; i < B; ++i) {
        auto dst = gen_in.row(i);
        std::copy(batch.conds[i].e.begin(), batch.conds[i].e.end(), dst.begin());
        auto zr = batch.z.row(i);
        std::copy(zr.begin(), zr.end(), dst.begin() + static_cast<long>(batch.conds[i].e.size()));
    }

    nn::ForwardCache gen_cache;
    num::Matrix x_fake = nn::mlp_forward(gen, gen_in, &gen_cache);
    const std::size_t d = x_fake.cols();

    LossGrads out;
    num::Matrix d_fake(B, d);

    // adversarial term: -mean D([x_fake; e])
    {
        num::Matrix critic_in = concat_cols(x_fake, batch.conds);
        nn::ForwardCache cache;
        num::Matrix score = nn::mlp_forward(critic, critic_in, &cache);
        double mean = 0.0;
        for (std::size_t i = 0; i < B; ++i) mean += score(i, 0);
        out.loss -= mean / static_cast<double>(B);
        num::Matrix up(B, 1, -1.0 / static_cast<double>(B));
        nn::Gradients critic_grads = nn::mlp_backward(critic, cache, up);
        for (std::size_t i = 0; i < B; ++i) {
            auto src = critic_grads.d_input.row(i);
            num::axpy(1.0, src.subspan(0, d), d_fake.row(i));
        }
    }

    // frozen-classifier term over the seen rows only
    if (cfg.lambda_cl > 0.0) {
        std::vector<std::size_t> seen_rows;
        for (std::size_t i = 0; i < B; ++i)
            if (seen_index.contains(batch.class_ids[i])) seen_rows.push_back(i);
        if (!seen_rows.empty()) {
            num::Matrix xs(seen_rows.size(), d);
            std::vector<int> ys(seen_rows.size());
            for (std::size_t i = 0; i < seen_rows.size(); ++i) {
                auto src = x_fake.row(seen_rows[i]);
                std::copy(src.begin(), src.end(), xs.row(i).begin());
                ys[i] = batch.class_ids[seen_rows[i]];
            }
            ClLoss cl = cl_loss(classifier_frozen, xs, ys, seen_index);
            out.loss += cfg.lambda_cl * cl.loss;
            for (std::size_t i = 0; i < seen_rows.size(); ++i)
                num::axpy(cfg.lambda_cl, cl.d_x.row(i), d_fake.row(seen_rows[i]));
        }
    }

    // anchor-cosine term over every row
    if (cfg.lambda3 > 0.0) {
        double total = 0.0;
        for (std::size_t i = 0; i < B; ++i) {
            Ssl3Loss s3 = ssl3_loss(x_fake.row(i), bank, batch.class_ids[i]);
            total += s3.loss;
            num::axpy(cfg.lambda3 / static_cast<double>(B), s3.d_x, d_fake.row(i));
        }
        out.loss += cfg.lambda3 * total / static_cast<double>(B);
    }

    out.grads = nn::mlp_backward(gen, gen_cache, d_fake);
    return out;
}

nn::Mlp pretrain_classifier(const num::Matrix& x_seen, std::span<const int> labels,
                            const data::ClassIndex& seen_index, const GanConfig& cfg,
                            num::RngState& rng) {
    std::vector<int> idx(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i)
        idx[i] = static_cast<int>(seen_index.index_of(labels[i]));
    return nn::train_softmax_classifier(x_seen, idx, seen_index.size(), cfg.classifier, rng);
}

Gan train_gan(const num::Matrix& x_real_seen, std::span<const int> labels,
              const cluster::PrototypeBank& bank, const nn::Mlp& classifier_frozen,
              const GanConfig& cfg, const data::ClassIndex& universe,
              const data::ClassIndex& seen_index, const num::Matrix* attributes,
              num::RngState& rng) {
    cfg.validate();
    if (x_real_seen.rows() == 0) throw EmptyDatasetError("train_gan: no real samples");
    const std::size_t d = x_real_seen.cols();
    const std::size_t e_dim = conditioning_dim(cfg.conditioning, universe, &bank, attributes);

    Gan gan;
    {
        std::vector<std::size_t> dims{e_dim + cfg.noise_dim};
        dims.insert(dims.end(), cfg.gen_hidden.begin(), cfg.gen_hidden.end());
        dims.push_back(d);
        std::vector<nn::Activation> acts(dims.size() - 1, nn::Activation::leaky_relu);
        acts.back() = cfg.gen_output;
        gan.gen = nn::make_mlp(dims, acts, rng, 0.01);
    }
    {
        std::vector<std::size_t> dims{d + e_dim};
        dims.insert(dims.end(), cfg.critic_hidden.begin(), cfg.critic_hidden.end());
        dims.push_back(1);
        std::vector<nn::Activation> acts(dims.size() - 1, nn::Activation::leaky_relu);
        acts.back() = nn::Activation::linear;
        gan.critic = nn::make_mlp(dims, acts, rng, 0.01);
    }

    nn::AdamState gen_opt(gan.gen, {.lr = cfg.lr, .beta1 = cfg.beta1, .beta2 = cfg.beta2});
    nn::AdamState critic_opt(gan.critic, {.lr = cfg.lr, .beta1 = cfg.beta1, .beta2 = cfg.beta2});

    auto draw_fakes = [&](GenBatch& batch) {
        batch.class_ids.resize(cfg.batch_size);
        batch.conds.resize(cfg.batch_size);
        batch.z = num::Matrix(cfg.batch_size, cfg.noise_dim);
        for (std::size_t i = 0; i < cfg.batch_size; ++i) {
            const int cls = universe.ids[rng.below(universe.size())];
            batch.class_ids[i] = cls;
            batch.conds[i] = make_condition(cls, cfg.conditioning, universe, &bank, attributes);
            for (double& v : batch.z.row(i)) v = rng.normal();
        }
    };

    auto generate_batch = [&](const GenBatch& batch) {
        num::Matrix in(cfg.batch_size, e_dim + cfg.noise_dim);
        for (std::size_t i = 0; i < cfg.batch_size; ++i) {
            auto dst = in.row(i);
            std::copy(batch.conds[i].e.begin(), batch.conds[i].e.end(), dst.begin());
            auto zr = batch.z.row(i);
            std::copy(zr.begin(), zr.end(), dst.begin() + static_cast<long>(e_dim));
        }
        return nn::mlp_forward(gan.gen, in);
    };

    const std::size_t steps_per_epoch =
        (x_real_seen.rows() + cfg.batch_size - 1) / cfg.batch_size;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t step = 0; step < steps_per_epoch; ++step) {
            for (int c = 0; c < cfg.critic_steps; ++c) {
                CriticBatch real;
                real.x = num::Matrix(cfg.batch_size, d);
                real.conds.resize(cfg.batch_size);
                for (std::size_t i = 0; i < cfg.batch_size; ++i) {
                    const std::size_t r = static_cast<std::size_t>(rng.below(x_real_seen.rows()));
                    auto src = x_real_seen.row(r);
                    std::copy(src.begin(), src.end(), real.x.row(i).begin());
                    real.conds[i] =
                        make_condition(labels[r], cfg.conditioning, universe, &bank, attributes);
                }
                GenBatch fake_spec;
                draw_fakes(fake_spec);
                CriticBatch fake;
                fake.x = generate_batch(fake_spec);
                fake.conds = fake_spec.conds;

                LossGrads dl = critic_loss(gan.critic, real, fake, cfg.lambda_gp, rng);
                gan.gp_skipped += dl.gp_skipped;
                nn::adam_step(gan.critic, dl.grads, critic_opt);
            }
            GenBatch gen_batch;
            draw_fakes(gen_batch);
            LossGrads gl = generator_loss(gan.gen, gan.critic, classifier_frozen, bank, gen_batch,
                                          cfg, seen_index);
            nn::adam_step(gan.gen, gl.grads, gen_opt);
        }
    }
    return gan;
}

}  // namespace gzsl::synth
