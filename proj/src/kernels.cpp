#include "gzslkit/kernels.hpp"

#include <algorithm>
#include <cmath>

#include "gzslkit/error.hpp"

namespace gzsl::num {

std::vector<double> l2_normalize(std::span<const double> v) {
    std::vector<double> out(v.begin(), v.end());
    l2_normalize_inplace(out);
    return out;
}

void l2_normalize_inplace(std::span<double> v) {
    const double n = norm2(v);
    if (n < kZeroVectorNorm) throw ZeroVectorError("l2_normalize: zero vector");
    for (double& x : v) x /= n;
}

double cosine_sim(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size())
        throw DimensionMismatchError("cosine_sim: length mismatch");
    const double na = norm2(a);
    const double nb = norm2(b);
    if (na < kZeroVectorNorm || nb < kZeroVectorNorm)
        throw ZeroVectorError("cosine_sim: zero vector");
    return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

std::vector<double> tempered_softmax(std::span<const double> logits, double tau) {
    if (tau <= 0.0) throw NumericError("tempered_softmax: tau must be positive");
    std::vector<double> p(logits.size());
    if (logits.empty()) return p;
    double mx = logits[0];
    for (double l : logits) mx = std::max(mx, l);
    double z = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp((logits[i] - mx) / tau);
        z += p[i];
    }
    for (double& x : p) x /= z;
    return p;
}

double entropy(const Matrix& q) {
    double h = 0.0;
    for (double v : q.data()) {
        if (v < 0.0) throw NegativeEntryError("entropy: negative entry");
        if (v > 0.0) h -= v * std::log(v);
    }
    return h;
}

std::vector<double> sample_gaussian(RngState& rng, std::size_t n) {
    std::vector<double> out(n);
    for (double& x : out) x = rng.normal();
    return out;
}

}  // namespace gzsl::num
