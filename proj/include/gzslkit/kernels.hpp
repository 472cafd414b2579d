#pragma once

#include <span>
#include <vector>

#include "gzslkit/matrix.hpp"
#include "gzslkit/rng.hpp"

namespace gzsl::num {

inline constexpr double kZeroVectorNorm = 1e-30;

// v / ||v||_2; throws ZeroVectorError when ||v|| < 1e-30
std::vector<double> l2_normalize(std::span<const double> v);
void l2_normalize_inplace(std::span<double> v);

// a.b / (||a|| ||b||), clamped to [-1, 1]
double cosine_sim(std::span<const double> a, std::span<const double> b);

// softmax(logits / tau), max-subtracted for stability
std::vector<double> tempered_softmax(std::span<const double> logits, double tau);

// -sum_ij Q_ij log Q_ij with 0 log 0 := 0; entries must be nonnegative
double entropy(const Matrix& q);

// n i.i.d. standard normal draws
std::vector<double> sample_gaussian(RngState& rng, std::size_t n);

}  // namespace gzsl::num
