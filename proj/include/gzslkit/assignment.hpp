#pragma once

#include <vector>

#include "gzslkit/matrix.hpp"

namespace gzsl::num {

// Optimal assignment on a square cost matrix (Hungarian algorithm with
// potentials, O(n^3)). Returns assignment[row] = column minimizing the
// total cost.
std::vector<std::size_t> hungarian_min(const Matrix& cost);

// Convenience wrapper maximizing total value.
std::vector<std::size_t> hungarian_max(const Matrix& value);

}  // namespace gzsl::num
