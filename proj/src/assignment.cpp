#include "gzslkit/assignment.hpp"

#include <limits>

#include "gzslkit/error.hpp"

namespace gzsl::num {

std::vector<std::size_t> hungarian_min(const Matrix& cost) {
    if (cost.rows() != cost.cols())
        throw DimensionMismatchError("hungarian_min: matrix must be square");
    const std::size_t n = cost.rows();
    if (n == 0) return {};

    const double inf = std::numeric_limits<double>::infinity();
    // 1-based potentials formulation; column 0 is a virtual slot.
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<std::size_t> match(n + 1, 0);  // match[col] = row (1-based)
    std::vector<std::size_t> way(n + 1, 0);

    for (std::size_t i = 1; i <= n; ++i) {
        match[0] = i;
        std::size_t j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<char> used(n + 1, false);
        do {
            used[j0] = true;
            const std::size_t i0 = match[j0];
            double delta = inf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[match[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (match[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            match[j0] = match[j1];
            j0 = j1;
        } while (j0 != 0);
    }

    std::vector<std::size_t> assignment(n, 0);
    for (std::size_t j = 1; j <= n; ++j)
        if (match[j] != 0) assignment[match[j] - 1] = j - 1;
    return assignment;
}

std::vector<std::size_t> hungarian_max(const Matrix& value) {
    Matrix neg(value.rows(), value.cols());
    for (std::size_t i = 0; i < value.size(); ++i) neg.data()[i] = -value.data()[i];
    return hungarian_min(neg);
}

}  // namespace gzsl::num
