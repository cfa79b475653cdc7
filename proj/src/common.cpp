#include "multiprior/common.hpp"

#include <algorithm>

namespace multiprior {

bool solve_linear(Mat a, Vec b, Vec& x, double tol) {
    const int n = int(a.size());
    for (int col = 0; col < n; ++col) {
        int piv = col;
        for (int r = col + 1; r < n; ++r)
            if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
        if (std::abs(a[piv][col]) < tol) return false;
        std::swap(a[piv], a[col]);
        std::swap(b[piv], b[col]);
        const double d = a[col][col];
        for (int r = 0; r < n; ++r) {
            if (r == col) continue;
            const double f = a[r][col] / d;
            if (f == 0.0) continue;
            for (int c = col; c < n; ++c) a[r][c] -= f * a[col][c];
            b[r] -= f * b[col];
        }
    }
    x.assign(n, 0.0);
    for (int i = 0; i < n; ++i) x[i] = b[i] / a[i][i];
    return true;
}

}  // namespace multiprior
