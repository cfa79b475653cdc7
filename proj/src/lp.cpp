#include "multiprior/lp.hpp"

#include <algorithm>
#include <cmath>

namespace multiprior {

namespace {

constexpr double kPivTol = 1e-11;
constexpr double kOptTol = 1e-10;
constexpr double kFeasTol = 1e-8;
constexpr long kMaxIter = 50000;

// Dense tableau over [structural | artificial | rhs] columns. Bland's
// rule everywhere: smallest eligible entering index, smallest basis
// index among the minimum-ratio rows. Slow and cycle-free, which is the
// right trade for problems this size.
struct Tableau {
    int n = 0;   // structural columns
    int na = 0;  // artificial columns
    Mat T;
    std::vector<int> basis;
    Vec red;

    int rhs_col() const { return n + na; }

    void pivot(int r, int j) {
        const double d = T[r][j];
        for (double& v : T[r]) v /= d;
        T[r][j] = 1.0;
        for (int i = 0; i < int(T.size()); ++i) {
            if (i == r) continue;
            const double f = T[i][j];
            if (f == 0.0) continue;
            for (int c = 0; c <= rhs_col(); ++c) T[i][c] -= f * T[r][c];
            T[i][j] = 0.0;
        }
        const double f = red[j];
        if (f != 0.0) {
            for (int c = 0; c <= rhs_col(); ++c) red[c] -= f * T[r][c];
            red[j] = 0.0;
        }
        basis[r] = j;
    }

    // 0 = optimal, 1 = unbounded, 2 = iteration limit
    int iterate(bool allow_artificial) {
        const int limit_col = allow_artificial ? rhs_col() : n;
        for (long it = 0; it < kMaxIter; ++it) {
            int enter = -1;
            for (int j = 0; j < limit_col; ++j)
                if (red[j] < -kOptTol) { enter = j; break; }
            if (enter < 0) return 0;

            double best = kInf;
            for (size_t i = 0; i < T.size(); ++i)
                if (T[i][enter] > kPivTol)
                    best = std::min(best, T[i][rhs_col()] / T[i][enter]);
            if (best == kInf) return 1;

            int leave = -1;
            for (size_t i = 0; i < T.size(); ++i) {
                if (T[i][enter] <= kPivTol) continue;
                const double ratio = T[i][rhs_col()] / T[i][enter];
                if (ratio <= best + 1e-12 * (1.0 + std::abs(best)))
                    if (leave < 0 || basis[i] < basis[leave]) leave = int(i);
            }
            pivot(leave, enter);
        }
        return 2;
    }
};

}  // namespace

LpSolution solve_lp(const LinearProgram& lp) {
    const int nx = lp.nvars();

    // Map every variable onto the nonnegative orthant.
    // kind 0: x = z + off, kind 1: x = off - z, kind 2: x = z - z2.
    struct VarMap { int kind; int col, col2; double off; };
    std::vector<VarMap> vm(nx);
    int nz = 0;
    std::vector<std::pair<int, double>> caps;  // (var, ub - lb)
    for (int i = 0; i < nx; ++i) {
        const double lo = lp.lb[i], hi = lp.ub[i];
        if (lo > hi) return {LpStatus::Infeasible, kInf, {}};
        if (std::isfinite(lo)) {
            vm[i] = {0, nz++, -1, lo};
            if (std::isfinite(hi)) caps.push_back({i, hi - lo});
        } else if (std::isfinite(hi)) {
            vm[i] = {1, nz++, -1, hi};
        } else {
            vm[i] = {2, nz, nz + 1, 0.0};
            nz += 2;
        }
    }

    Mat rows;
    Vec rhs;
    std::string sn;
    for (size_t r = 0; r < lp.A.size(); ++r) {
        Vec az(nz, 0.0);
        double rr = lp.b[r];
        char s = lp.sense[r];
        for (int i = 0; i < nx; ++i) {
            const double ai = lp.A[r][i];
            if (ai == 0.0) continue;
            switch (vm[i].kind) {
                case 0: az[vm[i].col] += ai; rr -= ai * vm[i].off; break;
                case 1: az[vm[i].col] -= ai; rr -= ai * vm[i].off; break;
                default: az[vm[i].col] += ai; az[vm[i].col2] -= ai; break;
            }
        }
        if (s == '>') {
            for (double& v : az) v = -v;
            rr = -rr;
            s = '<';
        }
        rows.push_back(std::move(az));
        rhs.push_back(rr);
        sn.push_back(s);
    }
    for (auto& [i, cap] : caps) {
        Vec az(nz, 0.0);
        az[vm[i].col] = 1.0;
        rows.push_back(std::move(az));
        rhs.push_back(cap);
        sn.push_back('<');
    }

    int nslack = 0;
    for (char s : sn) nslack += (s == '<');
    const int n = nz + nslack;
    const int m = int(rows.size());

    Tableau tab;
    tab.n = n;
    tab.na = m;
    tab.T.assign(m, Vec(n + m + 1, 0.0));
    tab.basis.resize(m);
    int sidx = nz;
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < nz; ++j) tab.T[i][j] = rows[i][j];
        if (sn[i] == '<') tab.T[i][sidx++] = 1.0;
        tab.T[i][n + m] = rhs[i];
        if (tab.T[i][n + m] < 0.0)
            for (double& v : tab.T[i]) v = -v;
        tab.T[i][n + i] = 1.0;
        tab.basis[i] = n + i;
    }

    // Phase 1: minimize the artificial sum.
    tab.red.assign(n + m + 1, 0.0);
    for (int j = 0; j < n; ++j) {
        double s = 0.0;
        for (int i = 0; i < m; ++i) s += tab.T[i][j];
        tab.red[j] = -s;
    }
    {
        double s = 0.0;
        for (int i = 0; i < m; ++i) s += tab.T[i][n + m];
        tab.red[n + m] = -s;
    }
    int rc = tab.iterate(true);
    if (rc == 2) return {LpStatus::IterationLimit, kInf, {}};
    if (-tab.red[n + m] > kFeasTol) return {LpStatus::Infeasible, kInf, {}};

    // Drive remaining artificial variables out of the basis; a row that
    // cannot pivot on any structural column is redundant and dropped.
    for (int i = int(tab.T.size()) - 1; i >= 0; --i) {
        if (tab.basis[i] < n) continue;
        int j = -1;
        for (int c = 0; c < n; ++c)
            if (std::abs(tab.T[i][c]) > kPivTol) { j = c; break; }
        if (j >= 0) {
            tab.pivot(i, j);
        } else {
            tab.T.erase(tab.T.begin() + i);
            tab.basis.erase(tab.basis.begin() + i);
        }
    }

    // Phase 2 cost row.
    Vec cz(n, 0.0);
    for (int i = 0; i < nx; ++i) {
        const double ci = lp.c[i];
        if (ci == 0.0) continue;
        switch (vm[i].kind) {
            case 0: cz[vm[i].col] += ci; break;
            case 1: cz[vm[i].col] -= ci; break;
            default: cz[vm[i].col] += ci; cz[vm[i].col2] -= ci; break;
        }
    }
    tab.red.assign(n + m + 1, 0.0);
    for (int j = 0; j <= n + m; ++j) {
        double v = (j < n) ? cz[j] : 0.0;
        for (size_t i = 0; i < tab.T.size(); ++i) {
            const int bj = tab.basis[i];
            if (bj < n && cz[bj] != 0.0) v -= cz[bj] * tab.T[i][j];
        }
        tab.red[j] = v;
    }
    rc = tab.iterate(false);
    if (rc == 2) return {LpStatus::IterationLimit, kInf, {}};
    if (rc == 1) return {LpStatus::Unbounded, -kInf, {}};

    Vec z(n, 0.0);
    for (size_t i = 0; i < tab.T.size(); ++i)
        if (tab.basis[i] < n) z[tab.basis[i]] = tab.T[i][n + m];

    LpSolution sol;
    sol.status = LpStatus::Optimal;
    sol.x.assign(nx, 0.0);
    for (int i = 0; i < nx; ++i) {
        switch (vm[i].kind) {
            case 0: sol.x[i] = z[vm[i].col] + vm[i].off; break;
            case 1: sol.x[i] = vm[i].off - z[vm[i].col]; break;
            default: sol.x[i] = z[vm[i].col] - z[vm[i].col2]; break;
        }
    }
    sol.objective = dot(lp.c, sol.x);
    return sol;
}

}  // namespace multiprior
