#pragma once

#include "multiprior/common.hpp"

namespace multiprior {

/// A small dense linear program
///     min c.x   s.t.  A[i].x  (sense[i])  b[i],   lb <= x <= ub
/// with sense characters '<', '=', '>' and infinite bounds allowed.
/// Problems in this library have a handful of variables and rows, so a
/// dense two-phase simplex with Bland's rule is entirely adequate.
struct LinearProgram {
    Vec c;
    Mat A;
    Vec b;
    std::string sense;
    Vec lb, ub;

    static LinearProgram make(int nvars) {
        LinearProgram lp;
        lp.c.assign(nvars, 0.0);
        lp.lb.assign(nvars, -kInf);
        lp.ub.assign(nvars, kInf);
        return lp;
    }

    int nvars() const { return int(c.size()); }

    void add_row(const Vec& a, char s, double rhs) {
        A.push_back(a);
        sense.push_back(s);
        b.push_back(rhs);
    }
};

enum class LpStatus { Optimal, Infeasible, Unbounded, IterationLimit };

struct LpSolution {
    LpStatus status = LpStatus::IterationLimit;
    double objective = kInf;
    Vec x;
    bool optimal() const { return status == LpStatus::Optimal; }
};

LpSolution solve_lp(const LinearProgram& lp);

}  // namespace multiprior
