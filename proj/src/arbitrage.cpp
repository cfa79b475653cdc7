#include "multiprior/arbitrage.hpp"

#include <algorithm>

#include "multiprior/lp.hpp"

namespace multiprior {

namespace {

constexpr double kArbTol = 1e-10;
constexpr double kSpanTol = 1e-10;

Mat charged_increments(const ScenarioTree& tree, const ChargedSet& charged, int node_id) {
    Mat out;
    for (int c : tree.node(node_id).children)
        if (charged.edge[c]) out.push_back(tree.increment(c));
    return out;
}

// Modified Gram-Schmidt span of the given vectors.
Mat orthonormal_span(const Mat& vs, double scale) {
    Mat basis;
    for (Vec v : vs) {
        for (const Vec& b : basis) axpy(-dot(v, b), b, v);
        const double n = norm2(v);
        if (n > kSpanTol * (1.0 + scale)) {
            for (double& x : v) x /= n;
            basis.push_back(std::move(v));
        }
    }
    return basis;
}

}  // namespace

const NodeNAReport& NAResult::report_for(int node_id) const {
    for (const NodeNAReport& r : nodes)
        if (r.node == node_id) return r;
    throw Error("no NA report for node " + std::to_string(node_id));
}

NAResult check_na(const ScenarioTree& tree, const PriorSet& priors) {
    const ChargedSet charged = charged_set(tree, priors);
    const int d = tree.dim();
    NAResult res;
    for (const Node& nd : tree.nodes()) {
        if (nd.children.empty()) continue;
        NodeNAReport rep;
        rep.node = nd.id;
        rep.charged = charged.is_charged(nd.id);
        if (!rep.charged) {
            res.nodes.push_back(std::move(rep));
            continue;
        }
        const Mat inc = charged_increments(tree, charged, nd.id);
        double scale = 0.0;
        for (const Vec& v : inc) scale = std::max(scale, norm_inf(v));

        // max sum_j h.dS_j  s.t.  h.dS_j >= 0,  -1 <= h <= 1
        LinearProgram lp = LinearProgram::make(d);
        for (int i = 0; i < d; ++i) {
            lp.lb[i] = -1.0;
            lp.ub[i] = 1.0;
        }
        for (const Vec& ds : inc) {
            for (int i = 0; i < d; ++i) lp.c[i] -= ds[i];  // maximize => minimize negative
            lp.add_row(ds, '>', 0.0);
        }
        const LpSolution sol = solve_lp(lp);
        if (!sol.optimal()) throw SolverError("one-step arbitrage LP failed");
        if (-sol.objective > kArbTol * (1.0 + scale)) {
            rep.na_holds = false;
            rep.arbitrage_direction = sol.x;
        }
        rep.D_is_linear = rep.na_holds;
        rep.D_basis = orthonormal_span(inc, scale);
        if (!rep.na_holds) res.global_na = false;
        res.nodes.push_back(std::move(rep));
    }
    return res;
}

Mat compute_D(const ScenarioTree& tree, const ChargedSet& charged, int node_id, bool* linear) {
    if (tree.is_leaf(node_id)) throw PreconditionError("compute_D called on a leaf");
    const Mat inc = charged_increments(tree, charged, node_id);
    double scale = 0.0;
    for (const Vec& v : inc) scale = std::max(scale, norm_inf(v));
    if (linear) {
        // one-step check restricted to this node
        LinearProgram lp = LinearProgram::make(tree.dim());
        for (int i = 0; i < tree.dim(); ++i) {
            lp.lb[i] = -1.0;
            lp.ub[i] = 1.0;
        }
        for (const Vec& ds : inc) {
            for (int i = 0; i < tree.dim(); ++i) lp.c[i] -= ds[i];
            lp.add_row(ds, '>', 0.0);
        }
        const LpSolution sol = solve_lp(lp);
        *linear = sol.optimal() && -sol.objective <= kArbTol * (1.0 + scale);
    }
    return orthonormal_span(inc, scale);
}

double compute_alpha(const ScenarioTree& tree, const PriorSet& priors, const ChargedSet& charged,
                     int node_id, const AlphaOptions& opt) {
    if (tree.is_leaf(node_id)) throw PreconditionError("compute_alpha called on a leaf");
    bool linear = true;
    const Mat basis = compute_D(tree, charged, node_id, &linear);
    if (!linear)
        throw PreconditionError("compute_alpha requires one-step no-arbitrage at node " +
                                std::to_string(node_id));
    const int k = int(basis.size());
    if (k == 0) return kInf;  // vacuous over the empty unit sphere

    // Direction grid over the unit sphere of D, expressed in basis
    // coordinates. Deterministic by construction.
    Mat dirs;
    int nd = opt.directions;
    if (k == 1) {
        dirs = {{1.0}, {-1.0}};
    } else if (k == 2) {
        if (nd <= 0) nd = 1 << std::min(opt.dyadic_k, 12);
        for (int i = 0; i < nd; ++i) {
            const double a = 2.0 * 3.14159265358979323846 * double(i) / double(nd);
            dirs.push_back({std::cos(a), std::sin(a)});
        }
    } else if (k == 3) {
        if (nd <= 0) nd = 1 << std::min(opt.dyadic_k, 12);
        const double ga = 2.39996322972865332;  // golden angle
        for (int i = 0; i < nd; ++i) {
            const double z = 1.0 - 2.0 * (double(i) + 0.5) / double(nd);
            const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
            dirs.push_back({r * std::cos(ga * i), r * std::sin(ga * i), z});
        }
    } else {
        if (nd <= 0) nd = 4096;
        Rng rng(0x5eed);  // fixed stream, reproducible
        for (int i = 0; i < nd; ++i) {
            Vec u(k);
            double n2 = 0.0;
            do {
                for (double& v : u) v = rng.normal();
                n2 = norm2(u);
            } while (n2 < 1e-8);
            for (double& v : u) v /= n2;
            dirs.push_back(std::move(u));
        }
    }

    const Node& nd_ref = tree.node(node_id);
    std::vector<int> cidx;  // charged child slots
    for (size_t j = 0; j < nd_ref.children.size(); ++j)
        if (charged.edge[nd_ref.children[j]]) cidx.push_back(int(j));
    Mat inc;
    for (int j : cidx) inc.push_back(tree.increment(nd_ref.children[j]));

    // Feasibility of one alpha for one direction: some extreme puts mass
    // above alpha on the event {h.dS < -alpha}.
    auto feasible_dir = [&](const Vec& hb, double alpha) {
        Vec h(tree.dim(), 0.0);
        for (int i = 0; i < k; ++i) axpy(hb[i], basis[i], h);
        double best = 0.0;
        for (const Vec& e : priors.extremes(node_id)) {
            double mass = 0.0;
            for (size_t jj = 0; jj < cidx.size(); ++jj)
                if (dot(h, inc[jj]) < -alpha) mass += e[cidx[jj]];
            best = std::max(best, mass);
        }
        return best > alpha;
    };

    double max_loss = 0.0;
    for (const Vec& ds : inc) max_loss = std::max(max_loss, norm2(ds));
    const double step = std::ldexp(1.0, -opt.dyadic_k);
    const long jmax = long(std::min(max_loss, 1.0) / step) + 1;

    // Feasibility is downward closed in alpha, so scan from the top.
    for (long j = jmax; j >= 1; --j) {
        const double alpha = double(j) * step;
        bool ok = true;
        for (const Vec& hb : dirs)
            if (!feasible_dir(hb, alpha)) { ok = false; break; }
        if (ok) return alpha;
    }
    return 0.0;  // nothing positive at this resolution; caller should review
}

Strategy project_onto_D(const ScenarioTree& tree, const ChargedSet& charged, const Strategy& s) {
    Strategy out = s;
    for (const Node& nd : tree.nodes()) {
        if (nd.children.empty()) continue;
        const Mat basis = compute_D(tree, charged, nd.id, nullptr);
        Vec h(tree.dim(), 0.0);
        for (const Vec& b : basis) axpy(dot(s.holding[nd.id], b), b, h);
        out.holding[nd.id] = std::move(h);
    }
    return out;
}

}  // namespace multiprior
