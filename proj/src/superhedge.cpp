#include "multiprior/superhedge.hpp"

#include <algorithm>

#include "multiprior/lp.hpp"

namespace multiprior {

namespace {

constexpr double kTol = 1e-9;

// Minimum-norm holdings among the optima of the node LP at value v*:
// KKT active-set enumeration for  min |h|^2  s.t.  v* + h.dS_j >= pi_j.
// h must be a nonnegative combination of the active increments; with at
// most a handful of children enumerating subsets is exact and cheap.
Vec min_norm_holdings(const Mat& inc, const Vec& rhs, double vstar, const Vec& fallback) {
    const int k = int(inc.size());
    const int d = k > 0 ? int(inc[0].size()) : 0;
    double scale = 1.0;
    for (const Vec& v : inc) scale = std::max(scale, norm_inf(v));
    for (double v : rhs) scale = std::max(scale, std::abs(v));

    auto feasible = [&](const Vec& h) {
        for (int j = 0; j < k; ++j)
            if (vstar + dot(h, inc[j]) < rhs[j] - 1e-8 * (1.0 + scale)) return false;
        return true;
    };

    Vec best;
    double best_norm = kInf;
    auto consider = [&](const Vec& h) {
        if (!feasible(h)) return;
        const double n = norm2(h);
        if (n < best_norm - 1e-12) {
            best_norm = n;
            best = h;
        }
    };

    consider(Vec(d, 0.0));
    for (int mask = 1; mask < (1 << k); ++mask) {
        std::vector<int> act;
        for (int j = 0; j < k; ++j)
            if (mask & (1 << j)) act.push_back(j);
        if (int(act.size()) > d) continue;
        const int a = int(act.size());
        // h = sum_j lambda_j dS_j with the active constraints tight:
        // (dS_i . dS_j) lambda = rhs_i - v*
        Mat gram(a, Vec(a, 0.0));
        Vec r(a, 0.0);
        for (int i = 0; i < a; ++i) {
            for (int j = 0; j < a; ++j) gram[i][j] = dot(inc[act[i]], inc[act[j]]);
            r[i] = rhs[act[i]] - vstar;
        }
        Vec lambda;
        if (!solve_linear(gram, r, lambda, 1e-11 * (1.0 + scale * scale))) continue;
        bool dual_ok = true;
        for (double l : lambda)
            if (l < -1e-8) { dual_ok = false; break; }
        if (!dual_ok) continue;
        Vec h(d, 0.0);
        for (int i = 0; i < a; ++i) axpy(lambda[i], inc[act[i]], h);
        consider(h);
    }
    if (best.empty()) return fallback;
    return best;
}

SuperhedgeResult solve_super(const ScenarioTree& tree, const PriorSet& priors, const Claim& claim,
                             const SuperhedgeOptions& opt) {
    const ChargedSet charged = charged_set(tree, priors);
    const int d = tree.dim();

    SuperhedgeResult res;
    res.node_values.assign(tree.node_count(), -kInf);
    res.strategy = Strategy::zeros(tree);

    for (int leaf : tree.leaves())
        if (charged.is_charged(leaf)) res.node_values[leaf] = claim.value[leaf];

    for (int t = tree.horizon() - 1; t >= 0; --t) {
        for (int id : tree.level(t)) {
            const Node& nd = tree.node(id);
            if (nd.children.empty() || !charged.is_charged(id)) continue;
            Mat inc;
            Vec rhs;
            for (int c : nd.children) {
                if (!charged.edge[c]) continue;  // no quasi-sure constraint
                inc.push_back(tree.increment(c));
                rhs.push_back(res.node_values[c]);
            }
            // min v  s.t.  v + h.dS_j >= pi_j
            LinearProgram lp = LinearProgram::make(1 + d);
            lp.c[0] = 1.0;
            for (size_t j = 0; j < inc.size(); ++j) {
                Vec row(1 + d, 0.0);
                row[0] = 1.0;
                for (int i = 0; i < d; ++i) row[1 + i] = inc[j][i];
                lp.add_row(row, '>', rhs[j]);
            }
            const LpSolution sol = solve_lp(lp);
            if (sol.status == LpStatus::Unbounded)
                throw SolverError("superhedge LP unbounded at node " + std::to_string(id) +
                                  "; one-step no-arbitrage fails there");
            if (!sol.optimal())
                throw SolverError("superhedge LP failed at node " + std::to_string(id));
            const double v = sol.objective;
            Vec h_lp(sol.x.begin() + 1, sol.x.end());
            res.node_values[id] = v;
            res.strategy.holding[id] = min_norm_holdings(inc, rhs, v, h_lp);
        }
    }
    res.price = res.node_values[0];

    if (opt.with_dual) {
        Vec mass;
        res.dual_price = dual_price(tree, priors, claim, &mass);
        res.has_dual = true;
        res.dual_mass = std::move(mass);
    }
    return res;
}

}  // namespace

SuperhedgeResult superreplication_price(const ScenarioTree& tree, const PriorSet& priors,
                                        const Claim& claim, const SuperhedgeOptions& opt) {
    return solve_super(tree, priors, claim, opt);
}

SuperhedgeResult subreplication_price(const ScenarioTree& tree, const PriorSet& priors,
                                      const Claim& claim, const SuperhedgeOptions& opt) {
    Claim neg;
    neg.value.resize(claim.value.size());
    for (size_t i = 0; i < claim.value.size(); ++i) neg.value[i] = -claim.value[i];
    SuperhedgeResult r = solve_super(tree, priors, neg, SuperhedgeOptions{false});
    SuperhedgeResult out;
    out.price = 0.0 - r.price;  // keeps zero positive
    out.node_values.assign(r.node_values.size(), -kInf);
    for (size_t i = 0; i < r.node_values.size(); ++i)
        if (r.node_values[i] != -kInf) out.node_values[i] = 0.0 - r.node_values[i];
    out.strategy = Strategy::zeros(tree);
    for (int i = 0; i < tree.node_count(); ++i)
        for (int c = 0; c < tree.dim(); ++c) out.strategy.holding[i][c] = -r.strategy.holding[i][c];
    if (opt.with_dual) {
        Vec mass;
        // buyer side: minimize E_P G over the same measure class
        Claim negg = neg;
        out.dual_price = -dual_price(tree, priors, negg, &mass);
        out.has_dual = true;
        out.dual_mass = std::move(mass);
    }
    return out;
}

double dual_price(const ScenarioTree& tree, const PriorSet& priors, const Claim& claim,
                  Vec* node_mass) {
    const ChargedSet charged = charged_set(tree, priors);
    const int d = tree.dim();

    // One variable per charged edge, indexed by child node id.
    std::vector<int> var_of(tree.node_count(), -1);
    std::vector<int> owner;  // child node id per variable
    for (const Node& nd : tree.nodes()) {
        if (!charged.is_charged(nd.id)) continue;
        for (int c : nd.children)
            if (charged.edge[c]) {
                var_of[c] = int(owner.size());
                owner.push_back(c);
            }
    }
    const int nv = int(owner.size());
    LinearProgram lp = LinearProgram::make(nv);
    for (int i = 0; i < nv; ++i) lp.lb[i] = 0.0;

    // maximize sum over leaves of w_leaf G(leaf)
    for (int i = 0; i < nv; ++i)
        if (tree.is_leaf(owner[i])) lp.c[i] = -claim.value[owner[i]];

    for (const Node& nd : tree.nodes()) {
        if (nd.children.empty() || !charged.is_charged(nd.id)) continue;
        // mass conservation: outflow equals inflow (1 at the root)
        Vec row(nv, 0.0);
        for (int c : nd.children)
            if (charged.edge[c]) row[var_of[c]] = 1.0;
        double in = 1.0;
        if (nd.id != 0) {
            row[var_of[nd.id]] = -1.0;
            in = 0.0;
        }
        lp.add_row(row, '=', in);
        // zero one-step drift, coordinate by coordinate
        for (int i = 0; i < d; ++i) {
            Vec mrow(nv, 0.0);
            for (int c : nd.children)
                if (charged.edge[c]) mrow[var_of[c]] = tree.increment(c)[i];
            lp.add_row(mrow, '=', 0.0);
        }
    }

    const LpSolution sol = solve_lp(lp);
    if (sol.status == LpStatus::Infeasible)
        throw SolverError("no martingale measure on the charged support; "
                          "no-arbitrage is inconsistent here");
    if (!sol.optimal()) throw SolverError("martingale-measure LP failed");
    if (node_mass) {
        node_mass->assign(tree.node_count(), 0.0);
        (*node_mass)[0] = 1.0;
        for (int i = 0; i < nv; ++i) (*node_mass)[owner[i]] = sol.x[i];
    }
    return -sol.objective;
}

SeparationResult separation_certificate(const ScenarioTree& tree, const PriorSet& priors,
                                        const Claim& B, double z, const SeparationOptions& opt) {
    if (tree.horizon() > 3)
        throw ScopeError("separation certificate is brute force; horizon must be <= 3");
    for (const Node& nd : tree.nodes())
        if (int(nd.children.size()) > 4)
            throw ScopeError("separation certificate is brute force; at most 4 children per node");

    const ChargedSet charged = charged_set(tree, priors);
    const SuperhedgeResult sh = superreplication_price(tree, priors, B);
    SeparationResult res;
    if (z >= sh.price - 1e-12 * (1.0 + std::abs(sh.price))) {
        res.member = true;
        return res;
    }

    std::vector<int> comp_node;  // strategy components: (node, coordinate)
    std::vector<int> comp_dim;
    for (const Node& nd : tree.nodes())
        if (!nd.children.empty() && charged.is_charged(nd.id))
            for (int i = 0; i < tree.dim(); ++i) {
                comp_node.push_back(nd.id);
                comp_dim.push_back(i);
            }
    const int dims = int(comp_node.size());
    const int per = 2 * opt.strategy_steps + 1;
    double total = 1.0;
    for (int i = 0; i < dims; ++i) {
        total *= per;
        if (total > double(opt.max_strategies))
            throw ScopeError("strategy grid too large for the separation certificate");
    }

    const double step_h = opt.strategy_radius / double(opt.strategy_steps);
    const double step_e = std::ldexp(1.0, -opt.eps_dyadic_k);

    // Worst-case shortfall probability for a fixed strategy at a given
    // epsilon, exact over extreme pastings.
    Vec indicator(tree.node_count(), 0.0);
    auto worst_prob = [&](const Vec& wealth, double eps) {
        for (int leaf : tree.leaves())
            indicator[leaf] = (wealth[leaf] < B.value[leaf] - eps) ? 1.0 : 0.0;
        return robust_sup_expectation(tree, priors, charged, indicator);
    };

    long best_j = -1;  // min over strategies of the per-strategy best j
    Strategy s = Strategy::zeros(tree);
    std::vector<int> idx(dims, 0);
    while (true) {
        for (int i = 0; i < dims; ++i)
            s.holding[comp_node[i]][comp_dim[i]] = -opt.strategy_radius + step_h * idx[i];
        const Vec wealth = wealth_process(tree, s, z);
        // largest grid eps with worst_prob(eps) > eps; monotone in eps
        double dmax = 0.0;
        for (int leaf : tree.leaves())
            if (charged.is_charged(leaf)) dmax = std::max(dmax, B.value[leaf] - wealth[leaf]);
        long hi = long(std::min(dmax, 1.0) / step_e) + 1;
        long j = std::min(hi, best_j < 0 ? hi : best_j);
        for (; j >= 1; --j) {
            const double eps = double(j) * step_e;
            if (worst_prob(wealth, eps) > eps) break;
        }
        if (j < 1) {
            best_j = 0;
            break;  // some strategy defeats every positive grid epsilon
        }
        if (best_j < 0 || j < best_j) best_j = j;

        int k = 0;
        while (k < dims) {
            if (++idx[k] < per) break;
            idx[k] = 0;
            ++k;
        }
        if (k == dims) break;
    }
    res.epsilon = best_j > 0 ? double(best_j) * step_e : 0.0;
    return res;
}

}  // namespace multiprior
