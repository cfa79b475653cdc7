#include "multiprior/robust.hpp"

#include <algorithm>
#include <functional>

#include "multiprior/arbitrage.hpp"
#include "multiprior/lp.hpp"

namespace multiprior {

namespace {

struct Ctx {
    const ScenarioTree& tree;
    const PriorSet& priors;
    const ChargedSet& charged;
    const UtilityFamily& fam;
    int n;
    const Claim& claim;
    const RobustOpts& opt;
    Vec floor_pi;       // superhedging node values of the claim
    Strategy hedge;     // a strategy attaining them
};

// ---------- 1-d unimodal minimization (bracketed golden section) ----------

double minimize_1d(const std::function<double(double)>& f, double lo, double hi, double radius,
                   int iters, double& xmin) {
    double a = std::max(lo, -radius), b = std::min(hi, radius);
    if (a > b) { a = lo; b = hi; }
    if (!(std::isfinite(a) && std::isfinite(b))) {
        const double c = std::isfinite(a) ? a : (std::isfinite(b) ? b : 0.0);
        a = std::isfinite(a) ? a : c - radius;
        b = std::isfinite(b) ? b : c + radius;
    }
    if (b - a < 1e-15) {
        xmin = a;
        return f(a);
    }

    // Expand until the best sample is interior or pinned at a hard bound.
    const int probes = 9;
    for (int round = 0; round < 60; ++round) {
        int best = 0;
        double fbest = kInf;
        for (int i = 0; i < probes; ++i) {
            const double x = a + (b - a) * double(i) / double(probes - 1);
            const double v = f(x);
            if (v < fbest) { fbest = v; best = i; }
        }
        const double w = b - a;
        if (best == 0 && a > lo + 1e-14) {
            a = std::max(lo, a - 2.0 * w);
        } else if (best == probes - 1 && b < hi - 1e-14) {
            b = std::min(hi, b + 2.0 * w);
        } else {
            // bracket around the best probe
            const double cell = w / double(probes - 1);
            const double na = std::max(a, a + cell * (best - 1));
            const double nb = std::min(b, a + cell * (best + 1));
            a = na;
            b = nb;
            break;
        }
    }

    const double gr = 0.6180339887498949;
    double x1 = b - gr * (b - a), x2 = a + gr * (b - a);
    double f1 = f(x1), f2 = f(x2);
    for (int it = 0; it < iters; ++it) {
        if (f1 < f2) {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - gr * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + gr * (b - a);
            f2 = f(x2);
        }
    }
    xmin = f1 < f2 ? x1 : x2;
    return std::min(f1, f2);
}

// ---------- shrinking-grid maximizer for a few dimensions ----------

struct ZoomResult {
    Vec x;
    double value = -kInf;
};

ZoomResult zoom_maximize(const std::function<double(const Vec&)>& f, Vec lo, Vec hi,
                         const Vec& seed, int pts, int rounds) {
    const int d = int(lo.size());
    ZoomResult best;
    best.x = seed;
    best.value = f(seed);

    Vec a = lo, b = hi;
    std::vector<int> idx(d, 0);
    Vec x(d, 0.0);
    for (int round = 0; round < rounds; ++round) {
        std::fill(idx.begin(), idx.end(), 0);
        Vec round_x = best.x;
        double round_v = -kInf;
        while (true) {
            for (int i = 0; i < d; ++i)
                x[i] = a[i] + (b[i] - a[i]) * double(idx[i]) / double(pts - 1);
            const double v = f(x);
            if (v > round_v) {
                round_v = v;
                round_x = x;
            }
            int k = 0;
            while (k < d) {
                if (++idx[k] < pts) break;
                idx[k] = 0;
                ++k;
            }
            if (k == d) break;
        }
        if (round_v > best.value) {
            best.value = round_v;
            best.x = round_x;
        }
        // shrink around the incumbent, staying inside the original box
        for (int i = 0; i < d; ++i) {
            const double cell = (b[i] - a[i]) / double(pts - 1);
            const double half = 1.5 * cell;
            a[i] = std::max(lo[i], best.x[i] - half);
            b[i] = std::min(hi[i], best.x[i] + half);
        }
    }
    return best;
}

// ---------- exact solver for exponential families ----------

// Works with L = ln(-u) throughout; minimizing L maximizes the value and
// stays finite for arbitrarily large risk-aversion coefficients.
//
// When every leaf shares the same exponential slope -gamma, the
// continuation value is affine in wealth wherever the floor does not
// bind: L(node, v) = cert[node] - gamma v with a wealth-free certificate
// computed bottom-up once. Evaluation then reduces to a feasibility walk
// of the certificate's optimal holdings, falling back to the constrained
// line search only where the floor interferes.
struct ExpNested {
    const Ctx& c;
    Vec slope, icept;  // per leaf: ln(-U(y)) = icept + slope * y
    Strategy* record = nullptr;
    bool uniform = false;  // one slope across leaves
    double gamma = 0.0;
    Vec cert;      // per node: L(node, v) + gamma v  when unconstrained
    Vec cert_h;    // per node: the certificate's optimal holding

    explicit ExpNested(const Ctx& ctx) : c(ctx) {
        slope.assign(c.tree.node_count(), 0.0);
        icept.assign(c.tree.node_count(), 0.0);
        for (int leaf : c.tree.leaves()) c.fam.exp_affine_leaf(c.n, leaf, slope[leaf], icept[leaf]);
        uniform = true;
        gamma = -slope[c.tree.leaves().front()];
        for (int leaf : c.tree.leaves())
            if (slope[leaf] != -gamma) uniform = false;
        if (uniform) build_certificates();
    }

    void build_certificates() {
        cert.assign(c.tree.node_count(), 0.0);
        cert_h.assign(c.tree.node_count(), 0.0);
        std::vector<double> scratch;
        for (int leaf : c.tree.leaves()) cert[leaf] = icept[leaf] + gamma * c.claim.value[leaf];
        for (int t = c.tree.horizon() - 1; t >= 0; --t) {
            for (int id : c.tree.level(t)) {
                const Node& nd = c.tree.node(id);
                if (nd.children.empty() || !c.charged.is_charged(id)) continue;
                auto F = [&](double h) {
                    double worst = -kInf;
                    for (const Vec& e : c.priors.extremes(id)) {
                        double mx = -kInf;
                        scratch.clear();
                        for (size_t j = 0; j < nd.children.size(); ++j) {
                            if (e[j] <= 0.0) continue;
                            const int ch = nd.children[j];
                            const double t0 = std::log(e[j]) + cert[ch] -
                                              gamma * h * c.tree.increment(ch)[0];
                            scratch.push_back(t0);
                            mx = std::max(mx, t0);
                        }
                        double s = 0.0;
                        for (double t0 : scratch) s += std::exp(t0 - mx);
                        worst = std::max(worst, mx + std::log(s));
                    }
                    return worst;
                };
                bool flat = true;
                for (int ch : nd.children)
                    if (c.charged.edge[ch] && std::abs(c.tree.increment(ch)[0]) > 1e-14)
                        flat = false;
                if (flat) {
                    cert[id] = F(0.0);
                    cert_h[id] = 0.0;
                } else {
                    double hstar = 0.0;
                    cert[id] = minimize_1d(F, -kInf, kInf, 8.0 * (1.0 + std::abs(cert[id])),
                                           c.opt.golden_iters, hstar);
                    cert_h[id] = hstar;
                }
            }
        }
    }

    // can the certificate's optimal subtree be followed from (id, v)
    // without touching the floor? Boundary bands are routed to the
    // constrained path so the tolerance clamp stays in one place.
    bool cert_feasible(int id, double v) const {
        if (c.tree.is_leaf(id)) return v >= c.claim.value[id];
        const Node& nd = c.tree.node(id);
        const double h = cert_h[id];
        for (int ch : nd.children) {
            if (!c.charged.edge[ch]) continue;
            const double w = v + h * c.tree.increment(ch)[0];
            if (w < c.floor_pi[ch]) return false;
            if (!c.tree.is_leaf(ch) && !cert_feasible(ch, w)) return false;
        }
        return true;
    }

    void record_cert(int id, double v) const {
        const Node& nd = c.tree.node(id);
        if (nd.children.empty()) return;
        record->holding[id][0] = cert_h[id];
        for (int ch : nd.children)
            if (c.charged.is_charged(ch) && !c.tree.is_leaf(ch))
                record_cert(ch, v + cert_h[id] * c.tree.increment(ch)[0]);
    }

    double leaf_log(int leaf, double v) const {
        double y = v - c.claim.value[leaf];
        if (y < -c.opt.floor_tol) return kInf;
        y = std::max(y, 0.0);
        return icept[leaf] + slope[leaf] * y;
    }

    // ln(-u) continuing optimally from (node, wealth v); +inf if the
    // floor cannot be met. With rec set, the optimal holdings along the
    // realized wealth path are written into *record.
    double lam(int id, double v, bool rec = false) const {
        if (c.tree.is_leaf(id)) return leaf_log(id, v);
        if (uniform && cert_feasible(id, v)) {
            if (rec && record) record_cert(id, v);
            return cert[id] - gamma * v;
        }
        const Node& nd = c.tree.node(id);

        double lo = -kInf, hi = kInf;
        bool flat = true;
        for (int ch : nd.children) {
            if (!c.charged.edge[ch]) continue;
            const double ds = c.tree.increment(ch)[0];
            const double pj = c.floor_pi[ch];
            if (ds > 1e-14) {
                lo = std::max(lo, (pj - v) / ds);
                flat = false;
            } else if (ds < -1e-14) {
                hi = std::min(hi, (pj - v) / ds);
                flat = false;
            } else if (v < pj - c.opt.floor_tol) {
                return kInf;
            }
        }
        if (lo > hi + 1e-12 * (1.0 + std::abs(v))) return kInf;

        auto F = [&](double h) { return objective(nd, v, h); };
        double hstar = 0.0;
        double val;
        if (flat) {
            val = F(0.0);
        } else {
            const double radius = 8.0 * (1.0 + std::abs(v));
            val = minimize_1d(F, lo, hi, radius, c.opt.golden_iters, hstar);
        }
        if (rec && record) {
            record->holding[id][0] = hstar;
            for (int ch : nd.children)
                if (c.charged.is_charged(ch) && !c.tree.is_leaf(ch))
                    lam(ch, v + hstar * c.tree.increment(ch)[0], true);
        }
        return val;
    }

    double objective(const Node& nd, double v, double h) const {
        double worst = -kInf;
        std::vector<double> terms;
        for (const Vec& e : c.priors.extremes(nd.id)) {
            double mx = -kInf;
            terms.clear();
            for (size_t j = 0; j < nd.children.size(); ++j) {
                if (e[j] <= 0.0) continue;
                const int ch = nd.children[j];
                const double w = v + h * c.tree.increment(ch)[0];
                const double l = c.tree.is_leaf(ch) ? leaf_log(ch, w) : lam(ch, w);
                const double t = std::log(e[j]) + l;
                terms.push_back(t);
                mx = std::max(mx, t);
            }
            double lse;
            if (mx == kInf) {
                lse = kInf;
            } else {
                double s = 0.0;
                for (double t : terms) s += std::exp(t - mx);
                lse = mx + std::log(s);
            }
            worst = std::max(worst, lse);
        }
        return worst;
    }
};

RobustValue solve_exp_nested(ExpNested& solver, double x) {
    RobustValue rv;
    rv.solver = RobustSolver::CaraExact;
    rv.strategy = Strategy::zeros(solver.c.tree);
    rv.log_neg = solver.lam(0, x);
    rv.has_log = true;
    if (rv.log_neg == kInf) {
        rv.inadmissible = true;
        rv.value = -kInf;
        return rv;
    }
    solver.record = &rv.strategy;
    solver.lam(0, x, true);  // extraction pass
    solver.record = nullptr;
    rv.value = -std::exp(rv.log_neg);
    return rv;
}

// One period, any dimension: L(h) is a finite max of log-sum-exp
// functions of affine arguments, minimized by Kelley cuts over a master
// LP that also carries the floor constraints.
RobustValue solve_exp_kelley(const Ctx& c, double x) {
    const int d = c.tree.dim();
    const Node& root = c.tree.node(0);
    std::vector<int> leaves;
    for (int ch : root.children)
        if (c.charged.edge[ch]) leaves.push_back(ch);

    Vec slope(c.tree.node_count()), icept(c.tree.node_count());
    for (int leaf : leaves) c.fam.exp_affine_leaf(c.n, leaf, slope[leaf], icept[leaf]);

    auto lam_and_grad = [&](const Vec& h, Vec* grad) {
        double worst = -kInf;
        const Vec* worst_e = nullptr;
        Vec terms(root.children.size(), -kInf);
        for (const Vec& e : c.priors.extremes(0)) {
            double mx = -kInf;
            for (size_t j = 0; j < root.children.size(); ++j) {
                if (e[j] <= 0.0) continue;
                const int ch = root.children[j];
                double y = x + dot(h, c.tree.increment(ch)) - c.claim.value[ch];
                y = std::max(y, 0.0);
                terms[j] = std::log(e[j]) + icept[ch] + slope[ch] * y;
                mx = std::max(mx, terms[j]);
            }
            double s = 0.0;
            for (size_t j = 0; j < root.children.size(); ++j)
                if (e[j] > 0.0) s += std::exp(terms[j] - mx);
            const double lse = mx + std::log(s);
            if (lse > worst) {
                worst = lse;
                worst_e = &e;
            }
        }
        if (grad) {
            grad->assign(d, 0.0);
            double mx = -kInf;
            for (size_t j = 0; j < root.children.size(); ++j) {
                if ((*worst_e)[j] <= 0.0) continue;
                const int ch = root.children[j];
                double y = x + dot(h, c.tree.increment(ch)) - c.claim.value[ch];
                y = std::max(y, 0.0);
                terms[j] = std::log((*worst_e)[j]) + icept[ch] + slope[ch] * y;
                mx = std::max(mx, terms[j]);
            }
            double s = 0.0;
            for (size_t j = 0; j < root.children.size(); ++j)
                if ((*worst_e)[j] > 0.0) s += std::exp(terms[j] - mx);
            for (size_t j = 0; j < root.children.size(); ++j) {
                if ((*worst_e)[j] <= 0.0) continue;
                const int ch = root.children[j];
                const double w = std::exp(terms[j] - mx) / s;
                axpy(w * slope[ch], c.tree.increment(ch), *grad);
            }
        }
        return worst;
    };

    Vec h0 = c.hedge.holding[0];
    double R = 4.0;
    for (double v : h0) R = std::max(R, 2.0 * std::abs(v));

    RobustValue rv;
    rv.solver = RobustSolver::CaraExact;
    rv.strategy = Strategy::zeros(c.tree);

    Mat cut_g;
    Vec cut_rhs;
    Vec best_h = h0;
    double best = kInf;
    {
        Vec g;
        best = lam_and_grad(h0, &g);
        cut_g.push_back(g);
        cut_rhs.push_back(best - dot(g, h0));
    }
    for (int it = 0; it < c.opt.kelley_max_iter; ++it) {
        LinearProgram lp = LinearProgram::make(d + 1);
        lp.c[d] = 1.0;
        for (int i = 0; i < d; ++i) {
            lp.lb[i] = -R;
            lp.ub[i] = R;
        }
        for (size_t k = 0; k < cut_g.size(); ++k) {
            Vec row(d + 1, 0.0);
            for (int i = 0; i < d; ++i) row[i] = -cut_g[k][i];
            row[d] = 1.0;
            lp.add_row(row, '>', cut_rhs[k]);
        }
        for (int leaf : leaves) {
            Vec row(d + 1, 0.0);
            const Vec ds = c.tree.increment(leaf);
            for (int i = 0; i < d; ++i) row[i] = ds[i];
            lp.add_row(row, '>', c.claim.value[leaf] - x);
        }
        const LpSolution sol = solve_lp(lp);
        if (sol.status == LpStatus::Infeasible) {
            rv.inadmissible = true;
            rv.value = -kInf;
            return rv;
        }
        if (!sol.optimal()) throw SolverError("cutting-plane master LP failed");
        Vec h(sol.x.begin(), sol.x.begin() + d);
        const double tau = sol.x[d];
        Vec g;
        const double val = lam_and_grad(h, &g);
        if (val < best) {
            best = val;
            best_h = h;
        }
        rv.iterations = it + 1;
        rv.inner_gap = best - tau;
        bool on_box = false;
        for (int i = 0; i < d; ++i)
            if (std::abs(std::abs(h[i]) - R) < 1e-9) on_box = true;
        if (rv.inner_gap <= c.opt.kelley_gap * (1.0 + std::abs(best)) && !on_box) break;
        if (on_box && R < 1e9) R *= 2.0;
        cut_g.push_back(g);
        cut_rhs.push_back(val - dot(g, h));
    }
    if (rv.inner_gap > 1e-6 * (1.0 + std::abs(best)))
        throw SolverError("cutting-plane loop did not reach its gap");
    rv.log_neg = best;
    rv.has_log = true;
    rv.value = -std::exp(best);
    rv.strategy.holding[0] = best_h;
    return rv;
}

// ---------- general wealth-grid solver ----------

struct GridSolver {
    const Ctx& c;
    Vec hi_bound;            // per node
    std::vector<Vec> grid;   // per node: wealth points
    std::vector<Vec> val;    // per node: values

    explicit GridSolver(const Ctx& ctx) : c(ctx) {
        hi_bound.assign(c.tree.node_count(), 0.0);
    }

    void compute_bounds(double x) {
        // The grid must cover the optimal wealth path; it does not have
        // to bound it tightly but coarse cells cost accuracy, so the
        // cover is the hedge wealth plus an excess-capital multiple of
        // the per-node growth certificate.
        Vec alpha(c.tree.node_count(), c.opt.alpha_floor);
        for (const Node& nd : c.tree.nodes()) {
            if (nd.children.empty() || !c.charged.is_charged(nd.id)) continue;
            double a = compute_alpha(c.tree, c.priors, c.charged, nd.id, AlphaOptions{10, 0});
            if (!(a > 0.0)) a = c.opt.alpha_floor;
            alpha[nd.id] = a;
        }
        Vec m(c.tree.node_count(), 1.0);
        for (const Node& nd : c.tree.nodes()) {
            if (!c.charged.is_charged(nd.id)) continue;
            for (int ch : nd.children) {
                if (!c.charged.edge[ch]) continue;
                const double f = 1.0 + norm2(c.tree.increment(ch)) / std::min(alpha[nd.id], 1e6);
                m[ch] = m[nd.id] * f;
            }
        }
        const Vec hedge_w = wealth_process(c.tree, c.hedge, c.floor_pi[0]);
        const double excess = std::max(0.0, x - c.floor_pi[0]) + 1.0;
        for (int i = 0; i < c.tree.node_count(); ++i)
            hi_bound[i] = std::max(hedge_w[i], c.floor_pi[i]) + excess * m[i] + 2.0;
    }

    double child_value(int ch, double w) const {
        if (c.tree.is_leaf(ch)) {
            double y = w - c.claim.value[ch];
            if (y < -c.opt.floor_tol) return -kInf;
            return c.fam.value(c.n, ch, std::max(y, 0.0));
        }
        const Vec& g = grid[ch];
        const Vec& v = val[ch];
        if (w < g.front() - c.opt.floor_tol) return -kInf;
        if (w <= g.front()) return v.front();
        if (w >= g.back()) {
            const size_t k = g.size();
            const double slope_end = (v[k - 1] - v[k - 2]) / (g[k - 1] - g[k - 2]);
            return v[k - 1] + std::max(slope_end, 0.0) * (w - g[k - 1]);
        }
        const int i =
            int(std::upper_bound(g.begin(), g.end(), w) - g.begin()) - 1;
        const double t = (w - g[i]) / (g[i + 1] - g[i]);
        return (1.0 - t) * v[i] + t * val[ch][i + 1];
    }

    double node_objective(const Node& nd, double w, const Vec& h) const {
        double worst = kInf;
        for (const Vec& e : c.priors.extremes(nd.id)) {
            double s = 0.0;
            for (size_t j = 0; j < nd.children.size(); ++j) {
                if (e[j] <= 0.0) continue;
                const int ch = nd.children[j];
                const double cv = child_value(ch, w + dot(h, c.tree.increment(ch)));
                if (cv == -kInf) return -kInf;
                s += e[j] * cv;
            }
            worst = std::min(worst, s);
        }
        return worst;
    }

    double maximize_at(const Node& nd, double w, Vec* argmax) const {
        const int d = c.tree.dim();
        if (d == 1) {
            double lo = -kInf, hi = kInf;
            for (int ch : nd.children) {
                if (!c.charged.edge[ch]) continue;
                const double ds = c.tree.increment(ch)[0];
                const double pj = c.floor_pi[ch];
                if (ds > 1e-14)
                    lo = std::max(lo, (pj - w) / ds);
                else if (ds < -1e-14)
                    hi = std::min(hi, (pj - w) / ds);
                else if (w < pj - c.opt.floor_tol)
                    return -kInf;
            }
            if (lo > hi + 1e-12 * (1.0 + std::abs(w))) return -kInf;
            Vec h(1, 0.0);
            auto F = [&](double hh) {
                h[0] = hh;
                const double v = node_objective(nd, w, h);
                return v == -kInf ? kInf : -v;
            };
            double hstar = 0.0;
            const double neg = minimize_1d(F, lo, hi, 8.0 * (1.0 + std::abs(w)),
                                           c.opt.golden_iters, hstar);
            if (argmax) (*argmax)[0] = hstar;
            return neg == kInf ? -kInf : -neg;
        }
        const double R = c.opt.oracle_radius * (1.0 + std::abs(w));
        Vec lo(d, -R), hi(d, R);
        Vec seed = c.hedge.holding[nd.id];
        auto F = [&](const Vec& h) { return node_objective(nd, w, h); };
        const ZoomResult z = zoom_maximize(F, lo, hi, seed, c.opt.zoom_points, c.opt.zoom_rounds);
        if (argmax) *argmax = z.x;
        return z.value;
    }

    double solve_once(double x, int points, Strategy* strat) {
        grid.assign(c.tree.node_count(), {});
        val.assign(c.tree.node_count(), {});
        for (int t = c.tree.horizon() - 1; t >= 1; --t) {
            for (int id : c.tree.level(t)) {
                const Node& nd = c.tree.node(id);
                if (nd.children.empty() || !c.charged.is_charged(id)) continue;
                const double lo = c.floor_pi[id];
                const double hi = std::max(hi_bound[id], lo + 1.0);
                grid[id] = linspace(lo, hi, points);
                val[id].resize(points);
                for (int i = 0; i < points; ++i)
                    val[id][i] = maximize_at(nd, grid[id][i], nullptr);
            }
        }
        Vec h(c.tree.dim(), 0.0);
        const double root = maximize_at(c.tree.node(0), x, &h);
        if (strat) {
            *strat = Strategy::zeros(c.tree);
            extract(0, x, *strat);
        }
        return root;
    }

    void extract(int id, double w, Strategy& s) const {
        const Node& nd = c.tree.node(id);
        if (nd.children.empty()) return;
        Vec h(c.tree.dim(), 0.0);
        maximize_at(nd, w, &h);
        s.holding[id] = h;
        for (int ch : nd.children)
            if (c.charged.is_charged(ch) && !c.tree.is_leaf(ch))
                extract(ch, w + dot(h, c.tree.increment(ch)), s);
    }
};

RobustValue solve_grid(const Ctx& c, double x) {
    GridSolver gs(c);
    gs.compute_bounds(x);
    RobustValue rv;
    rv.solver = RobustSolver::WealthGrid;
    int points = c.opt.grid_points;
    double v = gs.solve_once(x, points, nullptr);
    rv.iterations = 1;
    if (v == -kInf) {
        rv.inadmissible = true;
        rv.value = -kInf;
        return rv;
    }
    for (int ref = 1; ref <= c.opt.max_refinements; ++ref) {
        points *= 2;
        const double v2 = gs.solve_once(x, points, nullptr);
        rv.iterations = ref + 1;
        const bool settled = std::abs(v2 - v) <= c.opt.refine_tol * (1.0 + std::abs(v2));
        v = v2;
        if (settled) break;
        if (ref == c.opt.max_refinements)
            throw SolverError("grid-underresolved: wealth grid did not settle");
    }
    rv.value = gs.solve_once(x, points, &rv.strategy);
    return rv;
}

// ---------- brute-force oracle ----------

RobustValue solve_oracle(const Ctx& c, double x) {
    std::vector<std::pair<int, int>> comps;
    for (const Node& nd : c.tree.nodes())
        if (!nd.children.empty() && c.charged.is_charged(nd.id))
            for (int i = 0; i < c.tree.dim(); ++i) comps.push_back({nd.id, i});
    const int nv = int(comps.size());
    if (nv > c.opt.max_oracle_dims)
        throw ScopeError("brute-force oracle limited to " + std::to_string(c.opt.max_oracle_dims) +
                         " strategy components");

    Strategy s = Strategy::zeros(c.tree);
    Vec util(c.tree.node_count(), 0.0);
    auto place = [&](const Vec& flat) {
        for (int k = 0; k < nv; ++k) s.holding[comps[k].first][comps[k].second] = flat[k];
    };
    auto f = [&](const Vec& flat) {
        place(flat);
        const Vec wealth = wealth_process(c.tree, s, x);
        for (int leaf : c.tree.leaves()) {
            if (!c.charged.is_charged(leaf)) { util[leaf] = 0.0; continue; }
            double y = wealth[leaf] - c.claim.value[leaf];
            if (y < -c.opt.floor_tol) return -kInf;
            util[leaf] = c.fam.value(c.n, leaf, std::max(y, 0.0));
        }
        return robust_inf_expectation(c.tree, c.priors, c.charged, util);
    };
    // supergradient of the concave objective at a feasible point: the
    // gradient of the smooth piece picked by a worst-case pasting
    auto grad = [&](const Vec& flat, Vec& g) {
        place(flat);
        const Vec wealth = wealth_process(c.tree, s, x);
        for (int leaf : c.tree.leaves()) {
            if (!c.charged.is_charged(leaf)) { util[leaf] = 0.0; continue; }
            util[leaf] = c.fam.value(c.n, leaf, std::max(wealth[leaf] - c.claim.value[leaf], 0.0));
        }
        const Vec prob = robust_inf_argmin(c.tree, c.priors, c.charged, util);
        g.assign(nv, 0.0);
        for (int leaf : c.tree.leaves()) {
            if (!c.charged.is_charged(leaf) || prob[leaf] <= 0.0) continue;
            const double y = std::max(wealth[leaf] - c.claim.value[leaf], 1e-12);
            const double du = c.fam.deriv(c.n, leaf, y);
            // dV(leaf)/d component = increment on the path edge below it
            int id = leaf;
            while (id != 0) {
                const int p = c.tree.node(id).parent;
                const Vec ds = c.tree.increment(id);
                for (int k = 0; k < nv; ++k)
                    if (comps[k].first == p) g[k] += prob[leaf] * du * ds[comps[k].second];
                id = p;
            }
        }
    };

    Vec seed(nv, 0.0);
    for (int k = 0; k < nv; ++k) seed[k] = c.hedge.holding[comps[k].first][comps[k].second];
    double R = c.opt.oracle_radius;
    for (double v : seed) R = std::max(R, 2.0 * std::abs(v) + 1.0);
    Vec lo(nv), hi(nv);
    for (int k = 0; k < nv; ++k) {
        lo[k] = seed[k] - R;
        hi[k] = seed[k] + R;
    }
    Vec zero(nv, 0.0);
    ZoomResult z = zoom_maximize(f, lo, hi, seed, c.opt.zoom_points, c.opt.zoom_rounds);
    const double at_zero = f(zero);
    if (at_zero > z.value) {
        z.value = at_zero;
        z.x = zero;
    }

    RobustValue rv;
    rv.solver = RobustSolver::BruteOracle;
    rv.strategy = Strategy::zeros(c.tree);
    if (z.value == -kInf) {
        rv.inadmissible = true;
        rv.value = -kInf;
        return rv;
    }

    // The shrinking grid can stall on a flat ridge of the concave
    // objective; a few exact cutting planes finish the job. Every cut is
    // an evaluation of the same exact objective, so the polished point
    // remains an honest strategy-space certificate.
    {
        Mat cut_g;
        Vec cut_rhs;
        Vec h = z.x;
        for (int it = 0; it < 120; ++it) {
            const double val = f(h);
            if (val > z.value) {
                z.value = val;
                z.x = h;
            }
            if (val > -kInf) {
                Vec g;
                grad(h, g);
                cut_g.push_back(g);
                cut_rhs.push_back(val - dot(g, h));
            }
            LinearProgram lp = LinearProgram::make(nv + 1);
            lp.c[nv] = -1.0;  // maximize tau
            for (int k = 0; k < nv; ++k) {
                lp.lb[k] = lo[k];
                lp.ub[k] = hi[k];
            }
            for (size_t kk = 0; kk < cut_g.size(); ++kk) {
                Vec row(nv + 1, 0.0);
                for (int k = 0; k < nv; ++k) row[k] = cut_g[kk][k];
                row[nv] = -1.0;
                lp.add_row(row, '>', -cut_rhs[kk]);
            }
            // quasi-sure floors are linear in the strategy; kept strict
            // so LP iterates stay inside the evaluator's tolerance
            for (int leaf : c.tree.leaves()) {
                if (!c.charged.is_charged(leaf)) continue;
                Vec row(nv + 1, 0.0);
                int id = leaf;
                while (id != 0) {
                    const int p = c.tree.node(id).parent;
                    const Vec ds = c.tree.increment(id);
                    for (int k = 0; k < nv; ++k)
                        if (comps[k].first == p) row[k] += ds[comps[k].second];
                    id = p;
                }
                lp.add_row(row, '>', c.claim.value[leaf] - x);
            }
            const LpSolution sol = solve_lp(lp);
            if (!sol.optimal()) break;
            const double tau = sol.x[nv];
            if (tau - z.value <= 1e-11 * (1.0 + std::abs(z.value))) break;
            h.assign(sol.x.begin(), sol.x.begin() + nv);
        }
    }

    rv.value = z.value;
    for (int k = 0; k < nv; ++k) rv.strategy.holding[comps[k].first][comps[k].second] = z.x[k];
    return rv;
}

Ctx make_ctx(const ScenarioTree& tree, const PriorSet& priors, const ChargedSet& charged,
             const UtilityFamily& fam, int n, const Claim& claim, const RobustOpts& opt) {
    Ctx c{tree, priors, charged, fam, n, claim, opt, {}, Strategy::zeros(tree)};
    SuperhedgeResult sh = superreplication_price(tree, priors, claim);
    c.floor_pi = std::move(sh.node_values);
    c.hedge = std::move(sh.strategy);
    return c;
}

// One claim, many wealth levels: the floors, the hedge and the
// exponential certificates persist across the bisection.
struct PreparedClaim {
    Ctx ctx;
    std::unique_ptr<ExpNested> exp;

    PreparedClaim(const ScenarioTree& tree, const PriorSet& priors, const ChargedSet& charged,
                  const UtilityFamily& fam, int n, const Claim& claim, const RobustOpts& opt)
        : ctx(make_ctx(tree, priors, charged, fam, n, claim, opt)) {}
    PreparedClaim(const PreparedClaim&) = delete;
    PreparedClaim& operator=(const PreparedClaim&) = delete;
};

RobustValue solve_prepared(PreparedClaim& pc, double x, RobustSolver solver) {
    Ctx& c = pc.ctx;
    if (x < c.floor_pi[0] - c.opt.floor_tol) {
        RobustValue rv;
        rv.solver = solver;
        rv.inadmissible = true;
        rv.value = -kInf;
        rv.strategy = Strategy::zeros(c.tree);
        return rv;
    }
    switch (solver) {
        case RobustSolver::CaraExact:
            if (!c.fam.exp_affine())
                throw PreconditionError("the exact solver needs an exponential family");
            if (c.tree.dim() == 1) {
                if (!pc.exp) pc.exp = std::make_unique<ExpNested>(c);
                return solve_exp_nested(*pc.exp, x);
            }
            if (c.tree.horizon() == 1) return solve_exp_kelley(c, x);
            throw PreconditionError(
                "the exact exponential solver covers d = 1 at any horizon and one-period trees "
                "in any dimension; use the wealth grid or the oracle otherwise");
        case RobustSolver::WealthGrid:
            if (c.tree.horizon() == 1) {
                // no intermediate nodes: a single concave maximization
                GridSolver gs(c);
                gs.hi_bound.assign(c.tree.node_count(), 0.0);
                RobustValue rv;
                rv.solver = RobustSolver::WealthGrid;
                rv.strategy = Strategy::zeros(c.tree);
                Vec h(c.tree.dim(), 0.0);
                const double v = gs.maximize_at(c.tree.node(0), x, &h);
                if (v == -kInf) {
                    rv.inadmissible = true;
                    rv.value = -kInf;
                    return rv;
                }
                rv.value = v;
                rv.strategy.holding[0] = h;
                return rv;
            }
            return solve_grid(c, x);
        case RobustSolver::BruteOracle: return solve_oracle(c, x);
    }
    throw Error("unreachable");
}

}  // namespace

bool robust_value_less(const RobustValue& a, const RobustValue& b) {
    if (a.has_log && b.has_log) return a.log_neg > b.log_neg;
    return a.value < b.value;
}

RobustValue robust_utility(const ScenarioTree& tree, const PriorSet& priors,
                           const ChargedSet& charged, const UtilityFamily& fam, int n,
                           const Claim& claim, double x, RobustSolver solver,
                           const RobustOpts& opt) {
    PreparedClaim pc(tree, priors, charged, fam, n, claim, opt);
    return solve_prepared(pc, x, solver);
}

IndifferenceResult indifference_price(const ScenarioTree& tree, const PriorSet& priors,
                                      const ChargedSet& charged, const UtilityFamily& fam, int n,
                                      const Claim& claim, double x, RobustSolver solver,
                                      const RobustOpts& opt) {
    IndifferenceResult res;
    Claim zero;
    zero.value.assign(tree.node_count(), 0.0);
    PreparedClaim pz(tree, priors, charged, fam, n, zero, opt);
    res.u0 = solve_prepared(pz, x, solver);
    if (res.u0.inadmissible || (!res.u0.has_log && res.u0.value == -kInf))
        throw PreconditionError("u(0, x) is -infinity; indifference price undefined");

    PreparedClaim pg(tree, priors, charged, fam, n, claim, opt);
    res.pi = pg.ctx.floor_pi[0];

    auto accepts = [&](double z) {
        const RobustValue uz = solve_prepared(pg, x + z, solver);
        if (uz.inadmissible) return false;
        return !robust_value_less(uz, res.u0);
    };

    double lo = res.pi - x - opt.bracket_pad;
    double hi = res.pi + opt.bracket_pad;
    int expand = 0;
    while (!accepts(hi)) {
        hi = res.pi + opt.bracket_pad * std::ldexp(1.0, ++expand);
        if (expand > 40) {
            res.no_finite_price = true;
            res.price = kInf;
            return res;
        }
    }
    res.bracket_lo = lo;
    res.bracket_hi = hi;
    int it = 0;
    while (hi - lo > opt.bisect_tol && it < 200) {
        const double mid = 0.5 * (lo + hi);
        (accepts(mid) ? hi : lo) = mid;
        ++it;
    }
    res.iterations = it;
    res.price = 0.5 * (lo + hi);
    return res;
}

BuyerResult buyer_price(const ScenarioTree& tree, const PriorSet& priors,
                        const ChargedSet& charged, const UtilityFamily& fam, int n,
                        const Claim& claim, double x, RobustSolver solver, const RobustOpts& opt) {
    Claim neg;
    neg.value.resize(claim.value.size());
    for (size_t i = 0; i < claim.value.size(); ++i) neg.value[i] = -claim.value[i];
    const IndifferenceResult r =
        indifference_price(tree, priors, charged, fam, n, neg, x, solver, opt);
    BuyerResult out;
    out.no_finite_price = r.no_finite_price;
    out.price = r.no_finite_price ? -kInf : 0.0 - r.price;
    out.pi_sub = subreplication_price(tree, priors, claim).price;
    out.upper_bound_ok = r.no_finite_price || out.price <= out.pi_sub + x + 1e-7;
    return out;
}

RiskHarnessReport risk_measure_harness(const ScenarioTree& tree, const PriorSet& priors,
                                       const ChargedSet& charged, const UtilityFamily& fam, int n,
                                       double x, const std::vector<Claim>& claims,
                                       RobustSolver solver, double tol, const RobustOpts& opt) {
    RiskHarnessReport rep;
    rep.tol = tol;

    auto negate = [&](const Claim& g) {
        Claim out;
        out.value.resize(g.value.size());
        for (size_t i = 0; i < g.value.size(); ++i) out.value[i] = -g.value[i];
        return out;
    };
    auto shift = [&](const Claim& g, double m) {
        Claim out = g;
        for (int leaf : tree.leaves()) out.value[leaf] += m;
        return out;
    };
    auto mix = [&](const Claim& g, const Claim& h, double lam) {
        Claim out = g;
        for (int leaf : tree.leaves())
            out.value[leaf] = lam * g.value[leaf] + (1.0 - lam) * h.value[leaf];
        return out;
    };
    auto rho = [&](const Claim& g) { return superreplication_price(tree, priors, negate(g)).price; };
    auto rho_x = [&](const Claim& g) {
        return indifference_price(tree, priors, charged, fam, n, negate(g), x, solver, opt).price;
    };
    auto push = [&](const std::string& name, double lhs, double rhs) {
        AxiomCheck chk{name, lhs, rhs, lhs <= rhs + tol};
        if (!chk.ok) {
            ++rep.violations;
            rep.all_ok = false;
        }
        rep.checks.push_back(std::move(chk));
    };

    Claim zero;
    zero.value.assign(tree.node_count(), 0.0);
    push("rho(0) == 0 (<=)", rho(zero), 0.0);
    push("rho(0) == 0 (>=)", -rho(zero), 0.0);

    // normalization of rho_x needs u(0, .) strictly increasing at x
    {
        Claim z2 = zero;
        const RobustValue a =
            robust_utility(tree, priors, charged, fam, n, z2, x - 1e-3, solver, opt);
        const RobustValue b = robust_utility(tree, priors, charged, fam, n, z2, x, solver, opt);
        if (robust_value_less(a, b)) {
            const double r0 = rho_x(zero);
            push("rho_x(0) == 0 (<=)", r0, 0.0);
            push("rho_x(0) == 0 (>=)", -r0, 0.0);
        }
    }

    const Vec shifts{-1.0, 0.5, 2.0};
    const Vec lambdas{0.25, 0.5, 0.75};

    std::vector<double> rho_vals, rho_x_vals;
    for (const Claim& g : claims) {
        rho_vals.push_back(rho(g));
        rho_x_vals.push_back(rho_x(g));
    }

    for (size_t i = 0; i < claims.size(); ++i) {
        const Claim& g = claims[i];
        for (double m : shifts) {
            push("rho cash invariance (<=)", rho(shift(g, m)), rho_vals[i] - m);
            push("rho cash invariance (>=)", rho_vals[i] - m, rho(shift(g, m)));
            push("rho_x cash invariance (<=)", rho_x(shift(g, m)), rho_x_vals[i] - m);
            push("rho_x cash invariance (>=)", rho_x_vals[i] - m, rho_x(shift(g, m)));
        }
        push("rho_x(G) + rho_x(-G) >= 0", 0.0, rho_x_vals[i] + rho_x(negate(g)));
    }

    for (size_t i = 0; i + 1 < claims.size(); ++i) {
        const Claim& g = claims[i];
        const Claim& h = claims[i + 1];
        Claim lower = g;
        for (int leaf : tree.leaves())
            lower.value[leaf] = std::min(g.value[leaf], h.value[leaf]);
        push("rho monotone", rho_vals[i], rho(lower));
        push("rho_x monotone", rho_x_vals[i], rho_x(lower));
        for (double lam : lambdas) {
            push("rho convex", rho(mix(g, h, lam)),
                 lam * rho_vals[i] + (1.0 - lam) * rho_vals[i + 1]);
            push("rho_x convex", rho_x(mix(g, h, lam)),
                 lam * rho_x_vals[i] + (1.0 - lam) * rho_x_vals[i + 1]);
        }
    }
    return rep;
}

WealthBoundReport wealth_bound_certificate(const ScenarioTree& tree, const PriorSet& priors,
                                           const ChargedSet& charged, const Vec& alpha_by_node,
                                           const Strategy& s, double x, const UtilityFamily* fam,
                                           double q) {
    if (!(x >= 0.0)) throw PreconditionError("wealth bound certificate needs x >= 0");
    WealthBoundReport rep;
    rep.M.assign(tree.node_count(), 1.0);
    for (const Node& nd : tree.nodes()) {
        if (!charged.is_charged(nd.id)) continue;
        for (int ch : nd.children) {
            if (!charged.edge[ch]) continue;
            const double a = alpha_by_node[nd.id];
            double factor = 1.0;
            if (a == kInf) {
                factor = 1.0;
            } else if (a > 0.0) {
                factor = 1.0 + norm2(tree.increment(ch)) / a;
            } else {
                throw PreconditionError("alpha certificate must be positive at charged node " +
                                        std::to_string(nd.id));
            }
            rep.M[ch] = rep.M[nd.id] * factor;
        }
    }

    const Vec wealth_raw = wealth_process(tree, s, x);
    for (int leaf : tree.leaves())
        if (charged.is_charged(leaf) && wealth_raw[leaf] < -1e-9 * (1.0 + x))
            rep.admissible = false;

    const Strategy proj = project_onto_D(tree, charged, s);
    for (int id = 0; id < tree.node_count(); ++id)
        if (norm2(sub(proj.holding[id], s.holding[id])) > 1e-12) rep.projection_changed = true;
    const Vec wealth = wealth_process(tree, proj, x);
    for (const Node& nd : tree.nodes()) {
        if (!charged.is_charged(nd.id)) continue;
        if (std::abs(wealth[nd.id]) > x * rep.M[nd.id] + 1e-9 * (1.0 + x)) {
            rep.bound_ok = false;
            rep.violating_nodes.push_back(nd.id);
        }
    }

    if (fam) {
        const double p = q / (q - 1.0);
        Vec buf(tree.node_count(), 0.0);
        for (int leaf : tree.leaves()) buf[leaf] = std::pow(rep.M[leaf], p);
        const double mt_p = std::pow(robust_sup_expectation(tree, priors, charged, buf), 1.0 / p);
        double sup_plus = 0.0, sup_dq = 0.0;
        for (int n = fam->n_lo(); n <= fam->n_hi(); ++n) {
            for (int leaf : tree.leaves())
                buf[leaf] = std::max(fam->value(n, leaf, fam->x0()), 0.0);
            sup_plus = std::max(sup_plus, robust_sup_expectation(tree, priors, charged, buf));
            for (int leaf : tree.leaves()) buf[leaf] = std::pow(fam->deriv(n, leaf, fam->x0()), q);
            sup_dq = std::max(
                sup_dq, std::pow(robust_sup_expectation(tree, priors, charged, buf), 1.0 / q));
        }
        rep.K_x = sup_plus + x * mt_p * sup_dq;
        rep.has_Kx = true;
    }
    return rep;
}

}  // namespace multiprior
