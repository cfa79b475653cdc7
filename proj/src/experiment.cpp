#include "multiprior/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>

#include "multiprior/arbitrage.hpp"
#include "multiprior/lp.hpp"

namespace multiprior {

namespace {

std::string fmtg(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return std::string(buf);
}

}  // namespace

Market random_na_market(Rng& rng, const MarketGenOpts& opt) {
    for (int attempt = 0; attempt < opt.max_attempts; ++attempt) {
        const int T = rng.uniform_int(opt.T_min, opt.T_max);
        const int d = opt.d;

        std::vector<int> parents{-1};
        Mat prices;
        prices.push_back(Vec(d, 1.0));
        std::vector<int> frontier{0};
        for (int t = 0; t < T; ++t) {
            std::vector<int> next;
            for (int p : frontier) {
                const int kmin = d >= 2 ? std::max(3, opt.min_children) : opt.min_children;
                const int k = rng.uniform_int(kmin, std::max(kmin, opt.max_children));
                for (int j = 0; j < k; ++j) {
                    Vec price = prices[p];
                    if (d == 1) {
                        double f;
                        if (j == 0)
                            f = rng.uniform(0.15, 0.9);
                        else if (j == 1)
                            f = rng.uniform(-0.45, -0.1);
                        else
                            f = rng.uniform(-0.45, 0.9);
                        price[0] *= 1.0 + f;
                    } else {
                        double minc = kInf;
                        for (double v : prices[p]) minc = std::min(minc, v);
                        const double theta = 2.0 * 3.14159265358979323846 *
                                                 (double(j) + 0.25 * rng.uniform(-1.0, 1.0)) /
                                                 double(k);
                        const double r = rng.uniform(0.1, 0.45) * minc;
                        price[0] += r * std::cos(theta);
                        price[1] += r * std::sin(theta);
                    }
                    parents.push_back(p);
                    prices.push_back(std::move(price));
                    next.push_back(int(parents.size()) - 1);
                }
            }
            frontier = std::move(next);
        }

        ScenarioTree tree = ScenarioTree::from_nodes(d, parents, prices);
        std::map<int, Mat> ext;
        for (const Node& nd : tree.nodes()) {
            if (nd.children.empty()) continue;
            const int m = rng.uniform_int(1, opt.max_extremes);
            Mat vecs;
            for (int e = 0; e < m; ++e) {
                Vec v(nd.children.size(), 0.0);
                double s = 0.0;
                for (double& q : v) {
                    const bool drop = !opt.force_all_charged && rng.uniform() < opt.zero_prob;
                    q = drop ? 0.0 : rng.uniform(0.05, 1.0);
                    s += q;
                }
                if (s <= 0.0) {
                    v[0] = 1.0;
                    s = 1.0;
                }
                for (double& q : v) q /= s;
                vecs.push_back(std::move(v));
            }
            ext[nd.id] = std::move(vecs);
        }
        PriorSet priors = PriorSet::from_extremes(tree, ext);
        if (!check_na(tree, priors).global_na) continue;

        Market m;
        m.tree = std::move(tree);
        m.priors = std::move(priors);
        m.claim.value.assign(m.tree.node_count(), 0.0);
        return m;
    }
    throw SolverError("random market generation kept producing arbitrage");
}

Claim random_claim(Rng& rng, const ScenarioTree& tree, double lo, double hi) {
    Claim g;
    g.value.assign(tree.node_count(), 0.0);
    for (int leaf : tree.leaves()) g.value[leaf] = rng.uniform(lo, hi);
    return g;
}

// ---------- convergence study ----------

ConvergenceReport run_convergence(const Market& m, const UtilityFamily& fam,
                                  const ExperimentConfig& cfg) {
    const ChargedSet charged = charged_set(m.tree, m.priors);

    const NAResult na = check_na(m.tree, m.priors);
    if (!na.global_na) {
        std::string node = "?";
        for (const NodeNAReport& r : na.nodes)
            if (r.charged && !r.na_holds) { node = std::to_string(r.node); break; }
        throw PreconditionError("market admits one-step arbitrage at node " + node);
    }
    if (!claim_nonnegative(m.claim, m.tree, charged))
        throw PreconditionError("convergence study needs a nonnegative claim");
    if (!(claim_abs_sup(m.claim, m.tree, charged) > 0.0))
        throw PreconditionError(
            "claim vanishes on the charged set; prices trivially agree and the sweep is refused");

    ConvergenceReport rep;
    rep.x0 = cfg.x0 > 0.0 ? cfg.x0 : fam.x0();
    if (!(rep.x0 > 0.0)) throw PreconditionError("initial capital x0 must be positive");

    const U1Audit u1 = audit_assumption_u1(fam, m.tree, m.priors, charged);
    const UnAudit un = audit_assumption_un(fam, m.tree, m.priors, charged, {10.0, 1000.0},
                                           {rep.x0 * 0.5});
    // a range-limited sup cannot certify boundedness by itself; growing
    // norms across the range are treated as a failed audit
    rep.u1_pass = u1.finite && u1.tail_stable;
    rep.un_pass = un.all_reached || un.envelope_divergent;
    rep.audits_waived = cfg.waive_audits;
    if (!(rep.u1_pass && rep.un_pass) && !cfg.waive_audits)
        throw PreconditionError("utility assumption audits failed; rerun with audits waived "
                                "to sweep anyway");

    rep.pi = superreplication_price(m.tree, m.priors, m.claim).price;
    rep.pi_sub = subreplication_price(m.tree, m.priors, m.claim).price;
    Claim neg;
    neg.value.resize(m.claim.value.size());
    for (size_t i = 0; i < m.claim.value.size(); ++i) neg.value[i] = -m.claim.value[i];
    rep.rho_limit = superreplication_price(m.tree, m.priors, neg).price;

    for (int n = cfg.n_lo; n <= cfg.n_hi; ++n) {
        ConvergenceRow row;
        row.n = n;
        const double env = fam.risk_aversion_envelope(n);
        row.param = std::isnan(env) ? double(n) : env;
        row.p = indifference_price(m.tree, m.priors, charged, fam, n, m.claim, rep.x0, cfg.solver,
                                   cfg.robust)
                    .price;
        const BuyerResult b =
            buyer_price(m.tree, m.priors, charged, fam, n, m.claim, rep.x0, cfg.solver, cfg.robust);
        row.p_buyer = b.price;
        row.rho = 0.0 - b.price;  // rho_x(G) = p(-G, x) = -p_buyer
        row.gap_p = rep.pi - row.p;
        row.gap_buyer = row.p_buyer - rep.pi_sub;
        row.gap_rho = rep.rho_limit - row.rho;
        rep.rows.push_back(row);
    }
    if (!rep.rows.empty()) {
        const ConvergenceRow& last = rep.rows.back();
        rep.final_gap = std::max({std::abs(last.gap_p), std::abs(last.gap_buyer),
                                  std::abs(last.gap_rho)});
        rep.converged = rep.final_gap < cfg.tol;
    }
    rep.verdict = rep.converged ? "converged" : "not converged";
    return rep;
}

std::string convergence_csv(const ConvergenceReport& rep) {
    std::ostringstream os;
    os << "# multiprior-csv v1 converge\n";
    os << "# pi=" << fmt(rep.pi) << " pi_sub=" << fmt(rep.pi_sub) << " rho=" << fmt(rep.rho_limit)
       << " x0=" << fmt(rep.x0) << "\n";
    os << "n,param,p_n,pB_n,rho_n,gap_p,gap_pB,gap_rho\n";
    for (const ConvergenceRow& r : rep.rows)
        os << r.n << ',' << fmt(r.param) << ',' << fmt(r.p) << ',' << fmt(r.p_buyer) << ','
           << fmt(r.rho) << ',' << fmt(r.gap_p) << ',' << fmt(r.gap_buyer) << ','
           << fmt(r.gap_rho) << "\n";
    return os.str();
}

std::string convergence_svg(const ConvergenceReport& rep) {
    const double W = 640, H = 400, ml = 70, mr = 20, mt = 30, mb = 50;
    const double pw = W - ml - mr, ph = H - mt - mb;
    auto ylog = [](double g) { return std::log10(std::max(std::abs(g), 1e-16)); };

    double ymin = kInf, ymax = -kInf;
    for (const ConvergenceRow& r : rep.rows) {
        for (double g : {r.gap_p, r.gap_buyer, r.gap_rho}) {
            ymin = std::min(ymin, ylog(g));
            ymax = std::max(ymax, ylog(g));
        }
    }
    if (!(ymax > ymin)) { ymin -= 1.0; ymax += 1.0; }
    const int n0 = rep.rows.empty() ? 0 : rep.rows.front().n;
    const int n1 = rep.rows.empty() ? 1 : rep.rows.back().n;

    auto px = [&](double n) { return ml + pw * (n - n0) / std::max(1.0, double(n1 - n0)); };
    auto py = [&](double y) { return mt + ph * (1.0 - (y - ymin) / (ymax - ymin)); };

    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 " << W << " " << H << "\">\n";
    os << "<rect width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
    os << "<text x=\"" << ml << "\" y=\"18\" font-size=\"13\">price gaps vs index (log10)</text>\n";
    os << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << mt + ph
       << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << ml << "\" y1=\"" << mt + ph << "\" x2=\"" << ml + pw << "\" y2=\""
       << mt + ph << "\" stroke=\"black\"/>\n";
    os << "<text x=\"8\" y=\"" << mt + 10 << "\" font-size=\"11\">" << fmtg(ymax) << "</text>\n";
    os << "<text x=\"8\" y=\"" << mt + ph << "\" font-size=\"11\">" << fmtg(ymin) << "</text>\n";
    os << "<text x=\"" << ml << "\" y=\"" << H - 15 << "\" font-size=\"11\">n=" << n0
       << "</text>\n";
    os << "<text x=\"" << ml + pw - 40 << "\" y=\"" << H - 15 << "\" font-size=\"11\">n=" << n1
       << "</text>\n";

    const char* color[3] = {"#1f6fb2", "#b23a1f", "#3a8f3a"};
    const char* dash[3] = {"", " stroke-dasharray=\"6 3\"", " stroke-dasharray=\"2 3\""};
    const char* label[3] = {"seller gap", "buyer gap", "risk gap"};
    for (int s = 0; s < 3; ++s) {
        os << "<polyline fill=\"none\" stroke=\"" << color[s] << "\"" << dash[s] << " points=\"";
        for (const ConvergenceRow& r : rep.rows) {
            const double g = s == 0 ? r.gap_p : (s == 1 ? r.gap_buyer : r.gap_rho);
            os << fmtg(px(r.n)) << ',' << fmtg(py(ylog(g))) << ' ';
        }
        os << "\"/>\n";
        os << "<text x=\"" << ml + pw - 90 << "\" y=\"" << mt + 16 + 14 * s
           << "\" font-size=\"11\" fill=\"" << color[s] << "\">" << label[s] << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

// ---------- property suite ----------

bool duality_gap_ok(double primal, double dual, double tol) {
    return std::abs(primal - dual) <= tol * (1.0 + std::abs(primal));
}

namespace {

// Independent one-shot formulation of the superhedging price: minimize
// the initial capital over (x, all holdings) subject to domination at
// every charged leaf. Used to cross-check the backward induction.
double whole_tree_lp(const Market& m) {
    const ChargedSet charged = charged_set(m.tree, m.priors);
    const int d = m.tree.dim();
    std::vector<int> var_base(m.tree.node_count(), -1);
    int nv = 1;
    for (const Node& nd : m.tree.nodes())
        if (!nd.children.empty() && charged.is_charged(nd.id)) {
            var_base[nd.id] = nv;
            nv += d;
        }
    LinearProgram lp = LinearProgram::make(nv);
    lp.c[0] = 1.0;
    for (int leaf : m.tree.leaves()) {
        if (!charged.is_charged(leaf)) continue;
        Vec row(nv, 0.0);
        row[0] = 1.0;
        int id = leaf;
        while (id != 0) {
            const int p = m.tree.node(id).parent;
            const Vec ds = m.tree.increment(id);
            for (int i = 0; i < d; ++i) row[var_base[p] + i] += ds[i];
            id = p;
        }
        lp.add_row(row, '>', m.claim.value[leaf]);
    }
    const LpSolution sol = solve_lp(lp);
    if (!sol.optimal()) throw SolverError("whole-tree superhedge LP failed");
    return sol.objective;
}

struct Suite {
    Rng rng;
    std::ostringstream out;
    int checks = 0;
    int violations = 0;
    std::string counterexample;

    explicit Suite(std::uint64_t seed) : rng(seed) {}

    void fail(const std::string& group, const std::string& detail, const Market* m) {
        ++violations;
        out << "FAIL " << group << ": " << detail << "\n";
        if (counterexample.empty() && m) {
            counterexample = "# property: " + group + "\n# " + detail + "\n" + save_market(*m);
        }
    }

    void group_ok(const std::string& group, const std::string& detail) {
        out << "ok " << group << " (" << detail << ")\n";
    }
};

Market shrink_market(Market m, const std::function<bool(const Market&)>& still_fails) {
    bool changed = true;
    int guard = 0;
    while (changed && ++guard < 60) {
        changed = false;
        // try dropping extreme priors one node at a time
        for (const Node& nd : m.tree.nodes()) {
            if (nd.children.empty()) continue;
            const Mat& ext = m.priors.extremes(nd.id);
            for (size_t e = 0; e < ext.size() && ext.size() > 1; ++e) {
                std::map<int, Mat> all;
                for (const Node& o : m.tree.nodes())
                    if (!o.children.empty()) all[o.id] = m.priors.extremes(o.id);
                all[nd.id].erase(all[nd.id].begin() + e);
                Market cand = m;
                cand.priors = PriorSet::from_extremes(m.tree, all);
                if (still_fails(cand)) {
                    m = std::move(cand);
                    changed = true;
                    break;
                }
            }
        }
        // try rounding the claim
        {
            Market cand = m;
            bool rounded = false;
            for (double& v : cand.claim.value) {
                const double r = std::round(v * 100.0) / 100.0;
                if (r != v) { v = r; rounded = true; }
            }
            if (rounded && still_fails(cand)) {
                m = std::move(cand);
                changed = true;
            }
        }
    }
    return m;
}

Claim zero_claim(const ScenarioTree& tree) {
    Claim c;
    c.value.assign(tree.node_count(), 0.0);
    return c;
}

}  // namespace

PropertySuiteReport run_property_suite(std::uint64_t seed, int instances) {
    Suite s(seed);
    s.out << "multiprior property suite v1\n";
    s.out << "seed=" << seed << " instances=" << instances << "\n";
    const int nsmall = std::max(instances / 4, 8);

    // --- superreplication duality: backward induction vs martingale LP
    // vs whole-tree LP
    {
        double worst = 0.0;
        int bad = 0;
        for (int i = 0; i < instances; ++i) {
            MarketGenOpts g;
            g.d = (i % 3 == 2) ? 2 : 1;
            Market m = random_na_market(s.rng, g);
            m.claim = random_claim(s.rng, m.tree, -0.5, 2.0);
            const double primal = superreplication_price(m.tree, m.priors, m.claim).price;
            const double dual = dual_price(m.tree, m.priors, m.claim);
            const double flat = whole_tree_lp(m);
            ++s.checks;
            worst = std::max(worst, std::abs(primal - dual) / (1.0 + std::abs(primal)));
            worst = std::max(worst, std::abs(primal - flat) / (1.0 + std::abs(primal)));
            if (!duality_gap_ok(primal, dual) || !duality_gap_ok(primal, flat)) {
                ++bad;
                Market small = shrink_market(m, [&](const Market& c) {
                    const double p = superreplication_price(c.tree, c.priors, c.claim).price;
                    return !duality_gap_ok(p, dual_price(c.tree, c.priors, c.claim));
                });
                s.fail("duality-gap",
                       "primal=" + fmt(primal) + " dual=" + fmt(dual) + " flat=" + fmt(flat),
                       &small);
            }
        }
        if (bad == 0)
            s.group_ok("duality-gap", std::to_string(instances) + " markets, max rel gap " +
                                          fmtg(worst));
    }

    // --- superhedge axioms
    {
        int bad = 0;
        for (int i = 0; i < nsmall; ++i) {
            MarketGenOpts g;
            g.d = (i % 4 == 3) ? 2 : 1;
            Market m = random_na_market(s.rng, g);
            const Claim G = random_claim(s.rng, m.tree, -1.0, 2.0);
            const Claim H = random_claim(s.rng, m.tree, -1.0, 2.0);
            auto pi = [&](const Claim& c) {
                return superreplication_price(m.tree, m.priors, c).price;
            };
            const double piG = pi(G), piH = pi(H);
            bool ok = std::abs(pi(zero_claim(m.tree))) <= 1e-9;
            for (double mm : {-1.0, 0.5, 2.0}) {
                Claim sh = G;
                for (int leaf : m.tree.leaves()) sh.value[leaf] += mm;
                ok = ok && std::abs(pi(sh) - (piG + mm)) <= 1e-9 * (1.0 + std::abs(piG));
            }
            {
                Claim lower = G;
                for (int leaf : m.tree.leaves())
                    lower.value[leaf] = std::min(G.value[leaf], H.value[leaf]);
                ok = ok && pi(lower) <= std::min(piG, piH) + 1e-9;
            }
            for (double lam : {0.25, 0.5, 0.75}) {
                Claim mixc = G;
                for (int leaf : m.tree.leaves())
                    mixc.value[leaf] = lam * G.value[leaf] + (1.0 - lam) * H.value[leaf];
                ok = ok && pi(mixc) <= lam * piG + (1.0 - lam) * piH + 1e-9;
            }
            ok = ok && subreplication_price(m.tree, m.priors, G).price <= piG + 1e-9;
            {
                // attainment: the minimal capital really hedges
                const SuperhedgeResult r = superreplication_price(m.tree, m.priors, G);
                const ChargedSet ch = charged_set(m.tree, m.priors);
                const Vec w = wealth_process(m.tree, r.strategy, r.price);
                for (int leaf : m.tree.leaves())
                    if (ch.is_charged(leaf)) ok = ok && w[leaf] >= G.value[leaf] - 1e-8;
            }
            {
                // nonnegative claim null exactly on the charged set prices to zero
                const ChargedSet ch = charged_set(m.tree, m.priors);
                Claim g0 = zero_claim(m.tree);
                bool has_polar = false;
                for (int leaf : m.tree.leaves())
                    if (!ch.is_charged(leaf)) {
                        g0.value[leaf] = 1.0 + s.rng.uniform();
                        has_polar = true;
                    }
                if (has_polar) ok = ok && std::abs(pi(g0)) <= 1e-9;
                Claim gpos = zero_claim(m.tree);
                for (int leaf : m.tree.leaves())
                    if (ch.is_charged(leaf)) gpos.value[leaf] = 0.1 + s.rng.uniform();
                ok = ok && pi(gpos) > 1e-9;
            }
            ++s.checks;
            if (!ok) {
                ++bad;
                s.fail("superhedge-axioms", "axiom violated", &m);
            }
        }
        if (bad == 0) s.group_ok("superhedge-axioms", std::to_string(nsmall) + " markets");
    }

    // --- projection onto the support span preserves charged wealth
    {
        int bad = 0;
        for (int i = 0; i < nsmall; ++i) {
            MarketGenOpts g;
            g.d = (i % 2 == 1) ? 2 : 1;
            Market m = random_na_market(s.rng, g);
            const ChargedSet ch = charged_set(m.tree, m.priors);
            Strategy st = Strategy::zeros(m.tree);
            for (auto& h : st.holding)
                for (double& v : h) v = s.rng.uniform(-2.0, 2.0);
            const Strategy pr = project_onto_D(m.tree, ch, st);
            const Vec w1 = wealth_process(m.tree, st, 0.7);
            const Vec w2 = wealth_process(m.tree, pr, 0.7);
            bool ok = true;
            for (int id = 0; id < m.tree.node_count(); ++id)
                if (ch.is_charged(id) && std::abs(w1[id] - w2[id]) > 1e-9) ok = false;
            ++s.checks;
            if (!ok) {
                ++bad;
                s.fail("projection-invariance", "charged wealth moved under projection", &m);
            }
        }
        if (bad == 0) s.group_ok("projection-invariance", std::to_string(nsmall) + " strategies");
    }

    // --- adding an extreme prior can only grow the charged set; adding a
    // redundant mixture changes nothing, including the NA verdict
    {
        int bad = 0;
        for (int i = 0; i < nsmall; ++i) {
            Market m = random_na_market(s.rng, MarketGenOpts{});
            const ChargedSet before = charged_set(m.tree, m.priors);

            std::map<int, Mat> all;
            for (const Node& nd : m.tree.nodes())
                if (!nd.children.empty()) all[nd.id] = m.priors.extremes(nd.id);
            // random extra extreme at the root
            {
                Vec v(m.tree.node(0).children.size(), 0.0);
                double sum = 0.0;
                for (double& q : v) {
                    q = s.rng.uniform();
                    sum += q;
                }
                for (double& q : v) q /= sum;
                all[0].push_back(v);
            }
            PriorSet wider = PriorSet::from_extremes(m.tree, all);
            const ChargedSet after = charged_set(m.tree, wider);
            bool ok = true;
            for (int id = 0; id < m.tree.node_count(); ++id)
                if (before.is_charged(id) && !after.is_charged(id)) ok = false;

            // redundant mixture of existing extremes at the root
            std::map<int, Mat> red;
            for (const Node& nd : m.tree.nodes())
                if (!nd.children.empty()) red[nd.id] = m.priors.extremes(nd.id);
            {
                const Mat& ext = m.priors.extremes(0);
                Vec mixv(ext[0].size(), 0.0);
                const double lam = s.rng.uniform();
                for (size_t j = 0; j < mixv.size(); ++j)
                    mixv[j] = lam * ext[0][j] + (1.0 - lam) * ext.back()[j];
                red[0].push_back(mixv);
            }
            PriorSet redundant = PriorSet::from_extremes(m.tree, red);
            ok = ok && check_na(m.tree, redundant).global_na == check_na(m.tree, m.priors).global_na;
            const ChargedSet after2 = charged_set(m.tree, redundant);
            for (int id = 0; id < m.tree.node_count(); ++id)
                if (before.is_charged(id) != after2.is_charged(id)) ok = false;

            ++s.checks;
            if (!ok) {
                ++bad;
                s.fail("charging-monotonicity", "charged set shrank or verdict flipped", &m);
            }
        }
        if (bad == 0) s.group_ok("charging-monotonicity", std::to_string(nsmall) + " markets");
    }

    // --- wealth is linear in (x, strategy)
    {
        int bad = 0;
        for (int i = 0; i < nsmall; ++i) {
            Market m = random_na_market(s.rng, MarketGenOpts{});
            Strategy a = Strategy::zeros(m.tree), b = Strategy::zeros(m.tree);
            for (int id = 0; id < m.tree.node_count(); ++id)
                for (int c = 0; c < m.tree.dim(); ++c) {
                    a.holding[id][c] = s.rng.uniform(-2.0, 2.0);
                    b.holding[id][c] = s.rng.uniform(-2.0, 2.0);
                }
            const double xa = s.rng.uniform(-1.0, 2.0), xb = s.rng.uniform(-1.0, 2.0);
            Strategy ab = Strategy::zeros(m.tree);
            for (int id = 0; id < m.tree.node_count(); ++id)
                for (int c = 0; c < m.tree.dim(); ++c)
                    ab.holding[id][c] = a.holding[id][c] + b.holding[id][c];
            const Vec wa = wealth_process(m.tree, a, xa);
            const Vec wb = wealth_process(m.tree, b, xb);
            const Vec wab = wealth_process(m.tree, ab, xa + xb);
            bool ok = true;
            for (int id = 0; id < m.tree.node_count(); ++id)
                if (std::abs(wab[id] - wa[id] - wb[id]) > 1e-10) ok = false;
            ++s.checks;
            if (!ok) {
                ++bad;
                s.fail("wealth-linearity", "superposition failed", &m);
            }
        }
        if (bad == 0) s.group_ok("wealth-linearity", std::to_string(nsmall) + " strategies");
    }

    // --- quantitative no-arbitrage level scales with the increments
    {
        int bad = 0;
        const int cases = std::max(nsmall / 2, 6);
        for (int i = 0; i < cases; ++i) {
            MarketGenOpts g;
            g.T_min = g.T_max = 1;
            Market m = random_na_market(s.rng, g);
            const ChargedSet ch = charged_set(m.tree, m.priors);
            const AlphaOptions aopt{12, 0};
            const double a1 = compute_alpha(m.tree, m.priors, ch, 0, aopt);
            const double step = std::ldexp(1.0, -aopt.dyadic_k);
            bool ok = a1 > 0.0;
            for (double lam : {0.4, 2.0}) {
                Mat prices;
                std::vector<int> parents;
                for (const Node& nd : m.tree.nodes()) {
                    parents.push_back(nd.parent);
                    if (nd.parent < 0) {
                        prices.push_back(nd.price);
                    } else {
                        Vec p = m.tree.node(nd.parent).price;
                        axpy(lam, m.tree.increment(nd.id), p);
                        prices.push_back(p);
                    }
                }
                ScenarioTree scaled = ScenarioTree::from_nodes(m.tree.dim(), parents, prices);
                const double a2 = compute_alpha(scaled, m.priors, ch, 0, aopt);
                // binding probability at level a1
                double pbind = kInf;
                for (double hdir : {1.0, -1.0}) {
                    double best = 0.0;
                    for (const Vec& e : m.priors.extremes(0)) {
                        double mass = 0.0;
                        const auto& kids = m.tree.node(0).children;
                        for (size_t j = 0; j < kids.size(); ++j)
                            if (ch.edge[kids[j]] && hdir * m.tree.increment(kids[j])[0] < -a1)
                                mass += e[j];
                        best = std::max(best, mass);
                    }
                    pbind = std::min(pbind, best);
                }
                ok = ok && a2 >= std::min(lam * a1, pbind) - step - 1e-12;
            }
            ++s.checks;
            if (!ok) {
                ++bad;
                s.fail("alpha-scaling", "certified level fell below the scaling bound", &m);
            }
        }
        if (bad == 0) s.group_ok("alpha-scaling", std::to_string(cases) + " markets");
    }

    // --- indifference prices sit between pi(G) - x and pi(G)
    {
        int bad = 0;
        const int cases = 6;
        for (int i = 0; i < cases; ++i) {
            MarketGenOpts g;
            g.T_max = 2;
            g.max_children = 3;
            g.max_extremes = 2;
            Market m = random_na_market(s.rng, g);
            m.claim = random_claim(s.rng, m.tree, -0.5, 1.5);
            const ChargedSet ch = charged_set(m.tree, m.priors);
            const UtilityFamily fam = UtilityFamily::cara(Sequence::constant(1.0), 1.0);
            const double x = s.rng.uniform(0.5, 1.5);
            const IndifferenceResult r = indifference_price(m.tree, m.priors, ch, fam, 1, m.claim,
                                                            x, RobustSolver::CaraExact);
            bool ok = r.price >= r.pi - x - 1e-8 && r.price <= r.pi + 1e-8;
            {
                // nonnegative claims never price below the zero claim
                Claim gplus = m.claim;
                for (int leaf : m.tree.leaves())
                    gplus.value[leaf] = std::max(gplus.value[leaf], 0.0);
                const double pplus = indifference_price(m.tree, m.priors, ch, fam, 1, gplus, x,
                                                        RobustSolver::CaraExact)
                                         .price;
                const double p0 = indifference_price(m.tree, m.priors, ch, fam, 1,
                                                     zero_claim(m.tree), x,
                                                     RobustSolver::CaraExact)
                                      .price;
                ok = ok && pplus >= p0 - 1e-8;
                ok = ok && std::abs(p0) <= 1e-8;
            }
            ++s.checks;
            if (!ok) {
                ++bad;
                s.fail("sandwich-bounds", "price left the superreplication sandwich", &m);
            }
        }
        if (bad == 0) s.group_ok("sandwich-bounds", std::to_string(cases) + " instances");
    }

    // --- risk-measure axioms on the induced measures
    {
        int bad = 0;
        const int cases = 4;
        for (int i = 0; i < cases; ++i) {
            MarketGenOpts g;
            g.T_max = 2;
            g.max_children = 3;
            g.max_extremes = 2;
            Market m = random_na_market(s.rng, g);
            const ChargedSet ch = charged_set(m.tree, m.priors);
            const UtilityFamily fam = UtilityFamily::cara(Sequence::constant(1.0), 1.0);
            std::vector<Claim> claims{random_claim(s.rng, m.tree, -0.5, 1.5),
                                      random_claim(s.rng, m.tree, -0.5, 1.5)};
            const RiskHarnessReport rep = risk_measure_harness(m.tree, m.priors, ch, fam, 1, 1.0,
                                                               claims, RobustSolver::CaraExact);
            ++s.checks;
            if (!rep.all_ok) {
                ++bad;
                std::string which = "?";
                for (const AxiomCheck& c : rep.checks)
                    if (!c.ok) { which = c.name; break; }
                s.fail("risk-axioms", which, &m);
            }
        }
        if (bad == 0) s.group_ok("risk-axioms", std::to_string(cases) + " instances");
    }

    // --- more risk-averse agents assign lower certainty equivalents
    {
        int bad = 0;
        const int cases = 10;
        for (int i = 0; i < cases; ++i) {
            MarketGenOpts g;
            g.T_max = 2;
            Market m = random_na_market(s.rng, g);
            const ChargedSet ch = charged_set(m.tree, m.priors);
            const Claim G = random_claim(s.rng, m.tree, 0.0, 2.0);
            const double gb = s.rng.uniform(0.5, 2.0);
            const double ga = gb + s.rng.uniform(0.5, 2.0);
            const UtilityFamily A = UtilityFamily::cara(Sequence::constant(ga), 1.0);
            const UtilityFamily B = UtilityFamily::cara(Sequence::constant(gb), 1.0);
            const double eA =
                certainty_equivalent_robust(A, 1, m.tree, m.priors, ch, G).e_robust;
            const double eB =
                certainty_equivalent_robust(B, 1, m.tree, m.priors, ch, G).e_robust;
            ++s.checks;
            if (!(eA <= eB + 1e-9)) {
                ++bad;
                s.fail("pratt-ranking", "eA=" + fmt(eA) + " eB=" + fmt(eB), &m);
            }
        }
        if (bad == 0) s.group_ok("pratt-ranking", std::to_string(cases) + " claims");
    }

    // --- the three robust solvers agree on small trees
    {
        int bad = 0;
        const int cases = 4;
        double worst = 0.0;
        for (int i = 0; i < cases; ++i) {
            MarketGenOpts g;
            g.T_max = 2;
            g.max_children = 3;
            g.max_extremes = 2;
            Market m = random_na_market(s.rng, g);
            m.claim = random_claim(s.rng, m.tree, 0.0, 1.0);
            const ChargedSet ch = charged_set(m.tree, m.priors);
            const UtilityFamily fam = UtilityFamily::cara(Sequence::constant(1.5), 1.0);
            const double pi = superreplication_price(m.tree, m.priors, m.claim).price;
            for (double off : {0.3, 1.0}) {
                const double x = pi + off;
                const double ue = robust_utility(m.tree, m.priors, ch, fam, 1, m.claim, x,
                                                 RobustSolver::CaraExact)
                                      .value;
                const double ug = robust_utility(m.tree, m.priors, ch, fam, 1, m.claim, x,
                                                 RobustSolver::WealthGrid)
                                      .value;
                const double uo = robust_utility(m.tree, m.priors, ch, fam, 1, m.claim, x,
                                                 RobustSolver::BruteOracle)
                                      .value;
                ++s.checks;
                const double scale = 1.0 + std::abs(uo);
                worst = std::max({worst, std::abs(ue - uo) / scale, std::abs(ug - uo) / scale});
                if (std::abs(ue - uo) > 1e-6 * scale || std::abs(ug - uo) > 1e-6 * scale) {
                    ++bad;
                    s.fail("solver-agreement",
                           "exact=" + fmt(ue) + " grid=" + fmt(ug) + " oracle=" + fmt(uo), &m);
                }
            }
        }
        if (bad == 0)
            s.group_ok("solver-agreement",
                       std::to_string(2 * cases) + " values, max rel spread " + fmtg(worst));
    }

    PropertySuiteReport rep;
    rep.checks = s.checks;
    rep.violations = s.violations;
    rep.all_pass = s.violations == 0;
    s.out << "summary: " << s.checks << " checks, " << s.violations << " violations, "
          << (rep.all_pass ? "PASS" : "FAIL") << "\n";
    rep.text = s.out.str();
    rep.counterexample = s.counterexample;
    return rep;
}

}  // namespace multiprior
