#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "multiprior/arbitrage.hpp"
#include "multiprior/experiment.hpp"
#include "multiprior/robust.hpp"
#include "multiprior/superhedge.hpp"
#include "multiprior/utility.hpp"

using namespace multiprior;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot write '" + path + "'");
    out << content;
}

RobustSolver parse_solver(const std::string& s) {
    if (s == "cara") return RobustSolver::CaraExact;
    if (s == "grid") return RobustSolver::WealthGrid;
    if (s == "oracle") return RobustSolver::BruteOracle;
    throw ParseError("unknown solver '" + s + "' (expected cara|grid|oracle)");
}

int cmd_na_check(const std::string& market_path, int alpha_grid) {
    const Market m = load_market(read_file(market_path));
    const ChargedSet charged = charged_set(m.tree, m.priors);
    const NAResult na = check_na(m.tree, m.priors);
    for (const NodeNAReport& r : na.nodes) {
        std::cout << "node " << r.node << " t=" << m.tree.node(r.node).time;
        if (!r.charged) {
            std::cout << "  polar, skipped\n";
            continue;
        }
        std::cout << "  na=" << (r.na_holds ? "yes" : "NO") << "  dim(D)=" << r.D_basis.size();
        if (r.na_holds) {
            const double a = compute_alpha(m.tree, m.priors, charged, r.node,
                                           AlphaOptions{alpha_grid, 0});
            if (a == kInf)
                std::cout << "  alpha=n/a (D={0})";
            else
                std::cout << "  alpha=" << fmt(a);
        } else {
            std::cout << "  arbitrage h=(";
            for (size_t i = 0; i < r.arbitrage_direction.size(); ++i)
                std::cout << (i ? "," : "") << fmt(r.arbitrage_direction[i]);
            std::cout << ")";
        }
        std::cout << "\n";
    }
    std::cout << (na.global_na ? "no-arbitrage holds" : "ARBITRAGE detected") << "\n";
    return na.global_na ? 0 : 1;
}

int cmd_superhedge(const std::string& market_path, bool with_dual, const std::string& csv_path) {
    const Market m = load_market(read_file(market_path));
    SuperhedgeOptions opt;
    opt.with_dual = with_dual;
    const SuperhedgeResult res = superreplication_price(m.tree, m.priors, m.claim, opt);
    const SuperhedgeResult sub = subreplication_price(m.tree, m.priors, m.claim);
    std::cout << "pi(G)     = " << fmt(res.price) << "\n";
    std::cout << "pi_sub(G) = " << fmt(sub.price) << "\n";
    if (with_dual) {
        std::cout << "dual      = " << fmt(res.dual_price)
                  << "  (gap " << fmt(res.price - res.dual_price) << ")\n";
    }
    if (!csv_path.empty()) {
        std::ostringstream os;
        os << "# multiprior-csv v1 superhedge\n";
        os << "node_id,t,pi_t";
        for (int i = 0; i < m.tree.dim(); ++i) os << ",h" << i;
        os << "\n";
        for (const Node& nd : m.tree.nodes()) {
            os << nd.id << ',' << nd.time << ',' << fmt(res.node_values[nd.id]);
            for (int i = 0; i < m.tree.dim(); ++i)
                os << ',' << fmt(nd.children.empty() ? 0.0 : res.strategy.holding[nd.id][i]);
            os << "\n";
        }
        write_file(csv_path, os.str());
    }
    return 0;
}

int cmd_ce(const std::string& market_path, const std::string& utility_path, int n, int prior_index,
           bool robust) {
    const Market m = load_market(read_file(market_path));
    const UtilityFamily fam = UtilityFamily::load(read_file(utility_path), m.tree, m.priors);
    const ChargedSet charged = charged_set(m.tree, m.priors);
    if (n <= 0) n = fam.n_lo();
    if (robust) {
        const CEReport rep = certainty_equivalent_robust(fam, n, m.tree, m.priors, charged, m.claim);
        std::cout << "e(G)        = " << fmt(rep.e_robust) << "\n";
        if (rep.enumerated) {
            std::cout << "min_P e(G,P) = " << fmt(rep.min_e_per_prior) << "  ("
                      << rep.per_prior.size() << " extreme pastings)\n";
            std::cout << "rho(G)      = " << fmt(rep.premium_robust) << "\n";
        }
        std::cout << "inf_P E_P G = " << fmt(rep.inf_expected_payoff)
                  << "  sup_P E_P G = " << fmt(rep.sup_expected_payoff) << "\n";
    } else {
        // pasting built from one extreme slot at every node
        std::vector<int> inner;
        for (const Node& nd : m.tree.nodes())
            if (!nd.children.empty()) inner.push_back(nd.id);
        Vec prob(m.tree.node_count(), 0.0);
        prob[0] = 1.0;
        for (const Node& nd : m.tree.nodes()) {
            if (nd.children.empty()) continue;
            const Mat& ext = m.priors.extremes(nd.id);
            const Vec& e = ext[std::min<size_t>(prior_index, ext.size() - 1)];
            for (size_t j = 0; j < nd.children.size(); ++j)
                prob[nd.children[j]] = prob[nd.id] * e[j];
        }
        const double e = certainty_equivalent_mono(fam, n, m.tree, prob, m.claim);
        double eg = 0.0;
        for (int leaf : m.tree.leaves()) eg += prob[leaf] * m.claim.value[leaf];
        std::cout << "e(G,P)  = " << fmt(e) << "\n";
        std::cout << "E_P G   = " << fmt(eg) << "\n";
        std::cout << "premium = " << fmt(eg - e) << "\n";
    }
    return 0;
}

int cmd_indiff(const std::string& market_path, const std::string& utility_path, double x, int n,
               const std::string& solver_name, const std::string& csv_path) {
    const Market m = load_market(read_file(market_path));
    const UtilityFamily fam = UtilityFamily::load(read_file(utility_path), m.tree, m.priors);
    const ChargedSet charged = charged_set(m.tree, m.priors);
    const RobustSolver solver = parse_solver(solver_name);

    const double pi = superreplication_price(m.tree, m.priors, m.claim).price;
    const double pi_sub = subreplication_price(m.tree, m.priors, m.claim).price;

    std::ostringstream os;
    os << "# multiprior-csv v1 indiff\n";
    os << "n,gamma_or_param,u0,uG,p,pB,pi,pi_sub,gap\n";
    const int lo = n > 0 ? n : fam.n_lo();
    const int hi = n > 0 ? n : fam.n_hi();
    for (int k = lo; k <= hi; ++k) {
        const IndifferenceResult r =
            indifference_price(m.tree, m.priors, charged, fam, k, m.claim, x, solver);
        const BuyerResult b = buyer_price(m.tree, m.priors, charged, fam, k, m.claim, x, solver);
        const RobustValue uG = robust_utility(m.tree, m.priors, charged, fam, k, m.claim,
                                              x + r.price, solver);
        const double env = fam.risk_aversion_envelope(k);
        os << k << ',' << fmt(std::isnan(env) ? double(k) : env) << ',' << fmt(r.u0.value) << ','
           << fmt(uG.value) << ',' << fmt(r.price) << ',' << fmt(b.price) << ',' << fmt(pi) << ','
           << fmt(pi_sub) << ',' << fmt(pi - r.price) << "\n";
        std::cout << "n=" << k << "  p=" << fmt(r.price) << "  pB=" << fmt(b.price)
                  << "  pi=" << fmt(pi) << "  gap=" << fmt(pi - r.price) << "\n";
        if (!b.upper_bound_ok) {
            std::cout << "warning: buyer price exceeded pi_sub + x\n";
        }
    }
    if (!csv_path.empty()) write_file(csv_path, os.str());
    return 0;
}

int cmd_converge(const std::string& market_path, const std::string& utility_path, double x0,
                 int n_hi, double tol, const std::string& solver_name, bool waive,
                 const std::string& csv_path, const std::string& svg_path) {
    const Market m = load_market(read_file(market_path));
    const UtilityFamily fam = UtilityFamily::load(read_file(utility_path), m.tree, m.priors);
    ExperimentConfig cfg;
    cfg.x0 = x0;
    cfg.n_lo = fam.n_lo();
    cfg.n_hi = n_hi > 0 ? n_hi : fam.n_hi();
    cfg.solver = parse_solver(solver_name);
    cfg.tol = tol;
    cfg.waive_audits = waive;
    const ConvergenceReport rep = run_convergence(m, fam, cfg);

    std::cout << "pi(G)=" << fmt(rep.pi) << "  pi_sub(G)=" << fmt(rep.pi_sub)
              << "  rho(G)=" << fmt(rep.rho_limit) << "  x0=" << fmt(rep.x0) << "\n";
    std::cout << "audits: u1=" << (rep.u1_pass ? "pass" : "FAIL")
              << " un=" << (rep.un_pass ? "pass" : "FAIL")
              << (rep.audits_waived ? " (waived)" : "") << "\n";
    for (const ConvergenceRow& r : rep.rows)
        std::cout << "n=" << r.n << "  p=" << fmt(r.p) << "  gap=" << fmt(r.gap_p)
                  << "  pB=" << fmt(r.p_buyer) << "  gapB=" << fmt(r.gap_buyer) << "\n";
    std::cout << "verdict: " << rep.verdict << " (final gap " << fmt(rep.final_gap) << ")\n";

    if (!csv_path.empty()) write_file(csv_path, convergence_csv(rep));
    if (!svg_path.empty()) write_file(svg_path, convergence_svg(rep));
    return rep.converged ? 0 : 2;
}

int cmd_prop_suite(std::uint64_t seed, int count, const std::string& out_path,
                   const std::string& counterexample_path) {
    const PropertySuiteReport rep = run_property_suite(seed, count);
    std::cout << rep.text;
    if (!out_path.empty()) write_file(out_path, rep.text);
    if (!rep.counterexample.empty() && !counterexample_path.empty())
        write_file(counterexample_path, rep.counterexample);
    return rep.all_pass ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"multiprior: superreplication, robust indifference prices and risk "
                 "measures on finite scenario trees"};
    app.require_subcommand(1);

    std::string market, utility, csv, svg, out, cex = "counterexample.json";
    std::string solver = "cara";
    double x = 1.0, x0 = 0.0, tol = 1e-2;
    int n = 0, n_hi = 0, alpha_grid = 12, prior_index = 0, count = 200;
    std::uint64_t seed = 42;
    bool with_dual = false, robust_ce = false, waive = false;

    CLI::App* na = app.add_subcommand("na-check", "node-wise no-arbitrage report");
    na->add_option("--market", market)->required();
    na->add_option("--alpha-grid", alpha_grid, "dyadic resolution for alpha");

    CLI::App* sh = app.add_subcommand("superhedge", "superreplication prices and hedge");
    sh->add_option("--market", market)->required();
    sh->add_flag("--dual", with_dual, "also solve the martingale-measure program");
    sh->add_option("--csv", csv);

    CLI::App* ce = app.add_subcommand("ce", "certainty equivalents");
    ce->add_option("--market", market)->required();
    ce->add_option("--utility", utility)->required();
    ce->add_option("--n", n, "family index (default: lower end of the range)");
    ce->add_option("--prior-index", prior_index, "extreme slot used at every node");
    ce->add_flag("--robust", robust_ce, "multiple-priors certainty equivalent");

    CLI::App* in = app.add_subcommand("indiff", "utility indifference prices");
    in->add_option("--market", market)->required();
    in->add_option("--utility", utility)->required();
    in->add_option("--x", x, "initial capital")->required();
    in->add_option("--n", n, "single family index (default: sweep the range)");
    in->add_option("--solver", solver, "cara|grid|oracle");
    in->add_option("--csv", csv);

    CLI::App* cv = app.add_subcommand("converge", "price convergence sweep");
    cv->add_option("--market", market)->required();
    cv->add_option("--utility", utility)->required();
    cv->add_option("--x0", x0, "initial capital (default: utility file anchor)");
    cv->add_option("--n-max", n_hi, "last index (default: utility file range)");
    cv->add_option("--tol", tol, "convergence tolerance on the final gap");
    cv->add_option("--solver", solver, "cara|grid|oracle");
    cv->add_flag("--waive-audits", waive);
    cv->add_option("--csv", csv);
    cv->add_option("--svg", svg);

    CLI::App* ps = app.add_subcommand("prop-suite", "seeded randomized property checks");
    ps->add_option("--seed", seed);
    ps->add_option("--count", count, "number of markets for the duality sweep");
    ps->add_option("--out", out, "write the report here as well");
    ps->add_option("--counterexample", cex, "where to dump a failing market");

    CLI11_PARSE(app, argc, argv);

    try {
        if (na->parsed()) return cmd_na_check(market, alpha_grid);
        if (sh->parsed()) return cmd_superhedge(market, with_dual, csv);
        if (ce->parsed()) return cmd_ce(market, utility, n, prior_index, robust_ce);
        if (in->parsed()) return cmd_indiff(market, utility, x, n, solver, csv);
        if (cv->parsed()) return cmd_converge(market, utility, x0, n_hi, tol, solver, waive, csv, svg);
        if (ps->parsed()) return cmd_prop_suite(seed, count, out, cex);
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
