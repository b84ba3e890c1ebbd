// rinv/config.hpp
//
// Run configuration: strict JSON schema, dotted overrides and problem setup.

#ifndef RINV_CONFIG_HPP
#define RINV_CONFIG_HPP

#include "rinv/bench.hpp"
#include "rinv/eit.hpp"

#include <set>

namespace rinv {

using json = nlohmann::json;

enum class ProblemKind { diagonal, schroedinger_aao, schroedinger_alt, eit };

struct TruthSpec {
    std::array<double, 2> offset{0.08, -0.05};  // bump center relative to the domain center
    double radius_factor = 0.22;                 // bump radius / domain side
    double amplitude = 0.5;
};

struct RateCheck {
    std::string metric;
    bool expect_psi_tilde = false;  // expected exponent from psi_tilde instead of `expected`
    double expected = 1.0;
    double tol = 0.15;
    bool relative = false;
};

struct RunConfig {
    ProblemKind problem = ProblemKind::diagonal;
    Scheme scheme = Scheme::variational;
    double delta = 1e-3;
    std::uint64_t seed = 1;
    // diagonal
    Index diag_n = 4000;
    double diag_a = 1.0, diag_b_decay = 1.0, vsc_b = 0.75;
    // grid problems
    int grid_n = 17;
    int currents = 8;
    TruthSpec truth;
    EitOptions eit;
    SchroedingerOptions schroedinger;
    bool psi_from_oracle = true;
    RegConfig reg;
    double constants_radius = 0.5;
    int constants_samples = 100;
    std::vector<double> deltas;
    std::vector<std::uint64_t> seeds{1, 2, 3};
    int workers = 1;
    std::vector<RateCheck> checks;
    std::string output = "out";
    json source;  // validated document
};

namespace detail {

class Reader {
public:
    Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        require(j_.is_object(), ErrorKind::config, (path_.empty() ? "config" : path_) + " must be an object");
    }

    bool has(const std::string& k) {
        seen_.insert(k);
        return j_.contains(k);
    }

    template <class T>
    T get(const std::string& k, T def) {
        if (!has(k)) return def;
        const json& v = j_.at(k);
        std::string where = path_ + k;
        if constexpr (std::is_same_v<T, bool>) {
            require(v.is_boolean(), ErrorKind::config, where + ": expected a boolean");
        } else if constexpr (std::is_integral_v<T>) {
            require(v.is_number_integer(), ErrorKind::config, where + ": expected an integer");
            if constexpr (std::is_unsigned_v<T>) require(v.get<long long>() >= 0, ErrorKind::config, where + ": must be >= 0");
        } else if constexpr (std::is_floating_point_v<T>) {
            require(v.is_number(), ErrorKind::config, where + ": expected a number");
        } else if constexpr (std::is_same_v<T, std::string>) {
            require(v.is_string(), ErrorKind::config, where + ": expected a string");
        }
        return v.get<T>();
    }

    template <class T>
    std::vector<T> list(const std::string& k, std::vector<T> def) {
        if (!has(k)) return def;
        const json& v = j_.at(k);
        require(v.is_array(), ErrorKind::config, path_ + k + ": expected an array");
        std::vector<T> out;
        for (const json& e : v) {
            if constexpr (std::is_integral_v<T>)
                require(e.is_number_integer() && e.get<long long>() >= 0, ErrorKind::config,
                        path_ + k + ": expected nonnegative integers");
            else
                require(e.is_number(), ErrorKind::config, path_ + k + ": expected numbers");
            out.push_back(e.get<T>());
        }
        return out;
    }

    Reader child(const std::string& k) {
        static const json empty = json::object();
        return has(k) ? Reader(j_.at(k), path_ + k + ".") : Reader(empty, path_ + k + ".");
    }

    const json& raw(const std::string& k) {
        seen_.insert(k);
        return j_.at(k);
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            require(seen_.count(it.key()) > 0, ErrorKind::config, "unknown key " + path_ + it.key());
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

template <class E>
E pick(const std::string& what, const std::string& v, std::initializer_list<std::pair<const char*, E>> opts) {
    std::string names;
    for (auto& [name, e] : opts) {
        if (v == name) return e;
        names += names.empty() ? name : std::string(", ") + name;
    }
    fail(ErrorKind::config, what + ": unknown value '" + v + "' (expected one of " + names + ")");
}

inline AuxCoefficient parse_aux(const std::string& v) {
    return pick<AuxCoefficient>("aux", v,
                                {{"reference", AuxCoefficient::reference},
                                 {"current", AuxCoefficient::current},
                                 {"automatic", AuxCoefficient::automatic}});
}

inline IndexFunction parse_psi(Reader r) {
    std::string fam = r.get<std::string>("family", "hoelder");
    IndexFunction f;
    if (fam == "hoelder") {
        f = IndexFunction::hoelder(r.get("mu", 0.5));
    } else if (fam == "logarithmic") {
        f = IndexFunction::logarithmic(r.get("nu", 1.0), r.get("t0", 1.0 / M_E));
    } else {
        fail(ErrorKind::config, "psi.family: unknown value '" + fam + "'");
    }
    r.finish();
    return f;
}

inline void parse_reg(Reader r, RegConfig& c) {
    c.p = r.get("p", c.p);
    c.b = r.get("b", c.b);
    if (r.has("alpha_rule"))
        c.alpha_rule = pick<AlphaRule>("reg.alpha_rule", r.get<std::string>("alpha_rule", ""),
                                       {{"apriori", AlphaRule::apriori},
                                        {"log_shortcut", AlphaRule::log_shortcut},
                                        {"fixed", AlphaRule::fixed}});
    c.alpha = r.get("alpha", c.alpha);
    c.alpha_exponent = r.get("alpha_exponent", c.p);
    c.beta = r.get("beta", c.beta);
    c.gamma = r.get("gamma", c.gamma);
    c.C_P = r.get("C_P", c.C_P);
    c.Cbar = r.get("Cbar", c.Cbar);
    c.C_eta = r.get("C_eta", c.C_eta);
    c.tau = r.get("tau", c.tau);
    c.tau_lo = r.get("tau_low", c.tau_lo);
    c.tau_hi = r.get("tau_up", c.tau_hi);
    c.CQ_tilde = r.get("CQ_tilde", c.CQ_tilde);
    if (r.has("variant"))
        c.variant = pick<RegVariant>("reg.variant", r.get<std::string>("variant", ""),
                                     {{"plain", RegVariant::plain}, {"penalized", RegVariant::penalized}});
    if (r.has("inner"))
        c.inner = pick<InnerScheme>("reg.inner", r.get<std::string>("inner", ""),
                                    {{"joint", InnerScheme::joint}, {"alternating", InnerScheme::alternating}});
    c.alpha0 = r.get("alpha0", c.alpha0);
    c.q = r.get("q", c.q);
    c.c_beta_alpha = r.get("c_beta_alpha", c.c_beta_alpha);
    c.C_conj_growth = r.get("C_conj_growth", c.C_conj_growth);
    c.max_outer = r.get("max_outer", c.max_outer);
    c.cg_tol = r.get("cg_tol", c.cg_tol);
    c.cg_max_iter = r.get("cg_max_iter", c.cg_max_iter);
    r.finish();
    require(c.b > 0.0 && c.b < 1.0, ErrorKind::config, "reg.b must lie in (0,1)");
    require(c.beta > 0.0, ErrorKind::config, "reg.beta must be positive");
    require(c.q > 0.0 && c.q < 1.0, ErrorKind::config, "reg.q must lie in (0,1)");
    require(c.tau_lo > 0.0 && c.tau_lo <= c.tau_hi, ErrorKind::config, "need 0 < reg.tau_low <= reg.tau_up");
}

}  // namespace detail

inline RunConfig parse_config(const json& doc) {
    RunConfig c;
    detail::Reader r(doc, "");
    c.problem = detail::pick<ProblemKind>("problem", r.get<std::string>("problem", "diagonal"),
                                          {{"diagonal", ProblemKind::diagonal},
                                           {"schroedinger_aao", ProblemKind::schroedinger_aao},
                                           {"schroedinger_alt", ProblemKind::schroedinger_alt},
                                           {"eit", ProblemKind::eit}});
    c.scheme = detail::pick<Scheme>("scheme", r.get<std::string>("scheme", "variational"),
                                    {{"variational", Scheme::variational}, {"split", Scheme::split}, {"newton", Scheme::newton}});
    c.delta = r.get("delta", c.delta);
    require(c.delta >= 0.0, ErrorKind::config, "delta must be nonnegative");
    c.seed = r.get<std::uint64_t>("seed", c.seed);
    {
        auto d = r.child("diagonal");
        c.diag_n = d.get<Index>("n", c.diag_n);
        c.diag_a = d.get("a", c.diag_a);
        c.diag_b_decay = d.get("b_decay", c.diag_b_decay);
        d.finish();
    }
    {
        auto g = r.child("grid");
        c.grid_n = g.get("n", c.grid_n);
        g.finish();
        require(c.grid_n >= 5, ErrorKind::config, "grid.n must be at least 5");
    }
    c.currents = r.get("currents", c.currents);
    require(c.currents >= 1, ErrorKind::config, "currents must be positive");
    {
        auto t = r.child("truth");
        auto off = t.list<double>("offset", {c.truth.offset[0], c.truth.offset[1]});
        require(off.size() == 2, ErrorKind::config, "truth.offset needs two entries");
        c.truth.offset = {off[0], off[1]};
        c.truth.radius_factor = t.get("radius_factor", c.truth.radius_factor);
        c.truth.amplitude = t.get("amplitude", c.truth.amplitude);
        t.finish();
    }
    c.reg.b = 0.75;
    double sob = r.get("sobolev_order", 1.0);
    require(sob >= 0.0, ErrorKind::config, "sobolev_order must be nonnegative");
    {
        auto e = r.child("eit");
        if (e.has("aux")) c.eit.aux = detail::parse_aux(e.get<std::string>("aux", ""));
        c.eit.rho_factor = e.get("rho_factor", c.eit.rho_factor);
        c.eit.sigma_bg = e.get("sigma_bg", c.eit.sigma_bg);
        c.eit.sigma_min = e.get("sigma_min", c.eit.sigma_min);
        c.eit.sigma_max = e.get("sigma_max", c.eit.sigma_max);
        c.eit.radius = e.get("radius", c.eit.radius);
        e.finish();
    }
    {
        auto s = r.child("schroedinger");
        if (s.has("aux")) c.schroedinger.aux = detail::parse_aux(s.get<std::string>("aux", ""));
        c.schroedinger.c_bg = s.get("c_bg", c.schroedinger.c_bg);
        c.schroedinger.c_min = s.get("c_min", c.schroedinger.c_min);
        c.schroedinger.c_max = s.get("c_max", c.schroedinger.c_max);
        c.schroedinger.flux_offset = s.get("flux_offset", c.schroedinger.flux_offset);
        c.schroedinger.radius = s.get("radius", c.schroedinger.radius);
        s.finish();
    }
    c.eit.n = c.schroedinger.n = c.grid_n;
    c.eit.currents = c.schroedinger.currents = c.currents;
    c.eit.sobolev_order = c.schroedinger.sobolev_order = sob;
    if (r.has("psi")) {
        c.reg.psi = detail::parse_psi(r.child("psi"));
        c.psi_from_oracle = false;
    } else if (c.problem != ProblemKind::diagonal) {
        c.reg.psi = IndexFunction::logarithmic(1.0);
        c.psi_from_oracle = false;
    }
    detail::parse_reg(r.child("reg"), c.reg);
    c.vsc_b = c.reg.b;
    {
        auto k = r.child("constants");
        c.constants_radius = k.get("radius", c.constants_radius);
        c.constants_samples = k.get("samples", c.constants_samples);
        k.finish();
        require(c.constants_radius > 0.0 && c.constants_samples > 0, ErrorKind::config, "constants need radius, samples > 0");
    }
    {
        auto s = r.child("sweep");
        c.deltas = s.list<double>("deltas", {});
        c.seeds = s.list<std::uint64_t>("seeds", c.seeds);
        c.workers = s.get("workers", c.workers);
        if (s.has("checks")) {
            const json& arr = s.raw("checks");
            require(arr.is_array(), ErrorKind::config, "sweep.checks must be an array");
            for (std::size_t i = 0; i < arr.size(); ++i) {
                detail::Reader cr(arr[i], "sweep.checks[" + std::to_string(i) + "].");
                RateCheck rc;
                rc.metric = cr.get<std::string>("metric", "");
                static const std::set<std::string> metrics = {"err_breg", "err_norm", "residual_K", "norm_Px", "Q_gap"};
                require(metrics.count(rc.metric) > 0, ErrorKind::config, "unknown sweep metric '" + rc.metric + "'");
                if (cr.has("expected")) {
                    const json& e = cr.raw("expected");
                    if (e.is_string()) {
                        require(e.get<std::string>() == "psi_tilde", ErrorKind::config,
                                "expected must be a number or \"psi_tilde\"");
                        rc.expect_psi_tilde = true;
                    } else {
                        require(e.is_number(), ErrorKind::config, "expected must be a number or \"psi_tilde\"");
                        rc.expected = e.get<double>();
                    }
                }
                rc.tol = cr.get("tol", rc.tol);
                rc.relative = cr.get("relative", rc.relative);
                cr.finish();
                c.checks.push_back(rc);
            }
        }
        s.finish();
        require(c.workers >= 1, ErrorKind::config, "sweep.workers must be positive");
        for (double d : c.deltas) require(d > 0.0, ErrorKind::config, "sweep deltas must be positive");
    }
    c.output = r.get<std::string>("output", c.output);
    r.finish();
    c.source = doc;
    return c;
}

// Applies `a.b.c=value`; the value is parsed as JSON when possible, else taken as a string.
inline void apply_override(json& doc, const std::string& expr) {
    auto eq = expr.find('=');
    require(eq != std::string::npos && eq > 0, ErrorKind::config, "override must look like key=value: " + expr);
    std::string key = expr.substr(0, eq), val = expr.substr(eq + 1);
    json v = json::parse(val, nullptr, false);
    if (v.is_discarded()) v = val;
    json* node = &doc;
    std::size_t start = 0;
    while (true) {
        auto dot = key.find('.', start);
        std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        require(!part.empty(), ErrorKind::config, "empty path component in override " + expr);
        if (!node->is_object()) *node = json::object();
        if (dot == std::string::npos) {
            (*node)[part] = v;
            return;
        }
        node = &(*node)[part];
        start = dot + 1;
    }
}

inline std::string config_hash(const json& doc) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : doc.dump()) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// ------------------------------------------------------------ problem setup

struct Problem {
    ModelPtr model;
    Vector x_true;
    IndexFunction psi;
    std::shared_ptr<const Grid2D> grid;       // null for the diagonal testbed
    std::function<Vector(const Vector&)> field;  // x -> nodal coefficient (or coefficient list)
    std::optional<DiagonalTestbed> testbed;
    json info = json::object();
};

inline Vector truth_bump(const Grid2D& G, const TruthSpec& t, double bg) {
    Eigen::Vector2d c = G.center() + Eigen::Vector2d(t.offset[0], t.offset[1]) * G.side();
    return Vector::Constant(G.num_nodes(), bg) + bump_field(G, c, t.radius_factor * G.side(), t.amplitude);
}

inline Problem build_problem(const RunConfig& c) {
    Problem p;
    p.psi = c.reg.psi;
    switch (c.problem) {
        case ProblemKind::diagonal: {
            DiagonalTestbed tb = make_diagonal_testbed(c.diag_n, c.diag_a, c.diag_b_decay, c.vsc_b);
            if (c.psi_from_oracle) p.psi = tb.psi;
            p.model = tb.model;
            p.x_true = tb.x_true();
            const Index n = tb.n;
            p.field = [n](const Vector& x) { return Vector(x.head(n)); };
            p.info = {{"mu_oracle", tb.mu},
                      {"mu_spectral", tb.mu_spectral},
                      {"vsc_constant", tb.vsc_constant},
                      {"vsc_max_violation", tb.vsc_max_violation},
                      {"vsc_samples", tb.vsc_samples}};
            p.testbed = std::move(tb);
            break;
        }
        case ProblemKind::eit: {
            auto m = EitModel::create(c.eit);
            p.grid = std::shared_ptr<const Grid2D>(m, &m->grid());
            p.x_true = m->state_from_sigma(truth_bump(m->grid(), c.truth, c.eit.sigma_bg));
            const Index nq = m->dim_q();
            p.field = [m, nq](const Vector& x) { return m->eit_map().sigma_full(x.head(nq)); };
            p.info = {{"aux", m->aux() == AuxCoefficient::reference ? "reference" : "current"},
                      {"aux_residual_reference", m->aux_selection().residual_reference},
                      {"aux_residual_current", m->aux_selection().residual_current}};
            p.model = m;
            break;
        }
        case ProblemKind::schroedinger_alt: {
            auto m = SchroedingerAltModel::create(c.schroedinger);
            p.grid = std::shared_ptr<const Grid2D>(m, &m->grid());
            Vector ct = truth_bump(m->grid(), c.truth, c.schroedinger.c_bg);
            p.x_true = Vector::Zero(m->dim_x());
            p.x_true.head(ct.size()) = ct;
            const Index nn = ct.size();
            p.field = [nn](const Vector& x) { return Vector(x.head(nn)); };
            p.info = {{"aux", m->aux() == AuxCoefficient::reference ? "reference" : "current"},
                      {"aux_residual_reference", m->aux_selection().residual_reference},
                      {"aux_residual_current", m->aux_selection().residual_current}};
            p.model = m;
            break;
        }
        case ProblemKind::schroedinger_aao: {
            auto m = std::make_shared<SchroedingerAaoModel>(c.schroedinger);
            p.grid = std::shared_ptr<const Grid2D>(m, &m->grid());
            p.x_true = m->state_from_potential(truth_bump(m->grid(), c.truth, c.schroedinger.c_bg));
            p.field = [m](const Vector& x) { return Vector(m->reg().readout->apply(m->apply_ImP(x))); };
            p.model = m;
            break;
        }
    }
    require(p.model->admissible(p.x_true), ErrorKind::config, "configured truth is not admissible");
    return p;
}

// ------------------------------------------------------------ rate checks

struct CheckOutcome {
    std::string metric;
    double slope = 0.0, expected = 0.0, tol = 0.0;
    bool all_zero = false, pass = false;
};

// Exponent predicted by psi~ over the sweep's noise levels, or the fixed value.
inline double expected_slope(const RateCheck& rc, const RegConfig& reg, const std::vector<double>& deltas) {
    if (!rc.expect_psi_tilde) return rc.expected;
    std::vector<std::pair<double, double>> pts;
    for (double d : deltas) {
        double dp = std::pow(d, reg.p);
        pts.emplace_back(dp, psi_tilde(reg.psi, reg.Cbar, reg.tau_hi, dp));
    }
    return std::get<0>(fit_loglog(pts));
}

inline CheckOutcome evaluate_check(const RateCheck& rc, const RegConfig& reg, const std::vector<double>& deltas,
                                   const SweepReport& rep) {
    CheckOutcome o;
    o.metric = rc.metric;
    auto it = rep.fitted.find(rc.metric);
    require(it != rep.fitted.end(), ErrorKind::precondition, "no fit for metric " + rc.metric);
    const Fit& f = it->second;
    o.slope = f.slope;
    o.all_zero = f.all_zero;
    o.expected = expected_slope(rc, reg, deltas);
    o.tol = rc.relative ? rc.tol * std::abs(o.expected) : rc.tol;
    o.pass = f.all_zero || (f.points >= 3 && std::abs(f.slope - o.expected) <= o.tol);
    return o;
}

}  // namespace rinv

#endif
