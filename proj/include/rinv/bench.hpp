// rinv/bench.hpp
//
// Synthetic problems, noise, delta sweeps, log-log fits and report files.

#ifndef RINV_BENCH_HPP
#define RINV_BENCH_HPP

#include "rinv/solve.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

namespace rinv {

// ------------------------------------------------------------ diagonal testbed

// max over ||A h||^2 <= t of -2<x, h> - b|h|^2 for diagonal A = diag(s);
// the optimal h = -(b + lambda A^2)^{-1} x.
inline double vsc_sup(const Vector& s, const Vector& x, double b, double t) {
    auto constraint = [&](double ll) {
        double l = std::exp(ll);
        return (s.array().square() * (x.array() / (b + l * s.array().square())).square()).sum();
    };
    double lo = -60.0, hi = 80.0;
    if (constraint(lo) <= t) hi = lo;
    for (int it = 0; it < 200 && hi - lo > 1e-13; ++it) {
        double mid = 0.5 * (lo + hi);
        (constraint(mid) > t ? lo : hi) = mid;
    }
    double l = std::exp(hi);
    Eigen::ArrayXd d = b + l * s.array().square();
    return (x.array().square() * (2.0 / d - b / d.square())).sum();
}

struct DiagonalTestbed {
    Index n = 0;
    double a = 1.0;
    double b_decay = 1.0;
    double b = 0.75;
    double mu = 0.0;          // oracle exponent
    double mu_spectral = 0.0; // nu-to-mu map, for the audit
    double vsc_constant = 0.0;
    double vsc_max_violation = 0.0;
    int vsc_samples = 0;
    std::vector<std::pair<double, double>> audit;  // (t, sup) samples behind mu
    Vector s, q_true;
    std::shared_ptr<CanonicalRelaxation> model;
    IndexFunction psi;

    Vector x_true() const {
        Vector x = Vector::Zero(2 * n);
        x.head(n) = q_true;
        return x;
    }
    Vector y_exact() const { return model->forward(x_true()); }
};

inline std::tuple<double, double, double> fit_loglog(const std::vector<std::pair<double, double>>& pts);

// VSC samples: scaled Lagrange-optimal directions and random perturbations.
inline double vsc_check(const DiagonalTestbed& tb, int samples, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(0.0, 1.0);
    std::uniform_real_distribution<double> ul(-10.0, 0.0);
    double worst = -kInf;
    const Eigen::ArrayXd s2 = tb.s.array().square();
    for (int k = 0; k < samples; ++k) {
        Vector h(tb.n);
        if (k % 2 == 0) {
            double l = std::exp(std::log(10.0) * (ul(rng) + 5.0) * 1.5);
            h = -(tb.q_true.array() / (tb.b + l * s2)).matrix() * std::pow(10.0, ul(rng) / 10.0);
        } else {
            for (Index i = 0; i < tb.n; ++i) h[i] = nd(rng) * tb.q_true[i];
            h *= std::pow(10.0, ul(rng) / 2.0);
        }
        double lhs = -2.0 * tb.q_true.dot(h) - tb.b * h.squaredNorm();
        double t = (tb.s.array() * h.array()).matrix().squaredNorm();
        double rhs = tb.vsc_constant * std::pow(t, tb.mu);
        worst = std::max(worst, (lhs - rhs) / std::max(1e-300, rhs));
    }
    return worst;
}

inline DiagonalTestbed make_diagonal_testbed(Index n, double a, double b_decay, double b = 0.75, int samples = 10000,
                                             unsigned seed = 5) {
    require(n >= 8, ErrorKind::precondition, "testbed needs n >= 8");
    require(a > 0.0, ErrorKind::config, "singular value decay must be positive");
    require(b_decay > 0.5, ErrorKind::config, "truth decay must exceed 1/2");
    DiagonalTestbed tb;
    tb.n = n;
    tb.a = a;
    tb.b_decay = b_decay;
    tb.b = b;
    tb.s.resize(n);
    tb.q_true.resize(n);
    for (Index i = 0; i < n; ++i) {
        tb.s[i] = std::pow(double(i + 1), -a);
        tb.q_true[i] = std::pow(double(i + 1), -b_decay);
    }
    double nu = std::min((2.0 * b_decay - 1.0) / (4.0 * a), 0.5);
    tb.mu_spectral = 2.0 * nu / (2.0 * nu + 1.0);

    // exponent of the optimal VSC function over the resolved range
    for (int k = 0; k <= 8; ++k) {
        double t = std::pow(10.0, -6.0 + 0.5 * k);
        tb.audit.emplace_back(t, vsc_sup(tb.s, tb.q_true, b, t));
    }
    tb.mu = std::get<0>(fit_loglog(tb.audit));
    require(tb.mu > 0.0 && tb.mu < 1.0, ErrorKind::config, "decay parameters give a VSC exponent outside (0,1)");
    double C = 0.0;
    for (int k = 0; k <= 48; ++k) {
        double t = std::pow(10.0, -12.0 + 0.25 * k);
        C = std::max(C, vsc_sup(tb.s, tb.q_true, b, t) / std::pow(t, tb.mu));
    }
    // beyond t = 1 the supremum saturates at |x|^2 / b
    C = std::max(C, tb.q_true.squaredNorm() / b);
    tb.vsc_constant = C;
    tb.psi = IndexFunction::hoelder(tb.mu);

    SparseMatrix A(n, n);
    std::vector<Triplet> trip;
    for (Index i = 0; i < n; ++i) trip.emplace_back(i, i, tb.s[i]);
    A.setFromTriplets(trip.begin(), trip.end());
    auto F = std::make_shared<LinearForwardMap>(make_sparse(A));
    tb.model = canonical_relaxation(F, Vector::Zero(n));
    tb.vsc_samples = samples;
    tb.vsc_max_violation = vsc_check(tb, samples, seed);
    return tb;
}

// --------------------------------------------------------------------- noise

inline Vector add_noise(const Vector& y, double delta, std::uint64_t seed) {
    require(delta > 0.0, ErrorKind::domain, "noise level must be positive");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(0.0, 1.0);
    Vector g(y.size());
    double gn = 0.0;
    while (gn == 0.0) {
        for (Index i = 0; i < g.size(); ++i) g[i] = nd(rng);
        gn = g.norm();
    }
    return y + (delta / gn) * g;
}

// ---------------------------------------------------------------- regression

inline std::tuple<double, double, double> fit_loglog(const std::vector<std::pair<double, double>>& pts) {
    require(pts.size() >= 3, ErrorKind::precondition, "log-log fit needs at least 3 points");
    double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
    for (auto [x, y] : pts) {
        require(x > 0.0 && y > 0.0, ErrorKind::domain, "log-log fit needs positive values");
        double lx = std::log(x), ly = std::log(y);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
        syy += ly * ly;
    }
    double n = double(pts.size());
    double cxx = sxx - sx * sx / n, cxy = sxy - sx * sy / n, cyy = syy - sy * sy / n;
    require(cxx > 0.0, ErrorKind::domain, "log-log fit needs distinct abscissae");
    double slope = cxy / cxx;
    double intercept = (sy - slope * sx) / n;
    double r2 = cyy > 0.0 ? (cxy * cxy) / (cxx * cyy) : 1.0;
    return {slope, intercept, r2};
}

// ------------------------------------------------------------------- sweeps

struct SweepRow {
    double delta = 0.0;
    std::uint64_t seed = 0;
    Scheme scheme = Scheme::variational;
    double err_breg = 0.0, err_norm = 0.0, residual_K = 0.0, norm_Px = 0.0, Q_gap = 0.0;
    double alpha = 0.0;
    int n_stop = 0;
    std::string status;
    double eta_violation = 0.0;
    bool has_certificate = false;
};

struct Fit {
    double slope = 0.0, intercept = 0.0, r2 = 0.0;
    bool all_zero = false;  // metric vanishes identically
    int points = 0;
};

struct SweepReport {
    std::vector<SweepRow> rows;
    std::map<std::string, Fit> fitted;
    std::map<std::string, std::vector<std::pair<double, double>>> medians;
};

struct SweepOptions {
    Scheme scheme = Scheme::variational;
    std::vector<double> deltas;
    std::vector<std::uint64_t> seeds;
    int workers = 1;
};

inline bool row_valid(const SweepRow& r) { return r.status == "converged"; }

// Observables of a reconstruction against a known truth.
inline SweepRow observe(const RangeInvariantModel& m, const Vector& x_true, const ReconResult& R) {
    SweepRow row;
    const RegNorm& reg = m.reg();
    Vector xh = m.apply_ImP(m.r_inverse(R.r_hat));
    Vector d = reg.readout->apply(xh) - reg.readout->apply(m.apply_ImP(x_true));
    row.err_breg = d.dot(reg.metric(d));
    row.err_norm = d.norm();
    row.residual_K = m.K().apply(R.r_hat - m.r(x_true)).norm();
    row.norm_Px = m.apply_P(R.x).norm();
    row.Q_gap = (m.r(R.x) - R.r_hat).norm();
    row.alpha = R.alpha;
    row.n_stop = R.n_stop;
    row.status = R.status;
    auto it = R.certificates.find("eta_violation");
    if (it != R.certificates.end()) {
        row.has_certificate = true;
        row.eta_violation = it->second;
    }
    return row;
}

inline std::uint64_t row_seed(std::size_t delta_index, std::uint64_t seed) {
    return seed * 1000003ULL + 7919ULL * delta_index + 1ULL;
}

inline double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    std::size_t k = v.size();
    return k % 2 ? v[k / 2] : 0.5 * (v[k / 2 - 1] + v[k / 2]);
}

inline void fit_report(SweepReport& rep) {
    static const char* names[] = {"err_breg", "err_norm", "residual_K", "norm_Px", "Q_gap"};
    std::map<double, std::vector<const SweepRow*>, std::greater<>> by_delta;
    for (const SweepRow& r : rep.rows)
        if (row_valid(r)) by_delta[r.delta].push_back(&r);
    require(by_delta.size() >= 3, ErrorKind::precondition, "fewer than 3 valid noise levels for rate fits");
    for (const char* nm : names) {
        std::vector<std::pair<double, double>> pts;
        bool all_zero = true;
        for (auto& [delta, rows] : by_delta) {
            std::vector<double> v;
            for (const SweepRow* r : rows) {
                std::string k = nm;
                double val = k == "err_breg" ? r->err_breg
                           : k == "err_norm" ? r->err_norm
                           : k == "residual_K" ? r->residual_K
                           : k == "norm_Px" ? r->norm_Px
                                            : r->Q_gap;
                v.push_back(val);
            }
            double med = median(v);
            // round-off level values count as zero
            if (med <= 1e-10 * delta) med = 0.0;
            if (med != 0.0) all_zero = false;
            // Bregman error is compared against delta^2
            double abscissa = std::string(nm) == "err_breg" ? delta * delta : delta;
            if (med > 0.0) pts.emplace_back(abscissa, med);
        }
        Fit f;
        if (all_zero) {
            f.all_zero = true;
            rep.fitted[nm] = f;
            continue;
        }
        rep.medians[nm] = pts;
        if (pts.size() < 3) continue;
        auto [s, c, r2] = fit_loglog(pts);
        f.slope = s;
        f.intercept = c;
        f.r2 = r2;
        f.points = int(pts.size());
        rep.fitted[nm] = f;
    }
}

inline SweepReport delta_sweep(const RangeInvariantModel& m, const Vector& x_true, const RegConfig& cfg,
                               const SweepOptions& opt) {
    require(opt.deltas.size() >= 3, ErrorKind::precondition, "a sweep needs at least 3 noise levels");
    require(!opt.seeds.empty(), ErrorKind::precondition, "a sweep needs at least one seed");
    const Vector y = m.forward(x_true);
    std::vector<std::pair<std::size_t, std::uint64_t>> jobs;
    for (std::size_t i = 0; i < opt.deltas.size(); ++i)
        for (std::uint64_t s : opt.seeds) jobs.emplace_back(i, s);
    std::vector<SweepRow> rows(jobs.size());
    std::atomic<std::size_t> next{0};
    auto work = [&]() {
        for (std::size_t j; (j = next.fetch_add(1)) < jobs.size();) {
            auto [di, seed] = jobs[j];
            double delta = opt.deltas[di];
            SweepRow row;
            try {
                Vector yd = add_noise(y, delta, row_seed(di, seed));
                ReconResult R = reconstruct(m, cfg, opt.scheme, yd, delta, &x_true);
                row = observe(m, x_true, R);
            } catch (const Error& e) {
                row.status = std::string("failed:") + to_string(e.kind());
            }
            row.delta = delta;
            row.seed = seed;
            row.scheme = opt.scheme;
            rows[j] = row;
        }
    };
    int k = std::max(1, std::min<int>(opt.workers, int(jobs.size())));
    std::vector<std::thread> pool;
    for (int t = 1; t < k; ++t) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();

    SweepReport rep;
    rep.rows = std::move(rows);
    std::stable_sort(rep.rows.begin(), rep.rows.end(), [](const SweepRow& a, const SweepRow& b) {
        return a.delta != b.delta ? a.delta > b.delta : a.seed < b.seed;
    });
    fit_report(rep);
    return rep;
}

// ------------------------------------------------------------------- reports

inline std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string sweep_csv(const SweepReport& rep) {
    std::ostringstream os;
    os << "delta,seed,scheme,err_breg,err_norm,residual_K,norm_Px,Q_gap,alpha,n_stop,status\n";
    for (const SweepRow& r : rep.rows)
        os << fmt17(r.delta) << ',' << r.seed << ',' << to_string(r.scheme) << ',' << fmt17(r.err_breg) << ','
           << fmt17(r.err_norm) << ',' << fmt17(r.residual_K) << ',' << fmt17(r.norm_Px) << ',' << fmt17(r.Q_gap)
           << ',' << fmt17(r.alpha) << ',' << r.n_stop << ',' << r.status << '\n';
    return os.str();
}

inline std::string rates_svg(const SweepReport& rep) {
    const double W = 640, H = 480, L = 70, R = 150, T = 30, B = 50;
    double xmin = kInf, xmax = -kInf, ymin = kInf, ymax = -kInf;
    for (auto& [nm, pts] : rep.medians)
        for (auto [x, y] : pts) {
            xmin = std::min(xmin, std::log10(x));
            xmax = std::max(xmax, std::log10(x));
            ymin = std::min(ymin, std::log10(y));
            ymax = std::max(ymax, std::log10(y));
        }
    if (!(xmax > xmin)) xmax = xmin + 1, xmin -= 1;
    if (!(ymax > ymin)) ymax = ymin + 1, ymin -= 1;
    auto px = [&](double lx) { return L + (lx - xmin) / (xmax - xmin) * (W - L - R); };
    auto py = [&](double ly) { return H - B - (ly - ymin) / (ymax - ymin) * (H - T - B); };
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};
    char buf[256];
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
    os << "<rect x=\"0\" y=\"0\" width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
    std::snprintf(buf, sizeof buf, "<rect x=\"%.2f\" y=\"%.2f\" width=\"%.2f\" height=\"%.2f\" fill=\"none\" stroke=\"black\"/>\n",
                  L, T, W - L - R, H - T - B);
    os << buf;
    std::snprintf(buf, sizeof buf, "<text x=\"%.2f\" y=\"%.2f\" font-size=\"12\">log10 delta (delta^2 for err_breg)</text>\n",
                  L, H - 15);
    os << buf;
    std::snprintf(buf, sizeof buf, "<text x=\"10\" y=\"%.2f\" font-size=\"12\">log10 metric</text>\n", T - 10);
    os << buf;
    int ci = 0;
    for (auto& [nm, pts] : rep.medians) {
        const char* col = colors[ci % 5];
        for (auto [x, y] : pts) {
            std::snprintf(buf, sizeof buf, "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"3\" fill=\"%s\"/>\n", px(std::log10(x)),
                          py(std::log10(y)), col);
            os << buf;
        }
        auto it = rep.fitted.find(nm);
        if (it != rep.fitted.end() && it->second.points >= 3) {
            const Fit& f = it->second;
            double x0 = std::log10(pts.back().first), x1 = std::log10(pts.front().first);
            auto fy = [&](double lx) { return (f.intercept + f.slope * lx * std::log(10.0)) / std::log(10.0); };
            std::snprintf(buf, sizeof buf, "<line x1=\"%.2f\" y1=\"%.2f\" x2=\"%.2f\" y2=\"%.2f\" stroke=\"%s\"/>\n",
                          px(x0), py(fy(x0)), px(x1), py(fy(x1)), col);
            os << buf;
        }
        std::snprintf(buf, sizeof buf, "<text x=\"%.2f\" y=\"%.2f\" font-size=\"12\" fill=\"%s\">%s slope %.3f</text>\n",
                      W - R + 8, T + 16.0 * (ci + 1), col, nm.c_str(),
                      it != rep.fitted.end() ? it->second.slope : 0.0);
        os << buf;
        ++ci;
    }
    os << "</svg>\n";
    return os.str();
}

inline void write_text(const std::filesystem::path& p, const std::string& s) {
    std::ofstream f(p, std::ios::binary);
    if (!f) fail(ErrorKind::io, "cannot open " + p.string() + " for writing");
    f << s;
    if (!f) fail(ErrorKind::io, "write failed for " + p.string());
}

inline nlohmann::json fits_json(const SweepReport& rep) {
    nlohmann::json j = nlohmann::json::object();
    for (auto& [nm, f] : rep.fitted)
        j[nm] = {{"slope", f.slope}, {"intercept", f.intercept}, {"r2", f.r2}, {"points", f.points},
                 {"all_zero", f.all_zero}};
    return j;
}

// Writes sweep.csv, rates.svg (when any fit exists) and meta.json.
inline void emit_report(const SweepReport& rep, const std::filesystem::path& dir, nlohmann::json meta = {}) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) fail(ErrorKind::io, "cannot create " + dir.string() + ": " + ec.message());
    write_text(dir / "sweep.csv", sweep_csv(rep));
    if (meta.is_null()) meta = nlohmann::json::object();
    meta["fits"] = fits_json(rep);
    bool any = false;
    for (auto& [nm, f] : rep.fitted) any = any || f.points >= 3;
    if (any)
        write_text(dir / "rates.svg", rates_svg(rep));
    else
        meta["note"] = "no fitted metric, svg skipped";
    write_text(dir / "meta.json", meta.dump(2) + "\n");
}

}  // namespace rinv

#endif
