// rinv_cli: verify | reconstruct | sweep
//
// Exit codes: 0 success, 1 scientific failure, 2 usage or configuration error.

#include "rinv/config.hpp"
#include "rinv/io.hpp"
#include "rinv/verify.hpp"

#include <CLI11.hpp>

#include <iostream>

using namespace rinv;
using nlohmann::json;

namespace {

constexpr int kOk = 0, kScientific = 1, kUsage = 2;

struct Common {
    std::string config;
    std::string out;
    int workers = 0;
    std::vector<std::string> overrides;
};

json load_document(const Common& o) {
    std::ifstream f(o.config);
    if (!f) fail(ErrorKind::config, "cannot read config file " + o.config);
    json doc = json::parse(f, nullptr, false, true);
    if (doc.is_discarded()) fail(ErrorKind::config, o.config + ": not valid JSON");
    if (!doc.is_object()) fail(ErrorKind::config, o.config + ": top level must be an object");
    for (const std::string& s : o.overrides) apply_override(doc, s);
    return doc;
}

RunConfig load(const Common& o) {
    RunConfig c = parse_config(load_document(o));
    if (!o.out.empty()) c.output = o.out;
    if (o.workers > 0) c.workers = o.workers;
    return c;
}

json constants_json(const ModelConstants& mc) { return {{"K_norm", mc.K_norm}, {"L_r", mc.L_r}, {"C_Q", mc.C_Q}}; }

json meta_json(const RunConfig& c, const ModelConstants& mc, const RegConfig& reg, const Problem& p) {
    json m;
    m["version"] = RINV_VERSION;
    m["config_hash"] = config_hash(c.source);
    m["config"] = c.source;
    m["constants"] = constants_json(mc);
    m["c_tcr"] = c_tcr_bound(reg.p, reg.C_conj_growth);
    m["Cbar"] = reg.Cbar;
    m["C_P"] = reg.C_P;
    m["psi"] = reg.psi.describe();
    m["problem"] = p.info;
    return m;
}

RegConfig resolved_reg(const RunConfig& c, const Problem& p, ModelConstants& mc) {
    mc = estimate_constants(*p.model, c.constants_radius, c.constants_samples);
    RegConfig reg = c.reg;
    reg.psi = p.psi;
    return resolve_config(reg, mc, c.scheme);
}

// ---------------------------------------------------------------- verify

int cmd_verify(const Common& o) {
    RunConfig c = load(o);
    Problem p = build_problem(c);
    std::vector<CheckRow> rows = verify_battery(*p.model, c.constants_radius, c.seed);
    if (p.testbed) {
        double v = p.testbed->vsc_max_violation;
        rows.push_back({"vsc_audit", v <= 1e-12, v, ""});
    }
    if (p.info.contains("aux")) {
        bool ref = p.info["aux"] == "reference";
        double used = p.info[ref ? "aux_residual_reference" : "aux_residual_current"].get<double>();
        rows.push_back({"aux_selection_" + p.info["aux"].get<std::string>(), used <= ri_tolerance(*p.model), used, ""});
    }
    bool ok = true;
    std::cout << "name,status,value\n";
    for (const CheckRow& r : rows) {
        std::cout << r.name << ',' << (r.pass ? "pass" : "FAIL") << ',' << fmt17(r.value) << '\n';
        ok = ok && r.pass;
    }
    if (!ok) {
        std::cerr << "failing checks:\n";
        for (const CheckRow& r : rows)
            if (!r.pass) std::cerr << "  " << r.name << ',' << fmt17(r.value) << '\n';
    }
    return ok ? kOk : kScientific;
}

// ------------------------------------------------------------ reconstruct

int cmd_reconstruct(const Common& o) {
    RunConfig c = load(o);
    Problem p = build_problem(c);
    ModelConstants mc;
    RegConfig reg = resolved_reg(c, p, mc);

    Vector y = p.model->forward(p.x_true);
    Vector yd = c.delta > 0.0 ? add_noise(y, c.delta, c.seed) : y;
    ReconResult R = reconstruct(*p.model, reg, c.scheme, yd, c.delta, &p.x_true);
    SweepRow obs = observe(*p.model, p.x_true, R);

    std::filesystem::path dir = c.output;
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) fail(ErrorKind::io, "cannot create " + dir.string() + ": " + ec.message());

    json doc = to_json(R);
    doc["scheme"] = to_string(c.scheme);
    doc["delta"] = c.delta;
    doc["seed"] = c.seed;
    doc["observables"] = {{"err_breg", obs.err_breg}, {"err_norm", obs.err_norm}, {"residual_K", obs.residual_K},
                          {"norm_Px", obs.norm_Px},   {"Q_gap", obs.Q_gap}};
    doc["meta"] = meta_json(c, mc, reg, p);
    write_text(dir / "result.json", doc.dump(2) + "\n");
    write_vector_bin(dir / "x.bin", R.x);
    write_vector_bin(dir / "r_hat.bin", R.r_hat);

    Vector ft = p.field(p.x_true), fr = p.field(R.x);
    if (p.grid) {
        write_field_csv(dir / "field.csv", *p.grid, {{"truth", ft}, {"reconstruction", fr}});
        write_text(dir / "field.svg", field_pair_svg(*p.grid, ft, fr));
    } else {
        write_text(dir / "profile.svg", profile_pair_svg(ft, fr));
    }

    bool ok = R.status == "converged" && R.eta_certified();
    std::cout << "status " << R.status << ", alpha " << fmt17(R.alpha) << ", err_norm " << fmt17(obs.err_norm)
              << ", residual_K " << fmt17(obs.residual_K) << '\n';
    if (!ok) {
        std::cerr << "reconstruction failed certification:\n";
        for (auto& [k, v] : R.certificates) std::cerr << "  " << k << " = " << fmt17(v) << '\n';
    }
    return ok ? kOk : kScientific;
}

// ------------------------------------------------------------------ sweep

int cmd_sweep(const Common& o) {
    RunConfig c = load(o);
    require(c.deltas.size() >= 3, ErrorKind::precondition,
            "sweep needs at least 3 noise levels, got " + std::to_string(c.deltas.size()));
    Problem p = build_problem(c);
    ModelConstants mc;
    RegConfig reg = resolved_reg(c, p, mc);

    SweepOptions so;
    so.scheme = c.scheme;
    so.deltas = c.deltas;
    so.seeds = c.seeds;
    so.workers = c.workers;
    SweepReport rep = delta_sweep(*p.model, p.x_true, reg, so);

    json meta = meta_json(c, mc, reg, p);
    json checks = json::array();
    bool ok = true;
    for (const RateCheck& rc : c.checks) {
        CheckOutcome k = evaluate_check(rc, reg, c.deltas, rep);
        ok = ok && k.pass;
        checks.push_back({{"metric", k.metric},
                          {"slope", k.slope},
                          {"expected", k.expected},
                          {"tol", k.tol},
                          {"all_zero", k.all_zero},
                          {"pass", k.pass}});
        std::cout << k.metric << ',' << (k.pass ? "pass" : "FAIL") << ",slope=" << fmt17(k.slope)
                  << ",expected=" << fmt17(k.expected) << ",tol=" << fmt17(k.tol) << (k.all_zero ? ",all_zero" : "")
                  << '\n';
    }
    int violations = 0;
    for (const SweepRow& r : rep.rows) violations += r.eta_violation > 0.0;
    meta["checks"] = checks;
    meta["eta_violations"] = violations;
    emit_report(rep, c.output, meta);
    if (violations > 0) {
        std::cerr << violations << " runs violate the eta certificate\n";
        ok = false;
    }
    return ok ? kOk : kScientific;
}

int exit_code_for(const Error& e) {
    switch (e.kind()) {
        case ErrorKind::config:
        case ErrorKind::precondition:
        case ErrorKind::io:
            return kUsage;
        default:
            return kScientific;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"rinv: regularization of range invariant inverse problems"};
    app.set_version_flag("--version", std::string(RINV_VERSION));
    app.require_subcommand(1);

    Common o;
    auto add_common = [&](CLI::App* sub, bool with_out) {
        sub->add_option("--config", o.config, "JSON run configuration")->required()->check(CLI::ExistingFile);
        if (with_out) sub->add_option("--out", o.out, "output directory (overrides the config)");
        sub->add_option("--workers", o.workers, "worker threads for sweeps")->check(CLI::PositiveNumber);
        sub->add_option("--override", o.overrides, "dotted key=value applied to the config")->take_all();
    };
    CLI::App* verify = app.add_subcommand("verify", "run the invariant battery for the configured model");
    CLI::App* recon = app.add_subcommand("reconstruct", "single reconstruction with certificates");
    CLI::App* sweep = app.add_subcommand("sweep", "noise sweep with rate fits");
    add_common(verify, false);
    add_common(recon, true);
    add_common(sweep, true);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (*verify) return cmd_verify(o);
        if (*recon) return cmd_reconstruct(o);
        return cmd_sweep(o);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code_for(e);
    } catch (const json::exception& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kScientific;
    }
}
