//! The five subcommands.

use serde_json::json;

use ripple_core::dispersion::{find_wilton_kappa, scan_nonresonance, small_divisor, DivisorTuple, PhysParams, RESONANCE_THRESHOLD};
use ripple_core::dno::{dn_principal_expand_with, DnSolver, DnoConfig};
use ripple_core::dynamics::{reversibility_check, vector_field_reversibility, IntegratorConfig, WaterWaves, WaveState};
use ripple_core::grid::{Flags, MeanConvention, PeriodicField, SpectralGrid};
use ripple_core::normalform::{apply_nf_transform, build_nf_map, nf_lifetime_compare, Direction, ModelSpec};
use ripple_core::symbols::CutoffProfile;
use ripple_core::Error;

use crate::config::{eta_flags, ExperimentConfig, Profile, Subcommand};
use crate::suites::symbol_suite;
use crate::{checks_csv, fmt_f64, Check, CmdError, RunOutput};

type CmdResult = Result<RunOutput, CmdError>;

fn csv_err(e: csv::Error) -> CmdError {
    CmdError::Failed(Error::Csv(e))
}

fn finish(mut out: RunOutput) -> CmdResult {
    let bytes = checks_csv(&out.checks).map_err(csv_err)?;
    out.files.insert(0, ("checks.csv".into(), bytes));
    Ok(out)
}

pub fn run_subcommand(cfg: &ExperimentConfig) -> CmdResult {
    match cfg.subcommand() {
        Subcommand::DnoTest => cmd_dno_test(cfg),
        Subcommand::ResonanceScan => cmd_resonance_scan(cfg),
        Subcommand::Evolve => cmd_evolve(cfg),
        Subcommand::NfLifetime => cmd_nf_lifetime(cfg),
        Subcommand::SymbolCheck => cmd_symbol_check(cfg),
    }
}

fn rel(a: &PeriodicField, b: &PeriodicField) -> ripple_core::Result<f64> {
    let d = a.sub(b)?.l2();
    let n = b.l2();
    Ok(if n == 0.0 { d } else { d / n })
}

/// Real, non-even potential with modes up to `M/4`.
fn test_potential(grid: &SpectralGrid) -> ripple_core::Result<PeriodicField> {
    let top = (grid.nyquist() / 2).max(1);
    PeriodicField::from_fn(
        grid,
        |x| (1..=top).map(|n| ((n as f64 * x).cos() + 0.5 * (n as f64 * x + 0.3).sin()) / (n * n) as f64).sum(),
        Flags::real().with_mean(MeanConvention::ModConstants),
    )
}

fn dno_checks(cfg: &ExperimentConfig, solver: &DnSolver, grid: &SpectralGrid) -> ripple_core::Result<(Vec<Check>, serde_json::Value)> {
    let sec = &cfg.dno;
    let mut checks = Vec::new();
    let psi = test_potential(grid)?;

    let flat = PeriodicField::zeros(grid, eta_flags());
    let (g0, _) = solver.dirichlet_neumann(&flat, &psi)?;
    let want = psi.apply_real_multiplier(|x| x * x.tanh()).project_mean_out();
    checks.push(Check::below("flat_exactness", rel(&g0, &want)?, sec.tolerance));

    for &c in &sec.constant_eta {
        let eta = PeriodicField::from_fn(grid, |_| c, Flags::real_even())?;
        let (gc, _) = solver.dirichlet_neumann(&eta, &psi)?;
        let want = psi.apply_real_multiplier(|x| x * (x * (1.0 + c)).tanh()).project_mean_out();
        checks.push(Check::below(&format!("constant_eta_{c}"), rel(&gc, &want)?, sec.tolerance));
    }

    let (eta, _) = cfg.data.fields(grid)?;
    let eta_odd = eta.add(&PeriodicField::from_fn(grid, |x| 0.3 * eta.linf() * (2.0 * x).sin(), Flags::real())?)?;
    let (g1, d1) = solver.dirichlet_neumann(&eta, &psi)?;
    checks.push(Check::below("zero_mean", d1.mean_before_projection, sec.tolerance));

    let psi2 = PeriodicField::from_fn(grid, |x| (2.0 * x).cos() - 0.3 * (3.0 * x).sin(), Flags::real())?;
    let (g2, _) = solver.dirichlet_neumann(&eta_odd, &psi2)?;
    let (g1b, _) = solver.dirichlet_neumann(&eta_odd, &psi)?;
    let a = psi.inner(&g2)?.re;
    let b = psi2.inner(&g1b)?.re;
    checks.push(Check::below("self_adjointness", (a - b).abs() / (psi.l2() * g2.l2()).max(f64::MIN_POSITIVE), sec.symmetry_tolerance));

    let even_psi = PeriodicField::from_fn(grid, |x| x.cos() + 0.2 * (3.0 * x).cos(), Flags::real_even().with_mean(MeanConvention::ModConstants))?;
    let (ge, _) = solver.dirichlet_neumann(&eta, &even_psi)?;
    let se = ge.check_symmetry();
    let sr = g1b.check_symmetry();
    let parity_ok = ge.flags().is_even && se.is_even && se.is_real && sr.is_real && g1b.flags().is_real;
    checks.push(Check::flag("parity_reality_flags", parity_ok, se.even_deviation.max(sr.real_deviation)));

    // self-convergence against doubled vertical and horizontal resolution
    let fine_j = DnSolver::new(grid, &DnoConfig { j: 2 * solver.config().j, ..solver.config().clone() })?;
    let (gj, _) = fine_j.dirichlet_neumann(&eta, &psi)?;
    let g2m = SpectralGrid::new(2 * grid.m())?;
    let fine_m = DnSolver::new(&g2m, solver.config())?;
    let (gm, _) = fine_m.dirichlet_neumann(&eta.resample(&g2m), &psi.resample(&g2m))?;
    let conv = rel(&g1, &gj)?.max(rel(&g1.resample(&g2m), &gm)?);
    checks.push(Check::below("grid_convergence", conv, sec.convergence_tolerance).with_detail(format!(
        "J {} -> {}, M {} -> {}",
        solver.config().j,
        2 * solver.config().j,
        grid.m(),
        g2m.m()
    )));

    // Neumann contraction at ‖η‖_{H^4} <= 0.05
    let h4 = eta.sobolev_norm(4.0)?;
    let eta_c = if h4 > 0.05 { eta.scale_real(0.05 / h4) } else { eta.clone() };
    let (_, dc) = solver.dirichlet_neumann(&eta_c, &psi)?;
    checks.push(Check::below("neumann_contraction", dc.contraction_ratio, 0.5).with_detail(format!("H4 norm {:.3e}", eta_c.sobolev_norm(4.0)?)));

    let cutoff = CutoffProfile::default();
    let mut residuals = Vec::new();
    for &n in &sec.principal_modes {
        let p = PeriodicField::from_fn(grid, |x| (n as f64 * x).cos(), Flags::real_even().with_mean(MeanConvention::ModConstants))?;
        let e = dn_principal_expand_with(solver, &eta, &p, &cutoff)?;
        residuals.push((n, e.diagnostics.relative_residual));
    }
    let decays = residuals.windows(2).all(|w| w[1].1 < w[0].1);
    let detail = residuals.iter().map(|(n, r)| format!("n={n}:{r:.3e}")).collect::<Vec<_>>().join(" ");
    checks.push(Check::flag("principal_residual_decay", decays, residuals.last().map_or(f64::NAN, |r| r.1)).with_detail(detail));

    let diag = json!({ "data_eta": d1, "contraction_probe": dc, "principal_residuals": residuals });
    Ok((checks, diag))
}

/// Flat exactness, constant-depth formula, symmetry, convergence and the
/// principal-expansion residual decay.
pub fn cmd_dno_test(cfg: &ExperimentConfig) -> CmdResult {
    let grid = SpectralGrid::new(cfg.grid.m)?;
    let mut out = RunOutput::default();
    let solver = match DnSolver::new(&grid, &cfg.grid.dno()) {
        Ok(s) => s,
        Err(e @ Error::Resolution(_)) => {
            out.checks.push(Check::failed("grid_convergence", e.to_string()));
            out.summary = json!({ "error": e.to_string() });
            return finish(out);
        }
        Err(e) => return Err(e.into()),
    };
    let (checks, diag) = dno_checks(cfg, &solver, &grid)?;
    out.checks = checks;
    out.files.push(("diagnostics.json".into(), serde_json::to_vec_pretty(&diag).map_err(|e| CmdError::Failed(e.into()))?));
    out.summary = diag;
    finish(out)
}

pub fn cmd_resonance_scan(cfg: &ExperimentConfig) -> CmdResult {
    let s = &cfg.scan;
    let report = scan_nonresonance(s.p_max, s.n_sum_max, &s.kappa_grid, s.budget)?;
    let mut wr = csv::Writer::from_writer(Vec::new());
    wr.write_record(["kappa", "min_abs_d", "worst_tuple", "worst_divisor", "fitted_n0", "fit_intercept", "tuples_scanned", "resonant_skipped"])
        .map_err(csv_err)?;
    for r in &report.rows {
        wr.write_record([
            fmt_f64(r.kappa),
            fmt_f64(r.min_abs_d),
            r.worst.label(),
            fmt_f64(r.worst_divisor),
            fmt_f64(r.fitted_n0),
            fmt_f64(r.fit_intercept),
            r.tuples_scanned.to_string(),
            r.resonant_skipped.to_string(),
        ])
        .map_err(csv_err)?;
    }
    let mut out = RunOutput::default();
    out.add_csv("resonance.csv", wr.into_inner().map_err(|e| csv_err(e.into_error().into()))?);

    let mut wr = csv::Writer::from_writer(Vec::new());
    wr.write_record(["a", "b", "kappa", "residual", "bracket_width", "divisor"]).map_err(csv_err)?;
    for &(a, b) in &s.wilton {
        match find_wilton_kappa(a, b)? {
            Some(root) => {
                let t = DivisorTuple::from_blocks(&[a, b], &[a + b])?;
                let d = small_divisor(&t, &PhysParams::unit(root.kappa)?);
                wr.write_record([a.to_string(), b.to_string(), fmt_f64(root.kappa), fmt_f64(root.residual), fmt_f64(root.bracket_width), fmt_f64(d)])
                    .map_err(csv_err)?;
                out.checks.push(Check::below(&format!("wilton_{a}_{b}_reverified"), d.abs(), RESONANCE_THRESHOLD));
            }
            None => {
                wr.write_record([a.to_string(), b.to_string(), String::new(), String::new(), String::new(), String::new()]).map_err(csv_err)?;
                out.checks.push(Check::flag(&format!("wilton_{a}_{b}_reverified"), true, f64::NAN).with_detail("no root in (1e-6, 1e3)"));
            }
        }
    }
    out.add_csv("wilton.csv", wr.into_inner().map_err(|e| csv_err(e.into_error().into()))?);
    out.checks.push(Check::flag("rows_per_kappa", report.rows.len() == s.kappa_grid.len(), report.rows.len() as f64));
    out.summary = json!({ "candidate_resonances": report.candidate_resonances, "symmetry_note": report.symmetry_note });
    finish(out)
}

fn field_csv(state: &WaveState) -> Result<Vec<u8>, csv::Error> {
    let mut wr = csv::Writer::from_writer(Vec::new());
    wr.write_record(["x", "eta", "psi"])?;
    let (e, p) = (state.eta.real_samples(), state.psi.real_samples());
    for (j, (a, b)) in e.iter().zip(&p).enumerate() {
        wr.write_record([fmt_f64(state.grid().x(j)), fmt_f64(*a), fmt_f64(*b)])?;
    }
    wr.into_inner().map_err(|e| e.into_error().into())
}

/// Trajectory observables, the final state, and the structural checks.
pub fn cmd_evolve(cfg: &ExperimentConfig) -> CmdResult {
    let grid = SpectralGrid::new(cfg.grid.m)?;
    let params = cfg.phys()?;
    let ww = WaterWaves::new(&grid, params, &cfg.grid.dno())?;
    let (eta, psi) = cfg.data.fields(&grid)?;
    let s0 = WaveState::new(eta, psi, params)?;
    let ic = &cfg.integrator;
    let icfg = IntegratorConfig { dt: ic.dt, cadence: ic.cadence, s: ic.s, ..Default::default() };
    let traj = ww.evolve(&s0, ic.t_final, &icfg)?;
    let mut out = RunOutput::default();
    let mut buf = Vec::new();
    traj.write_csv(&mut buf).map_err(CmdError::Failed)?;
    out.add_csv("trajectory.csv", buf);
    out.add_csv("final_state.csv", field_csv(traj.last()).map_err(csv_err)?);

    out.checks.push(Check::flag("completed", traj.stopped.is_none(), traj.last().t).with_detail(traj.stopped.clone().unwrap_or_default()));
    let per_time = if ic.t_final > 0.0 { traj.mass_drift / ic.t_final } else { traj.mass_drift };
    out.checks.push(Check::below("mass_drift_per_time", per_time, 1e-11));
    out.checks.push(Check::below("vector_field_reversibility", vector_field_reversibility(&ww, &s0)?, 1e-11));
    let even = traj.states.iter().all(|s| s.eta.check_symmetry().is_even && s.psi.check_symmetry().is_even);
    out.checks.push(Check::flag("parity_preserved", even, traj.states.len() as f64));
    let mut summary = json!({ "steps": traj.steps, "mass_drift": traj.mass_drift });
    if ic.reversibility && ic.t_final > 0.0 {
        let r = reversibility_check(&ww, &s0, ic.t_final, &icfg)?;
        out.checks.push(Check::flag("trajectory_reversibility", r.passed, r.defect).with_detail(format!("self-convergence {:.3e}", r.self_convergence)));
        summary["reversibility"] = json!(r);
    }
    out.summary = summary;
    finish(out)
}

/// Paired raw and transformed doubling times for the scalar normal-form model.
pub fn cmd_nf_lifetime(cfg: &ExperimentConfig) -> CmdResult {
    let nf = &cfg.nf;
    let kappa = cfg.params.kappa.expect("validated");
    let spec = ModelSpec::new(kappa, nf.p, nf.ell, nf.a, nf.n_c)?;
    let map = build_nf_map(&spec)?;
    let grid = SpectralGrid::new(cfg.grid.m)?;
    let shape = match cfg.data {
        Profile::SingleMode { n, .. } => Profile::SingleMode { n, eps: 1.0 },
        Profile::TwoMode { .. } => Profile::TwoMode { eps: 1.0 },
        Profile::RandomEven { seed, decay, n_max, .. } => Profile::RandomEven { seed, decay, eps: 1.0, n_max },
    };
    let (eta, _) = shape.fields(&grid)?;
    let profile = eta.with_flags(Flags::free().with_mean(MeanConvention::ZeroMean))?;
    let icfg = IntegratorConfig { dt: nf.dt, s: nf.s, ..Default::default() };
    let table = nf_lifetime_compare(&map, &profile, &nf.eps_list, nf.t_max, &icfg)?;

    let mut out = RunOutput::default();
    let mut buf = Vec::new();
    table.write_csv(&mut buf).map_err(CmdError::Failed)?;
    out.add_csv("nf_lifetime.csv", buf);
    let mut buf = Vec::new();
    map.write_csv(&mut buf).map_err(CmdError::Failed)?;
    out.add_csv("nf_map.csv", buf);

    let eps = nf.eps_list.iter().copied().fold(0.0, f64::max);
    let u = profile.scale_real(eps);
    let roundtrip = apply_nf_transform(&apply_nf_transform(&u, &map, Direction::Forward)?, &map, Direction::Inverse)?;
    out.checks.push(Check::below("transform_roundtrip", roundtrip.distance(&u)? / u.l2(), 1e-11));
    out.checks.push(Check::flag("rows_complete", table.rows.len() == nf.eps_list.len(), table.rows.len() as f64));
    let gap = table.slope_gap.unwrap_or(f64::NAN);
    out.checks.push(Check::above("slope_gap", gap, 0.8).informational().with_detail(if table.slope_gap.is_none() {
        "censored rows leave no slope"
    } else {
        ""
    }));
    out.summary = json!({ "min_divisor": map.min_divisor, "slope_raw": table.slope_raw, "slope_transformed": table.slope_transformed, "rows": table.rows });
    finish(out)
}

pub fn cmd_symbol_check(cfg: &ExperimentConfig) -> CmdResult {
    let mut out = RunOutput { checks: symbol_suite(&cfg.symbols)?, ..Default::default() };
    out.summary = json!({ "pairs": cfg.symbols.pairs, "seed": cfg.symbols.seed });
    finish(out)
}
