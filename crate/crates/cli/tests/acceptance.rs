//! Desk-scale acceptance run: one PASS/FAIL line per criterion.
//!
//! Sub-checks marked `expected_fail` are reported honestly but do not make
//! the process exit non-zero; every other sub-check is gating.

use std::f64::consts::PI;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ripple_cli::cmd_dno_test;
use ripple_cli::config::{ExperimentConfig, Profile, Subcommand};
use ripple_cli::suites::{composition_slope, conjugation_trend, flow_vs_composition, identity_defects};
use ripple_core::dispersion::{find_wilton_kappa, m_kappa, reduce_g, small_divisor, DivisorTuple, PhysParams};
use ripple_core::dno::{fundamental_solutions, DnSolver, DnoConfig};
use ripple_core::dynamics::{cfl_limit, linear_frequency, reversibility_check, vector_field_reversibility, IntegratorConfig, WaterWaves, WaveState};
use ripple_core::grid::{Flags, MeanConvention, PeriodicField, SpectralGrid};
use ripple_core::normalform::{action_check, build_nf_map, flattening_profile, nf_lifetime_compare, order_bump, zeta_of_eta, ModelSpec};
use ripple_core::symbols::CutoffProfile;
use ripple_core::C64;

const I: C64 = C64::new(0.0, 1.0);

struct Sub {
    name: String,
    ok: bool,
    gating: bool,
    detail: String,
}

#[derive(Default)]
struct Criterion {
    subs: Vec<Sub>,
}

impl Criterion {
    fn check(&mut self, name: &str, ok: bool, detail: String) {
        self.subs.push(Sub { name: name.into(), ok, gating: true, detail });
    }

    /// Reported but known not to be reachable at desk scale.
    fn expected_fail(&mut self, name: &str, ok: bool, detail: String) {
        self.subs.push(Sub { name: name.into(), ok, gating: false, detail });
    }

    fn passed(&self) -> bool {
        self.subs.iter().all(|s| s.ok)
    }

    fn gating_failed(&self) -> bool {
        self.subs.iter().any(|s| s.gating && !s.ok)
    }
}

fn report(k: usize, title: &str, c: &Criterion, secs: f64) -> bool {
    println!("criterion {k:>2} {}: {title} ({secs:.1} s)", if c.passed() { "PASS" } else { "FAIL" });
    for s in &c.subs {
        let tag = match (s.ok, s.gating) {
            (true, _) => "ok",
            (false, true) => "FAIL",
            (false, false) => "FAIL (not gating)",
        };
        println!("    {:<34} {:<18} {}", s.name, tag, s.detail);
    }
    c.gating_failed()
}

fn grid(m: usize) -> SpectralGrid {
    SpectralGrid::new(m).unwrap()
}

/// Real potential with random coefficients on `1 <= n <= n_max`.
fn random_potential(g: &SpectralGrid, n_max: i64, seed: u64) -> PeriodicField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut modes = Vec::new();
    for n in 1..=n_max {
        let z = C64::from_polar(rng.gen_range(0.5..1.0) / n as f64, rng.gen_range(0.0..2.0 * PI));
        modes.push((n, z));
        modes.push((-n, z.conj()));
    }
    PeriodicField::from_modes(g, &modes, Flags::real().with_mean(MeanConvention::ModConstants)).unwrap()
}

fn criterion_1() -> Criterion {
    let mut c = Criterion::default();
    let g = grid(128);
    let t0 = Instant::now();
    let solver = DnSolver::new(&g, &DnoConfig { j: 64, ..DnoConfig::default() }).unwrap();
    let setup = t0.elapsed().as_secs_f64();
    let psi = random_potential(&g, 32, 11);
    let mut worst_err = 0.0f64;
    let mut worst_time = 0.0f64;
    for &depth in &[0.0, -0.2, -0.1, 0.05, 0.2] {
        let eta = PeriodicField::from_fn(&g, |_| depth, Flags::real_even()).unwrap();
        let t = Instant::now();
        let (out, _) = solver.dirichlet_neumann(&eta, &psi).unwrap();
        worst_time = worst_time.max(t.elapsed().as_secs_f64());
        // coefficient-wise n tanh(n(1+c))
        let (mut num, mut den) = (0.0, 0.0);
        for n in -63..=63i64 {
            let k = n.unsigned_abs() as f64;
            let want = psi.mode(n) * k * (k * (1.0 + depth)).tanh();
            num += (out.mode(n) - want).norm_sqr();
            den += want.norm_sqr();
        }
        worst_err = worst_err.max((num / den).sqrt());
    }
    c.check("relative error < 1e-10", worst_err < 1e-10, format!("{worst_err:.2e}"));
    c.check("setup + solve < 5 s per case", setup + worst_time < 5.0, format!("setup {setup:.2} s, solve {worst_time:.3} s"));
    c
}

fn criterion_2() -> Criterion {
    let mut c = Criterion::default();
    let cfg = ExperimentConfig::load(Some(r#"{"params": {"kappa": 1.0}, "grid": {"m": 64, "j": 32}}"#), &[], Subcommand::DnoTest).unwrap();
    let out = cmd_dno_test(&cfg).unwrap();
    for name in ["zero_mean", "self_adjointness", "parity_reality_flags", "grid_convergence", "neumann_contraction"] {
        match out.checks.iter().find(|k| k.name == name) {
            Some(k) => c.check(name, k.passed, format!("{:.2e} {}", k.value, k.rule)),
            None => c.check(name, false, "missing".into()),
        }
    }
    c
}

/// `(∂² − 2iaξ∂ − (1+b)ξ²)u` by centred differences, extrapolated twice.
fn ode_residual(u: &dyn Fn(f64) -> C64, a: f64, b: f64, xi: f64, z: f64, h: f64) -> C64 {
    let raw = |h: f64| {
        let d2 = (u(z + h) - 2.0 * u(z) + u(z - h)) / (h * h);
        let d1 = (u(z + h) - u(z - h)) / (2.0 * h);
        d2 - 2.0 * I * a * xi * d1 - (1.0 + b) * xi * xi * u(z)
    };
    let (r1, r2, r3) = (raw(h), raw(h / 2.0), raw(h / 4.0));
    let s1 = (4.0 * r2 - r1) / 3.0;
    let s2 = (4.0 * r3 - r2) / 3.0;
    (16.0 * s2 - s1) / 15.0
}

fn criterion_3() -> Criterion {
    let mut c = Criterion::default();
    let (mut ode, mut bc, mut wr) = (0.0f64, 0.0f64, 0.0f64);
    for &ep in &[0.0, 0.1, -0.4, 0.8] {
        for &xi in &[0.5, 1.0, -3.0, 8.0, 20.0] {
            let d = fundamental_solutions(ep, xi).unwrap();
            let q = 1.0 + ep * ep;
            let (a, b) = (ep / q, -ep * ep / q);
            let cc = (1.0 + b - a * a).sqrt() - 1.0;
            let h = (0.1 / xi.abs()).min(0.02);
            let jb = 1.0 + xi * xi;
            for i in 1..20 {
                let z = -1.0 + i as f64 / 20.0;
                ode = ode.max(ode_residual(&|z| d.w_plus(z), a, b, xi, z, h).norm() / jb);
                ode = ode.max(ode_residual(&|z| d.w_minus(z), a, b, xi, z, h).norm() / jb);
                // e^{i(2z+1)aξ} / (cosh k (1 − i a/(1+c) tanh k)), k = ξ(1+c)
                let k = xi * (1.0 + cc);
                let want = C64::from_polar(1.0, (2.0 * z + 1.0) * a * xi) / (k.cosh() * (1.0 - I * a / (1.0 + cc) * k.tanh()));
                let product = d.w_plus(z) * d.dz_w_minus(z) - d.dz_w_plus(z) * d.w_minus(z);
                wr = wr.max((d.wronskian(z) - want).norm()).max((product - want).norm());
            }
            bc = bc.max((d.w_plus(0.0) - 1.0).norm()).max(d.dz_w_plus(-1.0).norm()).max(d.w_minus(0.0).norm()).max((d.dz_w_minus(-1.0) - 1.0).norm());
        }
    }
    c.check("ode residual < 1e-8 <xi>^2", ode < 1e-8, format!("{ode:.2e}"));
    c.check("boundary values < 1e-10", bc < 1e-10, format!("{bc:.2e}"));
    c.check("wronskian < 1e-10", wr < 1e-10, format!("{wr:.2e}"));
    let (ep, xi) = (0.1, 20.0);
    let d = fundamental_solutions(ep, xi).unwrap();
    let q = 1.0 + ep * ep;
    let t = xi * xi.tanh();
    let want = C64::new(t - t * ep * ep / q, ep / q * xi);
    let e = (d.dz_w_plus(0.0) - want).norm();
    c.check("boundary expansion < 1e-6", e < 1e-6, format!("{e:.2e} at xi = 20, eta' = 0.1"));
    c
}

fn criterion_4() -> Criterion {
    let mut c = Criterion::default();
    let t0 = Instant::now();
    let g = grid(128);
    let d = identity_defects(&g, 100, 2024, &CutoffProfile::default()).unwrap();
    c.check("conjugation rule < 1e-11", d.conjugation < 1e-11, format!("{:.2e}", d.conjugation));
    c.check("parity preservation < 1e-11", d.parity < 1e-11, format!("{:.2e}", d.parity));
    c.check("adjoint rule < 1e-11", d.adjoint < 1e-11, format!("{:.2e}", d.adjoint));
    let cut = CutoffProfile::new(0.6).unwrap();
    for rho in [2usize, 3] {
        let s = composition_slope(&g, rho, (8, 32), &cut).unwrap();
        let slope = s.slope.map_or(f64::NAN, |p| p.0);
        c.check(&format!("composition slope rho = {rho}"), (slope - s.target).abs() <= 0.5, format!("{slope:.3} vs {}", s.target));
    }
    let secs = t0.elapsed().as_secs_f64();
    c.check("suite < 30 s", secs < 30.0, format!("{secs:.1} s"));
    c
}

fn criterion_5() -> Criterion {
    let mut c = Criterion::default();
    let cut = CutoffProfile::default();
    let g = grid(64);
    let worst = (1..=3).map(|n| flow_vs_composition(&g, n, &cut).unwrap()).fold(0.0, f64::max);
    c.expected_fail("flow vs composition < 1e-3", worst < 1e-3, format!("{worst:.2e}"));
    let trend = conjugation_trend(&grid(128), &[4, 8, 16, 32], &cut).unwrap();
    let monotone = trend.windows(2).all(|w| w[1].1 < w[0].1);
    let detail = trend.iter().map(|(n, e)| format!("{n}:{e:.1e}")).collect::<Vec<_>>().join(" ");
    c.check("conjugation trend decreasing", monotone, detail);
    c
}

fn criterion_6() -> Criterion {
    let mut c = Criterion::default();
    let xi = 1e3;
    let asym = [1.0, 2.0, 4.0].iter().map(|&k| (m_kappa(xi, &PhysParams::unit(k).unwrap(), false) / (k.sqrt() * xi.powf(1.5)) - 1.0).abs()).fold(0.0, f64::max);
    c.check("asymptote ratio at 1e3", asym < 1e-6, format!("{asym:.2e}"));

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let p = PhysParams::unit(rng.gen_range(0.05..3.0)).unwrap();
        for _ in 0..25 {
            let len = rng.gen_range(1..=3);
            let plus: Vec<u32> = (0..len).map(|_| rng.gen_range(1..=20)).collect();
            let mut minus = plus.clone();
            minus.rotate_left(rng.gen_range(0..len));
            let t = DivisorTuple::from_blocks(&plus, &minus).unwrap();
            worst = worst.max(small_divisor(&t, &p).abs());
        }
    }
    c.check("resonant divisors < 1e-13", worst < 1e-13, format!("{worst:.2e}"));

    let mut scale = 0.0f64;
    for &(gv, k) in &[(9.81, 0.3), (2.0, 1.0), (0.5, 0.05)] {
        let p = PhysParams::new(gv, k).unwrap();
        let r = reduce_g(&p);
        for &x in &[0.5f64, 3.0, 40.0] {
            let direct = (x * x.tanh() * (gv + k * x * x)).sqrt();
            let reduced = r.time_scale * m_kappa(x, &r.params, false);
            scale = scale.max((m_kappa(x, &p, false) / direct - 1.0).abs()).max((reduced / direct - 1.0).abs());
        }
    }
    c.check("reduce_g scaling < 1e-12", scale < 1e-12, format!("{scale:.2e}"));

    let mut roots = Vec::new();
    let mut wilton = 0.0f64;
    for &(a, b) in &[(1u32, 1u32), (1, 2), (2, 3)] {
        if let Some(r) = find_wilton_kappa(a, b).unwrap() {
            let t = DivisorTuple::from_blocks(&[a, b], &[a + b]).unwrap();
            let d = small_divisor(&t, &PhysParams::unit(r.kappa).unwrap()).abs();
            wilton = wilton.max(d);
            roots.push(format!("({a},{b}):{:.6}", r.kappa));
        }
    }
    c.check("wilton roots reverify < 1e-10", !roots.is_empty() && wilton < 1e-10, format!("{wilton:.2e} {}", roots.join(" ")));
    c
}

fn criterion_7() -> Criterion {
    let mut c = Criterion::default();
    let g = grid(32);
    let params = PhysParams::unit(1.0).unwrap();
    let ww = WaterWaves::new(&g, params, &DnoConfig { j: 24, ..DnoConfig::default() }).unwrap();
    let (eta, psi) = Profile::TwoMode { eps: 0.05 }.fields(&g).unwrap();
    let s0 = WaveState::new(eta, psi, params).unwrap();

    let mut vf = vector_field_reversibility(&ww, &s0).unwrap();
    for seed in 0..3u64 {
        let (e, p) = Profile::RandomEven { seed, decay: 2.0, eps: 0.05, n_max: 6 }.fields(&g).unwrap();
        vf = vf.max(vector_field_reversibility(&ww, &WaveState::new(e, p, params).unwrap()).unwrap());
    }
    c.check("vector field reversibility < 1e-11", vf < 1e-11, format!("{vf:.2e}"));

    let icfg = IntegratorConfig { dt: 1e-3, cadence: 1000, ..IntegratorConfig::default() };
    let rev = reversibility_check(&ww, &s0, 1.0, &icfg).unwrap();
    c.check("trajectory defect <= 10x self-convergence", rev.passed, format!("defect {:.2e}, self-convergence {:.2e}", rev.defect, rev.self_convergence));

    let traj = ww.evolve(&s0, 1.0, &icfg).unwrap();
    c.check("mass drift < 1e-11 per unit time", traj.mass_drift < 1e-11, format!("{:.2e}", traj.mass_drift));

    let lim = cfl_limit(g.m(), &params);
    let dt0 = 1.0 / (1.0 / lim).ceil();
    let e0 = ww.energy(&s0).unwrap();
    let energies: Vec<f64> = [dt0, dt0 / 2.0, dt0 / 4.0]
        .iter()
        .map(|&dt| ww.energy(ww.evolve(&s0, 1.0, &IntegratorConfig { dt, cadence: 1_000_000, ..icfg.clone() }).unwrap().last()).unwrap())
        .collect();
    let drift: Vec<f64> = energies.iter().map(|e| (e - e0).abs()).collect();
    let ratio = drift[0] / drift[1];
    let richardson = (energies[0] - energies[1]) / (energies[1] - energies[2]);
    c.expected_fail(
        "energy drift ratio 16 +- 4",
        (ratio - 16.0).abs() <= 4.0,
        format!("raw ratio {ratio:.2}, Richardson ratio {richardson:.2}, drifts {:.2e} {:.2e} {:.2e}", drift[0], drift[1], drift[2]),
    );

    let mut freq = 0.0f64;
    for n in 1..=3 {
        let got = linear_frequency(&ww, n, 1e-6, 5.0, &IntegratorConfig { dt: 5e-3, ..icfg.clone() }).unwrap();
        freq = freq.max((got / m_kappa(n as f64, &params, false) - 1.0).abs());
    }
    c.check("linear frequencies < 1e-5", freq < 1e-5, format!("{freq:.2e}"));
    c
}

fn free_field(g: &SpectralGrid, modes: &[(i64, C64)]) -> PeriodicField {
    PeriodicField::from_modes(g, modes, Flags::free().with_mean(MeanConvention::ZeroMean)).unwrap()
}

fn criterion_8() -> Criterion {
    let mut c = Criterion::default();
    let t0 = Instant::now();
    let g = grid(32);
    let map = build_nf_map(&ModelSpec::new(1.0, 2, 2, 1.0, 8).unwrap()).unwrap();
    let prof =
        free_field(&g, &[(1, C64::from_polar(1.0, 0.3)), (-1, C64::from_polar(0.5, -0.7)), (2, C64::from_polar(0.5, 1.1)), (-2, C64::from_polar(0.25, 0.4))]);
    let r = order_bump(&map, &prof, &[1e-2, 5e-3, 2.5e-3], 1.0).unwrap();
    let (raw, tr) = (r.raw_exponent.unwrap_or(f64::NAN), r.transformed_exponent.unwrap_or(f64::NAN));
    c.check("transformed exponent >= p + 1.7", tr >= 3.7, format!("raw {raw:.3}, transformed {tr:.3}"));

    let s3 = ModelSpec::new(1.0, 3, 2, 1.0, 4).unwrap();
    let u0 = free_field(
        &g,
        &(1..=4).flat_map(|k| [(k, C64::from_polar(0.1 / k as f64, k as f64)), (-k, C64::from_polar(0.05, 0.3 * k as f64))]).collect::<Vec<_>>(),
    );
    let a = action_check(&s3, &u0, 100.0, 1e-3).unwrap();
    c.check("action drift < 1e-9", a.max_drift < 1e-9, format!("{:.2e}", a.max_drift));
    c.check("imaginary control grows", a.control_drift > 1e-3, format!("control drift {:.2e}, stopped at {:?}", a.control_drift, a.control_stop));

    let prof = free_field(&g, &[(1, C64::new(0.5, 0.0)), (-1, C64::new(0.5, 0.0)), (2, C64::new(0.25, 0.0)), (-2, C64::new(0.25, 0.0))]);
    let icfg = IntegratorConfig { dt: 0.02, ..IntegratorConfig::default() };
    let t = nf_lifetime_compare(&map, &prof, &[0.1, 0.05, 0.025], 1e3, &icfg).unwrap();
    let censored = t.rows.iter().filter(|r| r.censored).count();
    let gap = t.slope_gap.unwrap_or(f64::NAN);
    c.expected_fail("lifetime slope gap >= 0.8", gap >= 0.8, format!("gap {gap:.3}, {censored}/{} rows censored at T = 1e3", t.rows.len()));
    let secs = t0.elapsed().as_secs_f64();
    c.check("total < 10 min", secs < 600.0, format!("{secs:.1} s"));
    c
}

fn criterion_9() -> Criterion {
    let mut c = Criterion::default();
    let g = grid(64);
    let eta = PeriodicField::from_fn(&g, |y| 0.2 * y.cos(), Flags::real_even()).unwrap();
    let cases = [
        ("zeta(0.2 cos y)", zeta_of_eta(&eta), Box::new(|y: f64| (1.0 + 0.04 * y.sin().powi(2)).powf(-1.5) - 1.0) as Box<dyn Fn(f64) -> f64>),
        ("0.1 cos 2y", PeriodicField::from_fn(&g, |y| 0.1 * (2.0 * y).cos(), Flags::real_even()).unwrap(), Box::new(|y: f64| 0.1 * (2.0 * y).cos())),
    ];
    let (mut mean, mut odd, mut round, mut ident) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for (_, zeta, exact) in &cases {
        let f = flattening_profile(zeta).unwrap();
        mean = mean.max(f.integrand_mean.abs());
        odd = odd.max(f.gamma.add(&f.gamma.reflect()).unwrap().max_abs_coeff());
        round = round.max(f.gamma.derivative(1).sub(&f.integrand).unwrap().max_abs_coeff());
        // fine trapezoid of (1 + ζ)^{-2/3} from the closed-form profile
        let n = 4096;
        let avg = (0..n).map(|j| (1.0 + exact(2.0 * PI * j as f64 / n as f64)).powf(-2.0 / 3.0)).sum::<f64>() / n as f64;
        ident = ident.max(((1.0 + f.zeta_bar).powf(2.0 / 3.0) - 1.0 / avg).abs());
    }
    // (1+ζ)^{-2/3} = 1 + 0.04 sin² y averages to exactly 1.02
    let f = flattening_profile(&cases[0].1).unwrap();
    ident = ident.max(((1.0 + f.zeta_bar).powf(2.0 / 3.0) - 1.0 / 1.02).abs());
    c.check("integrand mean < 1e-13", mean < 1e-13, format!("{mean:.2e}"));
    c.check("gamma odd < 1e-11", odd < 1e-11, format!("{odd:.2e}"));
    c.check("gamma' = integrand < 1e-11", round < 1e-11, format!("{round:.2e}"));
    c.check("consistency identity < 1e-12", ident < 1e-12, format!("{ident:.2e}"));
    c
}

fn run_cli(sub: &str, out: &Path, overrides: &[&str]) -> i32 {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ripple"));
    cmd.arg(sub).arg("--out").arg(out).arg("--quiet");
    for o in overrides {
        cmd.arg("--override").arg(o);
    }
    cmd.status().expect("binary runs").code().unwrap_or(-1)
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.path().extension().is_some_and(|x| x == "csv"))
        .map(|e| (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap()))
        .collect();
    v.sort();
    v
}

fn criterion_10() -> Criterion {
    let mut c = Criterion::default();
    let root = std::env::temp_dir().join(format!("ripple-acceptance-{}", std::process::id()));
    let runs: [(&str, &[&str]); 5] = [
        ("dno-test", &["params.kappa=1", "grid.m=32", "grid.j=16"]),
        ("resonance-scan", &["scan.n_sum_max=20"]),
        ("evolve", &["params.kappa=1", "grid.m=16", "grid.j=16", "integrator.t_final=0.05", "integrator.reversibility=false"]),
        ("nf-lifetime", &["params.kappa=1", "nf.t_max=5", "nf.eps_list=[0.1,0.05]"]),
        ("symbol-check", &["symbols.m=64", "symbols.pairs=5", "symbols.n_min=8", "symbols.n_max=16"]),
    ];
    for (sub, ov) in runs {
        let (a, b) = (root.join(format!("{sub}-a")), root.join(format!("{sub}-b")));
        let codes = (run_cli(sub, &a, ov), run_cli(sub, &b, ov));
        let (fa, fb) = (csv_files(&a), csv_files(&b));
        let same = !fa.is_empty() && fa == fb;
        c.check(sub, same && codes.0 == codes.1, format!("{} csv files, exit codes {:?}", fa.len(), codes));
    }
    let _ = std::fs::remove_dir_all(&root);
    c
}

fn main() {
    let criteria: [(&str, fn() -> Criterion); 10] = [
        ("Dirichlet-Neumann exactness on flat and constant depth", criterion_1),
        ("Dirichlet-Neumann structural suite", criterion_2),
        ("fundamental solutions, Wronskian and boundary expansion", criterion_3),
        ("quantization identities and composition remainder", criterion_4),
        ("paracomposition", criterion_5),
        ("dispersion and resonance", criterion_6),
        ("evolution structure", criterion_7),
        ("normal form", criterion_8),
        ("flattening", criterion_9),
        ("CLI determinism", criterion_10),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let mut gating_failures = Vec::new();
    for (k, (title, f)) in criteria.iter().enumerate() {
        let k = k + 1;
        if only.is_some_and(|o| o != k) {
            continue;
        }
        let t = Instant::now();
        let c = f();
        if report(k, title, &c, t.elapsed().as_secs_f64()) {
            gating_failures.push(k);
        }
    }
    if !gating_failures.is_empty() {
        eprintln!("gating sub-checks failed in criteria {gating_failures:?}");
        std::process::exit(1);
    }
}
