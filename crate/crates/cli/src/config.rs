//! Experiment configuration: one JSON document, every field defaulted except
//! the physical κ where a subcommand needs it.

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use ripple_core::dispersion::PhysParams;
use ripple_core::dno::{DnoConfig, ZRule};
use ripple_core::grid::{Flags, MeanConvention, PeriodicField, SpectralGrid};

use crate::UsageError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Subcommand {
    DnoTest,
    ResonanceScan,
    Evolve,
    NfLifetime,
    SymbolCheck,
}

impl Subcommand {
    pub fn name(self) -> &'static str {
        match self {
            Subcommand::DnoTest => "dno-test",
            Subcommand::ResonanceScan => "resonance-scan",
            Subcommand::Evolve => "evolve",
            Subcommand::NfLifetime => "nf-lifetime",
            Subcommand::SymbolCheck => "symbol-check",
        }
    }

    fn needs_kappa(self) -> bool {
        matches!(self, Subcommand::DnoTest | Subcommand::Evolve | Subcommand::NfLifetime)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSection {
    #[serde(default = "one")]
    pub g: f64,
    #[serde(default)]
    pub kappa: Option<f64>,
}

impl Default for ParamsSection {
    fn default() -> Self {
        Self { g: 1.0, kappa: None }
    }
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub m: usize,
    pub j: usize,
    pub rule: ZRule,
    pub quad_points: usize,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        let d = DnoConfig::default();
        Self { m: 32, j: 24, rule: d.rule, quad_points: d.quad_points, tol: d.tol, max_iter: d.max_iter }
    }
}

impl GridSection {
    pub fn dno(&self) -> DnoConfig {
        DnoConfig { j: self.j, tol: self.tol, max_iter: self.max_iter, rule: self.rule, quad_points: self.quad_points }
    }
}

/// Named initial data. `η` is even with zero mean, `ψ` is even modulo
/// constants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "snake_case", deny_unknown_fields)]
pub enum Profile {
    /// `η = ε cos(nx)`, `ψ = 0`.
    SingleMode { n: i64, eps: f64 },
    /// `η = ε(cos x + ½cos 2x)`, `ψ = ε cos 2x`.
    TwoMode { eps: f64 },
    /// Uniform coefficients in `[-1, 1]` times `ε n^{-decay}` for `1 <= n <= n_max`.
    RandomEven {
        seed: u64,
        decay: f64,
        #[serde(default = "default_eps")]
        eps: f64,
        #[serde(default = "default_n_max")]
        n_max: i64,
    },
}

fn default_eps() -> f64 {
    0.05
}

fn default_n_max() -> i64 {
    8
}

impl Default for Profile {
    fn default() -> Self {
        Profile::TwoMode { eps: 0.05 }
    }
}

pub fn eta_flags() -> Flags {
    Flags::real_even().with_mean(MeanConvention::ZeroMean)
}

pub fn psi_flags() -> Flags {
    Flags::real_even().with_mean(MeanConvention::ModConstants)
}

impl Profile {
    /// Cosine amplitudes `(n, a_n, b_n)` of `η` and `ψ`.
    pub fn cosine_modes(&self) -> Vec<(i64, f64, f64)> {
        match *self {
            Profile::SingleMode { n, eps } => vec![(n, eps, 0.0)],
            Profile::TwoMode { eps } => vec![(1, eps, 0.0), (2, 0.5 * eps, eps)],
            Profile::RandomEven { seed, decay, eps, n_max } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                (1..=n_max)
                    .map(|n| {
                        let w = eps * (n as f64).powf(-decay);
                        (n, w * rng.gen_range(-1.0..=1.0), w * rng.gen_range(-1.0..=1.0))
                    })
                    .collect()
            }
        }
    }

    pub fn fields(&self, grid: &SpectralGrid) -> ripple_core::Result<(PeriodicField, PeriodicField)> {
        let modes = self.cosine_modes();
        let build = |pick: fn(&(i64, f64, f64)) -> f64, flags| {
            let coeffs: Vec<(i64, ripple_core::C64)> =
                modes.iter().flat_map(|m| [(m.0, ripple_core::C64::new(0.5 * pick(m), 0.0)), (-m.0, ripple_core::C64::new(0.5 * pick(m), 0.0))]).collect();
            PeriodicField::from_modes(grid, &coeffs, flags)
        };
        Ok((build(|m| m.1, eta_flags())?, build(|m| m.2, psi_flags())?))
    }

    fn validate(&self) -> Result<(), String> {
        match *self {
            Profile::SingleMode { n, eps } if n < 1 || !eps.is_finite() => Err(format!("single_mode needs n >= 1 and finite eps, got n = {n}, eps = {eps}")),
            Profile::RandomEven { n_max, decay, .. } if n_max < 1 || !decay.is_finite() => {
                Err(format!("random_even needs n_max >= 1 and finite decay, got {n_max}, {decay}"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorSection {
    pub dt: f64,
    pub cadence: usize,
    /// Sobolev index of the recorded norm.
    pub s: f64,
    pub t_final: f64,
    pub reversibility: bool,
}

impl Default for IntegratorSection {
    fn default() -> Self {
        Self { dt: 1e-3, cadence: 10, s: 1.0, t_final: 1.0, reversibility: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DnoSection {
    /// Constant elevations for the `D tanh((1+c)D)` check.
    pub constant_eta: Vec<f64>,
    /// Frequencies of the principal-expansion decay probe, at most `M/4`.
    pub principal_modes: Vec<i64>,
    pub tolerance: f64,
    pub symmetry_tolerance: f64,
    pub convergence_tolerance: f64,
}

impl Default for DnoSection {
    fn default() -> Self {
        Self { constant_eta: vec![-0.2, 0.1, 0.2], principal_modes: vec![2, 4, 8], tolerance: 1e-10, symmetry_tolerance: 1e-8, convergence_tolerance: 1e-8 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanSection {
    pub p_max: usize,
    pub n_sum_max: u32,
    pub kappa_grid: Vec<f64>,
    /// `(a, b)` pairs whose Wilton κ is searched.
    pub wilton: Vec<(u32, u32)>,
    pub budget: u64,
}

impl Default for ScanSection {
    fn default() -> Self {
        Self {
            p_max: 1,
            n_sum_max: 50,
            kappa_grid: (0..20).map(|i| 0.5 + 0.25 * i as f64).collect(),
            wilton: vec![(1, 1)],
            budget: ripple_core::dispersion::DEFAULT_TUPLE_BUDGET,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NfSection {
    pub p: usize,
    pub ell: usize,
    pub a: f64,
    pub n_c: usize,
    pub eps_list: Vec<f64>,
    pub t_max: f64,
    pub dt: f64,
    pub s: f64,
}

impl Default for NfSection {
    fn default() -> Self {
        Self { p: 2, ell: 2, a: 1.0, n_c: 8, eps_list: vec![0.1, 0.05, 0.025], t_max: 1e3, dt: 0.02, s: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SymbolSection {
    pub m: usize,
    pub pairs: usize,
    pub seed: u64,
    pub tolerance: f64,
    /// Cutoff parameter used for the composition slope.
    pub compose_delta: f64,
    pub n_min: i64,
    pub n_max: i64,
    pub slope_tolerance: f64,
}

impl Default for SymbolSection {
    fn default() -> Self {
        Self { m: 128, pairs: 100, seed: 2024, tolerance: 1e-11, compose_delta: 0.6, n_min: 8, n_max: 32, slope_tolerance: 0.5 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub subcommand: Option<Subcommand>,
    pub params: ParamsSection,
    pub grid: GridSection,
    pub data: Profile,
    pub integrator: IntegratorSection,
    pub dno: DnoSection,
    pub scan: ScanSection,
    pub nf: NfSection,
    pub symbols: SymbolSection,
    pub output: Option<PathBuf>,
}

fn parse_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

/// Sets `a.b.c = value` inside a JSON object, creating intermediate objects.
fn set_path(root: &mut Value, key: &str, value: Value) -> Result<(), UsageError> {
    let mut cur = root;
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(UsageError(format!("malformed override key `{key}`")));
    }
    for (i, part) in parts.iter().enumerate() {
        let obj = match cur {
            Value::Object(o) => o,
            _ => return Err(UsageError(format!("override `{key}`: `{}` is not a section", parts[..i].join(".")))),
        };
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        cur = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    Ok(())
}

impl ExperimentConfig {
    /// Parses a JSON document, applies `key=value` overrides (values are read
    /// as JSON, falling back to a string) and checks the result.
    pub fn load(text: Option<&str>, overrides: &[String], sub: Subcommand) -> Result<Self, UsageError> {
        let mut root: Value = match text {
            Some(t) => serde_json::from_str(t).map_err(|e| UsageError(format!("config is not valid JSON: {e}")))?,
            None => Value::Object(Default::default()),
        };
        if !root.is_object() {
            return Err(UsageError("config must be a JSON object".into()));
        }
        for o in overrides {
            let (k, v) = o.split_once('=').ok_or_else(|| UsageError(format!("override `{o}` is not key=value")))?;
            set_path(&mut root, k.trim(), parse_value(v.trim()))?;
        }
        let mut cfg: ExperimentConfig = serde_json::from_value(root).map_err(|e| UsageError(format!("config: {e}")))?;
        match cfg.subcommand {
            Some(s) if s != sub => return Err(UsageError(format!("config is for `{}`, not `{}`", s.name(), sub.name()))),
            _ => cfg.subcommand = Some(sub),
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn subcommand(&self) -> Subcommand {
        self.subcommand.expect("resolved configs carry their subcommand")
    }

    pub fn validate(&self) -> Result<(), UsageError> {
        let sub = self.subcommand();
        if sub.needs_kappa() {
            match self.params.kappa {
                None => return Err(UsageError(format!("`{}` needs params.kappa", sub.name()))),
                Some(k) if !(k > 0.0) || !k.is_finite() => return Err(UsageError(format!("params.kappa must be positive, got {k}"))),
                _ => {}
            }
            if !(self.params.g > 0.0) || !self.params.g.is_finite() {
                return Err(UsageError(format!("params.g must be positive, got {}", self.params.g)));
            }
        }
        if self.grid.m < 8 || self.grid.m % 2 != 0 {
            return Err(UsageError(format!("grid.m must be even and at least 8, got {}", self.grid.m)));
        }
        self.data.validate().map_err(UsageError)?;
        match sub {
            Subcommand::ResonanceScan if self.scan.kappa_grid.is_empty() => Err(UsageError("scan.kappa_grid is empty".into())),
            Subcommand::ResonanceScan if self.scan.kappa_grid.iter().any(|k| !(*k > 0.0)) => Err(UsageError("scan.kappa_grid must be positive".into())),
            Subcommand::Evolve if !(self.integrator.dt > 0.0) || !(self.integrator.t_final >= 0.0) => {
                Err(UsageError("integrator.dt must be positive and t_final non-negative".into()))
            }
            Subcommand::DnoTest if self.dno.principal_modes.iter().any(|&n| n < 1 || n > self.grid.m as i64 / 4) => {
                Err(UsageError(format!("dno.principal_modes must lie in 1..={}", self.grid.m / 4)))
            }
            Subcommand::NfLifetime if self.nf.eps_list.is_empty() => Err(UsageError("nf.eps_list is empty".into())),
            Subcommand::SymbolCheck if self.symbols.n_min < 1 || self.symbols.n_max <= self.symbols.n_min => {
                Err(UsageError("symbols needs 1 <= n_min < n_max".into()))
            }
            Subcommand::SymbolCheck if self.symbols.m < 32 || self.symbols.n_max > (self.symbols.m / 4) as i64 => {
                Err(UsageError(format!("symbols needs m >= 32 and n_max <= m/4, got m = {}, n_max = {}", self.symbols.m, self.symbols.n_max)))
            }
            _ => Ok(()),
        }
    }

    /// Physical parameters; only valid after [`validate`](Self::validate) for
    /// subcommands that need κ.
    pub fn phys(&self) -> ripple_core::Result<PhysParams> {
        PhysParams::new(self.params.g, self.params.kappa.unwrap_or(1.0))
    }

    /// Pretty JSON of the resolved configuration, stable across runs.
    pub fn to_json(&self) -> Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_reach_nested_fields() {
        let c = ExperimentConfig::load(
            Some(r#"{"params": {"kappa": 1.0}}"#),
            &["grid.j=48".into(), "data={\"profile\":\"single_mode\",\"n\":3,\"eps\":0.01}".into()],
            Subcommand::Evolve,
        )
        .unwrap();
        assert_eq!(c.grid.j, 48);
        assert_eq!(c.data, Profile::SingleMode { n: 3, eps: 0.01 });
    }

    #[test]
    fn missing_kappa_is_a_usage_error() {
        assert!(ExperimentConfig::load(None, &[], Subcommand::DnoTest).is_err());
        assert!(ExperimentConfig::load(None, &[], Subcommand::SymbolCheck).is_ok());
    }

    #[test]
    fn unknown_profile_and_fields_are_rejected() {
        assert!(ExperimentConfig::load(Some(r#"{"data": {"profile": "sawtooth"}}"#), &[], Subcommand::SymbolCheck).is_err());
        assert!(ExperimentConfig::load(Some(r#"{"grids": {}}"#), &[], Subcommand::SymbolCheck).is_err());
    }

    #[test]
    fn random_profile_is_reproducible() {
        let p = Profile::RandomEven { seed: 7, decay: 2.0, eps: 0.1, n_max: 6 };
        assert_eq!(p.cosine_modes(), p.cosine_modes());
        let g = SpectralGrid::new(32).unwrap();
        let (eta, psi) = p.fields(&g).unwrap();
        assert!(eta.check_symmetry().is_even && psi.check_symmetry().is_real);
        assert_eq!(eta.mean().norm(), 0.0);
    }

    #[test]
    fn mismatched_subcommand_is_rejected() {
        assert!(ExperimentConfig::load(Some(r#"{"subcommand": "evolve"}"#), &[], Subcommand::SymbolCheck).is_err());
    }
}
