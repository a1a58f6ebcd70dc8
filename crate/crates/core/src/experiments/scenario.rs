//! Damage scenarios and their flat `key = value` configuration format.
//!
//! ```text
//! # comments start with '#'
//! scenario = exp1
//! method = resesop
//! relative_noise = 0.01
//! damage = 3,3,2; 3,4,3
//! ```
//!
//! Keys (all optional, unknown keys are rejected):
//!
//! | key | meaning |
//! |-----|---------|
//! | `scenario` | base scenario: `exp1`, `exp2`, `exp3`, `homogeneous`, `custom` |
//! | `name` | label echoed in the report |
//! | `method` | `landweber` or `resesop` |
//! | `delta` | absolute noise level |
//! | `relative_noise` | noise level as a fraction of the exact data norm |
//! | `tau`, `ctc`, `omega` | discrepancy factor, cone constant, Landweber damping |
//! | `directions` | number of RESESOP search directions |
//! | `max_iterations` | iteration cap |
//! | `clamp_nonnegative` | clamp negative coefficients to zero after a step |
//! | `seed` | noise seed |
//! | `mitigate_inverse_crime` | synthesize data on a once-refined mesh |
//! | `damage` | `i,j,value` triples separated by `;`, replacing the base damage |
//! | `damage_layer` | `uniform` or `top` |
//! | `thickness_knots`, `surface_knots` | mesh resolution |
//! | `thickness`, `width` | plate size; the plate is centered at the origin |
//! | `mu`, `nu`, `density` | material moduli in GPa and density |
//! | `theta`, `dt`, `steps`, `newton_tol`, `newton_max_iter` | time stepping |
//! | `amplitude`, `frequency`, `cycles` | excitation burst |

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::forward::{
    Axis, DamageLayer, ExcitationSpec, ForwardProblem, MaterialModel, MeshSpec, TimeIntegratorConfig,
};
use crate::solvers::{default_tau, Method, SolverConfig, DEFAULT_CTC};

/// Half-width of the plate surface in the coordinates used to state the
/// damage positions of the reference experiments.
pub const REFERENCE_HALF_WIDTH: f64 = 15.0;

/// Coefficient pattern of a 2 x 2 damage block, row-major.
pub const BLOCK_PATTERN: [f64; 4] = [2.0, 3.0, 4.0, 2.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DamageEntry {
    pub i: usize,
    pub j: usize,
    pub value: f64,
}

/// Where a damage block stated in reference coordinates landed on the mesh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DamagePlacement {
    pub label: String,
    pub reference_center: [f64; 2],
    /// Lower corner `(i, j)` of the 2 x 2 block.
    pub block: [usize; 2],
}

impl DamagePlacement {
    pub fn indices(&self) -> [(usize, usize); 4] {
        let [i, j] = self.block;
        [(i, j), (i, j + 1), (i + 1, j), (i + 1, j + 1)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum NoiseLevel {
    Absolute(f64),
    /// Fraction of the exact data norm.
    Relative(f64),
}

impl NoiseLevel {
    pub fn resolve(&self, data_norm: f64) -> f64 {
        match *self {
            NoiseLevel::Absolute(d) => d,
            NoiseLevel::Relative(r) => r * data_norm,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioKind {
    Exp1,
    Exp2,
    Exp3,
    Homogeneous,
    Custom,
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScenarioKind::Exp1 => "exp1",
            ScenarioKind::Exp2 => "exp2",
            ScenarioKind::Exp3 => "exp3",
            ScenarioKind::Homogeneous => "homogeneous",
            ScenarioKind::Custom => "custom",
        })
    }
}

impl FromStr for ScenarioKind {
    type Err = ExperimentError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "exp1" => Ok(ScenarioKind::Exp1),
            "exp2" => Ok(ScenarioKind::Exp2),
            "exp3" => Ok(ScenarioKind::Exp3),
            "homogeneous" => Ok(ScenarioKind::Homogeneous),
            "custom" => Ok(ScenarioKind::Custom),
            other => Err(ExperimentError::Config(format!("unknown scenario '{other}'"))),
        }
    }
}

/// Fully resolved description of one synthetic experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    pub kind: ScenarioKind,
    pub mesh: MeshSpec,
    /// Moduli in GPa; nondimensionalized by `mu` before solving.
    pub material: MaterialModel,
    pub density: f64,
    pub damage_layer: DamageLayer,
    pub damage: Vec<DamageEntry>,
    pub placements: Vec<DamagePlacement>,
    pub excitation: ExcitationSpec,
    pub integrator: TimeIntegratorConfig,
    pub noise: NoiseLevel,
    pub method: Method,
    pub tau: Option<f64>,
    pub ctc: f64,
    pub omega: Option<f64>,
    pub search_directions: usize,
    pub max_iterations: usize,
    pub clamp_nonnegative: bool,
    pub seed: u64,
    pub mitigate_inverse_crime: bool,
}

/// Key-value overrides in the config-file vocabulary. Later insertions win.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides(BTreeMap<String, String>);

const KEYS: &[&str] = &[
    "scenario", "name", "method", "delta", "relative_noise", "tau", "ctc", "omega", "directions",
    "max_iterations", "clamp_nonnegative", "seed", "mitigate_inverse_crime", "damage",
    "damage_layer", "thickness_knots", "surface_knots", "thickness", "width", "mu", "nu",
    "density", "theta", "dt", "steps", "newton_tol", "newton_max_iter", "amplitude", "frequency",
    "cycles",
];

impl Overrides {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<(), ExperimentError> {
        if !KEYS.contains(&key) {
            return Err(ExperimentError::Config(format!("unknown key '{key}'")));
        }
        let value = value.into();
        // Absolute and relative noise are alternatives.
        match key {
            "delta" => {
                self.0.remove("relative_noise");
            }
            "relative_noise" => {
                self.0.remove("delta");
            }
            _ => {}
        }
        self.0.insert(key.to_string(), value.trim().to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    /// Applies `other` on top of `self`.
    pub fn merge(&mut self, other: &Overrides) -> Result<(), ExperimentError> {
        for (k, v) in &other.0 {
            self.set(k, v.clone())?;
        }
        Ok(())
    }

    /// Parses the flat config format. Duplicate keys are an error.
    pub fn parse(text: &str) -> Result<Self, ExperimentError> {
        let mut out = Overrides::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                ExperimentError::Config(format!("line {}: expected 'key = value'", lineno + 1))
            })?;
            let key = key.trim();
            if out.0.contains_key(key) {
                return Err(ExperimentError::Config(format!("line {}: duplicate key '{key}'", lineno + 1)));
            }
            out.set(key, value)
                .map_err(|e| ExperimentError::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(out)
    }

    fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>, ExperimentError> {
        self.get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|_| ExperimentError::Config(format!("invalid value '{v}' for '{key}'")))
            })
            .transpose()
    }
}

/// Maps a reference coordinate in `[-15, 15]` to the lower index of the
/// 2 x 2 block of surface knots around it, kept inside the clamped frame.
pub fn rescale_to_block(coord: f64, knots: usize) -> usize {
    let f = (coord + REFERENCE_HALF_WIDTH) / (2.0 * REFERENCE_HALF_WIDTH) * (knots - 1) as f64;
    (f.floor().max(1.0) as usize).min(knots.saturating_sub(3))
}

fn placements_for(kind: ScenarioKind, n2: usize, n3: usize) -> Vec<DamagePlacement> {
    let place = |label: &str, c: [f64; 2]| DamagePlacement {
        label: label.to_string(),
        reference_center: c,
        block: [rescale_to_block(c[0], n2), rescale_to_block(c[1], n3)],
    };
    match kind {
        ScenarioKind::Exp1 => vec![place("damage", [-1.5, -1.5])],
        ScenarioKind::Exp2 => vec![place("A", [-1.5, -10.5]), place("B", [5.5, 5.5])],
        // Damage A moved towards the center, B unchanged.
        ScenarioKind::Exp3 => vec![place("A", [-1.5, -4.5]), place("B", [5.5, 5.5])],
        ScenarioKind::Homogeneous | ScenarioKind::Custom => Vec::new(),
    }
}

fn damage_from_placements(placements: &[DamagePlacement]) -> Vec<DamageEntry> {
    placements
        .iter()
        .flat_map(|p| {
            p.indices()
                .into_iter()
                .zip(BLOCK_PATTERN)
                .map(|((i, j), value)| DamageEntry { i, j, value })
        })
        .collect()
}

fn parse_damage(text: &str) -> Result<Vec<DamageEntry>, ExperimentError> {
    let bad = || ExperimentError::Config(format!("damage entries must be 'i,j,value' separated by ';', got '{text}'"));
    text.split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|entry| {
            let parts: Vec<&str> = entry.split(',').map(str::trim).collect();
            let [i, j, v] = parts.as_slice() else { return Err(bad()) };
            Ok(DamageEntry {
                i: i.parse().map_err(|_| bad())?,
                j: j.parse().map_err(|_| bad())?,
                value: v.parse().map_err(|_| bad())?,
            })
        })
        .collect()
}

fn parse_bool(key: &str, v: &str) -> Result<bool, ExperimentError> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(ExperimentError::Config(format!("invalid boolean '{v}' for '{key}'"))),
    }
}

/// Builds a scenario from a base name and overrides. Mesh overrides are
/// applied before the damage blocks are placed, so the reference positions
/// are rescaled onto the requested mesh.
pub fn build_scenario(name: &str, overrides: &Overrides) -> Result<ScenarioSpec, ExperimentError> {
    let kind: ScenarioKind = overrides.get("scenario").unwrap_or(name).parse()?;
    let o = overrides;

    let mut mesh = MeshSpec::desk();
    if let Some(n) = o.parsed::<usize>("thickness_knots")? {
        mesh.thickness.knots = n;
    }
    if let Some(n) = o.parsed::<usize>("surface_knots")? {
        mesh.width.knots = n;
        mesh.depth.knots = n;
    }
    if let Some(t) = o.parsed::<f64>("thickness")? {
        mesh.thickness = Axis { lo: -t / 2.0, hi: t / 2.0, ..mesh.thickness };
    }
    if let Some(w) = o.parsed::<f64>("width")? {
        mesh.width = Axis { lo: -w / 2.0, hi: w / 2.0, ..mesh.width };
        mesh.depth = Axis { lo: -w / 2.0, hi: w / 2.0, ..mesh.depth };
    }
    for axis in [mesh.thickness, mesh.width, mesh.depth] {
        Axis::new(axis.lo, axis.hi, axis.knots)?;
    }
    if mesh.width.knots < 4 || mesh.depth.knots < 4 {
        return Err(ExperimentError::Config("surface_knots must be at least 4".into()));
    }

    let placements = placements_for(kind, mesh.width.knots, mesh.depth.knots);
    let damage = match o.get("damage") {
        Some(text) => parse_damage(text)?,
        None => damage_from_placements(&placements),
    };

    let reference = MaterialModel::reference();
    let material = MaterialModel::new(
        o.parsed("mu")?.unwrap_or(reference.mu),
        o.parsed("nu")?.unwrap_or(reference.nu),
    )?;

    let default_exc = ExcitationSpec::default();
    let excitation = ExcitationSpec {
        amplitude: o.parsed("amplitude")?.unwrap_or(default_exc.amplitude),
        center_frequency: o.parsed("frequency")?.unwrap_or(default_exc.center_frequency),
        cycles: o.parsed("cycles")?.unwrap_or(default_exc.cycles),
    };
    let d = TimeIntegratorConfig::default();
    let integrator = TimeIntegratorConfig {
        theta: o.parsed("theta")?.unwrap_or(d.theta),
        dt: o.parsed("dt")?.unwrap_or(d.dt),
        steps: o.parsed("steps")?.unwrap_or(d.steps),
        newton_tol: o.parsed("newton_tol")?.unwrap_or(d.newton_tol),
        newton_max_iter: o.parsed("newton_max_iter")?.unwrap_or(d.newton_max_iter),
        tangent: d.tangent,
    };

    let noise = match (o.parsed::<f64>("delta")?, o.parsed::<f64>("relative_noise")?) {
        (Some(d), _) => NoiseLevel::Absolute(d),
        (None, Some(r)) => NoiseLevel::Relative(r),
        (None, None) => NoiseLevel::Relative(0.01),
    };
    let damage_layer = match o.get("damage_layer") {
        None | Some("uniform") => DamageLayer::Uniform,
        Some("top") => DamageLayer::Top,
        Some(other) => {
            return Err(ExperimentError::Config(format!("damage_layer must be 'uniform' or 'top', got '{other}'")))
        }
    };

    let spec = ScenarioSpec {
        name: o.get("name").map(str::to_string).unwrap_or_else(|| kind.to_string()),
        kind,
        mesh,
        material,
        density: o.parsed("density")?.unwrap_or(1.0),
        damage_layer,
        damage,
        placements,
        excitation,
        integrator,
        noise,
        method: o.parsed("method")?.unwrap_or(Method::Resesop),
        tau: o.parsed("tau")?,
        ctc: o.parsed("ctc")?.unwrap_or(DEFAULT_CTC),
        omega: o.parsed("omega")?,
        search_directions: o.parsed("directions")?.unwrap_or(1),
        max_iterations: o.parsed("max_iterations")?.unwrap_or(500),
        clamp_nonnegative: o
            .get("clamp_nonnegative")
            .map(|v| parse_bool("clamp_nonnegative", v))
            .transpose()?
            .unwrap_or(true),
        seed: o.parsed("seed")?.unwrap_or(0),
        mitigate_inverse_crime: o
            .get("mitigate_inverse_crime")
            .map(|v| parse_bool("mitigate_inverse_crime", v))
            .transpose()?
            .unwrap_or(false),
    };
    spec.validate()?;
    Ok(spec)
}

impl ScenarioSpec {
    pub fn surface_shape(&self) -> (usize, usize) {
        (self.mesh.width.knots, self.mesh.depth.knots)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let (n2, n3) = self.surface_shape();
        for d in &self.damage {
            if d.i >= n2 || d.j >= n3 {
                return Err(ExperimentError::Config(format!(
                    "damage index ({}, {}) outside the {n2} x {n3} surface grid",
                    d.i, d.j
                )));
            }
            if !(d.value >= 0.0 && d.value.is_finite()) {
                return Err(ExperimentError::Config(format!(
                    "damage value {} at ({}, {}) must be finite and nonnegative",
                    d.value, d.i, d.j
                )));
            }
        }
        match self.noise {
            NoiseLevel::Absolute(v) | NoiseLevel::Relative(v) if !(v >= 0.0 && v.is_finite()) => {
                return Err(ExperimentError::Config(format!("noise level {v} must be nonnegative")));
            }
            _ => {}
        }
        if !(self.density > 0.0) {
            return Err(ExperimentError::Config("density must be positive".into()));
        }
        self.integrator.validate()?;
        self.excitation.validate()?;
        self.solver_config(0.0)?;
        Ok(())
    }

    /// Ground-truth coefficient vector: 1 everywhere except the damage.
    pub fn truth(&self) -> DVector<f64> {
        let (n2, n3) = self.surface_shape();
        let mut a = DVector::from_element(n2 * n3, 1.0);
        for d in &self.damage {
            a[n3 * d.i + d.j] = d.value;
        }
        a
    }

    /// Forward problem in units where `mu = 1`.
    pub fn forward_problem(&self) -> Result<ForwardProblem, ExperimentError> {
        self.forward_problem_on(&self.mesh)
    }

    pub(crate) fn forward_problem_on(&self, mesh: &MeshSpec) -> Result<ForwardProblem, ExperimentError> {
        let (material, _) = self.material.nondimensionalized();
        Ok(ForwardProblem::new(mesh, material, self.density, self.excitation, self.integrator)?
            .with_damage_layer(self.damage_layer))
    }

    pub fn resolved_tau(&self) -> f64 {
        self.tau.unwrap_or_else(|| default_tau(self.ctc))
    }

    pub fn solver_config(&self, delta: f64) -> Result<SolverConfig, ExperimentError> {
        let mut cfg = SolverConfig::new(self.ctc, delta)?
            .with_tau(self.resolved_tau())?
            .with_max_iterations(self.max_iterations)?
            .with_search_directions(self.search_directions)?
            .with_clamp(self.clamp_nonnegative);
        if let Some(w) = self.omega {
            cfg = cfg.with_omega(w)?;
        }
        Ok(cfg.validated()?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn build(name: &str) -> ScenarioSpec {
        build_scenario(name, &Overrides::new()).unwrap()
    }

    #[test]
    fn homogeneous_is_all_ones() {
        let s = build("homogeneous");
        assert!(s.damage.is_empty());
        assert!(s.truth().iter().all(|v| *v == 1.0));
    }

    #[test]
    fn exp1_block_pattern() {
        let s = build("exp1");
        assert_eq!(s.placements[0].block, [3, 3]);
        let t = s.truth();
        assert_eq!((t[9 * 3 + 3], t[9 * 3 + 4], t[9 * 4 + 3], t[9 * 4 + 4]), (2.0, 3.0, 4.0, 2.0));
        assert_eq!(t.iter().filter(|v| **v != 1.0).count(), 4);
    }

    #[test]
    fn experiment_two_and_three_geometry() {
        let center = |p: &DamagePlacement| {
            let c = [p.block[0] as f64 + 0.5 - 4.0, p.block[1] as f64 + 0.5 - 4.0];
            (c[0] * c[0] + c[1] * c[1]).sqrt()
        };
        let e2 = build("exp2");
        assert_eq!(e2.placements[0].block, [3, 1]);
        assert_eq!(e2.placements[1].block, [5, 5]);
        assert!(center(&e2.placements[1]) < center(&e2.placements[0]));
        let e3 = build("exp3");
        assert_eq!(e3.placements[1], e2.placements[1]);
        assert!(center(&e3.placements[0]) < center(&e3.placements[1]));
        // Blocks are disjoint.
        let a: Vec<_> = e3.placements[0].indices().to_vec();
        assert!(e3.placements[1].indices().iter().all(|ix| !a.contains(ix)));
    }

    #[test]
    fn config_round_trip() {
        let text = "\
# a custom run
scenario = custom
damage = 2,2,1.5; 5, 6, 0.5
method = landweber
delta = 1e-6
surface_knots = 7
damage_layer = top
";
        let s = build_scenario("homogeneous", &Overrides::parse(text).unwrap()).unwrap();
        assert_eq!(s.kind, ScenarioKind::Custom);
        assert_eq!(s.method, Method::Landweber);
        assert_eq!(s.noise, NoiseLevel::Absolute(1e-6));
        assert_eq!(s.damage.len(), 2);
        assert_eq!(s.mesh.width.knots, 7);
        assert_eq!(s.damage_layer, DamageLayer::Top);
    }

    #[test]
    fn unknown_and_duplicate_keys_rejected() {
        assert!(Overrides::parse("colour = red").is_err());
        assert!(Overrides::parse("seed = 1\nseed = 2").is_err());
        assert!(Overrides::parse("just text").is_err());
    }

    #[test]
    fn out_of_range_damage_rejected() {
        let mut o = Overrides::new();
        o.set("damage", "9,1,2.0").unwrap();
        assert!(build_scenario("custom", &o).is_err());
        let mut o = Overrides::new();
        o.set("damage", "1,1,-2.0").unwrap();
        assert!(build_scenario("custom", &o).is_err());
    }

    #[test]
    fn noise_keys_are_alternatives() {
        let mut o = Overrides::new();
        o.set("relative_noise", "0.05").unwrap();
        o.set("delta", "0.1").unwrap();
        assert_eq!(build_scenario("exp1", &o).unwrap().noise, NoiseLevel::Absolute(0.1));
    }

    #[test]
    fn rescaling_stays_inside_free_region() {
        for n in 4..40 {
            for c in [-15.0, -14.9, 0.0, 14.99, 15.0] {
                let b = rescale_to_block(c, n);
                assert!(b >= 1 && b + 1 <= n - 2, "n={n} c={c} b={b}");
            }
        }
    }
}
