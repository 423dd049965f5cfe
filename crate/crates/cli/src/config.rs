//! Experiment configuration: JSON schema, defaults and load-time checks.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use smallball::analysis::beta_on_boundary;
use smallball::coefficients::{DriftSpec, SigmaFamily, SigmaSpec};
use smallball::estimator::{BallEvent, MeshSpec, StageEvent};
use smallball::profile::{initial_gap, Profile};
use smallball::solver::GridSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default = "default_sigma")]
    pub sigma: SigmaSpec,
    #[serde(default)]
    pub drift: DriftConfig,
    #[serde(default)]
    pub event: EventConfig,
    #[serde(default)]
    pub mesh: MeshConfig,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    #[serde(default)]
    pub tail: TailConfig,
    #[serde(default)]
    pub girsanov: GirsanovConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_seed() -> u64 {
    20_240_601
}

fn default_sigma() -> SigmaSpec {
    SigmaSpec::constant(1.0)
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: default_seed(),
            grid: GridConfig::default(),
            sigma: default_sigma(),
            drift: DriftConfig::default(),
            event: EventConfig::default(),
            mesh: MeshConfig::default(),
            estimator: EstimatorConfig::default(),
            tail: TailConfig::default(),
            girsanov: GirsanovConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub nx: usize,
    /// Omitted: the explicit stability scale `dx²/(2ν)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(rename = "T")]
    pub t_end: f64,
    #[serde(default = "half")]
    pub nu: f64,
    #[serde(default = "half")]
    pub theta: f64,
}

fn half() -> f64 {
    0.5
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            nx: 32,
            dt: None,
            t_end: 0.05,
            nu: 0.5,
            theta: 0.5,
        }
    }
}

impl GridConfig {
    pub fn resolve(&self) -> smallball::Result<GridSpec> {
        let dx = 1.0 / self.nx.max(1) as f64;
        let dt = self.dt.unwrap_or(dx * dx / (2.0 * self.nu)).min(self.t_end);
        GridSpec::new(self.nx, dt, self.t_end, self.nu, self.theta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum DriftConfig {
    #[default]
    Zero,
    Constant {
        value: f64,
    },
    BoundedProfile {
        amplitude: f64,
    },
}

impl DriftConfig {
    pub fn spec(&self) -> DriftSpec {
        match *self {
            DriftConfig::Zero => DriftSpec::Zero,
            DriftConfig::Constant { value } => DriftSpec::Constant { value },
            DriftConfig::BoundedProfile { amplitude } => DriftSpec::BoundedProfile { amplitude },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventConfig {
    pub eps: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub eps_sweep: Vec<f64>,
    #[serde(default)]
    pub h: Profile,
    #[serde(default)]
    pub u0: Profile,
}

impl Default for EventConfig {
    fn default() -> Self {
        Self {
            eps: 0.5,
            eps_sweep: Vec::new(),
            h: Profile::Zero,
            u0: Profile::Zero,
        }
    }
}

impl EventConfig {
    /// The sweep if one is given, otherwise the single radius.
    pub fn radii(&self) -> Vec<f64> {
        if self.eps_sweep.is_empty() {
            vec![self.eps]
        } else {
            self.eps_sweep.clone()
        }
    }

    pub fn ball(&self, eps: f64, t_end: f64) -> smallball::Result<BallEvent> {
        BallEvent::new(eps, t_end, Arc::new(self.h), Arc::new(self.u0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshConfig {
    #[serde(default = "default_c0")]
    pub c0: f64,
    #[serde(default = "default_mesh_theta")]
    pub theta: f64,
    #[serde(default = "one")]
    pub beta: f64,
    /// Asserts the small-`D` regime, in which `β = 2 − α` is admissible.
    #[serde(default)]
    pub small_d: bool,
}

fn default_c0() -> f64 {
    0.1
}

fn default_mesh_theta() -> f64 {
    4.0
}

fn one() -> f64 {
    1.0
}

impl Default for MeshConfig {
    fn default() -> Self {
        Self {
            c0: default_c0(),
            theta: default_mesh_theta(),
            beta: 1.0,
            small_d: false,
        }
    }
}

impl MeshConfig {
    pub fn spec(&self, eps: f64) -> smallball::Result<MeshSpec> {
        MeshSpec::new(self.c0, self.theta, self.beta, eps)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodChoice {
    #[default]
    Direct,
    Splitting,
    Both,
}

impl MethodChoice {
    pub fn direct(self) -> bool {
        matches!(self, MethodChoice::Direct | MethodChoice::Both)
    }

    pub fn splitting(self) -> bool {
        matches!(self, MethodChoice::Splitting | MethodChoice::Both)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    #[serde(default)]
    pub method: MethodChoice,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    #[serde(default = "default_particles")]
    pub particles: usize,
    #[serde(default)]
    pub stage_event: StageEvent,
}

fn default_replicas() -> usize {
    1000
}

fn default_particles() -> usize {
    500
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            method: MethodChoice::Direct,
            replicas: default_replicas(),
            particles: default_particles(),
            stage_event: StageEvent::Pinned,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TailConfig {
    pub a: f64,
    pub eps: f64,
    pub lambdas: Vec<f64>,
    #[serde(default = "default_box")]
    pub box_index: usize,
}

fn default_box() -> usize {
    1
}

impl Default for TailConfig {
    fn default() -> Self {
        Self {
            a: 1.0,
            eps: 0.25,
            lambdas: vec![0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0],
            box_index: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GirsanovConfig {
    /// Amplitude of the constant drift removed by the change of measure.
    pub g_bound: f64,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
}

impl Default for GirsanovConfig {
    fn default() -> Self {
        Self {
            g_bound: 0.3,
            replicas: default_replicas(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Csv,
    /// CSV tables plus a JSON copy of every table.
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub directory: String,
    /// Times at which `simulate` stores the field.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub checkpoints: Vec<f64>,
    #[serde(default)]
    pub format: OutputFormat,
}

fn default_dir() -> String {
    "out".into()
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: default_dir(),
            checkpoints: Vec::new(),
            format: OutputFormat::Csv,
        }
    }
}

/// One violated condition, located by its dotted path in the config.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Issue {
    pub path: String,
    pub message: String,
}

impl Issue {
    fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

/// Parses and checks a JSON config, reporting every violation found.
pub fn validate_config(raw: &str) -> Result<ExperimentConfig, Vec<Issue>> {
    let de = &mut serde_json::Deserializer::from_str(raw);
    let config: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let path = if path == "." { "$".to_string() } else { path };
        vec![Issue::new(path, e.into_inner().to_string())]
    })?;
    let issues = check(&config);
    if issues.is_empty() {
        Ok(config)
    } else {
        Err(issues)
    }
}

fn positive(v: f64) -> bool {
    v > 0.0 && v.is_finite()
}

/// Load-time hypothesis checks on an already parsed config.
pub fn check(c: &ExperimentConfig) -> Vec<Issue> {
    let mut out = Vec::new();
    let mut push = |p: &str, m: String| out.push(Issue::new(p, m));

    let g = &c.grid;
    if g.nx < 4 {
        push("grid.nx", format!("need at least 4 cells, got {}", g.nx));
    }
    if !positive(g.t_end) {
        push("grid.T", format!("horizon must be positive, got {}", g.t_end));
    }
    if let Some(dt) = g.dt {
        if !positive(dt) {
            push("grid.dt", format!("time step must be positive, got {dt}"));
        }
    }
    if !positive(g.nu) {
        push("grid.nu", format!("diffusivity must be positive, got {}", g.nu));
    }
    if !(0.0..=1.0).contains(&g.theta) {
        push("grid.theta", format!("scheme weight must lie in [0, 1], got {}", g.theta));
    }

    let s = &c.sigma;
    if !positive(s.c1) {
        push("sigma.C1", format!("lower ellipticity bound must be positive, got {}", s.c1));
    }
    if !s.c2.is_finite() {
        push("sigma.C2", "upper ellipticity bound must be finite".into());
    }
    if s.c1 > s.c2 {
        push("sigma", format!("ellipticity bounds inverted: C1 = {} > C2 = {}", s.c1, s.c2));
    }
    if !(s.d >= 0.0 && s.d.is_finite()) {
        push("sigma.D", format!("Hölder constant must be nonnegative, got {}", s.d));
    }
    if !(s.alpha > 0.0 && s.alpha <= 1.0) {
        push("sigma.alpha", format!("Hölder exponent must lie in (0, 1], got {}", s.alpha));
    }
    if !positive(s.m) {
        push("sigma.M", format!("clipping level must be positive, got {}", s.m));
    }
    if s.family == SigmaFamily::Constant && s.c1 != s.c2 {
        push("sigma", format!("constant family needs C1 = C2, got {} and {}", s.c1, s.c2));
    }

    match c.drift {
        DriftConfig::Constant { value: v } | DriftConfig::BoundedProfile { amplitude: v } if !v.is_finite() => {
            push("drift", "drift bound must be finite".into())
        }
        _ => {}
    }

    let e = &c.event;
    if !positive(e.eps) {
        push("event.eps", format!("radius must be positive, got {}", e.eps));
    }
    for (i, r) in e.eps_sweep.iter().enumerate() {
        if !positive(*r) {
            push(&format!("event.eps_sweep[{i}]"), format!("radius must be positive, got {r}"));
        }
    }
    let smallest = e.radii().into_iter().fold(f64::INFINITY, f64::min);
    if smallest.is_finite() && smallest > 0.0 {
        let gap = initial_gap(&e.u0, &e.h, smallball::estimator::GAP_SAMPLES);
        if gap >= smallest / 2.0 {
            push(
                "event.u0",
                format!("initial gap sup|u0 - h(0,.)| = {gap} is not below eps/2 = {}", smallest / 2.0),
            );
        }
    }

    let m = &c.mesh;
    if !(m.c0 > 0.0 && m.c0 < 1.0) {
        push("mesh.c0", format!("must lie in (0, 1), got {}", m.c0));
    }
    if !positive(m.theta) {
        push("mesh.theta", format!("must be positive, got {}", m.theta));
    }
    if !positive(m.beta) {
        push("mesh.beta", format!("must be positive, got {}", m.beta));
    }
    let alpha = c.sigma.holder_exponent();
    if m.beta < 2.0 - alpha && !beta_on_boundary(alpha, m.beta) {
        push(
            "mesh.beta",
            format!("beta < 2 - alpha: beta = {} with alpha = {alpha}", m.beta),
        );
    }

    let est = &c.estimator;
    if est.replicas == 0 {
        push("estimator.replicas", "replica count must be at least 1".into());
    }
    if est.method.splitting() && est.particles < 2 {
        push("estimator.particles", format!("splitting needs at least 2 particles, got {}", est.particles));
    }

    let t = &c.tail;
    if !positive(t.a) {
        push("tail.a", format!("time scale must be positive, got {}", t.a));
    }
    if !positive(t.eps) {
        push("tail.eps", format!("radius must be positive, got {}", t.eps));
    }
    if t.lambdas.is_empty() || t.lambdas[0] < 0.0 || t.lambdas.windows(2).any(|w| w[1] <= w[0]) {
        push("tail.lambdas", "must be a nonempty increasing list of nonnegative values".into());
    }
    if t.box_index == 0 {
        push("tail.box_index", "box index starts at 1".into());
    }

    if !c.girsanov.g_bound.is_finite() {
        push("girsanov.g_bound", "drift bound must be finite".into());
    }
    if c.girsanov.replicas < 2 {
        push("girsanov.replicas", "need at least two replicas".into());
    }

    for (i, t) in c.output.checkpoints.iter().enumerate() {
        if !(*t >= 0.0 && *t <= c.grid.t_end) {
            push(&format!("output.checkpoints[{i}]"), format!("time {t} lies outside [0, T]"));
        }
    }
    out
}

/// Hypotheses that cannot be checked from the config alone.
pub fn unenforced_hypotheses(c: &ExperimentConfig) -> Vec<String> {
    let mut out = vec![
        "eps below the unknown threshold eps0: the small-ball constants have no explicit values".to_string(),
        "sigma bounds and Hölder modulus are certified by sampling, not proved".to_string(),
    ];
    let alpha = c.sigma.holder_exponent();
    if beta_on_boundary(alpha, c.mesh.beta) {
        out.push(if c.mesh.small_d {
            "beta = 2 - alpha relies on the small-D regime, asserted by mesh.small_d but not checkable".to_string()
        } else {
            "beta = 2 - alpha relies on the small-D regime (D < D0, D0 unknown)".to_string()
        });
    }
    if !matches!(c.drift, DriftConfig::Zero) {
        out.push("drift enters through its sampled sup bound only".to_string());
    }
    out
}
