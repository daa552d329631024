//! Batch front end: TOML run configs, dispatch to the library, a versioned
//! JSON result document plus CSV side files per run.

use crate::ballistic_det::eulerian::refinement_study;
use crate::ballistic_det::{
    default_candidate_grid, interpolate_max, interpolate_min, interpolation_bound, max_interpolation_bound, optimal_map_max,
    optimal_map_min, InterpolationCertificate, MapReport,
};
use crate::bolza::{hamiltonian_system_check, solve_bolza, BolzaInstance, BoundaryCost};
use crate::convex_core::{
    check_assumptions, dual_lagrangian, hamiltonian, ConvexFunctionSamples, LagrangianSpec, Potential, Profile, SampleKind,
};
use crate::discrete_ot::{brenier_W, solve_kantorovich, Sense};
use crate::dynamic_cost::{ballistic_cost, dual_hopf_lax_backward, fixed_end_cost, hopf_lax_backward, hopf_lax_forward, GridField};
use crate::error::{Error, Result};
use crate::lattice::{dot, Lattice};
use crate::measures::{DiscreteMeasure, Space};
use crate::stochastic_ctrl::{
    ballistic_max_stoch, ballistic_min_stoch, extract_drift, hjb_backward, mt_cost_nodes, simulate_policy, ControlPolicy, ControlSet,
    WalkLattice, MT_TOL,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

/// Version of the result document layout.
pub const SCHEMA: u32 = 1;
pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_NOT_CERTIFIED: i32 = 2;
const RESULT_FILE: &str = "result.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Cost,
    Transport,
    Interpolate,
    Map,
    HopfLax,
    Hjb,
    Bolza,
    Verify,
    Eulerian,
}

impl Command {
    pub fn as_str(self) -> &'static str {
        match self {
            Command::Cost => "cost",
            Command::Transport => "transport",
            Command::Interpolate => "interpolate",
            Command::Map => "map",
            Command::HopfLax => "hopf-lax",
            Command::Hjb => "hjb",
            Command::Bolza => "bolza",
            Command::Verify => "verify",
            Command::Eulerian => "eulerian",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LagrangianBlock {
    QuadraticFree {
        #[serde(default = "one")]
        dim: usize,
    },
    Harmonic {
        #[serde(default = "one")]
        dim: usize,
        alpha: f64,
        beta: f64,
    },
    PowerKinetic {
        #[serde(default = "one")]
        dim: usize,
        delta: f64,
    },
    StatePotential {
        #[serde(default = "one")]
        dim: usize,
        potential: PotentialName,
        kappa: f64,
    },
    Tabulated {
        knots: Vec<f64>,
        values: Vec<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PotentialName {
    Quadratic,
    Quartic,
}

fn one() -> usize {
    1
}

impl LagrangianBlock {
    pub fn build(&self) -> Result<LagrangianSpec> {
        match self {
            LagrangianBlock::QuadraticFree { dim } => Ok(LagrangianSpec::quadratic_free(*dim)),
            LagrangianBlock::Harmonic { dim, alpha, beta } => LagrangianSpec::harmonic(*dim, *alpha, *beta),
            LagrangianBlock::PowerKinetic { dim, delta } => LagrangianSpec::power_kinetic(*dim, *delta),
            LagrangianBlock::StatePotential { dim, potential, kappa } => {
                let p = match potential {
                    PotentialName::Quadratic => Potential::Quadratic { kappa: *kappa },
                    PotentialName::Quartic => Potential::Quartic { kappa: *kappa },
                };
                LagrangianSpec::state_potential(*dim, p)
            }
            LagrangianBlock::Tabulated { knots, values } => LagrangianSpec::tabulated(knots.clone(), values.clone()),
        }
    }
}

/// A measure given by a file in the measures text format or inline.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureBlock {
    pub file: Option<PathBuf>,
    pub atoms: Option<Vec<Vec<f64>>>,
    pub weights: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointsBlock {
    pub v: Vec<f64>,
    pub x: Vec<f64>,
    /// Optional start point for the fixed-end cost `c_T(y, x)`.
    pub y: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairCost {
    /// `b_T(v, x)` between a costate source and a state target.
    #[default]
    Ballistic,
    /// `c_T(y, x)` between two state measures.
    FixedEnd,
    /// `⟨v, x⟩`.
    InnerProduct,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransportBlock {
    #[serde(default)]
    pub cost: PairCost,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterpolateBlock {
    /// Uniform fill points added to the 1-d candidate grid.
    #[serde(default = "default_fill")]
    pub fill: usize,
}

fn default_fill() -> usize {
    41
}

impl Default for InterpolateBlock {
    fn default() -> Self {
        InterpolateBlock { fill: default_fill() }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxBlock {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl BoxBlock {
    fn lattice(&self, dim: usize) -> Result<Lattice> {
        Lattice::uniform(dim, self.lo, self.hi, self.n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HopfLaxDirection {
    Forward,
    Backward,
    DualBackward,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HopfLaxBlock {
    pub direction: HopfLaxDirection,
    /// Evaluation time: `t` for the forward solve, the slice time for backward ones.
    pub time: f64,
    pub data: BoxBlock,
    pub eval: BoxBlock,
}

/// Terminal or initial data sampled on a grid.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FunctionBlock {
    /// `⟨slope, x⟩`
    Linear { slope: Vec<f64> },
    /// `curvature |x - center|² / 2`
    Quadratic {
        curvature: f64,
        #[serde(default)]
        center: Option<Vec<f64>>,
    },
    /// Explicit values at the grid nodes, in grid order.
    Table { values: Vec<f64> },
}

impl FunctionBlock {
    fn eval(&self, x: &[f64]) -> Result<f64> {
        match self {
            FunctionBlock::Linear { slope } => {
                if slope.len() != x.len() {
                    return Err(Error::invalid("slope dimension does not match the grid"));
                }
                Ok(dot(slope, x))
            }
            FunctionBlock::Quadratic { curvature, center } => {
                let c = center.clone().unwrap_or_else(|| vec![0.0; x.len()]);
                Ok(0.5 * curvature * x.iter().zip(&c).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
            }
            FunctionBlock::Table { .. } => Err(Error::invalid("table data has no closed form")),
        }
    }

    fn sample(&self, points: &[Vec<f64>]) -> Result<Vec<f64>> {
        match self {
            FunctionBlock::Table { values } => {
                if values.len() != points.len() {
                    return Err(Error::invalid(format!("table has {} values for {} grid nodes", values.len(), points.len())));
                }
                Ok(values.clone())
            }
            _ => points.iter().map(|p| self.eval(p)).collect(),
        }
    }

    fn kind(&self) -> SampleKind {
        match self {
            FunctionBlock::Linear { .. } => SampleKind::Concave,
            FunctionBlock::Quadratic { curvature, .. } if *curvature >= 0.0 => SampleKind::Convex,
            FunctionBlock::Quadratic { .. } => SampleKind::Concave,
            FunctionBlock::Table { .. } => SampleKind::General,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeBlock {
    pub lo: f64,
    pub hi: f64,
    pub steps: usize,
    /// `Δt / Δx²`; must stay below 1.
    #[serde(default = "default_ratio")]
    pub ratio: f64,
    #[serde(default = "yes")]
    pub noise: bool,
}

fn default_ratio() -> f64 {
    0.5
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlsBlock {
    /// Largest drift; the default rule is used when absent.
    pub b_max: Option<f64>,
    #[serde(default = "default_per_side")]
    pub per_side: usize,
}

fn default_per_side() -> usize {
    crate::stochastic_ctrl::DEFAULT_CONTROLS_PER_SIDE
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HjbTask {
    #[default]
    Value,
    MtCost,
    BallisticMin,
    BallisticMax,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HjbBlock {
    #[serde(default)]
    pub task: HjbTask,
}

/// `ν_T` as the law at `T` of the constant-drift walk from `start` (default:
/// the source measure).
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WalkBlock {
    pub drift: f64,
    pub start: Option<MeasureBlock>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BolzaBlock {
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EulerianBlock {
    pub sizes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyBlock {
    pub profile: Option<Profile>,
    /// Random candidates per inequality check.
    #[serde(default = "default_candidates")]
    pub candidates: usize,
}

fn default_candidates() -> usize {
    20
}

impl Default for VerifyBlock {
    fn default() -> Self {
        VerifyBlock { profile: None, candidates: default_candidates() }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    pub horizon: Option<f64>,
    pub sense: Option<Sense>,
    pub seed: Option<u64>,
    pub tol: Option<f64>,
    pub lagrangian: Option<LagrangianBlock>,
    pub source: Option<MeasureBlock>,
    pub target: Option<MeasureBlock>,
    pub points: Option<PointsBlock>,
    pub transport: Option<TransportBlock>,
    pub interpolate: Option<InterpolateBlock>,
    pub hopf_lax: Option<HopfLaxBlock>,
    pub function: Option<FunctionBlock>,
    pub lattice: Option<LatticeBlock>,
    pub controls: Option<ControlsBlock>,
    pub hjb: Option<HjbBlock>,
    pub walk: Option<WalkBlock>,
    pub boundary: Option<BoundaryCost>,
    pub bolza: Option<BolzaBlock>,
    pub eulerian: Option<EulerianBlock>,
    pub verify: Option<VerifyBlock>,
}

/// Config text with its location, for file references and error lines.
pub struct ConfigSource {
    pub text: String,
    pub base_dir: PathBuf,
}

impl ConfigSource {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(ConfigSource { text, base_dir })
    }

    pub fn parse(&self) -> Result<RunConfig> {
        if self.text.trim().is_empty() {
            return Err(Error::Config { line: 1, msg: "config is empty; it needs at least `command = \"...\"`".into() });
        }
        toml::from_str(&self.text).map_err(|e| {
            let line = e.span().map_or(1, |s| line_at(&self.text, s.start));
            Error::Config { line, msg: e.message().trim().to_string() }
        })
    }

    /// Line of the first `key = ...` or `[key]` header, or 1.
    fn line_of(&self, key: &str) -> usize {
        self.text
            .lines()
            .position(|l| {
                let l = l.trim_start();
                l.strip_prefix('[').is_some_and(|r| r.trim_start().starts_with(key))
                    || l.strip_prefix(key).is_some_and(|r| r.trim_start().starts_with('='))
            })
            .map_or(1, |i| i + 1)
    }

    fn missing(&self, key: &str, command: Command) -> Error {
        Error::Config { line: self.line_of("command"), msg: format!("command `{}` needs `{key}`", command.as_str()) }
    }

    fn invalid(&self, key: &str, msg: impl Into<String>) -> Error {
        Error::Config { line: self.line_of(key), msg: msg.into() }
    }
}

fn line_at(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Per-run overrides from the command line.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub tol: Option<f64>,
}

/// The versioned result document written to `result.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultDocument {
    pub schema: u32,
    pub command: String,
    /// SHA-256 of the config text, the referenced files, the seed and the tolerance.
    pub inputs_digest: String,
    pub seed: u64,
    pub tol: Option<f64>,
    pub certified: bool,
    pub values: Value,
    /// One entry per non-certified quantity or truncation.
    pub flags: Vec<String>,
    pub artifacts: Vec<String>,
}

impl ResultDocument {
    pub fn exit_code(&self) -> i32 {
        if self.certified {
            EXIT_OK
        } else {
            EXIT_NOT_CERTIFIED
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("result document serializes");
        s.push('\n');
        s
    }
}

/// What a command produced before it is written out.
struct Outcome {
    values: Value,
    certified: bool,
    flags: Vec<String>,
    csv: Vec<(String, String)>,
}

impl Outcome {
    fn exact(values: Value) -> Self {
        Outcome { values, certified: true, flags: Vec::new(), csv: Vec::new() }
    }
}

/// Runs the config at `path` and writes the result document and CSV files to `out`.
pub fn run(path: &Path, out: &Path, overrides: &Overrides) -> Result<ResultDocument> {
    run_source(&ConfigSource::from_file(path)?, out, overrides)
}

pub fn run_source(src: &ConfigSource, out: &Path, overrides: &Overrides) -> Result<ResultDocument> {
    let cfg = src.parse()?;
    let seed = overrides.seed.or(cfg.seed).unwrap_or(0);
    let tol = overrides.tol.or(cfg.tol);
    if let Some(t) = tol {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::invalid(format!("tolerance must be positive, got {t}")));
        }
    }
    let mut hasher = Sha256::new();
    hasher.update(src.text.as_bytes());
    for file in referenced_files(&cfg) {
        let bytes =
            std::fs::read(src.base_dir.join(&file)).map_err(|e| src.invalid("file", format!("cannot read {}: {e}", file.display())))?;
        hasher.update(&bytes);
    }
    hasher.update(seed.to_le_bytes());
    hasher.update(tol.map_or([0u8; 8], f64::to_le_bytes));
    let inputs_digest: String = hasher.finalize().iter().map(|b| format!("{b:02x}")).collect();

    let ctx = Ctx { src, cfg: &cfg, seed, tol };
    let outcome = dispatch(&ctx).map_err(|e| e.context(format!("command `{}`", cfg.command.as_str())))?;

    std::fs::create_dir_all(out).map_err(|e| Error::Io(format!("{}: {e}", out.display())))?;
    let mut artifacts = Vec::new();
    for (name, body) in &outcome.csv {
        std::fs::write(out.join(name), body).map_err(|e| Error::Io(format!("{name}: {e}")))?;
        artifacts.push(name.clone());
    }
    let doc = ResultDocument {
        schema: SCHEMA,
        command: cfg.command.as_str().to_string(),
        inputs_digest,
        seed,
        tol,
        certified: outcome.certified,
        values: outcome.values,
        flags: outcome.flags,
        artifacts,
    };
    std::fs::write(out.join(RESULT_FILE), doc.to_json()).map_err(|e| Error::Io(format!("{RESULT_FILE}: {e}")))?;
    Ok(doc)
}

fn referenced_files(cfg: &RunConfig) -> Vec<PathBuf> {
    let blocks = [cfg.source.as_ref(), cfg.target.as_ref(), cfg.walk.as_ref().and_then(|w| w.start.as_ref())];
    blocks.into_iter().flatten().filter_map(|b| b.file.clone()).collect()
}

struct Ctx<'a> {
    src: &'a ConfigSource,
    cfg: &'a RunConfig,
    seed: u64,
    tol: Option<f64>,
}

impl Ctx<'_> {
    fn lagrangian(&self) -> Result<LagrangianSpec> {
        let block = self.cfg.lagrangian.as_ref().ok_or_else(|| self.src.missing("[lagrangian]", self.cfg.command))?;
        block.build().map_err(|e| e.context("lagrangian"))
    }

    fn horizon(&self) -> Result<f64> {
        let t = self.cfg.horizon.ok_or_else(|| self.src.missing("horizon", self.cfg.command))?;
        if !(t > 0.0 && t.is_finite()) {
            return Err(self.src.invalid("horizon", format!("horizon must be positive, got {t}")));
        }
        Ok(t)
    }

    fn sense(&self) -> Sense {
        self.cfg.sense.unwrap_or(Sense::Min)
    }

    fn measure(&self, block: &MeasureBlock, key: &str, space: Space) -> Result<DiscreteMeasure> {
        let m = match (&block.file, &block.atoms) {
            (Some(file), None) => {
                if block.weights.is_some() {
                    return Err(self.src.invalid(key, format!("`{key}` takes either `file` or `atoms` with `weights`")));
                }
                let m = DiscreteMeasure::from_file(self.src.base_dir.join(file)).map_err(|e| e.context(file.display().to_string()))?;
                if m.space() != space {
                    return Err(self.src.invalid(
                        key,
                        format!("{} holds a {} measure but `{key}` must be {}", file.display(), m.space().as_str(), space.as_str()),
                    ));
                }
                m
            }
            (None, Some(atoms)) => {
                let weights = block.weights.clone().unwrap_or_else(|| vec![1.0 / atoms.len().max(1) as f64; atoms.len()]);
                DiscreteMeasure::new(atoms.clone(), weights, space).map_err(|e| e.context(key.to_string()))?
            }
            _ => return Err(self.src.invalid(key, format!("`{key}` needs exactly one of `file` or `atoms`"))),
        };
        Ok(m)
    }

    fn source(&self, space: Space) -> Result<DiscreteMeasure> {
        let b = self.cfg.source.as_ref().ok_or_else(|| self.src.missing("[source]", self.cfg.command))?;
        self.measure(b, "source", space)
    }

    fn target(&self, space: Space) -> Result<DiscreteMeasure> {
        let b = self.cfg.target.as_ref().ok_or_else(|| self.src.missing("[target]", self.cfg.command))?;
        self.measure(b, "target", space)
    }

    /// Certification against `--tol` when given, else the library's own rule.
    fn certify(&self, residual: f64, own: bool) -> bool {
        self.tol.map_or(own, |t| residual.abs() <= t)
    }
}

fn dispatch(ctx: &Ctx) -> Result<Outcome> {
    match ctx.cfg.command {
        Command::Cost => cost(ctx),
        Command::Transport => transport(ctx),
        Command::Interpolate => interpolate(ctx),
        Command::Map => map(ctx),
        Command::HopfLax => hopf_lax(ctx),
        Command::Hjb => hjb(ctx),
        Command::Bolza => bolza(ctx),
        Command::Verify => verify(ctx),
        Command::Eulerian => eulerian(ctx),
    }
}

fn cost(ctx: &Ctx) -> Result<Outcome> {
    let l = ctx.lagrangian()?;
    let t = ctx.horizon()?;
    let p = ctx.cfg.points.as_ref().ok_or_else(|| ctx.src.missing("[points]", Command::Cost))?;
    let value = ballistic_cost(&l, &p.v, &p.x, t).map_err(|e| e.context("dynamic_cost"))?;
    let mut values = json!({ "value": value, "v": p.v, "x": p.x, "horizon": t });
    if let Some(y) = &p.y {
        let c = fixed_end_cost(&l, y, &p.x, t).map_err(|e| e.context("dynamic_cost"))?;
        values["fixed_end"] = json!(c.finite());
    }
    Ok(Outcome::exact(values))
}

fn transport(ctx: &Ctx) -> Result<Outcome> {
    let kind = ctx.cfg.transport.clone().unwrap_or_default().cost;
    let sense = ctx.sense();
    let (plan, cost_name) = match kind {
        PairCost::InnerProduct => {
            let (mu, nu) = (ctx.source(Space::Costate)?, ctx.target(Space::State)?);
            (brenier_W(&mu, &nu, sense).map_err(|e| e.context("discrete_ot"))?, "inner-product")
        }
        PairCost::Ballistic => {
            let (l, t) = (ctx.lagrangian()?, ctx.horizon()?);
            let (mu, nu) = (ctx.source(Space::Costate)?, ctx.target(Space::State)?);
            let cost = crate::ballistic_det::ballistic_cost_matrix(&l, &mu, &nu, t).map_err(|e| e.context("ballistic_det"))?;
            (solve_kantorovich(&cost, &mu, &nu, sense).map_err(|e| e.context("discrete_ot"))?, "ballistic")
        }
        PairCost::FixedEnd => {
            let (l, t) = (ctx.lagrangian()?, ctx.horizon()?);
            let (mu, nu) = (ctx.source(Space::State)?, ctx.target(Space::State)?);
            let cost = crate::ballistic_det::fixed_end_cost_matrix(&l, &mu, &nu, t).map_err(|e| e.context("ballistic_det"))?;
            (solve_kantorovich(&cost, &mu, &nu, sense).map_err(|e| e.context("discrete_ot"))?, "fixed-end")
        }
    };
    let mut csv = String::from("source,target,mass\n");
    for (i, j, m) in plan.support(0.0) {
        csv.push_str(&format!("{i},{j},{m}\n"));
    }
    let mut values = plan.to_json();
    values["cost"] = json!(cost_name);
    values["pairings"] = json!(plan.support(0.0).len());
    Ok(Outcome { values, certified: true, flags: Vec::new(), csv: vec![("plan.csv".into(), csv)] })
}

fn interpolation_outcome(ctx: &Ctx, cert: &InterpolationCertificate) -> Outcome {
    let certified = ctx.certify(cert.gap, cert.certified);
    let mut flags = Vec::new();
    if !certified {
        flags.push(format!("interpolation gap {:e} exceeds tolerance", cert.gap));
    }
    if !cert.kinks.is_empty() {
        flags.push(format!("convex potential has kinks at target atoms {:?}", cert.kinks));
    }
    let mut csv = String::from("weight,coords\n");
    for (a, w) in cert.interpolant.atoms().iter().zip(cert.interpolant.weights()) {
        csv.push_str(&format!("{w},{}\n", a.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(" ")));
    }
    Outcome {
        values: serde_json::to_value(cert).expect("certificate serializes"),
        certified,
        flags,
        csv: vec![("interpolant.csv".into(), csv)],
    }
}

fn interpolate(ctx: &Ctx) -> Result<Outcome> {
    let (l, t) = (ctx.lagrangian()?, ctx.horizon()?);
    let (mu0, nu_t) = (ctx.source(Space::Costate)?, ctx.target(Space::State)?);
    let cert = match ctx.sense() {
        Sense::Min => {
            let fill = ctx.cfg.interpolate.clone().unwrap_or_default().fill;
            let grid = default_candidate_grid(&l, &mu0, &nu_t, t, fill).map_err(|e| e.context("ballistic_det"))?;
            interpolate_min(&l, &mu0, &nu_t, t, &grid)
        }
        Sense::Max => interpolate_max(&l, &mu0, &nu_t, t),
    }
    .map_err(|e| e.context("ballistic_det"))?;
    Ok(interpolation_outcome(ctx, &cert))
}

fn map_outcome(ctx: &Ctx, report: &MapReport) -> Outcome {
    let certified = ctx.certify(report.cost_error, report.certified);
    let mut flags = Vec::new();
    if !report.hits_target {
        flags.push(format!("push-forward misses the target (atom error {:e})", report.max_atom_error));
    }
    if !certified {
        flags.push(format!("transported cost differs from the LP value by {:e}", report.cost_error));
    }
    Outcome {
        values: serde_json::to_value(report).expect("map report serializes"),
        certified,
        flags,
        csv: vec![("map.csv".into(), report.to_csv())],
    }
}

fn map(ctx: &Ctx) -> Result<Outcome> {
    let (l, t) = (ctx.lagrangian()?, ctx.horizon()?);
    let (mu0, nu_t) = (ctx.source(Space::Costate)?, ctx.target(Space::State)?);
    let report = match ctx.sense() {
        Sense::Min => optimal_map_min(&l, &mu0, &nu_t, t),
        Sense::Max => optimal_map_max(&l, &mu0, &nu_t, t),
    }
    .map_err(|e| e.context("ballistic_det"))?;
    Ok(map_outcome(ctx, &report))
}

fn field_summary(field: &GridField) -> (Value, usize) {
    let pinned = field.pinned.iter().flatten().filter(|&&p| p).count();
    let slices: Vec<Value> = field
        .times
        .iter()
        .zip(&field.values)
        .map(|(t, v)| json!({ "t": t, "values": v.iter().map(|e| e.finite()).collect::<Vec<_>>() }))
        .collect();
    (json!({ "tag": field.tag, "slices": slices, "pinned": pinned }), pinned)
}

fn hopf_lax(ctx: &Ctx) -> Result<Outcome> {
    let l = ctx.lagrangian()?;
    let block = ctx.cfg.hopf_lax.as_ref().ok_or_else(|| ctx.src.missing("[hopf_lax]", Command::HopfLax))?;
    let f = ctx.cfg.function.as_ref().ok_or_else(|| ctx.src.missing("[function]", Command::HopfLax))?;
    let data_grid = block.data.lattice(l.dim)?;
    let eval_grid = block.eval.lattice(l.dim)?;
    let samples = ConvexFunctionSamples::new(data_grid.clone(), f.sample(&data_grid.points())?, f.kind())?;
    let field = match block.direction {
        HopfLaxDirection::Forward => hopf_lax_forward(&l, &samples, block.time, &eval_grid),
        HopfLaxDirection::Backward => hopf_lax_backward(&l, &samples, block.time, ctx.horizon()?, &eval_grid),
        HopfLaxDirection::DualBackward => {
            let dual = dual_lagrangian(&l)?;
            dual_hopf_lax_backward(&dual, &samples, block.time, ctx.horizon()?, &eval_grid)
        }
    }
    .map_err(|e| e.context("dynamic_cost"))?;
    let (values, pinned) = field_summary(&field);
    let flags = if pinned > 0 { vec![format!("{pinned} grid values have an extremizer on the data box boundary")] } else { Vec::new() };
    Ok(Outcome { values, certified: pinned == 0, flags, csv: vec![("field.csv".into(), field.to_csv())] })
}

fn walk_setup(ctx: &Ctx, l: &LagrangianSpec, max_costate: f64) -> Result<(WalkLattice, ControlSet)> {
    let block = ctx.cfg.lattice.as_ref().ok_or_else(|| ctx.src.missing("[lattice]", Command::Hjb))?;
    if l.dim != 1 {
        return Err(Error::Unsupported("walk lattices are one-dimensional".into()));
    }
    let mut lattice =
        WalkLattice::covering(block.lo, block.hi, ctx.horizon()?, block.steps, block.ratio).map_err(|e| e.context("stochastic_ctrl"))?;
    if !block.noise {
        lattice = lattice.without_noise();
    }
    let controls = match &ctx.cfg.controls {
        Some(ControlsBlock { b_max: Some(b), per_side }) => ControlSet::uniform(*b, *per_side)?,
        _ => ControlSet::default_for(&lattice, max_costate)?,
    };
    Ok((lattice, controls))
}

fn node_law(ctx: &Ctx, lattice: &WalkLattice, m: &DiscreteMeasure, key: &str) -> Result<Vec<f64>> {
    lattice.node_weights(m).map_err(|e| ctx.src.invalid(key, format!("{key}: {e}")))
}

/// `ν_T` on the lattice: the explicit target, or the walk law from `[walk]`.
/// For a walk started at the source, also the walk's expected cost.
fn walk_target(ctx: &Ctx, l: &LagrangianSpec, lattice: &WalkLattice, controls: &ControlSet) -> Result<(Vec<f64>, Option<f64>)> {
    match (&ctx.cfg.target, &ctx.cfg.walk) {
        (Some(_), None) => Ok((node_law(ctx, lattice, &ctx.target(Space::State)?, "target")?, None)),
        (None, Some(walk)) => {
            let start = match &walk.start {
                Some(b) => ctx.measure(b, "walk", Space::State)?,
                None => ctx.source(Space::State)?,
            };
            let start = node_law(ctx, lattice, &start, "walk")?;
            let policy =
                ControlPolicy::constant(lattice, controls, walk.drift).map_err(|e| ctx.src.invalid("walk", format!("walk drift: {e}")))?;
            let out = simulate_policy(l, &policy, &start)?;
            Ok((out.law, walk.start.is_none().then_some(out.cost)))
        }
        _ => Err(ctx.src.invalid("command", "the terminal law needs exactly one of [target] or [walk]")),
    }
}

fn max_abs_atom(m: &DiscreteMeasure) -> f64 {
    m.atoms().iter().flatten().fold(0.0, |a: f64, c| a.max(c.abs()))
}

fn control_flags(controls: &ControlSet) -> Vec<String> {
    if controls.clipped {
        vec![format!("control bound clipped to the lattice drift limit {:.6}", controls.b_max())]
    } else {
        Vec::new()
    }
}

fn hjb(ctx: &Ctx) -> Result<Outcome> {
    let l = ctx.lagrangian()?;
    let task = ctx.cfg.hjb.clone().unwrap_or_default().task;
    match task {
        HjbTask::Value => {
            let f = ctx.cfg.function.as_ref().ok_or_else(|| ctx.src.missing("[function]", Command::Hjb))?;
            let slope = match f {
                FunctionBlock::Linear { slope } => slope.iter().fold(0.0, |a: f64, s| a.max(s.abs())),
                _ => 1.0,
            };
            let (lattice, controls) = walk_setup(ctx, &l, slope)?;
            let points: Vec<Vec<f64>> = lattice.points().into_iter().map(|x| vec![x]).collect();
            let field = hjb_backward(&l, &f.sample(&points)?, &lattice, &controls).map_err(|e| e.context("stochastic_ctrl"))?;
            let policy = extract_drift(&field, &l).map_err(|e| e.context("stochastic_ctrl"))?;
            let mut flags = control_flags(&controls);
            if policy.bound_hits > 0 {
                flags.push(format!("{} DP steps chose a drift at the control bound", policy.bound_hits));
            }
            let values = json!({
                "nodes": lattice.points(),
                "initial": field.initial(),
                "dt": lattice.dt(),
                "dx": lattice.dx,
                "b_max": controls.b_max(),
                "bound_hits": policy.bound_hits,
                "consistency_residual": policy.consistency_residual,
            });
            Ok(Outcome {
                values,
                certified: policy.bound_hits == 0,
                flags,
                csv: vec![("value_field.csv".into(), field.to_csv()), ("policy.csv".into(), policy.to_csv())],
            })
        }
        HjbTask::MtCost => {
            let nu0_m = ctx.source(Space::State)?;
            let (lattice, controls) = walk_setup(ctx, &l, 0.0)?;
            let nu0 = node_law(ctx, &lattice, &nu0_m, "source")?;
            let (nu_t, walk_cost) = walk_target(ctx, &l, &lattice, &controls)?;
            let mut r = mt_cost_nodes(&l, &nu0, &nu_t, &lattice, &controls, None).map_err(|e| e.context("stochastic_ctrl"))?;
            // the walk itself is a feasible policy
            if let Some(c) = walk_cost {
                r.upper = Some(r.upper.map_or(c, |u| u.min(c)));
                r.certified |= c - r.value <= MT_TOL * (1.0 + r.value.abs());
            }
            let certified = ctx.certify(r.upper.map_or(f64::INFINITY, |u| u - r.value), r.certified);
            let mut flags = control_flags(&controls);
            if !certified {
                flags.push(format!("transport cost not certified (supergradient norm {:e})", r.supergradient_norm));
            }
            let mut csv = String::from("x,potential\n");
            for (x, f) in lattice.points().iter().zip(&r.potential) {
                csv.push_str(&format!("{x},{f}\n"));
            }
            Ok(Outcome {
                values: serde_json::to_value(&r).expect("serializes"),
                certified,
                flags,
                csv: vec![("potential.csv".into(), csv)],
            })
        }
        HjbTask::BallisticMin => {
            let mu0 = ctx.source(Space::Costate)?;
            let (lattice, controls) = walk_setup(ctx, &l, max_abs_atom(&mu0))?;
            let (nu_t, _) = walk_target(ctx, &l, &lattice, &controls)?;
            let nu_t = lattice.measure(&nu_t, Space::State)?;
            let rel_tol = ctx.tol.unwrap_or(0.02);
            let r = ballistic_min_stoch(&l, &mu0, &nu_t, &lattice, &controls, rel_tol).map_err(|e| e.context("stochastic_ctrl"))?;
            let mut flags = control_flags(&controls);
            if !r.certified {
                flags.push(format!("relative primal-dual gap {:e} exceeds {rel_tol:e}", r.relative_gap));
            }
            let mut csv = String::from("x,interpolant,potential\n");
            for ((x, w), f) in lattice.points().iter().zip(&r.interpolant).zip(&r.potential) {
                csv.push_str(&format!("{x},{w},{f}\n"));
            }
            Ok(Outcome {
                values: serde_json::to_value(&r).expect("serializes"),
                certified: r.certified,
                flags,
                csv: vec![("interpolant.csv".into(), csv)],
            })
        }
        HjbTask::BallisticMax => {
            let mu0 = ctx.source(Space::Costate)?;
            let nu_t = ctx.target(Space::State)?;
            let (lattice, controls) = walk_setup(ctx, &l, max_abs_atom(&mu0))?;
            let rel_tol = ctx.tol.unwrap_or(0.05);
            let r = ballistic_max_stoch(&l, &mu0, &nu_t, &lattice, &controls, rel_tol).map_err(|e| e.context("stochastic_ctrl"))?;
            let mut flags = control_flags(&controls);
            if !r.certified {
                flags.push(format!("relative bracket width {:e} exceeds {rel_tol:e}", r.relative_width));
            }
            let mut csv = String::from("v,policy_law\n");
            for (v, w) in lattice.points().iter().zip(&r.policy_law) {
                csv.push_str(&format!("{v},{w}\n"));
            }
            Ok(Outcome {
                values: serde_json::to_value(&r).expect("serializes"),
                certified: r.certified,
                flags,
                csv: vec![("costate_law.csv".into(), csv)],
            })
        }
    }
}

fn bolza(ctx: &Ctx) -> Result<Outcome> {
    let l = ctx.lagrangian()?;
    let t = ctx.horizon()?;
    let boundary = ctx.cfg.boundary.clone().ok_or_else(|| ctx.src.missing("[boundary]", Command::Bolza))?;
    let steps = ctx.cfg.bolza.as_ref().ok_or_else(|| ctx.src.missing("[bolza]", Command::Bolza))?.steps;
    let inst = BolzaInstance::new(l.clone(), boundary, t, steps).map_err(|e| e.context("bolza"))?;
    let sol = solve_bolza(&inst).map_err(|e| e.context("bolza"))?;
    let report = hamiltonian_system_check(&sol, &hamiltonian(&l)?).map_err(|e| e.context("bolza"))?;
    let certified = ctx.certify(sol.gap, sol.gap.abs() <= sol.tolerance);
    let mut flags = Vec::new();
    if !certified {
        flags.push(format!("duality gap {:e} exceeds tolerance", sol.gap));
    }
    if let Some(note) = &sol.dual_note {
        flags.push(note.clone());
    }
    let values = json!({
        "primal_value": sol.primal_value,
        "dual_value": sol.dual_value,
        "gap": sol.gap,
        "tolerance": sol.tolerance,
        "clause": sol.clause,
        "residuals": report,
    });
    Ok(Outcome { values, certified, flags, csv: vec![("arcs.csv".into(), sol.to_csv())] })
}

fn eulerian(ctx: &Ctx) -> Result<Outcome> {
    let (l, t) = (ctx.lagrangian()?, ctx.horizon()?);
    let (mu0, nu_t) = (ctx.source(Space::Costate)?, ctx.target(Space::State)?);
    let sizes = ctx.cfg.eulerian.as_ref().map_or_else(|| vec![16, 32, 64], |e| e.sizes.clone());
    if sizes.is_empty() {
        return Err(ctx.src.invalid("sizes", "eulerian needs at least one grid size"));
    }
    let reports = refinement_study(&l, &mu0, &nu_t, t, &sizes).map_err(|e| e.context("ballistic_det"))?;
    let rel_tol = ctx.tol.unwrap_or(0.05);
    let last = reports.last().expect("non-empty");
    let certified = last.within(rel_tol);
    let mut flags = Vec::new();
    if !certified {
        flags.push(format!("finest relative error {:?} exceeds {rel_tol:e}", last.relative_error));
    }
    let mut csv = String::from("cells,steps,value,lp_value,relative_error\n");
    for r in &reports {
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        csv.push_str(&format!("{},{},{},{},{}\n", r.grid.cells, r.grid.steps, opt(r.value), r.lp_value, opt(r.relative_error)));
    }
    Ok(Outcome { values: json!({ "reports": reports }), certified, flags, csv: vec![("refinement.csv".into(), csv)] })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct Check {
    name: String,
    passed: bool,
    detail: Value,
}

fn random_measure(rng: &mut ChaCha8Rng, around: &DiscreteMeasure, spread: f64, space: Space) -> Result<DiscreteMeasure> {
    let k = rng.random_range(1..=around.len().max(1) + 1);
    let atoms: Vec<Vec<f64>> = (0..k)
        .map(|_| {
            let base = &around.atoms()[rng.random_range(0..around.len())];
            base.iter().map(|c| c + rng.random_range(-spread..spread)).collect()
        })
        .collect();
    let w: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..1.0)).collect();
    let s: f64 = w.iter().sum();
    DiscreteMeasure::new(atoms, w.iter().map(|x| x / s).collect(), space)
}

fn verify(ctx: &Ctx) -> Result<Outcome> {
    let (l, t) = (ctx.lagrangian()?, ctx.horizon()?);
    let (mu0, nu_t) = (ctx.source(Space::Costate)?, ctx.target(Space::State)?);
    let opts = ctx.cfg.verify.clone().unwrap_or_default();
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let mut checks = Vec::new();

    if let Some(profile) = opts.profile {
        let report = check_assumptions(&l, profile);
        checks.push(Check {
            name: "assumptions".into(),
            passed: report.passed(),
            detail: serde_json::to_value(&report).expect("serializes"),
        });
    }

    let fill = ctx.cfg.interpolate.clone().unwrap_or_default().fill;
    let grid = default_candidate_grid(&l, &mu0, &nu_t, t, fill).map_err(|e| e.context("ballistic_det"))?;
    let min_cert = interpolate_min(&l, &mu0, &nu_t, t, &grid).map_err(|e| e.context("ballistic_det"))?;
    checks.push(Check {
        name: "min-interpolation".into(),
        passed: ctx.certify(min_cert.gap, min_cert.certified),
        detail: json!({ "direct": min_cert.direct_value, "gap": min_cert.gap, "tolerance": min_cert.tolerance }),
    });
    let mut worst = f64::INFINITY;
    for _ in 0..opts.candidates {
        let nu = random_measure(&mut rng, &nu_t, 1.0, Space::State)?;
        let (w, c) = interpolation_bound(&l, &mu0, &nu, &nu_t, t)?;
        worst = worst.min(w + c - min_cert.direct_value);
    }
    checks.push(Check {
        name: "min-interpolation-inequality".into(),
        passed: worst >= -min_cert.tolerance,
        detail: json!({ "candidates": opts.candidates, "min_excess": worst.is_finite().then_some(worst) }),
    });
    let min_map = optimal_map_min(&l, &mu0, &nu_t, t).map_err(|e| e.context("ballistic_det"))?;
    checks.push(Check {
        name: "min-map".into(),
        passed: ctx.certify(min_map.cost_error, min_map.certified),
        detail: json!({ "cost_error": min_map.cost_error, "max_atom_error": min_map.max_atom_error, "hits_target": min_map.hits_target }),
    });

    if dual_lagrangian(&l).is_ok() {
        let max_cert = interpolate_max(&l, &mu0, &nu_t, t).map_err(|e| e.context("ballistic_det"))?;
        checks.push(Check {
            name: "max-interpolation".into(),
            passed: ctx.certify(max_cert.gap, max_cert.certified),
            detail: json!({ "direct": max_cert.direct_value, "gap": max_cert.gap, "tolerance": max_cert.tolerance }),
        });
        let mut worst = f64::INFINITY;
        for _ in 0..opts.candidates {
            let mu = random_measure(&mut rng, &max_cert.interpolant, 1.0, Space::Costate)?;
            let (w, c) = max_interpolation_bound(&l, &mu0, &mu, &nu_t, t)?;
            worst = worst.min(max_cert.direct_value - (w - c));
        }
        checks.push(Check {
            name: "max-interpolation-inequality".into(),
            passed: worst >= -max_cert.tolerance,
            detail: json!({ "candidates": opts.candidates, "min_excess": worst.is_finite().then_some(worst) }),
        });
        let max_map = optimal_map_max(&l, &mu0, &nu_t, t).map_err(|e| e.context("ballistic_det"))?;
        checks.push(Check {
            name: "max-map".into(),
            passed: ctx.certify(max_map.cost_error, max_map.certified),
            detail: json!({ "cost_error": max_map.cost_error, "max_atom_error": max_map.max_atom_error, "hits_target": max_map.hits_target }),
        });
    }

    let flags: Vec<String> = checks.iter().filter(|c| !c.passed).map(|c| format!("check `{}` failed", c.name)).collect();
    let mut csv = String::from("check,passed\n");
    for c in &checks {
        csv.push_str(&format!("{},{}\n", c.name, c.passed));
    }
    Ok(Outcome { values: json!({ "checks": checks }), certified: flags.is_empty(), flags, csv: vec![("checks.csv".into(), csv)] })
}

/// The bundled demo configs, in run order.
pub const DEMOS: [(&str, &str); 3] = [
    ("min-ballistic", include_str!("../demos/min-ballistic.toml")),
    ("max-ballistic", include_str!("../demos/max-ballistic.toml")),
    ("stochastic", include_str!("../demos/stochastic.toml")),
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DemoEntry {
    pub name: String,
    pub command: String,
    pub certified: bool,
    pub inputs_digest: String,
    pub headline: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DemoReport {
    pub schema: u32,
    pub seed: u64,
    pub entries: Vec<DemoEntry>,
    pub all_certified: bool,
}

impl DemoReport {
    pub fn table(&self) -> String {
        let mut s = format!("{:<16} {:<12} {:<10} {}\n", "demo", "command", "certified", "value");
        for e in &self.entries {
            let v = e.headline.map_or("-".to_string(), |v| format!("{v:.6}"));
            s.push_str(&format!("{:<16} {:<12} {:<10} {v}\n", e.name, e.command, e.certified));
        }
        s
    }
}

fn headline(doc: &ResultDocument) -> Option<f64> {
    let v = &doc.values;
    ["direct_value", "value", "upper"].iter().find_map(|k| v.get(*k).and_then(Value::as_f64)).or_else(|| {
        v.get("checks").and_then(|c| c.as_array()).and_then(|c| c.iter().find_map(|c| c["detail"].get("direct").and_then(Value::as_f64)))
    })
}

/// Runs every bundled demo into `out/<name>/` and writes `summary.json` and
/// `summary.txt`.
pub fn demo_suite(out: &Path, seed: u64) -> Result<DemoReport> {
    let mut entries = Vec::new();
    for (name, text) in DEMOS {
        let src = ConfigSource { text: text.to_string(), base_dir: PathBuf::new() };
        let doc = run_source(&src, &out.join(name), &Overrides { seed: Some(seed), tol: None })
            .map_err(|e| e.context(format!("demo `{name}`")))?;
        entries.push(DemoEntry {
            name: name.to_string(),
            command: doc.command.clone(),
            certified: doc.certified,
            inputs_digest: doc.inputs_digest.clone(),
            headline: headline(&doc),
        });
    }
    let all_certified = entries.iter().all(|e| e.certified);
    let report = DemoReport { schema: SCHEMA, seed, entries, all_certified };
    let mut json = serde_json::to_string_pretty(&report).expect("serializes");
    json.push('\n');
    std::fs::write(out.join("summary.json"), json)?;
    std::fs::write(out.join("summary.txt"), report.table())?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn source(text: &str) -> ConfigSource {
        ConfigSource { text: text.into(), base_dir: PathBuf::new() }
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = source("command = \"cost\"\nhorizon = 1.0\nhorizon = 2.0\n").parse().unwrap_err();
        assert!(matches!(err, Error::Config { line: 3, .. }), "{err}");
        let err = source("command = \"teleport\"\n").parse().unwrap_err();
        assert!(matches!(err, Error::Config { line: 1, .. }), "{err}");
        let err = source("   \n").parse().unwrap_err();
        assert!(matches!(err, Error::Config { line: 1, .. }));
    }

    #[test]
    fn missing_block_points_at_the_command() {
        let dir = tempfile::tempdir().unwrap();
        let src = source("# demo\ncommand = \"cost\"\nhorizon = 1.0\n");
        let err = run_source(&src, dir.path(), &Overrides::default()).unwrap_err();
        let Error::Context { source, .. } = err else { panic!("{err}") };
        assert!(matches!(*source, Error::Config { line: 2, .. }), "{source}");
    }

    #[test]
    fn cost_command_free_particle() {
        let dir = tempfile::tempdir().unwrap();
        let src = source("command = \"cost\"\nhorizon = 1.0\n[lagrangian]\nfamily = \"quadratic-free\"\n[points]\nv = [1.0]\nx = [2.0]\n");
        let doc = run_source(&src, dir.path(), &Overrides::default()).unwrap();
        assert!((doc.values["value"].as_f64().unwrap() - 1.5).abs() < 1e-12);
        assert_eq!(doc.schema, 1);
        assert_eq!(doc.exit_code(), EXIT_OK);
        assert!(dir.path().join(RESULT_FILE).exists());
    }

    #[test]
    fn digest_depends_on_seed() {
        let dir = tempfile::tempdir().unwrap();
        let src = source("command = \"cost\"\nhorizon = 1.0\n[lagrangian]\nfamily = \"quadratic-free\"\n[points]\nv = [1.0]\nx = [2.0]\n");
        let a = run_source(&src, dir.path(), &Overrides { seed: Some(1), tol: None }).unwrap();
        let b = run_source(&src, dir.path(), &Overrides { seed: Some(2), tol: None }).unwrap();
        assert_ne!(a.inputs_digest, b.inputs_digest);
        assert_eq!(a.values, b.values);
    }
}
