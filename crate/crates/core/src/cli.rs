//! JSON model specs and the `check | kernel | simulate | region | mcheck` commands.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::carma::{self, CarmaModel, ScanSpec, KERNEL_SCAN_TOL};
use crate::characteristic::{complete_monotonicity_check, default_cm_grid, zero_free, ContourParams};
use crate::error::Error;
use crate::kernel::{default_horizon, kernel_fft, min_scan};
use crate::levy::SubordinatorSpec;
use crate::measure::{Atom, DelayMeasure, ExpPolyTerm, GridParams, MAX_DERIVATIVE_ORDER};
use crate::multivar::{default_matrix_horizon, matrix_kernel_fft, thm41_check, MatrixDelayMeasure};
use crate::polynomial::Polynomial;
use crate::simulate::{path_stats, simulate_euler, simulate_euler_multi, simulate_ma, simulate_ma_multi, PathSample};

pub const SCHEMA_VERSION: u32 = 1;

/// Schema violation located by a JSON pointer.
#[derive(Clone, Debug, PartialEq, thiserror::Error)]
#[error("{pointer}: {message}")]
pub struct SpecError {
    pub pointer: String,
    pub message: String,
}

impl SpecError {
    fn at(pointer: &str, message: impl ToString) -> Self {
        Self { pointer: pointer.to_string(), message: message.to_string() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeChoice {
    Ma,
    Euler,
}

fn default_seed() -> u64 {
    0
}
fn default_dt() -> f64 {
    0.01
}
fn default_n_points() -> usize {
    1 << 16
}
fn default_n_max() -> usize {
    crate::characteristic::DEFAULT_CM_ORDER
}
fn default_grid_step() -> f64 {
    0.01
}
fn default_t_end() -> f64 {
    200.0
}
fn default_scheme() -> SchemeChoice {
    SchemeChoice::Ma
}

/// Numerical settings. `horizon` and `burn_in` default to model-dependent values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Numerics {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default = "default_n_points")]
    pub n_points: usize,
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    #[serde(default = "default_grid_step")]
    pub grid_step: f64,
    #[serde(rename = "T", default = "default_t_end")]
    pub t_end: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<f64>,
    #[serde(default = "default_scheme")]
    pub scheme: SchemeChoice,
}

impl Default for Numerics {
    fn default() -> Self {
        serde_json::from_value(json!({})).expect("defaults deserialize")
    }
}

impl Numerics {
    fn validate(&self) -> Result<(), SpecError> {
        let p = |f: &str| format!("/numerics/{f}");
        if !(self.dt > 0.0 && self.dt <= 1.0) {
            return Err(SpecError::at(&p("dt"), "must lie in (0, 1]"));
        }
        if let Some(h) = self.horizon {
            if !(h > 0.0 && h <= 1e5) {
                return Err(SpecError::at(&p("horizon"), "must lie in (0, 1e5]"));
            }
        }
        if !(64..=1 << 24).contains(&self.n_points) {
            return Err(SpecError::at(&p("n_points"), "must lie in [64, 2^24]"));
        }
        if self.n_max > MAX_DERIVATIVE_ORDER {
            return Err(SpecError::at(&p("n_max"), format!("must be at most {MAX_DERIVATIVE_ORDER}")));
        }
        if !(self.grid_step > 0.0 && self.grid_step <= 1.0) {
            return Err(SpecError::at(&p("grid_step"), "must lie in (0, 1]"));
        }
        if !(self.t_end > 0.0 && self.t_end <= 1e6) {
            return Err(SpecError::at(&p("T"), "must lie in (0, 1e6]"));
        }
        if let Some(b) = self.burn_in {
            if !(b >= 0.0 && b <= 1e6) {
                return Err(SpecError::at(&p("burn_in"), "must lie in [0, 1e6]"));
            }
        }
        Ok(())
    }
}

fn default_driver() -> SubordinatorSpec {
    SubordinatorSpec::gamma(1.0, 1.0).expect("valid gamma driver")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureSpec {
    #[serde(default)]
    pub lambda: f64,
    /// `[tau, xi]` pairs.
    #[serde(default)]
    pub atoms: Vec<[f64; 2]>,
    #[serde(default)]
    pub density: Vec<ExpPolyTerm>,
}

impl MeasureSpec {
    pub fn build(&self) -> crate::Result<DelayMeasure> {
        let atoms = self.atoms.iter().map(|&[tau, weight]| Atom { tau, weight }).collect();
        DelayMeasure::new(self.lambda, atoms, self.density.clone())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SddeSpec {
    pub lambda: f64,
    #[serde(default)]
    pub atoms: Vec<[f64; 2]>,
    #[serde(default)]
    pub density: Vec<ExpPolyTerm>,
    #[serde(default = "default_driver")]
    pub driver: SubordinatorSpec,
    #[serde(default)]
    pub numerics: Numerics,
}

impl SddeSpec {
    pub fn measure(&self) -> crate::Result<DelayMeasure> {
        MeasureSpec { lambda: self.lambda, atoms: self.atoms.clone(), density: self.density.clone() }.build()
    }
}

fn default_q() -> Vec<f64> {
    vec![1.0]
}

/// Coefficients in ascending order of powers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CarmaSpec {
    #[serde(rename = "P")]
    pub p: Vec<f64>,
    #[serde(rename = "Q", default = "default_q")]
    pub q: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<ScanSpec>,
    #[serde(default = "default_driver")]
    pub driver: SubordinatorSpec,
    #[serde(default)]
    pub numerics: Numerics,
}

impl CarmaSpec {
    pub fn model(&self) -> crate::Result<CarmaModel> {
        CarmaModel::new(Polynomial::new(self.p.clone()), Polynomial::new(self.q.clone()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MsddeSpec {
    pub entries: Vec<Vec<MeasureSpec>>,
    #[serde(default = "default_driver")]
    pub driver: SubordinatorSpec,
    /// One driver per component; when absent `driver` is used for all.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drivers: Option<Vec<SubordinatorSpec>>,
    #[serde(default)]
    pub numerics: Numerics,
}

impl MsddeSpec {
    pub fn measure(&self) -> crate::Result<MatrixDelayMeasure> {
        let rows = self
            .entries
            .iter()
            .map(|r| r.iter().map(MeasureSpec::build).collect::<crate::Result<Vec<_>>>())
            .collect::<crate::Result<Vec<_>>>()?;
        MatrixDelayMeasure::new(rows)
    }

    pub fn component_drivers(&self) -> Vec<SubordinatorSpec> {
        self.drivers.clone().unwrap_or_else(|| vec![self.driver; self.entries.len()])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ModelSpec {
    Sdde(SddeSpec),
    Carma(CarmaSpec),
    Msdde(MsddeSpec),
}

fn pointer_of(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        match seg {
            Segment::Seq { index } => write!(out, "/{index}").unwrap(),
            Segment::Map { key } => write!(out, "/{}", key.replace('~', "~0").replace('/', "~1")).unwrap(),
            Segment::Enum { variant } => write!(out, "/{variant}").unwrap(),
            Segment::Unknown => out.push_str("/?"),
        }
    }
    out
}

fn typed<T: DeserializeOwned>(v: Value) -> Result<T, SpecError> {
    serde_path_to_error::deserialize(v).map_err(|e| {
        let pointer = pointer_of(e.path());
        let inner = e.into_inner().to_string();
        // Strip serde_json's trailing position, meaningless for a Value source.
        let message = inner.split(" at line ").next().unwrap_or(&inner).to_string();
        SpecError { pointer, message }
    })
}

/// Parses and validates a model spec. Unknown keys are rejected.
pub fn parse_model_spec(text: &str) -> Result<ModelSpec, SpecError> {
    let value: Value = serde_json::from_str(text).map_err(|e| SpecError::at("", format!("malformed JSON: {e}")))?;
    let Value::Object(mut obj) = value else {
        return Err(SpecError::at("", "spec must be a JSON object"));
    };
    let kind = match obj.remove("kind") {
        Some(Value::String(k)) => k,
        Some(_) => return Err(SpecError::at("/kind", "must be a string")),
        None => return Err(SpecError::at("/kind", "missing field `kind`")),
    };
    let rest = Value::Object(obj);
    let spec = match kind.as_str() {
        "sdde" => ModelSpec::Sdde(typed(rest)?),
        "carma" => ModelSpec::Carma(typed(rest)?),
        "msdde" => ModelSpec::Msdde(typed(rest)?),
        other => return Err(SpecError::at("/kind", format!("unknown kind `{other}`, expected sdde, carma or msdde"))),
    };
    spec.validate()?;
    Ok(spec)
}

impl ModelSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            ModelSpec::Sdde(_) => "sdde",
            ModelSpec::Carma(_) => "carma",
            ModelSpec::Msdde(_) => "msdde",
        }
    }

    pub fn numerics(&self) -> &Numerics {
        match self {
            ModelSpec::Sdde(s) => &s.numerics,
            ModelSpec::Carma(s) => &s.numerics,
            ModelSpec::Msdde(s) => &s.numerics,
        }
    }

    pub fn numerics_mut(&mut self) -> &mut Numerics {
        match self {
            ModelSpec::Sdde(s) => &mut s.numerics,
            ModelSpec::Carma(s) => &mut s.numerics,
            ModelSpec::Msdde(s) => &mut s.numerics,
        }
    }

    /// Semantic checks beyond the JSON shape.
    pub fn validate(&self) -> Result<(), SpecError> {
        self.numerics().validate()?;
        match self {
            ModelSpec::Sdde(s) => {
                s.measure().map_err(|e| SpecError::at("", e))?;
            }
            ModelSpec::Carma(s) => {
                let p = Polynomial::new(s.p.clone());
                if p.degree() == 0 || !p.is_monic() {
                    return Err(SpecError::at("/P", "must be monic of degree >= 1 (ascending coefficients)"));
                }
                if !Polynomial::new(s.q.clone()).is_monic() {
                    return Err(SpecError::at("/Q", "must be monic (ascending coefficients)"));
                }
                s.model().map_err(|e| SpecError::at("/P", e))?;
            }
            ModelSpec::Msdde(s) => {
                for (j, row) in s.entries.iter().enumerate() {
                    for (k, m) in row.iter().enumerate() {
                        m.build().map_err(|e| SpecError::at(&format!("/entries/{j}/{k}"), e))?;
                    }
                }
                s.measure().map_err(|e| SpecError::at("/entries", e))?;
                if let Some(d) = &s.drivers {
                    if d.len() != s.entries.len() {
                        return Err(SpecError::at("/drivers", format!("expected {} drivers", s.entries.len())));
                    }
                }
            }
        }
        Ok(())
    }

    /// Normalized JSON form with defaults filled in.
    pub fn to_value(&self) -> Value {
        let (kind, body) = match self {
            ModelSpec::Sdde(s) => ("sdde", serde_json::to_value(s)),
            ModelSpec::Carma(s) => ("carma", serde_json::to_value(s)),
            ModelSpec::Msdde(s) => ("msdde", serde_json::to_value(s)),
        };
        let Value::Object(body) = body.expect("spec serializes") else { unreachable!() };
        let mut obj = Map::new();
        obj.insert("kind".into(), Value::String(kind.into()));
        obj.extend(body);
        Value::Object(obj)
    }

    pub fn to_normalized_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_value()).expect("spec serializes")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Check,
    Kernel,
    Simulate,
    Region,
    Mcheck,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Check => "check",
            Command::Kernel => "kernel",
            Command::Simulate => "simulate",
            Command::Region => "region",
            Command::Mcheck => "mcheck",
        }
    }
}

/// Command-line overrides; each wins over the matching spec field.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Flags {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub dt: Option<f64>,
    pub horizon: Option<f64>,
    pub n_max: Option<usize>,
    pub grid_step: Option<f64>,
}

impl Flags {
    pub fn apply(&self, spec: &mut ModelSpec) -> Result<(), SpecError> {
        let n = spec.numerics_mut();
        if let Some(v) = self.seed {
            n.seed = v;
        }
        if let Some(v) = self.dt {
            n.dt = v;
        }
        if let Some(v) = self.horizon {
            n.horizon = Some(v);
        }
        if let Some(v) = self.n_max {
            n.n_max = v;
        }
        if let Some(v) = self.grid_step {
            n.grid_step = v;
        }
        spec.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// Certified by a sufficient condition.
    Nonnegative,
    /// No certificate applies; the computed kernel has no negative values.
    NonnegativeNumerical,
    Negative,
    NonStationary,
    NotApplicable,
}

impl Verdict {
    pub fn exit_code(self) -> i32 {
        match self {
            Verdict::Nonnegative | Verdict::NonnegativeNumerical | Verdict::NotApplicable => 0,
            Verdict::Negative | Verdict::NonStationary => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub exit_code: i32,
    pub summary: String,
    pub files: Vec<PathBuf>,
    /// Machine-readable bundle, also written to `<command>.json`.
    pub bundle: Value,
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("invalid input: {0}")]
    Spec(#[from] SpecError),
    #[error("{0}")]
    Model(#[from] Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Model(Error::NonStationary) => 1,
            _ => 2,
        }
    }
}

/// Runs `cmd` on `spec` after applying `flags`, writing output files into
/// `flags.out` (default: current directory).
pub fn run_command(cmd: Command, spec: &ModelSpec, flags: &Flags) -> Result<Outcome, RunError> {
    let mut spec = spec.clone();
    flags.apply(&mut spec)?;
    let out_dir = flags.out.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out_dir)?;
    let mut files = Vec::new();
    let (verdict, arm, mut bundle, summary) = match (cmd, &spec) {
        (Command::Check, ModelSpec::Sdde(s)) => check_sdde(s)?,
        (Command::Check, ModelSpec::Carma(s)) => check_carma(s)?,
        (Command::Check | Command::Mcheck, ModelSpec::Msdde(s)) => check_msdde(s)?,
        (Command::Mcheck, _) => {
            return Err(SpecError::at("/kind", "mcheck needs a multivariate (msdde) spec").into());
        }
        (Command::Kernel, _) => {
            let (csv, summary) = kernel_csv(&spec)?;
            files.push(write(&out_dir, "kernel.csv", &csv)?);
            (Verdict::NotApplicable, None, json!({}), summary)
        }
        (Command::Simulate, _) => {
            let path = simulate(&spec)?;
            let stats = path_stats(&path)?;
            files.push(write(&out_dir, "path.csv", &path.to_csv())?);
            let mut summary = format!(
                "{} path, {} points, dt {}: min {:.6} at t = {}, mean {:.6}, negative share {:.4}\n",
                scheme_name(&path),
                path.t.len(),
                path.meta.dt,
                stats.min,
                stats.argmin,
                stats.mean,
                stats.fraction_negative
            );
            for w in &path.meta.warnings {
                writeln!(summary, "warning: {w}").unwrap();
            }
            (Verdict::NotApplicable, None, json!({ "stats": stats, "meta": path.meta }), summary)
        }
        (Command::Region, ModelSpec::Carma(s)) => {
            let scan = region_spec(s)?;
            let rows = carma::region_scan(&scan)?;
            files.push(write(&out_dir, "region.csv", &carma::region_csv(&rows))?);
            let d = carma::disagreement(&rows);
            let summary = match (d.first(), d.last()) {
                (Some(lo), Some(hi)) => format!(
                    "{} grid points; the exact classifier accepts and the ordering test rejects for beta in [{lo}, {hi}]\n",
                    rows.len()
                ),
                _ => format!("{} grid points; the two classifiers agree everywhere\n", rows.len()),
            };
            (Verdict::NotApplicable, None, json!({ "scan": scan, "disagreement": d }), summary)
        }
        (Command::Region, _) => return Err(SpecError::at("/kind", "region needs a carma spec").into()),
    };
    if let Value::Object(obj) = &mut bundle {
        let mut head = Map::new();
        head.insert("schema".into(), json!(SCHEMA_VERSION));
        head.insert("command".into(), json!(cmd.name()));
        head.insert("spec".into(), spec.to_value());
        head.insert("verdict".into(), json!(verdict));
        if let Some(a) = arm {
            head.insert("arm".into(), json!(a));
        }
        head.append(obj);
        bundle = Value::Object(head);
    }
    let text = serde_json::to_string_pretty(&bundle).expect("bundle serializes");
    files.push(write(&out_dir, &format!("{}.json", cmd.name()), &text)?);
    let mut summary = summary;
    if verdict != Verdict::NotApplicable {
        writeln!(summary, "verdict: {}", verdict_text(verdict, arm)).unwrap();
    }
    Ok(Outcome { exit_code: verdict.exit_code(), summary, files, bundle })
}

fn verdict_text(v: Verdict, arm: Option<&str>) -> String {
    let s = match v {
        Verdict::Nonnegative => "non-negative",
        Verdict::NonnegativeNumerical => "non-negative (numerical kernel scan only)",
        Verdict::Negative => "negative values occur",
        Verdict::NonStationary => "no stationary solution",
        Verdict::NotApplicable => "n/a",
    };
    match arm {
        Some(a) => format!("{s} [{a}]"),
        None => s.to_string(),
    }
}

fn scheme_name(p: &PathSample) -> &'static str {
    match p.meta.scheme {
        crate::simulate::Scheme::MovingAverage => "moving-average",
        crate::simulate::Scheme::Euler => "Euler",
    }
}

fn write(dir: &Path, name: &str, contents: &str) -> std::io::Result<PathBuf> {
    let path = dir.join(name);
    std::fs::write(&path, contents)?;
    Ok(path)
}

type Checked = (Verdict, Option<&'static str>, Value, String);

fn check_sdde(s: &SddeSpec) -> Result<Checked, RunError> {
    let phi = s.measure()?;
    let mut out = String::new();
    writeln!(
        out,
        "model: sdde, lambda = {}, {} atom(s), {} density term(s)",
        phi.lambda0(),
        phi.atoms().len(),
        phi.density().len()
    )
    .unwrap();
    let existence = zero_free(&phi, &ContourParams::default())?;
    writeln!(
        out,
        "existence: {} (winding {}, min |h| on the axis {:.4e})",
        if existence.verdict { "h has no zeros on the closed right half-plane" } else { "h vanishes on the closed right half-plane" },
        existence.winding,
        existence.min_modulus_on_axis
    )
    .unwrap();
    let mass = phi.total_mass();
    let moment = phi.first_moment();
    writeln!(out, "mass: phi([0,inf)) = {mass} ({})", if mass < 0.0 { "negative as required" } else { "not negative" }).unwrap();
    let eta = phi.is_nonneg_on_positive(&GridParams::default());
    writeln!(out, "positive-lag part non-negative: {}", if eta.is_yes() { "yes" } else { "no" }).unwrap();

    let mut bundle = json!({
        "existence": existence,
        "mass_check": { "total_mass": mass, "negative": mass < 0.0, "first_moment": moment },
        "eta_nonneg": eta,
    });
    if !existence.verdict {
        return Ok((Verdict::NonStationary, Some("existence"), bundle, out));
    }
    let cm = complete_monotonicity_check(&phi, s.numerics.n_max, &default_cm_grid())?;
    match &cm.failure {
        Some(f) => writeln!(
            out,
            "complete monotonicity of 1/h: fails at n = {}, x = {} (h^{} (1/h)^({}) = {:.6})",
            f.n,
            f.x,
            f.n + 1,
            f.n,
            f.scaled
        )
        .unwrap(),
        None => writeln!(out, "complete monotonicity of 1/h: holds up to order {}", cm.n_checked).unwrap(),
    }
    let horizon = s.numerics.horizon.unwrap_or_else(|| default_horizon(&phi));
    let g = kernel_fft(&phi, horizon, s.numerics.n_points)?;
    let scan = min_scan(&g);
    writeln!(out, "kernel: min g = {:.6e} at t = {:.4}", scan.g_min, scan.t_min).unwrap();
    let obj = bundle.as_object_mut().unwrap();
    obj.insert("cm".into(), json!(cm));
    obj.insert("kernel".into(), json!({ "min": scan.g_min, "t_min": scan.t_min, "meta": g.meta }));
    let tol = KERNEL_SCAN_TOL.max(10.0 * g.meta.error_estimate.unwrap_or(0.0));
    let (v, arm) = if eta.is_yes() {
        (Verdict::Nonnegative, "positive_lag_part_nonnegative")
    } else if cm.failure.is_some() {
        (Verdict::Negative, "complete_monotonicity")
    } else if moment.violates_necessary {
        (Verdict::Negative, "first_moment")
    } else if scan.g_min < -tol {
        (Verdict::Negative, "kernel_scan")
    } else {
        (Verdict::NonnegativeNumerical, "kernel_scan")
    };
    Ok((v, Some(arm), bundle, out))
}

fn check_carma(s: &CarmaSpec) -> Result<Checked, RunError> {
    let m = s.model()?;
    let mut out = String::new();
    writeln!(out, "model: CARMA({}, {}), P = {}, Q = {}", m.ar_order(), m.ma_order(), m.p(), m.q()).unwrap();
    writeln!(out, "causal: yes; invertible: {}", if m.is_invertible() { "yes" } else { "no" }).unwrap();
    let v = carma::nonneg_verdict(&m)?;
    let arm_text = |b: Option<bool>| match b {
        Some(true) => "passes",
        Some(false) => "fails",
        None => "n/a",
    };
    writeln!(out, "zero ordering: {}", arm_text(v.by_ordering)).unwrap();
    writeln!(out, "delay density f >= 0: {}", arm_text(v.by_thm31)).unwrap();
    writeln!(out, "CARMA(3,2) exact f-sign test: {}", arm_text(v.by_cor34)).unwrap();
    writeln!(out, "kernel: min g = {:.6e} at t = {:.4}", v.kernel_min, v.kernel_argmin).unwrap();
    for n in &v.notes {
        writeln!(out, "note: {n}").unwrap();
    }
    let mut bundle = json!({
        "model": { "P": m.p(), "Q": m.q(), "alpha": m.alpha(), "beta": m.beta(), "invertible": m.is_invertible() },
        "classifiers": v,
    });
    if let Ok((lambda, f)) = carma::sdde_form(&m) {
        bundle.as_object_mut().unwrap().insert("sdde_form".into(), json!({ "lambda": lambda, "f": f }));
    }
    if m.ar_order() == 2 && m.ma_order() == 1 {
        bundle.as_object_mut().unwrap().insert("carma21".into(), json!(carma::carma21_verdict(&m)?));
    }
    let arms = [
        (v.by_ordering, "zero_ordering"),
        (v.by_thm31, "delay_density_nonnegative"),
        (v.by_cor34, "carma32_exact"),
        (v.by_composition, "composition"),
    ];
    let (verdict, arm) = if let Some(&(_, a)) = arms.iter().find(|(b, _)| *b == Some(true)) {
        (Verdict::Nonnegative, a)
    } else if v.by_kernel_scan {
        (Verdict::NonnegativeNumerical, "kernel_scan")
    } else {
        (Verdict::Negative, "kernel_scan")
    };
    Ok((verdict, Some(arm), bundle, out))
}

fn check_msdde(s: &MsddeSpec) -> Result<Checked, RunError> {
    let phi = s.measure()?;
    let mut out = String::new();
    writeln!(out, "model: {}-dimensional sdde", phi.dim()).unwrap();
    let r = thm41_check(&phi)?;
    writeln!(
        out,
        "existence: {} (winding of det h {})",
        if r.zero_free.verdict { "det h has no zeros on the closed right half-plane" } else { "det h vanishes on the closed right half-plane" },
        r.zero_free.winding
    )
    .unwrap();
    writeln!(out, "positive-lag entries non-negative: {}", if r.eta_nonneg { "yes" } else { "no" }).unwrap();
    writeln!(
        out,
        "Lambda is an M-matrix: {} (alpha {}, spectral radius of B {:.6})",
        if r.m_matrix.is_m { "yes" } else { "no" },
        r.m_matrix.alpha,
        r.m_matrix.spectral_radius_b
    )
    .unwrap();
    let mut bundle = json!({ "thm41": r });
    if !r.zero_free.verdict {
        return Ok((Verdict::NonStationary, Some("existence"), bundle, out));
    }
    let horizon = s.numerics.horizon.unwrap_or_else(|| default_matrix_horizon(&phi));
    let g = matrix_kernel_fft(&phi, horizon, s.numerics.n_points)?;
    let minima = g.entry_minima();
    let overall = minima.iter().copied().fold(f64::INFINITY, f64::min);
    writeln!(out, "kernel: smallest entry value {overall:.6e}").unwrap();
    bundle.as_object_mut().unwrap().insert("kernel_entry_minima".into(), json!(minima));
    let tol = KERNEL_SCAN_TOL.max(10.0 * g.entries[0].meta.error_estimate.unwrap_or(0.0));
    let (v, arm) = if r.verdict {
        (Verdict::Nonnegative, "m_matrix_and_nonnegative_entries")
    } else if overall < -tol {
        (Verdict::Negative, "kernel_scan")
    } else {
        (Verdict::NonnegativeNumerical, "kernel_scan")
    };
    Ok((v, Some(arm), bundle, out))
}

fn kernel_csv(spec: &ModelSpec) -> Result<(String, String), RunError> {
    match spec {
        ModelSpec::Sdde(s) => {
            let phi = s.measure()?;
            let horizon = s.numerics.horizon.unwrap_or_else(|| default_horizon(&phi));
            let g = kernel_fft(&phi, horizon, s.numerics.n_points)?;
            let m = min_scan(&g);
            Ok((g.to_csv(), format!("kernel: {} points, dt {:.4e}; min g = {:.6e} at t = {:.4}\n", g.len(), g.dt, m.g_min, m.t_min)))
        }
        ModelSpec::Carma(s) => {
            let m = s.model()?;
            let horizon = s.numerics.horizon.unwrap_or_else(|| m.default_horizon());
            let g = crate::kernel::kernel_statespace(m.p(), m.q(), horizon, s.numerics.dt)?;
            let ms = min_scan(&g);
            Ok((g.to_csv(), format!("kernel: {} points, dt {}; min g = {:.6e} at t = {:.4}\n", g.len(), g.dt, ms.g_min, ms.t_min)))
        }
        ModelSpec::Msdde(s) => {
            let phi = s.measure()?;
            let horizon = s.numerics.horizon.unwrap_or_else(|| default_matrix_horizon(&phi));
            let g = matrix_kernel_fft(&phi, horizon, s.numerics.n_points)?;
            let min = g.entry_minima().into_iter().fold(f64::INFINITY, f64::min);
            Ok((g.to_csv(), format!("matrix kernel: {} points per entry; smallest entry value {min:.6e}\n", g.len())))
        }
    }
}

fn simulate(spec: &ModelSpec) -> Result<PathSample, RunError> {
    let n = spec.numerics();
    Ok(match (spec, n.scheme) {
        (ModelSpec::Sdde(s), SchemeChoice::Ma) => {
            let phi = s.measure()?;
            let horizon = n.horizon.unwrap_or_else(|| default_horizon(&phi));
            let g = kernel_fft(&phi, horizon, n.n_points)?.resample(n.dt)?;
            simulate_ma(&g, &s.driver, n.t_end, n.seed)?
        }
        (ModelSpec::Sdde(s), SchemeChoice::Euler) => simulate_euler(&s.measure()?, &s.driver, n.t_end, n.dt, n.seed, n.burn_in)?,
        (ModelSpec::Carma(s), SchemeChoice::Ma) => {
            let m = s.model()?;
            let horizon = n.horizon.unwrap_or_else(|| m.default_horizon());
            let g = crate::kernel::kernel_statespace(m.p(), m.q(), horizon, n.dt)?;
            simulate_ma(&g, &s.driver, n.t_end, n.seed)?
        }
        (ModelSpec::Carma(s), SchemeChoice::Euler) => {
            let phi = carma::sdde_measure(&s.model()?)?;
            simulate_euler(&phi, &s.driver, n.t_end, n.dt, n.seed, n.burn_in)?
        }
        (ModelSpec::Msdde(s), SchemeChoice::Ma) => {
            let phi = s.measure()?;
            let horizon = n.horizon.unwrap_or_else(|| default_matrix_horizon(&phi));
            let g = matrix_kernel_fft(&phi, horizon, n.n_points)?.resample(n.dt)?;
            simulate_ma_multi(&g, &s.component_drivers(), n.t_end, n.seed)?
        }
        (ModelSpec::Msdde(s), SchemeChoice::Euler) => {
            simulate_euler_multi(&s.measure()?, &s.component_drivers(), n.t_end, n.dt, n.seed, n.burn_in)?
        }
    })
}

/// The spec's `region` block, or a double-zero sweep around the zeros of a
/// cubic `P` with real zeros. `grid_step` sets the step either way.
fn region_spec(s: &CarmaSpec) -> Result<ScanSpec, RunError> {
    let mut scan = match &s.region {
        Some(r) => r.clone(),
        None => {
            let m = s.model()?;
            if m.ar_order() != 3 || m.alpha().iter().any(|a| a.im.abs() > crate::polynomial::REALNESS_TOL) {
                return Err(SpecError::at("/region", "needed unless P is a cubic with real zeros").into());
            }
            let lo = m.alpha().iter().map(|a| a.re).fold(f64::INFINITY, f64::min);
            let mut scan = ScanSpec::double(m.alpha().iter().map(|a| a.re).collect());
            scan.from = (lo - 1.0).floor();
            scan.to = -s.numerics.grid_step;
            scan
        }
    };
    scan.step = s.numerics.grid_step;
    Ok(scan)
}
