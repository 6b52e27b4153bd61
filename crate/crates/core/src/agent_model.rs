//! Agent-level model: finite state/action spaces, noise laws, the
//! mean-field-coupled transition kernel and the stage cost, together with
//! the minorization and Lipschitz checks run against them.

use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::measures::{enumerate_empirical, wasserstein1, Metric, DEFAULT_ENUMERATION_BUDGET};

/// Tolerance for stochastic rows and noise laws.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// A probability or real number written either as a decimal string or a bare number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Decimal {
    Text(String),
    Number(f64),
}

impl Decimal {
    fn value(&self, field: &str) -> Result<f64> {
        let v = match self {
            Decimal::Text(s) => s
                .trim()
                .parse::<f64>()
                .map_err(|_| Error::parse(field, format!("`{s}` is not a decimal number")))?,
            Decimal::Number(v) => *v,
        };
        if !v.is_finite() {
            return Err(Error::parse(field, "value is not finite"));
        }
        Ok(v)
    }
}

impl From<f64> for Decimal {
    fn from(v: f64) -> Self {
        Decimal::Text(format!("{v}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MetricSpec {
    /// `"line"` (|i - j| on indices) or `"discrete"` (1 off the diagonal).
    Named(String),
    Matrix(Vec<Vec<Decimal>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub support: Vec<String>,
    pub probs: Vec<Decimal>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "flavor", rename_all = "snake_case", deny_unknown_fields)]
pub enum TransitionSpec {
    /// `rows[w0][x][u][x']`, independent of the mean field.
    Tabular { rows: Vec<Vec<Vec<Vec<Decimal>>>> },
    /// `T(x'|x,u,mu) = base[w0][x][u][x'] + sum_y coef[w0][x][u][y][x'] mu(y)`.
    Affine {
        base: Vec<Vec<Vec<Vec<Decimal>>>>,
        coef: Vec<Vec<Vec<Vec<Vec<Decimal>>>>>,
    },
    /// Next state index `f(x, u, mu, w, w0)` given as an expression over
    /// `x`, `u`, `w`, `w0`, `nx`, `nu` and `mu0 .. mu{|X|-1}`.
    Deterministic { expr: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct CostSpec {
    /// `table[x][u]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<Vec<Vec<Decimal>>>,
    /// Target distribution of a `weight * W1(mu, target)` term.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w1_to: Option<Vec<Decimal>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w1_weight: Option<Decimal>,
}

/// The model document as written on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub states: Vec<String>,
    pub actions: Vec<String>,
    pub metric_x: MetricSpec,
    pub metric_u: MetricSpec,
    pub idio_noise: NoiseSpec,
    pub common_noise: NoiseSpec,
    pub transition: TransitionSpec,
    pub cost: CostSpec,
}

impl ModelSpec {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("model spec serializes to TOML")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseLaw {
    pub labels: Vec<String>,
    pub probs: Vec<f64>,
}

#[derive(Debug, Clone)]
enum TransitionRule {
    // flat [w0][x][u][x']
    Tabular(Vec<f64>),
    Affine {
        base: Vec<f64>,
        // flat [w0][x][u][y][x']
        coef: Vec<f64>,
    },
    Deterministic(Expr),
}

#[derive(Debug, Clone)]
struct CostRule {
    table: Option<Vec<Vec<f64>>>,
    w1_to: Option<(Vec<f64>, f64)>,
}

/// Which schema flavor backs the transition kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransitionFlavor {
    Tabular,
    Affine,
    Deterministic,
}

/// A validated agent model. Immutable after construction.
#[derive(Clone)]
pub struct AgentModel {
    spec: ModelSpec,
    hash: String,
    metric_x: Metric,
    metric_u: Metric,
    idio: NoiseLaw,
    common: NoiseLaw,
    transition: TransitionRule,
    cost: CostRule,
}

impl fmt::Debug for AgentModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AgentModel")
            .field("name", &self.spec.name)
            .field("states", &self.spec.states)
            .field("actions", &self.spec.actions)
            .field("flavor", &self.flavor())
            .field("hash", &self.hash)
            .finish()
    }
}

fn parse_metric(spec: &MetricSpec, n: usize, field: &str) -> Result<Metric> {
    let m: Metric = match spec {
        MetricSpec::Named(name) => match name.as_str() {
            "line" => (0..n)
                .map(|i| (0..n).map(|j| (i as f64 - j as f64).abs()).collect())
                .collect(),
            "discrete" => (0..n)
                .map(|i| (0..n).map(|j| if i == j { 0.0 } else { 1.0 }).collect())
                .collect(),
            other => {
                return Err(Error::parse(
                    field,
                    format!("unknown metric `{other}` (expected \"line\", \"discrete\" or a matrix)"),
                ))
            }
        },
        MetricSpec::Matrix(rows) => {
            if rows.len() != n {
                return Err(Error::parse(field, format!("expected {n} rows, got {}", rows.len())));
            }
            rows.iter()
                .enumerate()
                .map(|(i, r)| {
                    if r.len() != n {
                        return Err(Error::parse(
                            format!("{field}[{i}]"),
                            format!("expected {n} entries, got {}", r.len()),
                        ));
                    }
                    r.iter()
                        .enumerate()
                        .map(|(j, d)| d.value(&format!("{field}[{i}][{j}]")))
                        .collect()
                })
                .collect::<Result<_>>()?
        }
    };
    check_metric(&m, field)?;
    Ok(m)
}

fn check_metric(m: &Metric, field: &str) -> Result<()> {
    let n = m.len();
    for i in 0..n {
        for j in 0..n {
            let d = m[i][j];
            if d < 0.0 {
                return Err(Error::parse(format!("{field}[{i}][{j}]"), "negative distance"));
            }
            if (d - m[j][i]).abs() > 1e-12 {
                return Err(Error::parse(format!("{field}[{i}][{j}]"), "metric is not symmetric"));
            }
            if (i == j) != (d == 0.0) {
                return Err(Error::parse(
                    format!("{field}[{i}][{j}]"),
                    "distance is zero exactly on the diagonal only",
                ));
            }
            for (k, (&ik, &jk)) in m[i].iter().zip(&m[j]).enumerate() {
                if ik > d + jk + 1e-12 {
                    return Err(Error::parse(
                        format!("{field}[{i}][{k}]"),
                        format!("triangle inequality fails through {j}"),
                    ));
                }
            }
        }
    }
    Ok(())
}

fn parse_noise(spec: &NoiseSpec, field: &str) -> Result<NoiseLaw> {
    if spec.support.is_empty() {
        return Err(Error::parse(format!("{field}.support"), "empty support"));
    }
    if spec.support.len() != spec.probs.len() {
        return Err(Error::parse(
            format!("{field}.probs"),
            format!("{} labels but {} probabilities", spec.support.len(), spec.probs.len()),
        ));
    }
    let probs = spec
        .probs
        .iter()
        .enumerate()
        .map(|(i, p)| p.value(&format!("{field}.probs[{i}]")))
        .collect::<Result<Vec<_>>>()?;
    check_distribution(&probs, &format!("{field}.probs"))?;
    Ok(NoiseLaw {
        labels: spec.support.clone(),
        probs,
    })
}

fn check_distribution(p: &[f64], field: &str) -> Result<()> {
    if let Some(i) = p.iter().position(|&v| v < -STOCHASTIC_TOL) {
        return Err(Error::parse(format!("{field}[{i}]"), "negative probability"));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > STOCHASTIC_TOL {
        return Err(Error::parse(field, format!("probabilities sum to {s}, not 1")));
    }
    Ok(())
}

fn flatten_decimals<'a>(items: impl Iterator<Item = (&'a Decimal, String)>, out: &mut Vec<f64>) -> Result<()> {
    for (d, field) in items {
        out.push(d.value(&field)?);
    }
    Ok(())
}

fn shape_err(field: String, want: usize, got: usize) -> Error {
    Error::parse(field, format!("expected {want} entries, got {got}"))
}

/// Flatten a `[w0][x][u][x']` array, checking its shape.
fn flatten4(rows: &[Vec<Vec<Vec<Decimal>>>], dims: [usize; 4], field: &str) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(dims.iter().product());
    if rows.len() != dims[0] {
        return Err(shape_err(field.to_string(), dims[0], rows.len()));
    }
    for (a, ra) in rows.iter().enumerate() {
        if ra.len() != dims[1] {
            return Err(shape_err(format!("{field}[{a}]"), dims[1], ra.len()));
        }
        for (b, rb) in ra.iter().enumerate() {
            if rb.len() != dims[2] {
                return Err(shape_err(format!("{field}[{a}][{b}]"), dims[2], rb.len()));
            }
            for (c, rc) in rb.iter().enumerate() {
                if rc.len() != dims[3] {
                    return Err(shape_err(format!("{field}[{a}][{b}][{c}]"), dims[3], rc.len()));
                }
                flatten_decimals(
                    rc.iter()
                        .enumerate()
                        .map(|(d, v)| (v, format!("{field}[{a}][{b}][{c}][{d}]"))),
                    &mut out,
                )?;
            }
        }
    }
    Ok(out)
}

const EXPR_FIXED_VARS: [&str; 6] = ["x", "u", "w", "w0", "nx", "nu"];

fn expr_vars(nx: usize) -> Vec<String> {
    EXPR_FIXED_VARS
        .iter()
        .map(|s| s.to_string())
        .chain((0..nx).map(|i| format!("mu{i}")))
        .collect()
}

impl AgentModel {
    /// Validate a parsed model document.
    pub fn from_spec(spec: ModelSpec) -> Result<Self> {
        let nx = spec.states.len();
        let nu = spec.actions.len();
        if nx == 0 {
            return Err(Error::parse("states", "no states"));
        }
        if nu == 0 {
            return Err(Error::parse("actions", "no actions"));
        }
        let metric_x = parse_metric(&spec.metric_x, nx, "metric_x")?;
        let metric_u = parse_metric(&spec.metric_u, nu, "metric_u")?;
        let idio = parse_noise(&spec.idio_noise, "idio_noise")?;
        let common = parse_noise(&spec.common_noise, "common_noise")?;
        let nw0 = common.probs.len();

        let transition = match &spec.transition {
            TransitionSpec::Tabular { rows } => {
                let flat = flatten4(rows, [nw0, nx, nu, nx], "transition.rows")?;
                for (i, row) in flat.chunks(nx).enumerate() {
                    let (w0, x, u) = (i / (nx * nu), (i / nu) % nx, i % nu);
                    check_distribution(row, &format!("transition.rows[{w0}][{x}][{u}]"))?;
                }
                TransitionRule::Tabular(flat)
            }
            TransitionSpec::Affine { base, coef } => {
                let base_flat = flatten4(base, [nw0, nx, nu, nx], "transition.base")?;
                let mut coef_flat = Vec::with_capacity(nw0 * nx * nu * nx * nx);
                if coef.len() != nw0 {
                    return Err(shape_err("transition.coef".into(), nw0, coef.len()));
                }
                for (a, ca) in coef.iter().enumerate() {
                    coef_flat.extend(flatten4(ca, [nx, nu, nx, nx], &format!("transition.coef[{a}]"))?);
                }
                // rows are affine in mu, so checking the simplex vertices suffices
                for w0 in 0..nw0 {
                    for x in 0..nx {
                        for u in 0..nu {
                            let b = (((w0 * nx) + x) * nu + u) * nx;
                            for y in 0..nx {
                                let c = ((((w0 * nx) + x) * nu + u) * nx + y) * nx;
                                let row: Vec<f64> = (0..nx).map(|z| base_flat[b + z] + coef_flat[c + z]).collect();
                                check_distribution(
                                    &row,
                                    &format!("transition.base+coef[{w0}][{x}][{u}] at vertex {y}"),
                                )?;
                            }
                        }
                    }
                }
                TransitionRule::Affine {
                    base: base_flat,
                    coef: coef_flat,
                }
            }
            TransitionSpec::Deterministic { expr } => {
                let names = expr_vars(nx);
                let refs: Vec<&str> = names.iter().map(String::as_str).collect();
                let compiled =
                    Expr::compile(expr, &refs).map_err(|e| Error::parse("transition.expr", e.to_string()))?;
                TransitionRule::Deterministic(compiled)
            }
        };

        let cost = CostRule {
            table: match &spec.cost.table {
                None => None,
                Some(t) => {
                    if t.len() != nx {
                        return Err(shape_err("cost.table".into(), nx, t.len()));
                    }
                    Some(
                        t.iter()
                            .enumerate()
                            .map(|(x, r)| {
                                if r.len() != nu {
                                    return Err(shape_err(format!("cost.table[{x}]"), nu, r.len()));
                                }
                                r.iter()
                                    .enumerate()
                                    .map(|(u, v)| v.value(&format!("cost.table[{x}][{u}]")))
                                    .collect()
                            })
                            .collect::<Result<_>>()?,
                    )
                }
            },
            w1_to: match &spec.cost.w1_to {
                None => None,
                Some(target) => {
                    if target.len() != nx {
                        return Err(shape_err("cost.w1_to".into(), nx, target.len()));
                    }
                    let t = target
                        .iter()
                        .enumerate()
                        .map(|(i, v)| v.value(&format!("cost.w1_to[{i}]")))
                        .collect::<Result<Vec<_>>>()?;
                    check_distribution(&t, "cost.w1_to")?;
                    let w = match &spec.cost.w1_weight {
                        Some(w) => w.value("cost.w1_weight")?,
                        None => 1.0,
                    };
                    Some((t, w))
                }
            },
        };
        if cost.table.is_none() && cost.w1_to.is_none() {
            return Err(Error::parse("cost", "needs `table`, `w1_to`, or both"));
        }

        let json = serde_json::to_string(&spec)?;
        let hash = hex::encode(Sha256::digest(json.as_bytes()));
        let model = AgentModel {
            spec,
            hash,
            metric_x,
            metric_u,
            idio,
            common,
            transition,
            cost,
        };
        if let TransitionRule::Deterministic(_) = model.transition {
            model.validate_deterministic()?;
        }
        Ok(model)
    }

    fn validate_deterministic(&self) -> Result<()> {
        let nx = self.num_states();
        let mut probes: Vec<Vec<f64>> = (0..nx).map(|i| (0..nx).map(|j| f64::from(i == j)).collect()).collect();
        probes.push(vec![1.0 / nx as f64; nx]);
        for mu in &probes {
            for w0 in 0..self.num_common() {
                for x in 0..nx {
                    for u in 0..self.num_actions() {
                        for w in 0..self.idio.probs.len() {
                            let v = self.raw_next(x, u, mu, w, w0);
                            if !(v.is_finite() && v.round() >= 0.0 && v.round() < nx as f64) {
                                return Err(Error::parse(
                                    "transition.expr",
                                    format!("value {v} out of range at x={x}, u={u}, w={w}, w0={w0}, mu={mu:?}"),
                                ));
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn raw_next(&self, x: usize, u: usize, mu: &[f64], w: usize, w0: usize) -> f64 {
        match &self.transition {
            TransitionRule::Deterministic(e) => {
                let mut vals = vec![
                    x as f64,
                    u as f64,
                    w as f64,
                    w0 as f64,
                    self.num_states() as f64,
                    self.num_actions() as f64,
                ];
                vals.extend_from_slice(mu);
                e.eval(&vals)
            }
            _ => unreachable!("raw_next is only defined for deterministic rules"),
        }
    }

    /// Deterministic next-state map; `None` for kernel flavors.
    pub fn next_state(&self, x: usize, u: usize, mu: &[f64], w: usize, w0: usize) -> Option<usize> {
        match self.transition {
            TransitionRule::Deterministic(_) => {
                let v = self.raw_next(x, u, mu, w, w0).round();
                Some(v.clamp(0.0, (self.num_states() - 1) as f64) as usize)
            }
            _ => None,
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let spec: ModelSpec = toml::from_str(s).map_err(|e| Error::parse("document", e.to_string()))?;
        Self::from_spec(spec)
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    /// SHA-256 of the canonical JSON serialization of the document.
    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn num_states(&self) -> usize {
        self.metric_x.len()
    }

    pub fn num_actions(&self) -> usize {
        self.metric_u.len()
    }

    pub fn num_common(&self) -> usize {
        self.common.probs.len()
    }

    pub fn metric_x(&self) -> &Metric {
        &self.metric_x
    }

    pub fn metric_u(&self) -> &Metric {
        &self.metric_u
    }

    pub fn common_noise(&self) -> &NoiseLaw {
        &self.common
    }

    pub fn idio_noise(&self) -> &NoiseLaw {
        &self.idio
    }

    pub fn flavor(&self) -> TransitionFlavor {
        match self.transition {
            TransitionRule::Tabular(_) => TransitionFlavor::Tabular,
            TransitionRule::Affine { .. } => TransitionFlavor::Affine,
            TransitionRule::Deterministic(_) => TransitionFlavor::Deterministic,
        }
    }

    /// Whether the kernel is affine in `mu` (extrema over the simplex sit at vertices).
    pub fn is_mu_affine(&self) -> bool {
        !matches!(self.transition, TransitionRule::Deterministic(_))
    }

    /// Write `T^{w0}(. | x, u, mu)` into `out`.
    pub fn kernel_into(&self, w0: usize, x: usize, u: usize, mu: &[f64], out: &mut [f64]) {
        let nx = self.num_states();
        let nu = self.num_actions();
        let b = (((w0 * nx) + x) * nu + u) * nx;
        match &self.transition {
            TransitionRule::Tabular(rows) => out.copy_from_slice(&rows[b..b + nx]),
            TransitionRule::Affine { base, coef } => {
                out.copy_from_slice(&base[b..b + nx]);
                for (y, &m) in mu.iter().enumerate() {
                    if m == 0.0 {
                        continue;
                    }
                    let c = ((((w0 * nx) + x) * nu + u) * nx + y) * nx;
                    for z in 0..nx {
                        out[z] += m * coef[c + z];
                    }
                }
                for v in out.iter_mut() {
                    if *v < 0.0 && *v > -1e-14 {
                        *v = 0.0;
                    }
                }
            }
            TransitionRule::Deterministic(_) => {
                out.iter_mut().for_each(|v| *v = 0.0);
                for (w, &p) in self.idio.probs.iter().enumerate() {
                    if let Some(next) = self.next_state(x, u, mu, w, w0) {
                        out[next] += p;
                    }
                }
            }
        }
    }

    pub fn kernel(&self, w0: usize, x: usize, u: usize, mu: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.num_states()];
        self.kernel_into(w0, x, u, mu, &mut out);
        out
    }

    /// Stage cost `c(x, u, mu)` for a probability vector `mu`.
    pub fn cost(&self, x: usize, u: usize, mu: &[f64]) -> f64 {
        let mut c = 0.0;
        if let Some(t) = &self.cost.table {
            c += t[x][u];
        }
        if let Some((target, weight)) = &self.cost.w1_to {
            c += weight * wasserstein1(mu, target, &self.metric_x).expect("validated dimensions");
        }
        c
    }

    /// Upper bound on `|c(x, u, mu)|` over all inputs.
    pub fn cost_bound(&self) -> f64 {
        let mut bound: f64 = 0.0;
        if let Some(t) = &self.cost.table {
            bound += t.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
        }
        if let Some((_, w)) = &self.cost.w1_to {
            let diam = self.metric_x.iter().flatten().fold(0.0f64, |a, &v| a.max(v));
            bound += w.abs() * diam;
        }
        bound
    }
}

/// Read and validate a model document.
pub fn load_model(path: impl AsRef<Path>) -> Result<AgentModel> {
    let text = std::fs::read_to_string(path.as_ref())?;
    AgentModel::from_toml_str(&text)
}

/// Doeblin lower bound `T^{w0}(.|x,u,mu) >= pi` for all `w0` in `common_set`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinorizationCertificate {
    pub pi: Vec<f64>,
    /// Indices into the common-noise support.
    pub common_set: Vec<usize>,
    /// `pi(X)`.
    pub mass: f64,
    /// Probability of `common_set`.
    pub p_b: f64,
    pub probe_resolution: u32,
    /// True when the probe grid contains every extremal mu (mu-affine kernels).
    pub exact: bool,
}

impl MinorizationCertificate {
    /// Span contraction factor of the relative operator at population size `n`.
    pub fn alpha(&self, n: u32) -> f64 {
        1.0 - self.p_b * self.mass.powi(n as i32)
    }
}

fn probe_measures(nx: usize, resolution: u32) -> Vec<Vec<f64>> {
    enumerate_empirical(resolution.max(1), nx, DEFAULT_ENUMERATION_BUDGET)
        .expect("probe grid within budget")
        .iter()
        .map(|m| m.probs())
        .collect()
}

/// Search every nonempty common-noise subset for the best minorizing measure.
///
/// Returns the certificate maximizing `P(B) pi(X)`, or `None` when that
/// product vanishes for every subset.
pub fn check_minorization(model: &AgentModel, probe_resolution: u32) -> Option<MinorizationCertificate> {
    let nx = model.num_states();
    let nu = model.num_actions();
    let nw0 = model.num_common();
    let grid = probe_measures(nx, probe_resolution);
    let mut buf = vec![0.0; nx];
    let per_atom: Vec<Vec<f64>> = (0..nw0)
        .map(|w0| {
            let mut m = vec![f64::INFINITY; nx];
            for mu in &grid {
                for x in 0..nx {
                    for u in 0..nu {
                        model.kernel_into(w0, x, u, mu, &mut buf);
                        for (a, &b) in m.iter_mut().zip(&buf) {
                            *a = a.min(b);
                        }
                    }
                }
            }
            m.iter().map(|v| v.max(0.0)).collect()
        })
        .collect();

    let mut best: Option<MinorizationCertificate> = None;
    let mut best_score = 0.0;
    for mask in 1u64..(1u64 << nw0) {
        let set: Vec<usize> = (0..nw0).filter(|i| mask & (1 << i) != 0).collect();
        let pi: Vec<f64> = (0..nx)
            .map(|z| set.iter().map(|&w| per_atom[w][z]).fold(f64::INFINITY, f64::min))
            .collect();
        let mass: f64 = pi.iter().sum();
        let p_b: f64 = set.iter().map(|&w| model.common.probs[w]).sum();
        let score = p_b * mass;
        if score > best_score + 1e-15 {
            best_score = score;
            best = Some(MinorizationCertificate {
                pi,
                common_set: set,
                mass: mass.min(1.0),
                p_b: p_b.min(1.0),
                probe_resolution,
                exact: model.is_mu_affine(),
            });
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzReport {
    /// Transition constant: `W1` between kernels over the input distance.
    pub k_f: f64,
    pub k_c: f64,
    /// `2 k_f < 1`.
    pub satisfies_contraction: bool,
    pub probe_count: usize,
    /// Exact for mu-affine kernels, a lower bound otherwise.
    pub exact_transition: bool,
}

/// Resolution of the enumerated mu-grid used by [`estimate_lipschitz`].
pub const LIPSCHITZ_GRID: u32 = 4;

/// Running-maximum estimate of the Lipschitz constants of the kernel and cost
/// with respect to `d_X + d_U + W1`.
pub fn estimate_lipschitz(model: &AgentModel, samples: usize, seed: u64) -> LipschitzReport {
    let nx = model.num_states();
    let nu = model.num_actions();
    let grid = probe_measures(nx, LIPSCHITZ_GRID);
    let mut points: Vec<(usize, usize, Vec<f64>)> = Vec::new();
    for mu in &grid {
        for x in 0..nx {
            for u in 0..nu {
                points.push((x, u, mu.clone()));
            }
        }
    }
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            pairs.push((i, j));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let random_point = |rng: &mut ChaCha8Rng| {
        // uniform on the simplex via normalized exponentials
        let e: Vec<f64> = (0..nx).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
        let s: f64 = e.iter().sum();
        (
            rng.gen_range(0..nx),
            rng.gen_range(0..nu),
            e.iter().map(|v| v / s).collect::<Vec<f64>>(),
        )
    };
    for _ in 0..samples {
        let a = random_point(&mut rng);
        let b = random_point(&mut rng);
        points.push(a);
        points.push(b);
        pairs.push((points.len() - 2, points.len() - 1));
    }

    let mut k_f: f64 = 0.0;
    let mut k_c: f64 = 0.0;
    let mut probes = 0usize;
    let mut ka = vec![0.0; nx];
    let mut kb = vec![0.0; nx];
    for &(i, j) in &pairs {
        let (x, u, mu) = &points[i];
        let (y, v, nu_) = &points[j];
        let denom = model.metric_x[*x][*y]
            + model.metric_u[*u][*v]
            + wasserstein1(mu, nu_, &model.metric_x).expect("same dimension");
        if denom <= 1e-15 {
            continue;
        }
        probes += 1;
        for w0 in 0..model.num_common() {
            model.kernel_into(w0, *x, *u, mu, &mut ka);
            model.kernel_into(w0, *y, *v, nu_, &mut kb);
            let num = wasserstein1(&ka, &kb, &model.metric_x).expect("same dimension");
            k_f = k_f.max(num / denom);
        }
        let dc = (model.cost(*x, *u, mu) - model.cost(*y, *v, nu_)).abs();
        k_c = k_c.max(dc / denom);
    }
    LipschitzReport {
        k_f,
        k_c,
        satisfies_contraction: 2.0 * k_f < 1.0,
        probe_count: probes,
        exact_transition: model.is_mu_affine(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;

    #[test]
    fn example_one_loads() {
        let m = catalog::example_one();
        assert_eq!(m.num_states(), 2);
        assert_eq!(m.num_actions(), 2);
        assert_eq!(m.kernel(0, 0, 1, &[1.0, 0.0]), vec![0.0, 1.0]);
        assert!((m.cost(0, 0, &[1.0, 0.0]) - 0.5).abs() < 1e-15);
        assert!(check_minorization(&m, 4).is_none());
    }

    #[test]
    fn non_stochastic_row_is_rejected() {
        let doc = r#"
states = ["a", "b"]
actions = ["0"]
metric_x = "discrete"
metric_u = "discrete"
[idio_noise]
support = ["-"]
probs = ["1"]
[common_noise]
support = ["-"]
probs = ["1"]
[transition]
flavor = "tabular"
rows = [[[["0.5", "0.5"]], [["0.6", "0.3"]]]]
[cost]
table = [["0"], ["1"]]
"#;
        let err = AgentModel::from_toml_str(doc).unwrap_err();
        match err {
            Error::Parse { field, .. } => assert_eq!(field, "transition.rows[0][1][0]"),
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn negative_metric_is_rejected() {
        let mut spec = catalog::example_one().spec().clone();
        spec.metric_x = MetricSpec::Matrix(vec![
            vec!["0".to_string().into_dec(), "-1".to_string().into_dec()],
            vec!["-1".to_string().into_dec(), "0".to_string().into_dec()],
        ]);
        let err = AgentModel::from_spec(spec).unwrap_err();
        assert!(matches!(err, Error::Parse { ref field, .. } if field == "metric_x[0][1]"));
    }

    trait IntoDec {
        fn into_dec(self) -> Decimal;
    }
    impl IntoDec for String {
        fn into_dec(self) -> Decimal {
            Decimal::Text(self)
        }
    }

    #[test]
    fn affine_rows_are_stochastic_on_vertices() {
        let m = catalog::random_affine(3, 2, 2, 11);
        let nx = m.num_states();
        for y in 0..nx {
            let mut mu = vec![0.0; nx];
            mu[y] = 1.0;
            for w0 in 0..m.num_common() {
                for x in 0..nx {
                    for u in 0..m.num_actions() {
                        let row = m.kernel(w0, x, u, &mu);
                        assert!(row.iter().all(|&v| v >= 0.0));
                        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn minorization_of_floor_model() {
        // every row >= (0.1, 0.1) at an atom of mass 0.3
        let m = catalog::floor_model();
        let cert = check_minorization(&m, 4).expect("certified");
        assert!((cert.mass - 0.2).abs() < 1e-12);
        assert!((cert.p_b - 0.3).abs() < 1e-12);
        assert!((cert.alpha(2) - 0.988).abs() < 1e-12);
    }

    #[test]
    fn resetting_model_has_unit_mass() {
        let m = catalog::resetting_model(&[0.2, 0.5, 0.3], 0.5);
        let cert = check_minorization(&m, 3).expect("certified");
        assert!((cert.mass - 1.0).abs() < 1e-12);
        assert!((cert.p_b - 0.5).abs() < 1e-12);
        for n in 1..6 {
            assert!((cert.alpha(n) - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn alpha_increases_when_mass_below_one() {
        let m = catalog::floor_model();
        let cert = check_minorization(&m, 4).unwrap();
        for n in 1..10 {
            assert!(cert.alpha(n + 1) > cert.alpha(n));
        }
    }

    #[test]
    fn lipschitz_constant_kernel_is_zero() {
        let m = catalog::iid_model();
        let r = estimate_lipschitz(&m, 50, 1);
        assert_eq!(r.k_f, 0.0);
        assert!(r.satisfies_contraction);
    }

    #[test]
    fn lipschitz_of_w1_cost_is_one() {
        let m = catalog::example_one();
        let r = estimate_lipschitz(&m, 200, 3);
        assert!((r.k_c - 1.0).abs() < 1e-9, "k_c = {}", r.k_c);
        assert_eq!(r.satisfies_contraction, 2.0 * r.k_f < 1.0);
    }

    #[test]
    fn hash_is_stable_and_content_sensitive() {
        let a = catalog::example_one();
        let b = AgentModel::from_toml_str(&a.spec().to_toml()).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), catalog::constant_cost(0.5).hash());
    }
}
