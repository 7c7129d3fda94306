//! Panel ingestion, preprocessing and the run configuration.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{dim_err, Error, Result};
use crate::gmrf::AdjacencyMatrix;
use crate::mcmc::{ChainConfig, PriorConfig, StateNoiseMode};

/// A calendar quarter, written `YYYYQn`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Period {
    pub year: i32,
    pub quarter: u8,
}

impl Period {
    pub fn new(year: i32, quarter: u8) -> Result<Self> {
        if !(1..=4).contains(&quarter) {
            return Err(Error::Parse(format!("quarter {quarter} out of range")));
        }
        Ok(Period { year, quarter })
    }

    fn ordinal(self) -> i64 {
        self.year as i64 * 4 + (self.quarter as i64 - 1)
    }

    fn from_ordinal(o: i64) -> Self {
        Period { year: o.div_euclid(4) as i32, quarter: (o.rem_euclid(4) + 1) as u8 }
    }

    pub fn next(self) -> Self {
        Period::from_ordinal(self.ordinal() + 1)
    }
}

impl fmt::Display for Period {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}Q{}", self.year, self.quarter)
    }
}

impl FromStr for Period {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (y, q) = s.split_once(['Q', 'q']).ok_or_else(|| Error::Parse(format!("period `{s}` is not YYYYQn")))?;
        let year = y.parse().map_err(|_| Error::Parse(format!("period `{s}` is not YYYYQn")))?;
        let quarter = q.parse().map_err(|_| Error::Parse(format!("period `{s}` is not YYYYQn")))?;
        Period::new(year, quarter)
    }
}

/// Which variables of the long file feed `Y` and `X`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelSchema {
    pub y_variables: Vec<String>,
    pub x_variables: Vec<String>,
    /// Price index read alongside the panel, one series per site.
    pub deflator: Option<String>,
}

/// How a variable was transformed after loading.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransformRecord {
    pub variable: String,
    pub deflated: bool,
    pub log: bool,
}

/// A validated lattice panel. `y` and `x` have one row per period and
/// site-major columns (`site * n_vars + var`).
#[derive(Debug, Clone)]
pub struct PanelDataset {
    pub sites: Vec<String>,
    pub regions: Option<Vec<String>>,
    pub periods: Vec<Period>,
    pub y_variables: Vec<String>,
    pub x_variables: Vec<String>,
    pub y: DMatrix<f64>,
    pub x: DMatrix<f64>,
    pub adjacency: AdjacencyMatrix,
    /// `T × N` deflator, if the schema named one.
    pub deflator: Option<DMatrix<f64>>,
    pub transforms: Vec<TransformRecord>,
}

fn parse_value(s: &str) -> Result<f64> {
    let s = s.trim();
    if s.is_empty() || s.eq_ignore_ascii_case("na") || s.eq_ignore_ascii_case("nan") {
        return Ok(f64::NAN);
    }
    s.parse().map_err(|_| Error::Parse(format!("bad value `{s}`")))
}

/// Reads a long `site,period,variable,value[,region]` file and an
/// adjacency file. Sites are sorted lexicographically and periods
/// chronologically; every site must cover every period between the
/// earliest and latest one seen. Blank or `NA` values load as missing.
pub fn load_panel(data_path: &Path, adjacency_path: &Path, schema: &PanelSchema) -> Result<PanelDataset> {
    let text = std::fs::read_to_string(data_path)?;
    let mut panel = parse_panel(&text, schema)?;
    panel.adjacency = load_adjacency(adjacency_path, &panel.sites)?;
    Ok(panel)
}

/// [`load_panel`] without the adjacency (an isolated-site placeholder is
/// used instead).
pub fn parse_panel(text: &str, schema: &PanelSchema) -> Result<PanelDataset> {
    if schema.x_variables.is_empty() {
        return Err(Error::SchemaError("schema needs at least one x variable".into()));
    }
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(|s| s.to_string()).collect();
    let col = |name: &str| header.iter().position(|h| h == name);
    let (Some(c_site), Some(c_period), Some(c_var), Some(c_val)) = (col("site"), col("period"), col("variable"), col("value")) else {
        return Err(Error::SchemaError(format!("header must contain site,period,variable,value; found {}", header.join(","))));
    };
    let c_region = col("region");

    let mut wanted: Vec<&str> = schema.y_variables.iter().chain(&schema.x_variables).map(String::as_str).collect();
    if let Some(d) = &schema.deflator {
        wanted.push(d);
    }
    let mut seen_vars = BTreeSet::new();
    let mut values: HashMap<(String, String), BTreeMap<Period, f64>> = HashMap::new();
    let mut regions: BTreeMap<String, String> = BTreeMap::new();
    let mut sites = BTreeSet::new();
    let mut periods = BTreeSet::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec?;
        let field = |c: usize| rec.get(c).unwrap_or("");
        let site = field(c_site).to_string();
        if site.is_empty() {
            return Err(Error::SchemaError(format!("empty site id on data line {}", line + 1)));
        }
        let period: Period = field(c_period).parse()?;
        sites.insert(site.clone());
        periods.insert(period);
        if let Some(c) = c_region {
            let r = field(c).to_string();
            match regions.get(&site) {
                Some(prev) if *prev != r => return Err(Error::SchemaError(format!("site {site} has regions {prev} and {r}"))),
                _ => {
                    regions.insert(site.clone(), r);
                }
            }
        }
        let var = field(c_var);
        if !wanted.contains(&var) {
            continue;
        }
        seen_vars.insert(var.to_string());
        let v = parse_value(field(c_val))?;
        let slot = values.entry((site.clone(), var.to_string())).or_default();
        if slot.insert(period, v).is_some() {
            return Err(Error::SchemaError(format!("duplicate row for {site}, {period}, {var}")));
        }
    }
    for v in &wanted {
        if !seen_vars.contains(*v) {
            return Err(Error::SchemaError(format!("variable {v} not present in panel")));
        }
    }
    let sites: Vec<String> = sites.into_iter().collect();
    let (first, last) = match (periods.first(), periods.last()) {
        (Some(a), Some(b)) => (*a, *b),
        _ => return Err(Error::SchemaError("panel has no rows".into())),
    };
    let periods: Vec<Period> = (first.ordinal()..=last.ordinal()).map(Period::from_ordinal).collect();

    let series = |site: &str, var: &str| -> Result<Vec<f64>> {
        let map = values.get(&(site.to_string(), var.to_string()));
        periods
            .iter()
            .map(|p| {
                map.and_then(|m| m.get(p).copied())
                    .ok_or_else(|| Error::GapInTimeIndex { site: site.to_string(), period: p.to_string() })
            })
            .collect()
    };
    let block = |vars: &[String]| -> Result<DMatrix<f64>> {
        let nv = vars.len();
        let mut z = DMatrix::zeros(periods.len(), sites.len() * nv);
        for (s, site) in sites.iter().enumerate() {
            for (j, var) in vars.iter().enumerate() {
                for (t, v) in series(site, var)?.into_iter().enumerate() {
                    z[(t, s * nv + j)] = v;
                }
            }
        }
        Ok(z)
    };
    let y = block(&schema.y_variables)?;
    let x = block(&schema.x_variables)?;
    let deflator = match &schema.deflator {
        Some(d) => Some(block(std::slice::from_ref(d))?),
        None => None,
    };
    let regions = c_region.map(|_| sites.iter().map(|s| regions[s].clone()).collect());
    let transforms = schema
        .y_variables
        .iter()
        .chain(&schema.x_variables)
        .map(|v| TransformRecord { variable: v.clone(), deflated: false, log: false })
        .collect();
    Ok(PanelDataset {
        adjacency: AdjacencyMatrix::from_edges(sites.len(), &[], true)?,
        sites,
        regions,
        periods,
        y_variables: schema.y_variables.clone(),
        x_variables: schema.x_variables.clone(),
        y,
        x,
        deflator,
        transforms,
    })
}

/// Adjacency from an edge list with header `site_a,site_b`, or from a
/// square 0/1 matrix whose header is `site` followed by the site ids.
pub fn load_adjacency(path: &Path, sites: &[String]) -> Result<AdjacencyMatrix> {
    let text = std::fs::read_to_string(path)?;
    parse_adjacency(&text, sites)
}

pub fn parse_adjacency(text: &str, sites: &[String]) -> Result<AdjacencyMatrix> {
    let index: HashMap<&str, usize> = sites.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let lookup = |s: &str| index.get(s).copied().ok_or_else(|| Error::UnknownSiteInAdjacency(s.to_string()));
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(|s| s.to_string()).collect();
    let n = sites.len();
    if header.len() == 2 && header[0] == "site_a" && header[1] == "site_b" {
        let mut edges = BTreeSet::new();
        for rec in reader.records() {
            let rec = rec?;
            let a = lookup(rec.get(0).unwrap_or(""))?;
            let b = lookup(rec.get(1).unwrap_or(""))?;
            if a == b {
                return Err(Error::InvalidAdjacency(format!("self-loop at {}", sites[a])));
            }
            edges.insert((a.min(b), a.max(b)));
        }
        let edges: Vec<(usize, usize)> = edges.into_iter().collect();
        return AdjacencyMatrix::from_edges(n, &edges, false);
    }
    if header.first().map(String::as_str) != Some("site") {
        return Err(Error::SchemaError("adjacency header must be site_a,site_b or site,<ids…>".into()));
    }
    let cols = header[1..].iter().map(|s| lookup(s)).collect::<Result<Vec<_>>>()?;
    if cols.len() != n {
        return Err(dim_err(format!("adjacency has {} columns for {n} sites", cols.len())));
    }
    let mut w = DMatrix::zeros(n, n);
    let mut rows_seen = BTreeSet::new();
    for rec in reader.records() {
        let rec = rec?;
        let i = lookup(rec.get(0).unwrap_or(""))?;
        rows_seen.insert(i);
        for (k, &j) in cols.iter().enumerate() {
            w[(i, j)] = parse_value(rec.get(k + 1).unwrap_or(""))?;
        }
    }
    if rows_seen.len() != n {
        return Err(dim_err(format!("adjacency has {} rows for {n} sites", rows_seen.len())));
    }
    AdjacencyMatrix::from_dense(&w, false)
}

/// Writes the panel back in long format (transformed units).
pub fn write_panel_csv(path: &Path, panel: &PanelDataset) -> Result<()> {
    let mut buf = Vec::new();
    let with_region = panel.regions.is_some();
    writeln!(buf, "site,period,variable,value{}", if with_region { ",region" } else { "" })?;
    let ny = panel.y_variables.len();
    let nx = panel.x_variables.len();
    for (s, site) in panel.sites.iter().enumerate() {
        let region = panel.regions.as_ref().map(|r| format!(",{}", r[s])).unwrap_or_default();
        for (t, p) in panel.periods.iter().enumerate() {
            for (j, v) in panel.y_variables.iter().enumerate() {
                writeln!(buf, "{site},{p},{v},{}{region}", panel.y[(t, s * ny + j)])?;
            }
            for (j, v) in panel.x_variables.iter().enumerate() {
                writeln!(buf, "{site},{p},{v},{}{region}", panel.x[(t, s * nx + j)])?;
            }
        }
    }
    crate::io::write_atomic(path, &buf)
}

/// Edge list with header `site_a,site_b`.
pub fn write_adjacency_csv(path: &Path, sites: &[String], adjacency: &AdjacencyMatrix) -> Result<()> {
    let mut buf = Vec::new();
    writeln!(buf, "site_a,site_b")?;
    for (a, b) in adjacency.edges() {
        writeln!(buf, "{},{}", sites[a], sites[b])?;
    }
    crate::io::write_atomic(path, &buf)
}

impl PanelDataset {
    /// Builds a panel from matrices already in site-major layout.
    #[allow(clippy::too_many_arguments)]
    pub fn from_matrices(
        sites: Vec<String>,
        periods: Vec<Period>,
        y_variables: Vec<String>,
        x_variables: Vec<String>,
        y: DMatrix<f64>,
        x: DMatrix<f64>,
        adjacency: AdjacencyMatrix,
    ) -> Result<Self> {
        let n = sites.len();
        if y.nrows() != periods.len() || x.nrows() != periods.len() {
            return Err(dim_err("panel rows must match the periods"));
        }
        if y.ncols() != n * y_variables.len() || x.ncols() != n * x_variables.len() || adjacency.n_sites() != n {
            return Err(dim_err("panel columns must match sites × variables"));
        }
        if periods.windows(2).any(|w| w[1] != w[0].next()) {
            let bad = periods.windows(2).find(|w| w[1] != w[0].next()).map(|w| w[0].next()).unwrap_or(periods[0]);
            return Err(Error::GapInTimeIndex { site: "*".into(), period: bad.to_string() });
        }
        let transforms = y_variables
            .iter()
            .chain(&x_variables)
            .map(|v| TransformRecord { variable: v.clone(), deflated: false, log: false })
            .collect();
        Ok(PanelDataset { sites, regions: None, periods, y_variables, x_variables, y, x, adjacency, deflator: None, transforms })
    }

    pub fn n_sites(&self) -> usize {
        self.sites.len()
    }

    pub fn n_periods(&self) -> usize {
        self.periods.len()
    }

    /// Applies `log(v / deflator)` or `log v` per variable. A variable may
    /// only be transformed once.
    pub fn apply_transforms(&mut self, log_vars: &[String], deflate_vars: &[String]) -> Result<()> {
        for v in deflate_vars {
            if !log_vars.contains(v) {
                return Err(Error::InvalidConfig(format!("deflated variable {v} must also be logged")));
            }
        }
        if !deflate_vars.is_empty() && self.deflator.is_none() {
            return Err(Error::InvalidConfig("deflation requested but no deflator loaded".into()));
        }
        for name in log_vars {
            let rec_idx = self
                .transforms
                .iter()
                .position(|r| &r.variable == name)
                .ok_or_else(|| Error::InvalidConfig(format!("unknown variable {name}")))?;
            if self.transforms[rec_idx].log {
                return Err(Error::InvalidConfig(format!("variable {name} already transformed")));
            }
            let deflate = deflate_vars.contains(name);
            let (mat, vars) = if let Some(j) = self.y_variables.iter().position(|v| v == name) {
                (&mut self.y, (j, self.y_variables.len()))
            } else {
                let j = self.x_variables.iter().position(|v| v == name).unwrap_or(0);
                (&mut self.x, (j, self.x_variables.len()))
            };
            for s in 0..self.sites.len() {
                let c = s * vars.1 + vars.0;
                let series: Vec<f64> = mat.column(c).iter().copied().collect();
                let out = match (&self.deflator, deflate) {
                    (Some(d), true) => deflate_and_log(&series, &d.column(s).iter().copied().collect::<Vec<_>>())?,
                    _ => log_transform(&series)?,
                };
                for (t, v) in out.into_iter().enumerate() {
                    mat[(t, c)] = v;
                }
            }
            self.transforms[rec_idx].log = true;
            self.transforms[rec_idx].deflated = deflate;
        }
        Ok(())
    }

    /// Maps `Y` values (`K × ñ_y`, row `k` at period `first_period + k`)
    /// back to the original scale.
    pub fn invert_y(&self, values: &DMatrix<f64>, first_period: usize) -> Result<DMatrix<f64>> {
        let ny = self.y_variables.len();
        if values.ncols() != self.sites.len() * ny {
            return Err(Error::AlignmentMismatch(format!("{} columns for {} y series", values.ncols(), self.sites.len() * ny)));
        }
        let mut out = values.clone();
        for (j, name) in self.y_variables.iter().enumerate() {
            let rec = self.transforms.iter().find(|r| &r.variable == name).ok_or_else(|| Error::InvalidInput(format!("no record for {name}")))?;
            for s in 0..self.sites.len() {
                let c = s * ny + j;
                for k in 0..values.nrows() {
                    let mut v = values[(k, c)];
                    if rec.log {
                        v = v.exp();
                    }
                    if rec.deflated {
                        let d = self.deflator.as_ref().ok_or_else(|| Error::AlignmentMismatch("deflator missing".into()))?;
                        let t = first_period + k;
                        if t >= d.nrows() {
                            return Err(Error::AlignmentMismatch(format!("no deflator value for period index {t}")));
                        }
                        v *= d[(t, s)];
                    }
                    out[(k, c)] = v;
                }
            }
        }
        Ok(out)
    }

    /// First `T - holdout` periods, and the held-out `Y` and `X` rows.
    pub fn split_holdout(&self, holdout: usize) -> Result<(PanelDataset, DMatrix<f64>, DMatrix<f64>)> {
        let t = self.n_periods();
        if holdout >= t {
            return Err(Error::InvalidConfig(format!("holdout {holdout} leaves no estimation periods out of {t}")));
        }
        let keep = t - holdout;
        let mut train = self.clone();
        train.periods.truncate(keep);
        train.y = self.y.rows(0, keep).into_owned();
        train.x = self.x.rows(0, keep).into_owned();
        Ok((train, self.y.rows(keep, holdout).into_owned(), self.x.rows(keep, holdout).into_owned()))
    }
}

fn check_positive(series: &[f64]) -> Result<()> {
    match series.iter().position(|v| !v.is_nan() && *v <= 0.0) {
        Some(index) => Err(Error::NonPositiveValue { index, value: series[index] }),
        None => Ok(()),
    }
}

/// `log v`; missing values stay missing.
pub fn log_transform(series: &[f64]) -> Result<Vec<f64>> {
    check_positive(series)?;
    Ok(series.iter().map(|v| v.ln()).collect())
}

/// `log(series / deflator)`.
pub fn deflate_and_log(series: &[f64], deflator: &[f64]) -> Result<Vec<f64>> {
    if series.len() != deflator.len() {
        return Err(Error::AlignmentMismatch(format!("series has {} values, deflator {}", series.len(), deflator.len())));
    }
    check_positive(series)?;
    check_positive(deflator)?;
    Ok(series.iter().zip(deflator).map(|(s, d)| (s / d).ln()).collect())
}

/// Inverse of [`deflate_and_log`].
pub fn invert_deflate_and_log(transformed: &[f64], deflator: &[f64]) -> Result<Vec<f64>> {
    if transformed.len() != deflator.len() {
        return Err(Error::AlignmentMismatch(format!("series has {} values, deflator {}", transformed.len(), deflator.len())));
    }
    Ok(transformed.iter().zip(deflator).map(|(v, d)| v.exp() * d).collect())
}

/// Spreads each annual value over `subperiods` with the constant growth
/// factor to the next year; the first subperiod equals the annual value.
/// The final year reuses the previous year's factor.
pub fn geometric_interpolate(annual: &[f64], subperiods: usize) -> Result<Vec<f64>> {
    if subperiods == 0 {
        return Err(Error::InvalidInput("subperiods must be positive".into()));
    }
    if let Some(index) = annual.iter().position(|v| !(*v > 0.0)) {
        return Err(Error::NonPositiveValue { index, value: annual[index] });
    }
    let n = annual.len();
    let mut out = Vec::with_capacity(n * subperiods);
    for i in 0..n {
        let ratio = if i + 1 < n {
            annual[i + 1] / annual[i]
        } else if n > 1 {
            annual[n - 1] / annual[n - 2]
        } else {
            1.0
        };
        let step = ratio.powf(1.0 / subperiods as f64);
        let mut v = annual[i];
        for _ in 0..subperiods {
            out.push(v);
            v *= step;
        }
    }
    Ok(out)
}

fn d_m() -> usize {
    2
}
fn d_order() -> usize {
    2
}
fn d_iterations() -> usize {
    ChainConfig::desk().iterations
}
fn d_burn_in() -> usize {
    ChainConfig::desk().burn_in
}
fn d_thinning() -> usize {
    ChainConfig::desk().thinning
}
fn d_chains() -> usize {
    ChainConfig::desk().n_chains
}
fn d_prelim_iterations() -> usize {
    ChainConfig::desk().prelim_iterations
}
fn d_prelim_burn_in() -> usize {
    ChainConfig::desk().prelim_burn_in
}
fn d_jitter() -> f64 {
    ChainConfig::desk().init_jitter
}
fn d_adapt() -> usize {
    ChainConfig::desk().adapt_interval
}
fn d_y_vars() -> Vec<String> {
    vec!["y".into()]
}
fn d_x_vars() -> Vec<String> {
    vec!["x".into()]
}
fn d_horizon() -> usize {
    4
}
fn d_irf_horizon() -> usize {
    20
}
fn d_threshold() -> f64 {
    0.05
}
fn d_level() -> f64 {
    0.95
}
fn d_replicates() -> usize {
    1
}
fn d_grid() -> Vec<(usize, usize)> {
    vec![(1, 1), (2, 2)]
}

/// Run settings read from a flat TOML file. Only `seed` is mandatory;
/// prior hyperparameters may be overridden by their field names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default = "d_m")]
    pub m: usize,
    #[serde(default = "d_m")]
    pub l: usize,
    #[serde(default = "d_order")]
    pub order: usize,
    #[serde(default)]
    pub state_noise: StateNoiseMode,
    #[serde(default = "d_iterations")]
    pub iterations: usize,
    #[serde(default = "d_burn_in")]
    pub burn_in: usize,
    #[serde(default = "d_thinning")]
    pub thinning: usize,
    #[serde(default = "d_chains")]
    pub n_chains: usize,
    #[serde(default = "d_prelim_iterations")]
    pub prelim_iterations: usize,
    #[serde(default = "d_prelim_burn_in")]
    pub prelim_burn_in: usize,
    #[serde(default = "d_jitter")]
    pub init_jitter: f64,
    #[serde(default = "d_adapt")]
    pub adapt_interval: usize,
    #[serde(default = "d_y_vars")]
    pub y_variables: Vec<String>,
    #[serde(default = "d_x_vars")]
    pub x_variables: Vec<String>,
    #[serde(default)]
    pub log_variables: Vec<String>,
    #[serde(default)]
    pub deflator: Option<String>,
    #[serde(default)]
    pub deflate_variables: Vec<String>,
    /// Site ids for the anchor rows; chosen by clustering when absent.
    #[serde(default)]
    pub anchors_y: Option<Vec<String>>,
    #[serde(default)]
    pub anchors_x: Option<Vec<String>>,
    #[serde(default)]
    pub holdout: usize,
    #[serde(default = "d_horizon")]
    pub horizon: usize,
    #[serde(default = "d_irf_horizon")]
    pub irf_horizon: usize,
    #[serde(default = "d_threshold")]
    pub rank_threshold: f64,
    #[serde(default = "d_level")]
    pub level: f64,
    #[serde(default = "d_replicates")]
    pub forecast_replicates: usize,
    /// PMCC weight; absent means infinity.
    #[serde(default)]
    pub zeta: Option<f64>,
    #[serde(default = "d_grid")]
    pub select_grid: Vec<(usize, usize)>,
    #[serde(flatten)]
    pub prior: PriorConfig,
}

impl RunConfig {
    /// Defaults with the given seed.
    pub fn with_seed(seed: u64) -> Self {
        let text = format!("seed = {seed}\n");
        toml::from_str(&text).expect("default config parses")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let table: toml::Table = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        if !table.contains_key("seed") {
            return Err(Error::InvalidConfig("seed is mandatory".into()));
        }
        let known = serde_json::to_value(RunConfig::with_seed(0))?;
        let known = known.as_object().expect("config serializes to an object");
        if let Some(k) = table.keys().find(|k| !known.contains_key(k.as_str())) {
            return Err(Error::InvalidConfig(format!("unknown key `{k}`")));
        }
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        RunConfig::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("m", self.m),
            ("l", self.l),
            ("order", self.order),
            ("iterations", self.iterations),
            ("thinning", self.thinning),
            ("n_chains", self.n_chains),
            ("horizon", self.horizon),
            ("forecast_replicates", self.forecast_replicates),
        ];
        if let Some((k, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidConfig(format!("{k} must be positive")));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::InvalidConfig("level must lie in (0, 1)".into()));
        }
        if self.rank_threshold < 0.0 {
            return Err(Error::InvalidConfig("rank_threshold must be non-negative".into()));
        }
        if self.y_variables.is_empty() || self.x_variables.is_empty() {
            return Err(Error::InvalidConfig("need y and x variables".into()));
        }
        if matches!(self.zeta, Some(z) if z <= 0.0) {
            return Err(Error::InvalidConfig("zeta must be positive".into()));
        }
        self.chain_config().validate()
    }

    pub fn chain_config(&self) -> ChainConfig {
        ChainConfig {
            iterations: self.iterations,
            burn_in: self.burn_in,
            thinning: self.thinning,
            seed: self.seed,
            n_chains: self.n_chains,
            prelim_iterations: self.prelim_iterations,
            prelim_burn_in: self.prelim_burn_in,
            init_jitter: self.init_jitter,
            adapt_interval: self.adapt_interval,
        }
    }

    pub fn schema(&self) -> PanelSchema {
        PanelSchema { y_variables: self.y_variables.clone(), x_variables: self.x_variables.clone(), deflator: self.deflator.clone() }
    }

    /// SHA-256 of the parsed settings, so formatting, comments and key order
    /// do not matter.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&canonical))
    }
}
