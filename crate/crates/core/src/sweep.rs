//! Config ingestion, parameter grids, the symmetric-data table, and CSV/JSON
//! emission.

use std::collections::BTreeSet;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::market::{validate_field, MarketParams, Scenario, PARAM_NAMES};
use crate::policy::{compare_policies, PolicyOptions};

/// Optional per-field overrides of the baseline market.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketOverrides {
    pub a_l_i1: Option<f64>,
    pub a_l_i2: Option<f64>,
    pub a_l_ib: Option<f64>,
    pub a_l_jb: Option<f64>,
    pub a_q_ib: Option<f64>,
    pub a_q_jb: Option<f64>,
    pub a_s: Option<f64>,
    pub b_l: Option<f64>,
    pub b_s: Option<f64>,
    pub theta_l: Option<f64>,
    pub lambda_l: Option<f64>,
    pub c1: Option<f64>,
    pub c2: Option<f64>,
    pub alpha: Option<f64>,
}

impl MarketOverrides {
    fn entries(&self) -> [(&'static str, Option<f64>); 14] {
        [
            ("a_l_i1", self.a_l_i1),
            ("a_l_i2", self.a_l_i2),
            ("a_l_ib", self.a_l_ib),
            ("a_l_jb", self.a_l_jb),
            ("a_q_ib", self.a_q_ib),
            ("a_q_jb", self.a_q_jb),
            ("a_s", self.a_s),
            ("b_l", self.b_l),
            ("b_s", self.b_s),
            ("theta_l", self.theta_l),
            ("lambda_l", self.lambda_l),
            ("c1", self.c1),
            ("c2", self.c2),
            ("alpha", self.alpha),
        ]
    }

    /// Checks single-field invariants of every override that is present.
    pub fn validate_fields(&self) -> Result<()> {
        for (name, v) in self.entries() {
            if let Some(v) = v {
                validate_field(name, v)?;
            }
        }
        Ok(())
    }

    pub fn apply(&self, params: &mut MarketParams) {
        for (name, v) in self.entries() {
            if let Some(v) = v {
                params.set(name, v).expect("override names are parameter names");
            }
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct MarketFile {
    #[serde(default)]
    market: MarketOverrides,
}

fn toml_error(e: toml::de::Error) -> Error {
    Error::Config(e.to_string().trim_end().to_string())
}

/// Parses a market config (`[market]` table, every key optional) on top of
/// the baseline and validates the result.
pub fn parse_market_config(text: &str) -> Result<MarketParams> {
    let file: MarketFile = toml::from_str(text).map_err(toml_error)?;
    let mut params = MarketParams::baseline();
    file.market.apply(&mut params);
    params.validate()?;
    Ok(params)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub param: String,
    pub min: f64,
    pub max: f64,
    pub steps: usize,
}

impl Axis {
    pub fn values(&self) -> Vec<f64> {
        if self.steps == 1 {
            return vec![self.min];
        }
        let span = self.max - self.min;
        let last = (self.steps - 1) as f64;
        (0..self.steps)
            .map(|i| if i + 1 == self.steps { self.max } else { self.min + span * i as f64 / last })
            .collect()
    }

    fn validate(&self, which: &str) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSweep(format!("{which}: {m}")));
        if !PARAM_NAMES.contains(&self.param.as_str()) {
            return bad(format!("unknown parameter `{}`", self.param));
        }
        if !(self.min.is_finite() && self.max.is_finite()) || self.min > self.max {
            return bad(format!("need finite min <= max, got [{}, {}]", self.min, self.max));
        }
        if self.steps == 0 || (self.steps == 1 && self.min != self.max) {
            return bad(format!(
                "steps must be >= 2 (or 1 with min == max), got {}",
                self.steps
            ));
        }
        for v in [self.min, self.max] {
            validate_field(&self.param, v)
                .map_err(|e| Error::InvalidSweep(format!("{which}: {e}")))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Panel {
    pub name: String,
    #[serde(default)]
    pub market: MarketOverrides,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OutputField {
    #[serde(rename = "exists")]
    Exists,
    #[serde(rename = "delta_pi_B")]
    DeltaPiB,
    #[serde(rename = "best_regime")]
    BestRegime,
    /// One existence flag per subgame.
    #[serde(rename = "subgame_exists")]
    SubgameExists,
}

fn default_outputs() -> Vec<OutputField> {
    vec![OutputField::Exists, OutputField::DeltaPiB, OutputField::BestRegime]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default = "default_outputs")]
    pub outputs: Vec<OutputField>,
    #[serde(default)]
    pub market: MarketOverrides,
    pub axis1: Axis,
    pub axis2: Axis,
    #[serde(default, rename = "panel")]
    pub panels: Vec<Panel>,
}

impl SweepSpec {
    pub fn parse(text: &str) -> Result<Self> {
        let spec: SweepSpec = toml::from_str(text).map_err(toml_error)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.axis1.validate("axis1")?;
        self.axis2.validate("axis2")?;
        if self.axis1.param == self.axis2.param {
            return Err(Error::InvalidSweep(format!(
                "axes must name distinct parameters, both are `{}`",
                self.axis1.param
            )));
        }
        self.market.validate_fields()?;
        let mut names = BTreeSet::new();
        for p in &self.panels {
            let ok = !p.name.is_empty()
                && p.name.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c));
            if !ok {
                return Err(Error::InvalidSweep(format!(
                    "panel name `{}` must be non-empty and use only [A-Za-z0-9._-]",
                    p.name
                )));
            }
            if !names.insert(p.name.as_str()) {
                return Err(Error::InvalidSweep(format!("duplicate panel `{}`", p.name)));
            }
            p.market.validate_fields()?;
        }
        Ok(())
    }

    /// Panels to run; a spec without panels has one named `default`.
    pub fn effective_panels(&self) -> Vec<Panel> {
        if self.panels.is_empty() {
            vec![Panel { name: "default".into(), market: MarketOverrides::default() }]
        } else {
            self.panels.clone()
        }
    }

    pub fn cell_count(&self) -> usize {
        self.axis1.steps * self.axis2.steps
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub x: f64,
    pub y: f64,
    /// Both a bundling and a no-bundling equilibrium exist.
    pub exists: bool,
    /// Per subgame, in [`Scenario::all`] order.
    pub subgame_exists: [bool; 5],
    /// Retailer 1's gain from bundling, in thousands.
    pub delta_pi_b: Option<f64>,
    pub best_regime: Option<Scenario>,
    /// Why the cell could not be evaluated (invalid parameters).
    pub note: Option<String>,
}

pub fn evaluate_cell(params: &MarketParams, x: f64, y: f64, opts: &PolicyOptions) -> GridCell {
    match compare_policies(params, opts) {
        Ok(cmp) => {
            let mut subgame_exists = [false; 5];
            for (flag, s) in subgame_exists.iter_mut().zip(Scenario::all()) {
                *flag = cmp.exists(&s);
            }
            let exists = cmp.both_exist();
            GridCell {
                x,
                y,
                exists,
                subgame_exists,
                delta_pi_b: cmp.delta_pi_b.map(|d| d / 1000.0),
                best_regime: if exists { cmp.best_pmg } else { None },
                note: None,
            }
        }
        Err(e) => GridCell {
            x,
            y,
            exists: false,
            subgame_exists: [false; 5],
            delta_pi_b: None,
            best_regime: None,
            note: Some(e.to_string()),
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelResult {
    pub name: String,
    pub cells: Vec<GridCell>,
}

/// Evaluates every cell of one panel, `axis1` outer and `axis2` inner.
pub fn run_panel(spec: &SweepSpec, panel: &Panel, opts: &PolicyOptions) -> PanelResult {
    let mut base = MarketParams::baseline();
    spec.market.apply(&mut base);
    panel.market.apply(&mut base);
    let xs = spec.axis1.values();
    let ys = spec.axis2.values();
    let points: Vec<(f64, f64)> =
        xs.iter().flat_map(|&x| ys.iter().map(move |&y| (x, y))).collect();
    let cells = points
        .par_iter()
        .map(|&(x, y)| {
            let mut p = base;
            p.set(&spec.axis1.param, x).expect("validated axis");
            p.set(&spec.axis2.param, y).expect("validated axis");
            evaluate_cell(&p, x, y, opts)
        })
        .collect();
    PanelResult { name: panel.name.clone(), cells }
}

/// Runs all panels on a pool of `threads` workers (0 = rayon default).
pub fn run_sweep(spec: &SweepSpec, threads: usize, opts: &PolicyOptions) -> Result<Vec<PanelResult>> {
    spec.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(|| spec.effective_panels().iter().map(|p| run_panel(spec, p, opts)).collect()))
}

/// Formats like C's `%g` with six significant digits.
pub fn fmt_g6(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let sci = format!("{v:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..6).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{m}e{sign}{:02}", exp.abs());
    }
    let decimals = (5 - exp).max(0) as usize;
    trim_zeros(&format!("{v:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::Config(format!("csv output: {e}"))
}

fn cell_columns(spec: &SweepSpec) -> Vec<String> {
    let mut cols = vec![spec.axis1.param.clone(), spec.axis2.param.clone()];
    let mut outputs = spec.outputs.clone();
    outputs.sort();
    outputs.dedup();
    for o in outputs {
        match o {
            OutputField::Exists => cols.push("exists".into()),
            OutputField::DeltaPiB => cols.push("delta_pi_B".into()),
            OutputField::BestRegime => cols.push("best_regime".into()),
            OutputField::SubgameExists => {
                for s in Scenario::all() {
                    cols.push(format!("exists_{}", s.label().replace(',', "_")));
                }
            }
        }
    }
    cols
}

/// One record per cell; `None` marks an empty field.
fn cell_records(spec: &SweepSpec, cells: &[GridCell]) -> (Vec<String>, Vec<Vec<Option<Value>>>) {
    let cols = cell_columns(spec);
    let rows = cells
        .iter()
        .map(|c| {
            cols.iter()
                .enumerate()
                .map(|(i, col)| match (i, col.as_str()) {
                    (0, _) => Some(Value::from(c.x)),
                    (1, _) => Some(Value::from(c.y)),
                    (_, "exists") => Some(Value::from(c.exists as u8)),
                    (_, "delta_pi_B") => c.delta_pi_b.map(Value::from),
                    (_, "best_regime") => c.best_regime.map(|s| Value::from(s.label())),
                    (_, other) => {
                        let k = Scenario::all()
                            .iter()
                            .position(|s| format!("exists_{}", s.label().replace(',', "_")) == other)
                            .expect("known column");
                        Some(Value::from(c.subgame_exists[k] as u8))
                    }
                })
                .collect()
        })
        .collect();
    (cols, rows)
}

fn value_text(v: &Option<Value>) -> String {
    match v {
        None => String::new(),
        Some(Value::Number(n)) if n.is_f64() => fmt_g6(n.as_f64().unwrap_or(f64::NAN)),
        Some(Value::String(s)) => s.clone(),
        Some(other) => other.to_string(),
    }
}

pub fn write_cells_csv(spec: &SweepSpec, cells: &[GridCell], out: impl Write) -> Result<()> {
    let (cols, rows) = cell_records(spec, cells);
    let mut w = csv::Writer::from_writer(out);
    w.write_record(&cols).map_err(csv_error)?;
    for row in rows {
        w.write_record(row.iter().map(value_text)).map_err(csv_error)?;
    }
    w.flush().map_err(|e| Error::Config(format!("csv output: {e}")))
}

fn write_json(cols: &[String], rows: Vec<Vec<Option<Value>>>, mut out: impl Write) -> Result<()> {
    let records: Vec<Value> = rows
        .into_iter()
        .map(|row| {
            let mut m = Map::new();
            for (k, v) in cols.iter().zip(row) {
                m.insert(k.clone(), v.unwrap_or(Value::Null));
            }
            Value::Object(m)
        })
        .collect();
    serde_json::to_writer_pretty(&mut out, &records)
        .map_err(|e| Error::Config(format!("json output: {e}")))?;
    writeln!(out).map_err(|e| Error::Config(format!("json output: {e}")))
}

pub fn write_cells_json(spec: &SweepSpec, cells: &[GridCell], out: impl Write) -> Result<()> {
    let (cols, rows) = cell_records(spec, cells);
    write_json(&cols, rows, out)
}

/// One row of the symmetric-data equilibrium table. Profits are in thousands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub scenario: Scenario,
    pub theorem: Option<String>,
    /// Prices `p1, p2, pb1, pb2`; without bundling `pb1` holds `p1 + p2`.
    pub prices: Option<[f64; 4]>,
    pub demands: Option<[f64; 7]>,
    pub pi_r1: Option<f64>,
    pub pi_r2: Option<f64>,
    pub welfare: Option<f64>,
}

impl TableRow {
    pub fn label(&self) -> String {
        if self.scenario.bundling {
            self.scenario.label()
        } else {
            "No Bundle".into()
        }
    }
}

pub const TABLE_COLUMNS: [&str; 16] = [
    "scenario", "p1", "p2", "pb1", "pb2", "d_l_i1", "d_l_i2", "d_l_ib", "d_q_ib", "d_l_jb",
    "d_q_jb", "d_s", "pi_r1", "pi_r2", "welfare", "theorem",
];

/// The five table rows: the four bundling subgames, then no bundling.
pub fn table_rows(params: &MarketParams, opts: &PolicyOptions) -> Result<Vec<TableRow>> {
    let cmp = compare_policies(params, opts)?;
    Ok(cmp
        .subgames
        .iter()
        .map(|g| match &g.chosen {
            Some(r) => {
                let k = r.profits.in_thousands();
                let p = r.prices;
                TableRow {
                    scenario: g.scenario,
                    theorem: Some(r.theorem.to_string()),
                    prices: Some([p.p1, p.p2, p.r1_bundle_equivalent(), p.pb2]),
                    demands: Some(r.demands.as_array()),
                    pi_r1: Some(k.pi_r1),
                    pi_r2: Some(k.pi_r2),
                    welfare: Some(k.welfare),
                }
            }
            None => TableRow {
                scenario: g.scenario,
                theorem: None,
                prices: None,
                demands: None,
                pi_r1: None,
                pi_r2: None,
                welfare: None,
            },
        })
        .collect())
}

fn table_records(rows: &[TableRow]) -> Vec<Vec<Option<Value>>> {
    rows.iter()
        .map(|r| {
            let mut rec = vec![Some(Value::from(r.label()))];
            let nums = |xs: Option<&[f64]>, n: usize| -> Vec<Option<Value>> {
                match xs {
                    Some(xs) => xs.iter().map(|&v| Some(Value::from(v))).collect(),
                    None => vec![None; n],
                }
            };
            rec.extend(nums(r.prices.as_ref().map(|p| &p[..]), 4));
            rec.extend(nums(r.demands.as_ref().map(|d| &d[..]), 7));
            for v in [r.pi_r1, r.pi_r2, r.welfare] {
                rec.push(v.map(Value::from));
            }
            rec.push(r.theorem.clone().map(Value::from));
            rec
        })
        .collect()
}

pub fn write_table_csv(rows: &[TableRow], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TABLE_COLUMNS).map_err(csv_error)?;
    for rec in table_records(rows) {
        w.write_record(rec.iter().map(value_text)).map_err(csv_error)?;
    }
    w.flush().map_err(|e| Error::Config(format!("csv output: {e}")))
}

pub fn write_table_json(rows: &[TableRow], out: impl Write) -> Result<()> {
    let cols: Vec<String> = TABLE_COLUMNS.iter().map(|s| s.to_string()).collect();
    write_json(&cols, table_records(rows), out)
}
