use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;

use super::config::{ExperimentConfig, FeatureSubset};
use super::evaluate::{evaluate, EvalSpec};
use super::train::train;
use crate::error::{Error, Result};
use crate::metrics::MetricsReport;
use crate::models::{HeadSelector, ModelKind, TrainingDomain};
use crate::sim::{generate, SimOutput};

/// Seeds used by the canned experiments.
pub const SEEDS: [u64; 3] = [1, 2, 3];

/// Cut-off at which the directional checks are read.
pub const CHECK_K: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Claim {
    Ssb,
    Rcs,
    Ablation,
}

impl Claim {
    pub fn name(self) -> &'static str {
        match self {
            Claim::Ssb => "ssb",
            Claim::Rcs => "rcs",
            Claim::Ablation => "ablation",
        }
    }

    pub fn cells(self) -> Vec<Cell> {
        use ModelKind::*;
        use TrainingDomain::*;
        match self {
            Claim::Ssb => vec![
                Cell::new(DeepBaseline, ExposureOnly),
                Cell::new(DeepBaseline, EntireChain),
                Cell::new(Ecm, EntireChain),
                Cell::new(Ecmm, EntireChain),
            ],
            Claim::Rcs => vec![
                Cell::new(DeepBaseline, ExposureOnly),
                Cell::new(DeepBaseline, EntireChain),
                Cell::new(Ecm, ExposureOnly),
                Cell::new(Ecm, EntireChain),
            ],
            Claim::Ablation => vec![
                Cell::new(Ecm, EntireChain),
                Cell::new(Ecm, EntireChain).half(),
                Cell::new(Ecmm, EntireChain),
                Cell::new(Ecmm, EntireChain).half(),
                Cell::new(Ecmm, EntireChain).without_l0(),
                Cell::new(Ecmm, EntireChain).four_towers(),
            ],
        }
    }
}

impl FromStr for Claim {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ssb" => Ok(Claim::Ssb),
            "rcs" => Ok(Claim::Rcs),
            "ablation" => Ok(Claim::Ablation),
            _ => Err(Error::Config(format!(
                "unknown claim `{s}` (ssb|rcs|ablation)"
            ))),
        }
    }
}

/// One trained configuration inside an experiment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Cell {
    pub kind: ModelKind,
    pub domain: TrainingDomain,
    pub features: FeatureSubset,
    pub no_l0: bool,
    pub four_towers: bool,
}

impl Cell {
    pub fn new(kind: ModelKind, domain: TrainingDomain) -> Self {
        Self {
            kind,
            domain,
            features: FeatureSubset::All,
            no_l0: false,
            four_towers: false,
        }
    }

    fn half(mut self) -> Self {
        self.features = FeatureSubset::Half;
        self
    }

    fn without_l0(mut self) -> Self {
        self.no_l0 = true;
        self
    }

    fn four_towers(mut self) -> Self {
        self.four_towers = true;
        self
    }

    pub fn label(&self) -> String {
        let mut s = format!("{}/{}", self.kind, self.domain);
        if self.features == FeatureSubset::Half {
            s.push_str("/half");
        }
        if self.no_l0 {
            s.push_str("/wo_l0");
        }
        if self.four_towers {
            s.push_str("/t4");
        }
        s
    }

    pub fn config(&self, base: &ExperimentConfig, seed: u64) -> ExperimentConfig {
        let mut cfg = base.clone().with_model(self.kind, self.domain);
        cfg.seed = seed;
        cfg.features = self.features;
        if self.no_l0 {
            cfg.model.lambda = 0.0;
        }
        if self.four_towers {
            cfg.model.towers = 4;
        }
        cfg
    }
}

/// Metrics of one (cell, seed) run.
#[derive(Clone, Debug)]
pub struct CellResult {
    pub cell: Cell,
    pub seed: u64,
    pub report: MetricsReport,
    /// `None` for models without gates.
    pub expected_active_gates: Option<f64>,
    pub epoch_losses: Vec<f64>,
    pub aborted: Option<String>,
    /// Wall-clock; kept out of the written report.
    pub seconds_per_epoch: f64,
    /// Wall-clock for training plus evaluation.
    pub seconds_total: f64,
}

/// A directional comparison of two seed-averaged quantities.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub left: f64,
    pub right: f64,
    /// Required `left − right`; the check passes when the difference meets it.
    pub margin: f64,
    /// Strict inequality when the margin is zero.
    pub strict: bool,
    /// Informational checks are reported but never fail the run.
    pub asserted: bool,
}

impl Check {
    pub fn passed(&self) -> bool {
        let d = self.left - self.right;
        if self.strict {
            d > self.margin
        } else {
            d >= self.margin
        }
    }

    pub fn line(&self) -> String {
        let op = match (self.strict, self.margin == 0.0) {
            (true, true) => ">".to_string(),
            (false, true) => ">=".to_string(),
            (true, false) => format!("> right + {}", self.margin),
            (false, false) => format!(">= right + {}", self.margin),
        };
        let status = match (self.passed(), self.asserted) {
            (true, _) => "PASS",
            (false, true) => "FAIL",
            (false, false) => "MISS",
        };
        format!(
            "{status}\t{}\t{:.6} {op} {:.6}{}",
            self.name,
            self.left,
            self.right,
            if self.asserted {
                ""
            } else {
                "\t(informational)"
            }
        )
    }
}

/// Results of a canned experiment.
#[derive(Clone, Debug)]
pub struct ClaimReport {
    pub claim: Claim,
    pub seeds: Vec<u64>,
    pub results: Vec<CellResult>,
    pub checks: Vec<Check>,
}

impl ClaimReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().filter(|c| c.asserted).all(Check::passed)
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks
            .iter()
            .filter(|c| c.asserted && !c.passed())
            .collect()
    }

    /// Training plus evaluation time of every cell, run one after another.
    pub fn sequential_seconds(&self) -> f64 {
        self.results.iter().map(|r| r.seconds_total).sum()
    }

    fn of(&self, cell: &Cell) -> Vec<&CellResult> {
        self.results.iter().filter(|r| r.cell == *cell).collect()
    }

    /// Seed mean of a report value, skipping undefined entries.
    pub fn mean_metric(&self, cell: &Cell, metric: &str, k: usize) -> Result<f64> {
        let vals: Vec<f64> = self
            .of(cell)
            .iter()
            .filter_map(|r| r.report.value(metric, k))
            .collect();
        if vals.is_empty() {
            return Err(Error::Undefined(format!(
                "{metric}@{k} undefined for {}",
                cell.label()
            )));
        }
        Ok(vals.iter().sum::<f64>() / vals.len() as f64)
    }

    pub fn mean_active_gates(&self, cell: &Cell) -> Result<f64> {
        let vals: Vec<f64> = self
            .of(cell)
            .iter()
            .filter_map(|r| r.expected_active_gates)
            .collect();
        if vals.is_empty() {
            return Err(Error::Undefined(format!("{} has no gates", cell.label())));
        }
        Ok(vals.iter().sum::<f64>() / vals.len() as f64)
    }

    /// Per-seed rows followed by seed means; deterministic for fixed inputs.
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("claim\tcell\tseed\tmetric\tk\tvalue\n");
        let fmt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"));
        let mut means: BTreeMap<(usize, &'static str, usize), Vec<f64>> = BTreeMap::new();
        let order: Vec<Cell> = self.claim.cells();
        for r in &self.results {
            let label = r.cell.label();
            let pos = order
                .iter()
                .position(|c| *c == r.cell)
                .unwrap_or(usize::MAX);
            let mut rows = r.report.rows();
            if r.expected_active_gates.is_some() {
                rows.push(("expected_active_gates", 0, r.expected_active_gates));
            }
            for (i, l) in r.epoch_losses.iter().enumerate() {
                writeln!(
                    s,
                    "{}\t{label}\t{}\ttrain_loss_epoch\t{}\t{l:.6}",
                    self.claim.name(),
                    r.seed,
                    i + 1
                )
                .unwrap();
            }
            for (metric, k, v) in rows {
                writeln!(
                    s,
                    "{}\t{label}\t{}\t{metric}\t{k}\t{}",
                    self.claim.name(),
                    r.seed,
                    fmt(v)
                )
                .unwrap();
                if let Some(v) = v {
                    means.entry((pos, metric, k)).or_default().push(v);
                }
            }
        }
        for ((pos, metric, k), vals) in &means {
            let label = order.get(*pos).map_or_else(String::new, Cell::label);
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            writeln!(
                s,
                "{}\t{label}\tmean\t{metric}\t{k}\t{m:.6}",
                self.claim.name()
            )
            .unwrap();
        }
        s
    }

    pub fn checks_text(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            writeln!(s, "{}", c.line()).unwrap();
        }
        s
    }
}

/// Trains and evaluates one cell on pre-generated data.
pub fn run_cell(
    base: &ExperimentConfig,
    cell: Cell,
    seed: u64,
    sim: &SimOutput,
) -> Result<CellResult> {
    let start = Instant::now();
    let cfg = cell.config(base, seed);
    let out = train(&cfg, &sim.train)?;
    let model = out.checkpoint.model()?;
    let spec = EvalSpec {
        head: HeadSelector::T1,
        ks: &cfg.eval_ks,
        domain: cfg.domain,
        rates: cfg.sim.cascade.rates,
        seed,
    };
    let report = evaluate(
        model.as_ref(),
        &out.checkpoint.params,
        &sim.eval,
        &sim.eval_oracle,
        &spec,
    )?;
    let seconds_per_epoch = out.seconds_per_epoch();
    Ok(CellResult {
        cell,
        seed,
        report,
        expected_active_gates: if model.gate_count() > 0 {
            Some(model.expected_active_gates(&out.checkpoint.params)?)
        } else {
            None
        },
        epoch_losses: out.epoch_losses,
        aborted: out.aborted,
        seconds_per_epoch,
        seconds_total: start.elapsed().as_secs_f64(),
    })
}

/// Runs every (cell, seed) of a claim and derives its checks.
pub fn reproduce(claim: Claim, base: &ExperimentConfig, seeds: &[u64]) -> Result<ClaimReport> {
    Ok(reproduce_all(&[claim], base, seeds)?.remove(0))
}

/// Runs several claims, training each distinct (cell, seed) once.
///
/// Each seed's data is generated once and shared by its cells; cells run in
/// parallel and are collected in a fixed order.
pub fn reproduce_all(
    claims: &[Claim],
    base: &ExperimentConfig,
    seeds: &[u64],
) -> Result<Vec<ClaimReport>> {
    base.validate()?;
    if !base.eval_ks.contains(&CHECK_K) {
        return Err(Error::Config(format!("eval_ks must include {CHECK_K}")));
    }
    let mut cells: Vec<Cell> = Vec::new();
    for c in claims.iter().flat_map(|c| c.cells()) {
        if !cells.contains(&c) {
            cells.push(c);
        }
    }
    let data: Vec<SimOutput> = seeds
        .par_iter()
        .map(|&s| generate(s, &base.sim))
        .collect::<Result<_>>()?;
    let jobs: Vec<(usize, Cell)> = (0..seeds.len())
        .flat_map(|i| cells.iter().map(move |&c| (i, c)))
        .collect();
    let results = jobs
        .par_iter()
        .map(|&(i, c)| run_cell(base, c, seeds[i], &data[i]))
        .collect::<Result<Vec<_>>>()?;
    claims
        .iter()
        .map(|&claim| {
            let wanted = claim.cells();
            let mut report = ClaimReport {
                claim,
                seeds: seeds.to_vec(),
                results: results
                    .iter()
                    .filter(|r| wanted.contains(&r.cell))
                    .cloned()
                    .collect(),
                checks: Vec::new(),
            };
            report.checks = checks(&report)?;
            Ok(report)
        })
        .collect()
}

fn checks(r: &ClaimReport) -> Result<Vec<Check>> {
    use ModelKind::*;
    use TrainingDomain::*;
    let k = CHECK_K;
    let check =
        |name: &str, left: f64, right: f64, margin: f64, strict: bool, asserted: bool| Check {
            name: name.to_string(),
            left,
            right,
            margin,
            strict,
            asserted,
        };
    let db_eo = Cell::new(DeepBaseline, ExposureOnly);
    let db_ec = Cell::new(DeepBaseline, EntireChain);
    let ecm_eo = Cell::new(Ecm, ExposureOnly);
    let ecm = Cell::new(Ecm, EntireChain);
    let ecmm = Cell::new(Ecmm, EntireChain);
    Ok(match r.claim {
        Claim::Ssb => vec![
            check(
                "recall_click@10: ecm/entire_chain vs deep_baseline/exposure_only",
                r.mean_metric(&ecm, "recall_click", k)?,
                r.mean_metric(&db_eo, "recall_click", k)?,
                0.05,
                false,
                true,
            ),
            check(
                "rcs@10: deep_baseline/entire_chain vs deep_baseline/exposure_only",
                r.mean_metric(&db_ec, "rcs", k)?,
                r.mean_metric(&db_eo, "rcs", k)?,
                0.0,
                true,
                true,
            ),
            check(
                "bias_gap: deep_baseline/exposure_only vs ecm/entire_chain",
                r.mean_metric(&db_eo, "bias_gap", 0)?,
                r.mean_metric(&ecm, "bias_gap", 0)?,
                0.0,
                true,
                true,
            ),
            check(
                "gauc: ecmm/entire_chain vs ecm/entire_chain",
                r.mean_metric(&ecmm, "gauc", 0)?,
                r.mean_metric(&ecm, "gauc", 0)?,
                0.0,
                false,
                true,
            ),
        ],
        Claim::Rcs => vec![
            check(
                "rcs@10: deep_baseline/entire_chain vs deep_baseline/exposure_only",
                r.mean_metric(&db_ec, "rcs", k)?,
                r.mean_metric(&db_eo, "rcs", k)?,
                0.0,
                true,
                true,
            ),
            check(
                "rcs@10: ecm/entire_chain vs ecm/exposure_only",
                r.mean_metric(&ecm, "rcs", k)?,
                r.mean_metric(&ecm_eo, "rcs", k)?,
                0.0,
                true,
                false,
            ),
        ],
        Claim::Ablation => vec![
            check(
                "expected_active_gates: ecmm wo_l0 vs ecmm",
                r.mean_active_gates(&ecmm.without_l0())?,
                r.mean_active_gates(&ecmm)?,
                0.0,
                true,
                true,
            ),
            check(
                "gauc: ecm all vs half features",
                r.mean_metric(&ecm, "gauc", 0)?,
                r.mean_metric(&ecm.half(), "gauc", 0)?,
                0.0,
                false,
                false,
            ),
            check(
                "gauc: ecmm all vs half features",
                r.mean_metric(&ecmm, "gauc", 0)?,
                r.mean_metric(&ecmm.half(), "gauc", 0)?,
                0.0,
                false,
                false,
            ),
        ],
    })
}

/// Wall-clock summary, printed apart from the deterministic report.
pub fn timing_text(r: &ClaimReport) -> String {
    let mut s = String::new();
    for cell in r.claim.cells() {
        let rs = r.of(&cell);
        let mean = rs.iter().map(|x| x.seconds_per_epoch).sum::<f64>() / rs.len().max(1) as f64;
        writeln!(s, "{}\tseconds_per_epoch\t{mean:.3}", cell.label()).unwrap();
    }
    s
}
