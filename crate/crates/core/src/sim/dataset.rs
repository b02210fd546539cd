use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::cascade::{
    label_domains, simulate_request, subsample_domains, CascadeConfig, CascadeSample, DomainTag,
};
use super::world::{World, WorldConfig};
use crate::error::{Error, Result};
use crate::numerics::RngStream;

pub const DATASET_HEADER: &str = "#ecpr-dataset v1";

/// World plus cascade settings.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SimConfig {
    pub world: WorldConfig,
    pub cascade: CascadeConfig,
}

/// Records sharing a field count.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub n_fields: usize,
    pub records: Vec<CascadeSample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records reaching the exposure domain (deepest stage ≥ 5).
    pub fn exposure_only(&self) -> Dataset {
        Dataset {
            n_fields: self.n_fields,
            records: self
                .records
                .iter()
                .filter(|r| r.deepest_stage >= 5)
                .cloned()
                .collect(),
        }
    }

    /// Contiguous index ranges sharing a request id.
    pub fn request_groups(&self) -> Vec<std::ops::Range<usize>> {
        let mut out = Vec::new();
        let mut start = 0;
        for i in 1..=self.records.len() {
            if i == self.records.len()
                || self.records[i].request_id != self.records[start].request_id
            {
                if i > start {
                    out.push(start..i);
                }
                start = i;
            }
        }
        out
    }

    pub fn to_tsv(&self) -> String {
        let mut s = format!("{DATASET_HEADER} fields={}\n", self.n_fields);
        for r in &self.records {
            write!(s, "{}\t{}\t{}", r.request_id, r.user_id, r.item_id).unwrap();
            for f in &r.features {
                write!(s, "\t{f}").unwrap();
            }
            writeln!(
                s,
                "\t{}\t{}\t{}\t{}\t{}",
                r.deepest_stage,
                r.y5 as u8,
                r.y6 as u8,
                r.domain_tag.code(),
                r.sample_rate_weight
            )
            .unwrap();
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Dataset> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Dataset::parse(&text, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Dataset> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::parse(path, 1, "empty file"))?;
        let n_fields: usize = header
            .strip_prefix(DATASET_HEADER)
            .and_then(|rest| rest.trim().strip_prefix("fields="))
            .and_then(|n| n.parse().ok())
            .ok_or_else(|| Error::parse(path, 1, format!("bad header `{header}`")))?;
        let mut records = Vec::new();
        for (i, line) in lines.enumerate() {
            let lineno = i + 2;
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != n_fields + 8 {
                return Err(Error::parse(
                    path,
                    lineno,
                    format!("expected {} columns, got {}", n_fields + 8, cols.len()),
                ));
            }
            let bad = |what: &str| Error::parse(path, lineno, format!("bad {what}"));
            let int = |c: &str, what: &str| c.parse::<u64>().map_err(|_| bad(what));
            let flag = |c: &str, what: &str| match c {
                "0" => Ok(false),
                "1" => Ok(true),
                _ => Err(bad(what)),
            };
            let features = cols[3..3 + n_fields]
                .iter()
                .map(|c| c.parse::<u32>().map_err(|_| bad("feature id")))
                .collect::<Result<Vec<_>>>()?;
            let tail = &cols[3 + n_fields..];
            let deepest_stage = int(tail[0], "deepest_stage")? as u8;
            let y5 = flag(tail[1], "y5")?;
            let y6 = flag(tail[2], "y6")?;
            let domain_tag = DomainTag::from_code(int(tail[3], "domain_tag")? as u8)
                .map_err(|e| Error::parse(path, lineno, e.to_string()))?;
            let expected = DomainTag::from_labels(y5, y6, deepest_stage)
                .map_err(|e| Error::parse(path, lineno, e.to_string()))?;
            if expected != domain_tag {
                return Err(Error::parse(
                    path,
                    lineno,
                    "domain tag disagrees with labels",
                ));
            }
            let sample_rate_weight: f64 = tail[4].parse().map_err(|_| bad("sample_rate_weight"))?;
            records.push(CascadeSample {
                request_id: int(cols[0], "request_id")?,
                user_id: int(cols[1], "user_id")? as u32,
                item_id: int(cols[2], "item_id")? as u32,
                features,
                deepest_stage,
                y5,
                y6,
                domain_tag,
                sample_rate_weight,
            });
        }
        Ok(Dataset { n_fields, records })
    }
}

/// Train split (subsampled), full evaluation split and its oracle propensities.
#[derive(Clone, Debug, PartialEq)]
pub struct SimOutput {
    pub train: Dataset,
    pub eval: Dataset,
    /// `p*(u, i)` aligned with `eval.records`.
    pub eval_oracle: Vec<f64>,
}

fn run_request(
    world: &World,
    cascade: &CascadeConfig,
    seed: u64,
    request_id: u64,
) -> Result<Vec<CascadeSample>> {
    let mut rng = RngStream::new(seed, format!("request/{request_id}"));
    let user = rng.below(world.n_users());
    let mut recs = simulate_request(world, cascade, request_id, user, &mut rng)?;
    label_domains(&mut recs)?;
    Ok(recs)
}

/// Generates the world and both splits.
///
/// Each request draws from its own stream keyed by request id, so the
/// output does not depend on generation order.
pub fn generate(seed: u64, config: &SimConfig) -> Result<SimOutput> {
    config.cascade.validate()?;
    let world = World::generate(seed, config.world.clone());
    let n_fields = world.schema().len();
    let cascade = &config.cascade;
    let n_train = cascade.train_requests as u64;

    let mut train = Vec::new();
    for rid in 0..n_train {
        let recs = run_request(&world, cascade, seed, rid)?;
        let mut rng = RngStream::new(seed, format!("subsample/{rid}"));
        train.extend(subsample_domains(recs, &cascade.rates, &mut rng));
    }
    let mut eval = Vec::new();
    let mut eval_oracle = Vec::new();
    for rid in n_train..n_train + cascade.eval_requests as u64 {
        let recs = run_request(&world, cascade, seed, rid)?;
        eval_oracle.extend(
            recs.iter()
                .map(|r| world.propensity(r.user_id as usize, r.item_id as usize)),
        );
        eval.extend(recs);
    }
    Ok(SimOutput {
        train: Dataset {
            n_fields,
            records: train,
        },
        eval: Dataset {
            n_fields,
            records: eval,
        },
        eval_oracle,
    })
}

pub const ORACLE_HEADER: &str = "#ecpr-oracle v1";

/// Oracle side file: `request_id item_id propensity` per evaluation record.
pub fn oracle_to_tsv(eval: &Dataset, oracle: &[f64]) -> String {
    let mut s = format!("{ORACLE_HEADER}\n");
    for (r, p) in eval.records.iter().zip(oracle) {
        writeln!(s, "{}\t{}\t{:.16e}", r.request_id, r.item_id, p).unwrap();
    }
    s
}

pub fn read_oracle(path: &Path, eval: &Dataset) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some(ORACLE_HEADER) {
        return Err(Error::parse(path, 1, "bad oracle header"));
    }
    let mut out = Vec::with_capacity(eval.len());
    for (i, (line, rec)) in lines.zip(&eval.records).enumerate() {
        let cols: Vec<&str> = line.split('\t').collect();
        let ok = cols.len() == 3
            && cols[0].parse::<u64>().ok() == Some(rec.request_id)
            && cols[1].parse::<u32>().ok() == Some(rec.item_id);
        if !ok {
            return Err(Error::parse(
                path,
                i + 2,
                "oracle row does not match dataset",
            ));
        }
        out.push(
            cols[2]
                .parse()
                .map_err(|_| Error::parse(path, i + 2, "bad propensity"))?,
        );
    }
    if out.len() != eval.len() {
        return Err(Error::parse(
            path,
            out.len() + 2,
            "oracle shorter than dataset",
        ));
    }
    Ok(out)
}
