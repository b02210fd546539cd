use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::models::{build_model, Model, ModelKind};
use crate::numerics::{ParameterSet, Tensor2D};

pub const CHECKPOINT_HEADER: &str = "#ecpr-checkpoint v1";

/// Trained parameters plus the configuration that produced them.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: ExperimentConfig,
    pub params: ParameterSet,
}

impl Checkpoint {
    pub fn kind(&self) -> ModelKind {
        self.config.model.kind
    }

    /// Rebuilds the model this checkpoint belongs to.
    pub fn model(&self) -> Result<Box<dyn Model>> {
        build_model(&self.config.model, &self.config.schema())
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{CHECKPOINT_HEADER} model={}\n", self.kind());
        for (name, t) in self.params.iter() {
            writeln!(s, "tensor {name} {} {}", t.rows(), t.cols()).unwrap();
            for r in 0..t.rows() {
                let row: Vec<String> = t.row(r).iter().map(|v| format!("{v:.16e}")).collect();
                s.push_str(&row.join(" "));
                s.push('\n');
            }
        }
        s.push_str("config\n");
        s.push_str(&self.config.to_text());
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let lines: Vec<&str> = text.lines().collect();
        let header = lines.first().copied().unwrap_or("");
        let kind: ModelKind = header
            .strip_prefix(CHECKPOINT_HEADER)
            .and_then(|rest| rest.trim().strip_prefix("model="))
            .ok_or_else(|| Error::parse(path, 1, format!("bad header `{header}`")))?
            .parse()
            .map_err(|e: Error| Error::parse(path, 1, e.to_string()))?;

        let mut params = ParameterSet::new();
        let mut i = 1;
        while i < lines.len() && lines[i] != "config" {
            let cols: Vec<&str> = lines[i].split(' ').collect();
            let (name, rows, ncols) = match cols.as_slice() {
                ["tensor", name, r, c] => {
                    let dim = |x: &str| {
                        x.parse::<usize>()
                            .map_err(|_| Error::parse(path, i + 1, format!("bad dimension `{x}`")))
                    };
                    (name.to_string(), dim(r)?, dim(c)?)
                }
                _ => {
                    return Err(Error::parse(
                        path,
                        i + 1,
                        "expected `tensor <name> <rows> <cols>`",
                    ))
                }
            };
            if params.contains(&name) {
                return Err(Error::parse(
                    path,
                    i + 1,
                    format!("duplicate tensor `{name}`"),
                ));
            }
            let mut data = Vec::with_capacity(rows * ncols);
            for r in 0..rows {
                let lineno = i + 2 + r;
                let line = lines
                    .get(i + 1 + r)
                    .ok_or_else(|| Error::parse(path, lineno, "truncated tensor"))?;
                let before = data.len();
                for v in line.split(' ') {
                    let x: f64 = v
                        .parse()
                        .map_err(|_| Error::parse(path, lineno, format!("bad value `{v}`")))?;
                    if !x.is_finite() {
                        return Err(Error::parse(path, lineno, "non-finite value"));
                    }
                    data.push(x);
                }
                if data.len() - before != ncols {
                    return Err(Error::parse(
                        path,
                        lineno,
                        format!("expected {ncols} values"),
                    ));
                }
            }
            params.insert(name, Tensor2D::from_vec(rows, ncols, data)?);
            i += 1 + rows;
        }
        if i >= lines.len() {
            return Err(Error::parse(path, i + 1, "missing config section"));
        }
        let mut config = ExperimentConfig::default();
        for (j, line) in lines.iter().enumerate().skip(i + 1) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(path, j + 1, "expected `key = value`"))?;
            config
                .set(k.trim(), v.trim())
                .map_err(|e| Error::parse(path, j + 1, e.to_string()))?;
        }
        config.validate()?;
        if config.model.kind != kind {
            return Err(Error::parse(path, 1, "header model disagrees with config"));
        }
        let ckpt = Checkpoint { config, params };
        let expected = ckpt
            .model()?
            .init_params(&mut crate::numerics::RngStream::new(0, "shape"));
        expected
            .check_aligned(&ckpt.params)
            .map_err(|e| Error::parse(path, 1, format!("tensors do not fit the model: {e}")))?;
        Ok(ckpt)
    }
}
