//! Declarative run description, read from TOML. Every numeric setting and
//! seed is mandatory; only preset parameters have defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::presets::{Params, Preset};
use crate::bdsde::{check_assumptions, DomainBox};
use crate::coeffs::CoefficientSet;
use crate::error::{Error, Result};
use crate::paths::TimeGrid;
use crate::regression::RegressionSpec;
use crate::spde::{Scheme, SpaceGrid};

/// Samples used by the load-time assumption check.
const LOAD_CHECK_SAMPLES: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub id: String,
    pub dims: DimsSpec,
    pub coefficients: CoefficientSpec,
    pub horizon: Horizon,
    pub seeds: Seeds,
    pub numerics: Numerics,
    pub probes: Vec<Probe>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Sweep>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DimsSpec {
    pub d: usize,
    pub k: usize,
    pub l: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientSpec {
    pub preset: Preset,
    #[serde(default)]
    pub params: Params,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Horizon {
    pub t0: f64,
    #[serde(rename = "T")]
    pub t_end: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    pub w: u64,
    pub b: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Numerics {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "M")]
    pub m: usize,
    /// SPDE time steps per BDSDE step.
    pub spde_substeps: usize,
    pub scheme: Scheme,
    pub regression: RegressionSpec,
    pub space: SpaceSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceSpec {
    pub x_min: f64,
    pub x_max: f64,
    #[serde(rename = "J")]
    pub j: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Probe {
    pub t: f64,
    pub x: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    #[serde(rename = "N", default)]
    pub n: Vec<usize>,
    #[serde(rename = "M", default)]
    pub m: Vec<usize>,
    #[serde(rename = "J", default)]
    pub j: Vec<usize>,
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let s: Scenario = toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            Error::config(field_path(text, e.span(), &msg), msg)
        })?;
        s.validate()?;
        Ok(s)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::config("scenario", format!("cannot read {}: {e}", path.display()))
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serialises")
    }

    pub fn preset(&self) -> Preset {
        self.coefficients.preset
    }

    pub fn coefficients(&self) -> Result<CoefficientSet> {
        self.preset().build(
            &self.coefficients.params,
            self.horizon.t0,
            self.horizon.t_end,
        )
    }

    pub fn time_grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.horizon.t0, self.horizon.t_end, self.numerics.n)
    }

    pub fn space_grid(&self) -> Result<SpaceGrid> {
        let s = self.numerics.space;
        SpaceGrid::new(s.x_min, s.x_max, s.j)
    }

    /// Node index of `t` on the BDSDE grid.
    pub fn node_of(&self, t: f64) -> Result<usize> {
        self.time_grid()?.index_of(t).ok_or_else(|| {
            Error::config(
                "probes.t",
                format!("{t} is not a node of the N = {} grid", self.numerics.n),
            )
        })
    }

    pub fn with_seeds(mut self, w: Option<u64>, b: Option<u64>) -> Self {
        if let Some(w) = w {
            self.seeds.w = w;
        }
        if let Some(b) = b {
            self.seeds.b = b;
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.id.trim().is_empty() {
            return Err(Error::config("id", "must not be empty"));
        }
        let DimsSpec { d, k, l } = self.dims;
        if (d, k, l) != (1, 1, 1) {
            return Err(Error::config(
                "dims",
                format!(
                    "preset `{}` has d = k = l = 1, got ({d}, {k}, {l})",
                    self.preset()
                ),
            ));
        }
        let h = self.horizon;
        if !(h.t0.is_finite() && h.t_end.is_finite() && h.t0 < h.t_end) {
            return Err(Error::config("horizon", "need finite t0 < T"));
        }
        let nm = &self.numerics;
        if nm.n == 0 {
            return Err(Error::config("numerics.N", "must be at least 1"));
        }
        if nm.m == 0 {
            return Err(Error::config("numerics.M", "must be at least 1"));
        }
        if nm.spde_substeps == 0 {
            return Err(Error::config(
                "numerics.spde_substeps",
                "must be at least 1",
            ));
        }
        nm.regression
            .validate()
            .map_err(|e| Error::config("numerics.regression", e.to_string()))?;
        let space = self
            .space_grid()
            .map_err(|e| Error::config("numerics.space", e.to_string()))?;
        if self.probes.is_empty() {
            return Err(Error::config("probes", "at least one probe is required"));
        }
        for p in &self.probes {
            self.node_of(p.t)?;
            if p.t >= h.t_end {
                return Err(Error::config("probes.t", "probe time must be before T"));
            }
            if !(p.x > space.x_min && p.x < space.x_max) {
                return Err(Error::config(
                    "probes.x",
                    format!("{} is outside the space grid", p.x),
                ));
            }
        }
        if let Some(sw) = &self.sweep {
            for (name, list) in [("sweep.N", &sw.n), ("sweep.M", &sw.m), ("sweep.J", &sw.j)] {
                if list.windows(2).any(|w| w[1] <= w[0]) || list.contains(&0) {
                    return Err(Error::config(
                        name,
                        "must be strictly increasing and positive",
                    ));
                }
            }
            if let Some(&nmax) = sw.n.last() {
                if sw.n.iter().any(|n| nmax % n != 0) {
                    return Err(Error::config(
                        "sweep.N",
                        "every entry must divide the largest",
                    ));
                }
                for p in &self.probes {
                    let g = TimeGrid::new(h.t0, h.t_end, sw.n[0])?;
                    if g.index_of(p.t).is_none() {
                        return Err(Error::config(
                            "probes.t",
                            "probe time must be a node of every sweep grid",
                        ));
                    }
                }
            }
        }
        let coeffs = self.coefficients()?;
        let report = check_assumptions(&coeffs, LOAD_CHECK_SAMPLES, &DomainBox::default(), 0)?;
        if let Some(v) = report.violations.first() {
            return Err(Error::config(
                "coefficients.params",
                format!("preset violates {}: {}", v.assumption, v.detail),
            ));
        }
        Ok(())
    }
}

/// Dotted path of the offending key: the enclosing table header plus the
/// key on the error line, or the name quoted in serde's "missing field" /
/// "unknown field" messages.
fn field_path(text: &str, span: Option<std::ops::Range<usize>>, msg: &str) -> String {
    let quoted = (msg.contains("missing field") || msg.contains("unknown field"))
        .then(|| {
            let start = msg.find('`')? + 1;
            let end = start + msg[start..].find('`')?;
            Some(msg[start..end].to_string())
        })
        .flatten();
    let Some(span) = span else {
        return quoted.unwrap_or_else(|| "scenario".into());
    };
    let at = span.start.min(text.len());
    let line_start = text[..at].rfind('\n').map_or(0, |i| i + 1);
    let line = text[line_start..].lines().next().unwrap_or("").trim();
    let header = |l: &str| {
        l.starts_with('[')
            .then(|| l.trim_matches(|c| c == '[' || c == ']').trim().to_string())
    };
    let table = header(line).or_else(|| {
        text[..line_start]
            .lines()
            .rev()
            .find_map(|l| header(l.trim()))
    });
    let key = if quoted.is_none() && !line.starts_with('[') {
        line.split_once('=')
            .map(|(k, _)| k.trim().trim_matches('"').to_string())
    } else {
        None
    };
    let leaf = quoted.or(key);
    match (table, leaf) {
        (Some(t), Some(k)) => format!("{t}.{k}"),
        (Some(t), None) => t,
        (None, Some(k)) => k,
        (None, None) => "scenario".into(),
    }
}
