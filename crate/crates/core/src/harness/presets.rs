//! Named coefficient families. Each preset fixes `d = k = l = 1`, declares
//! the (H1)/(H2) constants implied by its parameters, and carries the
//! finite-difference budget constant used by the comparison gate.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::coeffs::scalar::{Driver, Scalar, Smooth};
use crate::coeffs::{CoefficientSet, DeclaredConstants};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    HeatQuadratic,
    OuLinear,
    AdditiveNoise,
    NonlinearFExpDecay,
    ContractingG,
    RandomCoeffSine,
}

pub type Params = BTreeMap<String, f64>;

impl Preset {
    pub const ALL: [Preset; 6] = [
        Preset::HeatQuadratic,
        Preset::OuLinear,
        Preset::AdditiveNoise,
        Preset::NonlinearFExpDecay,
        Preset::ContractingG,
        Preset::RandomCoeffSine,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::HeatQuadratic => "heat-quadratic",
            Preset::OuLinear => "ou-linear",
            Preset::AdditiveNoise => "additive-noise",
            Preset::NonlinearFExpDecay => "nonlinear-f-exp-decay",
            Preset::ContractingG => "contracting-g",
            Preset::RandomCoeffSine => "random-coeff-sine",
        }
    }

    /// `(name, default, lo, hi)` of every parameter, bounds inclusive.
    pub fn parameters(self) -> &'static [(&'static str, f64, f64, f64)] {
        match self {
            Preset::HeatQuadratic => &[("sigma", 1.0, 0.05, 5.0)],
            Preset::OuLinear => &[("a", 1.0, 0.0, 10.0), ("sigma", 1.0, 0.05, 5.0)],
            Preset::AdditiveNoise => &[("c", 0.5, -5.0, 5.0), ("gamma", 0.3, -5.0, 5.0)],
            Preset::NonlinearFExpDecay => &[("lambda", 1.0, 0.0, 10.0), ("h0", 1.0, -100.0, 100.0)],
            Preset::ContractingG => &[("kappa", 0.5, 0.0, 0.95)],
            Preset::RandomCoeffSine => &[("amplitude", 0.5, 0.0, 2.0), ("g_scale", 1.0, 0.0, 2.0)],
        }
    }

    /// Budget constant `C_FD` of `|u − Y| ≤ 3·SE + C_FD·(dt + dx²)`,
    /// fixed from coupled self-convergence runs of the shipped scenarios
    /// (`examples/calibrate_cfd.rs`): twice the larger of the `|ΔY|/Δdt`
    /// and `|Δu|/Δdx²` slopes, rounded up to one significant figure.
    pub fn c_fd(self) -> f64 {
        match self {
            Preset::HeatQuadratic => 0.2,
            Preset::OuLinear => 0.4,
            Preset::AdditiveNoise => 0.07,
            Preset::NonlinearFExpDecay => 0.4,
            Preset::ContractingG => 0.5,
            Preset::RandomCoeffSine => 0.6,
        }
    }

    /// Fills defaults and rejects unknown or out-of-range parameters.
    pub fn resolve(self, params: &Params) -> Result<Params> {
        let spec = self.parameters();
        if let Some(bad) = params.keys().find(|k| !spec.iter().any(|(n, ..)| n == k)) {
            return Err(Error::config(
                format!("coefficients.params.{bad}"),
                format!("unknown parameter for preset `{}`", self.name()),
            ));
        }
        let mut out = Params::new();
        for &(name, default, lo, hi) in spec {
            let v = params.get(name).copied().unwrap_or(default);
            if !(v >= lo && v <= hi) {
                return Err(Error::config(
                    format!("coefficients.params.{name}"),
                    format!("{v} is outside the admissible range [{lo}, {hi}]"),
                ));
            }
            out.insert(name.to_string(), v);
        }
        Ok(out)
    }

    /// The coefficient set on `[t0, t_end]` (only `φ` depends on the horizon).
    pub fn build(self, params: &Params, t0: f64, t_end: f64) -> Result<CoefficientSet> {
        let p = self.resolve(params)?;
        let get = |k: &str| p[k];
        let set = match self {
            Preset::HeatQuadratic => Scalar {
                sigma: Smooth::constant(get("sigma")),
                h: square(),
                constants: DeclaredConstants {
                    c: 0.0,
                    alpha: 0.0,
                    growth: 0.0,
                },
                ..Default::default()
            },
            Preset::OuLinear => Scalar {
                b: Smooth::linear(-get("a"), 0.0),
                sigma: Smooth::constant(get("sigma")),
                h: Smooth::linear(1.0, 0.0),
                constants: DeclaredConstants {
                    c: 0.0,
                    alpha: 0.0,
                    growth: 0.0,
                },
                ..Default::default()
            },
            Preset::AdditiveNoise => {
                let c = get("c");
                Scalar {
                    h: square(),
                    f: Driver {
                        value: Arc::new(move |_, x, _, _| c * x.cos()),
                        dx: Arc::new(move |_, x, _, _| -c * x.sin()),
                        ..Driver::zero()
                    },
                    g: Driver::constant(get("gamma")),
                    constants: DeclaredConstants {
                        c: 0.0,
                        alpha: 0.0,
                        growth: 1.0,
                    },
                    ..Default::default()
                }
            }
            Preset::NonlinearFExpDecay => {
                let lambda = get("lambda");
                Scalar {
                    h: Smooth::constant(get("h0")),
                    f: Driver::affine(-lambda, 0.0, 0.0),
                    constants: DeclaredConstants {
                        c: lambda * lambda,
                        alpha: 0.0,
                        growth: 0.0,
                    },
                    ..Default::default()
                }
            }
            Preset::ContractingG => {
                let kappa = get("kappa");
                Scalar {
                    h: Smooth {
                        value: Arc::new(f64::sin),
                        deriv: Arc::new(f64::cos),
                    },
                    g: Driver::affine(0.0, kappa, 0.0),
                    constants: DeclaredConstants {
                        c: 0.0,
                        alpha: kappa * kappa,
                        growth: 0.0,
                    },
                    ..Default::default()
                }
            }
            Preset::RandomCoeffSine => {
                random_coeff_sine(get("amplitude"), get("g_scale"), t0, t_end)
            }
        };
        Ok(set.build())
    }

    /// Closed-form `u(t, x)` where one exists.
    pub fn exact(self, params: &Params, t: f64, t_end: f64, x: f64) -> Option<f64> {
        let p = self.resolve(params).ok()?;
        let tau = t_end - t;
        match self {
            Preset::HeatQuadratic => Some(x * x + p["sigma"].powi(2) * tau),
            Preset::OuLinear => Some(x * (-p["a"] * tau).exp()),
            Preset::NonlinearFExpDecay => Some(p["h0"] * (-p["lambda"] * tau).exp()),
            _ => None,
        }
    }
}

fn square() -> Smooth {
    Smooth {
        value: Arc::new(|x| x * x),
        deriv: Arc::new(|x| 2.0 * x),
    }
}

/// `b = 0.2 sin x`, `σ = 0.9 + 0.1 cos x`, `h = cos x`,
/// `f̄ = 0.5 sin(x+e) − 0.5y + 0.2 sin z`,
/// `ḡ = s·(0.2 cos(x+e) + 0.1 sin y + 0.2 sin z)`,
/// `φ(t) = a·(1 + 0.5 sin(2π(t−t0)/(T−t0)))`.
fn random_coeff_sine(amplitude: f64, s: f64, t0: f64, t_end: f64) -> Scalar {
    let span = t_end - t0;
    Scalar {
        b: Smooth {
            value: Arc::new(|x| 0.2 * x.sin()),
            deriv: Arc::new(|x| 0.2 * x.cos()),
        },
        sigma: Smooth {
            value: Arc::new(|x| 0.9 + 0.1 * x.cos()),
            deriv: Arc::new(|x| -0.1 * x.sin()),
        },
        h: Smooth {
            value: Arc::new(f64::cos),
            deriv: Arc::new(|x| -x.sin()),
        },
        f: Driver {
            value: Arc::new(|e, x, y, z| 0.5 * (x + e).sin() - 0.5 * y + 0.2 * z.sin()),
            dx: Arc::new(|e, x, _, _| 0.5 * (x + e).cos()),
            dy: Arc::new(|_, _, _, _| -0.5),
            dz: Arc::new(|_, _, _, z| 0.2 * z.cos()),
        },
        g: Driver {
            value: Arc::new(move |e, x, y, z| {
                s * (0.2 * (x + e).cos() + 0.1 * y.sin() + 0.2 * z.sin())
            }),
            dx: Arc::new(move |e, x, _, _| -0.2 * s * (x + e).sin()),
            dy: Arc::new(move |_, _, y, _| 0.1 * s * y.cos()),
            dz: Arc::new(move |_, _, _, z| 0.2 * s * z.cos()),
        },
        phi: Arc::new(move |t| amplitude * (1.0 + 0.5 * (2.0 * PI * (t - t0) / span).sin())),
        constants: DeclaredConstants {
            c: 0.29f64.max(0.01 * s * s),
            alpha: 0.04 * s * s,
            growth: 2.0,
        },
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::config("coefficients.preset", format!("unknown preset `{s}`")))
    }
}
