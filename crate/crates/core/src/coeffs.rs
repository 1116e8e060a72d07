//! The problem datum: forward coefficients, random drivers of the backward
//! equation, terminal condition and the weight of the backward functional.
//!
//! Layouts are row-major throughout: `σ` is `d × d`, `z` is `k × d`, `ḡ` is
//! `k × l`. Jacobians have one row per output component. `∂σ/∂x` is stored as
//! `σ_x[(i·d + j)·d + p] = ∂σ_ij/∂x_p`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Arguments of `f̄` and `ḡ`.
#[derive(Debug, Clone, Copy)]
pub struct Arg<'a> {
    pub e: &'a [f64],
    pub x: &'a [f64],
    pub y: &'a [f64],
    pub z: &'a [f64],
}

pub type StateFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
pub type DriverFn = Arc<dyn Fn(&Arg<'_>, &mut [f64]) + Send + Sync>;
pub type TimeFn = Arc<dyn Fn(f64, &mut [f64]) + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub d: usize,
    pub k: usize,
    pub l: usize,
}

impl Dims {
    pub fn new(d: usize, k: usize, l: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::invalid("d", "dimension must be at least 1"));
        }
        if k == 0 {
            return Err(Error::invalid("k", "dimension must be at least 1"));
        }
        if l == 0 {
            return Err(Error::invalid("l", "dimension must be at least 1"));
        }
        Ok(Self { d, k, l })
    }

    pub fn z_len(&self) -> usize {
        self.k * self.d
    }

    pub fn g_len(&self) -> usize {
        self.k * self.l
    }
}

/// Constants the user claims for the Lipschitz/contraction assumptions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeclaredConstants {
    pub c: f64,
    pub alpha: f64,
    pub growth: f64,
}

impl Default for DeclaredConstants {
    fn default() -> Self {
        Self {
            c: 1.0,
            alpha: 0.0,
            growth: 1.0,
        }
    }
}

/// Analytic first derivatives of every coefficient.
#[derive(Clone)]
pub struct Derivatives {
    /// `d × d`.
    pub b_x: StateFn,
    /// `d × d × d`, see the module docs.
    pub sigma_x: StateFn,
    /// `k × d`.
    pub f_x: DriverFn,
    /// `k × k`.
    pub f_y: DriverFn,
    /// `k × (k·d)`.
    pub f_z: DriverFn,
    /// `(k·l) × d`.
    pub g_x: DriverFn,
    /// `(k·l) × k`.
    pub g_y: DriverFn,
    /// `(k·l) × (k·d)`.
    pub g_z: DriverFn,
    /// `k × d`.
    pub h_x: StateFn,
}

#[derive(Clone)]
pub struct CoefficientSet {
    pub dims: Dims,
    pub b: StateFn,
    pub sigma: StateFn,
    pub fbar: DriverFn,
    pub gbar: DriverFn,
    pub h: StateFn,
    pub phi: TimeFn,
    pub constants: DeclaredConstants,
    pub derivatives: Option<Derivatives>,
}

impl fmt::Debug for CoefficientSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientSet")
            .field("dims", &self.dims)
            .field("constants", &self.constants)
            .field("derivatives", &self.derivatives.is_some())
            .finish_non_exhaustive()
    }
}

fn zero_state() -> StateFn {
    Arc::new(|_, out: &mut [f64]| out.fill(0.0))
}

fn zero_driver() -> DriverFn {
    Arc::new(|_, out: &mut [f64]| out.fill(0.0))
}

impl CoefficientSet {
    /// Zero drift, identity diffusion, zero drivers, zero terminal, `φ ≡ 0`,
    /// with matching (all-zero) derivatives.
    pub fn new(dims: Dims) -> Self {
        let d = dims.d;
        let sigma: StateFn = Arc::new(move |_, out: &mut [f64]| {
            out.fill(0.0);
            for i in 0..d {
                out[i * d + i] = 1.0;
            }
        });
        Self {
            dims,
            b: zero_state(),
            sigma,
            fbar: zero_driver(),
            gbar: zero_driver(),
            h: zero_state(),
            phi: Arc::new(|_, out: &mut [f64]| out.fill(0.0)),
            constants: DeclaredConstants::default(),
            derivatives: Some(Derivatives {
                b_x: zero_state(),
                sigma_x: zero_state(),
                f_x: zero_driver(),
                f_y: zero_driver(),
                f_z: zero_driver(),
                g_x: zero_driver(),
                g_y: zero_driver(),
                g_z: zero_driver(),
                h_x: zero_state(),
            }),
        }
    }

    pub fn derivatives(&self) -> Result<&Derivatives> {
        self.derivatives.as_ref().ok_or(Error::MissingDerivatives)
    }

    pub fn without_derivatives(mut self) -> Self {
        self.derivatives = None;
        self
    }

    /// Evaluates every coefficient once at the origin and checks the output
    /// lengths are consistent with the declared dimensions.
    pub fn check_shapes(&self) -> Result<()> {
        let Dims { d, k, l } = self.dims;
        let x = vec![0.0; d];
        let e = vec![0.0; l];
        let y = vec![0.0; k];
        let z = vec![0.0; k * d];
        let arg = Arg {
            e: &e,
            x: &x,
            y: &y,
            z: &z,
        };
        let probe = |name: &'static str, len: usize, f: &dyn Fn(&mut [f64])| -> Result<()> {
            let mut out = vec![f64::NAN; len];
            f(&mut out);
            if out.iter().any(|v| v.is_nan()) {
                return Err(Error::invalid(
                    name,
                    format!("expected {len} finite outputs at the origin"),
                ));
            }
            Ok(())
        };
        probe("b", d, &|o| (self.b)(&x, o))?;
        probe("sigma", d * d, &|o| (self.sigma)(&x, o))?;
        probe("fbar", k, &|o| (self.fbar)(&arg, o))?;
        probe("gbar", k * l, &|o| (self.gbar)(&arg, o))?;
        probe("h", k, &|o| (self.h)(&x, o))?;
        probe("phi", l, &|o| (self.phi)(0.0, o))?;
        if let Some(der) = &self.derivatives {
            probe("b_x", d * d, &|o| (der.b_x)(&x, o))?;
            probe("sigma_x", d * d * d, &|o| (der.sigma_x)(&x, o))?;
            probe("f_x", k * d, &|o| (der.f_x)(&arg, o))?;
            probe("f_y", k * k, &|o| (der.f_y)(&arg, o))?;
            probe("f_z", k * k * d, &|o| (der.f_z)(&arg, o))?;
            probe("g_x", k * l * d, &|o| (der.g_x)(&arg, o))?;
            probe("g_y", k * l * k, &|o| (der.g_y)(&arg, o))?;
            probe("g_z", k * l * k * d, &|o| (der.g_z)(&arg, o))?;
            probe("h_x", k * d, &|o| (der.h_x)(&x, o))?;
        }
        Ok(())
    }
}

/// Builders for the common one-dimensional case `d = k = l = 1`.
pub mod scalar {
    use super::*;

    /// A scalar function together with its derivative.
    pub type F1 = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
    /// `(e, x, y, z) ↦ value`.
    pub type F4 = Arc<dyn Fn(f64, f64, f64, f64) -> f64 + Send + Sync>;

    /// A driver and its partial derivatives in `x`, `y`, `z`.
    #[derive(Clone)]
    pub struct Driver {
        pub value: F4,
        pub dx: F4,
        pub dy: F4,
        pub dz: F4,
    }

    impl Driver {
        pub fn zero() -> Self {
            let z: F4 = Arc::new(|_, _, _, _| 0.0);
            Self {
                value: z.clone(),
                dx: z.clone(),
                dy: z.clone(),
                dz: z,
            }
        }

        pub fn constant(c: f64) -> Self {
            Self {
                value: Arc::new(move |_, _, _, _| c),
                ..Self::zero()
            }
        }

        /// `a_y·y + a_z·z + c`.
        pub fn affine(a_y: f64, a_z: f64, c: f64) -> Self {
            Self {
                value: Arc::new(move |_, _, y, z| a_y * y + a_z * z + c),
                dy: Arc::new(move |_, _, _, _| a_y),
                dz: Arc::new(move |_, _, _, _| a_z),
                ..Self::zero()
            }
        }
    }

    /// `(value, derivative)` pair of a state function.
    #[derive(Clone)]
    pub struct Smooth {
        pub value: F1,
        pub deriv: F1,
    }

    impl Smooth {
        pub fn constant(c: f64) -> Self {
            Self {
                value: Arc::new(move |_| c),
                deriv: Arc::new(|_| 0.0),
            }
        }

        pub fn linear(a: f64, c: f64) -> Self {
            Self {
                value: Arc::new(move |x| a * x + c),
                deriv: Arc::new(move |_| a),
            }
        }
    }

    /// Scalar problem description.
    #[derive(Clone)]
    pub struct Scalar {
        pub b: Smooth,
        pub sigma: Smooth,
        pub f: Driver,
        pub g: Driver,
        pub h: Smooth,
        pub phi: F1,
        pub constants: DeclaredConstants,
    }

    impl Default for Scalar {
        fn default() -> Self {
            Self {
                b: Smooth::constant(0.0),
                sigma: Smooth::constant(1.0),
                f: Driver::zero(),
                g: Driver::zero(),
                h: Smooth::constant(0.0),
                phi: Arc::new(|_| 0.0),
                constants: DeclaredConstants::default(),
            }
        }
    }

    fn state(f: F1) -> StateFn {
        Arc::new(move |x: &[f64], out: &mut [f64]| out[0] = f(x[0]))
    }

    fn driver(f: F4) -> DriverFn {
        Arc::new(move |a: &Arg<'_>, out: &mut [f64]| out[0] = f(a.e[0], a.x[0], a.y[0], a.z[0]))
    }

    impl Scalar {
        pub fn build(self) -> CoefficientSet {
            let phi = self.phi.clone();
            CoefficientSet {
                dims: Dims { d: 1, k: 1, l: 1 },
                b: state(self.b.value),
                sigma: state(self.sigma.value),
                fbar: driver(self.f.value),
                gbar: driver(self.g.value),
                h: state(self.h.value),
                phi: Arc::new(move |t, out: &mut [f64]| out[0] = phi(t)),
                constants: self.constants,
                derivatives: Some(Derivatives {
                    b_x: state(self.b.deriv),
                    sigma_x: state(self.sigma.deriv),
                    f_x: driver(self.f.dx),
                    f_y: driver(self.f.dy),
                    f_z: driver(self.f.dz),
                    g_x: driver(self.g.dx),
                    g_y: driver(self.g.dy),
                    g_z: driver(self.g.dz),
                    h_x: state(self.h.deriv),
                }),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_set_has_consistent_shapes() {
        let c = CoefficientSet::new(Dims::new(2, 3, 2).unwrap());
        c.check_shapes().unwrap();
        let mut s = vec![0.0; 4];
        (c.sigma)(&[0.3, 0.1], &mut s);
        assert_eq!(s, vec![1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn zero_dimension_is_rejected() {
        let e = Dims::new(1, 0, 1).unwrap_err().to_string();
        assert!(e.contains("`k`"));
    }

    #[test]
    fn missing_derivatives_are_reported() {
        let c = CoefficientSet::new(Dims::new(1, 1, 1).unwrap()).without_derivatives();
        assert!(matches!(c.derivatives(), Err(Error::MissingDerivatives)));
    }
}
