//! Built-in distributions.
//!
//! Each built-in has a density against the base measure of its codomain
//! (counting measure for discrete ones, Lebesgue for continuous ones), a
//! monotone inverse-CDF pushforward of a single uniform, and an abduction
//! that picks a uniform mapping back to a given point. For discrete
//! primitives the preimage of a point is an interval of the CDF and
//! abduction returns its midpoint.

use std::collections::BTreeMap;
use std::f64::consts::{PI, SQRT_2};

use crate::kernel::{KernelError, Primitive, PrimitiveKernel};
use crate::space::{Space, Value};

/// Where a distribution parameter comes from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Param {
    Const(f64),
    /// Taken from the kernel input; wired parameters form the input tuple in
    /// declaration order.
    Wired,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PrimitiveSpec {
    Bernoulli { p: Param },
    /// Probabilities over the points of a finite `space`, in
    /// [`Space::points`] order.
    Categorical { probs: Vec<Param>, space: Space },
    Uniform01,
    Uniform { low: Param, high: Param },
    Normal { mean: Param, std: Param },
    Exponential { rate: Param },
    Poisson { rate: Param },
    DiracCountable { point: Param },
}

impl PrimitiveSpec {
    pub fn name(&self) -> &'static str {
        match self {
            PrimitiveSpec::Bernoulli { .. } => "bernoulli",
            PrimitiveSpec::Categorical { .. } => "categorical",
            PrimitiveSpec::Uniform01 => "uniform01",
            PrimitiveSpec::Uniform { .. } => "uniform",
            PrimitiveSpec::Normal { .. } => "normal",
            PrimitiveSpec::Exponential { .. } => "exponential",
            PrimitiveSpec::Poisson { .. } => "poisson",
            PrimitiveSpec::DiracCountable { .. } => "dirac_countable",
        }
    }

    pub fn params(&self) -> Vec<Param> {
        match self {
            PrimitiveSpec::Bernoulli { p } => vec![*p],
            PrimitiveSpec::Categorical { probs, .. } => probs.clone(),
            PrimitiveSpec::Uniform01 => vec![],
            PrimitiveSpec::Uniform { low, high } => vec![*low, *high],
            PrimitiveSpec::Normal { mean, std } => vec![*mean, *std],
            PrimitiveSpec::Exponential { rate } | PrimitiveSpec::Poisson { rate } => vec![*rate],
            PrimitiveSpec::DiracCountable { point } => vec![*point],
        }
    }

    pub fn codomain(&self) -> Space {
        match self {
            PrimitiveSpec::Bernoulli { .. } => Space::Finite(2),
            PrimitiveSpec::Categorical { space, .. } => space.clone(),
            PrimitiveSpec::Uniform01
            | PrimitiveSpec::Uniform { .. }
            | PrimitiveSpec::Normal { .. }
            | PrimitiveSpec::Exponential { .. } => Space::Real(1),
            PrimitiveSpec::Poisson { .. } | PrimitiveSpec::DiracCountable { .. } => Space::Countable,
        }
    }

    /// Space of a wired parameter.
    fn param_space(&self) -> Space {
        match self {
            PrimitiveSpec::DiracCountable { .. } => Space::Countable,
            _ => Space::Real(1),
        }
    }

    /// Input space: the left-nested product of the wired parameter spaces.
    pub fn domain(&self) -> Space {
        let n = self.params().iter().filter(|p| **p == Param::Wired).count();
        Space::product_of(std::iter::repeat_n(self.param_space(), n))
    }
}

const CATEGORICAL_TOL: f64 = 1e-9;
// largest double below one; keeps quantile functions finite at u = 1
const ONE_MINUS: f64 = 1.0 - f64::EPSILON / 2.0;

#[derive(Debug)]
struct Builtin {
    spec: PrimitiveSpec,
    dom: Space,
    cod: Space,
    /// Categorical support and index lookup.
    points: Vec<Value>,
    index: BTreeMap<Value, usize>,
}

/// Validated parameters of one evaluation.
enum Resolved {
    Bernoulli(f64),
    Categorical(Vec<f64>),
    Uniform(f64, f64),
    Normal(f64, f64),
    Exponential(f64),
    Poisson(f64),
    Dirac(i64),
}

impl Builtin {
    fn invalid(&self, msg: impl Into<String>) -> KernelError {
        KernelError::InvalidParameter { primitive: self.spec.name().to_string(), msg: msg.into() }
    }

    fn out_of_support(&self, m: &Value) -> KernelError {
        KernelError::OutOfSupport { primitive: self.spec.name().to_string(), value: m.to_string() }
    }

    fn raw_params(&self, z: &Value) -> Result<Vec<f64>, KernelError> {
        let params = self.spec.params();
        let wired = params.iter().filter(|p| **p == Param::Wired).count();
        let parts = z.untuple(wired).ok_or_else(|| self.invalid(format!("input {z} does not match {}", self.dom)))?;
        let mut parts = parts.into_iter();
        params
            .iter()
            .map(|p| match p {
                Param::Const(x) => Ok(*x),
                Param::Wired => {
                    let v = parts.next().expect("one part per wired parameter");
                    v.as_f64().ok_or_else(|| self.invalid(format!("parameter {v} is not numeric")))
                }
            })
            .collect()
    }

    // Negated comparisons also reject NaN parameters.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    fn resolve(&self, z: &Value) -> Result<Resolved, KernelError> {
        let ps = self.raw_params(z)?;
        if let Some(bad) = ps.iter().find(|x| !x.is_finite()) {
            return Err(self.invalid(format!("non-finite parameter {bad}")));
        }
        Ok(match &self.spec {
            PrimitiveSpec::Bernoulli { .. } => {
                let p = ps[0];
                if !(0.0..=1.0).contains(&p) {
                    return Err(self.invalid(format!("p = {p} outside [0, 1]")));
                }
                Resolved::Bernoulli(p)
            }
            PrimitiveSpec::Categorical { .. } => {
                if ps.iter().any(|p| *p < 0.0) {
                    return Err(self.invalid("negative probability"));
                }
                let total: f64 = ps.iter().sum();
                if (total - 1.0).abs() > CATEGORICAL_TOL {
                    return Err(self.invalid(format!("probabilities sum to {total}")));
                }
                Resolved::Categorical(ps)
            }
            PrimitiveSpec::Uniform01 => Resolved::Uniform(0.0, 1.0),
            PrimitiveSpec::Uniform { .. } => {
                if !(ps[0] < ps[1]) {
                    return Err(self.invalid(format!("need low < high, got [{}, {}]", ps[0], ps[1])));
                }
                Resolved::Uniform(ps[0], ps[1])
            }
            PrimitiveSpec::Normal { .. } => {
                if !(ps[1] > 0.0) {
                    return Err(self.invalid(format!("std = {} must be positive", ps[1])));
                }
                Resolved::Normal(ps[0], ps[1])
            }
            PrimitiveSpec::Exponential { .. } => {
                if !(ps[0] > 0.0) {
                    return Err(self.invalid(format!("rate = {} must be positive", ps[0])));
                }
                Resolved::Exponential(ps[0])
            }
            PrimitiveSpec::Poisson { .. } => {
                if !(ps[0] >= 0.0) {
                    return Err(self.invalid(format!("rate = {} must be nonnegative", ps[0])));
                }
                Resolved::Poisson(ps[0])
            }
            PrimitiveSpec::DiracCountable { .. } => {
                let x = ps[0];
                if x.fract() != 0.0 || x.abs() > 9.0e15 {
                    return Err(self.invalid(format!("point {x} is not an integer")));
                }
                Resolved::Dirac(x as i64)
            }
        })
    }

    fn real_point(&self, m: &Value) -> Result<f64, KernelError> {
        match m {
            Value::Real(x) if x.is_finite() => Ok(*x),
            _ => Err(self.out_of_support(m)),
        }
    }

    fn int_point(&self, m: &Value) -> Result<i64, KernelError> {
        m.as_int().ok_or_else(|| self.out_of_support(m))
    }

    fn category(&self, m: &Value) -> Result<usize, KernelError> {
        self.index.get(m).copied().ok_or_else(|| self.out_of_support(m))
    }
}

/// Midpoint of `[lo, hi)`, kept strictly below `hi`.
fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid < hi {
        mid
    } else {
        lo
    }
}

fn cumulative(probs: &[f64]) -> Vec<f64> {
    probs
        .iter()
        .scan(0.0, |acc, p| {
            *acc += p;
            Some(*acc)
        })
        .collect()
}

/// Smallest index with `u < cum[i]`, falling back to the last category of
/// positive probability when rounding leaves `cum` short of one.
fn categorical_index(probs: &[f64], u: f64) -> usize {
    let cum = cumulative(probs);
    cum.iter()
        .position(|c| u < *c)
        .unwrap_or_else(|| probs.iter().rposition(|p| *p > 0.0).unwrap_or(probs.len() - 1))
}

fn poisson_log_pmf(rate: f64, k: i64) -> f64 {
    if k < 0 {
        return f64::NEG_INFINITY;
    }
    if rate == 0.0 {
        return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    let k = k as f64;
    k * rate.ln() - rate - libm::lgamma(k + 1.0)
}

// Mass beyond the current count below which the search stops. Uniforms are
// doubles in [0, 1), so a tail this small cannot be resolved anyway.
const POISSON_TAIL: f64 = 1e-17;

/// Sequential CDF search. Calls `at(k, cdf_before, cdf_after)` for each
/// count until it returns `Some`.
fn poisson_walk<T>(rate: f64, mut at: impl FnMut(i64, f64, f64, bool) -> Option<T>) -> T {
    let mut cdf = 0.0;
    let mut k: i64 = 0;
    loop {
        let before = cdf;
        cdf += poisson_log_pmf(rate, k).exp();
        let next = poisson_log_pmf(rate, k + 1).exp();
        let last = (k as f64) > rate && (next < POISSON_TAIL || cdf >= 1.0);
        if let Some(out) = at(k, before, cdf, last) {
            return out;
        }
        k += 1;
    }
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// Standard normal quantile: Acklam's rational approximation followed by one
/// Halley step against `erfc`.
pub fn normal_quantile(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.38357751867269e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00, 3.754408661907416e+00];
    const P_LOW: f64 = 0.02425;

    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    let x = if p < P_LOW {
        tail((-2.0 * p.ln()).sqrt())
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -tail((-2.0 * (-p).ln_1p()).sqrt())
    };
    let e = normal_cdf(x) - p;
    let u = e * (2.0 * PI).sqrt() * (x * x / 2.0).exp();
    x - u / (1.0 + x * u / 2.0)
}

impl Primitive for Builtin {
    fn name(&self) -> &str {
        self.spec.name()
    }

    fn dom(&self) -> &Space {
        &self.dom
    }

    fn cod(&self) -> &Space {
        &self.cod
    }

    fn pushback_dim(&self) -> usize {
        1
    }

    fn log_density(&self, z: &Value, m: &Value) -> Result<f64, KernelError> {
        let neg_inf = f64::NEG_INFINITY;
        Ok(match self.resolve(z)? {
            Resolved::Bernoulli(p) => match m {
                Value::Int(1) => p.ln(),
                Value::Int(0) => (1.0 - p).ln(),
                _ => neg_inf,
            },
            Resolved::Categorical(ps) => match self.index.get(m) {
                Some(&i) => ps[i].ln(),
                None => neg_inf,
            },
            Resolved::Uniform(a, b) => match m {
                Value::Real(x) if (a..=b).contains(x) => -(b - a).ln(),
                _ => neg_inf,
            },
            Resolved::Normal(mu, sigma) => match m {
                Value::Real(x) => {
                    let r = (x - mu) / sigma;
                    -0.5 * (2.0 * PI).ln() - sigma.ln() - 0.5 * r * r
                }
                _ => neg_inf,
            },
            Resolved::Exponential(rate) => match m {
                Value::Real(x) if *x >= 0.0 => rate.ln() - rate * x,
                _ => neg_inf,
            },
            Resolved::Poisson(rate) => match m {
                Value::Int(k) => poisson_log_pmf(rate, *k),
                _ => neg_inf,
            },
            Resolved::Dirac(point) => match m {
                Value::Int(k) if *k == point => 0.0,
                _ => neg_inf,
            },
        })
    }

    fn pushforward(&self, u: &[f64], z: &Value) -> Result<Value, KernelError> {
        let u = *u.first().ok_or_else(|| self.invalid("missing uniform"))?;
        if !(0.0..=1.0).contains(&u) {
            return Err(KernelError::UniformOutOfRange(u));
        }
        Ok(match self.resolve(z)? {
            Resolved::Bernoulli(p) => Value::Int((u < p) as i64),
            Resolved::Categorical(ps) => self.points[categorical_index(&ps, u)].clone(),
            Resolved::Uniform(a, b) => Value::Real(a + u * (b - a)),
            Resolved::Normal(mu, sigma) => {
                let u = u.clamp(f64::MIN_POSITIVE, ONE_MINUS);
                Value::Real(mu + sigma * normal_quantile(u))
            }
            Resolved::Exponential(rate) => Value::Real(-(-u.min(ONE_MINUS)).ln_1p() / rate),
            Resolved::Poisson(rate) => {
                Value::Int(poisson_walk(rate, |k, _, cdf, last| (u < cdf || last).then_some(k)))
            }
            Resolved::Dirac(point) => Value::Int(point),
        })
    }

    fn abduct(&self, z: &Value, m: &Value) -> Result<Vec<f64>, KernelError> {
        let u = match self.resolve(z)? {
            Resolved::Bernoulli(p) => match self.int_point(m)? {
                1 if p > 0.0 => midpoint(0.0, p),
                0 if p < 1.0 => p + (1.0 - p) / 2.0,
                _ => return Err(self.out_of_support(m)),
            },
            Resolved::Categorical(ps) => {
                let i = self.category(m)?;
                if ps[i] <= 0.0 {
                    return Err(self.out_of_support(m));
                }
                let cum = cumulative(&ps);
                let lo = if i == 0 { 0.0 } else { cum[i - 1] };
                let hi = if i + 1 == ps.len() || ps[i + 1..].iter().all(|p| *p == 0.0) { cum[i].max(1.0) } else { cum[i] };
                midpoint(lo, hi.min(1.0).max(cum[i]))
            }
            Resolved::Uniform(a, b) => {
                let x = self.real_point(m)?;
                if !(a..=b).contains(&x) {
                    return Err(self.out_of_support(m));
                }
                ((x - a) / (b - a)).clamp(0.0, 1.0)
            }
            Resolved::Normal(mu, sigma) => normal_cdf((self.real_point(m)? - mu) / sigma),
            Resolved::Exponential(rate) => {
                let x = self.real_point(m)?;
                if x < 0.0 {
                    return Err(self.out_of_support(m));
                }
                -(-rate * x).exp_m1()
            }
            Resolved::Poisson(rate) => {
                let target = self.int_point(m)?;
                if poisson_log_pmf(rate, target) == f64::NEG_INFINITY {
                    return Err(self.out_of_support(m));
                }
                let found = poisson_walk(rate, |k, before, after, last| {
                    if k == target {
                        Some(Some(midpoint(before, after)))
                    } else if last {
                        Some(None)
                    } else {
                        None
                    }
                });
                found.ok_or_else(|| self.out_of_support(m))?
            }
            Resolved::Dirac(point) => {
                if self.int_point(m)? != point {
                    return Err(self.out_of_support(m));
                }
                0.5
            }
        };
        Ok(vec![u])
    }
}

/// Builds the primitive kernel for a spec, validating constant parameters.
pub fn instantiate(spec: &PrimitiveSpec) -> Result<PrimitiveKernel, KernelError> {
    let cod = spec.codomain();
    let mut points = Vec::new();
    let mut index = BTreeMap::new();
    if let PrimitiveSpec::Categorical { probs, space } = spec {
        points = space.points().ok_or_else(|| KernelError::InvalidParameter {
            primitive: "categorical".into(),
            msg: format!("support {space} is not finite"),
        })?;
        if points.len() != probs.len() {
            return Err(KernelError::InvalidParameter {
                primitive: "categorical".into(),
                msg: format!("{} probabilities for {} points", probs.len(), points.len()),
            });
        }
        index = points.iter().cloned().enumerate().map(|(i, v)| (v, i)).collect();
    }
    let b = Builtin { dom: spec.domain(), cod, spec: spec.clone(), points, index };
    if spec.params().iter().all(|p| matches!(p, Param::Const(_))) {
        b.resolve(&Value::Unit)?;
    } else {
        // partial check: constants that are invalid on their own
        for p in spec.params() {
            if let Param::Const(x) = p {
                if !x.is_finite() {
                    return Err(b.invalid(format!("non-finite parameter {x}")));
                }
            }
        }
    }
    Ok(PrimitiveKernel::new(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(x: f64) -> Param {
        Param::Const(x)
    }

    fn prim(spec: PrimitiveSpec) -> PrimitiveKernel {
        instantiate(&spec).unwrap()
    }

    #[test]
    fn density_examples() {
        let b = prim(PrimitiveSpec::Bernoulli { p: c(0.5) });
        assert_eq!(b.log_density(&Value::Unit, &Value::Int(1)).unwrap(), 0.5f64.ln());
        let n = prim(PrimitiveSpec::Normal { mean: c(0.0), std: c(1.0) });
        let lp = n.log_density(&Value::Unit, &Value::Real(0.0)).unwrap();
        assert!((lp - (-0.918_938_533_204_672_7)).abs() < 1e-15);
        let d = prim(PrimitiveSpec::DiracCountable { point: c(7.0) });
        assert_eq!(d.log_density(&Value::Unit, &Value::Int(7)).unwrap(), 0.0);
        assert_eq!(d.log_density(&Value::Unit, &Value::Int(6)).unwrap(), f64::NEG_INFINITY);
        let e = prim(PrimitiveSpec::Exponential { rate: c(2.0) });
        assert_eq!(e.log_density(&Value::Unit, &Value::Real(-1.0)).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn pushforward_examples() {
        let b5 = prim(PrimitiveSpec::Bernoulli { p: c(0.5) });
        let b7 = prim(PrimitiveSpec::Bernoulli { p: c(0.7) });
        assert_eq!(b5.pushforward(&[0.6], &Value::Unit).unwrap(), Value::Int(0));
        assert_eq!(b7.pushforward(&[0.6], &Value::Unit).unwrap(), Value::Int(1));
        let u = prim(PrimitiveSpec::Uniform { low: c(0.0), high: c(1.0) });
        assert_eq!(u.pushforward(&[0.25], &Value::Unit).unwrap(), Value::Real(0.25));
        let e = prim(PrimitiveSpec::Exponential { rate: c(2.0) });
        let x = e.pushforward(&[1.0 - (-2.0f64).exp()], &Value::Unit).unwrap().as_f64().unwrap();
        assert!((x - 1.0).abs() < 1e-12);
        assert!(matches!(b5.pushforward(&[1.5], &Value::Unit), Err(KernelError::UniformOutOfRange(_))));
        let n = prim(PrimitiveSpec::Normal { mean: c(0.0), std: c(1.0) });
        assert!(n.pushforward(&[0.0], &Value::Unit).unwrap().as_f64().unwrap().is_finite());
        assert!(n.pushforward(&[1.0], &Value::Unit).unwrap().as_f64().unwrap().is_finite());
        assert!(e.pushforward(&[1.0], &Value::Unit).unwrap().as_f64().unwrap().is_finite());
    }

    #[test]
    fn abduct_examples() {
        let b = prim(PrimitiveSpec::Bernoulli { p: c(0.5) });
        assert_eq!(b.abduct(&Value::Unit, &Value::Int(1)).unwrap(), vec![0.25]);
        assert_eq!(b.pushforward(&[0.25], &Value::Unit).unwrap(), Value::Int(1));
        let u = prim(PrimitiveSpec::Uniform01);
        assert_eq!(u.abduct(&Value::Unit, &Value::Real(0.42)).unwrap(), vec![0.42]);
        let n = prim(PrimitiveSpec::Normal { mean: c(0.0), std: c(1.0) });
        assert_eq!(n.abduct(&Value::Unit, &Value::Real(0.0)).unwrap(), vec![0.5]);
        let sure = prim(PrimitiveSpec::Bernoulli { p: c(1.0) });
        assert!(matches!(sure.abduct(&Value::Unit, &Value::Int(0)), Err(KernelError::OutOfSupport { .. })));
        let d = prim(PrimitiveSpec::DiracCountable { point: c(-3.0) });
        assert_eq!(d.abduct(&Value::Unit, &Value::Int(-3)).unwrap(), vec![0.5]);
        assert!(d.abduct(&Value::Unit, &Value::Int(0)).is_err());
    }

    #[test]
    fn invalid_parameters() {
        for spec in [
            PrimitiveSpec::Bernoulli { p: c(1.2) },
            PrimitiveSpec::Categorical { probs: vec![c(0.5), c(0.4)], space: Space::Finite(2) },
            PrimitiveSpec::Categorical { probs: vec![c(0.5), c(0.5)], space: Space::Finite(3) },
            PrimitiveSpec::Categorical { probs: vec![c(1.0)], space: Space::Countable },
            PrimitiveSpec::Uniform { low: c(1.0), high: c(1.0) },
            PrimitiveSpec::Normal { mean: c(0.0), std: c(0.0) },
            PrimitiveSpec::Exponential { rate: c(-1.0) },
            PrimitiveSpec::Poisson { rate: c(-0.1) },
            PrimitiveSpec::DiracCountable { point: c(0.5) },
        ] {
            assert!(matches!(instantiate(&spec), Err(KernelError::InvalidParameter { .. })), "{spec:?}");
        }
    }

    #[test]
    fn wired_parameters() {
        let spec = PrimitiveSpec::Normal { mean: Param::Wired, std: c(2.0) };
        assert_eq!(spec.domain(), Space::Real(1));
        let n = prim(spec);
        let lp = n.log_density(&Value::Real(1.0), &Value::Real(1.0)).unwrap();
        assert!((lp - (-0.5 * (2.0 * PI).ln() - 2f64.ln())).abs() < 1e-15);
        let spec = PrimitiveSpec::Uniform { low: Param::Wired, high: Param::Wired };
        assert_eq!(spec.domain(), Space::product(Space::Real(1), Space::Real(1)));
        let u = prim(spec);
        let z = Value::tuple(Value::Real(2.0), Value::Real(4.0));
        assert_eq!(u.pushforward(&[0.5], &z).unwrap(), Value::Real(3.0));
        assert!(u.log_density(&Value::tuple(Value::Real(4.0), Value::Real(2.0)), &Value::Real(3.0)).is_err());
    }

    #[test]
    fn categorical_over_coproduct() {
        let space = Space::coproduct(Space::Unit, Space::Finite(2));
        let cat = prim(PrimitiveSpec::Categorical { probs: vec![c(0.2), c(0.3), c(0.5)], space });
        assert_eq!(cat.pushforward(&[0.1], &Value::Unit).unwrap(), Value::inl(Value::Unit));
        assert_eq!(cat.pushforward(&[0.3], &Value::Unit).unwrap(), Value::inr(Value::Int(0)));
        assert_eq!(cat.pushforward(&[0.99], &Value::Unit).unwrap(), Value::inr(Value::Int(1)));
        let u = cat.abduct(&Value::Unit, &Value::inr(Value::Int(0))).unwrap();
        assert!((u[0] - 0.35).abs() < 1e-15);
        assert!((cat.log_density(&Value::Unit, &Value::inr(Value::Int(1))).unwrap() - 0.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn categorical_skips_empty_categories() {
        let cat = prim(PrimitiveSpec::Categorical { probs: vec![c(0.5), c(0.0), c(0.5), c(0.0)], space: Space::Finite(4) });
        assert_eq!(cat.pushforward(&[0.5], &Value::Unit).unwrap(), Value::Int(2));
        assert_eq!(cat.pushforward(&[1.0], &Value::Unit).unwrap(), Value::Int(2));
        assert!(cat.abduct(&Value::Unit, &Value::Int(1)).is_err());
    }

    #[test]
    fn poisson_basics() {
        let p = prim(PrimitiveSpec::Poisson { rate: c(3.0) });
        let lp = p.log_density(&Value::Unit, &Value::Int(2)).unwrap();
        assert!((lp - (9.0f64 / 2.0 * (-3.0f64).exp()).ln()).abs() < 1e-12);
        assert_eq!(p.log_density(&Value::Unit, &Value::Int(-1)).unwrap(), f64::NEG_INFINITY);
        assert_eq!(p.pushforward(&[0.0], &Value::Unit).unwrap(), Value::Int(0));
        let big = p.pushforward(&[1.0], &Value::Unit).unwrap().as_int().unwrap();
        assert!(big > 10);
        let zero = prim(PrimitiveSpec::Poisson { rate: c(0.0) });
        assert_eq!(zero.pushforward(&[0.99], &Value::Unit).unwrap(), Value::Int(0));
        assert_eq!(zero.abduct(&Value::Unit, &Value::Int(0)).unwrap(), vec![0.5]);
        for k in 0..15 {
            let u = p.abduct(&Value::Unit, &Value::Int(k)).unwrap();
            assert_eq!(p.pushforward(&u, &Value::Unit).unwrap(), Value::Int(k));
        }
    }

    #[test]
    fn quantile_inverts_cdf() {
        for i in 1..1000 {
            let p = i as f64 / 1000.0;
            let x = normal_quantile(p);
            assert!((normal_cdf(x) - p).abs() < 1e-15, "p = {p}");
        }
        assert!((normal_quantile(1e-10) + 6.361_340_902_404_056).abs() < 1e-9);
    }
}
