//! Weighted joint kernels and the proper-weighting audit.
//!
//! A weighted kernel pairs a joint kernel with a nonnegative weight
//! `w(m, z)`. Composition multiplies weights, so a kernel carries one
//! weight factor per weighted component; factors are combined in log space.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::expr::{BinOp, DetMap, Expr};
use crate::kernel::{Composable, JointKernel, KernelError, Mech, Trace};
use crate::rng;
use crate::space::{Space, Value};

#[derive(Debug, Clone)]
pub struct WeightedJointKernel {
    base: JointKernel,
    factors: Vec<Arc<Mech>>,
}

impl WeightedJointKernel {
    /// Weight one everywhere.
    pub fn unweighted(base: JointKernel) -> Self {
        WeightedJointKernel { base, factors: Vec::new() }
    }

    /// `weight` maps `Product(residual, dom)` to `Real(1)`.
    pub fn new(base: JointKernel, weight: DetMap) -> Result<Self, KernelError> {
        let want = base.mech_dom();
        if *weight.dom() != want {
            return Err(KernelError::DomainMismatch { left: want.to_string(), right: weight.dom().to_string() });
        }
        if *weight.cod() != Space::Real(1) {
            return Err(KernelError::DomainMismatch { left: Space::Real(1).to_string(), right: weight.cod().to_string() });
        }
        let args = Arc::new(Mech::Pair(Mech::residual_tuple(base.boxes.iter().map(|b| b.id.as_str())), Arc::new(Mech::Input)));
        let factor = Arc::new(Mech::Then(args, Arc::new(Mech::Apply(Arc::new(weight)))));
        Ok(WeightedJointKernel { base, factors: vec![factor] })
    }

    pub fn constant(base: JointKernel, c: f64) -> Result<Self, KernelError> {
        let w = DetMap::constant(base.mech_dom(), Space::Real(1), &Value::Real(c))?;
        Self::new(base, w)
    }

    pub fn base(&self) -> &JointKernel {
        &self.base
    }

    /// `ln w(m, z)`; `-inf` for weight zero.
    pub fn log_weight(&self, z: &Value, t: &Trace) -> Result<f64, KernelError> {
        let mut total = 0.0;
        for f in &self.factors {
            let w = f.eval(z, t)?.as_f64().expect("weights are real");
            if !(w.is_finite() && w >= 0.0) {
                return Err(KernelError::BadWeight(w));
            }
            total += w.ln();
        }
        Ok(total)
    }

    pub fn weight(&self, z: &Value, t: &Trace) -> Result<f64, KernelError> {
        Ok(self.log_weight(z, t)?.exp())
    }

    pub fn unnormalized_log_density(&self, z: &Value, t: &Trace) -> Result<f64, KernelError> {
        let base = self.base.joint_log_density(z, t)?;
        let lw = self.log_weight(z, t)?;
        Ok(if base == f64::NEG_INFINITY || lw == f64::NEG_INFINITY { f64::NEG_INFINITY } else { base + lw })
    }

    /// Weights multiply; `self` runs first.
    pub fn kleisli_compose(&self, second: &WeightedJointKernel) -> Result<WeightedJointKernel, KernelError> {
        let base = self.base.compose(&second.base)?;
        let mut factors = self.factors.clone();
        factors.extend(second.factors.iter().map(|f| Mech::then(&self.base.mech, f)));
        Ok(WeightedJointKernel { base, factors })
    }

    pub fn tensor(&self, other: &WeightedJointKernel) -> Result<WeightedJointKernel, KernelError> {
        let base = self.base.tensor(&other.base)?;
        let (fst, snd) = (Mech::fst(), Mech::snd());
        let factors = self
            .factors
            .iter()
            .map(|f| Mech::then(&fst, f))
            .chain(other.factors.iter().map(|f| Mech::then(&snd, f)))
            .collect();
        Ok(WeightedJointKernel { base, factors })
    }

    pub fn rename_boxes(&self, f: &dyn Fn(&str) -> String) -> Result<Self, KernelError> {
        Ok(WeightedJointKernel { base: self.base.rename_boxes(f)?, factors: self.factors.iter().map(|m| m.rename(f)).collect() })
    }

    /// A sample `(trace, output, weight)`.
    pub fn sample(&self, z: &Value, seed: u64) -> Result<(Trace, Value, f64), KernelError> {
        let (t, x) = self.base.sample_with_trace(z, seed)?;
        let w = self.weight(z, &t)?;
        Ok((t, x, w))
    }

    /// `Σ_m p(m|z) w(m, z) h(k(m, z))` by enumeration of finite residuals.
    pub fn enumerate_integral(&self, z: &Value, h: &DetMap) -> Result<f64, KernelError> {
        let mut total = 0.0;
        self.base.enumerate_traces(z, |t, p| {
            let w = self.weight(z, t)?;
            let x = self.base.output(z, t)?;
            total += p * w * real(&h.apply(&x)?);
            Ok(())
        })?;
        Ok(total)
    }
}

fn real(v: &Value) -> f64 {
    v.as_f64().expect("test functions are real valued")
}

impl Composable for WeightedJointKernel {
    fn dom(&self) -> &Space {
        self.base.dom()
    }

    fn cod(&self) -> &Space {
        self.base.cod()
    }

    fn residual(&self) -> Space {
        self.base.residual()
    }

    fn lift(k: DetMap) -> Self {
        Self::unweighted(JointKernel::lift_det(k))
    }

    fn compose(&self, second: &Self) -> Result<Self, KernelError> {
        self.kleisli_compose(second)
    }

    fn tensor(&self, other: &Self) -> Result<Self, KernelError> {
        WeightedJointKernel::tensor(self, other)
    }

    fn rename_boxes(&self, f: &dyn Fn(&str) -> String) -> Result<Self, KernelError> {
        WeightedJointKernel::rename_boxes(self, f)
    }

    fn box_ids(&self) -> Vec<String> {
        self.base.box_ids()
    }
}

fn indicator_expr(space: &Space, point: &Value, e: Expr) -> Option<Expr> {
    let one = || Expr::Real(1.0);
    let zero = || Expr::Real(0.0);
    Some(match (space, point) {
        (Space::Unit, Value::Unit) => one(),
        (Space::Finite(_) | Space::Countable, Value::Int(k)) => Expr::if_then_else(
            Expr::bin(BinOp::Lt, e.clone(), Expr::Int(*k)),
            zero(),
            Expr::if_then_else(Expr::bin(BinOp::Lt, e, Expr::Int(k.checked_add(1)?)), one(), zero()),
        ),
        (Space::Product(a, b), Value::Tuple(x, y)) => Expr::bin(
            BinOp::Mul,
            indicator_expr(a, x, Expr::fst(e.clone()))?,
            indicator_expr(b, y, Expr::snd(e))?,
        ),
        (Space::Coproduct(a, _), Value::InL(x)) => Expr::Case {
            scrutinee: Box::new(e),
            left_var: "l".into(),
            left: Box::new(indicator_expr(a, x, Expr::Var("l".into()))?),
            right_var: "r".into(),
            right: Box::new(zero()),
        },
        (Space::Coproduct(_, b), Value::InR(y)) => Expr::Case {
            scrutinee: Box::new(e),
            left_var: "l".into(),
            left: Box::new(zero()),
            right_var: "r".into(),
            right: Box::new(indicator_expr(b, y, Expr::Var("r".into()))?),
        },
        _ => return None,
    })
}

/// The test function `1[x = point]` on a discrete space.
pub fn indicator(space: &Space, point: &Value) -> Option<DetMap> {
    if !space.is_discrete() || !crate::space::membership(space, point) {
        return None;
    }
    DetMap::whole(space.clone(), Space::Real(1), indicator_expr(space, point, Expr::Input(0))?).ok()
}

/// What an audit estimate is compared against.
#[derive(Debug, Clone)]
pub enum Reference {
    /// One exact integral per test function.
    Exact(Vec<f64>),
    /// Integrate the kernel's own unnormalized density by enumeration.
    Enumerate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpwResult {
    pub estimate: f64,
    pub std_error: f64,
    pub reference: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpwReport {
    pub n: usize,
    pub seed: u64,
    pub tests: Vec<SpwResult>,
}

impl SpwReport {
    pub fn passed(&self) -> bool {
        self.tests.iter().all(|t| t.pass)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SpwError {
    #[error("audit needs at least {min} samples, got {got}")]
    TooFewSamples { min: usize, got: usize },
    #[error("{got} reference values for {want} test functions")]
    ReferenceCount { want: usize, got: usize },
    #[error("test function {index} has domain {got}, expected {want}")]
    TestDomain { index: usize, want: String, got: String },
    #[error("kernel input must be unit, found {0}")]
    NotClosed(String),
    #[error("running mean of w*h is not finite after {0} samples")]
    NonFiniteMean(usize),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

pub const MIN_SAMPLES: usize = 1000;

/// Floating-point allowance added to the three-standard-error band, so a
/// zero-variance estimator is not failed by summation rounding.
pub const ROUNDING_SLACK: f64 = 1e-12;

/// Compensated summation.
#[derive(Default)]
struct Neumaier {
    sum: f64,
    carry: f64,
}

impl Neumaier {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Checks `E[w h(x)]` against the reference for each test function: passes
/// when the estimate lies within three standard errors.
pub fn spw_check(wk: &WeightedJointKernel, tests: &[DetMap], reference: &Reference, n: usize, seed: u64) -> Result<SpwReport, SpwError> {
    if n < MIN_SAMPLES {
        return Err(SpwError::TooFewSamples { min: MIN_SAMPLES, got: n });
    }
    if *wk.dom() != Space::Unit {
        return Err(SpwError::NotClosed(wk.dom().to_string()));
    }
    for (index, h) in tests.iter().enumerate() {
        if h.dom() != wk.cod() || *h.cod() != Space::Real(1) {
            return Err(SpwError::TestDomain {
                index,
                want: Space::product(wk.cod().clone(), Space::Real(1)).to_string(),
                got: Space::product(h.dom().clone(), h.cod().clone()).to_string(),
            });
        }
    }
    let refs = match reference {
        Reference::Exact(v) if v.len() != tests.len() => return Err(SpwError::ReferenceCount { want: tests.len(), got: v.len() }),
        Reference::Exact(v) => v.clone(),
        Reference::Enumerate => tests.iter().map(|h| wk.enumerate_integral(&Value::Unit, h)).collect::<Result<_, _>>()?,
    };
    let samples: Vec<Vec<f64>> = (0..n as u64)
        .into_par_iter()
        .map(|i| -> Result<Vec<f64>, KernelError> {
            let (_, x, w) = wk.sample(&Value::Unit, rng::derive_seed(seed, i))?;
            tests.iter().map(|h| Ok(w * real(&h.apply(&x)?))).collect()
        })
        .collect::<Result<_, _>>()?;
    let mut results = Vec::with_capacity(tests.len());
    for (j, reference) in refs.into_iter().enumerate() {
        let mut sum = Neumaier::default();
        for (i, s) in samples.iter().enumerate() {
            sum.add(s[j]);
            if !sum.value().is_finite() {
                return Err(SpwError::NonFiniteMean(i + 1));
            }
        }
        let mean = sum.value() / n as f64;
        let ss: f64 = samples.iter().map(|s| (s[j] - mean).powi(2)).sum();
        let sd = (ss / (n as f64 - 1.0)).sqrt();
        let std_error = sd / (n as f64).sqrt();
        let slack = ROUNDING_SLACK * reference.abs().max(1.0);
        let pass = (mean - reference).abs() <= 3.0 * std_error + slack;
        results.push(SpwResult { estimate: mean, std_error, reference, pass });
    }
    Ok(SpwReport { n, seed, tests: results })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::primitives::{instantiate, Param, PrimitiveSpec};

    fn coin(p: Param, id: &str) -> JointKernel {
        JointKernel::from_primitive(instantiate(&PrimitiveSpec::Bernoulli { p }).unwrap(), id)
    }

    fn chain(w2: Option<&str>) -> (WeightedJointKernel, WeightedJointKernel) {
        let first = WeightedJointKernel::unweighted(coin(Param::Const(0.5), "b1"));
        let p = DetMap::parse(&[Space::Finite(2)], Space::Real(1), "if $0 < 1 then 0.2 else 0.7").unwrap();
        let cond = JointKernel::lift_det(p).compose(&coin(Param::Wired, "b2")).unwrap();
        let second = match w2 {
            None => WeightedJointKernel::unweighted(cond),
            Some(src) => {
                let dom = cond.mech_dom();
                let w = DetMap::whole(dom, Space::Real(1), crate::expr::parse(src).unwrap()).unwrap();
                WeightedJointKernel::new(cond, w).unwrap()
            }
        };
        (first, second)
    }

    fn id(v: Space) -> DetMap {
        DetMap::whole(v, Space::Real(1), crate::expr::Expr::Input(0)).unwrap()
    }

    fn t(pairs: &[(&str, i64)]) -> Trace {
        pairs.iter().map(|(k, v)| (k.to_string(), Value::Int(*v))).collect()
    }

    #[test]
    fn weights_multiply() {
        let (a, b) = chain(None);
        let a2 = WeightedJointKernel::constant(a.base().clone(), 2.0).unwrap();
        let b3 = WeightedJointKernel::constant(b.base().clone(), 3.0).unwrap();
        let tr = t(&[("b1", 1), ("b2", 0)]);
        assert!((a2.kleisli_compose(&b3).unwrap().weight(&Value::Unit, &tr).unwrap() - 6.0).abs() < 1e-12);
        assert_eq!(a.kleisli_compose(&b).unwrap().weight(&Value::Unit, &tr).unwrap(), 1.0);
        let c = WeightedJointKernel::constant(coin(Param::Const(0.3), "c"), 3.0).unwrap();
        let z = Value::tuple(Value::Unit, Value::Unit);
        let tr = t(&[("b1", 1), ("c", 0)]);
        assert_eq!(a2.tensor(&c).unwrap().weight(&z, &tr).unwrap(), c.tensor(&a2).unwrap().weight(&z, &tr).unwrap());
    }

    #[test]
    fn chained_weight_expectation() {
        let (a, b) = chain(Some("if $0.0 < 1 then 0.0 else 2.0"));
        let k = a.kleisli_compose(&b).unwrap();
        let one = DetMap::constant(Space::Finite(2), Space::Real(1), &Value::Real(1.0)).unwrap();
        let ew = k.enumerate_integral(&Value::Unit, &one).unwrap();
        assert!((ew - 0.9).abs() < 1e-15);
        let lp = k.unnormalized_log_density(&Value::Unit, &t(&[("b1", 1), ("b2", 1)])).unwrap();
        assert!((lp - 0.7f64.ln()).abs() < 1e-15);
        assert_eq!(k.unnormalized_log_density(&Value::Unit, &t(&[("b1", 1), ("b2", 0)])).unwrap(), f64::NEG_INFINITY);
        let (a, b) = chain(None);
        let plain = a.kleisli_compose(&b).unwrap();
        let tr = t(&[("b1", 0), ("b2", 1)]);
        assert_eq!(plain.unnormalized_log_density(&Value::Unit, &tr).unwrap(), plain.base().joint_log_density(&Value::Unit, &tr).unwrap());
    }

    #[test]
    fn negative_weight_is_rejected() {
        let k = WeightedJointKernel::constant(coin(Param::Const(0.5), "a"), -1.0).unwrap();
        assert!(matches!(k.weight(&Value::Unit, &t(&[("a", 0)])), Err(KernelError::BadWeight(_))));
    }

    #[test]
    fn audit_examples() {
        let u = JointKernel::from_primitive(instantiate(&PrimitiveSpec::Uniform01).unwrap(), "u");
        let w = DetMap::whole(u.mech_dom(), Space::Real(1), crate::expr::parse("2.0 * $0.0").unwrap()).unwrap();
        let wk = WeightedJointKernel::new(u, w).unwrap();
        let report = spw_check(&wk, &[id(Space::Real(1))], &Reference::Exact(vec![2.0 / 3.0]), 100_000, 5).unwrap();
        assert!(report.passed(), "{report:?}");

        let b = WeightedJointKernel::unweighted(coin(Param::Const(0.7), "b"));
        let h = DetMap::whole(Space::Finite(2), Space::Real(1), crate::expr::Expr::Input(0)).unwrap();
        let report = spw_check(&b, std::slice::from_ref(&h), &Reference::Exact(vec![0.7]), 10_000, 1).unwrap();
        assert!(report.passed());
        let one = DetMap::constant(Space::Finite(2), Space::Real(1), &Value::Real(1.0)).unwrap();
        let report = spw_check(&b, &[one], &Reference::Enumerate, 1000, 1).unwrap();
        assert_eq!(report.tests[0].estimate, 1.0);
        assert_eq!(report.tests[0].std_error, 0.0);
        assert!(report.passed());
        assert!(matches!(spw_check(&b, &[h], &Reference::Enumerate, 10, 1), Err(SpwError::TooFewSamples { .. })));
    }

    #[test]
    fn indicators_pick_one_point() {
        let s = Space::product(Space::Finite(3), Space::coproduct(Space::Unit, Space::Finite(2)));
        let pts = s.points().unwrap();
        for p in &pts {
            let h = indicator(&s, p).unwrap();
            for q in &pts {
                assert_eq!(h.apply(q).unwrap(), Value::Real(if p == q { 1.0 } else { 0.0 }));
            }
        }
        assert!(indicator(&Space::Real(1), &Value::Real(0.0)).is_none());
    }

    #[test]
    fn audit_is_deterministic() {
        let b = WeightedJointKernel::unweighted(coin(Param::Const(0.3), "b"));
        let h = DetMap::whole(Space::Finite(2), Space::Real(1), crate::expr::Expr::Input(0)).unwrap();
        let a = spw_check(&b, std::slice::from_ref(&h), &Reference::Enumerate, 2000, 9).unwrap();
        assert_eq!(a, spw_check(&b, &[h], &Reference::Enumerate, 2000, 9).unwrap());
    }
}
