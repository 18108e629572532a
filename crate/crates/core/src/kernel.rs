//! Joint density kernels.
//!
//! A [`JointKernel`] `Z -> X` is a list of primitive density kernels (the
//! boxes), each fed a parameter computed deterministically from the input and
//! the residuals of earlier boxes, together with a deterministic mechanism
//! mapping the residuals and the input to the output. Composition keeps every
//! residual around instead of integrating it out, so the joint density over
//! all internal randomness stays available as a product of box densities.
//!
//! Residuals are keyed by box id in a [`Trace`] rather than nested in tuples;
//! this makes associativity hold on the nose.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::expr::{DetMap, Expr, ExprError};
use crate::rng;
use crate::space::{membership, Space, Value};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KernelError {
    #[error("cannot compose: output space {left} does not match input space {right}")]
    DomainMismatch { left: String, right: String },
    #[error("box id '{0}' occurs in both kernels")]
    BoxCollision(String),
    #[error("trace is missing box '{0}'")]
    MissingTraceKey(String),
    #[error("trace has unknown box '{0}'")]
    ExtraTraceKey(String),
    #[error("{what}: value {value} is not a point of {space}")]
    Inadmissible { what: String, value: String, space: String },
    #[error("{primitive}: invalid parameter: {msg}")]
    InvalidParameter { primitive: String, msg: String },
    #[error("uniform variate {0} outside [0, 1]")]
    UniformOutOfRange(f64),
    #[error("box '{id}' expects {want} uniforms, got {got}")]
    UniformBlock { id: String, want: usize, got: usize },
    #[error("no uniforms given for box '{0}'")]
    MissingUniforms(String),
    #[error("residual space {0} is not finite")]
    NotFinite(String),
    #[error("{primitive}: {value} is outside the support")]
    OutOfSupport { primitive: String, value: String },
    #[error("{0} does not support abduction")]
    Unsupported(String),
    #[error("weight {0} is negative or not finite")]
    BadWeight(f64),
    #[error(transparent)]
    Expr(#[from] ExprError),
}

fn inadmissible(what: impl Into<String>, value: &Value, space: &Space) -> KernelError {
    KernelError::Inadmissible { what: what.into(), value: value.to_string(), space: space.to_string() }
}

/// A primitive density kernel with a uniform pushback sampler.
///
/// `log_density(z, m)` is the log Radon-Nikodym derivative against the base
/// measure of `cod()`, and `pushforward` applied to independent uniforms is
/// distributed with that density.
pub trait Primitive: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;
    fn dom(&self) -> &Space;
    fn cod(&self) -> &Space;
    fn pushback_dim(&self) -> usize;
    fn log_density(&self, z: &Value, m: &Value) -> Result<f64, KernelError>;
    fn pushforward(&self, u: &[f64], z: &Value) -> Result<Value, KernelError>;

    /// A uniform block that `pushforward` maps back to `m`.
    fn abduct(&self, _z: &Value, _m: &Value) -> Result<Vec<f64>, KernelError> {
        Err(KernelError::Unsupported(self.name().to_string()))
    }
}

/// Shared handle to a [`Primitive`].
#[derive(Clone)]
pub struct PrimitiveKernel(Arc<dyn Primitive>);

impl PrimitiveKernel {
    pub fn new<P: Primitive + 'static>(p: P) -> Self {
        PrimitiveKernel(Arc::new(p))
    }

    pub fn name(&self) -> &str {
        self.0.name()
    }

    pub fn dom(&self) -> &Space {
        self.0.dom()
    }

    pub fn cod(&self) -> &Space {
        self.0.cod()
    }

    pub fn pushback_dim(&self) -> usize {
        self.0.pushback_dim()
    }

    pub fn log_density(&self, z: &Value, m: &Value) -> Result<f64, KernelError> {
        self.0.log_density(z, m)
    }

    pub fn pushforward(&self, u: &[f64], z: &Value) -> Result<Value, KernelError> {
        if let Some(bad) = u.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(KernelError::UniformOutOfRange(*bad));
        }
        self.0.pushforward(u, z)
    }

    pub fn abduct(&self, z: &Value, m: &Value) -> Result<Vec<f64>, KernelError> {
        self.0.abduct(z, m)
    }
}

impl fmt::Debug for PrimitiveKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {} -> {}", self.name(), self.dom(), self.cod())
    }
}

/// Residual values keyed by box id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Trace(BTreeMap<String, Value>);

impl Trace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, id: &str) -> Option<&Value> {
        self.0.get(id)
    }

    pub fn insert(&mut self, id: impl Into<String>, v: Value) -> Option<Value> {
        self.0.insert(id.into(), v)
    }

    pub fn remove(&mut self, id: &str) -> Option<Value> {
        self.0.remove(id)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Value)> {
        self.0.iter()
    }

    pub fn keys(&self) -> impl Iterator<Item = &String> {
        self.0.keys()
    }
}

impl FromIterator<(String, Value)> for Trace {
    fn from_iter<I: IntoIterator<Item = (String, Value)>>(iter: I) -> Self {
        Trace(iter.into_iter().collect())
    }
}

/// Uniform blocks keyed by box id.
pub type Uniforms = BTreeMap<String, Vec<f64>>;

/// Deterministic open term over the kernel input and the trace.
#[derive(Debug, Clone)]
pub(crate) enum Mech {
    Input,
    Residual(String),
    Unit,
    Pair(Arc<Mech>, Arc<Mech>),
    Fst(Arc<Mech>),
    Snd(Arc<Mech>),
    /// Evaluate the first term, then the second with it as input.
    Then(Arc<Mech>, Arc<Mech>),
    Apply(Arc<DetMap>),
}

impl Mech {
    pub(crate) fn eval(&self, z: &Value, t: &Trace) -> Result<Value, KernelError> {
        match self {
            Mech::Input => Ok(z.clone()),
            Mech::Residual(id) => t.get(id).cloned().ok_or_else(|| KernelError::MissingTraceKey(id.clone())),
            Mech::Unit => Ok(Value::Unit),
            Mech::Pair(a, b) => Ok(Value::tuple(a.eval(z, t)?, b.eval(z, t)?)),
            Mech::Fst(a) | Mech::Snd(a) => match a.eval(z, t)? {
                Value::Tuple(l, r) => Ok(if matches!(self, Mech::Fst(_)) { *l } else { *r }),
                v => Err(KernelError::Expr(ExprError::Shape(format!("projection of non-tuple {v}")))),
            },
            Mech::Then(a, b) => {
                let x = a.eval(z, t)?;
                b.eval(&x, t)
            }
            Mech::Apply(k) => Ok(k.apply(z)?),
        }
    }

    pub(crate) fn rename(self: &Arc<Self>, f: &dyn Fn(&str) -> String) -> Arc<Mech> {
        match self.as_ref() {
            Mech::Residual(id) => Arc::new(Mech::Residual(f(id))),
            Mech::Pair(a, b) => Arc::new(Mech::Pair(a.rename(f), b.rename(f))),
            Mech::Fst(a) => Arc::new(Mech::Fst(a.rename(f))),
            Mech::Snd(a) => Arc::new(Mech::Snd(a.rename(f))),
            Mech::Then(a, b) => Arc::new(Mech::Then(a.rename(f), b.rename(f))),
            Mech::Input | Mech::Unit | Mech::Apply(_) => self.clone(),
        }
    }

    pub(crate) fn then(first: &Arc<Mech>, second: &Arc<Mech>) -> Arc<Mech> {
        match (first.as_ref(), second.as_ref()) {
            (Mech::Input, _) => second.clone(),
            (_, Mech::Input) => first.clone(),
            _ => Arc::new(Mech::Then(first.clone(), second.clone())),
        }
    }

    pub(crate) fn fst() -> Arc<Mech> {
        Arc::new(Mech::Fst(Arc::new(Mech::Input)))
    }

    pub(crate) fn snd() -> Arc<Mech> {
        Arc::new(Mech::Snd(Arc::new(Mech::Input)))
    }

    /// Left-nested tuple of the listed residuals.
    pub(crate) fn residual_tuple<'a, I: IntoIterator<Item = &'a str>>(ids: I) -> Arc<Mech> {
        let mut iter = ids.into_iter();
        match iter.next() {
            None => Arc::new(Mech::Unit),
            Some(first) => iter.fold(Arc::new(Mech::Residual(first.to_string())), |acc, id| {
                Arc::new(Mech::Pair(acc, Arc::new(Mech::Residual(id.to_string()))))
            }),
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct KernelBox {
    pub(crate) id: String,
    pub(crate) prim: PrimitiveKernel,
    /// Computes the primitive's parameter from the kernel input and earlier residuals.
    pub(crate) param: Arc<Mech>,
}

/// Which structural map [`JointKernel::structure`] builds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Structure {
    Copy,
    Delete,
    Swap,
    Identity,
}

/// Operations shared by plain and weighted joint kernels; diagram evaluation
/// is written against this.
pub trait Composable: Clone + Sized {
    fn dom(&self) -> &Space;
    fn cod(&self) -> &Space;
    fn residual(&self) -> Space;
    fn lift(k: DetMap) -> Self;
    fn compose(&self, second: &Self) -> Result<Self, KernelError>;
    fn tensor(&self, other: &Self) -> Result<Self, KernelError>;
    fn rename_boxes(&self, f: &dyn Fn(&str) -> String) -> Result<Self, KernelError>;
    fn box_ids(&self) -> Vec<String>;
}

/// A joint density kernel `Z -> X` with residual `M`.
#[derive(Debug, Clone)]
pub struct JointKernel {
    dom: Space,
    cod: Space,
    pub(crate) boxes: Vec<KernelBox>,
    pub(crate) mech: Arc<Mech>,
}

fn ensure_disjoint(a: &[KernelBox], b: &[KernelBox]) -> Result<(), KernelError> {
    let ids: BTreeSet<&str> = a.iter().map(|x| x.id.as_str()).collect();
    match b.iter().find(|x| ids.contains(x.id.as_str())) {
        Some(hit) => Err(KernelError::BoxCollision(hit.id.clone())),
        None => Ok(()),
    }
}

impl JointKernel {
    /// A noiseless kernel: Unit residual, output `k(z)`.
    pub fn lift_det(k: DetMap) -> Self {
        JointKernel { dom: k.dom().clone(), cod: k.cod().clone(), boxes: Vec::new(), mech: Arc::new(Mech::Apply(Arc::new(k))) }
    }

    /// Copy `a -> a x a`, delete `a -> Unit`, swap `a x b -> b x a`, or the
    /// identity on `a`. `b` is only used (and required) for swap.
    pub fn structure(kind: Structure, a: Space, b: Option<Space>) -> Self {
        let map = match kind {
            Structure::Copy => {
                DetMap::whole(a.clone(), Space::product(a.clone(), a), Expr::tuple(Expr::Input(0), Expr::Input(0)))
            }
            Structure::Delete => DetMap::whole(a, Space::Unit, Expr::Unit),
            Structure::Swap => {
                let b = b.expect("swap needs a second space");
                DetMap::whole(
                    Space::product(a.clone(), b.clone()),
                    Space::product(b, a),
                    Expr::tuple(Expr::snd(Expr::Input(0)), Expr::fst(Expr::Input(0))),
                )
            }
            Structure::Identity => Ok(DetMap::identity(a)),
        };
        Self::lift_det(map.expect("structural maps are well shaped"))
    }

    pub fn identity(a: Space) -> Self {
        Self::structure(Structure::Identity, a, None)
    }

    /// Wraps a primitive as a one-box kernel whose output is its residual.
    pub fn from_primitive(p: PrimitiveKernel, box_id: impl Into<String>) -> Self {
        let id = box_id.into();
        JointKernel {
            dom: p.dom().clone(),
            cod: p.cod().clone(),
            boxes: vec![KernelBox { id: id.clone(), prim: p, param: Arc::new(Mech::Input) }],
            mech: Arc::new(Mech::Residual(id)),
        }
    }

    /// Replaces the output of `self` by `k(m, z)`, where `k: M x Z -> X'`.
    pub fn with_mechanism(&self, k: DetMap) -> Result<Self, KernelError> {
        let want = Space::product(self.residual(), self.dom.clone());
        if *k.dom() != want {
            return Err(KernelError::DomainMismatch { left: want.to_string(), right: k.dom().to_string() });
        }
        let args = Arc::new(Mech::Pair(self.residual_mech(), Arc::new(Mech::Input)));
        Ok(JointKernel {
            dom: self.dom.clone(),
            cod: k.cod().clone(),
            boxes: self.boxes.clone(),
            mech: Arc::new(Mech::Then(args, Arc::new(Mech::Apply(Arc::new(k))))),
        })
    }

    pub fn dom(&self) -> &Space {
        &self.dom
    }

    pub fn cod(&self) -> &Space {
        &self.cod
    }

    /// Left-nested product of the box codomains in list order.
    pub fn residual(&self) -> Space {
        Space::product_of(self.boxes.iter().map(|b| b.prim.cod().clone()))
    }

    /// `Product(residual, dom)`, the domain of the mechanism.
    pub fn mech_dom(&self) -> Space {
        Space::product(self.residual(), self.dom.clone())
    }

    pub fn box_ids(&self) -> Vec<String> {
        self.boxes.iter().map(|b| b.id.clone()).collect()
    }

    pub fn primitive(&self, id: &str) -> Option<&PrimitiveKernel> {
        self.boxes.iter().find(|b| b.id == id).map(|b| &b.prim)
    }

    /// `(box id, primitive)` in list order.
    pub fn boxes(&self) -> impl Iterator<Item = (&str, &PrimitiveKernel)> {
        self.boxes.iter().map(|b| (b.id.as_str(), &b.prim))
    }

    fn residual_mech(&self) -> Arc<Mech> {
        Mech::residual_tuple(self.boxes.iter().map(|b| b.id.as_str()))
    }

    /// Sequential composition, `self` first.
    pub fn compose(&self, second: &JointKernel) -> Result<JointKernel, KernelError> {
        if self.cod != second.dom {
            return Err(KernelError::DomainMismatch { left: self.cod.to_string(), right: second.dom.to_string() });
        }
        ensure_disjoint(&self.boxes, &second.boxes)?;
        let mut boxes = self.boxes.clone();
        boxes.extend(second.boxes.iter().map(|b| KernelBox {
            id: b.id.clone(),
            prim: b.prim.clone(),
            param: Mech::then(&self.mech, &b.param),
        }));
        Ok(JointKernel {
            dom: self.dom.clone(),
            cod: second.cod.clone(),
            boxes,
            mech: Mech::then(&self.mech, &second.mech),
        })
    }

    /// Parallel product; `self`'s boxes come first.
    pub fn tensor(&self, other: &JointKernel) -> Result<JointKernel, KernelError> {
        ensure_disjoint(&self.boxes, &other.boxes)?;
        let (fst, snd) = (Mech::fst(), Mech::snd());
        let mut boxes: Vec<KernelBox> = self
            .boxes
            .iter()
            .map(|b| KernelBox { id: b.id.clone(), prim: b.prim.clone(), param: Mech::then(&fst, &b.param) })
            .collect();
        boxes.extend(
            other
                .boxes
                .iter()
                .map(|b| KernelBox { id: b.id.clone(), prim: b.prim.clone(), param: Mech::then(&snd, &b.param) }),
        );
        Ok(JointKernel {
            dom: Space::product(self.dom.clone(), other.dom.clone()),
            cod: Space::product(self.cod.clone(), other.cod.clone()),
            boxes,
            mech: Arc::new(Mech::Pair(Mech::then(&fst, &self.mech), Mech::then(&snd, &other.mech))),
        })
    }

    /// Same boxes and densities, output replaced by the full residual tuple.
    pub fn expose_residuals(&self) -> JointKernel {
        JointKernel { dom: self.dom.clone(), cod: self.residual(), boxes: self.boxes.clone(), mech: self.residual_mech() }
    }

    pub fn rename_boxes(&self, f: &dyn Fn(&str) -> String) -> Result<JointKernel, KernelError> {
        let mut seen = BTreeSet::new();
        let boxes = self
            .boxes
            .iter()
            .map(|b| {
                let id = f(&b.id);
                if !seen.insert(id.clone()) {
                    return Err(KernelError::BoxCollision(id));
                }
                Ok(KernelBox { id, prim: b.prim.clone(), param: b.param.rename(f) })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(JointKernel { dom: self.dom.clone(), cod: self.cod.clone(), boxes, mech: self.mech.rename(f) })
    }

    fn check_input(&self, z: &Value) -> Result<(), KernelError> {
        if membership(&self.dom, z) {
            Ok(())
        } else {
            Err(inadmissible("kernel input", z, &self.dom))
        }
    }

    fn check_trace(&self, t: &Trace) -> Result<(), KernelError> {
        for b in &self.boxes {
            match t.get(&b.id) {
                None => return Err(KernelError::MissingTraceKey(b.id.clone())),
                Some(v) if !membership(b.prim.cod(), v) => {
                    return Err(inadmissible(format!("residual of box '{}'", b.id), v, b.prim.cod()))
                }
                Some(_) => {}
            }
        }
        if t.len() != self.boxes.len() {
            let ids: BTreeSet<&str> = self.boxes.iter().map(|b| b.id.as_str()).collect();
            let extra = t.keys().find(|k| !ids.contains(k.as_str())).expect("extra key exists");
            return Err(KernelError::ExtraTraceKey(extra.clone()));
        }
        Ok(())
    }

    /// The parameter each box receives under trace `t`, in list order.
    pub fn box_parameters(&self, z: &Value, t: &Trace) -> Result<Vec<(String, Value)>, KernelError> {
        self.boxes.iter().map(|b| Ok((b.id.clone(), b.param.eval(z, t)?))).collect()
    }

    /// Log joint density of the residuals in `t` given input `z`.
    pub fn joint_log_density(&self, z: &Value, t: &Trace) -> Result<f64, KernelError> {
        self.check_input(z)?;
        self.check_trace(t)?;
        let mut total = 0.0;
        for b in &self.boxes {
            let param = b.param.eval(z, t)?;
            let lp = b.prim.log_density(&param, t.get(&b.id).expect("checked"))?;
            if lp == f64::NEG_INFINITY {
                return Ok(f64::NEG_INFINITY);
            }
            total += lp;
        }
        Ok(total)
    }

    /// Applies the mechanism to a full trace.
    pub fn output(&self, z: &Value, t: &Trace) -> Result<Value, KernelError> {
        self.mech.eval(z, t)
    }

    /// Applies the mechanism as a map `M x Z -> X` on a residual tuple.
    pub fn apply_mech(&self, m: &Value, z: &Value) -> Result<Value, KernelError> {
        let parts = m
            .untuple(self.boxes.len())
            .ok_or_else(|| inadmissible("residual tuple", m, &self.residual()))?;
        let t: Trace = self.boxes.iter().map(|b| b.id.clone()).zip(parts).collect();
        self.output(z, &t)
    }

    /// Draws every box's uniform block in list order from `seed`.
    pub fn sample_with_trace(&self, z: &Value, seed: u64) -> Result<(Trace, Value), KernelError> {
        self.check_input(z)?;
        let mut stream = rng::stream(seed);
        let mut t = Trace::new();
        for b in &self.boxes {
            let u = rng::uniform_block(&mut stream, b.prim.pushback_dim());
            let param = b.param.eval(z, &t)?;
            let m = b.prim.pushforward(&u, &param)?;
            t.insert(b.id.clone(), m);
        }
        let x = self.mech.eval(z, &t)?;
        Ok((t, x))
    }

    /// Deterministic replay at fixed uniforms.
    pub fn replay(&self, z: &Value, u: &Uniforms) -> Result<(Trace, Value), KernelError> {
        self.check_input(z)?;
        let mut t = Trace::new();
        for b in &self.boxes {
            let block = u.get(&b.id).ok_or_else(|| KernelError::MissingUniforms(b.id.clone()))?;
            if block.len() != b.prim.pushback_dim() {
                return Err(KernelError::UniformBlock { id: b.id.clone(), want: b.prim.pushback_dim(), got: block.len() });
            }
            let param = b.param.eval(z, &t)?;
            t.insert(b.id.clone(), b.prim.pushforward(block, &param)?);
        }
        let x = self.mech.eval(z, &t)?;
        Ok((t, x))
    }

    /// Uniforms that [`JointKernel::replay`] maps back to `t`.
    pub fn abduct(&self, z: &Value, t: &Trace) -> Result<Uniforms, KernelError> {
        self.check_input(z)?;
        self.check_trace(t)?;
        let mut out = Uniforms::new();
        for b in &self.boxes {
            let param = b.param.eval(z, t)?;
            out.insert(b.id.clone(), b.prim.abduct(&param, t.get(&b.id).expect("checked"))?);
        }
        Ok(out)
    }

    /// Calls `visit(trace, probability)` for every residual combination of
    /// positive probability. Requires every box codomain to be finite.
    pub fn enumerate_traces(&self, z: &Value, mut visit: impl FnMut(&Trace, f64) -> Result<(), KernelError>) -> Result<(), KernelError> {
        self.check_input(z)?;
        let supports = self
            .boxes
            .iter()
            .map(|b| b.prim.cod().points().ok_or_else(|| KernelError::NotFinite(self.residual().to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        let mut t = Trace::new();
        self.enumerate_from(0, z, &supports, &mut t, 1.0, &mut visit)
    }

    fn enumerate_from(
        &self,
        i: usize,
        z: &Value,
        supports: &[Vec<Value>],
        t: &mut Trace,
        prob: f64,
        visit: &mut impl FnMut(&Trace, f64) -> Result<(), KernelError>,
    ) -> Result<(), KernelError> {
        let Some(b) = self.boxes.get(i) else {
            return visit(t, prob);
        };
        let param = b.param.eval(z, t)?;
        for m in &supports[i] {
            let lp = b.prim.log_density(&param, m)?;
            if lp == f64::NEG_INFINITY {
                continue;
            }
            t.insert(b.id.clone(), m.clone());
            self.enumerate_from(i + 1, z, supports, t, prob * lp.exp(), visit)?;
        }
        t.remove(&b.id);
        Ok(())
    }

    /// Exact output distribution by enumeration of all residuals.
    pub fn marginal_pmf_finite(&self, z: &Value) -> Result<BTreeMap<Value, f64>, KernelError> {
        let mut out: BTreeMap<Value, f64> = BTreeMap::new();
        self.enumerate_traces(z, |t, p| {
            let x = self.mech.eval(z, t)?;
            *out.entry(x).or_insert(0.0) += p;
            Ok(())
        })?;
        Ok(out)
    }
}

impl Composable for JointKernel {
    fn dom(&self) -> &Space {
        &self.dom
    }

    fn cod(&self) -> &Space {
        &self.cod
    }

    fn residual(&self) -> Space {
        JointKernel::residual(self)
    }

    fn lift(k: DetMap) -> Self {
        JointKernel::lift_det(k)
    }

    fn compose(&self, second: &Self) -> Result<Self, KernelError> {
        JointKernel::compose(self, second)
    }

    fn tensor(&self, other: &Self) -> Result<Self, KernelError> {
        JointKernel::tensor(self, other)
    }

    fn rename_boxes(&self, f: &dyn Fn(&str) -> String) -> Result<Self, KernelError> {
        JointKernel::rename_boxes(self, f)
    }

    fn box_ids(&self) -> Vec<String> {
        JointKernel::box_ids(self)
    }
}
