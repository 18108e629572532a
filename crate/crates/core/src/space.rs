//! Standard Borel space shapes, their points, and the standardized base measure.
//!
//! Every space is built from finite sets, the integers, and real coordinate
//! spaces by binary products and coproducts. The base measure is counting
//! measure on the discrete leaves, Lebesgue measure on `Real(n)`, the product
//! measure on products and the sum of component masses on coproducts.

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::json;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpaceError {
    #[error("finite space must have cardinality >= 1")]
    EmptyFinite,
    #[error("real space must have dimension >= 1")]
    ZeroDimension,
    #[error("set descriptor {descriptor} does not match space {space}")]
    ShapeMismatch { space: String, descriptor: String },
    #[error("box descriptor used on non-real space {0}")]
    BoxOnNonReal(String),
    #[error("point set on space {0} with uncountably many points")]
    PointsOnReal(String),
    #[error("box has {got} intervals but space has dimension {want}")]
    BoxDimension { want: usize, got: usize },
    #[error("invalid interval [{lo}, {hi}]")]
    BadInterval { lo: f64, hi: f64 },
    #[error("value {value} is not a point of {space}")]
    NotAMember { space: String, value: String },
    #[error("malformed space: {0}")]
    Malformed(String),
}

/// A standard Borel space shape.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Space {
    /// `{0, .., n-1}` with counting measure.
    Finite(u64),
    /// The integers with counting measure.
    Countable,
    /// `R^n` with Lebesgue measure.
    Real(usize),
    Product(Box<Space>, Box<Space>),
    Coproduct(Box<Space>, Box<Space>),
    /// The monoidal unit, a single point.
    Unit,
}

impl Space {
    pub fn finite(n: u64) -> Result<Self, SpaceError> {
        if n == 0 {
            return Err(SpaceError::EmptyFinite);
        }
        Ok(Space::Finite(n))
    }

    pub fn real(dim: usize) -> Result<Self, SpaceError> {
        if dim == 0 {
            return Err(SpaceError::ZeroDimension);
        }
        Ok(Space::Real(dim))
    }

    pub fn product(a: Space, b: Space) -> Self {
        Space::Product(Box::new(a), Box::new(b))
    }

    pub fn coproduct(a: Space, b: Space) -> Self {
        Space::Coproduct(Box::new(a), Box::new(b))
    }

    /// Left-nested product of a list: `[] -> Unit`, `[a] -> a`,
    /// `[a, b, c] -> (a x b) x c`.
    pub fn product_of<I: IntoIterator<Item = Space>>(parts: I) -> Self {
        let mut iter = parts.into_iter();
        match iter.next() {
            None => Space::Unit,
            Some(first) => iter.fold(first, Space::product),
        }
    }

    /// Checks the cardinality/dimension constraints recursively.
    pub fn check(&self) -> Result<(), SpaceError> {
        match self {
            Space::Finite(0) => Err(SpaceError::EmptyFinite),
            Space::Real(0) => Err(SpaceError::ZeroDimension),
            Space::Product(a, b) | Space::Coproduct(a, b) => {
                a.check()?;
                b.check()
            }
            _ => Ok(()),
        }
    }

    /// True when the space has finitely many points.
    pub fn is_finite(&self) -> bool {
        match self {
            Space::Finite(_) | Space::Unit => true,
            Space::Countable | Space::Real(_) => false,
            Space::Product(a, b) | Space::Coproduct(a, b) => a.is_finite() && b.is_finite(),
        }
    }

    /// True when every leaf is finite or countable, so counting measure applies.
    pub fn is_discrete(&self) -> bool {
        match self {
            Space::Real(_) => false,
            Space::Product(a, b) | Space::Coproduct(a, b) => a.is_discrete() && b.is_discrete(),
            _ => true,
        }
    }

    pub fn cardinality(&self) -> Option<u64> {
        match self {
            Space::Finite(n) => Some(*n),
            Space::Unit => Some(1),
            Space::Countable | Space::Real(_) => None,
            Space::Product(a, b) => a.cardinality()?.checked_mul(b.cardinality()?),
            Space::Coproduct(a, b) => a.cardinality()?.checked_add(b.cardinality()?),
        }
    }

    /// All points of a finite space in canonical order: indices ascending,
    /// products lexicographic (left component slowest), left injections
    /// before right ones.
    pub fn points(&self) -> Option<Vec<Value>> {
        match self {
            Space::Finite(n) => Some((0..*n as i64).map(Value::Int).collect()),
            Space::Unit => Some(vec![Value::Unit]),
            Space::Countable | Space::Real(_) => None,
            Space::Product(a, b) => {
                let left = a.points()?;
                let right = b.points()?;
                let mut out = Vec::with_capacity(left.len() * right.len());
                for l in &left {
                    for r in &right {
                        out.push(Value::tuple(l.clone(), r.clone()));
                    }
                }
                Some(out)
            }
            Space::Coproduct(a, b) => {
                let mut out: Vec<Value> = a.points()?.into_iter().map(Value::inl).collect();
                out.extend(b.points()?.into_iter().map(Value::inr));
                Some(out)
            }
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        match self {
            Space::Finite(n) => json!({ "finite": n }),
            Space::Countable => json!("countable"),
            Space::Real(n) => json!({ "real": n }),
            Space::Product(a, b) => json!({ "product": [a.to_json(), b.to_json()] }),
            Space::Coproduct(a, b) => json!({ "coproduct": [a.to_json(), b.to_json()] }),
            Space::Unit => json!("unit"),
        }
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self, SpaceError> {
        use serde_json::Value as J;
        let malformed = || SpaceError::Malformed(v.to_string());
        match v {
            J::String(s) if s == "countable" => Ok(Space::Countable),
            J::String(s) if s == "unit" => Ok(Space::Unit),
            J::Object(map) if map.len() == 1 => {
                let (key, body) = map.iter().next().ok_or_else(malformed)?;
                match key.as_str() {
                    "finite" => Space::finite(body.as_u64().ok_or_else(malformed)?),
                    "real" => Space::real(body.as_u64().ok_or_else(malformed)? as usize),
                    "product" | "coproduct" => {
                        let parts = body.as_array().ok_or_else(malformed)?;
                        if parts.len() != 2 {
                            return Err(malformed());
                        }
                        let a = Space::from_json(&parts[0])?;
                        let b = Space::from_json(&parts[1])?;
                        Ok(if key == "product" {
                            Space::product(a, b)
                        } else {
                            Space::coproduct(a, b)
                        })
                    }
                    _ => Err(malformed()),
                }
            }
            _ => Err(malformed()),
        }
    }
}

impl fmt::Display for Space {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Space::Finite(n) => write!(f, "Finite({n})"),
            Space::Countable => write!(f, "Countable"),
            Space::Real(n) => write!(f, "Real({n})"),
            Space::Product(a, b) => write!(f, "({a} x {b})"),
            Space::Coproduct(a, b) => write!(f, "({a} + {b})"),
            Space::Unit => write!(f, "Unit"),
        }
    }
}

impl Serialize for Space {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_json().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Space {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = serde_json::Value::deserialize(deserializer)?;
        Space::from_json(&raw).map_err(serde::de::Error::custom)
    }
}

/// A point of some [`Space`].
///
/// Reals are never NaN or infinite; `-0.0` and `0.0` are the same value.
#[derive(Debug, Clone)]
pub enum Value {
    Int(i64),
    Real(f64),
    Tuple(Box<Value>, Box<Value>),
    InL(Box<Value>),
    InR(Box<Value>),
    Unit,
}

impl Value {
    pub fn tuple(a: Value, b: Value) -> Self {
        Value::Tuple(Box::new(a), Box::new(b))
    }

    pub fn inl(v: Value) -> Self {
        Value::InL(Box::new(v))
    }

    pub fn inr(v: Value) -> Self {
        Value::InR(Box::new(v))
    }

    /// Left-nested tuple, mirroring [`Space::product_of`].
    pub fn tuple_of<I: IntoIterator<Item = Value>>(parts: I) -> Self {
        let mut iter = parts.into_iter();
        match iter.next() {
            None => Value::Unit,
            Some(first) => iter.fold(first, Value::tuple),
        }
    }

    /// Inverse of [`Value::tuple_of`] for a known arity.
    pub fn untuple(&self, arity: usize) -> Option<Vec<Value>> {
        match arity {
            0 => matches!(self, Value::Unit).then(Vec::new),
            1 => Some(vec![self.clone()]),
            _ => match self {
                Value::Tuple(a, b) => {
                    let mut head = a.untuple(arity - 1)?;
                    head.push((**b).clone());
                    Some(head)
                }
                _ => None,
            },
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(i) => Some(*i),
            _ => None,
        }
    }

    /// Numeric view; integers are widened.
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Int(i) => Some(*i as f64),
            Value::Real(x) => Some(*x),
            _ => None,
        }
    }

    fn rank(&self) -> u8 {
        match self {
            Value::Unit => 0,
            Value::Int(_) => 1,
            Value::Real(_) => 2,
            Value::Tuple(..) => 3,
            Value::InL(_) => 4,
            Value::InR(_) => 5,
        }
    }
}

fn canonical_bits(x: f64) -> u64 {
    if x == 0.0 {
        0
    } else {
        x.to_bits()
    }
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Value {}

impl PartialOrd for Value {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Value {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Value::Int(a), Value::Int(b)) => a.cmp(b),
            (Value::Real(a), Value::Real(b)) => {
                let a = if *a == 0.0 { 0.0 } else { *a };
                let b = if *b == 0.0 { 0.0 } else { *b };
                a.total_cmp(&b)
            }
            (Value::Tuple(a1, b1), Value::Tuple(a2, b2)) => a1.cmp(a2).then_with(|| b1.cmp(b2)),
            (Value::InL(a), Value::InL(b)) | (Value::InR(a), Value::InR(b)) => a.cmp(b),
            (Value::Unit, Value::Unit) => Ordering::Equal,
            _ => self.rank().cmp(&other.rank()),
        }
    }
}

impl Hash for Value {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.rank().hash(state);
        match self {
            Value::Int(i) => i.hash(state),
            Value::Real(x) => canonical_bits(*x).hash(state),
            Value::Tuple(a, b) => {
                a.hash(state);
                b.hash(state);
            }
            Value::InL(v) | Value::InR(v) => v.hash(state),
            Value::Unit => {}
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(i) => write!(f, "{i}"),
            Value::Real(x) => write!(f, "{x:?}"),
            Value::Tuple(a, b) => write!(f, "({a}, {b})"),
            Value::InL(v) => write!(f, "inl({v})"),
            Value::InR(v) => write!(f, "inr({v})"),
            Value::Unit => write!(f, "()"),
        }
    }
}

/// True iff `v` is a point of `space`.
pub fn membership(space: &Space, v: &Value) -> bool {
    match (space, v) {
        (Space::Finite(n), Value::Int(i)) => *i >= 0 && (*i as u64) < *n,
        (Space::Countable, Value::Int(_)) => true,
        (Space::Real(1), Value::Real(x)) => x.is_finite(),
        (Space::Real(n), v) if *n > 1 => match v.untuple(*n) {
            Some(coords) => coords.iter().all(|c| matches!(c, Value::Real(x) if x.is_finite())),
            None => false,
        },
        (Space::Product(a, b), Value::Tuple(x, y)) => membership(a, x) && membership(b, y),
        (Space::Coproduct(a, _), Value::InL(x)) => membership(a, x),
        (Space::Coproduct(_, b), Value::InR(y)) => membership(b, y),
        (Space::Unit, Value::Unit) => true,
        _ => false,
    }
}

/// A closed or half-open interval `[lo, hi]` / `[lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    pub open_hi: bool,
}

impl Interval {
    pub fn closed(lo: f64, hi: f64) -> Self {
        Interval { lo, hi, open_hi: false }
    }

    pub fn half_open(lo: f64, hi: f64) -> Self {
        Interval { lo, hi, open_hi: true }
    }

    pub fn length(&self) -> Result<f64, SpaceError> {
        if self.lo.is_nan() || self.hi.is_nan() || self.lo > self.hi {
            return Err(SpaceError::BadInterval { lo: self.lo, hi: self.hi });
        }
        Ok(self.hi - self.lo)
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && (x < self.hi || (!self.open_hi && x == self.hi))
    }
}

/// Generators of the measurable sets used with [`base_measure_mass`].
#[derive(Debug, Clone, PartialEq)]
pub enum SetDescriptor {
    FinitePoints(Vec<Value>),
    Box(Vec<Interval>),
    ProductSet(Box<SetDescriptor>, Box<SetDescriptor>),
    CoproductSet { left: Box<SetDescriptor>, right: Box<SetDescriptor> },
}

impl SetDescriptor {
    pub fn product(a: SetDescriptor, b: SetDescriptor) -> Self {
        SetDescriptor::ProductSet(Box::new(a), Box::new(b))
    }

    pub fn coproduct(left: SetDescriptor, right: SetDescriptor) -> Self {
        SetDescriptor::CoproductSet { left: Box::new(left), right: Box::new(right) }
    }

    /// The empty set in the generator form appropriate for `space`.
    pub fn empty(space: &Space) -> Self {
        match space {
            Space::Real(n) => SetDescriptor::Box(vec![Interval::half_open(0.0, 0.0); *n]),
            Space::Product(a, b) => SetDescriptor::product(Self::empty(a), Self::empty(b)),
            Space::Coproduct(a, b) => SetDescriptor::coproduct(Self::empty(a), Self::empty(b)),
            _ => SetDescriptor::FinitePoints(Vec::new()),
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            SetDescriptor::FinitePoints(_) => "FinitePoints",
            SetDescriptor::Box(_) => "Box",
            SetDescriptor::ProductSet(..) => "ProductSet",
            SetDescriptor::CoproductSet { .. } => "CoproductSet",
        }
    }
}

/// Whether `v` lies in the set described by `s` (as a subset of `space`).
pub fn contains(space: &Space, s: &SetDescriptor, v: &Value) -> bool {
    match (space, s) {
        (_, SetDescriptor::FinitePoints(pts)) => membership(space, v) && pts.contains(v),
        (Space::Real(n), SetDescriptor::Box(ivs)) => match real_coords(v, *n) {
            Some(xs) => ivs.len() == *n && xs.iter().zip(ivs).all(|(x, iv)| iv.contains(*x)),
            None => false,
        },
        (Space::Product(a, b), SetDescriptor::ProductSet(sa, sb)) => match v {
            Value::Tuple(x, y) => contains(a, sa, x) && contains(b, sb, y),
            _ => false,
        },
        (Space::Coproduct(a, b), SetDescriptor::CoproductSet { left, right }) => match v {
            Value::InL(x) => contains(a, left, x),
            Value::InR(y) => contains(b, right, y),
            _ => false,
        },
        _ => false,
    }
}

fn real_coords(v: &Value, n: usize) -> Option<Vec<f64>> {
    v.untuple(n)?.iter().map(|c| match c {
        Value::Real(x) => Some(*x),
        _ => None,
    }).collect()
}

fn mismatch(space: &Space, s: &SetDescriptor) -> SpaceError {
    SpaceError::ShapeMismatch { space: space.to_string(), descriptor: s.kind().to_string() }
}

/// Measure-theoretic product with the convention `0 * inf = 0`.
fn measure_mul(a: f64, b: f64) -> f64 {
    if a == 0.0 || b == 0.0 {
        0.0
    } else {
        a * b
    }
}

/// The base measure of a generator set; may be `f64::INFINITY`.
pub fn base_measure_mass(space: &Space, s: &SetDescriptor) -> Result<f64, SpaceError> {
    match (space, s) {
        (_, SetDescriptor::FinitePoints(pts)) => {
            if !space.is_discrete() {
                return Err(SpaceError::PointsOnReal(space.to_string()));
            }
            let mut seen: Vec<&Value> = Vec::with_capacity(pts.len());
            for p in pts {
                if !membership(space, p) {
                    return Err(SpaceError::NotAMember { space: space.to_string(), value: p.to_string() });
                }
                if !seen.contains(&p) {
                    seen.push(p);
                }
            }
            Ok(seen.len() as f64)
        }
        (Space::Real(n), SetDescriptor::Box(ivs)) => {
            if ivs.len() != *n {
                return Err(SpaceError::BoxDimension { want: *n, got: ivs.len() });
            }
            let mut mass = 1.0;
            for iv in ivs {
                mass = measure_mul(mass, iv.length()?);
            }
            Ok(mass)
        }
        (_, SetDescriptor::Box(_)) => Err(SpaceError::BoxOnNonReal(space.to_string())),
        (Space::Product(a, b), SetDescriptor::ProductSet(sa, sb)) => {
            Ok(measure_mul(base_measure_mass(a, sa)?, base_measure_mass(b, sb)?))
        }
        (Space::Coproduct(a, b), SetDescriptor::CoproductSet { left, right }) => {
            Ok(base_measure_mass(a, left)? + base_measure_mass(b, right)?)
        }
        _ => Err(mismatch(space, s)),
    }
}

/// The zig-zag enumeration `0, -1, 1, -2, 2, ...` of the integers.
pub fn zigzag(n: u64) -> i64 {
    if n.is_multiple_of(2) {
        (n / 2) as i64
    } else {
        -(n.div_ceil(2) as i64)
    }
}

/// Inverse of [`zigzag`].
pub fn unzigzag(k: i64) -> u64 {
    if k >= 0 {
        2 * k as u64
    } else {
        2 * k.unsigned_abs() - 1
    }
}

/// Cantor pairing `N x N -> N`.
pub fn cantor_pair(a: u64, b: u64) -> Option<u64> {
    let s = (a as u128) + (b as u128);
    let z = s * (s + 1) / 2 + b as u128;
    u64::try_from(z).ok()
}

pub fn cantor_unpair(z: u64) -> (u64, u64) {
    let z = z as u128;
    let w = ((8 * z + 1).isqrt() - 1) / 2;
    let t = w * (w + 1) / 2;
    let b = z - t;
    let a = w - b;
    (a as u64, b as u64)
}

fn unpair_many(index: u64, dims: usize) -> Vec<u64> {
    let mut out = Vec::with_capacity(dims);
    let mut rest = index;
    for _ in 1..dims {
        let (head, tail) = cantor_unpair(rest);
        out.push(head);
        rest = tail;
    }
    out.push(rest);
    out
}

fn pair_many(coords: &[u64]) -> Option<u64> {
    let (last, init) = coords.split_last()?;
    init.iter().rev().try_fold(*last, |acc, &c| cantor_pair(c, acc))
}

/// Number of distinct cover indices when the cover needs only finitely many
/// pieces; products with such a factor use mixed-radix indices instead of
/// Cantor pairing, so indices stay small.
fn cover_len(space: &Space) -> Option<u64> {
    match space {
        Space::Finite(_) | Space::Unit => Some(1),
        Space::Countable | Space::Real(_) => None,
        Space::Product(a, b) => cover_len(a)?.checked_mul(cover_len(b)?),
        Space::Coproduct(a, b) => cover_len(a)?.max(cover_len(b)?).checked_mul(2),
    }
}

/// The `index`-th piece of the canonical countable cover of `space`.
///
/// Every piece has finite base-measure mass and the union over all indices
/// is the whole space.
pub fn sigma_finite_cover(space: &Space, index: u64) -> SetDescriptor {
    match space {
        Space::Finite(_) | Space::Unit => {
            SetDescriptor::FinitePoints(space.points().unwrap_or_default())
        }
        Space::Countable => SetDescriptor::FinitePoints(vec![Value::Int(zigzag(index))]),
        Space::Real(n) => SetDescriptor::Box(
            unpair_many(index, *n)
                .into_iter()
                .map(|c| {
                    let k = zigzag(c) as f64;
                    Interval::half_open(k, k + 1.0)
                })
                .collect(),
        ),
        Space::Product(a, b) => {
            let (i, j) = match (cover_len(a), cover_len(b)) {
                (Some(k), _) => (index % k, index / k),
                (None, Some(k)) => (index / k, index % k),
                (None, None) => cantor_unpair(index),
            };
            SetDescriptor::product(sigma_finite_cover(a, i), sigma_finite_cover(b, j))
        }
        Space::Coproduct(a, b) => {
            if index.is_multiple_of(2) {
                SetDescriptor::coproduct(sigma_finite_cover(a, index / 2), SetDescriptor::empty(b))
            } else {
                SetDescriptor::coproduct(SetDescriptor::empty(a), sigma_finite_cover(b, index / 2))
            }
        }
    }
}

/// An index whose cover piece contains `v`; `None` if `v` is not a point of
/// `space` or the index overflows.
pub fn cover_index(space: &Space, v: &Value) -> Option<u64> {
    if !membership(space, v) {
        return None;
    }
    match (space, v) {
        (Space::Finite(_) | Space::Unit, _) => Some(0),
        (Space::Countable, Value::Int(k)) => Some(unzigzag(*k)),
        (Space::Real(n), _) => {
            let coords = real_coords(v, *n)?;
            let idx: Option<Vec<u64>> = coords
                .iter()
                .map(|x| {
                    let cell = x.floor();
                    if cell.abs() > (i64::MAX / 4) as f64 {
                        None
                    } else {
                        Some(unzigzag(cell as i64))
                    }
                })
                .collect();
            pair_many(&idx?)
        }
        (Space::Product(a, b), Value::Tuple(x, y)) => {
            let (i, j) = (cover_index(a, x)?, cover_index(b, y)?);
            match (cover_len(a), cover_len(b)) {
                (Some(k), _) => j.checked_mul(k)?.checked_add(i),
                (None, Some(k)) => i.checked_mul(k)?.checked_add(j),
                (None, None) => cantor_pair(i, j),
            }
        }
        (Space::Coproduct(a, _), Value::InL(x)) => cover_index(a, x)?.checked_mul(2),
        (Space::Coproduct(_, b), Value::InR(y)) => cover_index(b, y)?.checked_mul(2)?.checked_add(1),
        _ => None,
    }
}
