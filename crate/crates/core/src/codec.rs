//! JSON encodings of values, traces and uniform assignments.
//!
//! Integers are JSON integers, reals are numbers written with 17
//! significant digits, products are two-element arrays, points of `Real(n)`
//! are flat arrays of `n` numbers, injections are `{"inl": v}` /
//! `{"inr": v}` and the unit point is `null`. Decoding is guided by the
//! expected space.

use std::fmt::Write as _;

use serde_json::Value as Json;

use crate::kernel::{JointKernel, Trace, Uniforms};
use crate::space::{membership, SetDescriptor, Space, Value};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{what}: {msg}")]
pub struct DecodeError {
    pub what: String,
    pub msg: String,
}

fn fail(what: &str, msg: impl Into<String>) -> DecodeError {
    DecodeError { what: what.to_string(), msg: msg.into() }
}

/// Shortest form guaranteed to parse back to the same bits.
pub fn real(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "NaN".into()
    } else if x > 0.0 {
        "Infinity".into()
    } else {
        "-Infinity".into()
    }
}

fn string(s: &str) -> String {
    Json::String(s.to_string()).to_string()
}

fn real_coords(v: &Value, n: usize) -> Option<Vec<f64>> {
    v.untuple(n)?.iter().map(Value::as_f64).collect()
}

pub fn write_value(out: &mut String, space: &Space, v: &Value) {
    match (space, v) {
        (Space::Real(n), v) if *n > 1 => {
            let coords = real_coords(v, *n).unwrap_or_default();
            out.push('[');
            for (i, c) in coords.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&real(*c));
            }
            out.push(']');
        }
        (Space::Product(a, b), Value::Tuple(x, y)) => {
            out.push('[');
            write_value(out, a, x);
            out.push(',');
            write_value(out, b, y);
            out.push(']');
        }
        (Space::Coproduct(a, _), Value::InL(x)) => {
            out.push_str("{\"inl\":");
            write_value(out, a, x);
            out.push('}');
        }
        (Space::Coproduct(_, b), Value::InR(y)) => {
            out.push_str("{\"inr\":");
            write_value(out, b, y);
            out.push('}');
        }
        (_, Value::Int(i)) => {
            let _ = write!(out, "{i}");
        }
        (_, Value::Real(x)) => out.push_str(&real(*x)),
        (_, Value::Unit) => out.push_str("null"),
        // shape mismatches fall back to the space-free structure
        (_, Value::Tuple(x, y)) => {
            out.push('[');
            write_value(out, &Space::Unit, x);
            out.push(',');
            write_value(out, &Space::Unit, y);
            out.push(']');
        }
        (_, Value::InL(x)) => {
            out.push_str("{\"inl\":");
            write_value(out, &Space::Unit, x);
            out.push('}');
        }
        (_, Value::InR(x)) => {
            out.push_str("{\"inr\":");
            write_value(out, &Space::Unit, x);
            out.push('}');
        }
    }
}

pub fn encode_value(space: &Space, v: &Value) -> String {
    let mut s = String::new();
    write_value(&mut s, space, v);
    s
}

pub fn decode_value(space: &Space, j: &Json, what: &str) -> Result<Value, DecodeError> {
    let v = match space {
        Space::Finite(_) | Space::Countable => match j.as_i64() {
            Some(i) => Value::Int(i),
            None => return Err(fail(what, format!("expected an integer for {space}, found {j}"))),
        },
        Space::Real(1) => match j.as_f64() {
            Some(x) => Value::Real(x),
            None => return Err(fail(what, format!("expected a number, found {j}"))),
        },
        Space::Real(n) => {
            let items = j.as_array().filter(|a| a.len() == *n).ok_or_else(|| fail(what, format!("expected {n} numbers, found {j}")))?;
            let coords = items
                .iter()
                .map(|x| x.as_f64().map(Value::Real).ok_or_else(|| fail(what, format!("expected a number, found {x}"))))
                .collect::<Result<Vec<_>, _>>()?;
            Value::tuple_of(coords)
        }
        Space::Product(a, b) => match j.as_array().map(Vec::as_slice) {
            Some([x, y]) => Value::tuple(decode_value(a, x, what)?, decode_value(b, y, what)?),
            _ => return Err(fail(what, format!("expected a pair for {space}, found {j}"))),
        },
        Space::Coproduct(a, b) => {
            let obj = j.as_object().filter(|o| o.len() == 1).ok_or_else(|| fail(what, format!("expected {{\"inl\": ..}} or {{\"inr\": ..}}, found {j}")))?;
            match (obj.get("inl"), obj.get("inr")) {
                (Some(x), None) => Value::inl(decode_value(a, x, what)?),
                (None, Some(y)) => Value::inr(decode_value(b, y, what)?),
                _ => return Err(fail(what, format!("expected inl or inr, found {j}"))),
            }
        }
        Space::Unit => match j {
            Json::Null => Value::Unit,
            _ => return Err(fail(what, format!("expected null, found {j}"))),
        },
    };
    if !membership(space, &v) {
        return Err(fail(what, format!("{v} is not a point of {space}")));
    }
    Ok(v)
}

/// Residual space of each box of `k`, keyed by box id.
fn box_space<'a>(k: &'a JointKernel, id: &str) -> Option<&'a Space> {
    k.primitive(id).map(|p| p.cod())
}

pub fn encode_trace(k: &JointKernel, t: &Trace) -> String {
    let mut s = String::from("{");
    for (i, (id, v)) in t.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        s.push_str(&string(id));
        s.push(':');
        write_value(&mut s, box_space(k, id).unwrap_or(&Space::Unit), v);
    }
    s.push('}');
    s
}

pub fn decode_trace(k: &JointKernel, j: &Json) -> Result<Trace, DecodeError> {
    let obj = j.as_object().ok_or_else(|| fail("trace", "expected an object"))?;
    obj.iter()
        .map(|(id, v)| {
            let space = box_space(k, id).ok_or_else(|| fail("trace", format!("unknown box '{id}'")))?;
            Ok((id.clone(), decode_value(space, v, &format!("trace entry '{id}'"))?))
        })
        .collect()
}

/// `{"trace": .., "output": .., "logpdf": ..}` on one line.
pub fn trace_record(k: &JointKernel, t: &Trace, x: &Value, logpdf: Option<f64>) -> String {
    let mut s = format!("{{\"trace\":{},\"output\":{}", encode_trace(k, t), encode_value(k.cod(), x));
    if let Some(lp) = logpdf {
        s.push_str(",\"logpdf\":");
        s.push_str(&json_number(lp));
    }
    s.push('}');
    s
}

/// Non-finite numbers are not JSON; they are written as strings.
pub fn json_number(x: f64) -> String {
    if x.is_finite() {
        real(x)
    } else {
        string(&real(x))
    }
}

pub fn encode_uniforms(u: &Uniforms) -> String {
    let mut s = String::from("{");
    for (i, (id, block)) in u.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        s.push_str(&string(id));
        s.push_str(":[");
        s.push_str(&block.iter().map(|x| real(*x)).collect::<Vec<_>>().join(","));
        s.push(']');
    }
    s.push('}');
    s
}

pub fn decode_uniforms(j: &Json) -> Result<Uniforms, DecodeError> {
    let obj = j.as_object().ok_or_else(|| fail("uniforms", "expected an object of arrays"))?;
    obj.iter()
        .map(|(id, v)| {
            let what = format!("uniforms for '{id}'");
            let block = match v {
                Json::Array(items) => items.iter().map(|x| x.as_f64().ok_or_else(|| fail(&what, format!("{x} is not a number")))).collect::<Result<Vec<_>, _>>()?,
                Json::Number(n) => vec![n.as_f64().expect("JSON numbers are finite")],
                _ => return Err(fail(&what, "expected an array of numbers")),
            };
            Ok((id.clone(), block))
        })
        .collect()
}

pub fn set_json(s: &SetDescriptor, space: &Space) -> String {
    match (s, space) {
        (SetDescriptor::FinitePoints(pts), _) => {
            format!("{{\"points\":[{}]}}", pts.iter().map(|p| encode_value(space, p)).collect::<Vec<_>>().join(","))
        }
        (SetDescriptor::Box(ivs), _) => format!(
            "{{\"box\":[{}]}}",
            ivs.iter()
                .map(|iv| format!("{{\"lo\":{},\"hi\":{},\"open_hi\":{}}}", json_number(iv.lo), json_number(iv.hi), iv.open_hi))
                .collect::<Vec<_>>()
                .join(",")
        ),
        (SetDescriptor::ProductSet(a, b), Space::Product(sa, sb)) => format!("{{\"product\":[{},{}]}}", set_json(a, sa), set_json(b, sb)),
        (SetDescriptor::CoproductSet { left, right }, Space::Coproduct(sa, sb)) => {
            format!("{{\"coproduct\":[{},{}]}}", set_json(left, sa), set_json(right, sb))
        }
        (SetDescriptor::ProductSet(a, b), _) => format!("{{\"product\":[{},{}]}}", set_json(a, &Space::Unit), set_json(b, &Space::Unit)),
        (SetDescriptor::CoproductSet { left, right }, _) => {
            format!("{{\"coproduct\":[{},{}]}}", set_json(left, &Space::Unit), set_json(right, &Space::Unit))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn roundtrip(space: &Space, v: Value) {
        let text = encode_value(space, &v);
        let j: Json = serde_json::from_str(&text).unwrap();
        assert_eq!(decode_value(space, &j, "v").unwrap(), v, "{text}");
    }

    #[test]
    fn values_roundtrip() {
        roundtrip(&Space::Finite(3), Value::Int(2));
        roundtrip(&Space::Countable, Value::Int(-7));
        roundtrip(&Space::Real(1), Value::Real(0.1 + 0.2));
        roundtrip(&Space::Real(1), Value::Real(-1.234_567_890_123_456_7e-300));
        roundtrip(&Space::Real(3), Value::tuple_of([1.5, -2.0, 3.25].map(Value::Real)));
        let s = Space::product(Space::Unit, Space::coproduct(Space::Finite(2), Space::Real(1)));
        roundtrip(&s, Value::tuple(Value::Unit, Value::inr(Value::Real(5e-324))));
        roundtrip(&s, Value::tuple(Value::Unit, Value::inl(Value::Int(1))));
    }

    #[test]
    fn reals_keep_every_bit() {
        let mut x = 0.123_456_789_f64;
        for _ in 0..1000 {
            x = (x * 3.999 * (1.0 - x)).abs();
            let j: Json = serde_json::from_str(&real(x)).unwrap();
            assert_eq!(j.as_f64().unwrap().to_bits(), x.to_bits());
        }
    }

    #[test]
    fn decode_rejects_bad_shapes() {
        let j = |s: &str| serde_json::from_str::<Json>(s).unwrap();
        assert!(decode_value(&Space::Finite(2), &j("2"), "v").is_err());
        assert!(decode_value(&Space::Finite(2), &j("0.5"), "v").is_err());
        assert!(decode_value(&Space::Real(2), &j("[1]"), "v").is_err());
        assert!(decode_value(&Space::coproduct(Space::Unit, Space::Unit), &j("{\"inl\":null,\"inr\":null}"), "v").is_err());
        assert_eq!(decode_value(&Space::Real(1), &j("2"), "v").unwrap(), Value::Real(2.0));
    }

    #[test]
    fn uniforms_roundtrip() {
        let u: Uniforms = [("a".to_string(), vec![0.25]), ("b".to_string(), vec![1.0 / 3.0, 0.5])].into_iter().collect();
        let j: Json = serde_json::from_str(&encode_uniforms(&u)).unwrap();
        assert_eq!(decode_uniforms(&j).unwrap(), u);
    }
}
