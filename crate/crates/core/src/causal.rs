//! Point interventions, counterfactual replay and abduction.

use std::collections::BTreeMap;

use crate::expr::DetMap;
use crate::freecat::Diagram;
use crate::interpret::{evaluate, InterpretError, Interpretation};
use crate::kernel::{Composable, KernelError, Trace, Uniforms};
use crate::space::{membership, Value};

/// Graph box id to the constant it is forced to; `None` leaves it alone.
pub type Intervention = BTreeMap<String, Option<Value>>;

/// Graph box id to its block of uniforms.
pub type UAssignment = Uniforms;

/// Replaces each intervened box by a noiseless kernel that deletes its
/// inputs and outputs the constant.
pub fn intervene<K: Composable>(
    d: &Diagram,
    interp: &Interpretation<K>,
    intervention: &Intervention,
) -> Result<Interpretation<K>, InterpretError> {
    let mut out = interp.clone();
    for (id, value) in intervention {
        let edge = d.graph.edge(id).ok_or_else(|| InterpretError::UnknownBox(id.clone()))?;
        let Some(v) = value else { continue };
        let dom = interp.wires_space(d, &edge.dom)?;
        let cod = interp.wires_space(d, &edge.cod)?;
        if !membership(&cod, v) {
            return Err(KernelError::Inadmissible {
                what: format!("intervention on '{id}'"),
                value: v.to_string(),
                space: cod.to_string(),
            }
            .into());
        }
        let constant = DetMap::constant(dom, cod, v).map_err(KernelError::from)?;
        out.overrides.insert(id.clone(), K::lift(constant));
    }
    Ok(out)
}

/// Runs the intervened model at fixed uniforms. Entries of `u` for
/// intervened boxes are ignored.
pub fn counterfactual(
    d: &Diagram,
    interp: &Interpretation,
    intervention: &Intervention,
    u: &UAssignment,
    inputs: &Value,
) -> Result<(Trace, Value), InterpretError> {
    let surgered = intervene(d, interp, intervention)?;
    Ok(evaluate(d, &surgered)?.replay(inputs, u)?)
}

/// Uniforms under which the unintervened model reproduces `t`.
pub fn abduct_trace(d: &Diagram, interp: &Interpretation, inputs: &Value, t: &Trace) -> Result<UAssignment, InterpretError> {
    let k = evaluate(d, interp)?;
    let lp = k.joint_log_density(inputs, t)?;
    if lp == f64::NEG_INFINITY {
        return Err(KernelError::OutOfSupport { primitive: "model".into(), value: "trace".into() }.into());
    }
    Ok(k.abduct(inputs, t)?)
}
