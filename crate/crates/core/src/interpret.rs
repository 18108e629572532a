//! Factorization functors: evaluating diagrams to joint kernels.
//!
//! Boxes are folded in topological order. The running kernel outputs the
//! tuple of live wires; before each box a deterministic routing step copies
//! the box's input wires out of that tuple and drops wires nothing later
//! needs, and the box kernel is tensored with the identity on the rest.

use std::collections::{BTreeMap, BTreeSet};

use crate::expr::{DetMap, Expr};
use crate::freecat::{Diagram, DiagramError, Violation};
use crate::kernel::{Composable, JointKernel, KernelError, Trace};
use crate::space::{Space, Value};

#[derive(Debug, thiserror::Error)]
pub enum InterpretError {
    #[error("invalid diagram: {}", join_violations(.0))]
    Invalid(Vec<Violation>),
    #[error("no space for signature wire '{0}'")]
    MissingWire(String),
    #[error("no kernel for signature box '{0}'")]
    MissingBox(String),
    #[error("kernel for '{label}' has {side} {got}, expected {want}")]
    KernelShape { label: String, side: &'static str, want: String, got: String },
    #[error("kernel for '{label}' has residual {got}, but its residual labels give {want}")]
    ResidualLabel { label: String, want: String, got: String },
    #[error("unknown box '{0}'")]
    UnknownBox(String),
    #[error(transparent)]
    Diagram(#[from] DiagramError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

/// Spaces for signature wires and kernels for signature boxes.
#[derive(Debug, Clone)]
pub struct Interpretation<K = JointKernel> {
    pub wire_spaces: BTreeMap<String, Space>,
    pub box_kernels: BTreeMap<String, K>,
    /// Signature wires whose product is a box kernel's residual space.
    pub residual_labels: BTreeMap<String, Vec<String>>,
    /// Kernels for individual graph boxes, taking precedence over their
    /// label's kernel.
    pub overrides: BTreeMap<String, K>,
}

impl<K> Default for Interpretation<K> {
    fn default() -> Self {
        Interpretation {
            wire_spaces: BTreeMap::new(),
            box_kernels: BTreeMap::new(),
            residual_labels: BTreeMap::new(),
            overrides: BTreeMap::new(),
        }
    }
}

impl<K: Composable> Interpretation<K> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn wire(mut self, name: impl Into<String>, space: Space) -> Self {
        self.wire_spaces.insert(name.into(), space);
        self
    }

    pub fn kernel(mut self, name: impl Into<String>, k: K) -> Self {
        self.box_kernels.insert(name.into(), k);
        self
    }

    pub fn space_of(&self, sig_wire: &str) -> Result<&Space, InterpretError> {
        self.wire_spaces.get(sig_wire).ok_or_else(|| InterpretError::MissingWire(sig_wire.to_string()))
    }

    /// Product of the spaces of the listed diagram wires.
    pub fn wires_space(&self, d: &Diagram, wires: &[String]) -> Result<Space, InterpretError> {
        let parts = wires
            .iter()
            .map(|w| {
                let t = d.wire_type(w).ok_or_else(|| InterpretError::MissingWire(w.clone()))?;
                self.space_of(t).cloned()
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Space::product_of(parts))
    }

    /// The kernel used for graph box `id`, with its internal boxes renamed
    /// after `id`.
    pub fn box_kernel(&self, d: &Diagram, id: &str) -> Result<K, InterpretError> {
        let edge = d.graph.edge(id).ok_or_else(|| InterpretError::UnknownBox(id.to_string()))?;
        let label = d.labeling.boxes.get(id).ok_or_else(|| InterpretError::UnknownBox(id.to_string()))?;
        let (k, overridden) = match self.overrides.get(id) {
            Some(k) => (k, true),
            None => (self.box_kernels.get(label).ok_or_else(|| InterpretError::MissingBox(label.clone()))?, false),
        };
        let want_dom = self.wires_space(d, &edge.dom)?;
        let want_cod = self.wires_space(d, &edge.cod)?;
        for (side, want, got) in [("domain", &want_dom, k.dom()), ("codomain", &want_cod, k.cod())] {
            if want != got {
                return Err(InterpretError::KernelShape { label: label.clone(), side, want: want.to_string(), got: got.to_string() });
            }
        }
        if !overridden {
            if let Some(labels) = self.residual_labels.get(label) {
                let want = Space::product_of(labels.iter().map(|w| self.space_of(w).cloned()).collect::<Result<Vec<_>, _>>()?);
                let got = k.residual();
                if want != got {
                    return Err(InterpretError::ResidualLabel { label: label.clone(), want: want.to_string(), got: got.to_string() });
                }
            }
        }
        let inner = k.box_ids();
        let renamed = match inner.len() {
            0 => k.clone(),
            1 => k.rename_boxes(&|_| id.to_string())?,
            _ => k.rename_boxes(&|b| format!("{id}.{b}"))?,
        };
        Ok(renamed)
    }
}

struct Step {
    boxid: String,
    /// Live wires carried past this box.
    kept: Vec<String>,
}

/// Box order and wire liveness for one diagram.
pub struct Plan {
    steps: Vec<Step>,
}

impl Plan {
    pub fn new(d: &Diagram) -> Result<Self, InterpretError> {
        let mut violations = d.validate_cd();
        if violations.is_empty() {
            violations = d.validate_markov();
        }
        if !violations.is_empty() {
            return Err(InterpretError::Invalid(violations));
        }
        let order = d.topological_order()?;
        let edges: Vec<_> = order.iter().map(|b| d.graph.edge(b).expect("ordered box exists")).collect();
        // needed_after[i]: wires read by boxes after i or by the outputs
        let mut needed_after = vec![BTreeSet::new(); edges.len()];
        let mut acc: BTreeSet<&str> = d.outputs.iter().map(String::as_str).collect();
        for i in (0..edges.len()).rev() {
            needed_after[i] = acc.clone();
            acc.extend(edges[i].dom.iter().map(String::as_str));
        }
        let mut live: Vec<String> = d.inputs.clone();
        let mut steps = Vec::with_capacity(edges.len());
        for (i, e) in edges.iter().enumerate() {
            let kept: Vec<String> = live.iter().filter(|w| needed_after[i].contains(w.as_str())).cloned().collect();
            live = kept.iter().chain(&e.cod).cloned().collect();
            steps.push(Step { boxid: e.id.clone(), kept });
        }
        Ok(Plan { steps })
    }

    pub fn order(&self) -> impl Iterator<Item = &str> {
        self.steps.iter().map(|s| s.boxid.as_str())
    }

    pub fn evaluate<K: Composable>(&self, d: &Diagram, interp: &Interpretation<K>) -> Result<K, InterpretError> {
        // where each live wire sits inside the current state value `$0`
        let arity = d.inputs.len();
        let mut layout: Vec<(String, Expr)> =
            d.inputs.iter().enumerate().map(|(i, w)| (w.clone(), Expr::component(Expr::Input(0), arity, i))).collect();
        let mut state = interp.wires_space(d, &d.inputs)?;
        let mut acc: Option<K> = None;
        let access = |layout: &[(String, Expr)], w: &String| -> Expr {
            layout.iter().find(|(x, _)| x == w).map(|(_, e)| e.clone()).expect("plan keeps needed wires live")
        };
        let push = |acc: &mut Option<K>, k: K| -> Result<(), InterpretError> {
            *acc = Some(match acc.take() {
                None => k,
                Some(a) => a.compose(&k)?,
            });
            Ok(())
        };
        for step in &self.steps {
            let edge = d.graph.edge(&step.boxid).expect("planned box exists");
            let kernel = interp.box_kernel(d, &step.boxid)?;
            let kept_space = interp.wires_space(d, &step.kept)?;
            let din = interp.wires_space(d, &edge.dom)?;
            let body = Expr::tuple(
                Expr::tuple_of(step.kept.iter().map(|w| access(&layout, w))),
                Expr::tuple_of(edge.dom.iter().map(|w| access(&layout, w))),
            );
            let route = DetMap::whole(state.clone(), Space::product(kept_space.clone(), din), body).map_err(KernelError::from)?;
            push(&mut acc, K::lift(route))?;
            push(&mut acc, K::lift(DetMap::identity(kept_space.clone())).tensor(&kernel)?)?;
            let (nk, nc) = (step.kept.len(), edge.cod.len());
            layout = step
                .kept
                .iter()
                .enumerate()
                .map(|(i, w)| (w.clone(), Expr::component(Expr::fst(Expr::Input(0)), nk, i)))
                .chain(edge.cod.iter().enumerate().map(|(j, w)| (w.clone(), Expr::component(Expr::snd(Expr::Input(0)), nc, j))))
                .collect();
            state = Space::product(kept_space, kernel.cod().clone());
        }
        let out_space = interp.wires_space(d, &d.outputs)?;
        let body = Expr::tuple_of(d.outputs.iter().map(|w| access(&layout, w)));
        push(&mut acc, K::lift(DetMap::whole(state, out_space, body).map_err(KernelError::from)?))?;
        Ok(acc.expect("output routing was pushed"))
    }
}

/// The kernel a diagram denotes under `interp`. Its box ids are the
/// diagram's graph box ids.
pub fn evaluate<K: Composable>(d: &Diagram, interp: &Interpretation<K>) -> Result<K, InterpretError> {
    Plan::new(d)?.evaluate(d, interp)
}

pub fn model_log_density(d: &Diagram, interp: &Interpretation, inputs: &Value, t: &Trace) -> Result<f64, InterpretError> {
    Ok(evaluate(d, interp)?.joint_log_density(inputs, t)?)
}

pub fn sample_model(d: &Diagram, interp: &Interpretation, inputs: &Value, seed: u64) -> Result<(Trace, Value), InterpretError> {
    Ok(evaluate(d, interp)?.sample_with_trace(inputs, seed)?)
}
