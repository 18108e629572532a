//! Model files.
//!
//! A model is a JSON document with a signature, a diagram over it, an
//! interpretation of every signature box and optional weights and audit
//! tests. Expressions in a box entry see the box inputs as `$1, $2, ...`;
//! mechanism and weight expressions also see the box residual as `$0`.
//!
//! ```json
//! {
//!   "version": 1,
//!   "signature": {
//!     "wires": {"B": {"finite": 2}},
//!     "boxes": {"flip": {"dom": [], "cod": ["B"]}, "cond": {"dom": ["B"], "cod": ["B"]}}
//!   },
//!   "diagram": {
//!     "wires": {"w": "B", "x": "B"},
//!     "boxes": [
//!       {"id": "b1", "label": "flip", "dom": [], "cod": ["w"]},
//!       {"id": "b2", "label": "cond", "dom": ["w"], "cod": ["x"]}
//!     ],
//!     "inputs": [],
//!     "outputs": ["x"]
//!   },
//!   "interpretation": {
//!     "flip": {"primitive": "bernoulli", "params": {"p": 0.5}},
//!     "cond": {"primitive": "bernoulli", "params": {"p": "if $1 < 1 then 0.2 else 0.7"}}
//!   }
//! }
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::expr::{self, Binder, DetMap, Expr, ExprError};
use crate::freecat::{Diagram, Edge, HypMorphism, Hypergraph};
use crate::interpret::{evaluate, InterpretError, Interpretation};
use crate::kernel::{JointKernel, KernelError};
use crate::primitives::{instantiate, Param, PrimitiveSpec};
use crate::space::Space;
use crate::weighted::{Reference, WeightedJointKernel};

pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub version: u32,
    pub signature: SignatureSpec,
    pub diagram: DiagramSpec,
    pub interpretation: BTreeMap<String, BoxSpec>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub weights: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spw: Option<SpwSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignatureSpec {
    pub wires: BTreeMap<String, Space>,
    pub boxes: BTreeMap<String, GeneratorSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub dom: Vec<String>,
    pub cod: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagramSpec {
    pub wires: BTreeMap<String, String>,
    pub boxes: Vec<BoxRef>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxRef {
    pub id: String,
    pub label: String,
    pub dom: Vec<String>,
    pub cod: Vec<String>,
}

/// Either a primitive (with optional mechanism) or a deterministic
/// expression.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub primitive: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, ParamSrc>,
    /// Support of a categorical; defaults to the box codomain.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub space: Option<Space>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mech: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expr: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamSrc {
    Number(f64),
    Expr(String),
    List(Vec<ParamSrc>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpwSpec {
    pub tests: Vec<SpwTestSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpwTestSpec {
    /// Test function over the model output `$0`.
    pub h: String,
    /// A number, or `"enumerate"`.
    pub reference: RefSrc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RefSrc {
    Number(f64),
    Keyword(String),
}

/// A located problem in a model file.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub location: String,
    pub line: Option<usize>,
    pub col: Option<usize>,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.line, self.col) {
            (Some(l), Some(c)) => write!(f, "{l}:{c}: {}: {}", self.location, self.message),
            _ => write!(f, "{}: {}", self.location, self.message),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{}", lines(.0))]
    Syntax(Vec<Diagnostic>),
    #[error("{}", lines(.0))]
    Shape(Vec<Diagnostic>),
    #[error("{}", lines(.0))]
    Validation(Vec<Diagnostic>),
}

fn lines(ds: &[Diagnostic]) -> String {
    ds.iter().map(ToString::to_string).collect::<Vec<_>>().join("\n")
}

impl ModelError {
    pub fn exit_code(&self) -> i32 {
        match self {
            ModelError::Io { .. } => 2,
            ModelError::Syntax(_) => 3,
            ModelError::Shape(_) => 4,
            ModelError::Validation(_) => 5,
        }
    }

    pub fn diagnostics(&self) -> &[Diagnostic] {
        match self {
            ModelError::Io { .. } => &[],
            ModelError::Syntax(d) | ModelError::Shape(d) | ModelError::Validation(d) => d,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Severity {
    Validation,
    Shape,
    Syntax,
}

/// Collects diagnostics; the most basic kind present decides the error.
struct Report<'a> {
    text: &'a str,
    items: Vec<(Severity, Diagnostic)>,
}

impl<'a> Report<'a> {
    fn new(text: &'a str) -> Self {
        Report { text, items: Vec::new() }
    }

    fn push(&mut self, sev: Severity, location: impl Into<String>, message: impl Into<String>) {
        self.items.push((sev, Diagnostic { location: location.into(), line: None, col: None, message: message.into() }));
    }

    /// Position of the JSON string literal `src` in the file, shifted to the
    /// expression column when known.
    fn locate(&self, src: &str, col: Option<usize>) -> (Option<usize>, Option<usize>) {
        let needle = serde_json::to_string(src).expect("strings serialize");
        let Some(at) = self.text.find(&needle) else { return (None, None) };
        let before = &self.text[..at];
        let line = before.matches('\n').count() + 1;
        let start = before.rfind('\n').map_or(0, |i| i + 1);
        let quote_col = before[start..].chars().count() + 1;
        (Some(line), Some(quote_col + col.unwrap_or(1)))
    }

    fn expr(&mut self, location: impl Into<String>, src: &str, e: ExprError) {
        let (sev, col) = match &e {
            ExprError::Syntax { col, .. } => (Severity::Syntax, Some(*col)),
            _ => (Severity::Shape, None),
        };
        let (line, c) = self.locate(src, col);
        self.items.push((sev, Diagnostic { location: location.into(), line, col: c, message: e.to_string() }));
    }

    fn kernel(&mut self, location: impl Into<String>, e: KernelError) {
        match e {
            KernelError::Expr(e) => self.push(Severity::Shape, location, e.to_string()),
            e => self.push(Severity::Shape, location, e.to_string()),
        }
    }

    fn finish(&mut self) -> Result<(), ModelError> {
        let Some(worst) = self.items.iter().map(|(s, _)| *s).max() else { return Ok(()) };
        let ds = std::mem::take(&mut self.items).into_iter().filter(|(s, _)| *s == worst).map(|(_, d)| d).collect();
        Err(match worst {
            Severity::Syntax => ModelError::Syntax(ds),
            Severity::Shape => ModelError::Shape(ds),
            Severity::Validation => ModelError::Validation(ds),
        })
    }
}

/// A test function and its reference for the audit.
#[derive(Debug, Clone)]
pub struct SpwTest {
    pub h: DetMap,
    pub reference: Option<f64>,
}

/// A parsed, validated model.
#[derive(Debug, Clone)]
pub struct Model {
    pub file: ModelFile,
    pub diagram: Diagram,
    pub interp: Interpretation,
    pub weighted: Interpretation<WeightedJointKernel>,
    pub kernel: JointKernel,
    pub spw_tests: Vec<SpwTest>,
}

pub fn parse_model(path: impl AsRef<Path>) -> Result<Model, ModelError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ModelError::Io { path: path.display().to_string(), source })?;
    Model::from_text(&text)
}

/// Binds `$0` to the residual (when present) and `$1..$n` to the inputs.
fn box_binder(residual: bool, n_inputs: usize) -> Binder {
    let inputs = Binder::flat_from(1, n_inputs);
    if residual {
        Binder::Pair(Box::new(Binder::Var(0)), Box::new(inputs))
    } else {
        inputs
    }
}

struct Gen<'a> {
    label: &'a str,
    dom: Vec<Space>,
    cod: Space,
}

impl Gen<'_> {
    fn dom_space(&self) -> Space {
        Space::product_of(self.dom.iter().cloned())
    }
}

fn param_names(primitive: &str) -> Option<&'static [&'static str]> {
    Some(match primitive {
        "bernoulli" => &["p"],
        "categorical" => &["probs"],
        "uniform01" => &[],
        "uniform" => &["low", "high"],
        "normal" => &["mean", "std"],
        "exponential" | "poisson" => &["rate"],
        "dirac_countable" => &["point"],
        _ => return None,
    })
}

impl Model {
    pub fn from_text(text: &str) -> Result<Model, ModelError> {
        let file: ModelFile = serde_json::from_str(text).map_err(|e| {
            ModelError::Syntax(vec![Diagnostic { location: "model".into(), line: Some(e.line()), col: Some(e.column()), message: e.to_string() }])
        })?;
        Self::from_file(file, text)
    }

    pub fn from_file(file: ModelFile, text: &str) -> Result<Model, ModelError> {
        let mut r = Report::new(text);
        if file.version != VERSION {
            r.push(Severity::Syntax, "version", format!("unsupported version {}, expected {VERSION}", file.version));
            r.finish()?;
        }
        let diagram = build_diagram(&file, &mut r);
        r.finish()?;
        let wire_spaces = file.signature.wires.clone();
        let mut interp = Interpretation { wire_spaces: wire_spaces.clone(), ..Interpretation::default() };
        let mut weighted = Interpretation { wire_spaces, ..Interpretation::default() };
        for (label, gen) in &file.signature.boxes {
            let Some(spec) = file.interpretation.get(label) else {
                if diagram.labeling.boxes.values().any(|l| l == label) {
                    r.push(Severity::Validation, format!("interpretation.{label}"), "missing interpretation for a box used by the diagram");
                }
                continue;
            };
            let g = Gen {
                label,
                dom: gen.dom.iter().map(|w| file.signature.wires[w].clone()).collect(),
                cod: Space::product_of(gen.cod.iter().map(|w| file.signature.wires[w].clone())),
            };
            let Some((k, labels)) = build_box(&g, &gen.cod, spec, &mut r) else { continue };
            if let Some(l) = labels {
                if let Some(bad) = l.iter().find(|w| !file.signature.wires.contains_key(*w)) {
                    r.push(Severity::Validation, format!("interpretation.{label}.residual"), format!("unknown signature wire '{bad}'"));
                    continue;
                }
                interp.residual_labels.insert(label.clone(), l.clone());
                weighted.residual_labels.insert(label.clone(), l);
            }
            let wk = match file.weights.get(label) {
                None => Some(WeightedJointKernel::unweighted(k.clone())),
                Some(src) => build_weight(&g, &k, src, &mut r),
            };
            interp.box_kernels.insert(label.clone(), k);
            if let Some(wk) = wk {
                weighted.box_kernels.insert(label.clone(), wk);
            }
        }
        for label in file.interpretation.keys().chain(file.weights.keys()) {
            if !file.signature.boxes.contains_key(label) {
                r.push(Severity::Validation, format!("interpretation.{label}"), "not a signature box");
            }
        }
        r.finish()?;
        let kernel = match evaluate(&diagram, &interp) {
            Ok(k) => k,
            Err(e) => {
                let sev = match e {
                    InterpretError::Invalid(_) | InterpretError::MissingBox(_) | InterpretError::MissingWire(_) | InterpretError::UnknownBox(_) => {
                        Severity::Validation
                    }
                    _ => Severity::Shape,
                };
                r.push(sev, "interpretation", e.to_string());
                r.finish()?;
                unreachable!("finish reports the pushed diagnostic")
            }
        };
        let mut spw_tests = Vec::new();
        for (i, t) in file.spw.iter().flat_map(|s| s.tests.iter()).enumerate() {
            let at = format!("spw.tests[{i}]");
            let reference = match &t.reference {
                RefSrc::Number(x) => Some(*x),
                RefSrc::Keyword(k) if k == "enumerate" => None,
                RefSrc::Keyword(k) => {
                    r.push(Severity::Syntax, format!("{at}.reference"), format!("expected a number or \"enumerate\", found \"{k}\""));
                    continue;
                }
            };
            match expr::parse(&t.h).and_then(|e| DetMap::whole(kernel.cod().clone(), Space::Real(1), e)) {
                Ok(h) => spw_tests.push(SpwTest { h, reference }),
                Err(e) => r.expr(format!("{at}.h"), &t.h, e),
            }
        }
        r.finish()?;
        Ok(Model { file, diagram, interp, weighted, kernel, spw_tests })
    }

    /// Canonical JSON text of the model file.
    pub fn print(&self) -> String {
        print_model(&self.file)
    }

    pub fn references(&self) -> Reference {
        if self.spw_tests.iter().all(|t| t.reference.is_some()) {
            Reference::Exact(self.spw_tests.iter().map(|t| t.reference.expect("checked")).collect())
        } else {
            Reference::Enumerate
        }
    }
}

pub fn print_model(file: &ModelFile) -> String {
    let mut s = serde_json::to_string_pretty(file).expect("model files serialize");
    s.push('\n');
    s
}

fn build_diagram(file: &ModelFile, r: &mut Report) -> Diagram {
    let sig = &file.signature;
    let mut boxes = Vec::new();
    for (name, g) in &sig.boxes {
        for w in g.dom.iter().chain(&g.cod) {
            if !sig.wires.contains_key(w) {
                r.push(Severity::Validation, format!("signature.boxes.{name}"), format!("unknown signature wire '{w}'"));
            }
        }
        boxes.push(Edge { id: name.clone(), dom: g.dom.clone(), cod: g.cod.clone() });
    }
    for (name, space) in &sig.wires {
        if let Err(e) = space.check() {
            r.push(Severity::Syntax, format!("signature.wires.{name}"), e.to_string());
        }
    }
    let signature = Arc::new(Hypergraph { wires: sig.wires.keys().cloned().collect(), boxes });
    let d = &file.diagram;
    let diagram = Diagram {
        signature,
        graph: Hypergraph {
            wires: d.wires.keys().cloned().collect(),
            boxes: d.boxes.iter().map(|b| Edge { id: b.id.clone(), dom: b.dom.clone(), cod: b.cod.clone() }).collect(),
        },
        labeling: HypMorphism {
            wires: d.wires.clone(),
            boxes: d.boxes.iter().map(|b| (b.id.clone(), b.label.clone())).collect(),
        },
        inputs: d.inputs.clone(),
        outputs: d.outputs.clone(),
    };
    let mut violations = diagram.validate_cd();
    if violations.is_empty() {
        violations = diagram.validate_markov();
    }
    for v in violations {
        r.push(Severity::Validation, "diagram", v.to_string());
    }
    if !diagram.is_causal_model() {
        r.push(Severity::Validation, "diagram.outputs", "output wires repeat, so the diagram is not a causal model");
    }
    diagram
}

/// The kernel for one signature box and its residual labels.
fn build_box(g: &Gen, cod_wires: &[String], spec: &BoxSpec, r: &mut Report) -> Option<(JointKernel, Option<Vec<String>>)> {
    let at = format!("interpretation.{}", g.label);
    let n = g.dom.len();
    let dom = g.dom_space();
    match (&spec.primitive, &spec.expr) {
        (Some(_), Some(_)) | (None, None) => {
            r.push(Severity::Syntax, at, "give exactly one of \"primitive\" or \"expr\"");
            None
        }
        (None, Some(src)) => {
            if spec.mech.is_some() || spec.residual.is_some() || !spec.params.is_empty() || spec.space.is_some() {
                r.push(Severity::Syntax, &at, "deterministic boxes take only \"expr\"");
                return None;
            }
            match expr::parse(src).and_then(|e| DetMap::new(dom, g.cod.clone(), box_binder(false, n), e)) {
                Ok(m) => Some((JointKernel::lift_det(m), Some(vec![]))),
                Err(e) => {
                    r.expr(format!("{at}.expr"), src, e);
                    None
                }
            }
        }
        (Some(name), None) => {
            let (prim_spec, wired) = primitive_spec(g, name, spec, &at, r)?;
            let prim = match instantiate(&prim_spec) {
                Ok(p) => p,
                Err(e) => {
                    r.kernel(at, e);
                    return None;
                }
            };
            let inner = JointKernel::from_primitive(prim, g.label);
            let mut k = if *inner.dom() == dom && wired.is_empty() {
                inner
            } else {
                let body = Expr::tuple_of(wired.into_iter().map(|(_, e)| e));
                match DetMap::new(dom.clone(), prim_spec.domain(), box_binder(false, n), body) {
                    Ok(pre) => JointKernel::lift_det(pre).compose(&inner).expect("parameter map matches primitive domain"),
                    Err(e) => {
                        r.push(Severity::Shape, format!("{at}.params"), e.to_string());
                        return None;
                    }
                }
            };
            let labels = match &spec.mech {
                None => {
                    if *k.cod() != g.cod {
                        r.push(Severity::Shape, &at, format!("{name} produces {}, but the box codomain is {}", k.cod(), g.cod));
                        return None;
                    }
                    Some(spec.residual.clone().unwrap_or_else(|| cod_wires.to_vec()))
                }
                Some(src) => {
                    let map = expr::parse(src).and_then(|e| DetMap::new(k.mech_dom(), g.cod.clone(), box_binder(true, n), e));
                    match map {
                        Ok(m) => k = k.with_mechanism(m).expect("mechanism domain is the kernel's"),
                        Err(e) => {
                            r.expr(format!("{at}.mech"), src, e);
                            return None;
                        }
                    }
                    spec.residual.clone()
                }
            };
            Some((k, labels))
        }
    }
}

struct ParamCtx<'a> {
    at: &'a str,
    dom: Space,
    n_inputs: usize,
    space: Space,
    wired: Vec<(String, Expr)>,
}

impl ParamCtx<'_> {
    fn param(&mut self, key: String, src: &ParamSrc, r: &mut Report) -> Option<Param> {
        match src {
            ParamSrc::Number(x) => Some(Param::Const(*x)),
            ParamSrc::Expr(s) => {
                let checked = expr::parse(s)
                    .and_then(|e| DetMap::new(self.dom.clone(), self.space.clone(), box_binder(false, self.n_inputs), e.clone()).map(|_| e));
                match checked {
                    Ok(e) => {
                        self.wired.push((key, e));
                        Some(Param::Wired)
                    }
                    Err(e) => {
                        r.expr(format!("{}.params.{key}", self.at), s, e);
                        None
                    }
                }
            }
            ParamSrc::List(_) => {
                r.push(Severity::Syntax, format!("{}.params.{key}", self.at), "expected a number or an expression");
                None
            }
        }
    }
}

/// The primitive spec plus the expression of each wired parameter.
fn primitive_spec(g: &Gen, name: &str, spec: &BoxSpec, at: &str, r: &mut Report) -> Option<(PrimitiveSpec, Vec<(String, Expr)>)> {
    let Some(names) = param_names(name) else {
        r.push(Severity::Syntax, format!("{at}.primitive"), format!("unknown primitive '{name}'"));
        return None;
    };
    if spec.space.is_some() && name != "categorical" {
        r.push(Severity::Syntax, format!("{at}.space"), "only categorical boxes take a support space");
        return None;
    }
    for key in spec.params.keys() {
        if !names.contains(&key.as_str()) {
            r.push(Severity::Syntax, format!("{at}.params.{key}"), format!("{name} has no parameter '{key}'"));
        }
    }
    let mut cx = ParamCtx {
        at,
        dom: g.dom_space(),
        n_inputs: g.dom.len(),
        space: if name == "dirac_countable" { Space::Countable } else { Space::Real(1) },
        wired: Vec::new(),
    };
    // every declared parameter, in declaration order
    let mut params = Vec::new();
    let mut complete = true;
    for key in names {
        match (key, spec.params.get(*key)) {
            (&"probs", Some(ParamSrc::List(items))) => {
                for (i, src) in items.iter().enumerate() {
                    let p = cx.param(format!("probs[{i}]"), src, r);
                    complete &= p.is_some();
                    params.extend(p);
                }
            }
            (&"probs", _) => {
                r.push(Severity::Syntax, format!("{at}.params.probs"), "categorical needs a list of probabilities");
                complete = false;
            }
            (_, Some(src)) => {
                let p = cx.param(key.to_string(), src, r);
                complete &= p.is_some();
                params.extend(p);
            }
            (_, None) => {
                r.push(Severity::Syntax, format!("{at}.params"), format!("{name} needs parameter '{key}'"));
                complete = false;
            }
        }
    }
    if !complete {
        return None;
    }
    let p = match name {
        "bernoulli" => PrimitiveSpec::Bernoulli { p: params[0] },
        "uniform01" => PrimitiveSpec::Uniform01,
        "uniform" => PrimitiveSpec::Uniform { low: params[0], high: params[1] },
        "normal" => PrimitiveSpec::Normal { mean: params[0], std: params[1] },
        "exponential" => PrimitiveSpec::Exponential { rate: params[0] },
        "poisson" => PrimitiveSpec::Poisson { rate: params[0] },
        "dirac_countable" => PrimitiveSpec::DiracCountable { point: params[0] },
        "categorical" => PrimitiveSpec::Categorical { probs: params, space: spec.space.clone().unwrap_or_else(|| g.cod.clone()) },
        _ => unreachable!("names are checked above"),
    };
    Some((p, cx.wired))
}

fn build_weight(g: &Gen, k: &JointKernel, src: &str, r: &mut Report) -> Option<WeightedJointKernel> {
    let at = format!("weights.{}", g.label);
    let map = expr::parse(src).and_then(|e| DetMap::new(k.mech_dom(), Space::Real(1), box_binder(true, g.dom.len()), e));
    match map {
        Ok(w) => match WeightedJointKernel::new(k.clone(), w) {
            Ok(wk) => Some(wk),
            Err(e) => {
                r.kernel(at, e);
                None
            }
        },
        Err(e) => {
            r.expr(at, src, e);
            None
        }
    }
}
