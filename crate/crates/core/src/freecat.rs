//! Free copy/delete and Markov diagrams as labeled hypergraph cospans.
//!
//! A [`Diagram`] is a hypergraph `G` with a labeling `G -> Σ` into a
//! signature and two legs `p: n -> W` (inputs) and `q: m -> W` (outputs).
//! Boxes are hyperedges from a list of input wires to a list of output
//! wires. Copying is a wire consumed more than once; deleting is a wire
//! consumed nowhere.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::{self, Write as _};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

/// A hyperedge. In a signature `dom`/`cod` name types; in a diagram graph
/// they name wires.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub id: String,
    pub dom: Vec<String>,
    pub cod: Vec<String>,
}

impl Edge {
    pub fn new<S: Into<String>>(id: impl Into<String>, dom: impl IntoIterator<Item = S>, cod: impl IntoIterator<Item = S>) -> Self {
        Edge { id: id.into(), dom: dom.into_iter().map(Into::into).collect(), cod: cod.into_iter().map(Into::into).collect() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Hypergraph {
    pub wires: Vec<String>,
    pub boxes: Vec<Edge>,
}

/// Wires are type names, boxes are generators.
pub type Signature = Hypergraph;

impl Hypergraph {
    pub fn edge(&self, id: &str) -> Option<&Edge> {
        self.boxes.iter().find(|b| b.id == id)
    }

    pub fn has_wire(&self, w: &str) -> bool {
        self.wires.iter().any(|x| x == w)
    }
}

/// Wire and box maps of a hypergraph morphism.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct HypMorphism {
    pub wires: BTreeMap<String, String>,
    pub boxes: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagram {
    pub signature: Arc<Signature>,
    pub graph: Hypergraph,
    pub labeling: HypMorphism,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    DuplicateWire(String),
    DuplicateBox(String),
    UnknownWire { wire: String, context: String },
    StartPlace { wire: String, starts: usize },
    Cycle { wire: String },
    Unlabeled { item: String },
    UnknownLabel { item: String, label: String },
    LabelMismatch { boxid: String, msg: String },
    Dangling { boxid: String, wire: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DuplicateWire(w) => write!(f, "wire '{w}' declared twice"),
            Violation::DuplicateBox(b) => write!(f, "box '{b}' declared twice"),
            Violation::UnknownWire { wire, context } => write!(f, "{context} refers to unknown wire '{wire}'"),
            Violation::StartPlace { wire, starts } => write!(f, "wire '{wire}' has {starts} starting places"),
            Violation::Cycle { wire } => write!(f, "cycle through wire '{wire}'"),
            Violation::Unlabeled { item } => write!(f, "'{item}' has no signature label"),
            Violation::UnknownLabel { item, label } => write!(f, "'{item}' is labeled by '{label}', which is not in the signature"),
            Violation::LabelMismatch { boxid, msg } => write!(f, "box '{boxid}': {msg}"),
            Violation::Dangling { boxid, wire } => write!(f, "output wire '{wire}' of box '{boxid}' connects nowhere"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DiagramError {
    #[error("arity mismatch: {left} outputs against {right} inputs")]
    Arity { left: usize, right: usize },
    #[error("diagrams are over different signatures")]
    SignatureMismatch,
    #[error("cycle through wire '{0}'")]
    Cycle(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Cd,
    Markov,
}

impl Diagram {
    /// An empty diagram `0 -> 0`.
    pub fn empty(signature: Arc<Signature>) -> Self {
        Diagram { signature, graph: Hypergraph::default(), labeling: HypMorphism::default(), inputs: vec![], outputs: vec![] }
    }

    /// The identity on the listed signature types.
    pub fn identity(signature: Arc<Signature>, types: &[&str]) -> Self {
        let wires: Vec<String> = (0..types.len()).map(|i| format!("w{i}")).collect();
        let labeling = HypMorphism {
            wires: wires.iter().cloned().zip(types.iter().map(|t| t.to_string())).collect(),
            boxes: BTreeMap::new(),
        };
        Diagram {
            signature,
            graph: Hypergraph { wires: wires.clone(), boxes: vec![] },
            labeling,
            inputs: wires.clone(),
            outputs: wires,
        }
    }

    /// The diagram of a single generator with fresh wires.
    pub fn generator(signature: Arc<Signature>, name: &str) -> Option<Self> {
        let g = signature.edge(name)?.clone();
        let dom: Vec<String> = (0..g.dom.len()).map(|i| format!("{name}.in{i}")).collect();
        let cod: Vec<String> = (0..g.cod.len()).map(|i| format!("{name}.out{i}")).collect();
        let mut labeling = HypMorphism::default();
        for (w, t) in dom.iter().zip(&g.dom).chain(cod.iter().zip(&g.cod)) {
            labeling.wires.insert(w.clone(), t.clone());
        }
        labeling.boxes.insert(name.to_string(), name.to_string());
        Some(Diagram {
            signature,
            graph: Hypergraph { wires: dom.iter().chain(&cod).cloned().collect(), boxes: vec![Edge::new(name, dom.clone(), cod.clone())] },
            labeling,
            inputs: dom,
            outputs: cod,
        })
    }

    pub fn box_ids(&self) -> Vec<String> {
        self.graph.boxes.iter().map(|b| b.id.clone()).collect()
    }

    /// The signature type of a graph wire.
    pub fn wire_type(&self, w: &str) -> Option<&str> {
        self.labeling.wires.get(w).map(String::as_str)
    }

    /// Number of starting places of each wire: appearances in `p` plus
    /// appearances as a box output.
    fn starts(&self) -> BTreeMap<&str, usize> {
        let mut starts: BTreeMap<&str, usize> = self.graph.wires.iter().map(|w| (w.as_str(), 0)).collect();
        for w in self.inputs.iter().chain(self.graph.boxes.iter().flat_map(|b| b.cod.iter())) {
            *starts.entry(w.as_str()).or_insert(0) += 1;
        }
        starts
    }

    fn producers(&self) -> BTreeMap<&str, &str> {
        let mut out = BTreeMap::new();
        for b in &self.graph.boxes {
            for w in &b.cod {
                out.entry(w.as_str()).or_insert(b.id.as_str());
            }
        }
        out
    }

    /// Boxes in dependency order, ties broken by box id.
    pub fn topological_order(&self) -> Result<Vec<String>, DiagramError> {
        let producers = self.producers();
        let mut deps: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
        let mut users: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
        for b in &self.graph.boxes {
            let entry = deps.entry(b.id.as_str()).or_default();
            for w in &b.dom {
                if let Some(&p) = producers.get(w.as_str()) {
                    entry.insert(p);
                    users.entry(p).or_default().insert(b.id.as_str());
                }
            }
        }
        let mut ready: BTreeSet<&str> = deps.iter().filter(|(_, d)| d.is_empty()).map(|(b, _)| *b).collect();
        let mut order = Vec::with_capacity(deps.len());
        while let Some(b) = ready.pop_first() {
            order.push(b.to_string());
            for u in users.get(b).into_iter().flatten() {
                let d = deps.get_mut(u).expect("user is a box");
                d.remove(b);
                if d.is_empty() {
                    ready.insert(u);
                }
            }
            deps.remove(b);
        }
        if order.len() == self.graph.boxes.len() {
            return Ok(order);
        }
        Err(DiagramError::Cycle(self.cycle_wire(&producers, &deps.keys().copied().collect())))
    }

    /// A wire on a cycle among the `stuck` boxes.
    fn cycle_wire(&self, producers: &BTreeMap<&str, &str>, stuck: &BTreeSet<&str>) -> String {
        let mut seen = BTreeSet::new();
        let mut cur = *stuck.first().expect("a cycle leaves boxes behind");
        loop {
            let edge = self.graph.edge(cur).expect("stuck box exists");
            let (w, p) = edge
                .dom
                .iter()
                .find_map(|w| producers.get(w.as_str()).filter(|p| stuck.contains(**p)).map(|p| (w, *p)))
                .expect("stuck box has a stuck producer");
            if !seen.insert(w.clone()) {
                return w.clone();
            }
            cur = p;
        }
    }

    /// Well-formedness as a free copy/delete morphism.
    pub fn validate_cd(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut wires = BTreeSet::new();
        for w in &self.graph.wires {
            if !wires.insert(w.as_str()) {
                out.push(Violation::DuplicateWire(w.clone()));
            }
        }
        let mut boxes = BTreeSet::new();
        for b in &self.graph.boxes {
            if !boxes.insert(b.id.as_str()) {
                out.push(Violation::DuplicateBox(b.id.clone()));
            }
        }
        let mut refer = |w: &String, context: String| {
            if !wires.contains(w.as_str()) {
                out.push(Violation::UnknownWire { wire: w.clone(), context });
            }
        };
        for w in &self.inputs {
            refer(w, "input".into());
        }
        for w in &self.outputs {
            refer(w, "output".into());
        }
        for b in &self.graph.boxes {
            for w in b.dom.iter().chain(&b.cod) {
                refer(w, format!("box '{}'", b.id));
            }
        }
        for (w, n) in self.starts() {
            if n > 1 {
                out.push(Violation::StartPlace { wire: w.to_string(), starts: n });
            }
        }
        if let Err(DiagramError::Cycle(w)) = self.topological_order() {
            out.push(Violation::Cycle { wire: w });
        }
        out.extend(self.labeling_violations());
        out
    }

    fn labeling_violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        for w in &self.graph.wires {
            match self.labeling.wires.get(w) {
                None => out.push(Violation::Unlabeled { item: w.clone() }),
                Some(t) if !self.signature.has_wire(t) => {
                    out.push(Violation::UnknownLabel { item: w.clone(), label: t.clone() })
                }
                Some(_) => {}
            }
        }
        for b in &self.graph.boxes {
            let Some(label) = self.labeling.boxes.get(&b.id) else {
                out.push(Violation::Unlabeled { item: b.id.clone() });
                continue;
            };
            let Some(g) = self.signature.edge(label) else {
                out.push(Violation::UnknownLabel { item: b.id.clone(), label: label.clone() });
                continue;
            };
            let image = |ws: &[String]| -> Option<Vec<String>> { ws.iter().map(|w| self.labeling.wires.get(w).cloned()).collect() };
            for (side, ws, want) in [("domain", &b.dom, &g.dom), ("codomain", &b.cod, &g.cod)] {
                if let Some(got) = image(ws) {
                    if got != *want {
                        out.push(Violation::LabelMismatch {
                            boxid: b.id.clone(),
                            msg: format!("{side} [{}] does not match generator '{label}' [{}]", got.join(", "), want.join(", ")),
                        });
                    }
                }
            }
        }
        out
    }

    fn consumed(&self) -> BTreeSet<&str> {
        self.outputs.iter().chain(self.graph.boxes.iter().flat_map(|b| b.dom.iter())).map(String::as_str).collect()
    }

    /// Every box output must feed another box or the output leg.
    pub fn validate_markov(&self) -> Vec<Violation> {
        let consumed = self.consumed();
        self.graph
            .boxes
            .iter()
            .flat_map(|b| {
                b.cod
                    .iter()
                    .filter(|w| !consumed.contains(w.as_str()))
                    .map(|w| Violation::Dangling { boxid: b.id.clone(), wire: w.clone() })
            })
            .collect()
    }

    /// Whether the output leg is injective.
    pub fn is_causal_model(&self) -> bool {
        let mut seen = BTreeSet::new();
        self.outputs.iter().all(|w| seen.insert(w))
    }

    /// Deletes boxes whose outputs are all unconsumed until none remain.
    /// Returns the number of rounds that deleted something.
    pub fn collect_garbage(&mut self) -> usize {
        let mut rounds = 0;
        loop {
            let consumed: BTreeSet<String> = self.consumed().into_iter().map(str::to_string).collect();
            let before = self.graph.boxes.len();
            self.graph.boxes.retain(|b| b.cod.iter().any(|w| consumed.contains(w)));
            if self.graph.boxes.len() == before {
                break;
            }
            rounds += 1;
        }
        if rounds > 0 {
            let mut used: BTreeSet<String> = self.consumed().into_iter().map(str::to_string).collect();
            used.extend(self.inputs.iter().cloned());
            used.extend(self.graph.boxes.iter().flat_map(|b| b.cod.iter().cloned()));
            self.graph.wires.retain(|w| used.contains(w));
            let live: BTreeSet<&String> = self.graph.boxes.iter().map(|b| &b.id).collect();
            self.labeling.boxes.retain(|b, _| live.contains(b));
            let wires: BTreeSet<&String> = self.graph.wires.iter().collect();
            self.labeling.wires.retain(|w, _| wires.contains(w));
        }
        rounds
    }

    /// Renames ids of `other` that collide with ours by suffixing `#k`.
    fn freshen(&self, other: &Diagram) -> Diagram {
        let taken_w: BTreeSet<&String> = self.graph.wires.iter().collect();
        let taken_b: BTreeSet<&String> = self.graph.boxes.iter().map(|b| &b.id).collect();
        let fresh = |id: &String, taken: &BTreeSet<&String>, own: &dyn Fn(&String) -> bool| -> String {
            if !taken.contains(id) {
                return id.clone();
            }
            (2..)
                .map(|k| format!("{id}#{k}"))
                .find(|c| !taken.contains(c) && !own(c))
                .expect("unbounded suffixes")
        };
        let own_w = |c: &String| other.graph.has_wire(c);
        let own_b = |c: &String| other.graph.edge(c).is_some();
        let wmap: BTreeMap<&String, String> = other.graph.wires.iter().map(|w| (w, fresh(w, &taken_w, &own_w))).collect();
        let bmap: BTreeMap<&String, String> = other.graph.boxes.iter().map(|b| (&b.id, fresh(&b.id, &taken_b, &own_b))).collect();
        let rw = |w: &String| wmap.get(w).cloned().unwrap_or_else(|| w.clone());
        let rb = |b: &String| bmap.get(b).cloned().unwrap_or_else(|| b.clone());
        Diagram {
            signature: other.signature.clone(),
            graph: Hypergraph {
                wires: other.graph.wires.iter().map(rw).collect(),
                boxes: other
                    .graph
                    .boxes
                    .iter()
                    .map(|b| Edge { id: rb(&b.id), dom: b.dom.iter().map(rw).collect(), cod: b.cod.iter().map(rw).collect() })
                    .collect(),
            },
            labeling: HypMorphism {
                wires: other.labeling.wires.iter().map(|(w, t)| (rw(w), t.clone())).collect(),
                boxes: other.labeling.boxes.iter().map(|(b, g)| (rb(b), g.clone())).collect(),
            },
            inputs: other.inputs.iter().map(rw).collect(),
            outputs: other.outputs.iter().map(rw).collect(),
        }
    }

    fn same_signature(&self, other: &Diagram) -> Result<(), DiagramError> {
        if Arc::ptr_eq(&self.signature, &other.signature) || self.signature == other.signature {
            Ok(())
        } else {
            Err(DiagramError::SignatureMismatch)
        }
    }

    /// Disjoint union; input and output legs are concatenated.
    pub fn tensor(&self, other: &Diagram) -> Result<Diagram, DiagramError> {
        self.same_signature(other)?;
        let other = self.freshen(other);
        let mut out = self.clone();
        out.graph.wires.extend(other.graph.wires);
        out.graph.boxes.extend(other.graph.boxes);
        out.labeling.wires.extend(other.labeling.wires);
        out.labeling.boxes.extend(other.labeling.boxes);
        out.inputs.extend(other.inputs);
        out.outputs.extend(other.outputs);
        Ok(out)
    }

    /// Glues our outputs to `other`'s inputs. In Markov mode discarded boxes
    /// are then collected.
    pub fn compose(&self, other: &Diagram, mode: Mode) -> Result<Diagram, DiagramError> {
        self.same_signature(other)?;
        if self.outputs.len() != other.inputs.len() {
            return Err(DiagramError::Arity { left: self.outputs.len(), right: other.inputs.len() });
        }
        let other = self.freshen(other);
        let all: Vec<&String> = self.graph.wires.iter().chain(&other.graph.wires).collect();
        let index: BTreeMap<&String, usize> = all.iter().enumerate().map(|(i, w)| (*w, i)).collect();
        let mut uf = UnionFind::new(all.len());
        for (a, b) in self.outputs.iter().zip(&other.inputs) {
            uf.union(index[a], index[b]);
        }
        // each class is named by its first member
        let mut name: BTreeMap<usize, String> = BTreeMap::new();
        for (i, w) in all.iter().enumerate() {
            name.entry(uf.find(i)).or_insert_with(|| (*w).clone());
        }
        let rw = |w: &String| name[&uf.find_const(index[w])].clone();
        let mut wires = Vec::new();
        let mut seen = BTreeSet::new();
        for w in &all {
            let n = rw(w);
            if seen.insert(n.clone()) {
                wires.push(n);
            }
        }
        let mut labeling = self.labeling.clone();
        for (w, t) in &other.labeling.wires {
            labeling.wires.entry(rw(w)).or_insert_with(|| t.clone());
        }
        labeling.wires.retain(|w, _| seen.contains(w));
        labeling.boxes.extend(other.labeling.boxes.clone());
        let boxes = self
            .graph
            .boxes
            .iter()
            .chain(&other.graph.boxes)
            .map(|b| Edge { id: b.id.clone(), dom: b.dom.iter().map(rw).collect(), cod: b.cod.iter().map(rw).collect() })
            .collect();
        let mut out = Diagram {
            signature: self.signature.clone(),
            graph: Hypergraph { wires, boxes },
            labeling,
            inputs: self.inputs.iter().map(rw).collect(),
            outputs: other.outputs.iter().map(rw).collect(),
        };
        if mode == Mode::Markov {
            out.collect_garbage();
        }
        Ok(out)
    }

    /// Relabels boxes `b0, b1, ...` in topological order and wires `w0, ...`
    /// by first use (inputs, then box outputs in order, then the rest), so
    /// that isomorphic representatives built the same way compare equal.
    pub fn canonical(&self) -> Result<Diagram, DiagramError> {
        let order = self.topological_order()?;
        let bmap: BTreeMap<&str, String> = order.iter().enumerate().map(|(i, b)| (b.as_str(), format!("b{i}"))).collect();
        let edges: Vec<&Edge> = order.iter().map(|b| self.graph.edge(b).expect("ordered box exists")).collect();
        let mut wmap: BTreeMap<&str, String> = BTreeMap::new();
        let visit = self
            .inputs
            .iter()
            .chain(edges.iter().flat_map(|e| e.dom.iter().chain(&e.cod)))
            .chain(&self.outputs)
            .chain(&self.graph.wires);
        for w in visit {
            let next = format!("w{}", wmap.len());
            wmap.entry(w.as_str()).or_insert(next);
        }
        let rw = |w: &String| wmap[w.as_str()].clone();
        let mut wires: Vec<String> = self.graph.wires.iter().map(rw).collect();
        wires.sort_by_key(|w| w[1..].parse::<usize>().unwrap_or(usize::MAX));
        Ok(Diagram {
            signature: self.signature.clone(),
            graph: Hypergraph {
                wires,
                boxes: edges
                    .iter()
                    .map(|e| Edge { id: bmap[e.id.as_str()].clone(), dom: e.dom.iter().map(rw).collect(), cod: e.cod.iter().map(rw).collect() })
                    .collect(),
            },
            labeling: HypMorphism {
                wires: self.labeling.wires.iter().filter(|(w, _)| wmap.contains_key(w.as_str())).map(|(w, t)| (rw(w), t.clone())).collect(),
                boxes: self.labeling.boxes.iter().filter(|(b, _)| bmap.contains_key(b.as_str())).map(|(b, g)| (bmap[b.as_str()].clone(), g.clone())).collect(),
            },
            inputs: self.inputs.iter().map(rw).collect(),
            outputs: self.outputs.iter().map(rw).collect(),
        })
    }

    /// Graphviz rendering: boxes are nodes, wires are edges labeled by type.
    pub fn to_dot(&self) -> String {
        let mut s = String::from("digraph diagram {\n  rankdir=LR;\n  node [shape=box];\n");
        let q = |x: &str| format!("\"{}\"", x.replace('\\', "\\\\").replace('"', "\\\""));
        let mut boxes: Vec<&Edge> = self.graph.boxes.iter().collect();
        boxes.sort_by(|a, b| a.id.cmp(&b.id));
        for (i, _) in self.inputs.iter().enumerate() {
            let _ = writeln!(s, "  {} [shape=point];", q(&format!("in{i}")));
        }
        for b in &boxes {
            let label = self.labeling.boxes.get(&b.id).map(String::as_str).unwrap_or("?");
            let _ = writeln!(s, "  {} [label={}];", q(&b.id), q(&format!("{} : {label}", b.id)));
        }
        for (i, _) in self.outputs.iter().enumerate() {
            let _ = writeln!(s, "  {} [shape=point];", q(&format!("out{i}")));
        }
        let mut sources: BTreeMap<&str, Vec<String>> = BTreeMap::new();
        for (i, w) in self.inputs.iter().enumerate() {
            sources.entry(w.as_str()).or_default().push(format!("in{i}"));
        }
        for b in &boxes {
            for w in &b.cod {
                sources.entry(w.as_str()).or_default().push(b.id.clone());
            }
        }
        let mut sinks: Vec<(&str, String)> = Vec::new();
        for b in &boxes {
            for w in &b.dom {
                sinks.push((w.as_str(), b.id.clone()));
            }
        }
        for (i, w) in self.outputs.iter().enumerate() {
            sinks.push((w.as_str(), format!("out{i}")));
        }
        for (w, to) in sinks {
            let label = format!("{w} : {}", self.wire_type(w).unwrap_or("?"));
            for from in sources.get(w).into_iter().flatten() {
                let _ = writeln!(s, "  {} -> {} [label={}];", q(from), q(&to), q(&label));
            }
        }
        s.push_str("}\n");
        s
    }

    /// Boxes reachable from `roots` along wires, `roots` included.
    pub fn descendants(&self, roots: &BTreeSet<String>) -> BTreeSet<String> {
        let mut out: BTreeSet<String> = roots.clone();
        let mut queue: VecDeque<String> = roots.iter().cloned().collect();
        while let Some(b) = queue.pop_front() {
            let Some(e) = self.graph.edge(&b) else { continue };
            for next in &self.graph.boxes {
                if next.dom.iter().any(|w| e.cod.contains(w)) && out.insert(next.id.clone()) {
                    queue.push_back(next.id.clone());
                }
            }
        }
        out
    }
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect() }
    }

    fn find(&mut self, i: usize) -> usize {
        let root = self.find_const(i);
        let mut cur = i;
        while self.parent[cur] != root {
            let next = self.parent[cur];
            self.parent[cur] = root;
            cur = next;
        }
        root
    }

    fn find_const(&self, mut i: usize) -> usize {
        while self.parent[i] != i {
            i = self.parent[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // keep the smaller index as root so d1's wire names win
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}
