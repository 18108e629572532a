//! Random finite kernels, models and diagrams, plus oracles that recompute
//! their distributions by direct enumeration over probability tables.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use jointkern::expr::DetMap;
use jointkern::freecat::{Diagram, Edge, HypMorphism, Hypergraph, Mode, Signature};
use jointkern::interpret::Interpretation;
use jointkern::kernel::{JointKernel, Trace};
use jointkern::model::Model;
use jointkern::primitives::{instantiate, Param, PrimitiveSpec};
use jointkern::space::{Space, Value};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A conditional probability table `rows[parent index][value]`.
#[derive(Debug, Clone)]
pub struct Table {
    pub dom: u64,
    pub cod: u64,
    pub rows: Vec<Vec<f64>>,
}

/// Nested `if` selecting `cells[index]`, where `index` is the mixed-radix
/// number of the variables `vars` with sizes `sizes` (first is most
/// significant).
fn lookup(vars: &[String], sizes: &[u64], cells: &[String]) -> String {
    match vars.split_first() {
        None => cells[0].clone(),
        Some((v, rest)) => {
            let stride = cells.len() / sizes[0] as usize;
            let mut out = lookup(rest, &sizes[1..], &cells[(sizes[0] as usize - 1) * stride..]);
            for k in (0..sizes[0] as usize - 1).rev() {
                out = format!("if {v} < {} then {} else {out}", k + 1, lookup(rest, &sizes[1..], &cells[k * stride..(k + 1) * stride]));
            }
            out
        }
    }
}

impl Table {
    /// Rows of small-integer weights, normalized; some entries are zero.
    pub fn random(r: &mut impl Rng, dom: u64, cod: u64) -> Self {
        let rows = (0..dom)
            .map(|_| loop {
                let w: Vec<u32> = (0..cod).map(|_| r.random_range(0..5)).collect();
                let total: u32 = w.iter().sum();
                if total > 0 {
                    break w.iter().map(|x| *x as f64 / total as f64).collect();
                }
            })
            .collect();
        Table { dom, cod, rows }
    }

    /// Chapman–Kolmogorov composite: first `self`, then `next`.
    pub fn then(&self, next: &Table) -> Table {
        assert_eq!(self.cod, next.dom);
        let rows = self
            .rows
            .iter()
            .map(|row| (0..next.cod as usize).map(|y| row.iter().enumerate().map(|(m, p)| p * next.rows[m][y]).sum()).collect())
            .collect();
        Table { dom: self.dom, cod: next.cod, rows }
    }

    /// Probability expressions, one per value, over input variables.
    pub fn prob_exprs(&self, vars: &[String], sizes: &[u64]) -> Vec<String> {
        (0..self.cod as usize)
            .map(|y| {
                let cells: Vec<String> = self.rows.iter().map(|row| format!("{:?}", row[y])).collect();
                lookup(vars, sizes, &cells)
            })
            .collect()
    }

    /// One categorical box `id` from the product of `inputs` to `Finite(cod)`.
    pub fn kernel_over(&self, inputs: &[u64], id: &str) -> JointKernel {
        assert_eq!(inputs.iter().product::<u64>(), self.dom);
        let spec = PrimitiveSpec::Categorical { probs: vec![Param::Wired; self.cod as usize], space: Space::Finite(self.cod) };
        let prim = JointKernel::from_primitive(instantiate(&spec).unwrap(), id);
        let vars: Vec<String> = (0..inputs.len()).map(|i| format!("${i}")).collect();
        let exprs = self.prob_exprs(&vars, inputs);
        let body = exprs.iter().skip(1).fold(exprs[0].clone(), |acc, e| format!("({acc}, {e})"));
        let spaces: Vec<Space> = inputs.iter().map(|k| Space::Finite(*k)).collect();
        let pre = DetMap::parse(&spaces, prim.dom().clone(), &body).unwrap();
        JointKernel::lift_det(pre).compose(&prim).unwrap()
    }

    pub fn kernel(&self, id: &str) -> JointKernel {
        self.kernel_over(&[self.dom], id)
    }
}

/// Index of a joint assignment of variables with the given sizes.
pub fn mixed_radix(values: &[i64], sizes: &[u64]) -> usize {
    values.iter().zip(sizes).fold(0, |acc, (v, s)| acc * *s as usize + *v as usize)
}

/// Every assignment of variables with the given sizes, in mixed-radix order.
pub fn assignments(sizes: &[u64]) -> Vec<Vec<i64>> {
    let mut out = vec![vec![]];
    for s in sizes {
        out = out.into_iter().flat_map(|a| (0..*s as i64).map(move |v| [a.clone(), vec![v]].concat())).collect();
    }
    out
}

/// A closed causal model: box `b{i}` draws wire `w{i}` from a table
/// conditioned on earlier wires.
#[derive(Debug, Clone)]
pub struct RandomModel {
    pub sizes: Vec<u64>,
    pub parents: Vec<Vec<usize>>,
    pub tables: Vec<Table>,
    pub outputs: Vec<usize>,
}

impl RandomModel {
    pub fn random(r: &mut impl Rng, n: usize) -> Self {
        let sizes: Vec<u64> = (0..n).map(|_| r.random_range(2..=3)).collect();
        let mut parents = Vec::new();
        let mut tables = Vec::new();
        for i in 0..n {
            let mut ps: Vec<usize> = (0..i).filter(|_| r.random_bool(0.5)).collect();
            ps.truncate(2);
            let dom = ps.iter().map(|p| sizes[*p]).product();
            tables.push(Table::random(r, dom, sizes[i]));
            parents.push(ps);
        }
        let consumed: BTreeSet<usize> = parents.iter().flatten().copied().collect();
        let outputs = (0..n).filter(|i| !consumed.contains(i) || r.random_bool(0.3)).collect();
        RandomModel { sizes, parents, tables, outputs }
    }

    pub fn n(&self) -> usize {
        self.sizes.len()
    }

    pub fn to_json(&self) -> String {
        let mut sig_wires = serde_json::Map::new();
        let mut sig_boxes = serde_json::Map::new();
        let mut wires = serde_json::Map::new();
        let mut boxes = Vec::new();
        let mut interp = serde_json::Map::new();
        for i in 0..self.n() {
            sig_wires.insert(format!("T{i}"), json!({"finite": self.sizes[i]}));
            let dom_types: Vec<String> = self.parents[i].iter().map(|p| format!("T{p}")).collect();
            sig_boxes.insert(format!("f{i}"), json!({"dom": dom_types, "cod": [format!("T{i}")]}));
            wires.insert(format!("w{i}"), json!(format!("T{i}")));
            let dom: Vec<String> = self.parents[i].iter().map(|p| format!("w{p}")).collect();
            boxes.push(json!({"id": format!("b{i}"), "label": format!("f{i}"), "dom": dom, "cod": [format!("w{i}")]}));
            let vars: Vec<String> = (1..=self.parents[i].len()).map(|k| format!("${k}")).collect();
            let psizes: Vec<u64> = self.parents[i].iter().map(|p| self.sizes[*p]).collect();
            let probs = self.tables[i].prob_exprs(&vars, &psizes);
            interp.insert(format!("f{i}"), json!({"primitive": "categorical", "params": {"probs": probs}}));
        }
        let outputs: Vec<String> = self.outputs.iter().map(|o| format!("w{o}")).collect();
        serde_json::to_string_pretty(&json!({
            "version": 1,
            "signature": {"wires": sig_wires, "boxes": sig_boxes},
            "diagram": {"wires": wires, "boxes": boxes, "inputs": [], "outputs": outputs},
            "interpretation": interp,
        }))
        .unwrap()
    }

    pub fn model(&self) -> Model {
        Model::from_text(&self.to_json()).unwrap()
    }

    fn factor(&self, i: usize, vals: &[i64]) -> f64 {
        let pv: Vec<i64> = self.parents[i].iter().map(|p| vals[*p]).collect();
        let psizes: Vec<u64> = self.parents[i].iter().map(|p| self.sizes[*p]).collect();
        self.tables[i].rows[mixed_radix(&pv, &psizes)][vals[i] as usize]
    }

    /// Sum of per-box log table entries.
    pub fn log_density(&self, vals: &[i64]) -> f64 {
        (0..self.n()).map(|i| self.factor(i, vals).ln()).sum()
    }

    pub fn trace(&self, vals: &[i64]) -> Trace {
        let mut t = Trace::new();
        for (i, v) in vals.iter().enumerate() {
            t.insert(format!("b{i}"), Value::Int(*v));
        }
        t
    }

    pub fn output_value(&self, vals: &[i64], wires: &[usize]) -> Value {
        Value::tuple_of(wires.iter().map(|w| Value::Int(vals[*w])))
    }

    /// Marginal over `wires` with the listed boxes forced to constants.
    pub fn marginal(&self, wires: &[usize], forced: &BTreeMap<usize, i64>) -> BTreeMap<Value, f64> {
        let mut out = BTreeMap::new();
        for vals in assignments(&self.sizes) {
            let mut p = 1.0;
            for i in 0..self.n() {
                p *= match forced.get(&i) {
                    Some(v) => (vals[i] == *v) as u8 as f64,
                    None => self.factor(i, &vals),
                };
            }
            if p > 0.0 {
                *out.entry(self.output_value(&vals, wires)).or_insert(0.0) += p;
            }
        }
        out
    }

    /// Boxes with a directed path from any of `roots`, including them.
    pub fn descendants(&self, roots: &BTreeSet<usize>) -> BTreeSet<usize> {
        let mut out = roots.clone();
        for i in 0..self.n() {
            if self.parents[i].iter().any(|p| out.contains(p)) {
                out.insert(i);
            }
        }
        out
    }
}

pub fn max_abs_diff(a: &BTreeMap<Value, f64>, b: &BTreeMap<Value, f64>) -> f64 {
    let keys: BTreeSet<&Value> = a.keys().chain(b.keys()).collect();
    keys.into_iter().map(|k| (a.get(k).unwrap_or(&0.0) - b.get(k).unwrap_or(&0.0)).abs()).fold(0.0, f64::max)
}

/// The signature `A` with generators `g{i}: A^i -> A` for `i` in 0..=2.
pub fn one_sorted_signature() -> Arc<Signature> {
    Arc::new(Hypergraph {
        wires: vec!["A".into()],
        boxes: (0..=2).map(|i| Edge::new(format!("g{i}"), vec!["A"; i], ["A"])).collect(),
    })
}

/// A valid Markov diagram `A^n_in -> A^n_out` over [`one_sorted_signature`]
/// with box ids `{prefix}{k}`. Boxes that reach no output are collected.
pub fn random_diagram(r: &mut impl Rng, n_in: usize, n_out: usize, max_boxes: usize, prefix: &str) -> Diagram {
    let signature = one_sorted_signature();
    let mut wires: Vec<String> = (0..n_in).map(|k| format!("{prefix}x{k}")).collect();
    let mut boxes = Vec::new();
    let mut labeling = HypMorphism::default();
    let n_boxes = r.random_range(0..=max_boxes);
    for k in 0..n_boxes {
        let arity = if wires.is_empty() { 0 } else { r.random_range(0..=2) };
        let dom: Vec<String> = (0..arity).map(|_| wires[r.random_range(0..wires.len())].clone()).collect();
        let out = format!("{prefix}w{k}");
        let id = format!("{prefix}{k}");
        labeling.boxes.insert(id.clone(), format!("g{arity}"));
        boxes.push(Edge::new(id, dom, [out.clone()]));
        wires.push(out);
    }
    for w in &wires {
        labeling.wires.insert(w.clone(), "A".into());
    }
    let outputs = if wires.is_empty() {
        vec![]
    } else {
        (0..n_out).map(|_| wires[r.random_range(0..wires.len())].clone()).collect()
    };
    let inputs = wires[..n_in].to_vec();
    let d = Diagram { signature: signature.clone(), graph: Hypergraph { wires, boxes }, labeling, inputs, outputs };
    // an input-free diagram with outputs needs at least one producer
    if n_in == 0 && n_out > 0 && d.graph.boxes.is_empty() {
        return random_diagram(r, n_in, n_out, max_boxes.max(1), prefix);
    }
    let mut d = d.compose(&Diagram::identity(signature, &vec!["A"; n_out]), Mode::Markov).unwrap();
    d.collect_garbage();
    d
}

/// Boxes of `d` from which some output wire is reachable.
pub fn live_boxes(d: &Diagram) -> BTreeSet<String> {
    let mut needed: BTreeSet<&str> = d.outputs.iter().map(String::as_str).collect();
    let mut live = BTreeSet::new();
    loop {
        let before = live.len();
        for b in &d.graph.boxes {
            if b.cod.iter().any(|w| needed.contains(w.as_str())) && live.insert(b.id.clone()) {
                needed.extend(b.dom.iter().map(String::as_str));
            }
        }
        if live.len() == before {
            return live;
        }
    }
}

/// Random tables for the generators of [`one_sorted_signature`], with
/// `A = Finite(2)`.
pub fn random_interpretation(r: &mut impl Rng) -> (Interpretation, Vec<Table>) {
    let tables: Vec<Table> = (0..=2u32).map(|i| Table::random(r, 2u64.pow(i), 2)).collect();
    let mut interp = Interpretation::new().wire("A", Space::Finite(2));
    for (i, t) in tables.iter().enumerate() {
        interp = interp.kernel(format!("g{i}"), t.kernel_over(&vec![2; i], "g"));
    }
    (interp, tables)
}
