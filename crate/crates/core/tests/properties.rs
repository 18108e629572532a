mod common;

use std::collections::{BTreeMap, BTreeSet};

use common::*;
use jointkern::causal::{counterfactual, intervene, Intervention};
use jointkern::expr::DetMap;
use jointkern::freecat::{Diagram, Mode};
use jointkern::interpret::{evaluate, model_log_density};
use jointkern::kernel::{Composable, JointKernel, Structure, Trace};
use jointkern::model::Model;
use jointkern::primitives::{instantiate, Param, PrimitiveSpec};
use jointkern::space::{base_measure_mass, contains, cover_index, sigma_finite_cover, Interval, SetDescriptor, Space, Value};
use jointkern::weighted::{indicator, spw_check, Reference, WeightedJointKernel};
use proptest::prelude::*;
use rand::Rng;

fn space_strategy() -> impl Strategy<Value = Space> {
    let leaf = prop_oneof![
        (1u64..5).prop_map(Space::Finite),
        Just(Space::Countable),
        (1usize..4).prop_map(Space::Real),
        Just(Space::Unit),
    ];
    leaf.prop_recursive(3, 12, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Space::product(a, b)),
            (inner.clone(), inner).prop_map(|(a, b)| Space::coproduct(a, b)),
        ]
    })
}

fn random_point(r: &mut impl Rng, s: &Space) -> Value {
    match s {
        Space::Finite(k) => Value::Int(r.random_range(0..*k as i64)),
        Space::Countable => Value::Int(r.random_range(-50..50)),
        Space::Real(n) => Value::tuple_of((0..*n).map(|_| Value::Real(r.random_range(-40.0..40.0)))),
        Space::Unit => Value::Unit,
        Space::Product(a, b) => Value::tuple(random_point(r, a), random_point(r, b)),
        Space::Coproduct(a, b) => {
            if r.random_bool(0.5) {
                Value::inl(random_point(r, a))
            } else {
                Value::inr(random_point(r, b))
            }
        }
    }
}

fn random_set(r: &mut impl Rng, s: &Space) -> SetDescriptor {
    match s {
        Space::Real(n) => SetDescriptor::Box(
            (0..*n)
                .map(|_| {
                    let lo: f64 = r.random_range(-10.0..10.0);
                    Interval { lo, hi: lo + r.random_range(0.0..5.0), open_hi: r.random_bool(0.5) }
                })
                .collect(),
        ),
        Space::Product(a, b) => SetDescriptor::product(random_set(r, a), random_set(r, b)),
        Space::Coproduct(a, b) => SetDescriptor::coproduct(random_set(r, a), random_set(r, b)),
        _ => SetDescriptor::FinitePoints((0..r.random_range(0..5)).map(|_| random_point(r, s)).collect()),
    }
}

fn unbounded(s: &Space) -> usize {
    match s {
        Space::Countable => 1,
        Space::Real(n) => *n,
        Space::Product(a, b) | Space::Coproduct(a, b) => unbounded(a) + unbounded(b),
        _ => 0,
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    a == b || (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

fn table_kernels(seed: u64, sizes: &[u64]) -> (Vec<Table>, Vec<JointKernel>) {
    let mut r = rng(seed);
    let tables: Vec<Table> = sizes.windows(2).map(|w| Table::random(&mut r, w[0], w[1])).collect();
    let kernels = tables.iter().enumerate().map(|(i, t)| t.kernel(&format!("k{i}"))).collect();
    (tables, kernels)
}

fn pmf(k: &JointKernel, z: &Value) -> BTreeMap<Value, f64> {
    k.marginal_pmf_finite(z).unwrap()
}

fn table_row(t: &Table, x: usize) -> BTreeMap<Value, f64> {
    t.rows[x].iter().enumerate().filter(|(_, p)| **p > 0.0).map(|(y, p)| (Value::Int(y as i64), *p)).collect()
}

fn traces(k: &JointKernel, z: &Value) -> Vec<(Trace, f64)> {
    let mut out = Vec::new();
    k.enumerate_traces(z, |t, p| {
        out.push((t.clone(), p));
        Ok(())
    })
    .unwrap();
    out
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 200, ..ProptestConfig::default() })]

    #[test]
    fn product_and_coproduct_mass(a in space_strategy(), b in space_strategy(), seed in any::<u64>()) {
        let mut r = rng(seed);
        let (sa, sb) = (random_set(&mut r, &a), random_set(&mut r, &b));
        let (ma, mb) = (base_measure_mass(&a, &sa).unwrap(), base_measure_mass(&b, &sb).unwrap());
        let prod = base_measure_mass(&Space::product(a.clone(), b.clone()), &SetDescriptor::product(sa.clone(), sb.clone())).unwrap();
        let want = if ma == 0.0 || mb == 0.0 { 0.0 } else { ma * mb };
        prop_assert!(close(prod, want, 1e-12));
        let sum = base_measure_mass(&Space::coproduct(a, b), &SetDescriptor::coproduct(sa, sb)).unwrap();
        prop_assert_eq!(sum, ma + mb);
    }

    #[test]
    fn mass_is_additive_on_disjoint_pieces(k in 1u64..20, seed in any::<u64>(), dims in 1usize..4) {
        let mut r = rng(seed);
        let s = Space::Finite(k);
        let (left, right): (Vec<Value>, Vec<Value>) = (0..k as i64).map(Value::Int).partition(|_| r.random_bool(0.5));
        let whole = SetDescriptor::FinitePoints([left.clone(), right.clone()].concat());
        let parts = base_measure_mass(&s, &SetDescriptor::FinitePoints(left)).unwrap() + base_measure_mass(&s, &SetDescriptor::FinitePoints(right)).unwrap();
        prop_assert_eq!(base_measure_mass(&s, &whole).unwrap(), parts);

        let s = Space::Real(dims);
        let SetDescriptor::Box(ivs) = random_set(&mut r, &s) else { unreachable!() };
        let axis = r.random_range(0..dims);
        let cut = ivs[axis].lo + r.random::<f64>() * (ivs[axis].hi - ivs[axis].lo);
        let mut lo = ivs.clone();
        lo[axis] = Interval::half_open(ivs[axis].lo, cut);
        let mut hi = ivs.clone();
        hi[axis].lo = cut;
        let split = base_measure_mass(&s, &SetDescriptor::Box(lo)).unwrap() + base_measure_mass(&s, &SetDescriptor::Box(hi)).unwrap();
        prop_assert!(close(split, base_measure_mass(&s, &SetDescriptor::Box(ivs)).unwrap(), 1e-12));
    }

    #[test]
    fn cover_pieces_are_finite_and_cover(s in space_strategy().prop_filter("at most four unbounded coordinates", |s| unbounded(s) <= 4), seed in any::<u64>()) {
        let mut r = rng(seed);
        for _ in 0..5 {
            let v = random_point(&mut r, &s);
            let i = cover_index(&s, &v).expect("bounded points have an index");
            let piece = sigma_finite_cover(&s, i);
            prop_assert!(contains(&s, &piece, &v), "{} not in piece {}", v, i);
            prop_assert!(base_measure_mass(&s, &piece).unwrap().is_finite());
        }
        let j = r.random_range(0..10_000);
        prop_assert!(base_measure_mass(&s, &sigma_finite_cover(&s, j)).unwrap().is_finite());
    }

    #[test]
    fn unit_and_associativity_laws(seed in any::<u64>(), a in 1u64..4, b in 1u64..4, c in 1u64..4, d in 1u64..4) {
        let (_, ks) = table_kernels(seed, &[a, b, c, d]);
        for x in 0..a as i64 {
            let z = Value::Int(x);
            let k = &ks[0];
            let left = JointKernel::identity(Space::Finite(a)).compose(k).unwrap();
            let right = k.compose(&JointKernel::identity(Space::Finite(b))).unwrap();
            prop_assert!(max_abs_diff(&pmf(&left, &z), &pmf(k, &z)) <= 1e-12);
            prop_assert!(max_abs_diff(&pmf(&right, &z), &pmf(k, &z)) <= 1e-12);

            let ab_c = ks[0].compose(&ks[1]).unwrap().compose(&ks[2]).unwrap();
            let a_bc = ks[0].compose(&ks[1].compose(&ks[2]).unwrap()).unwrap();
            prop_assert_eq!(ab_c.box_ids(), a_bc.box_ids());
            prop_assert!(max_abs_diff(&pmf(&ab_c, &z), &pmf(&a_bc, &z)) <= 1e-12);
            for (t, p) in traces(&ab_c, &z) {
                prop_assert!(close(a_bc.joint_log_density(&z, &t).unwrap().exp(), p, 1e-12));
                prop_assert_eq!(ab_c.output(&z, &t).unwrap(), a_bc.output(&z, &t).unwrap());
            }
        }
    }

    #[test]
    fn comonoid_and_delete_naturality(seed in any::<u64>(), a in 1u64..4, b in 1u64..4) {
        let (_, ks) = table_kernels(seed, &[a, b]);
        let s = Space::Finite(b);
        let copy = JointKernel::structure(Structure::Copy, s.clone(), None);
        let delete = JointKernel::structure(Structure::Delete, s.clone(), None);
        let swap = JointKernel::structure(Structure::Swap, s.clone(), Some(s.clone()));
        let keep_first = copy.compose(&JointKernel::identity(s.clone()).tensor(&delete).unwrap()).unwrap();
        for x in 0..a as i64 {
            let z = Value::Int(x);
            let k = &ks[0];
            let base = pmf(k, &z);
            let kept: BTreeMap<Value, f64> = pmf(&k.compose(&keep_first).unwrap(), &z)
                .into_iter()
                .map(|(v, p)| match v { Value::Tuple(v, _) => (*v, p), other => (other, p) })
                .collect();
            prop_assert!(max_abs_diff(&kept, &base) <= 1e-12);
            let copied = k.compose(&copy).unwrap();
            let swapped = copied.compose(&swap).unwrap();
            prop_assert_eq!(pmf(&copied, &z), pmf(&swapped, &z));
            let deleted = pmf(&k.compose(&delete).unwrap(), &z);
            prop_assert_eq!(deleted.len(), 1);
            prop_assert!((deleted[&Value::Unit] - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn composition_matches_chapman_kolmogorov(seed in any::<u64>(), a in 1u64..4, b in 1u64..5, c in 1u64..4) {
        let (tables, ks) = table_kernels(seed, &[a, b, c]);
        let composite = ks[0].compose(&ks[1]).unwrap();
        let oracle = tables[0].then(&tables[1]);
        for x in 0..a as usize {
            prop_assert!(max_abs_diff(&pmf(&composite, &Value::Int(x as i64)), &table_row(&oracle, x)) <= 1e-12);
        }
    }

    #[test]
    fn joint_density_factorizes(seed in any::<u64>(), n in 1usize..6) {
        let mut r = rng(seed);
        let rm = RandomModel::random(&mut r, n);
        let m = rm.model();
        for vals in assignments(&rm.sizes) {
            let t = rm.trace(&vals);
            let want = rm.log_density(&vals);
            prop_assert_eq!(model_log_density(&m.diagram, &m.interp, &Value::Unit, &t).unwrap(), want);
            if want > f64::NEG_INFINITY {
                prop_assert_eq!(m.kernel.output(&Value::Unit, &t).unwrap(), rm.output_value(&vals, &rm.outputs));
            }
        }
        let oracle = rm.marginal(&rm.outputs, &BTreeMap::new());
        prop_assert!(max_abs_diff(&pmf(&m.kernel, &Value::Unit), &oracle) <= 1e-12);
    }
}

fn param_draw(r: &mut impl Rng, name: &str) -> PrimitiveSpec {
    let c = Param::Const;
    match name {
        "bernoulli" => PrimitiveSpec::Bernoulli { p: c(r.random_range(0.0..1.0)) },
        "categorical" => {
            let k = r.random_range(1..6);
            let t = Table::random(r, 1, k);
            PrimitiveSpec::Categorical { probs: t.rows[0].iter().map(|p| c(*p)).collect(), space: Space::Finite(k) }
        }
        "uniform01" => PrimitiveSpec::Uniform01,
        "uniform" => {
            let low = r.random_range(-5.0..5.0);
            PrimitiveSpec::Uniform { low: c(low), high: c(low + r.random_range(0.1..4.0)) }
        }
        "normal" => PrimitiveSpec::Normal { mean: c(r.random_range(-5.0..5.0)), std: c(r.random_range(0.1..3.0)) },
        "exponential" => PrimitiveSpec::Exponential { rate: c(r.random_range(0.1..5.0)) },
        "poisson" => PrimitiveSpec::Poisson { rate: c(r.random_range(0.1..30.0)) },
        _ => PrimitiveSpec::DiracCountable { point: c(r.random_range(-20..20) as f64) },
    }
}

const BUILTINS: [&str; 8] = ["bernoulli", "categorical", "uniform01", "uniform", "normal", "exponential", "poisson", "dirac_countable"];

fn sortable(v: &Value) -> f64 {
    match v {
        Value::Int(k) => *k as f64,
        Value::Real(x) => *x,
        other => panic!("not one-dimensional: {other}"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn pushforward_is_monotone(seed in any::<u64>()) {
        let mut r = rng(seed);
        for name in BUILTINS {
            let p = instantiate(&param_draw(&mut r, name)).unwrap();
            let mut us: Vec<f64> = (0..200).map(|_| r.random::<f64>()).collect();
            us.extend([0.0, 1.0]);
            us.sort_by(f64::total_cmp);
            let xs: Vec<f64> = us.iter().map(|u| sortable(&p.pushforward(&[*u], &Value::Unit).unwrap())).collect();
            // bernoulli outputs 1 iff u < p, so it runs downhill
            let ordered = |w: &[f64]| if name == "bernoulli" { w[0] >= w[1] } else { w[0] <= w[1] };
            prop_assert!(xs.windows(2).all(ordered), "{} is not monotone", name);
        }
    }

    #[test]
    fn abduction_inverts_pushforward(seed in any::<u64>()) {
        let mut r = rng(seed);
        for name in BUILTINS {
            let p = instantiate(&param_draw(&mut r, name)).unwrap();
            for _ in 0..50 {
                let m = p.pushforward(&[r.random::<f64>()], &Value::Unit).unwrap();
                if p.log_density(&Value::Unit, &m).unwrap() == f64::NEG_INFINITY {
                    continue;
                }
                let back = p.pushforward(&p.abduct(&Value::Unit, &m).unwrap(), &Value::Unit).unwrap();
                match (&m, &back) {
                    (Value::Real(a), Value::Real(b)) => prop_assert!(close(*a, *b, 1e-9), "{}: {} vs {}", name, a, b),
                    _ => prop_assert_eq!(&m, &back),
                }
            }
        }
    }
}

fn pair(seed: u64, max_boxes: usize) -> (Diagram, Diagram) {
    let mut r = rng(seed);
    let (n, m, k) = (r.random_range(0..3), r.random_range(0..4), r.random_range(0..3));
    (random_diagram(&mut r, n, m, max_boxes, "a"), random_diagram(&mut r, m, k, max_boxes, "b"))
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 1000, ..ProptestConfig::default() })]

    #[test]
    fn markov_composition_is_garbage_free(seed in any::<u64>()) {
        let (d1, d2) = pair(seed, 6);
        prop_assert!(d1.validate_markov().is_empty() && d2.validate_markov().is_empty());
        let glued = d1.compose(&d2, Mode::Cd).unwrap();
        prop_assert!(glued.validate_cd().is_empty());
        let c = d1.compose(&d2, Mode::Markov).unwrap();
        prop_assert!(c.validate_cd().is_empty(), "{:?}", c.validate_cd());
        prop_assert!(c.validate_markov().is_empty(), "{:?}", c.validate_markov());
        let live: BTreeSet<String> = c.box_ids().into_iter().collect();
        prop_assert_eq!(live, live_boxes(&glued));
        let mut again = c.clone();
        prop_assert_eq!(again.collect_garbage(), 0);
        prop_assert_eq!(again, c);
    }

    #[test]
    fn causal_models_compose(seed in any::<u64>()) {
        let (d1, d2) = pair(seed, 5);
        if d1.is_causal_model() && d2.is_causal_model() {
            prop_assert!(d1.compose(&d2, Mode::Markov).unwrap().is_causal_model());
        }
    }

    #[test]
    fn tensor_keeps_markov(seed in any::<u64>()) {
        let (d1, d2) = pair(seed, 5);
        let t = d1.tensor(&d2).unwrap();
        prop_assert!(t.validate_cd().is_empty() && t.validate_markov().is_empty());
        prop_assert_eq!(t.inputs.len(), d1.inputs.len() + d2.inputs.len());
        prop_assert_eq!(t.graph.boxes.len(), d1.graph.boxes.len() + d2.graph.boxes.len());
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 200, ..ProptestConfig::default() })]

    #[test]
    fn composition_is_associative_up_to_iso(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (n, m, k, l) = (r.random_range(0..3), r.random_range(0..3), r.random_range(0..3), r.random_range(0..3));
        let d1 = random_diagram(&mut r, n, m, 4, "a");
        let d2 = random_diagram(&mut r, m, k, 4, "b");
        let d3 = random_diagram(&mut r, k, l, 4, "c");
        for mode in [Mode::Cd, Mode::Markov] {
            let left = d1.compose(&d2, mode).unwrap().compose(&d3, mode).unwrap();
            let right = d1.compose(&d2.compose(&d3, mode).unwrap(), mode).unwrap();
            prop_assert_eq!(left.canonical().unwrap(), right.canonical().unwrap());
        }
    }

    #[test]
    fn evaluation_is_functorial(seed in any::<u64>()) {
        let (d1, d2) = pair(seed, 4);
        let (interp, _) = random_interpretation(&mut rng(seed ^ 1));
        let composite = d1.compose(&d2, Mode::Markov).unwrap();
        let whole = evaluate(&composite, &interp).unwrap();
        let staged = evaluate(&d1, &interp).unwrap().compose(&evaluate(&d2, &interp).unwrap()).unwrap();
        for z in Space::product_of(vec![Space::Finite(2); d1.inputs.len()]).points().unwrap() {
            prop_assert!(max_abs_diff(&pmf(&whole, &z), &pmf(&staged, &z)) <= 1e-12);
            if whole.box_ids() == staged.box_ids() {
                for (t, p) in traces(&staged, &z) {
                    prop_assert!(close(whole.joint_log_density(&z, &t).unwrap().exp(), p, 1e-12));
                }
            }
        }
    }

    #[test]
    fn evaluation_ignores_names(seed in any::<u64>()) {
        let (d, _) = pair(seed, 6);
        let (interp, _) = random_interpretation(&mut rng(seed ^ 2));
        let k = evaluate(&d, &interp).unwrap();
        let c = evaluate(&d.canonical().unwrap(), &interp).unwrap();
        for z in Space::product_of(vec![Space::Finite(2); d.inputs.len()]).points().unwrap() {
            prop_assert!(max_abs_diff(&pmf(&k, &z), &pmf(&c, &z)) <= 1e-12);
            let sorted = |k: &JointKernel| {
                let mut ps: Vec<f64> = traces(k, &z).into_iter().map(|(_, p)| p).collect();
                ps.sort_by(f64::total_cmp);
                ps
            };
            prop_assert_eq!(sorted(&k), sorted(&c));
        }
    }

    #[test]
    fn interventions_act_locally(seed in any::<u64>()) {
        let mut r = rng(seed);
        let mut rm = RandomModel::random(&mut r, 4);
        rm.outputs = (0..4).collect();
        let m = rm.model();
        let before = pmf(&m.kernel, &Value::Unit);
        for mask in 0u32..16 {
            let forced: BTreeMap<usize, i64> = (0..4).filter(|i| mask & (1 << i) != 0).map(|i| (i, r.random_range(0..rm.sizes[i] as i64))).collect();
            let iv: Intervention = forced.iter().map(|(i, v)| (format!("b{i}"), Some(Value::Int(*v)))).collect();
            let k = evaluate(&m.diagram, &intervene(&m.diagram, &m.interp, &iv).unwrap()).unwrap();
            let after = pmf(&k, &Value::Unit);
            prop_assert!(max_abs_diff(&after, &rm.marginal(&rm.outputs, &forced)) <= 1e-12);
            for (i, v) in &forced {
                let point = project(&after, &[*i]);
                prop_assert_eq!(point.len(), 1);
                prop_assert!((point[&Value::Int(*v)] - 1.0).abs() <= 1e-12);
            }
            let desc = rm.descendants(&forced.keys().copied().collect());
            let others: Vec<usize> = (0..4).filter(|i| !desc.contains(i)).collect();
            prop_assert!(max_abs_diff(&project(&after, &others), &project(&before, &others)) <= 1e-12);
        }
    }

    #[test]
    fn abduction_replays_every_trace(seed in any::<u64>(), n in 1usize..5) {
        let rm = RandomModel::random(&mut rng(seed), n);
        let m = rm.model();
        for (t, _) in traces(&m.kernel, &Value::Unit) {
            let u = m.kernel.abduct(&Value::Unit, &t).unwrap();
            let (replayed, x) = counterfactual(&m.diagram, &m.interp, &Intervention::new(), &u, &Value::Unit).unwrap();
            prop_assert_eq!(&replayed, &t);
            prop_assert_eq!(x, m.kernel.output(&Value::Unit, &t).unwrap());
        }
    }
}

/// Marginal over the components `idx` of a flat output tuple of four.
fn project(pmf: &BTreeMap<Value, f64>, idx: &[usize]) -> BTreeMap<Value, f64> {
    let mut out = BTreeMap::new();
    for (v, p) in pmf {
        let parts = v.untuple(4).unwrap();
        *out.entry(Value::tuple_of(idx.iter().map(|i| parts[*i].clone()))).or_insert(0.0) += p;
    }
    out
}

/// A closed table kernel with a random positive weight on its output.
fn weighted_table(r: &mut impl Rng, dom: u64, cod: u64, id: &str) -> WeightedJointKernel {
    let k = Table::random(r, dom, cod).kernel(id);
    let ws: Vec<String> = (0..cod).map(|_| format!("{:?}", r.random_range(0.1..3.0))).collect();
    let body = (0..cod as usize - 1).rev().fold(ws[cod as usize - 1].clone(), |acc, y| format!("if $0 < {} then {} else {acc}", y + 1, ws[y]));
    let w = DetMap::parse(&[k.residual(), k.dom().clone()], Space::Real(1), &body).unwrap();
    WeightedJointKernel::new(k, w).unwrap()
}

fn weighted_integrals(k: &WeightedJointKernel, z: &Value) -> Vec<f64> {
    let cod = k.cod().clone();
    cod.points().unwrap().iter().map(|p| k.enumerate_integral(z, &indicator(&cod, p).unwrap()).unwrap()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 100, ..ProptestConfig::default() })]

    #[test]
    fn weighted_kleisli_laws(seed in any::<u64>(), a in 1u64..4, b in 1u64..4, c in 1u64..4, d in 1u64..4) {
        let mut r = rng(seed);
        let (x, y, w) = (weighted_table(&mut r, a, b, "x"), weighted_table(&mut r, b, c, "y"), weighted_table(&mut r, c, d, "w"));
        let left = x.kleisli_compose(&y).unwrap().kleisli_compose(&w).unwrap();
        let right = x.kleisli_compose(&y.kleisli_compose(&w).unwrap()).unwrap();
        let unit = WeightedJointKernel::unweighted(JointKernel::identity(Space::Finite(a))).kleisli_compose(&x).unwrap();
        for z in 0..a as i64 {
            let z = Value::Int(z);
            for (t, _) in traces(left.base(), &z) {
                prop_assert!(close(left.unnormalized_log_density(&z, &t).unwrap(), right.unnormalized_log_density(&z, &t).unwrap(), 1e-12));
            }
            for (t, _) in traces(x.base(), &z) {
                prop_assert_eq!(unit.unnormalized_log_density(&z, &t).unwrap(), x.unnormalized_log_density(&z, &t).unwrap());
            }
            for (p, q) in weighted_integrals(&left, &z).iter().zip(weighted_integrals(&right, &z)) {
                prop_assert!(close(*p, q, 1e-12));
            }
        }
    }

    #[test]
    fn weighted_tensor_commutes(seed in any::<u64>(), a in 1u64..4, b in 1u64..4) {
        let mut r = rng(seed);
        let (x, y) = (weighted_table(&mut r, 1, a, "x"), weighted_table(&mut r, 1, b, "y"));
        let (xy, yx) = (x.tensor(&y).unwrap(), y.tensor(&x).unwrap());
        let z = Value::tuple(Value::Int(0), Value::Int(0));
        for (t, _) in traces(xy.base(), &z) {
            prop_assert_eq!(xy.weight(&z, &t).unwrap(), yx.weight(&z, &t).unwrap());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn weighted_kernels_pass_their_own_audit(seed in any::<u64>(), b in 1u64..4) {
        let mut r = rng(seed);
        let wk = weighted_table(&mut r, 1, b, "x").rename_boxes(&|_| "x".into()).unwrap();
        let closed = WeightedJointKernel::unweighted(JointKernel::lift_det(DetMap::constant(Space::Unit, Space::Finite(1), &Value::Int(0)).unwrap()))
            .kleisli_compose(&wk)
            .unwrap();
        let cod = closed.cod().clone();
        let tests: Vec<DetMap> = cod.points().unwrap().iter().map(|p| indicator(&cod, p).unwrap()).collect();
        let report = spw_check(&closed, &tests, &Reference::Enumerate, 20_000, seed).unwrap();
        prop_assert!(report.passed(), "{:?}", report.tests);
    }

    #[test]
    fn models_print_and_parse_back(seed in any::<u64>(), n in 1usize..6) {
        let m = RandomModel::random(&mut rng(seed), n).model();
        let again = Model::from_text(&m.print()).unwrap();
        prop_assert_eq!(&again.file, &m.file);
        prop_assert_eq!(again.diagram, m.diagram);
    }
}
