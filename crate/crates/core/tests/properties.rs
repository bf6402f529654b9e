use std::collections::HashMap;
use std::sync::Arc;

use proptest::prelude::*;

use nf_core::expr::Scalar;
use nf_core::oracle::Real;
use nf_core::parse::parse_expression;
use nf_core::tensor::{define_tensor, IndexExpression, Registry, Signature, Tensor, TensorRef, Variance};
use nf_core::{Coefficient, Expression, MathResult, Tower};

const VARS: [&str; 4] = ["x1", "x2", "y1", "y2"];
const ATOMS: [&str; 3] = ["1", "sqrt(y1^2 + y2^2)", "exp(x1*x2)"];

fn term() -> impl Strategy<Value = String> {
    (-4i64..=4, 1i64..=3, prop::collection::vec(0u32..3, 4), 0usize..3).prop_map(|(n, d, exps, atom)| {
        let mut s = format!("({n}/{d})");
        for (v, e) in VARS.iter().zip(exps) {
            if e > 0 {
                s.push_str(&format!("*{v}^{e}"));
            }
        }
        format!("{s}*{}", ATOMS[atom])
    })
}

fn poly_text() -> impl Strategy<Value = String> {
    prop::collection::vec(term(), 1..4).prop_map(|ts| ts.join(" + "))
}

/// Numerator over a nonvanishing denominator.
fn expr_text() -> impl Strategy<Value = String> {
    (poly_text(), prop::option::of(0usize..3)).prop_map(|(p, den)| match den {
        None => p,
        Some(0) => format!("({p})/(1 + y1^2)"),
        Some(1) => format!("({p})/(y2^2 + 2)"),
        Some(_) => format!("({p})/(x1^2*y1^2 + 3)"),
    })
}

/// A tower with both atoms declared, so independently parsed expressions
/// share it.
fn tower() -> Arc<Tower> {
    let base = Tower::new(2).unwrap();
    parse_expression(&ATOMS[1..].join("*"), &base).unwrap().tower().clone()
}

fn parse(t: &Arc<Tower>, s: &str) -> Expression {
    parse_expression(s, t).unwrap()
}

fn point() -> Vec<Real> {
    [(1, 3), (-2, 5), (3, 2), (-1, 7)].iter().map(|&(n, d)| Real::from_coeff(&Coefficient::new(n, d))).collect()
}

fn close(a: &Real, b: &Real) -> bool {
    let scale = a.abs().max(&b.abs()).max(&Real::from_i64(1));
    a.sub(b).abs().to_f64() <= 1e-40 * scale.to_f64()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn addition_and_subtraction_cancel(a in expr_text(), b in expr_text()) {
        let t = tower();
        let (a, b) = (parse(&t, &a), parse(&t, &b));
        prop_assert!(a.add(&b).unwrap().sub(&b).unwrap().sub(&a).unwrap().is_zero());
    }

    #[test]
    fn multiplication_commutes_and_divides(a in expr_text(), b in poly_text()) {
        let t = tower();
        let (a, b) = (parse(&t, &a), parse(&t, &b));
        prop_assume!(!b.is_zero());
        prop_assert!(a.mul(&b).unwrap().sub(&b.mul(&a).unwrap()).unwrap().is_zero());
        prop_assert!(a.mul(&b).unwrap().div(&b).unwrap().sub(&a).unwrap().is_zero());
    }

    #[test]
    fn leibniz_rule(a in expr_text(), b in expr_text(), v in 0usize..4) {
        let t = tower();
        let (a, b) = (parse(&t, &a), parse(&t, &b));
        let var = if v < 2 { t.x(v) } else { t.y(v - 2) };
        let lhs = a.mul(&b).unwrap().differentiate(var).unwrap();
        let rhs = a.differentiate(var).unwrap().mul(&b).unwrap()
            .add(&a.mul(&b.differentiate(var).unwrap()).unwrap()).unwrap();
        prop_assert!(lhs.sub(&rhs).unwrap().is_zero());
    }

    #[test]
    fn render_parses_back(a in expr_text()) {
        let t = tower();
        let e = parse(&t, &a);
        let back = parse_expression(&e.render(), e.tower()).unwrap();
        prop_assert!(back.sub(&e).unwrap().is_zero(), "{} -> {}", a, e.render());
    }

    #[test]
    fn evaluation_is_a_ring_map(a in expr_text(), b in expr_text()) {
        let t = tower();
        let (a, b) = (parse(&t, &a), parse(&t, &b));
        let p = point();
        let ev = |e: &Expression| e.evaluate_with(&p, &|_| None).unwrap();
        prop_assert!(close(&ev(&a.mul(&b).unwrap()), &ev(&a).mul(&ev(&b))));
        prop_assert!(close(&ev(&a.add(&b).unwrap()), &ev(&a).add(&ev(&b))));
    }
}

struct Tensors(HashMap<String, Tensor>);

impl Registry for Tensors {
    fn lookup(&self, name: &str) -> MathResult<Option<Tensor>> {
        Ok(self.0.get(name).cloned())
    }
}

fn r(name: &str, ix: &[(&str, Variance)]) -> TensorRef {
    TensorRef { name: name.into(), indices: ix.iter().map(|(l, v)| (l.to_string(), *v)).collect() }
}

fn matrix(t: &Arc<Tower>, entries: &[String], sig: Signature) -> Tensor {
    let mut m = Tensor::zero("A", sig, t);
    for (k, s) in entries.iter().enumerate() {
        m.set(vec![k / 2, k % 2], parse(t, s)).unwrap();
    }
    m
}

use Variance::{Down, Up};

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn symmetrization_is_symmetric(entries in prop::collection::vec(poly_text(), 4)) {
        let t = tower();
        let reg = Tensors(HashMap::from([("A".to_string(), matrix(&t, &entries, Signature(vec![Down, Down])))]));
        let half = Coefficient::new(1, 2);
        let sym = IndexExpression { terms: vec![
            (half.clone(), vec![r("A", &[("i", Down), ("j", Down)])]),
            (half.clone(), vec![r("A", &[("j", Down), ("i", Down)])]),
        ]};
        let anti = IndexExpression { terms: vec![
            (half.clone(), vec![r("A", &[("i", Down), ("j", Down)])]),
            (-half, vec![r("A", &[("j", Down), ("i", Down)])]),
        ]};
        let target = vec![("i".to_string(), Down), ("j".to_string(), Down)];
        let s = define_tensor("S", &target, &sym, &reg, &t).unwrap();
        let a = define_tensor("K", &target, &anti, &reg, &t).unwrap();
        prop_assert!(s.symmetric_in(0, 1).unwrap());
        prop_assert!(a.antisymmetric_in(0, 1).unwrap());
        for i in 0..2 {
            for j in 0..2 {
                let sum = s.get(&[i, j]).add(&a.get(&[i, j])).unwrap();
                prop_assert!(sum.sub(&reg.0["A"].get(&[i, j])).unwrap().is_zero());
            }
        }
    }

    #[test]
    fn contraction_matches_explicit_sum(
        entries in prop::collection::vec(poly_text(), 4),
        v in prop::collection::vec(poly_text(), 2),
    ) {
        let t = tower();
        let a = matrix(&t, &entries, Signature(vec![Up, Down]));
        let mut vec_t = Tensor::zero("V", Signature(vec![Up]), &t);
        for (k, s) in v.iter().enumerate() {
            vec_t.set(vec![k], parse(&t, s)).unwrap();
        }
        let reg = Tensors(HashMap::from([("A".to_string(), a.clone()), ("V".to_string(), vec_t.clone())]));
        let rhs = IndexExpression { terms: vec![(Coefficient::one(), vec![
            r("A", &[("i", Up), ("j", Down)]),
            r("V", &[("j", Up)]),
        ])]};
        let w = define_tensor("W", &[("i".to_string(), Up)], &rhs, &reg, &t).unwrap();
        for i in 0..2 {
            let mut acc = Expression::zero(&t);
            for j in 0..2 {
                acc = acc.add(&a.get(&[i, j]).mul(&vec_t.get(&[j])).unwrap()).unwrap();
            }
            prop_assert!(w.get(&[i]).sub(&acc).unwrap().is_zero());
        }
    }
}
