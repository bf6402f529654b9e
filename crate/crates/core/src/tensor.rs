//! Indexed tensors with Einstein-summation definitions.
//!
//! Components are stored sparsely (absent = zero) under positional 0-based
//! multi-indices. Signed-index notation follows the package convention:
//! `N[i,-j]` has one contravariant and one covariant slot.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde_json::{json, Value};

use crate::error::{MathError, MathResult};
use crate::expr::Expression;
use crate::tower::Tower;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variance {
    Up,
    Down,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Signature(pub Vec<Variance>);

impl Signature {
    pub fn parse(s: &str) -> Signature {
        Signature(s.chars().map(|c| if c == 'u' { Variance::Up } else { Variance::Down }).collect())
    }

    pub fn rank(&self) -> usize {
        self.0.len()
    }

    /// Letter pattern such as `i,-j,-k` used in serialized keys.
    pub fn pattern(&self) -> String {
        const LETTERS: &[u8] = b"ijklmnpqrs";
        self.0
            .iter()
            .enumerate()
            .map(|(k, v)| {
                let l = LETTERS[k % LETTERS.len()] as char;
                match v {
                    Variance::Up => l.to_string(),
                    Variance::Down => format!("-{l}"),
                }
            })
            .collect::<Vec<_>>()
            .join(",")
    }
}

pub type Index = Vec<usize>;

#[derive(Clone)]
pub struct Tensor {
    pub name: String,
    pub signature: Signature,
    pub dim: usize,
    tower: Arc<Tower>,
    components: BTreeMap<Index, Expression>,
}

/// Every multi-index of the given rank over `0..dim`, lexicographically.
pub fn all_indices(rank: usize, dim: usize) -> Vec<Index> {
    let mut out = vec![Vec::new()];
    for _ in 0..rank {
        out = out
            .into_iter()
            .flat_map(|p| {
                (0..dim).map(move |i| {
                    let mut q = p.clone();
                    q.push(i);
                    q
                })
            })
            .collect();
    }
    out
}

impl Tensor {
    pub fn zero(name: &str, signature: Signature, tower: &Arc<Tower>) -> Tensor {
        Tensor { name: name.into(), signature, dim: tower.dim(), tower: tower.clone(), components: BTreeMap::new() }
    }

    /// Builds a tensor by evaluating `f` at every index, in parallel.
    pub fn from_fn<F>(name: &str, signature: Signature, tower: &Arc<Tower>, f: F) -> MathResult<Tensor>
    where
        F: Fn(&[usize]) -> MathResult<Expression> + Sync,
    {
        let idx = all_indices(signature.rank(), tower.dim());
        let vals: Vec<(Index, Expression)> = idx
            .into_par_iter()
            .map(|i| f(&i).map(|e| (i, e)))
            .collect::<MathResult<Vec<_>>>()?;
        let mut t = Tensor::zero(name, signature, tower);
        for (i, e) in vals {
            t.set(i, e)?;
        }
        Ok(t)
    }

    pub fn rank(&self) -> usize {
        self.signature.rank()
    }

    pub fn tower(&self) -> &Arc<Tower> {
        &self.tower
    }

    pub fn get(&self, idx: &[usize]) -> Expression {
        self.components.get(idx).cloned().unwrap_or_else(|| Expression::zero(&self.tower))
    }

    pub fn get_ref(&self, idx: &[usize]) -> Option<&Expression> {
        self.components.get(idx)
    }

    pub fn set(&mut self, idx: Index, e: Expression) -> MathResult<()> {
        if idx.len() != self.rank() || idx.iter().any(|&i| i >= self.dim) {
            return Err(MathError::Tensor(format!("index {idx:?} invalid for {}", self.name)));
        }
        self.tower = Tower::join(&self.tower, e.tower())?;
        if e.is_zero() {
            self.components.remove(&idx);
        } else {
            self.components.insert(idx, e);
        }
        Ok(())
    }

    /// Nonzero components in lexicographic index order.
    pub fn nonzero(&self) -> impl Iterator<Item = (&Index, &Expression)> {
        self.components.iter()
    }

    pub fn nonzero_count(&self) -> usize {
        self.components.len()
    }

    pub fn is_zero(&self) -> bool {
        self.components.is_empty()
    }

    pub fn renamed(mut self, name: &str) -> Tensor {
        self.name = name.into();
        self
    }

    pub fn map<F>(&self, name: &str, f: F) -> MathResult<Tensor>
    where
        F: Fn(&Expression) -> MathResult<Expression> + Sync,
    {
        let vals: Vec<(Index, Expression)> = self
            .components
            .par_iter()
            .map(|(i, e)| f(e).map(|v| (i.clone(), v)))
            .collect::<MathResult<Vec<_>>>()?;
        let mut t = Tensor::zero(name, self.signature.clone(), &self.tower);
        for (i, e) in vals {
            t.set(i, e)?;
        }
        Ok(t)
    }

    fn with_extra_down(&self, name: &str, op: impl Fn(&Expression, usize) -> MathResult<Expression> + Sync) -> MathResult<Tensor> {
        let mut sig = self.signature.clone();
        sig.0.push(Variance::Down);
        let n = self.dim;
        let jobs: Vec<(Index, usize)> = self.components.keys().flat_map(|i| (0..n).map(move |k| (i.clone(), k))).collect();
        let vals: Vec<(Index, Expression)> = jobs
            .into_par_iter()
            .map(|(i, k)| {
                let e = op(&self.components[&i], k)?;
                let mut j = i.clone();
                j.push(k);
                Ok((j, e))
            })
            .collect::<MathResult<Vec<_>>>()?;
        let mut t = Tensor::zero(name, sig, &self.tower);
        for (i, e) in vals {
            t.set(i, e)?;
        }
        Ok(t)
    }

    /// `∂ₖ` of every component (new last covariant slot).
    pub fn tdiff(&self, name: &str) -> MathResult<Tensor> {
        let t = self.tower.clone();
        self.with_extra_down(name, |e, k| e.differentiate(t.x(k)))
    }

    /// `∂̇ₖ` of every component (new last covariant slot).
    pub fn tddiff(&self, name: &str) -> MathResult<Tensor> {
        let t = self.tower.clone();
        self.with_extra_down(name, |e, k| e.differentiate(t.y(k)))
    }

    /// `δₖ = ∂ₖ − N^m_k ∂̇ₘ` applied to every component.
    pub fn hdiff(&self, name: &str, n: &Tensor) -> MathResult<Tensor> {
        self.with_extra_down(name, |e, k| hderiv(e, k, n))
    }

    /// Contracts slot `slot` with the metric (`lower`, needs g) or the
    /// inverse metric (raise, needs g⁻¹), flipping its variance.
    pub fn raise_lower(&self, slot: usize, metric: &Tensor, name: &str) -> MathResult<Tensor> {
        if slot >= self.rank() {
            return Err(MathError::Tensor(format!("slot {slot} out of range for rank {}", self.rank())));
        }
        let from = self.signature.0[slot];
        let need = if from == Variance::Up { Variance::Down } else { Variance::Up };
        if metric.signature.0 != vec![need, need] {
            return Err(MathError::Tensor("metric variance does not match the requested direction".into()));
        }
        let mut sig = self.signature.clone();
        sig.0[slot] = need;
        let tw = Tower::join(&self.tower, &metric.tower)?;
        Tensor::from_fn(name, sig, &tw, |idx| {
            let mut acc = Expression::zero(&tw);
            for m in 0..self.dim {
                let g = metric.get(&[idx[slot], m]);
                if g.is_zero() {
                    continue;
                }
                let mut j = idx.to_vec();
                j[slot] = m;
                if let Some(c) = self.get_ref(&j) {
                    acc = acc.add(&g.mul(c)?)?;
                }
            }
            Ok(acc)
        })
    }

    /// Checks `t(σ(idx)) = sign · t(idx)` for every index, where σ permutes
    /// slots of equal variance.
    pub fn check_symmetry(&self, perm: &[usize], sign: i64) -> MathResult<bool> {
        if perm.len() != self.rank() {
            return Err(MathError::Tensor("permutation length differs from rank".into()));
        }
        let mut seen = vec![false; perm.len()];
        for (a, &b) in perm.iter().enumerate() {
            if b >= perm.len() || seen[b] || self.signature.0[a] != self.signature.0[b] {
                return Err(MathError::Tensor("permutation must permute slots of equal variance".into()));
            }
            seen[b] = true;
        }
        let s = crate::coeff::Coefficient::from_int(sign);
        for idx in all_indices(self.rank(), self.dim) {
            let p: Index = perm.iter().map(|&k| idx[k]).collect();
            let d = self.get(&p).sub(&self.get(&idx).scale(&s))?;
            if !d.is_zero() {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Antisymmetry check for a slot pair.
    pub fn antisymmetric_in(&self, a: usize, b: usize) -> MathResult<bool> {
        let mut p: Vec<usize> = (0..self.rank()).collect();
        p.swap(a, b);
        self.check_symmetry(&p, -1)
    }

    pub fn symmetric_in(&self, a: usize, b: usize) -> MathResult<bool> {
        let mut p: Vec<usize> = (0..self.rank()).collect();
        p.swap(a, b);
        self.check_symmetry(&p, 1)
    }

    fn key_label(&self, idx: &[usize]) -> (String, String) {
        let mut up = String::new();
        let mut down = String::new();
        for (k, i) in idx.iter().enumerate() {
            let s = format!("x{}", i + 1);
            match self.signature.0[k] {
                Variance::Up => up.push_str(&s),
                Variance::Down => down.push_str(&s),
            }
        }
        (up, down)
    }

    /// `NAME^{up}_{down} = expr` lines for nonzero components.
    pub fn show(&self) -> Vec<String> {
        self.components
            .iter()
            .map(|(idx, e)| {
                let (up, down) = self.key_label(idx);
                let mut s = self.name.clone();
                if !up.is_empty() {
                    s.push_str(&format!("^{{{up}}}"));
                }
                if !down.is_empty() {
                    s.push_str(&format!("_{{{down}}}"));
                }
                format!("{s} = {e}")
            })
            .collect()
    }

    pub fn to_json(&self) -> Value {
        let pattern = self.signature.pattern();
        let mut comps = serde_json::Map::new();
        for (idx, e) in &self.components {
            let key = format!("{pattern}={}", idx.iter().map(|i| (i + 1).to_string()).collect::<Vec<_>>().join(","));
            comps.insert(key, Value::String(e.render()));
        }
        json!({ "name": self.name, "signature": pattern, "components": comps })
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} {}", self.name, self.signature.pattern())?;
        for l in self.show() {
            writeln!(f, "  {l}")?;
        }
        Ok(())
    }
}

/// `δₖ f = ∂ₖ f − N^m_k ∂̇ₘ f` for a scalar.
pub fn hderiv(f: &Expression, k: usize, n: &Tensor) -> MathResult<Expression> {
    let t = f.tower().clone();
    let mut acc = f.differentiate(t.x(k))?;
    for m in 0..t.dim() {
        if let Some(nmk) = n.get_ref(&[m, k]) {
            let d = f.differentiate(t.y(m))?;
            if !d.is_zero() {
                acc = acc.sub(&nmk.mul(&d)?)?;
            }
        }
    }
    Ok(acc)
}

/// A tensor reference inside an index expression, e.g. `RC[h,-i,-j,-k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorRef {
    pub name: String,
    pub indices: Vec<(String, Variance)>,
}

impl fmt::Display for TensorRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .indices
            .iter()
            .map(|(l, v)| if *v == Variance::Up { l.clone() } else { format!("-{l}") })
            .collect();
        write!(f, "{}[{}]", self.name, parts.join(","))
    }
}

/// Formal sum of `coefficient × product of tensor references`.
#[derive(Clone, Debug, PartialEq)]
pub struct IndexExpression {
    pub terms: Vec<(crate::coeff::Coefficient, Vec<TensorRef>)>,
}

impl fmt::Display for IndexExpression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, (c, refs)) in self.terms.iter().enumerate() {
            let body = refs.iter().map(|r| r.to_string()).collect::<Vec<_>>().join("*");
            let neg = c.is_negative();
            let a = c.abs();
            if k == 0 {
                if neg {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {} ", if neg { "-" } else { "+" })?;
            }
            if !a.is_one() {
                if a.is_integer() {
                    write!(f, "{a}*")?;
                } else {
                    write!(f, "({a})*")?;
                }
            }
            write!(f, "{body}")?;
        }
        Ok(())
    }
}

/// Resolves tensor names during [`define_tensor`].
pub trait Registry {
    fn lookup(&self, name: &str) -> MathResult<Option<Tensor>>;
}

impl Registry for HashMap<String, Tensor> {
    fn lookup(&self, name: &str) -> MathResult<Option<Tensor>> {
        Ok(self.get(name).cloned())
    }
}

/// Evaluates `name[target] = rhs` by explicit summation over paired letters.
pub fn define_tensor(
    name: &str,
    target: &[(String, Variance)],
    rhs: &IndexExpression,
    registry: &dyn Registry,
    tower: &Arc<Tower>,
) -> MathResult<Tensor> {
    let dim = tower.dim();
    let mut seen_target: HashMap<&str, Variance> = HashMap::new();
    for (l, v) in target {
        if seen_target.insert(l.as_str(), *v).is_some() {
            return Err(MathError::Tensor(format!("letter {l} repeated on the left-hand side")));
        }
    }
    struct Term {
        coeff: crate::coeff::Coefficient,
        factors: Vec<(Tensor, Vec<String>)>,
        summed: Vec<String>,
    }
    let mut terms = Vec::new();
    let mut tw = tower.clone();
    for (c, refs) in &rhs.terms {
        let mut counts: BTreeMap<String, Vec<Variance>> = BTreeMap::new();
        let mut factors = Vec::new();
        for r in refs {
            let t = registry
                .lookup(&r.name)?
                .ok_or_else(|| MathError::Tensor(format!("unknown tensor {}", r.name)))?;
            if t.rank() != r.indices.len() {
                return Err(MathError::Tensor(format!(
                    "{} has rank {}, used with {} indices",
                    r.name,
                    t.rank(),
                    r.indices.len()
                )));
            }
            for (k, (l, v)) in r.indices.iter().enumerate() {
                if t.signature.0[k] != *v {
                    return Err(MathError::Tensor(format!("variance of index {l} in {} does not match its signature", r.name)));
                }
                counts.entry(l.clone()).or_default().push(*v);
            }
            tw = Tower::join(&tw, t.tower())?;
            factors.push((t, r.indices.iter().map(|(l, _)| l.clone()).collect::<Vec<_>>()));
        }
        let mut summed = Vec::new();
        for (l, vs) in &counts {
            match vs.len() {
                1 => match seen_target.get(l.as_str()) {
                    Some(v) if *v == vs[0] => {}
                    Some(_) => return Err(MathError::Tensor(format!("free letter {l} has the wrong variance"))),
                    None => return Err(MathError::Tensor(format!("letter {l} is unpaired and not on the left-hand side"))),
                },
                2 if vs[0] != vs[1] => {
                    if seen_target.contains_key(l.as_str()) {
                        return Err(MathError::Tensor(format!("summed letter {l} also appears on the left-hand side")));
                    }
                    summed.push(l.clone());
                }
                2 => return Err(MathError::Tensor(format!("repeated letter {l} with equal variance"))),
                _ => return Err(MathError::Tensor(format!("letter {l} appears more than twice"))),
            }
        }
        for (l, _) in target {
            if !counts.contains_key(l) {
                return Err(MathError::Tensor(format!("free letter {l} missing from a term")));
            }
        }
        terms.push(Term { coeff: c.clone(), factors, summed });
    }
    let sig = Signature(target.iter().map(|(_, v)| *v).collect());
    let letters: Vec<&str> = target.iter().map(|(l, _)| l.as_str()).collect();
    Tensor::from_fn(name, sig, &tw, |idx| {
        let mut assign: HashMap<&str, usize> = letters.iter().copied().zip(idx.iter().copied()).collect();
        let mut acc = Expression::zero(&tw);
        for term in &terms {
            for s in all_indices(term.summed.len(), dim) {
                for (l, v) in term.summed.iter().zip(&s) {
                    assign.insert(l.as_str(), *v);
                }
                let mut prod = Expression::constant(&tw, term.coeff.clone());
                for (t, ls) in &term.factors {
                    let i: Index = ls.iter().map(|l| assign[l.as_str()]).collect();
                    match t.get_ref(&i) {
                        Some(e) => prod = prod.mul(e)?,
                        None => {
                            prod = Expression::zero(&tw);
                            break;
                        }
                    }
                }
                if !prod.is_zero() {
                    acc = acc.add(&prod)?;
                }
            }
        }
        Ok(acc)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::Coefficient;

    fn int_tensor(name: &str, sig: &str, t: &Arc<Tower>, vals: &[i64]) -> Tensor {
        let s = Signature::parse(sig);
        let idx = all_indices(s.rank(), t.dim());
        let mut out = Tensor::zero(name, s, t);
        for (i, v) in idx.into_iter().zip(vals) {
            out.set(i, Expression::int(t, *v)).unwrap();
        }
        out
    }

    fn refs(name: &str, ix: &[(&str, Variance)]) -> TensorRef {
        TensorRef { name: name.into(), indices: ix.iter().map(|(l, v)| (l.to_string(), *v)).collect() }
    }

    #[test]
    fn contraction_toy() {
        let t = Tower::new(2).unwrap();
        let mut reg: HashMap<String, Tensor> = HashMap::new();
        reg.insert("A".into(), int_tensor("A", "ud", &t, &[1, 2, 3, 4]));
        reg.insert("B".into(), int_tensor("B", "u", &t, &[5, 6]));
        let rhs = IndexExpression {
            terms: vec![(
                Coefficient::one(),
                vec![refs("A", &[("i", Variance::Up), ("j", Variance::Down)]), refs("B", &[("j", Variance::Up)])],
            )],
        };
        let c = define_tensor("C", &[("i".into(), Variance::Up)], &rhs, &reg, &t).unwrap();
        assert_eq!(c.get(&[0]).constant_value(), Some(Coefficient::from_int(17)));
        assert_eq!(c.get(&[1]).constant_value(), Some(Coefficient::from_int(39)));
    }

    #[test]
    fn contraction_errors() {
        let t = Tower::new(2).unwrap();
        let mut reg: HashMap<String, Tensor> = HashMap::new();
        reg.insert("A".into(), int_tensor("A", "uu", &t, &[1, 2, 3, 4]));
        let bad = IndexExpression {
            terms: vec![(Coefficient::one(), vec![refs("A", &[("i", Variance::Up), ("j", Variance::Up)])])],
        };
        assert!(define_tensor("T", &[("i".into(), Variance::Up)], &bad, &reg, &t).is_err());
        let unknown = IndexExpression { terms: vec![(Coefficient::one(), vec![refs("Q", &[("i", Variance::Up)])])] };
        assert!(define_tensor("T", &[("i".into(), Variance::Up)], &unknown, &reg, &t).is_err());
    }

    #[test]
    fn lowering_with_diagonal_metric() {
        let t = Tower::new(2).unwrap();
        let g = int_tensor("g", "dd", &t, &[1, 0, 0, 4]);
        let v = int_tensor("v", "u", &t, &[1, 1]);
        let low = v.raise_lower(0, &g, "v_").unwrap();
        assert_eq!(low.get(&[1]).constant_value(), Some(Coefficient::from_int(4)));
        assert_eq!(low.signature, Signature::parse("d"));
        let gi = {
            let mut gi = Tensor::zero("ginv", Signature::parse("uu"), &t);
            gi.set(vec![0, 0], Expression::int(&t, 1)).unwrap();
            gi.set(vec![1, 1], Expression::constant(&t, Coefficient::new(1, 4))).unwrap();
            gi
        };
        let back = low.raise_lower(0, &gi, "v").unwrap();
        assert!(back.get(&[1]).is_one());
        assert!(v.raise_lower(0, &gi, "bad").is_err());
    }

    #[test]
    fn symmetry_checks() {
        let t = Tower::new(2).unwrap();
        let s = int_tensor("S", "dd", &t, &[1, 2, 2, 5]);
        assert!(s.symmetric_in(0, 1).unwrap());
        let a = int_tensor("A", "dd", &t, &[0, 2, -2, 0]);
        assert!(a.antisymmetric_in(0, 1).unwrap());
        let m = int_tensor("M", "ud", &t, &[0, 2, -2, 0]);
        assert!(m.check_symmetry(&[1, 0], -1).is_err());
    }

    #[test]
    fn show_format() {
        let t = Tower::new(2).unwrap();
        let n = int_tensor("N", "ud", &t, &[0, 3, 0, 0]);
        assert_eq!(n.show(), vec!["N^{x1}_{x2} = 3".to_string()]);
        let j = n.to_json();
        assert_eq!(j["components"]["i,-j=1,2"], "3");
    }
}
