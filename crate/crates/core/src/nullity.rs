//! Homogeneous linear systems over the expression field, solved with
//! assumption-tracked case splitting; nullity and kernel distributions,
//! membership, comparison and involutivity.

use std::fmt;
use std::sync::Arc;

use serde_json::{json, Value};

use crate::coeff::Coefficient;
use crate::error::{MathError, MathResult};
use crate::expr::{render_poly, Expression};
use crate::finsler::{FinslerSpace, HorizontalField, VerticalField};
use crate::gcd::{normalize, split_factors};
use crate::poly::{Monomial, Poly};
use crate::tensor::{all_indices, Tensor, Variance};
use crate::tower::Tower;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Relation {
    NonZero,
    Zero,
}

/// `expr ≠ 0` or `expr = 0`, stored through the normalized numerator.
#[derive(Clone, Debug)]
pub struct Assumption {
    pub expr: Expression,
    pub relation: Relation,
    poly: Poly,
}

impl Assumption {
    pub fn new(expr: &Expression, relation: Relation) -> MathResult<Assumption> {
        let poly = normalize(&clear_units(expr.tower(), expr.numerator()));
        if poly.is_zero() {
            return Err(MathError::Unsupported("assumption on the zero expression".into()));
        }
        if relation == Relation::Zero && poly.is_constant() {
            return Err(MathError::Unsupported("a nonzero constant cannot be assumed zero".into()));
        }
        let expr = Expression::from_poly(expr.tower(), poly.clone());
        Ok(Assumption { expr, relation, poly })
    }

    pub fn poly(&self) -> &Poly {
        &self.poly
    }

    pub fn render(&self) -> String {
        let op = if self.relation == Relation::Zero { "=" } else { "<>" };
        format!("{} {op} 0", self.expr)
    }
}

impl PartialEq for Assumption {
    fn eq(&self, o: &Assumption) -> bool {
        self.relation == o.relation && self.poly == o.poly
    }
}

/// Multiplies by the exponential-atom monomial that clears negative
/// exponents, leaving an honest polynomial with the same zero set.
fn clear_units(t: &Tower, p: &Poly) -> Poly {
    let laurent = t.laurent_mask();
    let mut m = Monomial::ONE;
    for (mono, _) in p.terms() {
        for v in 0..t.var_count() {
            if laurent & (1 << v) != 0 && mono.get(v) < 0 {
                m.set(v, m.get(v).max(-mono.get(v)));
            }
        }
    }
    let q = p.mul_monomial(&m);
    // Drop pure-unit monomial content as well.
    let g = q.monomial_gcd().restrict(laurent);
    if g.is_one() {
        q
    } else {
        q.mul_monomial(&g.pow(-1))
    }
}

/// A conjunction of assumptions over one tower.
#[derive(Clone, Debug)]
pub struct Assumptions {
    tower: Arc<Tower>,
    list: Vec<Assumption>,
}

impl Assumptions {
    pub fn new(tower: &Arc<Tower>) -> Assumptions {
        Assumptions { tower: tower.clone(), list: Vec::new() }
    }

    /// The chart-domain conditions of a space, all `≠ 0`.
    pub fn domain(space: &FinslerSpace) -> MathResult<Assumptions> {
        let mut a = Assumptions::new(space.tower());
        for d in space.domain() {
            a.add(Assumption::new(d, Relation::NonZero)?)?;
        }
        Ok(a)
    }

    pub fn tower(&self) -> &Arc<Tower> {
        &self.tower
    }

    pub fn list(&self) -> &[Assumption] {
        &self.list
    }

    pub fn zeros(&self) -> impl Iterator<Item = &Poly> {
        self.list.iter().filter(|a| a.relation == Relation::Zero).map(|a| &a.poly)
    }

    fn nonzeros(&self) -> impl Iterator<Item = &Poly> {
        self.list.iter().filter(|a| a.relation == Relation::NonZero).map(|a| &a.poly)
    }

    /// Adds an assumption; nonzero products are split into their factors.
    pub fn add(&mut self, a: Assumption) -> MathResult<()> {
        self.tower = Tower::join(&self.tower, a.expr.tower())?;
        if a.relation == Relation::NonZero {
            for f in split_factors(&a.poly) {
                let b = Assumption::new(&Expression::from_poly(&self.tower, f), Relation::NonZero)?;
                if !self.list.contains(&b) {
                    self.list.push(b);
                }
            }
        } else {
            self.add_zero(a)?;
        }
        Ok(())
    }

    /// Adds `p = 0`, keeping the zero conditions inter-reduced and
    /// squarefree so that every listed condition is independent.
    fn add_zero(&mut self, a: Assumption) -> MathResult<()> {
        let mut pending = vec![a];
        while let Some(a) = pending.pop() {
            let r = clear_units(&self.tower, &self.reduce_poly(&a.poly));
            if r.is_zero() {
                continue;
            }
            let factors = split_factors(&r);
            if factors.is_empty() {
                // Reduces to a nonzero constant: keep it so the set is
                // recognized as contradictory.
                if !self.list.contains(&a) {
                    self.list.push(a);
                }
                continue;
            }
            let rad = factors.iter().fold(Poly::one(), |acc, f| acc.mul(f));
            let z = Assumption::new(&Expression::from_poly(&self.tower, rad), Relation::Zero)?;
            if self.list.contains(&z) {
                continue;
            }
            let (order, laurent) = (self.tower.coordinate_mask(), self.tower.laurent_mask());
            let mut kept = Vec::with_capacity(self.list.len() + 1);
            for w in self.list.drain(..) {
                if w.relation == Relation::Zero && w.poly.reduce_modulo(&z.poly, order, laurent) != w.poly {
                    pending.push(w);
                } else {
                    kept.push(w);
                }
            }
            kept.push(z);
            self.list = kept;
        }
        Ok(())
    }

    pub fn merged(&self, o: &Assumptions) -> MathResult<Assumptions> {
        let mut m = self.clone();
        m.tower = Tower::join(&self.tower, &o.tower)?;
        for a in &o.list {
            m.add(a.clone())?;
        }
        Ok(m)
    }

    fn reduce_poly(&self, p: &Poly) -> Poly {
        let order = self.tower.coordinate_mask();
        let laurent = self.tower.laurent_mask();
        let mut p = p.clone();
        for z in self.zeros() {
            p = p.reduce_modulo(z, order, laurent);
        }
        p
    }

    /// Reduces the numerator modulo every zero-assumption.
    pub fn reduce(&self, e: &Expression) -> Expression {
        if e.is_zero() || !self.list.iter().any(|a| a.relation == Relation::Zero) {
            return e.clone();
        }
        e.map_numerator(|n| self.reduce_poly(n))
    }

    fn single_var_nonzero(&self) -> u32 {
        let mut mask = 0;
        for p in self.nonzeros() {
            if p.len() == 1 {
                let (m, _) = &p.terms()[0];
                let s = m.support();
                if s.count_ones() == 1 {
                    mask |= s;
                }
            }
        }
        mask
    }

    /// Whether a normalized polynomial factor is provably nonzero.
    pub fn certifies(&self, f: &Poly) -> bool {
        let t = &self.tower;
        let f = normalize(&clear_units(t, &self.reduce_poly(f)));
        if f.is_zero() {
            return false;
        }
        if f.is_constant() {
            return true;
        }
        if self.nonzeros().any(|p| *p == f) {
            return true;
        }
        if f.support() & (t.radical_mask() | t.symbol_mask()) != 0 {
            return false;
        }
        self.positive_definite(&f)
    }

    /// Same-sign coefficients, even coordinate exponents, and one term
    /// built only from variables assumed nonzero.
    fn positive_definite(&self, f: &Poly) -> bool {
        let coords = self.tower.coordinate_mask();
        let nz = self.single_var_nonzero();
        let neg = f.terms()[0].1.is_negative();
        let mut anchored = false;
        for (m, c) in f.terms() {
            if c.is_negative() != neg {
                return false;
            }
            for v in 0..self.tower.var_count() {
                if coords & (1 << v) != 0 && m.get(v) % 2 != 0 {
                    return false;
                }
            }
            if m.support() & coords & !nz == 0 {
                anchored = true;
            }
        }
        anchored
    }

    /// Squarefree factors of the (reduced) numerator not provably nonzero.
    pub fn uncertified_factors(&self, e: &Expression) -> Vec<Poly> {
        let p = clear_units(&self.tower, &self.reduce_poly(e.numerator()));
        if p.is_zero() {
            return Vec::new();
        }
        let mut out: Vec<Poly> = split_factors(&p).into_iter().filter(|f| !self.certifies(f)).collect();
        out.sort_by_key(|f| (f.len(), f.support().count_ones()));
        out
    }

    pub fn is_nonzero(&self, e: &Expression) -> bool {
        !self.reduce(e).is_zero() && self.uncertified_factors(e).is_empty()
    }

    /// True when some assumption contradicts the others.
    pub fn contradictory(&self) -> bool {
        let zeros: Vec<&Assumption> = self.list.iter().filter(|a| a.relation == Relation::Zero).collect();
        for z in &zeros {
            let mut rest = self.clone();
            rest.list.retain(|a| a != *z);
            if rest.certifies(&z.poly) {
                return true;
            }
        }
        self.nonzeros().any(|p| self.reduce_poly(p).is_zero())
    }

    pub fn render(&self) -> Vec<String> {
        self.list.iter().map(|a| a.render()).collect()
    }

    fn same_set(&self, o: &Assumptions) -> bool {
        self.list.len() == o.list.len() && self.list.iter().all(|a| o.list.contains(a))
    }
}

/// `rows · Z = 0` with one row per surviving multi-index.
#[derive(Clone, Debug)]
pub struct LinearSystem {
    pub unknowns: usize,
    pub rows: Vec<Vec<Expression>>,
    /// 0-based multi-index each row came from.
    pub labels: Vec<Vec<usize>>,
}

impl LinearSystem {
    pub fn new(unknowns: usize, rows: Vec<Vec<Expression>>) -> LinearSystem {
        let labels = (0..rows.len()).map(|i| vec![i]).collect();
        let mut s = LinearSystem { unknowns, rows, labels };
        s.prune();
        s
    }

    fn prune(&mut self) {
        let mut rows: Vec<Vec<Expression>> = Vec::new();
        let mut labels = Vec::new();
        for (r, l) in self.rows.drain(..).zip(self.labels.drain(..)) {
            if r.iter().all(|e| e.is_zero()) {
                continue;
            }
            if rows.iter().any(|q| proportional_by_constant(q, &r)) {
                continue;
            }
            rows.push(r);
            labels.push(l);
        }
        self.rows = rows;
        self.labels = labels;
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

fn proportional_by_constant(a: &[Expression], b: &[Expression]) -> bool {
    let Some(k) = a.iter().position(|e| !e.is_zero()) else { return false };
    if b[k].is_zero() {
        return false;
    }
    let Ok(ratio) = b[k].div(&a[k]) else { return false };
    let Some(c) = ratio.constant_value() else { return false };
    a.iter().zip(b).all(|(x, y)| y.sub(&x.scale(&c)).map(|d| d.is_zero()).unwrap_or(false))
}

/// Contracts the covariant slot `slot` of `t` with an unknown vector and
/// returns the coefficient rows.
pub fn build_system(t: &Tensor, slot: usize) -> MathResult<LinearSystem> {
    if t.rank() < 2 || slot >= t.rank() {
        return Err(MathError::Tensor(format!("cannot contract slot {slot} of a rank-{} tensor", t.rank())));
    }
    if t.signature.0[slot] != Variance::Down {
        return Err(MathError::Tensor(format!("slot {slot} of {} is contravariant", t.name)));
    }
    let n = t.dim;
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for rest in all_indices(t.rank() - 1, n) {
        let row: Vec<Expression> = (0..n)
            .map(|j| {
                let mut idx = rest.clone();
                idx.insert(slot, j);
                t.get(&idx)
            })
            .collect();
        rows.push(row);
        labels.push(rest);
    }
    let mut s = LinearSystem { unknowns: n, rows, labels };
    s.prune();
    Ok(s)
}

/// Reads a system from a tensor whose components are linear forms in the
/// given symbol variables (e.g. a contraction with `W[j]`).
pub fn system_from_linear_forms(t: &Tensor, symbols: &[usize]) -> MathResult<LinearSystem> {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (idx, e) in t.nonzero() {
        let mut row = Vec::with_capacity(symbols.len());
        let mut rest = e.numerator().clone();
        for &s in symbols {
            let mut coeff = Poly::zero();
            for (k, c) in e.numerator().coefficients_in(s) {
                if k > 1 {
                    return Err(MathError::Tensor(format!("component {idx:?} is not linear in the unknowns")));
                }
                if k == 1 {
                    coeff = c;
                }
            }
            rest = rest.sub(&coeff.mul_monomial(&Monomial::var(s, 1)));
            row.push(e.map_numerator(|_| coeff.clone()));
        }
        if !rest.is_zero() {
            return Err(MathError::Tensor(format!("component {idx:?} has a term free of the unknowns")));
        }
        rows.push(row);
        labels.push(idx.clone());
    }
    let mut s = LinearSystem { unknowns: symbols.len(), rows, labels };
    s.prune();
    Ok(s)
}

/// A solution family valid under its assumptions.
#[derive(Clone, Debug)]
pub struct SolutionBranch {
    pub assumptions: Assumptions,
    pub basis: Vec<HorizontalField>,
    pub rank: usize,
    /// Set when the split budget ran out and a pivot was assumed nonzero
    /// without proof (the assumption is recorded).
    pub incomplete: bool,
    pub notes: Vec<String>,
}

impl SolutionBranch {
    pub fn to_json(&self) -> Value {
        json!({
            "assumptions": self.assumptions.render(),
            "rank": self.rank,
            "basis": self.basis.iter().map(|b| b.render()).collect::<Vec<_>>(),
            "incomplete": self.incomplete,
            "notes": self.notes,
        })
    }
}

impl fmt::Display for SolutionBranch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let a = self.assumptions.render();
        writeln!(f, "branch [{}]{}", a.join(", "), if self.incomplete { " (incomplete)" } else { "" })?;
        writeln!(f, "  rank {}", self.rank)?;
        for b in &self.basis {
            writeln!(f, "  {}", b.render())?;
        }
        for n in &self.notes {
            writeln!(f, "  note: {n}")?;
        }
        Ok(())
    }
}

#[derive(Clone)]
struct State {
    rows: Vec<Vec<Expression>>,
    pivot_row: Vec<Option<usize>>,
    col: usize,
    assumptions: Assumptions,
    splits: usize,
    incomplete: bool,
}

impl State {
    fn reduce_rows(&mut self) {
        for r in &mut self.rows {
            for e in r.iter_mut() {
                *e = self.assumptions.reduce(e);
            }
        }
    }

    fn is_pivot_row(&self, r: usize) -> bool {
        self.pivot_row.iter().any(|p| *p == Some(r))
    }

    fn eliminate(&mut self, r: usize, c: usize) -> MathResult<()> {
        let inv = self.rows[r][c].recip()?;
        let row: Vec<Expression> = self.rows[r]
            .iter()
            .map(|e| e.mul(&inv).map(|x| self.assumptions.reduce(&x)))
            .collect::<MathResult<_>>()?;
        self.rows[r] = row.clone();
        for q in 0..self.rows.len() {
            if q == r || self.rows[q][c].is_zero() {
                continue;
            }
            let f = self.rows[q][c].clone();
            for k in 0..row.len() {
                if !row[k].is_zero() {
                    let v = self.rows[q][k].sub(&f.mul(&row[k])?)?;
                    self.rows[q][k] = self.assumptions.reduce(&v);
                }
            }
            self.rows[q][c] = Expression::zero(self.assumptions.tower());
        }
        self.pivot_row[c] = Some(r);
        Ok(())
    }
}

/// Solves `rows · Z = 0` with case splitting on uncertified pivot factors.
pub fn solve_branches(sys: &LinearSystem, base: &Assumptions, split_depth: usize) -> MathResult<Vec<SolutionBranch>> {
    let mut tw = base.tower().clone();
    for r in &sys.rows {
        for e in r {
            tw = Tower::join(&tw, e.tower())?;
        }
    }
    let mut assumptions = base.clone();
    assumptions.tower = tw;
    let mut st = State {
        rows: sys.rows.clone(),
        pivot_row: vec![None; sys.unknowns],
        col: 0,
        assumptions,
        splits: 0,
        incomplete: false,
    };
    st.reduce_rows();
    solve_state(st, sys.unknowns, split_depth)
}

fn solve_state(mut st: State, n: usize, depth: usize) -> MathResult<Vec<SolutionBranch>> {
    while st.col < n {
        let c = st.col;
        let cands: Vec<usize> =
            (0..st.rows.len()).filter(|&r| !st.is_pivot_row(r) && !st.rows[r][c].is_zero()).collect();
        if cands.is_empty() {
            st.col += 1;
            continue;
        }
        let mut best_cert: Option<(usize, usize)> = None;
        let mut best_open: Option<(usize, usize, Vec<Poly>)> = None;
        for &r in &cands {
            let e = &st.rows[r][c];
            let size = e.numerator().len();
            let open = st.assumptions.uncertified_factors(e);
            if open.is_empty() {
                if best_cert.map(|(_, s)| size < s).unwrap_or(true) {
                    best_cert = Some((r, size));
                }
            } else {
                let key = (open.len(), size);
                if best_open.as_ref().map(|(_, s, o)| key < (o.len(), *s)).unwrap_or(true) {
                    best_open = Some((r, size, open));
                }
            }
        }
        if let Some((r, _)) = best_cert {
            st.eliminate(r, c)?;
            st.col += 1;
            continue;
        }
        let (r, _, open) = best_open.expect("candidate exists");
        let tw = st.assumptions.tower().clone();
        let splittable = open.iter().find(|f| f.support() & (tw.radical_mask() | tw.symbol_mask()) == 0);
        match splittable {
            Some(f) if st.splits < depth => {
                let fe = Expression::from_poly(&tw, f.clone());
                let mut a = st.clone();
                a.assumptions.add(Assumption::new(&fe, Relation::NonZero)?)?;
                a.splits += 1;
                let mut b = st.clone();
                b.assumptions.add(Assumption::new(&fe, Relation::Zero)?)?;
                b.splits += 1;
                b.reduce_rows();
                let left = if a.assumptions.contradictory() { Vec::new() } else { solve_state(a, n, depth)? };
                let right = if b.assumptions.contradictory() { Vec::new() } else { solve_state(b, n, depth)? };
                return Ok(merge_siblings(left, right));
            }
            _ => {
                for f in &open {
                    st.assumptions.add(Assumption::new(&Expression::from_poly(&tw, f.clone()), Relation::NonZero)?)?;
                }
                st.incomplete = true;
                st.eliminate(r, c)?;
                st.col += 1;
            }
        }
    }
    Ok(vec![finish(st, n)?])
}

fn finish(st: State, n: usize) -> MathResult<SolutionBranch> {
    let tw = st.assumptions.tower().clone();
    let mut basis = Vec::new();
    for f in 0..n {
        if st.pivot_row[f].is_some() {
            continue;
        }
        let mut v = vec![Expression::zero(&tw); n];
        v[f] = Expression::one(&tw);
        for (p, pr) in st.pivot_row.iter().enumerate() {
            if let Some(r) = pr {
                v[p] = st.assumptions.reduce(&st.rows[*r][f].neg());
            }
        }
        if let Some(lead) = v.iter().find(|e| !e.is_zero()).cloned() {
            if !lead.is_one() && st.assumptions.is_nonzero(&lead) {
                let inv = lead.recip()?;
                for e in v.iter_mut() {
                    *e = st.assumptions.reduce(&e.mul(&inv)?);
                }
            }
        }
        basis.push(HorizontalField(v));
    }
    let rank = basis.len();
    Ok(SolutionBranch { assumptions: st.assumptions, basis, rank, incomplete: st.incomplete, notes: Vec::new() })
}

/// Concatenates the two sides of a split, dropping duplicate strata.
fn merge_siblings(left: Vec<SolutionBranch>, right: Vec<SolutionBranch>) -> Vec<SolutionBranch> {
    let mut out = left;
    for b in right {
        if !out.iter().any(|a| a.assumptions.same_set(&b.assumptions)) {
            out.push(b);
        }
    }
    out
}

/// Slot contracted for nullity vectors: the first vector argument.
pub fn nullity_slot(t: &Tensor) -> usize {
    2.min(t.rank() - 1)
}

/// Slot contracted for kernel vectors: the argument acted on.
pub fn kernel_slot(_t: &Tensor) -> usize {
    1
}

fn annotate(space: &FinslerSpace, mut branches: Vec<SolutionBranch>) -> Vec<SolutionBranch> {
    for b in &mut branches {
        if let Some(note) = degenerate_stratum_note(space, &b.assumptions) {
            b.notes.push(note);
        }
    }
    branches
}

/// Flags strata on which F² (or a radical inside it) vanishes.
pub fn degenerate_stratum_note(space: &FinslerSpace, a: &Assumptions) -> Option<String> {
    let zeros: Vec<&Poly> = a.zeros().collect();
    if zeros.is_empty() {
        return None;
    }
    let t = space.tower();
    if a.reduce(space.f2()).is_zero() {
        return Some("F² vanishes on this stratum; it lies outside the Finsler domain".into());
    }
    for (v, base, _) in t.radicals() {
        {
            if space.f2().numerator().degree(v) > 0 && a.reduce_poly(base).is_zero() {
                return Some(format!(
                    "F² vanishes on this stratum (its radical base {} is zero); it lies outside the Finsler domain",
                    render_poly(t, base)
                ));
            }
        }
    }
    None
}

/// Solves the system obtained by contracting `slot` of `t`, starting from
/// the given assumptions.
pub fn solve_slot(
    space: &FinslerSpace,
    t: &Tensor,
    slot: usize,
    base: &Assumptions,
    split_depth: usize,
) -> MathResult<Vec<SolutionBranch>> {
    let sys = build_system(t, slot)?;
    Ok(annotate(space, solve_branches(&sys, base, split_depth)?))
}

/// Solves an already-built system in the context of a space.
pub fn solve_system_in(
    space: &FinslerSpace,
    sys: &LinearSystem,
    base: &Assumptions,
    split_depth: usize,
) -> MathResult<Vec<SolutionBranch>> {
    Ok(annotate(space, solve_branches(sys, base, split_depth)?))
}

pub fn solve_nullity(space: &FinslerSpace, t: &Tensor, split_depth: usize) -> MathResult<Vec<SolutionBranch>> {
    let sys = build_system(t, nullity_slot(t))?;
    Ok(annotate(space, solve_branches(&sys, &Assumptions::domain(space)?, split_depth)?))
}

pub fn solve_kernel(space: &FinslerSpace, t: &Tensor, split_depth: usize) -> MathResult<Vec<SolutionBranch>> {
    let sys = build_system(t, kernel_slot(t))?;
    Ok(annotate(space, solve_branches(&sys, &Assumptions::domain(space)?, split_depth)?))
}

/// Checks that every basis field annihilates every row after reduction.
pub fn verify_branch(sys: &LinearSystem, b: &SolutionBranch) -> MathResult<bool> {
    for v in &b.basis {
        for row in &sys.rows {
            let mut acc = Expression::zero(b.assumptions.tower());
            for (c, x) in row.iter().zip(&v.0) {
                if !c.is_zero() && !x.is_zero() {
                    acc = acc.add(&c.mul(x)?)?;
                }
            }
            if !b.assumptions.reduce(&acc).is_zero() {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Generic rank of a set of fields under assumptions, with the pivots used.
fn generic_rank(fields: &[&[Expression]], a: &Assumptions) -> MathResult<(usize, Vec<String>)> {
    let mut rows: Vec<Vec<Expression>> = fields
        .iter()
        .map(|f| f.iter().map(|e| e.lift(a.tower()).map(|e| a.reduce(&e))).collect())
        .collect::<MathResult<_>>()?;
    let n = rows.first().map(|r| r.len()).unwrap_or(0);
    let mut rank = 0;
    let mut used = Vec::new();
    for c in 0..n {
        let Some(p) = (rank..rows.len()).find(|&r| !rows[r][c].is_zero()) else { continue };
        rows.swap(rank, p);
        let piv = rows[rank][c].clone();
        if !a.is_nonzero(&piv) {
            for f in a.uncertified_factors(&piv) {
                used.push(format!("{} <> 0", render_poly(a.tower(), &f)));
            }
        }
        let inv = piv.recip()?;
        for r in rank + 1..rows.len() {
            if rows[r][c].is_zero() {
                continue;
            }
            let f = rows[r][c].mul(&inv)?;
            for k in c..n {
                let v = rows[r][k].sub(&f.mul(&rows[rank][k])?)?;
                rows[r][k] = a.reduce(&v);
            }
        }
        rank += 1;
    }
    Ok((rank, used))
}

/// Whether `v` lies in the span of the branch basis.
#[derive(Clone, Debug)]
pub struct Membership {
    pub member: bool,
    /// Generic nonvanishing conditions the decision relied on.
    pub used: Vec<String>,
}

pub fn membership(v: &HorizontalField, b: &SolutionBranch) -> MathResult<Membership> {
    membership_under(v, &b.basis, &b.assumptions)
}

fn membership_under(v: &HorizontalField, basis: &[HorizontalField], a: &Assumptions) -> MathResult<Membership> {
    if v.0.iter().all(|e| e.is_zero() || e.lift(a.tower()).map(|e| a.reduce(&e).is_zero()).unwrap_or(false)) {
        return Ok(Membership { member: true, used: Vec::new() });
    }
    let base: Vec<&[Expression]> = basis.iter().map(|f| f.0.as_slice()).collect();
    let (r0, mut used) = generic_rank(&base, a)?;
    let mut all = base.clone();
    all.push(&v.0);
    let (r1, u1) = generic_rank(&all, a)?;
    used.extend(u1);
    used.sort();
    used.dedup();
    Ok(Membership { member: r1 == r0, used })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Comparison {
    Equal,
    StrictSub,
    StrictSuper,
    Incomparable,
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Comparison::Equal => "equal",
            Comparison::StrictSub => "strict_sub",
            Comparison::StrictSuper => "strict_super",
            Comparison::Incomparable => "incomparable",
        })
    }
}

/// Compares two families under the union of their assumptions.
pub fn compare(a: &SolutionBranch, b: &SolutionBranch) -> MathResult<Comparison> {
    let under = a.assumptions.merged(&b.assumptions)?;
    let mut a_in_b = true;
    for v in &a.basis {
        a_in_b &= membership_under(v, &b.basis, &under)?.member;
    }
    let mut b_in_a = true;
    for v in &b.basis {
        b_in_a &= membership_under(v, &a.basis, &under)?.member;
    }
    Ok(match (a_in_b, b_in_a) {
        (true, true) => Comparison::Equal,
        (true, false) => Comparison::StrictSub,
        (false, true) => Comparison::StrictSuper,
        (false, false) => Comparison::Incomparable,
    })
}

/// Outcome of checking a family for closure under brackets.
#[derive(Clone, Debug)]
pub struct IntegrabilityReport {
    pub involutive: bool,
    /// Basis index pairs whose bracket leaves the family.
    pub witnesses: Vec<BracketWitness>,
}

#[derive(Clone, Debug)]
pub struct BracketWitness {
    pub pair: (usize, usize),
    pub x: HorizontalField,
    pub y: HorizontalField,
    pub horizontal: HorizontalField,
    pub vertical: VerticalField,
}

impl BracketWitness {
    pub fn to_json(&self) -> Value {
        json!({
            "x": self.x.render(),
            "y": self.y.render(),
            "horizontal": self.horizontal.render(),
            "vertical": self.vertical.render(),
        })
    }
}

pub fn integrability_report(b: &SolutionBranch, space: &FinslerSpace) -> MathResult<IntegrabilityReport> {
    let mut witnesses = Vec::new();
    for i in 0..b.basis.len() {
        for j in i + 1..b.basis.len() {
            let (h, v) = space.horizontal_bracket(&b.basis[i], &b.basis[j])?;
            let h = HorizontalField(h.0.iter().map(|e| b.assumptions.reduce(e)).collect());
            let v = VerticalField(v.0.iter().map(|e| b.assumptions.reduce(e)).collect());
            let inside = v.is_zero() && membership(&h, b)?.member;
            if !inside {
                witnesses.push(BracketWitness {
                    pair: (i, j),
                    x: b.basis[i].clone(),
                    y: b.basis[j].clone(),
                    horizontal: h,
                    vertical: v,
                });
            }
        }
    }
    Ok(IntegrabilityReport { involutive: witnesses.is_empty(), witnesses })
}

/// Scales a field by a nonzero constant (used when presenting bases).
pub fn scale_field(v: &HorizontalField, c: &Coefficient) -> HorizontalField {
    HorizontalField(v.0.iter().map(|e| e.scale(c)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::Builder;

    fn exprs(t: &Arc<Tower>, rows: &[&[&str]]) -> (Arc<Tower>, Vec<Vec<Expression>>) {
        let mut b = Builder::new(t.clone());
        let rows: Vec<Vec<Expression>> = rows.iter().map(|r| r.iter().map(|s| b.parse(s).unwrap()).collect()).collect();
        let tw = b.tower.clone();
        (tw.clone(), rows.into_iter().map(|r| r.into_iter().map(|e| e.lift(&tw).unwrap()).collect()).collect())
    }

    #[test]
    fn splits_on_a_parametric_pivot() {
        let t = Tower::new(2).unwrap();
        let (tw, rows) = exprs(&t, &[&["y2", "-y1"]]);
        let sys = LinearSystem::new(2, rows);
        let mut base = Assumptions::new(&tw);
        base.add(Assumption::new(&Expression::y(&tw, 0), Relation::NonZero).unwrap()).unwrap();
        let br = solve_branches(&sys, &base, 2).unwrap();
        assert_eq!(br.len(), 2);
        let generic = br.iter().find(|b| b.assumptions.zeros().count() == 0).unwrap();
        assert_eq!(generic.rank, 1);
        assert_eq!(generic.basis[0].render(), "h1 + (y2/y1)*h2");
        let special = br.iter().find(|b| b.assumptions.zeros().count() == 1).unwrap();
        assert_eq!(special.basis[0].render(), "h1");
        for b in &br {
            assert!(verify_branch(&sys, b).unwrap());
        }
    }

    #[test]
    fn positivity_certificate_avoids_splits() {
        let t = Tower::new(2).unwrap();
        let (tw, rows) = exprs(&t, &[&["x1^2*y1^4 + y2^2", "0"]]);
        let sys = LinearSystem::new(2, rows);
        let mut base = Assumptions::new(&tw);
        base.add(Assumption::new(&Expression::y(&tw, 1), Relation::NonZero).unwrap()).unwrap();
        let br = solve_branches(&sys, &base, 2).unwrap();
        assert_eq!(br.len(), 1);
        assert_eq!(br[0].basis[0].render(), "h2");
    }

    #[test]
    fn depth_zero_marks_incomplete() {
        let t = Tower::new(1).unwrap();
        let (tw, rows) = exprs(&t, &[&["x1"]]);
        let br = solve_branches(&LinearSystem::new(1, rows), &Assumptions::new(&tw), 0).unwrap();
        assert_eq!(br.len(), 1);
        assert!(br[0].incomplete);
        assert_eq!(br[0].rank, 0);
    }

    #[test]
    fn nonlinear_zero_assumption_reduces() {
        let t = Tower::new(3).unwrap();
        let (tw, rows) = exprs(&t, &[&["y1^3 + y2^3 + y3^3", "0", "0"], &["0", "y1", "0"]]);
        let mut base = Assumptions::new(&tw);
        base.add(Assumption::new(&Expression::y(&tw, 0), Relation::NonZero).unwrap()).unwrap();
        let br = solve_branches(&LinearSystem::new(3, rows), &base, 2).unwrap();
        assert_eq!(br.len(), 2);
        let ranks: Vec<usize> = br.iter().map(|b| b.rank).collect();
        assert!(ranks.contains(&1) && ranks.contains(&2));
    }

    #[test]
    fn zero_system_gives_full_space() {
        let t = Tower::new(3).unwrap();
        let br = solve_branches(&LinearSystem::new(3, vec![]), &Assumptions::new(&t), 2).unwrap();
        assert_eq!(br[0].rank, 3);
        let v = HorizontalField(vec![Expression::zero(&t); 3]);
        assert!(membership(&v, &br[0]).unwrap().member);
    }

    #[test]
    fn comparison_of_spans() {
        let t = Tower::new(2).unwrap();
        let a = Assumptions::new(&t);
        let br = |fs: Vec<HorizontalField>| SolutionBranch {
            assumptions: a.clone(),
            rank: fs.len(),
            basis: fs,
            incomplete: false,
            notes: vec![],
        };
        let h1 = br(vec![HorizontalField::basis(&t, 0)]);
        let both = br(vec![HorizontalField::basis(&t, 0), HorizontalField::basis(&t, 1)]);
        let h2 = br(vec![HorizontalField::basis(&t, 1)]);
        assert_eq!(compare(&h1, &both).unwrap(), Comparison::StrictSub);
        assert_eq!(compare(&both, &h1).unwrap(), Comparison::StrictSuper);
        assert_eq!(compare(&h1, &h2).unwrap(), Comparison::Incomparable);
        assert_eq!(compare(&h1, &h1).unwrap(), Comparison::Equal);
    }
}
