//! Exact scalar expressions over the coordinate field extended by the atom
//! tower.
//!
//! An expression is a fraction `num / (mono * f1^e1 * ... * fk^ek)`:
//!
//! * `num` is a polynomial in coordinates, atoms and symbols, with every
//!   radical atom reduced below its degree and exponential atoms carrying
//!   arbitrary integer powers;
//! * the denominator is kept factored: a coordinate monomial plus a list of
//!   primitive polynomial factors that never mention radicals.
//!
//! Division by something containing radicals multiplies through by the
//! adjugate of the radical's multiplication matrix, so radicals never reach
//! a denominator. Zero has the unique representation `num = 0`, which makes
//! [`Expression::is_zero`] decidable within the tower.

use std::cmp::Ordering;
use std::fmt;
use std::sync::Arc;

use crate::coeff::Coefficient;
use crate::error::{MathError, MathResult};
use crate::gcd;
use crate::poly::{Monomial, Poly, VarMask, MAX_VARS};
use crate::tower::{AtomKind, Tower};

type Factor = (Arc<Poly>, u32);

#[derive(Clone)]
pub struct Expression {
    tower: Arc<Tower>,
    num: Poly,
    den_mono: Monomial,
    den: Vec<Factor>,
}

/// Total order on polynomials used to keep denominator factors sorted.
pub fn poly_cmp(a: &Poly, b: &Poly) -> Ordering {
    a.len().cmp(&b.len()).then_with(|| {
        for (x, y) in a.terms().iter().zip(b.terms()) {
            let o = y.0.cmp(&x.0).then_with(|| x.1.cmp(&y.1));
            if o != Ordering::Equal {
                return o;
            }
        }
        Ordering::Equal
    })
}

/// Rewrites `r^e` with `e >= m` as `r^(e mod m) * base^(e div m)` for every
/// radical atom. Returns whether anything changed.
pub fn reduce_radicals(t: &Tower, p: &Poly) -> (Poly, bool) {
    let rmask = t.radical_mask();
    if p.support() & rmask == 0 {
        return (p.clone(), false);
    }
    let mut cur = p.clone();
    let mut changed = false;
    for (v, base, m) in t.radicals() {
        let m16 = m as i16;
        if cur.degree(v) < m16 {
            continue;
        }
        changed = true;
        let mut keep = Vec::new();
        let mut extra = Poly::zero();
        let mut base_pows: Vec<Poly> = vec![Poly::one()];
        for (mono, c) in cur.terms() {
            let e = mono.get(v);
            if e < m16 {
                keep.push((*mono, c.clone()));
                continue;
            }
            let q = (e / m16) as usize;
            let mut m2 = *mono;
            m2.set(v, e % m16);
            while base_pows.len() <= q {
                let next = base_pows.last().unwrap().mul(base);
                base_pows.push(next);
            }
            extra = extra.add(&base_pows[q].mul_term(&m2, c));
        }
        cur = Poly::from_terms(keep).add(&extra);
    }
    (cur, changed)
}

fn mono_div(a: &Monomial, b: &Monomial) -> Monomial {
    let mut r = *a;
    for i in 0..MAX_VARS {
        r.0[i] -= b.0[i];
    }
    r
}

/// Divides `num` by as much of the denominator as divides it exactly.
fn cancel(num: &mut Poly, mono: &mut Monomial, den: &mut Vec<Factor>, laurent: VarMask) {
    if num.is_zero() {
        *mono = Monomial::ONE;
        den.clear();
        return;
    }
    if !mono.is_one() {
        let g = num.monomial_gcd();
        let mut k = Monomial::ONE;
        for i in 0..MAX_VARS {
            let e = mono.0[i].min(g.0[i]);
            if e > 0 {
                k.0[i] = e;
            }
        }
        if !k.is_one() {
            *num = num.mul_monomial(&k.pow(-1));
            *mono = mono_div(mono, &k);
        }
    }
    for (f, e) in den.iter_mut() {
        while *e > 0 {
            match num.div_exact(f, laurent) {
                Some(q) => {
                    *num = q;
                    *e -= 1;
                }
                None => break,
            }
        }
    }
    den.retain(|(_, e)| *e > 0);
}

fn merge_factors(a: &[Factor], b: &[Factor], combine: impl Fn(u32, u32) -> u32) -> Vec<Factor> {
    let mut out: Vec<Factor> = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        let ord = match (a.get(i), b.get(j)) {
            (Some(x), Some(y)) => poly_cmp(&x.0, &y.0),
            (Some(_), None) => Ordering::Less,
            _ => Ordering::Greater,
        };
        match ord {
            Ordering::Less => {
                out.push((a[i].0.clone(), combine(a[i].1, 0)));
                i += 1;
            }
            Ordering::Greater => {
                out.push((b[j].0.clone(), combine(0, b[j].1)));
                j += 1;
            }
            Ordering::Equal => {
                out.push((a[i].0.clone(), combine(a[i].1, b[j].1)));
                i += 1;
                j += 1;
            }
        }
    }
    out.retain(|(_, e)| *e > 0);
    out
}

fn exponent_in(den: &[Factor], f: &Poly) -> u32 {
    den.iter().find(|(g, _)| g.as_ref() == f).map(|(_, e)| *e).unwrap_or(0)
}

/// Expands `mono * prod f^e`.
fn expand(mono: &Monomial, den: &[Factor]) -> Poly {
    let mut p = Poly::monomial(*mono, Coefficient::one());
    for (f, e) in den {
        p = p.mul(&f.pow(*e));
    }
    p
}

/// Determinant by cofactor expansion along the first row.
fn det(m: &[Vec<Poly>], red: &dyn Fn(Poly) -> Poly) -> Poly {
    let n = m.len();
    match n {
        0 => Poly::one(),
        1 => m[0][0].clone(),
        2 => red(m[0][0].mul(&m[1][1]).sub(&m[0][1].mul(&m[1][0]))),
        _ => {
            let mut acc = Poly::zero();
            for j in 0..n {
                if m[0][j].is_zero() {
                    continue;
                }
                let minor = minor(m, 0, j);
                let d = red(m[0][j].mul(&det(&minor, red)));
                acc = if j % 2 == 0 { acc.add(&d) } else { acc.sub(&d) };
            }
            acc
        }
    }
}

fn minor(m: &[Vec<Poly>], r: usize, c: usize) -> Vec<Vec<Poly>> {
    m.iter()
        .enumerate()
        .filter(|(i, _)| *i != r)
        .map(|(_, row)| row.iter().enumerate().filter(|(j, _)| *j != c).map(|(_, x)| x.clone()).collect())
        .collect()
}

/// Returns `(beta, norm)` with `a * beta = norm` and `norm` free of
/// radicals.
fn rationalize(t: &Tower, a: &Poly) -> MathResult<(Poly, Poly)> {
    let rads: Vec<(usize, Poly, u32)> = t.radicals().map(|(v, b, m)| (v, b.clone(), m)).collect();
    let mut cur = a.clone();
    let mut beta = Poly::one();
    let red = |p: Poly| reduce_radicals(t, &p).0;
    for (v, base, m) in rads.iter().rev() {
        if cur.degree(*v) == 0 {
            continue;
        }
        let m = *m as usize;
        if m > 6 {
            return Err(MathError::Unsupported(format!("division by an expression with a degree-{m} radical")));
        }
        let mut c = vec![Poly::zero(); m];
        for (e, p) in cur.coefficients_in(*v) {
            c[e as usize] = p;
        }
        let mat: Vec<Vec<Poly>> = (0..m)
            .map(|i| (0..m).map(|j| if i >= j { c[i - j].clone() } else { c[i + m - j].mul(base) }).collect())
            .collect();
        let norm = det(&mat, &red);
        let mut b = Poly::zero();
        for j in 0..m {
            let cof = det(&minor(&mat, 0, j), &red);
            let term = cof.mul_monomial(&Monomial::var(*v, j as i16));
            b = if j % 2 == 0 { b.add(&term) } else { b.sub(&term) };
        }
        debug_assert!(red(cur.mul(&b)).sub(&norm).is_zero());
        beta = red(beta.mul(&b));
        cur = norm;
    }
    Ok((beta, cur))
}

struct Factored {
    scale: Coefficient,
    unit: Monomial,
    mono: Monomial,
    factors: Vec<Factor>,
}

/// Splits a radical-free polynomial into scalar, exponential unit,
/// coordinate monomial and primitive polynomial factors.
fn factorize(t: &Tower, p: &Poly, hints: &[Factor]) -> Factored {
    let laurent = t.laurent_mask();
    let (scale, prim) = p.primitive();
    let mg = prim.monomial_gcd();
    let unit = mg.restrict(laurent);
    let mono = mg.restrict(!laurent);
    let mut rest = prim.mul_monomial(&mg.pow(-1));
    let mut factors: Vec<Factor> = Vec::new();
    let take = |rest: &mut Poly, f: &Arc<Poly>, factors: &mut Vec<Factor>| {
        let mut e = 0;
        while !rest.is_constant() {
            match rest.div_exact(f, laurent) {
                Some(q) => {
                    *rest = q;
                    e += 1;
                }
                None => break,
            }
        }
        if e > 0 {
            factors.push((f.clone(), e));
        }
    };
    for (f, _) in hints {
        if rest.is_constant() {
            break;
        }
        take(&mut rest, f, &mut factors);
    }
    if !rest.is_constant() {
        let pieces = if rest.len() <= 200 { gcd::split_factors(&rest) } else { vec![] };
        for f in pieces {
            if rest.is_constant() {
                break;
            }
            take(&mut rest, &Arc::new(f), &mut factors);
        }
        if !rest.is_constant() {
            let (_, prim) = rest.primitive();
            let s = rest.primitive_factor();
            rest = Poly::constant(s.recip());
            factors.push((Arc::new(prim), 1));
        }
    }
    // Leftover constant from the exact divisions.
    let scale = match rest.constant_value() {
        Some(c) if !c.is_zero() => &scale * &c,
        _ => scale,
    };
    factors.sort_by(|a, b| poly_cmp(&a.0, &b.0));
    let mut merged: Vec<Factor> = Vec::new();
    for (f, e) in factors {
        match merged.last_mut() {
            Some(last) if last.0 == f => last.1 += e,
            _ => merged.push((f, e)),
        }
    }
    Factored { scale, unit, mono, factors: merged }
}

impl Expression {
    pub fn zero(t: &Arc<Tower>) -> Expression {
        Expression { tower: t.clone(), num: Poly::zero(), den_mono: Monomial::ONE, den: Vec::new() }
    }

    pub fn one(t: &Arc<Tower>) -> Expression {
        Expression::constant(t, Coefficient::one())
    }

    pub fn constant(t: &Arc<Tower>, c: Coefficient) -> Expression {
        Expression { tower: t.clone(), num: Poly::constant(c), den_mono: Monomial::ONE, den: Vec::new() }
    }

    pub fn int(t: &Arc<Tower>, n: i64) -> Expression {
        Expression::constant(t, Coefficient::from_int(n))
    }

    pub fn var(t: &Arc<Tower>, v: usize) -> Expression {
        Expression::from_poly(t, Poly::var(v))
    }

    pub fn x(t: &Arc<Tower>, i: usize) -> Expression {
        Expression::var(t, t.x(i))
    }

    pub fn y(t: &Arc<Tower>, i: usize) -> Expression {
        Expression::var(t, t.y(i))
    }

    /// A polynomial numerator over the tower's variables.
    pub fn from_poly(t: &Arc<Tower>, p: Poly) -> Expression {
        let (num, _) = reduce_radicals(t, &p);
        Expression { tower: t.clone(), num, den_mono: Monomial::ONE, den: Vec::new() }
    }

    /// `num / den` for polynomials; `den` must be radical-free.
    pub fn fraction(t: &Arc<Tower>, num: Poly, den: &Poly) -> MathResult<Expression> {
        Expression::from_poly(t, num).div(&Expression::from_poly(t, den.clone()))
    }

    pub fn tower(&self) -> &Arc<Tower> {
        &self.tower
    }

    pub fn numerator(&self) -> &Poly {
        &self.num
    }

    pub fn den_monomial(&self) -> &Monomial {
        &self.den_mono
    }

    pub fn den_factors(&self) -> &[Factor] {
        &self.den
    }

    pub fn denominator_poly(&self) -> Poly {
        expand(&self.den_mono, &self.den)
    }

    pub fn is_zero(&self) -> bool {
        self.num.is_zero()
    }

    pub fn is_polynomial(&self) -> bool {
        self.den_mono.is_one() && self.den.is_empty()
    }

    pub fn constant_value(&self) -> Option<Coefficient> {
        if self.is_polynomial() {
            self.num.constant_value()
        } else {
            None
        }
    }

    pub fn is_one(&self) -> bool {
        self.is_polynomial() && self.num.is_one()
    }

    /// Variables mentioned anywhere (numerator or denominator).
    pub fn support(&self) -> VarMask {
        let mut s = self.num.support() | self.den_mono.support();
        for (f, _) in &self.den {
            s |= f.support();
        }
        s
    }

    /// Reattaches the expression to an extension of its tower.
    pub fn lift(&self, t: &Arc<Tower>) -> MathResult<Expression> {
        let j = Tower::join(&self.tower, t)?;
        if !Arc::ptr_eq(&j, t) {
            return Err(MathError::TowerMismatch);
        }
        let mut e = self.clone();
        e.tower = t.clone();
        Ok(e)
    }

    fn build(t: &Arc<Tower>, mut num: Poly, mut mono: Monomial, mut den: Vec<Factor>) -> Expression {
        cancel(&mut num, &mut mono, &mut den, t.laurent_mask());
        Expression { tower: t.clone(), num, den_mono: mono, den }
    }

    fn joint(&self, o: &Expression) -> MathResult<Arc<Tower>> {
        Tower::join(&self.tower, &o.tower)
    }

    pub fn neg(&self) -> Expression {
        Expression { num: self.num.neg(), ..self.clone() }
    }

    pub fn scale(&self, c: &Coefficient) -> Expression {
        if c.is_zero() {
            return Expression::zero(&self.tower);
        }
        Expression { num: self.num.scale(c), ..self.clone() }
    }

    pub fn add(&self, o: &Expression) -> MathResult<Expression> {
        self.add_signed(o, false)
    }

    pub fn sub(&self, o: &Expression) -> MathResult<Expression> {
        self.add_signed(o, true)
    }

    fn add_signed(&self, o: &Expression, negate: bool) -> MathResult<Expression> {
        let t = self.joint(o)?;
        if o.is_zero() {
            let mut r = self.clone();
            r.tower = t;
            return Ok(r);
        }
        if self.is_zero() {
            let mut r = if negate { o.neg() } else { o.clone() };
            r.tower = t;
            return Ok(r);
        }
        let comb = |a: &Poly, b: &Poly| if negate { a.sub(b) } else { a.add(b) };
        if self.den_mono == o.den_mono && self.den == o.den {
            let num = comb(&self.num, &o.num);
            return Ok(Expression::build(&t, num, self.den_mono, self.den.clone()));
        }
        let mono = self.den_mono.max_exp(&o.den_mono);
        let den = merge_factors(&self.den, &o.den, u32::max);
        let mult = |e: &Expression| -> Poly {
            let m = mono_div(&mono, &e.den_mono);
            let mut p = Poly::monomial(m, Coefficient::one());
            for (f, k) in &den {
                let have = exponent_in(&e.den, f);
                if *k > have {
                    p = p.mul(&f.pow(k - have));
                }
            }
            p
        };
        let num = comb(&self.num.mul(&mult(self)), &o.num.mul(&mult(o)));
        Ok(Expression::build(&t, num, mono, den))
    }

    pub fn mul(&self, o: &Expression) -> MathResult<Expression> {
        let t = self.joint(o)?;
        if self.is_zero() || o.is_zero() {
            return Ok(Expression::zero(&t));
        }
        let laurent = t.laurent_mask();
        let mut an = self.num.clone();
        let mut bn = o.num.clone();
        let mut amono = self.den_mono;
        let mut bmono = o.den_mono;
        let mut aden = self.den.clone();
        let mut bden = o.den.clone();
        cancel(&mut an, &mut bmono, &mut bden, laurent);
        cancel(&mut bn, &mut amono, &mut aden, laurent);
        let (num, reduced) = reduce_radicals(&t, &an.mul(&bn));
        let mono = amono.mul(&bmono);
        let den = merge_factors(&aden, &bden, |x, y| x + y);
        if reduced {
            Ok(Expression::build(&t, num, mono, den))
        } else {
            Ok(Expression { tower: t, num, den_mono: mono, den })
        }
    }

    pub fn recip(&self) -> MathResult<Expression> {
        if self.is_zero() {
            return Err(MathError::DivisionByZero);
        }
        let t = &self.tower;
        let laurent = t.laurent_mask();
        let (beta, norm) = rationalize(t, &self.num)?;
        let mut norm = norm;
        let mut mono = self.den_mono;
        let mut den = self.den.clone();
        cancel(&mut norm, &mut mono, &mut den, laurent);
        let fz = factorize(t, &norm, &self.den);
        let num = reduce_radicals(t, &beta.mul(&expand(&mono, &den)))
            .0
            .mul_monomial(&fz.unit.pow(-1))
            .scale(&fz.scale.recip());
        if fz.mono.support() & laurent != 0 {
            return Err(MathError::Unsupported("exponential in denominator monomial".into()));
        }
        Ok(Expression::build(t, num, fz.mono, fz.factors))
    }

    pub fn div(&self, o: &Expression) -> MathResult<Expression> {
        if o.is_zero() {
            return Err(MathError::DivisionByZero);
        }
        if let Some(c) = o.constant_value() {
            let t = self.joint(o)?;
            let mut r = self.scale(&c.recip());
            r.tower = t;
            return Ok(r);
        }
        self.mul(&o.recip()?)
    }

    pub fn pow(&self, k: i32) -> MathResult<Expression> {
        if k < 0 {
            return self.recip()?.pow(-k);
        }
        let mut acc = Expression::one(&self.tower);
        let mut base = self.clone();
        let mut k = k as u32;
        while k > 0 {
            if k & 1 == 1 {
                acc = acc.mul(&base)?;
            }
            k >>= 1;
            if k > 0 {
                base = base.mul(&base)?;
            }
        }
        Ok(acc)
    }

    /// Replaces the numerator by `f(numerator)` and renormalizes. Used to
    /// reduce modulo zero-assumptions.
    pub fn map_numerator(&self, f: impl FnOnce(&Poly) -> Poly) -> Expression {
        let (num, _) = reduce_radicals(&self.tower, &f(&self.num));
        Expression::build(&self.tower, num, self.den_mono, self.den.clone())
    }

    /// Exact partial derivative with respect to a coordinate variable.
    pub fn differentiate(&self, v: usize) -> MathResult<Expression> {
        let t = self.tower.clone();
        if !t.is_coordinate(v) {
            return Err(MathError::UnknownVariable(t.var_name(v)));
        }
        if self.is_zero() {
            return Ok(self.clone());
        }
        let laurent = t.laurent_mask();
        let n = &self.num;

        // Plain part: coordinates and exponentials (radicals held fixed).
        let plain = total_diff(&t, n, v);

        // Denominator factors whose derivative is nonzero, plus normalized
        // radical bases, all joining the new denominator once.
        let mut extra: Vec<Arc<Poly>> = Vec::new();
        let mut mextra = Monomial::ONE;
        if self.den_mono.get(v) > 0 {
            mextra.set(v, 1);
        }
        let mut den_terms: Vec<(usize, u32, Poly)> = Vec::new(); // (extra idx, exponent, derivative)
        for (f, e) in &self.den {
            let d = total_diff(&t, f, v);
            if !d.is_zero() {
                extra.push(f.clone());
                den_terms.push((extra.len() - 1, *e, d));
            }
        }
        struct RadTerm {
            weighted: Poly,
            dbase: Poly,
            scale: Coefficient,
            unit: Monomial,
            mono: Monomial,
            idx: Option<usize>,
        }
        let mut rad_terms: Vec<RadTerm> = Vec::new();
        for (rv, base, m) in t.radicals() {
            if n.degree(rv) == 0 {
                continue;
            }
            let db = total_diff(&t, base, v);
            if db.is_zero() {
                continue;
            }
            let (s, prim) = base.primitive();
            let mg = prim.monomial_gcd();
            let unit = mg.restrict(laurent);
            let mono = mg.restrict(!laurent);
            let bhat = prim.mul_monomial(&mg.pow(-1));
            let idx = if bhat.is_constant() {
                None
            } else {
                match extra.iter().position(|f| f.as_ref() == &bhat) {
                    Some(i) => Some(i),
                    None => {
                        extra.push(Arc::new(bhat));
                        Some(extra.len() - 1)
                    }
                }
            };
            mextra = mextra.max_exp(&mono);
            rad_terms.push(RadTerm {
                weighted: n.euler_weight(rv),
                dbase: db,
                scale: (&s * &Coefficient::from_int(m as i64)).recip(),
                unit,
                mono,
                idx,
            });
        }

        // Q = mextra * prod(extra); products of all-but-one factor.
        let prod_except = |skip: Option<usize>| -> Poly {
            let mut p = Poly::one();
            for (i, f) in extra.iter().enumerate() {
                if Some(i) != skip {
                    p = p.mul(f);
                }
            }
            p
        };
        let full = prod_except(None);
        let mut num = plain.mul(&full).mul_monomial(&mextra);
        for (i, e, d) in &den_terms {
            let q = prod_except(Some(*i)).mul_monomial(&mextra);
            num = num.sub(&n.mul(d).mul(&q).scale(&Coefficient::from_int(*e as i64)));
        }
        let mv = self.den_mono.get(v);
        if mv > 0 {
            let mut mq = mextra;
            mq.set(v, mq.get(v) - 1);
            num = num.sub(&n.mul(&full).mul_monomial(&mq).scale(&Coefficient::from_int(mv as i64)));
        }
        for r in &rad_terms {
            let q = prod_except(r.idx).mul_monomial(&mono_div(&mextra, &r.mono));
            let contrib = r.weighted.mul(&r.dbase).mul(&q).mul_monomial(&r.unit.pow(-1)).scale(&r.scale);
            num = num.add(&contrib);
        }
        let (num, _) = reduce_radicals(&t, &num);
        let mut den = self.den.clone();
        let mut added: Vec<Factor> = extra.into_iter().map(|f| (f, 1)).collect();
        added.sort_by(|a, b| poly_cmp(&a.0, &b.0));
        den = merge_factors(&den, &added, |a, b| a + b);
        Ok(Expression::build(&t, num, self.den_mono.mul(&mextra), den))
    }

    /// Evaluates with the given coordinate values (length `2n`) and values
    /// for symbols, if any appear.
    pub fn evaluate_with<S: Scalar>(&self, coords: &[S], symbols: &dyn Fn(usize) -> Option<S>) -> MathResult<S> {
        let t = &self.tower;
        let vals = atom_values(t, coords, symbols, self.support())?;
        let num = eval_poly(&self.num, &vals)?;
        let den = eval_poly(&self.denominator_poly(), &vals)?;
        if den.is_exact_zero() {
            return Err(MathError::Pole);
        }
        num.div(&den)
    }

    pub fn render(&self) -> String {
        let t = &self.tower;
        let num = render_poly(t, &self.num);
        if self.is_polynomial() {
            return num;
        }
        let mut parts: Vec<String> = Vec::new();
        for v in 0..MAX_VARS {
            let e = self.den_mono.get(v);
            if e == 1 {
                parts.push(t.var_name(v));
            } else if e > 1 {
                parts.push(format!("{}^{}", t.var_name(v), e));
            }
        }
        for (f, e) in &self.den {
            let s = render_poly(t, f);
            let s = if f.len() == 1 { s } else { format!("({s})") };
            if *e == 1 {
                parts.push(s);
            } else {
                parts.push(format!("{s}^{e}"));
            }
        }
        let num = if self.num.len() == 1 { num } else { format!("({num})") };
        if parts.len() == 1 {
            format!("{num}/{}", parts[0])
        } else {
            format!("{num}/({})", parts.join("*"))
        }
    }
}

/// Values of all variables in `need`: coordinates from `coords`, atoms
/// computed in tower order, symbols from the callback.
fn atom_values<S: Scalar>(
    t: &Tower,
    coords: &[S],
    symbols: &dyn Fn(usize) -> Option<S>,
    need: VarMask,
) -> MathResult<Vec<Option<S>>> {
    let n2 = 2 * t.dim();
    if coords.len() != n2 {
        return Err(MathError::Unsupported(format!("expected {n2} coordinate values, got {}", coords.len())));
    }
    let mut vals: Vec<Option<S>> = coords.iter().cloned().map(Some).collect();
    for (k, a) in t.atoms().iter().enumerate() {
        let v = t.atom_var(k);
        let val = match &a.kind {
            AtomKind::Radical { base, degree } => {
                if need & (1 << v) == 0 {
                    None
                } else {
                    Some(eval_poly(base, &vals)?.root(*degree)?)
                }
            }
            AtomKind::Exponential { arg } => Some(eval_poly(arg, &vals)?.exp()?),
            AtomKind::Symbol => symbols(v),
        };
        vals.push(val);
    }
    Ok(vals)
}

/// Scalars that expressions can be evaluated into.
pub trait Scalar: Clone {
    /// A constant in the same numeric context as `self`.
    fn lift_coeff(&self, c: &Coefficient) -> Self;
    fn add(&self, o: &Self) -> Self;
    fn sub(&self, o: &Self) -> Self;
    fn mul(&self, o: &Self) -> Self;
    fn div(&self, o: &Self) -> MathResult<Self>;
    fn exp(&self) -> MathResult<Self>;
    fn root(&self, m: u32) -> MathResult<Self>;
    fn is_exact_zero(&self) -> bool;
}

/// Derivative of a radical-free-in-`v` polynomial by coordinate `v`,
/// following exponential atoms through their arguments (radicals are held
/// fixed; the caller accounts for them).
fn total_diff(t: &Tower, p: &Poly, v: usize) -> Poly {
    let mut d = p.diff(v);
    let supp = p.support();
    for (k, a) in t.atoms().iter().enumerate() {
        if let AtomKind::Exponential { arg } = &a.kind {
            let av = t.atom_var(k);
            if supp & (1 << av) != 0 {
                let da = arg.diff(v);
                if !da.is_zero() {
                    d = d.add(&p.euler_weight(av).mul(&da));
                }
            }
        }
    }
    d
}

pub fn eval_poly<S: Scalar>(p: &Poly, vals: &[Option<S>]) -> MathResult<S> {
    let proto = vals.iter().flatten().next().ok_or_else(|| MathError::Unsupported("no variables".into()))?;
    let mut acc = proto.lift_coeff(&Coefficient::zero());
    let mut pos: Vec<Vec<S>> = vec![Vec::new(); vals.len()];
    let mut neg: Vec<Vec<S>> = vec![Vec::new(); vals.len()];
    for (m, c) in p.terms() {
        let mut term = proto.lift_coeff(c);
        for v in 0..vals.len() {
            let e = m.get(v);
            if e == 0 {
                continue;
            }
            let x = vals[v].as_ref().ok_or_else(|| MathError::UnknownVariable(format!("v{v}")))?;
            let cache = if e > 0 { &mut pos[v] } else { &mut neg[v] };
            if cache.is_empty() {
                cache.push(if e > 0 { x.clone() } else { proto.lift_coeff(&Coefficient::one()).div(x)? });
            }
            let k = e.unsigned_abs() as usize;
            while cache.len() < k {
                let next = cache.last().unwrap().mul(&cache[0]);
                cache.push(next);
            }
            term = term.mul(&cache[k - 1]);
        }
        acc = acc.add(&term);
    }
    Ok(acc)
}

fn render_coeff_prefix(c: &Coefficient, has_factors: bool) -> (bool, String) {
    let neg = c.is_negative();
    let a = c.abs();
    let s = if a.is_one() && has_factors {
        String::new()
    } else if a.is_integer() {
        a.to_string()
    } else {
        format!("({a})")
    };
    (neg, s)
}

/// Canonical infix rendering of a polynomial over the tower's variables.
pub fn render_poly(t: &Tower, p: &Poly) -> String {
    if p.is_zero() {
        return "0".into();
    }
    let mut out = String::new();
    for (i, (m, c)) in p.terms().iter().enumerate() {
        let mut factors: Vec<String> = Vec::new();
        for v in 0..MAX_VARS {
            let e = m.get(v);
            if e == 0 {
                continue;
            }
            match t.atom_of_var(v).map(|a| &a.kind) {
                Some(AtomKind::Radical { base, degree }) => {
                    factors.push(format!("({})^({}/{})", render_poly(t, base), e, degree));
                }
                Some(AtomKind::Exponential { arg }) => {
                    let s = format!("exp({})", render_poly(t, arg));
                    factors.push(match e {
                        1 => s,
                        e if e < 0 => format!("{s}^({e})"),
                        e => format!("{s}^{e}"),
                    });
                }
                _ => {
                    let name = t.var_name(v);
                    factors.push(if e == 1 { name } else { format!("{name}^{e}") });
                }
            }
        }
        let (neg, cs) = render_coeff_prefix(c, !factors.is_empty());
        let mut body = cs;
        for f in factors {
            if !body.is_empty() {
                body.push('*');
            }
            body.push_str(&f);
        }
        if i == 0 {
            if neg {
                out.push('-');
            }
        } else {
            out.push_str(if neg { " - " } else { " + " });
        }
        out.push_str(&body);
    }
    out
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

impl fmt::Debug for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

impl PartialEq for Expression {
    /// Semantic equality: the difference normalizes to zero.
    fn eq(&self, other: &Self) -> bool {
        match self.sub(other) {
            Ok(d) => d.is_zero(),
            Err(_) => false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ex1_tower() -> (Arc<Tower>, usize, Poly) {
        let t = Tower::new(4).unwrap();
        let x2 = Poly::var(t.x(1));
        let y = |i| Poly::var(t.y(i));
        let p = x2.pow(2).mul(&y(0).pow(4)).add(&y(1).pow(4)).add(&y(2).pow(4)).add(&y(3).pow(4));
        let (t, a) = t.declare_radical(&p, 2).unwrap();
        (t, a, p)
    }

    #[test]
    fn cancellation() {
        let t = Tower::new(2).unwrap();
        let y1 = Expression::y(&t, 0);
        let y2 = Expression::y(&t, 1);
        let q = y1.div(&y2).unwrap().mul(&y2).unwrap();
        assert_eq!(q.render(), "y1");
        let d = y1.div(&y2).unwrap().sub(&y1.mul(&y2).unwrap().div(&y2.pow(2).unwrap()).unwrap()).unwrap();
        assert!(d.is_zero());
    }

    #[test]
    fn reciprocal_of_radical() {
        let (t, a, p) = ex1_tower();
        let a = Expression::var(&t, a);
        let inv = a.recip().unwrap();
        let expect = a.div(&Expression::from_poly(&t, p.clone())).unwrap();
        assert!(inv.sub(&expect).unwrap().is_zero());
        assert!(inv.mul(&a).unwrap().is_one());
        let y1 = Expression::y(&t, 0);
        let prod = a.add(&y1).unwrap().mul(&a.sub(&y1).unwrap()).unwrap();
        let want = Expression::from_poly(&t, p).sub(&y1.pow(2).unwrap()).unwrap();
        assert!(prod.sub(&want).unwrap().is_zero());
    }

    #[test]
    fn cube_root_inverse() {
        let t = Tower::new(4).unwrap();
        let q = Poly::var(t.y(1)).pow(3).add(&Poly::var(t.y(2)).pow(3)).add(&Poly::var(t.y(3)).pow(3));
        let (t, c) = t.declare_radical(&q, 3).unwrap();
        let c = Expression::var(&t, c);
        let inv = c.recip().unwrap();
        assert_eq!(inv.render(), "(y2^3 + y3^3 + y4^3)^(2/3)/(y2^3 + y3^3 + y4^3)");
        // (1 + c)^-1 * (1 + c) = 1
        let u = Expression::one(&t).add(&c).unwrap();
        assert!(u.recip().unwrap().mul(&u).unwrap().is_one());
    }

    #[test]
    fn derivative_of_radical() {
        let (t, a, _) = ex1_tower();
        let av = Expression::var(&t, a);
        let d = av.differentiate(t.y(0)).unwrap();
        // 2 x2^2 y1^3 a / P
        let x2 = Expression::x(&t, 1);
        let y1 = Expression::y(&t, 0);
        let p = av.pow(2).unwrap();
        let want = Expression::int(&t, 2)
            .mul(&x2.pow(2).unwrap())
            .unwrap()
            .mul(&y1.pow(3).unwrap())
            .unwrap()
            .mul(&av)
            .unwrap()
            .div(&p)
            .unwrap();
        assert!(d.sub(&want).unwrap().is_zero(), "{d}");
    }

    #[test]
    fn derivative_of_exponential() {
        let t = Tower::new(3).unwrap();
        let m = Monomial::var(t.x(0), 1).mul(&Monomial::var(t.x(2), 1));
        let (t, e, _) = t.declare_exp_term(&m, &Coefficient::from_int(-1)).unwrap();
        let ev = Expression::var(&t, e);
        let d = ev.differentiate(t.x(0)).unwrap();
        let want = Expression::x(&t, 2).neg().mul(&ev).unwrap();
        assert!(d.sub(&want).unwrap().is_zero());
        let inv = ev.recip().unwrap();
        assert_eq!(inv.render(), "exp(-x1*x3)^(-1)");
        assert!(inv.is_polynomial());
    }

    #[test]
    fn quotient_rule_example() {
        // d/dy2 of (3/16)(y2^3+y3^3+y4^3)/y2^2 = (3/16)(y2^3-2y3^3-2y4^3)/y2^3
        let t = Tower::new(4).unwrap();
        let y = |i| Poly::var(t.y(i));
        let q = y(1).pow(3).add(&y(2).pow(3)).add(&y(3).pow(3));
        let f = Expression::fraction(&t, q.scale(&Coefficient::new(3, 16)), &y(1).pow(2)).unwrap();
        let d = f.differentiate(t.y(1)).unwrap();
        let want_num = y(1).pow(3).sub(&y(2).pow(3).scale(&2.into())).sub(&y(3).pow(3).scale(&2.into()));
        let want = Expression::fraction(&t, want_num.scale(&Coefficient::new(3, 16)), &y(1).pow(3)).unwrap();
        assert!(d.sub(&want).unwrap().is_zero(), "{d}");
    }

    #[test]
    fn factored_denominators_add() {
        let t = Tower::new(2).unwrap();
        let y1 = Expression::y(&t, 0);
        let y2 = Expression::y(&t, 1);
        let s = y1.add(&y2).unwrap();
        let a = Expression::one(&t).div(&s).unwrap();
        let b = y1.div(&s.pow(2).unwrap()).unwrap();
        let sum = a.add(&b).unwrap();
        // (s + y1)/s^2
        let want = s.add(&y1).unwrap().div(&s.pow(2).unwrap()).unwrap();
        assert!(sum.sub(&want).unwrap().is_zero());
        assert_eq!(sum.den_factors().len(), 1);
        assert_eq!(sum.den_factors()[0].1, 2);
    }
}
