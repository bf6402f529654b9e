//! Multivariate gcd over the rationals and a light factor splitter.
//!
//! The gcd works recursively on one main variable at a time with a
//! primitive pseudo-remainder sequence. A cheap evaluation test detects
//! the common coprime case before any remainder sequence is formed.
//! Inputs must have nonnegative exponents.

use crate::coeff::Coefficient;
use crate::poly::{Monomial, Poly, MAX_VARS};

/// Normalizes to a primitive integer polynomial with positive leading
/// coefficient.
pub fn normalize(p: &Poly) -> Poly {
    if p.is_zero() {
        return Poly::zero();
    }
    p.scale(&p.primitive_factor())
}

fn vars_of(p: &Poly) -> Vec<usize> {
    let s = p.support();
    (0..MAX_VARS).filter(|i| s & (1 << i) != 0).collect()
}

/// Dense coefficient list in `v`, index = exponent.
fn dense_in(p: &Poly, v: usize) -> Vec<Poly> {
    let groups = p.coefficients_in(v);
    let deg = groups.first().map(|g| g.0).unwrap_or(0).max(0) as usize;
    let mut out = vec![Poly::zero(); deg + 1];
    for (e, c) in groups {
        out[e as usize] = c;
    }
    out
}

fn from_dense(cs: &[Poly], v: usize) -> Poly {
    let mut acc = Poly::zero();
    for (e, c) in cs.iter().enumerate() {
        if !c.is_zero() {
            acc = acc.add(&c.mul_monomial(&Monomial::var(v, e as i16)));
        }
    }
    acc
}

/// Gcd of the coefficients of `p` viewed as a polynomial in `v`.
pub fn content_in(p: &Poly, v: usize) -> Poly {
    let mut g = Poly::zero();
    for (_, c) in p.coefficients_in(v) {
        g = gcd(&g, &c);
        if g.is_constant() {
            return Poly::one();
        }
    }
    g
}

/// Greatest common divisor, normalized (primitive, positive leading
/// coefficient). `gcd(0, 0) = 0`.
pub fn gcd(a: &Poly, b: &Poly) -> Poly {
    if a.is_zero() {
        return normalize(b);
    }
    if b.is_zero() {
        return normalize(a);
    }
    if a.is_constant() || b.is_constant() {
        return Poly::one();
    }
    let ma = a.monomial_gcd();
    let mb = b.monomial_gcd();
    let mono = ma.min_exp(&mb);
    let a1 = if ma.is_one() { a.clone() } else { a.div_exact(&Poly::monomial(ma, Coefficient::one()), 0).expect("monomial content") };
    let b1 = if mb.is_one() { b.clone() } else { b.div_exact(&Poly::monomial(mb, Coefficient::one()), 0).expect("monomial content") };
    let g = gcd_no_monomial(&a1, &b1);
    normalize(&g.mul_monomial(&mono))
}

fn gcd_no_monomial(a: &Poly, b: &Poly) -> Poly {
    if a.is_constant() || b.is_constant() {
        return Poly::one();
    }
    let (a, b) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    if let Some(_) = b.div_exact(a, 0) {
        return normalize(a);
    }
    let sa = a.support();
    let sb = b.support();
    // A variable present in only one argument cannot occur in the gcd.
    for v in 0..MAX_VARS {
        let bit = 1 << v;
        if sa & bit != 0 && sb & bit == 0 {
            return gcd_with_content(b, a, v);
        }
        if sb & bit != 0 && sa & bit == 0 {
            return gcd_with_content(a, b, v);
        }
    }
    // Main variable: smallest maximum degree.
    let v = vars_of(a)
        .into_iter()
        .min_by_key(|&v| a.degree(v).max(b.degree(v)))
        .expect("nonconstant");
    let ca = content_in(a, v);
    let cb = content_in(b, v);
    let pa = if ca.is_one() { a.clone() } else { a.div_exact(&ca, 0).expect("content divides") };
    let pb = if cb.is_one() { b.clone() } else { b.div_exact(&cb, 0).expect("content divides") };
    let c = gcd(&ca, &cb);
    if images_coprime(&pa, &pb, v) {
        return c;
    }
    let g = prs_gcd(&pa, &pb, v);
    normalize(&c.mul(&g))
}

/// `gcd(x, y)` where `v` occurs in `y` only: equals `gcd(x, content_v(y))`.
fn gcd_with_content(x: &Poly, y: &Poly, v: usize) -> Poly {
    let mut g = x.clone();
    for (_, c) in y.coefficients_in(v) {
        g = gcd(&g, &c);
        if g.is_constant() {
            return Poly::one();
        }
    }
    g
}

/// Evaluates every variable except `v` at small integers and checks the
/// univariate images for coprimality. A coprime image with preserved
/// leading degrees proves the gcd has degree zero in `v`.
fn images_coprime(a: &Poly, b: &Poly, v: usize) -> bool {
    let da = a.degree(v);
    let db = b.degree(v);
    let others: Vec<usize> = vars_of(&a.add(b)).into_iter().filter(|&u| u != v).collect();
    const POINTS: [[i64; 4]; 3] = [[3, -5, 7, 2], [-4, 9, 5, -7], [11, 2, -3, 13]];
    for (attempt, pts) in POINTS.iter().enumerate() {
        let eval = |p: &Poly| -> Vec<Coefficient> {
            let mut out = vec![Coefficient::zero(); p.degree(v).max(0) as usize + 1];
            for (m, c) in p.terms() {
                let mut val = c.clone();
                for (k, &u) in others.iter().enumerate() {
                    let e = m.get(u);
                    if e != 0 {
                        let x = pts[k % 4] + (k / 4) as i64 * 17 + attempt as i64;
                        val *= &Coefficient::from_int(x).pow(e as i32);
                    }
                }
                out[m.get(v) as usize] += &val;
            }
            out
        };
        let ua = eval(a);
        let ub = eval(b);
        if ua[da as usize].is_zero() || ub[db as usize].is_zero() {
            continue;
        }
        return univariate_gcd_degree(ua, ub) == 0;
    }
    false
}

fn trim(p: &mut Vec<Coefficient>) {
    while p.len() > 1 && p.last().map(|c| c.is_zero()).unwrap_or(false) {
        p.pop();
    }
}

fn univariate_gcd_degree(mut a: Vec<Coefficient>, mut b: Vec<Coefficient>) -> usize {
    trim(&mut a);
    trim(&mut b);
    loop {
        if b.len() == 1 && b[0].is_zero() {
            return a.len() - 1;
        }
        if b.len() == 1 {
            return 0;
        }
        // a mod b
        let lb = b.last().unwrap().clone();
        while a.len() >= b.len() && !(a.len() == 1 && a[0].is_zero()) {
            let la = a.last().unwrap().clone();
            if la.is_zero() {
                a.pop();
                if a.is_empty() {
                    a.push(Coefficient::zero());
                }
                continue;
            }
            let q = &la / &lb;
            let shift = a.len() - b.len();
            for (i, bc) in b.iter().enumerate() {
                let t = &q * bc;
                a[i + shift] -= &t;
            }
            a.pop();
            if a.is_empty() {
                a.push(Coefficient::zero());
            }
        }
        trim(&mut a);
        // keep coefficients small
        if let Some(l) = a.iter().rev().find(|c| !c.is_zero()).cloned() {
            let inv = l.recip();
            for c in a.iter_mut() {
                *c *= &inv;
            }
        }
        std::mem::swap(&mut a, &mut b);
    }
}

/// Primitive pseudo-remainder sequence gcd of two polynomials that are
/// primitive in `v`.
fn prs_gcd(a: &Poly, b: &Poly, v: usize) -> Poly {
    let (mut f, mut g) = if a.degree(v) >= b.degree(v) { (a.clone(), b.clone()) } else { (b.clone(), a.clone()) };
    loop {
        if g.is_zero() {
            return primitive_in(&f, v);
        }
        if g.degree(v) == 0 {
            return Poly::one();
        }
        let r = pseudo_rem(&f, &g, v);
        f = g;
        g = if r.is_zero() { r } else { primitive_in(&r, v) };
    }
}

fn primitive_in(p: &Poly, v: usize) -> Poly {
    let c = content_in(p, v);
    let q = if c.is_one() { p.clone() } else { p.div_exact(&c, 0).expect("content divides") };
    normalize(&q)
}

fn pseudo_rem(f: &Poly, g: &Poly, v: usize) -> Poly {
    let gd = dense_in(g, v);
    let dg = gd.len() - 1;
    let lg = gd[dg].clone();
    let mut fd = dense_in(f, v);
    while fd.len() > dg && !fd.is_empty() {
        let df = fd.len() - 1;
        let lf = fd[df].clone();
        if lf.is_zero() {
            fd.pop();
            continue;
        }
        let shift = df - dg;
        for c in fd.iter_mut() {
            *c = c.mul(&lg);
        }
        for (i, gc) in gd.iter().enumerate() {
            let t = gc.mul(&lf);
            fd[i + shift] = fd[i + shift].sub(&t);
        }
        fd.pop();
    }
    from_dense(&fd, v)
}

/// Splits a polynomial into pairwise distinct nonconstant factors whose
/// product has the same zero set. Monomial variables come first as
/// single-variable factors; the remainder is split by contents in each
/// variable and by squarefree decomposition. Factors are normalized.
/// The constant multiplier is dropped.
pub fn split_factors(p: &Poly) -> Vec<Poly> {
    let mut out: Vec<Poly> = Vec::new();
    if p.is_zero() || p.is_constant() {
        return out;
    }
    let m = p.monomial_gcd();
    for v in 0..MAX_VARS {
        if m.get(v) > 0 {
            push_unique(&mut out, Poly::var(v));
        }
    }
    let rest = if m.is_one() { p.clone() } else { p.div_exact(&Poly::monomial(m, Coefficient::one()), 0).expect("monomial") };
    split_rec(&normalize(&rest), &mut out, 0);
    out
}

fn push_unique(out: &mut Vec<Poly>, f: Poly) {
    let f = normalize(&f);
    if f.is_constant() {
        return;
    }
    if !out.contains(&f) {
        out.push(f);
    }
}

fn split_rec(p: &Poly, out: &mut Vec<Poly>, depth: usize) {
    if p.is_constant() {
        return;
    }
    if depth > 12 || p.len() > 400 {
        push_unique(out, p.clone());
        return;
    }
    for v in vars_of(p) {
        let c = content_in(p, v);
        if !c.is_constant() {
            let q = p.div_exact(&c, 0).expect("content divides");
            split_rec(&normalize(&c), out, depth + 1);
            split_rec(&normalize(&q), out, depth + 1);
            return;
        }
    }
    // Primitive in every variable: squarefree part via derivative gcd.
    let v = vars_of(p).into_iter().min_by_key(|&v| p.degree(v)).expect("nonconstant");
    let d = p.diff(v);
    let g = gcd(p, &d);
    if g.is_constant() {
        push_unique(out, p.clone());
        return;
    }
    let q = p.div_exact(&g, 0).expect("gcd divides");
    split_rec(&normalize(&q), out, depth + 1);
    // Factors of g already divide q's zero set; keep only new ones.
    let mut sub = Vec::new();
    split_rec(&g, &mut sub, depth + 1);
    for f in sub {
        if !out.iter().any(|o| o.div_exact(&f, 0).is_some() || f.div_exact(o, 0).is_some()) {
            push_unique(out, f);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x(v: usize) -> Poly {
        Poly::var(v)
    }

    fn c(n: i64) -> Poly {
        Poly::constant(Coefficient::from_int(n))
    }

    #[test]
    fn gcd_of_products() {
        let f = x(0).add(&x(1)).add(&c(1));
        let g = x(0).mul(&x(2)).sub(&c(3));
        let h = x(1).sub(&x(2));
        let a = f.mul(&g).mul(&x(0));
        let b = f.mul(&h).mul(&x(0)).mul(&x(0));
        assert_eq!(gcd(&a, &b), normalize(&f.mul(&x(0))));
        assert!(gcd(&g, &h).is_one());
    }

    #[test]
    fn gcd_with_squares() {
        let f = x(0).mul(&x(0)).add(&x(1));
        let a = f.pow(2).mul(&x(2).add(&c(2)));
        let b = f.pow(3);
        assert_eq!(gcd(&a, &b), normalize(&f.pow(2)));
    }

    #[test]
    fn split_factors_distinct() {
        let f = x(1).pow(3).add(&x(2).pow(3)).add(&x(3).pow(3));
        let p = f.pow(2).mul(&x(2).pow(2)).scale(&Coefficient::new(3, 16));
        let fs = split_factors(&p);
        assert_eq!(fs.len(), 2);
        assert!(fs.contains(&x(2)));
        assert!(fs.contains(&normalize(&f)));
    }

    #[test]
    fn split_by_content() {
        // (y1 + 1)(y2 - y1) has content in neither variable alone, but
        // (y1+1)*(y2+3) splits by content in y2.
        let p = x(0).add(&c(1)).mul(&x(1).add(&c(3)));
        let fs = split_factors(&p);
        assert_eq!(fs.len(), 2);
    }
}
