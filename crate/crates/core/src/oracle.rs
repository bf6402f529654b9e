//! Independent numeric verification.
//!
//! F² is lifted to a truncated Taylor jet at a point and every pipeline
//! object is recomputed in jet arithmetic; the only thing shared with the
//! symbolic path is the F² expression itself. Jets are truncated
//! anisotropically (x-degree ≤ 2, total degree ≤ 5), which covers every
//! derivative the pipeline takes: ∂̇⁵F² for PB, δ²-type terms for RC/RB.

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, OnceLock};

use astro_float::{BigFloat, Consts, Radix, RoundingMode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::coeff::Coefficient;
use crate::error::{MathError, MathResult};
use crate::expr::{eval_poly, Expression, Scalar};
use crate::finsler::FinslerSpace;
use crate::nullity::{Assumptions, LinearSystem, Relation};
use crate::poly::Poly;
use crate::tensor::{all_indices, Tensor};

const RM: RoundingMode = RoundingMode::ToEven;
static PRECISION_BITS: AtomicUsize = AtomicUsize::new(224);

thread_local! {
    static CONSTS: RefCell<Consts> = RefCell::new(Consts::new().expect("constant cache"));
}

/// Sets the working precision in decimal digits (minimum 20).
pub fn set_precision_digits(digits: usize) {
    let bits = (digits.max(20) as f64 * std::f64::consts::LOG2_10).ceil() as usize + 32;
    PRECISION_BITS.store(bits.div_ceil(64) * 64, Ordering::Relaxed);
}

pub fn precision_digits() -> usize {
    ((PRECISION_BITS.load(Ordering::Relaxed) - 32) as f64 / std::f64::consts::LOG2_10) as usize
}

fn prec() -> usize {
    PRECISION_BITS.load(Ordering::Relaxed)
}

/// A high-precision real number.
#[derive(Clone, Debug)]
pub struct Real(BigFloat);

impl Real {
    pub fn zero() -> Real {
        Real(BigFloat::from_i64(0, prec()))
    }

    pub fn from_i64(v: i64) -> Real {
        Real(BigFloat::from_i64(v, prec()))
    }

    pub fn from_coeff(c: &Coefficient) -> Real {
        let big = |s: String| {
            CONSTS.with(|cc| BigFloat::parse(&s, Radix::Dec, prec(), RM, &mut cc.borrow_mut()))
        };
        let n = big(c.numer().to_string());
        if c.is_integer() {
            return Real(n);
        }
        Real(n.div(&big(c.denom().to_string()), prec(), RM))
    }

    pub fn abs(&self) -> Real {
        Real(self.0.abs())
    }

    pub fn is_negative(&self) -> bool {
        self.0.is_negative()
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn gt(&self, o: &Real) -> bool {
        self.0.cmp(&o.0).map(|c| c > 0).unwrap_or(false)
    }

    pub fn max(&self, o: &Real) -> Real {
        if o.gt(self) {
            o.clone()
        } else {
            self.clone()
        }
    }

    pub fn neg(&self) -> Real {
        Real(self.0.neg())
    }

    pub fn sqrt(&self) -> Real {
        Real(self.0.sqrt(prec(), RM))
    }

    fn ln(&self) -> Real {
        Real(CONSTS.with(|cc| self.0.ln(prec(), RM, &mut cc.borrow_mut())))
    }

    pub fn to_f64(&self) -> f64 {
        if self.0.is_zero() {
            return 0.0;
        }
        let s = CONSTS.with(|cc| self.0.format(Radix::Dec, RM, &mut cc.borrow_mut()));
        s.ok().and_then(|s| s.parse::<f64>().ok()).unwrap_or(f64::NAN)
    }

    fn finite(self) -> MathResult<Real> {
        if self.0.is_nan() || self.0.is_inf() {
            Err(MathError::Pole)
        } else {
            Ok(self)
        }
    }
}

impl Scalar for Real {
    fn lift_coeff(&self, c: &Coefficient) -> Self {
        Real::from_coeff(c)
    }
    fn add(&self, o: &Self) -> Self {
        Real(self.0.add(&o.0, prec(), RM))
    }
    fn sub(&self, o: &Self) -> Self {
        Real(self.0.sub(&o.0, prec(), RM))
    }
    fn mul(&self, o: &Self) -> Self {
        Real(self.0.mul(&o.0, prec(), RM))
    }
    fn div(&self, o: &Self) -> MathResult<Self> {
        if o.0.is_zero() {
            return Err(MathError::Pole);
        }
        Real(self.0.div(&o.0, prec(), RM)).finite()
    }
    fn exp(&self) -> MathResult<Self> {
        Real(CONSTS.with(|cc| self.0.exp(prec(), RM, &mut cc.borrow_mut()))).finite()
    }
    fn root(&self, m: u32) -> MathResult<Self> {
        if self.0.is_zero() {
            return Ok(self.clone());
        }
        if self.is_negative() {
            if m % 2 == 0 {
                return Err(MathError::InvalidRadical);
            }
            return Ok(self.neg().root(m)?.neg());
        }
        if m == 2 {
            return Ok(self.sqrt());
        }
        self.ln().div(&Real::from_i64(m as i64))?.exp()
    }
    fn is_exact_zero(&self) -> bool {
        self.0.is_zero()
    }
}

/// Monomial table shared by all jets over `nvars` variables, the first
/// `nx` of which are "x-type".
#[derive(Debug)]
pub struct JetSpace {
    nvars: usize,
    nx: usize,
    pub max_x: u8,
    pub max_total: u8,
    monos: Vec<Vec<u8>>,
    index: HashMap<Vec<u8>, usize>,
    xdeg: Vec<u8>,
    tdeg: Vec<u8>,
    /// For each monomial i: (j, i+j).
    mul: Vec<Vec<(u32, u32)>>,
}

impl JetSpace {
    fn new(nx: usize, nvars: usize, max_x: u8, max_total: u8) -> JetSpace {
        let mut monos = Vec::new();
        fn rec(v: usize, cur: &mut Vec<u8>, nx: usize, mx: u8, mt: u8, out: &mut Vec<Vec<u8>>) {
            if v == cur.len() {
                out.push(cur.clone());
                return;
            }
            let xs: u8 = cur[..v.min(nx)].iter().sum();
            let ts: u8 = cur[..v].iter().sum();
            let cap = if v < nx { (mx - xs).min(mt - ts) } else { mt - ts };
            for e in 0..=cap {
                cur[v] = e;
                rec(v + 1, cur, nx, mx, mt, out);
            }
            cur[v] = 0;
        }
        rec(0, &mut vec![0; nvars], nx, max_x, max_total, &mut monos);
        monos.sort_by_key(|m| (m.iter().sum::<u8>(), std::cmp::Reverse(m.clone())));
        let index: HashMap<Vec<u8>, usize> = monos.iter().enumerate().map(|(i, m)| (m.clone(), i)).collect();
        let xdeg: Vec<u8> = monos.iter().map(|m| m[..nx].iter().sum()).collect();
        let tdeg: Vec<u8> = monos.iter().map(|m| m.iter().sum()).collect();
        let mut mul = vec![Vec::new(); monos.len()];
        for (i, a) in monos.iter().enumerate() {
            for (j, b) in monos.iter().enumerate() {
                if xdeg[i] + xdeg[j] > max_x || tdeg[i] + tdeg[j] > max_total {
                    continue;
                }
                let c: Vec<u8> = a.iter().zip(b).map(|(x, y)| x + y).collect();
                mul[i].push((j as u32, index[&c] as u32));
            }
        }
        JetSpace { nvars, nx, max_x, max_total, monos, index, xdeg, tdeg, mul }
    }

    /// Cached space for `n`-dimensional Finsler data (x then y variables).
    pub fn for_dim(n: usize, max_x: u8, max_total: u8) -> Arc<JetSpace> {
        static CACHE: OnceLock<Mutex<HashMap<(usize, u8, u8), Arc<JetSpace>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(Default::default);
        let mut c = cache.lock().expect("jet cache");
        c.entry((n, max_x, max_total)).or_insert_with(|| Arc::new(JetSpace::new(n, 2 * n, max_x, max_total))).clone()
    }

    pub fn len(&self) -> usize {
        self.monos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.monos.is_empty()
    }
}

/// Truncated Taylor expansion: `coeffs[k]` multiplies `(z − z₀)^monos[k]`
/// (`None` is zero). Coefficients are valid for monomials with x-degree
/// ≤ `ox` and total degree ≤ `ot`; higher ones are ignored.
#[derive(Clone, Debug)]
pub struct Jet {
    space: Arc<JetSpace>,
    ox: u8,
    ot: u8,
    coeffs: Vec<Option<Real>>,
}

fn nz(r: Real) -> Option<Real> {
    (!r.is_zero()).then_some(r)
}

impl Jet {
    pub fn constant(space: &Arc<JetSpace>, v: Real) -> Jet {
        let mut coeffs = vec![None; space.len()];
        coeffs[0] = nz(v);
        Jet { space: space.clone(), ox: space.max_x, ot: space.max_total, coeffs }
    }

    /// The coordinate function `z_v` expanded at `value`.
    pub fn variable(space: &Arc<JetSpace>, v: usize, value: Real) -> Jet {
        let mut j = Jet::constant(space, value);
        let mut m = vec![0u8; space.nvars];
        m[v] = 1;
        if let Some(&k) = space.index.get(&m) {
            j.coeffs[k] = Some(Real::from_i64(1));
        }
        j
    }

    pub fn value(&self) -> Real {
        self.coeffs[0].clone().unwrap_or_else(Real::zero)
    }

    pub fn orders(&self) -> (u8, u8) {
        (self.ox, self.ot)
    }

    fn live(&self, k: usize) -> bool {
        self.space.xdeg[k] <= self.ox && self.space.tdeg[k] <= self.ot
    }

    /// Coefficient of a monomial given as exponent vector.
    pub fn coefficient(&self, exps: &[u8]) -> Option<Real> {
        let k = *self.space.index.get(exps)?;
        self.live(k).then(|| self.coeffs[k].clone().unwrap_or_else(Real::zero))
    }

    fn zip(&self, o: &Jet, neg: bool) -> Jet {
        let ox = self.ox.min(o.ox);
        let ot = self.ot.min(o.ot);
        let sp = &self.space;
        let coeffs = (0..self.coeffs.len())
            .map(|k| {
                if sp.xdeg[k] > ox || sp.tdeg[k] > ot {
                    return None;
                }
                match (&self.coeffs[k], &o.coeffs[k]) {
                    (None, None) => None,
                    (Some(a), None) => Some(a.clone()),
                    (None, Some(b)) => Some(if neg { b.neg() } else { b.clone() }),
                    (Some(a), Some(b)) => nz(if neg { a.sub(b) } else { a.add(b) }),
                }
            })
            .collect();
        Jet { space: self.space.clone(), ox, ot, coeffs }
    }

    fn scale_real(&self, c: &Real) -> Jet {
        Jet { coeffs: self.coeffs.iter().map(|x| x.as_ref().map(|x| x.mul(c))).collect(), ..self.clone() }
    }

    /// `Σ_k a_k u^k` for the tail `u` (nilpotent at this truncation).
    fn series(&self, a: &[Real]) -> Jet {
        let mut u = self.clone();
        u.coeffs[0] = None;
        let mut acc = Jet::constant(&self.space, a[a.len() - 1].clone());
        for c in a[..a.len() - 1].iter().rev() {
            acc = acc.mul(&u);
            acc.coeffs[0] = nz(acc.value().add(c));
        }
        acc.ox = acc.ox.min(self.ox);
        acc.ot = acc.ot.min(self.ot);
        acc
    }

    /// Derivative along variable `v`.
    pub fn diff(&self, v: usize) -> Jet {
        let sp = &self.space;
        let is_x = v < sp.nx;
        let ox = if is_x { self.ox.saturating_sub(1) } else { self.ox };
        let ot = self.ot.saturating_sub(1);
        let mut coeffs = vec![None; self.coeffs.len()];
        for (k, m) in sp.monos.iter().enumerate() {
            if sp.xdeg[k] > ox || sp.tdeg[k] > ot {
                continue;
            }
            let mut up = m.clone();
            up[v] += 1;
            if let Some(&s) = sp.index.get(&up) {
                if let (true, Some(c)) = (self.live(s), &self.coeffs[s]) {
                    coeffs[k] = Some(c.mul(&Real::from_i64(up[v] as i64)));
                }
            }
        }
        Jet { space: self.space.clone(), ox, ot, coeffs }
    }
}

impl Scalar for Jet {
    fn lift_coeff(&self, c: &Coefficient) -> Self {
        Jet::constant(&self.space, Real::from_coeff(c))
    }
    fn add(&self, o: &Self) -> Self {
        self.zip(o, false)
    }
    fn sub(&self, o: &Self) -> Self {
        self.zip(o, true)
    }
    fn mul(&self, o: &Self) -> Self {
        let sp = &self.space;
        let ox = self.ox.min(o.ox);
        let ot = self.ot.min(o.ot);
        let mut coeffs: Vec<Option<Real>> = vec![None; self.coeffs.len()];
        for (i, a) in self.coeffs.iter().enumerate() {
            let Some(a) = a else { continue };
            if sp.xdeg[i] > ox || sp.tdeg[i] > ot {
                continue;
            }
            for &(j, k) in &sp.mul[i] {
                let (j, k) = (j as usize, k as usize);
                let Some(b) = &o.coeffs[j] else { continue };
                if sp.xdeg[k] > ox || sp.tdeg[k] > ot {
                    continue;
                }
                let p = a.mul(b);
                coeffs[k] = Some(match &coeffs[k] {
                    Some(c) => c.add(&p),
                    None => p,
                });
            }
        }
        Jet { space: self.space.clone(), ox, ot, coeffs }
    }
    fn div(&self, o: &Self) -> MathResult<Self> {
        let a0 = o.value();
        if a0.is_zero() {
            return Err(MathError::Pole);
        }
        let inv = Real::from_i64(1).div(&a0)?;
        let r = inv.neg();
        // 1/(a0 + u) = (1/a0) Σ (−u/a0)^k
        let mut a = Vec::new();
        let mut p = inv.clone();
        for _ in 0..=o.ot {
            a.push(p.clone());
            p = p.mul(&r);
        }
        Ok(self.mul(&o.series(&a)))
    }
    fn exp(&self) -> MathResult<Self> {
        let e0 = self.value().exp()?;
        let mut a = Vec::new();
        let mut f = e0;
        for k in 0..=self.ot as i64 {
            a.push(f.clone());
            f = f.div(&Real::from_i64(k + 1))?;
        }
        Ok(self.series(&a))
    }
    fn root(&self, m: u32) -> MathResult<Self> {
        let a0 = self.value();
        if a0.is_zero() {
            return Err(MathError::InvalidRadical);
        }
        let r0 = a0.root(m)?;
        // (a0 + u)^(1/m) = r0 Σ binom(1/m, k) (u/a0)^k
        let q = Coefficient::new(1, m as i64);
        let inv_a0 = Real::from_i64(1).div(&a0)?;
        let mut a = Vec::new();
        let mut binom = Coefficient::one();
        let mut pw = r0;
        for k in 0..=self.ot as i64 {
            a.push(pw.mul(&Real::from_coeff(&binom)));
            binom = binom.clone() * (q.clone() - Coefficient::from_int(k)) / Coefficient::from_int(k + 1);
            pw = pw.mul(&inv_a0);
        }
        Ok(self.series(&a))
    }
    fn is_exact_zero(&self) -> bool {
        (0..self.coeffs.len()).all(|k| !self.live(k) || self.coeffs[k].is_none())
    }
}

/// Expands an expression at a point (coordinates x₁..xₙ, y₁..yₙ).
pub fn jet_lift(f: &Expression, point: &[Real], space: &Arc<JetSpace>) -> MathResult<Jet> {
    let vars: Vec<Jet> = point.iter().enumerate().map(|(v, p)| Jet::variable(space, v, p.clone())).collect();
    f.evaluate_with(&vars, &|_| None)
}

/// A numeric component array, row-major over the index tuple.
#[derive(Clone, Debug)]
pub struct NumTensor {
    pub name: String,
    pub rank: usize,
    pub dim: usize,
    pub data: Vec<Real>,
}

impl NumTensor {
    fn offset(&self, idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, &i| acc * self.dim + i)
    }

    pub fn get(&self, idx: &[usize]) -> &Real {
        &self.data[self.offset(idx)]
    }
}

/// Flat jet array helper.
struct JetArray {
    rank: usize,
    dim: usize,
    data: Vec<Jet>,
}

impl JetArray {
    fn build(rank: usize, dim: usize, mut f: impl FnMut(&[usize]) -> MathResult<Jet>) -> MathResult<JetArray> {
        let data = all_indices(rank, dim).iter().map(|i| f(i)).collect::<MathResult<_>>()?;
        Ok(JetArray { rank, dim, data })
    }
    fn at(&self, idx: &[usize]) -> &Jet {
        &self.data[idx.iter().fold(0, |acc, &i| acc * self.dim + i)]
    }
    fn values(&self, name: &str) -> NumTensor {
        NumTensor { name: name.into(), rank: self.rank, dim: self.dim, data: self.data.iter().map(|j| j.value()).collect() }
    }
}

/// Every pipeline object evaluated at one point.
#[derive(Clone, Debug)]
pub struct NumericPipeline {
    pub tensors: Vec<NumTensor>,
}

impl NumericPipeline {
    pub fn get(&self, name: &str) -> Option<&NumTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }
}

fn sum(terms: impl Iterator<Item = Jet>, zero: &Jet) -> Jet {
    terms.fold(zero.clone(), |a, b| a.add(&b))
}

/// Inverse of a jet matrix by Gauss–Jordan with partial pivoting on values.
fn invert(m: &[Vec<Jet>]) -> MathResult<Vec<Vec<Jet>>> {
    let n = m.len();
    let sp = &m[0][0].space;
    let mut a: Vec<Vec<Jet>> = m.to_vec();
    let mut inv: Vec<Vec<Jet>> = (0..n)
        .map(|i| (0..n).map(|j| Jet::constant(sp, Real::from_i64((i == j) as i64))).collect())
        .collect();
    let scale = m.iter().flatten().map(|j| j.value().abs()).fold(Real::zero(), |a, b| a.max(&b));
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| {
            let (a, b) = (a[i][c].value().abs(), a[j][c].value().abs());
            if a.gt(&b) { std::cmp::Ordering::Greater } else { std::cmp::Ordering::Less }
        }).expect("nonempty");
        let tiny = scale.mul(&Real::from_coeff(&Coefficient::new(1, 1_000_000_000_000_000_000)));
        if !a[p][c].value().abs().gt(&tiny) {
            return Err(MathError::Degenerate);
        }
        a.swap(c, p);
        inv.swap(c, p);
        let piv = a[c][c].clone();
        let one = Jet::constant(sp, Real::from_i64(1));
        let r = one.div(&piv)?;
        for k in 0..n {
            a[c][k] = a[c][k].mul(&r);
            inv[c][k] = inv[c][k].mul(&r);
        }
        for i in 0..n {
            if i == c {
                continue;
            }
            let f = a[i][c].clone();
            for k in 0..n {
                a[i][k] = a[i][k].sub(&f.mul(&a[c][k]));
                inv[i][k] = inv[i][k].sub(&f.mul(&inv[c][k]));
            }
        }
    }
    Ok(inv)
}

/// Replays the whole pipeline in jet arithmetic at `point`.
pub fn numeric_pipeline(space: &FinslerSpace, point: &[Real]) -> MathResult<NumericPipeline> {
    let n = space.dim();
    let sp = JetSpace::for_dim(n, 2, 5);
    let f2 = jet_lift(space.f2(), point, &sp)?;
    let (xv, yv) = (|i: usize| i, |i: usize| n + i);
    let zero = Jet::constant(&sp, Real::zero());
    let half = Real::from_coeff(&Coefficient::new(1, 2));
    let quarter = Real::from_coeff(&Coefficient::new(1, 4));
    let yj: Vec<Jet> = (0..n).map(|i| Jet::variable(&sp, yv(i), point[yv(i)].clone())).collect();

    let dyf: Vec<Jet> = (0..n).map(|i| f2.diff(yv(i))).collect();
    let g = JetArray::build(2, n, |ix| Ok(dyf[ix[0]].diff(yv(ix[1])).scale_real(&half)))?;
    let gm: Vec<Vec<Jet>> = (0..n).map(|i| (0..n).map(|j| g.at(&[i, j]).clone()).collect()).collect();
    let gi = invert(&gm)?;
    let ginv = JetArray::build(2, n, |ix| Ok(gi[ix[0]][ix[1]].clone()))?;

    let w: Vec<Jet> = (0..n)
        .map(|l| {
            let s = sum((0..n).map(|k| dyf[l].diff(xv(k)).mul(&yj[k])), &zero);
            s.sub(&f2.diff(xv(l)))
        })
        .collect();
    let gs = JetArray::build(1, n, |ix| {
        Ok(sum((0..n).map(|l| ginv.at(&[ix[0], l]).mul(&w[l])), &zero).scale_real(&quarter))
    })?;
    let nn = JetArray::build(2, n, |ix| Ok(gs.at(&[ix[0]]).diff(yv(ix[1]))))?;
    let gb = JetArray::build(3, n, |ix| Ok(nn.at(&ix[..2]).diff(yv(ix[2]))))?;
    let pb = JetArray::build(4, n, |ix| Ok(gb.at(&ix[..3]).diff(yv(ix[3]))))?;

    let delta = |f: &Jet, k: usize| -> Jet {
        let s = sum((0..n).map(|m| nn.at(&[m, k]).mul(&f.diff(yv(m)))), &zero);
        f.diff(xv(k)).sub(&s)
    };
    let dn = JetArray::build(3, n, |ix| Ok(delta(nn.at(&ix[..2]), ix[2])))?;
    let rg = JetArray::build(3, n, |ix| Ok(dn.at(&[ix[0], ix[1], ix[2]]).sub(dn.at(&[ix[0], ix[2], ix[1]]))))?;
    let rb = JetArray::build(4, n, |ix| Ok(rg.at(&[ix[0], ix[2], ix[3]]).diff(yv(ix[1]))))?;

    let dg = JetArray::build(3, n, |ix| Ok(delta(g.at(&ix[..2]), ix[2])))?;
    let gamma = JetArray::build(3, n, |ix| {
        let (i, j, k) = (ix[0], ix[1], ix[2]);
        let s = sum(
            (0..n).map(|h| {
                let low = dg.at(&[h, k, j]).add(dg.at(&[j, h, k])).sub(dg.at(&[j, k, h]));
                ginv.at(&[i, h]).mul(&low)
            }),
            &zero,
        );
        Ok(s.scale_real(&half))
    })?;
    let cartan = JetArray::build(3, n, |ix| {
        let (i, j, k) = (ix[0], ix[1], ix[2]);
        Ok(sum((0..n).map(|h| ginv.at(&[i, h]).mul(&g.at(&[j, k]).diff(yv(h)))), &zero).scale_real(&half))
    })?;
    let dgam = JetArray::build(4, n, |ix| Ok(delta(gamma.at(&ix[..3]), ix[3])))?;
    let rc = JetArray::build(4, n, |ix| {
        let (h, i, j, k) = (ix[0], ix[1], ix[2], ix[3]);
        let mut e = dgam.at(&[h, i, j, k]).sub(dgam.at(&[h, i, k, j]));
        for m in 0..n {
            e = e.add(&gamma.at(&[m, i, j]).mul(gamma.at(&[h, m, k])));
            e = e.sub(&gamma.at(&[m, i, k]).mul(gamma.at(&[h, m, j])));
            e = e.add(&cartan.at(&[h, i, m]).mul(rg.at(&[m, j, k])));
        }
        Ok(e)
    })?;

    Ok(NumericPipeline {
        tensors: vec![
            g.values("g"),
            ginv.values("ginv"),
            gs.values("G"),
            nn.values("N"),
            gb.values("GB"),
            pb.values("PB"),
            rg.values("RG"),
            rb.values("RB"),
            gamma.values("Gamma"),
            cartan.values("C"),
            rc.values("RC"),
        ],
    })
}

/// Components of one pipeline object at a point.
pub fn numeric_tensor(space: &FinslerSpace, which: &str, point: &[Real]) -> MathResult<NumTensor> {
    numeric_pipeline(space, point)?
        .get(which)
        .cloned()
        .ok_or_else(|| MathError::Tensor(format!("no pipeline object {which}")))
}

/// A sampled point plus the seed and attempt that produced it.
#[derive(Clone, Debug)]
pub struct SamplePoint {
    pub coords: Vec<Real>,
    pub seed: u64,
    pub index: usize,
}

impl SamplePoint {
    pub fn render(&self) -> Vec<f64> {
        self.coords.iter().map(|c| c.to_f64()).collect()
    }
}

fn random_rational(rng: &mut ChaCha8Rng) -> Coefficient {
    let den = rng.gen_range(1..=7i64);
    let num = rng.gen_range(-3 * den..=3 * den);
    Coefficient::new(num, den)
}

/// Finds a real root in the variable `v` of a polynomial whose other
/// variables are fixed: exactly when linear, otherwise by bisection on the
/// first sign change found in the Cauchy bound interval.
fn solve_for(p: &Poly, v: usize, vals: &[Option<Real>]) -> Option<Real> {
    let coeffs: Vec<(i16, Real)> = p
        .coefficients_in(v)
        .into_iter()
        .map(|(k, c)| eval_poly(&c, vals).ok().map(|r| (k, r)))
        .collect::<Option<_>>()?;
    let lead = coeffs.iter().max_by_key(|(k, _)| *k)?;
    if lead.0 <= 0 || lead.1.is_zero() {
        return None;
    }
    let bound = coeffs
        .iter()
        .filter(|(k, _)| *k < lead.0)
        .map(|(_, c)| c.div(&lead.1).map(|q| q.abs()).unwrap_or_else(|_| Real::zero()))
        .fold(Real::zero(), |a, b| a.max(&b))
        .add(&Real::from_i64(1));
    let eval = |x: &Real| -> Real {
        let mut acc = Real::zero();
        for (k, c) in &coeffs {
            let mut t = c.clone();
            for _ in 0..*k {
                t = t.mul(x);
            }
            acc = acc.add(&t);
        }
        acc
    };
    if lead.0 == 1 {
        let c0 = coeffs.iter().find(|(k, _)| *k == 0).map(|(_, c)| c.clone()).unwrap_or_else(Real::zero);
        return c0.neg().div(&lead.1).ok();
    }
    // Scan for a sign change, then bisect inside it.
    const STEPS: i64 = 64;
    let width = bound.add(&bound).mul(&Real::from_coeff(&Coefficient::new(1, STEPS)));
    let mut lo = bound.neg();
    let mut flo = eval(&lo);
    let mut hi = lo.clone();
    let mut found = false;
    for _ in 0..STEPS {
        hi = lo.add(&width);
        let fhi = eval(&hi);
        if flo.is_zero() {
            return Some(lo);
        }
        if flo.is_negative() != fhi.is_negative() || fhi.is_zero() {
            found = true;
            break;
        }
        lo = hi.clone();
        flo = fhi;
    }
    if !found {
        return None;
    }
    let lo_neg = flo.is_negative();
    let half = Real::from_coeff(&Coefficient::new(1, 2));
    for _ in 0..prec() + 8 {
        let mid = lo.add(&hi).mul(&half);
        let fm = eval(&mid);
        if fm.is_zero() {
            return Some(mid);
        }
        if fm.is_negative() == lo_neg {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(lo.add(&hi).mul(&half))
}

/// Gauss–Newton projection onto `exprs = 0` with minimum-norm steps
/// `δ = Jᵀ (J Jᵀ)⁻¹ F`. Returns whether it converged.
fn project_to_zeros(exprs: &[Expression], jac: &[Vec<Expression>], coords: &mut [Real]) -> bool {
    let tiny = Real::from_coeff(&Coefficient::from_int(10).pow(-(precision_digits() as i32) * 3 / 4));
    let huge = Real::from_i64(1_000_000);
    for _ in 0..100 {
        let eval = |e: &Expression| e.evaluate_with(coords, &|_| None);
        let Ok(f) = exprs.iter().map(eval).collect::<MathResult<Vec<Real>>>() else {
            return false;
        };
        if f.iter().all(|v| !v.abs().gt(&tiny)) {
            return true;
        }
        let Ok(j) = jac
            .iter()
            .map(|row| row.iter().map(eval).collect::<MathResult<Vec<Real>>>())
            .collect::<MathResult<Vec<_>>>()
        else {
            return false;
        };
        let m = exprs.len();
        let mut a: Vec<Vec<Real>> = (0..m).map(|r| (0..m).map(|c| dot(&j[r], &j[c])).collect()).collect();
        let mut w = f;
        // Gaussian elimination with partial pivoting on the m×m system.
        for col in 0..m {
            let Some(piv) = (col..m).max_by(|&x, &y| {
                if a[x][col].abs().gt(&a[y][col].abs()) {
                    std::cmp::Ordering::Greater
                } else {
                    std::cmp::Ordering::Less
                }
            }) else {
                return false;
            };
            if a[piv][col].is_zero() {
                return false;
            }
            a.swap(col, piv);
            w.swap(col, piv);
            for r in col + 1..m {
                let Ok(q) = a[r][col].div(&a[col][col]) else { return false };
                for c in col..m {
                    a[r][c] = a[r][c].sub(&q.mul(&a[col][c]));
                }
                w[r] = w[r].sub(&q.mul(&w[col]));
            }
        }
        for r in (0..m).rev() {
            let mut acc = w[r].clone();
            for c in r + 1..m {
                acc = acc.sub(&a[r][c].mul(&w[c]));
            }
            let Ok(v) = acc.div(&a[r][r]) else { return false };
            w[r] = v;
        }
        for (k, x) in coords.iter_mut().enumerate() {
            let step = (0..m).fold(Real::zero(), |acc, r| acc.add(&j[r][k].mul(&w[r])));
            *x = x.sub(&step);
            if x.abs().gt(&huge) {
                return false;
            }
        }
    }
    false
}

/// Draws `count` points in [−3,3]²ⁿ satisfying the assumptions: nonzero
/// conditions numerically (|value| > 10⁻⁶), zero conditions by solving for
/// one coordinate variable each (preferably one they are linear in), with
/// a Newton projection as fallback for coupled conditions. With
/// `require_metric`, F² must be positive and g numerically invertible.
pub fn sample_points(
    space: &FinslerSpace,
    assumptions: &Assumptions,
    count: usize,
    seed: u64,
    require_metric: bool,
) -> MathResult<Vec<SamplePoint>> {
    let t = space.tower();
    let n2 = 2 * t.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let thresh = Real::from_coeff(&Coefficient::new(1, 1_000_000));
    let mut out = Vec::new();
    let zeros: Vec<&Poly> = assumptions.zeros().collect();
    let zero_exprs: Vec<Expression> =
        assumptions.list().iter().filter(|a| a.relation == Relation::Zero).map(|a| a.expr.clone()).collect();
    let coord_var = |k: usize| if k < t.dim() { t.x(k) } else { t.y(k - t.dim()) };
    let jacobian: Vec<Vec<Expression>> = zero_exprs
        .iter()
        .map(|e| (0..n2).map(|k| e.differentiate(coord_var(k))).collect::<MathResult<_>>())
        .collect::<MathResult<_>>()?;
    let mut attempts = 0;
    while out.len() < count {
        attempts += 1;
        if attempts > 200 * count + 1000 {
            return Err(MathError::Unsupported(format!(
                "could not sample {count} valid points (got {})",
                out.len()
            )));
        }
        let mut coords: Vec<Real> = (0..n2).map(|_| Real::from_coeff(&random_rational(&mut rng))).collect();
        let mut ok = true;
        // Solve each zero condition for a variable that occurs in no condition
        // solved before it, so later steps cannot undo earlier ones.
        let mut todo: Vec<&Poly> = zeros.clone();
        let mut solved_support = 0u32;
        while ok && !todo.is_empty() {
            let vals: Vec<Option<Real>> = coords.iter().cloned().map(Some).collect();
            let mut choices: Vec<(usize, usize)> = Vec::new();
            for (i, p) in todo.iter().enumerate() {
                for v in (0..n2).rev() {
                    if p.degree(v) > 0 && solved_support & (1 << v) == 0 {
                        choices.push((i, v));
                    }
                }
            }
            choices.sort_by_key(|&(i, v)| todo[i].degree(v) != 1);
            match choices.iter().find_map(|&(i, v)| solve_for(todo[i], v, &vals).map(|r| (i, v, r))) {
                Some((i, v, r)) => {
                    coords[v] = r;
                    solved_support |= todo[i].support();
                    todo.remove(i);
                }
                None => ok = false,
            }
        }
        if !ok {
            ok = project_to_zeros(&zero_exprs, &jacobian, &mut coords);
        }
        if !ok {
            continue;
        }
        let eval = |e: &Expression| e.evaluate_with(&coords, &|_| None);
        let tiny = Real::from_coeff(&(Coefficient::from_int(10).pow(-(precision_digits() as i32) / 2)));
        for a in assumptions.list() {
            match (a.relation, eval(&a.expr)) {
                (Relation::NonZero, Ok(v)) if v.abs().gt(&thresh) => {}
                // Later conditions may have moved a solved variable.
                (Relation::Zero, Ok(v)) if !v.abs().gt(&tiny) => {}
                _ => ok = false,
            }
        }
        if ok && require_metric {
            ok = match eval(space.f2()) {
                Ok(v) => v.gt(&thresh),
                Err(_) => false,
            };
            if ok {
                ok = space
                    .metric_determinant()
                    .and_then(|d| eval(&d))
                    .map(|d| d.abs().gt(&thresh))
                    .unwrap_or(false);
            }
        }
        if ok {
            out.push(SamplePoint { coords, seed, index: out.len() });
        }
    }
    Ok(out)
}

/// Largest deviation found for one tensor.
#[derive(Clone, Debug)]
pub struct CheckReport {
    pub tensor: String,
    pub points: usize,
    pub seed: u64,
    pub max_deviation: f64,
    /// Point index and 1-based component of the worst deviation.
    pub worst: Option<(usize, Vec<usize>)>,
    pub tolerance: f64,
    pub pass: bool,
}

impl CheckReport {
    pub fn to_json(&self) -> Value {
        json!({
            "tensor": self.tensor,
            "points": self.points,
            "seed": self.seed,
            "max_deviation": self.max_deviation,
            "worst": self.worst.as_ref().map(|(p, i)| json!({"point": p, "index": i})),
            "tolerance": self.tolerance,
            "pass": self.pass,
        })
    }

    pub fn render(&self) -> String {
        let worst = match &self.worst {
            Some((p, i)) => format!(" at point {p} component {i:?}"),
            None => String::new(),
        };
        format!(
            "{} {}: max deviation {:.3e}{} over {} points (seed {}, tol {:.0e})",
            if self.pass { "PASS" } else { "FAIL" },
            self.tensor,
            self.max_deviation,
            worst,
            self.points,
            self.seed,
            self.tolerance
        )
    }
}

/// Deviation is measured relative to the largest component magnitude of
/// the numeric tensor at that point (or 1, if larger), so vanishing
/// components are compared on the tensor's own scale.
pub fn cross_check(
    space: &FinslerSpace,
    tensor: &Tensor,
    points: &[SamplePoint],
    rel_tol: f64,
) -> MathResult<CheckReport> {
    let pipes = pipelines(space, points)?;
    compare_tensor(tensor, points, &pipes, rel_tol)
}

/// Cross-checks every named built-in, computing each point's numeric
/// pipeline once.
pub fn cross_check_all(
    space: &FinslerSpace,
    names: &[&str],
    points: &[SamplePoint],
    rel_tol: f64,
) -> MathResult<Vec<CheckReport>> {
    let pipes = pipelines(space, points)?;
    names
        .iter()
        .map(|name| {
            let t = space.builtin(name)?.ok_or_else(|| MathError::Tensor(format!("no tensor {name}")))?;
            compare_tensor(t, points, &pipes, rel_tol)
        })
        .collect()
}

/// Numeric pipelines at all points, evaluated in parallel.
pub fn pipelines(space: &FinslerSpace, points: &[SamplePoint]) -> MathResult<Vec<NumericPipeline>> {
    use rayon::prelude::*;
    let prec = prec();
    points
        .par_iter()
        .map(|p| {
            PRECISION_BITS.store(prec, Ordering::Relaxed);
            numeric_pipeline(space, &p.coords)
        })
        .collect()
}

fn compare_tensor(
    tensor: &Tensor,
    points: &[SamplePoint],
    pipes: &[NumericPipeline],
    rel_tol: f64,
) -> MathResult<CheckReport> {
    let mut max_dev = 0.0f64;
    let mut worst = None;
    let mut seed = 0;
    for (p, pipe) in points.iter().zip(pipes) {
        seed = p.seed;
        let num = pipe
            .get(&tensor.name)
            .ok_or_else(|| MathError::Tensor(format!("no pipeline object {}", tensor.name)))?;
        let scale = num.data.iter().fold(Real::from_i64(1), |a, b| a.max(&b.abs()));
        for idx in all_indices(tensor.rank(), tensor.dim) {
            let sym = match tensor.get_ref(&idx) {
                Some(e) => e.evaluate_with(&p.coords, &|_| None)?,
                None => Real::zero(),
            };
            let dev = sym.sub(num.get(&idx)).abs().div(&scale)?.to_f64();
            if dev > max_dev || dev.is_nan() {
                max_dev = if dev.is_nan() { f64::INFINITY } else { dev };
                worst = Some((p.index, idx.iter().map(|i| i + 1).collect()));
            }
        }
    }
    Ok(CheckReport {
        tensor: tensor.name.clone(),
        points: points.len(),
        seed,
        max_deviation: max_dev,
        worst,
        tolerance: rel_tol,
        pass: max_dev <= rel_tol,
    })
}

/// Rank-revealing elimination with full pivoting. Returns the nullspace
/// dimension and an orthonormal basis of it. Pivots at or below
/// `tol · max(1, largest entry)` count as zero.
pub fn numeric_nullspace(rows: &[Vec<Real>], unknowns: usize, tol: f64) -> (usize, Vec<Vec<Real>>) {
    let mut a: Vec<Vec<Real>> = rows.to_vec();
    let mut cols: Vec<usize> = (0..unknowns).collect();
    let tol = Real::from_coeff(&float_to_coeff(tol));
    let mut largest = Real::zero();
    let mut rank = 0;
    while rank < a.len().min(unknowns) {
        let mut best = (rank, rank, Real::zero());
        for (r, row) in a.iter().enumerate().skip(rank) {
            for c in rank..unknowns {
                let v = row[cols[c]].abs();
                if v.gt(&best.2) {
                    best = (r, c, v);
                }
            }
        }
        if rank == 0 {
            largest = best.2.max(&Real::from_i64(1));
        }
        if best.2.is_zero() || !best.2.gt(&largest.mul(&tol)) {
            break;
        }
        a.swap(rank, best.0);
        cols.swap(rank, best.1);
        let pc = cols[rank];
        let piv = a[rank][pc].clone();
        for r in 0..a.len() {
            if r == rank || a[r][pc].is_zero() {
                continue;
            }
            let f = a[r][pc].div(&piv).expect("nonzero pivot");
            for c in 0..unknowns {
                let v = a[r][c].sub(&f.mul(&a[rank][c]));
                a[r][c] = v;
            }
        }
        rank += 1;
    }
    let mut basis: Vec<Vec<Real>> = Vec::new();
    for &free in &cols[rank..] {
        let mut v = vec![Real::zero(); unknowns];
        v[free] = Real::from_i64(1);
        for (r, &pc) in cols[..rank].iter().enumerate() {
            v[pc] = a[r][free].div(&a[r][pc]).expect("nonzero pivot").neg();
        }
        for b in &basis {
            let d = dot(&v, b);
            v = v.iter().zip(b).map(|(x, y)| x.sub(&d.mul(y))).collect();
        }
        let norm = dot(&v, &v).sqrt();
        basis.push(v.iter().map(|x| x.div(&norm).expect("nonzero norm")).collect());
    }
    (unknowns - rank, basis)
}

fn dot(a: &[Real], b: &[Real]) -> Real {
    a.iter().zip(b).fold(Real::zero(), |acc, (x, y)| acc.add(&x.mul(y)))
}

fn float_to_coeff(x: f64) -> Coefficient {
    if x == 0.0 {
        return Coefficient::zero();
    }
    let e = x.abs().log10().floor() as i32;
    let mant = (x / 10f64.powi(e) * 1e6).round() as i64;
    Coefficient::new(mant, 1_000_000) * Coefficient::from_int(10).pow(e)
}

/// Evaluates the rows of a symbolic system at a point.
pub fn evaluate_system(sys: &LinearSystem, point: &[Real]) -> MathResult<Vec<Vec<Real>>> {
    sys.rows
        .iter()
        .map(|r| r.iter().map(|e| e.evaluate_with(point, &|_| None)).collect())
        .collect()
}

/// Rows of `Σ_j T[.., j, ..] Zʲ` for a numeric tensor, contracting `slot`.
pub fn numeric_system(t: &NumTensor, slot: usize) -> Vec<Vec<Real>> {
    all_indices(t.rank - 1, t.dim)
        .into_iter()
        .map(|rest| {
            (0..t.dim)
                .map(|j| {
                    let mut idx = rest.clone();
                    idx.insert(slot, j);
                    t.get(&idx).clone()
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse_expression;
    use crate::tower::Tower;

    fn r(n: i64, d: i64) -> Real {
        Real::from_coeff(&Coefficient::new(n, d))
    }

    #[test]
    fn jet_of_square() {
        let t = Tower::new(1).unwrap();
        let f = parse_expression("y1^2", &t).unwrap();
        let sp = JetSpace::for_dim(1, 2, 5);
        let j = jet_lift(&f, &[r(0, 1), r(3, 1)], &sp).unwrap();
        assert!((j.value().to_f64() - 9.0).abs() < 1e-30);
        assert!((j.coefficient(&[0, 1]).unwrap().to_f64() - 6.0).abs() < 1e-30);
        assert!((j.coefficient(&[0, 2]).unwrap().to_f64() - 1.0).abs() < 1e-30);
        assert!(j.coefficient(&[0, 3]).unwrap().is_zero());
    }

    #[test]
    fn jet_of_exponential() {
        let t = Tower::new(3).unwrap();
        let f = parse_expression("exp(-x1*x3)", &t).unwrap();
        let sp = JetSpace::for_dim(3, 2, 5);
        let mut p = vec![Real::zero(); 6];
        p[2] = r(5, 1);
        let j = jet_lift(&f, &p, &sp).unwrap();
        assert!((j.value().to_f64() - 1.0).abs() < 1e-30);
        assert!((j.coefficient(&[1, 0, 0, 0, 0, 0]).unwrap().to_f64() + 5.0).abs() < 1e-25);
    }

    #[test]
    fn jet_derivatives_match_symbolic() {
        let t = Tower::new(2).unwrap();
        let f = parse_expression("sqrt(x1^2*y1^4 + y2^4) + exp(x2*y1)/(y1 + 3)", &t).unwrap();
        let sp = JetSpace::for_dim(2, 2, 5);
        let p = vec![r(1, 2), r(-2, 3), r(5, 4), r(-1, 3)];
        let j = jet_lift(&f, &p, &sp).unwrap();
        let t = f.tower().clone();
        let cases: [(usize, [u8; 4]); 3] = [(t.x(0), [1, 0, 0, 0]), (t.y(0), [0, 0, 1, 0]), (t.y(1), [0, 0, 0, 1])];
        for (v, m) in cases {
            let d = f.differentiate(v).unwrap().evaluate_with(&p, &|_| None).unwrap();
            let c = j.coefficient(&m).unwrap();
            assert!(d.sub(&c).abs().to_f64() < 1e-40, "derivative along v{v}");
        }
        // second derivative: coefficient = f_yy / 2
        let d2 = f.differentiate(t.y(0)).unwrap().differentiate(t.y(0)).unwrap();
        let v = d2.evaluate_with(&p, &|_| None).unwrap().mul(&r(1, 2));
        assert!(v.sub(&j.coefficient(&[0, 0, 2, 0]).unwrap()).abs().to_f64() < 1e-40);
    }

    #[test]
    fn product_rule() {
        let t = Tower::new(2).unwrap();
        let f = parse_expression("x1*y1^2 + y2^3", &t).unwrap();
        let g = parse_expression("(y1^3 + x2*y2^3)^(1/3)", &t).unwrap();
        let fg = f.mul(&g.lift(&Tower::join(f.tower(), g.tower()).unwrap()).unwrap()).unwrap();
        let sp = JetSpace::for_dim(2, 2, 5);
        let p = vec![r(1, 3), r(2, 1), r(3, 2), r(1, 5)];
        let a = jet_lift(&f, &p, &sp).unwrap().mul(&jet_lift(&g, &p, &sp).unwrap());
        let b = jet_lift(&fg, &p, &sp).unwrap();
        for k in 0..sp.len() {
            let z = Real::zero();
            let (x, y) = (a.coeffs[k].as_ref().unwrap_or(&z), b.coeffs[k].as_ref().unwrap_or(&z));
            assert!(x.sub(y).abs().to_f64() < 1e-40);
        }
    }

    #[test]
    fn nullspace_dimensions() {
        let rows = vec![vec![r(1, 1), r(2, 1), r(3, 1)], vec![r(2, 1), r(4, 1), r(6, 1)]];
        let (d, b) = numeric_nullspace(&rows, 3, 1e-30);
        assert_eq!(d, 2);
        for v in &b {
            assert!(dot(&rows[0], v).abs().to_f64() < 1e-40);
        }
        assert_eq!(numeric_nullspace(&[], 3, 1e-30).0, 3);
        let scaled: Vec<Vec<Real>> = rows.iter().map(|r| r.iter().map(|x| x.mul(&Real::from_i64(-7))).collect()).collect();
        assert_eq!(numeric_nullspace(&scaled, 3, 1e-30).0, 2);
    }

    #[test]
    fn flat_space_has_zero_curvature() {
        let s = FinslerSpace::from_text(2, "y1^2 + y2^2", &[]).unwrap();
        let p = vec![r(1, 2), r(1, 3), r(1, 1), r(-2, 1)];
        let num = numeric_pipeline(&s, &p).unwrap();
        for name in ["RC", "RG", "RB", "PB", "N"] {
            assert!(num.get(name).unwrap().data.iter().all(|x| x.abs().to_f64() < 1e-12), "{name}");
        }
    }

    #[test]
    fn real_roots_and_exp() {
        assert!((r(-8, 1).root(3).unwrap().to_f64() + 2.0).abs() < 1e-30);
        assert!(r(-8, 1).root(2).is_err());
        assert!((Real::zero().exp().unwrap().to_f64() - 1.0).abs() < 1e-30);
    }
}
