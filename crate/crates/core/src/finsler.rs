//! The geometric pipeline: from F² to metric, spray, Barthel connection,
//! curvatures and horizontal brackets.
//!
//! Every object is computed once per space, on first use, in dependency
//! order g → g⁻¹ → G → N → {GB, PB, RG, RB, Γ*, C, RC}.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock};

use crate::coeff::Coefficient;
use crate::error::{MathError, MathResult};
use crate::expr::Expression;
use crate::parse::{BuildError, Builder};
use crate::tensor::{hderiv, Signature, Tensor};
use crate::tower::Tower;

type Slot = OnceLock<MathResult<Tensor>>;

/// A Finsler space given by its F² in local coordinates.
pub struct FinslerSpace {
    dim: usize,
    f2: Expression,
    /// Expressions assumed nonzero on the chart domain.
    domain: Vec<Expression>,
    g: Slot,
    ginv: Slot,
    spray: Slot,
    n: Slot,
    gb: Slot,
    pb: Slot,
    rg: Slot,
    rb: Slot,
    gamma: Slot,
    cartan: Slot,
    rc: Slot,
}

/// Names of the pipeline tensors, in dependency order.
pub const BUILTIN_TENSORS: [&str; 11] = ["g", "ginv", "G", "N", "GB", "PB", "RG", "RB", "Gamma", "C", "RC"];

/// A vector field `Σ Xⁱ hᵢ` on the horizontal bundle.
#[derive(Clone, Debug, PartialEq)]
pub struct HorizontalField(pub Vec<Expression>);

/// A vector field `Σ Vⁱ ∂̇ᵢ` on the vertical bundle.
#[derive(Clone, Debug, PartialEq)]
pub struct VerticalField(pub Vec<Expression>);

fn render_field(c: &[Expression], basis: &str) -> String {
    let parts: Vec<String> = c
        .iter()
        .enumerate()
        .filter(|(_, e)| !e.is_zero())
        .map(|(i, e)| {
            if e.is_one() {
                format!("{basis}{}", i + 1)
            } else {
                format!("({e})*{basis}{}", i + 1)
            }
        })
        .collect();
    if parts.is_empty() {
        "0".into()
    } else {
        parts.join(" + ")
    }
}

impl HorizontalField {
    pub fn basis(t: &Arc<Tower>, i: usize) -> HorizontalField {
        HorizontalField((0..t.dim()).map(|k| if k == i { Expression::one(t) } else { Expression::zero(t) }).collect())
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|e| e.is_zero())
    }

    pub fn render(&self) -> String {
        render_field(&self.0, "h")
    }
}

impl VerticalField {
    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|e| e.is_zero())
    }

    pub fn render(&self) -> String {
        render_field(&self.0, "dy")
    }
}

/// Outcome of [`FinslerSpace::validate`].
#[derive(Clone, Debug)]
pub struct ValidationReport {
    pub homogeneous: bool,
    pub nondegenerate: bool,
    pub atoms: Vec<String>,
    pub assumptions: Vec<String>,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.homogeneous && self.nondegenerate
    }
}

fn cached<'a>(slot: &'a Slot, f: impl FnOnce() -> MathResult<Tensor>) -> MathResult<&'a Tensor> {
    slot.get_or_init(f).as_ref().map_err(|e| e.clone())
}

/// Determinant by expansion over column subsets (exact, O(n·2ⁿ) products).
pub fn determinant(m: &[Vec<Expression>], t: &Arc<Tower>) -> MathResult<Expression> {
    let n = m.len();
    if n == 0 {
        return Ok(Expression::one(t));
    }
    // minors[mask] = det of rows (n-|mask|..n) × columns in mask.
    let mut minors: HashMap<u32, Expression> = HashMap::new();
    minors.insert(0, Expression::one(t));
    for size in 1..=n {
        let row = n - size;
        let mut next = HashMap::new();
        for mask in 0u32..(1 << n) {
            if mask.count_ones() as usize != size {
                continue;
            }
            let mut acc = Expression::zero(t);
            let mut sign_pos = true;
            for c in 0..n {
                if mask & (1 << c) == 0 {
                    continue;
                }
                let e = &m[row][c];
                if !e.is_zero() {
                    let sub = &minors[&(mask & !(1 << c))];
                    if !sub.is_zero() {
                        let p = e.mul(sub)?;
                        acc = if sign_pos { acc.add(&p)? } else { acc.sub(&p)? };
                    }
                }
                sign_pos = !sign_pos;
            }
            next.insert(mask, acc);
        }
        minors = next;
    }
    Ok(minors.remove(&((1u32 << n) - 1)).expect("full minor"))
}

impl FinslerSpace {
    /// Creates a space from F² (already built over a tower of dimension `dim`).
    pub fn new(f2: Expression, domain: Vec<Expression>) -> MathResult<FinslerSpace> {
        let dim = f2.tower().dim();
        let mut tw = f2.tower().clone();
        for d in &domain {
            tw = Tower::join(&tw, d.tower())?;
            if d.is_zero() {
                return Err(MathError::DivisionByZero);
            }
        }
        let f2 = f2.lift(&tw)?;
        let domain = domain.iter().map(|d| d.lift(&tw)).collect::<MathResult<Vec<_>>>()?;
        Ok(FinslerSpace {
            dim,
            f2,
            domain,
            g: OnceLock::new(),
            ginv: OnceLock::new(),
            spray: OnceLock::new(),
            n: OnceLock::new(),
            gb: OnceLock::new(),
            pb: OnceLock::new(),
            rg: OnceLock::new(),
            rb: OnceLock::new(),
            gamma: OnceLock::new(),
            cartan: OnceLock::new(),
            rc: OnceLock::new(),
        })
    }

    /// Parses F² and nonzero domain conditions from text.
    pub fn from_text(dim: usize, f2: &str, nonzero: &[&str]) -> Result<FinslerSpace, BuildError> {
        let mut b = Builder::new(Tower::new(dim)?);
        let f = b.parse(f2)?;
        let mut dom = Vec::new();
        for s in nonzero {
            dom.push(b.parse(s)?);
        }
        let f = f.lift(&b.tower)?;
        Ok(FinslerSpace::new(f, dom)?)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn tower(&self) -> &Arc<Tower> {
        self.f2.tower()
    }

    pub fn f2(&self) -> &Expression {
        &self.f2
    }

    pub fn domain(&self) -> &[Expression] {
        &self.domain
    }

    fn t(&self) -> &Arc<Tower> {
        self.f2.tower()
    }

    pub fn validate(&self) -> ValidationReport {
        let t = self.t();
        let mut euler = Expression::zero(t);
        let mut homogeneous = true;
        for k in 0..self.dim {
            match self.f2.differentiate(t.y(k)).and_then(|d| d.mul(&Expression::y(t, k))) {
                Ok(p) => match euler.add(&p) {
                    Ok(s) => euler = s,
                    Err(_) => homogeneous = false,
                },
                Err(_) => homogeneous = false,
            }
        }
        homogeneous = homogeneous && euler.sub(&self.f2.scale(&Coefficient::from_int(2))).map(|d| d.is_zero()).unwrap_or(false);
        let nondegenerate = self.metric().is_ok() && self.inverse_metric().is_ok();
        ValidationReport {
            homogeneous,
            nondegenerate,
            atoms: t.atoms().iter().map(|a| format!("{} = {}", a.name, describe_atom(t, a))).collect(),
            assumptions: self.domain.iter().map(|d| format!("{d} <> 0")).collect(),
        }
    }

    /// Fails with the first violated structural condition.
    pub fn check_valid(&self) -> MathResult<()> {
        let r = self.validate();
        if !r.homogeneous {
            return Err(MathError::Inhomogeneous);
        }
        if !r.nondegenerate {
            return Err(self.metric().err().or(self.inverse_metric().err()).unwrap_or(MathError::Degenerate));
        }
        Ok(())
    }

    /// `g_ij = ½ ∂̇ᵢ∂̇ⱼF²`.
    pub fn metric(&self) -> MathResult<&Tensor> {
        cached(&self.g, || {
            let t = self.t();
            let half = Coefficient::new(1, 2);
            let d1: Vec<Expression> =
                (0..self.dim).map(|i| self.f2.differentiate(t.y(i))).collect::<MathResult<_>>()?;
            let mut g = Tensor::zero("g", Signature::parse("dd"), t);
            for i in 0..self.dim {
                for j in i..self.dim {
                    let e = d1[i].differentiate(t.y(j))?.scale(&half);
                    g.set(vec![i, j], e.clone())?;
                    g.set(vec![j, i], e)?;
                }
            }
            Ok(g)
        })
    }

    fn metric_matrix(&self) -> MathResult<Vec<Vec<Expression>>> {
        let g = self.metric()?;
        Ok((0..self.dim).map(|i| (0..self.dim).map(|j| g.get(&[i, j])).collect()).collect())
    }

    pub fn metric_determinant(&self) -> MathResult<Expression> {
        determinant(&self.metric_matrix()?, self.t())
    }

    /// `gⁱʲ` via adjugate over determinant.
    pub fn inverse_metric(&self) -> MathResult<&Tensor> {
        cached(&self.ginv, || {
            let t = self.t();
            let m = self.metric_matrix()?;
            let det = determinant(&m, t)?;
            if det.is_zero() {
                return Err(MathError::Degenerate);
            }
            let n = self.dim;
            let minor = |r: usize, c: usize| -> Vec<Vec<Expression>> {
                (0..n)
                    .filter(|&i| i != r)
                    .map(|i| (0..n).filter(|&j| j != c).map(|j| m[i][j].clone()).collect())
                    .collect()
            };
            let inv_det = det.recip()?;
            let mut gi = Tensor::zero("ginv", Signature::parse("uu"), t);
            for i in 0..n {
                for j in i..n {
                    // (g⁻¹)ᵢⱼ = (−1)^{i+j} M_{ji} / det, symmetric.
                    let c = determinant(&minor(j, i), t)?;
                    let c = if (i + j) % 2 == 1 { c.neg() } else { c };
                    let e = c.mul(&inv_det)?;
                    gi.set(vec![i, j], e.clone())?;
                    gi.set(vec![j, i], e)?;
                }
            }
            Ok(gi)
        })
    }

    /// `Gⁱ = ¼ gⁱˡ (yᵏ ∂ₖ∂̇ₗF² − ∂ₗF²)`.
    pub fn spray(&self) -> MathResult<&Tensor> {
        cached(&self.spray, || {
            let t = self.t();
            let gi = self.inverse_metric()?;
            let n = self.dim;
            let mut w = Vec::with_capacity(n);
            for l in 0..n {
                let dl = self.f2.differentiate(t.y(l))?;
                let mut acc = self.f2.differentiate(t.x(l))?.neg();
                for k in 0..n {
                    let d = dl.differentiate(t.x(k))?;
                    if !d.is_zero() {
                        acc = acc.add(&d.mul(&Expression::y(t, k))?)?;
                    }
                }
                w.push(acc);
            }
            let quarter = Coefficient::new(1, 4);
            Tensor::from_fn("G", Signature::parse("u"), t, |idx| {
                let mut acc = Expression::zero(t);
                for (l, wl) in w.iter().enumerate() {
                    if let Some(g) = gi.get_ref(&[idx[0], l]) {
                        if !wl.is_zero() {
                            acc = acc.add(&g.mul(wl)?)?;
                        }
                    }
                }
                Ok(acc.scale(&quarter))
            })
        })
    }

    /// Barthel connection `N^i_j = ∂̇ⱼGⁱ`.
    pub fn barthel(&self) -> MathResult<&Tensor> {
        cached(&self.n, || self.spray()?.tddiff("N"))
    }

    /// Berwald coefficients `GB^i_{jk} = ∂̇ₖN^i_j`.
    pub fn berwald_coeffs(&self) -> MathResult<&Tensor> {
        cached(&self.gb, || self.barthel()?.tddiff("GB"))
    }

    /// Berwald hv-curvature `PB^i_{hjk} = ∂̇ₖGB^i_{hj}`.
    pub fn berwald_hv(&self) -> MathResult<&Tensor> {
        cached(&self.pb, || self.berwald_coeffs()?.tddiff("PB"))
    }

    /// `δₖ` of a scalar.
    pub fn delta(&self, f: &Expression, k: usize) -> MathResult<Expression> {
        hderiv(f, k, self.barthel()?)
    }

    /// Barthel curvature `RG^i_{jk} = δₖN^i_j − δⱼN^i_k`.
    pub fn barthel_curvature(&self) -> MathResult<&Tensor> {
        cached(&self.rg, || {
            let n = self.barthel()?;
            let h = n.hdiff("dN", n)?;
            let t = self.t();
            Tensor::from_fn("RG", Signature::parse("udd"), t, |idx| {
                let (i, j, k) = (idx[0], idx[1], idx[2]);
                if j == k {
                    return Ok(Expression::zero(t));
                }
                h.get(&[i, j, k]).sub(&h.get(&[i, k, j]))
            })
        })
    }

    /// Berwald h-curvature `RB^i_{hjk} = ∂̇ₕRG^i_{jk}`.
    pub fn berwald_h_curvature(&self) -> MathResult<&Tensor> {
        cached(&self.rb, || {
            let rg = self.barthel_curvature()?;
            let t = self.t();
            Tensor::from_fn("RB", Signature::parse("uddd"), t, |idx| {
                let (i, h, j, k) = (idx[0], idx[1], idx[2], idx[3]);
                match rg.get_ref(&[i, j, k]) {
                    Some(e) => e.differentiate(t.y(h)),
                    None => Ok(Expression::zero(t)),
                }
            })
        })
    }

    /// Cartan tensor `C^i_{jk} = gⁱʰ · ½∂̇ₕg_{jk}`.
    pub fn cartan_tensor(&self) -> MathResult<&Tensor> {
        cached(&self.cartan, || {
            let t = self.t();
            let g = self.metric()?;
            let gi = self.inverse_metric()?;
            let half = Coefficient::new(1, 2);
            let low = g.tddiff("Cl")?.map("Cl", |e| Ok(e.scale(&half)))?;
            // low[j,k,h] = ½∂̇ₕg_jk (totally symmetric)
            Tensor::from_fn("C", Signature::parse("udd"), t, |idx| {
                let (i, j, k) = (idx[0], idx[1], idx[2]);
                let mut acc = Expression::zero(t);
                for h in 0..self.dim {
                    if let (Some(a), Some(b)) = (gi.get_ref(&[i, h]), low.get_ref(&[j, k, h])) {
                        acc = acc.add(&a.mul(b)?)?;
                    }
                }
                Ok(acc)
            })
        })
    }

    /// Cartan horizontal coefficients
    /// `Γ*ⁱⱼₖ = ½gⁱʰ(δⱼg_hk + δₖg_jh − δₕg_jk)`.
    pub fn cartan_connection(&self) -> MathResult<&Tensor> {
        cached(&self.gamma, || {
            let t = self.t();
            let g = self.metric()?;
            let gi = self.inverse_metric()?;
            let dg = g.hdiff("dg", self.barthel()?)?; // dg[a,b,c] = δ_c g_ab
            let half = Coefficient::new(1, 2);
            let n = self.dim;
            let lowered = Tensor::from_fn("Gl", Signature::parse("ddd"), t, |idx| {
                let (h, j, k) = (idx[0], idx[1], idx[2]);
                dg.get(&[h, k, j]).add(&dg.get(&[j, h, k]))?.sub(&dg.get(&[j, k, h]))
            })?;
            Tensor::from_fn("Gamma", Signature::parse("udd"), t, |idx| {
                let (i, j, k) = (idx[0], idx[1], idx[2]);
                let mut acc = Expression::zero(t);
                for h in 0..n {
                    if let (Some(a), Some(b)) = (gi.get_ref(&[i, h]), lowered.get_ref(&[h, j, k])) {
                        acc = acc.add(&a.mul(b)?)?;
                    }
                }
                Ok(acc.scale(&half))
            })
        })
    }

    /// Cartan h-curvature
    /// `RC^h_{ijk} = δₖΓ*ʰᵢⱼ − δⱼΓ*ʰᵢₖ + Γ*ᵐᵢⱼΓ*ʰₘₖ − Γ*ᵐᵢₖΓ*ʰₘⱼ + Cʰᵢₘ RGᵐⱼₖ`.
    ///
    /// This (j,k) orientation is the one matching the published tables of
    /// the quartic example; the opposite orientation differs by a sign.
    pub fn cartan_h_curvature(&self) -> MathResult<&Tensor> {
        cached(&self.rc, || {
            let t = self.t();
            let gam = self.cartan_connection()?;
            let c = self.cartan_tensor()?;
            let rg = self.barthel_curvature()?;
            let dgam = gam.hdiff("dGamma", self.barthel()?)?; // dgam[h,i,j,k] = δₖΓ*ʰᵢⱼ
            let n = self.dim;
            let sum2 = |a: &Tensor, ai: &dyn Fn(usize) -> [usize; 3], b: &Tensor, bi: &dyn Fn(usize) -> [usize; 3]| -> MathResult<Expression> {
                let mut acc = Expression::zero(t);
                for m in 0..n {
                    if let (Some(x), Some(y)) = (a.get_ref(&ai(m)), b.get_ref(&bi(m))) {
                        acc = acc.add(&x.mul(y)?)?;
                    }
                }
                Ok(acc)
            };
            Tensor::from_fn("RC", Signature::parse("uddd"), t, |idx| {
                let (h, i, j, k) = (idx[0], idx[1], idx[2], idx[3]);
                if j == k {
                    return Ok(Expression::zero(t));
                }
                let mut e = dgam.get(&[h, i, j, k]).sub(&dgam.get(&[h, i, k, j]))?;
                e = e.add(&sum2(gam, &|m| [m, i, j], gam, &|m| [h, m, k])?)?;
                e = e.sub(&sum2(gam, &|m| [m, i, k], gam, &|m| [h, m, j])?)?;
                e = e.add(&sum2(c, &|m| [h, i, m], rg, &|m| [m, j, k])?)?;
                Ok(e)
            })
        })
    }

    /// Looks up a pipeline tensor by its built-in name.
    pub fn builtin(&self, name: &str) -> MathResult<Option<&Tensor>> {
        Ok(Some(match name {
            "g" => self.metric()?,
            "ginv" => self.inverse_metric()?,
            "G" => self.spray()?,
            "N" => self.barthel()?,
            "GB" => self.berwald_coeffs()?,
            "PB" => self.berwald_hv()?,
            "RG" => self.barthel_curvature()?,
            "RB" => self.berwald_h_curvature()?,
            "Gamma" => self.cartan_connection()?,
            "C" => self.cartan_tensor()?,
            "RC" => self.cartan_h_curvature()?,
            _ => return Ok(None),
        }))
    }

    /// `[X,Y] = (Xʲδⱼ Yⁱ − Yʲδⱼ Xⁱ) hᵢ + Xⁱ Yʲ RGᵐᵢⱼ ∂̇ₘ`.
    pub fn horizontal_bracket(&self, x: &HorizontalField, y: &HorizontalField) -> MathResult<(HorizontalField, VerticalField)> {
        let n = self.dim;
        if x.0.len() != n || y.0.len() != n {
            return Err(MathError::Tensor("vector field dimension mismatch".into()));
        }
        let mut tw = self.t().clone();
        for e in x.0.iter().chain(&y.0) {
            tw = Tower::join(&tw, e.tower())?;
        }
        let rg = self.barthel_curvature()?;
        let mut hor = Vec::with_capacity(n);
        for i in 0..n {
            let mut acc = Expression::zero(&tw);
            for j in 0..n {
                if !x.0[j].is_zero() {
                    let d = self.delta(&y.0[i], j)?;
                    if !d.is_zero() {
                        acc = acc.add(&x.0[j].mul(&d)?)?;
                    }
                }
                if !y.0[j].is_zero() {
                    let d = self.delta(&x.0[i], j)?;
                    if !d.is_zero() {
                        acc = acc.sub(&y.0[j].mul(&d)?)?;
                    }
                }
            }
            hor.push(acc);
        }
        let mut ver = Vec::with_capacity(n);
        for m in 0..n {
            let mut acc = Expression::zero(&tw);
            for i in 0..n {
                if x.0[i].is_zero() {
                    continue;
                }
                for j in 0..n {
                    if y.0[j].is_zero() {
                        continue;
                    }
                    if let Some(r) = rg.get_ref(&[m, i, j]) {
                        acc = acc.add(&x.0[i].mul(&y.0[j])?.mul(r)?)?;
                    }
                }
            }
            ver.push(acc);
        }
        Ok((HorizontalField(hor), VerticalField(ver)))
    }
}

fn describe_atom(t: &Tower, a: &crate::tower::Atom) -> String {
    use crate::tower::AtomKind;
    match &a.kind {
        AtomKind::Radical { base, degree } => format!("({})^(1/{degree})", crate::expr::render_poly(t, base)),
        AtomKind::Exponential { arg } => format!("exp({})", crate::expr::render_poly(t, arg)),
        AtomKind::Symbol => "symbol".into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn euclidean_space_is_flat() {
        let s = FinslerSpace::from_text(3, "y1^2 + y2^2 + y3^2", &[]).unwrap();
        assert!(s.validate().ok());
        let g = s.metric().unwrap();
        assert!(g.get(&[1, 1]).is_one());
        assert!(g.get(&[0, 1]).is_zero());
        for name in ["G", "N", "PB", "RG", "RB", "Gamma", "C", "RC"] {
            assert!(s.builtin(name).unwrap().unwrap().is_zero(), "{name}");
        }
    }

    #[test]
    fn invalid_metrics() {
        let s = FinslerSpace::from_text(2, "y1^3/y2 + x1", &[]).unwrap();
        assert!(!s.validate().homogeneous);
        let s = FinslerSpace::from_text(2, "y1^2", &[]).unwrap();
        let r = s.validate();
        assert!(r.homogeneous && !r.nondegenerate);
        assert_eq!(s.check_valid(), Err(MathError::Degenerate));
    }

    #[test]
    fn riemannian_with_x_dependence_has_no_berwald_curvature() {
        let s = FinslerSpace::from_text(2, "x2^2*y1^2 + y2^2", &["x2"]).unwrap();
        assert!(s.berwald_hv().unwrap().is_zero());
        assert!(!s.barthel().unwrap().is_zero());
    }

    #[test]
    fn determinant_of_small_matrix() {
        let t = Tower::new(1).unwrap();
        let i = |v| Expression::int(&t, v);
        let m = vec![vec![i(2), i(1), i(0)], vec![i(1), i(3), i(1)], vec![i(0), i(1), i(4)]];
        assert_eq!(determinant(&m, &t).unwrap().constant_value(), Some(Coefficient::from_int(18)));
    }
}
