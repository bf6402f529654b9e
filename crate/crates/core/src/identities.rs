//! Exact structural identities every Finsler pipeline must satisfy.
//! Each check normalizes a difference and tests it for zero.

use serde_json::{json, Value};

use crate::coeff::Coefficient;
use crate::error::MathResult;
use crate::expr::Expression;
use crate::finsler::FinslerSpace;
use crate::tensor::{all_indices, Tensor};

#[derive(Clone, Debug)]
pub struct Identity {
    pub name: String,
    pub holds: bool,
}

impl Identity {
    fn new(name: impl Into<String>, holds: bool) -> Identity {
        Identity { name: name.into(), holds }
    }

    pub fn to_json(&self) -> Value {
        json!({ "identity": self.name, "holds": self.holds })
    }
}

/// `Σ_k yᵏ · T[.., k at slot, ..]` as a function of the remaining indices.
fn contract_y(t: &Tensor, slot: usize, rest: &[usize]) -> MathResult<Expression> {
    let tw = t.tower();
    let mut acc = Expression::zero(tw);
    for k in 0..t.dim {
        let mut idx = rest.to_vec();
        idx.insert(slot, k);
        if let Some(e) = t.get_ref(&idx) {
            acc = acc.add(&e.mul(&Expression::y(tw, k))?)?;
        }
    }
    Ok(acc)
}

fn euler(e: &Expression, n: usize) -> MathResult<Expression> {
    let t = e.tower().clone();
    let mut acc = Expression::zero(&t);
    for k in 0..n {
        acc = acc.add(&e.differentiate(t.y(k))?.mul(&Expression::y(&t, k))?)?;
    }
    Ok(acc)
}

fn all_zero(t: &Tensor, rank: usize, f: impl Fn(&[usize]) -> MathResult<Expression>) -> MathResult<bool> {
    for idx in all_indices(rank, t.dim) {
        if !f(&idx)?.is_zero() {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Euler identities of the homogeneous objects.
pub fn homogeneity_identities(space: &FinslerSpace) -> MathResult<Vec<Identity>> {
    let n = space.dim();
    let f2 = space.f2();
    let two = Coefficient::from_int(2);
    let mut out = vec![Identity::new("y^k dF2/dy^k = 2 F2", euler(f2, n)?.sub(&f2.scale(&two))?.is_zero())];
    let g = space.spray()?;
    let nn = space.barthel()?;
    out.push(Identity::new(
        "y^j dG^i/dy^j = 2 G^i",
        all_zero(g, 1, |i| euler(&g.get(i), n)?.sub(&g.get(i).scale(&two)))?,
    ));
    out.push(Identity::new(
        "N^i_j y^j = 2 G^i",
        all_zero(g, 1, |i| contract_y(nn, 1, i)?.sub(&g.get(i).scale(&two)))?,
    ));
    out.push(Identity::new(
        "y^k dN^i_j/dy^k = N^i_j",
        all_zero(nn, 2, |i| euler(&nn.get(i), n)?.sub(&nn.get(i)))?,
    ));
    let c = space.cartan_tensor()?;
    out.push(Identity::new("C^i_jk y^k = 0", all_zero(c, 2, |i| contract_y(c, 2, i))?));
    Ok(out)
}

/// Index symmetries of the pipeline tensors.
pub fn symmetry_identities(space: &FinslerSpace) -> MathResult<Vec<Identity>> {
    let mut out = Vec::new();
    let g = space.metric()?;
    out.push(Identity::new("g symmetric", g.symmetric_in(0, 1)?));
    let gam = space.cartan_connection()?;
    out.push(Identity::new("Gamma symmetric in (j,k)", gam.symmetric_in(1, 2)?));
    let c = space.cartan_tensor()?;
    let low = c.raise_lower(0, g, "Cl")?;
    out.push(Identity::new(
        "C_ijk totally symmetric",
        low.symmetric_in(0, 1)? && low.symmetric_in(1, 2)?,
    ));
    out.push(Identity::new("RG antisymmetric in (j,k)", space.barthel_curvature()?.antisymmetric_in(1, 2)?));
    out.push(Identity::new("RB antisymmetric in (j,k)", space.berwald_h_curvature()?.antisymmetric_in(2, 3)?));
    out.push(Identity::new("RC antisymmetric in (j,k)", space.cartan_h_curvature()?.antisymmetric_in(2, 3)?));
    let pb = space.berwald_hv()?;
    out.push(Identity::new(
        "PB totally symmetric",
        pb.symmetric_in(1, 2)? && pb.symmetric_in(2, 3)? && pb.symmetric_in(1, 3)?,
    ));
    Ok(out)
}

/// `yʰ RB^i_{hjk} = RG^i_{jk}`.
pub fn structural_identities(space: &FinslerSpace) -> MathResult<Vec<Identity>> {
    let rb = space.berwald_h_curvature()?;
    let rg = space.barthel_curvature()?;
    Ok(vec![Identity::new(
        "y^h RB^i_hjk = RG^i_jk",
        all_zero(rg, 3, |i| contract_y(rb, 1, i)?.sub(&rg.get(i)))?,
    )])
}

pub fn property_suite(space: &FinslerSpace) -> MathResult<Vec<Identity>> {
    let mut out = homogeneity_identities(space)?;
    out.extend(symmetry_identities(space)?);
    out.extend(structural_identities(space)?);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn riemannian_space_satisfies_everything() {
        let s = FinslerSpace::from_text(2, "exp(x1)*y1^2 + x1^2*y2^2 + y1*y2", &["x1"]).unwrap();
        for id in property_suite(&s).unwrap() {
            assert!(id.holds, "{}", id.name);
        }
    }
}
