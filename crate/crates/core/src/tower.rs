//! The variable tower: coordinates `x1..xn, y1..yn` followed by declared
//! atoms (radicals, exponentials) and free symbols, in declaration order.
//!
//! A tower is immutable. Declaring an atom produces an extended tower that
//! shares the lineage of its parent, so expressions built over a prefix
//! tower remain compatible with every extension of it.

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::coeff::Coefficient;
use crate::error::MathError;
use crate::poly::{Monomial, Poly, VarMask, MAX_VARS};

static LINEAGE: AtomicU64 = AtomicU64::new(1);

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AtomKind {
    /// `base^(1/degree)`; the base is a polynomial free of radicals.
    Radical { base: Poly, degree: u32 },
    /// `exp(arg)` with a single-term argument over the coordinates.
    Exponential { arg: Poly },
    /// An independent transcendental, used for unknowns of linear systems.
    Symbol,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Atom {
    pub name: String,
    pub kind: AtomKind,
}

#[derive(Debug)]
pub struct Tower {
    lineage: u64,
    dim: usize,
    atoms: Vec<Atom>,
}

impl Tower {
    pub fn new(dim: usize) -> Result<Arc<Tower>, MathError> {
        if dim == 0 || 2 * dim > MAX_VARS {
            return Err(MathError::Unsupported(format!("dimension {dim} out of range 1..={}", MAX_VARS / 2)));
        }
        Ok(Arc::new(Tower { lineage: LINEAGE.fetch_add(1, Ordering::Relaxed), dim, atoms: Vec::new() }))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn var_count(&self) -> usize {
        2 * self.dim + self.atoms.len()
    }

    pub fn x(&self, i: usize) -> usize {
        debug_assert!(i < self.dim);
        i
    }

    pub fn y(&self, i: usize) -> usize {
        debug_assert!(i < self.dim);
        self.dim + i
    }

    pub fn atom_var(&self, k: usize) -> usize {
        2 * self.dim + k
    }

    pub fn atom_of_var(&self, v: usize) -> Option<&Atom> {
        v.checked_sub(2 * self.dim).and_then(|k| self.atoms.get(k))
    }

    pub fn is_coordinate(&self, v: usize) -> bool {
        v < 2 * self.dim
    }

    pub fn coordinate_mask(&self) -> VarMask {
        (1u32 << (2 * self.dim)) - 1
    }

    pub fn y_mask(&self) -> VarMask {
        ((1u32 << self.dim) - 1) << self.dim
    }

    /// Exponential atoms: their exponents may be negative.
    pub fn laurent_mask(&self) -> VarMask {
        self.mask_of(|k| matches!(k, AtomKind::Exponential { .. }))
    }

    pub fn radical_mask(&self) -> VarMask {
        self.mask_of(|k| matches!(k, AtomKind::Radical { .. }))
    }

    pub fn symbol_mask(&self) -> VarMask {
        self.mask_of(|k| matches!(k, AtomKind::Symbol))
    }

    fn mask_of(&self, f: impl Fn(&AtomKind) -> bool) -> VarMask {
        let mut m = 0;
        for (k, a) in self.atoms.iter().enumerate() {
            if f(&a.kind) {
                m |= 1 << self.atom_var(k);
            }
        }
        m
    }

    /// Radical atoms as `(variable, base, degree)`.
    pub fn radicals(&self) -> impl Iterator<Item = (usize, &Poly, u32)> + '_ {
        self.atoms.iter().enumerate().filter_map(move |(k, a)| match &a.kind {
            AtomKind::Radical { base, degree } => Some((self.atom_var(k), base, *degree)),
            _ => None,
        })
    }

    pub fn var_name(&self, v: usize) -> String {
        if v < self.dim {
            format!("x{}", v + 1)
        } else if v < 2 * self.dim {
            format!("y{}", v - self.dim + 1)
        } else {
            self.atoms[v - 2 * self.dim].name.clone()
        }
    }

    /// Looks up a coordinate or symbol by name.
    pub fn lookup(&self, name: &str) -> Option<usize> {
        let coord = |prefix: char, off: usize| -> Option<usize> {
            let rest = name.strip_prefix(prefix)?;
            if rest.starts_with('0') {
                return None;
            }
            let i: usize = rest.parse().ok()?;
            (1..=self.dim).contains(&i).then(|| off + i - 1)
        };
        coord('x', 0)
            .or_else(|| coord('y', self.dim))
            .or_else(|| {
                self.atoms
                    .iter()
                    .position(|a| a.kind == AtomKind::Symbol && a.name == name)
                    .map(|k| self.atom_var(k))
            })
    }

    pub fn same_lineage(&self, other: &Tower) -> bool {
        self.lineage == other.lineage
    }

    /// The smallest tower containing both, if one extends the other.
    pub fn join(a: &Arc<Tower>, b: &Arc<Tower>) -> Result<Arc<Tower>, MathError> {
        if Arc::ptr_eq(a, b) {
            return Ok(a.clone());
        }
        if a.lineage != b.lineage || a.dim != b.dim {
            return Err(MathError::TowerMismatch);
        }
        let (short, long) = if a.atoms.len() <= b.atoms.len() { (a, b) } else { (b, a) };
        if long.atoms[..short.atoms.len()] != short.atoms[..] {
            return Err(MathError::TowerMismatch);
        }
        Ok(long.clone())
    }

    fn extended(self: &Arc<Tower>, atom: Atom) -> Result<(Arc<Tower>, usize), MathError> {
        if self.var_count() + 1 > MAX_VARS {
            return Err(MathError::Unsupported(format!("more than {MAX_VARS} variables")));
        }
        let mut atoms = self.atoms.clone();
        atoms.push(atom);
        let v = 2 * self.dim + atoms.len() - 1;
        Ok((Arc::new(Tower { lineage: self.lineage, dim: self.dim, atoms }), v))
    }

    /// Declares (or finds) the radical `base^(1/degree)`.
    pub fn declare_radical(self: &Arc<Tower>, base: &Poly, degree: u32) -> Result<(Arc<Tower>, usize), MathError> {
        if degree < 2 {
            return Err(MathError::InvalidAtom(format!("radical degree {degree} < 2")));
        }
        if base.is_zero() {
            return Err(MathError::InvalidAtom("radical of zero".into()));
        }
        if base.support() & (self.radical_mask() | self.symbol_mask()) != 0 {
            return Err(MathError::InvalidAtom("radical base must not contain radicals or symbols".into()));
        }
        if base.support() & !((1u32 << self.var_count()) - 1) != 0 {
            return Err(MathError::InvalidAtom("radical base refers to undeclared variables".into()));
        }
        if let Some((v, _, _)) = self.radicals().find(|(_, b, d)| *b == base && *d == degree) {
            return Ok((self.clone(), v));
        }
        let name = format!("r{}", self.atoms.len() + 1);
        self.extended(Atom { name, kind: AtomKind::Radical { base: base.clone(), degree } })
    }

    /// Declares (or finds) an exponential atom for `exp(c*m)` and returns it
    /// with the integer power `k` such that `exp(c*m) = atom^k`.
    pub fn declare_exp_term(
        self: &Arc<Tower>,
        m: &Monomial,
        c: &Coefficient,
    ) -> Result<(Arc<Tower>, usize, i16), MathError> {
        if m.support() & !self.coordinate_mask() != 0 {
            return Err(MathError::InvalidAtom("exponential argument must be polynomial in coordinates".into()));
        }
        for (k, a) in self.atoms.iter().enumerate() {
            if let AtomKind::Exponential { arg } = &a.kind {
                let (am, ac) = &arg.terms()[0];
                if am == m {
                    let ratio = c / ac;
                    if !ratio.is_integer() {
                        return Err(MathError::Unsupported(format!(
                            "exponential with argument incommensurate to an existing atom ({ratio})"
                        )));
                    }
                    let k16 = i16::try_from(ratio.numer()).map_err(|_| MathError::Unsupported("exponent too large".into()))?;
                    return Ok((self.clone(), self.atom_var(k), k16));
                }
            }
        }
        let name = format!("e{}", self.atoms.len() + 1);
        let (t, v) = self.extended(Atom { name, kind: AtomKind::Exponential { arg: Poly::monomial(*m, c.clone()) } })?;
        Ok((t, v, 1))
    }

    /// Declares (or finds) a free symbol.
    pub fn declare_symbol(self: &Arc<Tower>, name: &str) -> Result<(Arc<Tower>, usize), MathError> {
        if let Some(v) = self.lookup(name) {
            if self.is_coordinate(v) {
                return Err(MathError::InvalidAtom(format!("symbol {name} collides with a coordinate")));
            }
            return Ok((self.clone(), v));
        }
        if name == "exp" || name == "sqrt" {
            return Err(MathError::InvalidAtom(format!("reserved name {name}")));
        }
        self.extended(Atom { name: name.to_string(), kind: AtomKind::Symbol })
    }

    /// Derivative of the atom at variable `v` with respect to coordinate `c`,
    /// expressed as `(factor, divide_by_base)`: for an exponential the
    /// derivative is `factor * atom`; for a radical `atom * factor / (m * base)`.
    pub fn atom_derivative_factor(&self, v: usize, c: usize) -> Option<Poly> {
        match &self.atom_of_var(v)?.kind {
            AtomKind::Radical { base, .. } => Some(base.diff(c)),
            AtomKind::Exponential { arg } => Some(arg.diff(c)),
            AtomKind::Symbol => None,
        }
    }
}

impl fmt::Display for Tower {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "dim {}", self.dim)?;
        for a in &self.atoms {
            write!(f, "; {} = ", a.name)?;
            match &a.kind {
                AtomKind::Radical { base, degree } => {
                    write!(f, "({})^(1/{degree})", crate::expr::render_poly(self, base))?
                }
                AtomKind::Exponential { arg } => write!(f, "exp({})", crate::expr::render_poly(self, arg))?,
                AtomKind::Symbol => write!(f, "symbol")?,
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lookup_and_names() {
        let t = Tower::new(3).unwrap();
        assert_eq!(t.lookup("x2"), Some(1));
        assert_eq!(t.lookup("y3"), Some(5));
        assert_eq!(t.lookup("y4"), None);
        assert_eq!(t.lookup("x0"), None);
        assert_eq!(t.var_name(4), "y2");
    }

    #[test]
    fn radicals_are_deduplicated() {
        let t = Tower::new(2).unwrap();
        let p = Poly::var(2).pow(2).add(&Poly::var(3).pow(2));
        let (t1, v1) = t.declare_radical(&p, 2).unwrap();
        let (t2, v2) = t1.declare_radical(&p, 2).unwrap();
        assert_eq!(v1, v2);
        assert!(Arc::ptr_eq(&t1, &t2));
        assert!(Tower::join(&t, &t2).is_ok());
        assert!(t.declare_radical(&Poly::zero(), 2).is_err());
        assert!(t.declare_radical(&p, 1).is_err());
    }

    #[test]
    fn exponential_powers() {
        let t = Tower::new(3).unwrap();
        let m = Monomial::var(0, 1).mul(&Monomial::var(2, 1));
        let (t1, v, k) = t.declare_exp_term(&m, &Coefficient::from_int(-1)).unwrap();
        assert_eq!(k, 1);
        let (_, v2, k2) = t1.declare_exp_term(&m, &Coefficient::from_int(2)).unwrap();
        assert_eq!((v2, k2), (v, -2));
        assert!(t1.declare_exp_term(&m, &Coefficient::new(1, 2)).is_err());
    }

    #[test]
    fn diverging_towers_do_not_join() {
        let t = Tower::new(2).unwrap();
        let (a, _) = t.declare_symbol("W1").unwrap();
        let (b, _) = t.declare_symbol("Z1").unwrap();
        assert!(Tower::join(&a, &b).is_err());
        assert!(t.declare_symbol("x1").is_err());
    }
}
