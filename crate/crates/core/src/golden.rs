//! Reference data for the three worked example spaces: the metrics, their
//! chart domains, and every tensor component printed in the published
//! transcripts. Comparison is semantic (difference normalizes to zero).

use crate::error::MathResult;
use crate::expr::Expression;
use crate::finsler::FinslerSpace;
use crate::parse::{BuildError, Builder};

/// One printed component: tensor name, 1-based index, expression text.
#[derive(Clone, Copy, Debug)]
pub struct Printed {
    pub tensor: &'static str,
    pub index: &'static [usize],
    pub expr: &'static str,
}

const fn p(tensor: &'static str, index: &'static [usize], expr: &'static str) -> Printed {
    Printed { tensor, index, expr }
}

#[derive(Clone, Copy, Debug)]
pub struct ExampleSpace {
    pub name: &'static str,
    pub dim: usize,
    pub f2: &'static str,
    pub nonzero: &'static [&'static str],
    pub printed: &'static [Printed],
}

impl ExampleSpace {
    pub fn space(&self) -> Result<FinslerSpace, BuildError> {
        FinslerSpace::from_text(self.dim, self.f2, self.nonzero)
    }

    pub fn printed_for(&self, tensor: &str) -> impl Iterator<Item = &Printed> + '_ {
        let tensor = tensor.to_string();
        self.printed.iter().filter(move |c| c.tensor == tensor)
    }
}

/// Verdict for one printed component.
#[derive(Clone, Debug)]
pub struct ComponentCheck {
    pub tensor: String,
    pub index: Vec<usize>,
    pub printed: String,
    pub computed: String,
    pub matches: bool,
}

/// Compares every printed component against the computed pipeline.
pub fn check_printed(ex: &ExampleSpace, space: &FinslerSpace) -> Result<Vec<ComponentCheck>, BuildError> {
    let mut out = Vec::new();
    for c in ex.printed {
        let t = space
            .builtin(c.tensor)?
            .ok_or_else(|| BuildError::Math(crate::MathError::Tensor(format!("no tensor {}", c.tensor))))?;
        let idx: Vec<usize> = c.index.iter().map(|i| i - 1).collect();
        let computed = t.get(&idx);
        let mut b = Builder::new(computed.tower().clone());
        let printed = b.parse(c.expr)?;
        let matches = printed.sub(&computed)?.is_zero();
        out.push(ComponentCheck {
            tensor: c.tensor.into(),
            index: c.index.to_vec(),
            printed: printed.render(),
            computed: computed.render(),
            matches,
        });
    }
    Ok(out)
}

/// Parses an expression in the tower of an existing space.
pub fn parse_in(space: &FinslerSpace, text: &str) -> Result<Expression, BuildError> {
    Builder::new(space.tower().clone()).parse(text)
}

/// Checks that every nonzero computed component of `tensor` is either
/// printed or obtained from a printed one by the listed slot symmetries.
pub fn unprinted_components(
    ex: &ExampleSpace,
    space: &FinslerSpace,
    tensor: &str,
    equivalent: &dyn Fn(&[usize]) -> Vec<Vec<usize>>,
) -> MathResult<Vec<Vec<usize>>> {
    let t = space.builtin(tensor)?.expect("builtin tensor");
    let printed: Vec<Vec<usize>> = ex.printed_for(tensor).map(|c| c.index.iter().map(|i| i - 1).collect()).collect();
    Ok(t.nonzero()
        .map(|(i, _)| i.clone())
        .filter(|i| !equivalent(i).iter().any(|j| printed.contains(j)))
        .map(|i| i.iter().map(|k| k + 1).collect())
        .collect())
}

pub const EX1: ExampleSpace = ExampleSpace {
    name: "ex1",
    dim: 4,
    f2: "sqrt(x2^2*y1^4+y2^4+y3^4+y4^4)",
    nonzero: &["y2", "y4"],
    printed: &[
        p("N", &[1, 1], "(1/3)*y2/x2"),
        p("N", &[1, 2], "(1/3)*y1/x2"),
        p("N", &[2, 1], "-(1/3)*x2*y1^3/y2^2"),
        p("N", &[2, 2], "(1/6)*x2*y1^4/y2^3"),
        p(
            "RC",
            &[1, 2, 1, 2],
            "-(1/18)*(3*x2^4*y1^8+2*x2^2*y1^4*y4^4+2*y3^4*x2^2*y1^4+13*x2^2*y1^4*y2^4+4*y2^8+8*y3^4*y2^4+8*y2^4*y4^4)/(x2^2*(x2^2*y1^4+y2^4+y3^4+y4^4)*y2^4)",
        ),
        p(
            "RC",
            &[2, 1, 1, 2],
            "(1/18)*(x2^4*y1^8+2*y3^4*x2^2*y1^4+2*x2^2*y1^4*y4^4+7*x2^2*y1^4*y2^4+8*y2^4*y4^4+8*y3^4*y2^4+12*y2^8)*y1^2/(y2^6*(x2^2*y1^4+y2^4+y3^4+y4^4))",
        ),
        p("RC", &[1, 1, 1, 2], "(1/9)*y1^3*(4*y2^4+x2^2*y1^4)/((x2^2*y1^4+y2^4+y3^4+y4^4)*y2^3)"),
        p("RC", &[1, 3, 1, 2], "(1/18)*(4*y2^4+x2^2*y1^4)*y3^3/(x2^2*y2^3*(x2^2*y1^4+y2^4+y3^4+y4^4))"),
        p("RC", &[1, 4, 1, 2], "(1/18)*(4*y2^4+x2^2*y1^4)*y4^3/(x2^2*y2^3*(x2^2*y1^4+y2^4+y3^4+y4^4))"),
        p("RC", &[2, 2, 1, 2], "-(1/9)*y1^3*(4*y2^4+x2^2*y1^4)/((x2^2*y1^4+y2^4+y3^4+y4^4)*y2^3)"),
        p("RC", &[2, 3, 1, 2], "-(1/18)*y1^3*y3^3*(4*y2^4+x2^2*y1^4)/(y2^6*(x2^2*y1^4+y2^4+y3^4+y4^4))"),
        p("RC", &[2, 4, 1, 2], "-(1/18)*y1^3*y4^3*(4*y2^4+x2^2*y1^4)/(y2^6*(x2^2*y1^4+y2^4+y3^4+y4^4))"),
        p("RC", &[3, 1, 1, 2], "(1/18)*(4*y2^4+x2^2*y1^4)*y1^2*y3/((x2^2*y1^4+y2^4+y3^4+y4^4)*y2^3)"),
        p("RC", &[3, 2, 1, 2], "-(1/18)*(4*y2^4+x2^2*y1^4)*y3*y1^3/((x2^2*y1^4+y2^4+y3^4+y4^4)*y2^4)"),
        p("RC", &[4, 1, 1, 2], "(1/18)*(4*y2^4+x2^2*y1^4)*y4*y1^2/((x2^2*y1^4+y2^4+y3^4+y4^4)*y2^3)"),
        p("RC", &[4, 2, 1, 2], "-(1/18)*(4*y2^4+x2^2*y1^4)*y4*y1^3/((x2^2*y1^4+y2^4+y3^4+y4^4)*y2^4)"),
    ],
};

pub const EX2: ExampleSpace = ExampleSpace {
    name: "ex2",
    dim: 3,
    f2: "exp(-2*x1)*(y2^3+exp(-x1*x3)*y3*y1^2)^(2/3)",
    nonzero: &["y1"],
    printed: &[
        p("N", &[1, 1], "-(1/2)*(3+x3)*y1"),
        p("N", &[2, 1], "-(3/4)*y2"),
        p("N", &[2, 2], "-(3/4)*y1"),
        p("N", &[3, 1], "-(3/4)*y2^3/(y1^2*exp(-x1*x3))"),
        p("N", &[3, 2], "(9/4)*y2^2/(y1*exp(-x1*x3))"),
        p("N", &[3, 3], "-y3*x1"),
        p("PB", &[3, 1, 1, 1], "-(9/2)*y2^3/(y1^4*exp(-x1*x3))"),
        p("PB", &[3, 1, 1, 2], "(9/2)*y2^2/(y1^3*exp(-x1*x3))"),
        p("PB", &[3, 1, 2, 2], "-(9/2)*y2/(y1^2*exp(-x1*x3))"),
        p("PB", &[3, 2, 2, 2], "9/(2*y1*exp(-x1*x3))"),
    ],
};

pub const EX3: ExampleSpace = ExampleSpace {
    name: "ex3",
    dim: 4,
    f2: "exp(-x2)*y1*(y2^3+y3^3+y4^3)^(1/3)",
    nonzero: &["y2", "y4"],
    printed: &[
        p("N", &[2, 2], "-(1/4)*(4*y2^3+y3^3+y4^3)/y2^2"),
        p("N", &[2, 3], "(3/4)*y3^2/y2"),
        p("N", &[2, 4], "(3/4)*y4^2/y2"),
        p("N", &[3, 2], "-(3/4)*y3"),
        p("N", &[3, 3], "-(3/4)*y2"),
        p("N", &[4, 2], "-(3/4)*y4"),
        p("N", &[4, 4], "-(3/4)*y2"),
        p("RG", &[2, 2, 3], "-(3/16)*y3^2*(y2^3+y3^3+y4^3)/y2^4"),
        p("RG", &[3, 2, 3], "(3/16)*(y2^3+y3^3+y4^3)/y2^2"),
        p("RG", &[2, 2, 4], "-(3/16)*y4^2*(y2^3+y3^3+y4^3)/y2^4"),
        p("RG", &[4, 2, 4], "(3/16)*(y2^3+y3^3+y4^3)/y2^2"),
        p("RG", &[3, 3, 4], "(9/16)*y4^2/y2"),
        p("RG", &[4, 3, 4], "-(9/16)*y3^2/y2"),
        p("RB", &[2, 2, 2, 3], "(3/16)*(y2^3+4*y4^3+4*y3^3)*y3^2/y2^5"),
        p("RB", &[2, 3, 2, 3], "-(3/16)*(2*y2^3+2*y4^3+5*y3^3)*y3/y2^4"),
        p("RB", &[2, 4, 2, 3], "-(9/16)*y4^2*y3^2/y2^4"),
        p("RB", &[3, 2, 2, 3], "(3/16)*(y2^3-2*y3^3-2*y4^3)/y2^3"),
        p("RB", &[3, 3, 2, 3], "(9/16)*y3^2/y2^2"),
        p("RB", &[3, 4, 2, 3], "(9/16)*y4^2/y2^2"),
        p("RB", &[2, 2, 2, 4], "(3/16)*(y2^3+4*y4^3+4*y3^3)*y4^2/y2^5"),
        p("RB", &[2, 3, 2, 4], "-(9/16)*y4^2*y3^2/y2^4"),
        p("RB", &[2, 4, 2, 4], "-(3/16)*(2*y2^3+5*y4^3+2*y3^3)*y4/y2^4"),
        p("RB", &[4, 2, 2, 4], "(3/16)*(y2^3-2*y3^3-2*y4^3)/y2^3"),
        p("RB", &[4, 3, 2, 4], "(9/16)*y3^2/y2^2"),
        p("RB", &[4, 4, 2, 4], "(9/16)*y4^2/y2^2"),
        p("RB", &[3, 2, 3, 4], "-(9/16)*y4^2/y2^2"),
        p("RB", &[3, 4, 3, 4], "(9/8)*y4/y2"),
        p("RB", &[4, 2, 3, 4], "(9/16)*y3^2/y2^2"),
        p("RB", &[4, 3, 3, 4], "-(9/8)*y3/y2"),
    ],
};

pub const EXAMPLES: [&ExampleSpace; 3] = [&EX1, &EX2, &EX3];

pub fn example(name: &str) -> Option<&'static ExampleSpace> {
    EXAMPLES.into_iter().find(|e| e.name == name)
}
