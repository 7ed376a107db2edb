//! Plain-text problem dump for cross-checking against external solvers.
//!
//! ```text
//! isac-conic-problem 1
//! matrix_var <name> <dim>          (repeated)
//! scalar_var <name>                (repeated)
//! objective
//! <expr>
//! constraint <name> <eq|le|ge> <rhs>
//! <expr>
//! lmi <name> <dim>
//! entry <row> <col>
//! <expr>                           (one entry block per upper-triangle cell)
//! end
//! ```
//!
//! An `<expr>` starts with `expr <constant> <n_matrix_terms> <n_scalar_terms>`,
//! followed by `mterm <var> <dim>` and `dim` lines of `re im` pairs in
//! row-major order for every matrix term, then `sterm <var> <coef>` lines.
//! Floats use the shortest round-trip representation.

use std::fmt::Write;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::ConicError;
use crate::problem::{
    ConicProblem, LinearExpr, LmiConstraint, MatrixVarId, Relation, ScalarVarId,
};

const MAGIC: &str = "isac-conic-problem 1";

fn clean(name: &str) -> String {
    let s: String = name
        .chars()
        .map(|c| if c.is_whitespace() { '_' } else { c })
        .collect();
    if s.is_empty() {
        "_".into()
    } else {
        s
    }
}

fn write_expr(out: &mut String, e: &LinearExpr) {
    let _ = writeln!(
        out,
        "expr {:e} {} {}",
        e.constant,
        e.matrix_terms.len(),
        e.scalar_terms.len()
    );
    for (id, a) in &e.matrix_terms {
        let _ = writeln!(out, "mterm {} {}", id.0, a.nrows());
        for r in 0..a.nrows() {
            let row: Vec<String> = (0..a.ncols())
                .map(|c| format!("{:e} {:e}", a[(r, c)].re, a[(r, c)].im))
                .collect();
            let _ = writeln!(out, "{}", row.join(" "));
        }
    }
    for (id, c) in &e.scalar_terms {
        let _ = writeln!(out, "sterm {} {:e}", id.0, c);
    }
}

pub fn write_problem(p: &ConicProblem) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC}");
    for v in &p.matrix_vars {
        let _ = writeln!(out, "matrix_var {} {}", clean(&v.name), v.dim);
    }
    for s in &p.scalar_vars {
        let _ = writeln!(out, "scalar_var {}", clean(s));
    }
    let _ = writeln!(out, "objective");
    write_expr(&mut out, &p.objective);
    for c in &p.constraints {
        let _ = writeln!(
            out,
            "constraint {} {} {:e}",
            clean(&c.name),
            c.relation.symbol(),
            c.rhs
        );
        write_expr(&mut out, &c.expr);
    }
    for l in &p.lmis {
        let _ = writeln!(out, "lmi {} {}", clean(&l.name), l.dim);
        for r in 0..l.dim {
            for c in r..l.dim {
                let _ = writeln!(out, "entry {r} {c}");
                write_expr(&mut out, l.entry(r, c));
            }
        }
    }
    let _ = writeln!(out, "end");
    out
}

struct Lines<'a> {
    it: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<Vec<&'a str>, ConicError> {
        loop {
            let (i, l) = self.it.next().ok_or(ConicError::Parse {
                line: self.line + 1,
                msg: "unexpected end of input".into(),
            })?;
            self.line = i + 1;
            let t: Vec<&str> = l.split_whitespace().collect();
            if !t.is_empty() {
                return Ok(t);
            }
        }
    }

    fn err(&self, msg: impl Into<String>) -> ConicError {
        ConicError::Parse {
            line: self.line,
            msg: msg.into(),
        }
    }

    fn num<T: std::str::FromStr>(&self, s: &str) -> Result<T, ConicError> {
        s.parse().map_err(|_| self.err(format!("bad number `{s}`")))
    }
}

fn read_expr(lines: &mut Lines) -> Result<LinearExpr, ConicError> {
    let t = lines.next()?;
    if t.len() != 4 || t[0] != "expr" {
        return Err(lines.err("expected `expr <constant> <m> <s>`"));
    }
    let mut e = LinearExpr::constant(lines.num(t[1])?);
    let nm: usize = lines.num(t[2])?;
    let ns: usize = lines.num(t[3])?;
    for _ in 0..nm {
        let t = lines.next()?;
        if t.len() != 3 || t[0] != "mterm" {
            return Err(lines.err("expected `mterm <var> <dim>`"));
        }
        let var: usize = lines.num(t[1])?;
        let dim: usize = lines.num(t[2])?;
        let mut a = DMatrix::zeros(dim, dim);
        for r in 0..dim {
            let row = lines.next()?;
            if row.len() != 2 * dim {
                return Err(lines.err(format!("expected {} numbers", 2 * dim)));
            }
            for c in 0..dim {
                a[(r, c)] = Complex64::new(lines.num(row[2 * c])?, lines.num(row[2 * c + 1])?);
            }
        }
        e.matrix_terms.push((MatrixVarId(var), a));
    }
    for _ in 0..ns {
        let t = lines.next()?;
        if t.len() != 3 || t[0] != "sterm" {
            return Err(lines.err("expected `sterm <var> <coef>`"));
        }
        e.scalar_terms.push((ScalarVarId(lines.num(t[1])?), lines.num(t[2])?));
    }
    Ok(e)
}

pub fn parse_problem(text: &str) -> Result<ConicProblem, ConicError> {
    let mut lines = Lines {
        it: text.lines().enumerate(),
        line: 0,
    };
    if lines.next()?.join(" ") != MAGIC {
        return Err(lines.err("missing header"));
    }
    let mut p = ConicProblem::new();
    loop {
        let t = lines.next()?;
        match t[0] {
            "matrix_var" if t.len() == 3 => {
                let dim = lines.num(t[2])?;
                p.add_matrix_var(t[1], dim);
            }
            "scalar_var" if t.len() == 2 => {
                p.add_scalar_var(t[1]);
            }
            "objective" => p.objective = read_expr(&mut lines)?,
            "constraint" if t.len() == 4 => {
                let rel = match t[2] {
                    "eq" => Relation::Eq,
                    "le" => Relation::Le,
                    "ge" => Relation::Ge,
                    other => return Err(lines.err(format!("unknown relation `{other}`"))),
                };
                let rhs = lines.num(t[3])?;
                let expr = read_expr(&mut lines)?;
                p.add_constraint(t[1], expr, rel, rhs);
            }
            "lmi" if t.len() == 3 => {
                let dim: usize = lines.num(t[2])?;
                let mut l = LmiConstraint::new(t[1], dim);
                for _ in 0..dim * (dim + 1) / 2 {
                    let e = lines.next()?;
                    if e.len() != 3 || e[0] != "entry" {
                        return Err(lines.err("expected `entry <row> <col>`"));
                    }
                    let (r, c): (usize, usize) = (lines.num(e[1])?, lines.num(e[2])?);
                    if r >= dim || c >= dim {
                        return Err(lines.err("entry index out of range"));
                    }
                    let expr = read_expr(&mut lines)?;
                    l.set(r, c, expr);
                }
                p.add_lmi(l);
            }
            "end" => break,
            other => return Err(lines.err(format!("unexpected `{other}`"))),
        }
    }
    p.validate()?;
    Ok(p)
}
