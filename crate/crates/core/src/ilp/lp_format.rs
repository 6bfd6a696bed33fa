//! CPLEX LP text export.

use std::fmt::Write;

use super::{IpModel, Sense};

const MAX_LINE: usize = 78;

struct Wrapped {
    out: String,
    line_len: usize,
}

impl Wrapped {
    fn start(&mut self, head: &str) {
        self.out.push(' ');
        self.out.push_str(head);
        self.line_len = 1 + head.len();
    }

    fn token(&mut self, tok: &str) {
        if self.line_len + 1 + tok.len() > MAX_LINE {
            self.out.push_str("\n   ");
            self.line_len = 3;
        } else {
            self.out.push(' ');
            self.line_len += 1;
        }
        self.out.push_str(tok);
        self.line_len += tok.len();
    }

    fn end(&mut self) {
        self.out.push('\n');
        self.line_len = 0;
    }
}

fn term(coef: f64, name: &str) -> String {
    let sign = if coef < 0.0 { '-' } else { '+' };
    let mag = coef.abs();
    if mag == 1.0 {
        format!("{sign} {name}")
    } else {
        format!("{sign} {mag} {name}")
    }
}

/// Model as CPLEX LP text: objective, one named row per constraint, unit
/// bounds and the binary declarations. Every variable appears in the
/// objective, zero weights included.
pub fn export_lp(model: &IpModel) -> String {
    let names: Vec<String> = (0..model.num_vars()).map(|j| model.var_name(j)).collect();
    let mut w = Wrapped {
        out: String::new(),
        line_len: 0,
    };
    w.out.push_str("\\ celltrack flow model\n");
    w.out.push_str("Maximize\n");
    w.start("obj:");
    for (j, name) in names.iter().enumerate() {
        w.token(&term(model.weights[j], name));
    }
    w.end();
    w.out.push_str("Subject To\n");
    for (r, row) in model.rows.iter().enumerate() {
        w.start(&format!("{}:", model.row_name(r)));
        for &(j, a) in &row.terms {
            w.token(&term(a, &names[j]));
        }
        let op = match row.sense {
            Sense::Eq => "=",
            Sense::Le => "<=",
            Sense::Ge => ">=",
        };
        w.token(&format!("{op} {}", row.rhs));
        w.end();
    }
    w.out.push_str("Bounds\n");
    for name in &names {
        let _ = writeln!(w.out, " 0 <= {name} <= 1");
    }
    w.out.push_str("Binaries\n");
    if let Some((first, rest)) = names.split_first() {
        w.start(first);
        for name in rest {
            w.token(name);
        }
        w.end();
    }
    w.out.push_str("End\n");
    w.out
}
