#![allow(dead_code)]

use std::collections::HashMap;

use celltrack::geometry::Ellipse;
use celltrack::graph::TrackingGraph;
use celltrack::ilp::{IpModel, Sense};
use celltrack::lineage::{LineageForest, Track};
use rand::Rng;

/// `(name, sparse coefficients, sense, rhs)`.
pub type ParsedRow = (String, Vec<(usize, f64)>, Sense, f64);

/// A linear program read back from LP text.
#[derive(Debug, Default, PartialEq)]
pub struct ParsedLp {
    pub maximize: bool,
    /// Variable names in objective order.
    pub vars: Vec<String>,
    pub objective: Vec<f64>,
    pub rows: Vec<ParsedRow>,
    pub bounds: Vec<(f64, f64)>,
    pub binaries: Vec<usize>,
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    None,
    Objective,
    Constraints,
    Bounds,
    Binaries,
}

/// Reads the objective, constraint, bound and binary sections of CPLEX LP
/// text. Only the subset the exporter writes is understood.
pub fn parse_lp(text: &str) -> Result<ParsedLp, String> {
    let mut lp = ParsedLp::default();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut section = Section::None;
    let mut tokens: Vec<(Section, String)> = Vec::new();
    for raw in text.lines() {
        let line = raw.split('\\').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        match line.to_ascii_lowercase().as_str() {
            "maximize" | "maximise" | "max" => {
                lp.maximize = true;
                section = Section::Objective;
                continue;
            }
            "minimize" | "minimise" | "min" => {
                section = Section::Objective;
                continue;
            }
            "subject to" | "st" | "s.t." => {
                section = Section::Constraints;
                continue;
            }
            "bounds" => {
                section = Section::Bounds;
                continue;
            }
            "binaries" | "binary" | "bin" => {
                section = Section::Binaries;
                continue;
            }
            "end" => break,
            _ => {}
        }
        if section == Section::Bounds {
            tokens.push((section, line.to_string()));
            tokens.push((section, ";".into()));
        } else {
            tokens.extend(line.split_whitespace().map(|t| (section, t.to_string())));
        }
    }

    let mut it = tokens.into_iter().peekable();
    // Objective: "obj:" then signed terms.
    let mut pending_row: Option<(String, Vec<(usize, f64)>)> = None;
    let mut sign = 1.0;
    let mut coef: Option<f64> = None;
    while let Some((sec, tok)) = it.next() {
        match sec {
            Section::Objective => {
                if tok.ends_with(':') {
                    continue;
                }
                if tok == "+" || tok == "-" {
                    sign = if tok == "-" { -1.0 } else { 1.0 };
                } else if let Ok(v) = tok.parse::<f64>() {
                    coef = Some(v);
                } else {
                    if index.contains_key(&tok) {
                        return Err(format!("variable {tok} repeated in objective"));
                    }
                    index.insert(tok.clone(), lp.vars.len());
                    lp.vars.push(tok);
                    lp.objective.push(sign * coef.take().unwrap_or(1.0));
                    sign = 1.0;
                }
            }
            Section::Constraints => {
                if let Some(name) = tok.strip_suffix(':') {
                    if pending_row.is_some() {
                        return Err(format!("row before {name} has no right-hand side"));
                    }
                    pending_row = Some((name.to_string(), Vec::new()));
                    continue;
                }
                let row = pending_row.as_mut().ok_or("term outside a named row")?;
                let sense = match tok.as_str() {
                    "<=" | "=<" => Some(Sense::Le),
                    ">=" | "=>" => Some(Sense::Ge),
                    "=" => Some(Sense::Eq),
                    _ => None,
                };
                if let Some(sense) = sense {
                    let (_, rhs) = it.next().ok_or("missing right-hand side")?;
                    let rhs: f64 = rhs
                        .parse()
                        .map_err(|_| format!("bad right-hand side {rhs}"))?;
                    let (name, terms) = pending_row.take().unwrap();
                    lp.rows.push((name, terms, sense, rhs));
                } else if tok == "+" || tok == "-" {
                    sign = if tok == "-" { -1.0 } else { 1.0 };
                } else if let Ok(v) = tok.parse::<f64>() {
                    coef = Some(v);
                } else {
                    let j = *index.get(&tok).ok_or(format!("unknown variable {tok}"))?;
                    row.1.push((j, sign * coef.take().unwrap_or(1.0)));
                    sign = 1.0;
                }
            }
            Section::Bounds => {
                if tok == ";" {
                    continue;
                }
                let parts: Vec<&str> = tok.split_whitespace().collect();
                match parts.as_slice() {
                    [lo, "<=", name, "<=", hi] => {
                        let j = *index.get(*name).ok_or(format!("unknown variable {name}"))?;
                        if lp.bounds.len() < lp.vars.len() {
                            lp.bounds.resize(lp.vars.len(), (0.0, f64::INFINITY));
                        }
                        lp.bounds[j] = (
                            lo.parse().map_err(|_| format!("bad bound {lo}"))?,
                            hi.parse().map_err(|_| format!("bad bound {hi}"))?,
                        );
                    }
                    _ => return Err(format!("unsupported bound {tok:?}")),
                }
            }
            Section::Binaries => {
                lp.binaries
                    .push(*index.get(&tok).ok_or(format!("unknown binary {tok}"))?);
            }
            Section::None => return Err(format!("token {tok:?} before any section")),
        }
    }
    if pending_row.is_some() {
        return Err("unterminated row".into());
    }
    Ok(lp)
}

/// Dense constraint matrix with rows in model order.
pub fn dense_rows(num_vars: usize, rows: impl Iterator<Item = Vec<(usize, f64)>>) -> Vec<Vec<f64>> {
    rows.map(|terms| {
        let mut r = vec![0.0; num_vars];
        for (j, a) in terms {
            r[j] += a;
        }
        r
    })
    .collect()
}

/// Compares parsed LP text with the model it was exported from; returns the
/// first mismatch.
pub fn compare_with_model(lp: &ParsedLp, m: &IpModel) -> Result<(), String> {
    if !lp.maximize {
        return Err("objective sense is not maximize".into());
    }
    if lp.vars.len() != m.num_vars() {
        return Err(format!(
            "{} variables parsed, model has {}",
            lp.vars.len(),
            m.num_vars()
        ));
    }
    for j in 0..m.num_vars() {
        if lp.vars[j] != m.var_name(j) {
            return Err(format!(
                "variable {j} named {} instead of {}",
                lp.vars[j],
                m.var_name(j)
            ));
        }
        if lp.objective[j] != m.weights[j] {
            return Err(format!(
                "objective of {} is {} instead of {}",
                lp.vars[j], lp.objective[j], m.weights[j]
            ));
        }
    }
    if lp.rows.len() != m.num_rows() {
        return Err(format!(
            "{} rows parsed, model has {}",
            lp.rows.len(),
            m.num_rows()
        ));
    }
    let parsed = dense_rows(m.num_vars(), lp.rows.iter().map(|r| r.1.clone()));
    let built = dense_rows(m.num_vars(), m.rows.iter().map(|r| r.terms.clone()));
    for (r, row) in m.rows.iter().enumerate() {
        if parsed[r] != built[r] {
            return Err(format!("row {} coefficients differ", lp.rows[r].0));
        }
        if lp.rows[r].2 != row.sense || lp.rows[r].3 != row.rhs {
            return Err(format!(
                "row {} sense or right-hand side differs",
                lp.rows[r].0
            ));
        }
        if lp.rows[r].0 != m.row_name(r) {
            return Err(format!(
                "row {r} named {} instead of {}",
                lp.rows[r].0,
                m.row_name(r)
            ));
        }
    }
    if lp.bounds.len() != m.num_vars() || lp.bounds.iter().any(|&b| b != (0.0, 1.0)) {
        return Err("bounds are not all [0, 1]".into());
    }
    let mut bins = lp.binaries.clone();
    bins.sort_unstable();
    if bins != (0..m.num_vars()).collect::<Vec<_>>() {
        return Err("binaries do not list every variable once".into());
    }
    Ok(())
}

/// Violations of conservation, division prerequisite and (optionally)
/// exclusion in a flow, computed from the graph rather than the model rows.
pub fn flow_violations(g: &TrackingGraph, m: &IpModel, x: &[f64], exclusion: bool) -> Vec<String> {
    let mut out = Vec::new();
    let inflow = |v: usize| g.in_edges(v).iter().map(|&e| x[e]).sum::<f64>();
    let outflow = |v: usize| g.out_edges(v).iter().map(|&e| x[e]).sum::<f64>();
    for v in 0..g.num_vertices() {
        let (app, div, dis) = (x[m.app_var(v)], x[m.div_var(v)], x[m.dis_var(v)]);
        if inflow(v) + app + div != outflow(v) + dis {
            out.push(format!("conservation at vertex {v}"));
        }
        if div > 0.0 && inflow(v) + app < 1.0 {
            out.push(format!("division without activation at vertex {v}"));
        }
    }
    if exclusion {
        for (l, set) in g.exclusion_sets.iter().enumerate() {
            let act: f64 = set.iter().map(|&v| inflow(v) + x[m.app_var(v)]).sum();
            if act > 1.0 {
                out.push(format!("exclusion set {l} has {act} activations"));
            }
        }
    }
    out
}

pub const SLOT_COLUMNS: usize = 16;
pub const SLOT_SPACING: f64 = 20.0;

/// Center of the grid slot of track `id`; every track owns its own slot.
pub fn slot_center(id: u32) -> (f64, f64) {
    let k = id as usize - 1;
    (
        SLOT_SPACING * ((k % SLOT_COLUMNS) as f64 + 0.5),
        SLOT_SPACING * ((k / SLOT_COLUMNS) as f64 + 0.5),
    )
}

/// Forest of `n` starting cells where each step divides, disappears or is
/// followed by an appearance with the given probabilities. Cells are discs
/// of radius 4 in their track's slot.
pub fn simulate_forest<R: Rng>(
    rng: &mut R,
    n: usize,
    frames: u32,
    p_div: f64,
    p_dis: f64,
    p_app: f64,
) -> LineageForest {
    let mut tracks: Vec<Track> = Vec::new();
    let mut alive: Vec<usize> = Vec::new();
    let new_track = |tracks: &mut Vec<Track>, start: u32, parent: Option<u32>| {
        let id = tracks.len() as u32 + 1;
        tracks.push(Track {
            id,
            parent,
            start,
            end: start,
            divided: false,
            vertices: Vec::new(),
            ellipses: Vec::new(),
        });
        tracks.len() - 1
    };
    for _ in 0..n {
        let t = new_track(&mut tracks, 0, None);
        alive.push(t);
    }
    for f in 1..frames {
        let mut next = Vec::new();
        for &t in &alive {
            let u: f64 = rng.random();
            if u < p_div {
                tracks[t].divided = true;
                let id = tracks[t].id;
                next.push(new_track(&mut tracks, f, Some(id)));
                next.push(new_track(&mut tracks, f, Some(id)));
            } else if u < p_div + p_dis {
            } else {
                tracks[t].end = f;
                next.push(t);
            }
            if rng.random_bool(p_app) {
                next.push(new_track(&mut tracks, f, None));
            }
        }
        alive = next;
    }
    for t in &mut tracks {
        let (x, y) = slot_center(t.id);
        t.ellipses = vec![Ellipse::circle(x, y, 4.0); t.len()];
    }
    LineageForest { tracks }
}
