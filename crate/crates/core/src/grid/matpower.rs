//! Reader for the subset of the Matpower case format used here: `baseMVA`, `bus`,
//! `branch` and `gen`. Every other assignment in the file is skipped.

use std::collections::BTreeMap;

use log::warn;
use num_complex::Complex64;

use super::{Edge, NetworkGraph};
use crate::{Error, Result};

/// Network and nominal operating data extracted from a Matpower case.
#[derive(Clone, Debug)]
pub struct MatpowerCase {
    pub base_mva: f64,
    pub graph: NetworkGraph,
    /// Nominal active generation per node (pu), in graph layout order.
    pub p_nominal: Vec<f64>,
    /// Nominal reactive generation per node (pu).
    pub q_nominal: Vec<f64>,
    /// Active and reactive demand per node (pu). Mapping demand onto units or
    /// shunts is left to case preparation.
    pub load_p: Vec<f64>,
    pub load_q: Vec<f64>,
    /// Identifiers of buses hosting at least one in-service generator.
    pub generator_buses: Vec<u32>,
    /// Identifier of the bus marked as reference (type 3), if any.
    pub reference_bus: Option<u32>,
}

#[derive(Clone, Copy, Debug)]
struct Token {
    value: f64,
    line: usize,
    column: usize,
}

struct Table {
    line: usize,
    rows: Vec<Vec<Token>>,
}

fn parse_err(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse { line, column, message: message.into() }
}

/// Splits the text into scalar assignments and numeric matrices keyed by field name.
fn scan(text: &str) -> Result<(BTreeMap<String, Token>, BTreeMap<String, Table>)> {
    let mut scalars = BTreeMap::new();
    let mut tables: BTreeMap<String, Table> = BTreeMap::new();
    let mut open: Option<(String, Table, Vec<Token>)> = None;
    let mut skipping_cell = false;

    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let body = raw.split('%').next().unwrap_or("");
        let mut rest = body;
        let mut offset = 0usize;

        if open.is_none() {
            if skipping_cell {
                if body.contains('}') {
                    skipping_cell = false;
                }
                continue;
            }
            let trimmed = body.trim_start();
            let Some(after) = trimmed.strip_prefix("mpc.") else { continue };
            let Some(eq) = after.find('=') else { continue };
            let name = after[..eq].trim().to_string();
            let rhs = &after[eq + 1..];
            let rhs_trim = rhs.trim_start();
            if let Some(matrix) = rhs_trim.strip_prefix('[') {
                offset = body.len() - matrix.len();
                rest = matrix;
                open = Some((name, Table { line, rows: Vec::new() }, Vec::new()));
            } else if rhs_trim.starts_with('{') {
                skipping_cell = !rhs_trim.contains('}');
                continue;
            } else {
                let value_text = rhs_trim.trim_end().trim_end_matches(';').trim();
                let column = body.len() - rhs_trim.len() + 1;
                if let Ok(value) = value_text.parse::<f64>() {
                    scalars.insert(name, Token { value, line, column });
                }
                continue;
            }
        }

        let Some((_, table, row)) = open.as_mut() else { continue };
        let mut closed = false;
        let mut chars = rest.char_indices().peekable();
        while let Some((pos, ch)) = chars.next() {
            match ch {
                ']' => {
                    closed = true;
                    break;
                }
                ';' => {
                    if !row.is_empty() {
                        table.rows.push(std::mem::take(row));
                    }
                }
                c if c.is_whitespace() || c == ',' => {}
                _ => {
                    let start = pos;
                    let mut end = pos + ch.len_utf8();
                    while let Some(&(p, c)) = chars.peek() {
                        if c.is_whitespace() || c == ',' || c == ';' || c == ']' {
                            break;
                        }
                        end = p + c.len_utf8();
                        chars.next();
                    }
                    let word = &rest[start..end];
                    let column = offset + start + 1;
                    let value = word
                        .parse::<f64>()
                        .map_err(|_| parse_err(line, column, format!("non-numeric entry '{word}'")))?;
                    row.push(Token { value, line, column });
                }
            }
        }
        if !row.is_empty() {
            table.rows.push(std::mem::take(row));
        }
        if closed {
            let (name, table, _) = open.take().expect("open table");
            tables.insert(name, table);
        }
    }
    if let Some((name, table, _)) = open {
        return Err(parse_err(table.line, 1, format!("table '{name}' is never closed")));
    }
    Ok((scalars, tables))
}

fn column(row: &[Token], idx: usize, what: &str) -> Result<f64> {
    row.get(idx).map(|t| t.value).ok_or_else(|| {
        let first = row.first().copied().unwrap_or(Token { value: 0.0, line: 0, column: 0 });
        parse_err(first.line, first.column, format!("row has no {what} column (index {idx})"))
    })
}

fn as_id(row: &[Token], idx: usize, what: &str) -> Result<u32> {
    let value = column(row, idx, what)?;
    if value < 0.0 || value.fract() != 0.0 {
        let t = row[idx];
        return Err(parse_err(t.line, t.column, format!("{what} must be a non-negative integer, got {value}")));
    }
    Ok(value as u32)
}

/// Parses case text into a graph plus nominal setpoints.
///
/// Branches become series admittances `1 / (r + jx)` with half the line charging
/// attached as a shunt at each end. Off-nominal tap ratios scale the series
/// admittance by `1 / ratio`; phase shifts are ignored. Parallel branches are merged.
pub fn parse_matpower_case(text: &str) -> Result<MatpowerCase> {
    let (scalars, tables) = scan(text)?;
    let last_line = text.lines().count().max(1);
    let base = scalars
        .get("baseMVA")
        .ok_or_else(|| parse_err(last_line, 1, "missing baseMVA"))?;
    if base.value <= 0.0 {
        return Err(parse_err(base.line, base.column, "baseMVA must be positive"));
    }
    let base_mva = base.value;
    let table = |name: &str| {
        tables
            .get(name)
            .filter(|t| !t.rows.is_empty())
            .ok_or_else(|| parse_err(last_line, 1, format!("missing table '{name}'")))
    };
    let bus = table("bus")?;
    let branch = table("branch")?;
    let gen = table("gen")?;

    let mut ids = Vec::with_capacity(bus.rows.len());
    let mut reference_bus = None;
    for row in &bus.rows {
        let id = as_id(row, 0, "BUS_I")?;
        if column(row, 1, "BUS_TYPE")? == 3.0 && reference_bus.is_none() {
            reference_bus = Some(id);
        }
        ids.push(id);
    }
    let mut sorted = ids.clone();
    sorted.sort_unstable();
    let index = |id: u32, tok: Token| {
        sorted
            .binary_search(&id)
            .map_err(|_| parse_err(tok.line, tok.column, format!("unknown bus {id}")))
    };
    let n = sorted.len();
    let mut shunts = vec![Complex64::new(0.0, 0.0); n];
    let mut load_p = vec![0.0; n];
    let mut load_q = vec![0.0; n];
    for row in &bus.rows {
        let i = index(as_id(row, 0, "BUS_I")?, row[0])?;
        load_p[i] += column(row, 2, "PD")? / base_mva;
        load_q[i] += column(row, 3, "QD")? / base_mva;
        shunts[i] += Complex64::new(column(row, 4, "GS")?, column(row, 5, "BS")?) / base_mva;
    }

    let mut series: BTreeMap<(usize, usize), Complex64> = BTreeMap::new();
    for row in &branch.rows {
        let f = index(as_id(row, 0, "F_BUS")?, row[0])?;
        let t = index(as_id(row, 1, "T_BUS")?, row[1])?;
        if row.len() > 10 && row[10].value == 0.0 {
            continue;
        }
        let (r, x, b) = (column(row, 2, "BR_R")?, column(row, 3, "BR_X")?, column(row, 4, "BR_B")?);
        if r == 0.0 && x == 0.0 {
            return Err(parse_err(row[2].line, row[2].column, "zero-impedance branch"));
        }
        if f == t {
            return Err(parse_err(row[0].line, row[0].column, "branch connects a bus to itself"));
        }
        let mut y = Complex64::new(1.0, 0.0) / Complex64::new(r, x);
        if let Some(ratio) = row.get(8).map(|t| t.value).filter(|&v| v != 0.0 && v != 1.0) {
            y /= ratio;
        }
        if let Some(shift) = row.get(9).map(|t| t.value).filter(|&v| v != 0.0) {
            warn!("line {}: phase shift {shift} deg ignored", row[0].line);
        }
        *series.entry((f.min(t), f.max(t))).or_insert(Complex64::new(0.0, 0.0)) += y;
        let charging = Complex64::new(0.0, b / 2.0);
        shunts[f] += charging;
        shunts[t] += charging;
    }

    let mut p_nominal = vec![0.0; n];
    let mut q_nominal = vec![0.0; n];
    let mut generator_buses = Vec::new();
    for row in &gen.rows {
        let id = as_id(row, 0, "GEN_BUS")?;
        let i = index(id, row[0])?;
        if row.len() > 7 && row[7].value <= 0.0 {
            continue;
        }
        p_nominal[i] += column(row, 1, "PG")? / base_mva;
        q_nominal[i] += column(row, 2, "QG")? / base_mva;
        if !generator_buses.contains(&id) {
            generator_buses.push(id);
        }
    }
    generator_buses.sort_unstable();

    let mut edges: Vec<Edge> = series
        .iter()
        .map(|(&(i, j), &y)| Edge::series(sorted[i], sorted[j], y))
        .collect();
    for (i, y) in shunts.iter().enumerate() {
        if *y != Complex64::new(0.0, 0.0) {
            edges.push(Edge::shunt(sorted[i], *y));
        }
    }
    let graph = NetworkGraph::new(sorted.iter().copied(), &edges)?;
    Ok(MatpowerCase { base_mva, graph, p_nominal, q_nominal, load_p, load_q, generator_buses, reference_bus })
}

#[cfg(test)]
mod tests {
    use super::*;

    const CASE3: &str = r#"function mpc = case3
% three-bus test
mpc.version = '2';
mpc.baseMVA = 100;
%% bus data
%	bus_i	type	Pd	Qd	Gs	Bs	area	Vm	Va	baseKV	zone	Vmax	Vmin
mpc.bus = [
	1	3	0	0	0	0	1	1	0	345	1	1.1	0.9;
	2	2	0	0	0	0	1	1	0	345	1	1.1	0.9;
	3	1	90	30	0	19	1	1	0	345	1	1.1	0.9;
];
mpc.gen = [
	1	71.6	27.05	300	-300	1.04	100	1	250	10;
	2	163	6.54	300	-300	1.025	100	1	300	10;
];
mpc.branch = [
	1	2	0	0.1	0	250	250	250	0	0	1	-360	360;
	2	3	0.01	0.085	0.176	250	250	250	0	0	1	-360	360;
	1	3	0.017	0.092	0.158	250	250	250	0	0	0	-360	360;
];
mpc.bus_name = {
	'one';
};
"#;

    #[test]
    fn parses_subset() {
        let case = parse_matpower_case(CASE3).unwrap();
        assert_eq!(case.graph.nodes(), &[1, 2, 3]);
        assert_eq!(case.reference_bus, Some(1));
        assert_eq!(case.generator_buses, vec![1, 2]);
        assert!((case.p_nominal[0] - 0.716).abs() < 1e-15);
        assert!((case.q_nominal[1] - 0.0654).abs() < 1e-15);
        assert!((case.load_p[2] - 0.9).abs() < 1e-15);

        let y12: Vec<_> = case.graph.neighbors(0).collect();
        // the out-of-service 1-3 branch is dropped
        assert_eq!(y12.len(), 1);
        assert_eq!(y12[0].0, 1);
        assert!((y12[0].1 - Complex64::new(0.0, -10.0)).norm() < 1e-12);

        // bus 1 carries no shunt at all
        assert_eq!(case.graph.shunt(0), Complex64::new(0.0, 0.0));
        // bus 3: Bs/baseMVA plus half of the 2-3 line charging
        assert!((case.graph.shunt(2) - Complex64::new(0.0, 0.19 + 0.088)).norm() < 1e-12);
    }

    #[test]
    fn zero_impedance_branch_names_position() {
        let text = CASE3.replace("1	2	0	0.1	0", "1	2	0	0	0");
        match parse_matpower_case(&text) {
            Err(Error::Parse { line, column, .. }) => {
                assert_eq!(line, 17);
                assert!(column > 1);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_numeric_entry() {
        let text = CASE3.replace("163", "16x3");
        match parse_matpower_case(&text) {
            Err(Error::Parse { line, column, message }) => {
                assert_eq!(line, 14);
                assert_eq!(column, 4);
                assert!(message.contains("16x3"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_table() {
        let start = CASE3.find("mpc.gen").unwrap();
        let end = CASE3[start..].find("];").unwrap() + start + 2;
        let text = format!("{}{}", &CASE3[..start], &CASE3[end..]);
        let err = parse_matpower_case(&text).unwrap_err();
        assert!(err.to_string().contains("gen"), "{err}");
    }

    #[test]
    fn parallel_branches_merge_and_taps_fold() {
        let text = "mpc.baseMVA = 100;\nmpc.bus = [1 3 0 0 0 0; 2 1 0 0 0 0];\nmpc.gen = [1 10 0];\n\
                    mpc.branch = [1 2 0 0.1 0; 1 2 0 0.2 0 0 0 0 2.0 0 1];\n";
        let case = parse_matpower_case(text).unwrap();
        let (_, y) = case.graph.neighbors(0).next().unwrap();
        assert!((y - Complex64::new(0.0, -12.5)).norm() < 1e-12, "{y}");
        assert!((case.p_nominal[0] - 0.1).abs() < 1e-15);
    }
}
