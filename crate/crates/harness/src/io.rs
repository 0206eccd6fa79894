//! Network files: ternary adjacency CSV, edge lists, and weighted matrices
//! thresholded into ternary networks.
//!
//! Node indices in edge lists are 0-based. `NA` (any case) marks a missing dyad.

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use sbm_sampling::{DyadState, ObservedNetwork};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NetworkFormat {
    /// `n x n` grid of `0`, `1`, `NA`; the diagonal is ignored.
    TernaryCsv,
    /// One `i j s` dyad per line.
    EdgeList,
    /// `n x n` grid of confidence weights in `[0, 1]`, thresholded with `gamma`.
    WeightedCsv,
}

impl FromStr for NetworkFormat {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ternary" | "ternary-csv" | "csv" => Ok(NetworkFormat::TernaryCsv),
            "edge-list" | "edges" => Ok(NetworkFormat::EdgeList),
            "weighted" | "weighted-csv" => Ok(NetworkFormat::WeightedCsv),
            other => Err(HarnessError::input(format!("unknown network format '{other}'"))),
        }
    }
}

/// How edge-list loading treats pairs that no line mentions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EdgeListOptions {
    pub unlisted: DyadState,
    /// Node count; falls back to a `# n = <count>` header, then to the largest
    /// index plus one.
    pub n: Option<usize>,
}

impl Default for EdgeListOptions {
    fn default() -> Self {
        EdgeListOptions {
            unlisted: DyadState::Missing,
            n: None,
        }
    }
}

fn parse_state(token: &str) -> Result<DyadState> {
    match token.trim() {
        "0" => Ok(DyadState::Absent),
        "1" => Ok(DyadState::Present),
        t if t.eq_ignore_ascii_case("na") => Ok(DyadState::Missing),
        t => Err(HarnessError::input(format!("expected 0, 1 or NA, found '{t}'"))),
    }
}

fn state_token(s: DyadState) -> &'static str {
    match s {
        DyadState::Absent => "0",
        DyadState::Present => "1",
        DyadState::Missing => "NA",
    }
}

/// Square grid of raw cells; errors on ragged rows.
fn read_grid<R: Read>(reader: R) -> Result<Vec<Vec<String>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        rows.push(rec.iter().map(str::to_owned).collect::<Vec<_>>());
    }
    let n = rows.len();
    if let Some((k, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != n) {
        return Err(HarnessError::input(format!(
            "ragged grid: row {} has {} cells, expected {n}",
            k + 1,
            r.len()
        )));
    }
    Ok(rows)
}

pub fn parse_ternary_csv<R: Read>(reader: R) -> Result<ObservedNetwork> {
    let grid = read_grid(reader)?;
    let n = grid.len();
    let mut cells = vec![vec![DyadState::Missing; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                cells[i][j] = parse_state(&grid[i][j])
                    .map_err(|e| HarnessError::input(format!("cell ({}, {}): {e}", i + 1, j + 1)))?;
            }
        }
    }
    let mut net = ObservedNetwork::filled(n, DyadState::Missing);
    for i in 0..n {
        for j in (i + 1)..n {
            if cells[i][j] != cells[j][i] {
                return Err(HarnessError::input(format!(
                    "conflicting entries at ({}, {}) and ({}, {})",
                    i + 1,
                    j + 1,
                    j + 1,
                    i + 1
                )));
            }
            net.set(i, j, cells[i][j])?;
        }
    }
    Ok(net)
}

pub fn parse_edge_list<R: Read>(reader: R, opts: EdgeListOptions) -> Result<ObservedNetwork> {
    let mut entries = Vec::new();
    let mut header_n = None;
    for (k, line) in BufReader::new(reader).lines().enumerate() {
        let line = line.map_err(|e| HarnessError::io("<edge list>", e))?;
        let line = line.trim();
        if let Some(comment) = line.strip_prefix('#') {
            // `# n = <count>` fixes the node count
            if let Some((key, value)) = comment.split_once('=') {
                if key.trim() == "n" {
                    header_n = value.trim().parse::<usize>().ok();
                }
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(|c: char| c.is_whitespace() || c == ',').filter(|f| !f.is_empty()).collect();
        if fields.len() != 3 {
            return Err(HarnessError::input(format!("line {}: expected 'i j s'", k + 1)));
        }
        let idx = |f: &str| {
            f.parse::<usize>()
                .map_err(|_| HarnessError::input(format!("line {}: bad node index '{f}'", k + 1)))
        };
        let (i, j) = (idx(fields[0])?, idx(fields[1])?);
        if i == j {
            return Err(HarnessError::input(format!("line {}: self-dyad ({i}, {i})", k + 1)));
        }
        let s = parse_state(fields[2]).map_err(|e| HarnessError::input(format!("line {}: {e}", k + 1)))?;
        entries.push((k + 1, i, j, s));
    }
    let inferred = entries.iter().map(|&(_, i, j, _)| i.max(j) + 1).max().unwrap_or(0);
    let n = opts.n.or(header_n).unwrap_or(inferred);
    let mut net = ObservedNetwork::filled(n, opts.unlisted);
    let mut seen = std::collections::HashMap::new();
    for (line, i, j, s) in entries {
        if i.max(j) >= n {
            return Err(HarnessError::input(format!("line {line}: node {} out of range for n = {n}", i.max(j))));
        }
        let key = (i.min(j), i.max(j));
        if let Some(&prev) = seen.get(&key) {
            if prev != s {
                return Err(HarnessError::input(format!("line {line}: conflicting entries for dyad ({i}, {j})")));
            }
        }
        seen.insert(key, s);
        net.set(i, j, s)?;
    }
    Ok(net)
}

/// Weight grid; empty cells and `NA` read as weight 0.
pub fn parse_weights<R: Read>(reader: R) -> Result<DMatrix<f64>> {
    let grid = read_grid(reader)?;
    let n = grid.len();
    let mut w = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let cell = grid[i][j].as_str();
            if i == j || cell.is_empty() || cell.eq_ignore_ascii_case("na") {
                continue;
            }
            w[(i, j)] = cell
                .parse::<f64>()
                .map_err(|_| HarnessError::input(format!("cell ({}, {}): bad weight '{cell}'", i + 1, j + 1)))?;
        }
    }
    Ok(w)
}

/// Three-way rule: `Present` if `w > 1 - gamma`, `Absent` if `w < gamma`,
/// `Missing` otherwise. A weight of 0 stands for an unlisted pair and reads as
/// `Absent`.
pub fn threshold_weighted(weights: &DMatrix<f64>, gamma: f64) -> Result<ObservedNetwork> {
    if !(gamma > 0.0 && gamma < 0.5) {
        return Err(HarnessError::input(format!("gamma must lie in (0, 0.5), got {gamma}")));
    }
    let n = weights.nrows();
    if weights.ncols() != n {
        return Err(HarnessError::input("weight matrix must be square"));
    }
    let mut net = ObservedNetwork::filled(n, DyadState::Absent);
    for i in 0..n {
        for j in (i + 1)..n {
            let w = weights[(i, j)];
            if (w - weights[(j, i)]).abs() > 1e-12 {
                return Err(HarnessError::input(format!("asymmetric weights at ({}, {})", i + 1, j + 1)));
            }
            if !(0.0..=1.0).contains(&w) {
                return Err(HarnessError::input(format!("weight {w} at ({}, {}) outside [0, 1]", i + 1, j + 1)));
            }
            let s = if w > 1.0 - gamma {
                DyadState::Present
            } else if w < gamma {
                DyadState::Absent
            } else {
                DyadState::Missing
            };
            net.set(i, j, s)?;
        }
    }
    Ok(net)
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| HarnessError::io(path, e))
}

/// Loads a network; `gamma` is required for (and only used by) weighted input.
pub fn load_network(path: &Path, format: NetworkFormat, gamma: Option<f64>) -> Result<ObservedNetwork> {
    let file = open(path)?;
    match format {
        NetworkFormat::TernaryCsv => parse_ternary_csv(file),
        NetworkFormat::EdgeList => parse_edge_list(file, EdgeListOptions::default()),
        NetworkFormat::WeightedCsv => {
            let gamma = gamma.ok_or_else(|| HarnessError::input("weighted input needs --gamma"))?;
            threshold_weighted(&parse_weights(file)?, gamma)
        }
    }
}

pub fn write_ternary_csv<W: Write>(net: &ObservedNetwork, out: W) -> Result<()> {
    let n = net.n();
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    for i in 0..n {
        let row: Vec<&str> = (0..n).map(|j| if i == j { "0" } else { state_token(net.get(i, j)) }).collect();
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| HarnessError::io("<csv>", e))?;
    Ok(())
}

/// Writes every dyad, so the list reloads exactly under any `unlisted` default.
pub fn write_edge_list<W: Write>(net: &ObservedNetwork, mut out: W) -> Result<()> {
    let wrap = |e| HarnessError::io("<edge list>", e);
    writeln!(out, "# n = {}", net.n()).map_err(wrap)?;
    for (i, j, s) in net.dyads() {
        writeln!(out, "{i} {j} {}", state_token(s)).map_err(wrap)?;
    }
    out.flush().map_err(wrap)
}

pub fn save_network(path: &Path, net: &ObservedNetwork, format: NetworkFormat) -> Result<()> {
    let file = File::create(path).map_err(|e| HarnessError::io(path, e))?;
    let out = std::io::BufWriter::new(file);
    match format {
        NetworkFormat::TernaryCsv => write_ternary_csv(net, out),
        NetworkFormat::EdgeList => write_edge_list(net, out),
        NetworkFormat::WeightedCsv => Err(HarnessError::input("networks are saved as ternary CSV or edge lists")),
    }
}
