//! Benchmark file formats: MIS graphs (simple edge list and DIMACS) and the
//! VRPLIB subset used for CVRP instances.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::problem::{GraphInstance, ProblemError};

#[derive(Debug, thiserror::Error)]
pub enum ParseError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("missing section {0}")]
    MissingSection(&'static str),
    #[error("unsupported edge weight type {0}")]
    UnsupportedEdgeWeight(String),
    #[error("inconsistent dimension: {0}")]
    Dimension(String),
    #[error(transparent)]
    Graph(#[from] ProblemError),
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

fn malformed(line: usize, message: impl Into<String>) -> ParseError {
    ParseError::Malformed {
        line: line + 1,
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphFormat {
    /// `n m` header then `u v` lines, 0-indexed, `#` comments.
    Simple,
    /// `p edge n m` header then `e u v` lines, 1-indexed, `c` comments.
    Dimacs,
}

/// Parses either graph format; DIMACS is recognised by its `p` header.
pub fn parse_edge_list(text: &str) -> Result<GraphInstance, ParseError> {
    parse_edge_list_named(text, "graph")
}

pub fn parse_edge_list_named(text: &str, name: &str) -> Result<GraphInstance, ParseError> {
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#') && !l.starts_with('c'))
        .collect();
    let Some(&(first_no, first)) = lines.first() else {
        return Err(malformed(0, "empty graph file"));
    };
    let dimacs = first.starts_with('p');

    let header: Vec<&str> = first.split_whitespace().collect();
    let n_token = if dimacs {
        if header.len() != 4 {
            return Err(malformed(first_no, "expected `p edge <n> <m>`"));
        }
        header[2]
    } else {
        if header.len() != 2 {
            return Err(malformed(first_no, "expected `<n> <m>` header"));
        }
        header[0]
    };
    let n: usize = n_token
        .parse()
        .map_err(|_| malformed(first_no, format!("bad vertex count {n_token:?}")))?;

    let mut edges = Vec::new();
    for &(no, line) in &lines[1..] {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        let (u, v) = match (dimacs, tokens.as_slice()) {
            (true, ["e", u, v]) | (false, [u, v]) => (*u, *v),
            _ => return Err(malformed(no, format!("unexpected line {line:?}"))),
        };
        let parse = |t: &str| -> Result<usize, ParseError> {
            t.parse::<usize>()
                .map_err(|_| malformed(no, format!("bad vertex index {t:?}")))
        };
        let (mut u, mut v) = (parse(u)?, parse(v)?);
        if dimacs {
            if u == 0 || v == 0 {
                return Err(malformed(no, "DIMACS vertices are 1-indexed"));
            }
            u -= 1;
            v -= 1;
        }
        edges.push((u, v));
    }
    Ok(GraphInstance::new(name, n, edges)?)
}

pub fn write_edge_list(graph: &GraphInstance, format: GraphFormat) -> String {
    let mut out = String::new();
    match format {
        GraphFormat::Simple => {
            let _ = writeln!(out, "{} {}", graph.n(), graph.edges().len());
            for &(u, v) in graph.edges() {
                let _ = writeln!(out, "{u} {v}");
            }
        }
        GraphFormat::Dimacs => {
            let _ = writeln!(out, "p edge {} {}", graph.n(), graph.edges().len());
            for &(u, v) in graph.edges() {
                let _ = writeln!(out, "e {} {}", u + 1, v + 1);
            }
        }
    }
    out
}

pub fn load_graph(path: &Path) -> Result<GraphInstance, ParseError> {
    let text = std::fs::read_to_string(path).map_err(|source| ParseError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "graph".into());
    parse_edge_list_named(&text, &name)
}

/// A capacitated VRP instance with its integral (nint) distance matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvrpInstance {
    pub name: String,
    pub coords: Vec<(f64, f64)>,
    pub demands: Vec<u64>,
    pub capacity: u64,
    pub n_vehicles: usize,
    pub depot: usize,
    pub known_optimum: Option<f64>,
    dist: Vec<Vec<f64>>,
    /// Distances were given explicitly rather than derived from `coords`.
    #[serde(default)]
    explicit: bool,
}

impl CvrpInstance {
    pub fn new(
        name: impl Into<String>,
        coords: Vec<(f64, f64)>,
        demands: Vec<u64>,
        capacity: u64,
        n_vehicles: usize,
        depot: usize,
    ) -> Self {
        let dist = coords
            .iter()
            .map(|&a| coords.iter().map(|&b| euc_2d(a, b)).collect())
            .collect();
        CvrpInstance {
            name: name.into(),
            coords,
            demands,
            capacity,
            n_vehicles,
            depot,
            known_optimum: None,
            dist,
            explicit: false,
        }
    }

    /// Instance with a given symmetric distance matrix; `coords` may be
    /// empty or carry display positions only.
    pub fn with_distances(
        name: impl Into<String>,
        coords: Vec<(f64, f64)>,
        dist: Vec<Vec<f64>>,
        demands: Vec<u64>,
        capacity: u64,
        n_vehicles: usize,
        depot: usize,
    ) -> Self {
        CvrpInstance {
            name: name.into(),
            coords,
            demands,
            capacity,
            n_vehicles,
            depot,
            known_optimum: None,
            dist,
            explicit: true,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.dist.len()
    }

    pub fn customers(&self) -> Vec<usize> {
        (0..self.n_nodes()).filter(|&i| i != self.depot).collect()
    }

    pub fn dist(&self, i: usize, j: usize) -> f64 {
        self.dist[i][j]
    }

    pub fn distance_matrix(&self) -> &[Vec<f64>] {
        &self.dist
    }

    pub fn total_demand(&self) -> u64 {
        self.demands.iter().sum()
    }
}

/// TSPLIB `nint`: Euclidean distance rounded half up.
pub fn euc_2d(a: (f64, f64), b: (f64, f64)) -> f64 {
    let d = ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt();
    (d + 0.5).floor()
}

/// Vehicle count from a `-kM` name suffix, e.g. `E-n13-k4`.
pub fn vehicles_from_name(name: &str) -> Option<usize> {
    name.rsplit('-')
        .find_map(|part| part.strip_prefix('k').and_then(|k| k.parse().ok()))
}

fn optimum_from_comment(comment: &str) -> Option<f64> {
    let lower = comment.to_ascii_lowercase();
    ["best value", "optimal value"].iter().find_map(|key| {
        let rest = &lower[lower.find(key)? + key.len()..];
        let rest = rest.trim_start_matches([':', ' ', '=']);
        let num: String = rest
            .chars()
            .take_while(|c| c.is_ascii_digit() || *c == '.')
            .collect();
        num.parse().ok()
    })
}

pub fn parse_vrplib(text: &str) -> Result<CvrpInstance, ParseError> {
    let mut name = None;
    let mut comment = String::new();
    let mut dimension: Option<usize> = None;
    let mut capacity: Option<u64> = None;
    let mut weight_type: Option<String> = None;
    let mut vehicles: Option<usize> = None;
    let mut coords: Option<Vec<Option<(f64, f64)>>> = None;
    let mut demands: Option<Vec<Option<u64>>> = None;
    let mut depots: Option<Vec<usize>> = None;
    let mut weight_format: Option<String> = None;
    let mut weights: Option<Vec<f64>> = None;

    #[derive(PartialEq)]
    enum Section {
        Header,
        Coords,
        Demands,
        Depots,
        Weights,
        Skip,
    }
    let mut section = Section::Header;

    let need_dim = |dimension: Option<usize>, no: usize| {
        dimension.ok_or_else(|| malformed(no, "section appears before DIMENSION"))
    };

    for (no, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if line == "EOF" {
            break;
        }
        let upper = line.to_ascii_uppercase();
        if upper.starts_with("EDGE_WEIGHT_SECTION") {
            weights = Some(Vec::new());
            section = Section::Weights;
            continue;
        }
        if upper.starts_with("DISPLAY_DATA_SECTION") && coords.is_some() {
            section = Section::Skip;
            continue;
        }
        if upper.starts_with("NODE_COORD_SECTION") || upper.starts_with("DISPLAY_DATA_SECTION") {
            coords = Some(vec![None; need_dim(dimension, no)?]);
            section = Section::Coords;
            continue;
        }
        if upper.starts_with("DEMAND_SECTION") {
            demands = Some(vec![None; need_dim(dimension, no)?]);
            section = Section::Demands;
            continue;
        }
        if upper.starts_with("DEPOT_SECTION") {
            depots = Some(Vec::new());
            section = Section::Depots;
            continue;
        }
        if let Some((key, value)) = line.split_once(':') {
            if key.trim().chars().all(|c| c.is_ascii_uppercase() || c == '_') {
                let value = value.trim();
                match key.trim() {
                    "NAME" => name = Some(value.to_string()),
                    "COMMENT" => comment = value.to_string(),
                    "DIMENSION" => {
                        dimension = Some(
                            value
                                .parse()
                                .map_err(|_| malformed(no, "bad DIMENSION"))?,
                        )
                    }
                    "CAPACITY" => {
                        capacity = Some(value.parse().map_err(|_| malformed(no, "bad CAPACITY"))?)
                    }
                    "EDGE_WEIGHT_TYPE" => weight_type = Some(value.to_string()),
                    "EDGE_WEIGHT_FORMAT" => weight_format = Some(value.to_string()),
                    "VEHICLES" => {
                        vehicles = Some(value.parse().map_err(|_| malformed(no, "bad VEHICLES"))?)
                    }
                    _ => {}
                }
                section = Section::Header;
                continue;
            }
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match section {
            Section::Header => return Err(malformed(no, format!("unexpected line {line:?}"))),
            Section::Skip => {}
            Section::Weights => {
                for t in tokens {
                    let w = t.parse().map_err(|_| malformed(no, format!("bad edge weight {t:?}")))?;
                    weights.as_mut().expect("in weight section").push(w);
                }
            }
            Section::Coords => {
                let [id, x, y] = tokens.as_slice() else {
                    return Err(malformed(no, "expected `id x y`"));
                };
                let id = node_id(id, dimension, no)?;
                let x = x.parse().map_err(|_| malformed(no, "bad x coordinate"))?;
                let y = y.parse().map_err(|_| malformed(no, "bad y coordinate"))?;
                coords.as_mut().expect("in coord section")[id] = Some((x, y));
            }
            Section::Demands => {
                let [id, d] = tokens.as_slice() else {
                    return Err(malformed(no, "expected `id demand`"));
                };
                let id = node_id(id, dimension, no)?;
                let d = d.parse().map_err(|_| malformed(no, "bad demand"))?;
                demands.as_mut().expect("in demand section")[id] = Some(d);
            }
            Section::Depots => {
                for t in tokens {
                    let v: i64 = t.parse().map_err(|_| malformed(no, "bad depot id"))?;
                    if v == -1 {
                        section = Section::Header;
                        break;
                    }
                    let id = node_id(t, dimension, no)?;
                    depots.as_mut().expect("in depot section").push(id);
                }
            }
        }
    }

    let name = name.ok_or(ParseError::MissingSection("NAME"))?;
    let dimension = dimension.ok_or(ParseError::MissingSection("DIMENSION"))?;
    let capacity = capacity.ok_or(ParseError::MissingSection("CAPACITY"))?;
    let weight_type = weight_type.ok_or(ParseError::MissingSection("EDGE_WEIGHT_TYPE"))?;
    let demands = demands.ok_or(ParseError::MissingSection("DEMAND_SECTION"))?;
    let depots = depots.ok_or(ParseError::MissingSection("DEPOT_SECTION"))?;
    let coords: Option<Vec<(f64, f64)>> = match (coords, weight_type.as_str()) {
        (None, "EUC_2D") => return Err(ParseError::MissingSection("NODE_COORD_SECTION")),
        (None, _) => None,
        (Some(c), _) => Some(
            c.into_iter()
                .enumerate()
                .map(|(i, c)| c.ok_or_else(|| ParseError::Dimension(format!("no coordinates for node {}", i + 1))))
                .collect::<Result<_, _>>()?,
        ),
    };
    let explicit = match weight_type.as_str() {
        "EUC_2D" => None,
        "EXPLICIT" => {
            let format = weight_format.ok_or(ParseError::MissingSection("EDGE_WEIGHT_FORMAT"))?;
            let values = weights.ok_or(ParseError::MissingSection("EDGE_WEIGHT_SECTION"))?;
            Some(explicit_matrix(&format, &values, dimension)?)
        }
        other => return Err(ParseError::UnsupportedEdgeWeight(other.to_string())),
    };
    let demands: Vec<u64> = demands
        .into_iter()
        .enumerate()
        .map(|(i, d)| d.ok_or_else(|| ParseError::Dimension(format!("no demand for node {}", i + 1))))
        .collect::<Result<_, _>>()?;
    let &[depot] = depots.as_slice() else {
        return Err(ParseError::Dimension(format!(
            "expected exactly one depot, found {}",
            depots.len()
        )));
    };
    if demands[depot] != 0 {
        return Err(ParseError::Dimension("depot demand must be 0".into()));
    }
    let n_vehicles = vehicles
        .or_else(|| vehicles_from_name(&name))
        .unwrap_or_else(|| demands.iter().sum::<u64>().div_ceil(capacity.max(1)) as usize);

    let mut inst = match explicit {
        Some(dist) => CvrpInstance::with_distances(
            name,
            coords.unwrap_or_default(),
            dist,
            demands,
            capacity,
            n_vehicles,
            depot,
        ),
        None => CvrpInstance::new(name, coords.expect("checked above"), demands, capacity, n_vehicles, depot),
    };
    inst.known_optimum = optimum_from_comment(&comment);
    Ok(inst)
}

/// Symmetric matrix from an `EDGE_WEIGHT_SECTION` in one of the triangular
/// or full layouts.
fn explicit_matrix(format: &str, values: &[f64], n: usize) -> Result<Vec<Vec<f64>>, ParseError> {
    let mut d = vec![vec![0.0; n]; n];
    let cells: Vec<(usize, usize)> = match format {
        "LOWER_ROW" => (0..n).flat_map(|i| (0..i).map(move |j| (i, j))).collect(),
        "LOWER_DIAG_ROW" => (0..n).flat_map(|i| (0..=i).map(move |j| (i, j))).collect(),
        "UPPER_ROW" => (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect(),
        "UPPER_DIAG_ROW" => (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect(),
        "FULL_MATRIX" => (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).collect(),
        other => return Err(ParseError::UnsupportedEdgeWeight(format!("EXPLICIT/{other}"))),
    };
    if cells.len() != values.len() {
        return Err(ParseError::Dimension(format!(
            "{format} with dimension {n} needs {} weights, found {}",
            cells.len(),
            values.len()
        )));
    }
    for (&(i, j), &w) in cells.iter().zip(values) {
        d[i][j] = w;
        d[j][i] = w;
    }
    Ok(d)
}

fn node_id(token: &str, dimension: Option<usize>, no: usize) -> Result<usize, ParseError> {
    let dim = dimension.ok_or_else(|| malformed(no, "node before DIMENSION"))?;
    let id: usize = token
        .parse()
        .map_err(|_| malformed(no, format!("bad node id {token:?}")))?;
    if id == 0 || id > dim {
        return Err(ParseError::Dimension(format!(
            "node id {id} outside 1..={dim}"
        )));
    }
    Ok(id - 1)
}

/// Writes the VRPLIB subset that [`parse_vrplib`] reads.
pub fn write_vrplib(inst: &CvrpInstance) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "NAME : {}", inst.name);
    match inst.known_optimum {
        Some(opt) => {
            let _ = writeln!(out, "COMMENT : (Best value: {opt})");
        }
        None => {
            let _ = writeln!(out, "COMMENT : (generated)");
        }
    }
    let _ = writeln!(out, "TYPE : CVRP");
    let _ = writeln!(out, "DIMENSION : {}", inst.n_nodes());
    if inst.explicit {
        let _ = writeln!(out, "EDGE_WEIGHT_TYPE : EXPLICIT");
        let _ = writeln!(out, "EDGE_WEIGHT_FORMAT : LOWER_ROW");
    } else {
        let _ = writeln!(out, "EDGE_WEIGHT_TYPE : EUC_2D");
    }
    let _ = writeln!(out, "CAPACITY : {}", inst.capacity);
    let _ = writeln!(out, "VEHICLES : {}", inst.n_vehicles);
    if inst.explicit {
        let _ = writeln!(out, "EDGE_WEIGHT_SECTION");
        for i in 1..inst.n_nodes() {
            let row: Vec<String> = (0..i).map(|j| inst.dist[i][j].to_string()).collect();
            let _ = writeln!(out, "{}", row.join(" "));
        }
    }
    if !inst.coords.is_empty() {
        let _ = writeln!(out, "{}", if inst.explicit { "DISPLAY_DATA_SECTION" } else { "NODE_COORD_SECTION" });
        for (i, (x, y)) in inst.coords.iter().enumerate() {
            let _ = writeln!(out, "{} {} {}", i + 1, x, y);
        }
    }
    let _ = writeln!(out, "DEMAND_SECTION");
    for (i, d) in inst.demands.iter().enumerate() {
        let _ = writeln!(out, "{} {}", i + 1, d);
    }
    let _ = writeln!(out, "DEPOT_SECTION");
    let _ = writeln!(out, " {}", inst.depot + 1);
    let _ = writeln!(out, " -1");
    let _ = writeln!(out, "EOF");
    out
}

pub fn load_vrplib(path: &Path) -> Result<CvrpInstance, ParseError> {
    let text = std::fs::read_to_string(path).map_err(|source| ParseError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_vrplib(&text)
}
