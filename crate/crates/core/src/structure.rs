//! Tensegrity topology, member properties and basic kinematics.
//!
//! A model is an `m x n` connectivity matrix `C` (one row per member, `+1` at
//! the lower node index and `-1` at the higher one) together with per-member
//! stiffness, damping and rest length, and a point mass per node.

use std::fmt;
use std::path::Path;

use nalgebra::{DMatrix, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Lengths below this are treated as coincident endpoints.
pub const GEOMETRY_EPSILON: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model: {}", format_violations(.0))]
    Invalid(Vec<Violation>),
    #[error("invalid parameter `{name}` = {value}: must be positive")]
    NonPositiveParameter { name: &'static str, value: f64 },
    #[error("model file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("model file {path}: {message}")]
    Parse { path: String, message: String },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("member {member} has coincident endpoints (length {length:e})")]
    DegenerateMember { member: usize, length: f64 },
    #[error("node {node} is not the end of a bar")]
    NotABarEnd { node: usize },
    #[error("expected {expected} nodes, got {actual}")]
    NodeCount { expected: usize, actual: usize },
}

fn format_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MemberKind {
    Bar,
    Cable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Member {
    pub kind: MemberKind,
    /// N/m
    pub stiffness: f64,
    /// N s/m
    pub damping: f64,
    /// m
    pub rest_length: f64,
    #[serde(default)]
    pub actuated: bool,
}

/// One broken model invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    DimensionMismatch { what: &'static str, expected: usize, actual: usize },
    ConnectivityRow { member: usize, plus: usize, minus: usize, other: usize },
    ConnectivitySign { member: usize },
    NonPositiveStiffness { member: usize },
    NegativeDamping { member: usize },
    NonPositiveRestLength { member: usize },
    NonPositiveMass { node: usize },
    ActuatedBar { member: usize },
    TooManyActuated { actuated: usize, cables: usize },
    NonFinite { what: &'static str },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DimensionMismatch { what, expected, actual } => {
                write!(f, "{what}: expected {expected}, got {actual}")
            }
            Violation::ConnectivityRow { member, plus, minus, other } => write!(
                f,
                "row {member} of C has {plus} (+1), {minus} (-1) and {other} other non-zero entries"
            ),
            Violation::ConnectivitySign { member } => {
                write!(f, "row {member} of C has +1 at the higher node index")
            }
            Violation::NonPositiveStiffness { member } => write!(f, "member {member}: stiffness <= 0"),
            Violation::NegativeDamping { member } => write!(f, "member {member}: damping < 0"),
            Violation::NonPositiveRestLength { member } => {
                write!(f, "member {member}: rest length <= 0")
            }
            Violation::NonPositiveMass { node } => write!(f, "node {node}: mass <= 0"),
            Violation::ActuatedBar { member } => write!(f, "member {member}: bars cannot be actuated"),
            Violation::TooManyActuated { actuated, cables } => {
                write!(f, "{actuated} actuated members but only {cables} cables")
            }
            Violation::NonFinite { what } => write!(f, "{what} contains non-finite values"),
        }
    }
}

/// Immutable tensegrity description.
#[derive(Debug, Clone)]
pub struct TensegrityModel {
    connectivity: DMatrix<f64>,
    members: Vec<Member>,
    node_masses: Vec<f64>,
    reference: Vec<Vector3<f64>>,
    // (node with +1, node with -1) per member
    endpoints: Vec<(usize, usize)>,
    actuated: Vec<usize>,
}

impl TensegrityModel {
    /// Builds a model from an explicit connectivity matrix, rejecting any
    /// invariant violation.
    pub fn new(
        connectivity: DMatrix<f64>,
        members: Vec<Member>,
        node_masses: Vec<f64>,
        reference: Vec<Vector3<f64>>,
    ) -> Result<Self, ModelError> {
        let model = Self::from_raw_parts(connectivity, members, node_masses, reference);
        let violations = validate_model(&model);
        if violations.is_empty() {
            Ok(model)
        } else {
            Err(ModelError::Invalid(violations))
        }
    }

    /// Builds a model from `(i, j)` node pairs, deriving `C` with the lower
    /// node index carrying `+1`.
    pub fn from_pairs(
        pairs: &[(usize, usize)],
        members: Vec<Member>,
        node_masses: Vec<f64>,
        reference: Vec<Vector3<f64>>,
    ) -> Result<Self, ModelError> {
        let n = node_masses.len();
        let mut c = DMatrix::zeros(pairs.len(), n);
        for (k, &(a, b)) in pairs.iter().enumerate() {
            let (lo, hi) = (a.min(b), a.max(b));
            if hi >= n || lo == hi {
                return Err(ModelError::Invalid(vec![Violation::ConnectivityRow {
                    member: k,
                    plus: 0,
                    minus: 0,
                    other: 0,
                }]));
            }
            c[(k, lo)] = 1.0;
            c[(k, hi)] = -1.0;
        }
        Self::new(c, members, node_masses, reference)
    }

    /// No validation; use [`validate_model`] to inspect the result.
    pub fn from_raw_parts(
        connectivity: DMatrix<f64>,
        members: Vec<Member>,
        node_masses: Vec<f64>,
        reference: Vec<Vector3<f64>>,
    ) -> Self {
        let endpoints = (0..connectivity.nrows())
            .map(|k| {
                let row = connectivity.row(k);
                let plus = row.iter().position(|&x| x == 1.0).unwrap_or(0);
                let minus = row.iter().position(|&x| x == -1.0).unwrap_or(0);
                (plus, minus)
            })
            .collect();
        let actuated = members
            .iter()
            .enumerate()
            .filter(|(_, m)| m.actuated)
            .map(|(k, _)| k)
            .collect();
        Self { connectivity, members, node_masses, reference, endpoints, actuated }
    }

    pub fn node_count(&self) -> usize {
        self.node_masses.len()
    }

    pub fn member_count(&self) -> usize {
        self.members.len()
    }

    pub fn connectivity(&self) -> &DMatrix<f64> {
        &self.connectivity
    }

    pub fn members(&self) -> &[Member] {
        &self.members
    }

    pub fn node_masses(&self) -> &[f64] {
        &self.node_masses
    }

    /// Nominal node positions shipped with the model.
    pub fn reference_nodes(&self) -> NodeSet {
        NodeSet::new(self.reference.clone())
    }

    /// `(i, j)` per member such that `U_k = N_i - N_j`.
    pub fn endpoints(&self) -> &[(usize, usize)] {
        &self.endpoints
    }

    /// Member indices of the actuated cables, in member order.
    pub fn actuated_indices(&self) -> &[usize] {
        &self.actuated
    }

    pub fn rest_lengths(&self) -> Vec<f64> {
        self.members.iter().map(|m| m.rest_length).collect()
    }

    /// `(member, i, j)` for every bar.
    pub fn bars(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        self.members
            .iter()
            .enumerate()
            .filter(|(_, m)| m.kind == MemberKind::Bar)
            .map(|(k, _)| (k, self.endpoints[k].0, self.endpoints[k].1))
    }

    /// The bar ending at `node` and the node at its other end.
    pub fn bar_of(&self, node: usize) -> Option<(usize, usize)> {
        self.bars().find_map(|(k, i, j)| {
            if i == node {
                Some((k, j))
            } else if j == node {
                Some((k, i))
            } else {
                None
            }
        })
    }

    pub fn total_mass(&self) -> f64 {
        self.node_masses.iter().sum()
    }

    /// Loads a model from the TOML schema described in [`ModelFile`].
    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let file: ModelFile = toml::from_str(&text).map_err(|e| ModelError::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        file.into_model()
    }

    pub fn to_file(&self) -> ModelFile {
        ModelFile {
            nodes: self
                .node_masses
                .iter()
                .zip(&self.reference)
                .map(|(&mass, p)| NodeEntry { mass, position: [p.x, p.y, p.z] })
                .collect(),
            members: self
                .members
                .iter()
                .zip(&self.endpoints)
                .map(|(m, &(i, j))| MemberEntry { nodes: [i, j], member: m.clone() })
                .collect(),
        }
    }
}

/// On-disk model description.
///
/// ```toml
/// [[nodes]]
/// mass = 1.75
/// position = [0.0, 0.0, 0.0]
///
/// [[members]]
/// nodes = [0, 1]
/// kind = "cable"
/// stiffness = 800.0
/// damping = 10.0
/// rest_length = 0.8
/// actuated = true
/// ```
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub nodes: Vec<NodeEntry>,
    pub members: Vec<MemberEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeEntry {
    pub mass: f64,
    pub position: [f64; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MemberEntry {
    pub nodes: [usize; 2],
    #[serde(flatten)]
    pub member: Member,
}

impl ModelFile {
    pub fn into_model(self) -> Result<TensegrityModel, ModelError> {
        let pairs: Vec<_> = self.members.iter().map(|m| (m.nodes[0], m.nodes[1])).collect();
        let members = self.members.into_iter().map(|m| m.member).collect();
        let masses = self.nodes.iter().map(|n| n.mass).collect();
        let reference = self.nodes.iter().map(|n| Vector3::from(n.position)).collect();
        TensegrityModel::from_pairs(&pairs, members, masses, reference)
    }
}

/// Nodal positions and, optionally, velocities.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSet {
    pub positions: Vec<Vector3<f64>>,
    pub velocities: Option<Vec<Vector3<f64>>>,
}

impl NodeSet {
    pub fn new(positions: Vec<Vector3<f64>>) -> Self {
        Self { positions, velocities: None }
    }

    pub fn with_velocities(positions: Vec<Vector3<f64>>, velocities: Vec<Vector3<f64>>) -> Self {
        Self { positions, velocities: Some(velocities) }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        let finite = |v: &Vector3<f64>| v.iter().all(|x| x.is_finite());
        self.positions.iter().all(finite)
            && self.velocities.as_ref().is_none_or(|vs| vs.iter().all(finite))
    }

    /// `n x 3` matrix with one node per row.
    pub fn position_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.len(), 3, |i, c| self.positions[i][c])
    }

    pub fn centroid(&self) -> Vector3<f64> {
        self.positions.iter().sum::<Vector3<f64>>() / self.len() as f64
    }
}

/// Member vectors, relative velocities, lengths and length rates.
#[derive(Debug, Clone, PartialEq)]
pub struct MemberGeometry {
    pub u: Vec<Vector3<f64>>,
    pub v: Vec<Vector3<f64>>,
    pub length: Vec<f64>,
    pub length_rate: Vec<f64>,
}

impl MemberGeometry {
    pub fn u_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.u.len(), 3, |k, c| self.u[k][c])
    }
}

/// `U = C N`, `V = C dN/dt`, `L_k = |U_k|` and `dL_k/dt = U_k . V_k / L_k`,
/// with the matrix products replaced by endpoint indexing.
pub fn member_geometry(
    model: &TensegrityModel,
    nodes: &NodeSet,
) -> Result<MemberGeometry, GeometryError> {
    if nodes.len() != model.node_count() {
        return Err(GeometryError::NodeCount { expected: model.node_count(), actual: nodes.len() });
    }
    let m = model.member_count();
    let mut geom = MemberGeometry {
        u: Vec::with_capacity(m),
        v: Vec::with_capacity(m),
        length: Vec::with_capacity(m),
        length_rate: Vec::with_capacity(m),
    };
    for (k, &(i, j)) in model.endpoints().iter().enumerate() {
        let u = nodes.positions[i] - nodes.positions[j];
        let v = match &nodes.velocities {
            Some(vel) => vel[i] - vel[j],
            None => Vector3::zeros(),
        };
        let length = u.norm();
        if length < GEOMETRY_EPSILON {
            return Err(GeometryError::DegenerateMember { member: k, length });
        }
        geom.length_rate.push(u.dot(&v) / length);
        geom.u.push(u);
        geom.v.push(v);
        geom.length.push(length);
    }
    Ok(geom)
}

/// Every broken invariant of `model`; empty when the model is valid.
pub fn validate_model(model: &TensegrityModel) -> Vec<Violation> {
    let mut out = Vec::new();
    let c = &model.connectivity;
    let n = model.node_masses.len();
    let m = model.members.len();
    if c.nrows() != m {
        out.push(Violation::DimensionMismatch { what: "rows of C", expected: m, actual: c.nrows() });
    }
    if c.ncols() != n {
        out.push(Violation::DimensionMismatch { what: "columns of C", expected: n, actual: c.ncols() });
    }
    if model.reference.len() != n {
        out.push(Violation::DimensionMismatch {
            what: "reference positions",
            expected: n,
            actual: model.reference.len(),
        });
    }
    for k in 0..c.nrows() {
        let row = c.row(k);
        let plus = row.iter().filter(|&&x| x == 1.0).count();
        let minus = row.iter().filter(|&&x| x == -1.0).count();
        let other = row.iter().filter(|&&x| x != 0.0 && x != 1.0 && x != -1.0).count();
        if plus != 1 || minus != 1 || other != 0 {
            out.push(Violation::ConnectivityRow { member: k, plus, minus, other });
        } else {
            let p = row.iter().position(|&x| x == 1.0).unwrap();
            let q = row.iter().position(|&x| x == -1.0).unwrap();
            if p > q {
                out.push(Violation::ConnectivitySign { member: k });
            }
        }
    }
    let mut cables = 0;
    let mut actuated = 0;
    for (k, mem) in model.members.iter().enumerate() {
        if !(mem.stiffness > 0.0) {
            out.push(Violation::NonPositiveStiffness { member: k });
        }
        if !(mem.damping >= 0.0) {
            out.push(Violation::NegativeDamping { member: k });
        }
        if !(mem.rest_length > 0.0) {
            out.push(Violation::NonPositiveRestLength { member: k });
        }
        if mem.kind == MemberKind::Cable {
            cables += 1;
        }
        if mem.actuated {
            actuated += 1;
            if mem.kind == MemberKind::Bar {
                out.push(Violation::ActuatedBar { member: k });
            }
        }
    }
    if actuated > cables {
        out.push(Violation::TooManyActuated { actuated, cables });
    }
    for (i, &mass) in model.node_masses.iter().enumerate() {
        if !(mass > 0.0) {
            out.push(Violation::NonPositiveMass { node: i });
        }
    }
    if model.reference.iter().any(|p| p.iter().any(|x| !x.is_finite())) {
        out.push(Violation::NonFinite { what: "reference positions" });
    }
    out
}

/// Physical parameters of the six-strut robot. None of these are measured
/// values; they are configuration defaults of a plausible desk-scale robot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuperballParams {
    pub rod_length: f64,
    pub bar_stiffness: f64,
    pub bar_damping: f64,
    pub cable_stiffness: f64,
    pub cable_damping: f64,
    /// Cable rest length as a fraction of its length in the reference shape.
    pub cable_rest_ratio: f64,
    pub node_mass: f64,
}

impl Default for SuperballParams {
    fn default() -> Self {
        Self {
            rod_length: 1.5,
            bar_stiffness: 1.0e5,
            bar_damping: 150.0,
            cable_stiffness: 800.0,
            cable_damping: 15.0,
            cable_rest_ratio: 0.85,
            node_mass: 1.75,
        }
    }
}

const GOLDEN: f64 = 1.618_033_988_749_895;

/// Canonical six-strut icosahedron node positions (three orthogonal pairs of
/// parallel struts), scaled so each strut is `rod_length` long and centred on
/// the origin. Nodes `2k` and `2k + 1` are the ends of strut `k`.
pub fn superball_nodes(rod_length: f64) -> NodeSet {
    let p = GOLDEN;
    let raw = [
        [0.0, 1.0, p],
        [0.0, 1.0, -p],
        [0.0, -1.0, p],
        [0.0, -1.0, -p],
        [p, 0.0, 1.0],
        [-p, 0.0, 1.0],
        [p, 0.0, -1.0],
        [-p, 0.0, -1.0],
        [1.0, p, 0.0],
        [1.0, -p, 0.0],
        [-1.0, p, 0.0],
        [-1.0, -p, 0.0],
    ];
    let scale = rod_length / (2.0 * p);
    NodeSet::new(raw.iter().map(|r| Vector3::from(*r) * scale).collect())
}

/// Six bars and 24 cables. The 24 cables form the eight all-cable triangles
/// of the icosahedron, one per octant; the four triangles in octants with an
/// even number of negative signs are disjoint and cover every node, and their
/// 12 cables are the actuated ones (two per end cap).
pub fn build_superball(params: &SuperballParams) -> Result<TensegrityModel, ModelError> {
    for (name, value) in [
        ("rod_length", params.rod_length),
        ("bar_stiffness", params.bar_stiffness),
        ("cable_stiffness", params.cable_stiffness),
        ("cable_rest_ratio", params.cable_rest_ratio),
        ("node_mass", params.node_mass),
    ] {
        if !(value > 0.0) {
            return Err(ModelError::NonPositiveParameter { name, value });
        }
    }
    for (name, value) in [("bar_damping", params.bar_damping), ("cable_damping", params.cable_damping)]
    {
        if !(value >= 0.0) {
            return Err(ModelError::NonPositiveParameter { name, value });
        }
    }
    let nodes = superball_nodes(params.rod_length);
    let unit = superball_nodes(2.0 * GOLDEN);
    let n = nodes.len();

    let mut pairs = Vec::new();
    let mut members = Vec::new();
    for k in 0..6 {
        pairs.push((2 * k, 2 * k + 1));
        members.push(Member {
            kind: MemberKind::Bar,
            stiffness: params.bar_stiffness,
            damping: params.bar_damping,
            rest_length: params.rod_length,
            actuated: false,
        });
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let (bi, bj) = (i / 2, j / 2);
            // same strut, or the two struts of a parallel pair
            if bi / 2 == bj / 2 {
                continue;
            }
            let d = (unit.positions[i] - unit.positions[j]).norm();
            if (d - 2.0).abs() > 1e-9 {
                continue;
            }
            let mid = (unit.positions[i] + unit.positions[j]) * 0.5;
            let negatives = mid.iter().filter(|&&x| x < 0.0).count();
            let length = (nodes.positions[i] - nodes.positions[j]).norm();
            pairs.push((i, j));
            members.push(Member {
                kind: MemberKind::Cable,
                stiffness: params.cable_stiffness,
                damping: params.cable_damping,
                rest_length: params.cable_rest_ratio * length,
                actuated: negatives % 2 == 0,
            });
        }
    }
    TensegrityModel::from_pairs(&pairs, members, vec![params.node_mass; n], nodes.positions)
}

/// The eight all-cable triangles of the six-strut model, as sorted node
/// triples. These are the faces the robot can rest on.
pub fn cable_triangles(model: &TensegrityModel) -> Vec<[usize; 3]> {
    let n = model.node_count();
    let mut adjacent = vec![vec![false; n]; n];
    for (k, &(i, j)) in model.endpoints().iter().enumerate() {
        if model.members()[k].kind == MemberKind::Cable {
            adjacent[i][j] = true;
            adjacent[j][i] = true;
        }
    }
    let mut out = Vec::new();
    for a in 0..n {
        for b in (a + 1)..n {
            for c in (b + 1)..n {
                if adjacent[a][b] && adjacent[b][c] && adjacent[a][c] {
                    out.push([a, b, c]);
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_product(model: &TensegrityModel, nodes: &NodeSet) -> DMatrix<f64> {
        model.connectivity() * nodes.position_matrix()
    }

    #[test]
    fn superball_counts() {
        let model = build_superball(&SuperballParams::default()).unwrap();
        assert_eq!(model.node_count(), 12);
        assert_eq!(model.member_count(), 30);
        assert_eq!(model.bars().count(), 6);
        assert_eq!(model.actuated_indices().len(), 12);
        assert!(validate_model(&model).is_empty());
    }

    #[test]
    fn every_node_has_one_bar_and_cables() {
        let model = build_superball(&SuperballParams::default()).unwrap();
        for node in 0..12 {
            let mut bars = 0;
            let mut cables = 0;
            let mut actuated = 0;
            for (k, &(i, j)) in model.endpoints().iter().enumerate() {
                if i == node || j == node {
                    match model.members()[k].kind {
                        MemberKind::Bar => bars += 1,
                        MemberKind::Cable => cables += 1,
                    }
                    if model.members()[k].actuated {
                        actuated += 1;
                    }
                }
            }
            assert_eq!(bars, 1, "node {node}");
            assert!(cables >= 3, "node {node}");
            assert_eq!(actuated, 2, "node {node}");
        }
        assert_eq!(cable_triangles(&model).len(), 8);
    }

    #[test]
    fn bar_lengths_match_rod_length() {
        for rod in [0.5, 1.5, 3.0] {
            let params = SuperballParams { rod_length: rod, ..Default::default() };
            let model = build_superball(&params).unwrap();
            let geom = member_geometry(&model, &model.reference_nodes()).unwrap();
            for (k, _, _) in model.bars() {
                assert!((geom.length[k] - rod).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn scaling_doubles_distances() {
        let a = superball_nodes(1.5);
        let b = superball_nodes(3.0);
        for i in 0..12 {
            for j in 0..12 {
                let da = (a.positions[i] - a.positions[j]).norm();
                let db = (b.positions[i] - b.positions[j]).norm();
                assert!((db - 2.0 * da).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_non_positive_parameters() {
        let params = SuperballParams { rod_length: 0.0, ..Default::default() };
        assert!(matches!(
            build_superball(&params),
            Err(ModelError::NonPositiveParameter { name: "rod_length", .. })
        ));
        let params = SuperballParams { node_mass: -1.0, ..Default::default() };
        assert!(build_superball(&params).is_err());
    }

    fn two_node_model() -> TensegrityModel {
        TensegrityModel::from_pairs(
            &[(0, 1)],
            vec![Member {
                kind: MemberKind::Cable,
                stiffness: 1.0,
                damping: 0.0,
                rest_length: 1.0,
                actuated: false,
            }],
            vec![1.0, 1.0],
            vec![Vector3::zeros(), Vector3::x()],
        )
        .unwrap()
    }

    #[test]
    fn single_member_geometry() {
        let model = two_node_model();
        let geom = member_geometry(&model, &model.reference_nodes()).unwrap();
        // +1 at node 0: U = N_0 - N_1
        assert_eq!(geom.u[0], Vector3::new(-1.0, 0.0, 0.0));
        assert_eq!(geom.length[0], 1.0);
        assert_eq!(geom.length_rate[0], 0.0);
    }

    #[test]
    fn length_rate_of_separating_nodes() {
        let model = two_node_model();
        let nodes = NodeSet::with_velocities(
            vec![Vector3::zeros(), Vector3::x()],
            vec![Vector3::zeros(), Vector3::new(2.0, 5.0, 0.0)],
        );
        let geom = member_geometry(&model, &nodes).unwrap();
        assert!((geom.length_rate[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn coincident_endpoints_are_rejected() {
        let model = two_node_model();
        let nodes = NodeSet::new(vec![Vector3::zeros(), Vector3::zeros()]);
        assert!(matches!(
            member_geometry(&model, &nodes),
            Err(GeometryError::DegenerateMember { member: 0, .. })
        ));
    }

    #[test]
    fn validation_reports_bad_rows_and_masses() {
        let good = two_node_model();
        let mut c = good.connectivity().clone();
        c[(0, 1)] = 1.0;
        let bad = TensegrityModel::from_raw_parts(
            c,
            good.members().to_vec(),
            vec![1.0, 1.0],
            vec![Vector3::zeros(), Vector3::x()],
        );
        assert!(validate_model(&bad)
            .iter()
            .any(|v| matches!(v, Violation::ConnectivityRow { plus: 2, .. })));

        let bad = TensegrityModel::from_raw_parts(
            good.connectivity().clone(),
            good.members().to_vec(),
            vec![1.0, 0.0],
            vec![Vector3::zeros(), Vector3::x()],
        );
        assert_eq!(validate_model(&bad), vec![Violation::NonPositiveMass { node: 1 }]);
    }

    #[test]
    fn actuated_bar_is_a_violation() {
        let good = two_node_model();
        let mut members = good.members().to_vec();
        members[0].kind = MemberKind::Bar;
        members[0].actuated = true;
        let bad = TensegrityModel::from_raw_parts(
            good.connectivity().clone(),
            members,
            vec![1.0, 1.0],
            vec![Vector3::zeros(), Vector3::x()],
        );
        let v = validate_model(&bad);
        assert!(v.contains(&Violation::ActuatedBar { member: 0 }));
        assert!(v.contains(&Violation::TooManyActuated { actuated: 1, cables: 0 }));
    }

    #[test]
    fn model_file_round_trip() {
        let model = build_superball(&SuperballParams::default()).unwrap();
        let text = toml::to_string(&model.to_file()).unwrap();
        let back: ModelFile = toml::from_str(&text).unwrap();
        let back = back.into_model().unwrap();
        assert_eq!(back.connectivity(), model.connectivity());
        assert_eq!(back.members(), model.members());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn nodes_strategy() -> impl Strategy<Value = Vec<[f64; 3]>> {
            proptest::collection::vec(proptest::array::uniform3(-5.0..5.0f64), 12)
        }

        proptest! {
            #[test]
            fn u_equals_dense_product(raw in nodes_strategy()) {
                let model = build_superball(&SuperballParams::default()).unwrap();
                let nodes = NodeSet::new(raw.iter().map(|p| Vector3::from(*p)).collect());
                let geom = match member_geometry(&model, &nodes) {
                    Ok(g) => g,
                    Err(_) => return Ok(()),
                };
                let dense = dense_product(&model, &nodes);
                let u = geom.u_matrix();
                let scale = dense.amax().max(1.0);
                prop_assert!((u - dense).amax() <= 1e-12 * scale);
            }

            #[test]
            fn translation_leaves_members_unchanged(
                raw in nodes_strategy(),
                shift in proptest::array::uniform3(-10.0..10.0f64),
            ) {
                let model = build_superball(&SuperballParams::default()).unwrap();
                let nodes = NodeSet::new(raw.iter().map(|p| Vector3::from(*p)).collect());
                let shifted = NodeSet::new(
                    nodes.positions.iter().map(|p| p + Vector3::from(shift)).collect(),
                );
                let a = dense_product(&model, &nodes);
                let b = dense_product(&model, &shifted);
                prop_assert!((a - b).amax() < 1e-9);
            }
        }
    }
}
