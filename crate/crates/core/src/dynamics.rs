//! Grid-forming inverter and synchronous generator state models, the assembled
//! ground-truth right-hand side and the measured-output map.
//!
//! Per node the packed state holds `(delta, p_m, v)` for an inverter and
//! `(delta, omega, v)` for a generator. The angle slot is never measured; the
//! output `y` is the packed state with every angle slot removed.

use serde::{Deserialize, Serialize};

use crate::grid::{build_admittance, injections_into, AdmittanceMatrix, NetworkGraph};
use crate::{Error, Result};

/// Number of state slots per node.
pub const STATES_PER_NODE: usize = 3;
/// Number of measured slots per node.
pub const OUTPUTS_PER_NODE: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GfiParams {
    /// Frequency droop gain (rad/s per pu).
    pub k_p: f64,
    /// Voltage droop gain (pu per pu).
    pub k_q: f64,
    /// Power measurement filter time constant (s).
    pub tau: f64,
    pub omega_d: f64,
    pub v_d: f64,
    pub p_d_nom: f64,
    pub q_d_nom: f64,
}

/// Swing-equation generator with instantaneous governor droop. Damping is folded
/// into `k_p`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SgParams {
    /// Inertia constant.
    pub m: f64,
    pub k_p: f64,
    pub k_q: f64,
    /// Voltage time constant (s).
    pub tau: f64,
    pub omega_d: f64,
    pub v_d: f64,
    pub p_d_nom: f64,
    pub q_d_nom: f64,
}

fn check_positive(values: &[(&str, f64)]) -> Result<()> {
    for &(name, v) in values {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::InvalidInput(format!("{name} must be positive and finite, got {v}")));
        }
    }
    Ok(())
}

impl GfiParams {
    pub fn validate(&self) -> Result<()> {
        check_positive(&[("k_p", self.k_p), ("k_q", self.k_q), ("tau", self.tau), ("omega_d", self.omega_d), ("v_d", self.v_d)])
    }
}

impl SgParams {
    pub fn validate(&self) -> Result<()> {
        check_positive(&[
            ("m", self.m),
            ("k_p", self.k_p),
            ("k_q", self.k_q),
            ("tau", self.tau),
            ("omega_d", self.omega_d),
            ("v_d", self.v_d),
        ])
    }
}

fn all_finite(values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite("unit model input"))
    }
}

/// Droop frequency of an inverter given its filtered active power.
pub fn gfi_frequency(params: &GfiParams, p_m: f64, p_d: f64) -> f64 {
    params.omega_d - params.k_p * (p_m - p_d)
}

/// Inverter derivatives `(delta', p_m', v')`.
#[allow(clippy::too_many_arguments)]
pub fn gfi_rhs(params: &GfiParams, delta: f64, p_m: f64, v: f64, p: f64, q: f64, p_d: f64, omega_ref: f64) -> Result<[f64; 3]> {
    all_finite(&[delta, p_m, v, p, q, p_d, omega_ref])?;
    Ok(gfi_rhs_unchecked(params, p_m, v, p, q, p_d, omega_ref))
}

#[inline]
fn gfi_rhs_unchecked(params: &GfiParams, p_m: f64, v: f64, p: f64, q: f64, p_d: f64, omega_ref: f64) -> [f64; 3] {
    [
        gfi_frequency(params, p_m, p_d) - omega_ref,
        (-p_m + p) / params.tau,
        (-v + params.v_d - params.k_q * (q - params.q_d_nom)) / params.tau,
    ]
}

/// Generator derivatives `(delta', omega', v')`.
#[allow(clippy::too_many_arguments)]
pub fn sg_rhs(params: &SgParams, delta: f64, omega: f64, v: f64, p: f64, q: f64, p_d: f64, omega_ref: f64) -> Result<[f64; 3]> {
    all_finite(&[delta, omega, v, p, q, p_d, omega_ref])?;
    Ok(sg_rhs_unchecked(params, omega, v, p, q, p_d, omega_ref))
}

#[inline]
fn sg_rhs_unchecked(params: &SgParams, omega: f64, v: f64, p: f64, q: f64, p_d: f64, omega_ref: f64) -> [f64; 3] {
    [
        omega - omega_ref,
        (-(omega - params.omega_d) / params.k_p + p_d - p) / params.m,
        (-v + params.v_d - params.k_q * (q - params.q_d_nom)) / params.tau,
    ]
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Unit {
    Gfi(GfiParams),
    Sg(SgParams),
}

impl Unit {
    pub fn validate(&self) -> Result<()> {
        match self {
            Unit::Gfi(p) => p.validate(),
            Unit::Sg(p) => p.validate(),
        }
    }

    pub fn p_d_nom(&self) -> f64 {
        match self {
            Unit::Gfi(p) => p.p_d_nom,
            Unit::Sg(p) => p.p_d_nom,
        }
    }

    pub fn omega_d(&self) -> f64 {
        match self {
            Unit::Gfi(p) => p.omega_d,
            Unit::Sg(p) => p.omega_d,
        }
    }

    pub fn v_d(&self) -> f64 {
        match self {
            Unit::Gfi(p) => p.v_d,
            Unit::Sg(p) => p.v_d,
        }
    }

    pub fn is_gfi(&self) -> bool {
        matches!(self, Unit::Gfi(_))
    }
}

/// A unit attached to a node, as stored in the JSON model document.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeUnit {
    pub node: u32,
    #[serde(flatten)]
    pub unit: Unit,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SystemDocument {
    pub graph: NetworkGraph,
    pub units: Vec<NodeUnit>,
    pub reference_node: u32,
}

/// Network plus one droop-controlled unit per node.
#[derive(Clone, Debug)]
pub struct SystemModel {
    graph: NetworkGraph,
    admittance: AdmittanceMatrix,
    units: Vec<Unit>,
    reference: usize,
}

impl SystemModel {
    /// `units` must name every graph node exactly once.
    pub fn new(graph: NetworkGraph, units: &[NodeUnit], reference_node: u32) -> Result<Self> {
        let n = graph.len();
        let mut slots: Vec<Option<Unit>> = vec![None; n];
        for nu in units {
            let i = graph
                .index_of(nu.node)
                .ok_or_else(|| Error::InvalidInput(format!("unit on unknown node {}", nu.node)))?;
            if slots[i].is_some() {
                return Err(Error::InvalidInput(format!("node {} carries more than one unit", nu.node)));
            }
            nu.unit.validate()?;
            slots[i] = Some(nu.unit);
        }
        let units = slots
            .into_iter()
            .enumerate()
            .map(|(i, u)| u.ok_or_else(|| Error::InvalidInput(format!("node {} has no unit", graph.nodes()[i]))))
            .collect::<Result<Vec<_>>>()?;
        let reference = graph
            .index_of(reference_node)
            .ok_or_else(|| Error::InvalidInput(format!("reference node {reference_node} is not in the graph")))?;
        let admittance = build_admittance(&graph);
        Ok(Self { graph, admittance, units, reference })
    }

    pub fn from_document(doc: SystemDocument) -> Result<Self> {
        Self::new(doc.graph, &doc.units, doc.reference_node)
    }

    pub fn to_document(&self) -> SystemDocument {
        SystemDocument {
            graph: self.graph.clone(),
            units: self
                .units
                .iter()
                .zip(self.graph.nodes())
                .map(|(&unit, &node)| NodeUnit { node, unit })
                .collect(),
            reference_node: self.graph.nodes()[self.reference],
        }
    }

    pub fn graph(&self) -> &NetworkGraph {
        &self.graph
    }

    pub fn admittance(&self) -> &AdmittanceMatrix {
        &self.admittance
    }

    pub fn units(&self) -> &[Unit] {
        &self.units
    }

    pub fn reference_index(&self) -> usize {
        self.reference
    }

    pub fn n_nodes(&self) -> usize {
        self.graph.len()
    }

    pub fn n_x(&self) -> usize {
        STATES_PER_NODE * self.n_nodes()
    }

    pub fn n_u(&self) -> usize {
        self.n_nodes()
    }

    pub fn n_y(&self) -> usize {
        OUTPUTS_PER_NODE * self.n_nodes()
    }

    pub fn nominal_input(&self) -> Vec<f64> {
        self.units.iter().map(Unit::p_d_nom).collect()
    }

    /// Flat start: zero angles, voltages at setpoint, filtered power equal to the
    /// setpoint for inverters and nominal frequency for generators.
    pub fn flat_start(&self, u: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.n_x()];
        for (i, unit) in self.units.iter().enumerate() {
            x[3 * i + 1] = match unit {
                Unit::Gfi(_) => u[i],
                Unit::Sg(p) => p.omega_d,
            };
            x[3 * i + 2] = unit.v_d();
        }
        x
    }

    fn check_dims(&self, x: &[f64], u: &[f64]) -> Result<()> {
        if x.len() != self.n_x() {
            return Err(Error::DimensionMismatch { context: "state", expected: self.n_x(), actual: x.len() });
        }
        if u.len() != self.n_u() {
            return Err(Error::DimensionMismatch { context: "input", expected: self.n_u(), actual: u.len() });
        }
        Ok(())
    }

    /// Frequency of the reference node, which defines the rotating global frame.
    pub fn reference_frequency(&self, x: &[f64], u: &[f64]) -> f64 {
        let r = self.reference;
        match &self.units[r] {
            Unit::Sg(_) => x[3 * r + 1],
            Unit::Gfi(p) => gfi_frequency(p, x[3 * r + 1], u[r]),
        }
    }

    /// Ground-truth right-hand side `x' = f(x, u)`.
    pub fn system_rhs(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        self.check_dims(x, u)?;
        let mut dx = vec![0.0; x.len()];
        let mut scratch = RhsScratch::new(self.n_nodes());
        self.rhs_into(x, u, &mut dx, &mut scratch);
        if dx.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("system right-hand side"));
        }
        Ok(dx)
    }

    pub(crate) fn rhs_into(&self, x: &[f64], u: &[f64], dx: &mut [f64], s: &mut RhsScratch) {
        let n = self.n_nodes();
        for i in 0..n {
            s.delta[i] = x[3 * i];
            s.v[i] = x[3 * i + 2];
        }
        injections_into(&self.graph, &s.v, &s.delta, &mut s.p, &mut s.q);
        let omega_ref = self.reference_frequency(x, u);
        for (i, unit) in self.units.iter().enumerate() {
            let (second, v) = (x[3 * i + 1], x[3 * i + 2]);
            let d = match unit {
                Unit::Gfi(p) => gfi_rhs_unchecked(p, second, v, s.p[i], s.q[i], u[i], omega_ref),
                Unit::Sg(p) => sg_rhs_unchecked(p, second, v, s.p[i], s.q[i], u[i], omega_ref),
            };
            dx[3 * i..3 * i + 3].copy_from_slice(&d);
        }
    }

    /// Node frequencies: generator states passed through, inverter frequencies
    /// reconstructed from the droop law.
    pub fn frequencies(&self, y: &[f64], u: &[f64]) -> Vec<f64> {
        self.units
            .iter()
            .enumerate()
            .map(|(i, unit)| match unit {
                Unit::Sg(_) => y[2 * i],
                Unit::Gfi(p) => gfi_frequency(p, y[2 * i], u[i]),
            })
            .collect()
    }
}

pub(crate) struct RhsScratch {
    delta: Vec<f64>,
    v: Vec<f64>,
    p: Vec<f64>,
    q: Vec<f64>,
}

impl RhsScratch {
    pub(crate) fn new(n: usize) -> Self {
        Self { delta: vec![0.0; n], v: vec![0.0; n], p: vec![0.0; n], q: vec![0.0; n] }
    }
}

/// Per-node view of a packed state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NodeState {
    pub delta: f64,
    /// `p_m` for an inverter, `omega` for a generator.
    pub second: f64,
    pub v: f64,
}

pub fn unpack(x: &[f64]) -> Vec<NodeState> {
    x.chunks_exact(STATES_PER_NODE)
        .map(|c| NodeState { delta: c[0], second: c[1], v: c[2] })
        .collect()
}

pub fn pack(nodes: &[NodeState]) -> Vec<f64> {
    nodes.iter().flat_map(|s| [s.delta, s.second, s.v]).collect()
}

/// Measured outputs: every slot except the angles.
pub fn output_map(x: &[f64]) -> Vec<f64> {
    let mut y = Vec::with_capacity(x.len() / STATES_PER_NODE * OUTPUTS_PER_NODE);
    for c in x.chunks_exact(STATES_PER_NODE) {
        y.extend_from_slice(&c[1..]);
    }
    y
}

/// State slot indices of the measured outputs, in output order.
pub fn measured_slots(n_nodes: usize) -> Vec<usize> {
    (0..n_nodes).flat_map(|i| [3 * i + 1, 3 * i + 2]).collect()
}

/// State slot indices of the unmeasured angles.
pub fn angle_slots(n_nodes: usize) -> Vec<usize> {
    (0..n_nodes).map(|i| 3 * i).collect()
}
