//! Built-in desk-scale test systems.

use num_complex::Complex64;

use crate::dynamics::{GfiParams, NodeUnit, SgParams, SystemModel, Unit};
use crate::grid::{Edge, NetworkGraph};

/// Nominal angular frequency of a 50 Hz system (rad/s).
pub const OMEGA_50HZ: f64 = 2.0 * std::f64::consts::PI * 50.0;

fn series(from: u32, to: u32, r: f64, x: f64) -> Edge {
    Edge::series(from, to, Complex64::new(1.0, 0.0) / Complex64::new(r, x))
}

/// Three-node meshed system: an inverter at node 1 (which also defines the
/// reference frame) and generators at nodes 2 and 3.
///
/// | node | unit | k_p  | k_q  | tau  | m    | p_d  | q_d  | load (shunt)   |
/// |------|------|------|------|------|------|------|------|----------------|
/// | 1    | GFI  | 1.2  | 0.10 | 0.25 | -    | 0.40 | 0.10 | -              |
/// | 2    | SG   | 1.5  | 0.08 | 0.30 | 0.12 | 0.45 | 0.10 | 0.60 - j0.20   |
/// | 3    | SG   | 1.0  | 0.12 | 0.40 | 0.20 | 0.30 | 0.05 | 0.50 - j0.15   |
///
/// Lines (r + jx, pu): 1-2 0.02 + j0.15, 2-3 0.03 + j0.20, 1-3 0.025 + j0.18.
/// All setpoints use `omega_d` = 100π rad/s and `v_d` = 1.0 pu.
pub fn three_node() -> SystemModel {
    let edges = [
        series(1, 2, 0.02, 0.15),
        series(2, 3, 0.03, 0.20),
        series(1, 3, 0.025, 0.18),
        Edge::shunt(2, Complex64::new(0.60, -0.20)),
        Edge::shunt(3, Complex64::new(0.50, -0.15)),
    ];
    let graph = NetworkGraph::new([1, 2, 3], &edges).expect("built-in graph is valid");
    let units = [
        NodeUnit {
            node: 1,
            unit: Unit::Gfi(GfiParams { k_p: 1.2, k_q: 0.10, tau: 0.25, omega_d: OMEGA_50HZ, v_d: 1.0, p_d_nom: 0.40, q_d_nom: 0.10 }),
        },
        NodeUnit {
            node: 2,
            unit: Unit::Sg(SgParams { m: 0.12, k_p: 1.5, k_q: 0.08, tau: 0.30, omega_d: OMEGA_50HZ, v_d: 1.0, p_d_nom: 0.45, q_d_nom: 0.10 }),
        },
        NodeUnit {
            node: 3,
            unit: Unit::Sg(SgParams { m: 0.20, k_p: 1.0, k_q: 0.12, tau: 0.40, omega_d: OMEGA_50HZ, v_d: 1.0, p_d_nom: 0.30, q_d_nom: 0.05 }),
        },
    ];
    SystemModel::new(graph, &units, 1).expect("built-in system is valid")
}

/// Two-node inverter/generator system, used for small-scale checks.
pub fn two_node() -> SystemModel {
    let edges = [series(1, 2, 0.02, 0.12), Edge::shunt(2, Complex64::new(0.4, -0.1))];
    let graph = NetworkGraph::new([1, 2], &edges).expect("built-in graph is valid");
    let units = [
        NodeUnit {
            node: 1,
            unit: Unit::Gfi(GfiParams { k_p: 1.0, k_q: 0.1, tau: 0.2, omega_d: OMEGA_50HZ, v_d: 1.0, p_d_nom: 0.2, q_d_nom: 0.05 }),
        },
        NodeUnit {
            node: 2,
            unit: Unit::Sg(SgParams { m: 0.15, k_p: 1.2, k_q: 0.1, tau: 0.3, omega_d: OMEGA_50HZ, v_d: 1.0, p_d_nom: 0.25, q_d_nom: 0.05 }),
        },
    ];
    SystemModel::new(graph, &units, 1).expect("built-in system is valid")
}

/// Looks up a built-in case by name.
pub fn by_name(name: &str) -> Option<SystemModel> {
    match name {
        "three-node" | "3-node" => Some(three_node()),
        "two-node" | "2-node" => Some(two_node()),
        _ => None,
    }
}
