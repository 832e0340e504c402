use std::f64::consts::PI;

use nalgebra::Complex;
use qgraph_core::chain::{build_candidate, transfer_matrix, ChainConfig, ParamRule};
use qgraph_core::graph::{CellWindow, ChainKind, EdgeCoefficients};
use qgraph_core::symmetry::{check_z_invariance, solve_theta};
use qgraph_core::Error;

fn drifting(drift: [f64; 3], cells: std::ops::RangeInclusive<i64>) -> ChainConfig<f64> {
    let w = CellWindow::new(*cells.start(), *cells.end()).unwrap();
    let rule = ParamRule::linear_drift(0.4, [0.3, 1.1, -0.2], drift, cells).unwrap();
    ChainConfig::new(w, 1.0, 1.0, rule).unwrap()
}

#[test]
fn common_drift_of_loop_phases_needs_constant_twist() {
    let cfg = drifting([0.2, 0.2, 0.0], 0..=9);
    let theta = solve_theta(&cfg.cell_params()).unwrap();
    let u: Vec<f64> = (0..=9).map(|i| theta.get(i, ChainKind::U)).collect();
    assert!(u.iter().all(|x| (x - u[0]).abs() < 1e-12), "{u:?}");
    assert!(check_z_invariance(&cfg.cell_params(), &theta, 1e-10).unwrap().invariant);
}

#[test]
fn link_phase_drift_needs_linear_twist() {
    let cfg = drifting([0.0, 0.0, 0.15], 0..=9);
    let theta = solve_theta(&cfg.cell_params()).unwrap();
    let u: Vec<f64> = (0..=9).map(|i| theta.get(i, ChainKind::U)).collect();
    let steps: Vec<f64> = u.windows(2).map(|w| w[1] - w[0]).collect();
    assert!(steps.iter().all(|s| (s - steps[0]).abs() < 1e-12), "{steps:?}");
    assert!(steps[0].abs() > 0.1);
    assert!(check_z_invariance(&cfg.cell_params(), &theta, 1e-10).unwrap().invariant);
}

#[test]
fn single_gap_defect_is_an_obstruction() {
    let w = CellWindow::new(0, 7).unwrap();
    let mut map = std::collections::BTreeMap::new();
    for i in 0..=7 {
        let a1 = if i == 4 { 0.1 } else { 0.0 };
        map.insert(i, qgraph_core::QuasiDeltaParams::new(0.0, vec![a1, 0.5, 0.0]).unwrap());
    }
    let cfg = ChainConfig::new(w, 1.0, 1.0, ParamRule::PerCell(map)).unwrap();
    match solve_theta(&cfg.cell_params()) {
        Err(Error::Obstruction { vertex, .. }) => assert_eq!(vertex, 4),
        other => panic!("expected obstruction, got {other:?}"),
    }
}

#[test]
fn single_precision_chain_runs() {
    let cfg = ChainConfig::<f32>::uniform(CellWindow::new(0, 5).unwrap(), 0.0, [0.0; 3]).unwrap();
    let k = 1.0 / std::f32::consts::PI;
    let seed = EdgeCoefficients::new(Complex::new(1.0f32, 0.0), Complex::new(0.0, 0.0));
    let c = build_candidate(&cfg, k, seed, None).unwrap();
    assert!(c.residual < 1e-5, "{}", c.residual);
    let t32 = transfer_matrix(&cfg, 0, k).unwrap().trace();
    let cfg64 = ChainConfig::<f64>::uniform(CellWindow::new(0, 5).unwrap(), 0.0, [0.0; 3]).unwrap();
    let t64 = transfer_matrix(&cfg64, 0, 1.0 / PI).unwrap().trace();
    assert!((t32.re as f64 - t64.re).abs() < 1e-5);
}
