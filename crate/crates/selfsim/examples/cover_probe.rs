use nalgebra::{DMatrix, DVector};
use selfsim::ek::real::*;

fn main() {
    let setup = EkSetupReal::new(
        DMatrix::identity(1, 1),
        DMatrix::from_row_slice(1, 1, &[1.0]),
    )
    .unwrap();
    let constants = setup.constants(1.9, 2.1).unwrap();
    println!("c1={} c2={} c2_tree={} n1={} rho={} m={}",
        constants.c1, constants.c2, constants.c2_tree, constants.n1, constants.rho, constants.m_bound);
    let t0 = std::time::Instant::now();
    let opts = CoverOptions::new(1.9, 2.1, 12, 0.25);
    let result = cover_enumerate(&setup, &opts).unwrap();
    println!("seeds={} nodes={} disks={} branch_events={} c0={} elapsed={:?}",
        result.stats.seeds, result.stats.nodes, result.stats.disks,
        result.stats.branch_events, result.stats.fitted_c0, t0.elapsed());
    // check theta = 2 covered
    let covered = result.disks.iter().any(|d| (d.center - 2.0).abs() <= d.radius);
    println!("theta=2 covered: {covered}  radius={}", constants.c1 * 1.9f64.powi(-12));

    // dense certification scan
    let grid = eta_grid(1, 2.1, 1.0/64.0, 0, 1);
    println!("grid size {}", grid.len());
    let t1 = std::time::Instant::now();
    let mut certified = Vec::new();
    let steps = ((2.1f64 - 1.9) / 1e-5).round() as usize;
    for i in 0..=steps {
        let theta: f64 = 1.9 + i as f64 * 1e-5;
        let rep = bad_set_witness(&setup, theta.min(2.1), 12, 0.25, constants.rho, &grid).unwrap();
        if rep.member { certified.push(theta); }
    }
    println!("certified count: {} elapsed={:?}", certified.len(), t1.elapsed());
    let mut uncovered = 0;
    for &t in &certified {
        if !result.disks.iter().any(|d| (d.center - t).abs() <= d.radius) { uncovered += 1; }
    }
    println!("uncovered certified: {uncovered}");
    if !certified.is_empty() {
        println!("certified range: {} .. {}", certified[0], certified[certified.len()-1]);
    }
}
