//! Dev probe: profile a hard random instance.
use modplan::bnb::BnbConfig;
use modplan::scenario::{generate, Family, GenerateParams};
use modplan::slicing::solve_exact;
use std::time::Instant;

fn main() {
    env_logger::init();
    let params = GenerateParams { count: 4, seed: 42, horizon: Some(9), ..Default::default() };
    let scenario = generate(Family::Random, &params).unwrap();
    for o in &scenario.obstacles {
        println!("obstacle at ({:.2}, {:.2}) r {:.2}", o.initial.ox, o.initial.oy, o.radius);
    }
    println!("start {:?} goal {:?} T {} ws {:?}", scenario.start.position(), scenario.goal.position(), scenario.horizon, (&scenario.state_bounds.lower[..2], &scenario.state_bounds.upper[..2]));
    let mut config = BnbConfig { rel_gap_tol: 1e-9, ..Default::default() };
    config.node_limit = Some(30000);
    let t0 = Instant::now();
    match solve_exact(&scenario, &config) {
        Ok((sol, result)) => println!(
            "J {:.6} status {:?} nodes {} gap {:.2e} in {:?}",
            sol.cost.total, result.status, result.nodes, result.gap, t0.elapsed()
        ),
        Err(e) => println!("error: {e}"),
    }
}
