//! Builds one toy stage from the library API and prints its summary.
//!
//! `cargo run --release -p convint-core --example one_stage -- 256 65`

use std::sync::Arc;

use convint_core::evolution::TimeGrid;
use convint_core::fields::Grid;
use convint_core::pipeline::{run_stage, StageObserver, StageOptions};
use convint_core::scheme::{initial_tuple, EnergyProfile, Mode, ParamSchedule, ThetaDatum};
use convint_core::verification::ResidualMonitor;

fn main() -> convint_core::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let n = args.first().copied().unwrap_or(256);
    let n_t = args.get(1).copied().unwrap_or(65);
    let e = EnergyProfile::new(vec![10.0, 0.02])?;
    let s = ParamSchedule::new(4.0, 0.4, Mode::Toy)?;
    let time = TimeGrid::new(n_t)?;
    let start = initial_tuple(&e, ThetaDatum { sin: 1.0, cos: 0.0 }, 5, s.delta(1), Grid::new(n)?, time)?;
    let mut res = ResidualMonitor::new(time);
    let (_, rep) = {
        let mut obs: [&mut dyn StageObserver; 1] = [&mut res];
        run_stage(Arc::new(start), &s, &e, &StageOptions::default(), &mut obs, &mut |p| eprintln!("{p}"))?
    };
    for (k, v) in rep.summary_rows() {
        println!("{k} = {v}");
    }
    let r = res.report()?;
    println!("residual momentum = {:e}", r.momentum_sup);
    print!("{}", rep.stress.to_csv());
    Ok(())
}
