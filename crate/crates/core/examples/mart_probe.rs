use std::time::Instant;
use umdlab_core::martingale::*;
use umdlab_core::sets::PointSet;
use umdlab_core::spaces::SpaceSpec;
use umdlab_core::symbols::{lattice_table, SymbolSpec};
use umdlab_core::torus::{norm_lower_bound, MultiplierOperator, PowerOptions};
use umdlab_core::spaces::c;

fn main() {
    let set = PointSet::from_reals(&[-1.0, 1.0]).unwrap();
    let sp = SpaceSpec::scalar_real();
    for p in [4.0, 4.0 / 3.0] {
        let mut warm: Option<(MartingaleTree, CoefficientPlan)> = None;
        for depth in [6u32, 8, 10] {
            let t = Instant::now();
            let opts = OptimizeOptions { restarts: 16, seed: 7, warm_start: warm.clone(), ..Default::default() };
            let est = optimize_tree(&set, p, depth, sp, &opts).unwrap();
            println!("mart p={p:.4} depth={depth}: value={:.6} ({:.2?})", est.value, t.elapsed());
            warm = Some((est.witness_tree, est.witness_plan));
        }
    }
    let spec = SymbolSpec::PowerQuotient { d: 2, alpha: 2.0, a: vec![c(1.0, 0.0), c(-1.0, 0.0)] };
    for p in [4.0, 4.0 / 3.0] {
        let mut warm: Vec<umdlab_core::torus::GridField> = vec![];
        for n in [16usize, 32, 64] {
            let t = Instant::now();
            let table = lattice_table(&spec, n).unwrap();
            let op = MultiplierOperator::new(table, sp);
            let opts = PowerOptions { restarts: 8, seed: 3, warm_starts: warm.clone(), ..Default::default() };
            let est = norm_lower_bound(&op, p, &opts).unwrap();
            println!("fft p={p:.4} N={n}: value={:.6} ({:.2?})", est.value, t.elapsed());
            warm = vec![est.witness.upsample(2 * n)];
        }
    }
    // counterexample sweep p=4 and p=2
    let ce = SymbolSpec::Counterexample { d: 2 };
    for p in [4.0, 2.0] {
        let mut warm: Vec<umdlab_core::torus::GridField> = vec![];
        for n in [16usize, 32, 64, 128] {
            let t = Instant::now();
            let op = MultiplierOperator::new(lattice_table(&ce, n).unwrap(), sp);
            let opts = PowerOptions { restarts: 8, seed: 5, warm_starts: warm.clone(), ..Default::default() };
            let est = norm_lower_bound(&op, p, &opts).unwrap();
            println!("counterexample p={p} N={n}: value={:.8} ({:.2?})", est.value, t.elapsed());
            if n < 128 { warm = vec![est.witness.upsample(2 * n)]; }
        }
    }
}
