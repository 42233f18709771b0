use umdlab_core::bellman::*;

fn main() {
    let m = 201usize;
    let mut g = BellmanGrid::new(4.0, -1.0, 1.0, 3.5, 4.0, m).unwrap();
    g.iterate(400, 1e-8);
    let u = &g.surface;
    for margin_frac in [0.0, 0.02, 0.05, 0.10] {
        let margin = ((m as f64) * margin_frac) as usize;
        let mut worst = f64::NEG_INFINITY;
        let mut at = (0, 0);
        for ix in margin..m - margin {
            for iy in (1 + margin)..(m - 1 - margin) {
                let v = u.at(ix, iy) - 0.5 * (u.at(ix, iy - 1) + u.at(ix, iy + 1));
                if v > worst { worst = v; at = (ix, iy); }
            }
        }
        println!("margin {margin_frac}: worst={:.3e} at x={:.2} y={:.2}", worst, u.coord(at.0), u.coord(at.1));
    }
}
