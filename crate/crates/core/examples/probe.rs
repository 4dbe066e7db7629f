use fbns_core::basis::build_basis_orders;
use fbns_core::grid::{make_grid, Field};
use fbns_core::initial_data::{build_density, build_temperature, InitialData, PhysParams};
use fbns_core::picard::*;
use fbns_core::solver::{Scheme, TimeGrid};

fn main() {
    let g = make_grid(8, 8, 17).unwrap();
    let b = build_basis_orders(&g, 2, 2, 4).unwrap();
    let (rho0, _) = build_density(&g, 1.0, &|_, _, _| 1.0).unwrap();
    let (theta0, _) = build_temperature(&g, &|_, _, x3| 10.0 * x3 * (1.0 - x3)).unwrap();
    let data = InitialData::new(rho0, Field::zeros(&g, 3), theta0, 1.0).unwrap();
    let p = PhysParams::default();
    let tg = TimeGrid::new(10.0, 20, Scheme::CrankNicolson).unwrap();
    match iterate_to_fixed_point(&data, &p, &b, tg, &PicardOptions::default()) {
        Ok((_, rep)) => println!("converged in {} iters, dists {:?}", rep.iterations, rep.distances),
        Err(e) => println!("error: {e}"),
    }
}
