//! Initial order-parameter fields.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assembly::{BulkSurfacePair, CouplingParams, FemOperators, Space};
use crate::numeric::{c, Real};

#[derive(Debug, Clone, PartialEq)]
pub enum InitialData<T> {
    Constant { bulk: T, surf: T },
    /// Independent uniform nodal values in `[mean - amplitude, mean + amplitude]`.
    Random { seed: u64, mean: T, amplitude: T },
    /// `-tanh((|x - center| - radius) / sharpness)`, positive inside the disc; the surface takes the trace.
    Bubble { center: [T; 2], radius: T, sharpness: T },
    Field(BulkSurfacePair<T>),
}

impl<T: Real> InitialData<T> {
    /// Nodal values, with the bulk trace overwritten by `α ψ` when `K = 0`.
    pub fn build(&self, ops: &FemOperators<T>, cp: &CouplingParams<T>) -> BulkSurfacePair<T> {
        let raw = match self {
            InitialData::Constant { bulk, surf } => BulkSurfacePair::constant(ops.n_bulk, ops.n_surf, *bulk, *surf),
            InitialData::Random { seed, mean, amplitude } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let mut draw = || *mean + *amplitude * c::<T>(rng.gen_range(-1.0..=1.0));
                let bulk: Vec<T> = (0..ops.n_bulk).map(|_| draw()).collect();
                let surf: Vec<T> = (0..ops.n_surf).map(|_| draw()).collect();
                BulkSurfacePair::new(bulk, surf)
            }
            InitialData::Bubble { center, radius, sharpness } => {
                let f = |p: [T; 2]| {
                    let d = ((p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2)).sqrt();
                    -((d - *radius) / *sharpness).tanh()
                };
                let bulk: Vec<T> = ops.nodes.iter().map(|&p| f(p)).collect();
                let surf: Vec<T> = ops.trace.iter().map(|&b| bulk[b]).collect();
                BulkSurfacePair::new(bulk, surf)
            }
            InitialData::Field(pair) => pair.clone(),
        };
        if cp.k.is_zero() {
            ops.project_constraint(&raw, cp, Space::K)
        } else {
            raw
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::Coupling;
    use crate::mesh::generate_unit_square;

    #[test]
    fn random_data_is_reproducible_and_bounded() {
        let ops = FemOperators::assemble(&generate_unit_square::<f64>(4).unwrap()).unwrap();
        let cp = CouplingParams::new(Coupling::Zero, Coupling::Finite(1.0), 0.5, 1.0);
        let init = InitialData::Random { seed: 7, mean: 0.1, amplitude: 0.2 };
        let a = init.build(&ops, &cp);
        assert_eq!(a, init.build(&ops, &cp));
        assert!(a.max_abs().0 <= 0.3 + 1e-15 && a.max_abs().1 <= 0.3 + 1e-15);
        assert!(ops.constraint_violation(&a, &cp, Space::K) == 0.0);
    }
}
