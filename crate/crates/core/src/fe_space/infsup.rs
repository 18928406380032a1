//! Discrete inf-sup constant of the velocity-pressure pair.

use nalgebra::{DMatrix, SymmetricEigen};

use super::{OperatorKind, PressureGauge, THSpace};
use crate::error::{Error, Result};
use crate::sparse::LuFactors;

/// Eigenvalues `beta^2` of `B A^-1 B^T q = beta^2 M_p q`, ascending, with
/// the constant-pressure mode removed when the pressure is gauge-fixed.
pub fn infsup_spectrum(space: &THSpace) -> Result<Vec<f64>> {
    let np = space.n_pressure();
    if np < 2 {
        return Err(Error::InvalidConfig("inf-sup constant needs at least two pressure unknowns".into()));
    }
    let dir = space.dirichlet_velocity_dofs();
    if dir.is_empty() {
        return Err(Error::SingularSystem("velocity stiffness without Dirichlet boundary".into()));
    }
    let a = space.assemble(OperatorKind::Stiffness).eliminate_dirichlet(dir);
    let b = space.assemble(OperatorKind::Divergence);
    let mut is_dir = vec![false; space.n_velocity()];
    dir.iter().for_each(|&d| is_dir[d] = true);

    let columns: Vec<Vec<f64>> = (0..np)
        .map(|k| {
            let mut col = vec![0.0; space.n_velocity()];
            for (j, v) in b.row(k) {
                if !is_dir[j] {
                    col[j] = v;
                }
            }
            col
        })
        .collect();
    let x = LuFactors::new(&a)?.solve_many(&columns)?;
    let mut s = DMatrix::<f64>::zeros(np, np);
    for k in 0..np {
        for (l, xl) in x.iter().enumerate() {
            s[(k, l)] = columns[k].iter().zip(xl).map(|(p, q)| p * q).sum();
        }
    }
    s = (&s + s.transpose()) * 0.5;

    let mp = space.assemble(OperatorKind::PressureMass).to_dense();
    let chol = mp
        .cholesky()
        .ok_or_else(|| Error::SingularSystem("pressure mass matrix is not positive definite".into()))?;
    let l = chol.l();
    let linv_s = l
        .solve_lower_triangular(&s)
        .ok_or_else(|| Error::SingularSystem("pressure mass factor".into()))?;
    let c = l
        .solve_lower_triangular(&linv_s.transpose())
        .ok_or_else(|| Error::SingularSystem("pressure mass factor".into()))?;
    let c = (&c + c.transpose()) * 0.5;
    let mut eig: Vec<f64> = SymmetricEigen::new(c).eigenvalues.iter().copied().collect();
    eig.sort_by(f64::total_cmp);
    if space.gauge() == PressureGauge::ZeroMean {
        eig.remove(0);
    }
    Ok(eig)
}

/// `beta_is`, the square root of the smallest admissible eigenvalue.
pub fn compute_infsup_constant(space: &THSpace) -> Result<f64> {
    Ok(infsup_spectrum(space)?[0].max(0.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fe_space::BoundarySpec;
    use crate::mesh::{BoundaryTag, Mesh};

    #[test]
    fn structured_square_is_stable() {
        let m = Mesh::unit_square_structured(4, BoundaryTag::DirichletAll);
        let s = THSpace::new(m, &BoundarySpec::all_dirichlet()).unwrap();
        let beta = compute_infsup_constant(&s).unwrap();
        assert!(beta > 0.05, "beta = {beta}");
        assert!(beta < 1.0);
    }

    #[test]
    fn two_cell_square_has_too_few_velocity_unknowns() {
        let m = Mesh::unit_square_two_cells(BoundaryTag::DirichletAll);
        let s = THSpace::new(m, &BoundarySpec::all_dirichlet()).unwrap();
        // two free velocity unknowns cannot control three non-constant pressures
        let spec = infsup_spectrum(&s).unwrap();
        assert_eq!(spec.len(), 3);
        assert!(spec[0].abs() < 1e-12);
        assert!(spec[2] > 1e-3);
    }

    #[test]
    fn missing_dirichlet_is_reported() {
        let m = Mesh::unit_square_two_cells(BoundaryTag::Outlet);
        let s = THSpace::new(m, &BoundarySpec::channel()).unwrap();
        assert!(matches!(compute_infsup_constant(&s), Err(Error::SingularSystem(_))));
    }
}
