//! The two benchmark flows: an enclosed no-flow problem with a moving
//! pressure front, and channel flow past a cylinder.

use crate::error::Result;
use crate::fe_space::BoundarySpec;
use crate::mesh::{parse_mesh, Mesh, SnapCircle};
use crate::scalar::Real;

const NOFLOW_MESH: &str = include_str!("../data/noflow_l1.mesh");
const CYLINDER_MESH: &str = include_str!("../data/cylinder_l1.mesh");

/// Data of a flow problem as seen by the solvers.
pub trait FlowProblem: Send + Sync {
    fn forcing(&self, t: f64, x: [f64; 2]) -> [f64; 2];

    fn boundary_velocity(&self, t: f64, x: [f64; 2]) -> [f64; 2];

    fn initial_velocity(&self, _x: [f64; 2]) -> [f64; 2] {
        [0.0, 0.0]
    }

    fn boundary_spec(&self) -> BoundarySpec;

    /// Analytic pressure and its gradient, when known.
    fn exact_pressure(&self, _t: f64, _x: [f64; 2]) -> Option<(f64, [f64; 2])> {
        None
    }

    /// Whether the exact velocity is identically zero.
    fn zero_exact_velocity(&self) -> bool {
        false
    }
}

/// Zero velocity driven by a gradient force `f = grad p`.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoFlow;

impl NoFlow {
    pub const END_TIME: f64 = 1.0;

    /// Centers `(v(t), w(t))` of the two pressure fronts.
    pub fn displacement<T: Real>(t: T) -> (T, T) {
        let half = T::lit(0.5);
        let pi = T::PI();
        (
            half * (T::one() + (T::lit(4.0) * pi * t).sin()),
            half * (T::one() + (T::lit(6.0) * pi * t).sin()),
        )
    }

    pub fn pressure<T: Real>(t: T, x: [T; 2]) -> T {
        let (v, w) = Self::displacement(t);
        let (a, b) = (T::lit(25.0), T::lit(17.0));
        (a * (x[0] - v)).tanh() - (a * (T::one() - x[0] + v)).tanh() + (b * (x[1] - w)).tanh()
            - (b * (T::one() - x[1] + w)).tanh()
    }

    pub fn pressure_gradient<T: Real>(t: T, x: [T; 2]) -> [T; 2] {
        let (v, w) = Self::displacement(t);
        let (a, b) = (T::lit(25.0), T::lit(17.0));
        let sech2 = |z: T| {
            let th = z.tanh();
            T::one() - th * th
        };
        [
            a * (sech2(a * (x[0] - v)) + sech2(a * (T::one() - x[0] + v))),
            b * (sech2(b * (x[1] - w)) + sech2(b * (T::one() - x[1] + w))),
        ]
    }

    pub fn evaluate<T: Real>(t: T, x: [T; 2]) -> (T, [T; 2]) {
        (Self::pressure(t, x), Self::pressure_gradient(t, x))
    }

    /// Unit-square mesh at refinement level `level >= 1`.
    pub fn mesh(level: usize) -> Result<Mesh<f64>> {
        assert!(level >= 1, "levels start at 1");
        Ok(parse_mesh::<f64>(NOFLOW_MESH)?.refined(level - 1))
    }
}

impl FlowProblem for NoFlow {
    fn forcing(&self, t: f64, x: [f64; 2]) -> [f64; 2] {
        Self::pressure_gradient(t, x)
    }

    fn boundary_velocity(&self, _t: f64, _x: [f64; 2]) -> [f64; 2] {
        [0.0, 0.0]
    }

    fn boundary_spec(&self) -> BoundarySpec {
        BoundarySpec::all_dirichlet()
    }

    fn exact_pressure(&self, t: f64, x: [f64; 2]) -> Option<(f64, [f64; 2])> {
        Some(Self::evaluate(t, x))
    }

    fn zero_exact_velocity(&self) -> bool {
        true
    }
}

/// Channel `(0, 2.2) x (0, 0.41)` with a cylinder of radius 0.05 at (0.2, 0.2).
#[derive(Debug, Clone, Copy, Default)]
pub struct Cylinder;

impl Cylinder {
    pub const LENGTH: f64 = 2.2;
    pub const HEIGHT: f64 = 0.41;
    pub const CENTER: [f64; 2] = [0.2, 0.2];
    pub const RADIUS: f64 = 0.05;
    pub const VISCOSITY: f64 = 1e-3;
    pub const STARTUP_END: f64 = 8.0;
    pub const END_TIME: f64 = 10.0;
    /// Probe points in front of and behind the cylinder.
    pub const PRESSURE_PROBES: [[f64; 2]; 2] = [[0.15, 0.2], [0.25, 0.2]];

    /// Parabolic inflow with mean 1 and peak 1.5 at mid-height.
    pub fn inlet_profile<T: Real>(y: T) -> [T; 2] {
        let h = T::lit(Self::HEIGHT);
        [T::lit(6.0) / (h * h) * y * (h - y), T::zero()]
    }

    pub fn snap_circle() -> SnapCircle<f64> {
        SnapCircle { center: Self::CENTER, radius: Self::RADIUS }
    }

    pub fn domain_area() -> f64 {
        Self::LENGTH * Self::HEIGHT - std::f64::consts::PI * Self::RADIUS * Self::RADIUS
    }

    pub fn mesh(level: usize) -> Result<Mesh<f64>> {
        assert!(level >= 1, "levels start at 1");
        Ok(parse_mesh::<f64>(CYLINDER_MESH)?.with_snap_circle(Self::snap_circle())?.refined(level - 1))
    }
}

impl FlowProblem for Cylinder {
    fn forcing(&self, _t: f64, _x: [f64; 2]) -> [f64; 2] {
        [0.0, 0.0]
    }

    fn boundary_velocity(&self, _t: f64, x: [f64; 2]) -> [f64; 2] {
        if x[0] <= 1e-12 {
            Self::inlet_profile(x[1])
        } else {
            [0.0, 0.0]
        }
    }

    fn boundary_spec(&self) -> BoundarySpec {
        BoundarySpec::channel()
    }
}

/// Problem with all data zero.
#[derive(Debug, Clone, Copy, Default)]
pub struct Quiescent;

impl FlowProblem for Quiescent {
    fn forcing(&self, _t: f64, _x: [f64; 2]) -> [f64; 2] {
        [0.0, 0.0]
    }

    fn boundary_velocity(&self, _t: f64, _x: [f64; 2]) -> [f64; 2] {
        [0.0, 0.0]
    }

    fn boundary_spec(&self) -> BoundarySpec {
        BoundarySpec::all_dirichlet()
    }
}
