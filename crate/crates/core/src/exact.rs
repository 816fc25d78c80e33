//! Closed-form reference solutions for the steady interface problem.
//!
//! The fields are smooth on each side, divergence free, and carry nonzero
//! velocity and stress jumps across any interface placed between them, which
//! exercises every data term of the weak formulation.

/// A two-sided exact solution with enough derivatives for source terms and
/// interface data. Side 1 is the exterior, side 2 the enclosed region; both
/// formulas extend smoothly over the whole plane.
pub trait ExactSolution: Sync {
    fn velocity(&self, side: usize, p: [f64; 2]) -> [f64; 2];
    /// `grad[i][j] = d u_i / d x_j`.
    fn velocity_gradient(&self, side: usize, p: [f64; 2]) -> [[f64; 2]; 2];
    fn velocity_laplacian(&self, side: usize, p: [f64; 2]) -> [f64; 2];
    fn pressure(&self, side: usize, p: [f64; 2]) -> f64;
    fn pressure_gradient(&self, side: usize, p: [f64; 2]) -> [f64; 2];

    /// Momentum source `f = -mu div(eps(u)) + grad p`. Both sides are
    /// divergence free, so `div(eps(u)) = Laplacian(u) / 2`.
    fn source(&self, side: usize, p: [f64; 2], mu: f64) -> [f64; 2] {
        let lap = self.velocity_laplacian(side, p);
        let gp = self.pressure_gradient(side, p);
        [-0.5 * mu * lap[0] + gp[0], -0.5 * mu * lap[1] + gp[1]]
    }

    /// Velocity jump `u_1 - u_2` at an interface point.
    fn velocity_jump(&self, p: [f64; 2]) -> [f64; 2] {
        let a = self.velocity(1, p);
        let b = self.velocity(2, p);
        [a[0] - b[0], a[1] - b[1]]
    }

    /// Traction of one side, `(mu eps(u) - p I) n`.
    fn traction(&self, side: usize, p: [f64; 2], normal: [f64; 2], mu: f64) -> [f64; 2] {
        let g = self.velocity_gradient(side, p);
        let pr = self.pressure(side, p);
        let e = [
            [g[0][0], 0.5 * (g[0][1] + g[1][0])],
            [0.5 * (g[0][1] + g[1][0]), g[1][1]],
        ];
        [
            mu * (e[0][0] * normal[0] + e[0][1] * normal[1]) - pr * normal[0],
            mu * (e[1][0] * normal[0] + e[1][1] * normal[1]) - pr * normal[1],
        ]
    }

    /// Traction jump across the interface.
    fn traction_jump(&self, p: [f64; 2], normal: [f64; 2], mu: f64) -> [f64; 2] {
        let a = self.traction(1, p, normal, mu);
        let b = self.traction(2, p, normal, mu);
        [a[0] - b[0], a[1] - b[1]]
    }

    /// Dirichlet data on the outer boundary (the side-1 trace).
    fn boundary_velocity(&self, p: [f64; 2]) -> [f64; 2] {
        self.velocity(1, p)
    }
}

/// Exterior `(sin x cos y, -cos x sin y)` with pressure
/// `sin(2 pi x) cos(2 pi y)`; enclosed `(x e^{-xy}, -y e^{-xy})` with
/// pressure `x^2 y^2`.
#[derive(Debug, Clone, Copy, Default)]
pub struct TrigExpSolution;

use std::f64::consts::PI;

impl ExactSolution for TrigExpSolution {
    fn velocity(&self, side: usize, p: [f64; 2]) -> [f64; 2] {
        let [x, y] = p;
        if side == 1 {
            [x.sin() * y.cos(), -x.cos() * y.sin()]
        } else {
            let e = (-x * y).exp();
            [x * e, -y * e]
        }
    }

    fn velocity_gradient(&self, side: usize, p: [f64; 2]) -> [[f64; 2]; 2] {
        let [x, y] = p;
        if side == 1 {
            [
                [x.cos() * y.cos(), -x.sin() * y.sin()],
                [x.sin() * y.sin(), -x.cos() * y.cos()],
            ]
        } else {
            let e = (-x * y).exp();
            [
                [e * (1.0 - x * y), -x * x * e],
                [y * y * e, e * (x * y - 1.0)],
            ]
        }
    }

    fn velocity_laplacian(&self, side: usize, p: [f64; 2]) -> [f64; 2] {
        let [x, y] = p;
        if side == 1 {
            [-2.0 * x.sin() * y.cos(), 2.0 * x.cos() * y.sin()]
        } else {
            let e = (-x * y).exp();
            [
                e * (x * y * y - 2.0 * y + x * x * x),
                e * (2.0 * x - x * x * y - y * y * y),
            ]
        }
    }

    fn pressure(&self, side: usize, p: [f64; 2]) -> f64 {
        let [x, y] = p;
        if side == 1 {
            (2.0 * PI * x).sin() * (2.0 * PI * y).cos()
        } else {
            x * x * y * y
        }
    }

    fn pressure_gradient(&self, side: usize, p: [f64; 2]) -> [f64; 2] {
        let [x, y] = p;
        if side == 1 {
            [
                2.0 * PI * (2.0 * PI * x).cos() * (2.0 * PI * y).cos(),
                -2.0 * PI * (2.0 * PI * x).sin() * (2.0 * PI * y).sin(),
            ]
        } else {
            [2.0 * x * y * y, 2.0 * x * x * y]
        }
    }
}
