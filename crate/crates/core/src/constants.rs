//! Closed-form constants that govern the admissible step sizes.
//!
//! All of them are derived from user-supplied Lipschitz moduli; nothing is
//! estimated.

use serde::{Deserialize, Serialize};

use crate::{BilevelProblem, Error, Result, SolverConfig};

/// Lipschitz moduli of the problem data.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LipschitzModuli {
    /// `L_F`: smoothness of `F`.
    pub upper_smooth: f64,
    /// `L_f`: smoothness of `f`.
    pub lower_smooth: f64,
    /// `L_g`: Lipschitz constant of `g` (also bounds `|grad_y g|`).
    pub constraint: f64,
    /// `L_g1`: Lipschitz constant of `grad_x g`.
    pub constraint_grad_x: f64,
    /// `L_g2`: Lipschitz constant of `grad_y g`.
    pub constraint_grad_y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryConstants {
    pub gamma1: f64,
    pub gamma2: f64,
    pub rho_f: f64,
    pub moduli: LipschitzModuli,
    /// Strong monotonicity of the inner saddle operator, `min{1/gamma1 - rho_f, 1/gamma2}`.
    pub rho_t: f64,
    /// Lipschitz constant of the inner saddle operator.
    pub l_b: f64,
    /// `max_{z in Z} |z| = r sqrt(p)`.
    pub c_z: f64,
    /// Smoothness of `v` in `z`.
    pub l_vz: f64,
    pub c_theta_lambda: f64,
    /// Lipschitz constant of the saddle map `(x, y, z) -> (theta*, lambda*)`.
    pub l_theta_lambda: f64,
    /// Weak-convexity modulus of `v` in `(x, y)`: `rho_f / (1 - gamma1 rho_f)`.
    pub rho_v: f64,
}

/// Evaluates the constant formulas for `problem` under `config`.
pub fn derive_constants(
    problem: &dyn BilevelProblem,
    config: &SolverConfig,
    moduli: &LipschitzModuli,
) -> Result<TheoryConstants> {
    TheoryConstants::new(
        problem.weak_convexity(),
        problem.dim_g(),
        config.gamma1,
        config.gamma2,
        config.radius,
        moduli,
    )
}

impl TheoryConstants {
    pub fn new(
        rho_f: f64,
        dim_g: usize,
        gamma1: f64,
        gamma2: f64,
        radius: f64,
        moduli: &LipschitzModuli,
    ) -> Result<Self> {
        if !(rho_f >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "rho_f must be nonnegative, got {rho_f}"
            )));
        }
        if !(gamma1 > 0.0) || (rho_f > 0.0 && gamma1 * rho_f >= 1.0) {
            return Err(Error::ProximalOutOfRange { gamma1, rho_f });
        }
        if !(gamma2 > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "gamma2 must be positive, got {gamma2}"
            )));
        }
        if !(radius > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "radius must be positive, got {radius}"
            )));
        }
        let m = moduli;
        let all = [
            m.upper_smooth,
            m.lower_smooth,
            m.constraint,
            m.constraint_grad_x,
            m.constraint_grad_y,
        ];
        if all.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidConfig(
                "Lipschitz moduli must be finite and nonnegative".into(),
            ));
        }

        let rho_t = (1.0 / gamma1 - rho_f).min(1.0 / gamma2);
        let c_z = radius * (dim_g as f64).sqrt();
        let l_b = (m.lower_smooth + m.constraint + c_z * m.constraint_grad_y + 1.0 / gamma1)
            .max(m.constraint + 1.0 / gamma2);
        let l_vz = (gamma2 * rho_t + 1.0) / (gamma2 * gamma2 * rho_t);
        let c_theta_lambda = ((m.lower_smooth + c_z * m.constraint_grad_x).powi(2)
            + 1.0 / (2.0 * gamma1 * gamma1)
            + m.constraint.powi(2))
        .max(1.0 / (gamma2 * gamma2));
        let l_theta_lambda = 3f64.sqrt()
            * (m.lower_smooth + c_z * m.constraint_grad_y + m.constraint)
                .max(1.0 / gamma1)
                .max(1.0 / gamma2)
            / rho_t;
        let rho_v = rho_f / (1.0 - gamma1 * rho_f);

        Ok(Self {
            gamma1,
            gamma2,
            rho_f,
            moduli: *m,
            rho_t,
            l_b,
            c_z,
            l_vz,
            c_theta_lambda,
            l_theta_lambda,
            rho_v,
        })
    }

    /// Smoothness of the penalized value gap at penalty `c_k`.
    pub fn l_phi(&self, c_k: f64) -> f64 {
        self.moduli.upper_smooth / c_k + self.moduli.lower_smooth + self.rho_v
    }

    /// Upper end of the open interval `(0, rho_T / L_B^2)` in which the inner
    /// step `eta` contracts towards the saddle point.
    pub fn eta_guard(&self) -> f64 {
        self.rho_t / (self.l_b * self.l_b)
    }

    /// Fixed inner step used by the GDA saddle oracle.
    pub fn oracle_step(&self) -> f64 {
        0.9 * self.eta_guard()
    }

    /// Caps `(c_alpha, c_beta)` on the outer steps for an inner step bounded
    /// below by `eta_lower` and initial penalty `c0`.
    pub fn theory_steps(&self, eta_lower: f64, c0: f64) -> (f64, f64) {
        let er = eta_lower * self.rho_t;
        let l2 = self.l_theta_lambda * self.l_theta_lambda;
        let tracking = (1.0 + 2.0 / er) * l2 * self.c_theta_lambda;
        let c_alpha_big =
            self.l_phi(c0) / 2.0 + er * l2 / (4.0 * self.gamma2 * self.gamma2) + tracking;
        let c_beta_big = self.l_vz / 2.0 + tracking;
        (
            (er / 4.0).min(1.0 / (4.0 * c_alpha_big)),
            (er / 4.0).min(1.0 / (4.0 * c_beta_big)),
        )
    }

    /// Strong convexity of the lambda-eliminated inner problem in `theta`.
    pub fn primal_strong_convexity(&self) -> f64 {
        1.0 / self.gamma1 - self.rho_f
    }

    /// Smoothness of the lambda-eliminated inner problem in `theta`.
    pub fn primal_smoothness(&self) -> f64 {
        let m = &self.moduli;
        m.lower_smooth
            + self.c_z * m.constraint_grad_y
            + self.gamma2 * m.constraint * m.constraint
            + 1.0 / self.gamma1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_moduli_collapse_the_max_formulas() {
        let c = TheoryConstants::new(0.0, 1, 1.0, 1.0, 1.0, &LipschitzModuli::default()).unwrap();
        assert_eq!(c.rho_t, 1.0);
        assert_eq!(c.c_z, 1.0);
        assert_eq!(c.l_b, 1.0);
        assert_eq!(c.eta_guard(), 1.0);
    }

    #[test]
    fn l_vz_direct_evaluation() {
        let c = TheoryConstants::new(1.0, 1, 0.5, 1.0, 1.0, &LipschitzModuli::default()).unwrap();
        assert_eq!(c.rho_t, 1.0);
        assert_eq!(c.l_vz, 2.0);
        assert_eq!(c.rho_v, 2.0);
    }

    #[test]
    fn rejects_gamma1_at_or_beyond_inverse_rho() {
        let m = LipschitzModuli::default();
        assert!(matches!(
            TheoryConstants::new(1.0, 1, 2.0, 1.0, 1.0, &m),
            Err(Error::ProximalOutOfRange { .. })
        ));
        assert!(TheoryConstants::new(1.0, 1, 1.0, 1.0, 1.0, &m).is_err());
        assert!(TheoryConstants::new(0.0, 1, 1.0, 0.0, 1.0, &m).is_err());
        assert!(TheoryConstants::new(0.0, 1, 1e6, 1.0, 1.0, &m).is_ok());
    }

    #[test]
    fn doubling_radius_doubles_c_z() {
        let m = LipschitzModuli {
            upper_smooth: 1.0,
            lower_smooth: 2.0,
            constraint: 3.0,
            constraint_grad_x: 0.5,
            constraint_grad_y: 0.25,
        };
        let a = TheoryConstants::new(0.1, 4, 0.5, 2.0, 3.0, &m).unwrap();
        let b = TheoryConstants::new(0.1, 4, 0.5, 2.0, 6.0, &m).unwrap();
        assert_eq!(b.c_z, 2.0 * a.c_z);
        assert_eq!(a.c_z, 6.0);
    }

    #[test]
    fn theory_steps_respect_both_caps() {
        let m = LipschitzModuli {
            upper_smooth: 1.0,
            lower_smooth: 1.0,
            constraint: 2f64.sqrt(),
            ..Default::default()
        };
        let c = TheoryConstants::new(0.0, 1, 1.0, 1.0, 10.0, &m).unwrap();
        let eta = c.oracle_step();
        let (ca, cb) = c.theory_steps(eta, 1.0);
        assert!(ca > 0.0 && ca <= eta * c.rho_t / 4.0);
        assert!(cb > 0.0 && cb <= eta * c.rho_t / 4.0);
    }
}
