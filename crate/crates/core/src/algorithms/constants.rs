use serde::{Deserialize, Serialize};

/// Slack for inequalities that the reference values meet with equality.
const CHECK_TOL: f64 = 1e-12;

/// Tuning constants of the algorithm family.
///
/// [`ConstantsLedger::paper`] holds the reference values, which satisfy every
/// sufficient condition of the correctness analysis. They are extremely
/// conservative (design thresholds near `10⁻³·ε`), so
/// [`ConstantsLedger::practical`] trades the formal guarantee for budgets that
/// finish at desk scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantsLedger {
    pub c_0: f64,
    pub c_1: f64,
    pub c_2: f64,
    pub c_3: f64,
    pub c_4: f64,
    pub c_a: f64,
    pub c_b: f64,
    pub c_c: f64,
    pub c_d: f64,
    pub c_e: f64,
    pub c_f: f64,
    pub c_g: f64,
    /// Multiplier in the safe-set inclusion rule.
    pub kappa_safe: f64,
    /// Multiplier on the width in the incumbent update.
    pub yhat_bonus: f64,
}

impl Default for ConstantsLedger {
    fn default() -> Self {
        Self::paper()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConstraintCheck {
    pub name: &'static str,
    pub lhs: f64,
    pub rhs: f64,
    /// `true` for `lhs ≤ rhs`, `false` for `lhs ≥ rhs`.
    pub upper: bool,
    pub holds: bool,
}

impl ConstantsLedger {
    pub fn paper() -> Self {
        let c_1 = 0.05978841810030329;
        Self {
            c_0: 0.0001,
            c_1,
            c_2: 0.0600087370242953,
            c_3: 0.1,
            c_4: 0.1,
            c_a: 0.0013004532984432395,
            c_b: 0.41043329378840077,
            c_c: 0.0014065949472697806,
            c_d: 0.01,
            c_e: 0.01,
            c_f: c_1,
            c_g: 0.178,
            kappa_safe: 3.0,
            yhat_bonus: 8.0,
        }
    }

    /// Constants sized for simulation. Design thresholds are a tenth of the
    /// round tolerance instead of about a thousandth; `c_g` keeps the same
    /// margin over `3(c_d + c_e)` as the reference values.
    pub fn practical() -> Self {
        Self {
            c_0: 0.0001,
            c_1: 0.5,
            c_2: 0.6,
            c_3: 0.25,
            c_4: 0.25,
            c_a: 0.05,
            c_b: 1.0,
            c_c: 0.05,
            c_d: 0.1,
            c_e: 0.1,
            c_f: 0.5,
            c_g: 0.7,
            kappa_safe: 3.0,
            yhat_bonus: 8.0,
        }
    }

    /// `c_Δ = 3c_d + 3c_e − c_g`.
    pub fn c_delta(&self) -> f64 {
        3.0 * self.c_d + 3.0 * self.c_e - self.c_g
    }

    /// `2/min(c_3, c_4)`, the tolerance of round zero.
    pub fn eps0(&self) -> f64 {
        2.0 / self.c_3.min(self.c_4)
    }

    pub fn checks(&self) -> Vec<ConstraintCheck> {
        let (c0, c1, c2, c3, c4) = (self.c_0, self.c_1, self.c_2, self.c_3, self.c_4);
        let (ca, cb, cc, cd, ce, cf, cg) = (self.c_a, self.c_b, self.c_c, self.c_d, self.c_e, self.c_f, self.c_g);
        let cdl = self.c_delta();
        let le = |name, lhs: f64, rhs: f64| ConstraintCheck { name, lhs, rhs, upper: true, holds: lhs <= rhs + CHECK_TOL };
        let ge = |name, lhs: f64, rhs: f64| ConstraintCheck { name, lhs, rhs, upper: false, holds: lhs + CHECK_TOL >= rhs };
        let inner = 3.0 * cd + 3.0 * ce + 6.0 * cd * c3 + 12.0 * cd * c4 + c4;
        vec![
            le("c3(1+cg)/(1-c3) <= 0.2", c3 * (1.0 + cg) / (1.0 - c3), 0.2),
            le("cg <= 0.2", cg, 0.2),
            ge("c0 >= 0.0001", c0, 0.0001),
            le("c1 <= cf", c1, cf),
            le("3(cd+ce) <= c2", 3.0 * (cd + ce), c2),
            ge("1 - 2c3 - 4c4 >= c0", 1.0 - 2.0 * c3 - 4.0 * c4, c0),
            le("3cd + 3ce + 6cd c3 + 12cd c4 + c4 - cg <= 0", inner - cg, 0.0),
            le("3cd + 6cd c4 + c4 <= 1", 3.0 * cd + 6.0 * cd * c4 + c4, 1.0),
            le("3cd + 3ce + 6cd c3 + 12cd c4 + c4 <= 1/4", inner, 0.25),
            ge("1 - 2c4 - cg >= c0", 1.0 - 2.0 * c4 - cg, c0),
            le("c1(1 + 2c4) <= c3", c1 * (1.0 + 2.0 * c4), c3),
            le("c2(1 + 2c3 + 4c4) <= c4", c2 * (1.0 + 2.0 * c3 + 4.0 * c4), c4),
            ge("cd c0 + ce >= c0", cd * c0 + ce, c0),
            le("2cf(1 + cdelta) <= cb", 2.0 * cf * (1.0 + cdl), cb),
            le(
                "8(ca cf(1+cdelta) + cc + ca + 2ca cdelta) + (8ca(1+cf)+1)(6(cc + ca(1+cb+2cdelta))) <= cf",
                8.0 * (ca * cf * (1.0 + cdl) + cc + ca + 2.0 * ca * cdl)
                    + (8.0 * ca * (1.0 + cf) + 1.0) * (6.0 * (cc + ca * (1.0 + cb + 2.0 * cdl))),
                cf,
            ),
            le("8ca(1 + cf) <= cf", 8.0 * ca * (1.0 + cf), cf),
            ge("ca(1 - cf) >= c0", ca * (1.0 - cf), c0),
            ge("ca + cc - 2ca cdelta - ca cf >= c0", ca + cc - 2.0 * ca * cdl - ca * cf, c0),
        ]
    }

    pub fn validate(&self) -> std::result::Result<(), Vec<ConstraintCheck>> {
        let failed: Vec<ConstraintCheck> = self.checks().into_iter().filter(|c| !c.holds).collect();
        if failed.is_empty() {
            Ok(())
        } else {
            Err(failed)
        }
    }
}
