//! Shared test oracles: a fully discrete two-period system (binary L,
//! three-level A, binary Y) with dyadic probabilities, an exact-frequency
//! dataset whose empirical law equals the population law, and brute-force
//! enumeration of every estimand the estimators target. Everything here
//! is independent of the estimation code paths it checks.

use drcurve::weights::{WeightPlan, WeightVariant};
use drcurve::{ColumnRole, LongitudinalDataset, ValueKind};

/// Two-period discrete system; all conditional probabilities are quarters,
/// so every joint probability is exact in binary floating point.
pub struct DiscreteSystem;

pub const A_LEVELS: [f64; 3] = [0.0, 1.0, 2.0];

impl DiscreteSystem {
    pub fn p_l0(&self, l0: usize) -> f64 {
        match l0 {
            0 => 0.5,
            _ => 0.5,
        }
    }

    pub fn p_a0(&self, l0: usize, a0: usize) -> f64 {
        match (l0, a0) {
            (0, 0) => 0.25,
            (0, 1) => 0.50,
            (0, 2) => 0.25,
            (1, 0) => 0.50,
            (1, 1) => 0.25,
            (1, 2) => 0.25,
            _ => unreachable!(),
        }
    }

    /// P(Y0 = 1 | l0, a0).
    pub fn p_y0(&self, l0: usize, a0: usize) -> f64 {
        0.25 + 0.25 * ((a0 >= 1) as usize as f64) + 0.25 * ((l0 == 1) as usize as f64)
    }

    /// P(L1 = 1 | l0, a0, y0).
    pub fn p_l1(&self, l0: usize, a0: usize, y0: usize) -> f64 {
        0.25 + 0.25 * ((a0 >= 1) as usize as f64) + 0.25 * ((y0 == l0) as usize as f64)
    }

    /// P(A1 = a1 | l0, a0, y0, l1).
    pub fn p_a1(&self, _l0: usize, a0: usize, y0: usize, l1: usize, a1: usize) -> f64 {
        let base: [f64; 3] = match (l1, a0 == 2) {
            (0, false) => [0.25, 0.25, 0.50],
            (0, true) => [0.25, 0.50, 0.25],
            (1, false) => [0.50, 0.25, 0.25],
            (1, true) => [0.25, 0.25, 0.50],
            _ => unreachable!(),
        };
        // a prior event rotates the treatment preferences
        if y0 == 1 {
            base[(a1 + 1) % 3]
        } else {
            base[a1]
        }
    }

    /// P(Y1 = 1 | l0, a0, y0, l1, a1).
    pub fn p_y1(&self, _l0: usize, _a0: usize, _y0: usize, l1: usize, a1: usize) -> f64 {
        0.25 + 0.25 * ((a1 >= 1) as usize as f64) + 0.25 * ((l1 == 1) as usize as f64)
    }

    /// Every configuration with its exact joint probability.
    pub fn joint(&self) -> Vec<([usize; 6], f64)> {
        let mut out = Vec::with_capacity(144);
        for l0 in 0..2 {
            for a0 in 0..3 {
                for y0 in 0..2 {
                    for l1 in 0..2 {
                        for a1 in 0..3 {
                            for y1 in 0..2 {
                                let p = self.p_l0(l0)
                                    * self.p_a0(l0, a0)
                                    * bern(self.p_y0(l0, a0), y0)
                                    * bern(self.p_l1(l0, a0, y0), l1)
                                    * self.p_a1(l0, a0, y0, l1, a1)
                                    * bern(self.p_y1(l0, a0, y0, l1, a1), y1);
                                out.push(([l0, a0, y0, l1, a1, y1], p));
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// A dataset whose empirical distribution equals the population law
    /// exactly (joint probabilities have denominator 4^6 = 4096).
    pub fn exact_dataset(&self) -> LongitudinalDataset {
        let schema = vec![
            ColumnRole::baseline("l0", ValueKind::Binary),
            ColumnRole::new("a0", drcurve::Role::Treatment, Some(0), ValueKind::Categorical),
            ColumnRole::outcome("y0", 0, ValueKind::Binary),
            ColumnRole::covariate("l1", 1, ValueKind::Binary),
            ColumnRole::new("a1", drcurve::Role::Treatment, Some(1), ValueKind::Categorical),
            ColumnRole::outcome("y1", 1, ValueKind::Binary),
        ];
        let mut rows = Vec::with_capacity(4096);
        for (cfg, p) in self.joint() {
            let copies = (p * 4096.0).round() as usize;
            assert!(
                ((p * 4096.0) - copies as f64).abs() < 1e-9,
                "joint probability is not a multiple of 1/4096"
            );
            let row: Vec<f64> = vec![
                cfg[0] as f64,
                A_LEVELS[cfg[1]],
                cfg[2] as f64,
                cfg[3] as f64,
                A_LEVELS[cfg[4]],
                cfg[5] as f64,
            ];
            for _ in 0..copies {
                rows.push(row.clone());
            }
        }
        assert_eq!(rows.len(), 4096);
        LongitudinalDataset::from_rows(&schema, &rows).unwrap()
    }

    // ------------------------------------------------------------------
    // population densities the algorithm's density fits converge to
    // ------------------------------------------------------------------

    pub fn g_a0_given_l0(&self, a0: usize, l0: usize) -> f64 {
        self.p_a0(l0, a0)
    }

    pub fn g_a0_marginal(&self, a0: usize) -> f64 {
        (0..2).map(|l0| self.p_l0(l0) * self.p_a0(l0, a0)).sum()
    }

    /// g(a1 | h1) with the history's treatment coordinate already set to
    /// the intervened value (what the algorithm evaluates).
    pub fn g_a1_given_h1(&self, a1: usize, l0: usize, a0_plug: usize, y0: usize, l1: usize) -> f64 {
        self.p_a1(l0, a0_plug, y0, l1, a1)
    }

    /// g(a1 | A0, L0) evaluated at the intervened a0.
    pub fn g_a1_given_a0_l0(&self, a1: usize, a0_plug: usize, l0: usize) -> f64 {
        let mut total = 0.0;
        for y0 in 0..2 {
            for l1 in 0..2 {
                total += bern(self.p_y0(l0, a0_plug), y0)
                    * bern(self.p_l1(l0, a0_plug, y0), l1)
                    * self.p_a1(l0, a0_plug, y0, l1, a1);
            }
        }
        total
    }

    pub fn g_a1_marginal(&self, a1: usize) -> f64 {
        let mut total = 0.0;
        for (cfg, p) in self.joint() {
            if cfg[4] == a1 {
                total += p;
            }
        }
        // joint() already carries y1; dividing by 1 keeps the marginal
        total
    }

    // ------------------------------------------------------------------
    // enumerated estimands
    // ------------------------------------------------------------------

    /// E(Y_t^{a0, a1}) by direct interventional enumeration.
    pub fn do_mean(&self, a0: usize, a1: usize, t: usize) -> f64 {
        let mut total = 0.0;
        for l0 in 0..2 {
            let pl0 = self.p_l0(l0);
            if t == 0 {
                total += pl0 * self.p_y0(l0, a0);
                continue;
            }
            for y0 in 0..2 {
                let py0 = bern(self.p_y0(l0, a0), y0);
                for l1 in 0..2 {
                    let pl1 = bern(self.p_l1(l0, a0, y0), l1);
                    total += pl0 * py0 * pl1 * self.p_y1(l0, a0, y0, l1, a1);
                }
            }
        }
        total
    }

    /// CDRC at t=1 via the recursion: innermost regression then one
    /// integration step, then the baseline mean.
    pub fn cdrc_recursive(&self, a0: usize, a1: usize) -> f64 {
        // m1(h1) = E(Y1 | A1=a1, H1=h1)
        // m0(l0) = E(m1(a1, H1) | A0=a0, L0=l0)
        let mut total = 0.0;
        for l0 in 0..2 {
            let mut m0 = 0.0;
            for y0 in 0..2 {
                for l1 in 0..2 {
                    let w = bern(self.p_y0(l0, a0), y0) * bern(self.p_l1(l0, a0, y0), l1);
                    let m1 = self.p_y1(l0, a0, y0, l1, a1);
                    m0 += w * m1;
                }
            }
            total += self.p_l0(l0) * m0;
        }
        total
    }

    /// CDRC at t=1 via the flat nested-expectation form.
    pub fn cdrc_flat(&self, a0: usize, a1: usize) -> f64 {
        // E_{L0}( E( E(Y1 | A1=a1, L1, Y0, A0=a0, L0) | A0=a0, L0 ) )
        let mut outer = 0.0;
        for l0 in 0..2 {
            let mut mid = 0.0;
            for y0 in 0..2 {
                let py0 = bern(self.p_y0(l0, a0), y0);
                for l1 in 0..2 {
                    let pl1 = bern(self.p_l1(l0, a0, y0), l1);
                    let inner = self.p_y1(l0, a0, y0, l1, a1);
                    mid += py0 * pl1 * inner;
                }
            }
            outer += self.p_l0(l0) * mid;
        }
        outer
    }

    /// E(Y1 | A1=a1, A0=a0, L0=l0): the conditional association.
    pub fn assoc_y1_given_l0(&self, a0: usize, a1: usize, l0: usize) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for (cfg, p) in self.joint() {
            if cfg[0] == l0 && cfg[1] == a0 && cfg[4] == a1 {
                den += p;
                if cfg[5] == 1 {
                    num += p;
                }
            }
        }
        num / den
    }

    /// E(Y1 | A1=a1, A0=a0): the marginal association.
    pub fn assoc_y1(&self, a0: usize, a1: usize) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for (cfg, p) in self.joint() {
            if cfg[1] == a0 && cfg[4] == a1 {
                den += p;
                if cfg[5] == 1 {
                    num += p;
                }
            }
        }
        num / den
    }

    /// The weighted recursion with the exact density-ratio weights
    /// (no truncation), evaluated at baseline covariate l0.
    pub fn w1long_recursion_given_l0(&self, a0: usize, a1: usize, l0: usize) -> f64 {
        // stage 1: m1(h1) = w1(h1) * E(Y1 | A1=a1, H1=h1),
        //          w1 = g(a1 | h1) / g(a1 | a0, l0)
        // stage 0 integration over (y0, l1) given (A0=a0, L0=l0)
        let den = self.g_a1_given_a0_l0(a1, a0, l0);
        let mut m0 = 0.0;
        for y0 in 0..2 {
            for l1 in 0..2 {
                let p = bern(self.p_y0(l0, a0), y0) * bern(self.p_l1(l0, a0, y0), l1);
                let w1 = self.g_a1_given_h1(a1, l0, a0, y0, l1) / den;
                m0 += p * w1 * self.p_y1(l0, a0, y0, l1, a1);
            }
        }
        m0
    }

    /// What the full weighted algorithm targets, enumerated exactly:
    /// per-unit weights (with intervened treatments plugged into histories),
    /// saturated stage regressions, the unweighted t=0 regression, and the
    /// w0-normalized final mean. Returns (value, undefined_flag).
    pub fn weighted_estimand(&self, a0: usize, a1: usize, t: usize, plan: &WeightPlan) -> (f64, bool) {
        let marg_a0 = self.g_a0_marginal(a0);
        let undefined = marg_a0 <= plan.c;

        // t = 0 weights per baseline stratum
        let w0 = |l0: usize| -> f64 {
            let num = self.g_a0_given_l0(a0, l0);
            if num > plan.c {
                1.0
            } else {
                num / marg_a0.max(plan.denominator_floor)
            }
        };

        let estimate = if t == 0 {
            // regression E(Y0 | A0, L0) predicted at (a0, l0)
            let mut num = 0.0;
            let mut den = 0.0;
            for l0 in 0..2 {
                let w = w0(l0);
                num += self.p_l0(l0) * w * self.p_y0(l0, a0);
                den += self.p_l0(l0) * w;
            }
            num / den
        } else {
            // stage-1 weight per (l0, y0, l1) with A0 plugged to a0
            let stage1_weight = |l0: usize, y0: usize, l1: usize| -> f64 {
                let num = self.g_a1_given_h1(a1, l0, a0, y0, l1);
                let den0 = self.g_a1_given_a0_l0(a1, a0, l0);
                match plan.variant {
                    WeightVariant::Simple => {
                        if num > plan.c {
                            1.0
                        } else {
                            num / den0.max(plan.denominator_floor)
                        }
                    }
                    WeightVariant::Fallback => {
                        if num > plan.c {
                            1.0
                        } else if den0 > plan.c {
                            num / den0
                        } else {
                            let marg = self.g_a1_marginal(a1);
                            num / marg.max(plan.denominator_floor)
                        }
                    }
                }
            };
            // Ytilde0(l0, y0, l1) = w1 * E(Y1 | A1=a1, h1 plugged)
            // stage-0 regression E(Ytilde0 | A0, L0) at (a0, l0):
            // integrate (y0, l1) against their law given the *observed*
            // conditioning (A0=a0, L0=l0)
            let mut num = 0.0;
            let mut den = 0.0;
            for l0 in 0..2 {
                let mut m0 = 0.0;
                for y0 in 0..2 {
                    for l1 in 0..2 {
                        let p = bern(self.p_y0(l0, a0), y0) * bern(self.p_l1(l0, a0, y0), l1);
                        m0 += p
                            * stage1_weight(l0, y0, l1)
                            * self.p_y1(l0, a0, y0, l1, a1);
                    }
                }
                let w = w0(l0);
                num += self.p_l0(l0) * w * m0;
                den += self.p_l0(l0) * w;
            }
            num / den
        };
        // binary outcome: report-time clamp, mirroring the estimator
        (estimate.clamp(0.0, 1.0), undefined)
    }
}

pub fn bern(p1: f64, value: usize) -> f64 {
    if value == 1 {
        p1
    } else {
        1.0 - p1
    }
}
