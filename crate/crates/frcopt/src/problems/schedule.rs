//! Continuation schedule: staged activation of the fiber penalties, periodic
//! renormalization of the objective terms and local-curvature weight growth.

use crate::adjoint::{ObjectiveWeights, Term};

use super::config::{ScheduleConfig, WeightConfig};

const CAPTURE_FLOOR: f64 = 1e-12;

/// Live continuation state across outer iterations.
#[derive(Debug, Clone)]
pub struct Continuation {
    pub schedule: ScheduleConfig,
    base: WeightConfig,
    lcurv_weight: f64,
    captured: [bool; 7],
    pub weights: ObjectiveWeights,
}

impl Continuation {
    pub fn new(base: WeightConfig, schedule: ScheduleConfig, initial: ObjectiveWeights) -> Self {
        Self {
            schedule,
            base,
            lcurv_weight: base.lcurv,
            captured: [false; 7],
            weights: initial,
        }
    }

    fn fiber_terms() -> [Term; 4] {
        [Term::Misalignment, Term::LocalCurvature, Term::GlobalCurvature, Term::Symmetry]
    }

    fn base_weight(&self, t: Term) -> f64 {
        match t {
            Term::Misalignment => self.base.misalign,
            Term::LocalCurvature => self.lcurv_weight,
            Term::GlobalCurvature => self.base.gcurv,
            Term::Symmetry => self.base.symmetry,
            Term::StrainEnergy => self.base.strain,
            Term::Perimeter => self.base.perimeter,
            Term::Regularization => self.base.regularization,
        }
    }

    /// Whether the local curvature penalty participates in this run.
    pub fn lcurv_active(&self) -> bool {
        self.base.lcurv > 0.0
    }

    /// Inner-iteration budget for the given outer iteration: disabled before
    /// `inner_delay` when the local curvature penalty is in play.
    pub fn inner_budget(&self, iter: usize) -> usize {
        if self.lcurv_active() && iter < self.schedule.inner_delay {
            0
        } else {
            self.schedule.max_inner
        }
    }

    fn capture(&mut self, t: Term, raw: f64) {
        if raw.abs() > CAPTURE_FLOOR {
            self.weights.set_normalizer(t, raw.abs());
            self.captured[t.index()] = true;
        } else {
            // dormant: normalizer 1 until the term first becomes nonzero
            self.weights.set_normalizer(t, 1.0);
            self.captured[t.index()] = false;
        }
    }

    /// Applies the schedule at the start of outer iteration `iter`
    /// (1-based) given the raw term values at the current design. Returns
    /// true when normalizers changed (objective values across this boundary
    /// are not comparable).
    pub fn begin_iteration(&mut self, iter: usize, raw: &[f64; 7]) -> bool {
        let mut renormalized = false;

        if iter == 1 {
            // geometry and strain terms normalize against the initial design
            for t in [Term::StrainEnergy, Term::Perimeter, Term::Regularization] {
                if self.weights.weight(t) != 0.0 {
                    self.capture(t, raw[t.index()]);
                    renormalized = true;
                }
            }
        }

        // fiber penalties activate at `activation`, normalized by the values
        // at that iteration
        let act = self.schedule.activation;
        if iter == act.max(1) {
            for t in Self::fiber_terms() {
                let w = self.base_weight(t);
                if w != 0.0 {
                    self.weights.set_weight(t, w);
                    self.capture(t, raw[t.index()]);
                    renormalized = true;
                }
            }
        }

        // dormant normalizers re-capture at the first nonzero value
        if iter > act.max(1) {
            for t in Self::fiber_terms() {
                if self.weights.weight(t) != 0.0
                    && !self.captured[t.index()]
                    && raw[t.index()].abs() > CAPTURE_FLOOR
                {
                    self.capture(t, raw[t.index()]);
                    renormalized = true;
                }
            }
        }

        // local-curvature weight growth
        if self.lcurv_active()
            && iter > act.max(1)
            && self.schedule.lcurv_period > 0
            && iter % self.schedule.lcurv_period == 0
        {
            self.lcurv_weight *= self.schedule.lcurv_growth;
            if self.weights.weight(Term::LocalCurvature) != 0.0 {
                self.weights.set_weight(Term::LocalCurvature, self.lcurv_weight);
            }
        }

        // periodic renormalization of every active captured term
        if self.schedule.renorm_period > 0
            && iter > act.max(1)
            && iter % self.schedule.renorm_period == 0
        {
            for t in crate::adjoint::TERMS {
                if self.weights.weight(t) == 0.0 {
                    continue;
                }
                if t == Term::StrainEnergy && self.schedule.freeze_strain_normalizer {
                    continue;
                }
                if raw[t.index()].abs() > CAPTURE_FLOOR {
                    self.weights.set_normalizer(t, raw[t.index()].abs());
                    self.captured[t.index()] = true;
                    renormalized = true;
                }
            }
        }

        renormalized
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw_with(val: f64) -> [f64; 7] {
        [2.0, 3.0, 4.0, val, val, val, 0.0]
    }

    #[test]
    fn fiber_penalties_wait_for_activation() {
        let base = WeightConfig {
            strain: 1.0,
            misalign: 0.05,
            lcurv: 0.1,
            gcurv: 0.01,
            ..Default::default()
        };
        let mut init = ObjectiveWeights::default();
        init.set_weight(Term::StrainEnergy, 1.0);
        let mut c = Continuation::new(base, ScheduleConfig::default(), init);
        for iter in 1..10 {
            c.begin_iteration(iter, &raw_with(0.5));
            assert_eq!(c.weights.weight(Term::Misalignment), 0.0, "iter {iter}");
        }
        c.begin_iteration(10, &raw_with(0.5));
        assert_eq!(c.weights.weight(Term::Misalignment), 0.05);
        assert_eq!(c.weights.normalizer(Term::Misalignment), 0.5);
        // normalized value is 1.0 at the capturing iterate
        assert!((0.5 / c.weights.normalizer(Term::Misalignment) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn lcurv_weight_quadruples_every_period() {
        let base = WeightConfig { strain: 1.0, lcurv: 0.1, ..Default::default() };
        let mut init = ObjectiveWeights::default();
        init.set_weight(Term::StrainEnergy, 1.0);
        let mut c = Continuation::new(base, ScheduleConfig::default(), init);
        for iter in 1..=20 {
            c.begin_iteration(iter, &raw_with(0.3));
        }
        assert!((c.weights.weight(Term::LocalCurvature) - 0.4).abs() < 1e-15);
        for iter in 21..=40 {
            c.begin_iteration(iter, &raw_with(0.3));
        }
        assert!((c.weights.weight(Term::LocalCurvature) - 1.6).abs() < 1e-15);
    }

    #[test]
    fn zero_at_capture_stays_dormant_until_nonzero() {
        let base = WeightConfig { strain: 1.0, misalign: 0.05, ..Default::default() };
        let mut init = ObjectiveWeights::default();
        init.set_weight(Term::StrainEnergy, 1.0);
        let mut c = Continuation::new(base, ScheduleConfig::default(), init);
        for iter in 1..=10 {
            c.begin_iteration(iter, &raw_with(0.0));
        }
        assert_eq!(c.weights.normalizer(Term::Misalignment), 1.0);
        c.begin_iteration(11, &raw_with(0.2));
        assert_eq!(c.weights.normalizer(Term::Misalignment), 0.2);
    }

    #[test]
    fn renormalization_resets_active_terms_to_unity() {
        let base = WeightConfig { strain: 1.0, misalign: 0.05, ..Default::default() };
        let mut init = ObjectiveWeights::default();
        init.set_weight(Term::StrainEnergy, 1.0);
        let mut c = Continuation::new(base, ScheduleConfig::default(), init);
        for iter in 1..=29 {
            c.begin_iteration(iter, &raw_with(0.7));
        }
        let renormed = c.begin_iteration(30, &[5.0, 3.0, 4.0, 0.9, 0.9, 0.9, 0.0]);
        assert!(renormed);
        assert_eq!(c.weights.normalizer(Term::Misalignment), 0.9);
        assert_eq!(c.weights.normalizer(Term::StrainEnergy), 5.0);
    }

    #[test]
    fn inner_iterations_delayed_with_local_curvature() {
        let base = WeightConfig { strain: 1.0, lcurv: 0.1, ..Default::default() };
        let c = Continuation::new(base, ScheduleConfig::default(), ObjectiveWeights::default());
        assert_eq!(c.inner_budget(5), 0);
        assert_eq!(c.inner_budget(29), 0);
        assert_eq!(c.inner_budget(30), 2);
        let base = WeightConfig { strain: 1.0, ..Default::default() };
        let c = Continuation::new(base, ScheduleConfig::default(), ObjectiveWeights::default());
        assert_eq!(c.inner_budget(5), 2);
    }
}
