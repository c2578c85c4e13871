use serde::{Deserialize, Serialize};

/// Routing counts for one training step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepCounts {
    pub arrivals: u64,
    pub discarded: u64,
    pub deferred: u64,
    pub trained: u64,
    pub promoted: u64,
    pub evicted: u64,
}

impl StepCounts {
    /// Fraction of arrivals that reached the update; `None` without arrivals.
    pub fn rho(&self) -> Option<f64> {
        (self.arrivals > 0).then(|| self.trained as f64 / self.arrivals as f64)
    }

    fn add(&mut self, other: &StepCounts) {
        self.arrivals += other.arrivals;
        self.discarded += other.discarded;
        self.deferred += other.deferred;
        self.trained += other.trained;
        self.promoted += other.promoted;
        self.evicted += other.evicted;
    }
}

/// Running curriculum statistics. The mean ratio is taken over steps with
/// at least one arrival.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CurriculumStats {
    pub totals: StepCounts,
    pub steps: u64,
    pub rho_history: Vec<Option<f64>>,
    rho_sum: f64,
    rho_steps: u64,
}

impl CurriculumStats {
    pub fn record(&mut self, counts: StepCounts) -> Option<f64> {
        debug_assert_eq!(
            counts.trained + counts.discarded + counts.deferred,
            counts.arrivals,
            "every arrival is routed exactly once"
        );
        self.totals.add(&counts);
        self.steps += 1;
        let rho = counts.rho();
        if let Some(r) = rho {
            self.rho_sum += r;
            self.rho_steps += 1;
        }
        self.rho_history.push(rho);
        rho
    }

    pub fn rho_bar(&self) -> Option<f64> {
        (self.rho_steps > 0).then(|| self.rho_sum / self.rho_steps as f64)
    }
}
