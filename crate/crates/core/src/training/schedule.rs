use serde::{Deserialize, Serialize};

/// What the scheduler decided after one epoch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleAction {
    /// New best validation score.
    Improved,
    Continue,
    /// Learning rate multiplied by the factor.
    ReduceLr,
    /// Patience exhausted; restore the best parameters.
    Stop,
}

/// Reduce-on-plateau learning rate with early stopping, both keyed on a
/// validation score where lower is better.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlateauScheduler {
    lr: f64,
    factor: f64,
    lr_patience: usize,
    stop_patience: usize,
    best: Option<(usize, f64)>,
    since_best: usize,
    since_reduce: usize,
}

impl PlateauScheduler {
    pub fn new(lr: f64, factor: f64, lr_patience: usize, stop_patience: usize) -> Self {
        Self {
            lr,
            factor,
            lr_patience,
            stop_patience,
            best: None,
            since_best: 0,
            since_reduce: 0,
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    /// `(epoch, score)` of the best observation so far.
    pub fn best(&self) -> Option<(usize, f64)> {
        self.best
    }

    /// Records the validation score of `epoch`. The stop check runs before the
    /// reduction check, so an epoch that exhausts both patiences stops.
    pub fn observe(&mut self, epoch: usize, score: f64) -> ScheduleAction {
        let improved = match self.best {
            None => !score.is_nan(),
            Some((_, b)) => score < b,
        };
        if improved {
            self.best = Some((epoch, score));
            self.since_best = 0;
            self.since_reduce = 0;
            return ScheduleAction::Improved;
        }
        self.since_best += 1;
        self.since_reduce += 1;
        if self.since_best >= self.stop_patience {
            return ScheduleAction::Stop;
        }
        if self.since_reduce >= self.lr_patience {
            self.lr *= self.factor;
            self.since_reduce = 0;
            return ScheduleAction::ReduceLr;
        }
        ScheduleAction::Continue
    }
}
