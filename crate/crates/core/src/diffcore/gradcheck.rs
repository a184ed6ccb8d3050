//! Central finite-difference check of tape gradients.

use super::{DiffError, ParamStore, Tape, Var};

#[derive(Clone, Copy, Debug)]
pub struct GradCheck {
    pub eps: f64,
    pub rtol: f64,
    pub atol: f64,
}

impl Default for GradCheck {
    fn default() -> Self {
        GradCheck { eps: 1e-3, rtol: 1e-4, atol: 1e-6 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mismatch {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    pub checked: usize,
    /// Largest `|a - n| / max(|a|, |n|)` over coordinates whose gradient exceeds the absolute floor.
    pub max_rel_error: f64,
    pub mismatches: Vec<Mismatch>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.mismatches.is_empty()
    }
}

impl GradCheck {
    /// Compares the tape gradient of `loss` with central differences for every
    /// scalar of every parameter. A coordinate passes when
    /// `|a - n| <= max(rtol · max(|a|, |n|), atol)`.
    pub fn run<F>(&self, store: &ParamStore<f64>, loss: F) -> Result<GradCheckReport, DiffError>
    where
        F: Fn(&mut Tape<f64>) -> Result<Var, DiffError>,
    {
        let grads = {
            let mut tape = Tape::new(store);
            let root = loss(&mut tape)?;
            tape.backward(root)?
        };
        let eval = |s: &ParamStore<f64>| -> Result<f64, DiffError> {
            let mut tape = Tape::new(s);
            let root = loss(&mut tape)?;
            Ok(tape.value(root).data()[0])
        };
        let mut work = store.clone();
        let mut report = GradCheckReport::default();
        for id in store.ids() {
            for k in 0..store.get(id).len() {
                let x0 = store.get(id).data()[k];
                work.get_mut(id).data_mut()[k] = x0 + self.eps;
                let up = eval(&work)?;
                work.get_mut(id).data_mut()[k] = x0 - self.eps;
                let down = eval(&work)?;
                work.get_mut(id).data_mut()[k] = x0;
                let numeric = (up - down) / (2.0 * self.eps);
                let analytic = grads.get(id).data()[k];
                let diff = (analytic - numeric).abs();
                let scale = analytic.abs().max(numeric.abs());
                report.checked += 1;
                if scale > self.atol {
                    report.max_rel_error = report.max_rel_error.max(diff / scale);
                }
                if !(diff <= (self.rtol * scale).max(self.atol)) {
                    report.mismatches.push(Mismatch { param: store.name(id).to_string(), index: k, analytic, numeric });
                }
            }
        }
        Ok(report)
    }
}
