use super::{AutodiffError, Tape, Tensor, Var};

/// Compares the tape gradient of a scalar function against central differences.
///
/// Returns `max_k |analytic_k − numeric_k| / max(1, |analytic_k|)`.
pub fn grad_check<F>(f: F, point: &Tensor, step: f64) -> Result<f64, AutodiffError>
where
    F: Fn(&mut Tape, Var) -> Result<Var, AutodiffError>,
{
    grad_check_many(
        |tape, vars| f(tape, vars[0]),
        std::slice::from_ref(point),
        step,
    )
}

/// [`grad_check`] over several input tensors at once.
pub fn grad_check_many<F>(f: F, points: &[Tensor], step: f64) -> Result<f64, AutodiffError>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var, AutodiffError>,
{
    if !(step > 0.0 && step.is_finite()) {
        return Err(AutodiffError::GradCheck(format!(
            "step must be positive, got {step}"
        )));
    }
    let evaluate = |pts: &[Tensor]| -> Result<f64, AutodiffError> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = pts.iter().map(|p| tape.leaf(p.clone())).collect();
        let out = f(&mut tape, &vars)?;
        let v = tape.scalar(out)?;
        if !v.is_finite() {
            return Err(AutodiffError::GradCheck("non-finite evaluation".into()));
        }
        Ok(v)
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = points.iter().map(|p| tape.leaf(p.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let grads = tape.backward(out)?;

    let mut worst: f64 = 0.0;
    let mut probe: Vec<Tensor> = points.to_vec();
    for (i, var) in vars.iter().enumerate() {
        let analytic = grads.get(*var);
        for k in 0..points[i].len() {
            let base = points[i].data()[k];
            probe[i].data_mut()[k] = base + step;
            let up = evaluate(&probe)?;
            probe[i].data_mut()[k] = base - step;
            let down = evaluate(&probe)?;
            probe[i].data_mut()[k] = base;
            let numeric = (up - down) / (2.0 * step);
            let a = analytic.data()[k];
            worst = worst.max((a - numeric).abs() / a.abs().max(1.0));
        }
    }
    Ok(worst)
}
