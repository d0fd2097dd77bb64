use super::{Result, Tape, Tensor, Var};

/// Outcome of comparing autodiff against central finite differences.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    /// Largest `|auto - numeric| / max(|auto|, |numeric|, 1e-4)` over the
    /// checked coordinates.
    pub max_rel_error: f64,
    pub checked: usize,
    /// Coordinates where the one-sided slopes disagree (a kink such as relu
    /// at 0); these are left out of `max_rel_error`.
    pub excluded: Vec<usize>,
    pub tolerance: f64,
    pub passed: bool,
}

const STEP: f64 = 1e-5;
const DENOM_FLOOR: f64 = 1e-4;

/// Checks the gradient of the scalar function `f` at `x`.
///
/// `f` receives a fresh tape and the tracked input and must return a
/// single-element output.
pub fn grad_check<F>(f: F, x: &Tensor<f64>, tolerance: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<f64>, Var) -> Result<Var>,
{
    let eval = |point: &Tensor<f64>| -> Result<f64> {
        let mut tape = Tape::new();
        let v = tape.constant(point.clone());
        let out = f(&mut tape, v)?;
        tape.scalar_value(out)
    };

    let mut tape = Tape::new();
    let v = tape.param(x.clone());
    let out = f(&mut tape, v)?;
    let grads = tape.backward(out)?;
    let auto = grads.get(v).map(|g| g.to_vec()).unwrap_or_else(|| vec![0.0; x.numel()]);

    let f0 = eval(x)?;
    let mut max_rel_error: f64 = 0.0;
    let mut excluded = Vec::new();
    let mut point = x.clone();
    for i in 0..x.numel() {
        let orig = point.data()[i];
        point.data_mut()[i] = orig + STEP;
        let fp = eval(&point)?;
        point.data_mut()[i] = orig - STEP;
        let fm = eval(&point)?;
        point.data_mut()[i] = orig;

        let forward = (fp - f0) / STEP;
        let backward = (f0 - fm) / STEP;
        let numeric = (fp - fm) / (2.0 * STEP);
        if (forward - backward).abs() > STEP.sqrt() * numeric.abs().max(1.0) {
            excluded.push(i);
            continue;
        }
        let rel = |numeric: f64| (auto[i] - numeric).abs() / auto[i].abs().max(numeric.abs()).max(DENOM_FLOOR);
        let mut err = rel(numeric);
        let mut gap = (forward - backward).abs();
        let mut step = STEP;
        let mut kink = false;
        // Retry with shorter steps. For a smooth function the gap between
        // the one-sided slopes shrinks with the step; if it does not, a
        // kink lies inside the interval.
        while err >= 0.1 * tolerance && step > STEP / 100.0 {
            step /= 10.0;
            point.data_mut()[i] = orig + step;
            let fp = eval(&point)?;
            point.data_mut()[i] = orig - step;
            let fm = eval(&point)?;
            point.data_mut()[i] = orig;
            let fine_gap = ((fp - f0) / step - (f0 - fm) / step).abs();
            if fine_gap > 0.5 * gap && gap > 1e-9 * numeric.abs().max(1.0) {
                kink = true;
                break;
            }
            err = err.min(rel((fp - fm) / (2.0 * step)));
            gap = fine_gap;
        }
        if kink {
            excluded.push(i);
            continue;
        }
        max_rel_error = max_rel_error.max(err);
    }
    Ok(GradCheckReport {
        max_rel_error,
        checked: x.numel() - excluded.len(),
        excluded,
        tolerance,
        passed: max_rel_error < tolerance,
    })
}
