use super::{BoundParams, ParamStore, Tape, TensorError, Var};

/// Outcome of a central-difference comparison against tape gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    /// Worst relative error over all checked entries.
    pub max_rel_error: f64,
    /// Worst relative error per parameter, in name order.
    pub per_param: Vec<(String, f64)>,
    /// Entries compared.
    pub checked: usize,
    /// Entries skipped because a perturbation crossed an activation kink.
    pub skipped_kinks: usize,
}

const DENOMINATOR_FLOOR: f64 = 1e-8;

/// Finite-difference formula used by [`grad_check_with`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stencil {
    /// `(f(p+ε) − f(p−ε)) / 2ε`, truncation error O(ε²).
    #[default]
    Central,
    /// `(8(f(p+ε) − f(p−ε)) − (f(p+2ε) − f(p−2ε))) / 12ε`, truncation
    /// error O(ε⁴); tolerates a larger ε, which shrinks roundoff.
    FivePoint,
}

/// Compares tape gradients of `f` with `(f(p+ε) − f(p−ε)) / 2ε` for every
/// entry of every parameter in `params`.
///
/// Relative error is `|analytic − numeric| / max(|analytic|, |numeric|, 1e-8)`.
/// An entry whose perturbed recordings differ in kink signature from the
/// unperturbed recording is skipped: the function is not differentiable
/// across that perturbation.
pub fn grad_check<F>(params: &ParamStore, eps: f64, f: F) -> Result<GradCheckReport, TensorError>
where
    F: Fn(&mut Tape, &BoundParams) -> Result<Var, TensorError>,
{
    grad_check_with(params, eps, Stencil::Central, f)
}

/// [`grad_check`] with a chosen stencil.
pub fn grad_check_with<F>(params: &ParamStore, eps: f64, stencil: Stencil, f: F) -> Result<GradCheckReport, TensorError>
where
    F: Fn(&mut Tape, &BoundParams) -> Result<Var, TensorError>,
{
    assert!(eps > 0.0, "grad_check requires eps > 0");
    let eval = |store: &ParamStore| -> Result<(f64, Vec<bool>), TensorError> {
        let mut tape = Tape::new();
        let bound = tape.bind_all(store)?;
        let out = f(&mut tape, &bound)?;
        let v = tape.scalar(out);
        if !v.is_finite() {
            return Err(TensorError::NonFinite { op: "grad_check" });
        }
        Ok((v, tape.kink_signature()))
    };

    let mut tape = Tape::new();
    let bound = tape.bind_all(params)?;
    let out = f(&mut tape, &bound)?;
    let base_sig = tape.kink_signature();
    let grads = tape.backward(out)?;

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        per_param: Vec::new(),
        checked: 0,
        skipped_kinks: 0,
    };
    let mut work = params.clone();
    for (name, value) in params.iter() {
        let analytic = grads.get(name).expect("every bound parameter has a gradient");
        let mut worst = 0.0f64;
        for k in 0..value.len() {
            let orig = value.as_slice()[k];
            let mut at = |offset: f64| -> Result<(f64, bool), TensorError> {
                work.get_mut(name).unwrap().as_mut_slice()[k] = orig + offset;
                let (v, sig) = eval(&work)?;
                Ok((v, sig == base_sig))
            };
            let (fp, ok_p) = at(eps)?;
            let (fm, ok_m) = at(-eps)?;
            let (numeric, smooth) = match stencil {
                Stencil::Central => ((fp - fm) / (2.0 * eps), ok_p && ok_m),
                Stencil::FivePoint => {
                    let (fp2, ok_p2) = at(2.0 * eps)?;
                    let (fm2, ok_m2) = at(-2.0 * eps)?;
                    ((8.0 * (fp - fm) - (fp2 - fm2)) / (12.0 * eps), ok_p && ok_m && ok_p2 && ok_m2)
                }
            };
            work.get_mut(name).unwrap().as_mut_slice()[k] = orig;
            if !smooth {
                report.skipped_kinks += 1;
                continue;
            }
            let a = analytic.as_slice()[k];
            let denom = a.abs().max(numeric.abs()).max(DENOMINATOR_FLOOR);
            worst = worst.max((a - numeric).abs() / denom);
            report.checked += 1;
        }
        report.max_rel_error = report.max_rel_error.max(worst);
        report.per_param.push((name.to_string(), worst));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{Axis, Csr, Matrix};
    use std::sync::Arc;

    #[test]
    fn quadratic_is_exact() {
        let mut store = ParamStore::new();
        store.insert("x", Matrix::from_rows(&[vec![0.3, -1.2, 2.5]]));
        let r = grad_check(&store, 1e-5, |t, b| t.sum_squares(b.get("x")?)).unwrap();
        assert!(r.max_rel_error < 1e-8, "{}", r.max_rel_error);
        assert_eq!(r.checked, 3);
    }

    #[test]
    fn five_point_is_exact_on_quartics() {
        let mut store = ParamStore::new();
        store.insert("x", Matrix::from_rows(&[vec![0.3, -1.2]]));
        let quartic = |t: &mut Tape, b: &BoundParams| {
            let s = t.sum_squares(b.get("x")?)?;
            t.sum_squares(s)
        };
        let central = grad_check_with(&store, 1e-2, Stencil::Central, quartic).unwrap();
        let five = grad_check_with(&store, 1e-2, Stencil::FivePoint, quartic).unwrap();
        assert!(central.max_rel_error > 1e-6);
        assert!(five.max_rel_error < 1e-12, "{}", five.max_rel_error);
    }

    #[test]
    fn kink_entries_are_skipped() {
        let mut store = ParamStore::new();
        store.insert("x", Matrix::from_rows(&[vec![0.0, 0.7]]));
        let r = grad_check(&store, 1e-5, |t, b| {
            let y = t.leaky_relu(b.get("x")?, 0.2)?;
            t.sum(y)
        })
        .unwrap();
        assert_eq!(r.skipped_kinks, 1);
        assert_eq!(r.checked, 1);
        assert!(r.max_rel_error < 1e-8);
    }

    #[test]
    fn masked_softmax_with_leaky_relu() {
        let nbrs = Arc::new(Csr::from_lists(vec![vec![0, 1], vec![0, 1, 2], vec![1, 2]]));
        let mut store = ParamStore::new();
        store.insert("s", Matrix::from_rows(&[vec![0.4], vec![-0.9], vec![1.3]]));
        store.insert("d", Matrix::from_rows(&[vec![0.2], vec![0.6], vec![-0.35]]));
        store.insert("h", Matrix::from_rows(&[vec![1.0, -0.5], vec![0.25, 0.8], vec![-1.1, 0.3]]));
        let r = grad_check(&store, 1e-5, |t, b| {
            let e = t.edge_scores(b.get("s")?, b.get("d")?, &nbrs)?;
            let e = t.leaky_relu(e, 0.2)?;
            let a = t.masked_neighbor_softmax(e, &nbrs)?;
            let out = t.neighbor_aggregate(a, b.get("h")?, &nbrs)?;
            let out = t.elu(out, 1.0)?;
            let m = t.mean(out, Axis::Cols)?;
            t.sum_squares(m)
        })
        .unwrap();
        assert!(r.max_rel_error < 1e-4, "{r:?}");
    }
}
