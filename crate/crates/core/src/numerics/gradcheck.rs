use super::params::ParamStore;
use super::tape::{Bindings, Tape, Var};
use super::Result;

/// Denominator floor for the relative error of near-zero gradient entries.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst entry.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
    pub tol: f64,
    pub passed: bool,
}

/// Compares taped gradients against central differences of the same loss.
///
/// `loss` must be deterministic: it is called once on a recording tape and
/// twice more per checked scalar with one parameter entry shifted by `±h`.
pub fn grad_check<F>(store: &ParamStore, h: f64, tol: f64, loss: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &Bindings) -> Result<Var>,
{
    grad_check_with(store, h, tol, &loss, |tape, l| tape.backward(l)).map(|(r, _)| r)
}

/// Same as [`grad_check`] but with a caller-supplied backward pass, so a
/// corrupted adjoint can be injected as a negative control.
pub fn grad_check_with<F, B>(
    store: &ParamStore,
    h: f64,
    tol: f64,
    loss: &F,
    backward: B,
) -> Result<(GradCheckReport, f64)>
where
    F: Fn(&mut Tape, &Bindings) -> Result<Var>,
    B: Fn(&Tape, Var) -> Result<super::tape::Gradients>,
{
    let mut tape = Tape::new();
    let b = tape.bind(store);
    let l = loss(&mut tape, &b)?;
    let value = tape.value(l).item();
    let analytic = backward(&tape, l)?.for_params(&b);

    let eval = |s: &ParamStore| -> Result<f64> {
        let mut t = Tape::new();
        let b = t.bind(s);
        let l = loss(&mut t, &b)?;
        Ok(t.value(l).item())
    };

    let mut probe = store.clone();
    let mut max_rel: f64 = 0.0;
    let mut worst = None;
    let mut checked = 0;
    for id in store.ids() {
        for k in 0..store.get(id).len() {
            let orig = store.get(id).data()[k];
            probe.get_mut(id).data_mut()[k] = orig + h;
            let up = eval(&probe)?;
            probe.get_mut(id).data_mut()[k] = orig - h;
            let down = eval(&probe)?;
            probe.get_mut(id).data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic[id.index()].data()[k];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
            if worst.is_none() || rel > max_rel {
                max_rel = rel;
                worst = Some((store.name(id).to_string(), k));
            }
            checked += 1;
        }
    }
    Ok((
        GradCheckReport {
            max_rel_error: max_rel,
            worst,
            checked,
            tol,
            passed: max_rel <= tol,
        },
        value,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{Rng, Tensor};

    fn linear_store() -> ParamStore {
        let mut rng = Rng::new(11);
        let mut s = ParamStore::new();
        s.add_glorot("w", 3, 2, &mut rng);
        s
    }

    fn linear_loss(t: &mut Tape, b: &Bindings) -> Result<Var> {
        let x = t.leaf(Tensor::new(&[2, 3], vec![0.5, -1.0, 2.0, 1.5, 0.25, -0.75]).unwrap());
        let y = t.matmul(x, b.vars()[0])?;
        Ok(t.sum(y))
    }

    #[test]
    fn linear_map_is_exact() {
        let r = grad_check(&linear_store(), 1e-5, 1e-4, linear_loss).unwrap();
        assert!(r.passed);
        assert!(r.max_rel_error < 1e-9, "{}", r.max_rel_error);
        assert_eq!(r.checked, 6);
    }

    #[test]
    fn corrupted_adjoint_is_reported() {
        let store = linear_store();
        let (r, _) = grad_check_with(&store, 1e-5, 1e-4, &linear_loss, |_, _| {
            // Adjoints of a loss scaled by 2: every entry comes back 2x too large.
            let mut t2 = Tape::new();
            let b2 = t2.bind(&store);
            let l2 = linear_loss(&mut t2, &b2)?;
            let l2 = t2.scale(l2, 2.0);
            t2.backward(l2)
        })
        .unwrap();
        assert!(!r.passed);
        assert!(r.max_rel_error > 0.4);
    }
}
