//! Adaptive quadrature for the floating-point integral routes.

/// Result of a quadrature run.
#[derive(Debug, Clone, Copy)]
pub struct Quadrature {
    pub value: f64,
    /// Accumulated Richardson error estimate of the accepted panels.
    pub err_est: f64,
    pub evals: usize,
}

fn simpson(fa: f64, fm: f64, fb: f64, h: f64) -> f64 {
    h / 6.0 * (fa + 4.0 * fm + fb)
}

/// Adaptive Simpson integration of `f` over `[a, b]` to absolute tolerance
/// `tol`. Panels split until the Richardson estimate of the local error is
/// below the per-panel share of the tolerance or the depth cap is reached.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Quadrature {
    struct State<'a, F> {
        f: &'a F,
        evals: usize,
        err: f64,
    }

    #[allow(clippy::too_many_arguments)]
    fn recurse<F: Fn(f64) -> f64>(
        st: &mut State<'_, F>,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = (st.f)(lm);
        let frm = (st.f)(rm);
        st.evals += 2;
        let left = simpson(fa, flm, fm, m - a);
        let right = simpson(fm, frm, fb, b - m);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            st.err += delta.abs() / 15.0;
            left + right + delta / 15.0
        } else {
            recurse(st, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
                + recurse(st, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
    }

    if a == b {
        return Quadrature { value: 0.0, err_est: 0.0, evals: 0 };
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = simpson(fa, fm, fb, b - a);
    let mut st = State { f: &f, evals: 3, err: 0.0 };
    let value = recurse(&mut st, a, b, fa, fm, fb, whole, tol, 48);
    Quadrature { value, err_est: st.err, evals: st.evals }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_exactness() {
        // Simpson is exact on cubics; the adaptive wrapper must agree.
        let q = adaptive_simpson(|x| x * x * x - 2.0 * x + 1.0, 0.0, 2.0, 1e-12);
        assert!((q.value - (4.0 - 4.0 + 2.0)).abs() < 1e-12);
    }

    #[test]
    fn smooth_transcendental() {
        let q = adaptive_simpson(|x| x.sin(), 0.0, std::f64::consts::PI, 1e-11);
        assert!((q.value - 2.0).abs() < 1e-10, "got {}", q.value);
        assert!(q.err_est < 1e-9);

        let q = adaptive_simpson(|x| x.exp(), -1.0, 1.0, 1e-11);
        let exact = 1f64.exp() - (-1f64).exp();
        assert!((q.value - exact).abs() < 1e-10);
    }

    #[test]
    fn steep_power_integrand() {
        // ∫_{0.01}^{1} s^(-3/2) ds = 2(1/√0.01 − 1) = 18.
        let q = adaptive_simpson(|x| x.powf(-1.5), 0.01, 1.0, 1e-10);
        assert!((q.value - 18.0).abs() < 1e-8, "got {}", q.value);
    }

    #[test]
    fn empty_interval() {
        let q = adaptive_simpson(|x| x.exp(), 1.5, 1.5, 1e-12);
        assert_eq!(q.value, 0.0);
    }
}
