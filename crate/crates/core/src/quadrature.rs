//! Two independent quadrature schemes for smooth integrands on a finite
//! interval. They share no code on purpose: downstream checks compare their
//! results against each other, and a common kernel would make that
//! comparison circular.

/// Tanh-sinh (double exponential) quadrature on [a, b].
///
/// Substitutes x = c + r*tanh(pi/2 * sinh(t)) and doubles the node density
/// per level until two successive levels agree to `rel_tol`. The t range is
/// truncated where the double-exponential weight underflows, so integrands
/// only ever see interior points of (a, b).
pub fn tanh_sinh<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64) -> f64 {
    let r = 0.5 * (b - a);
    let g = |t: f64| -> (f64, f64) {
        let u = std::f64::consts::FRAC_PI_2 * t.sinh();
        // distance to the nearest endpoint, via 1 - |tanh u| = 2e/(1+e):
        // writing the node as endpoint +- offset keeps it strictly interior
        // where c + r*tanh(u) would round onto the endpoint itself
        let e = (-2.0 * u.abs()).exp();
        let offset = r * (2.0 * e / (1.0 + e));
        let x = if t >= 0.0 { b - offset } else { a + offset };
        let ch = u.cosh();
        let w = r * std::f64::consts::FRAC_PI_2 * t.cosh() / (ch * ch);
        (x, w)
    };
    // |t| beyond ~4.3 gives weights below f64 underflow for any f of
    // moderate size; 4.0 already reaches ~1e-180.
    let t_max = 4.0;
    let mut h = 1.0;
    let (x0, w0) = g(0.0);
    let mut sum = w0 * f(x0);
    let mut k = 1;
    while (k as f64) * h <= t_max {
        let t = (k as f64) * h;
        let (xp, wp) = g(t);
        let (xm, wm) = g(-t);
        if xp > a && xp < b {
            sum += wp * f(xp);
        }
        if xm > a && xm < b {
            sum += wm * f(xm);
        }
        k += 1;
    }
    let mut prev = sum * h;
    for _level in 1..=12 {
        h *= 0.5;
        // add the new (odd) nodes only
        let mut k = 1;
        while (k as f64) * h <= t_max {
            let t = (k as f64) * h;
            let (xp, wp) = g(t);
            let (xm, wm) = g(-t);
            if xp > a && xp < b {
                sum += wp * f(xp);
            }
            if xm > a && xm < b {
                sum += wm * f(xm);
            }
            k += 2;
        }
        let cur = sum * h;
        if (cur - prev).abs() <= rel_tol * cur.abs().max(f64::MIN_POSITIVE) {
            return cur;
        }
        prev = cur;
    }
    prev
}

/// Adaptive Simpson quadrature on [a, b] with absolute-per-subinterval
/// tolerance derived from `rel_tol` and a first coarse pass.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse<F: Fn(f64) -> f64>(
        f: &F,
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
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let delta = left + right - whole;
        // 15 = Richardson factor for Simpson's rule
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
                + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
    }
    let m = 0.5 * (a + b);
    let fa = f(a);
    let fm = f(m);
    let fb = f(b);
    let whole = simpson(fa, fm, fb, a, b);
    let tol = rel_tol * whole.abs().max(1.0);
    recurse(&f, a, b, fa, fm, fb, whole, tol, 48)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_schemes_integrate_polynomials_exactly_enough() {
        let f = |x: f64| 3.0 * x * x;
        let ts = tanh_sinh(f, 0.0, 2.0, 1e-12);
        let si = adaptive_simpson(f, 0.0, 2.0, 1e-12);
        assert!((ts - 8.0).abs() < 1e-10, "tanh-sinh {ts}");
        assert!((si - 8.0).abs() < 1e-10, "simpson {si}");
    }

    #[test]
    fn schemes_agree_on_a_gaussian_bump() {
        let f = |x: f64| (-0.5 * x * x).exp();
        let ts = tanh_sinh(f, -6.0, 6.0, 1e-12);
        let si = adaptive_simpson(f, -6.0, 6.0, 1e-12);
        let exact = (2.0 * std::f64::consts::PI).sqrt(); // erf(6/sqrt 2) ~ 1 to 1e-9
        assert!((ts - si).abs() < 1e-10);
        assert!((ts - exact).abs() < 1e-8);
    }

    #[test]
    fn endpoint_singular_weighting_is_tamed_by_tanh_sinh() {
        // integrable endpoint singularity: integral of 1/sqrt(x) on (0,1] is 2
        let f = |x: f64| 1.0 / x.sqrt();
        let ts = tanh_sinh(f, 0.0, 1.0, 1e-12);
        assert!((ts - 2.0).abs() < 1e-9, "{ts}");
    }
}
