//! One-dimensional searches shared by the policies and the optimizers.

/// Root of `f(x) = target` for nondecreasing `f` on `[0, ∞)`.
///
/// Returns 0 when `f(0) ≥ target`. Otherwise doubles `hi` from `scale` until
/// `f(hi) ≥ target`, then runs Illinois false position with a bisection
/// safeguard, stopping when `|f − target| ≤ f_tol` or the bracket is narrower
/// than `x_tol`.
pub(crate) fn increasing_root<E>(
    mut f: impl FnMut(f64) -> Result<f64, E>,
    target: f64,
    scale: f64,
    f_tol: f64,
    x_tol: f64,
) -> Result<Option<f64>, E> {
    let f0 = f(0.0)?;
    if f0 >= target {
        return Ok(Some(0.0));
    }
    let (mut lo, mut g_lo) = (0.0, f0 - target);
    let mut hi = scale.max(f64::MIN_POSITIVE);
    let mut g_hi = f(hi)? - target;
    let mut doublings = 0;
    while g_hi < 0.0 {
        if doublings == 200 {
            return Ok(None);
        }
        lo = hi;
        g_lo = g_hi;
        hi *= 2.0;
        g_hi = f(hi)? - target;
        doublings += 1;
    }
    if g_hi.abs() <= f_tol {
        return Ok(Some(hi));
    }
    // Illinois: halve the retained end's value when the same side is kept twice.
    let mut side = 0i8;
    let mut checkpoint = hi - lo;
    let mut since_halving = 0;
    for _ in 0..300 {
        let mut x = hi - g_hi * (hi - lo) / (g_hi - g_lo);
        if !(x > lo && x < hi) {
            x = 0.5 * (lo + hi);
        }
        let g = f(x)? - target;
        if g.abs() <= f_tol {
            return Ok(Some(x));
        }
        if g < 0.0 {
            lo = x;
            g_lo = g;
            if side == -1 {
                g_hi *= 0.5;
            }
            side = -1;
        } else {
            hi = x;
            g_hi = g;
            if side == 1 {
                g_lo *= 0.5;
            }
            side = 1;
        }
        if hi - lo <= x_tol {
            break;
        }
        // Bisect when false position stalls.
        since_halving += 1;
        if hi - lo <= 0.5 * checkpoint {
            checkpoint = hi - lo;
            since_halving = 0;
        } else if since_halving >= 3 {
            let mid = 0.5 * (lo + hi);
            let g = f(mid)? - target;
            if g.abs() <= f_tol {
                return Ok(Some(mid));
            }
            if g < 0.0 {
                lo = mid;
                g_lo = g;
            } else {
                hi = mid;
                g_hi = g;
            }
            side = 0;
            checkpoint = hi - lo;
            since_halving = 0;
            if hi - lo <= x_tol {
                break;
            }
        }
    }
    Ok(Some(if g_hi.abs() < g_lo.abs() { hi } else { lo }))
}

/// Golden-section minimization of `f` over `[a, b]` until the bracket is
/// narrower than `tol`. Returns the best point seen and its value; callers
/// pass a memoizing closure when evaluations are expensive.
pub(crate) fn golden_section<E>(
    mut f: impl FnMut(f64) -> Result<f64, E>,
    a: f64,
    b: f64,
    tol: f64,
) -> Result<(f64, f64), E> {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (a, b);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    let mut best = if fc <= fd { (c, fc) } else { (d, fd) };
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c)?;
            if fc < best.1 {
                best = (c, fc);
            }
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d)?;
            if fd < best.1 {
                best = (d, fd);
            }
        }
    }
    Ok(best)
}
