//! Local minimizers: BFGS with central-difference gradients and Nelder–Mead.

#[derive(Debug, Clone, PartialEq)]
pub struct OptResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BfgsOptions {
    pub max_iter: usize,
    /// Stop when `|Δf| ≤ rel_tol · |f|`.
    pub rel_tol: f64,
    /// Finite-difference step per coordinate.
    pub grad_step: f64,
    /// Longest trial step of the line search.
    pub max_step: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self { max_iter: 200, rel_tol: 1e-10, grad_step: 1e-7, max_step: 0.25 }
    }
}

fn gradient<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64], h: f64, evals: &mut usize) -> Vec<f64> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|i| {
            let xi = x[i];
            xp[i] = xi + h;
            let fp = f(&xp);
            xp[i] = xi - h;
            let fm = f(&xp);
            xp[i] = xi;
            *evals += 2;
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

fn dotv(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Quasi-Newton minimization with an Armijo backtracking line search.
pub fn bfgs<F: Fn(&[f64]) -> f64>(f: F, x0: &[f64], opts: &BfgsOptions) -> OptResult {
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut evals = 1;
    let mut fx = f(&x);
    if n == 0 || !fx.is_finite() {
        return OptResult { x, f: fx, iterations: 0, evaluations: evals, converged: n == 0 };
    }
    let mut g = gradient(&f, &x, opts.grad_step, &mut evals);
    let mut h = vec![0.0; n * n];
    let reset = |h: &mut Vec<f64>, scale: f64| {
        h.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..n {
            h[i * n + i] = scale;
        }
    };
    reset(&mut h, 1.0);
    let mut scaled = false;
    let mut converged = false;
    let mut iter = 0;
    while iter < opts.max_iter {
        iter += 1;
        let mut d: Vec<f64> = (0..n).map(|i| -dotv(&h[i * n..(i + 1) * n], &g)).collect();
        let mut slope = dotv(&g, &d);
        if !(slope < 0.0) {
            reset(&mut h, 1.0);
            scaled = false;
            d = g.iter().map(|v| -v).collect();
            slope = -dotv(&g, &g);
            if slope == 0.0 {
                converged = true;
                break;
            }
        }
        let dn = dotv(&d, &d).sqrt();
        let mut alpha = if dn > opts.max_step { opts.max_step / dn } else { 1.0 };
        let mut accepted = None;
        for _ in 0..60 {
            let xt: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + alpha * b).collect();
            let ft = f(&xt);
            evals += 1;
            if ft.is_finite() && ft <= fx + 1e-4 * alpha * slope {
                accepted = Some((xt, ft));
                break;
            }
            alpha *= 0.5;
        }
        let Some((xn, fnew)) = accepted else {
            // no descent left at this resolution
            converged = true;
            break;
        };
        let gn = gradient(&f, &xn, opts.grad_step, &mut evals);
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dotv(&s, &yv);
        if sy > 1e-12 * dotv(&s, &s).sqrt() * dotv(&yv, &yv).sqrt() && sy > 0.0 {
            if !scaled {
                reset(&mut h, sy / dotv(&yv, &yv));
                scaled = true;
            }
            let hy: Vec<f64> = (0..n).map(|i| dotv(&h[i * n..(i + 1) * n], &yv)).collect();
            let yhy = dotv(&yv, &hy);
            let rho = 1.0 / sy;
            for i in 0..n {
                for j in 0..n {
                    h[i * n + j] += rho * ((1.0 + rho * yhy) * s[i] * s[j] - hy[i] * s[j] - s[i] * hy[j]);
                }
            }
        }
        let change = (fx - fnew).abs();
        x = xn;
        g = gn;
        let prev = fx;
        fx = fnew;
        if change <= opts.rel_tol * prev.abs().max(fx.abs()) {
            converged = true;
            break;
        }
    }
    OptResult { x, f: fx, iterations: iter, evaluations: evals, converged }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadOptions {
    pub max_evals: usize,
    pub x_tol: f64,
    pub f_tol: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self { max_evals: 4000, x_tol: 1e-10, f_tol: 1e-16 }
    }
}

/// Downhill simplex started from `x0` with per-coordinate initial offsets `step`.
pub fn nelder_mead<F: Fn(&[f64]) -> f64>(f: F, x0: &[f64], step: &[f64], opts: &NelderMeadOptions) -> OptResult {
    let n = x0.len();
    let eval = |x: &[f64]| {
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), eval(x0)));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += step[i];
        let fx = eval(&x);
        simplex.push((x, fx));
    }
    let mut evals = n + 1;
    let mut iterations = 0;
    let mut converged = false;
    let sort = |s: &mut Vec<(Vec<f64>, f64)>| s.sort_by(|a, b| a.1.total_cmp(&b.1));
    while evals < opts.max_evals {
        sort(&mut simplex);
        iterations += 1;
        let best = &simplex[0];
        let f_spread = simplex.iter().map(|p| (p.1 - best.1).abs()).fold(0.0, f64::max);
        let x_spread = simplex
            .iter()
            .flat_map(|p| p.0.iter().zip(&best.0).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if f_spread <= opts.f_tol && x_spread <= opts.x_tol {
            converged = true;
            break;
        }
        if x_spread <= opts.x_tol * 1e-3 {
            converged = true;
            break;
        }
        let centroid: Vec<f64> = (0..n).map(|j| simplex[..n].iter().map(|p| p.0[j]).sum::<f64>() / n as f64).collect();
        let worst = simplex[n].clone();
        let along = |t: f64| -> Vec<f64> { centroid.iter().zip(&worst.0).map(|(c, w)| c + t * (c - w)).collect() };
        let xr = along(1.0);
        let fr = eval(&xr);
        evals += 1;
        if fr < simplex[0].1 {
            let xe = along(2.0);
            let fe = eval(&xe);
            evals += 1;
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < worst.1 {
            let xc = along(0.5);
            let fc = eval(&xc);
            (xc, fc)
        } else {
            let xc = along(-0.5);
            let fc = eval(&xc);
            (xc, fc)
        };
        evals += 1;
        if fc < worst.1.min(fr) {
            simplex[n] = (xc, fc);
            continue;
        }
        let x_best = simplex[0].0.clone();
        for p in simplex.iter_mut().skip(1) {
            for (v, b) in p.0.iter_mut().zip(&x_best) {
                *v = b + 0.5 * (*v - b);
            }
            p.1 = eval(&p.0);
        }
        evals += n;
    }
    sort(&mut simplex);
    let (x, fx) = simplex.swap_remove(0);
    OptResult { x, f: fx, iterations, evaluations: evals, converged }
}
