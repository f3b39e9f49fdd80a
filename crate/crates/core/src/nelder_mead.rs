//! Nelder–Mead simplex minimization with the standard coefficients
//! (reflection 1, expansion 2, contraction 0.5, shrink 0.5).

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Options {
    pub max_iter: usize,
    /// Stop once every vertex lies within this ∞-norm distance of the best.
    pub diameter_tol: f64,
}

impl Default for Options {
    fn default() -> Self {
        Self {
            max_iter: 20_000,
            diameter_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    /// True when the diameter test fired before the iteration cap.
    pub converged: bool,
}

struct Objective<F> {
    f: F,
    evaluations: usize,
}

impl<F: FnMut(&[f64]) -> f64> Objective<F> {
    fn call(&mut self, x: &[f64]) -> f64 {
        self.evaluations += 1;
        let v = (self.f)(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    }
}

fn lerp(from: &[f64], to: &[f64], t: f64) -> Vec<f64> {
    from.iter().zip(to).map(|(a, b)| a + t * (b - a)).collect()
}

/// Minimizes `f` from `x0`. The initial simplex is `x0` plus `x0 + steps[i]·e_i`.
/// NaN values are treated as +∞, so such points are never accepted.
pub fn minimize<F>(f: F, x0: &[f64], steps: &[f64], opts: Options) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
{
    assert_eq!(x0.len(), steps.len(), "one step per coordinate");
    let n = x0.len();
    let mut obj = Objective { f, evaluations: 0 };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let v0 = obj.call(x0);
    simplex.push((x0.to_vec(), v0));
    for (i, &h) in steps.iter().enumerate() {
        let mut x = x0.to_vec();
        x[i] += if h != 0.0 { h } else { 1e-3 };
        let v = obj.call(&x);
        simplex.push((x, v));
    }

    let mut iterations = 0;
    let mut converged = false;
    loop {
        // Stable sort keeps earlier vertices first on ties.
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = &simplex[0].0;
        let diameter = simplex[1..]
            .iter()
            .flat_map(|(x, _)| x.iter().zip(best).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if diameter < opts.diameter_tol {
            converged = true;
            break;
        }
        if iterations >= opts.max_iter {
            break;
        }
        iterations += 1;

        let mut centroid = vec![0.0; n];
        for (x, _) in &simplex[..n] {
            for (c, v) in centroid.iter_mut().zip(x) {
                *c += v / n as f64;
            }
        }
        let (worst, f_worst) = simplex[n].clone();
        let f_best = simplex[0].1;
        let f_second = simplex[n - 1].1;

        let xr = lerp(&centroid, &worst, -REFLECT);
        let fr = obj.call(&xr);
        if fr < f_best {
            let xe = lerp(&centroid, &xr, EXPAND);
            let fe = obj.call(&xe);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < f_second {
            simplex[n] = (xr, fr);
            continue;
        }
        // Outside contraction towards the reflected point, inside towards the
        // worst vertex.
        let target = if fr < f_worst { &xr } else { &worst };
        let xc = lerp(&centroid, target, CONTRACT);
        let fc = obj.call(&xc);
        if fc < fr.min(f_worst) {
            simplex[n] = (xc, fc);
            continue;
        }
        let anchor = simplex[0].0.clone();
        for vertex in simplex.iter_mut().skip(1) {
            let x = lerp(&anchor, &vertex.0, SHRINK);
            let v = obj.call(&x);
            *vertex = (x, v);
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, value) = simplex.swap_remove(0);
    Minimum {
        x,
        value,
        iterations,
        evaluations: obj.evaluations,
        converged,
    }
}
