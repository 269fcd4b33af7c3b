//! Box-constrained Nelder–Mead simplex search.
//!
//! Trial points are projected onto the box, so the search never evaluates
//! outside it. Non-finite objective values are treated as +∞.

#[derive(Debug, Clone)]
pub struct NelderMeadOptions {
    pub lower: f64,
    pub upper: f64,
    pub initial_step: f64,
    /// Stop once every vertex lies within this distance of the best one.
    pub size_tol: f64,
    pub max_evals: usize,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        NelderMeadOptions {
            lower: -12.0,
            upper: 12.0,
            initial_step: 2.0,
            size_tol: 1e-6,
            max_evals: 20_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub initial_value: f64,
    pub evals: usize,
    pub converged: bool,
    /// Best value after each iteration.
    pub trace: Vec<f64>,
}

fn clamp(x: &mut [f64], lo: f64, hi: f64) {
    x.iter_mut().for_each(|v| *v = v.clamp(lo, hi));
}

fn sanitize(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

pub fn minimize<F>(mut f: F, x0: &[f64], opts: &NelderMeadOptions) -> NelderMeadResult
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    let mut evals = 0;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        sanitize(f(x))
    };

    let mut start = x0.to_vec();
    clamp(&mut start, opts.lower, opts.upper);
    let initial_value = eval(&start, &mut evals);
    if n == 0 {
        return NelderMeadResult {
            x: start,
            value: initial_value,
            initial_value,
            evals,
            converged: true,
            trace: vec![initial_value],
        };
    }

    let mut simplex: Vec<Vec<f64>> = vec![start.clone()];
    let mut values = vec![initial_value];
    for i in 0..n {
        let mut v = start.clone();
        // Step inward when the start sits on the upper face.
        v[i] += if v[i] + opts.initial_step > opts.upper {
            -opts.initial_step
        } else {
            opts.initial_step
        };
        clamp(&mut v, opts.lower, opts.upper);
        values.push(eval(&v, &mut evals));
        simplex.push(v);
    }

    let mut trace = Vec::new();
    let mut converged = false;
    while evals < opts.max_evals {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();
        trace.push(values[0]);

        let size = simplex[1..]
            .iter()
            .map(|v| {
                v.iter()
                    .zip(&simplex[0])
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if size < opts.size_tol {
            converged = true;
            break;
        }

        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|v| v[j]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            let mut p: Vec<f64> = centroid
                .iter()
                .zip(&simplex[n])
                .map(|(c, w)| c + t * (w - c))
                .collect();
            clamp(&mut p, opts.lower, opts.upper);
            p
        };

        let xr = along(-1.0);
        let fr = eval(&xr, &mut evals);
        if fr < values[0] {
            let xe = along(-2.0);
            let fe = eval(&xe, &mut evals);
            if fe < fr {
                simplex[n] = xe;
                values[n] = fe;
            } else {
                simplex[n] = xr;
                values[n] = fr;
            }
            continue;
        }
        if fr < values[n - 1] {
            simplex[n] = xr;
            values[n] = fr;
            continue;
        }
        let (xc, fc) = if fr < values[n] {
            let xc = along(-0.5);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        } else {
            let xc = along(0.5);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        };
        if fc < values[n].min(fr) {
            simplex[n] = xc;
            values[n] = fc;
            continue;
        }
        // Shrink toward the best vertex.
        for i in 1..=n {
            let shrunk: Vec<f64> = simplex[0]
                .iter()
                .zip(&simplex[i])
                .map(|(b, v)| b + 0.5 * (v - b))
                .collect();
            values[i] = eval(&shrunk, &mut evals);
            simplex[i] = shrunk;
        }
    }

    let best = (0..=n)
        .min_by(|&a, &b| values[a].total_cmp(&values[b]))
        .unwrap_or(0);
    NelderMeadResult {
        x: simplex[best].clone(),
        value: values[best],
        initial_value,
        evals,
        converged,
        trace,
    }
}
