//! Single LSTM cell and per-layer sequence runner with full
//! backpropagation through time. Gate order is i, f, g, o; the cell is
//! `c' = f*c + i*g`, `h' = o*tanh(c')`.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, Axis};
use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    /// input-to-hidden, 4H x in_dim
    pub w: Array2<f64>,
    /// hidden-to-hidden, 4H x H
    pub u: Array2<f64>,
    /// bias, 4H
    pub b: Array1<f64>,
}

impl LstmParams {
    pub fn init<R: Rng>(in_dim: usize, hidden: usize, rng: &mut R) -> LstmParams {
        let mut p = LstmParams {
            w: Array2::from_shape_fn((4 * hidden, in_dim), |_| rng.gen_range(-0.08..0.08)),
            u: Array2::from_shape_fn((4 * hidden, hidden), |_| rng.gen_range(-0.08..0.08)),
            b: Array1::from_shape_fn(4 * hidden, |_| rng.gen_range(-0.08..0.08)),
        };
        // forget-gate bias starts at 1
        p.b.slice_mut(s![hidden..2 * hidden]).fill(1.0);
        p
    }

    pub fn zeros(in_dim: usize, hidden: usize) -> LstmParams {
        LstmParams {
            w: Array2::zeros((4 * hidden, in_dim)),
            u: Array2::zeros((4 * hidden, hidden)),
            b: Array1::zeros(4 * hidden),
        }
    }

    pub fn hidden(&self) -> usize {
        self.b.len() / 4
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Debug, Clone)]
pub struct StepCache {
    x: Array1<f64>,
    h_prev: Array1<f64>,
    c_prev: Array1<f64>,
    i: Array1<f64>,
    f: Array1<f64>,
    g: Array1<f64>,
    o: Array1<f64>,
    tanh_c: Array1<f64>,
}

pub fn step_forward(
    p: &LstmParams,
    x: &Array1<f64>,
    h_prev: &Array1<f64>,
    c_prev: &Array1<f64>,
) -> (Array1<f64>, Array1<f64>, StepCache) {
    let hidden = p.hidden();
    let mut z = p.w.dot(x) + p.u.dot(h_prev) + &p.b;
    let g = z.slice(s![2 * hidden..3 * hidden]).mapv(f64::tanh);
    z.mapv_inplace(sigmoid);
    let i = z.slice(s![0..hidden]).to_owned();
    let f = z.slice(s![hidden..2 * hidden]).to_owned();
    let o = z.slice(s![3 * hidden..4 * hidden]).to_owned();
    let c = &f * c_prev + &i * &g;
    let tanh_c = c.mapv(f64::tanh);
    let h = &o * &tanh_c;
    let cache = StepCache {
        x: x.clone(),
        h_prev: h_prev.clone(),
        c_prev: c_prev.clone(),
        i,
        f,
        g,
        o,
        tanh_c,
    };
    (h, c, cache)
}

/// Accumulates parameter gradients into `grads` and returns
/// (d_x, d_h_prev, d_c_prev).
pub fn step_backward(
    p: &LstmParams,
    cache: &StepCache,
    dh: &Array1<f64>,
    dc_in: &Array1<f64>,
    grads: &mut LstmParams,
) -> (Array1<f64>, Array1<f64>, Array1<f64>) {
    let hidden = p.hidden();
    let d_o = dh * &cache.tanh_c;
    let dc = dc_in + &(dh * &cache.o * cache.tanh_c.mapv(|t| 1.0 - t * t));
    let d_f = &dc * &cache.c_prev;
    let d_i = &dc * &cache.g;
    let d_g = &dc * &cache.i;
    let dc_prev = &dc * &cache.f;

    let mut dz = Array1::zeros(4 * hidden);
    dz.slice_mut(s![0..hidden])
        .assign(&(&d_i * &cache.i * cache.i.mapv(|v| 1.0 - v)));
    dz.slice_mut(s![hidden..2 * hidden])
        .assign(&(&d_f * &cache.f * cache.f.mapv(|v| 1.0 - v)));
    dz.slice_mut(s![2 * hidden..3 * hidden])
        .assign(&(&d_g * cache.g.mapv(|v| 1.0 - v * v)));
    dz.slice_mut(s![3 * hidden..4 * hidden])
        .assign(&(&d_o * &cache.o * cache.o.mapv(|v| 1.0 - v)));

    let dz_col = dz.view().insert_axis(Axis(1));
    general_mat_mul(
        1.0,
        &dz_col,
        &cache.x.view().insert_axis(Axis(0)),
        1.0,
        &mut grads.w,
    );
    general_mat_mul(
        1.0,
        &dz_col,
        &cache.h_prev.view().insert_axis(Axis(0)),
        1.0,
        &mut grads.u,
    );
    grads.b += &dz;

    let dx = p.w.t().dot(&dz);
    let dh_prev = p.u.t().dot(&dz);
    (dx, dh_prev, dc_prev)
}

#[derive(Debug, Clone)]
pub struct LayerRun {
    caches: Vec<StepCache>,
    /// h_t for every timestep.
    pub outputs: Vec<Array1<f64>>,
    pub final_h: Array1<f64>,
    pub final_c: Array1<f64>,
}

pub fn layer_forward(
    p: &LstmParams,
    inputs: &[Array1<f64>],
    init: Option<(&Array1<f64>, &Array1<f64>)>,
) -> LayerRun {
    let hidden = p.hidden();
    let (mut h, mut c) = match init {
        Some((h0, c0)) => (h0.clone(), c0.clone()),
        None => (Array1::zeros(hidden), Array1::zeros(hidden)),
    };
    let mut caches = Vec::with_capacity(inputs.len());
    let mut outputs = Vec::with_capacity(inputs.len());
    for x in inputs {
        let (h_new, c_new, cache) = step_forward(p, x, &h, &c);
        h = h_new;
        c = c_new;
        caches.push(cache);
        outputs.push(h.clone());
    }
    LayerRun {
        caches,
        outputs,
        final_h: h,
        final_c: c,
    }
}

/// BPTT over one layer. `d_outputs[t]` is the loss gradient flowing into
/// h_t from outside the layer (may be zeros); `d_final` adds to the last
/// step's (h, c). Returns (d_inputs, d_init_h, d_init_c).
pub fn layer_backward(
    p: &LstmParams,
    run: &LayerRun,
    d_outputs: &[Array1<f64>],
    d_final: Option<(&Array1<f64>, &Array1<f64>)>,
    grads: &mut LstmParams,
) -> (Vec<Array1<f64>>, Array1<f64>, Array1<f64>) {
    let hidden = p.hidden();
    let steps = run.caches.len();
    let mut dh_next = Array1::zeros(hidden);
    let mut dc_next = Array1::zeros(hidden);
    if let Some((dfh, dfc)) = d_final {
        dh_next += dfh;
        dc_next += dfc;
    }
    let mut d_inputs = vec![Array1::zeros(0); steps];
    for t in (0..steps).rev() {
        let dh = &dh_next + &d_outputs[t];
        let (dx, dh_prev, dc_prev) = step_backward(p, &run.caches[t], &dh, &dc_next, grads);
        d_inputs[t] = dx;
        dh_next = dh_prev;
        dc_next = dc_prev;
    }
    (d_inputs, dh_next, dc_next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Central finite differences on a scalar loss over one layer run.
    #[test]
    fn single_cell_gradients_match_finite_differences() {
        let hidden = 3;
        let in_dim = 2;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = LstmParams::init(in_dim, hidden, &mut rng);
        let inputs: Vec<Array1<f64>> = (0..4)
            .map(|_| Array1::from_shape_fn(in_dim, |_| rng.gen_range(-1.0..1.0)))
            .collect();
        // loss = sum of all h_t
        let loss = |p: &LstmParams| -> f64 {
            layer_forward(p, &inputs, None)
                .outputs
                .iter()
                .map(|h| h.sum())
                .sum()
        };
        let run = layer_forward(&p, &inputs, None);
        let d_outputs: Vec<Array1<f64>> = run.outputs.iter().map(|h| Array1::ones(h.len())).collect();
        let mut grads = LstmParams::zeros(in_dim, hidden);
        layer_backward(&p, &run, &d_outputs, None, &mut grads);

        let eps = 1e-6;
        let check = |get: &dyn Fn(&LstmParams) -> f64, set: &dyn Fn(&mut LstmParams, f64), analytic: f64| {
            let mut plus = p.clone();
            set(&mut plus, get(&p) + eps);
            let mut minus = p.clone();
            set(&mut minus, get(&p) - eps);
            let numeric = (loss(&plus) - loss(&minus)) / (2.0 * eps);
            let denom = numeric.abs().max(analytic.abs()).max(1e-8);
            assert!(
                ((numeric - analytic) / denom).abs() < 1e-5,
                "numeric {numeric} vs analytic {analytic}"
            );
        };
        for idx in [(0, 0), (3, 1), (11, 0)] {
            check(
                &|p| p.w[idx],
                &|p, v| p.w[idx] = v,
                grads.w[idx],
            );
        }
        for idx in [(2, 2), (7, 0)] {
            check(&|p| p.u[idx], &|p, v| p.u[idx] = v, grads.u[idx]);
        }
        for idx in [0, 5, 11] {
            check(&|p| p.b[idx], &|p, v| p.b[idx] = v, grads.b[idx]);
        }
    }

    #[test]
    fn forward_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = LstmParams::init(3, 4, &mut rng);
        let x = vec![Array1::from_vec(vec![0.5, -0.2, 0.1])];
        let a = layer_forward(&p, &x, None);
        let b = layer_forward(&p, &x, None);
        assert_eq!(a.final_h, b.final_h);
        assert_eq!(a.final_c, b.final_c);
    }

    #[test]
    fn forget_bias_initialized_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = LstmParams::init(2, 3, &mut rng);
        for v in p.b.slice(s![3..6]) {
            assert_eq!(*v, 1.0);
        }
    }
}
