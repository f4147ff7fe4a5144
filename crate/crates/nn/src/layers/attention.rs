use rand::Rng;

use super::activation::softmax_in_place;
use super::{accumulate_column_sums, xavier_uniform, Layer, Mode, Param};
use crate::gemm::gemm;
use crate::Tensor;

/// Additive attention over a trailing window of recurrent states.
///
/// For input `[S, T, H]`, each state gets a score `e_j = v · tanh(h_j W + b)`.
/// At step `t` the context `c_t` is the softmax-weighted sum of the states
/// `max(0, t - L + 1) ..= t` of the same sequence, and the output is
/// `[h_t, c_t]` of width `2H`.
#[derive(Debug)]
pub struct Attention {
    pub w: Param,
    pub b: Param,
    pub v: Param,
    length: usize,
    cache: Option<AttnCache>,
}

#[derive(Debug)]
struct AttnCache {
    x: Tensor,
    u: Vec<f32>,
    // per (s, t): weights over the window, oldest first
    alpha: Vec<Vec<f32>>,
}

impl Attention {
    pub fn new(rng: &mut impl Rng, width: usize, score_units: usize, length: usize) -> Self {
        assert!(length > 0, "attention length must be positive");
        Self {
            w: Param::new(&[width, score_units], xavier_uniform(rng, width, score_units, width * score_units)),
            b: Param::zeros(&[score_units]),
            v: Param::new(&[score_units], xavier_uniform(rng, score_units, 1, score_units)),
            length,
            cache: None,
        }
    }

    pub fn length(&self) -> usize {
        self.length
    }

    fn window(&self, t: usize) -> usize {
        (t + 1).saturating_sub(self.length)
    }
}

impl Layer for Attention {
    fn kind(&self) -> &'static str {
        "attention"
    }

    fn forward(&mut self, x: &Tensor, _mode: Mode) -> Tensor {
        let [s, t, h] = *x.shape() else { panic!("attention expects [S, T, H], got {:?}", x.shape()) };
        let a = self.w.shape[1];
        let mut u = Vec::with_capacity(s * t * a);
        for _ in 0..s * t {
            u.extend_from_slice(&self.b.value);
        }
        gemm(s * t, h, a, x.data(), false, &self.w.value, false, &mut u, 1.0);
        u.iter_mut().for_each(|v| *v = v.tanh());
        let e: Vec<f32> = u
            .chunks_exact(a)
            .map(|row| row.iter().zip(&self.v.value).map(|(p, q)| p * q).sum())
            .collect();
        let xd = x.data();
        let mut out = Vec::with_capacity(s * t * 2 * h);
        let mut alpha = Vec::with_capacity(s * t);
        for q in 0..s {
            for step in 0..t {
                let lo = self.window(step);
                let mut wts: Vec<f32> = (lo..=step).map(|j| e[q * t + j]).collect();
                softmax_in_place(&mut wts);
                out.extend_from_slice(&xd[(q * t + step) * h..(q * t + step + 1) * h]);
                let mut ctx = vec![0.0f32; h];
                for (k, j) in (lo..=step).enumerate() {
                    let hj = &xd[(q * t + j) * h..(q * t + j + 1) * h];
                    for (c, v) in ctx.iter_mut().zip(hj) {
                        *c += wts[k] * v;
                    }
                }
                out.extend_from_slice(&ctx);
                alpha.push(wts);
            }
        }
        self.cache = Some(AttnCache { x: x.clone(), u, alpha });
        Tensor::from_vec(&[s, t, 2 * h], out)
    }

    fn backward(&mut self, grad: &Tensor) -> Tensor {
        let c = self.cache.as_ref().expect("backward before forward");
        let [s, t, h] = *c.x.shape() else { unreachable!() };
        let a = self.w.shape[1];
        let xd = c.x.data();
        let g = grad.data();
        let mut dx = vec![0.0f32; s * t * h];
        let mut de = vec![0.0f32; s * t];
        for q in 0..s {
            for step in 0..t {
                let row = &g[(q * t + step) * 2 * h..(q * t + step + 1) * 2 * h];
                let (dh, dc) = row.split_at(h);
                for (d, v) in dx[(q * t + step) * h..(q * t + step + 1) * h].iter_mut().zip(dh) {
                    *d += v;
                }
                let lo = self.window(step);
                let wts = &c.alpha[q * t + step];
                let dalpha: Vec<f32> = (lo..=step)
                    .map(|j| {
                        let hj = &xd[(q * t + j) * h..(q * t + j + 1) * h];
                        hj.iter().zip(dc).map(|(p, r)| p * r).sum()
                    })
                    .collect();
                let dot: f32 = wts.iter().zip(&dalpha).map(|(p, r)| p * r).sum();
                for (k, j) in (lo..=step).enumerate() {
                    de[q * t + j] += wts[k] * (dalpha[k] - dot);
                    for (d, v) in dx[(q * t + j) * h..(q * t + j + 1) * h].iter_mut().zip(dc) {
                        *d += wts[k] * v;
                    }
                }
            }
        }
        let mut dpre = vec![0.0f32; s * t * a];
        for (i, (ur, dr)) in c.u.chunks_exact(a).zip(dpre.chunks_exact_mut(a)).enumerate() {
            for k in 0..a {
                self.v.grad[k] += de[i] * ur[k];
                dr[k] = de[i] * self.v.value[k] * (1.0 - ur[k] * ur[k]);
            }
        }
        accumulate_column_sums(&mut self.b.grad, &dpre, a);
        gemm(h, s * t, a, xd, true, &dpre, false, &mut self.w.grad, 1.0);
        gemm(s * t, a, h, &dpre, false, &self.w.value, true, &mut dx, 1.0);
        Tensor::from_vec(&[s, t, h], dx)
    }

    fn visit_params(&self, f: &mut dyn FnMut(&str, &Param)) {
        f("w", &self.w);
        f("b", &self.b);
        f("v", &self.v);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&str, &mut Param)) {
        f("w", &mut self.w);
        f("b", &mut self.b);
        f("v", &mut self.v);
    }
}
