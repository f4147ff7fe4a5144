use rand::Rng;

use super::activation::sigmoid;
use super::{accumulate_column_sums, xavier_uniform, Layer, Mode, Param};
use crate::gemm::gemm;
use crate::Tensor;

/// Single-layer GRU over `[S, T, F]` sequences, returning every hidden state
/// as `[S, T, H]`. The initial state is zero.
///
/// `z = σ(x Wz + h Uz + bz)`, `r = σ(x Wr + h Ur + br)`,
/// `n = tanh(x Wn + (r ⊙ h) Un + bn)`, `h' = (1 - z) ⊙ n + z ⊙ h`.
#[derive(Debug)]
pub struct Gru {
    /// `[F, 3H]`, columns ordered z, r, n.
    pub w: Param,
    /// `[H, 2H]`, columns ordered z, r.
    pub u_zr: Param,
    pub u_n: Param,
    pub b: Param,
    cache: Option<GruCache>,
}

#[derive(Debug)]
struct GruCache {
    x: Tensor,
    // indexed [t][s * H + j]
    h_prev: Vec<Vec<f32>>,
    z: Vec<Vec<f32>>,
    r: Vec<Vec<f32>>,
    n: Vec<Vec<f32>>,
    rh: Vec<Vec<f32>>,
}

impl Gru {
    pub fn new(rng: &mut impl Rng, inputs: usize, units: usize) -> Self {
        let h = units;
        Self {
            w: Param::new(&[inputs, 3 * h], xavier_uniform(rng, inputs, h, inputs * 3 * h)),
            u_zr: Param::new(&[h, 2 * h], xavier_uniform(rng, h, h, 2 * h * h)),
            u_n: Param::new(&[h, h], xavier_uniform(rng, h, h, h * h)),
            b: Param::zeros(&[3 * h]),
            cache: None,
        }
    }

    pub fn units(&self) -> usize {
        self.u_n.shape[0]
    }
}

impl Layer for Gru {
    fn kind(&self) -> &'static str {
        "gru"
    }

    fn forward(&mut self, x: &Tensor, _mode: Mode) -> Tensor {
        let [s, t, f] = *x.shape() else { panic!("gru expects [S, T, F], got {:?}", x.shape()) };
        let h = self.units();
        assert_eq!(f, self.w.shape[0], "gru input width");
        let mut a = Vec::with_capacity(s * t * 3 * h);
        for _ in 0..s * t {
            a.extend_from_slice(&self.b.value);
        }
        gemm(s * t, f, 3 * h, x.data(), false, &self.w.value, false, &mut a, 1.0);

        let mut out = vec![0.0; s * t * h];
        let mut cache = GruCache {
            x: x.clone(),
            h_prev: Vec::with_capacity(t),
            z: Vec::with_capacity(t),
            r: Vec::with_capacity(t),
            n: Vec::with_capacity(t),
            rh: Vec::with_capacity(t),
        };
        let mut hp = vec![0.0f32; s * h];
        let mut zr = vec![0.0f32; s * 2 * h];
        let mut hn = vec![0.0f32; s * h];
        for step in 0..t {
            gemm(s, h, 2 * h, &hp, false, &self.u_zr.value, false, &mut zr, 0.0);
            let (mut z, mut r) = (vec![0.0; s * h], vec![0.0; s * h]);
            for q in 0..s {
                let ar = &a[(q * t + step) * 3 * h..];
                for j in 0..h {
                    z[q * h + j] = sigmoid(ar[j] + zr[q * 2 * h + j]);
                    r[q * h + j] = sigmoid(ar[h + j] + zr[q * 2 * h + h + j]);
                }
            }
            let rh: Vec<f32> = r.iter().zip(&hp).map(|(a, b)| a * b).collect();
            gemm(s, h, h, &rh, false, &self.u_n.value, false, &mut hn, 0.0);
            let mut n = vec![0.0; s * h];
            let mut hnew = vec![0.0; s * h];
            for q in 0..s {
                let ar = &a[(q * t + step) * 3 * h..];
                for j in 0..h {
                    let i = q * h + j;
                    n[i] = (ar[2 * h + j] + hn[i]).tanh();
                    hnew[i] = (1.0 - z[i]) * n[i] + z[i] * hp[i];
                }
                out[(q * t + step) * h..(q * t + step + 1) * h].copy_from_slice(&hnew[q * h..(q + 1) * h]);
            }
            cache.h_prev.push(std::mem::replace(&mut hp, hnew));
            cache.z.push(z);
            cache.r.push(r);
            cache.n.push(n);
            cache.rh.push(rh);
        }
        self.cache = Some(cache);
        Tensor::from_vec(&[s, t, h], out)
    }

    fn backward(&mut self, grad: &Tensor) -> Tensor {
        let c = self.cache.as_ref().expect("backward before forward");
        let [s, t, f] = *c.x.shape() else { unreachable!() };
        let h = self.units();
        let mut da = vec![0.0f32; s * t * 3 * h];
        let mut carry = vec![0.0f32; s * h];
        let mut dan = vec![0.0f32; s * h];
        let mut dzr = vec![0.0f32; s * 2 * h];
        let mut drh = vec![0.0f32; s * h];
        for step in (0..t).rev() {
            let (hp, z, r, n) = (&c.h_prev[step], &c.z[step], &c.r[step], &c.n[step]);
            let mut dh_prev = vec![0.0f32; s * h];
            let mut dz = vec![0.0f32; s * h];
            for q in 0..s {
                let g = &grad.data()[(q * t + step) * h..(q * t + step + 1) * h];
                for j in 0..h {
                    let i = q * h + j;
                    let dh = g[j] + carry[i];
                    dan[i] = dh * (1.0 - z[i]) * (1.0 - n[i] * n[i]);
                    dz[i] = dh * (hp[i] - n[i]);
                    dh_prev[i] = dh * z[i];
                }
            }
            gemm(s, h, h, &dan, false, &self.u_n.value, true, &mut drh, 0.0);
            gemm(h, s, h, &c.rh[step], true, &dan, false, &mut self.u_n.grad, 1.0);
            for q in 0..s {
                for j in 0..h {
                    let i = q * h + j;
                    let dr = drh[i] * hp[i];
                    dh_prev[i] += drh[i] * r[i];
                    dzr[q * 2 * h + j] = dz[i] * z[i] * (1.0 - z[i]);
                    dzr[q * 2 * h + h + j] = dr * r[i] * (1.0 - r[i]);
                }
            }
            gemm(h, s, 2 * h, hp, true, &dzr, false, &mut self.u_zr.grad, 1.0);
            gemm(s, 2 * h, h, &dzr, false, &self.u_zr.value, true, &mut dh_prev, 1.0);
            for q in 0..s {
                let row = &mut da[(q * t + step) * 3 * h..(q * t + step + 1) * 3 * h];
                row[..2 * h].copy_from_slice(&dzr[q * 2 * h..(q + 1) * 2 * h]);
                row[2 * h..].copy_from_slice(&dan[q * h..(q + 1) * h]);
            }
            carry = dh_prev;
        }
        accumulate_column_sums(&mut self.b.grad, &da, 3 * h);
        gemm(f, s * t, 3 * h, c.x.data(), true, &da, false, &mut self.w.grad, 1.0);
        let mut dx = vec![0.0; s * t * f];
        gemm(s * t, 3 * h, f, &da, false, &self.w.value, true, &mut dx, 0.0);
        Tensor::from_vec(&[s, t, f], dx)
    }

    fn visit_params(&self, f: &mut dyn FnMut(&str, &Param)) {
        f("w", &self.w);
        f("u_zr", &self.u_zr);
        f("u_n", &self.u_n);
        f("b", &self.b);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&str, &mut Param)) {
        f("w", &mut self.w);
        f("u_zr", &mut self.u_zr);
        f("u_n", &mut self.u_n);
        f("b", &mut self.b);
    }
}
