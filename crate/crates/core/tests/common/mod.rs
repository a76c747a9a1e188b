//! Independent float reference implementations shared by the integration tests.
#![allow(dead_code, clippy::needless_range_loop)]

pub mod float_mlp {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Plain f64 MLP: relu hidden layers, softmax cross-entropy output.
    #[derive(Clone, Debug)]
    pub struct Mlp {
        /// `w[l][r][c]`, out x in.
        pub w: Vec<Vec<Vec<f64>>>,
        pub b: Vec<Vec<f64>>,
    }

    impl Mlp {
        pub fn forward(&self, x: &[f64]) -> Vec<Vec<f64>> {
            let mut acts = vec![x.to_vec()];
            let n = self.w.len();
            for l in 0..n {
                let a = acts.last().unwrap();
                let z: Vec<f64> = self.w[l]
                    .iter()
                    .zip(&self.b[l])
                    .map(|(row, b)| row.iter().zip(a).map(|(w, x)| w * x).sum::<f64>() + b)
                    .collect();
                acts.push(if l + 1 == n { z } else { z.into_iter().map(|v| v.max(0.0)).collect() });
            }
            acts
        }

        pub fn loss(&self, x: &[f64], y: usize) -> f64 {
            let out = self.forward(x).pop().unwrap();
            let m = out.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + out.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            lse - out[y]
        }

        /// Gradients of the loss for one sample.
        pub fn grads(&self, x: &[f64], y: usize) -> (Vec<Vec<Vec<f64>>>, Vec<Vec<f64>>) {
            let acts = self.forward(x);
            let n = self.w.len();
            let out = &acts[n];
            let m = out.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = out.iter().map(|v| (v - m).exp()).collect();
            let s: f64 = e.iter().sum();
            let mut delta: Vec<f64> = e.iter().map(|v| v / s).collect();
            delta[y] -= 1.0;
            let mut gw = vec![Vec::new(); n];
            let mut gb = vec![Vec::new(); n];
            for l in (0..n).rev() {
                gw[l] = delta.iter().map(|d| acts[l].iter().map(|a| d * a).collect()).collect();
                gb[l] = delta.clone();
                if l > 0 {
                    let mut prev = vec![0.0; acts[l].len()];
                    for (r, d) in delta.iter().enumerate() {
                        for (c, p) in prev.iter_mut().enumerate() {
                            *p += self.w[l][r][c] * d;
                        }
                    }
                    delta = prev.iter().zip(&acts[l]).map(|(p, a)| if *a > 0.0 { *p } else { 0.0 }).collect();
                }
            }
            (gw, gb)
        }

        pub fn accuracy(&self, xs: &[Vec<f64>], ys: &[usize]) -> f64 {
            let hits = xs
                .iter()
                .zip(ys)
                .filter(|(x, &y)| {
                    let out = self.forward(x).pop().unwrap();
                    let best = (0..out.len()).fold(0, |b, i| if out[i] > out[b] { i } else { b });
                    best == y
                })
                .count();
            hits as f64 / ys.len() as f64
        }

        /// Mini-batch SGD; returns mean training loss per epoch.
        pub fn train(&mut self, xs: &[Vec<f64>], ys: &[usize], lr: f64, epochs: usize, batch: usize, seed: u64) -> Vec<f64> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut order: Vec<usize> = (0..xs.len()).collect();
            let mut losses = Vec::new();
            for _ in 0..epochs {
                order.shuffle(&mut rng);
                let mut total = 0.0;
                for chunk in order.chunks(batch) {
                    let mut sw: Vec<Vec<Vec<f64>>> = self.w.iter().map(|l| l.iter().map(|r| vec![0.0; r.len()]).collect()).collect();
                    let mut sb: Vec<Vec<f64>> = self.b.iter().map(|b| vec![0.0; b.len()]).collect();
                    for &i in chunk {
                        total += self.loss(&xs[i], ys[i]);
                        let (gw, gb) = self.grads(&xs[i], ys[i]);
                        for l in 0..sw.len() {
                            for r in 0..sw[l].len() {
                                for c in 0..sw[l][r].len() {
                                    sw[l][r][c] += gw[l][r][c];
                                }
                                sb[l][r] += gb[l][r];
                            }
                        }
                    }
                    let k = lr / chunk.len() as f64;
                    for l in 0..sw.len() {
                        for r in 0..sw[l].len() {
                            for c in 0..sw[l][r].len() {
                                self.w[l][r][c] -= k * sw[l][r][c];
                            }
                            self.b[l][r] -= k * sb[l][r];
                        }
                    }
                }
                losses.push(total / xs.len() as f64);
            }
            losses
        }
    }
}

/// Exact output distribution of a small GLM spiking network by enumerating
/// every output raster.
pub mod glm_enum {
    /// Parameters laid out as `w[unit][source]` row-major then `b[unit]`,
    /// sources being the inputs followed by the units.
    pub struct Glm {
        pub n_in: usize,
        pub n_units: usize,
        pub t: usize,
        pub alpha: Vec<f64>,
        pub beta: Vec<f64>,
        pub params: Vec<f64>,
    }

    fn trace(k: &[f64], s: &[bool], t: usize) -> f64 {
        let mut acc = 0.0;
        for lag in 1..=k.len() {
            if lag <= t && s[t - lag] {
                acc += k[lag - 1];
            }
        }
        acc
    }

    impl Glm {
        fn w(&self, i: usize, j: usize) -> f64 {
            self.params[i * (self.n_in + self.n_units) + j]
        }

        fn b(&self, i: usize) -> f64 {
            self.params[self.n_units * (self.n_in + self.n_units) + i]
        }

        /// Output raster number `code`: bit `i * t + step`.
        pub fn raster(&self, code: usize) -> Vec<Vec<bool>> {
            (0..self.n_units)
                .map(|i| (0..self.t).map(|s| code >> (i * self.t + s) & 1 == 1).collect())
                .collect()
        }

        pub fn n_outcomes(&self) -> usize {
            1 << (self.n_units * self.t)
        }

        pub fn prob(&self, x: &[Vec<bool>], y: &[Vec<bool>]) -> f64 {
            let mut p = 1.0;
            for s in 0..self.t {
                for i in 0..self.n_units {
                    let mut u = self.b(i) + trace(&self.beta, &y[i], s);
                    for j in 0..self.n_in {
                        u += self.w(i, j) * trace(&self.alpha, &x[j], s);
                    }
                    for k in 0..self.n_units {
                        if k != i {
                            u += self.w(i, self.n_in + k) * trace(&self.alpha, &y[k], s);
                        }
                    }
                    let q = 1.0 / (1.0 + (-u).exp());
                    p *= if y[i][s] { q } else { 1.0 - q };
                }
            }
            p
        }

        pub fn expectation(&self, x: &[Vec<bool>], f: &dyn Fn(&[Vec<bool>]) -> f64) -> f64 {
            (0..self.n_outcomes())
                .map(|c| {
                    let y = self.raster(c);
                    self.prob(x, &y) * f(&y)
                })
                .sum()
        }

        /// Central differences of an arbitrary function of the parameters.
        pub fn fd_grad(&mut self, h: f64, g: &dyn Fn(&Self) -> f64) -> Vec<f64> {
            (0..self.params.len())
                .map(|k| {
                    let p0 = self.params[k];
                    self.params[k] = p0 + h;
                    let up = g(self);
                    self.params[k] = p0 - h;
                    let dn = g(self);
                    self.params[k] = p0;
                    (up - dn) / (2.0 * h)
                })
                .collect()
        }
    }
}

/// Textbook AMP with soft thresholding on a dense float matrix.
pub mod float_amp {
    fn matvec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
        a.iter().map(|row| row.iter().zip(x).map(|(p, q)| p * q).sum()).collect()
    }

    fn matvec_t(a: &[Vec<f64>], z: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; a[0].len()];
        for (row, zi) in a.iter().zip(z) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v * zi;
            }
        }
        out
    }

    pub fn nmse_db(x: &[f64], xh: &[f64]) -> f64 {
        let num: f64 = x.iter().zip(xh).map(|(a, b)| (a - b).powi(2)).sum();
        let den: f64 = x.iter().map(|a| a * a).sum();
        10.0 * (num / den).log10()
    }

    /// NMSE in dB after each iteration; `lambda` scales `||z|| / sqrt(m)`.
    pub fn amp(a: &[Vec<f64>], y: &[f64], x_true: &[f64], lambda: f64, iters: usize) -> Vec<f64> {
        let m = a.len() as f64;
        let mut x = vec![0.0; a[0].len()];
        let mut z = y.to_vec();
        let mut out = Vec::with_capacity(iters);
        for _ in 0..iters {
            let theta = lambda * z.iter().map(|v| v * v).sum::<f64>().sqrt() / m.sqrt();
            let r: Vec<f64> = x.iter().zip(matvec_t(a, &z)).map(|(xi, g)| xi + g).collect();
            let support = r.iter().filter(|v| v.abs() > theta).count() as f64;
            x = r.iter().map(|v| v.signum() * (v.abs() - theta).max(0.0)).collect();
            let ax = matvec(a, &x);
            z = y.iter().zip(&ax).zip(&z).map(|((yi, axi), zi)| yi - axi + support / m * zi).collect();
            out.push(nmse_db(x_true, &x));
        }
        out
    }

    pub fn measure(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
        matvec(a, x)
    }
}
