use rand::Rng;

use crate::error::{invalid, Result};

/// Index of the row of `table` (`n × d`) closest to `x` in squared Euclidean
/// distance, with the lowest index winning ties. Returns the distance too.
pub fn nearest(x: &[f32], table: &[f32], d: usize) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, row) in table.chunks_exact(d).enumerate() {
        let dist: f64 = x
            .iter()
            .zip(row)
            .map(|(&a, &b)| {
                let t = a as f64 - b as f64;
                t * t
            })
            .sum();
        if dist < best.1 {
            best = (k, dist);
        }
    }
    best
}

/// `K × d` codebook maintained by exponential moving averages.
#[derive(Clone, Debug, PartialEq)]
pub struct Codebook {
    pub size: usize,
    pub dim: usize,
    pub embeddings: Vec<f32>,
    pub ema_cluster_size: Vec<f32>,
    pub ema_embed_sum: Vec<f32>,
    /// Consecutive updates in which each code received no assignment.
    pub unused_steps: Vec<u32>,
    pub decay: f64,
    pub eps: f64,
}

/// Output of [`Codebook::quantize`].
#[derive(Clone, Debug, PartialEq)]
pub struct Quantized {
    pub tokens: Vec<u32>,
    /// Selected embeddings, row-major `rows × d`.
    pub values: Vec<f32>,
    /// Mean squared distance between each row and its code.
    pub mse: f64,
}

impl Codebook {
    /// Codes start at `embeddings` with unit cluster size, so an unassigned
    /// code keeps its value until it is reseeded.
    pub fn new(embeddings: Vec<f32>, dim: usize, decay: f64, eps: f64) -> Result<Self> {
        if dim == 0 || embeddings.is_empty() || embeddings.len() % dim != 0 {
            return invalid(format!("codebook of {} values does not split into rows of {dim}", embeddings.len()));
        }
        let size = embeddings.len() / dim;
        Ok(Self {
            size,
            dim,
            ema_cluster_size: vec![1.0; size],
            ema_embed_sum: embeddings.clone(),
            embeddings,
            unused_steps: vec![0; size],
            decay,
            eps,
        })
    }

    /// Seeds `size` codes from rows of `latents`, sampled without replacement
    /// while rows last.
    pub fn from_latents(latents: &[f32], dim: usize, size: usize, decay: f64, eps: f64, rng: &mut impl Rng) -> Result<Self> {
        let n = latents.len() / dim;
        if n == 0 {
            return invalid("cannot seed a codebook from zero latents");
        }
        let mut pool: Vec<usize> = (0..n).collect();
        let mut emb = Vec::with_capacity(size * dim);
        for k in 0..size {
            if k % n == 0 {
                for i in (1..n).rev() {
                    pool.swap(i, rng.random_range(0..=i));
                }
            }
            let r = pool[k % n];
            emb.extend_from_slice(&latents[r * dim..(r + 1) * dim]);
        }
        Self::new(emb, dim, decay, eps)
    }

    pub fn row(&self, k: usize) -> &[f32] {
        &self.embeddings[k * self.dim..(k + 1) * self.dim]
    }

    pub fn quantize(&self, latents: &[f32]) -> Result<Quantized> {
        if latents.len() % self.dim != 0 {
            return invalid(format!("latents of length {} are not rows of {}", latents.len(), self.dim));
        }
        if let Some(i) = latents.iter().position(|v| !v.is_finite()) {
            return invalid(format!("quantize: latent value {i} is not finite"));
        }
        let rows = latents.len() / self.dim;
        let mut tokens = Vec::with_capacity(rows);
        let mut values = Vec::with_capacity(latents.len());
        let mut err = 0.0;
        for z in latents.chunks_exact(self.dim) {
            let (k, dist) = nearest(z, &self.embeddings, self.dim);
            tokens.push(k as u32);
            values.extend_from_slice(self.row(k));
            err += dist;
        }
        Ok(Quantized {
            tokens,
            values,
            mse: err / latents.len().max(1) as f64,
        })
    }

    /// Maps token ids back to embedding rows.
    pub fn lookup(&self, tokens: &[u32]) -> Result<Vec<f32>> {
        let mut out = Vec::with_capacity(tokens.len() * self.dim);
        for (i, &t) in tokens.iter().enumerate() {
            if t as usize >= self.size {
                return invalid(format!("token {t} at position {i} is outside codebook of size {}", self.size));
            }
            out.extend_from_slice(self.row(t as usize));
        }
        Ok(out)
    }

    /// EMA update of cluster sizes and sums from one batch, then
    /// `embedding = sum / max(size, eps)`.
    pub fn ema_update(&mut self, latents: &[f32], assignments: &[u32]) {
        let (d, g) = (self.dim, self.decay);
        let mut counts = vec![0.0f64; self.size];
        let mut sums = vec![0.0f64; self.size * d];
        for (z, &k) in latents.chunks_exact(d).zip(assignments) {
            let k = k as usize;
            counts[k] += 1.0;
            for (s, &v) in sums[k * d..(k + 1) * d].iter_mut().zip(z) {
                *s += v as f64;
            }
        }
        for k in 0..self.size {
            let size = g * self.ema_cluster_size[k] as f64 + (1.0 - g) * counts[k];
            self.ema_cluster_size[k] = size as f32;
            let denom = (self.ema_cluster_size[k] as f64).max(self.eps);
            for j in k * d..(k + 1) * d {
                let s = g * self.ema_embed_sum[j] as f64 + (1.0 - g) * sums[j];
                self.ema_embed_sum[j] = s as f32;
                self.embeddings[j] = (self.ema_embed_sum[j] as f64 / denom) as f32;
            }
            if counts[k] == 0.0 {
                self.unused_steps[k] += 1;
            } else {
                self.unused_steps[k] = 0;
            }
        }
    }

    /// Resets every code idle for `threshold` updates to a random row of
    /// `latents`. Returns how many codes were reset.
    pub fn reinit_dead(&mut self, latents: &[f32], threshold: u32, rng: &mut impl Rng) -> usize {
        let d = self.dim;
        let n = latents.len() / d;
        if n == 0 || threshold == 0 {
            return 0;
        }
        let mut reset = 0;
        for k in 0..self.size {
            if self.unused_steps[k] < threshold {
                continue;
            }
            let r = rng.random_range(0..n);
            let z = &latents[r * d..(r + 1) * d];
            self.embeddings[k * d..(k + 1) * d].copy_from_slice(z);
            self.ema_embed_sum[k * d..(k + 1) * d].copy_from_slice(z);
            self.ema_cluster_size[k] = 1.0;
            self.unused_steps[k] = 0;
            reset += 1;
        }
        reset
    }

    /// Largest absolute deviation from `embedding = sum / max(size, eps)`;
    /// zero whenever the invariant holds.
    pub fn invariant_error(&self) -> f32 {
        let d = self.dim;
        (0..self.size)
            .flat_map(|k| {
                let denom = (self.ema_cluster_size[k] as f64).max(self.eps);
                (k * d..(k + 1) * d).map(move |j| ((self.ema_embed_sum[j] as f64 / denom) as f32 - self.embeddings[j]).abs())
            })
            .fold(0.0, f32::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_book(rng: &mut ChaCha8Rng, k: usize, d: usize) -> Codebook {
        let e = (0..k * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        Codebook::new(e, d, 0.99, 1e-5).unwrap()
    }

    #[test]
    fn exact_match_and_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let book = random_book(&mut rng, 16, 4);
        let q = book.quantize(book.row(5)).unwrap();
        assert_eq!(q.tokens, vec![5]);
        assert_eq!(q.mse, 0.0);
        let tie = Codebook::new(vec![1.0, 0.0, -1.0, 0.0], 2, 0.99, 1e-5).unwrap();
        assert_eq!(tie.quantize(&[0.0, 3.0]).unwrap().tokens, vec![0]);
        assert!(book.quantize(&[f32::NAN, 0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn matches_brute_force_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let book = random_book(&mut rng, 16, 4);
        let rows: Vec<f32> = (0..40).map(|_| rng.random_range(-1.5..1.5)).collect();
        let q = book.quantize(&rows).unwrap();
        for (i, z) in rows.chunks(4).enumerate() {
            let dists: Vec<f64> = (0..16)
                .map(|k| (0..4).map(|j| (z[j] as f64 - book.row(k)[j] as f64).powi(2)).sum())
                .collect();
            let min = dists.iter().cloned().fold(f64::INFINITY, f64::min);
            let want = dists.iter().position(|&x| x == min).unwrap();
            assert_eq!(q.tokens[i] as usize, want);
        }
    }

    #[test]
    fn zero_decay_gives_cluster_means() {
        let mut book = Codebook::new(vec![0.0, 0.0, 5.0, 5.0], 2, 0.0, 1e-5).unwrap();
        book.ema_update(&[1.0, 2.0, 3.0, 4.0], &[0, 0]);
        assert_eq!(book.row(0), &[2.0, 3.0]);
        // Code 1 got nothing: accumulators shrink to zero, embedding collapses to sum/eps = 0.
        assert_eq!(book.unused_steps, vec![0, 1]);
        assert_eq!(book.invariant_error(), 0.0);
    }

    #[test]
    fn unassigned_code_keeps_its_value() {
        let mut book = Codebook::new(vec![0.0, 0.0, 5.0, -5.0], 2, 0.99, 1e-5).unwrap();
        for _ in 0..50 {
            book.ema_update(&[1.0, 1.0], &[0]);
            assert!(book.invariant_error() == 0.0);
        }
        assert!((book.row(1)[0] - 5.0).abs() < 1e-4 && (book.row(1)[1] + 5.0).abs() < 1e-4);
        assert_eq!(book.unused_steps[1], 50);
    }

    #[test]
    fn ema_converges_to_fixed_point() {
        // Fixed assignment: code 0 always sees mean (1, 2) over 3 rows. The
        // closed-form fixed point is size → 3, sum → 3·mean, embedding → mean.
        let mut book = Codebook::new(vec![-4.0, 7.0], 2, 0.9, 1e-5).unwrap();
        let rows = [0.0, 1.0, 1.0, 2.0, 2.0, 3.0];
        for _ in 0..400 {
            book.ema_update(&rows, &[0, 0, 0]);
        }
        assert!((book.ema_cluster_size[0] - 3.0).abs() < 1e-4);
        assert!((book.row(0)[0] - 1.0).abs() < 1e-4 && (book.row(0)[1] - 2.0).abs() < 1e-4);
    }

    #[test]
    fn dead_codes_are_reseeded_from_batch() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut book = Codebook::new(vec![0.0, 0.0, 9.0, 9.0], 2, 0.99, 1e-5).unwrap();
        for _ in 0..3 {
            book.ema_update(&[0.1, 0.1], &[0]);
        }
        assert_eq!(book.reinit_dead(&[0.5, -0.5], 3, &mut rng), 1);
        assert_eq!(book.row(1), &[0.5, -0.5]);
        assert_eq!(book.unused_steps, vec![0, 0]);
        assert_eq!(book.invariant_error(), 0.0);
    }
}
