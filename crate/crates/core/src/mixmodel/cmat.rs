//! Dense complex Hermitian matrices of small dimension (stacked-channel
//! covariances and mixture shape matrices).

use crate::dsp::Cpx;

/// Row-major complex square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CMat {
    pub dim: usize,
    pub data: Vec<Cpx>,
}

impl CMat {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![Cpx::new(0.0, 0.0); dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = Cpx::new(1.0, 0.0);
        }
        m
    }

    /// Accumulate `weight * v v^H`.
    pub fn add_scaled_outer(&mut self, v: &[Cpx], weight: f64) {
        debug_assert_eq!(v.len(), self.dim);
        for i in 0..self.dim {
            let vi = v[i] * weight;
            let row = i * self.dim;
            for j in 0..self.dim {
                self.data[row + j] += vi * v[j].conj();
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for v in &mut self.data {
            *v *= factor;
        }
    }

    pub fn add_diagonal(&mut self, value: f64) {
        for i in 0..self.dim {
            self.data[i * self.dim + i] += Cpx::new(value, 0.0);
        }
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.data[i * self.dim + i].re).sum()
    }

    /// Hermitian quadratic form `y^H A y` (real for Hermitian A).
    pub fn quadratic_form(&self, y: &[Cpx]) -> f64 {
        debug_assert_eq!(y.len(), self.dim);
        let mut acc = 0.0;
        for i in 0..self.dim {
            let row = i * self.dim;
            acc += self.data[row + i].re * y[i].norm_sqr();
            let mut cross = Cpx::new(0.0, 0.0);
            for j in (i + 1)..self.dim {
                cross += self.data[row + j] * y[j];
            }
            let c = y[i].conj() * cross;
            acc += 2.0 * c.re;
        }
        acc
    }

    /// Matrix-vector product.
    pub fn mul_vec(&self, y: &[Cpx]) -> Vec<Cpx> {
        let mut out = vec![Cpx::new(0.0, 0.0); self.dim];
        for i in 0..self.dim {
            let row = i * self.dim;
            let mut acc = Cpx::new(0.0, 0.0);
            for j in 0..self.dim {
                acc += self.data[row + j] * y[j];
            }
            out[i] = acc;
        }
        out
    }

    /// Matrix product.
    pub fn mul_mat(&self, other: &CMat) -> CMat {
        let d = self.dim;
        let mut out = CMat::zeros(d);
        for i in 0..d {
            for k in 0..d {
                let a = self.data[i * d + k];
                if a.norm_sqr() == 0.0 {
                    continue;
                }
                for j in 0..d {
                    out.data[i * d + j] += a * other.data[k * d + j];
                }
            }
        }
        out
    }

    /// Cholesky factor L with `A = L L^H`; fails when not positive definite.
    pub fn cholesky(&self) -> Option<CMat> {
        let d = self.dim;
        let mut l = CMat::zeros(d);
        for j in 0..d {
            let mut diag = self.data[j * d + j].re;
            for k in 0..j {
                diag -= l.data[j * d + k].norm_sqr();
            }
            if diag <= 0.0 || !diag.is_finite() {
                return None;
            }
            let diag = diag.sqrt();
            l.data[j * d + j] = Cpx::new(diag, 0.0);
            for i in (j + 1)..d {
                let mut acc = self.data[i * d + j];
                for k in 0..j {
                    acc -= l.data[i * d + k] * l.data[j * d + k].conj();
                }
                l.data[i * d + j] = acc / diag;
            }
        }
        Some(l)
    }

    /// Inverse and log-determinant via Cholesky; `None` when not PD.
    pub fn inverse_logdet(&self) -> Option<(CMat, f64)> {
        let l = self.cholesky()?;
        let d = self.dim;
        let logdet = 2.0 * (0..d).map(|i| l.data[i * d + i].re.ln()).sum::<f64>();

        // Solve L Z = I (forward), then L^H X = Z (backward).
        let mut inv = CMat::zeros(d);
        for col in 0..d {
            let mut z = vec![Cpx::new(0.0, 0.0); d];
            for i in 0..d {
                let mut acc = if i == col {
                    Cpx::new(1.0, 0.0)
                } else {
                    Cpx::new(0.0, 0.0)
                };
                for k in 0..i {
                    acc -= l.data[i * d + k] * z[k];
                }
                z[i] = acc / l.data[i * d + i].re;
            }
            for i in (0..d).rev() {
                let mut acc = z[i];
                for k in (i + 1)..d {
                    // (L^H)[i][k] = conj(L[k][i])
                    acc -= l.data[k * d + i].conj() * inv.data[k * d + col];
                }
                inv.data[i * d + col] = acc / l.data[i * d + i].re;
            }
        }
        Some((inv, logdet))
    }
}

impl std::ops::Index<(usize, usize)> for CMat {
    type Output = Cpx;
    fn index(&self, (i, j): (usize, usize)) -> &Cpx {
        &self.data[i * self.dim + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for CMat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Cpx {
        &mut self.data[i * self.dim + j]
    }
}
