//! Complex angular central Gaussian mixture model with shared time-varying
//! class priors: one spatial mixture per frequency bin, permutation
//! alignment through the prior sharing, EM fitting with diary-informed or
//! Dirichlet initialization.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;

use crate::config::MixModelConfig;
use crate::diarize::Diary;
use crate::dsp::{Cpx, Spectrogram};
use crate::error::{Error, Result};

use super::cmat::CMat;

/// Unit-normalized stacked-channel observations, frequency-major so the
/// per-bin mixtures stream through memory.
pub struct Observations {
    pub frames: usize,
    pub bins: usize,
    pub dim: usize,
    /// `data[(k * frames + l) * dim + d]`, each (l, k) vector unit-norm.
    data: Vec<[f32; 2]>,
    /// Bins whose original vector had zero norm are skipped by the model.
    valid: Vec<bool>,
}

impl Observations {
    /// Normalize a stacked multichannel spectrogram into observation
    /// vectors.
    pub fn from_spectrogram(spec: &Spectrogram) -> Self {
        let (frames, bins, dim) = (spec.frames, spec.bins, spec.channels);
        let mut data = vec![[0.0f32; 2]; frames * bins * dim];
        let mut valid = vec![false; frames * bins];
        for l in 0..frames {
            for k in 0..bins {
                let mut norm_sq = 0.0f64;
                for d in 0..dim {
                    norm_sq += spec.frame(d, l)[k].norm_sqr();
                }
                let idx = (k * frames + l) * dim;
                if norm_sq > 0.0 {
                    let inv = 1.0 / norm_sq.sqrt();
                    for d in 0..dim {
                        let v = spec.frame(d, l)[k] * inv;
                        data[idx + d] = [v.re as f32, v.im as f32];
                    }
                    valid[k * frames + l] = true;
                }
            }
        }
        Self {
            frames,
            bins,
            dim,
            data,
            valid,
        }
    }

    #[inline]
    fn vector_into(&self, k: usize, l: usize, out: &mut [Cpx]) {
        let idx = (k * self.frames + l) * self.dim;
        for d in 0..self.dim {
            let [re, im] = self.data[idx + d];
            out[d] = Cpx::new(re as f64, im as f64);
        }
    }

    #[inline]
    fn is_valid(&self, k: usize, l: usize) -> bool {
        self.valid[k * self.frames + l]
    }
}

/// Mixture parameters: time-varying priors shared over frequency and one
/// Hermitian shape matrix per class and bin. The last class is the noise
/// class.
#[derive(Debug, Clone)]
pub struct MixtureState {
    pub classes: usize,
    pub frames: usize,
    pub bins: usize,
    pub dim: usize,
    /// `priors[l * classes + i]`.
    pub priors: Vec<f64>,
    /// `shapes[k * classes + i]`, trace-normalized to `dim`.
    pub shapes: Vec<CMat>,
    /// Total log-likelihood (up to an additive constant) per iteration.
    pub log_likelihoods: Vec<f64>,
    pub iterations_run: usize,
    dirichlet: Option<(f64, u64)>,
}

impl MixtureState {
    fn with_priors(
        priors: Vec<f64>,
        classes: usize,
        frames: usize,
        bins: usize,
        dim: usize,
    ) -> Self {
        Self {
            classes,
            frames,
            bins,
            dim,
            priors,
            shapes: vec![CMat::identity(dim); bins * classes],
            log_likelihoods: Vec::new(),
            iterations_run: 0,
            dirichlet: None,
        }
    }

    /// Diary-informed initialization: speaker activities (plus a floor) and
    /// an always-on noise class are normalized into per-frame priors; the
    /// initial posteriors equal the priors for every bin.
    pub fn init_informed(
        diary: &Diary,
        activity_floor: f64,
        frames: usize,
        bins: usize,
        dim: usize,
    ) -> Self {
        let speakers = diary.num_speakers();
        let classes = speakers + 1;
        let mut priors = vec![0.0; frames * classes];
        for l in 0..frames {
            let mut total = 0.0;
            for i in 0..speakers {
                let a = if l < diary.frames() && diary.activity[i][l] {
                    1.0
                } else {
                    0.0
                } + activity_floor;
                priors[l * classes + i] = a;
                total += a;
            }
            priors[l * classes + speakers] = 1.0;
            total += 1.0;
            for i in 0..classes {
                priors[l * classes + i] /= total;
            }
        }
        Self::with_priors(priors, classes, frames, bins, dim)
    }

    /// Uninformed initialization: the first E-step is replaced by draws
    /// from a symmetric Dirichlet, priors start uniform.
    pub fn init_dirichlet(
        classes: usize,
        alpha: f64,
        seed: u64,
        frames: usize,
        bins: usize,
        dim: usize,
    ) -> Self {
        let priors = vec![1.0 / classes as f64; frames * classes];
        let mut state = Self::with_priors(priors, classes, frames, bins, dim);
        state.dirichlet = Some((alpha, seed));
        state
    }

    /// Prior of class `i` at frame `l`.
    #[inline]
    pub fn prior(&self, l: usize, i: usize) -> f64 {
        self.priors[l * self.classes + i]
    }

    /// Class posteriors for a frame range, recomputed from the parameters:
    /// `masks[class][(l - range.start) * bins + k]`.
    pub fn posterior_masks(
        &self,
        obs: &Observations,
        range: std::ops::Range<usize>,
    ) -> Vec<Vec<f64>> {
        let span = range.len();
        let mut masks = vec![vec![0.0; span * self.bins]; self.classes];
        let mut y = vec![Cpx::new(0.0, 0.0); self.dim];
        let mut log_w = vec![0.0f64; self.classes];
        for k in 0..self.bins {
            let params: Vec<(CMat, f64)> = (0..self.classes)
                .map(|i| {
                    self.shapes[k * self.classes + i]
                        .inverse_logdet()
                        .expect("shape matrices stay positive definite")
                })
                .collect();
            for l in range.clone() {
                let rel = l - range.start;
                if !obs.is_valid(k, l) {
                    for mask in masks.iter_mut() {
                        mask[rel * self.bins + k] = 1.0 / self.classes as f64;
                    }
                    continue;
                }
                obs.vector_into(k, l, &mut y);
                for i in 0..self.classes {
                    let (inv, logdet) = &params[i];
                    let q = inv.quadratic_form(&y).max(1e-12);
                    log_w[i] =
                        self.prior(l, i).max(1e-300).ln() - logdet - self.dim as f64 * q.ln();
                }
                let max = log_w.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
                let mut total = 0.0;
                for i in 0..self.classes {
                    log_w[i] = (log_w[i] - max).exp();
                    total += log_w[i];
                }
                for i in 0..self.classes {
                    masks[i][rel * self.bins + k] = log_w[i] / total;
                }
            }
        }
        masks
    }
}

/// Run EM on the mixture: per bin, posteriors from the complex angular
/// central Gaussian densities times the shared priors; shape matrices from
/// posterior-weighted outer products scaled by the previous quadratic
/// forms; priors re-estimated per frame as the posterior average over
/// frequency. Stops early when the per-observation likelihood gain falls
/// below the configured threshold.
pub fn em_fit(
    obs: &Observations,
    mut state: MixtureState,
    cfg: &MixModelConfig,
) -> Result<MixtureState> {
    if obs.frames != state.frames || obs.bins != state.bins || obs.dim != state.dim {
        return Err(Error::Mismatch(
            "observation and state dimensions differ".into(),
        ));
    }
    let (frames, bins, dim, classes) = (state.frames, state.bins, state.dim, state.classes);
    let chunk_bins = 16;

    for iter in 0..cfg.em_iterations {
        let dirichlet = if iter == 0 { state.dirichlet } else { None };
        let priors = &state.priors;

        // Per-bin E-step and shape update; priors and likelihood reduce
        // across bins afterwards, in deterministic chunk order.
        let partials: Vec<(f64, Vec<f64>)> = state
            .shapes
            .par_chunks_mut(chunk_bins * classes)
            .enumerate()
            .map(|(chunk_idx, shapes)| {
                let k0 = chunk_idx * chunk_bins;
                let mut prior_acc = vec![0.0f64; frames * classes];
                let mut ll = 0.0f64;
                let mut y = vec![Cpx::new(0.0, 0.0); dim];
                let mut gamma = vec![0.0f64; classes];
                let mut log_w = vec![0.0f64; classes];
                let mut nums = vec![CMat::zeros(dim); classes];
                let mut dens = vec![0.0f64; classes];

                for (rel_k, shape_row) in shapes.chunks_mut(classes).enumerate() {
                    let k = k0 + rel_k;
                    let params: Vec<(CMat, f64)> = shape_row
                        .iter()
                        .map(|b| {
                            b.inverse_logdet()
                                .expect("shape matrices stay positive definite")
                        })
                        .collect();
                    for num in &mut nums {
                        num.data.iter_mut().for_each(|v| *v = Cpx::new(0.0, 0.0));
                    }
                    dens.iter_mut().for_each(|v| *v = 0.0);

                    let mut draw = dirichlet.map(|(alpha, seed)| {
                        let rng = ChaCha8Rng::seed_from_u64(
                            seed ^ (k as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15),
                        );
                        (Gamma::new(alpha, 1.0).expect("alpha > 0"), rng)
                    });

                    for l in 0..frames {
                        if !obs.is_valid(k, l) {
                            continue;
                        }
                        obs.vector_into(k, l, &mut y);
                        let mut quads = vec![0.0f64; classes];
                        for i in 0..classes {
                            let (inv, logdet) = &params[i];
                            let q = inv.quadratic_form(&y).max(1e-12);
                            quads[i] = q;
                            log_w[i] = priors[l * classes + i].max(1e-300).ln()
                                - logdet
                                - dim as f64 * q.ln();
                        }
                        let max = log_w.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
                        let mut total = 0.0;
                        for i in 0..classes {
                            gamma[i] = (log_w[i] - max).exp();
                            total += gamma[i];
                        }
                        ll += max + total.ln();
                        match &mut draw {
                            Some((dist, rng)) => {
                                // First pass of the uninformed variant:
                                // random responsibilities instead of the
                                // model's.
                                let mut t = 0.0;
                                for g in gamma.iter_mut() {
                                    *g = dist.sample(rng).max(1e-12);
                                    t += *g;
                                }
                                for g in gamma.iter_mut() {
                                    *g /= t;
                                }
                            }
                            None => {
                                for g in gamma.iter_mut() {
                                    *g /= total;
                                }
                            }
                        }
                        for i in 0..classes {
                            prior_acc[l * classes + i] += gamma[i];
                            if gamma[i] > 1e-8 {
                                nums[i].add_scaled_outer(&y, gamma[i] / quads[i]);
                                dens[i] += gamma[i];
                            }
                        }
                    }

                    // M-step for this bin's shapes: trace-normalized (the
                    // density is scale-invariant in B) and blended with a
                    // whisper of identity so rank-deficient accumulations
                    // stay positive definite. The blend is unconditional;
                    // an on/off ridge would jolt the model between
                    // iterations and break likelihood monotonicity.
                    for (i, shape) in shape_row.iter_mut().enumerate() {
                        if dens[i] <= 0.0 {
                            continue;
                        }
                        let mut b = nums[i].clone();
                        let trace = b.trace();
                        if trace > 0.0 {
                            b.scale((1.0 - cfg.shape_ridge) * dim as f64 / trace);
                        }
                        b.add_diagonal(cfg.shape_ridge);
                        if b.cholesky().is_none() {
                            b = CMat::identity(dim);
                        }
                        *shape = b;
                    }
                }
                (ll, prior_acc)
            })
            .collect();

        let mut ll = 0.0;
        let mut prior_acc = vec![0.0f64; frames * classes];
        for (part_ll, part) in &partials {
            ll += part_ll;
            for (acc, v) in prior_acc.iter_mut().zip(part) {
                *acc += v;
            }
        }
        for l in 0..frames {
            let total: f64 = (0..classes).map(|i| prior_acc[l * classes + i]).sum();
            if total > 0.0 {
                for i in 0..classes {
                    state.priors[l * classes + i] = prior_acc[l * classes + i] / total;
                }
            }
        }

        state.log_likelihoods.push(ll);
        state.iterations_run = iter + 1;
        if iter >= 1 {
            let gain = (ll - state.log_likelihoods[iter - 1])
                / (frames as f64 * bins as f64);
            if gain < cfg.em_early_stop {
                break;
            }
        }
    }
    state.dirichlet = None;
    Ok(state)
}
