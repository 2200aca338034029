//! Linear-chain CRF head for term extraction: log-space forward
//! algorithm, Viterbi decoding, and NLL gradients via forward-backward
//! marginals.

use crate::rng::Rng;

fn logsumexp(xs: &[f64]) -> f64 {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Transition scores plus start/end potentials and the projection from
/// encoder states to per-label emissions.
#[derive(Debug, Clone)]
pub struct CrfLayer {
    pub n_labels: usize,
    pub d_model: usize,
    /// `d_model x n_labels`
    pub emission_w: Vec<f64>,
    pub emission_b: Vec<f64>,
    /// `n_labels x n_labels`, indexed `[from * n_labels + to]`
    pub transition: Vec<f64>,
    pub start: Vec<f64>,
    pub end: Vec<f64>,
}

/// Gradient mirror of [`CrfLayer`].
#[derive(Debug, Clone)]
pub struct CrfGrads {
    pub emission_w: Vec<f64>,
    pub emission_b: Vec<f64>,
    pub transition: Vec<f64>,
    pub start: Vec<f64>,
    pub end: Vec<f64>,
}

impl CrfLayer {
    pub fn init(d_model: usize, n_labels: usize, rng: &mut Rng) -> CrfLayer {
        CrfLayer {
            n_labels,
            d_model,
            emission_w: (0..d_model * n_labels)
                .map(|_| 0.02 * rng.next_gaussian())
                .collect(),
            emission_b: vec![0.0; n_labels],
            transition: (0..n_labels * n_labels)
                .map(|_| 0.02 * rng.next_gaussian())
                .collect(),
            start: vec![0.0; n_labels],
            end: vec![0.0; n_labels],
        }
    }

    pub fn grads(&self) -> CrfGrads {
        CrfGrads {
            emission_w: vec![0.0; self.emission_w.len()],
            emission_b: vec![0.0; self.emission_b.len()],
            transition: vec![0.0; self.transition.len()],
            start: vec![0.0; self.start.len()],
            end: vec![0.0; self.end.len()],
        }
    }

    /// Per-position label scores from encoder hidden states.
    pub fn emissions(&self, hidden: &[f64], n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n * self.n_labels];
        for t in 0..n {
            let h = &hidden[t * self.d_model..(t + 1) * self.d_model];
            let row = &mut out[t * self.n_labels..(t + 1) * self.n_labels];
            row.copy_from_slice(&self.emission_b);
            for (i, &hi) in h.iter().enumerate() {
                let w = &self.emission_w[i * self.n_labels..(i + 1) * self.n_labels];
                for y in 0..self.n_labels {
                    row[y] += hi * w[y];
                }
            }
        }
        out
    }

    pub fn path_score(&self, emissions: &[f64], labels: &[usize]) -> f64 {
        let l = self.n_labels;
        let n = labels.len();
        let mut score = self.start[labels[0]] + emissions[labels[0]];
        for t in 1..n {
            score += self.transition[labels[t - 1] * l + labels[t]] + emissions[t * l + labels[t]];
        }
        score + self.end[labels[n - 1]]
    }

    /// log sum over all label paths of exp(path score), in log space.
    pub fn log_partition(&self, emissions: &[f64]) -> f64 {
        let l = self.n_labels;
        let n = emissions.len() / l;
        assert!(n >= 1);
        let mut alpha: Vec<f64> = (0..l).map(|y| self.start[y] + emissions[y]).collect();
        let mut scratch = vec![0.0; l];
        for t in 1..n {
            let mut next = vec![0.0; l];
            for y in 0..l {
                for (prev, s) in scratch.iter_mut().enumerate() {
                    *s = alpha[prev] + self.transition[prev * l + y];
                }
                next[y] = logsumexp(&scratch) + emissions[t * l + y];
            }
            alpha = next;
        }
        let finals: Vec<f64> = (0..l).map(|y| alpha[y] + self.end[y]).collect();
        logsumexp(&finals)
    }

    /// Best label path and its score. Ties resolve to the lowest label
    /// index, scanning from the sequence end backwards.
    pub fn viterbi(&self, emissions: &[f64]) -> (Vec<usize>, f64) {
        let l = self.n_labels;
        let n = emissions.len() / l;
        assert!(n >= 1);
        let mut score: Vec<f64> = (0..l).map(|y| self.start[y] + emissions[y]).collect();
        let mut backptr = vec![vec![0usize; l]; n];
        for t in 1..n {
            let mut next = vec![f64::NEG_INFINITY; l];
            for y in 0..l {
                let mut best = f64::NEG_INFINITY;
                let mut best_prev = 0;
                for prev in 0..l {
                    let s = score[prev] + self.transition[prev * l + y];
                    if s > best {
                        best = s;
                        best_prev = prev;
                    }
                }
                next[y] = best + emissions[t * l + y];
                backptr[t][y] = best_prev;
            }
            score = next;
        }
        let mut best_final = 0;
        let mut best_score = f64::NEG_INFINITY;
        for y in 0..l {
            let s = score[y] + self.end[y];
            if s > best_score {
                best_score = s;
                best_final = y;
            }
        }
        let mut path = vec![best_final];
        for t in (1..n).rev() {
            path.push(backptr[t][*path.last().unwrap()]);
        }
        path.reverse();
        (path, best_score)
    }

    /// Negative log-likelihood of the gold path plus its gradient with
    /// respect to the emissions and the CRF potentials (forward-backward
    /// marginals minus gold indicators).
    pub fn nll(
        &self,
        emissions: &[f64],
        labels: &[usize],
        grads: &mut CrfGrads,
        d_emissions: &mut [f64],
    ) -> f64 {
        let l = self.n_labels;
        let n = labels.len();
        debug_assert_eq!(emissions.len(), n * l);

        // Forward.
        let mut alpha = vec![0.0; n * l];
        for y in 0..l {
            alpha[y] = self.start[y] + emissions[y];
        }
        let mut scratch = vec![0.0; l];
        for t in 1..n {
            for y in 0..l {
                for (prev, s) in scratch.iter_mut().enumerate() {
                    *s = alpha[(t - 1) * l + prev] + self.transition[prev * l + y];
                }
                alpha[t * l + y] = logsumexp(&scratch) + emissions[t * l + y];
            }
        }
        let finals: Vec<f64> = (0..l)
            .map(|y| alpha[(n - 1) * l + y] + self.end[y])
            .collect();
        let log_z = logsumexp(&finals);

        // Backward.
        let mut beta = vec![0.0; n * l];
        for y in 0..l {
            beta[(n - 1) * l + y] = self.end[y];
        }
        for t in (0..n - 1).rev() {
            for y in 0..l {
                for (next, s) in scratch.iter_mut().enumerate() {
                    *s = self.transition[y * l + next]
                        + emissions[(t + 1) * l + next]
                        + beta[(t + 1) * l + next];
                }
                beta[t * l + y] = logsumexp(&scratch);
            }
        }

        // Unary marginals into emission/start/end grads.
        for t in 0..n {
            for y in 0..l {
                let marginal = (alpha[t * l + y] + beta[t * l + y] - log_z).exp();
                let gold = (labels[t] == y) as usize as f64;
                d_emissions[t * l + y] += marginal - gold;
                if t == 0 {
                    grads.start[y] += marginal - gold;
                }
                if t == n - 1 {
                    grads.end[y] += marginal - gold;
                }
            }
        }
        // Pairwise marginals into transition grads.
        for t in 0..n - 1 {
            for i in 0..l {
                for j in 0..l {
                    let marginal = (alpha[t * l + i]
                        + self.transition[i * l + j]
                        + emissions[(t + 1) * l + j]
                        + beta[(t + 1) * l + j]
                        - log_z)
                        .exp();
                    let gold = (labels[t] == i && labels[t + 1] == j) as usize as f64;
                    grads.transition[i * l + j] += marginal - gold;
                }
            }
        }

        log_z - self.path_score(emissions, labels)
    }

    /// Push emission gradients into the projection and return the
    /// gradient on the encoder hidden states.
    pub fn emission_backward(
        &self,
        hidden: &[f64],
        d_emissions: &[f64],
        n: usize,
        grads: &mut CrfGrads,
    ) -> Vec<f64> {
        let l = self.n_labels;
        let d = self.d_model;
        let mut d_hidden = vec![0.0; n * d];
        for t in 0..n {
            let h = &hidden[t * d..(t + 1) * d];
            let de = &d_emissions[t * l..(t + 1) * l];
            for y in 0..l {
                grads.emission_b[y] += de[y];
            }
            for i in 0..d {
                let w = &self.emission_w[i * l..(i + 1) * l];
                let gw = &mut grads.emission_w[i * l..(i + 1) * l];
                let mut acc = 0.0;
                for y in 0..l {
                    gw[y] += h[i] * de[y];
                    acc += w[y] * de[y];
                }
                d_hidden[t * d + i] = acc;
            }
        }
        d_hidden
    }
}
