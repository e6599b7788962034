//! Linear-chain CRF: log-space forward algorithm, exact gradients from
//! forward-backward marginals, and Viterbi decoding.
//!
//! `transitions[i * K + j]` scores moving from label `i` to label `j`.

use rand::Rng;

use crate::autograd::{log_sum_exp, Init, ParamId, ParamStore, Tape, Var};
use crate::error::{Error, Result};

/// Plain-value CRF scores.
#[derive(Clone, Debug, PartialEq)]
pub struct CrfParams {
    pub labels: usize,
    pub transitions: Vec<f64>,
    pub start: Vec<f64>,
    pub end: Vec<f64>,
}

impl CrfParams {
    pub fn zeros(labels: usize) -> Self {
        Self {
            labels,
            transitions: vec![0.0; labels * labels],
            start: vec![0.0; labels],
            end: vec![0.0; labels],
        }
    }

    fn check(&self, emissions: &[f64], steps: usize) -> Result<()> {
        let k = self.labels;
        if steps == 0 || emissions.len() != steps * k || self.transitions.len() != k * k || self.start.len() != k || self.end.len() != k {
            return Err(Error::shape(
                "crf",
                &[&[steps, k], &[emissions.len()], &[self.transitions.len()]],
            ));
        }
        Ok(())
    }

    /// Score of one label path.
    pub fn path_score(&self, emissions: &[f64], path: &[usize]) -> f64 {
        let k = self.labels;
        let mut s = self.start[path[0]] + self.end[path[path.len() - 1]];
        for (t, &y) in path.iter().enumerate() {
            s += emissions[t * k + y];
            if t > 0 {
                s += self.transitions[path[t - 1] * k + y];
            }
        }
        s
    }

    /// Forward log-potentials `alpha[t * K + j]` and the log partition.
    fn forward(&self, emissions: &[f64], steps: usize) -> (Vec<f64>, f64) {
        let k = self.labels;
        let mut alpha = vec![0.0; steps * k];
        for j in 0..k {
            alpha[j] = self.start[j] + emissions[j];
        }
        let mut scratch = vec![0.0; k];
        for t in 1..steps {
            for j in 0..k {
                for i in 0..k {
                    scratch[i] = alpha[(t - 1) * k + i] + self.transitions[i * k + j];
                }
                alpha[t * k + j] = log_sum_exp(&scratch) + emissions[t * k + j];
            }
        }
        for j in 0..k {
            scratch[j] = alpha[(steps - 1) * k + j] + self.end[j];
        }
        (alpha, log_sum_exp(&scratch))
    }

    fn backward(&self, emissions: &[f64], steps: usize) -> Vec<f64> {
        let k = self.labels;
        let mut beta = vec![0.0; steps * k];
        beta[(steps - 1) * k..].copy_from_slice(&self.end);
        let mut scratch = vec![0.0; k];
        for t in (0..steps - 1).rev() {
            for i in 0..k {
                for j in 0..k {
                    scratch[j] = self.transitions[i * k + j] + emissions[(t + 1) * k + j] + beta[(t + 1) * k + j];
                }
                beta[t * k + i] = log_sum_exp(&scratch);
            }
        }
        beta
    }

    pub fn log_partition(&self, emissions: &[f64], steps: usize) -> Result<f64> {
        self.check(emissions, steps)?;
        Ok(self.forward(emissions, steps).1)
    }

    /// Negative log-likelihood of `gold`.
    pub fn nll(&self, emissions: &[f64], gold: &[usize]) -> Result<f64> {
        self.check(emissions, gold.len())?;
        if gold.iter().any(|&g| g >= self.labels) {
            return Err(Error::contract("crf: gold label out of range"));
        }
        Ok(self.forward(emissions, gold.len()).1 - self.path_score(emissions, gold))
    }

    /// Highest-scoring path; ties go to the lower label id.
    pub fn viterbi(&self, emissions: &[f64], steps: usize) -> Result<Vec<usize>> {
        self.check(emissions, steps)?;
        let k = self.labels;
        let mut delta: Vec<f64> = (0..k).map(|j| self.start[j] + emissions[j]).collect();
        let mut back = vec![0usize; steps * k];
        for t in 1..steps {
            let mut next = vec![0.0; k];
            for j in 0..k {
                let mut best = 0;
                let mut best_score = delta[0] + self.transitions[j];
                for i in 1..k {
                    let s = delta[i] + self.transitions[i * k + j];
                    if s > best_score {
                        best = i;
                        best_score = s;
                    }
                }
                back[t * k + j] = best;
                next[j] = best_score + emissions[t * k + j];
            }
            delta = next;
        }
        let mut last = 0;
        let mut last_score = delta[0] + self.end[0];
        for j in 1..k {
            let s = delta[j] + self.end[j];
            if s > last_score {
                last = j;
                last_score = s;
            }
        }
        let mut path = vec![0; steps];
        path[steps - 1] = last;
        for t in (1..steps).rev() {
            path[t - 1] = back[t * k + path[t]];
        }
        Ok(path)
    }
}

/// Parameter handles of a CRF layer.
#[derive(Clone, Copy, Debug)]
pub struct CrfLayer {
    pub labels: usize,
    pub transitions: ParamId,
    pub start: ParamId,
    pub end: ParamId,
}

impl CrfLayer {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, labels: usize, rng: &mut R) -> Self {
        Self {
            labels,
            transitions: store.add(format!("{name}.transitions"), &[labels, labels], Init::Zeros, rng),
            start: store.add(format!("{name}.start"), &[labels], Init::Zeros, rng),
            end: store.add(format!("{name}.end"), &[labels], Init::Zeros, rng),
        }
    }

    pub fn values(&self, store: &ParamStore) -> CrfParams {
        CrfParams {
            labels: self.labels,
            transitions: store.get(self.transitions).data.clone(),
            start: store.get(self.start).data.clone(),
            end: store.get(self.end).data.clone(),
        }
    }

    pub fn nll(&self, tape: &mut Tape, store: &ParamStore, emissions: Var, gold: &[usize]) -> Result<Var> {
        let trans = tape.param(store, self.transitions);
        let start = tape.param(store, self.start);
        let end = tape.param(store, self.end);
        crf_nll(tape, emissions, gold, trans, start, end)
    }
}

/// Recorded CRF negative log-likelihood over `emissions: [T, K]` with
/// transition `[K, K]` and start/end `[K]` scores.
pub fn crf_nll(tape: &mut Tape, emissions: Var, gold: &[usize], transitions: Var, start: Var, end: Var) -> Result<Var> {
    let steps = gold.len();
    let k = match tape.shape(emissions) {
        [t, k] if *t == steps && steps > 0 => *k,
        other => return Err(Error::shape("crf_nll", &[other, &[steps]])),
    };
    let params = CrfParams {
        labels: k,
        transitions: tape.value(transitions).to_vec(),
        start: tape.value(start).to_vec(),
        end: tape.value(end).to_vec(),
    };
    let em = tape.value(emissions).to_vec();
    let value = params.nll(&em, gold)?;

    let (alpha, log_z) = params.forward(&em, steps);
    let beta = params.backward(&em, steps);
    let mut d_em = vec![0.0; steps * k];
    let mut d_trans = vec![0.0; k * k];
    let mut d_start = vec![0.0; k];
    let mut d_end = vec![0.0; k];
    for t in 0..steps {
        for j in 0..k {
            d_em[t * k + j] = (alpha[t * k + j] + beta[t * k + j] - log_z).exp();
        }
        if t > 0 {
            for i in 0..k {
                for j in 0..k {
                    let lp = alpha[(t - 1) * k + i] + params.transitions[i * k + j] + em[t * k + j] + beta[t * k + j] - log_z;
                    d_trans[i * k + j] += lp.exp();
                }
            }
        }
    }
    d_start.copy_from_slice(&d_em[..k]);
    d_end.copy_from_slice(&d_em[(steps - 1) * k..]);
    for (t, &y) in gold.iter().enumerate() {
        d_em[t * k + y] -= 1.0;
        if t > 0 {
            d_trans[gold[t - 1] * k + y] -= 1.0;
        }
    }
    d_start[gold[0]] -= 1.0;
    d_end[gold[steps - 1]] -= 1.0;

    let backward = Box::new(move |g: &[f64]| {
        let s = g[0];
        let scale = |v: &Vec<f64>| v.iter().map(|x| x * s).collect::<Vec<f64>>();
        vec![scale(&d_em), scale(&d_trans), scale(&d_start), scale(&d_end)]
    });
    Ok(tape.custom(&[emissions, transitions, start, end], &[1], vec![value], backward))
}
