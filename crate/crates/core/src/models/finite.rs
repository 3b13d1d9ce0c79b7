//! Finite-state chains and Feynman–Kac models with exact answers.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regen::AtomicKernel;
use crate::smc::FeynmanKacModel;
use crate::stream::categorical;

fn check_distribution(row: &[f64], what: &str) -> Result<()> {
    if row.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(Error::config(format!("{what} has a negative or non-finite entry")));
    }
    let s: f64 = row.iter().sum();
    if (s - 1.0).abs() > 1e-9 {
        return Err(Error::config(format!("{what} sums to {s}, not 1")));
    }
    Ok(())
}

fn check_stochastic(m: &[Vec<f64>]) -> Result<()> {
    let k = m.len();
    if k == 0 {
        return Err(Error::config("empty transition matrix"));
    }
    for (i, row) in m.iter().enumerate() {
        if row.len() != k {
            return Err(Error::config(format!("row {i} has length {}, expected {k}", row.len())));
        }
        check_distribution(row, &format!("row {i}"))?;
    }
    Ok(())
}

/// Stationary distribution of an irreducible stochastic matrix by power
/// iteration on the lazy chain `(I + P) / 2`, which has the same stationary
/// law and is aperiodic. Iterates until the L1 change stalls at rounding
/// level, then requires a residual `‖πP - π‖₁` below `1e-12`.
pub fn finite_chain_oracle(transition: &[Vec<f64>]) -> Result<Vec<f64>> {
    check_stochastic(transition)?;
    let k = transition.len();
    let mut pi = vec![1.0 / k as f64; k];
    for _ in 0..10_000_000 {
        let mut next = vec![0.0; k];
        for (i, row) in transition.iter().enumerate() {
            for (j, &p) in row.iter().enumerate() {
                next[j] += 0.5 * pi[i] * p;
            }
            next[i] += 0.5 * pi[i];
        }
        let s: f64 = next.iter().sum();
        next.iter_mut().for_each(|v| *v /= s);
        let diff: f64 = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
        pi = next;
        if diff < 1e-16 * k as f64 {
            break;
        }
    }
    // Report the true residual of the original chain.
    let residual: f64 = (0..k)
        .map(|j| ((0..k).map(|i| pi[i] * transition[i][j]).sum::<f64>() - pi[j]).abs())
        .sum();
    if residual > 1e-12 {
        return Err(Error::config(format!(
            "power iteration did not converge (residual {residual}); is the chain irreducible?"
        )));
    }
    Ok(pi)
}

/// A finite Markov chain with one state designated as the atom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteChain {
    pub transition: Vec<Vec<f64>>,
    pub atom: usize,
}

impl FiniteChain {
    pub fn new(transition: Vec<Vec<f64>>, atom: usize) -> Result<Self> {
        check_stochastic(&transition)?;
        if atom >= transition.len() {
            return Err(Error::config(format!("atom {atom} out of range")));
        }
        Ok(Self { transition, atom })
    }

    /// Every row equal to `pi`: the chain is an i.i.d. sequence.
    pub fn iid(pi: Vec<f64>, atom: usize) -> Result<Self> {
        let k = pi.len();
        Self::new(vec![pi; k], atom)
    }

    pub fn n_states(&self) -> usize {
        self.transition.len()
    }

    pub fn p_atom(&self, x: usize) -> f64 {
        self.transition[x][self.atom]
    }

    /// `min_x Π(x, {a})`.
    pub fn min_p_atom(&self) -> f64 {
        (0..self.n_states()).map(|x| self.p_atom(x)).fold(f64::INFINITY, f64::min)
    }

    pub fn stationary(&self) -> Result<Vec<f64>> {
        finite_chain_oracle(&self.transition)
    }
}

impl AtomicKernel for FiniteChain {
    type State = usize;

    fn sample<R: Rng + ?Sized>(&self, x: &usize, rng: &mut R) -> usize {
        categorical(rng, &self.transition[*x]).expect("rows are probability vectors")
    }

    fn atom(&self) -> usize {
        self.atom
    }

    fn is_atom(&self, x: &usize) -> bool {
        *x == self.atom
    }
}

/// Homogeneous finite-state Feynman–Kac model with step-dependent potentials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteFkModel {
    pub mu: Vec<f64>,
    pub transition: Vec<Vec<f64>>,
    /// `potentials[t][z]`.
    pub potentials: Vec<Vec<f64>>,
}

impl FiniteFkModel {
    pub fn new(mu: Vec<f64>, transition: Vec<Vec<f64>>, potentials: Vec<Vec<f64>>) -> Result<Self> {
        check_stochastic(&transition)?;
        check_distribution(&mu, "initial law")?;
        let k = transition.len();
        if mu.len() != k {
            return Err(Error::config("initial law and transition sizes differ"));
        }
        if potentials.is_empty() {
            return Err(Error::config("need at least one potential"));
        }
        for g in &potentials {
            if g.len() != k || g.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
                return Err(Error::config("potentials must be nonnegative vectors over the states"));
            }
        }
        Ok(Self { mu, transition, potentials })
    }

    pub fn n_states(&self) -> usize {
        self.mu.len()
    }

    /// `γ_t(1)` for `t = 1..=n`, by the forward recursion.
    pub fn gammas(&self) -> Vec<f64> {
        let k = self.n_states();
        let mut alpha: Vec<f64> = (0..k).map(|z| self.mu[z] * self.potentials[0][z]).collect();
        let mut out = vec![alpha.iter().sum()];
        for g in &self.potentials[1..] {
            let mut next = vec![0.0; k];
            for i in 0..k {
                for j in 0..k {
                    next[j] += alpha[i] * self.transition[i][j];
                }
            }
            for j in 0..k {
                next[j] *= g[j];
            }
            out.push(next.iter().sum());
            alpha = next;
        }
        out
    }

    /// `γ_t(1) / γ_{t-1}(1)`, with `γ_0(1) = 1`.
    pub fn exact_increments(&self) -> Vec<f64> {
        let g = self.gammas();
        let mut prev = 1.0;
        g.iter()
            .map(|&v| {
                let r = v / prev;
                prev = v;
                r
            })
            .collect()
    }

    /// Every path with its unnormalized weight `γ_n`, in lexicographic order.
    pub fn enumerate_paths(&self) -> Vec<(Vec<usize>, f64)> {
        let k = self.n_states();
        let n = self.potentials.len();
        let total = k.pow(n as u32);
        (0..total)
            .map(|mut code| {
                let mut path = vec![0; n];
                for t in (0..n).rev() {
                    path[t] = code % k;
                    code /= k;
                }
                let mut w = self.mu[path[0]] * self.potentials[0][path[0]];
                for t in 1..n {
                    w *= self.transition[path[t - 1]][path[t]] * self.potentials[t][path[t]];
                }
                (path, w)
            })
            .collect()
    }

    /// The normalized path law `π`.
    pub fn path_law(&self) -> Vec<(Vec<usize>, f64)> {
        let paths = self.enumerate_paths();
        let z: f64 = paths.iter().map(|p| p.1).sum();
        paths.into_iter().map(|(p, w)| (p, w / z)).collect()
    }

    /// Index of a path in [`FiniteFkModel::enumerate_paths`] order.
    pub fn path_index(&self, path: &[usize]) -> usize {
        path.iter().fold(0, |acc, &z| acc * self.n_states() + z)
    }

    /// The atom-extended model as a plain finite model whose last state is
    /// the atom.
    pub fn extended(&self, b: f64, psi: &[f64]) -> Result<FiniteFkModel> {
        let k = self.n_states();
        let mut mu: Vec<f64> = self.mu.iter().map(|m| (1.0 - b) * m).collect();
        mu.push(b);
        let mut transition: Vec<Vec<f64>> = self
            .transition
            .iter()
            .map(|row| {
                let mut r = row.clone();
                r.push(0.0);
                r
            })
            .collect();
        let mut atom_row = vec![0.0; k + 1];
        atom_row[k] = 1.0;
        transition.push(atom_row);
        if psi.len() != self.potentials.len() {
            return Err(Error::config("psi length differs from horizon"));
        }
        let potentials = self
            .potentials
            .iter()
            .zip(psi)
            .map(|(g, &p)| {
                let mut g = g.clone();
                g.push(p);
                g
            })
            .collect();
        FiniteFkModel::new(mu, transition, potentials)
    }
}

impl FeynmanKacModel for FiniteFkModel {
    type Point = usize;

    fn horizon(&self) -> usize {
        self.potentials.len()
    }

    fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        categorical(rng, &self.mu).expect("initial law is a probability vector")
    }

    fn sample_transition<R: Rng + ?Sized>(&self, _t: usize, from: &usize, rng: &mut R) -> usize {
        categorical(rng, &self.transition[*from]).expect("rows are probability vectors")
    }

    fn log_potential(&self, t: usize, z: &usize) -> f64 {
        self.potentials[t][*z].ln()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_state_balance() {
        let pi = finite_chain_oracle(&[vec![0.9, 0.1], vec![0.2, 0.8]]).unwrap();
        assert!((pi[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((pi[1] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn doubly_stochastic_permutation_is_uniform() {
        let p = vec![vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0], vec![1.0, 0.0, 0.0]];
        let pi = finite_chain_oracle(&p).unwrap();
        for v in pi {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_non_stochastic() {
        assert!(finite_chain_oracle(&[vec![0.5, 0.4], vec![0.5, 0.5]]).is_err());
        assert!(finite_chain_oracle(&[vec![1.5, -0.5], vec![0.5, 0.5]]).is_err());
    }

    #[test]
    fn gammas_match_enumeration() {
        let m = FiniteFkModel::new(
            vec![0.5, 0.5],
            vec![vec![0.7, 0.3], vec![0.4, 0.6]],
            vec![vec![1.0, 0.5], vec![0.2, 0.9], vec![0.3, 0.3]],
        )
        .unwrap();
        let total: f64 = m.enumerate_paths().iter().map(|p| p.1).sum();
        assert!((m.gammas()[2] - total).abs() < 1e-15);
    }
}
