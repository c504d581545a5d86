//! Environment models and the shared domain types.
//!
//! A [`TabularMpp`] stores every table densely. A [`LinearMpp`] stores the
//! feature representation (context features, state–outcome–action features,
//! the true parameters and the outcome grid) and can be expanded into the
//! equivalent tabular model with [`LinearMpp::to_tabular`]; the planner, the
//! environment simulator and the regret harness work on that expansion.
//!
//! Index layout (row major):
//! - utilities `[h][s][ω][a]`
//! - transitions `[h][s][ω][a][s']`
//! - priors `[h][c][ω]`

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{MppError, Result};
use crate::scalar::{dot, norm2, Scalar};

/// One failed invariant, located by field name and index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub index: Vec<usize>,
    pub magnitude: f64,
    pub message: String,
}

impl Violation {
    fn new(field: &str, index: Vec<usize>, magnitude: f64, message: String) -> Self {
        Self {
            field: field.to_string(),
            index,
            magnitude,
            message,
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

fn fmt_index(field: &str, index: &[usize]) -> String {
    let mut s = field.to_string();
    for i in index {
        s.push_str(&format!("[{i}]"));
    }
    s
}

fn check_dist<T: Scalar>(field: &str, index: Vec<usize>, row: &[T], tol: T, out: &mut Vec<Violation>) {
    let sum: T = row.iter().copied().sum();
    if !sum.is_finite() || (sum - T::one()).abs() > tol {
        let name = fmt_index(field, &index);
        out.push(Violation::new(
            field,
            index.clone(),
            sum.to_f64_lossy(),
            format!("{name} sums to {}", sum.to_f64_lossy()),
        ));
    }
    for (k, &p) in row.iter().enumerate() {
        if !(p >= -tol) {
            let mut idx = index.clone();
            idx.push(k);
            let name = fmt_index(field, &idx);
            out.push(Violation::new(
                field,
                idx,
                p.to_f64_lossy(),
                format!("{name} is negative ({})", p.to_f64_lossy()),
            ));
        }
    }
}

fn check_unit_range<T: Scalar>(field: &str, index: Vec<usize>, x: T, out: &mut Vec<Violation>) {
    if !(x >= T::zero() && x <= T::one()) {
        let name = fmt_index(field, &index);
        out.push(Violation::new(
            field,
            index,
            x.to_f64_lossy(),
            format!("{field} out of [0,1]: {name} = {}", x.to_f64_lossy()),
        ));
    }
}

fn check_len(field: &str, got: usize, want: usize, out: &mut Vec<Violation>) -> bool {
    if got != want {
        out.push(Violation::new(
            field,
            vec![],
            got as f64,
            format!("{field} has {got} entries, expected {want}"),
        ));
        false
    } else {
        true
    }
}

/// Rescales a nonnegative vector to sum to one. Zero vectors become uniform.
pub fn renormalize<T: Scalar>(row: &mut [T]) {
    for p in row.iter_mut() {
        if *p < T::zero() {
            *p = T::zero();
        }
    }
    let sum: T = row.iter().copied().sum();
    if sum > T::zero() {
        for p in row.iter_mut() {
            *p /= sum;
        }
    } else if !row.is_empty() {
        let u = T::one() / T::of_usize(row.len());
        row.iter_mut().for_each(|p| *p = u);
    }
}

/// Sizes of a finite Markov persuasion process.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub horizon: usize,
    pub states: usize,
    pub outcomes: usize,
    pub actions: usize,
    pub contexts: usize,
}

impl Dims {
    pub fn utility_len(&self) -> usize {
        self.horizon * self.states * self.outcomes * self.actions
    }
    pub fn transition_len(&self) -> usize {
        self.utility_len() * self.states
    }
    pub fn prior_len(&self) -> usize {
        self.horizon * self.contexts * self.outcomes
    }
}

/// Finite MPP with explicit tables.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularMpp<T> {
    pub dims: Dims,
    pub initial_state: usize,
    receiver_utility: Vec<T>,
    sender_utility: Vec<T>,
    transition: Vec<T>,
    prior: Vec<T>,
}

impl<T: Scalar> TabularMpp<T> {
    /// Builds a model from flat tables without touching the values.
    /// Shape errors are reported immediately; value invariants by [`validate`](Self::validate).
    pub fn from_parts(
        dims: Dims,
        initial_state: usize,
        receiver_utility: Vec<T>,
        sender_utility: Vec<T>,
        transition: Vec<T>,
        prior: Vec<T>,
    ) -> Result<Self> {
        let mut v = Vec::new();
        check_len("u", receiver_utility.len(), dims.utility_len(), &mut v);
        check_len("v", sender_utility.len(), dims.utility_len(), &mut v);
        check_len("P", transition.len(), dims.transition_len(), &mut v);
        check_len("mu", prior.len(), dims.prior_len(), &mut v);
        if dims.horizon == 0 || dims.states == 0 || dims.outcomes == 0 || dims.actions == 0 || dims.contexts == 0 {
            return Err(MppError::Shape(format!("all sizes must be positive: {dims:?}")));
        }
        if initial_state >= dims.states {
            return Err(MppError::Shape(format!(
                "initial state {initial_state} out of range ({} states)",
                dims.states
            )));
        }
        if !v.is_empty() {
            return Err(MppError::InvalidModel(v));
        }
        Ok(Self {
            dims,
            initial_state,
            receiver_utility,
            sender_utility,
            transition,
            prior,
        })
    }

    /// Same as [`from_parts`](Self::from_parts) but renormalizes every
    /// distribution so that the stochasticity invariants hold exactly.
    pub fn new_normalized(
        dims: Dims,
        initial_state: usize,
        receiver_utility: Vec<T>,
        sender_utility: Vec<T>,
        mut transition: Vec<T>,
        mut prior: Vec<T>,
    ) -> Result<Self> {
        if transition.len() == dims.transition_len() {
            transition.chunks_mut(dims.states).for_each(renormalize);
        }
        if prior.len() == dims.prior_len() {
            prior.chunks_mut(dims.outcomes).for_each(renormalize);
        }
        Self::from_parts(dims, initial_state, receiver_utility, sender_utility, transition, prior)
    }

    #[inline]
    fn uidx(&self, h: usize, s: usize, w: usize, a: usize) -> usize {
        let d = &self.dims;
        ((h * d.states + s) * d.outcomes + w) * d.actions + a
    }

    pub fn horizon(&self) -> usize {
        self.dims.horizon
    }

    #[inline]
    pub fn u(&self, h: usize, s: usize, w: usize, a: usize) -> T {
        self.receiver_utility[self.uidx(h, s, w, a)]
    }

    #[inline]
    pub fn v(&self, h: usize, s: usize, w: usize, a: usize) -> T {
        self.sender_utility[self.uidx(h, s, w, a)]
    }

    /// Receiver utility at `(h, s)` as an `Ω×A` row-major slice.
    pub fn u_slice(&self, h: usize, s: usize) -> &[T] {
        let start = self.uidx(h, s, 0, 0);
        &self.receiver_utility[start..start + self.dims.outcomes * self.dims.actions]
    }

    /// Sender utility at `(h, s)` as an `Ω×A` row-major slice.
    pub fn v_slice(&self, h: usize, s: usize) -> &[T] {
        let start = self.uidx(h, s, 0, 0);
        &self.sender_utility[start..start + self.dims.outcomes * self.dims.actions]
    }

    /// `P_h(· | s, ω, a)`.
    pub fn transition_row(&self, h: usize, s: usize, w: usize, a: usize) -> &[T] {
        let start = self.uidx(h, s, w, a) * self.dims.states;
        &self.transition[start..start + self.dims.states]
    }

    /// `μ_h(· | c)`.
    pub fn prior(&self, h: usize, c: usize) -> &[T] {
        let start = (h * self.dims.contexts + c) * self.dims.outcomes;
        &self.prior[start..start + self.dims.outcomes]
    }

    /// `(P_h V)(s, ω, a)`.
    pub fn expected_next(&self, h: usize, s: usize, w: usize, a: usize, next_values: &[T]) -> T {
        dot(self.transition_row(h, s, w, a), next_values)
    }

    pub fn receiver_utility_raw(&self) -> &[T] {
        &self.receiver_utility
    }
    pub fn sender_utility_raw(&self) -> &[T] {
        &self.sender_utility
    }
    pub fn transition_raw(&self) -> &[T] {
        &self.transition
    }
    pub fn prior_raw(&self) -> &[T] {
        &self.prior
    }

    /// Reports every violated invariant; never panics.
    pub fn validate(&self) -> Vec<Violation> {
        let d = self.dims;
        let tol = T::dist_tol();
        let mut out = Vec::new();
        for h in 0..d.horizon {
            for c in 0..d.contexts {
                check_dist("mu", vec![h, c], self.prior(h, c), tol, &mut out);
            }
            for s in 0..d.states {
                for w in 0..d.outcomes {
                    for a in 0..d.actions {
                        check_unit_range("u", vec![h, s, w, a], self.u(h, s, w, a), &mut out);
                        check_unit_range("v", vec![h, s, w, a], self.v(h, s, w, a), &mut out);
                        check_dist("P", vec![h, s, w, a], self.transition_row(h, s, w, a), tol, &mut out);
                    }
                }
            }
        }
        out
    }
}

/// Link function of the outcome GLM.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    Identity,
    Logistic,
}

impl Link {
    pub fn f<T: Scalar>(self, z: T) -> T {
        match self {
            Link::Identity => z,
            Link::Logistic => T::one() / (T::one() + (-z).exp()),
        }
    }

    pub fn df<T: Scalar>(self, z: T) -> T {
        match self {
            Link::Identity => T::one(),
            Link::Logistic => {
                let s = self.f(z);
                s * (T::one() - s)
            }
        }
    }

    pub fn d2f<T: Scalar>(self, z: T) -> T {
        match self {
            Link::Identity => T::zero(),
            Link::Logistic => {
                let s = self.f(z);
                s * (T::one() - s) * (T::one() - T::of(2.0) * s)
            }
        }
    }

    /// `(κ, K, M_f)` over `|z| ≤ z_max`.
    pub fn derivative_bounds<T: Scalar>(self, z_max: T) -> (T, T, T) {
        match self {
            Link::Identity => (T::one(), T::one(), T::zero()),
            Link::Logistic => {
                let kappa = self.df(z_max);
                let big_k = self.df(T::zero());
                // |f''| peaks at s(1-s)(1-2s) extremum, z = ln(2 + sqrt 3) ≈ 1.317
                let z_peak = T::of((2.0 + 3f64.sqrt()).ln());
                let z = if z_max < z_peak { z_max } else { z_peak };
                let m = self.d2f(z).abs();
                (kappa, big_k, m)
            }
        }
    }
}

/// Gaussian with mean `mean` and scale `sigma` restricted to `grid` and
/// renormalized. `sigma == 0` gives the point mass on the nearest grid point.
pub fn grid_prior<T: Scalar>(grid: &[T], mean: T, sigma: T) -> Vec<T> {
    let mut p = vec![T::zero(); grid.len()];
    if grid.is_empty() {
        return p;
    }
    if sigma <= T::zero() {
        let mut best = 0;
        for (i, &x) in grid.iter().enumerate() {
            if (x - mean).abs() < (grid[best] - mean).abs() {
                best = i;
            }
        }
        p[best] = T::one();
        return p;
    }
    let two_s2 = T::of(2.0) * sigma * sigma;
    let logw: Vec<T> = grid.iter().map(|&x| -(x - mean) * (x - mean) / two_s2).collect();
    let m = logw.iter().copied().fold(T::neg_infinity(), T::max);
    for (pi, &lw) in p.iter_mut().zip(&logw) {
        *pi = (lw - m).exp();
    }
    renormalize(&mut p);
    p
}

/// `‖∂ grid_prior / ∂ mean‖₁`, analytic.
fn grid_prior_mean_derivative_l1<T: Scalar>(grid: &[T], mean: T, sigma: T) -> T {
    let p = grid_prior(grid, mean, sigma);
    let s2 = sigma * sigma;
    let mbar: T = p.iter().zip(grid).map(|(&pi, &x)| pi * (x - mean) / s2).sum();
    p.iter()
        .zip(grid)
        .map(|(&pi, &x)| (pi * ((x - mean) / s2 - mbar)).abs())
        .sum()
}

/// Lipschitz constant of `m ↦ grid_prior(grid, m, σ)` in L1 over `[lo, hi]`,
/// by a dense scan of the analytic derivative with a 5% margin.
pub fn grid_prior_lipschitz<T: Scalar>(grid: &[T], sigma: T, lo: T, hi: T) -> T {
    if sigma <= T::zero() {
        // point masses jump by 2 across a cell boundary; report the finest-cell ratio
        let min_gap = grid
            .windows(2)
            .map(|w| (w[1] - w[0]).abs())
            .fold(T::infinity(), T::min);
        return T::of(2.0) / min_gap.max(T::epsilon());
    }
    let n = 4000;
    let mut best = T::zero();
    for i in 0..=n {
        let m = lo + (hi - lo) * T::of_usize(i) / T::of_usize(n);
        best = best.max(grid_prior_mean_derivative_l1(grid, m, sigma));
    }
    best * T::of(1.05)
}

/// MPP with linear utilities/transitions and a GLM outcome prior, discretized
/// on a finite outcome grid and a finite state set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearMpp<T> {
    pub horizon: usize,
    pub n_states: usize,
    pub n_actions: usize,
    pub initial_state: usize,
    pub dphi: usize,
    pub dpsi: usize,
    /// Context pool: `φ(c)` for each context.
    pub contexts: Vec<Vec<T>>,
    /// Outcome grid (sorted values of ω).
    pub grid: Vec<T>,
    /// `ψ(s, ω, a)`, layout `[s][g][a][k]`.
    pub psi: Vec<T>,
    /// `θ*_h`.
    pub theta_star: Vec<Vec<T>>,
    /// `γ*_h`.
    pub gamma_star: Vec<Vec<T>>,
    /// `M_h`, layout `[h][k][s']`.
    pub measures: Vec<T>,
    /// Receiver utility, layout `[h][s][g][a]`.
    pub receiver_utility: Vec<T>,
    pub link: Link,
    pub sigma: T,
    pub phi_bound: T,
    pub psi_bound: T,
    pub l_theta: T,
    pub l_gamma: T,
    pub l_mu: T,
    pub kappa: T,
    pub k_upper: T,
    pub m_f: T,
}

impl<T: Scalar> LinearMpp<T> {
    pub fn n_grid(&self) -> usize {
        self.grid.len()
    }

    pub fn n_contexts(&self) -> usize {
        self.contexts.len()
    }

    /// `ψ(s, g, a)`.
    pub fn psi_vec(&self, s: usize, g: usize, a: usize) -> &[T] {
        let start = ((s * self.grid.len() + g) * self.n_actions + a) * self.dpsi;
        &self.psi[start..start + self.dpsi]
    }

    pub fn u(&self, h: usize, s: usize, g: usize, a: usize) -> T {
        self.receiver_utility[((h * self.n_states + s) * self.grid.len() + g) * self.n_actions + a]
    }

    pub fn u_slice(&self, h: usize, s: usize) -> &[T] {
        let n = self.grid.len() * self.n_actions;
        let start = (h * self.n_states + s) * n;
        &self.receiver_utility[start..start + n]
    }

    /// Prior `μ_θ(·|c)` on the grid for an arbitrary parameter.
    pub fn prior_for(&self, theta: &[T], c: usize) -> Vec<T> {
        let z = dot(&self.contexts[c], theta);
        grid_prior(&self.grid, self.link.f(z), self.sigma)
    }

    /// Transition row `ψ(s,g,a)ᵀ M_h(·)`, renormalized.
    pub fn transition_row(&self, h: usize, s: usize, g: usize, a: usize) -> Vec<T> {
        let psi = self.psi_vec(s, g, a);
        let mut row = vec![T::zero(); self.n_states];
        for (k, &pk) in psi.iter().enumerate() {
            let m = &self.measures[(h * self.dpsi + k) * self.n_states..(h * self.dpsi + k + 1) * self.n_states];
            for (r, &mv) in row.iter_mut().zip(m) {
                *r += pk * mv;
            }
        }
        row
    }

    /// The ground-truth finite model over (state set × outcome grid × contexts).
    pub fn to_tabular(&self) -> Result<TabularMpp<T>> {
        let dims = Dims {
            horizon: self.horizon,
            states: self.n_states,
            outcomes: self.grid.len(),
            actions: self.n_actions,
            contexts: self.contexts.len(),
        };
        let mut v = Vec::with_capacity(dims.utility_len());
        let mut p = Vec::with_capacity(dims.transition_len());
        for h in 0..self.horizon {
            for s in 0..self.n_states {
                for g in 0..self.grid.len() {
                    for a in 0..self.n_actions {
                        v.push(dot(self.psi_vec(s, g, a), &self.gamma_star[h]));
                        p.extend(self.transition_row(h, s, g, a));
                    }
                }
            }
        }
        let mut mu = Vec::with_capacity(dims.prior_len());
        for h in 0..self.horizon {
            for c in 0..self.contexts.len() {
                mu.extend(self.prior_for(&self.theta_star[h], c));
            }
        }
        TabularMpp::new_normalized(dims, self.initial_state, self.receiver_utility.clone(), v, p, mu)
    }

    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let g = self.grid.len();
        let ok = check_len("psi", self.psi.len(), self.n_states * g * self.n_actions * self.dpsi, &mut out)
            & check_len("theta_star", self.theta_star.len(), self.horizon, &mut out)
            & check_len("gamma_star", self.gamma_star.len(), self.horizon, &mut out)
            & check_len("M", self.measures.len(), self.horizon * self.dpsi * self.n_states, &mut out)
            & check_len("u", self.receiver_utility.len(), self.horizon * self.n_states * g * self.n_actions, &mut out)
            & self.theta_star.iter().all(|t| check_len("theta_star", t.len(), self.dphi, &mut out))
            & self.gamma_star.iter().all(|t| check_len("gamma_star", t.len(), self.dpsi, &mut out))
            & self.contexts.iter().all(|t| check_len("phi", t.len(), self.dphi, &mut out));
        if !ok || g == 0 || self.contexts.is_empty() || self.n_states == 0 || self.horizon == 0 {
            if out.is_empty() {
                out.push(Violation::new("dims", vec![], 0.0, "empty dimension".into()));
            }
            return out;
        }
        if self.initial_state >= self.n_states {
            out.push(Violation::new(
                "initial_state",
                vec![],
                self.initial_state as f64,
                "initial_state out of range".into(),
            ));
        }
        let norm_tol = T::of(1e-9);
        for (c, phi) in self.contexts.iter().enumerate() {
            let n = norm2(phi);
            if n > self.phi_bound + norm_tol {
                out.push(Violation::new("phi", vec![c], n.to_f64_lossy(), format!("phi[{c}] norm {n} exceeds Phi")));
            }
        }
        for (h, th) in self.theta_star.iter().enumerate() {
            let n = norm2(th);
            if n > self.l_theta + norm_tol {
                out.push(Violation::new("theta_star", vec![h], n.to_f64_lossy(), format!("theta_star[{h}] norm {n} exceeds L_theta")));
            }
        }
        for (h, gm) in self.gamma_star.iter().enumerate() {
            let n = norm2(gm);
            if n > self.l_gamma + norm_tol {
                out.push(Violation::new("gamma_star", vec![h], n.to_f64_lossy(), format!("gamma_star[{h}] norm {n} exceeds L_gamma")));
            }
        }
        let tol = T::of(1e-9);
        for s in 0..self.n_states {
            for gi in 0..g {
                for a in 0..self.n_actions {
                    let n = norm2(self.psi_vec(s, gi, a));
                    if n > self.psi_bound + norm_tol {
                        out.push(Violation::new("psi", vec![s, gi, a], n.to_f64_lossy(), format!("psi[{s}][{gi}][{a}] norm {n} exceeds Psi")));
                    }
                    for h in 0..self.horizon {
                        check_dist("psi^T M", vec![h, s, gi, a], &self.transition_row(h, s, gi, a), tol, &mut out);
                        let v = dot(self.psi_vec(s, gi, a), &self.gamma_star[h]);
                        check_unit_range("v", vec![h, s, gi, a], v, &mut out);
                        check_unit_range("u", vec![h, s, gi, a], self.u(h, s, gi, a), &mut out);
                    }
                }
            }
        }
        // derivative bounds sampled on |z| <= Phi * L_theta
        let zmax = self.phi_bound * self.l_theta;
        let slack = T::of(1e-12);
        for i in 0..=200 {
            let z = -zmax + zmax * T::of(2.0) * T::of_usize(i) / T::of(200.0);
            let d1 = self.link.df(z).abs();
            let d2 = self.link.d2f(z).abs();
            if d1 < self.kappa - slack || d1 > self.k_upper + slack {
                out.push(Violation::new("link", vec![i], d1.to_f64_lossy(), format!("|f'({z})| = {d1} outside [kappa, K]")));
            }
            if d2 > self.m_f + slack {
                out.push(Violation::new("link", vec![i], d2.to_f64_lossy(), format!("|f''({z})| = {d2} exceeds M_f")));
            }
        }
        if !(self.sigma >= T::zero()) {
            out.push(Violation::new("sigma", vec![], self.sigma.to_f64_lossy(), "sigma must be nonnegative".into()));
        }
        out
    }
}

/// Conditional action-recommendation distribution `π(a|ω)`, one row per outcome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignalingScheme<T> {
    pub n_outcomes: usize,
    pub n_actions: usize,
    pub pi: Vec<T>,
}

impl<T: Scalar> SignalingScheme<T> {
    pub fn new(n_outcomes: usize, n_actions: usize, pi: Vec<T>) -> Result<Self> {
        if pi.len() != n_outcomes * n_actions {
            return Err(MppError::Shape(format!(
                "scheme has {} entries, expected {}x{}",
                pi.len(),
                n_outcomes,
                n_actions
            )));
        }
        Ok(Self { n_outcomes, n_actions, pi })
    }

    /// Every outcome recommends `action` with probability one.
    pub fn constant(n_outcomes: usize, n_actions: usize, action: usize) -> Self {
        let mut pi = vec![T::zero(); n_outcomes * n_actions];
        for w in 0..n_outcomes {
            pi[w * n_actions + action] = T::one();
        }
        Self { n_outcomes, n_actions, pi }
    }

    #[inline]
    pub fn prob(&self, w: usize, a: usize) -> T {
        self.pi[w * self.n_actions + a]
    }

    pub fn row(&self, w: usize) -> &[T] {
        &self.pi[w * self.n_actions..(w + 1) * self.n_actions]
    }

    /// `(1-δ)·self + δ·other`.
    pub fn mix(&self, other: &Self, delta: T) -> Self {
        let pi = self
            .pi
            .iter()
            .zip(&other.pi)
            .map(|(&x, &y)| (T::one() - delta) * x + delta * y)
            .collect();
        Self {
            n_outcomes: self.n_outcomes,
            n_actions: self.n_actions,
            pi,
        }
    }

    /// `⟨w, μ⊗π⟩ = Σ μ(ω) π(a|ω) w(ω,a)` for an `Ω×A` row-major objective.
    pub fn expected(&self, mu: &[T], w: &[T]) -> T {
        let mut total = T::zero();
        for (o, &m) in mu.iter().enumerate() {
            if m == T::zero() {
                continue;
            }
            total += m * dot(self.row(o), &w[o * self.n_actions..(o + 1) * self.n_actions]);
        }
        total
    }

    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if !check_len("pi", self.pi.len(), self.n_outcomes * self.n_actions, &mut out) {
            return out;
        }
        for w in 0..self.n_outcomes {
            check_dist("pi", vec![w], self.row(w), T::dist_tol(), &mut out);
        }
        out
    }
}

/// Per-step, per-state signaling schemes for one context sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignalingPolicy<T> {
    pub horizon: usize,
    pub n_states: usize,
    schemes: Vec<Option<SignalingScheme<T>>>,
}

impl<T: Scalar> SignalingPolicy<T> {
    pub fn empty(horizon: usize, n_states: usize) -> Self {
        Self {
            horizon,
            n_states,
            schemes: vec![None; horizon * n_states],
        }
    }

    pub fn get(&self, h: usize, s: usize) -> Option<&SignalingScheme<T>> {
        self.schemes[h * self.n_states + s].as_ref()
    }

    pub fn set(&mut self, h: usize, s: usize, scheme: SignalingScheme<T>) {
        self.schemes[h * self.n_states + s] = Some(scheme);
    }

    pub fn validate(&self) -> Vec<Violation> {
        self.schemes.iter().flatten().flat_map(|s| s.validate()).collect()
    }
}

/// `(p0, D)` regularity data together with an L1 prior-ball radius.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustnessSpec<T> {
    pub p0: T,
    pub d: T,
    pub epsilon: T,
}

impl<T: Scalar> RobustnessSpec<T> {
    pub fn new(p0: T, d: T, epsilon: T) -> Result<Self> {
        let ok = p0 > T::zero() && p0 <= T::one() && d > T::zero() && d <= T::one() && epsilon >= T::zero();
        if !ok {
            return Err(MppError::Config(format!(
                "robustness spec needs p0 in (0,1], D in (0,1], epsilon >= 0; got ({p0}, {d}, {epsilon})"
            )));
        }
        Ok(Self { p0, d, epsilon })
    }

    /// Mixture weight `min(1, ε/(p0·D))`.
    pub fn mixture_weight(&self) -> T {
        (self.epsilon / (self.p0 * self.d)).min(T::one())
    }
}

/// One step of a realized trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord<T> {
    pub context: usize,
    pub state: usize,
    pub outcome: usize,
    pub recommended: usize,
    pub taken: usize,
    pub sender_utility: T,
    pub deviated: bool,
    /// The scheme for this state was missing and full information was used.
    pub fallback: bool,
    pub next_state: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord<T> {
    pub episode: usize,
    pub steps: Vec<StepRecord<T>>,
}

impl<T: Scalar> EpisodeRecord<T> {
    pub fn deviations(&self) -> usize {
        self.steps.iter().filter(|s| s.deviated).count()
    }

    pub fn realized_return(&self) -> T {
        self.steps.iter().map(|s| s.sender_utility).sum()
    }

    pub fn is_consistent(&self) -> bool {
        self.steps.iter().all(|s| s.deviated == (s.recommended != s.taken))
    }
}

/// The four terms of the regret decomposition for one episode.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DecompositionTerms<T> {
    /// Optimism residual: expected minus realized TD errors.
    pub term_i: T,
    /// Martingale terms `Σ_h ζ¹ + ζ²`.
    pub term_ii: T,
    /// Pessimism term under the optimal occupancy.
    pub term_iii: T,
    /// Prior estimation term along the realized path.
    pub term_iv: T,
}

impl<T: Scalar> DecompositionTerms<T> {
    pub fn total(&self) -> T {
        self.term_i + self.term_ii + self.term_iii + self.term_iv
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegretEntry<T> {
    pub t: usize,
    pub v_star: T,
    pub v_pi: T,
    pub regret: T,
    pub cum_regret: T,
    pub terms: Option<DecompositionTerms<T>>,
    pub deviations: usize,
    pub realized_return: T,
    pub eps_used: T,
    pub beta: T,
    pub rho: T,
}

/// Per-episode regret series for one seed.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RegretLog<T> {
    pub seed: u64,
    pub entries: Vec<RegretEntry<T>>,
}

impl<T: Scalar> RegretLog<T> {
    pub fn new(seed: u64) -> Self {
        Self { seed, entries: Vec::new() }
    }

    /// Appends an episode; the cumulative column is maintained here.
    #[allow(clippy::too_many_arguments)]
    pub fn push(
        &mut self,
        t: usize,
        v_star: T,
        v_pi: T,
        terms: Option<DecompositionTerms<T>>,
        deviations: usize,
        realized_return: T,
        eps_used: T,
        beta: T,
        rho: T,
    ) {
        let regret = v_star - v_pi;
        let cum = self.entries.last().map_or(T::zero(), |e| e.cum_regret) + regret;
        self.entries.push(RegretEntry {
            t,
            v_star,
            v_pi,
            regret,
            cum_regret: cum,
            terms,
            deviations,
            realized_return,
            eps_used,
            beta,
            rho,
        });
    }

    pub fn cumulative(&self) -> Vec<T> {
        self.entries.iter().map(|e| e.cum_regret).collect()
    }

    pub fn total_regret(&self) -> T {
        self.entries.last().map_or(T::zero(), |e| e.cum_regret)
    }

    /// Fraction of episodes with at least one receiver deviation.
    pub fn deviation_rate(&self) -> f64 {
        if self.entries.is_empty() {
            return 0.0;
        }
        self.entries.iter().filter(|e| e.deviations > 0).count() as f64 / self.entries.len() as f64
    }

    /// Largest `|regret − Σ terms|` over episodes that carry a decomposition.
    pub fn max_identity_residual(&self) -> Option<T> {
        self.entries
            .iter()
            .filter_map(|e| e.terms.map(|t| (e.regret - t.total()).abs()))
            .reduce(T::max)
    }
}
