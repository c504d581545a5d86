//! Estimators and confidence machinery: smoothed counts for the tabular
//! learner, projected-gradient GLM fitting and ridge regression for the
//! linear learner, Gram matrices with Cholesky factors, bonuses and radii.

use serde::{Deserialize, Serialize};

use crate::error::{MppError, Result};
use crate::model::Link;
use crate::scalar::{dot, norm2, Scalar};

// ---------------------------------------------------------------------------
// dense symmetric algebra

/// Symmetric positive definite matrix built as `λI + Σ xxᵀ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gram<T> {
    pub n: usize,
    pub lambda: T,
    /// Row-major, full storage.
    pub a: Vec<T>,
    pub updates: usize,
}

impl<T: Scalar> Gram<T> {
    pub fn new(n: usize, lambda: T) -> Self {
        let mut a = vec![T::zero(); n * n];
        for i in 0..n {
            a[i * n + i] = lambda;
        }
        Self { n, lambda, a, updates: 0 }
    }

    pub fn add_outer(&mut self, x: &[T]) {
        self.add_outer_weighted(x, T::one());
        self.updates += 1;
    }

    /// `A += w·xxᵀ` without counting as a new observation.
    pub fn add_outer_weighted(&mut self, x: &[T], w: T) {
        let n = self.n;
        for i in 0..n {
            let wi = w * x[i];
            for j in 0..n {
                self.a[i * n + j] += wi * x[j];
            }
        }
    }

    pub fn trace(&self) -> T {
        (0..self.n).map(|i| self.a[i * self.n + i]).sum()
    }

    pub fn cholesky(&self) -> Result<Cholesky<T>> {
        Cholesky::factor(self.n, &self.a)
    }
}

/// Lower-triangular factor `A = LLᵀ`.
#[derive(Clone, Debug, PartialEq)]
pub struct Cholesky<T> {
    pub n: usize,
    l: Vec<T>,
}

impl<T: Scalar> Cholesky<T> {
    pub fn factor(n: usize, a: &[T]) -> Result<Self> {
        if a.len() != n * n {
            return Err(MppError::Shape(format!("matrix has {} entries, expected {n}x{n}", a.len())));
        }
        let mut l = vec![T::zero(); n * n];
        for j in 0..n {
            let mut d = a[j * n + j];
            for k in 0..j {
                d -= l[j * n + k] * l[j * n + k];
            }
            if !(d > T::zero()) {
                return Err(MppError::NotPositiveDefinite {
                    pivot: j,
                    value: d.to_f64_lossy(),
                });
            }
            let djj = d.sqrt();
            l[j * n + j] = djj;
            for i in j + 1..n {
                let mut s = a[i * n + j];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / djj;
            }
        }
        Ok(Self { n, l })
    }

    /// `L⁻¹ b`.
    fn forward(&self, b: &[T]) -> Vec<T> {
        let n = self.n;
        let mut y = b.to_vec();
        for i in 0..n {
            for k in 0..i {
                let t = self.l[i * n + k] * y[k];
                y[i] -= t;
            }
            y[i] /= self.l[i * n + i];
        }
        y
    }

    /// `A⁻¹ b`.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.n;
        let mut x = self.forward(b);
        for i in (0..n).rev() {
            for k in i + 1..n {
                let t = self.l[k * n + i] * x[k];
                x[i] -= t;
            }
            x[i] /= self.l[i * n + i];
        }
        x
    }

    /// `xᵀA⁻¹x`.
    pub fn inv_quad(&self, x: &[T]) -> T {
        let y = self.forward(x);
        dot(&y, &y)
    }

    /// `‖x‖_{A⁻¹}`.
    pub fn inv_norm(&self, x: &[T]) -> T {
        self.inv_quad(x).max(T::zero()).sqrt()
    }

    pub fn logdet(&self) -> T {
        (0..self.n).map(|i| self.l[i * self.n + i].ln()).sum::<T>() * T::of(2.0)
    }
}

// ---------------------------------------------------------------------------
// tabular counting

/// `μ̂(ω) = (λ/|Ω| + N(ω)) / (λ + t − 1)`.
pub fn count_prior<T: Scalar>(counts: &[u64], t: u64, lambda: T) -> Vec<T> {
    let n = T::of_usize(counts.len());
    let denom = lambda + T::of((t.saturating_sub(1)) as f64);
    counts
        .iter()
        .map(|&c| (lambda / n + T::of(c as f64)) / denom)
        .collect()
}

/// `Q̂ = (Σ targets) / (λ + N)`.
pub fn count_q<T: Scalar>(target_sum: T, visits: u64, lambda: T) -> T {
    target_sum / (lambda + T::of(visits as f64))
}

/// Per-step sufficient statistics for the tabular learner.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountState<T> {
    pub n_states: usize,
    pub n_outcomes: usize,
    pub n_actions: usize,
    pub lambda: T,
    pub episodes: u64,
    /// `N(ω)`.
    pub outcome_counts: Vec<u64>,
    /// `N(s, ω, a)`.
    pub visits: Vec<u64>,
    /// `Σ v` per `(s, ω, a)`.
    pub reward_sum: Vec<T>,
    /// `n(s, ω, a, s')`.
    pub next_counts: Vec<u64>,
}

impl<T: Scalar> CountState<T> {
    pub fn new(n_states: usize, n_outcomes: usize, n_actions: usize, lambda: T) -> Self {
        let cells = n_states * n_outcomes * n_actions;
        Self {
            n_states,
            n_outcomes,
            n_actions,
            lambda,
            episodes: 0,
            outcome_counts: vec![0; n_outcomes],
            visits: vec![0; cells],
            reward_sum: vec![T::zero(); cells],
            next_counts: vec![0; cells * n_states],
        }
    }

    #[inline]
    pub fn cell(&self, s: usize, w: usize, a: usize) -> usize {
        (s * self.n_outcomes + w) * self.n_actions + a
    }

    pub fn observe(&mut self, s: usize, w: usize, a: usize, v: T, next: Option<usize>) {
        let k = self.cell(s, w, a);
        self.outcome_counts[w] += 1;
        self.visits[k] += 1;
        self.reward_sum[k] += v;
        if let Some(n) = next {
            self.next_counts[k * self.n_states + n] += 1;
        }
        self.episodes += 1;
    }

    /// Smoothed prior estimate for the next episode.
    pub fn prior(&self) -> Vec<T> {
        count_prior(&self.outcome_counts, self.episodes + 1, self.lambda)
    }

    /// `Q̂(s, ω, a)` with targets `v + V_{h+1}(s')`.
    pub fn q_hat(&self, s: usize, w: usize, a: usize, next_v: &[T]) -> T {
        let k = self.cell(s, w, a);
        let future: T = self.next_counts[k * self.n_states..(k + 1) * self.n_states]
            .iter()
            .zip(next_v)
            .filter(|(&c, _)| c > 0)
            .map(|(&c, &v)| T::of(c as f64) * v)
            .sum();
        count_q(self.reward_sum[k] + future, self.visits[k], self.lambda)
    }
}

// ---------------------------------------------------------------------------
// GLM prior estimation

/// Observations sharing one feature vector: `count` outcomes summing to `sum`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlmSample<T> {
    pub phi: Vec<T>,
    pub count: T,
    pub sum: T,
    pub sum_sq: T,
}

/// `½ Σ (ω − f(φᵀθ))²` over aggregated samples.
pub fn glm_objective<T: Scalar>(data: &[GlmSample<T>], link: Link, theta: &[T]) -> T {
    let half = T::of(0.5);
    data.iter()
        .map(|d| {
            let f = link.f(dot(&d.phi, theta));
            half * (d.sum_sq - T::of(2.0) * f * d.sum + d.count * f * f)
        })
        .sum()
}

fn project_ball<T: Scalar>(theta: &mut [T], radius: T) {
    let n = norm2(theta);
    if n > radius {
        let s = radius / n;
        theta.iter_mut().for_each(|x| *x *= s);
    }
}

/// Projected gradient descent on `½ Σ [ω − f(φᵀθ)]²` over `‖θ‖ ≤ l_theta`:
/// 500 iterations at step `1/(K²Φ²n)`, stopping once the gradient norm
/// drops below 1e-10. Empty data gives the zero vector.
pub fn glm_fit<T: Scalar>(
    data: &[GlmSample<T>],
    dphi: usize,
    link: Link,
    l_theta: T,
    k_upper: T,
    phi_bound: T,
    warm: Option<&[T]>,
) -> Vec<T> {
    let n: T = data.iter().map(|d| d.count).sum();
    if n <= T::zero() {
        return vec![T::zero(); dphi];
    }
    let mut theta = warm.map_or_else(|| vec![T::zero(); dphi], |w| w.to_vec());
    project_ball(&mut theta, l_theta);
    let step = T::one() / (k_upper * k_upper * phi_bound * phi_bound * n);
    let mut grad = vec![T::zero(); dphi];
    for _ in 0..500 {
        grad.iter_mut().for_each(|g| *g = T::zero());
        for d in data {
            let z = dot(&d.phi, &theta);
            let r = (d.sum - d.count * link.f(z)) * link.df(z);
            for (g, &p) in grad.iter_mut().zip(&d.phi) {
                *g -= r * p;
            }
        }
        if norm2(&grad) < T::of(1e-10) {
            break;
        }
        for (t, &g) in theta.iter_mut().zip(&grad) {
            *t -= step * g;
        }
        project_ball(&mut theta, l_theta);
    }
    theta
}

/// `β = c(1 + κ⁻¹√(K + M_f + dφσ² log(H²T²)))`.
#[allow(clippy::too_many_arguments)]
pub fn confidence_beta<T: Scalar>(dphi: usize, sigma: T, kappa: T, k_upper: T, m_f: T, horizon: usize, episodes: usize, c_beta: T) -> T {
    let h = T::of_usize(horizon);
    let t = T::of_usize(episodes);
    let log_term = (h * h * t * t).ln().max(T::zero());
    c_beta * (T::one() + (k_upper + m_f + T::of_usize(dphi) * sigma * sigma * log_term).sqrt() / kappa)
}

/// L1 radius `L_μ·K·β·‖φ‖_{Σ⁻¹}` of the prior ball implied by the parameter ellipsoid.
pub fn prior_ball_radius<T: Scalar>(phi: &[T], sigma_chol: &Cholesky<T>, beta: T, l_mu: T, k_upper: T) -> T {
    l_mu * k_upper * beta * sigma_chol.inv_norm(phi)
}

/// Per-step GLM state: aggregated data per context, Gram matrix and estimate.
#[derive(Clone, Debug, PartialEq)]
pub struct GlmState<T> {
    pub theta_hat: Vec<T>,
    pub sigma: Gram<T>,
    pub chol: Cholesky<T>,
    pub data: Vec<GlmSample<T>>,
    pub potential: PotentialTrace<T>,
}

impl<T: Scalar> GlmState<T> {
    /// `contexts` is the finite context pool; `Σ` starts at `Φ²I`.
    pub fn new(contexts: &[Vec<T>], phi_bound: T) -> Self {
        let dphi = contexts.first().map_or(0, |c| c.len());
        let lambda = phi_bound * phi_bound;
        let sigma = Gram::new(dphi, lambda);
        let chol = sigma.cholesky().expect("Φ²I is positive definite");
        Self {
            theta_hat: vec![T::zero(); dphi],
            sigma,
            chol,
            data: contexts
                .iter()
                .map(|phi| GlmSample {
                    phi: phi.clone(),
                    count: T::zero(),
                    sum: T::zero(),
                    sum_sq: T::zero(),
                })
                .collect(),
            potential: PotentialTrace::new(dphi, lambda, phi_bound),
        }
    }

    pub fn observe(&mut self, context: usize, omega: T) -> Result<()> {
        let phi = self.data[context].phi.clone();
        self.potential.record(self.chol.inv_norm(&phi));
        let d = &mut self.data[context];
        d.count += T::one();
        d.sum += omega;
        d.sum_sq += omega * omega;
        self.sigma.add_outer(&phi);
        self.chol = self.sigma.cholesky()?;
        self.potential.check_logdet(self.chol.logdet());
        Ok(())
    }

    pub fn refit(&mut self, link: Link, l_theta: T, k_upper: T, phi_bound: T) {
        let warm = self.theta_hat.clone();
        self.theta_hat = glm_fit(&self.data, warm.len(), link, l_theta, k_upper, phi_bound, Some(&warm));
    }

    /// `‖θ − θ̂‖_Σ`.
    pub fn sigma_distance(&self, theta: &[T]) -> T {
        let diff: Vec<T> = theta.iter().zip(&self.theta_hat).map(|(&a, &b)| a - b).collect();
        let n = self.sigma.n;
        let mut q = T::zero();
        for i in 0..n {
            for j in 0..n {
                q += diff[i] * self.sigma.a[i * n + j] * diff[j];
            }
        }
        q.max(T::zero()).sqrt()
    }
}

// ---------------------------------------------------------------------------
// ridge regression for the Q-function

/// `q = Γ⁻¹ ι` through a Cholesky factor of `Γ`.
pub fn ridge_fit<T: Scalar>(gamma: &Gram<T>, iota: &[T]) -> Result<Vec<T>> {
    Ok(gamma.cholesky()?.solve(iota))
}

/// `ρ·‖ψ‖_{Γ⁻¹}`.
pub fn bonus<T: Scalar>(psi: &[T], gamma_chol: &Cholesky<T>, rho: T) -> T {
    rho * gamma_chol.inv_norm(psi)
}

/// `ρ = c·dψ·H·√log(4 dψ Ψ² H² T³)`.
pub fn linear_rho<T: Scalar>(c_rho: T, dpsi: usize, psi_bound: T, horizon: usize, episodes: usize) -> T {
    let (d, h, t) = (T::of_usize(dpsi), T::of_usize(horizon), T::of_usize(episodes));
    let arg = T::of(4.0) * d * psi_bound * psi_bound * h * h * t * t * t;
    c_rho * d * h * arg.ln().max(T::zero()).sqrt()
}

/// `ρ_tab = c·H·√log(|S||Ω||A| H T)`.
pub fn tabular_rho<T: Scalar>(c_rho: T, cells: usize, horizon: usize, episodes: usize) -> T {
    let arg = T::of_usize(cells) * T::of_usize(horizon) * T::of_usize(episodes);
    c_rho * T::of_usize(horizon) * arg.ln().max(T::zero()).sqrt()
}

/// `ε_t = c·√(log(2HT)/t)`.
pub fn tabular_radius<T: Scalar>(c_eps: T, horizon: usize, episodes: usize, t: usize) -> T {
    let arg = T::of(2.0) * T::of_usize(horizon) * T::of_usize(episodes);
    c_eps * (arg.ln().max(T::zero()) / T::of_usize(t.max(1))).sqrt()
}

/// Per-step ridge state. Targets `v + V_{h+1}(s')` are kept split into the
/// reward part and per-key sums of features, so that `ι` can be rebuilt for
/// any `V_{h+1}` without revisiting the history.
#[derive(Clone, Debug, PartialEq)]
pub struct RidgeState<T> {
    pub gamma: Gram<T>,
    pub chol: Cholesky<T>,
    /// `Σ ψ v`.
    pub iota_reward: Vec<T>,
    /// `Σ ψ` grouped by the key of the next value (`None` for terminal steps).
    pub next_sums: Vec<Vec<T>>,
    pub potential: PotentialTrace<T>,
}

impl<T: Scalar> RidgeState<T> {
    /// `Γ` starts at `λI` with `λ = max(1, Ψ²)`; `n_keys` next-value keys.
    pub fn new(dpsi: usize, psi_bound: T, n_keys: usize) -> Self {
        let lambda = T::one().max(psi_bound * psi_bound);
        let gamma = Gram::new(dpsi, lambda);
        let chol = gamma.cholesky().expect("λI is positive definite");
        Self {
            gamma,
            chol,
            iota_reward: vec![T::zero(); dpsi],
            next_sums: vec![vec![T::zero(); dpsi]; n_keys],
            potential: PotentialTrace::new(dpsi, lambda, psi_bound),
        }
    }

    pub fn observe(&mut self, psi: &[T], reward: T, next_key: Option<usize>) -> Result<()> {
        self.potential.record(self.chol.inv_norm(psi));
        self.gamma.add_outer(psi);
        for (i, &p) in self.iota_reward.iter_mut().zip(psi) {
            *i += p * reward;
        }
        if let Some(k) = next_key {
            for (i, &p) in self.next_sums[k].iter_mut().zip(psi) {
                *i += p;
            }
        }
        self.chol = self.gamma.cholesky()?;
        self.potential.check_logdet(self.chol.logdet());
        Ok(())
    }

    /// `ι = Σ ψ (v + V_{h+1}(key))`.
    pub fn iota(&self, next_values: &[T]) -> Vec<T> {
        let mut iota = self.iota_reward.clone();
        for (sum, &v) in self.next_sums.iter().zip(next_values) {
            if v != T::zero() {
                for (i, &p) in iota.iter_mut().zip(sum) {
                    *i += p * v;
                }
            }
        }
        iota
    }

    pub fn fit(&self, next_values: &[T]) -> Vec<T> {
        self.chol.solve(&self.iota(next_values))
    }

    /// `true` if some observation led to a next-value key.
    pub fn key_used(&self, key: usize) -> bool {
        self.next_sums[key].iter().any(|&x| x != T::zero())
    }
}

// ---------------------------------------------------------------------------
// concentration diagnostics

/// `√(2dT log(1 + TΦ²/(λd)))`.
pub fn elliptical_potential_bound<T: Scalar>(dim: usize, steps: usize, phi_bound: T, lambda: T) -> T {
    let (d, t) = (T::of_usize(dim), T::of_usize(steps));
    (T::of(2.0) * d * t * (T::one() + t * phi_bound * phi_bound / (lambda * d)).ln()).sqrt()
}

/// `d·log(λ + tΦ²/d)`, the log of the determinant–trace bound.
pub fn det_trace_log_bound<T: Scalar>(dim: usize, steps: usize, phi_bound: T, lambda: T) -> T {
    let (d, t) = (T::of_usize(dim), T::of_usize(steps));
    d * (lambda + t * phi_bound * phi_bound / d).ln()
}

/// Running record of `Σ_t ‖x_t‖_{A_t⁻¹}` and `log det A_t` for one Gram
/// sequence, with the elliptical-potential and determinant–trace checks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialTrace<T> {
    pub dim: usize,
    pub lambda: T,
    pub bound: T,
    pub steps: usize,
    pub sum_norms: T,
    pub elliptical_ok: bool,
    pub det_trace_ok: bool,
    /// Largest `log det A_t − log bound` seen (nonpositive when the check holds).
    pub worst_det_margin: T,
    pub worst_elliptical_margin: T,
}

impl<T: Scalar> PotentialTrace<T> {
    pub fn new(dim: usize, lambda: T, bound: T) -> Self {
        Self {
            dim,
            lambda,
            bound,
            steps: 0,
            sum_norms: T::zero(),
            elliptical_ok: true,
            det_trace_ok: true,
            worst_det_margin: T::neg_infinity(),
            worst_elliptical_margin: T::neg_infinity(),
        }
    }

    /// `norm` is `‖x_t‖` in the inverse of the Gram matrix before the update.
    pub fn record(&mut self, norm: T) {
        self.steps += 1;
        self.sum_norms += norm;
        let margin = self.sum_norms - elliptical_potential_bound(self.dim, self.steps, self.bound, self.lambda);
        self.worst_elliptical_margin = self.worst_elliptical_margin.max(margin);
        if margin > T::of(1e-9) {
            self.elliptical_ok = false;
        }
    }

    /// `logdet` of the Gram matrix after `steps` updates.
    pub fn check_logdet(&mut self, logdet: T) {
        let margin = logdet - det_trace_log_bound(self.dim, self.steps, self.bound, self.lambda);
        self.worst_det_margin = self.worst_det_margin.max(margin);
        if margin > T::of(1e-9) {
            self.det_trace_ok = false;
        }
    }
}
