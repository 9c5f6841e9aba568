//! The five SGMCMC algorithms behind one step interface.
//!
//! Every update applies the localized drift `gamma * (w - w_anchor)` and the
//! tempered gradient `beta_tilde * g`. Step functions take the gradient and
//! the standard-normal noise as plain slices so single steps can be driven
//! and checked in isolation; `run_chain` wires them to a task.

use crate::dataset::sample_batch;
use crate::dln::batch_loss_and_gradient;
use crate::seeds;
use crate::taskgen::TaskSpec;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Hyperparameters shared by all five algorithms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommonHypers {
    /// Step size epsilon.
    pub epsilon: f64,
    /// Localization strength gamma of the Gaussian prior at the anchor.
    pub gamma: f64,
    /// Posterior temperature beta-tilde = n * beta.
    pub beta_tilde: f64,
    /// Minibatch size m.
    pub batch_size: usize,
    /// Chain length T.
    pub steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamHypers {
    /// Stability offset `a` added to the root of the second moment.
    pub stability: f64,
    /// First-moment EMA decay `b1`.
    pub decay1: f64,
    /// Second-moment EMA decay `b2`.
    pub decay2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RmsPropHypers {
    /// Stability offset `a`.
    pub stability: f64,
    /// Second-moment EMA decay `b`.
    pub decay: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SghmcHypers {
    /// Friction alpha.
    pub friction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgnhtHypers {
    /// Initial thermostat value alpha_0.
    pub initial_friction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SamplerKind {
    Sgld,
    AdamSgld(AdamHypers),
    RmsPropSgld(RmsPropHypers),
    Sghmc(SghmcHypers),
    Sgnht(SgnhtHypers),
}

/// Sensitivity switches for the two places where the pseudocode deviates from
/// the conventional updates. Both default off: the chain follows the
/// pseudocode exactly.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UpdateVariants {
    /// Advance the position with the freshly updated momentum instead of the
    /// pre-update momentum the pseudocode adds.
    pub position_uses_new_momentum: bool,
    /// Feed `||p||^2 / d` to the thermostat instead of the written
    /// `||p|| / d`.
    pub thermostat_squared_norm: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub common: CommonHypers,
    pub kind: SamplerKind,
    #[serde(default)]
    pub variants: UpdateVariants,
}

/// `w += (-eps/2) (gamma (w - anchor) + beta_tilde g) + sqrt(eps) eta`.
pub fn sgld_step(w: &mut [f64], anchor: &[f64], grad: &[f64], noise: &[f64], h: &CommonHypers) {
    let root_eps = h.epsilon.sqrt();
    for i in 0..w.len() {
        let drift = h.gamma * (w[i] - anchor[i]) + h.beta_tilde * grad[i];
        w[i] += -0.5 * h.epsilon * drift + root_eps * noise[i];
    }
}

/// Moment state for the Adam-like sampler. The second moment starts at ones;
/// running decay powers implement the `1 - b^(t+1)` bias corrections.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamMoments {
    pub first: Vec<f64>,
    pub second: Vec<f64>,
    decay1_pow: f64,
    decay2_pow: f64,
}

impl AdamMoments {
    pub fn new(dim: usize) -> Self {
        Self {
            first: vec![0.0; dim],
            second: vec![1.0; dim],
            decay1_pow: 1.0,
            decay2_pow: 1.0,
        }
    }
}

/// Adam-preconditioned step. The moments track only the loss gradient, never
/// the prior drift, and the drift uses the bias-corrected first moment.
pub fn adamsgld_step(
    w: &mut [f64],
    moments: &mut AdamMoments,
    anchor: &[f64],
    grad: &[f64],
    noise: &[f64],
    h: &CommonHypers,
    ah: &AdamHypers,
) {
    moments.decay1_pow *= ah.decay1;
    moments.decay2_pow *= ah.decay2;
    let correction1 = 1.0 - moments.decay1_pow;
    let correction2 = 1.0 - moments.decay2_pow;
    for i in 0..w.len() {
        moments.first[i] = ah.decay1 * moments.first[i] + (1.0 - ah.decay1) * grad[i];
        moments.second[i] = ah.decay2 * moments.second[i] + (1.0 - ah.decay2) * grad[i] * grad[i];
        let m_hat = moments.first[i] / correction1;
        let v_hat = moments.second[i] / correction2;
        let eps_i = h.epsilon / (v_hat.sqrt() + ah.stability);
        let drift = h.gamma * (w[i] - anchor[i]) + h.beta_tilde * m_hat;
        w[i] += -0.5 * eps_i * drift + eps_i.sqrt() * noise[i];
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RmsPropMoments {
    pub second: Vec<f64>,
    decay_pow: f64,
}

impl RmsPropMoments {
    pub fn new(dim: usize) -> Self {
        Self {
            second: vec![1.0; dim],
            decay_pow: 1.0,
        }
    }
}

/// RMSProp-preconditioned step: like Adam but the drift uses the raw
/// gradient, with only a second-moment EMA.
pub fn rmspropsgld_step(
    w: &mut [f64],
    moments: &mut RmsPropMoments,
    anchor: &[f64],
    grad: &[f64],
    noise: &[f64],
    h: &CommonHypers,
    rh: &RmsPropHypers,
) {
    moments.decay_pow *= rh.decay;
    let correction = 1.0 - moments.decay_pow;
    for i in 0..w.len() {
        moments.second[i] = rh.decay * moments.second[i] + (1.0 - rh.decay) * grad[i] * grad[i];
        let v_hat = moments.second[i] / correction;
        let eps_i = h.epsilon / (v_hat.sqrt() + rh.stability);
        let drift = h.gamma * (w[i] - anchor[i]) + h.beta_tilde * grad[i];
        w[i] += -0.5 * eps_i * drift + eps_i.sqrt() * noise[i];
    }
}

/// Underdamped step: momentum takes the drift, friction and scaled noise;
/// the position advances by the pre-update momentum as the pseudocode adds
/// `p_t` (post-update behind the variant flag).
pub fn sghmc_step(
    w: &mut [f64],
    momentum: &mut [f64],
    anchor: &[f64],
    grad: &[f64],
    noise: &[f64],
    h: &CommonHypers,
    friction: f64,
    variants: &UpdateVariants,
) {
    let noise_scale = (2.0 * friction * h.epsilon).sqrt();
    for i in 0..w.len() {
        let drift = h.gamma * (w[i] - anchor[i]) + h.beta_tilde * grad[i];
        let dp = -0.5 * h.epsilon * drift - friction * momentum[i] + noise_scale * noise[i];
        let p_old = momentum[i];
        momentum[i] += dp;
        w[i] += if variants.position_uses_new_momentum {
            momentum[i]
        } else {
            p_old
        };
    }
}

/// SGHMC with a thermostat: friction is the evolving `alpha_t`, updated by
/// `alpha += ||p_t|| / d - eps` (pre-update momentum, plain norm as written;
/// squared norm behind the variant flag).
pub fn sgnht_step(
    w: &mut [f64],
    momentum: &mut [f64],
    thermostat: &mut f64,
    anchor: &[f64],
    grad: &[f64],
    noise: &[f64],
    h: &CommonHypers,
    variants: &UpdateVariants,
) {
    let d = w.len() as f64;
    let norm_sq: f64 = momentum.iter().map(|p| p * p).sum();
    let feedback = if variants.thermostat_squared_norm {
        norm_sq / d
    } else {
        norm_sq.sqrt() / d
    };
    let alpha = *thermostat;
    let noise_scale = (2.0 * alpha * h.epsilon).sqrt();
    for i in 0..w.len() {
        let drift = h.gamma * (w[i] - anchor[i]) + h.beta_tilde * grad[i];
        let dp = -0.5 * h.epsilon * drift - alpha * momentum[i] + noise_scale * noise[i];
        let p_old = momentum[i];
        momentum[i] += dp;
        w[i] += if variants.position_uses_new_momentum {
            momentum[i]
        } else {
            p_old
        };
    }
    *thermostat = alpha + feedback - h.epsilon;
}

/// Algorithm-specific evolving state.
#[derive(Debug, Clone)]
enum AuxState {
    Plain,
    Adam(AdamMoments),
    RmsProp(RmsPropMoments),
    Momentum(Vec<f64>),
    Thermostat { momentum: Vec<f64>, alpha: f64 },
}

impl AuxState {
    /// Initial state. SGHMC and SGNHT draw `p_0 ~ Normal(0, eps I)` from the
    /// chain's noise stream before the first step.
    fn init(kind: &SamplerKind, dim: usize, epsilon: f64, rng: &mut ChaCha8Rng) -> Self {
        let mut draw_momentum = || {
            let scale = epsilon.sqrt();
            (0..dim)
                .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
                .collect::<Vec<f64>>()
        };
        match kind {
            SamplerKind::Sgld => AuxState::Plain,
            SamplerKind::AdamSgld(_) => AuxState::Adam(AdamMoments::new(dim)),
            SamplerKind::RmsPropSgld(_) => AuxState::RmsProp(RmsPropMoments::new(dim)),
            SamplerKind::Sghmc(_) => AuxState::Momentum(draw_momentum()),
            SamplerKind::Sgnht(h) => AuxState::Thermostat {
                momentum: draw_momentum(),
                alpha: h.initial_friction,
            },
        }
    }
}

/// Minibatch loss trace of one chain. `losses[t]` is the loss of batch `t`
/// at the pre-step position `w_t`; entry 0 is the loss at the anchor. The
/// trace stops at the first non-finite loss or parameter, with the step index
/// recorded.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainTrace {
    pub losses: Vec<f64>,
    pub diverged_at: Option<usize>,
}

impl ChainTrace {
    pub fn diverged(&self) -> bool {
        self.diverged_at.is_some()
    }
}

/// Run one chain of `cfg.common.steps` steps starting at the task's true
/// parameter. Divergence never errors; it is recorded in the trace.
pub fn run_chain(task: &TaskSpec, cfg: &SamplerConfig, chain_seed: u64) -> ChainTrace {
    let ds = &task.dataset;
    let anchor: Vec<f64> = ds.true_params().as_slice().to_vec();
    let mut position = ds.true_params().clone();
    let dim = anchor.len();

    let mut noise_rng = seeds::stream("chain-noise", &[ds.seed, chain_seed]);
    let mut aux = AuxState::init(&cfg.kind, dim, cfg.common.epsilon, &mut noise_rng);
    let mut noise = vec![0.0; dim];

    let mut losses = Vec::with_capacity(cfg.common.steps);
    let mut diverged_at = None;
    for t in 0..cfg.common.steps {
        let batch = sample_batch(ds, cfg.common.batch_size, t as u64, chain_seed)
            .expect("batch size validated against dataset size");
        let (loss, grad) = batch_loss_and_gradient(&position, &batch)
            .expect("chain position shares the task architecture");
        if !loss.is_finite() {
            diverged_at = Some(t);
            break;
        }
        losses.push(loss);

        for v in noise.iter_mut() {
            *v = noise_rng.sample::<f64, _>(StandardNormal);
        }
        let w = position.as_mut_slice();
        match (&cfg.kind, &mut aux) {
            (SamplerKind::Sgld, AuxState::Plain) => {
                sgld_step(w, &anchor, grad.as_slice(), &noise, &cfg.common);
            }
            (SamplerKind::AdamSgld(ah), AuxState::Adam(moments)) => {
                adamsgld_step(w, moments, &anchor, grad.as_slice(), &noise, &cfg.common, ah);
            }
            (SamplerKind::RmsPropSgld(rh), AuxState::RmsProp(moments)) => {
                rmspropsgld_step(w, moments, &anchor, grad.as_slice(), &noise, &cfg.common, rh);
            }
            (SamplerKind::Sghmc(sh), AuxState::Momentum(p)) => {
                sghmc_step(
                    w,
                    p,
                    &anchor,
                    grad.as_slice(),
                    &noise,
                    &cfg.common,
                    sh.friction,
                    &cfg.variants,
                );
            }
            (SamplerKind::Sgnht(_), AuxState::Thermostat { momentum, alpha }) => {
                sgnht_step(
                    w,
                    momentum,
                    alpha,
                    &anchor,
                    grad.as_slice(),
                    &noise,
                    &cfg.common,
                    &cfg.variants,
                );
            }
            _ => unreachable!("aux state initialized from the same kind"),
        }
        if !position.all_finite() {
            diverged_at = Some(t + 1);
            break;
        }
    }
    ChainTrace {
        losses,
        diverged_at,
    }
}
