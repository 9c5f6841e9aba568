//! Exact local learning coefficient of a deep linear network task.
//!
//! The coefficient is determined by the layer sizes and the rank of the
//! composite true matrix, via an index set `Sigma` subject to three
//! combinatorial conditions. All arithmetic on this path is exact rational;
//! the benchmark's ground truth is never rounded.

use crate::dln::DlnArchitecture;
use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Rational = Ratio<i64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SigmaError {
    #[error("rank {rank} exceeds the smallest layer size {min_size}")]
    RankTooLarge { rank: usize, min_size: usize },
    #[error("no index set satisfies the conditions for deltas {deltas:?}")]
    NotFound { deltas: Vec<i64> },
    #[error("{count} index sets satisfy the conditions for deltas {deltas:?}")]
    Ambiguous { deltas: Vec<i64>, count: usize },
    #[error(
        "condition-3 readings disagree for deltas {deltas:?}: \
         max-over-complement selects {with_max:?}, min-over-complement selects {with_min:?}"
    )]
    ReadingsDisagree {
        deltas: Vec<i64>,
        with_max: Vec<usize>,
        with_min: Vec<usize>,
    },
    #[error("index set {sigma:?} is a singleton; the formula divides by ell = 0")]
    EllZero { sigma: Vec<usize> },
}

/// Which complement statistic condition 3 compares against. The printed
/// theorem says `max`, but condition 1 compares against `min`; the two only
/// provably coincide when the complement has at most one element, so both
/// readings are evaluated and any disagreement is refused upstream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ComplementBound {
    Max,
    Min,
}

/// The index set and derived integers feeding the coefficient formula.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SigmaDecomposition {
    /// `Delta_i = H_i - r` for `i = 0..=M`.
    pub deltas: Vec<i64>,
    /// Selected indices, ascending.
    pub sigma: Vec<usize>,
    /// `|Sigma| - 1`.
    pub ell: i64,
    /// Remainder term `a = sum - ell * (ceil(sum / ell) - 1)`.
    pub a: i64,
}

/// `Delta_i = H_i - r`, all nonnegative.
pub fn deltas(arch: &DlnArchitecture, rank: usize) -> Result<Vec<i64>, SigmaError> {
    if rank > arch.min_size() {
        return Err(SigmaError::RankTooLarge {
            rank,
            min_size: arch.min_size(),
        });
    }
    Ok(arch.sizes().iter().map(|&h| h as i64 - rank as i64).collect())
}

fn ceil_div(num: i64, den: i64) -> i64 {
    debug_assert!(num >= 0 && den > 0);
    (num + den - 1) / den
}

/// Find the unique index set satisfying the three conditions.
///
/// Condition 1 forces `Sigma` to contain every index whose delta is strictly
/// below some threshold and to never split a group of tied deltas, so the
/// only candidates are tie-complete prefixes of the delta-sorted order; each
/// of the at most `M + 1` prefixes is tested against conditions 2 and 3.
pub fn find_sigma(deltas: &[i64], bound: ComplementBound) -> Result<SigmaDecomposition, SigmaError> {
    assert!(!deltas.is_empty(), "deltas must be nonempty");
    assert!(deltas.iter().all(|&d| d >= 0), "deltas must be nonnegative");

    let mut order: Vec<usize> = (0..deltas.len()).collect();
    order.sort_by_key(|&i| (deltas[i], i));
    let global_max = deltas[*order.last().unwrap()];

    let mut matches: Vec<usize> = Vec::new(); // prefix lengths that qualify
    let mut prefix_sum: i64 = 0;
    for k in 0..order.len() {
        prefix_sum += deltas[order[k]];
        let complete_group =
            k + 1 == order.len() || deltas[order[k + 1]] > deltas[order[k]];
        if !complete_group {
            continue;
        }
        let ell = k as i64;
        let prefix_max = deltas[order[k]];
        // Condition 2.
        if prefix_sum < ell * prefix_max {
            continue;
        }
        // Condition 3, vacuous when the complement is empty.
        if k + 1 < order.len() {
            let complement_bound = match bound {
                ComplementBound::Max => global_max,
                ComplementBound::Min => deltas[order[k + 1]],
            };
            if prefix_sum >= ell * complement_bound {
                continue;
            }
        }
        matches.push(k + 1);
    }

    match matches.len() {
        0 => Err(SigmaError::NotFound {
            deltas: deltas.to_vec(),
        }),
        1 => {
            let len = matches[0];
            let mut sigma: Vec<usize> = order[..len].to_vec();
            sigma.sort_unstable();
            let sum: i64 = sigma.iter().map(|&i| deltas[i]).sum();
            let ell = len as i64 - 1;
            if ell == 0 {
                return Err(SigmaError::EllZero { sigma });
            }
            let a = sum - ell * (ceil_div(sum, ell) - 1);
            Ok(SigmaDecomposition {
                deltas: deltas.to_vec(),
                sigma,
                ell,
                a,
            })
        }
        count => Err(SigmaError::Ambiguous {
            deltas: deltas.to_vec(),
            count,
        }),
    }
}

/// Exact coefficient value with its float projection.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "LlcValueRepr", try_from = "LlcValueRepr")]
pub struct LlcValue {
    exact: Rational,
}

#[derive(Serialize, Deserialize, Clone)]
struct LlcValueRepr {
    num: i64,
    den: i64,
    value: f64,
}

impl From<LlcValue> for LlcValueRepr {
    fn from(v: LlcValue) -> Self {
        LlcValueRepr {
            num: *v.exact.numer(),
            den: *v.exact.denom(),
            value: v.as_f64(),
        }
    }
}

impl TryFrom<LlcValueRepr> for LlcValue {
    type Error = String;

    fn try_from(r: LlcValueRepr) -> Result<Self, String> {
        if r.den == 0 {
            return Err("zero denominator".into());
        }
        Ok(LlcValue {
            exact: Rational::new(r.num, r.den),
        })
    }
}

impl LlcValue {
    pub fn new(exact: Rational) -> Self {
        Self { exact }
    }

    pub fn exact(&self) -> Rational {
        self.exact
    }

    pub fn as_f64(&self) -> f64 {
        *self.exact.numer() as f64 / *self.exact.denom() as f64
    }
}

impl std::fmt::Display for LlcValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.exact)
    }
}

/// Evaluate the four-term formula for a given decomposition.
pub fn llc_from_sigma(
    h0: usize,
    hm: usize,
    rank: usize,
    sd: &SigmaDecomposition,
) -> Result<Rational, SigmaError> {
    if sd.ell == 0 {
        return Err(SigmaError::EllZero {
            sigma: sd.sigma.clone(),
        });
    }
    let r = rank as i64;
    let sum: i64 = sd.sigma.iter().map(|&i| sd.deltas[i]).sum();
    let sum_sq: i64 = sd.sigma.iter().map(|&i| sd.deltas[i] * sd.deltas[i]).sum();
    // Pair sum over ordered 2-combinations of Sigma.
    let pair_sum = (sum * sum - sum_sq) / 2;

    let rank_term = Rational::new(r * (h0 as i64 + hm as i64) - r * r, 2);
    let remainder_term = Rational::new(sd.a * (sd.ell - sd.a), 4 * sd.ell);
    let sum_term = Rational::new((sd.ell - 1) * sum * sum, 4 * sd.ell);
    let pair_term = Rational::new(pair_sum, 2);
    Ok(rank_term + remainder_term - sum_term + pair_term)
}

/// Exact coefficient for `(architecture, composite rank)`.
///
/// Both readings of condition 3 are evaluated; a task where they disagree is
/// refused rather than assigned a possibly wrong ground truth.
pub fn analytic_llc(arch: &DlnArchitecture, rank: usize) -> Result<LlcValue, SigmaError> {
    let deltas = deltas(arch, rank)?;
    let with_max = find_sigma(&deltas, ComplementBound::Max)?;
    let with_min = find_sigma(&deltas, ComplementBound::Min)?;
    if with_max.sigma != with_min.sigma {
        return Err(SigmaError::ReadingsDisagree {
            deltas,
            with_max: with_max.sigma,
            with_min: with_min.sigma,
        });
    }
    let value = llc_from_sigma(arch.input_dim(), arch.output_dim(), rank, &with_max)?;
    debug_assert!(value >= Rational::new(0, 1), "coefficient must be nonnegative");
    debug_assert!(
        value <= Rational::new(arch.param_dim() as i64, 2),
        "coefficient must not exceed d/2"
    );
    Ok(LlcValue::new(value))
}
