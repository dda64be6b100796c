//! Expectation kernel for a-contrario detection.
//!
//! Everything here is a pure function of integer counts. The central quantity
//! is the expected number of `n`-tuples sharing one of `W` windows when `S`
//! unit indicators are dropped uniformly and independently into the windows:
//!
//! ```text
//! E(C_n) = C(S, n) / W^(n-1)
//! ```
//!
//! An observed count `n` is unexpected when `E(C_n) < 1`. Taking logs gives the
//! perception score `Z = -(ln C(S, n) - (n-1) ln W) / S`, positive exactly when
//! the count is unexpected.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Largest argument for which [`log_factorial`] uses the exact value.
pub const STIRLING_CUTOFF: u64 = 20;

/// Score reported when there is no indicator mass (`S = 0`): nothing can be
/// anomalous.
pub const NO_ANOMALY_SCORE: f64 = -f64::MAX;

/// Score reported when a count exceeds the total mass it is tested against.
pub const SATURATED_SCORE: f64 = f64::MAX;

const FACTORIALS: [u64; 21] = {
    let mut table = [1u64; 21];
    let mut i = 1;
    while i < 21 {
        table[i] = table[i - 1] * i as u64;
        i += 1;
    }
    table
};

/// `ln(m!)`.
///
/// Exact (up to one rounding) for `m <= 20`, Stirling's expansion
/// `m ln m - m + ln(m)/2 + ln(2 pi)/2` above that.
pub fn log_factorial(m: u64) -> f64 {
    if m <= STIRLING_CUTOFF {
        (FACTORIALS[m as usize] as f64).ln()
    } else {
        let m = m as f64;
        m * m.ln() - m + 0.5 * m.ln() + 0.5 * (2.0 * PI).ln()
    }
}

/// `ln(m!)` with the Stirling series carried to `m^-5`. Used where a
/// probability rather than a sign is needed (binomial tails).
fn log_factorial_precise(m: u64) -> f64 {
    if m <= STIRLING_CUTOFF {
        return (FACTORIALS[m as usize] as f64).ln();
    }
    let x = m as f64;
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let series = inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 / 1260.0));
    x * x.ln() - x + 0.5 * (2.0 * PI * x).ln() + series
}

/// `ln C(s, n)`: a difference of three log-factorials, or a direct log-sum
/// when `min(n, s - n)` is small.
pub fn log_binomial(s: u64, n: u64) -> Result<f64> {
    if n > s {
        return Err(Error::domain(format!("C({s}, {n}) requires n <= S")));
    }
    Ok(log_binomial_unchecked(s, n))
}

/// When the smaller of `n`, `S - n` is at most the Stirling cutoff, the
/// product `S (S-1) ... (S-k+1) / k!` is summed in logs directly; Stirling's
/// error is worst at small arguments and this keeps e.g. `C(S, 1) = S` exact.
#[inline]
fn log_binomial_unchecked(s: u64, n: u64) -> f64 {
    let k = n.min(s - n);
    if k == 0 {
        return 0.0;
    }
    if k <= STIRLING_CUTOFF {
        let falling: f64 = (0..k).map(|i| ((s - i) as f64).ln()).sum();
        return falling - log_factorial(k);
    }
    log_factorial(s) - log_factorial(s - n) - log_factorial(n)
}

fn log_binomial_precise(s: u64, n: u64) -> f64 {
    if n == 0 || n == s {
        return 0.0;
    }
    log_factorial_precise(s) - log_factorial_precise(s - n) - log_factorial_precise(n)
}

/// Parameters of the tuple-expectation model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TupleExpectationParams {
    /// Total indicator mass `S`.
    pub sum: u64,
    /// Number of windows `W`, at least one.
    pub windows: u64,
    /// Tuple size / count under test `n`.
    pub count: u64,
}

impl TupleExpectationParams {
    pub fn new(sum: u64, windows: u64, count: u64) -> Result<Self> {
        if windows == 0 {
            return Err(Error::domain("the number of windows W must be at least 1"));
        }
        Ok(Self {
            sum,
            windows,
            count,
        })
    }
}

/// `ln E(C_n)`. Domain error when `n > S`.
pub fn ln_tuple_expectation(params: TupleExpectationParams) -> Result<f64> {
    let TupleExpectationParams {
        sum,
        windows,
        count,
    } = params;
    if windows == 0 {
        return Err(Error::domain("the number of windows W must be at least 1"));
    }
    let ln_c = log_binomial(sum, count)?;
    Ok(ln_c - (count as f64 - 1.0) * (windows as f64).ln())
}

/// `E(C_n) = C(S, n) / W^(n-1)`, evaluated in the log domain. Overflows to
/// `+inf` for extreme parameters.
pub fn tuple_expectation(params: TupleExpectationParams) -> Result<f64> {
    ln_tuple_expectation(params).map(f64::exp)
}

/// Perception score `Z`. Positive means anomalous; larger is more anomalous.
///
/// `S = 0` yields [`NO_ANOMALY_SCORE`], `n > S` yields [`SATURATED_SCORE`].
pub fn perception_score(params: TupleExpectationParams) -> f64 {
    perception_score_raw(params.sum, params.windows, params.count)
}

#[inline]
pub(crate) fn perception_score_raw(sum: u64, windows: u64, count: u64) -> f64 {
    if sum == 0 {
        return NO_ANOMALY_SCORE;
    }
    if count > sum {
        return SATURATED_SCORE;
    }
    let ln_e = log_binomial_unchecked(sum, count) - (count as f64 - 1.0) * (windows as f64).ln();
    -ln_e / sum as f64
}

/// Upper binomial tail `B(N, k, p) = sum_{i=k..N} C(N,i) p^i (1-p)^(N-i)`.
///
/// Each term is formed in log space, the terms are summed largest first with
/// compensation, and the result is clamped to `[0, 1]`.
pub fn binomial_tail(n: u64, k: u64, p: f64) -> Result<f64> {
    if k > n {
        return Err(Error::domain(format!(
            "binomial tail needs k <= N, got k={k}, N={n}"
        )));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::domain(format!("probability {p} outside [0, 1]")));
    }
    if k == 0 {
        return Ok(1.0);
    }
    if p == 0.0 {
        return Ok(0.0);
    }
    if p == 1.0 {
        return Ok(1.0);
    }
    let ln_p = p.ln();
    let ln_q = (-p).ln_1p();
    let mut terms: Vec<f64> = (k..=n)
        .map(|i| log_binomial_precise(n, i) + i as f64 * ln_p + (n - i) as f64 * ln_q)
        .collect();
    terms.sort_by(|a, b| b.total_cmp(a));
    let peak = terms[0];
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for t in terms {
        let x = (t - peak).exp();
        if x == 0.0 {
            break;
        }
        // Neumaier
        let s = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - s) + x;
        } else {
            comp += (x - s) + sum;
        }
        sum = s;
    }
    Ok(((sum + comp).ln() + peak).exp().clamp(0.0, 1.0))
}

/// Inputs to the generic Helmholtz meaningfulness test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonMeaningfulQuery {
    /// Number of tested configurations `N_conf`.
    pub configurations: u64,
    /// Number of objects `N`.
    pub objects: u64,
    /// Objects sharing the quality, `0 <= k <= N`.
    pub sharing: u64,
    /// Probability of the quality for a single object.
    pub probability: f64,
    pub epsilon: f64,
}

impl EpsilonMeaningfulQuery {
    pub fn new(configurations: u64, objects: u64, sharing: u64, probability: f64) -> Result<Self> {
        Self::with_epsilon(configurations, objects, sharing, probability, 1.0)
    }

    pub fn with_epsilon(
        configurations: u64,
        objects: u64,
        sharing: u64,
        probability: f64,
        epsilon: f64,
    ) -> Result<Self> {
        if configurations == 0 || objects == 0 {
            return Err(Error::domain("N_conf and N must be positive"));
        }
        if sharing > objects {
            return Err(Error::domain(format!(
                "k={sharing} exceeds the number of objects N={objects}"
            )));
        }
        if !(0.0..=1.0).contains(&probability) {
            return Err(Error::domain(format!(
                "probability {probability} outside [0, 1]"
            )));
        }
        if epsilon.is_nan() || epsilon <= 0.0 {
            return Err(Error::domain(format!(
                "epsilon must be positive, got {epsilon}"
            )));
        }
        Ok(Self {
            configurations,
            objects,
            sharing,
            probability,
            epsilon,
        })
    }
}

/// Outcome of [`is_epsilon_meaningful`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Meaningfulness {
    /// Number of false alarms, `N_conf * B(N, k, p)`.
    pub nfa: f64,
    /// `nfa < epsilon`.
    pub meaningful: bool,
}

pub fn is_epsilon_meaningful(q: &EpsilonMeaningfulQuery) -> Result<Meaningfulness> {
    let tail = binomial_tail(q.objects, q.sharing, q.probability)?;
    let nfa = q.configurations as f64 * tail;
    Ok(Meaningfulness {
        nfa,
        meaningful: nfa < q.epsilon,
    })
}

/// Parameters for the expected number of runs of successes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunExpectationParams {
    pub trials: u64,
    pub run_length: u64,
    pub p_success: f64,
}

/// Expected number of length-`k` success runs in `n` trials,
/// `(n - (k - 1)) * p^k`, counting every starting position.
pub fn expected_run_occurrences(params: RunExpectationParams) -> Result<f64> {
    let RunExpectationParams {
        trials,
        run_length,
        p_success,
    } = params;
    if run_length == 0 || trials == 0 {
        return Err(Error::domain("trials and run length must be positive"));
    }
    if run_length > trials {
        return Err(Error::domain(format!(
            "run length {run_length} exceeds the number of trials {trials}"
        )));
    }
    if !(0.0..=1.0).contains(&p_success) {
        return Err(Error::domain(format!(
            "probability {p_success} outside [0, 1]"
        )));
    }
    let starts = (trials - (run_length - 1)) as f64;
    Ok(starts * p_success.powf(run_length as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn exact_ln_factorial(m: u64) -> f64 {
        (1..=m).map(|i| (i as f64).ln()).sum()
    }

    #[test]
    fn log_factorial_small_values_are_exact() {
        assert_eq!(log_factorial(0), 0.0);
        assert_eq!(log_factorial(1), 0.0);
        for m in 2..=STIRLING_CUTOFF {
            assert_relative_eq!(
                log_factorial(m),
                exact_ln_factorial(m),
                max_relative = 1e-14
            );
        }
    }

    #[test]
    fn log_factorial_59_is_close_to_exact() {
        // Frozen from the cumulative ln-sum: ln(59!) = 184.533828861449...
        let exact = exact_ln_factorial(59);
        assert_relative_eq!(exact, 184.533_828_861_449, max_relative = 1e-12);
        assert!((log_factorial(59) - exact).abs() / exact < 1e-3);
    }

    #[test]
    fn log_binomial_examples() {
        assert_relative_eq!(
            log_binomial(7, 4).unwrap(),
            35f64.ln(),
            max_relative = 1e-14
        );
        for s in [0u64, 1, 5, 30, 1000] {
            assert_eq!(log_binomial(s, 0).unwrap(), 0.0);
            assert_eq!(log_binomial(s, s).unwrap(), 0.0);
        }
        assert!(matches!(log_binomial(3, 4), Err(Error::Domain(_))));
    }

    #[test]
    fn tuple_expectation_birthday_values() {
        let e = |n| tuple_expectation(TupleExpectationParams::new(30, 365, n).unwrap()).unwrap();
        assert!((e(2) - 1.192).abs() <= 1e-3);
        assert!((e(3) - 0.0305).abs() <= 5e-4);
        assert!((e(4) - 5.6e-4).abs() <= 0.2e-4);
    }

    #[test]
    fn tuple_expectation_small_case() {
        let e = tuple_expectation(TupleExpectationParams::new(7, 5, 4).unwrap()).unwrap();
        assert_relative_eq!(e, 0.28, max_relative = 1e-12);
        let e = tuple_expectation(TupleExpectationParams::new(7, 5, 3).unwrap()).unwrap();
        assert_relative_eq!(e, 1.4, max_relative = 1e-12);
    }

    #[test]
    fn tuple_expectation_of_singletons_is_the_sum() {
        for (s, w) in [(1u64, 1u64), (7, 5), (30, 365), (1000, 3), (123_456_789, 2)] {
            let e = tuple_expectation(TupleExpectationParams::new(s, w, 1).unwrap()).unwrap();
            assert_relative_eq!(e, s as f64, max_relative = 1e-14);
        }
    }

    #[test]
    fn zero_windows_rejected() {
        assert!(TupleExpectationParams::new(3, 0, 1).is_err());
    }

    #[test]
    fn perception_score_signs() {
        let z = |s, w, n| {
            perception_score(TupleExpectationParams {
                sum: s,
                windows: w,
                count: n,
            })
        };
        assert!(z(7, 5, 3) < 0.0);
        assert!(z(7, 5, 4) > 0.0);
        assert_relative_eq!(z(7, 5, 0), -(5f64.ln()) / 7.0, max_relative = 1e-14);
        assert_eq!(z(0, 5, 3), NO_ANOMALY_SCORE);
        assert_eq!(z(7, 5, 8), SATURATED_SCORE);
    }

    #[test]
    fn perception_score_iglewicz_extreme() {
        // ln C(130, 59) from exact log-factorials, minus 58 ln 10, over 130.
        let exact = -(exact_ln_factorial(130)
            - exact_ln_factorial(71)
            - exact_ln_factorial(59)
            - 58.0 * 10f64.ln())
            / 130.0;
        let z = perception_score(TupleExpectationParams {
            sum: 130,
            windows: 10,
            count: 59,
        });
        assert!((z - exact).abs() < 1e-3);
        assert!((z - 0.36).abs() < 0.01);
    }

    #[test]
    fn binomial_tail_examples() {
        assert_eq!(binomial_tail(9, 0, 0.3).unwrap(), 1.0);
        assert_relative_eq!(
            binomial_tail(4, 2, 0.5).unwrap(),
            0.6875,
            max_relative = 1e-13
        );
        assert_relative_eq!(
            binomial_tail(6, 6, 0.3).unwrap(),
            0.3f64.powi(6),
            max_relative = 1e-12
        );
        assert!(binomial_tail(3, 4, 0.5).is_err());
        assert!(binomial_tail(3, 1, 1.5).is_err());
        assert_eq!(binomial_tail(3, 1, 0.0).unwrap(), 0.0);
        assert_eq!(binomial_tail(3, 3, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn meaningfulness_examples() {
        let m = is_epsilon_meaningful(&EpsilonMeaningfulQuery::new(1, 4, 2, 0.5).unwrap()).unwrap();
        assert_relative_eq!(m.nfa, 0.6875, max_relative = 1e-13);
        assert!(m.meaningful);

        let m =
            is_epsilon_meaningful(&EpsilonMeaningfulQuery::new(1, 10, 0, 0.2).unwrap()).unwrap();
        assert_eq!(m.nfa, 1.0);
        assert!(!m.meaningful);

        let m =
            is_epsilon_meaningful(&EpsilonMeaningfulQuery::new(100, 4, 4, 0.5).unwrap()).unwrap();
        assert_relative_eq!(m.nfa, 6.25, max_relative = 1e-12);
        assert!(!m.meaningful);
    }

    #[test]
    fn meaningfulness_query_validation() {
        assert!(EpsilonMeaningfulQuery::new(0, 4, 2, 0.5).is_err());
        assert!(EpsilonMeaningfulQuery::new(1, 4, 5, 0.5).is_err());
        assert!(EpsilonMeaningfulQuery::new(1, 4, 2, -0.1).is_err());
        assert!(EpsilonMeaningfulQuery::with_epsilon(1, 4, 2, 0.5, 0.0).is_err());
    }

    #[test]
    fn run_expectation_examples() {
        let p = 18.0 / 37.0;
        let single = expected_run_occurrences(RunExpectationParams {
            trials: 22,
            run_length: 22,
            p_success: p,
        })
        .unwrap();
        assert!((1e-7..2e-7).contains(&single));

        let certain = expected_run_occurrences(RunExpectationParams {
            trials: 9,
            run_length: 9,
            p_success: 1.0,
        })
        .unwrap();
        assert_eq!(certain, 1.0);

        let many = expected_run_occurrences(RunExpectationParams {
            trials: 10_000_000,
            run_length: 22,
            p_success: p,
        })
        .unwrap();
        assert!(many >= 1.0);

        assert!(expected_run_occurrences(RunExpectationParams {
            trials: 3,
            run_length: 4,
            p_success: 0.5,
        })
        .is_err());
    }
}
