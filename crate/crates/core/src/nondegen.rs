//! Nondegeneracy certification and the eigenweight bound.
//!
//! A Bell expression is nondegenerate on a dimension vector when
//! C(I,d,2) < 2 C(I,d,1), with C(I,d,t) the maximum over local
//! measurements of the sum of the top t Bell-operator eigenvalues. A
//! certificate stores C(I,d,1), an upper bound on C(I,d,2), and how the
//! numbers were obtained: analytically for MABK over qubits, or by a
//! seesaw heuristic (lower-side estimates only, flagged as such).
//!
//! Given a certificate and an observed Bell value B, the epsilon window
//! converts into a lower bound a1 >= 1 - eps1/eps2 on the top spectral
//! weight of the unknown state.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bell::{assemble_from_observables, observable_terms, BellExpression, MeasurementConfig};
use crate::error::{Error, Result};
use crate::exec;
use crate::qmat::{hermitian_eig, partial_trace_keeping, ComplexMatrix, DimensionVector};
use crate::util::derive_seed;

/// Seesaw sweep convergence threshold on the objective.
const SWEEP_TOL: f64 = 1e-10;
/// Hard cap on seesaw sweeps per restart.
const MAX_SWEEPS: usize = 200;
/// Strict-inequality margin for the nondegeneracy flag.
const NONDEGEN_MARGIN: f64 = 1e-12;

/// How a certificate's constants were obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CertMethod {
    /// Closed-form values for MABK over qubits.
    #[serde(rename = "analytic-MABK")]
    AnalyticMabk,
    /// Seesaw estimates; c2_upper is not a certified upper bound.
    #[serde(rename = "heuristic-seesaw")]
    HeuristicSeesaw,
}

/// Nondegeneracy certificate for a Bell expression on a dimension vector.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NondegeneracyCertificate {
    pub expr_id: String,
    pub dims: Vec<usize>,
    /// C(I, d, 1), the dimension-restricted Tsirelson value.
    pub c1: f64,
    /// Upper bound on C(I, d, 2).
    pub c2_upper: f64,
    pub method: CertMethod,
    pub nondegenerate: bool,
    /// The epsilon budget 2 c1 - c2_upper; positive iff nondegenerate.
    pub epsilon_budget: f64,
}

impl NondegeneracyCertificate {
    pub fn total_dim(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("certificate serialization cannot fail")
    }
}

/// Eigenweight and purity bound extracted from an observed Bell value.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PurityBound {
    /// The observed Bell value B.
    pub bell_value: f64,
    pub eps1: f64,
    pub eps2: f64,
    /// Lower bound on the top spectral weight; 0 when vacuous.
    pub a1_lower: f64,
    /// Lower bound on Tr(rho^2).
    pub purity_lower: f64,
}

/// Result of a seesaw maximization.
#[derive(Clone, Debug)]
pub struct SeesawOutcome {
    /// Best objective found: sum of the top t Bell-operator eigenvalues.
    pub value: f64,
    /// Measurement configuration achieving it.
    pub config: MeasurementConfig,
    /// Sweeps used by the winning restart.
    pub sweeps: usize,
    /// Objective after each sweep of the winning restart (nondecreasing).
    pub history: Vec<f64>,
}

/// Heuristically maximize the sum of the top `t` Bell-operator eigenvalues
/// over local projective measurements, t in {1, 2}.
///
/// Each restart starts from Haar-like random bases and alternates over
/// parties: holding the others fixed, the party's settings are replaced by
/// the projectors that maximize Tr(P M), with P the projector onto the
/// current top-t eigenspace; M and P are recomputed after every party
/// update, so the objective never decreases. Restarts are independent and
/// merged by a max-reduction keyed on (value, restart index).
///
/// The result is a lower estimate of C(I, d, t); non-convergence is not an
/// error (the best value so far is returned with its sweep count).
pub fn seesaw_eigsum(
    expr: &BellExpression,
    dims: &DimensionVector,
    t: usize,
    restarts: usize,
    seed: u64,
) -> Result<SeesawOutcome> {
    if !(t == 1 || t == 2) {
        return Err(Error::InvalidArgument(format!(
            "seesaw eigenvalue sum supports t in {{1, 2}}, got {t}"
        )));
    }
    if restarts == 0 {
        return Err(Error::InvalidArgument("need at least one restart".into()));
    }
    let sc = expr.scenario();
    if dims.parties() != sc.parties() {
        return Err(Error::DimensionMismatch(format!(
            "{} dimensions for a {}-party expression",
            dims.parties(),
            sc.parties()
        )));
    }
    if !sc.all_binary_outcomes() {
        return Err(Error::InvalidArgument(
            "seesaw requires binary outcomes (projector split by eigenvalue sign)".into(),
        ));
    }

    let terms = observable_terms(expr);
    let outcomes = exec::map_indexed(restarts, |restart| {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x5ee5aa, restart as u64));
        run_restart(expr, dims, t, &terms, &mut rng)
    });

    // Deterministic merge: larger value wins, earlier restart breaks ties.
    let mut best: Option<SeesawOutcome> = None;
    for candidate in outcomes {
        let candidate = candidate?;
        let replace = match &best {
            None => true,
            Some(b) => candidate.value > b.value,
        };
        if replace {
            best = Some(candidate);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn run_restart(
    expr: &BellExpression,
    dims: &DimensionVector,
    t: usize,
    terms: &[(usize, usize, f64)],
    rng: &mut ChaCha8Rng,
) -> Result<SeesawOutcome> {
    let sc = expr.scenario();
    let n = sc.parties();
    let config = MeasurementConfig::random_projective(dims.dims(), sc.settings(), sc.outcomes(), rng)?;

    // Working state: projectors for outcome 0 per (party, setting); the
    // observable is 2 P0 - I.
    let mut proj0: Vec<Vec<ComplexMatrix>> = (0..n)
        .map(|i| (0..sc.settings()[i]).map(|x| config.op(i, x, 0).clone()).collect())
        .collect();

    let observables = |proj0: &Vec<Vec<ComplexMatrix>>| -> Vec<Vec<ComplexMatrix>> {
        proj0
            .iter()
            .enumerate()
            .map(|(i, per_setting)| {
                let id = ComplexMatrix::identity(dims.dims()[i]);
                per_setting
                    .iter()
                    .map(|p| p.scaled_re(2.0).sub(&id))
                    .collect()
            })
            .collect()
    };

    let objective = |proj0: &Vec<Vec<ComplexMatrix>>| -> Result<(f64, ComplexMatrix)> {
        let obs = observables(proj0);
        let m = assemble_from_observables(terms, sc, &obs, dims.dims());
        let eig = hermitian_eig(&m)?;
        let value: f64 = eig.values.iter().take(t).sum();
        Ok((value, eig.top_projector(t)))
    };

    let (mut value, mut top_proj) = objective(&proj0)?;
    let mut history = vec![value];
    let mut sweeps = 0;

    while sweeps < MAX_SWEEPS {
        let before = value;
        for party in 0..n {
            for setting in 0..sc.settings()[party] {
                proj0[party][setting] =
                    best_projector_for(terms, sc, &observables(&proj0), dims.dims(), &top_proj, party, setting)?;
            }
            let (v, p) = objective(&proj0)?;
            value = v;
            top_proj = p;
        }
        sweeps += 1;
        history.push(value);
        if value - before < SWEEP_TOL {
            break;
        }
    }

    // Package the final projectors as a full measurement configuration.
    let ops: Vec<Vec<Vec<ComplexMatrix>>> = proj0
        .iter()
        .enumerate()
        .map(|(i, per_setting)| {
            let id = ComplexMatrix::identity(dims.dims()[i]);
            per_setting
                .iter()
                .map(|p| vec![p.clone(), id.sub(p)])
                .collect()
        })
        .collect();
    let config = MeasurementConfig::new(dims.dims().to_vec(), ops)?;
    Ok(SeesawOutcome {
        value,
        config,
        sweeps,
        history,
    })
}

/// Optimal outcome-0 projector for one (party, setting) against a fixed
/// top-eigenspace projector P.
///
/// The objective contribution is Tr(O G) with O the ±1 observable and G
/// the party-local effective operator; the maximizer assigns outcome 0 to
/// the nonnegative eigenspace of G (zero eigenvalues deterministically go
/// to outcome 0).
fn best_projector_for(
    terms: &[(usize, usize, f64)],
    sc: &crate::bell::Scenario,
    observables: &[Vec<ComplexMatrix>],
    dims: &[usize],
    top_proj: &ComplexMatrix,
    party: usize,
    setting: usize,
) -> Result<ComplexMatrix> {
    let n = dims.len();
    let total: usize = dims.iter().product();
    let identities: Vec<ComplexMatrix> = dims.iter().map(|&d| ComplexMatrix::identity(d)).collect();

    // Effective embedded operator: terms whose mask involves this party at
    // this setting, with the identity in the party's slot.
    let mut embedded = ComplexMatrix::zeros(total, total);
    for &(x_idx, mask, w) in terms {
        if mask & (1 << party) == 0 {
            continue;
        }
        let x = sc.setting_tuple(x_idx);
        if x[party] != setting {
            continue;
        }
        let factors: Vec<&ComplexMatrix> = (0..n)
            .map(|j| {
                if j != party && mask & (1 << j) != 0 {
                    &observables[j][x[j]]
                } else {
                    &identities[j]
                }
            })
            .collect();
        embedded.add_scaled_in_place(&crate::qmat::kron_all(&factors), w);
    }

    let effective = partial_trace_keeping(&embedded.matmul(top_proj), dims, party);
    let effective = effective.add(&effective.dagger()).scaled_re(0.5);
    let eig = hermitian_eig(&effective)?;

    let d = dims[party];
    let mut proj = ComplexMatrix::zeros(d, d);
    for (k, &lambda) in eig.values.iter().enumerate() {
        if lambda < 0.0 {
            continue;
        }
        let v = eig.eigenvector(k);
        for i in 0..d {
            for j in 0..d {
                let cur = proj.get(i, j);
                proj.set(i, j, cur + v[i] * v[j].conj());
            }
        }
    }
    Ok(proj)
}

/// Certified upper bound 2^(n/2) on C(MABK_n, qubits, 2).
///
/// The two largest eigenvalues of any MABK Bell operator over qubits obey
/// l1^2 + l2^2 <= 2^(n-1); maximizing l1 + l2 under that constraint gives
/// 2^(n/2).
pub fn mabk_c2_upper(n: usize) -> f64 {
    2f64.powf(n as f64 / 2.0)
}

/// Assemble a certificate from (c1, c2_upper).
///
/// `nondegenerate` is set iff c2_upper < 2 c1 strictly (1e-12 margin);
/// the stored budget 2 c1 - c2_upper is the total epsilon window.
pub fn certify(
    expr_id: &str,
    dims: &DimensionVector,
    c1: f64,
    c2_upper: f64,
    method: CertMethod,
) -> Result<NondegeneracyCertificate> {
    if !(c1 > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "certification needs c1 > 0, got {c1}"
        )));
    }
    let budget = 2.0 * c1 - c2_upper;
    Ok(NondegeneracyCertificate {
        expr_id: expr_id.to_string(),
        dims: dims.dims().to_vec(),
        c1,
        c2_upper,
        method,
        nondegenerate: c2_upper < 2.0 * c1 - NONDEGEN_MARGIN,
        epsilon_budget: budget,
    })
}

/// Convert an observed Bell value into the a1 eigenweight bound.
///
/// eps1 is set to its minimum admissible value c1 - B (which maximizes
/// a1 within the window), eps2 takes the rest of the budget capped at c1.
/// When eps1 >= eps2 the bound is vacuous and a1 = 0. The purity bound
/// puts the remaining mass uniformly on the other r - 1 levels; below
/// a1 = 1/r the constraint is inactive and the bound saturates at 1/r.
pub fn purity_bound(cert: &NondegeneracyCertificate, bell_value: f64) -> Result<PurityBound> {
    if bell_value > cert.c1 + 1e-9 {
        return Err(Error::Unphysical(format!(
            "observed Bell value {bell_value} exceeds the certified maximum {}; \
             the dimension assumption or the certificate is wrong",
            cert.c1
        )));
    }
    let eps1 = (cert.c1 - bell_value).max(0.0);
    let eps2 = (cert.epsilon_budget - eps1).min(cert.c1);
    let a1_lower = if eps1 < eps2 { 1.0 - eps1 / eps2 } else { 0.0 };

    let r = cert.total_dim() as f64;
    let a_eff = a1_lower.max(1.0 / r);
    let purity_lower = a_eff * a_eff + (1.0 - a_eff) * (1.0 - a_eff) / (r - 1.0);

    Ok(PurityBound {
        bell_value,
        eps1,
        eps2,
        a1_lower,
        purity_lower,
    })
}
