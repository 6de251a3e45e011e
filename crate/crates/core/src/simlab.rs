//! Simulated Bell-experiment data: ideal MABK configurations, noise
//! models, finite-shot sampling, and the sweep driver.
//!
//! The canonical perturbation for threshold studies is white noise alone
//! (visibility v, zero jitter): it keeps the Bell value exactly linear in
//! v and makes every reported curve smooth in one parameter. Basis and
//! state jitter exist for robustness experiments on top of that.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::bell::{born_correlation, mabk, pauli_config, Correlation, MeasurementConfig};
use crate::entbounds::{analyze, BoundReport};
use crate::error::{Error, Result};
use crate::exec;
use crate::nondegen::{certify, mabk_c2_upper, CertMethod, NondegeneracyCertificate};
use crate::qmat::{ghz_state, hermitian_eig, ComplexMatrix, DensityMatrix, DimensionVector};
use crate::util::{derive_seed, fmt_g12};

/// Perturbation applied to an ideal configuration.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NoiseModel {
    /// White-noise mixing weight on the state: rho -> v rho + (1-v) I/r.
    pub visibility: f64,
    /// Std-dev (radians) of random rotations applied to measurement bases.
    pub angle_jitter: f64,
    /// Strength of the random local-unitary perturbation of the state.
    pub state_jitter: f64,
    pub seed: u64,
}

impl NoiseModel {
    pub fn new(visibility: f64, angle_jitter: f64, state_jitter: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&visibility) {
            return Err(Error::InvalidArgument(format!(
                "visibility must lie in [0, 1], got {visibility}"
            )));
        }
        if angle_jitter < 0.0 || state_jitter < 0.0 {
            return Err(Error::InvalidArgument(
                "jitter strengths must be nonnegative".into(),
            ));
        }
        Ok(Self {
            visibility,
            angle_jitter,
            state_jitter,
            seed,
        })
    }

    /// Pure white noise at the given visibility.
    pub fn white(visibility: f64, seed: u64) -> Result<Self> {
        Self::new(visibility, 0.0, 0.0, seed)
    }
}

/// A grid of noise models to push through the full pipeline.
#[derive(Clone, Debug)]
pub struct SweepSpec {
    pub n: usize,
    pub grid: Vec<NoiseModel>,
    pub restarts: usize,
    pub seed: u64,
}

impl SweepSpec {
    pub fn new(n: usize, grid: Vec<NoiseModel>, restarts: usize, seed: u64) -> Result<Self> {
        if grid.is_empty() {
            return Err(Error::InvalidArgument("sweep grid is empty".into()));
        }
        if n < 2 {
            return Err(Error::InvalidArgument("sweep needs n >= 2".into()));
        }
        Ok(Self {
            n,
            grid,
            restarts,
            seed,
        })
    }

    /// White-noise grid from `v_from` down (or up) to `v_to` in steps of
    /// `v_step`, inclusive of both ends up to rounding. Per-point seeds
    /// derive from (seed, grid index).
    pub fn white_noise_grid(
        n: usize,
        v_from: f64,
        v_to: f64,
        v_step: f64,
        restarts: usize,
        seed: u64,
    ) -> Result<Self> {
        if v_step <= 0.0 {
            return Err(Error::InvalidArgument("step must be positive".into()));
        }
        let span = (v_to - v_from).abs();
        let count = (span / v_step).round() as usize;
        let dir = if v_to >= v_from { 1.0 } else { -1.0 };
        let mut grid = Vec::with_capacity(count + 1);
        for i in 0..=count {
            let v = (v_from + dir * v_step * i as f64).clamp(0.0, 1.0);
            grid.push(NoiseModel::white(v, derive_seed(seed, 0x9015e, i as u64))?);
        }
        Self::new(n, grid, restarts, seed)
    }
}

/// The maximally violating MABK configuration: GHZ-type state with phase
/// 2 pi (n-1)/8 and sigma_x / sigma_y measurements on every qubit.
pub fn ideal_configuration(n: usize) -> Result<(DensityMatrix, MeasurementConfig)> {
    let phase = std::f64::consts::PI * (n as f64 - 1.0) / 4.0;
    let state = ghz_state(n, phase)?;
    Ok((DensityMatrix::from_pure(&state), pauli_config(n)))
}

/// Random Hermitian matrix of unit spectral norm.
fn random_unit_generator(d: usize, rng: &mut ChaCha8Rng) -> ComplexMatrix {
    let g = ComplexMatrix::from_fn(d, d, |_, _| {
        Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    let h = g.add(&g.dagger()).scaled_re(0.5);
    let eig = hermitian_eig(&h).expect("symmetrized matrix is Hermitian");
    let spectral = eig
        .values
        .iter()
        .fold(0.0f64, |acc, &v| acc.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    h.scaled_re(1.0 / spectral)
}

/// exp(i angle H) for Hermitian H, via the spectral decomposition.
fn unitary_exp(h: &ComplexMatrix, angle: f64) -> ComplexMatrix {
    let eig = hermitian_eig(h).expect("generator is Hermitian");
    let d = h.rows();
    let mut out = ComplexMatrix::zeros(d, d);
    for (k, &lambda) in eig.values.iter().enumerate() {
        let phase = Complex64::from_polar(1.0, angle * lambda);
        let v = eig.eigenvector(k);
        for i in 0..d {
            for j in 0..d {
                let cur = out.get(i, j);
                out.set(i, j, cur + v[i] * v[j].conj() * phase);
            }
        }
    }
    out
}

/// Perturb a configuration: conjugate the state by a random product
/// unitary of strength `state_jitter`, mix in white noise at the given
/// visibility, and rotate every measurement basis by an independent random
/// rotation of strength `angle_jitter`. All invariants are re-validated on
/// the way out.
pub fn apply_noise(
    rho: &DensityMatrix,
    meas: &MeasurementConfig,
    model: &NoiseModel,
) -> Result<(DensityMatrix, MeasurementConfig)> {
    if !(0.0..=1.0).contains(&model.visibility) || model.angle_jitter < 0.0 || model.state_jitter < 0.0
    {
        return Err(Error::InvalidArgument("invalid noise model".into()));
    }
    if rho.dim() != meas.total_dim() {
        return Err(Error::DimensionMismatch(format!(
            "state dimension {} vs measurement dimension {}",
            rho.dim(),
            meas.total_dim()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(model.seed, 0x4e015e, 0));
    let dims = meas.dims().to_vec();
    let r = rho.dim();

    // State jitter: product of per-site unitaries.
    let mut state_matrix = rho.matrix().clone();
    if model.state_jitter > 0.0 {
        let factors: Vec<ComplexMatrix> = dims
            .iter()
            .map(|&d| unitary_exp(&random_unit_generator(d, &mut rng), model.state_jitter))
            .collect();
        let refs: Vec<&ComplexMatrix> = factors.iter().collect();
        let u = crate::qmat::kron_all(&refs);
        state_matrix = u.matmul(&state_matrix).matmul(&u.dagger());
    }

    // White noise.
    if model.visibility < 1.0 {
        state_matrix = state_matrix
            .scaled_re(model.visibility)
            .add(&ComplexMatrix::identity(r).scaled_re((1.0 - model.visibility) / r as f64));
    }
    let noisy_state = DensityMatrix::new(state_matrix)?;

    // Measurement jitter: independent small rotation per (party, setting).
    let noisy_meas = if model.angle_jitter > 0.0 {
        let mut ops = Vec::with_capacity(meas.parties());
        for (party, &d) in dims.iter().enumerate() {
            let mut per_setting = Vec::with_capacity(meas.settings_of(party));
            for setting in 0..meas.settings_of(party) {
                let rot = unitary_exp(&random_unit_generator(d, &mut rng), model.angle_jitter);
                let rot_dag = rot.dagger();
                let outs: Vec<ComplexMatrix> = (0..meas.outcomes_of(party))
                    .map(|o| rot.matmul(meas.op(party, setting, o)).matmul(&rot_dag))
                    .collect();
                per_setting.push(outs);
            }
            ops.push(per_setting);
        }
        MeasurementConfig::new(dims, ops)?
    } else {
        meas.clone()
    };

    Ok((noisy_state, noisy_meas))
}

/// Empirical frequencies from `shots_per_setting` multinomial samples of
/// each setting's outcome distribution. Normalization is exact by
/// construction; no-signaling holds only approximately and is not
/// enforced.
pub fn finite_shots(corr: &Correlation, shots_per_setting: u64, seed: u64) -> Result<Correlation> {
    if shots_per_setting == 0 {
        return Err(Error::InvalidArgument("need at least one shot".into()));
    }
    let sc = corr.scenario().clone();
    let na = sc.num_outcome_tuples();
    let mut table = vec![0.0; sc.num_setting_tuples() * na];
    for x_idx in 0..sc.num_setting_tuples() {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x5807, x_idx as u64));
        // Multinomial via a chain of binomials.
        let mut remaining = shots_per_setting;
        let mut mass_left = 1.0f64;
        for a_idx in 0..na {
            let p = corr.prob_by_index(x_idx, a_idx);
            let count = if a_idx + 1 == na {
                remaining
            } else if remaining == 0 || mass_left <= 0.0 {
                0
            } else {
                let q = (p / mass_left).clamp(0.0, 1.0);
                let draw = rng.sample(Binomial::new(remaining, q).expect("q in [0,1]"));
                mass_left = (mass_left - p).max(0.0);
                draw
            };
            remaining -= count;
            table[x_idx * na + a_idx] = count as f64 / shots_per_setting as f64;
        }
    }
    Correlation::new(sc, table)
}

/// Run the full pipeline over a noise grid: perturb the ideal MABK
/// configuration, generate the Born correlation, and analyze it against
/// the analytic MABK certificate. One report per grid point, in grid
/// order; grid points run in parallel with per-point RNG streams, so
/// scheduling cannot change results.
pub fn sweep(spec: &SweepSpec) -> Result<Vec<(NoiseModel, BoundReport)>> {
    let expr = mabk(spec.n)?;
    let cert = mabk_certificate(spec.n)?;
    let (rho0, meas0) = ideal_configuration(spec.n)?;

    let results = exec::map_slice(&spec.grid, |idx, model| -> Result<(NoiseModel, BoundReport)> {
        let (rho, meas) = apply_noise(&rho0, &meas0, model)?;
        let corr = born_correlation(&rho, &meas)?;
        let report = analyze(
            &expr,
            &corr,
            &cert,
            spec.restarts,
            derive_seed(spec.seed, 0xa417e, idx as u64),
        )?;
        Ok((model.clone(), report))
    });
    results.into_iter().collect()
}

/// The analytic nondegeneracy certificate for MABK over qubits.
pub fn mabk_certificate(n: usize) -> Result<NondegeneracyCertificate> {
    let dims = DimensionVector::qubits(n)?;
    certify(
        &format!("mabk-{n}"),
        &dims,
        2f64.powf((n as f64 - 1.0) / 2.0),
        mabk_c2_upper(n),
        CertMethod::AnalyticMabk,
    )
}

/// Render sweep rows as CSV with 12-significant-digit doubles.
pub fn sweep_csv(n: usize, rows: &[(NoiseModel, BoundReport)]) -> String {
    let mut out = String::from("n,v,delta,eta,B,a1,fhat,gme_lower,ree_lower,c_star,feasible\n");
    for (model, report) in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            n,
            fmt_g12(model.visibility),
            fmt_g12(model.angle_jitter),
            fmt_g12(model.state_jitter),
            report.csv_row()
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bell::mabk;

    #[test]
    fn ideal_configuration_values() {
        for (n, expected) in [(3usize, 2.0), (5, 4.0)] {
            let (rho, meas) = ideal_configuration(n).unwrap();
            assert!((rho.purity() - 1.0).abs() < 1e-12);
            let corr = born_correlation(&rho, &meas).unwrap();
            let b = mabk(n).unwrap().evaluate(&corr).unwrap();
            assert!((b - expected).abs() < 1e-9, "n = {n}: B = {b}");
        }
    }

    #[test]
    fn noise_model_validation() {
        assert!(NoiseModel::new(1.2, 0.0, 0.0, 1).is_err());
        assert!(NoiseModel::new(0.5, -0.1, 0.0, 1).is_err());
        assert!(NoiseModel::new(0.5, 0.0, -0.1, 1).is_err());
        assert!(NoiseModel::white(0.9, 1).is_ok());
    }

    #[test]
    fn noiseless_model_is_identity() {
        let (rho, meas) = ideal_configuration(3).unwrap();
        let model = NoiseModel::white(1.0, 99).unwrap();
        let (rho2, meas2) = apply_noise(&rho, &meas, &model).unwrap();
        assert!(rho2.matrix().max_abs_diff(rho.matrix()) == 0.0);
        for party in 0..3 {
            for setting in 0..2 {
                for outcome in 0..2 {
                    assert!(
                        meas2
                            .op(party, setting, outcome)
                            .max_abs_diff(meas.op(party, setting, outcome))
                            == 0.0
                    );
                }
            }
        }
    }

    #[test]
    fn bell_value_linear_in_visibility() {
        let expr = mabk(3).unwrap();
        let (rho, meas) = ideal_configuration(3).unwrap();
        for (i, v) in [1.0, 0.95, 0.9, 0.5, 0.0].iter().enumerate() {
            let model = NoiseModel::white(*v, i as u64).unwrap();
            let (rho2, meas2) = apply_noise(&rho, &meas, &model).unwrap();
            let b = expr.evaluate(&born_correlation(&rho2, &meas2).unwrap()).unwrap();
            assert!((b - 2.0 * v).abs() < 1e-9, "v = {v}: B = {b}");
        }
    }

    #[test]
    fn jittered_outputs_stay_valid() {
        let (rho, meas) = ideal_configuration(3).unwrap();
        for i in 0..50 {
            let model = NoiseModel::new(0.97, 0.05, 0.03, i).unwrap();
            // Constructors inside apply_noise re-validate both outputs.
            let (rho2, meas2) = apply_noise(&rho, &meas, &model).unwrap();
            assert_eq!(rho2.dim(), 8);
            assert_eq!(meas2.parties(), 3);
        }
    }

    #[test]
    fn finite_shots_behaviour() {
        let (rho, meas) = ideal_configuration(3).unwrap();
        let corr = born_correlation(&rho, &meas).unwrap();

        // Counts sum to the shot count, so normalization is exact up to
        // one rounding of the count/shots quotients.
        for shots in [1u64, 7, 1000] {
            let sampled = finite_shots(&corr, shots, 5).unwrap();
            assert!(sampled.worst_normalization_residual() <= 1e-15);
        }

        // A deterministic correlation is reproduced exactly.
        let sc = corr.scenario().clone();
        let mut det = vec![0.0; 64];
        for x in 0..8 {
            det[x * 8 + 3] = 1.0;
        }
        let det = Correlation::new(sc, det).unwrap();
        let sampled = finite_shots(&det, 17, 3).unwrap();
        for x in 0..8 {
            assert_eq!(sampled.prob_by_index(x, 3), 1.0);
        }

        // shots = 1 gives a point mass per setting.
        let one = finite_shots(&corr, 1, 11).unwrap();
        for x in 0..8 {
            let row: Vec<f64> = (0..8).map(|a| one.prob_by_index(x, a)).collect();
            assert_eq!(row.iter().filter(|&&p| p == 1.0).count(), 1);
            assert_eq!(row.iter().sum::<f64>(), 1.0);
        }

        // Concentration at 1e7 shots.
        let big = finite_shots(&corr, 10_000_000, 13).unwrap();
        let mut worst = 0.0f64;
        for x in 0..8 {
            for a in 0..8 {
                worst = worst.max((big.prob_by_index(x, a) - corr.prob_by_index(x, a)).abs());
            }
        }
        assert!(worst < 2e-3, "max deviation {worst}");

        assert!(finite_shots(&corr, 0, 1).is_err());
    }

    #[test]
    fn sweep_small_grid_bell_column() {
        let spec = SweepSpec::white_noise_grid(3, 1.0, 0.9, 0.05, 6, 77).unwrap();
        let rows = sweep(&spec).unwrap();
        assert_eq!(rows.len(), 3);
        for (row, expected) in rows.iter().zip([2.0, 1.9, 1.8]) {
            assert!((row.1.bell_value - expected).abs() < 1e-9);
        }
        // v = 1 row reproduces the tight GME endpoint.
        assert!((rows[0].1.gme_lower - 0.5).abs() < 1e-3);
    }

    #[test]
    fn sweep_is_reproducible_and_mode_independent() {
        let spec = SweepSpec::white_noise_grid(3, 1.0, 0.95, 0.025, 5, 123).unwrap();
        let a = sweep_csv(3, &sweep(&spec).unwrap());
        let b = sweep_csv(3, &sweep(&spec).unwrap());
        assert_eq!(a, b);
        let c = exec::sequential(|| sweep_csv(3, &sweep(&spec).unwrap()));
        assert_eq!(a, c);
        assert!(a.starts_with("n,v,delta,eta,B,a1,fhat,gme_lower,ree_lower,c_star,feasible\n"));
        assert!(a.lines().count() == 4);
    }
}
