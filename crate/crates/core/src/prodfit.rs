//! Best product-distribution overlap via rank-1 tensor approximation.
//!
//! For a fixed setting tuple x, the maximum Bhattacharyya overlap between
//! p(.|x) and a product distribution equals the best rank-1 approximation
//! of the entrywise square-root tensor T = sqrt(p) over nonnegative unit
//! factors. The estimator F-hat is the minimum of that maximum over all
//! setting tuples; it upper-bounds the fidelity between the unknown state
//! and the nearest pure product state.
//!
//! The inner maximization runs a shifted higher-order power method
//! directly on the multilinear form: alternating per-party normalize
//! updates, with a fixed unit shift engaged only if the objective ever
//! stalls downward. A dense angle-grid oracle over 2x2x2 tensors guards
//! correctness.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bell::Correlation;
use crate::error::{Error, Result};
use crate::exec;
use crate::util::{derive_seed, index_tuple};

/// Iteration cap and improvement threshold for the power method.
const MAX_ITERS: usize = 10_000;
const ITER_TOL: f64 = 1e-12;
/// Shift applied to a party's update when oscillation is detected.
const OSCILLATION_SHIFT: f64 = 1.0;

/// Tensor with nonnegative entries, row-major over `shape`.
#[derive(Clone, Debug, PartialEq)]
pub struct NonnegTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl NonnegTensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.iter().any(|&m| m == 0) {
            return Err(Error::InvalidArgument("empty tensor shape".into()));
        }
        let need: usize = shape.iter().product();
        if data.len() != need {
            return Err(Error::InvalidArgument(format!(
                "tensor data has {} entries, shape needs {need}",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|&&v| !(v >= 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "negative tensor entry {bad}"
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn order(&self) -> usize {
        self.shape.len()
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Multilinear form T(u_1, ..., u_n).
    pub fn multilinear(&self, factors: &[Vec<f64>]) -> f64 {
        debug_assert_eq!(factors.len(), self.order());
        let mut acc = 0.0;
        for (flat, &t) in self.data.iter().enumerate() {
            if t == 0.0 {
                continue;
            }
            let idx = index_tuple(flat, &self.shape);
            let mut prod = t;
            for (i, &a) in idx.iter().enumerate() {
                prod *= factors[i][a];
            }
            acc += prod;
        }
        acc
    }

    /// Contraction against every factor except `skip`; the gradient of the
    /// multilinear form in that slot.
    fn contract_except(&self, factors: &[Vec<f64>], skip: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.shape[skip]];
        for (flat, &t) in self.data.iter().enumerate() {
            if t == 0.0 {
                continue;
            }
            let idx = index_tuple(flat, &self.shape);
            let mut prod = t;
            for (i, &a) in idx.iter().enumerate() {
                if i != skip {
                    prod *= factors[i][a];
                }
            }
            out[idx[skip]] += prod;
        }
        out
    }
}

/// Result of a rank-1 fit.
#[derive(Clone, Debug)]
pub struct Rank1Fit {
    /// Best multilinear value found (a lower estimate of the true max).
    pub value: f64,
    /// Nonnegative unit factor per party.
    pub factors: Vec<Vec<f64>>,
    /// Max - min of the per-restart final values; small spread indicates
    /// reliable convergence.
    pub restart_spread: f64,
}

/// Best rank-1 approximation of a nonnegative tensor over nonnegative unit
/// factors, by alternating power updates with seeded random restarts.
///
/// Each per-party update replaces the factor by the normalized contraction
/// of the tensor against the others, which is the exact per-slot argmax,
/// so the objective is nondecreasing; if rounding ever pushes it down, a
/// fixed unit shift damps subsequent updates for that restart.
pub fn rank1_fit(tensor: &NonnegTensor, restarts: usize, seed: u64) -> Rank1Fit {
    let restarts = restarts.max(1);
    let n = tensor.order();

    let mut best: Option<(f64, Vec<Vec<f64>>)> = None;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for restart in 0..restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x4a4e1, restart as u64));
        let mut factors: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let m = tensor.shape[i];
                if restart == 0 {
                    vec![1.0 / (m as f64).sqrt(); m]
                } else {
                    let mut v: Vec<f64> = (0..m).map(|_| rng.gen_range(0.0..1.0) + 1e-3).collect();
                    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                    v.iter_mut().for_each(|x| *x /= norm);
                    v
                }
            })
            .collect();

        let mut value = tensor.multilinear(&factors);
        let mut shifted = false;
        for _ in 0..MAX_ITERS {
            for i in 0..n {
                let mut g = tensor.contract_except(&factors, i);
                if shifted {
                    for (gk, uk) in g.iter_mut().zip(&factors[i]) {
                        *gk += OSCILLATION_SHIFT * uk;
                    }
                }
                let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm <= f64::MIN_POSITIVE {
                    // Dead slice; keep the old factor.
                    continue;
                }
                g.iter_mut().for_each(|x| *x /= norm);
                factors[i] = g;
            }
            let new_value = tensor.multilinear(&factors);
            if new_value < value - 1e-13 {
                shifted = true;
            }
            if new_value - value < ITER_TOL {
                value = value.max(new_value);
                break;
            }
            value = new_value;
        }

        lo = lo.min(value);
        hi = hi.max(value);
        let replace = match &best {
            None => true,
            Some((bv, _)) => value > *bv,
        };
        if replace {
            best = Some((value, factors));
        }
    }

    let (value, factors) = best.expect("at least one restart");
    Rank1Fit {
        value,
        factors,
        restart_spread: hi - lo,
    }
}

/// Independent oracle for rank-1 fits on order-2 and order-3 tensors with
/// two outcomes per party: dense angle grid u_i = (cos t_i, sin t_i) over
/// [0, pi/2], followed by coordinate-wise ternary refinement.
pub fn brute_force_rank1(tensor: &NonnegTensor, grid: usize) -> Result<f64> {
    let n = tensor.order();
    if !(n == 2 || n == 3) || tensor.shape.iter().any(|&m| m != 2) {
        return Err(Error::InvalidArgument(format!(
            "brute force supports 2x2 and 2x2x2 tensors, got shape {:?}",
            tensor.shape
        )));
    }
    if grid < 2 {
        return Err(Error::InvalidArgument("grid must be at least 2".into()));
    }

    let half_pi = std::f64::consts::FRAC_PI_2;
    let step = half_pi / (grid - 1) as f64;
    let factors_of = |angles: &[f64]| -> Vec<Vec<f64>> {
        angles.iter().map(|&t| vec![t.cos(), t.sin()]).collect()
    };
    let eval = |angles: &[f64]| tensor.multilinear(&factors_of(angles));

    let mut best_angles = vec![0.0; n];
    let mut best = f64::NEG_INFINITY;
    let mut counter = vec![0usize; n];
    loop {
        let angles: Vec<f64> = counter.iter().map(|&k| k as f64 * step).collect();
        let v = eval(&angles);
        if v > best {
            best = v;
            best_angles = angles;
        }
        // Odometer increment.
        let mut pos = n;
        loop {
            if pos == 0 {
                break;
            }
            pos -= 1;
            counter[pos] += 1;
            if counter[pos] < grid {
                break;
            }
            counter[pos] = 0;
            if pos == 0 {
                pos = usize::MAX;
                break;
            }
        }
        if pos == usize::MAX {
            break;
        }
    }

    // Coordinate-wise ternary refinement around the best grid point.
    let mut width = step;
    for _ in 0..80 {
        for i in 0..n {
            let mut a = (best_angles[i] - width).max(0.0);
            let mut b = (best_angles[i] + width).min(half_pi);
            for _ in 0..60 {
                let m1 = a + (b - a) / 3.0;
                let m2 = b - (b - a) / 3.0;
                let mut t1 = best_angles.clone();
                t1[i] = m1;
                let mut t2 = best_angles.clone();
                t2[i] = m2;
                if eval(&t1) < eval(&t2) {
                    a = m1;
                } else {
                    b = m2;
                }
            }
            let mid = 0.5 * (a + b);
            let mut cand = best_angles.clone();
            cand[i] = mid;
            let v = eval(&cand);
            if v > best {
                best = v;
                best_angles = cand;
            }
        }
        width *= 0.5;
        if width < 1e-12 {
            break;
        }
    }
    Ok(best)
}

/// The F-hat estimate for a correlation.
#[derive(Clone, Debug)]
pub struct FhatEstimate {
    /// min over setting tuples of the best product overlap, clamped to 1.
    pub fhat: f64,
    /// Setting tuple attaining the minimum.
    pub worst_setting: Vec<usize>,
    /// Largest per-setting restart spread, a convergence diagnostic.
    pub restart_spread: f64,
}

/// Compute F-hat: for every setting tuple, fit the square-root probability
/// tensor by rank-1 restarts and take the minimum over settings.
///
/// Setting tuples are processed in parallel; the merge is a deterministic
/// min-reduction keyed on (value, setting index).
pub fn fhat(corr: &Correlation, restarts: usize, seed: u64) -> FhatEstimate {
    let sc = corr.scenario();
    let nx = sc.num_setting_tuples();
    let shape = sc.outcomes().to_vec();

    let fits = exec::map_indexed(nx, |x_idx| {
        let na = sc.num_outcome_tuples();
        let data: Vec<f64> = (0..na)
            .map(|a_idx| corr.prob_by_index(x_idx, a_idx).sqrt())
            .collect();
        let tensor = NonnegTensor::new(shape.clone(), data)
            .expect("square roots of probabilities are nonnegative");
        rank1_fit(&tensor, restarts, derive_seed(seed, 0xf4a7, x_idx as u64))
    });

    let mut min_value = f64::INFINITY;
    let mut worst = 0usize;
    let mut spread = 0.0f64;
    for (x_idx, fit) in fits.iter().enumerate() {
        spread = spread.max(fit.restart_spread);
        if fit.value < min_value {
            min_value = fit.value;
            worst = x_idx;
        }
    }
    FhatEstimate {
        fhat: min_value.min(1.0),
        worst_setting: sc.setting_tuple(worst),
        restart_spread: spread,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bell::{born_correlation, pauli_config};
    use crate::qmat::{ghz_state, DensityMatrix, PureState};
    use num_complex::Complex64;

    fn tensor_2x2x2(data: [f64; 8]) -> NonnegTensor {
        NonnegTensor::new(vec![2, 2, 2], data.to_vec()).unwrap()
    }

    fn random_2x2x2(rng: &mut impl Rng) -> NonnegTensor {
        let data: [f64; 8] = std::array::from_fn(|_| rng.gen_range(0.0..1.0));
        tensor_2x2x2(data)
    }

    #[test]
    fn rejects_negative_entries() {
        assert!(NonnegTensor::new(vec![2, 2], vec![0.1, -0.2, 0.3, 0.4]).is_err());
        assert!(NonnegTensor::new(vec![2, 2], vec![0.1; 3]).is_err());
    }

    #[test]
    fn rank1_input_is_exact() {
        // Outer product of unit vectors: value is the Frobenius norm 1.
        let u = [0.6, 0.8];
        let v = [1.0 / 2f64.sqrt(), 1.0 / 2f64.sqrt()];
        let w = [0.28, 0.96];
        let mut data = [0.0; 8];
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    data[i * 4 + j * 2 + k] = u[i] * v[j] * w[k];
                }
            }
        }
        let t = tensor_2x2x2(data);
        let fit = rank1_fit(&t, 5, 3);
        assert!((fit.value - 1.0).abs() < 1e-10);
        assert!((t.frobenius_norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_sqrt_probability_tensor_is_rank1() {
        let t = tensor_2x2x2([0.125f64.sqrt(); 8]);
        let fit = rank1_fit(&t, 5, 3);
        assert!((fit.value - 1.0).abs() < 1e-10);
        for f in &fit.factors {
            for &x in f {
                assert!((x - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn power_method_matches_brute_force_on_random_tensors() {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..30 {
            let t = random_2x2x2(&mut rng);
            let fast = rank1_fit(&t, 20, 5).value;
            let slow = brute_force_rank1(&t, 60).unwrap();
            assert!(
                (fast - slow).abs() < 1e-6,
                "power {fast} vs brute force {slow}"
            );
        }
    }

    #[test]
    fn brute_force_examples() {
        // Rank-1 tensor: exactly 1.
        let u = [0.6, 0.8];
        let mut data = [0.0; 8];
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    data[i * 4 + j * 2 + k] = u[i] * u[j] * u[k];
                }
            }
        }
        let t = tensor_2x2x2(data);
        assert!((brute_force_rank1(&t, 40).unwrap() - 1.0).abs() < 1e-8);

        // Scaling by 0.5 halves the value (multilinearity).
        let half = tensor_2x2x2(std::array::from_fn(|i| 0.5 * data[i]));
        assert!(
            (brute_force_rank1(&half, 40).unwrap() - 0.5).abs() < 1e-8
        );

        // GHZ3 sigma_x^3 outcome distribution: even-parity strings at 1/4.
        // Best product overlap is 1/sqrt(2), the GHZ product-state overlap.
        let mut parity = [0.0; 8];
        for (a, p) in parity.iter_mut().enumerate() {
            if (a as u32).count_ones() % 2 == 0 {
                *p = 0.5; // sqrt(1/4)
            }
        }
        let t = tensor_2x2x2(parity);
        let value = brute_force_rank1(&t, 80).unwrap();
        assert!(
            (value - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-6,
            "value {value}"
        );
        // And the power method agrees.
        assert!((rank1_fit(&t, 20, 1).value - value).abs() < 1e-8);

        // Unsupported shapes are rejected.
        let t4 = NonnegTensor::new(vec![2, 2, 2, 2], vec![0.25; 16]).unwrap();
        assert!(brute_force_rank1(&t4, 10).is_err());
    }

    #[test]
    fn rank1_value_bounds() {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let t = random_2x2x2(&mut rng);
            let fit = rank1_fit(&t, 10, 9);
            // Cauchy-Schwarz: value <= Frobenius norm.
            assert!(fit.value <= t.frobenius_norm() + 1e-9);
            // At least the uniform-factor value.
            let uniform: Vec<Vec<f64>> =
                vec![vec![std::f64::consts::FRAC_1_SQRT_2; 2]; 3];
            assert!(fit.value >= t.multilinear(&uniform) - 1e-12);
        }
    }

    #[test]
    fn rank1_invariant_under_permutations() {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..10 {
            let t = random_2x2x2(&mut rng);
            let base = rank1_fit(&t, 20, 2).value;
            // Swap parties 0 and 2.
            let swapped = tensor_2x2x2(std::array::from_fn(|flat| {
                let (i, j, k) = (flat / 4, (flat / 2) % 2, flat % 2);
                t.data[k * 4 + j * 2 + i]
            }));
            let v = rank1_fit(&swapped, 20, 2).value;
            assert!((base - v).abs() < 1e-8);
            // Flip outcomes of party 1.
            let flipped = tensor_2x2x2(std::array::from_fn(|flat| {
                let (i, j, k) = (flat / 4, (flat / 2) % 2, flat % 2);
                t.data[i * 4 + (1 - j) * 2 + k]
            }));
            let v = rank1_fit(&flipped, 20, 2).value;
            assert!((base - v).abs() < 1e-8);
        }
    }

    #[test]
    fn fhat_is_one_for_product_states() {
        // |++> measured with Pauli settings gives a product correlation.
        let c = Complex64::new;
        let plus2 = PureState::new(vec![c(0.5, 0.0); 4]).unwrap();
        let corr = born_correlation(&DensityMatrix::from_pure(&plus2), &pauli_config(2)).unwrap();
        let est = fhat(&corr, 10, 4);
        assert!((est.fhat - 1.0).abs() < 1e-9, "fhat {}", est.fhat);
    }

    #[test]
    fn fhat_is_one_for_white_noise_floor() {
        let corr = born_correlation(&DensityMatrix::maximally_mixed(8), &pauli_config(3)).unwrap();
        let est = fhat(&corr, 10, 4);
        assert!((est.fhat - 1.0).abs() < 1e-9);
    }

    #[test]
    fn fhat_of_ideal_ghz3_is_inverse_sqrt2() {
        let phase = std::f64::consts::FRAC_PI_2;
        let rho = DensityMatrix::from_pure(&ghz_state(3, phase).unwrap());
        let corr = born_correlation(&rho, &pauli_config(3)).unwrap();
        let est = fhat(&corr, 20, 8);
        assert!(
            (est.fhat - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-4,
            "fhat {}",
            est.fhat
        );
        // Cross-check every setting against the brute-force oracle.
        let sc = corr.scenario();
        let mut oracle_min = f64::INFINITY;
        for x_idx in 0..sc.num_setting_tuples() {
            let data: Vec<f64> = (0..8)
                .map(|a_idx| corr.prob_by_index(x_idx, a_idx).sqrt())
                .collect();
            let t = NonnegTensor::new(vec![2, 2, 2], data).unwrap();
            oracle_min = oracle_min.min(brute_force_rank1(&t, 60).unwrap());
        }
        assert!((est.fhat - oracle_min.min(1.0)).abs() < 1e-6);
    }

    #[test]
    fn fhat_deterministic_across_exec_modes() {
        let rho = DensityMatrix::from_pure(&ghz_state(3, 0.3).unwrap());
        let corr = born_correlation(&rho, &pauli_config(3)).unwrap();
        let a = fhat(&corr, 8, 31);
        let b = crate::exec::sequential(|| fhat(&corr, 8, 31));
        assert_eq!(a.fhat, b.fhat);
        assert_eq!(a.worst_setting, b.worst_setting);
    }
}
