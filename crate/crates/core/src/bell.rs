//! Bell scenarios, correlations, Bell expressions, and Born-rule
//! evaluation.
//!
//! Correlations and coefficient tables are stored densely, indexed
//! lexicographically by (setting tuple, outcome tuple); at five binary
//! parties that is 1024 entries, so density costs nothing.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qmat::{hermitian_eig, kron_all, ComplexMatrix, DensityMatrix};
use crate::util::{all_tuples, index_tuple, tuple_index};

/// Normalization tolerance for correlation tables.
const NORMALIZATION_TOL: f64 = 1e-9;
/// Tolerance on no-signaling residuals for Born-rule correlations.
pub const NO_SIGNALING_TOL: f64 = 1e-8;
/// Measurement operator tolerances: PSD floor, completeness, projectivity.
const MEAS_PSD_TOL: f64 = 1e-10;
const MEAS_COMPLETE_TOL: f64 = 1e-9;
const MEAS_PROJECTIVE_TOL: f64 = 1e-9;

/// An n-party Bell scenario: per-party setting and outcome counts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Scenario {
    settings: Vec<usize>,
    outcomes: Vec<usize>,
}

impl Scenario {
    pub fn new(settings: Vec<usize>, outcomes: Vec<usize>) -> Result<Self> {
        if settings.len() != outcomes.len() {
            return Err(Error::InvalidArgument(
                "settings and outcomes must list the same parties".into(),
            ));
        }
        if settings.len() < 2 {
            return Err(Error::InvalidArgument(
                "a Bell scenario needs at least 2 parties".into(),
            ));
        }
        if settings.iter().any(|&s| s < 2) || outcomes.iter().any(|&o| o < 2) {
            return Err(Error::InvalidArgument(
                "every party needs at least 2 settings and 2 outcomes".into(),
            ));
        }
        Ok(Self { settings, outcomes })
    }

    /// The n-party scenario with two settings and two outcomes per party.
    pub fn binary(n: usize) -> Result<Self> {
        Self::new(vec![2; n], vec![2; n])
    }

    pub fn parties(&self) -> usize {
        self.settings.len()
    }

    pub fn settings(&self) -> &[usize] {
        &self.settings
    }

    pub fn outcomes(&self) -> &[usize] {
        &self.outcomes
    }

    pub fn num_setting_tuples(&self) -> usize {
        self.settings.iter().product()
    }

    pub fn num_outcome_tuples(&self) -> usize {
        self.outcomes.iter().product()
    }

    pub fn setting_index(&self, x: &[usize]) -> usize {
        tuple_index(x, &self.settings)
    }

    pub fn outcome_index(&self, a: &[usize]) -> usize {
        tuple_index(a, &self.outcomes)
    }

    pub fn setting_tuple(&self, idx: usize) -> Vec<usize> {
        index_tuple(idx, &self.settings)
    }

    pub fn outcome_tuple(&self, idx: usize) -> Vec<usize> {
        index_tuple(idx, &self.outcomes)
    }

    pub fn all_binary_outcomes(&self) -> bool {
        self.outcomes.iter().all(|&o| o == 2)
    }
}

/// Joint conditional outcome distribution p(a|x).
#[derive(Clone, Debug, PartialEq)]
pub struct Correlation {
    scenario: Scenario,
    table: Vec<f64>,
    worst_residual: f64,
}

impl Correlation {
    /// `table[x_idx * num_outcome_tuples + a_idx]`. Entries must be
    /// nonnegative (tiny negative rounding up to -1e-12 is clamped) and
    /// every setting's distribution must sum to 1 within 1e-9. Whether the
    /// table satisfies no-signaling is *not* enforced here: empirical
    /// frequencies violate it slightly, so it is checked separately via
    /// [`Correlation::no_signaling_residual`].
    pub fn new(scenario: Scenario, mut table: Vec<f64>) -> Result<Self> {
        let nx = scenario.num_setting_tuples();
        let na = scenario.num_outcome_tuples();
        if table.len() != nx * na {
            return Err(Error::InvalidCorrelation(format!(
                "table has {} entries, scenario needs {}",
                table.len(),
                nx * na
            )));
        }
        for p in table.iter_mut() {
            if *p < 0.0 {
                if *p < -1e-12 {
                    return Err(Error::InvalidCorrelation(format!(
                        "negative probability {p:.3e}"
                    )));
                }
                *p = 0.0;
            }
        }
        let mut worst = 0.0f64;
        for x in 0..nx {
            let sum: f64 = table[x * na..(x + 1) * na].iter().sum();
            let residual = (sum - 1.0).abs();
            worst = worst.max(residual);
            if residual > NORMALIZATION_TOL {
                return Err(Error::InvalidCorrelation(format!(
                    "setting tuple {:?} sums to {sum}, residual {residual:.3e}",
                    scenario.setting_tuple(x)
                )));
            }
        }
        Ok(Self {
            scenario,
            table,
            worst_residual: worst,
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    /// Worst per-setting |sum - 1| observed when the table was loaded.
    pub fn worst_normalization_residual(&self) -> f64 {
        self.worst_residual
    }

    pub fn prob_by_index(&self, x_idx: usize, a_idx: usize) -> f64 {
        self.table[x_idx * self.scenario.num_outcome_tuples() + a_idx]
    }

    pub fn prob(&self, x: &[usize], a: &[usize]) -> f64 {
        self.prob_by_index(self.scenario.setting_index(x), self.scenario.outcome_index(a))
    }

    /// Largest no-signaling violation: for each party, how much the
    /// marginal of the remaining parties moves when that party changes its
    /// setting. Chaining single-party checks covers arbitrary subsets.
    pub fn no_signaling_residual(&self) -> f64 {
        let n = self.scenario.parties();
        let mut worst = 0.0f64;
        for i in 0..n {
            let mut others_settings: Vec<usize> = self.scenario.settings.to_vec();
            others_settings.remove(i);
            let mut others_outcomes: Vec<usize> = self.scenario.outcomes.to_vec();
            others_outcomes.remove(i);
            for xo in all_tuples(&others_settings) {
                for ao in all_tuples(&others_outcomes) {
                    let mut first: Option<f64> = None;
                    for xi in 0..self.scenario.settings[i] {
                        let mut x = xo.clone();
                        x.insert(i, xi);
                        let mut marg = 0.0;
                        for ai in 0..self.scenario.outcomes[i] {
                            let mut a = ao.clone();
                            a.insert(i, ai);
                            marg += self.prob(&x, &a);
                        }
                        match first {
                            None => first = Some(marg),
                            Some(f) => worst = worst.max((marg - f).abs()),
                        }
                    }
                }
            }
        }
        worst
    }

    /// Serialize to the correlation file schema.
    pub fn to_json_string(&self) -> String {
        let file = CorrelationFile::from_correlation(self);
        serde_json::to_string_pretty(&file).expect("correlation serialization cannot fail")
    }

    /// Parse the correlation file schema, enforcing all table invariants.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: CorrelationFile = serde_json::from_str(text)
            .map_err(|e| Error::Parse(format!("correlation file: {e}")))?;
        file.into_correlation()
    }
}

/// On-disk correlation format: probabilities keyed by comma-separated
/// setting and outcome tuples.
#[derive(Serialize, Deserialize)]
struct CorrelationFile {
    n: usize,
    settings: Vec<usize>,
    outcomes: Vec<usize>,
    p: BTreeMap<String, BTreeMap<String, f64>>,
}

fn tuple_key(t: &[usize]) -> String {
    t.iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn parse_tuple_key(key: &str, radices: &[usize], what: &str) -> Result<Vec<usize>> {
    let parts: Vec<&str> = key.split(',').collect();
    if parts.len() != radices.len() {
        return Err(Error::Parse(format!(
            "{what} key \"{key}\" has {} components, expected {}",
            parts.len(),
            radices.len()
        )));
    }
    let mut tuple = Vec::with_capacity(parts.len());
    for (part, &r) in parts.iter().zip(radices) {
        let v: usize = part
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("{what} key \"{key}\": bad component \"{part}\"")))?;
        if v >= r {
            return Err(Error::Parse(format!(
                "{what} key \"{key}\": component {v} out of range 0..{r}"
            )));
        }
        tuple.push(v);
    }
    Ok(tuple)
}

impl CorrelationFile {
    fn from_correlation(corr: &Correlation) -> Self {
        let sc = corr.scenario();
        let mut p = BTreeMap::new();
        for x_idx in 0..sc.num_setting_tuples() {
            let x = sc.setting_tuple(x_idx);
            let mut inner = BTreeMap::new();
            for a_idx in 0..sc.num_outcome_tuples() {
                inner.insert(
                    tuple_key(&sc.outcome_tuple(a_idx)),
                    corr.prob_by_index(x_idx, a_idx),
                );
            }
            p.insert(tuple_key(&x), inner);
        }
        Self {
            n: sc.parties(),
            settings: sc.settings().to_vec(),
            outcomes: sc.outcomes().to_vec(),
            p,
        }
    }

    fn into_correlation(self) -> Result<Correlation> {
        if self.settings.len() != self.n || self.outcomes.len() != self.n {
            return Err(Error::Parse(format!(
                "n = {} but settings/outcomes list {}/{} parties",
                self.n,
                self.settings.len(),
                self.outcomes.len()
            )));
        }
        let scenario = Scenario::new(self.settings.clone(), self.outcomes.clone())?;
        let na = scenario.num_outcome_tuples();
        let mut table = vec![0.0; scenario.num_setting_tuples() * na];
        for (xkey, inner) in &self.p {
            let x = parse_tuple_key(xkey, &self.settings, "setting")?;
            let x_idx = scenario.setting_index(&x);
            for (akey, &prob) in inner {
                let a = parse_tuple_key(akey, &self.outcomes, "outcome")?;
                table[x_idx * na + scenario.outcome_index(&a)] = prob;
            }
        }
        Correlation::new(scenario, table)
    }
}

/// A linear Bell expression: coefficient table, classical bound, optional
/// quantum (Tsirelson) bound.
#[derive(Clone, Debug, PartialEq)]
pub struct BellExpression {
    scenario: Scenario,
    coefficients: Vec<f64>,
    classical_bound: f64,
    quantum_bound: Option<f64>,
}

impl BellExpression {
    /// `coefficients[x_idx * num_outcome_tuples + a_idx]`.
    pub fn new(
        scenario: Scenario,
        coefficients: Vec<f64>,
        classical_bound: f64,
        quantum_bound: Option<f64>,
    ) -> Result<Self> {
        let need = scenario.num_setting_tuples() * scenario.num_outcome_tuples();
        if coefficients.len() != need {
            return Err(Error::InvalidExpression(format!(
                "coefficient table has {} entries, scenario needs {need}",
                coefficients.len()
            )));
        }
        if !coefficients.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidExpression("non-finite coefficient".into()));
        }
        Ok(Self {
            scenario,
            coefficients,
            classical_bound,
            quantum_bound,
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn coefficient_by_index(&self, x_idx: usize, a_idx: usize) -> f64 {
        self.coefficients[x_idx * self.scenario.num_outcome_tuples() + a_idx]
    }

    pub fn classical_bound(&self) -> f64 {
        self.classical_bound
    }

    pub fn quantum_bound(&self) -> Option<f64> {
        self.quantum_bound
    }

    /// The linear functional I(p) = sum c p.
    pub fn evaluate(&self, corr: &Correlation) -> Result<f64> {
        if corr.scenario() != &self.scenario {
            return Err(Error::ScenarioMismatch(format!(
                "expression is {:?}/{:?}, correlation is {:?}/{:?}",
                self.scenario.settings,
                self.scenario.outcomes,
                corr.scenario().settings,
                corr.scenario().outcomes
            )));
        }
        Ok(self
            .coefficients
            .iter()
            .zip(&corr.table)
            .map(|(c, p)| c * p)
            .sum())
    }

    /// Maximum over all deterministic classical strategies, by exhaustive
    /// enumeration. Strategies assign one outcome per (party, setting);
    /// feasible for small scenarios only.
    pub fn deterministic_maximum(&self) -> f64 {
        let sc = &self.scenario;
        let n = sc.parties();
        // One function per party: settings -> outcome, encoded mixed-radix.
        let per_party: Vec<usize> = (0..n)
            .map(|i| sc.outcomes[i].pow(sc.settings[i] as u32))
            .collect();
        let mut best = f64::NEG_INFINITY;
        for strat in all_tuples(&per_party) {
            // Decode each party's setting->outcome map.
            let maps: Vec<Vec<usize>> = (0..n)
                .map(|i| index_tuple(strat[i], &vec![sc.outcomes[i]; sc.settings[i]]))
                .collect();
            let mut value = 0.0;
            for x_idx in 0..sc.num_setting_tuples() {
                let x = sc.setting_tuple(x_idx);
                let a: Vec<usize> = (0..n).map(|i| maps[i][x[i]]).collect();
                value += self.coefficient_by_index(x_idx, sc.outcome_index(&a));
            }
            best = best.max(value);
        }
        best
    }

    /// Serialize to the expression file schema.
    pub fn to_json_string(&self) -> String {
        let sc = &self.scenario;
        let mut c = BTreeMap::new();
        for x_idx in 0..sc.num_setting_tuples() {
            let mut inner = BTreeMap::new();
            for a_idx in 0..sc.num_outcome_tuples() {
                inner.insert(
                    tuple_key(&sc.outcome_tuple(a_idx)),
                    self.coefficient_by_index(x_idx, a_idx),
                );
            }
            c.insert(tuple_key(&sc.setting_tuple(x_idx)), inner);
        }
        let file = ExpressionFile {
            n: sc.parties(),
            settings: sc.settings().to_vec(),
            outcomes: sc.outcomes().to_vec(),
            classical_bound: self.classical_bound,
            quantum_bound: self.quantum_bound,
            c,
        };
        serde_json::to_string_pretty(&file).expect("expression serialization cannot fail")
    }

    /// Parse the expression file schema.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: ExpressionFile = serde_json::from_str(text)
            .map_err(|e| Error::Parse(format!("expression file: {e}")))?;
        if file.settings.len() != file.n || file.outcomes.len() != file.n {
            return Err(Error::Parse(format!(
                "n = {} but settings/outcomes list {}/{} parties",
                file.n,
                file.settings.len(),
                file.outcomes.len()
            )));
        }
        let scenario = Scenario::new(file.settings.clone(), file.outcomes.clone())?;
        let na = scenario.num_outcome_tuples();
        let mut coeffs = vec![0.0; scenario.num_setting_tuples() * na];
        for (xkey, inner) in &file.c {
            let x = parse_tuple_key(xkey, &file.settings, "setting")?;
            let x_idx = scenario.setting_index(&x);
            for (akey, &value) in inner {
                let a = parse_tuple_key(akey, &file.outcomes, "outcome")?;
                coeffs[x_idx * na + scenario.outcome_index(&a)] = value;
            }
        }
        Self::new(scenario, coeffs, file.classical_bound, file.quantum_bound)
    }
}

/// On-disk Bell expression format, mirroring the correlation schema with a
/// coefficient table and declared bounds.
#[derive(Serialize, Deserialize)]
struct ExpressionFile {
    n: usize,
    settings: Vec<usize>,
    outcomes: Vec<usize>,
    classical_bound: f64,
    #[serde(default)]
    quantum_bound: Option<f64>,
    c: BTreeMap<String, BTreeMap<String, f64>>,
}

/// The n-party MABK expression, normalized to classical bound 1 and
/// quantum bound 2^((n-1)/2).
///
/// Built from the recursive correlator polynomial
/// M_1 = A_1^0, M_k = (M_{k-1}(A_k^0 + A_k^1) + M'_{k-1}(A_k^0 - A_k^1))/2
/// with M' the expression with settings 0 and 1 swapped for all parties,
/// then expanded into per-outcome coefficients with outcome a mapped to
/// the eigenvalue (-1)^a.
pub fn mabk(n: usize) -> Result<BellExpression> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "MABK needs at least 2 parties, got {n}"
        )));
    }
    if n > 12 {
        return Err(Error::InvalidArgument(format!(
            "MABK coefficient table would be 4^{n}; refusing n > 12"
        )));
    }
    // Correlator coefficients g[x] over setting bit-tuples (party 0 is the
    // most significant bit).
    let mut g = vec![1.0f64, 0.0]; // M_1 = A_1^0
    for _k in 2..=n {
        let half = g.len();
        let swapped: Vec<f64> = (0..half).map(|x| g[half - 1 - x]).collect();
        let mut next = vec![0.0; half * 2];
        for x in 0..half {
            // M_{k-1} * (A_k^0 + A_k^1) / 2
            next[x * 2] += 0.5 * g[x];
            next[x * 2 + 1] += 0.5 * g[x];
            // M'_{k-1} * (A_k^0 - A_k^1) / 2
            next[x * 2] += 0.5 * swapped[x];
            next[x * 2 + 1] -= 0.5 * swapped[x];
        }
        g = next;
    }

    let scenario = Scenario::binary(n)?;
    let na = scenario.num_outcome_tuples();
    let mut coeffs = vec![0.0; g.len() * na];
    for (x_idx, &gx) in g.iter().enumerate() {
        if gx == 0.0 {
            continue;
        }
        for a_idx in 0..na {
            let sign = if (a_idx as u32).count_ones() % 2 == 0 {
                1.0
            } else {
                -1.0
            };
            coeffs[x_idx * na + a_idx] = gx * sign;
        }
    }
    let quantum = 2f64.powf((n as f64 - 1.0) / 2.0);
    BellExpression::new(scenario, coeffs, 1.0, Some(quantum))
}

/// Projective measurement operators, indexed `[party][setting][outcome]`.
#[derive(Clone, Debug)]
pub struct MeasurementConfig {
    dims: Vec<usize>,
    ops: Vec<Vec<Vec<ComplexMatrix>>>,
}

impl MeasurementConfig {
    /// Validates positivity, completeness, and projectivity of every
    /// setting's operator set.
    pub fn new(dims: Vec<usize>, ops: Vec<Vec<Vec<ComplexMatrix>>>) -> Result<Self> {
        if dims.len() != ops.len() || dims.len() < 2 {
            return Err(Error::InvalidMeasurement(format!(
                "{} parties of operators for {} dimensions",
                ops.len(),
                dims.len()
            )));
        }
        for (party, (dim, settings)) in dims.iter().zip(&ops).enumerate() {
            if settings.is_empty() {
                return Err(Error::InvalidMeasurement(format!(
                    "party {party} has no settings"
                )));
            }
            let outcome_count = settings[0].len();
            for (setting, outcomes) in settings.iter().enumerate() {
                if outcomes.len() != outcome_count {
                    return Err(Error::InvalidMeasurement(format!(
                        "party {party} setting {setting}: outcome count varies across settings"
                    )));
                }
                let mut sum = ComplexMatrix::zeros(*dim, *dim);
                for (outcome, op) in outcomes.iter().enumerate() {
                    if op.rows() != *dim || op.cols() != *dim {
                        return Err(Error::InvalidMeasurement(format!(
                            "party {party} setting {setting} outcome {outcome}: operator is {}x{}, dimension is {dim}",
                            op.rows(), op.cols()
                        )));
                    }
                    if !op.is_hermitian(MEAS_PSD_TOL) {
                        return Err(Error::InvalidMeasurement(format!(
                            "party {party} setting {setting} outcome {outcome}: not Hermitian"
                        )));
                    }
                    let eig = hermitian_eig(op)?;
                    if eig.values.last().copied().unwrap_or(0.0) < -MEAS_PSD_TOL {
                        return Err(Error::InvalidMeasurement(format!(
                            "party {party} setting {setting} outcome {outcome}: not positive semidefinite"
                        )));
                    }
                    let sq = op.matmul(op);
                    if sq.max_abs_diff(op) > MEAS_PROJECTIVE_TOL {
                        return Err(Error::InvalidMeasurement(format!(
                            "party {party} setting {setting} outcome {outcome}: not projective"
                        )));
                    }
                    sum = sum.add(op);
                }
                if sum.max_abs_diff(&ComplexMatrix::identity(*dim)) > MEAS_COMPLETE_TOL {
                    return Err(Error::InvalidMeasurement(format!(
                        "party {party} setting {setting}: operators do not sum to the identity"
                    )));
                }
            }
        }
        Ok(Self { dims, ops })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn parties(&self) -> usize {
        self.dims.len()
    }

    pub fn total_dim(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn settings_of(&self, party: usize) -> usize {
        self.ops[party].len()
    }

    pub fn outcomes_of(&self, party: usize) -> usize {
        self.ops[party][0].len()
    }

    pub fn op(&self, party: usize, setting: usize, outcome: usize) -> &ComplexMatrix {
        &self.ops[party][setting][outcome]
    }

    /// The scenario this configuration measures.
    pub fn scenario(&self) -> Result<Scenario> {
        Scenario::new(
            (0..self.parties()).map(|i| self.settings_of(i)).collect(),
            (0..self.parties()).map(|i| self.outcomes_of(i)).collect(),
        )
    }

    /// For binary outcomes: the ±1 observable M^0 - M^1 of a setting.
    pub fn observable(&self, party: usize, setting: usize) -> ComplexMatrix {
        assert_eq!(self.outcomes_of(party), 2, "observable needs binary outcomes");
        self.ops[party][setting][0].sub(&self.ops[party][setting][1])
    }

    /// Haar-like random projective configuration: per party and setting,
    /// an orthonormal basis from Gram-Schmidt on Gaussian vectors, split
    /// into consecutive groups of near-equal rank per outcome.
    pub fn random_projective(
        dims: &[usize],
        settings: &[usize],
        outcomes: &[usize],
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let mut ops = Vec::with_capacity(dims.len());
        for ((&d, &ns), &no) in dims.iter().zip(settings).zip(outcomes) {
            if no > d {
                return Err(Error::InvalidMeasurement(format!(
                    "cannot split dimension {d} into {no} projective outcomes"
                )));
            }
            let mut party_ops = Vec::with_capacity(ns);
            for _ in 0..ns {
                let basis = random_orthonormal_basis(d, rng);
                // Distribute d basis vectors over no outcomes.
                let base = d / no;
                let extra = d % no;
                let mut col = 0;
                let mut outcome_ops = Vec::with_capacity(no);
                for k in 0..no {
                    let rank = base + usize::from(k < extra);
                    let mut proj = ComplexMatrix::zeros(d, d);
                    for _ in 0..rank {
                        let v = &basis[col];
                        for i in 0..d {
                            for j in 0..d {
                                let cur = proj.get(i, j);
                                proj.set(i, j, cur + v[i] * v[j].conj());
                            }
                        }
                        col += 1;
                    }
                    outcome_ops.push(proj);
                }
                party_ops.push(outcome_ops);
            }
            ops.push(party_ops);
        }
        Self::new(dims.to_vec(), ops)
    }
}

fn random_orthonormal_basis(d: usize, rng: &mut impl Rng) -> Vec<Vec<Complex64>> {
    use rand_distr::StandardNormal;
    let mut basis: Vec<Vec<Complex64>> = Vec::with_capacity(d);
    while basis.len() < d {
        let mut v: Vec<Complex64> = (0..d)
            .map(|_| {
                Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
            })
            .collect();
        for b in &basis {
            let overlap: Complex64 = b.iter().zip(&v).map(|(bi, vi)| bi.conj() * vi).sum();
            for (vi, bi) in v.iter_mut().zip(b) {
                *vi -= overlap * bi;
            }
        }
        let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm < 1e-8 {
            continue; // degenerate draw, retry
        }
        for vi in &mut v {
            *vi /= norm;
        }
        basis.push(v);
    }
    basis
}

/// The sigma_x / sigma_y configuration on n qubits: setting 0 measures the
/// |+>/|-> projectors, setting 1 the |+i>/|-i> projectors.
pub fn pauli_config(n: usize) -> MeasurementConfig {
    let c = Complex64::new;
    let plus = ComplexMatrix::two_by_two([c(0.5, 0.0), c(0.5, 0.0), c(0.5, 0.0), c(0.5, 0.0)]);
    let minus = ComplexMatrix::two_by_two([c(0.5, 0.0), c(-0.5, 0.0), c(-0.5, 0.0), c(0.5, 0.0)]);
    let plus_i = ComplexMatrix::two_by_two([c(0.5, 0.0), c(0.0, -0.5), c(0.0, 0.5), c(0.5, 0.0)]);
    let minus_i = ComplexMatrix::two_by_two([c(0.5, 0.0), c(0.0, 0.5), c(0.0, -0.5), c(0.5, 0.0)]);
    let site = vec![vec![plus, minus], vec![plus_i, minus_i]];
    MeasurementConfig::new(vec![2; n], vec![site; n])
        .expect("Pauli projectors satisfy all measurement invariants")
}

/// Sparse observable-basis expansion of a binary-outcome expression:
/// terms (x_idx, party mask, weight) such that the Bell operator equals
/// sum of weight * tensor(O_j^{x_j} for j in mask, identity elsewhere).
/// Exact zeros are skipped, which prunes almost everything for MABK.
pub(crate) fn observable_terms(expr: &BellExpression) -> Vec<(usize, usize, f64)> {
    let sc = expr.scenario();
    debug_assert!(sc.all_binary_outcomes());
    let n = sc.parties();
    let na = sc.num_outcome_tuples();
    let scale = 1.0 / na as f64;
    let mut terms = Vec::new();
    for x_idx in 0..sc.num_setting_tuples() {
        for mask in 0..(1usize << n) {
            let mut gamma = 0.0;
            for a_idx in 0..na {
                // Party j's outcome bit sits at position n-1-j.
                let masked_bits = (a_idx & mask_to_bits(mask, n)).count_ones();
                let sign = if masked_bits % 2 == 0 { 1.0 } else { -1.0 };
                gamma += expr.coefficient_by_index(x_idx, a_idx) * sign;
            }
            if gamma != 0.0 {
                terms.push((x_idx, mask, gamma * scale));
            }
        }
    }
    terms
}

/// Party mask (bit j = party j) to outcome-index bit positions.
#[inline]
fn mask_to_bits(mask: usize, n: usize) -> usize {
    let mut bits = 0usize;
    for j in 0..n {
        if mask & (1 << j) != 0 {
            bits |= 1 << (n - 1 - j);
        }
    }
    bits
}

/// Assemble the operator for precomputed observable terms.
pub(crate) fn assemble_from_observables(
    terms: &[(usize, usize, f64)],
    scenario: &Scenario,
    observables: &[Vec<ComplexMatrix>],
    dims: &[usize],
) -> ComplexMatrix {
    let total: usize = dims.iter().product();
    let n = dims.len();
    let identities: Vec<ComplexMatrix> = dims.iter().map(|&d| ComplexMatrix::identity(d)).collect();
    let mut m = ComplexMatrix::zeros(total, total);
    for &(x_idx, mask, w) in terms {
        let x = scenario.setting_tuple(x_idx);
        let factors: Vec<&ComplexMatrix> = (0..n)
            .map(|j| {
                if mask & (1 << j) != 0 {
                    &observables[j][x[j]]
                } else {
                    &identities[j]
                }
            })
            .collect();
        m.add_scaled_in_place(&kron_all(&factors), w);
    }
    m
}

/// The Bell operator M = sum c ⊗ M_{x_i}^{a_i}; Hermitian by construction.
pub fn bell_operator(expr: &BellExpression, meas: &MeasurementConfig) -> Result<ComplexMatrix> {
    let sc = expr.scenario();
    let meas_sc = meas.scenario()?;
    if &meas_sc != sc {
        return Err(Error::ScenarioMismatch(format!(
            "expression is {:?}/{:?}, measurements are {:?}/{:?}",
            sc.settings(),
            sc.outcomes(),
            meas_sc.settings(),
            meas_sc.outcomes()
        )));
    }
    let m = if sc.all_binary_outcomes() {
        let terms = observable_terms(expr);
        let observables: Vec<Vec<ComplexMatrix>> = (0..meas.parties())
            .map(|i| {
                (0..meas.settings_of(i))
                    .map(|x| meas.observable(i, x))
                    .collect()
            })
            .collect();
        assemble_from_observables(&terms, sc, &observables, meas.dims())
    } else {
        bell_operator_direct(expr, meas)
    };
    // Force exact Hermiticity against accumulated rounding.
    Ok(m.add(&m.dagger()).scaled_re(0.5))
}

/// Direct double sum over settings and outcomes; reference path for
/// non-binary outcomes and for cross-checking the observable expansion.
fn bell_operator_direct(expr: &BellExpression, meas: &MeasurementConfig) -> ComplexMatrix {
    let sc = expr.scenario();
    let total = meas.total_dim();
    let mut m = ComplexMatrix::zeros(total, total);
    for x_idx in 0..sc.num_setting_tuples() {
        let x = sc.setting_tuple(x_idx);
        for a_idx in 0..sc.num_outcome_tuples() {
            let coeff = expr.coefficient_by_index(x_idx, a_idx);
            if coeff == 0.0 {
                continue;
            }
            let a = sc.outcome_tuple(a_idx);
            let factors: Vec<&ComplexMatrix> =
                (0..sc.parties()).map(|i| meas.op(i, x[i], a[i])).collect();
            m.add_scaled_in_place(&kron_all(&factors), coeff);
        }
    }
    m
}

/// Born-rule correlation p(a|x) = Tr((⊗ M_{x_i}^{a_i}) rho).
pub fn born_correlation(rho: &DensityMatrix, meas: &MeasurementConfig) -> Result<Correlation> {
    if rho.dim() != meas.total_dim() {
        return Err(Error::DimensionMismatch(format!(
            "state dimension {} vs measurement dimension {}",
            rho.dim(),
            meas.total_dim()
        )));
    }
    let sc = meas.scenario()?;
    let na = sc.num_outcome_tuples();
    let mut table = vec![0.0; sc.num_setting_tuples() * na];
    for x_idx in 0..sc.num_setting_tuples() {
        let x = sc.setting_tuple(x_idx);
        for a_idx in 0..na {
            let a = sc.outcome_tuple(a_idx);
            let factors: Vec<&ComplexMatrix> =
                (0..sc.parties()).map(|i| meas.op(i, x[i], a[i])).collect();
            let k = kron_all(&factors);
            table[x_idx * na + a_idx] = k.trace_product_re(rho.matrix());
        }
    }
    Correlation::new(sc, table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qmat::{ghz_state, PureState};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    /// Density matrix of the MABK-optimal state for n parties.
    fn optimal_state(n: usize) -> DensityMatrix {
        let phase = std::f64::consts::PI * (n as f64 - 1.0) / 4.0;
        DensityMatrix::from_pure(&ghz_state(n, phase).unwrap())
    }

    fn random_density(dim: usize, rng: &mut impl Rng) -> DensityMatrix {
        let g = ComplexMatrix::from_fn(dim, dim, |_, _| {
            c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let m = g.matmul(&g.dagger());
        let tr = m.trace().re;
        DensityMatrix::new(m.scaled_re(1.0 / tr)).unwrap()
    }

    #[test]
    fn mabk_bounds() {
        assert_eq!(mabk(3).unwrap().quantum_bound(), Some(2.0));
        assert_eq!(mabk(5).unwrap().quantum_bound(), Some(4.0));
        assert!(mabk(1).is_err());
    }

    #[test]
    fn mabk_classical_bound_exhaustive() {
        // Dyadic coefficients make the enumeration exact in f64.
        for n in [2, 3, 4] {
            let expr = mabk(n).unwrap();
            assert_eq!(expr.deterministic_maximum(), 1.0, "n = {n}");
        }
    }

    #[test]
    fn evaluate_uniform_and_deterministic() {
        let expr = mabk(3).unwrap();
        let sc = Scenario::binary(3).unwrap();
        let uniform = Correlation::new(sc.clone(), vec![0.125; 64]).unwrap();
        assert!(expr.evaluate(&uniform).unwrap().abs() < 1e-12);

        // All parties always output outcome 0 (+1): every correlator is 1,
        // so the value equals the correlator polynomial at A = 1, which the
        // recursion keeps at exactly 1.
        let mut table = vec![0.0; 64];
        for x_idx in 0..8 {
            table[x_idx * 8] = 1.0;
        }
        let det = Correlation::new(sc, table).unwrap();
        assert_eq!(expr.evaluate(&det).unwrap(), 1.0);
    }

    #[test]
    fn evaluate_rejects_mismatched_scenario() {
        let expr = mabk(3).unwrap();
        let other = Correlation::new(Scenario::binary(2).unwrap(), vec![0.25; 16]).unwrap();
        assert!(matches!(
            expr.evaluate(&other),
            Err(Error::ScenarioMismatch(_))
        ));
    }

    #[test]
    fn pauli_config_properties() {
        let cfg = pauli_config(3);
        for party in 0..3 {
            for setting in 0..2 {
                let sum = cfg.op(party, setting, 0).add(cfg.op(party, setting, 1));
                assert!(sum.max_abs_diff(&ComplexMatrix::identity(2)) < 1e-15);
            }
        }
        // |+><+| has all entries 1/2.
        let plus = cfg.op(0, 0, 0);
        for i in 0..2 {
            for j in 0..2 {
                assert!((plus.get(i, j) - c(0.5, 0.0)).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn ideal_configuration_reaches_tsirelson() {
        for n in 2..=5 {
            let expr = mabk(n).unwrap();
            let corr = born_correlation(&optimal_state(n), &pauli_config(n)).unwrap();
            let value = expr.evaluate(&corr).unwrap();
            let expected = 2f64.powf((n as f64 - 1.0) / 2.0);
            assert!(
                (value - expected).abs() < 1e-9,
                "n = {n}: value {value} vs {expected}"
            );
        }
    }

    #[test]
    fn born_uniform_for_maximally_mixed() {
        let rho = DensityMatrix::maximally_mixed(8);
        let corr = born_correlation(&rho, &pauli_config(3)).unwrap();
        for x_idx in 0..8 {
            for a_idx in 0..8 {
                assert!((corr.prob_by_index(x_idx, a_idx) - 0.125).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn born_deterministic_for_z_basis_product_state() {
        // |00> measured in the sigma_z basis on both settings.
        let p0 = ComplexMatrix::two_by_two([c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        let p1 = ComplexMatrix::two_by_two([c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]);
        let site = vec![vec![p0.clone(), p1.clone()], vec![p0, p1]];
        let meas = MeasurementConfig::new(vec![2, 2], vec![site; 2]).unwrap();
        let zero = PureState::new(vec![c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]).unwrap();
        let corr = born_correlation(&DensityMatrix::from_pure(&zero), &meas).unwrap();
        for x_idx in 0..4 {
            assert!((corr.prob_by_index(x_idx, 0) - 1.0).abs() < 1e-12);
        }
        assert!(corr.no_signaling_residual() < 1e-12);
    }

    /// State-vector route: p(a|x) = |<e_a|Phi>|^2 with |e_a> the product of
    /// single-site measurement eigenvectors. Independent of the density
    /// matrix / Kronecker route used by `born_correlation`.
    fn amplitude_oracle_ghz3(x: &[usize], a: &[usize]) -> f64 {
        let inv = std::f64::consts::FRAC_1_SQRT_2;
        // Site basis vectors: setting 0 -> |+>/|->, setting 1 -> |+i>/|-i>.
        let site = |setting: usize, outcome: usize| -> [Complex64; 2] {
            let sign = if outcome == 0 { 1.0 } else { -1.0 };
            match setting {
                0 => [c(inv, 0.0), c(sign * inv, 0.0)],
                _ => [c(inv, 0.0), c(0.0, sign * inv)],
            }
        };
        let phi = ghz_state(3, std::f64::consts::FRAC_PI_2).unwrap();
        let mut amp = c(0.0, 0.0);
        for basis_idx in 0..8usize {
            let bits = [(basis_idx >> 2) & 1, (basis_idx >> 1) & 1, basis_idx & 1];
            let mut w = c(1.0, 0.0);
            for i in 0..3 {
                w *= site(x[i], a[i])[bits[i]].conj();
            }
            amp += w * phi.amplitude(basis_idx);
        }
        amp.norm_sqr()
    }

    #[test]
    fn born_matches_amplitude_oracle_for_ghz3() {
        let corr = born_correlation(&optimal_state(3), &pauli_config(3)).unwrap();
        let sc = corr.scenario().clone();
        for x_idx in 0..8 {
            let x = sc.setting_tuple(x_idx);
            for a_idx in 0..8 {
                let a = sc.outcome_tuple(a_idx);
                let expect = amplitude_oracle_ghz3(&x, &a);
                assert!(
                    (corr.prob_by_index(x_idx, a_idx) - expect).abs() < 1e-12,
                    "x={x:?} a={a:?}"
                );
            }
        }
        // Full correlators match cos(k pi/2 - pi/2) with k the sigma_y count.
        for x_idx in 0..8 {
            let x = sc.setting_tuple(x_idx);
            let k = x.iter().sum::<usize>() as f64;
            let mut e = 0.0;
            for a_idx in 0..8 {
                let sign = if (a_idx as u32).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
                e += sign * corr.prob_by_index(x_idx, a_idx);
            }
            let expect = (k * std::f64::consts::FRAC_PI_2 - std::f64::consts::FRAC_PI_2).cos();
            assert!((e - expect).abs() < 1e-12, "x={x:?}");
        }
    }

    #[test]
    fn bell_operator_zero_expression() {
        let sc = Scenario::binary(2).unwrap();
        let expr = BellExpression::new(sc, vec![0.0; 16], 0.0, None).unwrap();
        let m = bell_operator(&expr, &pauli_config(2)).unwrap();
        assert!(m.frobenius_norm() < 1e-15);
    }

    #[test]
    fn mermin_operator_top_eigenvalue() {
        let m = bell_operator(&mabk(3).unwrap(), &pauli_config(3)).unwrap();
        assert!(m.hermiticity_residual() < 1e-12);
        let eig = hermitian_eig(&m).unwrap();
        assert!((eig.values[0] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn observable_expansion_matches_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for n in [2usize, 3] {
            let sc = Scenario::binary(n).unwrap();
            let size = sc.num_setting_tuples() * sc.num_outcome_tuples();
            let coeffs: Vec<f64> = (0..size).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let expr = BellExpression::new(sc.clone(), coeffs, 1.0, None).unwrap();
            let meas = MeasurementConfig::random_projective(
                &vec![2; n],
                sc.settings(),
                sc.outcomes(),
                &mut rng,
            )
            .unwrap();
            let fast = bell_operator(&expr, &meas).unwrap();
            let slow = bell_operator_direct(&expr, &meas);
            let slow = slow.add(&slow.dagger()).scaled_re(0.5);
            assert!(fast.max_abs_diff(&slow) < 1e-10, "n = {n}");
        }
    }

    #[test]
    fn trace_identity_on_random_draws() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let expr = mabk(3).unwrap();
        for _ in 0..50 {
            let rho = random_density(8, &mut rng);
            let meas = MeasurementConfig::random_projective(
                &[2, 2, 2],
                &[2, 2, 2],
                &[2, 2, 2],
                &mut rng,
            )
            .unwrap();
            let corr = born_correlation(&rho, &meas).unwrap();
            let via_corr = expr.evaluate(&corr).unwrap();
            let via_op = bell_operator(&expr, &meas)
                .unwrap()
                .trace_product_re(rho.matrix());
            assert!((via_corr - via_op).abs() < 1e-9);
            assert!(corr.no_signaling_residual() < NO_SIGNALING_TOL);
        }
    }

    #[test]
    fn correlation_validation() {
        let sc = Scenario::binary(2).unwrap();
        // Negative entry.
        let mut t = vec![0.25; 16];
        t[3] = -0.1;
        assert!(Correlation::new(sc.clone(), t).is_err());
        // Bad normalization.
        let t = vec![0.3; 16];
        assert!(Correlation::new(sc.clone(), t).is_err());
        // Wrong size.
        assert!(Correlation::new(sc.clone(), vec![0.25; 8]).is_err());
        // Residual reporting.
        let mut t = vec![0.25; 16];
        t[0] = 0.25 + 4e-10;
        let corr = Correlation::new(sc, t).unwrap();
        assert!(corr.worst_normalization_residual() > 3e-10);
        assert!(corr.worst_normalization_residual() < 1e-9);
    }

    #[test]
    fn correlation_file_roundtrip() {
        let corr = born_correlation(&optimal_state(3), &pauli_config(3)).unwrap();
        let text = corr.to_json_string();
        let back = Correlation::from_json_str(&text).unwrap();
        assert_eq!(back.scenario(), corr.scenario());
        for x in 0..8 {
            for a in 0..8 {
                assert!((back.prob_by_index(x, a) - corr.prob_by_index(x, a)).abs() < 1e-15);
            }
        }
        // Malformed inputs give parse errors naming the offender.
        assert!(Correlation::from_json_str("{ not json").is_err());
        let bad_key = text.replace("\"0,0,0\"", "\"0,0,7\"");
        assert!(Correlation::from_json_str(&bad_key).is_err());
    }

    #[test]
    fn expression_file_roundtrip() {
        let expr = mabk(3).unwrap();
        let text = expr.to_json_string();
        let back = BellExpression::from_json_str(&text).unwrap();
        assert_eq!(back, expr);
    }

    #[test]
    fn measurement_validation_rejects_bad_sets() {
        // Non-projective: a PSD operator that is not idempotent.
        let half = ComplexMatrix::identity(2).scaled_re(0.5);
        let site = vec![vec![half.clone(), half]];
        assert!(MeasurementConfig::new(vec![2, 2], vec![site.clone(), site]).is_err());
        // Incomplete.
        let p0 = ComplexMatrix::two_by_two([c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        let site = vec![vec![p0.clone(), p0]];
        assert!(MeasurementConfig::new(vec![2, 2], vec![site.clone(), site]).is_err());
    }

    #[test]
    fn random_configs_are_valid_and_tsirelson_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let expr = mabk(3).unwrap();
        for _ in 0..100 {
            let meas = MeasurementConfig::random_projective(
                &[2, 2, 2],
                &[2, 2, 2],
                &[2, 2, 2],
                &mut rng,
            )
            .unwrap();
            let m = bell_operator(&expr, &meas).unwrap();
            let eig = hermitian_eig(&m).unwrap();
            assert!(eig.values[0] <= 2.0 + 1e-9);
        }
    }
}
