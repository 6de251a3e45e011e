//! Entanglement lower bounds from (F-hat, a1, r).
//!
//! The geometric-measure bound maximizes, over c in
//! [F-hat/sqrt(a1), sqrt(a1)], the expression
//!
//! ```text
//! (a1 - c^2)/(1 - c^2) * (1 - (F-hat/sqrt(a1) * c
//!     + sqrt(1 - F-hat^2/a1) * sqrt(1 - c^2))^2)
//! ```
//!
//! valid whenever F-hat <= a1; otherwise the bound is vacuous. The
//! relative-entropy bound is -2 log2(F-hat) minus an entropy cap derived
//! from a1: the maximum Von Neumann entropy of any r-level spectrum whose
//! largest eigenvalue is at least a1.

use serde::{Deserialize, Serialize};

use crate::bell::{BellExpression, Correlation};
use crate::error::{Error, Result};
use crate::nondegen::{purity_bound, NondegeneracyCertificate};
use crate::prodfit::fhat;
use crate::util::fmt_g12;

/// Grid size for the first pass of the c-maximization.
const C_GRID: usize = 1000;
/// Width at which golden-section refinement stops.
const C_REFINE_TOL: f64 = 1e-10;

/// Result of the geometric-measure maximization.
#[derive(Clone, Copy, Debug)]
pub struct GmeBound {
    /// The lower bound on the geometric measure; 0 when infeasible.
    pub value: f64,
    /// The maximizing c, NaN when infeasible.
    pub c_star: f64,
    /// Whether F-hat <= a1 held.
    pub feasible: bool,
}

fn check_unit_interval(name: &str, v: f64) -> Result<f64> {
    if !(v > 0.0) || v > 1.0 + 1e-12 {
        return Err(Error::InvalidArgument(format!(
            "{name} must lie in (0, 1], got {v}"
        )));
    }
    Ok(v.min(1.0))
}

/// Lower bound on the geometric measure of entanglement.
///
/// Returns a vacuous `(0, NaN)` result flagged infeasible when
/// `fhat > a1`. The maximization scans a 1000-point grid (so no
/// unimodality assumption is needed at the 1e-3 scale) and polishes the
/// best bracket by golden section; the reported bound is the best value
/// actually evaluated, which keeps it a valid lower bound.
pub fn gme_lower_bound(fhat_value: f64, a1: f64) -> Result<GmeBound> {
    let f = check_unit_interval("fhat", fhat_value)?;
    let a1 = check_unit_interval("a1", a1)?;
    if f > a1 {
        return Ok(GmeBound {
            value: 0.0,
            c_star: f64::NAN,
            feasible: false,
        });
    }

    let sqrt_a1 = a1.sqrt();
    let lo = (f / sqrt_a1).min(sqrt_a1);
    let hi = sqrt_a1;
    let ratio = f / sqrt_a1; // fhat/sqrt(a1) <= 1 given feasibility
    let orth = (1.0 - f * f / a1).max(0.0).sqrt();

    let objective = |c: f64| -> f64 {
        let c2 = c * c;
        let den = 1.0 - c2;
        // At a1 = 1 the prefactor is exactly 1 for c < 1 and the c = 1
        // endpoint is the limit value; for a1 < 1 the endpoint c = sqrt(a1)
        // has prefactor 0.
        let prefactor = if den > 1e-15 {
            (a1 - c2) / den
        } else if a1 >= 1.0 - 1e-12 {
            1.0
        } else {
            0.0
        };
        let inner = ratio * c + orth * (1.0 - c2).max(0.0).sqrt();
        (prefactor * (1.0 - inner * inner)).max(0.0)
    };

    let mut best_c = lo;
    let mut best = objective(lo);
    for i in 1..=C_GRID {
        let c = lo + (hi - lo) * i as f64 / C_GRID as f64;
        let v = objective(c);
        if v > best {
            best = v;
            best_c = c;
        }
    }

    // Golden-section polish on the bracket around the best grid point.
    let step = (hi - lo) / C_GRID as f64;
    let mut a = (best_c - step).max(lo);
    let mut b = (best_c + step).min(hi);
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - phi * (b - a);
    let mut x2 = a + phi * (b - a);
    let mut f1 = objective(x1);
    let mut f2 = objective(x2);
    while b - a > C_REFINE_TOL {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + phi * (b - a);
            f2 = objective(x2);
            if f2 > best {
                best = f2;
                best_c = x2;
            }
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - phi * (b - a);
            f1 = objective(x1);
            if f1 > best {
                best = f1;
                best_c = x1;
            }
        }
    }

    Ok(GmeBound {
        value: best,
        c_star: best_c,
        feasible: true,
    })
}

/// Maximum Von Neumann entropy (bits) over r-level spectra whose largest
/// eigenvalue is at least `a1`.
///
/// The maximizer puts the rest of the mass uniformly on the other r - 1
/// levels; below a1 = 1/r the constraint is inactive and the maximum is
/// log2(r).
pub fn entropy_cap(a1: f64, r: usize) -> Result<f64> {
    let a1 = check_unit_interval("a1", a1)?;
    if r < 2 {
        return Err(Error::InvalidArgument(format!(
            "dimension must be at least 2, got {r}"
        )));
    }
    let rf = r as f64;
    if a1 < 1.0 / rf {
        return Ok(rf.log2());
    }
    let rest = 1.0 - a1;
    if rest <= 0.0 {
        return Ok(0.0);
    }
    Ok(-a1 * a1.log2() - rest * (rest / (rf - 1.0)).log2())
}

/// Lower bound on the relative entropy of entanglement:
/// max(0, -2 log2(fhat) - entropy_cap(a1, r)).
pub fn ree_lower_bound(fhat_value: f64, a1: f64, r: usize) -> Result<f64> {
    let f = check_unit_interval("fhat", fhat_value)?;
    let cap = entropy_cap(a1, r)?;
    Ok((-2.0 * f.log2() - cap).max(0.0))
}

/// Everything the pipeline extracts from one correlation.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoundReport {
    /// Observed Bell value.
    #[serde(rename = "B")]
    pub bell_value: f64,
    /// Certified lower bound on the top spectral weight.
    #[serde(rename = "a1")]
    pub a1_lower: f64,
    pub fhat: f64,
    pub gme_lower: f64,
    pub ree_lower: f64,
    pub entropy_cap: f64,
    /// Maximizing c of the GME bound; NaN (null in JSON) when infeasible.
    #[serde(with = "nan_as_null")]
    pub c_star: f64,
    /// Whether fhat <= a1 held.
    pub feasible: bool,
}

/// JSON has no NaN; map it to null in both directions.
mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_nan() {
            s.serialize_none()
        } else {
            s.serialize_some(v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

impl BoundReport {
    pub fn csv_header() -> &'static str {
        "B,a1,fhat,gme_lower,ree_lower,c_star,feasible"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            fmt_g12(self.bell_value),
            fmt_g12(self.a1_lower),
            fmt_g12(self.fhat),
            fmt_g12(self.gme_lower),
            fmt_g12(self.ree_lower),
            fmt_g12(self.c_star),
            self.feasible
        )
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }
}

/// Run the full pipeline on one correlation: Bell value, eigenweight
/// bound, F-hat, then the GME and REE lower bounds.
///
/// Vacuous stages degrade gracefully (zero bounds, `feasible = false`)
/// rather than erroring, so parameter sweeps produce continuous curves.
pub fn analyze(
    expr: &BellExpression,
    corr: &Correlation,
    cert: &NondegeneracyCertificate,
    restarts: usize,
    seed: u64,
) -> Result<BoundReport> {
    if corr.scenario() != expr.scenario() {
        return Err(Error::ScenarioMismatch(
            "correlation and expression disagree on the scenario".into(),
        ));
    }
    if cert.dims.len() != expr.scenario().parties() {
        return Err(Error::ScenarioMismatch(format!(
            "certificate covers {} parties, expression has {}",
            cert.dims.len(),
            expr.scenario().parties()
        )));
    }

    let bell_value = expr.evaluate(corr)?;
    let pb = purity_bound(cert, bell_value)?;
    let est = fhat(corr, restarts, seed);
    let r = cert.total_dim();

    let gme = gme_lower_bound(est.fhat, pb.a1_lower.max(f64::MIN_POSITIVE))?;
    let cap = if pb.a1_lower > 0.0 {
        entropy_cap(pb.a1_lower, r)?
    } else {
        (r as f64).log2()
    };
    let ree = (-2.0 * est.fhat.log2() - cap).max(0.0);

    Ok(BoundReport {
        bell_value,
        a1_lower: pb.a1_lower,
        fhat: est.fhat,
        gme_lower: gme.value,
        ree_lower: ree,
        entropy_cap: cap,
        c_star: gme.c_star,
        feasible: gme.feasible,
    })
}
