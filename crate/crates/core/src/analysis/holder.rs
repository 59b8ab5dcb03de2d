//! Modulus-of-continuity regression for boundary CDFs.

use super::dimension::{default_scales, MeasureStudy, MIN_SCALES};
use super::EstimateReport;
use crate::error::EstimateError;
use crate::exec::{map_indexed, Execution};
use crate::measures::{cdf, CdfView};
use crate::stats::{fit_line, Moments};
use crate::theory;

/// Slope of `ln M(ε)` against `ln ε`, where `M(ε) = sup_x F(x+ε) - F(x)`.
///
/// The supremum is taken exactly over all `x` rather than over a grid: for an
/// atomic measure it is attained at windows opening on an atom.
pub fn holder_exponent(f: &CdfView, epsilons: &[f64]) -> Result<EstimateReport, EstimateError> {
    if epsilons.len() < MIN_SCALES {
        return Err(EstimateError::TooFewScales { needed: MIN_SCALES, got: epsilons.len() });
    }
    if !(f.total() > 0.0) {
        return Err(EstimateError::Degenerate("constant CDF".into()));
    }
    if epsilons.iter().any(|&e| !(e > 0.0) || !e.is_finite()) {
        return Err(EstimateError::Degenerate("epsilons must be positive and finite".into()));
    }
    let mut eps = epsilons.to_vec();
    eps.sort_by(f64::total_cmp);
    let moduli: Vec<f64> = eps.iter().map(|&e| f.max_increment(e)).collect();
    let xs: Vec<f64> = eps.iter().map(|e| e.ln()).collect();
    let ys: Vec<f64> = moduli.iter().map(|m| m.ln()).collect();
    let fit = fit_line(&xs, &ys).ok_or_else(|| EstimateError::Degenerate("singular fit".into()))?;
    Ok(EstimateReport {
        name: "holder".into(),
        estimate: fit.slope,
        stderr: fit.slope_stderr,
        scales: (eps[0], *eps.last().expect("non-empty")),
        points_per_scale: 1,
        replicates: 1,
        target: None,
        provenance: String::new(),
        points: eps.into_iter().zip(moduli).collect(),
    })
}

/// Averages the modulus-of-continuity slope of the full boundary CDF over
/// independent replicates.
pub fn run_holder_study(study: &MeasureStudy, exec: Execution) -> Result<EstimateReport, EstimateError> {
    if study.replicates == 0 {
        return Err(EstimateError::InsufficientData("at least one replicate".into()));
    }
    let fits = map_indexed(study.replicates, exec, |r| -> Result<EstimateReport, EstimateError> {
        let (measure, _, _) = study.measure(r, exec)?;
        let eps = default_scales(measure.len(), study.scales)?;
        holder_exponent(&cdf(&measure), &eps)
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    let m = Moments::from_values(fits.iter().map(|f| f.estimate));
    let stderr = if fits.len() > 1 { m.stderr() } else { fits[0].stderr };
    Ok(EstimateReport {
        name: "holder".into(),
        estimate: m.mean(),
        stderr,
        scales: (
            fits.iter().map(|f| f.scales.0).fold(f64::INFINITY, f64::min),
            fits.iter().map(|f| f.scales.1).fold(0.0, f64::max),
        ),
        points_per_scale: fits.len(),
        replicates: fits.len(),
        target: Some(theory::holder_bound(study.beta)),
        provenance: "one-sided: every exponent below min(1/2, β/3) is a Hölder exponent".into(),
        points: fits.into_iter().flat_map(|f| f.points).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::Normalization;
    use crate::measures::{cdf, BoundaryMeasure};
    use crate::stats::log_space;

    #[test]
    fn lipschitz_cdf_has_slope_one() {
        let n = 100_000;
        let angles = (0..n).map(|i| ((i as f64 + 0.5) / n as f64, true)).collect();
        let m = BoundaryMeasure::uniform(angles, n as f64, Normalization::ByCount);
        let r = holder_exponent(&cdf(&m), &log_space(1e-3, 0.5, 10)).unwrap();
        assert!((r.estimate - 1.0).abs() < 0.02, "{}", r.estimate);
    }

    #[test]
    fn unit_jump_has_slope_zero() {
        let m = BoundaryMeasure::uniform(vec![(0.3, true)], 1.0, Normalization::ByCount);
        let r = holder_exponent(&cdf(&m), &log_space(1e-4, 0.5, 6)).unwrap();
        assert_eq!(r.estimate, 0.0);
    }

    #[test]
    fn study_averages_replicates() {
        use crate::analysis::HorizonRule;
        let mut s = MeasureStudy::new(1.0, 4);
        s.horizon = HorizonRule::Population(3000);
        s.replicates = 3;
        let r = run_holder_study(&s, Execution::Parallel).unwrap();
        assert_eq!(r.replicates, 3);
        assert!(r.estimate > 0.0 && r.estimate < 1.2);
        assert!((r.target.unwrap() - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn constant_cdf_is_rejected() {
        let m = BoundaryMeasure::uniform(vec![], 1.0, Normalization::ByCount);
        assert!(matches!(holder_exponent(&cdf(&m), &log_space(1e-3, 0.5, 6)), Err(EstimateError::Degenerate(_))));
        let one = BoundaryMeasure::uniform(vec![(0.3, true)], 1.0, Normalization::ByCount);
        assert!(matches!(holder_exponent(&cdf(&one), &[0.1, 0.2]), Err(EstimateError::TooFewScales { .. })));
    }
}
