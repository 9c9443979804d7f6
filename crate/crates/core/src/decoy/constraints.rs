use serde::{Deserialize, Serialize};

use super::lp::{Direction, LinearConstraint, LinearProgram, LpStatus, Relation};
use super::{truncation_remainder, GainEntry, GainsTable};
use crate::error::{domain, Error, Result};
use crate::finitesize::{FluctuationPolicy, Loosening};
use crate::protocol::photon_weight;
use crate::protocol::IntensityClass::{self, Decoy1 as U, Decoy2 as V, Vacuum as W};

/// Class pairs that keep their own yield and error constraints.
pub const RETAINED_PAIRS: [(IntensityClass, IntensityClass); 6] = [(U, U), (U, V), (U, W), (V, U), (W, U), (V, V)];
/// Class pairs folded into one cumulative constraint per direction.
pub const CUMULATIVE_PAIRS: [(IntensityClass, IntensityClass); 3] = [(V, W), (W, V), (W, W)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    YieldUpper,
    YieldLower,
    Error,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledConstraint {
    pub label: String,
    pub kind: ConstraintKind,
    pub row: LinearConstraint,
}

/// Linear inequalities over `y^{m,n}` (`m, n <= K`), optionally followed by
/// the scalar single-photon error `e`. All variables live in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSet {
    pub k: usize,
    pub with_error: bool,
    pub constraints: Vec<LabeledConstraint>,
    /// Constraints skipped because their fluctuation factor is undefined.
    pub dropped: Vec<String>,
}

impl ConstraintSet {
    fn new(k: usize) -> Self {
        Self { k, with_error: false, constraints: Vec::new(), dropped: Vec::new() }
    }

    pub fn index(&self, m: usize, n: usize) -> usize {
        m * (self.k + 1) + n
    }

    pub fn n_yields(&self) -> usize {
        (self.k + 1) * (self.k + 1)
    }

    pub fn n_vars(&self) -> usize {
        self.n_yields() + usize::from(self.with_error)
    }

    pub fn error_index(&self) -> Option<usize> {
        self.with_error.then(|| self.n_yields())
    }

    pub fn count(&self, kind: ConstraintKind) -> usize {
        self.constraints.iter().filter(|c| c.kind == kind).count()
    }

    fn widen(&mut self) {
        self.with_error = true;
        let n = self.n_vars();
        for c in &mut self.constraints {
            c.row.coeffs.resize(n, 0.0);
        }
    }

    pub fn to_program(&self, direction: Direction) -> LinearProgram {
        let mut lp = LinearProgram::new(self.n_vars(), direction);
        lp.upper = vec![Some(1.0); self.n_vars()];
        for c in &self.constraints {
            lp.push(c.row.clone());
        }
        lp
    }

    /// Labels of constraints holding with equality at `x`, to relative tolerance.
    pub fn active_labels(&self, x: &[f64], tol: f64) -> Vec<String> {
        self.constraints.iter().filter(|c| c.row.violation(x).abs() <= tol).map(|c| c.label.clone()).collect()
    }

    /// Row of `(μi^m/m!)(μj^n/n!)` coefficients for one class pair.
    fn mixture_row(&self, mu_i: f64, mu_j: f64) -> Vec<f64> {
        let mut row = vec![0.0; self.n_vars()];
        let wi: Vec<f64> = (0..=self.k as u32).map(|m| photon_weight(mu_i, m)).collect();
        let wj: Vec<f64> = (0..=self.k as u32).map(|n| photon_weight(mu_j, n)).collect();
        for m in 0..=self.k {
            for n in 0..=self.k {
                row[self.index(m, n)] = wi[m] * wj[n];
            }
        }
        row
    }

    /// `½y00 + ½Σ_n μj^n/n! y0n + ½Σ_m μi^m/m! ym0`: the vacuum contributions to
    /// the error product, with their error rate fixed at one half.
    fn vacuum_error_row(&self, mu_i: f64, mu_j: f64) -> Vec<f64> {
        let mut row = vec![0.0; self.n_vars()];
        row[self.index(0, 0)] = 0.5;
        for n in 1..=self.k {
            row[self.index(0, n)] = 0.5 * photon_weight(mu_j, n as u32);
        }
        for m in 1..=self.k {
            row[self.index(m, 0)] = 0.5 * photon_weight(mu_i, m as u32);
        }
        row
    }
}

fn pair_label(pairs: &[(IntensityClass, IntensityClass)]) -> String {
    pairs.iter().map(|(a, b)| format!("{a}{b}")).collect::<Vec<_>>().join("+")
}

fn groups() -> Vec<Vec<(IntensityClass, IntensityClass)>> {
    let mut g: Vec<Vec<_>> = RETAINED_PAIRS.iter().map(|&p| vec![p]).collect();
    g.push(CUMULATIVE_PAIRS.to_vec());
    g
}

fn add(acc: &mut [f64], row: &[f64], scale: f64) {
    for (a, r) in acc.iter_mut().zip(row) {
        *a += scale * r;
    }
}

/// The 7 upper and 7 lower yield inequalities. With a policy, the observed
/// gains are inflated in upper bounds and deflated in lower bounds.
pub fn build_yield_constraints(
    gains: &GainsTable,
    k: usize,
    fluct: Option<&FluctuationPolicy>,
) -> Result<ConstraintSet> {
    if k < 1 {
        return Err(domain("truncation order must be at least 1"));
    }
    let n = fluct.map_or(0.0, |p| p.n_sigmas);
    let mut set = ConstraintSet::new(k);
    for group in groups() {
        let label = pair_label(&group);
        let mut coeffs = vec![0.0; set.n_vars()];
        let (mut upper, mut lower, mut used) = (0.0, 0.0, 0);
        for &(a, b) in &group {
            let e = gains.x_entry(a, b)?;
            let l = Loosening::for_counts(e.coincidences, None, n);
            let (Some(gu), Some(gl)) = (l.gain_upper, l.gain_lower) else {
                set.dropped.push(format!("yield {a}{b}"));
                continue;
            };
            let boost = (e.flux_a + e.flux_b).exp();
            add(&mut coeffs, &set.mixture_row(e.flux_a, e.flux_b), 1.0);
            upper += boost * e.gain * gu;
            lower += boost * (e.gain * gl - truncation_remainder(k, e.flux_a, e.flux_b)?);
            used += 1;
        }
        if used == 0 {
            continue;
        }
        set.constraints.push(LabeledConstraint {
            label: format!("yield upper {label}"),
            kind: ConstraintKind::YieldUpper,
            row: LinearConstraint::new(coeffs.clone(), Relation::Le, upper),
        });
        set.constraints.push(LabeledConstraint {
            label: format!("yield lower {label}"),
            kind: ConstraintKind::YieldLower,
            row: LinearConstraint::new(coeffs, Relation::Ge, lower),
        });
    }
    Ok(set)
}

/// Append the 6 per-pair error inequalities and the cumulative one, which
/// divides every member by its flux product and averages them.
pub fn build_error_constraints(
    set: &mut ConstraintSet,
    gains: &GainsTable,
    y11_lower: f64,
    fluct: Option<&FluctuationPolicy>,
) -> Result<()> {
    if !(y11_lower > 0.0) {
        return Err(Error::ZeroYieldBound);
    }
    set.widen();
    let e_idx = set.n_yields();
    let n = fluct.map_or(0.0, |p| p.n_sigmas);
    let error_rhs = |e: &GainEntry| -> Option<f64> {
        e.error_rate?;
        let l = Loosening::for_counts(e.coincidences, Some(e.error_coincidences), n);
        Some((e.flux_a + e.flux_b).exp() * e.gain * e.error_rate? * l.error_upper?)
    };
    for group in groups() {
        let label = pair_label(&group);
        let cumulative = group.len() > 1;
        let mut coeffs = vec![0.0; set.n_vars()];
        let (mut rhs, mut used) = (0.0, 0usize);
        for &(a, b) in &group {
            let e = gains.x_entry(a, b)?;
            let prod = e.flux_a * e.flux_b;
            let Some(r) = error_rhs(e) else {
                set.dropped.push(format!("error {a}{b}"));
                continue;
            };
            if cumulative {
                if prod <= 0.0 {
                    set.dropped.push(format!("error {a}{b}"));
                    continue;
                }
                add(&mut coeffs, &set.vacuum_error_row(e.flux_a, e.flux_b), 1.0 / prod);
                rhs += r / prod;
                coeffs[e_idx] += y11_lower;
            } else {
                coeffs = set.vacuum_error_row(e.flux_a, e.flux_b);
                coeffs[e_idx] = prod * y11_lower;
                rhs = r;
            }
            used += 1;
        }
        if used == 0 {
            continue;
        }
        set.constraints.push(LabeledConstraint {
            label: format!("error {label}"),
            kind: ConstraintKind::Error,
            row: LinearConstraint::new(coeffs, Relation::Le, rhs),
        });
    }
    Ok(())
}

/// Smallest sigma count `n` for which the yield constraints, loosened by
/// `n·sqrt(C)/N` per member, admit a solution. Zero for self-consistent gains.
pub fn consistency_sigmas(gains: &GainsTable, k: usize) -> Result<f64> {
    let base = build_yield_constraints(gains, k, None)?;
    let nv = base.n_vars();
    let mut lp = LinearProgram::new(nv + 1, Direction::Minimize);
    lp.objective[nv] = 1.0;
    lp.upper = vec![Some(1.0); nv];
    lp.upper.push(None);
    let mut constraint = base.constraints.iter();
    for group in groups() {
        let mut slack = 0.0;
        for &(a, b) in &group {
            let e = gains.x_entry(a, b)?;
            slack += (e.flux_a + e.flux_b).exp() * e.coincidences.sqrt() / e.pairs_emitted;
        }
        for _ in 0..2 {
            let c = constraint.next().expect("two rows per group");
            let mut coeffs = c.row.coeffs.clone();
            coeffs.push(match c.kind {
                ConstraintKind::YieldUpper => -slack,
                _ => slack,
            });
            lp.push(LinearConstraint::new(coeffs, c.row.relation, c.row.rhs));
        }
    }
    let sol = lp.solve();
    match sol.status {
        LpStatus::Optimal => Ok(sol.value.max(0.0)),
        status => Err(Error::Lp { stage: "consistency", status }),
    }
}

#[cfg(test)]
mod tests {
    use super::super::{bound_single_photon_error, bound_single_photon_yield, BellGroup, GainEntry};
    use super::*;
    use crate::protocol::IntensityClass::{Decoy1, Decoy2, Vacuum};
    use approx::assert_relative_eq;

    const FLUX: [(IntensityClass, f64); 3] = [(Decoy1, 0.01), (Decoy2, 0.002), (Vacuum, 0.001)];

    /// Gains produced exactly by a yield/error model `(y(m,n), e(m,n))`.
    pub(crate) fn synthetic_gains(
        fluxes: &[(IntensityClass, f64)],
        pairs: f64,
        model: impl Fn(usize, usize) -> (f64, f64),
    ) -> GainsTable {
        let mut xx = Vec::new();
        for &(a, ma) in fluxes {
            for &(b, mb) in fluxes {
                let (mut q, mut qe) = (0.0, 0.0);
                for m in 0..40 {
                    for n in 0..40 {
                        let p = crate::protocol::poisson_pmf(m as u32, ma).unwrap()
                            * crate::protocol::poisson_pmf(n as u32, mb).unwrap();
                        let (y, e) = model(m, n);
                        q += p * y;
                        qe += p * y * e;
                    }
                }
                xx.push(GainEntry {
                    class_a: a,
                    class_b: b,
                    flux_a: ma,
                    flux_b: mb,
                    coincidences: q * pairs,
                    error_coincidences: qe * pairs,
                    pairs_emitted: pairs,
                    gain: q,
                    error_rate: (q > 0.0).then(|| qe / q),
                    loosening: Loosening::NONE,
                });
            }
        }
        GainsTable { bell: BellGroup::Singlet, zz: None, xx, n_sigmas: 0.0 }
    }

    #[test]
    fn fourteen_yield_and_seven_error_rows() {
        let g = synthetic_gains(&FLUX, 1e11, |_, _| (0.02, 0.3));
        let mut set = build_yield_constraints(&g, 7, None).unwrap();
        assert_eq!(set.count(ConstraintKind::YieldUpper), 7);
        assert_eq!(set.count(ConstraintKind::YieldLower), 7);
        build_error_constraints(&mut set, &g, 0.01, None).unwrap();
        assert_eq!(set.count(ConstraintKind::Error), 7);
        assert_eq!(set.constraints.len(), 21);
        assert_eq!(set.n_vars(), 65);
    }

    #[test]
    fn missing_pair_is_incomplete() {
        let mut g = synthetic_gains(&FLUX, 1e11, |_, _| (0.02, 0.3));
        g.xx.pop();
        assert!(matches!(build_yield_constraints(&g, 7, None), Err(Error::IncompleteData(_))));
    }

    #[test]
    fn constant_yield_is_bracketed() {
        let c = 0.02;
        let g = synthetic_gains(&FLUX, 1e11, |_, _| (c, 0.25));
        let y = bound_single_photon_yield(&g, 7, None).unwrap().value;
        let slack = truncation_remainder(7, 0.01, 0.01).unwrap() * (0.02f64).exp() / (0.01 * 0.01);
        assert!(y <= c + 1e-9, "{y}");
        assert!(y >= c - slack - 1e-6, "{y}");
    }

    #[test]
    fn all_zero_gains_give_zero() {
        let g = synthetic_gains(&FLUX, 1e11, |_, _| (0.0, 0.0));
        assert_eq!(bound_single_photon_yield(&g, 7, None).unwrap().value, 0.0);
        assert!(matches!(bound_single_photon_error(&g, 0.0, 7, None), Err(Error::ZeroYieldBound)));
    }

    #[test]
    fn upper_rhs_carries_fluctuation() {
        let g = synthetic_gains(&FLUX, 1e11, |_, _| (0.02, 0.3));
        let policy = FluctuationPolicy::new(7.0).unwrap();
        let set = build_yield_constraints(&g, 7, Some(&policy)).unwrap();
        let uv = g.x_entry(Decoy1, Decoy2).unwrap();
        let row = set.constraints.iter().find(|c| c.label == "yield upper uv").unwrap();
        let expected = (0.01f64).exp() * (0.002f64).exp() * uv.gain * (1.0 + 7.0 / (uv.pairs_emitted * uv.gain).sqrt());
        assert_relative_eq!(row.row.rhs, expected, max_relative = 1e-14);
    }

    #[test]
    fn cumulative_rows_are_sums_and_averages() {
        let g = synthetic_gains(&FLUX, 1e11, |m, n| (0.01 + 0.001 * (m + n) as f64, 0.2));
        let mut set = build_yield_constraints(&g, 7, None).unwrap();
        build_error_constraints(&mut set, &g, 0.01, None).unwrap();
        let find = |l: &str| set.constraints.iter().find(|c| c.label == l).unwrap().row.clone();
        let cum = find("yield upper vw+wv+ww");
        let mut sum = vec![0.0; set.n_vars()];
        let mut rhs = 0.0;
        for (a, b) in CUMULATIVE_PAIRS {
            let e = g.x_entry(a, b).unwrap();
            add(&mut sum, &set.mixture_row(e.flux_a, e.flux_b), 1.0);
            rhs += (e.flux_a + e.flux_b).exp() * e.gain;
        }
        for (x, y) in cum.coeffs.iter().zip(&sum) {
            assert_relative_eq!(x, y, max_relative = 1e-15);
        }
        assert_relative_eq!(cum.rhs, rhs, max_relative = 1e-15);

        let err = find("error vw+wv+ww");
        assert_relative_eq!(err.coeffs[set.n_yields()], 3.0 * 0.01, max_relative = 1e-15);
        let mut avg = 0.0;
        for (a, b) in CUMULATIVE_PAIRS {
            let e = g.x_entry(a, b).unwrap();
            avg += (e.flux_a + e.flux_b).exp() * e.gain * e.error_rate.unwrap() / (e.flux_a * e.flux_b);
        }
        assert_relative_eq!(err.rhs, avg, max_relative = 1e-14);
    }

    #[test]
    fn consistent_gains_need_no_relaxation() {
        let g = synthetic_gains(&FLUX, 1e11, |m, n| ((0.3 * (m + n) as f64).min(1.0) * 0.05 + 1e-5, 0.3));
        assert!(consistency_sigmas(&g, 7).unwrap() < 1e-9);
    }

    #[test]
    fn inconsistent_gains_need_relaxation() {
        let mut g = synthetic_gains(&FLUX, 1e11, |_, _| (0.02, 0.3));
        for e in g.xx.iter_mut().filter(|e| e.class_a == Decoy1 && e.class_b == Decoy1) {
            e.gain *= 1.5;
            e.coincidences *= 1.5;
        }
        let n = consistency_sigmas(&g, 7).unwrap();
        assert!(n > 0.0);
        let policy = FluctuationPolicy::new(n * (1.0 + 1e-6) + 1e-9).unwrap();
        assert!(bound_single_photon_yield(&g, 7, Some(&policy)).is_ok());
        let tighter = FluctuationPolicy::new(n * 0.9).unwrap();
        assert!(bound_single_photon_yield(&g, 7, Some(&tighter)).is_err());
    }
}
