//! Pareto profit frontier of the duopoly and the bargaining solutions on it.
//!
//! A frontier point fixes the profit of one firm and lets the market price
//! adjust so that the other firm's profit is as large as possible:
//!
//! ```text
//! pi_j(pi_i) = max_p ((a - p) / b - pi_i / (p - c_i)) * (p - c_j)
//! ```
//!
//! The inner maximum is found by golden-section search over
//! `p in (max(c_L, c_H), a)`. Bargaining solutions are located by bisection on
//! `pi_L`, each step evaluating the frontier.
//!
//! Kalai-Smorodinsky uses the standard condition with each firm's own
//! disagreement and monopoly profit on its own side of the equation:
//!
//! ```text
//! (pi_L - d_L) / (M_L - d_L) = (pi_H - d_H) / (M_H - d_H)
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{self, BenchmarkLabel, BenchmarkPoint, Firm, MarketParams, Outcome};
use crate::search::{self, Bisection};

const PRICE_REL_TOL: f64 = 1e-9;
const PRICE_MAX_ITER: usize = 200;
const PRICE_LOWER_OFFSET: f64 = 1e-12;
const BRACKET_OFFSET: f64 = 1e-9;
const BISECTION_MAX_ITER: usize = 200;
const RESIDUAL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisagreementKind {
    Nash,
    Minmax,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisagreementPoint {
    pub kind: DisagreementKind,
    pub d_l: f64,
    pub d_h: f64,
}

impl DisagreementPoint {
    pub fn get(&self, firm: Firm) -> f64 {
        match firm {
            Firm::L => self.d_l,
            Firm::H => self.d_h,
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self { d_l: self.d_l * factor, d_h: self.d_h * factor, ..*self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrontierPoint {
    pub pi_l: f64,
    pub pi_h: f64,
    pub p: f64,
    pub q_l: f64,
    pub q_h: f64,
}

impl FrontierPoint {
    pub fn outcome(&self, params: &MarketParams) -> Outcome {
        Outcome::compute(params, self.q_l, self.q_h)
    }

    fn profit(&self, firm: Firm) -> f64 {
        match firm {
            Firm::L => self.pi_l,
            Firm::H => self.pi_h,
        }
    }
}

/// Largest profit attainable by the rival of `firm` when `firm` earns `pi`.
pub fn frontier_value(params: &MarketParams, pi: f64, firm: Firm) -> Result<FrontierPoint> {
    let max = params.monopoly_profit(firm);
    if !(pi >= 0.0 && pi <= max) {
        return Err(Error::InfeasibleProfit { firm: firm.as_str(), target: pi, max });
    }
    let rival = firm.other();
    let (c_i, c_j) = (params.cost(firm), params.cost(rival));
    let (a, b) = (params.a, params.b);

    let objective = |p: f64| ((a - p) / b - pi / (p - c_i)) * (p - c_j);
    let lo = params.c_l.max(params.c_h) + PRICE_LOWER_OFFSET;
    let best = search::golden_section_max(objective, lo, a, PRICE_REL_TOL, PRICE_MAX_ITER);

    let p = best.x;
    let q_i = pi / (p - c_i);
    let q_j = ((a - p) / b - q_i).max(0.0);
    let pi_j = q_j * (p - c_j);
    let point = match firm {
        Firm::L => FrontierPoint { pi_l: pi, pi_h: pi_j, p, q_l: q_i, q_h: q_j },
        Firm::H => FrontierPoint { pi_l: pi_j, pi_h: pi, p, q_l: q_j, q_h: q_i },
    };
    Ok(point)
}

/// `n` frontier points with `pi_L` evenly spaced over `[0, M_L]`.
pub fn frontier_samples(params: &MarketParams, n: usize) -> Result<Vec<FrontierPoint>> {
    let max = params.monopoly_profit(Firm::L);
    match n {
        0 => Ok(Vec::new()),
        1 => Ok(vec![frontier_value(params, 0.0, Firm::L)?]),
        _ => (0..n)
            .map(|k| {
                let pi = (max * k as f64 / (n - 1) as f64).min(max);
                frontier_value(params, pi, Firm::L)
            })
            .collect(),
    }
}

pub fn nash_disagreement(params: &MarketParams) -> Result<DisagreementPoint> {
    let nash = market::nash_point(params)?.outcome;
    Ok(DisagreementPoint { kind: DisagreementKind::Nash, d_l: nash.pi_l, d_h: nash.pi_h })
}

fn minmax_best_response(params: &MarketParams, firm: Firm) -> (f64, f64) {
    let q = ((params.a - params.cost(firm) - params.b * params.q_max) / (2.0 * params.b))
        .clamp(0.0, params.q_max);
    (q, params.profit(firm, q, params.q_max))
}

/// Best profit each firm can secure while its rival floods the market at
/// `q_max`, over continuous quantities.
pub fn minmax_disagreement(params: &MarketParams) -> DisagreementPoint {
    DisagreementPoint {
        kind: DisagreementKind::Minmax,
        d_l: minmax_best_response(params, Firm::L).1,
        d_h: minmax_best_response(params, Firm::H).1,
    }
}

/// Min-max disagreement restricted to an action grid; the rival plays the
/// largest grid quantity.
pub fn minmax_disagreement_on_grid(params: &MarketParams, grid: &[f64]) -> DisagreementPoint {
    let flood = grid.iter().copied().fold(0.0, f64::max);
    let best = |firm: Firm| {
        grid.iter()
            .map(|&q| params.profit(firm, q, flood))
            .fold(f64::NEG_INFINITY, f64::max)
            .max(0.0)
    };
    DisagreementPoint { kind: DisagreementKind::Minmax, d_l: best(Firm::L), d_h: best(Firm::H) }
}

/// Returns the continuous best-response quantity to `q_max` for `firm`.
pub fn minmax_quantity(params: &MarketParams, firm: Firm) -> f64 {
    minmax_best_response(params, firm).0
}

fn solve_on_frontier<G>(
    params: &MarketParams,
    label: &str,
    lo: f64,
    hi: f64,
    residual: G,
) -> Result<FrontierPoint>
where
    G: Fn(&FrontierPoint) -> f64,
{
    let failure = |reason: String| Error::SolverFailure { label: label.to_string(), reason };
    if !(lo < hi) {
        return Err(failure(format!("empty bracket [{lo}, {hi}]")));
    }
    let eval = |pi_l: f64| {
        frontier_value(params, pi_l, Firm::L)
            .map(|pt| residual(&pt))
            .unwrap_or(f64::NAN)
    };
    match search::bisect(eval, lo, hi, BISECTION_MAX_ITER) {
        Bisection::Root { x, residual: r } if r.abs() < RESIDUAL_TOL => {
            frontier_value(params, x, Firm::L)
        }
        Bisection::Root { x, residual: r } => {
            Err(failure(format!("residual {r:e} at pi_L = {x} exceeds tolerance")))
        }
        Bisection::NoSignChange { g_lo, g_hi } => Err(failure(format!(
            "no sign change on [{lo}, {hi}] (g = {g_lo:e}, {g_hi:e})"
        ))),
    }
}

fn bracket(params: &MarketParams, floor: f64) -> (f64, f64) {
    (floor.max(BRACKET_OFFSET), params.monopoly_profit(Firm::L) - BRACKET_OFFSET)
}

fn label_for(kind: DisagreementKind, nash: BenchmarkLabel, minmax: BenchmarkLabel) -> BenchmarkLabel {
    match kind {
        DisagreementKind::Nash => nash,
        DisagreementKind::Minmax => minmax,
    }
}

/// Kalai-Smorodinsky point: equal relative progress from disagreement toward
/// each firm's monopoly profit.
pub fn solve_ks(params: &MarketParams, dis: &DisagreementPoint) -> Result<FrontierPoint> {
    let label = label_for(dis.kind, BenchmarkLabel::KsNash, BenchmarkLabel::Ks).as_str();
    let max_l = params.monopoly_profit(Firm::L);
    let max_h = params.monopoly_profit(Firm::H);
    let inside = frontier_value(params, dis.d_l.min(max_l), Firm::L)
        .map(|pt| pt.pi_h > dis.d_h)
        .unwrap_or(false);
    if !inside || dis.d_l >= max_l || dis.d_h >= max_h {
        return Err(Error::SolverFailure {
            label: label.into(),
            reason: format!("disagreement ({}, {}) not below the frontier", dis.d_l, dis.d_h),
        });
    }
    let (span_l, span_h) = (max_l - dis.d_l, max_h - dis.d_h);
    let (lo, hi) = bracket(params, dis.d_l);
    solve_on_frontier(params, label, lo, hi, |pt| {
        (pt.pi_l - dis.d_l) / span_l - (pt.pi_h - dis.d_h) / span_h
    })
}

/// Equal relative gains: profits proportional to disagreement profits.
pub fn solve_erg(params: &MarketParams, dis: &DisagreementPoint) -> Result<FrontierPoint> {
    let label = label_for(dis.kind, BenchmarkLabel::ErgNash, BenchmarkLabel::Erg).as_str();
    for firm in Firm::BOTH {
        if !(dis.get(firm) > 0.0) {
            return Err(Error::ZeroDisagreement(firm.as_str()));
        }
    }
    // the ratio condition is homogeneous in (d_L, d_H), so d_L is no lower bound
    let (lo, hi) = bracket(params, 0.0);
    solve_on_frontier(params, label, lo, hi, |pt| pt.pi_l / dis.d_l - pt.pi_h / dis.d_h)
}

pub fn solve_equal_split(params: &MarketParams) -> Result<FrontierPoint> {
    let (lo, hi) = bracket(params, 0.0);
    solve_on_frontier(params, BenchmarkLabel::EqualSplit.as_str(), lo, hi, |pt| {
        pt.pi_l - pt.pi_h
    })
}

/// All eight benchmarks in reporting order. Unsuffixed KS/ERG use min-max
/// disagreement, the `_nash` variants use Nash profits.
pub fn benchmark_suite(params: &MarketParams) -> Result<Vec<BenchmarkPoint>> {
    benchmark_suite_with(params, &minmax_disagreement(params))
}

/// Benchmark suite with a caller-supplied min-max disagreement point, e.g.
/// [`minmax_disagreement_on_grid`].
pub fn benchmark_suite_with(params: &MarketParams, minmax_dis: &DisagreementPoint) -> Result<Vec<BenchmarkPoint>> {
    let nash_dis = nash_disagreement(params)?;
    BenchmarkLabel::ALL
        .into_iter()
        .map(|label| {
            let outcome = match label {
                BenchmarkLabel::Nash => market::nash_point(params)?.outcome,
                BenchmarkLabel::Monopoly => market::monopoly_point(params).outcome,
                BenchmarkLabel::AltMonopoly => {
                    market::alternating_monopoly_point(params, 0.5)?.outcome
                }
                BenchmarkLabel::Ks => solve_ks(params, minmax_dis)?.outcome(params),
                BenchmarkLabel::KsNash => solve_ks(params, &nash_dis)?.outcome(params),
                BenchmarkLabel::Erg => solve_erg(params, minmax_dis)?.outcome(params),
                BenchmarkLabel::ErgNash => solve_erg(params, &nash_dis)?.outcome(params),
                BenchmarkLabel::EqualSplit => solve_equal_split(params)?.outcome(params),
            };
            Ok(BenchmarkPoint { label, outcome })
        })
        .collect()
}

/// Distance of a profit pair from the frontier, measured along `pi_H`.
pub fn frontier_residual(params: &MarketParams, pt: &FrontierPoint) -> Result<f64> {
    let on = frontier_value(params, pt.profit(Firm::L), Firm::L)?;
    Ok((on.pi_h - pt.pi_h).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn with_costs(c_l: f64, c_h: f64) -> MarketParams {
        MarketParams::new(91.0, 1.0, c_l, c_h, 45.0).unwrap()
    }

    #[test]
    fn frontier_endpoints() {
        for (c_l, c_h) in [(19.0, 19.0), (16.0, 22.0), (1.0, 37.0)] {
            let p = with_costs(c_l, c_h);
            let pt = frontier_value(&p, 0.0, Firm::L).unwrap();
            assert_abs_diff_eq!(pt.pi_h, p.monopoly_profit(Firm::H), epsilon = 1e-9);
            let pt = frontier_value(&p, 0.0, Firm::H).unwrap();
            assert_abs_diff_eq!(pt.pi_l, p.monopoly_profit(Firm::L), epsilon = 1e-9);
            let top = frontier_value(&p, p.monopoly_profit(Firm::L), Firm::L).unwrap();
            assert_abs_diff_eq!(top.pi_h, 0.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn symmetric_frontier_is_linear() {
        let p = with_costs(19.0, 19.0);
        let pt = frontier_value(&p, 648.0, Firm::L).unwrap();
        assert_abs_diff_eq!(pt.pi_h, 648.0, epsilon = 1e-9);
        assert_abs_diff_eq!(pt.q_l + pt.q_h, 91.0 - pt.p, epsilon = 1e-9);
    }

    #[test]
    fn infeasible_target_rejected() {
        let p = with_costs(16.0, 22.0);
        let err = frontier_value(&p, p.monopoly_profit(Firm::L) + 1.0, Firm::L).unwrap_err();
        assert!(matches!(err, Error::InfeasibleProfit { firm: "L", .. }));
        assert!(frontier_value(&p, -1.0, Firm::H).is_err());
    }

    #[test]
    fn minmax_cases() {
        let sym = minmax_disagreement(&with_costs(19.0, 19.0));
        assert_eq!((sym.d_l, sym.d_h), (182.25, 182.25));
        let asym6 = with_costs(1.0, 37.0);
        assert_eq!(minmax_quantity(&asym6, Firm::H), 4.5);
        assert_eq!(minmax_disagreement(&asym6).d_h, 20.25);
        let choked = MarketParams::new(60.0, 1.0, 19.0, 19.0, 45.0).unwrap();
        let d = minmax_disagreement(&choked);
        assert_eq!((d.d_l, d.d_h), (0.0, 0.0));
        assert_eq!(minmax_quantity(&choked, Firm::L), 0.0);
    }

    #[test]
    fn minmax_on_grid_is_below_continuous() {
        let grid: Vec<f64> = (0..16).map(|i| 3.0 * i as f64).collect();
        for j in 0..=6 {
            let p = with_costs(19.0 - 3.0 * j as f64, 19.0 + 3.0 * j as f64);
            let on_grid = minmax_disagreement_on_grid(&p, &grid);
            let cont = minmax_disagreement(&p);
            assert!(on_grid.d_l <= cont.d_l + 1e-12 && on_grid.d_h <= cont.d_h + 1e-12);
        }
    }

    #[test]
    fn symmetric_solutions_split_evenly() {
        let p = with_costs(19.0, 19.0);
        let nash = nash_disagreement(&p).unwrap();
        let minmax = minmax_disagreement(&p);
        for pt in [
            solve_ks(&p, &nash).unwrap(),
            solve_ks(&p, &minmax).unwrap(),
            solve_erg(&p, &nash).unwrap(),
            solve_erg(&p, &minmax).unwrap(),
            solve_equal_split(&p).unwrap(),
        ] {
            assert_abs_diff_eq!(pt.pi_l, 648.0, epsilon = 1e-6);
            assert_abs_diff_eq!(pt.pi_h, 648.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn erg_requires_positive_disagreement() {
        let p = with_costs(16.0, 22.0);
        let dis = DisagreementPoint { kind: DisagreementKind::Minmax, d_l: 10.0, d_h: 0.0 };
        assert!(matches!(solve_erg(&p, &dis), Err(Error::ZeroDisagreement("H"))));
    }

    #[test]
    fn ks_rejects_disagreement_above_frontier() {
        let p = with_costs(16.0, 22.0);
        let dis = DisagreementPoint { kind: DisagreementKind::Nash, d_l: 900.0, d_h: 900.0 };
        let err = solve_ks(&p, &dis).unwrap_err();
        assert!(matches!(err, Error::SolverFailure { ref label, .. } if label == "ks_nash"));
    }

    #[test]
    fn erg_ratio_under_nash_disagreement() {
        let p = with_costs(1.0, 37.0);
        let pt = solve_erg(&p, &nash_disagreement(&p).unwrap()).unwrap();
        assert_abs_diff_eq!(pt.pi_l / pt.pi_h, 49.0, epsilon = 1e-8);
    }

    #[test]
    fn erg_invariant_to_disagreement_scaling() {
        let p = with_costs(10.0, 28.0);
        let dis = minmax_disagreement(&p);
        let base = solve_erg(&p, &dis).unwrap();
        for factor in [0.5, 2.0, 3.7] {
            let scaled = solve_erg(&p, &dis.scaled(factor)).unwrap();
            assert_abs_diff_eq!(base.pi_l, scaled.pi_l, epsilon = 1e-6);
            assert_abs_diff_eq!(base.pi_h, scaled.pi_h, epsilon = 1e-6);
        }
    }

    #[test]
    fn suite_has_eight_distinct_labels() {
        let suite = benchmark_suite(&with_costs(4.0, 34.0)).unwrap();
        assert_eq!(suite.len(), 8);
        let mut labels: Vec<_> = suite.iter().map(|b| b.label).collect();
        labels.sort();
        labels.dedup();
        assert_eq!(labels.len(), 8);
    }

    #[test]
    fn symmetric_suite_profits() {
        let suite = benchmark_suite(&with_costs(19.0, 19.0)).unwrap();
        for b in &suite {
            match b.label {
                BenchmarkLabel::Nash => assert_eq!(b.outcome.ps, 1152.0),
                _ => assert_abs_diff_eq!(b.outcome.ps, 1296.0, epsilon = 1e-6),
            }
        }
        let asym6 = benchmark_suite(&with_costs(1.0, 37.0)).unwrap();
        let mono = asym6.iter().find(|b| b.label == BenchmarkLabel::Monopoly).unwrap();
        assert_eq!(mono.outcome.ps, 2025.0);
    }
}
