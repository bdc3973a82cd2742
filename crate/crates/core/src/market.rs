//! Linear-demand Cournot duopoly with constant, possibly asymmetric, marginal costs.
//!
//! Firm `L` is the efficient (low-cost) firm and `H` the inefficient one. All
//! benchmark outcomes are closed form.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Firm {
    L,
    H,
}

impl Firm {
    pub const BOTH: [Firm; 2] = [Firm::L, Firm::H];

    pub fn other(self) -> Firm {
        match self {
            Firm::L => Firm::H,
            Firm::H => Firm::L,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Firm::L => 0,
            Firm::H => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Firm::L => "L",
            Firm::H => "H",
        }
    }
}

/// One duopoly instance: inverse demand `p = max(a - bQ, 0)`, marginal costs
/// `c_l <= c_h`, and the upper bound of each firm's quantity space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketParams {
    pub a: f64,
    pub b: f64,
    pub c_l: f64,
    pub c_h: f64,
    pub q_max: f64,
}

impl MarketParams {
    pub fn new(a: f64, b: f64, c_l: f64, c_h: f64, q_max: f64) -> Result<Self> {
        let params = Self { a, b, c_l, c_h, q_max };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        let all_finite = [self.a, self.b, self.c_l, self.c_h, self.q_max]
            .iter()
            .all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::InvalidParams("non-finite value".into()));
        }
        if !(self.a > self.c_h && self.c_h >= self.c_l && self.c_l >= 0.0) {
            return Err(Error::InvalidParams(format!(
                "require a > c_H >= c_L >= 0, got a={}, c_L={}, c_H={}",
                self.a, self.c_l, self.c_h
            )));
        }
        if !(self.b > 0.0 && self.q_max > 0.0) {
            return Err(Error::InvalidParams(format!(
                "require b > 0 and q_max > 0, got b={}, q_max={}",
                self.b, self.q_max
            )));
        }
        Ok(())
    }

    pub fn cost(&self, firm: Firm) -> f64 {
        match firm {
            Firm::L => self.c_l,
            Firm::H => self.c_h,
        }
    }

    /// Quantity a single active firm would choose: `(a - c_i) / 2b`.
    pub fn monopoly_quantity(&self, firm: Firm) -> f64 {
        ((self.a - self.cost(firm)) / (2.0 * self.b)).max(0.0)
    }

    pub fn monopoly_profit(&self, firm: Firm) -> f64 {
        let q = self.monopoly_quantity(firm);
        self.b * q * q
    }

    /// Profit of `firm` producing `own` while its rival produces `other`.
    pub fn profit(&self, firm: Firm, own: f64, other: f64) -> f64 {
        (self.price_unchecked(own + other) - self.cost(firm)) * own
    }

    pub(crate) fn price_unchecked(&self, total: f64) -> f64 {
        (self.a - self.b * total).max(0.0)
    }
}

/// Market outcome for one quantity pair.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Outcome {
    pub q_l: f64,
    pub q_h: f64,
    pub q: f64,
    pub p: f64,
    pub pi_l: f64,
    pub pi_h: f64,
    pub ps: f64,
    pub cs: f64,
    pub ts: f64,
}

impl Outcome {
    /// Builds the outcome without checking quantities against `q_max`.
    pub(crate) fn compute(params: &MarketParams, q_l: f64, q_h: f64) -> Self {
        let q = q_l + q_h;
        let p = params.price_unchecked(q);
        let pi_l = (p - params.c_l) * q_l;
        let pi_h = (p - params.c_h) * q_h;
        let ps = pi_l + pi_h;
        let cs = params.b * q * q / 2.0;
        Self { q_l, q_h, q, p, pi_l, pi_h, ps, cs, ts: ps + cs }
    }

    pub fn profit(&self, firm: Firm) -> f64 {
        match firm {
            Firm::L => self.pi_l,
            Firm::H => self.pi_h,
        }
    }

    /// `w * self + (1 - w) * other`, field by field.
    pub fn mix(&self, other: &Outcome, w: f64) -> Outcome {
        let f = |x: f64, y: f64| w * x + (1.0 - w) * y;
        Outcome {
            q_l: f(self.q_l, other.q_l),
            q_h: f(self.q_h, other.q_h),
            q: f(self.q, other.q),
            p: f(self.p, other.p),
            pi_l: f(self.pi_l, other.pi_l),
            pi_h: f(self.pi_h, other.pi_h),
            ps: f(self.ps, other.ps),
            cs: f(self.cs, other.cs),
            ts: f(self.ts, other.ts),
        }
    }

    pub fn fields(&self) -> [f64; 9] {
        [
            self.q_l, self.q_h, self.q, self.p, self.pi_l, self.pi_h, self.ps, self.cs, self.ts,
        ]
    }

    pub fn from_fields(f: [f64; 9]) -> Outcome {
        Outcome {
            q_l: f[0],
            q_h: f[1],
            q: f[2],
            p: f[3],
            pi_l: f[4],
            pi_h: f[5],
            ps: f[6],
            cs: f[7],
            ts: f[8],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchmarkLabel {
    Nash,
    Monopoly,
    AltMonopoly,
    Erg,
    EqualSplit,
    Ks,
    ErgNash,
    KsNash,
}

impl BenchmarkLabel {
    /// Reporting order used in every table.
    pub const ALL: [BenchmarkLabel; 8] = [
        BenchmarkLabel::Nash,
        BenchmarkLabel::Monopoly,
        BenchmarkLabel::AltMonopoly,
        BenchmarkLabel::Ks,
        BenchmarkLabel::EqualSplit,
        BenchmarkLabel::Erg,
        BenchmarkLabel::KsNash,
        BenchmarkLabel::ErgNash,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BenchmarkLabel::Nash => "nash",
            BenchmarkLabel::Monopoly => "monopoly",
            BenchmarkLabel::AltMonopoly => "alt_monopoly",
            BenchmarkLabel::Erg => "erg",
            BenchmarkLabel::EqualSplit => "equal_split",
            BenchmarkLabel::Ks => "ks",
            BenchmarkLabel::ErgNash => "erg_nash",
            BenchmarkLabel::KsNash => "ks_nash",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            BenchmarkLabel::Nash => "Nash",
            BenchmarkLabel::Monopoly => "Monopoly",
            BenchmarkLabel::AltMonopoly => "Alternating Monopoly",
            BenchmarkLabel::Ks => "Kalai-Smorodinsky",
            BenchmarkLabel::EqualSplit => "Equal Split",
            BenchmarkLabel::Erg => "Equal Relative Gains",
            BenchmarkLabel::KsNash => "Kalai-Smorodinsky (Nash)",
            BenchmarkLabel::ErgNash => "Equal Relative Gains (Nash)",
        }
    }

    pub fn parse(s: &str) -> Option<BenchmarkLabel> {
        Self::ALL.into_iter().find(|l| l.as_str() == s)
    }
}

impl fmt::Display for BenchmarkLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkPoint {
    pub label: BenchmarkLabel,
    pub outcome: Outcome,
}

pub fn price(params: &MarketParams, total: f64) -> Result<f64> {
    if total < 0.0 || total.is_nan() {
        return Err(Error::NegativeQuantity(total));
    }
    Ok(params.price_unchecked(total))
}

/// Profits are not floored: producing beyond the choke quantity yields losses.
pub fn outcome_from_quantities(params: &MarketParams, q_l: f64, q_h: f64) -> Result<Outcome> {
    for q in [q_l, q_h] {
        if !(0.0..=params.q_max).contains(&q) {
            return Err(Error::QuantityOutOfRange { value: q, max: params.q_max });
        }
    }
    Ok(Outcome::compute(params, q_l, q_h))
}

/// Interior static Nash equilibrium `q_i = (a - 2c_i + c_j) / 3b`.
pub fn nash_quantities(params: &MarketParams) -> Result<(f64, f64)> {
    let MarketParams { a, b, c_l, c_h, .. } = *params;
    let q_l = (a - 2.0 * c_l + c_h) / (3.0 * b);
    let q_h = (a - 2.0 * c_h + c_l) / (3.0 * b);
    if q_l <= 0.0 {
        return Err(Error::CornerEquilibrium { firm: "L", quantity: q_l });
    }
    if q_h <= 0.0 {
        return Err(Error::CornerEquilibrium { firm: "H", quantity: q_h });
    }
    Ok((q_l, q_h))
}

pub fn nash_point(params: &MarketParams) -> Result<BenchmarkPoint> {
    let (q_l, q_h) = nash_quantities(params)?;
    Ok(BenchmarkPoint {
        label: BenchmarkLabel::Nash,
        outcome: Outcome::compute(params, q_l, q_h),
    })
}

/// Joint profit maximum: only the efficient firm produces.
pub fn monopoly_point(params: &MarketParams) -> BenchmarkPoint {
    BenchmarkPoint {
        label: BenchmarkLabel::Monopoly,
        outcome: Outcome::compute(params, params.monopoly_quantity(Firm::L), 0.0),
    }
}

/// Lottery in which `L` is the monopolist with probability `omega` and `H`
/// otherwise. Every field, surpluses included, is the state-wise expectation.
pub fn alternating_monopoly_point(params: &MarketParams, omega: f64) -> Result<BenchmarkPoint> {
    if !(0.0..=1.0).contains(&omega) {
        return Err(Error::InvalidParams(format!("omega = {omega} not in [0, 1]")));
    }
    let l_state = Outcome::compute(params, params.monopoly_quantity(Firm::L), 0.0);
    let h_state = Outcome::compute(params, 0.0, params.monopoly_quantity(Firm::H));
    Ok(BenchmarkPoint {
        label: BenchmarkLabel::AltMonopoly,
        outcome: l_state.mix(&h_state, omega),
    })
}
