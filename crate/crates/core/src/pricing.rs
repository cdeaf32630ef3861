//! Tariff recommendations from elasticity estimates.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Direction, FareCategory, TariffTable, TripType};
use crate::elasticity::GroupElasticityTable;
use crate::error::{Error, Result};
use crate::forest::BaggedForest;
use crate::tree::TrainingFrame;

pub const DEFAULT_HOLD_BAND: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Action {
    Reduce,
    Hold,
    Increase,
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Action::Reduce => "reduce",
            Action::Hold => "hold",
            Action::Increase => "increase",
        })
    }
}

/// Reduce the fare where demand is elastic beyond the band around unit
/// elasticity, raise it where demand is inelastic beyond the band.
pub fn recommend_direction(elasticity: f64, hold_band: f64) -> Action {
    if elasticity < -1.0 - hold_band {
        Action::Reduce
    } else if elasticity > -1.0 + hold_band {
        Action::Increase
    } else {
        Action::Hold
    }
}

/// Constant-elasticity demand `q = A p^α`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantElasticityDemand {
    pub scale: f64,
    pub elasticity: f64,
}

impl ConstantElasticityDemand {
    pub fn quantity(&self, price: f64) -> f64 {
        self.scale * price.powf(self.elasticity)
    }

    pub fn margin(&self, price: f64, marginal_cost: f64) -> f64 {
        (price - marginal_cost) * self.quantity(price)
    }
}

/// Price maximising `(p - c) A p^α` on `[p_min, p_max]`. At unit
/// elasticity without cost every price is optimal and `current` (clamped)
/// is returned.
pub fn optimal_tariff(
    demand: ConstantElasticityDemand,
    bounds: (f64, f64),
    marginal_cost: f64,
    current: f64,
) -> Result<f64> {
    let (lo, hi) = bounds;
    let a = demand.elasticity;
    if !(demand.scale > 0.0) {
        return Err(Error::Config(format!("demand scale {} is not positive", demand.scale)));
    }
    if !(lo > 0.0 && lo <= hi) {
        return Err(Error::Config(format!("invalid price bounds [{lo}, {hi}]")));
    }
    if !(a <= 0.0) {
        return Err(Error::Config(format!("elasticity {a} is positive")));
    }
    if !(marginal_cost >= 0.0) {
        return Err(Error::Config(format!("marginal cost {marginal_cost} is negative")));
    }
    let p = if marginal_cost == 0.0 {
        if a < -1.0 {
            lo
        } else if a > -1.0 {
            hi
        } else {
            current.clamp(lo, hi)
        }
    } else if a < -1.0 {
        (marginal_cost * a / (1.0 + a)).clamp(lo, hi)
    } else {
        hi
    };
    Ok(p)
}

/// Full fares of one year with regulator caps and category multipliers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TariffSchedule {
    pub year: i32,
    pub full_fares: BTreeMap<u32, f64>,
    pub rst_upper: BTreeMap<u32, f64>,
    pub category_multipliers: BTreeMap<FareCategory, f64>,
}

impl TariffSchedule {
    pub fn new(year: i32, full_fares: BTreeMap<u32, f64>, rst_upper: BTreeMap<u32, f64>) -> Result<Self> {
        let s = TariffSchedule {
            year,
            full_fares,
            rst_upper,
            category_multipliers: FareCategory::ALL.iter().map(|c| (*c, c.default_multiplier())).collect(),
        };
        s.validate()?;
        Ok(s)
    }

    /// Schedule of one year of a tariff table.
    pub fn from_table(table: &TariffTable, year: i32) -> Result<Self> {
        let entries = table.for_year(year);
        if entries.is_empty() {
            return Err(Error::MissingTariff { year, zone: 1 });
        }
        let fares = entries.iter().map(|e| (e.zone, e.full_fare)).collect();
        let caps = entries
            .iter()
            .filter_map(|e| e.rst_upper.map(|u| (e.zone, u)))
            .collect();
        TariffSchedule::new(year, fares, caps)
    }

    /// Schedule of the latest year of a tariff table.
    pub fn latest(table: &TariffTable) -> Result<Self> {
        let year = *table.years().last().ok_or(Error::MissingTariff { year: 0, zone: 1 })?;
        TariffSchedule::from_table(table, year)
    }

    pub fn full_fare(&self, zone: u32) -> Result<f64> {
        self.full_fares.get(&zone).copied().ok_or_else(|| Error::Schedule {
            zone,
            reason: format!("no full fare in the {} schedule", self.year),
        })
    }

    pub fn upper_bound(&self, zone: u32) -> Option<f64> {
        self.rst_upper.get(&zone).copied()
    }

    pub fn multiplier(&self, category: FareCategory) -> f64 {
        self.category_multipliers
            .get(&category)
            .copied()
            .unwrap_or_else(|| category.default_multiplier())
    }

    /// Fares are positive, within the caps and non-decreasing in zone.
    pub fn validate(&self) -> Result<()> {
        let mut previous: Option<f64> = None;
        for (&zone, &fare) in &self.full_fares {
            if !(fare > 0.0) || !fare.is_finite() {
                return Err(Error::Schedule {
                    zone,
                    reason: format!("fare {fare} is not positive"),
                });
            }
            if let Some(cap) = self.upper_bound(zone) {
                if fare > cap {
                    return Err(Error::Schedule {
                        zone,
                        reason: format!("fare {fare} exceeds the regulator bound {cap}"),
                    });
                }
            }
            if let Some(p) = previous {
                if fare < p {
                    return Err(Error::Schedule {
                        zone,
                        reason: format!("fare {fare} is below the previous zone's {p}"),
                    });
                }
            }
            previous = Some(fare);
        }
        Ok(())
    }

    /// Copy with every fare scaled by `1 + change`.
    pub fn scaled(&self, change: f64) -> Result<Self> {
        let mut s = self.clone();
        for f in s.full_fares.values_mut() {
            *f *= 1.0 + change;
        }
        s.validate()?;
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RevenueGroup {
    pub direction: Direction,
    pub trip_type: TripType,
    pub records: usize,
    pub baseline_revenue: f64,
    pub proposed_revenue: f64,
}

impl RevenueGroup {
    pub fn delta_pct(&self) -> f64 {
        if self.baseline_revenue > 0.0 {
            100.0 * (self.proposed_revenue / self.baseline_revenue - 1.0)
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RevenueDelta {
    pub groups: Vec<RevenueGroup>,
    pub baseline_revenue: f64,
    pub proposed_revenue: f64,
}

impl RevenueDelta {
    pub fn delta_pct(&self) -> f64 {
        if self.baseline_revenue > 0.0 {
            100.0 * (self.proposed_revenue / self.baseline_revenue - 1.0)
        } else {
            0.0
        }
    }
}

/// Predicted revenue under two schedules. Each record's demand is the
/// exponentiated forest mean at the schedule's real fare; revenue is that
/// quantity times the schedule fare times the category multiplier.
pub fn revenue_delta(
    forest: &BaggedForest,
    dataset: &Dataset,
    proposed: &TariffSchedule,
    baseline: &TariffSchedule,
) -> Result<RevenueDelta> {
    proposed.validate()?;
    baseline.validate()?;
    let frame = TrainingFrame::from_dataset(dataset);
    let base_cpi = dataset.cpi().get(dataset.base_period())?;
    let arm = |schedule: &TariffSchedule| -> Result<(Vec<f64>, Vec<f64>)> {
        let mut shifts = Vec::with_capacity(dataset.len());
        let mut fares = Vec::with_capacity(dataset.len());
        for r in dataset.records() {
            let zone = dataset.route_of(r).zone;
            let fare = schedule.full_fare(zone)?;
            let real = fare * (base_cpi / dataset.cpi().get(r.period())?);
            shifts.push(real.ln() - r.log_real_fare);
            fares.push(fare * schedule.multiplier(r.fare_category));
        }
        Ok((shifts, fares))
    };
    let (shift_b, fare_b) = arm(baseline)?;
    let (shift_p, fare_p) = arm(proposed)?;
    let pred_b = forest.predict_mean_with_shifts(&frame, &shift_b)?;
    let pred_p = if proposed == baseline {
        pred_b.clone()
    } else {
        forest.predict_mean_with_shifts(&frame, &shift_p)?
    };

    let mut groups: BTreeMap<(Direction, TripType), RevenueGroup> = BTreeMap::new();
    let (mut total_b, mut total_p) = (0.0, 0.0);
    for (i, r) in dataset.records().iter().enumerate() {
        let route = dataset.route_of(r);
        let rb = pred_b[i].exp() * fare_b[i];
        let rp = pred_p[i].exp() * fare_p[i];
        let g = groups
            .entry((route.direction, route.trip_type))
            .or_insert_with(|| RevenueGroup {
                direction: route.direction,
                trip_type: route.trip_type,
                records: 0,
                baseline_revenue: 0.0,
                proposed_revenue: 0.0,
            });
        g.records += 1;
        g.baseline_revenue += rb;
        g.proposed_revenue += rp;
        total_b += rb;
        total_p += rp;
    }
    Ok(RevenueDelta {
        groups: groups.into_values().collect(),
        baseline_revenue: total_b,
        proposed_revenue: total_p,
    })
}

/// Elasticities by fare category; categories without an estimate fall back
/// to the full-fare elasticity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryElasticities {
    pub full_fare: f64,
    pub by_category: BTreeMap<FareCategory, f64>,
}

impl CategoryElasticities {
    /// Children and railway employees do not respond to the full fare.
    pub fn new(full_fare: f64) -> Self {
        let by_category = [(FareCategory::Children, 0.0), (FareCategory::PpkRrEmployee, 0.0)]
            .into_iter()
            .collect();
        CategoryElasticities { full_fare, by_category }
    }

    pub fn get(&self, category: FareCategory) -> f64 {
        self.by_category.get(&category).copied().unwrap_or(self.full_fare)
    }
}

/// Revenue change of a category when the full fare changes by `change`
/// and the category multiplier is held: `(1 + Δ)^(1 + e) - 1`.
pub fn category_revenue_projection(change: f64, category: FareCategory, elasticities: &CategoryElasticities) -> f64 {
    (1.0 + change).powf(1.0 + elasticities.get(category)) - 1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricingOptions {
    pub hold_band: f64,
    /// Largest fare cut considered, as a fraction of the current fare.
    pub max_decrease: f64,
    /// Largest fare rise considered, before the regulator cap.
    pub max_increase: f64,
    pub marginal_cost: f64,
}

impl Default for PricingOptions {
    fn default() -> Self {
        PricingOptions {
            hold_band: DEFAULT_HOLD_BAND,
            max_decrease: 0.2,
            max_increase: 0.2,
            marginal_cost: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PricingRecommendation {
    pub group: String,
    pub direction: Direction,
    pub trip_type: TripType,
    pub band: String,
    pub records: usize,
    pub elasticity: f64,
    pub action: Action,
    /// Record-weighted mean full fare of the group under the schedule.
    pub current_fare: f64,
    pub optimal_fare: f64,
    /// The optimum sits on a bound of the allowed range.
    pub bound_limited: bool,
    pub predicted_revenue_change_pct: f64,
}

/// One recommendation per non-empty cell of the group table, priced on the
/// given schedule.
pub fn recommend_groups(
    table: &GroupElasticityTable,
    dataset: &Dataset,
    schedule: &TariffSchedule,
    options: &PricingOptions,
) -> Result<Vec<PricingRecommendation>> {
    schedule.validate()?;
    // Current fare and tightest cap per cell.
    let mut fares: BTreeMap<(usize, usize, usize), (f64, usize, f64)> = BTreeMap::new();
    for r in dataset.records() {
        let route = dataset.route_of(r);
        let band = table.bands.band_of(route.trip_type, route.zone)?;
        let ti = TripType::ALL.iter().position(|t| *t == route.trip_type).unwrap();
        let fare = schedule.full_fare(route.zone)?;
        let ratio_cap = schedule.upper_bound(route.zone).map_or(f64::INFINITY, |u| u / fare);
        let e = fares
            .entry((route.direction.index(), ti, band))
            .or_insert((0.0, 0, f64::INFINITY));
        e.0 += fare;
        e.1 += 1;
        e.2 = e.2.min(ratio_cap);
    }
    let mut out = Vec::new();
    for ((di, ti, bi), (sum, n, cap_ratio)) in fares {
        let (d, t) = (Direction::ALL[di], TripType::ALL[ti]);
        let cell = table.cell(d, t, bi);
        let Some(e) = cell.mean() else { continue };
        let current = sum / n as f64;
        let lo = current * (1.0 - options.max_decrease);
        let hi = (current * (1.0 + options.max_increase))
            .min(current * cap_ratio)
            .max(lo);
        let alpha = e.min(0.0);
        let demand = ConstantElasticityDemand {
            scale: 1.0,
            elasticity: alpha,
        };
        let optimal = optimal_tariff(demand, (lo, hi), options.marginal_cost, current)?;
        let band = &table.bands.for_trip_type(t)[bi];
        out.push(PricingRecommendation {
            group: format!("{d}/{}/{}", t.slug(), band.name.to_lowercase()),
            direction: d,
            trip_type: t,
            band: band.label(),
            records: cell.count,
            elasticity: e,
            action: recommend_direction(e, options.hold_band),
            current_fare: current,
            optimal_fare: optimal,
            bound_limited: optimal == lo || optimal == hi,
            predicted_revenue_change_pct: 100.0 * ((optimal / current).powf(1.0 + alpha) - 1.0),
        });
    }
    Ok(out)
}

pub fn recommendations_csv(recs: &[PricingRecommendation]) -> String {
    let mut out = String::from("group,records,elasticity,action,current_fare,optimal_fare,bound_limited,delta_pct\n");
    for r in recs {
        let _ = writeln!(
            out,
            "{},{},{:.6},{},{:.4},{:.4},{},{:.4}",
            r.group,
            r.records,
            r.elasticity,
            r.action,
            r.current_fare,
            r.optimal_fare,
            r.bound_limited,
            r.predicted_revenue_change_pct
        );
    }
    out
}

pub fn recommendations_summary(recs: &[PricingRecommendation]) -> String {
    let mut out = String::new();
    for a in [Action::Reduce, Action::Hold, Action::Increase] {
        let group: Vec<&PricingRecommendation> = recs.iter().filter(|r| r.action == a).collect();
        let records: usize = group.iter().map(|r| r.records).sum();
        let _ = writeln!(out, "{a}: {} groups, {records} records", group.len());
        for r in group {
            let _ = writeln!(
                out,
                "  {:<48} e = {:>7.3}  fare {:>8.2} -> {:>8.2}  revenue {:+.2}%",
                r.group, r.elasticity, r.current_fare, r.optimal_fare, r.predicted_revenue_change_pct
            );
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn directions() {
        assert_eq!(recommend_direction(-1.75, 0.05), Action::Reduce);
        assert_eq!(recommend_direction(-0.89, 0.05), Action::Increase);
        assert_eq!(recommend_direction(-1.0, 0.05), Action::Hold);
    }

    #[test]
    fn closed_form_optima() {
        let d = |a| ConstantElasticityDemand {
            scale: 1.0,
            elasticity: a,
        };
        assert_eq!(optimal_tariff(d(-2.0), (10.0, 26.0), 0.0, 20.0).unwrap(), 10.0);
        assert_eq!(optimal_tariff(d(-0.5), (10.0, 26.0), 0.0, 20.0).unwrap(), 26.0);
        assert_eq!(optimal_tariff(d(-2.0), (1.0, 26.0), 5.0, 20.0).unwrap(), 10.0);
        assert_eq!(optimal_tariff(d(-1.0), (10.0, 26.0), 0.0, 20.0).unwrap(), 20.0);
        assert_eq!(optimal_tariff(d(-1.0), (10.0, 26.0), 3.0, 20.0).unwrap(), 26.0);
    }

    #[test]
    fn category_projection() {
        let e = CategoryElasticities::new(-1.981);
        let employee = category_revenue_projection(0.1, FareCategory::PpkRrEmployee, &e);
        assert!((employee - 0.1).abs() < 1e-12);
        let full = category_revenue_projection(-0.1, FareCategory::FullSingle, &e);
        assert!((full - (0.9f64.powf(-0.981) - 1.0)).abs() < 1e-12);
        assert!((full - 0.109).abs() < 0.001);
        for c in FareCategory::ALL {
            assert_eq!(category_revenue_projection(0.0, c, &e), 0.0);
        }
    }

    #[test]
    fn schedule_validation() {
        let fares: BTreeMap<u32, f64> = [(1, 20.0), (2, 26.0)].into_iter().collect();
        let caps: BTreeMap<u32, f64> = [(1, 22.0), (2, 30.0)].into_iter().collect();
        let s = TariffSchedule::new(2016, fares.clone(), caps.clone()).unwrap();
        assert!(s.scaled(0.05).is_ok());
        assert!(matches!(s.scaled(0.2), Err(Error::Schedule { zone: 1, .. })));
        let bad: BTreeMap<u32, f64> = [(1, 21.0), (2, 20.0)].into_iter().collect();
        assert!(matches!(
            TariffSchedule::new(2016, bad, caps),
            Err(Error::Schedule { zone: 2, .. })
        ));
    }
}
