//! Demand labeling, shaping and rescheduling.
//!
//! A slot's demands are first labeled critical or non-critical. When the
//! aggregate volume fits the slot capacity nothing else happens. Otherwise
//! critical demands are shaped where that is lossless and admitted in
//! deadline order, and non-critical demands are deferred to a later slot by
//! [`reschedule`].

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::units::{ceil_snapped, DemandId, UserId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum ContentType {
    Text,
    Audio,
    Image,
    Video,
    /// Encrypted or otherwise unanalyzable payload. Never shaped.
    Opaque,
}

impl ContentType {
    pub const ALL: [ContentType; 5] = [
        ContentType::Text,
        ContentType::Audio,
        ContentType::Image,
        ContentType::Video,
        ContentType::Opaque,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ContentType::Text => "text",
            ContentType::Audio => "audio",
            ContentType::Image => "image",
            ContentType::Video => "video",
            ContentType::Opaque => "opaque",
        }
    }

    pub fn parse(s: &str) -> Option<ContentType> {
        ContentType::ALL.into_iter().find(|c| c.as_str().eq_ignore_ascii_case(s))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DemandLabel {
    Critical,
    NonCritical,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrafficDemand {
    pub id: DemandId,
    pub user_id: UserId,
    pub content: ContentType,
    pub volume_bits: u64,
    /// Urgency declared by the application.
    pub priority_flag: bool,
    /// Shaping carries no risk of information loss.
    pub shapeable: bool,
    pub arrival_slot: u32,
    pub deadline_slot: u32,
}

impl TrafficDemand {
    pub fn validate(&self) -> Result<()> {
        if self.deadline_slot < self.arrival_slot {
            return Err(Error::param(
                "deadline_slot",
                format!("demand {}: deadline before arrival", self.id),
            ));
        }
        Ok(())
    }

    fn admission_key(&self) -> (u32, DemandId) {
        (self.deadline_slot, self.id)
    }
}

/// Per-content compression ratios `c` (fraction of volume removed), with
/// optional modality conversions that replace a content type's ratio.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct CompressionProfile {
    pub ratio_by_content: BTreeMap<ContentType, f64>,
    /// `from -> (to, effective ratio)`, e.g. video rewritten as text.
    pub conversion_rules: BTreeMap<ContentType, (ContentType, f64)>,
}

impl CompressionProfile {
    /// The same ratio for every analyzable content type.
    pub fn uniform(c: f64) -> Self {
        let ratio_by_content = ContentType::ALL
            .into_iter()
            .map(|t| (t, if t == ContentType::Opaque { 0.0 } else { c }))
            .collect();
        CompressionProfile {
            ratio_by_content,
            conversion_rules: BTreeMap::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |c: f64| (0.0..1.0).contains(&c);
        for (&t, &c) in &self.ratio_by_content {
            if !ok(c) {
                return Err(Error::param(
                    "ratio_by_content",
                    format!("{}: ratio {c} outside [0, 1)", t.as_str()),
                ));
            }
            if t == ContentType::Opaque && c != 0.0 {
                return Err(Error::param("ratio_by_content", "opaque content must map to ratio 0"));
            }
        }
        for (&from, &(_, c)) in &self.conversion_rules {
            if from == ContentType::Opaque {
                return Err(Error::param("conversion_rules", "opaque content cannot be converted"));
            }
            if !ok(c) {
                return Err(Error::param(
                    "conversion_rules",
                    format!("{}: ratio {c} outside [0, 1)", from.as_str()),
                ));
            }
        }
        Ok(())
    }

    /// Ratio applied to `content`, after any conversion rule.
    pub fn ratio_for(&self, content: ContentType) -> f64 {
        if content == ContentType::Opaque {
            return 0.0;
        }
        if let Some(&(_, c)) = self.conversion_rules.get(&content) {
            return c;
        }
        self.ratio_by_content.get(&content).copied().unwrap_or(0.0)
    }

    /// Content type a demand ends up as after shaping.
    pub fn shaped_content(&self, content: ContentType) -> ContentType {
        self.conversion_rules
            .get(&content)
            .map(|&(to, _)| to)
            .unwrap_or(content)
    }

    /// `ceil(amount * (1 - c))` for this content type.
    pub fn shape_amount(&self, amount: f64, content: ContentType) -> f64 {
        let c = self.ratio_for(content);
        if c == 0.0 {
            return amount;
        }
        ceil_snapped(amount - amount * c)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct LabelPolicy {
    /// Content types that are critical even without a priority flag.
    pub critical_content: BTreeSet<ContentType>,
}

/// Which demands the planner may shape under congestion.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum ShapingScope {
    #[default]
    NetworkWide,
    /// Only demands of these users are shaped.
    Users(BTreeSet<UserId>),
}

impl ShapingScope {
    fn covers(&self, user: UserId) -> bool {
        match self {
            ShapingScope::NetworkWide => true,
            ShapingScope::Users(set) => set.contains(&user),
        }
    }
}

pub fn label_demand(d: &TrafficDemand, policy: &LabelPolicy) -> DemandLabel {
    if d.priority_flag || policy.critical_content.contains(&d.content) {
        DemandLabel::Critical
    } else {
        DemandLabel::NonCritical
    }
}

/// Shaped volume of a demand. Opaque content passes through unchanged.
pub fn shape_demand(d: &TrafficDemand, profile: &CompressionProfile) -> Result<u64> {
    if !d.shapeable {
        return Err(Error::ShapingForbidden(d.id));
    }
    let shaped = profile.shape_amount(d.volume_bits as f64, d.content);
    Ok((shaped as u64).min(d.volume_bits))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    TransmitNowShaped { effective_bits: u64 },
    TransmitNowUnshaped,
    /// Deferred; the slot is filled in once [`reschedule`] has run.
    Rescheduled { target_slot: Option<u32> },
    Infeasible,
}

impl Decision {
    pub fn is_transmit_now(&self) -> bool {
        matches!(
            self,
            Decision::TransmitNowShaped { .. } | Decision::TransmitNowUnshaped
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DemandPlan {
    /// One entry per input demand, in input order.
    pub decisions: Vec<(DemandId, Decision)>,
    pub transmitted_bits: u64,
    pub deferred_bits: u64,
    pub infeasible_bits: u64,
}

impl DemandPlan {
    pub fn decision(&self, id: DemandId) -> Option<Decision> {
        self.decisions.iter().find(|(d, _)| *d == id).map(|&(_, x)| x)
    }

    pub fn rescheduled_ids(&self) -> impl Iterator<Item = DemandId> + '_ {
        self.decisions
            .iter()
            .filter(|(_, d)| matches!(d, Decision::Rescheduled { .. }))
            .map(|&(id, _)| id)
    }

    /// Writes target slots from a reschedule pass into the plan.
    pub fn apply_schedule(&mut self, schedule: &Schedule) {
        for (id, decision) in &mut self.decisions {
            if let Decision::Rescheduled { target_slot } = decision {
                *target_slot = schedule.assignments.get(id).copied();
            }
        }
    }
}

pub fn plan_demands(
    demands: &[TrafficDemand],
    capacity_bits: u64,
    profile: &CompressionProfile,
    policy: &LabelPolicy,
) -> DemandPlan {
    plan_demands_scoped(demands, capacity_bits, profile, policy, &ShapingScope::NetworkWide)
}

/// [`plan_demands`] with shaping restricted to `scope`.
pub fn plan_demands_scoped(
    demands: &[TrafficDemand],
    capacity_bits: u64,
    profile: &CompressionProfile,
    policy: &LabelPolicy,
    scope: &ShapingScope,
) -> DemandPlan {
    let total: u128 = demands.iter().map(|d| d.volume_bits as u128).sum();
    let mut plan = DemandPlan::default();

    if total <= capacity_bits as u128 {
        plan.decisions = demands
            .iter()
            .map(|d| (d.id, Decision::TransmitNowUnshaped))
            .collect();
        plan.transmitted_bits = total as u64;
        return plan;
    }

    let mut decided: BTreeMap<usize, Decision> = BTreeMap::new();
    let mut critical: Vec<(usize, u64, Decision)> = Vec::new();
    for (i, d) in demands.iter().enumerate() {
        match label_demand(d, policy) {
            DemandLabel::NonCritical => {
                decided.insert(i, Decision::Rescheduled { target_slot: None });
                plan.deferred_bits += d.volume_bits;
            }
            DemandLabel::Critical => {
                let (bits, decision) = if d.shapeable && scope.covers(d.user_id) {
                    // shapeable was checked just above
                    let bits = shape_demand(d, profile).unwrap_or(d.volume_bits);
                    (bits, Decision::TransmitNowShaped { effective_bits: bits })
                } else {
                    (d.volume_bits, Decision::TransmitNowUnshaped)
                };
                critical.push((i, bits, decision));
            }
        }
    }

    // Admit criticals as a prefix in (deadline, id) order; the first one that
    // does not fit and everything after it is infeasible.
    critical.sort_by_key(|&(i, _, _)| demands[i].admission_key());
    let mut remaining = capacity_bits;
    let mut exhausted = false;
    for (i, bits, decision) in critical {
        if !exhausted && bits <= remaining {
            remaining -= bits;
            plan.transmitted_bits += bits;
            decided.insert(i, decision);
        } else {
            exhausted = true;
            plan.infeasible_bits += demands[i].volume_bits;
            decided.insert(i, Decision::Infeasible);
        }
    }

    plan.decisions = demands
        .iter()
        .enumerate()
        .map(|(i, d)| (d.id, decided[&i]))
        .collect();
    plan
}

/// Outcome of a rescheduling pass.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Schedule {
    pub assignments: BTreeMap<DemandId, u32>,
    /// Demands with no slot before their deadline, in processing order.
    pub violations: Vec<DemandId>,
    /// Forecast capacity left after the assignments.
    pub remaining: Vec<u64>,
}

impl Schedule {
    pub fn into_result(self) -> Result<BTreeMap<DemandId, u32>> {
        if self.violations.is_empty() {
            Ok(self.assignments)
        } else {
            Err(Error::DeadlineViolation(self.violations))
        }
    }
}

/// Earliest-fit placement of deferred demands into later slots.
///
/// Demands are taken in (deadline, id) order. Each goes to the first slot
/// `s` with `arrival < s <= deadline` and `s < horizon` whose remaining
/// forecast capacity covers its volume.
pub fn reschedule(deferred: &[TrafficDemand], forecast: &[u64], horizon: usize) -> Result<Schedule> {
    if forecast.len() < horizon {
        return Err(Error::param(
            "forecast",
            format!("{} slots given, horizon is {horizon}", forecast.len()),
        ));
    }
    let mut remaining: Vec<u64> = forecast[..horizon].to_vec();
    let mut order: Vec<&TrafficDemand> = deferred.iter().collect();
    order.sort_by_key(|d| d.admission_key());

    let mut out = Schedule::default();
    for d in order {
        let first = d.arrival_slot as usize + 1;
        let last = (d.deadline_slot as usize).min(horizon.saturating_sub(1));
        let slot = (first..=last).find(|&s| remaining[s] >= d.volume_bits);
        match slot {
            Some(s) if first <= last => {
                remaining[s] -= d.volume_bits;
                out.assignments.insert(d.id, s as u32);
            }
            _ => out.violations.push(d.id),
        }
    }
    out.remaining = remaining;
    Ok(out)
}
